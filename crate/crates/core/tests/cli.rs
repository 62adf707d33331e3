use std::path::Path;
use std::process::{Command, Output};

use besov_picard::cli::{parse_config, Env, Expr, Scope};
use besov_picard::Error;
use proptest::prelude::*;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_besov-picard"))
        .args(args)
        .current_dir(dir)
        .env_remove("PICARD_OUT_DIR")
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

#[test]
fn exponential_growth_is_solved() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "c.toml",
        "output_dir = \"out\"\n[grid]\nn = 4096\nhorizon = 1.0\n\
         [problem]\noperator = \"composition\"\nf = \"x\"\nu0 = 1\nexact = \"exp(t)\"\n",
    );
    let out = run(dir.path(), &["solve", "--config", "c.toml"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/report.json")).unwrap()).unwrap();
    assert_eq!(report["status"], "converged");
    assert!(report["max_error_vs_exact"].as_f64().unwrap() <= 1e-3);
    assert!(!report["windows"].as_array().unwrap().is_empty());
    let csv = std::fs::read_to_string(dir.path().join("out/solution.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4097);
}

#[test]
fn output_dir_can_be_overridden() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "c.toml", "output_dir = \"a\"\n[grid]\nn = 64\n[problem]\noperator = \"composition\"\nf = \"-x\"\nu0 = 1\n");
    let out = Command::new(env!("CARGO_BIN_EXE_besov-picard"))
        .args(["solve", "--config", "c.toml"])
        .current_dir(dir.path())
        .env("PICARD_OUT_DIR", "b")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.path().join("b/report.json").exists());
    assert!(!dir.path().join("a").exists());
}

#[test]
fn malformed_configs_exit_with_two_and_write_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        "[problem\noperator = 1",
        "[problem]\noperator = \"composition\"\nf = \"x\"\nu0 = 1\nextra = 2\n",
        "[problem]\noperator = \"composition\"\nf = \"x +\"\nu0 = 1\n",
        "[grid]\nn = 100\n[problem]\noperator = \"composition\"\nf = \"x\"\nu0 = 1\n",
        "[problem]\noperator = \"fractional\"\nkind = \"riemann_liouville\"\nbeta = 0.6\nu0 = 1\n",
        "[[experiment]]\nname = \"p\"\nkind = \"poincare\"\nindices = [{ s = 1.5, p = 2, q = 2 }]\n",
    ];
    for (i, text) in cases.iter().enumerate() {
        write(dir.path(), "bad.toml", text);
        let sub = if text.contains("experiment") { "verify" } else { "solve" };
        let out = run(dir.path(), &[sub, "--config", "bad.toml"]);
        assert_eq!(out.status.code(), Some(2), "case {i}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(!dir.path().join("picard-out").exists(), "case {i} wrote output");
    }
}

#[test]
fn mode_mismatch_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "c.toml", "[problem]\noperator = \"composition\"\nf = \"x\"\nu0 = 1\n");
    assert_eq!(run(dir.path(), &["verify", "--config", "c.toml"]).status.code(), Some(2));
}

#[test]
fn verify_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "v.toml",
        "seed = 5\n[grid]\nn = 4096\n[[experiment]]\nname = \"chi\"\nkind = \"chi_norm_decay\"\n\
         indices = [{ s = 0.25, p = 2, q = \"inf\" }]\n",
    );
    let out = run(dir.path(), &["verify", "--config", "v.toml"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    for f in ["chi.json", "chi.csv", "chi.txt", "summary.json"] {
        assert!(dir.path().join("picard-out").join(f).exists(), "{f}");
    }
    let rep: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("picard-out/chi.json")).unwrap()).unwrap();
    let slope = rep["fit"]["slope"].as_f64().unwrap();
    assert!((slope - 0.25).abs() <= 0.1, "slope {slope}");
}

#[test]
fn besov_norm_reads_a_signal() {
    let dir = tempfile::tempdir().unwrap();
    let mut csv = String::from("t, x0\n");
    for k in 0..64 {
        let t = k as f64 / 63.0;
        csv += &format!("{t:?}, {:?}\n", (3.0 * t).sin());
    }
    write(dir.path(), "u.csv", &csv);
    let out = run(dir.path(), &["besov-norm", "--input", "u.csv", "--s", "0.3", "--p", "2", "--q", "inf"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().any(|l| l.starts_with("norm ")));
    let bad = run(dir.path(), &["besov-norm", "--input", "u.csv", "--s", "0.3", "--p", "0.5", "--q", "2"]);
    assert_eq!(bad.status.code(), Some(2));
    let missing = run(dir.path(), &["besov-norm", "--input", "nope.csv", "--s", "0", "--p", "2", "--q", "2"]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn config_errors_name_their_keys() {
    let msg = |text: &str| match parse_config(text) {
        Err(Error::Config(m)) => m,
        other => panic!("{other:?}"),
    };
    let m = msg("[problem]\noperator = \"composition\"\nf = \"x\"\nu0 = 1\n[solver.indices]\nalpha = 0.8\neta = 0.3\n");
    assert!(m.contains("alpha") && m.contains("eta"), "{m}");
    let m = msg("[problem]\noperator = \"fractional\"\nkind = \"riemann_liouville\"\nbeta = 0.6\nu0 = 1\n");
    assert!(m.contains("beta") && m.contains("1/2"), "{m}");
    let m = msg("[problem]\noperator = \"composition\"\nf = [\"x0\", \"x1\"]\nu0 = 1\n");
    assert!(m.contains("problem.f"), "{m}");
}

#[test]
fn expression_examples() {
    let eval = |t: &str, x: &[f64], s: f64, tt: f64| {
        Expr::parse(t, Scope { dim: x.len(), s: true, t: true }).unwrap().eval(&Env { x, s, t: tt })
    };
    assert_eq!(eval("x0", &[3.0], 0.0, 0.0), 3.0);
    assert_eq!(eval("sin(x0) + 2", &[0.0], 0.0, 0.0), 2.0);
    assert!((eval("s*t", &[], 0.5, 0.2) - 0.1).abs() < 1e-15);
    assert!((eval("tanh(0) + cos(pi) + abs(-e) - exp(1)", &[], 0.0, 0.0) + 1.0).abs() < 1e-15);
}

proptest! {
    #[test]
    fn parser_never_panics(text in "[ -~]{0,24}") {
        let _ = Expr::parse(&text, Scope { dim: 2, s: true, t: true });
    }

    #[test]
    fn arithmetic_matches_rust(a in -50i32..50, b in -50i32..50, c in 1i32..50) {
        let text = format!("{a} + {b} * ({a} - {c}) / {c} - -{b}");
        let want = a as f64 + b as f64 * (a as f64 - c as f64) / c as f64 + b as f64;
        let got = Expr::parse(&text, Scope::state(0)).unwrap().eval(&Env::default());
        prop_assert!((got - want).abs() <= 1e-12 * (1.0 + want.abs()));
    }

    #[test]
    fn parse_errors_point_inside_the_input(text in "[a-z0-9+*/^(), .-]{1,16}") {
        if let Err(Error::Parse { pos, .. }) = Expr::parse(&text, Scope::state(1)) {
            prop_assert!(pos <= text.len());
        }
    }
}

#[test]
fn volterra_kernel_table_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let n = 64;
    let mut csv = String::from("s,t,value\n");
    for k in 0..n {
        for j in 0..=k {
            csv += &format!("{:?},{:?},1\n", j as f64 / (n - 1) as f64, k as f64 / (n - 1) as f64);
        }
    }
    write(dir.path(), "kernel.csv", &csv);
    write(
        dir.path(),
        "c.toml",
        &format!("[grid]\nn = {n}\n[problem]\noperator = \"volterra\"\nkernel_file = \"kernel.csv\"\nu0 = 1\nexact = \"(exp(t) + exp(-t)) / 2\"\n"),
    );
    let out = run(dir.path(), &["solve", "--config", "c.toml"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("picard-out/report.json")).unwrap()).unwrap();
    assert!(report["max_error_vs_exact"].as_f64().unwrap() < 1e-3);
}

#[test]
fn failed_experiment_exits_with_one_and_still_reports() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "v.toml",
        "[grid]\nn = 256\n[[experiment]]\nname = \"strict\"\nkind = \"chi_norm_decay\"\n\
         indices = [{ s = 0.25, p = 2, q = \"inf\" }]\ntolerance = { slope_below = 0.0, slope_above = 0.0 }\n",
    );
    let out = run(dir.path(), &["verify", "--config", "v.toml"]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stdout));
    let summary = std::fs::read_to_string(dir.path().join("picard-out/summary.json")).unwrap();
    assert!(summary.contains("\"pass\": false"));
}
