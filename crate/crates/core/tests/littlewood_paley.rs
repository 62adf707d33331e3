use besov_picard::grid::zero_extend;
use besov_picard::littlewood_paley::{bony_terms, decompose, besov_norm_interval};
use besov_picard::{BesovIndex, ExtendedSignal, Grid, Signal};
use proptest::prelude::*;

fn extended(vals: &[f64]) -> ExtendedSignal {
    let grid = Grid::new(1.0, vals.len()).unwrap();
    let u = Signal::new(grid, 1, vals.to_vec()).unwrap();
    zero_extend(&u, 1.0).unwrap()
}

fn values() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0..5.0f64, 32)
}

proptest! {
    #[test]
    fn blocks_reconstruct_the_signal(u in values()) {
        let e = extended(&u);
        let back = decompose(&e).reconstruct();
        for (x, y) in back.iter().zip(e.values()) {
            prop_assert!((x - y).abs() < 1e-10);
        }
    }

    #[test]
    fn bony_terms_sum_to_the_product(a in values(), b in values()) {
        let (ea, eb) = (extended(&a), extended(&b));
        let sum = bony_terms(&ea, &eb).unwrap().sum();
        for (i, s) in sum.values().iter().enumerate() {
            prop_assert!((s - ea.values()[i] * eb.values()[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn interval_norm_is_a_seminorm(u in values(), v in values(), c in -4.0..4.0f64, s in -0.4..0.4f64) {
        let grid = Grid::new(1.0, 32).unwrap();
        let su = Signal::new(grid, 1, u).unwrap();
        let sv = Signal::new(grid, 1, v).unwrap();
        let idx = BesovIndex::new(s, 2.0, 2.0).unwrap();
        let t = grid.time(20);
        let nu = besov_norm_interval(&su, t, &idx).unwrap();
        let nv = besov_norm_interval(&sv, t, &idx).unwrap();
        let scaled = besov_norm_interval(&su.scale(c), t, &idx).unwrap();
        prop_assert!((scaled - c.abs() * nu).abs() <= 1e-10 * (1.0 + nu));
        let sum = besov_norm_interval(&su.add(&sv).unwrap(), t, &idx).unwrap();
        prop_assert!(sum <= (nu + nv) * (1.0 + 1e-12) + 1e-12);
    }
}

#[test]
fn zero_extension_norm_matches_l2_for_band_limited_signals() {
    use besov_picard::littlewood_paley::besov_norm_line;
    use besov_picard::random::{band_limited, stream};
    let grid = Grid::new(1.0, 4096).unwrap();
    let idx = BesovIndex::new(0.0, 2.0, 2.0).unwrap();
    let mut rng = stream(11, "parseval");
    for modes in [1, 4, 16, 64] {
        let u = band_limited(grid, 1, modes, 1.0, &mut rng);
        let norm = besov_norm_line(&zero_extend(&u, 1.0).unwrap(), &idx).unwrap();
        let l2 = u.lp_norm(2.0);
        assert!((norm - l2).abs() <= 0.01 * l2, "modes {modes}: {norm} vs {l2}");
    }
}
