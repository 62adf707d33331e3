use std::sync::Arc;

use besov_picard::fractional::{abel_integral, caputo, FractionalOrder};
use besov_picard::random::{band_limited, stream};
use besov_picard::rhs::{
    causality_holds, composition_operator, fractional_product_operator, series_operator, volterra_operator,
    DerivativeKind, Gap, Kernel, RhsOperator, SeriesTerm,
};
use besov_picard::{Grid, Signal};
use proptest::prelude::*;

fn grid() -> Grid {
    Grid::new(1.0, 128).unwrap()
}

fn operators() -> Vec<Box<dyn RhsOperator>> {
    let g = grid();
    let mut rng = stream(3, "psi");
    let psi = band_limited(g, 1, 6, 1.0, &mut rng);
    vec![
        Box::new(composition_operator(1, Arc::new(|x, o| o[0] = x[0].sin()), 1.0)),
        Box::new(
            fractional_product_operator(1, Arc::new(|x, o| o[0] = 1.0 + 0.1 * x[0]), FractionalOrder::uniform(0.3).unwrap(), DerivativeKind::Caputo)
                .unwrap(),
        ),
        Box::new(
            fractional_product_operator(1, Arc::new(|_, o| o[0] = 1.0), FractionalOrder::uniform(0.3).unwrap(), DerivativeKind::RiemannLiouville)
                .unwrap(),
        ),
        Box::new(volterra_operator(&g, 1, Kernel::smooth(|s, t| (s - t).cos())).unwrap()),
        Box::new(
            series_operator(&g, 1, vec![SeriesTerm { f: Arc::new(|x, o| o[0] = x[0].tanh()), lip: 1.0, psi, sigma: 0.3 }], 2.0, 2.0, Gap::default())
                .unwrap(),
        ),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn every_family_is_causal(seed in any::<u64>(), cut in 2usize..126) {
        let g = grid();
        let u = band_limited(g, 1, 8, 1.0, &mut stream(seed, "u"));
        for op in operators() {
            prop_assert!(causality_holds(op.as_ref(), &u, cut, seed).unwrap(), "{}", op.meta().name);
        }
    }

    #[test]
    fn fractional_operators_are_linear(seed in any::<u64>(), a in -2.0..2.0f64, beta in 0.05..0.95f64) {
        let g = grid();
        let mut rng = stream(seed, "lin");
        let u = band_limited(g, 1, 8, 1.0, &mut rng);
        let v = band_limited(g, 1, 8, 1.0, &mut rng);
        let combo = u.scale(a).add(&v).unwrap();
        let order = FractionalOrder::uniform(beta).unwrap();
        let pairs = [
            (abel_integral(&combo, beta).unwrap(), abel_integral(&u, beta).unwrap(), abel_integral(&v, beta).unwrap()),
            (caputo(&combo, &order).unwrap(), caputo(&u, &order).unwrap(), caputo(&v, &order).unwrap()),
        ];
        for (lhs, fu, fv) in pairs {
            let rhs = fu.scale(a).add(&fv).unwrap();
            let scale = 1.0 + lhs.sup_norm();
            prop_assert!(lhs.sup_distance(&rhs).unwrap() <= 1e-11 * scale);
        }
    }
}

#[test]
fn restriction_consistency() {
    let g = grid();
    let u = band_limited(g, 1, 8, 1.0, &mut stream(1, "u"));
    for op in operators() {
        let full = op.apply(&u).unwrap();
        for last in [10, 64, 127] {
            let part = op.apply_until(&u, last).unwrap();
            assert_eq!(&part.values()[..=last], &full.values()[..=last], "{}", op.meta().name);
        }
    }
}

#[test]
fn volterra_unit_kernel_integrates() {
    let g = grid();
    let op = volterra_operator(&g, 1, Kernel::smooth(|_, _| 1.0)).unwrap();
    let out = op.apply(&Signal::constant(g, &[1.0])).unwrap();
    for (k, t) in g.times().enumerate() {
        assert!((out.value(k)[0] - t).abs() < 1e-12);
    }
}
