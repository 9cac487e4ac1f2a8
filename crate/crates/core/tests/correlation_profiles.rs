use ohmic::correlations::{self, FitOptions};
use ohmic::{Params, RawParams};
use proptest::prelude::*;
use std::f64::consts::PI;

fn params(omega: f64, eps: f64) -> Params {
    RawParams::new(omega, eps, 1e3).validate().unwrap()
}

#[test]
fn decay_rate_is_quarter_eps_squared() {
    for eps in [0.5, 0.7, 0.9] {
        let p = params(1.0, eps);
        let prof = correlations::correlation_profile(&p, &correlations::default_grid(&p), 1e-10, &FitOptions::default()).unwrap();
        let fit = prof.fit.unwrap();
        let expect = eps * eps / 4.0;
        assert!((fit.decay_rate - expect).abs() < 0.03 * expect, "eps {eps}: {} vs {expect}", fit.decay_rate);
        assert!((fit.decay_rate - correlations::decay_rate_printed(&p)).abs() > 0.5 * expect);
    }
}

#[test]
fn printed_correlator_falls_off_as_inverse_distance() {
    let p = params(1.0, 1.0);
    for x in [200.0, 400.0] {
        let v = correlations::printed_correlator(&p, x, 1e-12).unwrap();
        // int_0^inf e^{-s x} / (s^2 + gamma s + omega^2) ds -> 1 / (omega^2 x)
        let asymptote = -2.0 / PI / x;
        assert!((v.value - asymptote).abs() < 0.01 * asymptote.abs(), "{x}: {} vs {asymptote}", v.value);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn commutator_vanishes(om in 0.3f64..3.0, eps in 0.1f64..2.0, x in 0.05f64..30.0) {
        let r = correlations::commutator_residual(&params(om, eps), x, 1e-12).unwrap();
        prop_assert!(r < 1e-8, "{}", r);
    }

    #[test]
    fn symmetric_correlator_vanishes(om in 0.3f64..3.0, eps in 0.1f64..2.0, x in 0.0f64..20.0) {
        let v = correlations::qphi_symmetric(&params(om, eps), x, 1e-11).unwrap();
        prop_assert!(v.value().abs() < 1e-8, "{:?}", v);
    }

    #[test]
    fn dressing_correlator_is_bounded_by_its_coincident_value(om in 0.3f64..3.0, eps in 0.1f64..2.0, x in 0.0f64..20.0) {
        let p = params(om, eps);
        let at0 = correlations::dressing_correlator(&p, 0.0, 1e-11).unwrap().0;
        let v = correlations::dressing_correlator(&p, x, 1e-11).unwrap().0;
        // |A(x)| <= A(0) for an autocorrelation
        prop_assert!(v.abs() <= at0.abs() * (1.0 + 1e-9));
    }
}
