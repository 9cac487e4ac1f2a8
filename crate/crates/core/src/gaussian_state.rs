//! Thermal-state diagnostics of a one-mode Gaussian covariance.
//!
//! Any one-mode Gaussian state is, up to a linear symplectic change of
//! variables, a thermal state of `H = lambda (p^2 + q^2) / 2` with
//! `<q^2> = <p^2> = nu = coth(lambda / 2T) / 2`. The symplectic invariant
//! `nu = sqrt(qq pp - qp^2)` fixes the temperature up to the choice of
//! frequency; the natural choice is the frequency of the normal form.

use serde::Serialize;
use thiserror::Error;

use crate::scalar::Real;
use crate::spectral_moments::Covariance2;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum StateError {
    #[error("unphysical covariance (qq={qq}, qp={qp}, pp={pp}): determinant {det} below 1/4")]
    UnphysicalCovariance { qq: f64, qp: f64, pp: f64, det: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThermalDiagnostics<R> {
    pub nu: R,
    pub lambda_eff: R,
    pub temperature: R,
    pub entropy: R,
    pub purity: R,
}

fn unphysical<R: Real>(c: &Covariance2<R>, det: R) -> StateError {
    StateError::UnphysicalCovariance {
        qq: c.qq.to_f64_lossy(),
        qp: c.qp.to_f64_lossy(),
        pp: c.pp.to_f64_lossy(),
        det: det.to_f64_lossy(),
    }
}

/// Below this distance from 1/2, `nu` is treated as exactly pure.
const NU_CLAMP: f64 = 1e-12;

/// `nu = sqrt(qq pp - qp^2)`. Values marginally below 1/2 from rounding are
/// lifted to 1/2; anything further below is an error.
pub fn symplectic_invariant<R: Real>(c: &Covariance2<R>) -> Result<R, StateError> {
    let det = c.determinant();
    let quarter = R::lit(0.25);
    let slack = R::lit(1e-9).max(R::lit(16.0) * R::epsilon());
    if !(c.qq > R::zero() && c.pp > R::zero() && det.is_finite()) || det < quarter - slack {
        return Err(unphysical(c, det));
    }
    Ok(det.max(quarter).sqrt())
}

/// Frequency of the normal form. The shear `p -> p - (qp/qq) q` removes the
/// cross term, after which the scaling to equal variances gives
/// `lambda = nu / qq` (`sqrt(pp/qq)` when `qp = 0`).
pub fn normal_form_frequency<R: Real>(c: &Covariance2<R>) -> Result<R, StateError> {
    let nu = symplectic_invariant(c)?;
    if c.qp == R::zero() {
        return Ok((c.pp / c.qq).sqrt());
    }
    Ok(nu / c.qq)
}

/// Inverts `nu = coth(lambda / 2T) / 2`.
pub fn effective_temperature<R: Real>(nu: R, lambda_eff: R) -> R {
    let half = R::lit(0.5);
    if nu - half <= R::lit(NU_CLAMP) {
        return R::zero();
    }
    let x = half / nu;
    // artanh(x) = ln((1+x)/(1-x)) / 2, with 1 - x formed exactly as (nu - 1/2)/nu
    let artanh = ((nu + half) / (nu - half)).ln() * half;
    debug_assert!(x < R::one());
    lambda_eff / (R::lit(2.0) * artanh)
}

/// `nu` of a thermal state of frequency `lambda` at temperature `t`.
pub fn nu_of_thermal<R: Real>(t: R, lambda: R) -> R {
    let half = R::lit(0.5);
    if t == R::zero() {
        return half;
    }
    let x = lambda / (R::lit(2.0) * t);
    // coth(x) = 1 + 2 / (e^{2x} - 1)
    half * (R::one() + R::lit(2.0) / (R::lit(2.0) * x).exp_m1())
}

/// Von Neumann entropy in nats.
pub fn entropy<R: Real>(nu: R) -> R {
    let half = R::lit(0.5);
    let a = nu + half;
    let b = nu - half;
    let xlnx = |v: R| if v <= R::zero() { R::zero() } else { v * v.ln() };
    (xlnx(a) - xlnx(b)).max(R::zero())
}

pub fn purity<R: Real>(nu: R) -> R {
    R::lit(0.5) / nu
}

pub fn diagnostics<R: Real>(c: &Covariance2<R>) -> Result<ThermalDiagnostics<R>, StateError> {
    let nu = symplectic_invariant(c)?;
    let lambda_eff = normal_form_frequency(c)?;
    Ok(ThermalDiagnostics {
        nu,
        lambda_eff,
        temperature: effective_temperature(nu, lambda_eff),
        entropy: entropy(nu),
        purity: purity(nu),
    })
}

/// Applies the linear map `(q, p) -> (a q + b p, c q + d p)` to a covariance.
pub fn transform<R: Real>(c: &Covariance2<R>, m: [[R; 2]; 2]) -> Covariance2<R> {
    let [[a, b], [cc, d]] = m;
    Covariance2 {
        qq: a * a * c.qq + R::lit(2.0) * a * b * c.qp + b * b * c.pp,
        qp: a * cc * c.qq + (a * d + b * cc) * c.qp + b * d * c.pp,
        pp: cc * cc * c.qq + R::lit(2.0) * cc * d * c.qp + d * d * c.pp,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cov(qq: f64, qp: f64, pp: f64) -> Covariance2<f64> {
        Covariance2::new(qq, qp, pp)
    }

    #[test]
    fn invariant_examples() {
        assert_eq!(symplectic_invariant(&cov(0.5, 0.0, 0.5)).unwrap(), 0.5);
        let nu = symplectic_invariant(&cov(0.5, 0.3, 1.0)).unwrap();
        assert!((nu - 0.41f64.sqrt()).abs() < 1e-15);
        assert!((nu - 0.640312).abs() < 1e-6);
    }

    #[test]
    fn shear_preserves_invariant() {
        let c = cov(0.8, 0.1, 1.3);
        let t = transform(&c, [[1.0, 0.7], [0.0, 1.0]]);
        let a = symplectic_invariant(&c).unwrap();
        let b = symplectic_invariant(&t).unwrap();
        assert!((a - b).abs() < 1e-12 * a);
    }

    #[test]
    fn rejects_uncertainty_violation() {
        assert!(matches!(symplectic_invariant(&cov(0.4, 0.0, 0.5)), Err(StateError::UnphysicalCovariance { .. })));
        assert!(symplectic_invariant(&cov(-1.0, 0.0, -1.0)).is_err());
        // rounding below 1/4 is tolerated
        assert_eq!(symplectic_invariant(&cov(0.5, 0.0, 0.5 - 1e-12)).unwrap(), 0.5);
    }

    #[test]
    fn normal_form_examples() {
        assert_eq!(normal_form_frequency(&cov(0.5, 0.0, 0.5)).unwrap(), 1.0);
        let g = Covariance2::ground_state(3.0);
        assert!((normal_form_frequency(&g).unwrap() - 3.0f64).abs() < 1e-15);
        assert!((normal_form_frequency(&cov(0.6, 0.0, 1.2)).unwrap() - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn normal_form_equalises_variances() {
        let c = cov(0.7, 0.25, 0.9);
        let nu = symplectic_invariant(&c).unwrap();
        let lam = normal_form_frequency(&c).unwrap();
        let s = lam.sqrt();
        // shear then scale: q~ = sqrt(lam) q, p~ = (p - (qp/qq) q) / sqrt(lam)
        let t = transform(&c, [[s, 0.0], [-(c.qp / c.qq) / s, 1.0 / s]]);
        assert!((t.qq - nu).abs() < 1e-12);
        assert!((t.pp - nu).abs() < 1e-12);
        assert!(t.qp.abs() < 1e-12);
    }

    #[test]
    fn temperature_examples() {
        assert_eq!(effective_temperature(0.5, 2.0), 0.0);
        assert_eq!(effective_temperature(0.5 + 1e-13, 2.0), 0.0);
        let nu1 = 0.5 / (0.5f64).tanh();
        assert!((nu1 - 1.081977).abs() < 1e-6);
        assert!((effective_temperature(1.081977f64, 1.0) - 1.0).abs() < 1e-3);
        assert!((effective_temperature(0.6f64, 1.0) - 0.41703).abs() < 1e-5);
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(entropy(0.5), 0.0);
        assert!((entropy(1.0f64) - (1.5 * 1.5f64.ln() - 0.5 * 0.5f64.ln())).abs() < 1e-15);
        assert!((entropy(1.0f64) - 0.954771).abs() < 1e-6);
        assert!((entropy(10.0f64) - (10f64.ln() + 1.0)).abs() < 0.01);
    }

    #[test]
    fn diagnostics_of_ground_state() {
        let d = diagnostics(&Covariance2::ground_state(2.0)).unwrap();
        assert_eq!(d.nu, 0.5);
        assert_eq!(d.temperature, 0.0);
        assert_eq!(d.entropy, 0.0);
        assert_eq!(d.purity, 1.0);
        assert_eq!(d.lambda_eff, 2.0);
    }

    #[test]
    fn single_precision() {
        let d = diagnostics(&Covariance2::new(0.6f32, 0.0, 1.2)).unwrap();
        assert!((d.lambda_eff - std::f32::consts::SQRT_2).abs() < 1e-6);
        assert!(d.temperature > 0.0);
    }

    fn generator(kind: u8, a: f64) -> [[f64; 2]; 2] {
        match kind {
            0 => [[a, 0.0], [0.0, 1.0 / a]],
            1 => [[1.0, a], [0.0, 1.0]],
            _ => [[1.0, 0.0], [a, 1.0]],
        }
    }

    proptest! {
        #[test]
        fn invariant_under_generators(
            qq in 0.3f64..3.0, qp in -0.5f64..0.5, extra in 0.0f64..2.0,
            kind in 0u8..3, a in -2.0f64..2.0,
        ) {
            prop_assume!(kind != 0 || a.abs() > 0.05);
            let pp = (0.25 + qp * qp) / qq + extra;
            let c = cov(qq, qp, pp);
            let t = transform(&c, generator(kind, a));
            let n0 = symplectic_invariant(&c).unwrap();
            let n1 = symplectic_invariant(&t).unwrap();
            prop_assert!((n0 - n1).abs() <= 1e-12 * n0 * (1.0 + a * a) * 4.0, "{} {}", n0, n1);
        }

        #[test]
        fn temperature_and_entropy_increase(a in 0.5f64..20.0, b in 0.5f64..20.0, lam in 0.1f64..5.0) {
            prop_assume!((a - b).abs() > 1e-9);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assume!(lo - 0.5 > 1e-11);
            prop_assert!(effective_temperature(lo, lam) < effective_temperature(hi, lam));
            prop_assert!(entropy(lo) < entropy(hi));
        }

        #[test]
        fn thermal_round_trip(x in 0.01f64..5.0, lam in 0.1f64..5.0) {
            let t = lam / (2.0 * x);
            let nu = nu_of_thermal(t, lam);
            let back = effective_temperature(nu, lam);
            prop_assert!((back - t).abs() <= 1e-9 * t, "{} -> {} -> {}", t, nu, back);
        }
    }
}
