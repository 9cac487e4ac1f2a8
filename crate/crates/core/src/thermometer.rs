//! A second, undamped oscillator `z` of frequency `lambda_th`, coupled to the
//! damped oscillator through `mu * q * z`, used as a thermometer.
//!
//! Eliminating `q` gives the thermometer response to the bath force `F`,
//! `z = mu F / (D_q D_z - mu^2)` with `D_q = omega^2 - w^2 - i gamma w` and
//! `D_z = lambda_th^2 - w^2`, hence
//!
//! ```text
//! S_zz(w) = (mu^2 eps^2 / 2 pi) w / [((lambda^2 - w^2)(omega^2 - w^2) - mu^2)^2 + (lambda^2 - w^2)^2 gamma^2 w^2]
//! ```
//!
//! As `mu -> 0` the weight concentrates in a Lorentzian of width `O(mu^2)`
//! at `lambda_th` whose area tends to `1/(2 lambda_th)`: the thermometer
//! relaxes to its ground state even though `q` itself is mixed.

use num_complex::Complex;
use serde::Serialize;
use thiserror::Error;

use crate::gaussian_state::{self, StateError, ThermalDiagnostics};
use crate::model::ModelParams;
use crate::quadrature::{self, Peak, QuadOptions};
use crate::scalar::Real;
use crate::spectral_moments::{inverse_response, oscillator_hints, Covariance2};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ThermometerError {
    #[error("no thermometer configured")]
    MissingThermometer,
    #[error("quadrature failed for {what}: {source}")]
    Quadrature {
        what: &'static str,
        #[source]
        source: quadrature::QuadError,
    },
    #[error(transparent)]
    State(#[from] StateError),
    #[error("extrapolation needs at least 3 results at distinct mu, got {0}")]
    TooFewPoints(usize),
}

fn lambda<R: Real>(p: &ModelParams<R>) -> Result<R, ThermometerError> {
    p.lambda_th().ok_or(ThermometerError::MissingThermometer)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThermometerResult<R> {
    pub mu: R,
    pub zz: R,
    pub pzpz: R,
    pub zpz: R,
    pub err_zz: R,
    pub err_pzpz: R,
    pub diagnostics: ThermalDiagnostics<R>,
}

impl<R: Real> ThermometerResult<R> {
    pub fn covariance(&self) -> Covariance2<R> {
        Covariance2::new(self.zz, self.zpz, self.pzpz)
    }
}

/// Thermometer spectrum; zero when no thermometer is configured.
pub fn s_zz<R: Real>(w: R, p: &ModelParams<R>) -> R {
    let Some(lam) = p.lambda_th() else { return R::zero() };
    let mu = p.mu();
    let eps2 = p.eps() * p.eps();
    if mu == R::zero() || eps2 == R::zero() || w == R::zero() {
        return R::zero();
    }
    let om = p.omega();
    let dz = (lam - w) * (lam + w);
    let dq = (om - w) * (om + w);
    let re = dz * dq - mu * mu;
    let im = dz * p.gamma() * w;
    mu * mu * eps2 / (R::lit(2.0) * R::PI()) * w / (re * re + im * im)
}

/// The spectrum with the prefactor `2 mu^2 eps^2 / 2 pi` as it is commonly
/// printed; integrates to `1/lambda_th` rather than `1/(2 lambda_th)`.
pub fn s_zz_printed<R: Real>(w: R, p: &ModelParams<R>) -> R {
    R::lit(2.0) * s_zz(w, p)
}

/// Pole of the thermometer response near `lambda_th`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PoleShift<R> {
    /// `mu^2 / (2 lambda (lambda^2 - omega^2 + i gamma))`, the displayed first-order form.
    pub shift: Complex<R>,
    /// First-order shift with the damping evaluated at the pole,
    /// `mu^2 / (2 lambda (lambda^2 - omega^2 + i gamma lambda))`.
    pub exact_first_order: Complex<R>,
    /// `|lambda_th - omega| < 10 gamma`: the two resonances overlap and the
    /// first-order expansion is unreliable.
    pub degenerate_resonance: bool,
}

impl<R: Real> PoleShift<R> {
    /// Half-width of the thermometer line.
    pub fn half_width(&self) -> R {
        self.exact_first_order.im.abs()
    }
}

pub fn pole_shift<R: Real>(p: &ModelParams<R>) -> Result<PoleShift<R>, ThermometerError> {
    let lam = lambda(p)?;
    let om = p.omega();
    let g = p.gamma();
    let mu2 = p.mu() * p.mu();
    let two_lam = R::lit(2.0) * lam;
    let detune = (lam - om) * (lam + om);
    let shift = Complex::new(mu2, R::zero()) / (Complex::new(detune, g) * two_lam);
    let exact_first_order = Complex::new(mu2, R::zero()) / (Complex::new(detune, g * lam) * two_lam);
    Ok(PoleShift { shift, exact_first_order, degenerate_resonance: (lam - om).abs() < R::lit(10.0) * g })
}

fn hints<R: Real>(p: &ModelParams<R>) -> Result<Vec<Peak<R>>, ThermometerError> {
    let lam = lambda(p)?;
    let pole = pole_shift(p)?;
    let center = lam + pole.exact_first_order.re;
    let width = pole.half_width().max(lam * R::lit(1e-14));
    let mut h = oscillator_hints(p);
    h.push(Peak::new(center, width));
    Ok(h)
}

/// Ground state of the closed pair (q, z) with potential matrix
/// `K = [[omega^2, -mu], [-mu, lambda^2]]`: `<x x^T> = K^{-1/2} / 2` and
/// `<p p^T> = K^{1/2} / 2`. Returns the `z` block.
pub fn isolated_pair_ground_state<R: Real>(omega: R, lambda_th: R, mu: R) -> Covariance2<R> {
    let (a, b, d) = (omega * omega, -mu, lambda_th * lambda_th);
    // sqrt of a 2x2 SPD matrix: (K + s I) / t with s = sqrt(det K), t = sqrt(tr K + 2 s)
    let s = (a * d - b * b).sqrt();
    let t = (a + d + R::lit(2.0) * s).sqrt();
    let (ra, rd) = ((a + s) / t, (d + s) / t);
    let rb = b / t;
    let det_root = ra * rd - rb * rb;
    let half = R::lit(0.5);
    Covariance2::new(half * ra / det_root, R::zero(), half * rd)
}

pub fn thermometer_moments<R: Real>(p: &ModelParams<R>, tol: R) -> Result<ThermometerResult<R>, ThermometerError> {
    let lam = lambda(p)?;
    let mu = p.mu();
    let finish = |c: Covariance2<R>, ez: R, ep: R| -> Result<ThermometerResult<R>, ThermometerError> {
        Ok(ThermometerResult {
            mu,
            zz: c.qq,
            pzpz: c.pp,
            zpz: c.qp,
            err_zz: ez,
            err_pzpz: ep,
            diagnostics: gaussian_state::diagnostics(&c)?,
        })
    };
    if mu == R::zero() {
        return finish(Covariance2::ground_state(lam), R::zero(), R::zero());
    }
    if p.eps() == R::zero() {
        return finish(isolated_pair_ground_state(p.omega(), lam, mu), R::zero(), R::zero());
    }
    let opts = QuadOptions::new(tol).hints(hints(p)?).max_panels(50_000);
    let quad = |what, f: &dyn Fn(R) -> R| {
        quadrature::integrate(f, R::zero(), R::infinity(), &opts)
            .map_err(|source| ThermometerError::Quadrature { what, source })
    };
    let zz = quad("<z^2>", &|w| s_zz(w, p))?;
    let pp = quad("<p_z^2>", &|w| w * w * s_zz(w, p))?;
    finish(Covariance2::new(zz.value, R::zero(), pp.value), zz.err_estimate, pp.err_estimate)
}

/// Response denominator `D_q D_z - mu^2` at real frequency `w`, exposed for
/// cross-checks of the peak location.
pub fn coupled_denominator<R: Real>(w: R, p: &ModelParams<R>) -> Result<Complex<R>, ThermometerError> {
    let lam = lambda(p)?;
    let dz = (lam - w) * (lam + w);
    Ok(inverse_response(w, p).conj() * dz - p.mu() * p.mu())
}

pub fn thermometer_temperature<R: Real>(p: &ModelParams<R>, tol: R) -> Result<ThermalDiagnostics<R>, ThermometerError> {
    Ok(thermometer_moments(p, tol)?.diagnostics)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ExtrapolationWarning {
    /// Deviations from the limit do not shrink monotonically with `mu`.
    NonMonotoneSequence,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MuLimit<R> {
    pub zz: R,
    pub pzpz: R,
    pub zpz: R,
    /// Change in the limit when the largest-`mu` point is dropped.
    pub residual_zz: R,
    pub residual_pzpz: R,
    pub diagnostics: ThermalDiagnostics<R>,
    pub warnings: Vec<ExtrapolationWarning>,
}

/// Neville evaluation at `x = 0` of the interpolant through `(xs, ys)`.
pub fn neville_at_zero<R: Real>(xs: &[R], ys: &[R]) -> R {
    let mut t = ys.to_vec();
    let n = xs.len();
    for k in 1..n {
        for i in 0..n - k {
            t[i] = (xs[i + k] * t[i] - xs[i] * t[i + 1]) / (xs[i + k] - xs[i]);
        }
    }
    t[0]
}

/// Polynomial extrapolation in `mu^2` to `mu = 0`.
pub fn extrapolate_mu_to_zero<R: Real>(results: &[ThermometerResult<R>]) -> Result<MuLimit<R>, ThermometerError> {
    let mut rs: Vec<_> = results.to_vec();
    rs.sort_by(|a, b| a.mu.partial_cmp(&b.mu).unwrap_or(std::cmp::Ordering::Equal));
    rs.dedup_by(|a, b| a.mu == b.mu);
    if rs.len() < 3 {
        return Err(ThermometerError::TooFewPoints(rs.len()));
    }
    let xs: Vec<R> = rs.iter().map(|r| r.mu * r.mu).collect();
    let limit = |f: &dyn Fn(&ThermometerResult<R>) -> R| {
        let ys: Vec<R> = rs.iter().map(f).collect();
        let full = neville_at_zero(&xs, &ys);
        let reduced = neville_at_zero(&xs[..xs.len() - 1], &ys[..ys.len() - 1]);
        (full, (full - reduced).abs(), ys)
    };
    let (zz, residual_zz, zs) = limit(&|r| r.zz);
    let (pzpz, residual_pzpz, ps) = limit(&|r| r.pzpz);
    let (zpz, _, _) = limit(&|r| r.zpz);

    let monotone = |ys: &[R], lim: R| ys.windows(2).all(|w| (w[0] - lim).abs() <= (w[1] - lim).abs());
    let mut warnings = Vec::new();
    if !monotone(&zs, zz) || !monotone(&ps, pzpz) {
        warnings.push(ExtrapolationWarning::NonMonotoneSequence);
    }
    let diagnostics = gaussian_state::diagnostics(&Covariance2::new(zz, zpz, pzpz))?;
    Ok(MuLimit { zz, pzpz, zpz, residual_zz, residual_pzpz, diagnostics, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RawParams;

    fn params(eps: f64, mu: f64) -> ModelParams<f64> {
        RawParams::new(1.0, eps, 1e3).with_thermometer(0.7, mu).validate().unwrap()
    }

    #[test]
    fn spectrum_vanishes_without_coupling() {
        let p = params(1.0, 0.0);
        for w in [0.1, 0.7, 1.0, 5.0] {
            assert_eq!(s_zz(w, &p), 0.0);
        }
        assert_eq!(s_zz(0.0, &params(1.0, 0.1)), 0.0);
    }

    #[test]
    fn spectrum_peaks_near_shifted_pole() {
        let p = params(1.0, 1e-2);
        let lam: f64 = 0.7;
        let bound = 10.0 * 1e-4 / (2.0 * lam * (lam * lam - 1.0f64).abs());
        // scan the neighbourhood for the maximum
        let n = 200_000;
        let (lo, hi) = (lam - 2.0 * bound, lam + 2.0 * bound);
        let peak = (0..=n)
            .map(|i| lo + (hi - lo) * i as f64 / n as f64)
            .max_by(|a, b| s_zz(*a, &p).partial_cmp(&s_zz(*b, &p)).unwrap())
            .unwrap();
        assert!((peak - lam).abs() <= bound, "{peak}");
        let pole = pole_shift(&p).unwrap();
        assert!((peak - (lam + pole.exact_first_order.re)).abs() < 1e-6);
    }

    #[test]
    fn pole_shift_examples() {
        assert_eq!(pole_shift(&params(1.0, 0.0)).unwrap().shift, Complex::new(0.0, 0.0));
        let s = pole_shift(&params(1.0, 0.01)).unwrap();
        let expect = Complex::new(1e-4, 0.0) / (Complex::new(0.49 - 1.0, 0.5) * 1.4);
        assert!((s.shift - expect).norm() < 1e-18);
        assert!((s.shift.norm() - 1.0e-4).abs() < 0.01e-4, "{}", s.shift.norm());
        let s2 = pole_shift(&params(1.0, 0.02)).unwrap();
        assert!((s2.shift / s.shift - 4.0).norm() < 1e-12);
        assert!(s.degenerate_resonance);
        let far = RawParams::new(1.0, 0.1, 1e3).with_thermometer(3.0, 0.01).validate().unwrap();
        assert!(!pole_shift(&far).unwrap().degenerate_resonance);
    }

    #[test]
    fn exact_pole_matches_denominator_root() {
        // Newton iteration on the complex denominator started from lambda
        let p = params(1.0, 0.01);
        let lam = 0.7;
        let (om, g, mu) = (1.0, 0.5, 0.01);
        let f = |w: Complex<f64>| (lam * lam - w * w) * (om * om - w * w - Complex::i() * g * w) - mu * mu;
        let mut w = Complex::new(lam, 0.0);
        for _ in 0..50 {
            let h = 1e-7;
            let d = (f(w + h) - f(w - h)) / (2.0 * h);
            w -= f(w) / d;
        }
        // root of D_q D_z - mu^2 with D_q = omega^2 - w^2 - i gamma w lies below the axis
        let pole = pole_shift(&p).unwrap();
        let first = Complex::new(lam, 0.0) + Complex::new(pole.exact_first_order.re, -pole.half_width());
        // second-order terms are O(mu^4)
        assert!((w - first).norm() < 1e-7, "{w} vs {first}");
    }

    #[test]
    fn weak_coupling_reads_ground_state() {
        let r = thermometer_moments(&params(1.0, 1e-3), 1e-12).unwrap();
        assert!((r.zz - 1.0 / 1.4).abs() < 1e-3 / 1.4, "{}", r.zz);
        assert!((r.pzpz - 0.35).abs() < 0.35e-3, "{}", r.pzpz);
        assert_eq!(r.zpz, 0.0);
        assert!((r.diagnostics.nu - 0.5).abs() < 1e-3);
    }

    #[test]
    fn printed_prefactor_doubles_the_limit() {
        let p = params(1.0, 1e-3);
        let h = hints(&p).unwrap();
        let opts = QuadOptions::new(1e-12).hints(h);
        let v = quadrature::integrate(|w| s_zz_printed(w, &p), 0.0, f64::INFINITY, &opts).unwrap().value;
        assert!((v - 1.0 / 0.7).abs() < 2e-3, "{v}");
    }

    #[test]
    fn finite_mu_is_mixed() {
        let r = thermometer_moments(&params(1.0, 0.05), 1e-12).unwrap();
        assert!(r.diagnostics.nu > 0.5);
    }

    #[test]
    fn isolated_pair_oracle() {
        // K^{1/2} squared must reproduce K
        let (om, lam, mu): (f64, f64, f64) = (1.0, 0.7, 0.3);
        let c = isolated_pair_ground_state(om, lam, mu);
        assert!(c.determinant() >= 0.25);
        let small = isolated_pair_ground_state(om, lam, 1e-3);
        assert!((small.qq * small.pp).sqrt() - 0.5 < 1e-5);
        assert!((small.qq * small.pp).sqrt() - 0.5 > 0.0);
        let r = thermometer_moments(&RawParams::new(om, 0.0, 1e3).with_thermometer(lam, mu).validate().unwrap(), 1e-10)
            .unwrap();
        assert_eq!(r.zz, c.qq);
        // decoupled limit
        let d = isolated_pair_ground_state(om, lam, 0.0);
        assert!((d.qq - 0.5 / lam).abs() < 1e-15 && (d.pp - 0.5 * lam).abs() < 1e-15);
    }

    #[test]
    fn isolated_pair_against_eigendecomposition() {
        let (om, lam, mu): (f64, f64, f64) = (1.3, 0.6, 0.4);
        let k = nalgebra::Matrix2::new(om * om, -mu, -mu, lam * lam);
        let e = k.symmetric_eigen();
        let root = e.eigenvectors * nalgebra::Matrix2::from_diagonal(&e.eigenvalues.map(f64::sqrt)) * e.eigenvectors.transpose();
        let inv_root = root.try_inverse().unwrap();
        let c = isolated_pair_ground_state(om, lam, mu);
        assert!((c.qq - 0.5 * inv_root[(1, 1)]).abs() < 1e-14);
        assert!((c.pp - 0.5 * root[(1, 1)]).abs() < 1e-14);
    }

    fn synthetic(mu: f64, zz: f64, pzpz: f64) -> ThermometerResult<f64> {
        let c = Covariance2::new(zz, 0.0, pzpz);
        ThermometerResult { mu, zz, pzpz, zpz: 0.0, err_zz: 0.0, err_pzpz: 0.0, diagnostics: gaussian_state::diagnostics(&c).unwrap() }
    }

    #[test]
    fn extrapolation_exact_on_quadratic() {
        let rs: Vec<_> = [0.1, 0.2, 0.4].iter().map(|&m| synthetic(m, 0.7 + 3.0 * m * m, 0.4 - m * m)).collect();
        let l = extrapolate_mu_to_zero(&rs).unwrap();
        assert!((l.zz - 0.7).abs() < 1e-14);
        assert!((l.pzpz - 0.4).abs() < 1e-14);
        assert!(l.warnings.is_empty());
    }

    #[test]
    fn extrapolation_of_constant() {
        let rs: Vec<_> = [0.1, 0.2, 0.3].iter().map(|&m| synthetic(m, 0.6, 0.6)).collect();
        let l = extrapolate_mu_to_zero(&rs).unwrap();
        assert!((l.zz - 0.6).abs() < 1e-15);
        assert!(l.residual_zz < 1e-15);
    }

    #[test]
    fn extrapolation_flags_non_monotone_and_rejects_short_input() {
        let rs = vec![synthetic(0.1, 0.9, 0.5), synthetic(0.2, 0.6, 0.5), synthetic(0.3, 0.95, 0.5)];
        let l = extrapolate_mu_to_zero(&rs).unwrap();
        assert!(l.warnings.contains(&ExtrapolationWarning::NonMonotoneSequence));
        let short = vec![synthetic(0.1, 0.6, 0.6), synthetic(0.1, 0.6, 0.6), synthetic(0.2, 0.6, 0.6)];
        assert_eq!(extrapolate_mu_to_zero(&short).unwrap_err(), ThermometerError::TooFewPoints(2));
    }
}
