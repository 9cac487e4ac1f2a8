//! Equal-time correlations between the oscillator and the field.
//!
//! The field splits into the incoming vacuum and the radiated part,
//! `phi(t, x) = phi_in(t, x) - (eps / 2) q(t - |x|)`. Correspondingly
//!
//! ```text
//! <{q, phi(x)}> = (eps / pi) int_0^inf Im chi(w) cos(w x) dw  -  (eps / 2) A(|x|)
//! ```
//!
//! with `chi(w) = 1 / (omega^2 - w^2 - i gamma w)` and `A` the symmetrised
//! autocorrelation of `q`. The fluctuation-dissipation relation
//! `Im chi = gamma w |chi|^2` makes the two terms cancel identically, as
//! time-reversal symmetry of the coupled ground state requires. The
//! radiated ("dressing") part, `-(eps/2) A(|x|)`, is the localized cloud
//! around the oscillator: it oscillates in `|x|` with an envelope decaying
//! at `gamma / 2 = eps^2 / 4`, plus a small `1/x^2` tail.
//!
//! The equal-time commutator reduces to the retarded response at negative
//! time, `int_R e^{i w |x|} chi(w) dw = 2 pi g(-|x|) = 0`.

use num_complex::Complex;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::model::ModelParams;
use crate::quadrature::{self, QuadOptions};
use crate::scalar::Real;
use crate::spectral_moments::{self, oscillator_hints, response_denominator, s_qq, SpectralError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CorrelationError {
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error("the two routes disagree at x = {x}: fourier {fourier}, retarded {retarded} (tolerance {tol})")]
    RouteDisagreement { x: f64, fourier: f64, retarded: f64, tol: f64 },
    #[error("insufficient range for a decay fit: {0}")]
    InsufficientRange(String),
    #[error("profile is not exponential: log-residual rms {rms} exceeds {threshold}")]
    NonExponentialProfile { rms: f64, threshold: f64 },
}

/// Retarded susceptibility `1 / (omega^2 - w^2 - i gamma w)`.
pub fn susceptibility<R: Real>(w: R, p: &ModelParams<R>) -> Complex<R> {
    let om = p.omega();
    Complex::new(R::one(), R::zero()) / Complex::new((om - w) * (om + w), -p.gamma() * w)
}

fn opts<R: Real>(p: &ModelParams<R>, tol: R) -> QuadOptions<R> {
    QuadOptions::new(tol).hints(oscillator_hints(p)).max_panels(50_000)
}

/// `<{q, phi(x)}>` evaluated two ways.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QphiValue<R> {
    /// Single frequency integral of the combined vacuum and radiated integrand.
    pub fourier: R,
    /// Vacuum term minus `(eps/2) A(|x|)`, each integrated separately.
    pub retarded: R,
    pub err_estimate: R,
}

impl<R: Real> QphiValue<R> {
    pub fn value(&self) -> R {
        (self.fourier + self.retarded) / R::lit(2.0)
    }
}

/// Vacuum contribution `(eps / pi) int_0^inf Im chi(w) cos(w x) dw`.
pub fn qphi_vacuum_term<R: Real>(p: &ModelParams<R>, x: R, tol: R) -> Result<(R, R), CorrelationError> {
    let eps = p.eps();
    if eps == R::zero() {
        return Ok((R::zero(), R::zero()));
    }
    let c = eps / R::PI();
    let r = quadrature::integrate_phase(
        |w| Complex::new(susceptibility(w, p).im, R::zero()),
        x.abs(),
        R::zero(),
        R::infinity(),
        &opts(p, tol / c),
    )
    .map_err(spectral_moments::quad_err("vacuum q-phi term"))?;
    Ok((c * r.value.re, c * r.err_estimate))
}

/// Radiated contribution `-(eps / 2) A(|x|)`.
pub fn dressing_correlator<R: Real>(p: &ModelParams<R>, x: R, tol: R) -> Result<(R, R), CorrelationError> {
    let eps = p.eps();
    if eps == R::zero() {
        return Ok((R::zero(), R::zero()));
    }
    let half = eps / R::lit(2.0);
    let a = spectral_moments::autocorrelation_q(p, x, tol / half)?;
    Ok((-half * a.value, half * a.err_estimate))
}

pub fn qphi_symmetric<R: Real>(p: &ModelParams<R>, x: R, tol: R) -> Result<QphiValue<R>, CorrelationError> {
    let eps = p.eps();
    if eps == R::zero() {
        return Ok(QphiValue { fourier: R::zero(), retarded: R::zero(), err_estimate: R::zero() });
    }
    let c = eps / R::PI();
    let g = p.gamma();
    let fourier = quadrature::integrate_phase(
        |w| {
            let vac = susceptibility(w, p).im;
            let rad = R::PI() * s_qq(w, p) * R::lit(2.0) * g / (eps * eps);
            Complex::new(vac - rad, R::zero())
        },
        x.abs(),
        R::zero(),
        R::infinity(),
        &opts(p, tol / c),
    )
    .map_err(spectral_moments::quad_err("q-phi fourier route"))?;
    let (vac, e1) = qphi_vacuum_term(p, x, tol)?;
    let (rad, e2) = dressing_correlator(p, x, tol)?;
    let out = QphiValue {
        fourier: c * fourier.value.re,
        retarded: vac + rad,
        err_estimate: c * fourier.err_estimate + e1 + e2,
    };
    let allowed = out.err_estimate.max(tol) * R::lit(10.0);
    if (out.fourier - out.retarded).abs() > allowed {
        return Err(CorrelationError::RouteDisagreement {
            x: x.to_f64_lossy(),
            fourier: out.fourier.to_f64_lossy(),
            retarded: out.retarded.to_f64_lossy(),
            tol: allowed.to_f64_lossy(),
        });
    }
    Ok(out)
}

/// The correlator in the form `4 i (eps / 2 pi) int_0^inf e^{i w |x|} chi(w) dw`.
/// Rotating the contour onto the imaginary axis shows it equals
/// `-(2 eps / pi) int_0^inf e^{-s |x|} / (s^2 + gamma s + omega^2) ds`:
/// real, but falling off only like `1/|x|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrintedCorrelator<R> {
    pub value: R,
    pub imaginary_residual: R,
    /// The same quantity from the rotated-contour integral.
    pub rotated: R,
}

pub fn printed_correlator<R: Real>(p: &ModelParams<R>, x: R, tol: R) -> Result<PrintedCorrelator<R>, CorrelationError> {
    let eps = p.eps();
    if eps == R::zero() {
        return Ok(PrintedCorrelator { value: R::zero(), imaginary_residual: R::zero(), rotated: R::zero() });
    }
    let k = x.abs();
    let pref = R::lit(4.0) * eps / (R::lit(2.0) * R::PI());
    let r = quadrature::integrate_phase(|w| susceptibility(w, p), k, R::zero(), R::infinity(), &opts(p, tol / pref))
        .map_err(spectral_moments::quad_err("printed correlator"))?;
    // 4 i c (a + i b) = -4 c b + 4 i c a
    let value = -pref * r.value.im;
    let imaginary_residual = pref * r.value.re;
    let om2 = p.omega() * p.omega();
    let g = p.gamma();
    let rot = quadrature::integrate(
        |s| (-s * k).exp() / (s * s + g * s + om2),
        R::zero(),
        R::infinity(),
        &QuadOptions::new(tol * R::PI() / (R::lit(2.0) * eps)),
    )
    .map_err(spectral_moments::quad_err("rotated printed correlator"))?;
    Ok(PrintedCorrelator { value, imaginary_residual, rotated: -R::lit(2.0) * eps / R::PI() * rot.value })
}

/// `(eps / 2 pi) int_R e^{i w |x|} chi(w) dw`, the frequency form of the
/// equal-time commutator `[q, phi(x)]`; its magnitude is returned.
pub fn commutator_residual<R: Real>(p: &ModelParams<R>, x: R, tol: R) -> Result<R, CorrelationError> {
    let eps = p.eps();
    if eps == R::zero() {
        return Ok(R::zero());
    }
    let c = eps / (R::lit(2.0) * R::PI());
    let r = quadrature::integrate_phase_full_line(|w| susceptibility(w, p), x.abs(), &opts(p, tol / c))
        .map_err(spectral_moments::quad_err("commutator"))?;
    Ok(c * r.value.norm())
}

/// Exponential envelope fitted to a profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpFit<R> {
    pub amplitude: R,
    pub decay_rate: R,
    /// Approximate 95% confidence half-width of `decay_rate`.
    pub decay_rate_ci: R,
    /// RMS of the residuals of `ln |envelope|`.
    pub fit_rms: R,
    pub peaks: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitOptions<R> {
    pub rms_threshold: R,
    pub min_points: usize,
    pub min_peaks: usize,
}

impl<R: Real> Default for FitOptions<R> {
    fn default() -> Self {
        Self { rms_threshold: R::lit(0.05), min_points: 6, min_peaks: 3 }
    }
}

/// Interior local maxima of `|ys|`, refined by a parabola through the three
/// surrounding samples.
pub fn envelope_peaks<R: Real>(xs: &[R], ys: &[R]) -> Vec<(R, R)> {
    let a: Vec<R> = ys.iter().map(|y| y.abs()).collect();
    let mut out = Vec::new();
    for i in 1..a.len().saturating_sub(1) {
        if a[i] > a[i - 1] && a[i] >= a[i + 1] && a[i] > R::zero() {
            let (x0, x1, x2) = (xs[i - 1], xs[i], xs[i + 1]);
            let (y0, y1, y2) = (a[i - 1], a[i], a[i + 1]);
            // vertex of the parabola through three (possibly uneven) points
            let d0 = (y1 - y0) / (x1 - x0);
            let d1 = (y2 - y1) / (x2 - x1);
            let curv = (d1 - d0) / (x2 - x0);
            if curv < R::zero() {
                let xv = (x0 + x1) / R::lit(2.0) - d0 / (R::lit(2.0) * curv);
                let yv = y1 + d0 * (xv - x1) + curv * (xv - x0) * (xv - x1);
                out.push((xv, yv.max(y1)));
            } else {
                out.push((x1, y1));
            }
        }
    }
    out
}

/// Least-squares fit of `ln |envelope|` against `|x|`.
pub fn decay_rate_fit<R: Real>(xs: &[R], ys: &[R], fo: &FitOptions<R>) -> Result<ExpFit<R>, CorrelationError> {
    if xs.len() != ys.len() || xs.len() < fo.min_points {
        return Err(CorrelationError::InsufficientRange(format!("{} points, need {}", xs.len(), fo.min_points)));
    }
    let peaks = envelope_peaks(xs, ys);
    if peaks.len() < fo.min_peaks {
        return Err(CorrelationError::InsufficientRange(format!("{} envelope peaks, need {}", peaks.len(), fo.min_peaks)));
    }
    let px: Vec<R> = peaks.iter().map(|p| p.0).collect();
    let py: Vec<R> = peaks.iter().map(|p| p.1.ln()).collect();
    let line = spectral_moments::fit_line(&px, &py);
    let n = px.len();
    let mx = px.iter().fold(R::zero(), |a, &x| a + x) / R::lit(n as f64);
    let sxx = px.iter().fold(R::zero(), |a, &x| a + (x - mx) * (x - mx));
    let ss = px
        .iter()
        .zip(&py)
        .map(|(&x, &y)| {
            let r = y - (line.intercept + line.slope * x);
            r * r
        })
        .fold(R::zero(), |a, b| a + b);
    let fit_rms = (ss / R::lit(n as f64)).sqrt();
    let stderr = if n > 2 { (ss / R::lit((n - 2) as f64) / sxx).sqrt() } else { R::zero() };
    let fit = ExpFit {
        amplitude: line.intercept.exp(),
        decay_rate: -line.slope,
        decay_rate_ci: R::lit(2.0) * stderr,
        fit_rms,
        peaks: n,
    };
    if fit_rms > fo.rms_threshold {
        return Err(CorrelationError::NonExponentialProfile {
            rms: fit_rms.to_f64_lossy(),
            threshold: fo.rms_threshold.to_f64_lossy(),
        });
    }
    Ok(fit)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationProfile<R> {
    pub xs: Vec<R>,
    /// Full `<{q, phi(x)}>`, which vanishes.
    pub sym: Vec<QphiValue<R>>,
    /// Radiated part `-(eps/2) A(|x|)`.
    pub dressing: Vec<R>,
    pub comm: Vec<R>,
    pub fit: Option<ExpFit<R>>,
}

/// Sample grid `0, h, 2h, ..` up to `x_max`.
pub fn grid<R: Real>(x_max: R, h: R) -> Vec<R> {
    let n = (x_max / h).ceil().to_usize().unwrap_or(0);
    (0..=n).map(|i| h * R::lit(i as f64)).collect()
}

/// Default sampling for a profile: step a sixteenth of the oscillation
/// half-period, range `4.5 / (eps^2 / 4)`.
pub fn default_grid<R: Real>(p: &ModelParams<R>) -> Vec<R> {
    let om = p.omega();
    let g = p.gamma();
    let ring = (om * om - g * g / R::lit(4.0)).max(om * om * R::lit(0.01)).sqrt();
    let h = R::PI() / ring / R::lit(16.0);
    let x_max = if g > R::zero() { R::lit(4.5) / (g / R::lit(2.0)) } else { R::lit(20.0) / om };
    grid(x_max, h)
}

pub fn correlation_profile<R: Real>(
    p: &ModelParams<R>,
    xs: &[R],
    tol: R,
    fo: &FitOptions<R>,
) -> Result<CorrelationProfile<R>, CorrelationError> {
    let rows: Vec<(QphiValue<R>, R, R)> = xs
        .par_iter()
        .map(|&x| {
            let sym = qphi_symmetric(p, x, tol)?;
            let (d, _) = dressing_correlator(p, x, tol)?;
            let c = commutator_residual(p, x, tol)?;
            Ok((sym, d, c))
        })
        .collect::<Result<_, CorrelationError>>()?;
    let dressing: Vec<R> = rows.iter().map(|r| r.1).collect();
    let fit = if p.eps() > R::zero() { Some(decay_rate_fit(xs, &dressing, fo)?) } else { None };
    Ok(CorrelationProfile {
        xs: xs.to_vec(),
        sym: rows.iter().map(|r| r.0).collect(),
        dressing,
        comm: rows.iter().map(|r| r.2).collect(),
        fit,
    })
}

/// Decay rate of the dressing cloud as printed, `eps^2 / 2`.
pub fn decay_rate_printed<R: Real>(p: &ModelParams<R>) -> R {
    p.eps() * p.eps() / R::lit(2.0)
}

/// Amplitude decay rate of `q`, `gamma / 2 = eps^2 / 4`.
pub fn decay_rate_rederived<R: Real>(p: &ModelParams<R>) -> R {
    p.gamma() / R::lit(2.0)
}

/// `|D(w)|^2`, re-exported for oracle comparisons.
pub fn response_magnitude_sq<R: Real>(w: R, p: &ModelParams<R>) -> R {
    response_denominator(w, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RawParams;

    fn params(om: f64, eps: f64) -> ModelParams<f64> {
        RawParams::new(om, eps, 1e3).validate().unwrap()
    }

    #[test]
    fn decoupled_is_zero() {
        let p = params(1.0, 0.0);
        for x in [0.0, 1.0, 5.0] {
            assert_eq!(qphi_symmetric(&p, x, 1e-10).unwrap().value(), 0.0);
            assert_eq!(commutator_residual(&p, x, 1e-10).unwrap(), 0.0);
        }
    }

    #[test]
    fn symmetric_correlator_vanishes_by_both_routes() {
        let p = params(1.0, 1.0);
        for x in [0.0, 0.5, 1.0, 3.0, 8.0] {
            let v = qphi_symmetric(&p, x, 1e-11).unwrap();
            assert!(v.fourier.abs() < 1e-9, "{x}: {v:?}");
            assert!(v.retarded.abs() < 1e-9, "{x}: {v:?}");
        }
    }

    #[test]
    fn vacuum_term_equals_half_eps_autocorrelation() {
        // Im chi = gamma w |chi|^2 term by term; checked with a crude midpoint rule
        let p = params(1.0, 1.0);
        let x = 1.5;
        let (vac, _) = qphi_vacuum_term(&p, x, 1e-11).unwrap();
        let h = 1e-4;
        let mut s = 0.0;
        let mut w = h / 2.0;
        while w < 2000.0 {
            s += susceptibility(w, &p).im * (w * x).cos() * h;
            w += h;
        }
        // tail of Im chi ~ gamma / w^3 beyond 2000 is negligible
        assert!((vac - s / std::f64::consts::PI).abs() < 1e-6, "{vac} vs {}", s / std::f64::consts::PI);
    }

    #[test]
    fn commutator_examples() {
        assert!(commutator_residual(&params(1.0, 1.0), 0.5, 1e-12).unwrap() < 1e-8);
        assert!(commutator_residual(&params(2.0, 0.3), 2.0, 1e-12).unwrap() < 1e-8);
        assert!(commutator_residual(&params(1.0, 1.0), 0.0, 1e-12).unwrap() < 1e-8);
    }

    #[test]
    fn commutator_integrand_is_not_trivially_zero() {
        // the positive half-line alone is far from zero
        let p = params(1.0, 1.0);
        let r = quadrature::integrate_phase(|w| susceptibility(w, &p), 0.5, 0.0, f64::INFINITY, &QuadOptions::new(1e-10))
            .unwrap();
        assert!(r.value.norm() > 0.1);
    }

    #[test]
    fn printed_correlator_is_real_and_matches_rotated_contour() {
        let p = params(1.0, 1.0);
        for x in [0.5, 2.0, 10.0] {
            let c = printed_correlator(&p, x, 1e-11).unwrap();
            assert!(c.imaginary_residual.abs() < 1e-8, "{x}: {c:?}");
            assert!((c.value - c.rotated).abs() < 1e-8, "{x}: {c:?}");
        }
        // algebraic tail: x * value -> -(2 eps / pi) / omega^2
        let far = printed_correlator(&p, 200.0, 1e-12).unwrap();
        assert!((far.rotated * 200.0 + 2.0 / std::f64::consts::PI).abs() < 0.02, "{}", far.rotated * 200.0);
    }

    #[test]
    fn synthetic_envelope_fit() {
        let xs: Vec<f64> = grid(12.0, 0.05);
        let ys: Vec<f64> = xs.iter().map(|&x| (-0.5 * x).exp() * x.cos()).collect();
        let fit = decay_rate_fit(&xs, &ys, &FitOptions::default()).unwrap();
        assert!((fit.decay_rate - 0.5).abs() < 0.02, "{fit:?}");
        assert!(fit.fit_rms < 1e-3);
    }

    #[test]
    fn fit_rejects_short_or_non_exponential_profiles() {
        let xs = [0.0, 1.0, 2.0];
        let ys = [1.0, 0.5, 0.25];
        assert!(matches!(decay_rate_fit(&xs, &ys, &FitOptions::default()), Err(CorrelationError::InsufficientRange(_))));
        // Gaussian envelope: curvature in the log
        let xs: Vec<f64> = grid(12.0, 0.05);
        let ys: Vec<f64> = xs.iter().map(|&x| (-0.1 * x * x).exp() * (3.0 * x).cos()).collect();
        assert!(matches!(
            decay_rate_fit(&xs, &ys, &FitOptions::default()),
            Err(CorrelationError::NonExponentialProfile { .. })
        ));
    }

    #[test]
    fn dressing_cloud_decays_at_quarter_eps_squared() {
        let p = params(1.0, 1.0);
        let xs = default_grid(&p);
        let prof = correlation_profile(&p, &xs, 1e-10, &FitOptions::default()).unwrap();
        let fit = prof.fit.unwrap();
        assert!((fit.decay_rate - 0.25).abs() < 0.025, "{fit:?}");
        assert!(prof.comm.iter().all(|&c| c < 1e-8));
        assert!(prof.sym.iter().all(|s| s.value().abs() < 1e-8));
    }

    #[test]
    fn profile_is_even() {
        let p = params(1.0, 0.8);
        for x in [0.7, 2.3] {
            assert_eq!(dressing_correlator(&p, x, 1e-10).unwrap(), dressing_correlator(&p, -x, 1e-10).unwrap());
            assert_eq!(qphi_symmetric(&p, x, 1e-10).unwrap(), qphi_symmetric(&p, -x, 1e-10).unwrap());
        }
    }
}
