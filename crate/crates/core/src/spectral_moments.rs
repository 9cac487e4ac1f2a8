//! Stationary spectral densities and equal-time second moments of the
//! damped oscillator.
//!
//! With the incoming field in its vacuum, the oscillator obeys
//! `q'' + gamma q' + omega^2 q = eps * phi_in'(t, 0)` with `gamma = eps^2 / 2`,
//! and its symmetrised position spectrum on `omega >= 0` is
//!
//! ```text
//! S_qq(w) = (eps^2 / 2 pi) * w / ((w^2 - omega^2)^2 + (gamma w)^2)
//! ```
//!
//! normalised so that `<q^2> = int_0^inf S_qq`. The momentum spectrum is
//! `w^2 S_qq`, whose `1/w` tail makes `<p^2>` grow like
//! `(eps^2 / 2 pi) ln(cutoff)`.
//!
//! The closed forms below come in two flavours: the expressions as they are
//! commonly printed for this model ([`ClosedFormReport::qq_printed`] and
//! friends), kept for comparison only, and exact evaluations of the
//! rational integrals. Quadrature is always the reference.

use num_complex::Complex;
use serde::Serialize;
use thiserror::Error;

use crate::model::{ModelParams, Regime};
use crate::quadrature::{self, Peak, QuadError, QuadOptions, QuadResult};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectralError {
    #[error("quadrature failed for {what}: {source}")]
    Quadrature {
        what: &'static str,
        #[source]
        source: QuadError,
    },
    #[error("closed form undefined in the critical regime (eps^2 = 4 omega)")]
    ClosedFormUndefined,
    #[error("{0}")]
    Invalid(String),
}

pub(crate) fn quad_err(what: &'static str) -> impl FnOnce(QuadError) -> SpectralError {
    move |source| SpectralError::Quadrature { what, source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SpectrumKind {
    Sqq,
    Spp,
    Szz,
}

/// Large-frequency behaviour of a density.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TailClass {
    Integrable,
    LogDivergent,
}

/// A non-negative density `w -> S(w)` on `w >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectralDensity<R> {
    pub kind: SpectrumKind,
    pub params: ModelParams<R>,
    pub tail_class: TailClass,
}

impl<R: Real> SpectralDensity<R> {
    pub fn new(kind: SpectrumKind, params: ModelParams<R>) -> Self {
        let tail_class = match kind {
            SpectrumKind::Spp => TailClass::LogDivergent,
            SpectrumKind::Sqq | SpectrumKind::Szz => TailClass::Integrable,
        };
        Self { kind, params, tail_class }
    }

    pub fn eval(&self, w: R) -> R {
        match self.kind {
            SpectrumKind::Sqq => s_qq(w, &self.params),
            SpectrumKind::Spp => s_pp(w, &self.params),
            SpectrumKind::Szz => crate::thermometer::s_zz(w, &self.params),
        }
    }
}

/// One-mode covariance: `qq = <q^2>`, `qp = <qp + pq> / 2`, `pp = <p^2>`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Covariance2<R> {
    pub qq: R,
    pub qp: R,
    pub pp: R,
}

impl<R: Real> Covariance2<R> {
    pub fn new(qq: R, qp: R, pp: R) -> Self {
        Self { qq, qp, pp }
    }

    /// Ground state of an undamped oscillator of frequency `omega`.
    pub fn ground_state(omega: R) -> Self {
        let half = R::lit(0.5);
        Self { qq: half / omega, qp: R::zero(), pp: half * omega }
    }

    pub fn determinant(&self) -> R {
        self.qq * self.pp - self.qp * self.qp
    }
}

/// `|D(w)|^2 = (w^2 - omega^2)^2 + (gamma w)^2`, with the difference of
/// squares factored to keep precision near resonance.
pub(crate) fn response_denominator<R: Real>(w: R, p: &ModelParams<R>) -> R {
    let om = p.omega();
    let d = (w - om) * (w + om);
    let g = p.gamma() * w;
    d * d + g * g
}

/// Inverse response `D(w) = omega^2 - w^2 + i gamma w`.
pub(crate) fn inverse_response<R: Real>(w: R, p: &ModelParams<R>) -> Complex<R> {
    let om = p.omega();
    Complex::new((om - w) * (om + w), p.gamma() * w)
}

pub fn s_qq<R: Real>(w: R, p: &ModelParams<R>) -> R {
    let eps2 = p.eps() * p.eps();
    if eps2 == R::zero() || w == R::zero() {
        return R::zero();
    }
    eps2 / (R::lit(2.0) * R::PI()) * w / response_denominator(w, p)
}

pub fn s_pp<R: Real>(w: R, p: &ModelParams<R>) -> R {
    w * w * s_qq(w, p)
}

/// Break points around the oscillator's resonance structure.
pub(crate) fn oscillator_hints<R: Real>(p: &ModelParams<R>) -> Vec<Peak<R>> {
    let om = p.omega();
    let g = p.gamma();
    let mut hints = vec![Peak::new(om, (g / R::lit(2.0)).max(om * R::lit(1e-12)))];
    if p.classify_regime() != Regime::Underdamped {
        // slow relaxation mode of the overdamped oscillator
        let slow = om * om / g;
        hints.push(Peak::new(slow, slow));
        hints.push(Peak::new(g, g));
    }
    hints
}

fn options<R: Real>(p: &ModelParams<R>, tol: R) -> QuadOptions<R> {
    QuadOptions::new(tol).hints(oscillator_hints(p)).max_panels(50_000)
}

fn exact<R: Real>(value: R) -> QuadResult<R, R> {
    QuadResult { value, err_estimate: R::zero(), panels: 0, converged: true }
}

/// `<q^2> = int_0^inf S_qq`. At `eps = 0` the density collapses onto a
/// delta function and the decoupled ground-state value `1/(2 omega)` is
/// returned.
pub fn moment_qq<R: Real>(p: &ModelParams<R>, tol: R) -> Result<QuadResult<R, R>, SpectralError> {
    if p.eps() == R::zero() {
        return Ok(exact(R::lit(0.5) / p.omega()));
    }
    quadrature::integrate(|w| s_qq(w, p), R::zero(), R::infinity(), &options(p, tol))
        .map_err(quad_err("<q^2>"))
}

/// `<q^2>` with the integrand numerator `w^2` in place of `w`, as the
/// moment integral is sometimes printed. Dimensionally off by a frequency;
/// kept for comparison.
pub fn moment_qq_printed_integrand<R: Real>(p: &ModelParams<R>, tol: R) -> Result<QuadResult<R, R>, SpectralError> {
    if p.eps() == R::zero() {
        return Ok(exact(R::lit(0.5)));
    }
    quadrature::integrate(|w| w * s_qq(w, p), R::zero(), R::infinity(), &options(p, tol))
        .map_err(quad_err("<q^2> (w^2 numerator)"))
}

/// `<qp + pq> / 2`, which vanishes because the two-time correlator is even.
pub fn moment_qp<R: Real>(_p: &ModelParams<R>) -> R {
    R::zero()
}

/// Numerically integrates the odd frequency-domain integrand of
/// `<qp + pq>` over `[-cutoff, cutoff]`; the result should be zero.
pub fn qp_antisymmetry_residual<R: Real>(p: &ModelParams<R>, tol: R) -> Result<QuadResult<R, R>, SpectralError> {
    if p.eps() == R::zero() {
        return Ok(exact(R::zero()));
    }
    let cut = p.cutoff();
    let hints = oscillator_hints(p).into_iter().flat_map(|h| [h, Peak::new(-h.center, h.width)]);
    let opts = QuadOptions::new(tol).hints(hints).max_panels(50_000);
    quadrature::integrate(|w| w * s_qq(w.abs(), p), -cut, cut, &opts).map_err(quad_err("<qp+pq>"))
}

/// `<p^2> = int_0^cutoff w^2 S_qq`, logarithmically divergent in the cutoff.
pub fn moment_pp<R: Real>(p: &ModelParams<R>, tol: R) -> Result<QuadResult<R, R>, SpectralError> {
    if p.eps() == R::zero() {
        return Ok(exact(R::lit(0.5) * p.omega()));
    }
    quadrature::integrate(|w| s_pp(w, p), R::zero(), p.cutoff(), &options(p, tol)).map_err(quad_err("<p^2>"))
}

/// Symmetrised two-time correlator `<q(t+tau) q(t) + q(t) q(t+tau)>`.
pub fn autocorrelation_q<R: Real>(p: &ModelParams<R>, tau: R, tol: R) -> Result<QuadResult<R, R>, SpectralError> {
    let k = tau.abs();
    if p.eps() == R::zero() {
        return Ok(exact((p.omega() * k).cos() / p.omega()));
    }
    let two = R::lit(2.0);
    let r = quadrature::integrate_phase(
        |w| Complex::new(s_qq(w, p), R::zero()),
        k,
        R::zero(),
        R::infinity(),
        &options(p, tol / two),
    )
    .map_err(quad_err("autocorrelation"))?;
    Ok(QuadResult { value: two * r.value.re, err_estimate: two * r.err_estimate, panels: r.panels, converged: r.converged })
}

/// `(qq, 0, pp)` assembled from quadrature.
pub fn covariance<R: Real>(p: &ModelParams<R>, tol: R) -> Result<Covariance2<R>, SpectralError> {
    let qq = moment_qq(p, tol)?;
    let pp = moment_pp(p, tol)?;
    Ok(Covariance2::new(qq.value, moment_qp(p), pp.value))
}

/// Least-squares line through `(ln cutoff, <p^2>(cutoff))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogFit<R> {
    pub slope: R,
    pub intercept: R,
    pub r_squared: R,
}

pub fn fit_line<R: Real>(xs: &[R], ys: &[R]) -> LogFit<R> {
    let n = R::lit(xs.len() as f64);
    let mx = xs.iter().fold(R::zero(), |a, &x| a + x) / n;
    let my = ys.iter().fold(R::zero(), |a, &y| a + y) / n;
    let (mut sxy, mut sxx, mut syy) = (R::zero(), R::zero(), R::zero());
    for (&x, &y) in xs.iter().zip(ys) {
        sxy = sxy + (x - mx) * (y - my);
        sxx = sxx + (x - mx) * (x - mx);
        syy = syy + (y - my) * (y - my);
    }
    let slope = sxy / sxx;
    let r_squared = if syy == R::zero() { R::one() } else { sxy * sxy / (sxx * syy) };
    LogFit { slope, intercept: my - slope * mx, r_squared }
}

/// Measures the logarithmic growth coefficient of `<p^2>` across cutoffs.
pub fn pp_log_fit<R: Real>(p: &ModelParams<R>, cutoffs: &[R], tol: R) -> Result<LogFit<R>, SpectralError> {
    if cutoffs.len() < 2 {
        return Err(SpectralError::Invalid("need at least two cutoffs".into()));
    }
    let mut xs = Vec::with_capacity(cutoffs.len());
    let mut ys = Vec::with_capacity(cutoffs.len());
    for &c in cutoffs {
        let pc = p.with_cutoff(c).map_err(|e| SpectralError::Invalid(e.to_string()))?;
        xs.push(c.ln());
        ys.push(moment_pp(&pc, tol)?.value);
    }
    Ok(fit_line(&xs, &ys))
}

/// `(eps^2 / 2 pi)`: coefficient of `ln(cutoff)` in `<p^2>`.
pub fn pp_log_coefficient<R: Real>(p: &ModelParams<R>) -> R {
    p.eps() * p.eps() / (R::lit(2.0) * R::PI())
}

/// The same coefficient as it is printed for this model, `2 eps^2 / pi`.
pub fn pp_log_coefficient_printed<R: Real>(p: &ModelParams<R>) -> R {
    R::lit(2.0) * p.eps() * p.eps() / R::PI()
}

/// Exact `<q^2>` from the rational integral
/// `(eps^2 / 4 pi) int_0^inf dy / (y^2 - 2 a y + omega^4)` with
/// `a = omega^2 - gamma^2 / 2`.
pub fn qq_closed_form<R: Real>(p: &ModelParams<R>) -> Result<R, SpectralError> {
    let om = p.omega();
    let eps2 = p.eps() * p.eps();
    if eps2 == R::zero() {
        return Ok(R::lit(0.5) / om);
    }
    let g = p.gamma();
    let a = om * om - g * g / R::lit(2.0);
    let pref = eps2 / (R::lit(4.0) * R::PI());
    match p.classify_regime() {
        Regime::Critical => Err(SpectralError::ClosedFormUndefined),
        Regime::Underdamped => {
            let b = g * (om * om - g * g / R::lit(4.0)).sqrt();
            Ok(pref / b * (R::FRAC_PI_2() + (a / b).atan()))
        }
        Regime::Overdamped => {
            let c = g * (g * g / R::lit(4.0) - om * om).sqrt();
            let aa = a.abs();
            Ok(pref / (R::lit(2.0) * c) * ((aa + c) / (aa - c)).ln())
        }
    }
}

/// Exact `<p^2>` at the configured sharp cutoff.
pub fn pp_closed_form<R: Real>(p: &ModelParams<R>) -> Result<R, SpectralError> {
    let om = p.omega();
    let eps2 = p.eps() * p.eps();
    if eps2 == R::zero() {
        return Ok(R::lit(0.5) * om);
    }
    let g = p.gamma();
    let two = R::lit(2.0);
    let a = om * om - g * g / two;
    let y = p.cutoff() * p.cutoff();
    let pref = eps2 / (R::lit(4.0) * R::PI());
    let om4 = om * om * om * om;
    // int_0^Y y dy / ((y - a)^2 + s) = 1/2 ln(((Y-a)^2 + s) / omega^4) + a int_0^Y dy / (...)
    let log_part = (((y - a) * (y - a) + (om4 - a * a)) / om4).ln() / two;
    let lin = match p.classify_regime() {
        Regime::Critical => return Err(SpectralError::ClosedFormUndefined),
        Regime::Underdamped => {
            let b = g * (om * om - g * g / R::lit(4.0)).sqrt();
            (((y - a) / b).atan() + (a / b).atan()) / b
        }
        Regime::Overdamped => {
            let c = g * (g * g / R::lit(4.0) - om * om).sqrt();
            let r1 = a - c;
            let r2 = a + c;
            (((y - r2) / (y - r1)).ln() - (r2 / r1).ln()) / (two * c)
        }
    };
    Ok(pref * (log_part + a * lin))
}

/// Side-by-side evaluation of printed closed forms, exact closed forms and
/// quadrature. Printed expressions that evaluate to NaN are reported as
/// `None`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClosedFormReport<R> {
    pub regime: Regime,
    /// Small-coupling statement `<q^2> = 1/(2 omega)`.
    pub qq_small_eps_printed: R,
    /// Regime-specific printed closed form for `<q^2>`.
    pub qq_printed: Option<R>,
    pub qq_rederived: R,
    pub qq_quadrature: QuadResult<R, R>,
    /// `(2 omega^2 - eps^4/4) <q^2>_printed + (2 eps^2 / pi) ln(cutoff / omega)`.
    pub pp_printed: Option<R>,
    /// The printed `<p^2>` structure evaluated with the quadrature `<q^2>`.
    pub pp_printed_with_quadrature_qq: R,
    /// `(omega^2 - eps^4/8) <q^2> + (eps^2 / 2 pi) ln(cutoff / omega)`, large-cutoff form.
    pub pp_rederived: R,
    /// Exact sharp-cutoff value.
    pub pp_exact: R,
    pub pp_quadrature: QuadResult<R, R>,
}

fn finite<R: Real>(x: R) -> Option<R> {
    x.is_finite().then_some(x)
}

/// Printed underdamped form:
/// `(eps^2/2pi) / sqrt(eps^4 omega^2 - eps^8/16) * [2 pi - 2 atan(2 eps^2 sqrt(16 omega^2 - eps^4) / (8 omega^2 - eps^4))]`.
pub fn qq_printed_underdamped<R: Real>(p: &ModelParams<R>) -> Option<R> {
    let om = p.omega();
    let e2 = p.eps() * p.eps();
    let e4 = e2 * e2;
    let two = R::lit(2.0);
    let pref = e2 / (two * R::PI()) / (e4 * om * om - e4 * e4 / R::lit(16.0)).sqrt();
    let arg = two * e2 * (R::lit(16.0) * om * om - e4).sqrt() / (R::lit(8.0) * om * om - e4);
    finite(pref * (two * R::PI() - two * arg.atan()))
}

/// Printed overdamped form:
/// `1 / sqrt(eps^2/16 - omega^2) * ln((eps^4 - 16 omega^2 + 2 eps^2 sqrt(eps^4 - 16 omega^2)) / (eps^4 - 16 omega^2 - 2 eps^2 sqrt(eps^4 - 16 omega^2)))`.
pub fn qq_printed_overdamped<R: Real>(p: &ModelParams<R>) -> Option<R> {
    let om = p.omega();
    let e2 = p.eps() * p.eps();
    let e4 = e2 * e2;
    let d = e4 - R::lit(16.0) * om * om;
    let s = d.sqrt();
    let two = R::lit(2.0);
    finite((((d + two * e2 * s) / (d - two * e2 * s)).ln()) / (e2 / R::lit(16.0) - om * om).sqrt())
}

pub fn closed_forms_report<R: Real>(p: &ModelParams<R>, tol: R) -> Result<ClosedFormReport<R>, SpectralError> {
    let regime = p.classify_regime();
    if regime == Regime::Critical {
        return Err(SpectralError::ClosedFormUndefined);
    }
    let om = p.omega();
    let e2 = p.eps() * p.eps();
    let e4 = e2 * e2;
    let qq_quadrature = moment_qq(p, tol)?;
    let pp_quadrature = moment_pp(p, tol)?;
    let qq_rederived = qq_closed_form(p)?;
    let pp_exact = pp_closed_form(p)?;
    let qq_printed = if e2 == R::zero() {
        None
    } else {
        match regime {
            Regime::Underdamped => qq_printed_underdamped(p),
            _ => qq_printed_overdamped(p),
        }
    };
    let log = (p.cutoff() / om).ln();
    let printed_pp = |qq: R| (R::lit(2.0) * om * om - e4 / R::lit(4.0)) * qq + pp_log_coefficient_printed(p) * log;
    Ok(ClosedFormReport {
        regime,
        qq_small_eps_printed: R::lit(0.5) / om,
        qq_printed,
        qq_rederived,
        qq_quadrature,
        pp_printed: qq_printed.map(printed_pp).and_then(finite),
        pp_printed_with_quadrature_qq: printed_pp(qq_quadrature.value),
        pp_rederived: (om * om - e4 / R::lit(8.0)) * qq_rederived + pp_log_coefficient(p) * log,
        pp_exact,
        pp_quadrature,
    })
}
