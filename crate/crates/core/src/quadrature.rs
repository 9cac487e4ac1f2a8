//! Adaptive Gauss-Kronrod integration over finite and semi-infinite ranges.
//!
//! The engine is a global-error adaptive bisection on 21-point Kronrod
//! panels (QUADPACK's `qk21` rule and error rescaling). Two features matter
//! for the spectral integrals in this crate:
//!
//! * **Resonance hints.** A [`Peak`] seeds break points at
//!   `center ± width * 10^k`, so Lorentzians far narrower than the range are
//!   found without relying on blind bisection.
//! * **Semi-infinite ranges.** Non-oscillatory tails are mapped onto `[0, 1)`
//!   through `omega = lo + t / (1 - t)`. Oscillatory integrands
//!   (`f(omega) e^{i k omega}`, `k != 0`) are integrated panel-per-period up
//!   to a point `W` and the remaining tail is summed by repeated integration
//!   by parts.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use num_complex::Complex;
use serde::Serialize;
use thiserror::Error;

use crate::scalar::Real;

#[allow(clippy::excessive_precision)]
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_208_643_474_262,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

// 10-point Gauss weights for the odd-indexed Kronrod abscissae.
#[allow(clippy::excessive_precision)]
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

/// A known resonance of the integrand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Peak<R> {
    pub center: R,
    /// Half-width; must be positive to be used.
    pub width: R,
}

impl<R: Real> Peak<R> {
    pub fn new(center: R, width: R) -> Self {
        Self { center, width }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadOptions<R> {
    pub abs_tol: R,
    pub rel_tol: R,
    pub max_panels: usize,
    pub hints: Vec<Peak<R>>,
}

impl<R: Real> QuadOptions<R> {
    /// Absolute tolerance `tol`, no relative tolerance, no hints.
    pub fn new(tol: R) -> Self {
        Self { abs_tol: tol, rel_tol: R::zero(), max_panels: 20_000, hints: Vec::new() }
    }

    pub fn rel(mut self, rel_tol: R) -> Self {
        self.rel_tol = rel_tol;
        self
    }

    pub fn hint(mut self, peak: Peak<R>) -> Self {
        self.hints.push(peak);
        self
    }

    pub fn hints(mut self, peaks: impl IntoIterator<Item = Peak<R>>) -> Self {
        self.hints.extend(peaks);
        self
    }

    pub fn max_panels(mut self, n: usize) -> Self {
        self.max_panels = n;
        self
    }

    fn target(&self, value: R) -> R {
        self.abs_tol.max(self.rel_tol * value.abs()).max(R::tol_floor() * value.abs())
    }
}

/// Value of an integral with its error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadResult<V, R> {
    pub value: V,
    pub err_estimate: R,
    pub panels: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadError {
    #[error("no convergence after {panels} panels: value {value}, error estimate {err} > tolerance {tol}")]
    NoConvergence { value: f64, err: f64, tol: f64, panels: usize },
    #[error("integrand does not decay fast enough for an infinite range (|f| * omega ~ {ratio} between probes)")]
    NonIntegrableTail { ratio: f64 },
    #[error("integrand is not finite at omega = {at}")]
    NonFinite { at: f64 },
    #[error("invalid interval [{lo}, {hi}]")]
    InvalidInterval { lo: f64, hi: f64 },
}

/// Integrates a real function over `[lo, hi]`; `hi` may be `+inf`.
pub fn integrate<R, F>(f: F, lo: R, hi: R, opts: &QuadOptions<R>) -> Result<QuadResult<R, R>, QuadError>
where
    R: Real,
    F: Fn(R) -> R,
{
    let r = integrate_phase(|w| Complex::new(f(w), R::zero()), R::zero(), lo, hi, opts)?;
    Ok(QuadResult { value: r.value.re, err_estimate: r.err_estimate, panels: r.panels, converged: r.converged })
}

/// Integrates `f(omega) * exp(i k omega)` over `[lo, hi]`; `hi` may be `+inf`.
///
/// For `k = 0` this is the same code path as [`integrate`]. For finite ranges
/// the interval is pre-split into panels one period (`2 pi / |k|`) long, so
/// the work grows linearly in `|k| (hi - lo)`.
pub fn integrate_phase<R, F>(
    f: F,
    k: R,
    lo: R,
    hi: R,
    opts: &QuadOptions<R>,
) -> Result<QuadResult<Complex<R>, R>, QuadError>
where
    R: Real,
    F: Fn(R) -> Complex<R>,
{
    if !(lo.is_finite() && (hi > lo) && !hi.is_nan()) || (hi.is_infinite() && hi < R::zero()) {
        return Err(QuadError::InvalidInterval { lo: lo.to_f64_lossy(), hi: hi.to_f64_lossy() });
    }
    let phased = |w: R| {
        let v = f(w);
        if k == R::zero() {
            v
        } else {
            v * Complex::from_polar(R::one(), k * w)
        }
    };

    if hi.is_finite() {
        let mut pts = hint_breaks(lo, hi, &opts.hints, |w| w, |_, width| width);
        pts.extend(period_breaks(lo, hi, k));
        return adapt(&phased, lo, hi, pts, opts);
    }

    check_tail(&f, lo)?;

    if k == R::zero() {
        // omega = lo + t / (1 - t)
        let one = R::one();
        let g = |t: R| {
            let s = one - t;
            let w = lo + t / s;
            phased(w) / (s * s)
        };
        let to_t = |w: R| {
            let d = w - lo;
            d / (one + d)
        };
        let pts = hint_breaks(lo, R::infinity(), &opts.hints, to_t, |c, width| {
            let d = one + (c - lo);
            width / (d * d)
        });
        return adapt(&g, R::zero(), one, pts, opts);
    }

    oscillatory_semi_infinite(&f, &phased, k, lo, opts)
}

/// `integrate_phase` over the whole real line, folded onto `[0, inf)`.
pub fn integrate_phase_full_line<R, F>(
    f: F,
    k: R,
    opts: &QuadOptions<R>,
) -> Result<QuadResult<Complex<R>, R>, QuadError>
where
    R: Real,
    F: Fn(R) -> Complex<R>,
{
    let mirrored = QuadOptions {
        hints: opts.hints.iter().flat_map(|p| [*p, Peak::new(-p.center, p.width)]).collect(),
        ..opts.clone()
    };
    let pos = integrate_phase(&f, k, R::zero(), R::infinity(), opts)?;
    let neg = integrate_phase(|w| f(-w), -k, R::zero(), R::infinity(), &mirrored)?;
    Ok(QuadResult {
        value: pos.value + neg.value,
        err_estimate: pos.err_estimate + neg.err_estimate,
        panels: pos.panels + neg.panels,
        converged: pos.converged && neg.converged,
    })
}

fn check_tail<R: Real, F: Fn(R) -> Complex<R>>(f: &F, lo: R) -> Result<(), QuadError> {
    let w1 = lo.abs().max(R::one()) * R::lit(1e4);
    let w2 = w1 * R::lit(1e2);
    let a = f(w1).norm() * w1;
    let b = f(w2).norm() * w2;
    if !(a.is_finite() && b.is_finite()) {
        return Err(QuadError::NonFinite { at: w2.to_f64_lossy() });
    }
    if a > R::zero() && b > R::lit(0.5) * a {
        return Err(QuadError::NonIntegrableTail { ratio: (b / a).to_f64_lossy() });
    }
    Ok(())
}

fn oscillatory_semi_infinite<R, F, G>(
    f: &F,
    phased: &G,
    k: R,
    lo: R,
    opts: &QuadOptions<R>,
) -> Result<QuadResult<Complex<R>, R>, QuadError>
where
    R: Real,
    F: Fn(R) -> Complex<R>,
    G: Fn(R) -> Complex<R>,
{
    let ak = k.abs();
    let two_pi = R::lit(2.0) * R::PI();
    let tol = opts.abs_tol.max(R::tol_floor());

    let mut w = lo + R::lit(8.0) * two_pi / ak;
    for p in &opts.hints {
        w = w.max(p.center + R::lit(50.0) * p.width.abs());
    }
    w = w.max(lo + R::one()) * R::lit(2.0);

    // Tail after integration by parts: e^{ikW} [ (i/k) h - h'/k^2 - (i/k^3) h'' ] with
    // remainder bounded by |h''(W)| / |k|^3.
    let panel_cap = R::lit(opts.max_panels as f64 / 2.0);
    let (tail, tail_err) = loop {
        let d = w * R::lit(1e-3);
        let h0 = f(w);
        let hp = f(w + d);
        let hm = f(w - d);
        let h1 = (hp - hm) / (R::lit(2.0) * d);
        let h2 = (hp + hm - h0 * R::lit(2.0)) / (d * d);
        let i = Complex::new(R::zero(), R::one());
        let k2 = k * k;
        let series = h0 * i / k - h1 / k2 - h2 * i / (k2 * k);
        let tail = series * Complex::from_polar(R::one(), k * w);
        let bound = h2.norm() / (k2 * ak) + h1.norm() * R::lit(1e-5) / k2;
        let panels_needed = (w - lo) * ak / two_pi;
        if bound <= R::lit(0.05) * tol || panels_needed * R::lit(2.0) > panel_cap {
            break (tail, bound);
        }
        w = w * R::lit(2.0);
    };
    if !(tail.re.is_finite() && tail.im.is_finite()) {
        return Err(QuadError::NonFinite { at: w.to_f64_lossy() });
    }

    let mut pts = hint_breaks(lo, w, &opts.hints, |x| x, |_, width| width);
    pts.extend(period_breaks(lo, w, k));
    let sub_opts = QuadOptions { abs_tol: (tol - tail_err).max(R::lit(0.5) * tol), ..opts.clone() };
    let body = adapt(phased, lo, w, pts, &sub_opts)?;
    let err = body.err_estimate + tail_err;
    let converged = body.converged && err <= opts.target(body.value.re.abs().max(body.value.im.abs()));
    if !converged {
        return Err(QuadError::NoConvergence {
            value: body.value.norm().to_f64_lossy(),
            err: err.to_f64_lossy(),
            tol: tol.to_f64_lossy(),
            panels: body.panels,
        });
    }
    Ok(QuadResult { value: body.value + tail, err_estimate: err, panels: body.panels, converged })
}

fn period_breaks<R: Real>(lo: R, hi: R, k: R) -> Vec<R> {
    if k == R::zero() {
        return Vec::new();
    }
    let period = R::lit(2.0) * R::PI() / k.abs();
    let n = ((hi - lo) / period).floor().to_usize().unwrap_or(0).min(1_000_000);
    (1..=n).map(|j| lo + period * R::lit(j as f64)).collect()
}

/// Break points around each hint, mapped into the integration variable.
fn hint_breaks<R, M, W>(lo: R, hi: R, hints: &[Peak<R>], map: M, map_width: W) -> Vec<R>
where
    R: Real,
    M: Fn(R) -> R,
    W: Fn(R, R) -> R,
{
    let mut pts = Vec::new();
    let (tlo, thi) = (map(lo), if hi.is_finite() { map(hi) } else { R::one() });
    for p in hints {
        if !(p.width > R::zero()) || !(p.center > lo) || !(p.center < hi) {
            continue;
        }
        let c = map(p.center);
        let w = map_width(p.center, p.width);
        pts.push(c);
        let mut step = w;
        for _ in 0..24 {
            let (a, b) = (c - step, c + step);
            let mut inside = false;
            if a > tlo {
                pts.push(a);
                inside = true;
            }
            if b < thi {
                pts.push(b);
                inside = true;
            }
            if !inside {
                break;
            }
            step = step * R::lit(10.0);
        }
    }
    pts
}

struct Panel<R> {
    a: R,
    b: R,
    value: Complex<R>,
    err: R,
}

impl<R: Real> PartialEq for Panel<R> {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl<R: Real> Eq for Panel<R> {}
impl<R: Real> PartialOrd for Panel<R> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<R: Real> Ord for Panel<R> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.partial_cmp(&other.err).unwrap_or(Ordering::Equal)
    }
}

fn kronrod<R, G>(g: &G, a: R, b: R) -> Result<Panel<R>, QuadError>
where
    R: Real,
    G: Fn(R) -> Complex<R>,
{
    let half = (b - a) / R::lit(2.0);
    let center = a + half;
    let mut fv = [Complex::new(R::zero(), R::zero()); 21];
    for (j, &x) in XGK.iter().enumerate() {
        let dx = half * R::lit(x);
        if j == 10 {
            fv[20] = g(center);
        } else {
            fv[2 * j] = g(center - dx);
            fv[2 * j + 1] = g(center + dx);
        }
    }
    for (j, v) in fv.iter().enumerate() {
        if !(v.re.is_finite() && v.im.is_finite()) {
            let x = if j == 20 {
                center
            } else {
                let dx = half * R::lit(XGK[j / 2]);
                if j % 2 == 0 { center - dx } else { center + dx }
            };
            return Err(QuadError::NonFinite { at: x.to_f64_lossy() });
        }
    }

    let mut res_k = fv[20] * R::lit(WGK[10]);
    let mut res_g = Complex::new(R::zero(), R::zero());
    let mut res_abs = fv[20].norm() * R::lit(WGK[10]);
    for j in 0..10 {
        let s = fv[2 * j] + fv[2 * j + 1];
        res_k = res_k + s * R::lit(WGK[j]);
        res_abs = res_abs + (fv[2 * j].norm() + fv[2 * j + 1].norm()) * R::lit(WGK[j]);
        if j % 2 == 1 {
            res_g = res_g + s * R::lit(WG[j / 2]);
        }
    }
    let mean = res_k * R::lit(0.5);
    let mut res_asc = (fv[20] - mean).norm() * R::lit(WGK[10]);
    for j in 0..10 {
        res_asc = res_asc + ((fv[2 * j] - mean).norm() + (fv[2 * j + 1] - mean).norm()) * R::lit(WGK[j]);
    }
    let scale = half.abs();
    let value = res_k * half;
    let res_abs = res_abs * scale;
    let res_asc = res_asc * scale;
    let mut err = ((res_k - res_g) * half).norm();
    if res_asc != R::zero() && err != R::zero() {
        let s = (R::lit(200.0) * err / res_asc).powf(R::lit(1.5));
        err = if s < R::one() { res_asc * s } else { res_asc };
    }
    let floor = R::lit(50.0) * R::epsilon() * res_abs;
    if res_abs > R::min_positive_value() / (R::lit(50.0) * R::epsilon()) && floor > err {
        err = floor;
    }
    Ok(Panel { a, b, value, err })
}

fn adapt<R, G>(
    g: &G,
    lo: R,
    hi: R,
    mut breaks: Vec<R>,
    opts: &QuadOptions<R>,
) -> Result<QuadResult<Complex<R>, R>, QuadError>
where
    R: Real,
    G: Fn(R) -> Complex<R>,
{
    breaks.retain(|x| *x > lo && *x < hi && x.is_finite());
    breaks.push(lo);
    breaks.push(hi);
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    breaks.dedup_by(|a, b| (*a - *b).abs() <= R::epsilon() * a.abs().max(b.abs()));

    let mut heap = BinaryHeap::new();
    let mut done_value = Complex::new(R::zero(), R::zero());
    let mut done_err = R::zero();
    for w in breaks.windows(2) {
        heap.push(kronrod(g, w[0], w[1])?);
    }
    let mut panels = heap.len();
    let sums = |heap: &BinaryHeap<Panel<R>>| {
        heap.iter().fold((Complex::new(R::zero(), R::zero()), R::zero()), |(v, e), p| (v + p.value, e + p.err))
    };

    let (mut value, mut err) = sums(&heap);
    value = value + done_value;
    err = err + done_err;
    let mut iter = 0usize;
    loop {
        let target = opts.target(value.norm());
        if err <= target {
            return Ok(QuadResult { value, err_estimate: err, panels, converged: true });
        }
        if panels >= opts.max_panels || heap.is_empty() {
            return Err(QuadError::NoConvergence {
                value: value.norm().to_f64_lossy(),
                err: err.to_f64_lossy(),
                tol: target.to_f64_lossy(),
                panels,
            });
        }
        let worst = heap.pop().expect("non-empty heap");
        let mid = worst.a + (worst.b - worst.a) / R::lit(2.0);
        if !(mid > worst.a && mid < worst.b) || (worst.b - worst.a) <= R::lit(100.0) * R::epsilon() * worst.a.abs().max(worst.b.abs()) {
            // cannot be refined further in this precision
            done_value = done_value + worst.value;
            done_err = done_err + worst.err;
            continue;
        }
        let left = kronrod(g, worst.a, mid)?;
        let right = kronrod(g, mid, worst.b)?;
        value = value - worst.value + left.value + right.value;
        err = err - worst.err + left.err + right.err;
        heap.push(left);
        heap.push(right);
        panels += 1;
        iter += 1;
        if iter.is_multiple_of(64) {
            // resum to keep the running totals from drifting
            let (v, e) = sums(&heap);
            value = v + done_value;
            err = e + done_err;
        }
    }
}
