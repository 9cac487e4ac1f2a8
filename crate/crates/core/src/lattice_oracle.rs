//! Exact Gaussian evolution of the closed system (oscillator, thermometer
//! and a Dirichlet lattice field) from the decoupled vacuum.
//!
//! The lattice field has sites `x_j = (j - c) dx` around the midpoint `c`,
//! canonical pairs `(phi_j, P_j)` and Hamiltonian
//!
//! ```text
//! H = p^2/2 + omega^2 q^2/2 + p_z^2/2 + lambda^2 z^2/2 - mu q z
//!   + sum_j (P_j - eps q g_j)^2 / (2 dx) + sum_j (phi_{j+1} - phi_j)^2 / (2 dx)
//! ```
//!
//! where `g` is the coupling profile (`sum g = 1`): a single site by default,
//! or a normalised Gaussian. This is the lattice form of the Lagrangian
//! coupling `eps q phi'(t, 0)`, for which `P_c / dx = phi' + eps q / dx`.
//!
//! Everything is linear, so the state stays Gaussian with covariance
//! `V(t) = e^{At} V0 e^{A^T t}`. A reduced covariance needs only the adjoint
//! vectors `w(t) = e^{A^T t} u` of the observed linear forms `u`, each
//! propagated by classic RK4; the vacuum `V0 = C C^T` is applied through a
//! discrete sine transform.

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::{num_complex::Complex64, Fft, FftPlanner};
use serde::Serialize;
use thiserror::Error;

use crate::correlations::{self, ExpFit, FitOptions};
use crate::model::ModelParams;
use crate::spectral_moments::{self, Covariance2};
use crate::thermometer;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LatticeError {
    #[error("invalid lattice configuration: {}", .0.join("; "))]
    ConfigInvalid(Vec<String>),
    #[error("integration unstable: relative energy drift {drift:.3e} of observable {observable} exceeds {tol:.1e}")]
    StepUnstable { observable: usize, drift: f64, tol: f64 },
    #[error("no plateau in {quantity}: relative spread {spread:.3e} over the window exceeds {tol:.1e}; {hint}")]
    NoPlateau { quantity: &'static str, spread: f64, tol: f64, hint: String },
    #[error("reference computation failed: {0}")]
    Reference(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatticeConfig {
    pub n_sites: usize,
    pub dx: f64,
    /// Gaussian coupling width; `None` couples to the single midpoint site.
    pub smear_sigma: Option<f64>,
    pub dt: f64,
    pub t_final: f64,
    pub window: (f64, f64),
    /// Spacing of the stored samples.
    pub sample_dt: f64,
    /// Largest `|x|` of the reported correlation profile.
    pub profile_extent: f64,
    /// Initial symplectic invariant of the thermometer (1/2 is its ground state).
    pub thermometer_nu0: f64,
    /// Tolerated relative drift of the conserved energy of each adjoint vector.
    pub energy_tol: f64,
    /// Tolerated relative spread of window samples.
    pub plateau_tol: f64,
    /// Flip the sign of the thermometer's potential (unbounded below).
    pub inverted_thermometer: bool,
}

impl Default for LatticeConfig {
    fn default() -> Self {
        Self {
            n_sites: 4000,
            dx: 0.05,
            smear_sigma: None,
            // RK4 damps band-edge field modes as (omega dt)^6; at 0.005 the
            // UV-sensitive <p^2> plateau holds to 1e-3 over the window
            dt: 0.005,
            t_final: 60.0,
            window: (30.0, 60.0),
            sample_dt: 0.5,
            profile_extent: 20.0,
            thermometer_nu0: 0.5,
            energy_tol: 1e-2,
            plateau_tol: 0.01,
            inverted_thermometer: false,
        }
    }
}

impl LatticeConfig {
    pub fn length(&self) -> f64 {
        self.n_sites as f64 * self.dx
    }

    pub fn validate(&self, p: &ModelParams<f64>) -> Result<(), LatticeError> {
        let mut errs = Vec::new();
        let (lo, hi) = self.window;
        if self.n_sites < 3 {
            errs.push(format!("n_sites = {} must be at least 3", self.n_sites));
        }
        if !(self.dx > 0.0) {
            errs.push(format!("dx = {} must be positive", self.dx));
        }
        if !(self.dt > 0.0 && self.dt <= 0.5 * self.dx) {
            errs.push(format!("dt = {} must lie in (0, dx/2 = {}]", self.dt, 0.5 * self.dx));
        }
        if let Some(s) = self.smear_sigma {
            if !(s >= self.dx) {
                errs.push(format!("smear_sigma = {s} must be at least dx = {}", self.dx));
            }
        }
        if !(0.0 <= lo && lo < hi && hi <= self.t_final) {
            errs.push(format!("window [{lo}, {hi}] must be increasing and inside [0, t_final = {}]", self.t_final));
        }
        let half_l = self.length() / 2.0;
        if self.t_final + (hi - lo) >= half_l {
            errs.push(format!("t_final + window width = {} must stay below L/2 = {half_l}", self.t_final + hi - lo));
        }
        let eps2 = p.eps() * p.eps();
        if eps2 > 0.0 && lo <= 10.0 / eps2 {
            errs.push(format!("window start {lo} must exceed 5 * (2 / eps^2) = {}", 10.0 / eps2));
        }
        if !(self.sample_dt >= self.dt) {
            errs.push(format!("sample_dt = {} must be at least dt", self.sample_dt));
        }
        if !(self.thermometer_nu0 >= 0.5) {
            errs.push(format!("thermometer_nu0 = {} must be at least 1/2", self.thermometer_nu0));
        }
        if self.profile_extent >= half_l {
            errs.push(format!("profile_extent = {} must stay below L/2", self.profile_extent));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(LatticeError::ConfigInvalid(errs))
        }
    }
}

/// Compressed sparse rows.
#[derive(Debug, Clone)]
pub struct Csr {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl Csr {
    fn from_triplets(n: usize, mut t: Vec<(usize, usize, f64)>) -> Self {
        t.sort_by_key(|e| (e.0, e.1));
        let mut row_ptr = vec![0; n + 1];
        let mut cols = Vec::with_capacity(t.len());
        let mut vals: Vec<f64> = Vec::with_capacity(t.len());
        let mut last = None;
        for (r, c, v) in t {
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
                continue;
            }
            last = Some((r, c));
            row_ptr[r + 1] += 1;
            cols.push(c);
            vals.push(v);
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self { n, row_ptr, cols, vals }
    }

    pub fn mul(&self, x: &[f64], out: &mut [f64]) {
        let x = &x[..self.n];
        for (o, r) in out[..self.n].iter_mut().zip(self.row_ptr.windows(2)) {
            let (cols, vals) = (&self.cols[r[0]..r[1]], &self.vals[r[0]..r[1]]);
            *o = cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum();
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        (self.row_ptr[i]..self.row_ptr[i + 1]).find(|&k| self.cols[k] == j).map_or(0.0, |k| self.vals[k])
    }

    fn transpose(&self) -> Self {
        let mut t = Vec::with_capacity(self.vals.len());
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                t.push((self.cols[k], i, self.vals[k]));
            }
        }
        Self::from_triplets(self.n, t)
    }

    fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (i, self.cols[k], self.vals[k])))
    }
}

/// Phase-space layout `(q, p, z, p_z, phi_0..phi_{N-1}, P_0..P_{N-1})`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Layout {
    pub n_sites: usize,
}

impl Layout {
    pub const Q: usize = 0;
    pub const P: usize = 1;
    pub const Z: usize = 2;
    pub const PZ: usize = 3;

    pub fn dim(&self) -> usize {
        2 * self.n_sites + 4
    }
    pub fn phi(&self, j: usize) -> usize {
        4 + j
    }
    pub fn pi(&self, j: usize) -> usize {
        4 + self.n_sites + j
    }
    pub fn center(&self) -> usize {
        self.n_sites / 2
    }
    /// Conjugate partner of a coordinate index, and whether the index is a position.
    pub fn partner(&self, i: usize) -> (usize, bool) {
        match i {
            0 => (1, true),
            1 => (0, false),
            2 => (3, true),
            3 => (2, false),
            _ if i < 4 + self.n_sites => (i + self.n_sites, true),
            _ => (i - self.n_sites, false),
        }
    }
}

/// Generator `A = J H` of the Hamiltonian flow `y' = A y`.
#[derive(Debug, Clone)]
pub struct DriftMatrix {
    pub layout: Layout,
    /// Symmetric Hessian of the Hamiltonian.
    pub h: Csr,
    pub a: Csr,
    pub at: Csr,
    pub coupling_profile: Vec<f64>,
}

impl DriftMatrix {
    /// Largest `|H_ij - H_ji|`.
    pub fn hamiltonian_asymmetry(&self) -> f64 {
        self.h.entries().map(|(i, j, v)| (v - self.h.get(j, i)).abs()).fold(0.0, f64::max)
    }

    /// Largest deviation of `A` from `J H` entry by entry.
    pub fn structure_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, j, v) in self.a.entries() {
            let (k, is_pos) = self.layout.partner(i);
            let expect = if is_pos { self.h.get(k, j) } else { -self.h.get(k, j) };
            worst = worst.max((v - expect).abs());
        }
        worst
    }

    /// `J w`, which for an adjoint vector evolves forward under `A`.
    pub fn apply_j(&self, w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; w.len()];
        for (i, o) in out.iter_mut().enumerate() {
            let (k, is_pos) = self.layout.partner(i);
            *o = if is_pos { w[k] } else { -w[k] };
        }
        out
    }

    /// `v^T H v`.
    pub fn energy(&self, v: &[f64]) -> f64 {
        let mut hv = vec![0.0; v.len()];
        self.h.mul(v, &mut hv);
        v.iter().zip(&hv).map(|(a, b)| a * b).sum()
    }
}

fn coupling_profile(n: usize, dx: f64, sigma: Option<f64>) -> Vec<f64> {
    let c = n / 2;
    let mut g = vec![0.0; n];
    match sigma {
        None => g[c] = 1.0,
        Some(s) => {
            for (j, gj) in g.iter_mut().enumerate() {
                let x = (j as f64 - c as f64) * dx;
                *gj = (-x * x / (2.0 * s * s)).exp();
            }
            let total: f64 = g.iter().sum();
            g.iter_mut().for_each(|v| *v /= total);
        }
    }
    g
}

/// Frequency and coupling of the thermometer block; a dummy unit-frequency,
/// uncoupled oscillator when none is configured.
fn thermometer_block(p: &ModelParams<f64>) -> (f64, f64) {
    match p.lambda_th() {
        Some(l) => (l, p.mu()),
        None => (1.0, 0.0),
    }
}

pub fn build_drift(p: &ModelParams<f64>, cfg: &LatticeConfig) -> Result<DriftMatrix, LatticeError> {
    cfg.validate(p)?;
    Ok(build_drift_unchecked(p, cfg))
}

pub(crate) fn build_drift_unchecked(p: &ModelParams<f64>, cfg: &LatticeConfig) -> DriftMatrix {
    let n = cfg.n_sites;
    let lay = Layout { n_sites: n };
    let dx = cfg.dx;
    let eps = p.eps();
    let om = p.omega();
    let (lam, mu) = thermometer_block(p);
    let g = coupling_profile(n, dx, cfg.smear_sigma);
    let (q, pq, z, pz) = (Layout::Q, Layout::P, Layout::Z, Layout::PZ);

    let mut t = Vec::with_capacity(8 * n);
    let g2: f64 = g.iter().map(|v| v * v).sum();
    t.push((q, q, om * om + eps * eps * g2 / dx));
    t.push((pq, pq, 1.0));
    let zsign = if cfg.inverted_thermometer { -1.0 } else { 1.0 };
    t.push((z, z, zsign * lam * lam));
    t.push((pz, pz, 1.0));
    if mu != 0.0 {
        t.push((q, z, -mu));
        t.push((z, q, -mu));
    }
    for (j, &gj) in g.iter().enumerate() {
        let (f, m) = (lay.phi(j), lay.pi(j));
        t.push((m, m, 1.0 / dx));
        t.push((f, f, 2.0 / dx));
        if j + 1 < n {
            t.push((f, f + 1, -1.0 / dx));
            t.push((f + 1, f, -1.0 / dx));
        }
        if gj != 0.0 && eps != 0.0 {
            let c = -eps * gj / dx;
            t.push((q, m, c));
            t.push((m, q, c));
        }
    }
    let h = Csr::from_triplets(lay.dim(), t);
    let mut at = Vec::with_capacity(h.vals.len());
    for (i, j, v) in h.entries() {
        // x' = dH/dp and p' = -dH/dx: row i of H feeds row partner(i) of A
        let (k, i_is_pos) = lay.partner(i);
        at.push((k, j, if i_is_pos { -v } else { v }));
    }
    let a = Csr::from_triplets(lay.dim(), at);
    let at = a.transpose();
    DriftMatrix { layout: lay, h, a, at, coupling_profile: g }
}

/// Orthonormal DST-I, `S_jk = sqrt(2/(N+1)) sin(pi (j+1)(k+1) / (N+1))`;
/// `S` is symmetric and its own inverse.
#[derive(Clone)]
pub struct Dst {
    n: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Dst {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Dst").field("n", &self.n).finish()
    }
}

impl Dst {
    pub fn new(n: usize) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(2 * (n + 1));
        Self { n, fft }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n;
        let m = 2 * (n + 1);
        let mut buf = vec![Complex64::new(0.0, 0.0); m];
        for j in 0..n {
            buf[j + 1].re = x[j];
            buf[m - 1 - j].re = -x[j];
        }
        self.fft.process(&mut buf);
        let scale = -0.5 * (2.0 / (n as f64 + 1.0)).sqrt();
        (0..n).map(|k| scale * buf[k + 1].im).collect()
    }
}

/// Lattice field frequencies `(2/dx) sin(pi k / (2 (N+1)))`, `k = 1..N`.
pub fn dirichlet_frequencies(n: usize, dx: f64) -> Vec<f64> {
    (1..=n).map(|k| 2.0 / dx * (std::f64::consts::PI * k as f64 / (2.0 * (n as f64 + 1.0))).sin()).collect()
}

/// Factor `C` of the decoupled initial covariance `V0 = C C^T`.
#[derive(Debug, Clone)]
pub struct VacuumFactor {
    pub layout: Layout,
    dst: Dst,
    /// Square roots of the single-mode variances: q, p, z, p_z.
    osc: [f64; 4],
    /// Per-mode scale for phi (`lambda_k^{-1/4} / sqrt 2`) and P (`lambda_k^{1/4} / sqrt 2`).
    phi_scale: Vec<f64>,
    pi_scale: Vec<f64>,
}

impl VacuumFactor {
    /// `C^T w`.
    pub fn project(&self, w: &[f64]) -> Vec<f64> {
        let n = self.layout.n_sites;
        let mut out = Vec::with_capacity(self.layout.dim());
        out.extend((0..4).map(|i| self.osc[i] * w[i]));
        let sp = self.dst.apply(&w[4..4 + n]);
        out.extend(sp.iter().zip(&self.phi_scale).map(|(a, s)| a * s));
        let sm = self.dst.apply(&w[4 + n..]);
        out.extend(sm.iter().zip(&self.pi_scale).map(|(a, s)| a * s));
        out
    }

    /// `C c`.
    pub fn expand(&self, c: &[f64]) -> Vec<f64> {
        let n = self.layout.n_sites;
        let mut out = Vec::with_capacity(self.layout.dim());
        out.extend((0..4).map(|i| self.osc[i] * c[i]));
        let a: Vec<f64> = c[4..4 + n].iter().zip(&self.phi_scale).map(|(v, s)| v * s).collect();
        out.extend(self.dst.apply(&a));
        let b: Vec<f64> = c[4 + n..].iter().zip(&self.pi_scale).map(|(v, s)| v * s).collect();
        out.extend(self.dst.apply(&b));
        out
    }

    /// `u^T V0 v`.
    pub fn bilinear(&self, u: &[f64], v: &[f64]) -> f64 {
        dot(&self.project(u), &self.project(v))
    }
}

pub fn vacuum_covariance(cfg: &LatticeConfig, p: &ModelParams<f64>) -> VacuumFactor {
    let n = cfg.n_sites;
    let om = p.omega();
    let (lam, _) = thermometer_block(p);
    let nu0 = cfg.thermometer_nu0;
    // lambda_k of the stiffness tridiag(-1, 2, -1): mode frequency times dx, squared
    let root: Vec<f64> = dirichlet_frequencies(n, cfg.dx).iter().map(|w| w * cfg.dx).collect();
    let s2 = std::f64::consts::SQRT_2;
    VacuumFactor {
        layout: Layout { n_sites: n },
        dst: Dst::new(n),
        osc: [(0.5 / om).sqrt(), (0.5 * om).sqrt(), (nu0 / lam).sqrt(), (nu0 * lam).sqrt()],
        phi_scale: root.iter().map(|r| 1.0 / (r.sqrt() * s2)).collect(),
        pi_scale: root.iter().map(|r| r.sqrt() / s2).collect(),
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Classic RK4 for `y' = M y`, calling `visit(step, y)` after every step.
pub fn rk4<F: FnMut(usize, &[f64])>(m: &Csr, y0: &[f64], dt: f64, steps: usize, mut visit: F) -> Vec<f64> {
    let n = y0.len();
    let mut y = y0.to_vec();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for s in 1..=steps {
        let stage = |tmp: &mut [f64], y: &[f64], k: &[f64], h: f64| {
            for ((t, &a), &b) in tmp.iter_mut().zip(y).zip(k) {
                *t = a + h * b;
            }
        };
        m.mul(&y, &mut k1);
        stage(&mut tmp, &y, &k1, 0.5 * dt);
        m.mul(&tmp, &mut k2);
        stage(&mut tmp, &y, &k2, 0.5 * dt);
        m.mul(&tmp, &mut k3);
        stage(&mut tmp, &y, &k3, dt);
        m.mul(&tmp, &mut k4);
        let c = dt / 6.0;
        for ((((v, &a), &b), &cc), &d) in y.iter_mut().zip(&k1).zip(&k2).zip(&k3).zip(&k4) {
            *v += c * (a + 2.0 * (b + cc) + d);
        }
        visit(s, &y);
    }
    y
}

/// Projections `C^T w(t)` of the adjoint vectors of each observable at the
/// sample times.
#[derive(Debug, Clone)]
pub struct ObservableSeries {
    pub times: Vec<f64>,
    /// `projections[observable][sample]`.
    pub projections: Vec<Vec<Vec<f64>>>,
    /// Adjoint vectors at the sample times (only when requested).
    pub adjoints: Vec<Vec<Vec<f64>>>,
    pub energy_drift: Vec<f64>,
}

impl ObservableSeries {
    /// Symmetrised equal-time covariance `<{o_j, o_k}> / 2` at sample `s`.
    pub fn cov(&self, j: usize, k: usize, s: usize) -> f64 {
        dot(&self.projections[j][s], &self.projections[k][s])
    }

    /// `<{o_j(t_a), o_k(t_b)}> / 2`.
    pub fn two_time(&self, j: usize, a: usize, k: usize, b: usize) -> f64 {
        dot(&self.projections[j][a], &self.projections[k][b])
    }
}

fn steps_and_stride(cfg: &LatticeConfig) -> (usize, usize) {
    let stride = (cfg.sample_dt / cfg.dt).round().max(1.0) as usize;
    let steps = ((cfg.t_final / cfg.dt).round() as usize).div_ceil(stride) * stride;
    (steps, stride)
}

/// Propagates `w' = A^T w` for each observable from `w(0) = u`.
/// Projections, adjoints and peak energy drift of one observable.
type Solved = (Vec<Vec<f64>>, Vec<Vec<f64>>, f64);

pub fn evolve_observables(
    drift: &DriftMatrix,
    vac: &VacuumFactor,
    observables: &[Vec<f64>],
    cfg: &LatticeConfig,
    keep_adjoints: bool,
) -> Result<ObservableSeries, LatticeError> {
    let (steps, stride) = steps_and_stride(cfg);
    let times: Vec<f64> = (0..=steps / stride).map(|s| (s * stride) as f64 * cfg.dt).collect();
    let solved: Vec<Solved> = observables
        .par_iter()
        .map(|u| {
            let e0 = drift.energy(&drift.apply_j(u));
            let mut proj = vec![vac.project(u)];
            let mut adj = if keep_adjoints { vec![u.clone()] } else { Vec::new() };
            let mut drift_max: f64 = 0.0;
            rk4(&drift.at, u, cfg.dt, steps, |s, w| {
                if s % stride == 0 {
                    proj.push(vac.project(w));
                    if keep_adjoints {
                        adj.push(w.to_vec());
                    }
                    let e = drift.energy(&drift.apply_j(w));
                    let scale = e0.abs().max(f64::MIN_POSITIVE);
                    drift_max = drift_max.max((e - e0).abs() / scale);
                }
            });
            (proj, adj, drift_max)
        })
        .collect();
    let mut projections = Vec::new();
    let mut adjoints = Vec::new();
    let mut energy_drift = Vec::new();
    for (i, (p, a, d)) in solved.into_iter().enumerate() {
        if d > cfg.energy_tol {
            return Err(LatticeError::StepUnstable { observable: i, drift: d, tol: cfg.energy_tol });
        }
        projections.push(p);
        adjoints.push(a);
        energy_drift.push(d);
    }
    Ok(ObservableSeries { times, projections, adjoints, energy_drift })
}

pub fn unit(dim: usize, i: usize) -> Vec<f64> {
    let mut u = vec![0.0; dim];
    u[i] = 1.0;
    u
}

/// Equal-time `<{q, phi_j}>` profile, full and radiated part.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatticeProfile {
    /// `|x|` at lattice resolution.
    pub xs: Vec<f64>,
    pub sym: Vec<f64>,
    pub dressing: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatticeRun {
    pub config: LatticeConfig,
    pub omega: f64,
    pub eps: f64,
    pub lambda_th: Option<f64>,
    pub mu: f64,
    pub times: Vec<f64>,
    /// `(qq, qp, pp)` at every sample time.
    pub q_series: Vec<Covariance2<f64>>,
    /// Empty without a thermometer.
    pub z_series: Vec<Covariance2<f64>>,
    /// `<{q(t + tau), q(t)}>` averaged over the window, at lags `k * sample_dt`.
    pub autocorrelation: Vec<(f64, f64)>,
    pub profile: Option<LatticeProfile>,
    pub energy_drift: f64,
}

impl LatticeRun {
    fn window_indices(&self) -> Vec<usize> {
        let (lo, hi) = self.config.window;
        (0..self.times.len()).filter(|&i| self.times[i] >= lo - 1e-9 && self.times[i] <= hi + 1e-9).collect()
    }

    fn window_mean(&self, series: &[Covariance2<f64>]) -> Covariance2<f64> {
        let idx = self.window_indices();
        let n = idx.len() as f64;
        let mut c = Covariance2::new(0.0, 0.0, 0.0);
        for &i in &idx {
            c.qq += series[i].qq / n;
            c.qp += series[i].qp / n;
            c.pp += series[i].pp / n;
        }
        c
    }

    pub fn q_window(&self) -> Covariance2<f64> {
        self.window_mean(&self.q_series)
    }

    pub fn z_window(&self) -> Option<Covariance2<f64>> {
        (!self.z_series.is_empty()).then(|| self.window_mean(&self.z_series))
    }

    /// Largest relative spread `(max - min) / |mean|` of a quantity over the window.
    pub fn window_spread(&self, f: impl Fn(&LatticeRun, usize) -> f64) -> f64 {
        let vals: Vec<f64> = self.window_indices().into_iter().map(|i| f(self, i)).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let (mn, mx) = vals.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        (mx - mn) / mean.abs().max(f64::MIN_POSITIVE)
    }

    /// Window-averaged autocorrelation at the lag closest to `tau`.
    pub fn autocorrelation_at(&self, tau: f64) -> Option<f64> {
        self.autocorrelation
            .iter()
            .min_by(|a, b| (a.0 - tau).abs().partial_cmp(&(b.0 - tau).abs()).unwrap())
            .filter(|a| (a.0 - tau).abs() < 1e-9 + 0.5 * self.config.sample_dt)
            .map(|a| a.1)
    }
}

/// What to compute beyond the oscillator and thermometer covariances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunOptions {
    pub profile: bool,
    /// Largest two-time lag in samples.
    pub max_lag_samples: usize,
}

pub fn run(p: &ModelParams<f64>, cfg: &LatticeConfig, opts: RunOptions) -> Result<LatticeRun, LatticeError> {
    let drift = build_drift(p, cfg)?;
    let vac = vacuum_covariance(cfg, p);
    let dim = drift.layout.dim();
    let mut which = vec![Layout::Q, Layout::P];
    if p.lambda_th().is_some() {
        which.extend([Layout::Z, Layout::PZ]);
    }
    let obs: Vec<Vec<f64>> = which.iter().map(|&i| unit(dim, i)).collect();
    let series = evolve_observables(&drift, &vac, &obs, cfg, false)?;
    let ns = series.times.len();
    let cov = |a: usize, b: usize| -> Vec<Covariance2<f64>> {
        (0..ns).map(|s| Covariance2::new(series.cov(a, a, s), series.cov(a, b, s), series.cov(b, b, s))).collect()
    };
    let q_series = cov(0, 1);
    let z_series = if obs.len() == 4 { cov(2, 3) } else { Vec::new() };

    let (lo, hi) = cfg.window;
    let win: Vec<usize> = (0..ns).filter(|&i| series.times[i] >= lo - 1e-9 && series.times[i] <= hi + 1e-9).collect();
    let mut autocorrelation = Vec::new();
    for lag in 0..=opts.max_lag_samples {
        let pairs: Vec<f64> = win
            .iter()
            .filter(|&&i| win.contains(&(i + lag)))
            .map(|&i| 2.0 * series.two_time(0, i + lag, 0, i))
            .collect();
        if pairs.is_empty() {
            break;
        }
        autocorrelation.push((series.times[lag] - series.times[0], pairs.iter().sum::<f64>() / pairs.len() as f64));
    }

    let profile = if opts.profile { Some(profile(p, cfg, &drift, &vac, &series, &win)?) } else { None };
    Ok(LatticeRun {
        config: cfg.clone(),
        omega: p.omega(),
        eps: p.eps(),
        lambda_th: p.lambda_th(),
        mu: p.mu(),
        times: series.times.clone(),
        q_series,
        z_series,
        autocorrelation,
        profile,
        energy_drift: series.energy_drift.iter().cloned().fold(0.0, f64::max),
    })
}

/// Row `q` of `V(t)` is `e^{At} V0 w_q(t)`; the radiated part subtracts the
/// same initial data evolved by the decoupled flow.
fn profile(
    p: &ModelParams<f64>,
    cfg: &LatticeConfig,
    drift: &DriftMatrix,
    vac: &VacuumFactor,
    series: &ObservableSeries,
    win: &[usize],
) -> Result<LatticeProfile, LatticeError> {
    let free_params = p.with_eps(0.0).and_then(|f| f.with_mu(0.0)).map_err(|e| LatticeError::Reference(e.to_string()))?;
    let free = build_drift_unchecked(&free_params, cfg);
    let picks: Vec<usize> = {
        let (a, b) = (win[0], win[win.len() - 1]);
        let mut v = vec![a, (a + b) / 2, b];
        v.dedup();
        v
    };
    let (_, stride) = steps_and_stride(cfg);
    let jobs: Vec<(usize, bool)> = picks.iter().flat_map(|&s| [(s, true), (s, false)]).collect();
    let results: Vec<Vec<f64>> = jobs
        .par_iter()
        .map(|&(s, coupled)| {
            let y0 = vac.expand(&series.projections[0][s]);
            let m = if coupled { &drift.a } else { &free.a };
            rk4(m, &y0, cfg.dt, s * stride, |_, _| {})
        })
        .collect();
    let lay = drift.layout;
    let c = lay.center();
    let kmax = ((cfg.profile_extent / cfg.dx).floor() as usize).min(c).min(lay.n_sites - 1 - c);
    let np = picks.len() as f64;
    let mut sym = vec![0.0; kmax + 1];
    let mut dressing = vec![0.0; kmax + 1];
    for (pair, _) in picks.iter().enumerate() {
        let yc = &results[2 * pair];
        let yf = &results[2 * pair + 1];
        for k in 0..=kmax {
            let (l, r) = (lay.phi(c - k), lay.phi(c + k));
            sym[k] += (yc[l] + yc[r]) / np;
            dressing[k] += (yc[l] - yf[l] + yc[r] - yf[r]) / np;
        }
    }
    Ok(LatticeProfile { xs: (0..=kmax).map(|k| k as f64 * cfg.dx).collect(), sym, dressing })
}

/// One oracle-versus-reference comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub name: String,
    pub oracle: f64,
    pub reference: f64,
    pub tolerance: f64,
    /// Absolute deviation `|oracle - reference|` compared against `tolerance`.
    pub passed: bool,
}

impl Comparison {
    pub fn absolute(name: &str, oracle: f64, reference: f64, tol: f64) -> Self {
        Self { name: name.into(), oracle, reference, tolerance: tol, passed: (oracle - reference).abs() <= tol }
    }

    pub fn relative(name: &str, oracle: f64, reference: f64, rel: f64) -> Self {
        Self::absolute(name, oracle, reference, rel * reference.abs())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub q: Covariance2<f64>,
    pub z: Option<Covariance2<f64>>,
    pub nu_q: f64,
    pub nu_z: Option<f64>,
    pub profile_fit: Option<ExpFit<f64>>,
    pub comparisons: Vec<Comparison>,
    /// `<p^2>` of the lattice and the sharp-cutoff value at the band edge `2/dx`.
    pub pp_lattice: f64,
    pub pp_band_edge_reference: f64,
}

impl OracleReport {
    pub fn all_passed(&self) -> bool {
        self.comparisons.iter().all(|c| c.passed)
    }
}

fn reference<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, LatticeError> {
    r.map_err(|e| LatticeError::Reference(e.to_string()))
}

/// Plateau check, window averages, and comparisons with the spectral,
/// thermometer and correlation modules.
pub fn extract_report(run: &LatticeRun, p: &ModelParams<f64>, tol: f64) -> Result<OracleReport, LatticeError> {
    let hint = format!(
        "lengthen the run or move the window later (window {:?}, t_final {}, L/2 = {})",
        run.config.window,
        run.config.t_final,
        run.config.length() / 2.0
    );
    for (name, spread) in [
        ("<q^2>", run.window_spread(|r, i| r.q_series[i].qq)),
        ("<p^2>", run.window_spread(|r, i| r.q_series[i].pp)),
    ] {
        if spread > run.config.plateau_tol {
            return Err(LatticeError::NoPlateau { quantity: name, spread, tol: run.config.plateau_tol, hint });
        }
    }
    let q = run.q_window();
    let z = run.z_window();
    let nu_q = reference(crate::gaussian_state::symplectic_invariant(&q))?;
    let nu_z = z.as_ref().map(crate::gaussian_state::symplectic_invariant).transpose();
    let nu_z = reference(nu_z)?;
    let mut comparisons = vec![
        Comparison::relative("qq", q.qq, reference(spectral_moments::moment_qq(p, tol))?.value, 0.02),
        Comparison::absolute("qp", q.qp, 0.0, 1e-3),
    ];
    if let (Some(nu_z), true) = (nu_z, p.mu() > 0.0) {
        let th = reference(thermometer::thermometer_moments(p, tol))?;
        comparisons.push(Comparison::absolute("nu_z", nu_z, th.diagnostics.nu, 1e-2));
    }
    if let Some(a2) = run.autocorrelation_at(2.0) {
        let a0 = 2.0 * q.qq;
        let r = reference(spectral_moments::autocorrelation_q(p, 2.0, tol))?.value;
        comparisons.push(Comparison::absolute("autocorrelation(tau=2)", a2, r, 0.02 * r.abs().max(0.1 * a0)));
    }
    let mut profile_fit = None;
    if let Some(prof) = &run.profile {
        if let Some(k) = prof.xs.iter().position(|&x| (x - 1.0).abs() < 0.5 * run.config.dx) {
            let spec = reference(correlations::dressing_correlator(p, 1.0, tol))?.0;
            comparisons.push(Comparison::relative("dressing(x=1)", prof.dressing[k], spec, 0.03));
            comparisons.push(Comparison::absolute("sym(x=1)", prof.sym[k], 0.0, 0.03 * spec.abs()));
        }
        if p.eps() > 0.0 {
            let kappa_guess = correlations::decay_rate_rederived(p);
            let x_max = 4.5 / kappa_guess;
            let n = prof.xs.iter().take_while(|&&x| x <= x_max).count();
            let fo = FitOptions::default();
            // strongly damped clouds have too few envelope peaks to fit
            if let Ok(fit) = correlations::decay_rate_fit(&prof.xs[..n], &prof.dressing[..n], &fo) {
                let spec = correlations::correlation_profile(p, &correlations::default_grid(p), tol, &fo);
                if let Ok(Some(sf)) = spec.map(|s| s.fit) {
                    comparisons.push(Comparison::relative("decay_rate", fit.decay_rate, sf.decay_rate, 0.10));
                }
                profile_fit = Some(fit);
            }
        }
    }
    let band = reference(p.with_cutoff(2.0 / run.config.dx))?;
    let pp_band_edge_reference = reference(spectral_moments::moment_pp(&band, tol))?.value;
    Ok(OracleReport { q, z, nu_q, nu_z, profile_fit, comparisons, pp_lattice: q.pp, pp_band_edge_reference })
}
