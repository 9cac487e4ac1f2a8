//! Acceptance suite: one pass/fail line per criterion, non-zero exit on
//! any failure. Runs without the libtest harness so the report is always
//! printed.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use ohmic::correlations::{self, FitOptions};
use ohmic::errata::{self, ErrataLedger, OracleRuns, Verdict};
use ohmic::gaussian_state;
use ohmic::lattice_oracle::{self, LatticeConfig, LatticeRun, OracleReport, RunOptions};
use ohmic::spectral_moments::{self, fit_line, Covariance2};
use ohmic::thermometer::{self, ThermometerResult};
use ohmic::{Params, RawParams};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

const TOL: f64 = 1e-10;

struct Outcome {
    passed: bool,
    detail: String,
}

impl Outcome {
    fn new(passed: bool, detail: String) -> Self {
        Self { passed, detail }
    }
}

/// Lattice work shared between criteria, with the time each piece took.
#[derive(Default)]
struct Shared {
    main: Option<(LatticeRun, OracleReport, Duration)>,
    ledger: Option<(OracleRuns, ErrataLedger, Duration)>,
}

impl Shared {
    fn main(&mut self) -> Result<&(LatticeRun, OracleReport, Duration), String> {
        if self.main.is_none() {
            let t = Instant::now();
            let (run, report) = errata::main_run(&LatticeConfig::default(), TOL).map_err(|e| e.to_string())?;
            self.main = Some((run, report, t.elapsed()));
        }
        Ok(self.main.as_ref().unwrap())
    }

    fn ledger(&mut self) -> Result<&(OracleRuns, ErrataLedger, Duration), String> {
        if self.ledger.is_none() {
            let (run, report, _) = self.main()?.clone();
            let t = Instant::now();
            let runs = OracleRuns::with_main(run, report).map_err(|e| e.to_string())?;
            let ledger = errata::ledger(&runs, TOL).map_err(|e| e.to_string())?;
            self.ledger = Some((runs, ledger, t.elapsed()));
        }
        Ok(self.ledger.as_ref().unwrap())
    }
}

fn params(omega: f64, eps: f64, cutoff: f64) -> Params {
    RawParams::new(omega, eps, cutoff).validate().unwrap()
}

fn thermo(eps: f64, mu: f64) -> Params {
    RawParams::new(1.0, eps, 1e3).with_thermometer(0.7, mu).validate().unwrap()
}

fn within_budget(elapsed: Duration, budget: f64) -> bool {
    elapsed.as_secs_f64() < budget
}

fn ground_state_recovery() -> Result<Outcome, String> {
    let t = Instant::now();
    let qq = spectral_moments::moment_qq(&params(1.0, 0.1, 100.0), TOL).map_err(|e| e.to_string())?.value;
    let el = t.elapsed();
    let ok = (qq - 0.5).abs() < 1e-3 && within_budget(el, 1.0);
    Ok(Outcome::new(ok, format!("<q^2> = {qq:.6} (target 0.5 +/- 1e-3), {el:.2?}")))
}

fn mixedness() -> Result<Outcome, String> {
    let t = Instant::now();
    let p = params(1.0, 1.0, 1e3);
    let qq = spectral_moments::moment_qq(&p, TOL).map_err(|e| e.to_string())?;
    let pp = spectral_moments::moment_pp(&p, TOL).map_err(|e| e.to_string())?;
    let d = gaussian_state::diagnostics(&Covariance2::new(qq.value, 0.0, pp.value)).map_err(|e| e.to_string())?;
    let el = t.elapsed();
    // first-order propagation of the quadrature error estimates into nu
    let nu_err = (pp.value * qq.err_estimate + qq.value * pp.err_estimate) / (2.0 * d.nu);
    let margin = d.nu - 0.5;
    let ok = margin > 3.0 * nu_err && d.temperature > 0.0 && d.entropy > 0.0 && within_budget(el, 1.0);
    Ok(Outcome::new(
        ok,
        format!("nu = {:.6} (nu - 1/2 = {margin:.3e}, error {nu_err:.1e}), T = {:.4}, S = {:.4}, {el:.2?}", d.nu, d.temperature, d.entropy),
    ))
}

fn zero_qp() -> Result<Outcome, String> {
    let mut rng = StdRng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let om = rng.gen_range(0.2..3.0);
        let p = params(om, rng.gen_range(0.05..2.5), om * rng.gen_range(20.0..2000.0));
        let r = spectral_moments::qp_antisymmetry_residual(&p, 1e-12).map_err(|e| e.to_string())?;
        worst = worst.max(r.value.abs());
    }
    Ok(Outcome::new(worst < 1e-10, format!("largest residual over 20 random points {worst:.2e} (< 1e-10)")))
}

fn log_divergence(coefficient_verdict: Option<Verdict>) -> Result<Outcome, String> {
    let t = Instant::now();
    let p = params(1.0, 1.0, 1e3);
    let fit = spectral_moments::pp_log_fit(&p, &[1e2, 1e3, 1e4], TOL).map_err(|e| e.to_string())?;
    let el = t.elapsed();
    // the coefficient the oracle adjudicates: rederived unless the ledger says otherwise
    let coefficient = match coefficient_verdict {
        Some(Verdict::Printed) => spectral_moments::pp_log_coefficient_printed(&p),
        _ => spectral_moments::pp_log_coefficient(&p),
    };
    let rel = (fit.slope - coefficient).abs() / coefficient;
    let ok = fit.r_squared > 0.9999 && rel < 0.05 && within_budget(el, 5.0) && coefficient_verdict == Some(Verdict::Rederived);
    Ok(Outcome::new(
        ok,
        format!(
            "R^2 = {:.8}, slope {:.6} vs {coefficient:.6} ({:.2e} rel, oracle verdict {coefficient_verdict:?}), {el:.2?}",
            fit.r_squared, fit.slope, rel
        ),
    ))
}

fn thermometer_sequence(eps: f64) -> Result<Vec<ThermometerResult<f64>>, String> {
    [0.02, 0.04, 0.06, 0.08]
        .iter()
        .map(|&mu| thermometer::thermometer_moments(&thermo(eps, mu), 1e-12).map_err(|e| e.to_string()))
        .collect()
}

fn thermometer_reads_zero() -> Result<Outcome, String> {
    let t = Instant::now();
    let seq = thermometer_sequence(1.0)?;
    let lim = thermometer::extrapolate_mu_to_zero(&seq).map_err(|e| e.to_string())?;
    let z0 = 0.5 / 0.7;
    let xs: Vec<f64> = seq.iter().map(|r| r.mu.ln()).collect();
    let ys: Vec<f64> = seq.iter().map(|r| (r.zz - z0).abs().ln()).collect();
    let exponent = fit_line(&xs, &ys).slope;
    let el = t.elapsed();
    let ok = (lim.zz - z0).abs() < 1e-3 * z0
        && (lim.pzpz - 0.35).abs() < 1e-3 * 0.35
        && (lim.diagnostics.nu - 0.5).abs() < 1e-3
        && (exponent - 2.0).abs() < 0.2
        && within_budget(el, 10.0);
    Ok(Outcome::new(
        ok,
        format!(
            "<z^2> = {:.6}, <p_z^2> = {:.6}, nu_z = {:.6}, exponent {exponent:.3}, {el:.2?}",
            lim.zz, lim.pzpz, lim.diagnostics.nu
        ),
    ))
}

fn thermometer_eps_independence() -> Result<Outcome, String> {
    let t = Instant::now();
    let mut zz = Vec::new();
    for eps in [0.5, 1.0, 1.5] {
        let lim = thermometer::extrapolate_mu_to_zero(&thermometer_sequence(eps)?).map_err(|e| e.to_string())?;
        zz.push(lim.zz);
    }
    let el = t.elapsed();
    let spread = zz.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - zz.iter().cloned().fold(f64::INFINITY, f64::min);
    let ok = spread < 1e-3 && within_budget(el, 30.0);
    Ok(Outcome::new(ok, format!("<z^2> at eps 0.5/1/1.5 = {zz:.6?}, spread {spread:.2e}, {el:.2?}")))
}

fn commutator() -> Result<Outcome, String> {
    let mut rng = StdRng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..30 {
        let p = params(rng.gen_range(0.3..3.0), rng.gen_range(0.1..2.0), 1e3);
        let x = rng.gen_range(0.05..20.0);
        worst = worst.max(correlations::commutator_residual(&p, x, 1e-12).map_err(|e| e.to_string())?);
    }
    Ok(Outcome::new(worst < 1e-8, format!("largest residual over 30 random points {worst:.2e} (< 1e-8)")))
}

fn localization(shared: &mut Shared) -> Result<Outcome, String> {
    let t = Instant::now();
    let fo = FitOptions::default();
    let mut kappas = Vec::new();
    let mut rms_ok = true;
    // above eps ~ 1.1 the 1/x^2 tail overtakes the envelope within the fit range
    let epss = [0.5, 0.7, 1.0];
    for &eps in &epss {
        let p = params(1.0, eps, 1e3);
        let prof = correlations::correlation_profile(&p, &correlations::default_grid(&p), TOL, &fo).map_err(|e| e.to_string())?;
        let fit = prof.fit.ok_or("no fit")?;
        rms_ok &= fit.fit_rms < fo.rms_threshold && fit.decay_rate > 0.0;
        kappas.push(fit.decay_rate);
    }
    let xs: Vec<f64> = epss.iter().map(|e: &f64| e.ln()).collect();
    let ys: Vec<f64> = kappas.iter().map(|k| k.ln()).collect();
    let exponent = fit_line(&xs, &ys).slope;
    let own = t.elapsed();
    let (_, report, main_time) = shared.main()?;
    let oracle = report.profile_fit.ok_or("no lattice fit")?.decay_rate;
    let spectral = kappas[2];
    let rel = (oracle - spectral).abs() / spectral;
    let el = own + *main_time;
    let ok = rms_ok && (exponent - 2.0).abs() < 0.2 && rel < 0.10 && within_budget(el, 60.0);
    Ok(Outcome::new(
        ok,
        format!("kappa(eps) = {kappas:.4?}, exponent {exponent:.3}, lattice {oracle:.4} vs spectral {spectral:.4} ({rel:.2e} rel), {el:.2?}"),
    ))
}

fn oracle_agreement(shared: &mut Shared) -> Result<Outcome, String> {
    let (run, report, main_time) = shared.main()?.clone();
    let t = Instant::now();
    let p = errata::reference_params().map_err(|e| e.to_string())?;
    let doubled_cfg = LatticeConfig { n_sites: 2 * run.config.n_sites, ..run.config.clone() };
    let doubled = lattice_oracle::run(&p, &doubled_cfg, RunOptions::default()).map_err(|e| e.to_string())?;
    let el = t.elapsed() + main_time;
    let find = |name: &str| report.comparisons.iter().find(|c| c.name == name).cloned();
    let checks = ["qq", "qp", "nu_z"].map(find);
    let compared = checks.iter().all(|c| c.as_ref().is_some_and(|c| c.passed));
    let (a, b) = (run.q_window(), doubled.q_window());
    let (za, zb) = (run.z_window().ok_or("no z")?, doubled.z_window().ok_or("no z")?);
    let nu = |c: &Covariance2<f64>| gaussian_state::symplectic_invariant(c).unwrap_or(f64::NAN);
    let changes = [
        (a.qq - b.qq).abs() / a.qq,
        (a.qp - b.qp).abs() / a.qq,
        (a.pp - b.pp).abs() / a.pp,
        (nu(&za) - nu(&zb)).abs() / nu(&za),
    ];
    let worst = changes.iter().cloned().fold(0.0, f64::max);
    let ok = compared && worst < 1e-3 && within_budget(el, 60.0);
    let show = |c: &Option<lattice_oracle::Comparison>| {
        c.as_ref().map_or("missing".to_string(), |c| format!("{}: {:.6} vs {:.6}", c.name, c.oracle, c.reference))
    };
    Ok(Outcome::new(
        ok,
        format!(
            "{}; {}; {}; N-doubling change {worst:.1e}, {el:.2?}",
            show(&checks[0]),
            show(&checks[1]),
            show(&checks[2])
        ),
    ))
}

fn ledger_completeness(shared: &mut Shared) -> Result<Outcome, String> {
    let (_, ledger, el) = shared.ledger()?;
    let mut missing = Vec::new();
    for i in 1..=8 {
        let id = format!("E{i}");
        match ledger.get(&id) {
            Some(e) if e.rederived.is_finite() && e.oracle.is_finite() => {}
            _ => missing.push(id),
        }
    }
    let unresolved: Vec<&str> = ledger.entries.iter().filter(|e| e.verdict != Verdict::Rederived).map(|e| e.id).collect();
    let ok = missing.is_empty() && unresolved.is_empty();
    let mut table = String::new();
    for e in &ledger.entries {
        table += &format!(
            "\n    {:<4} {:<9?} printed {:>14} rederived {:>12.6e} oracle {:>12.6e}  {}",
            e.id,
            e.verdict,
            e.printed.map_or("undefined".to_string(), |v| format!("{v:.6e}")),
            e.rederived,
            e.oracle,
            e.topic
        );
    }
    Ok(Outcome::new(
        ok,
        format!("{} entries, missing {missing:?}, not confirmed {unresolved:?}, {el:.2?}{table}", ledger.entries.len()),
    ))
}

fn main() -> ExitCode {
    let mut shared = Shared::default();
    let mut results: Vec<(usize, &str, Result<Outcome, String>)> = vec![
        (1, "ground-state recovery", ground_state_recovery()),
        (2, "mixedness", mixedness()),
        (3, "zero <qp+pq>", zero_qp()),
        (5, "thermometer reads zero", thermometer_reads_zero()),
        (6, "thermometer eps-independence", thermometer_eps_independence()),
        (7, "commutator preservation", commutator()),
        (8, "exponential localization", localization(&mut shared)),
        (9, "oracle agreement", oracle_agreement(&mut shared)),
    ];
    // criterion 4 compares against the coefficient the lattice adjudicates
    let e2 = shared.ledger().ok().and_then(|(_, l, _)| l.get("E2")).map(|e| e.verdict);
    results.push((4, "log divergence of <p^2>", log_divergence(e2)));
    results.push((10, "errata ledger", ledger_completeness(&mut shared)));
    results.sort_by_key(|r| r.0);

    let mut failures = 0;
    for (n, name, r) in results {
        let (passed, detail) = match r {
            Ok(o) => (o.passed, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !passed {
            failures += 1;
        }
        println!("criterion {n:>2} {} {name}: {detail}", if passed { "PASS" } else { "FAIL" });
    }
    if failures == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failures} criteria failed");
        ExitCode::FAILURE
    }
}
