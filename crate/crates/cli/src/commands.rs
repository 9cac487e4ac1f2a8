//! The subcommands, each producing a [`Report`].

use clap::ValueEnum;
use ohmic::correlations::{self, FitOptions};
use ohmic::errata::{self, OracleRuns, Verdict};
use ohmic::gaussian_state::{self, ThermalDiagnostics};
use ohmic::lattice_oracle::{self, RunOptions};
use ohmic::spectral_moments::{self, Covariance2};
use ohmic::thermometer::{self, ThermometerResult};
use ohmic::{ModelParams, Regime};
use rayon::prelude::*;
use serde_json::{json, Value};
use thiserror::Error;

use crate::config::{Axis, RunConfig};
use crate::output::{Cell, Check, Report, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Moments,
    Temperature,
    Thermometer,
    Correlations,
    Oracle,
    Errata,
    Sweep,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Moments => "moments",
            Command::Temperature => "temperature",
            Command::Thermometer => "thermometer",
            Command::Correlations => "correlations",
            Command::Oracle => "oracle",
            Command::Errata => "errata",
            Command::Sweep => "sweep",
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{module} at ({params}): {message}")]
    Module { module: &'static str, params: String, message: String },
    #[error("`{command}` needs {what}")]
    MissingSection { command: &'static str, what: &'static str },
}

fn describe(p: &ModelParams<f64>) -> String {
    let mut s = format!("omega={}, eps={}, cutoff={}", p.omega(), p.eps(), p.cutoff());
    if let Some(l) = p.lambda_th() {
        s.push_str(&format!(", lambda_th={l}, mu={}", p.mu()));
    }
    s
}

fn module_err<E: std::fmt::Display>(module: &'static str, p: &ModelParams<f64>) -> impl Fn(E) -> CliError {
    let params = describe(p);
    move |e| CliError::Module { module, params: params.clone(), message: e.to_string() }
}

fn regime_name(r: Regime) -> &'static str {
    match r {
        Regime::Underdamped => "underdamped",
        Regime::Critical => "critical",
        Regime::Overdamped => "overdamped",
    }
}

pub fn run(command: Command, cfg: &RunConfig) -> Result<Report, CliError> {
    match command {
        Command::Moments => moments(cfg),
        Command::Temperature => temperature(cfg),
        Command::Thermometer => thermometer_sweep(cfg),
        Command::Correlations => correlation_profiles(cfg),
        Command::Oracle => oracle(cfg),
        Command::Errata => errata_ledger(cfg),
        Command::Sweep => sweep(cfg),
    }
}

/// Sweep points in parallel, results in input order.
fn per_point<T: Send>(
    cfg: &RunConfig,
    f: impl Fn(&ModelParams<f64>) -> Result<T, CliError> + Sync,
) -> Result<Vec<(ModelParams<f64>, T)>, CliError> {
    cfg.points().into_par_iter().map(|p| f(&p).map(|t| (p, t))).collect()
}

struct Moments {
    cov: Covariance2<f64>,
    qq_err: f64,
    pp_err: f64,
    converged: bool,
}

fn compute_moments(p: &ModelParams<f64>, tol: f64) -> Result<Moments, CliError> {
    let err = module_err("spectral_moments", p);
    let qq = spectral_moments::moment_qq(p, tol).map_err(&err)?;
    let pp = spectral_moments::moment_pp(p, tol).map_err(&err)?;
    Ok(Moments {
        cov: Covariance2::new(qq.value, spectral_moments::moment_qp(p), pp.value),
        qq_err: qq.err_estimate,
        pp_err: pp.err_estimate,
        converged: qq.converged && pp.converged,
    })
}

fn diagnostics(p: &ModelParams<f64>, c: &Covariance2<f64>) -> Result<ThermalDiagnostics<f64>, CliError> {
    gaussian_state::diagnostics(c).map_err(module_err("gaussian_state", p))
}

fn moments(cfg: &RunConfig) -> Result<Report, CliError> {
    let tol = cfg.tolerances.quad_tol;
    let results = per_point(cfg, |p| compute_moments(p, tol))?;
    let mut table = Table::new(vec!["omega", "eps", "cutoff", "regime", "qq", "qp", "pp", "qq_err", "pp_err"]);
    let mut checks = Vec::new();
    let mut out = Vec::new();
    for (p, m) in &results {
        let c = m.cov;
        table.push(vec![
            p.omega().into(),
            p.eps().into(),
            p.cutoff().into(),
            regime_name(p.classify_regime()).into(),
            c.qq.into(),
            c.qp.into(),
            c.pp.into(),
            m.qq_err.into(),
            m.pp_err.into(),
        ]);
        let tag = describe(p);
        checks.push(Check::new(format!("quadrature converged ({tag})"), m.converged, format!("err qq {:.2e}, pp {:.2e}", m.qq_err, m.pp_err)));
        let det = c.determinant();
        checks.push(Check::new(format!("uncertainty ({tag})"), det >= 0.25 * (1.0 - 1e-9), format!("qq pp - qp^2 = {det:.6}")));
        out.push(json!({
            "params": p,
            "regime": regime_name(p.classify_regime()),
            "covariance": c,
            "qq_err": m.qq_err,
            "pp_err": m.pp_err,
        }));
    }
    Ok(Report { table, json: Value::Array(out), checks })
}

fn temperature(cfg: &RunConfig) -> Result<Report, CliError> {
    let tol = cfg.tolerances.quad_tol;
    let results = per_point(cfg, |p| {
        let m = compute_moments(p, tol)?;
        let d = diagnostics(p, &m.cov)?;
        Ok((m, d))
    })?;
    let mut table = Table::new(vec!["omega", "eps", "cutoff", "nu", "lambda_eff", "temperature", "entropy", "purity"]);
    let mut checks = Vec::new();
    let mut out = Vec::new();
    for (p, (m, d)) in &results {
        table.push(vec![
            p.omega().into(),
            p.eps().into(),
            p.cutoff().into(),
            d.nu.into(),
            d.lambda_eff.into(),
            d.temperature.into(),
            d.entropy.into(),
            d.purity.into(),
        ]);
        let tag = describe(p);
        checks.push(Check::new(format!("quadrature converged ({tag})"), m.converged, ""));
        checks.push(Check::new(
            format!("physical state ({tag})"),
            d.nu >= 0.5 && d.entropy >= 0.0 && d.temperature >= 0.0,
            format!("nu {:.6}, S {:.3e}, T {:.3e}", d.nu, d.entropy, d.temperature),
        ));
        out.push(json!({ "params": p, "covariance": m.cov, "diagnostics": d }));
    }
    Ok(Report { table, json: Value::Array(out), checks })
}

const THERMOMETER_COLUMNS: [&str; 11] =
    ["kind", "omega", "eps", "lambda_th", "mu", "zz", "pzpz", "zpz", "nu", "temperature", "entropy"];

fn thermometer_row(kind: &str, p: &ModelParams<f64>, mu: f64, zz: f64, pzpz: f64, zpz: f64, d: &ThermalDiagnostics<f64>) -> Vec<Cell> {
    vec![
        kind.into(),
        p.omega().into(),
        p.eps().into(),
        p.lambda_th().into(),
        mu.into(),
        zz.into(),
        pzpz.into(),
        zpz.into(),
        d.nu.into(),
        d.temperature.into(),
        d.entropy.into(),
    ]
}

/// Thermometer readings per point; with a `mu` sweep of at least three
/// values, a final row holds the `mu -> 0` extrapolation.
fn thermometer_sweep(cfg: &RunConfig) -> Result<Report, CliError> {
    if cfg.model.lambda_th.is_none() {
        return Err(CliError::MissingSection { command: "thermometer", what: "model.lambda_th" });
    }
    let tol = cfg.tolerances.quad_tol;
    let results: Vec<(ModelParams<f64>, ThermometerResult<f64>)> =
        per_point(cfg, |p| thermometer::thermometer_moments(p, tol).map_err(module_err("thermometer", p)))?;
    let mut table = Table::new(THERMOMETER_COLUMNS.to_vec());
    let mut checks = Vec::new();
    let mut points = Vec::new();
    for (p, r) in &results {
        table.push(thermometer_row("point", p, r.mu, r.zz, r.pzpz, r.zpz, &r.diagnostics));
        checks.push(Check::new(
            format!("physical thermometer state ({})", describe(p)),
            r.diagnostics.nu >= 0.5,
            format!("nu {:.9}", r.diagnostics.nu),
        ));
        points.push(json!({ "params": p, "result": r }));
    }
    let mut limit = Value::Null;
    let mu_sweep = cfg.sweep.as_ref().is_some_and(|s| s.axis == Axis::Mu && s.values.len() >= 3);
    if mu_sweep {
        let p = &results[0].0;
        let rs: Vec<_> = results.iter().map(|r| r.1).collect();
        let l = thermometer::extrapolate_mu_to_zero(&rs).map_err(module_err("thermometer", p))?;
        table.push(thermometer_row("extrapolated", p, 0.0, l.zz, l.pzpz, l.zpz, &l.diagnostics));
        checks.push(Check::new(
            "extrapolation monotone",
            l.warnings.is_empty(),
            format!("{:?}", l.warnings),
        ));
        checks.push(Check::new(
            "extrapolation stable",
            l.residual_zz <= 1e-3 * l.zz.abs(),
            format!("dropping the largest mu moves <z^2> by {:.3e}", l.residual_zz),
        ));
        limit = serde_json::to_value(&l).expect("serializable limit");
    }
    Ok(Report { table, json: json!({ "points": points, "extrapolated": limit }), checks })
}

fn correlation_profiles(cfg: &RunConfig) -> Result<Report, CliError> {
    let tol = cfg.tolerances.quad_tol;
    let t = &cfg.tolerances;
    let fo = FitOptions { rms_threshold: t.fit_rms, min_points: t.fit_min_points, min_peaks: t.fit_min_peaks };
    let results = per_point(cfg, |p| {
        let xs = correlations::default_grid(p);
        correlations::correlation_profile(p, &xs, tol, &fo).map_err(module_err("correlations", p))
    })?;
    let mut table = Table::new(vec!["omega", "eps", "x", "sym", "sym_err", "dressing", "commutator"]);
    let mut checks = Vec::new();
    let mut out = Vec::new();
    for (p, prof) in &results {
        for i in 0..prof.xs.len() {
            table.push(vec![
                p.omega().into(),
                p.eps().into(),
                prof.xs[i].into(),
                prof.sym[i].value().into(),
                prof.sym[i].err_estimate.into(),
                prof.dressing[i].into(),
                prof.comm[i].into(),
            ]);
        }
        let kappa_rederived = correlations::decay_rate_rederived(p);
        let kappa_printed = correlations::decay_rate_printed(p);
        match &prof.fit {
            Some(f) => table.comments.push(format!(
                "fit omega={:.11e} eps={:.11e} kappa={:.11e} kappa_ci={:.11e} rms={:.11e} peaks={} kappa_rederived={:.11e} kappa_printed={:.11e}",
                p.omega(),
                p.eps(),
                f.decay_rate,
                f.decay_rate_ci,
                f.fit_rms,
                f.peaks,
                kappa_rederived,
                kappa_printed
            )),
            None => table.comments.push(format!("fit omega={:.11e} eps={:.11e} none", p.omega(), p.eps())),
        }
        let tag = describe(p);
        let worst = prof.comm.iter().fold(0.0f64, |m, c| m.max(c.abs()));
        checks.push(Check::new(format!("commutator ({tag})"), worst < 1e-8, format!("max residual {worst:.3e}")));
        if let Some(f) = &prof.fit {
            checks.push(Check::new(
                format!("decay rate ({tag})"),
                (f.decay_rate - kappa_rederived).abs() <= 0.1 * kappa_rederived,
                format!("fit {:.6} vs eps^2/4 = {kappa_rederived:.6}", f.decay_rate),
            ));
        }
        out.push(json!({
            "params": p,
            "profile": prof,
            "kappa_rederived": kappa_rederived,
            "kappa_printed": kappa_printed,
        }));
    }
    Ok(Report { table, json: Value::Array(out), checks })
}

fn oracle(cfg: &RunConfig) -> Result<Report, CliError> {
    let Some(lc) = &cfg.lattice else {
        return Err(CliError::MissingSection { command: "oracle", what: "a lattice section" });
    };
    let tol = cfg.tolerances.quad_tol;
    let results = per_point(cfg, |p| {
        let err = module_err("lattice_oracle", p);
        let run = lattice_oracle::run(p, lc, RunOptions { profile: true, max_lag_samples: 8 }).map_err(&err)?;
        let report = lattice_oracle::extract_report(&run, p, tol).map_err(&err)?;
        Ok((run.energy_drift, report))
    })?;
    let mut table = Table::new(vec!["omega", "eps", "mu", "quantity", "oracle", "reference", "tolerance", "passed"]);
    let mut checks = Vec::new();
    let mut out = Vec::new();
    for (p, (drift, report)) in &results {
        for c in &report.comparisons {
            table.push(vec![
                p.omega().into(),
                p.eps().into(),
                p.mu().into(),
                Cell::Text(c.name.clone()),
                c.oracle.into(),
                c.reference.into(),
                c.tolerance.into(),
                c.passed.into(),
            ]);
            checks.push(Check::new(
                format!("{} ({})", c.name, describe(p)),
                c.passed,
                format!("lattice {:.6e} vs {:.6e}", c.oracle, c.reference),
            ));
        }
        out.push(json!({ "params": p, "energy_drift": drift, "report": report }));
    }
    Ok(Report { table, json: Value::Array(out), checks })
}

/// The ledger evaluates its entries at fixed points; only the lattice
/// section (main run) and the quadrature tolerance are taken from the config.
fn errata_ledger(cfg: &RunConfig) -> Result<Report, CliError> {
    let tol = cfg.tolerances.quad_tol;
    let lc = cfg.lattice.clone().unwrap_or_default();
    let fail = |e: errata::ErrataError| CliError::Module {
        module: "errata",
        params: "reference points".into(),
        message: e.to_string(),
    };
    let runs = OracleRuns::compute(&lc, tol).map_err(fail)?;
    let ledger = errata::ledger(&runs, tol).map_err(fail)?;
    let mut table = Table::new(vec![
        "id",
        "topic",
        "quantity",
        "printed",
        "rederived",
        "oracle",
        "oracle_kind",
        "tolerance",
        "verdict",
    ]);
    let mut checks = Vec::new();
    for e in &ledger.entries {
        let kind = serde_json::to_value(e.oracle_kind).expect("serializable kind");
        let verdict = serde_json::to_value(e.verdict).expect("serializable verdict");
        table.push(vec![
            e.id.into(),
            e.topic.into(),
            Cell::Text(e.quantity.clone()),
            e.printed.into(),
            e.rederived.into(),
            e.oracle.into(),
            Cell::Text(kind.as_str().unwrap_or_default().into()),
            e.tolerance.into(),
            Cell::Text(verdict.as_str().unwrap_or_default().into()),
        ]);
        checks.push(Check::new(
            format!("{} {}", e.id, e.topic),
            e.verdict == Verdict::Rederived,
            format!("rederived off by {:.3e} (tolerance {:.3e})", e.rederived_deviation(), e.tolerance),
        ));
    }
    Ok(Report { table, json: json!({ "ledger": ledger, "main_report": runs.main_report }), checks })
}

/// Moments, thermal diagnostics and, with a thermometer, its reading at
/// every sweep value.
fn sweep(cfg: &RunConfig) -> Result<Report, CliError> {
    let Some(s) = &cfg.sweep else {
        return Err(CliError::MissingSection { command: "sweep", what: "sweep.axis and sweep.values" });
    };
    let tol = cfg.tolerances.quad_tol;
    let results = per_point(cfg, |p| {
        let m = compute_moments(p, tol)?;
        let d = diagnostics(p, &m.cov)?;
        let th = match p.lambda_th() {
            Some(_) => Some(thermometer::thermometer_moments(p, tol).map_err(module_err("thermometer", p))?),
            None => None,
        };
        Ok((m, d, th))
    })?;
    let mut table = Table::new(vec![
        s.axis.name(),
        "qq",
        "qp",
        "pp",
        "nu",
        "temperature",
        "entropy",
        "zz",
        "pzpz",
        "nu_z",
        "temperature_z",
    ]);
    let mut checks = Vec::new();
    let mut out = Vec::new();
    for ((p, (m, d, th)), &v) in results.iter().zip(&s.values) {
        let c = m.cov;
        table.push(vec![
            v.into(),
            c.qq.into(),
            c.qp.into(),
            c.pp.into(),
            d.nu.into(),
            d.temperature.into(),
            d.entropy.into(),
            th.map(|r| r.zz).into(),
            th.map(|r| r.pzpz).into(),
            th.map(|r| r.diagnostics.nu).into(),
            th.map(|r| r.diagnostics.temperature).into(),
        ]);
        let tag = describe(p);
        checks.push(Check::new(format!("quadrature converged ({tag})"), m.converged, ""));
        checks.push(Check::new(format!("physical state ({tag})"), d.nu >= 0.5, format!("nu {:.9}", d.nu)));
        out.push(json!({ "params": p, "covariance": c, "diagnostics": d, "thermometer": th }));
    }
    Ok(Report { table, json: Value::Array(out), checks })
}
