//! Flat `section.key=value` run configuration.

use std::collections::HashMap;
use std::path::PathBuf;

use ohmic::lattice_oracle::LatticeConfig;
use ohmic::model::{ParamError, ValidationError};
use ohmic::{ModelParams, RawParams};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: `{key}` expects {expected}, got `{value}`")]
    TypeMismatch { line: usize, key: String, expected: &'static str, value: String },
    /// `line` is `None` when the offending value is a default.
    #[error("{}`{key}`: {message}", line.map_or(String::new(), |l| format!("line {l}: ")))]
    InvariantViolation { line: Option<usize>, key: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputConfig {
    pub format: Format,
    /// Standard output when absent.
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Omega,
    Eps,
    Cutoff,
    LambdaTh,
    Mu,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Omega => "omega",
            Axis::Eps => "eps",
            Axis::Cutoff => "cutoff",
            Axis::LambdaTh => "lambda_th",
            Axis::Mu => "mu",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [Axis::Omega, Axis::Eps, Axis::Cutoff, Axis::LambdaTh, Axis::Mu].into_iter().find(|a| a.name() == s)
    }

    /// `raw` with this axis set to `v`.
    pub fn apply(self, mut raw: RawParams<f64>, v: f64) -> RawParams<f64> {
        match self {
            Axis::Omega => raw.omega = v,
            Axis::Eps => raw.eps = v,
            Axis::Cutoff => raw.cutoff = v,
            Axis::LambdaTh => raw.lambda_th = Some(v),
            Axis::Mu => raw.mu = v,
        }
        raw
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sweep {
    pub axis: Axis,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tolerances {
    pub quad_tol: f64,
    pub fit_rms: f64,
    pub fit_min_points: usize,
    pub fit_min_peaks: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { quad_tol: 1e-10, fit_rms: 0.05, fit_min_points: 6, fit_min_peaks: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub model: RawParams<f64>,
    pub lattice: Option<LatticeConfig>,
    pub sweep: Option<Sweep>,
    pub output: OutputConfig,
    pub tolerances: Tolerances,
}

impl RunConfig {
    pub fn params(&self) -> ModelParams<f64> {
        // validated at parse time
        self.model.validate().expect("validated configuration")
    }

    /// Parameter points of the run: the sweep values, or the model alone.
    pub fn points(&self) -> Vec<ModelParams<f64>> {
        match &self.sweep {
            Some(s) => s.values.iter().map(|&v| s.axis.apply(self.model, v).validate().expect("validated sweep")).collect(),
            None => vec![self.params()],
        }
    }

    /// Inverse of [`parse_config`]: every field in a fixed order, floats in
    /// shortest round-trip form.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            out.push_str(k);
            out.push('=');
            out.push_str(&v);
            out.push('\n');
        };
        let m = &self.model;
        put("model.omega", num(m.omega));
        put("model.eps", num(m.eps));
        put("model.cutoff", num(m.cutoff));
        if let Some(l) = m.lambda_th {
            put("model.lambda_th", num(l));
        }
        put("model.mu", num(m.mu));
        if let Some(l) = &self.lattice {
            put("lattice.n_sites", l.n_sites.to_string());
            put("lattice.dx", num(l.dx));
            if let Some(s) = l.smear_sigma {
                put("lattice.smear_sigma", num(s));
            }
            put("lattice.dt", num(l.dt));
            put("lattice.t_final", num(l.t_final));
            put("lattice.window_lo", num(l.window.0));
            put("lattice.window_hi", num(l.window.1));
            put("lattice.sample_dt", num(l.sample_dt));
            put("lattice.profile_extent", num(l.profile_extent));
            put("lattice.thermometer_nu0", num(l.thermometer_nu0));
            put("lattice.energy_tol", num(l.energy_tol));
            put("lattice.plateau_tol", num(l.plateau_tol));
            put("lattice.inverted_thermometer", l.inverted_thermometer.to_string());
        }
        if let Some(s) = &self.sweep {
            put("sweep.axis", s.axis.name().into());
            put("sweep.values", s.values.iter().map(|&v| num(v)).collect::<Vec<_>>().join(","));
        }
        put(
            "output.format",
            match self.output.format {
                Format::Csv => "csv",
                Format::Json => "json",
            }
            .into(),
        );
        if let Some(p) = &self.output.path {
            put("output.path", p.display().to_string());
        }
        let t = &self.tolerances;
        put("tolerances.quad_tol", num(t.quad_tol));
        put("tolerances.fit_rms", num(t.fit_rms));
        put("tolerances.fit_min_points", t.fit_min_points.to_string());
        put("tolerances.fit_min_peaks", t.fit_min_peaks.to_string());
        out
    }
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

const KEYS: &[&str] = &[
    "model.omega",
    "model.eps",
    "model.cutoff",
    "model.lambda_th",
    "model.mu",
    "lattice.n_sites",
    "lattice.dx",
    "lattice.smear_sigma",
    "lattice.dt",
    "lattice.t_final",
    "lattice.window_lo",
    "lattice.window_hi",
    "lattice.sample_dt",
    "lattice.profile_extent",
    "lattice.thermometer_nu0",
    "lattice.energy_tol",
    "lattice.plateau_tol",
    "lattice.inverted_thermometer",
    "sweep.axis",
    "sweep.values",
    "output.format",
    "output.path",
    "tolerances.quad_tol",
    "tolerances.fit_rms",
    "tolerances.fit_min_points",
    "tolerances.fit_min_peaks",
];

struct Entries {
    map: HashMap<&'static str, (usize, String)>,
}

impl Entries {
    fn line(&self, key: &str) -> Option<usize> {
        self.map.get(key).map(|e| e.0)
    }

    fn has_prefix(&self, prefix: &str) -> bool {
        self.map.keys().any(|k| k.starts_with(prefix))
    }

    fn get<T: std::str::FromStr>(&self, key: &'static str, expected: &'static str) -> Result<Option<T>, ConfigError> {
        match self.map.get(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse()
                .map(Some)
                .map_err(|_| ConfigError::TypeMismatch { line: *line, key: key.into(), expected, value: v.clone() }),
        }
    }

    fn f64(&self, key: &'static str) -> Result<Option<f64>, ConfigError> {
        self.get(key, "a number")
    }

    fn usize(&self, key: &'static str) -> Result<Option<usize>, ConfigError> {
        self.get(key, "a non-negative integer")
    }
}

fn param_key(e: &ParamError) -> &'static str {
    match e {
        ParamError::NonPositiveFrequency { field, .. } | ParamError::Negative { field, .. } | ParamError::NotFinite { field } => {
            match *field {
                "omega" => "model.omega",
                "eps" => "model.eps",
                "cutoff" => "model.cutoff",
                "lambda_th" => "model.lambda_th",
                _ => "model.mu",
            }
        }
        ParamError::CutoffBelowResonance { .. } => "model.cutoff",
        ParamError::ThermometerUnstable { .. } => "model.mu",
    }
}

fn model_violation(entries: &Entries, err: &ValidationError, context: &str) -> ConfigError {
    let first = &err.errors()[0];
    let key = param_key(first);
    ConfigError::InvariantViolation {
        line: entries.line(key),
        key: key.into(),
        message: format!("{context}{}", err.errors().iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; ")),
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut map = HashMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split_once('#').map_or(raw, |(a, _)| a).trim();
        if content.is_empty() {
            continue;
        }
        let Some((k, v)) = content.split_once('=') else {
            return Err(ConfigError::Syntax { line, message: format!("expected `section.key=value`, got `{content}`") });
        };
        let (k, v) = (k.trim(), v.trim());
        if k.split('.').count() != 2 || k.split('.').any(str::is_empty) {
            return Err(ConfigError::Syntax { line, message: format!("key `{k}` must have the form section.key") });
        }
        let Some(&key) = KEYS.iter().find(|&&x| x == k) else {
            return Err(ConfigError::UnknownKey { line, key: k.into() });
        };
        if let Some((first, _)) = map.insert(key, (line, v.to_string())) {
            return Err(ConfigError::Syntax { line, message: format!("`{k}` already set on line {first}") });
        }
    }
    let e = Entries { map };

    let model = RawParams {
        omega: e.f64("model.omega")?.unwrap_or(1.0),
        eps: e.f64("model.eps")?.unwrap_or(1.0),
        cutoff: e.f64("model.cutoff")?.unwrap_or(1e3),
        lambda_th: e.f64("model.lambda_th")?,
        mu: e.f64("model.mu")?.unwrap_or(0.0),
    };
    let params = model.validate().map_err(|err| model_violation(&e, &err, ""))?;

    let lattice = if e.has_prefix("lattice.") {
        let d = LatticeConfig::default();
        let cfg = LatticeConfig {
            n_sites: e.usize("lattice.n_sites")?.unwrap_or(d.n_sites),
            dx: e.f64("lattice.dx")?.unwrap_or(d.dx),
            smear_sigma: e.f64("lattice.smear_sigma")?.or(d.smear_sigma),
            dt: e.f64("lattice.dt")?.unwrap_or(d.dt),
            t_final: e.f64("lattice.t_final")?.unwrap_or(d.t_final),
            window: (
                e.f64("lattice.window_lo")?.unwrap_or(d.window.0),
                e.f64("lattice.window_hi")?.unwrap_or(d.window.1),
            ),
            sample_dt: e.f64("lattice.sample_dt")?.unwrap_or(d.sample_dt),
            profile_extent: e.f64("lattice.profile_extent")?.unwrap_or(d.profile_extent),
            thermometer_nu0: e.f64("lattice.thermometer_nu0")?.unwrap_or(d.thermometer_nu0),
            energy_tol: e.f64("lattice.energy_tol")?.unwrap_or(d.energy_tol),
            plateau_tol: e.f64("lattice.plateau_tol")?.unwrap_or(d.plateau_tol),
            inverted_thermometer: e.get("lattice.inverted_thermometer", "true or false")?.unwrap_or(d.inverted_thermometer),
        };
        if let Err(err) = cfg.validate(&params) {
            let first = e.map.iter().filter(|(k, _)| k.starts_with("lattice.")).map(|(_, v)| v.0).min();
            return Err(ConfigError::InvariantViolation { line: first, key: "lattice".into(), message: err.to_string() });
        }
        Some(cfg)
    } else {
        None
    };

    let sweep = match (e.map.get("sweep.axis"), e.map.get("sweep.values")) {
        (None, None) => None,
        (Some((line, a)), values) => {
            let axis = Axis::parse(a).ok_or_else(|| ConfigError::InvariantViolation {
                line: Some(*line),
                key: "sweep.axis".into(),
                message: format!("`{a}` is not a model parameter (omega, eps, cutoff, lambda_th, mu)"),
            })?;
            let Some((vline, vs)) = values else {
                return Err(ConfigError::InvariantViolation {
                    line: Some(*line),
                    key: "sweep.values".into(),
                    message: "a sweep axis needs a value list".into(),
                });
            };
            let values = vs
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| ConfigError::TypeMismatch {
                    line: *vline,
                    key: "sweep.values".into(),
                    expected: "a comma-separated list of numbers",
                    value: vs.clone(),
                })?;
            for &v in &values {
                axis.apply(model, v).validate().map_err(|err| ConfigError::InvariantViolation {
                    line: Some(*vline),
                    key: "sweep.values".into(),
                    message: format!("{} = {v}: {err}", axis.name()),
                })?;
            }
            Some(Sweep { axis, values })
        }
        (None, Some((line, _))) => {
            return Err(ConfigError::InvariantViolation {
                line: Some(*line),
                key: "sweep.axis".into(),
                message: "sweep values given without an axis".into(),
            })
        }
    };

    let format = match e.map.get("output.format") {
        None => Format::Csv,
        Some((_, f)) if f == "csv" => Format::Csv,
        Some((_, f)) if f == "json" => Format::Json,
        Some((line, f)) => {
            return Err(ConfigError::TypeMismatch { line: *line, key: "output.format".into(), expected: "csv or json", value: f.clone() })
        }
    };
    let path = e.map.get("output.path").map(|(_, p)| PathBuf::from(p));
    if let Some(p) = &path {
        check_writable(p).map_err(|message| ConfigError::InvariantViolation {
            line: e.line("output.path"),
            key: "output.path".into(),
            message,
        })?;
    }

    let d = Tolerances::default();
    let tolerances = Tolerances {
        quad_tol: e.f64("tolerances.quad_tol")?.unwrap_or(d.quad_tol),
        fit_rms: e.f64("tolerances.fit_rms")?.unwrap_or(d.fit_rms),
        fit_min_points: e.usize("tolerances.fit_min_points")?.unwrap_or(d.fit_min_points),
        fit_min_peaks: e.usize("tolerances.fit_min_peaks")?.unwrap_or(d.fit_min_peaks),
    };
    for (key, v) in [("tolerances.quad_tol", tolerances.quad_tol), ("tolerances.fit_rms", tolerances.fit_rms)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(ConfigError::InvariantViolation { line: e.line(key), key: key.into(), message: format!("{v} must be positive") });
        }
    }

    Ok(RunConfig { model, lattice, sweep, output: OutputConfig { format, path }, tolerances })
}

/// The parent directory exists and the target is not a directory.
pub fn check_writable(p: &std::path::Path) -> Result<(), String> {
    if p.is_dir() {
        return Err(format!("{} is a directory", p.display()));
    }
    let parent = p.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(std::path::Path::new("."));
    if !parent.is_dir() {
        return Err(format!("directory {} does not exist", parent.display()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_defaults() {
        let c = parse_config("model.omega=1.0\nmodel.eps=1.0\nmodel.cutoff=1000").unwrap();
        assert_eq!(c.model.omega, 1.0);
        assert_eq!(c.lattice, None);
        assert_eq!(c.sweep, None);
        assert_eq!(c.output.format, Format::Csv);
        assert_eq!(c.tolerances, Tolerances::default());
    }

    #[test]
    fn negative_frequency_names_key() {
        match parse_config("model.omega=-1") {
            Err(ConfigError::InvariantViolation { line, key, .. }) => {
                assert_eq!(key, "model.omega");
                assert_eq!(line, Some(1));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn misspelled_key_is_unknown() {
        assert_eq!(parse_config("model.omga=1"), Err(ConfigError::UnknownKey { line: 1, key: "model.omga".into() }));
    }

    #[test]
    fn comments_and_blank_lines() {
        let c = parse_config("# header\n\nmodel.eps = 0.5   # weak\n").unwrap();
        assert_eq!(c.model.eps, 0.5);
    }

    #[test]
    fn syntax_errors_carry_line() {
        assert!(matches!(parse_config("model.eps=1\nnonsense"), Err(ConfigError::Syntax { line: 2, .. })));
        assert!(matches!(parse_config("eps=1"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(parse_config("model.eps=1\nmodel.eps=2"), Err(ConfigError::Syntax { line: 2, .. })));
    }

    #[test]
    fn type_mismatch() {
        assert!(matches!(
            parse_config("model.eps=one"),
            Err(ConfigError::TypeMismatch { line: 1, ref key, .. }) if key == "model.eps"
        ));
        assert!(matches!(parse_config("lattice.n_sites=4.5"), Err(ConfigError::TypeMismatch { .. })));
        assert!(matches!(parse_config("output.format=xml"), Err(ConfigError::TypeMismatch { .. })));
    }

    #[test]
    fn sweep_axis_must_be_a_model_field() {
        let err = parse_config("sweep.axis=temperature\nsweep.values=1,2").unwrap_err();
        assert!(matches!(err, ConfigError::InvariantViolation { ref key, .. } if key == "sweep.axis"));
        let ok = parse_config("sweep.axis=eps\nsweep.values=0.5, 1,1.5").unwrap();
        assert_eq!(ok.sweep.unwrap().values, vec![0.5, 1.0, 1.5]);
    }

    #[test]
    fn sweep_values_are_validated() {
        let err = parse_config("model.lambda_th=0.7\nsweep.axis=mu\nsweep.values=0.1,0.9").unwrap_err();
        assert!(matches!(err, ConfigError::InvariantViolation { line: Some(3), ref key, .. } if key == "sweep.values"));
    }

    #[test]
    fn lattice_invariants_are_checked() {
        let err = parse_config("lattice.dt=0.5").unwrap_err();
        assert!(matches!(err, ConfigError::InvariantViolation { line: Some(1), ref key, .. } if key == "lattice"));
        let ok = parse_config("lattice.n_sites=4000").unwrap();
        assert_eq!(ok.lattice.unwrap().n_sites, 4000);
    }

    #[test]
    fn unwritable_output_path() {
        let err = parse_config("output.path=/nonexistent-dir/x.csv").unwrap_err();
        assert!(matches!(err, ConfigError::InvariantViolation { ref key, .. } if key == "output.path"));
    }

    #[test]
    fn round_trip() {
        let text = "model.omega=1.25\nmodel.eps=1.2\nmodel.cutoff=100\nmodel.lambda_th=0.7\nmodel.mu=0.01\n\
                    lattice.n_sites=4000\nlattice.smear_sigma=0.1\nsweep.axis=mu\nsweep.values=0.01,0.003,0.001\n\
                    output.format=json\ntolerances.quad_tol=1e-9\n";
        let c = parse_config(text).unwrap();
        let again = parse_config(&c.serialize()).unwrap();
        assert_eq!(c, again);
        assert_eq!(c.serialize(), again.serialize());
    }
}
