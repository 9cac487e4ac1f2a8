//! Physical parameters of the oscillator, bath and thermometer.
//!
//! Units are natural (hbar = k_B = c = 1, unit masses). The oscillator has
//! frequency `omega`, couples with strength `eps` to the velocity of a
//! one-dimensional massless field at the origin, and the thermometer
//! oscillator (`lambda_th`) couples to it through `mu * q * z`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

/// One violated invariant of a raw parameter record.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("{field} must be a positive frequency (got {value})")]
    NonPositiveFrequency { field: &'static str, value: f64 },
    #[error("{field} must be non-negative (got {value})")]
    Negative { field: &'static str, value: f64 },
    #[error("{field} is not finite")]
    NotFinite { field: &'static str },
    #[error("cutoff {cutoff} must exceed the oscillator frequency {omega}")]
    CutoffBelowResonance { cutoff: f64, omega: f64 },
    #[error("thermometer unstable: mu^2 = {mu_sq} >= omega^2 * lambda_th^2 = {bound}")]
    ThermometerUnstable { mu_sq: f64, bound: f64 },
}

/// All invariants violated by a raw record, in field order.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid model parameters: {}", list(.0))]
pub struct ValidationError(pub Vec<ParamError>);

fn list(errs: &[ParamError]) -> String {
    errs.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; ")
}

impl ValidationError {
    pub fn errors(&self) -> &[ParamError] {
        &self.0
    }
}

/// Unvalidated parameter record, as read from a config file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawParams<R> {
    pub omega: R,
    pub eps: R,
    pub cutoff: R,
    /// `None` when no thermometer is attached.
    pub lambda_th: Option<R>,
    pub mu: R,
}

impl<R: Real> RawParams<R> {
    pub fn new(omega: R, eps: R, cutoff: R) -> Self {
        Self { omega, eps, cutoff, lambda_th: None, mu: R::zero() }
    }

    pub fn with_thermometer(mut self, lambda_th: R, mu: R) -> Self {
        self.lambda_th = Some(lambda_th);
        self.mu = mu;
        self
    }

    pub fn validate(self) -> Result<ModelParams<R>, ValidationError> {
        ModelParams::validate(self)
    }
}

/// Validated, immutable model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelParams<R> {
    omega: R,
    eps: R,
    cutoff: R,
    lambda_th: Option<R>,
    mu: R,
}

/// Damping regime of the bare oscillator, decided by `eps^2` against `4 omega`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    Underdamped,
    Critical,
    Overdamped,
}

impl<R: Real> ModelParams<R> {
    /// Checks every invariant and reports all violations at once.
    pub fn validate(raw: RawParams<R>) -> Result<Self, ValidationError> {
        let mut errs = Vec::new();
        let f = |x: R| x.to_f64_lossy();
        let mut finite = |name: &'static str, x: R| {
            if x.is_finite() {
                true
            } else {
                errs.push(ParamError::NotFinite { field: name });
                false
            }
        };
        let ok_omega = finite("omega", raw.omega);
        let ok_eps = finite("eps", raw.eps);
        let ok_cut = finite("cutoff", raw.cutoff);
        let ok_mu = finite("mu", raw.mu);
        let ok_lam = raw.lambda_th.is_none_or(|l| finite("lambda_th", l));

        if ok_omega && raw.omega <= R::zero() {
            errs.push(ParamError::NonPositiveFrequency { field: "omega", value: f(raw.omega) });
        }
        if ok_eps && raw.eps < R::zero() {
            errs.push(ParamError::Negative { field: "eps", value: f(raw.eps) });
        }
        if ok_cut && raw.cutoff <= R::zero() {
            errs.push(ParamError::NonPositiveFrequency { field: "cutoff", value: f(raw.cutoff) });
        } else if ok_cut && ok_omega && raw.omega > R::zero() && raw.cutoff <= raw.omega {
            errs.push(ParamError::CutoffBelowResonance { cutoff: f(raw.cutoff), omega: f(raw.omega) });
        }
        if ok_mu && raw.mu < R::zero() {
            errs.push(ParamError::Negative { field: "mu", value: f(raw.mu) });
        }
        if let Some(lam) = raw.lambda_th {
            if ok_lam && lam <= R::zero() {
                errs.push(ParamError::NonPositiveFrequency { field: "lambda_th", value: f(lam) });
            } else if ok_lam && ok_mu && ok_omega && raw.omega > R::zero() {
                let mu_sq = raw.mu * raw.mu;
                let bound = raw.omega * raw.omega * lam * lam;
                if mu_sq >= bound {
                    errs.push(ParamError::ThermometerUnstable { mu_sq: f(mu_sq), bound: f(bound) });
                }
            }
        }

        if errs.is_empty() {
            Ok(Self {
                omega: raw.omega,
                eps: raw.eps,
                cutoff: raw.cutoff,
                lambda_th: raw.lambda_th,
                mu: raw.mu,
            })
        } else {
            Err(ValidationError(errs))
        }
    }

    pub fn omega(&self) -> R {
        self.omega
    }
    pub fn eps(&self) -> R {
        self.eps
    }
    pub fn cutoff(&self) -> R {
        self.cutoff
    }
    pub fn lambda_th(&self) -> Option<R> {
        self.lambda_th
    }
    pub fn mu(&self) -> R {
        self.mu
    }

    /// Ohmic damping rate `eps^2 / 2`.
    pub fn gamma(&self) -> R {
        self.eps * self.eps / R::lit(2.0)
    }

    pub fn raw(&self) -> RawParams<R> {
        RawParams {
            omega: self.omega,
            eps: self.eps,
            cutoff: self.cutoff,
            lambda_th: self.lambda_th,
            mu: self.mu,
        }
    }

    /// Exact comparison of `eps^2` with `4 omega`; equality is `Critical`.
    pub fn classify_regime(&self) -> Regime {
        let lhs = self.eps * self.eps;
        let rhs = R::lit(4.0) * self.omega;
        if lhs < rhs {
            Regime::Underdamped
        } else if lhs > rhs {
            Regime::Overdamped
        } else {
            Regime::Critical
        }
    }

    /// Warns when the cutoff is not well separated from the physical scales.
    pub fn cutoff_warning(&self) -> Option<String> {
        let scale = self.omega.max(self.eps * self.eps);
        (self.cutoff < R::lit(10.0) * scale).then(|| {
            format!(
                "cutoff {} is less than 10 x max(omega, eps^2) = {}; log-divergent moments depend strongly on it",
                self.cutoff,
                R::lit(10.0) * scale
            )
        })
    }

    /// Copy with a different coupling, re-validated.
    pub fn with_eps(&self, eps: R) -> Result<Self, ValidationError> {
        RawParams { eps, ..self.raw() }.validate()
    }

    pub fn with_mu(&self, mu: R) -> Result<Self, ValidationError> {
        RawParams { mu, ..self.raw() }.validate()
    }

    pub fn with_cutoff(&self, cutoff: R) -> Result<Self, ValidationError> {
        RawParams { cutoff, ..self.raw() }.validate()
    }

    pub fn with_omega(&self, omega: R) -> Result<Self, ValidationError> {
        RawParams { omega, ..self.raw() }.validate()
    }
}

/// Free-function form of [`ModelParams::classify_regime`].
pub fn classify_regime<R: Real>(p: &ModelParams<R>) -> Regime {
    p.classify_regime()
}
