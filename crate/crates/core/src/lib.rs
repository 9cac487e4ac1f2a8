//! Stationary state of a harmonic oscillator coupled to the vacuum of a
//! one-dimensional massless scalar field, read out two ways: through its
//! instantaneous reduced covariance and through a weakly coupled
//! thermometer oscillator.

// negated comparisons reject NaN along with out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod correlations;
pub mod errata;
pub mod gaussian_state;
pub mod lattice_oracle;
pub mod model;
pub mod quadrature;
pub mod scalar;
pub mod spectral_moments;
pub mod thermometer;

pub use model::{ModelParams, RawParams, Regime};
pub use scalar::Real;

pub type Params = ModelParams<f64>;
pub type ParamsF32 = ModelParams<f32>;
