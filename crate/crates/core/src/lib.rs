//! Discrete phase integral (discrete WKB) analysis of five-term recursion
//! relations `Σ_α t_{m,m+α} C_{m+α} = E C_m`, `|α| ≤ 2`.
//!
//! The numerical core is generic over [`Real`] (`f32`/`f64`); the aliases at
//! the crate root fix the scalar to `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision, clippy::needless_range_loop)]

pub mod airy;
pub mod connect;
pub mod critical;
pub mod dpi;
pub mod eikonal;
pub mod error;
pub mod model;
pub mod oracle;
pub mod quad;
pub mod scalar;
pub mod smooth;
pub mod turning;

pub use error::{Error, Result};
pub use scalar::{Amplitude, Real};

pub type Operator = model::PentadiagonalOperator<f64>;
pub type SpinParams = model::SpinModelParams<f64>;
pub type Continuum = smooth::ContinuumCoefficients<f64>;
pub type TurningPoint = turning::TurningPoint<f64>;
pub type ConnectionConstants = connect::ConnectionConstants<f64>;
pub type ConnectionResult = connect::ConnectionResult<f64>;
pub type ExactSolution = oracle::ExactSolution<f64>;
pub type EnvelopeFit = oracle::EnvelopeFit<f64>;
pub type CompareMetrics = oracle::CompareMetrics<f64>;
pub type Complex64 = num_complex::Complex<f64>;
