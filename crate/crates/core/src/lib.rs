//! Linear and perturbed-linear dynamics on time scales.
//!
//! The core is generic over the scalar type through [`num::Real`]; the
//! aliases at the crate root fix it to `f64`.

// `!(a < b)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calculus;
pub mod destabilize;
pub mod embedding;
pub mod error;
pub mod linalg;
pub mod linstab;
pub mod num;
pub mod ode;
pub mod presets;
pub mod timescale;

pub use error::{Error, Result};

pub type TimeScale = timescale::TimeScale<f64>;
pub type CoefficientMap = linstab::CoefficientMap<f64>;
pub type Transition = ode::Transition<f64>;
pub type ExponentEstimate = linstab::ExponentEstimate<f64>;
pub type IntegratorConfig = ode::IntegratorConfig<f64>;
pub type QuadratureConfig = timescale::QuadratureConfig<f64>;
pub type RotationSchedule = destabilize::RotationSchedule<f64>;
pub type DestabilizationReport = destabilize::DestabilizationReport<f64>;
pub type ExtendedCoefficient = embedding::ExtendedCoefficient<f64>;
pub type Preset = presets::Preset<f64>;
pub type CMat = num::CMat<f64>;
pub type CVec = num::CVec<f64>;
pub type Cplx = num::Cplx<f64>;
