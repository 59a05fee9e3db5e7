//! Behavioral SAR ADC sizing.
//!
//! A converter-level model ([`adc`]) feeds two fidelities of evaluation: a
//! cheap single-point check against derived per-block specifications
//! ([`specs`], [`coarse`]) and a coherent sine test with FFT metrics
//! ([`harness`]). A surrogate-assisted differential evolution ([`global`])
//! searches the coarse problem, and a blended Hooke-Jeeves ([`local`])
//! refines the variables that did not converge, periodically checking
//! candidates with the sine test. [`pipeline`] strings the phases together
//! and persists reproducible run records.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the run
//! pipeline and its file formats are `f64`.

// `!(x > 0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adc;
pub mod coarse;
pub mod error;
pub mod global;
pub mod harness;
pub mod local;
pub mod pipeline;
pub mod rng;
pub mod scalar;
pub mod specs;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type AdcConfigF64 = adc::AdcConfig<f64>;
pub type DesignPointF64 = adc::DesignPoint<f64>;
pub type DesignBoundsF64 = adc::DesignBounds<f64>;
pub type AdcModelF64 = adc::AdcModel<f64>;
pub type ConversionTraceF64 = adc::ConversionTrace<f64>;
pub type DerivedSpecsF64 = specs::DerivedSpecs<f64>;
pub type CoarseReportF64 = coarse::CoarseReport<f64>;
pub type TestPlanF64 = harness::TestPlan<f64>;
pub type SpectrumReportF64 = harness::SpectrumReport<f64>;
pub type GlobalParamsF64 = global::GlobalParams<f64>;
pub type LocalParamsF64 = local::LocalParams<f64>;

pub type AdcModelF32 = adc::AdcModel<f32>;
pub type DesignPointF32 = adc::DesignPoint<f32>;
pub type DerivedSpecsF32 = specs::DerivedSpecs<f32>;
