//! Performance budgets derived from resolution, supply and the scaling
//! factor `alpha`.
//!
//! Every coarse bound gives its error source the same power as the
//! quantization noise, `LSB^2 / 12`. `alpha` relaxes (or tightens) the coarse
//! bounds linearly; the SNDR ceiling is a reporting reference and does not
//! depend on it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Full coarse constraint set for one `(N, V_DD, alpha)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedSpecs<T> {
    pub n_bits: u32,
    pub alpha: T,
    pub vdd: T,
    /// `V_DD / 2^N`.
    pub lsb: T,
    /// Upper bounds on the step size ratio error of bit pairs `(i, i+1)`,
    /// `i = 1..N-1` stored at index `i-1`.
    pub ssre_bound: Vec<T>,
    /// Upper bound on `|V_ideal - V_sampled|` (V).
    pub sampling_bound: T,
    /// Upper bound on total input-referred thermal noise (V rms).
    pub noise_bound: T,
    /// `6.02 N - 4.25` dB.
    pub sndr_ceiling: T,
}

impl<T: Scalar> DerivedSpecs<T> {
    pub fn derive(n_bits: u32, vdd: T, alpha: T) -> Result<Self> {
        check_inputs(n_bits, alpha)?;
        if !(vdd > T::zero()) {
            return Err(Error::Spec(format!("V_DD must be positive, got {vdd}")));
        }
        Ok(Self {
            n_bits,
            alpha,
            vdd,
            lsb: vdd / pow2::<T>(n_bits as i32),
            ssre_bound: derive_ssre_bounds(n_bits, alpha)?,
            sampling_bound: derive_sampling_bound(n_bits, vdd, alpha)?,
            noise_bound: derive_noise_bound(n_bits, vdd, alpha)?,
            sndr_ceiling: derive_sndr_ceiling(n_bits)?,
        })
    }

    /// Number of coarse slack entries: `N-1` SSRE, sampling, noise, timing.
    pub fn constraint_count(&self) -> usize {
        self.n_bits as usize - 1 + 3
    }
}

fn check_inputs<T: Scalar>(n_bits: u32, alpha: T) -> Result<()> {
    if n_bits < 2 {
        return Err(Error::Spec(format!("resolution must be >= 2 bits, got {n_bits}")));
    }
    if !(alpha > T::zero()) || !alpha.is_finite() {
        return Err(Error::Spec(format!("alpha must be positive and finite, got {alpha}")));
    }
    Ok(())
}

pub(crate) fn pow2<T: Scalar>(e: i32) -> T {
    T::lit(2.0).powi(e)
}

/// Equal per-bit relative error budget `1 / (2^(N-i) sqrt(12 N))` for
/// `i = 1..=N`.
///
/// With this budget each bit contributes `LSB^2 / (12 N)` error power, so the
/// N bits together match the quantization noise.
pub fn relative_error_budget<T: Scalar>(n_bits: u32, bit: u32) -> T {
    let n = T::of_usize(n_bits as usize);
    T::one() / (pow2::<T>((n_bits - bit) as i32) * (T::lit(12.0) * n).sqrt())
}

/// `alpha / (2^(N-i-1) sqrt(12 N))` for `i = 1..N-1`.
pub fn derive_ssre_bounds<T: Scalar>(n_bits: u32, alpha: T) -> Result<Vec<T>> {
    check_inputs(n_bits, alpha)?;
    let root = (T::lit(12.0) * T::of_usize(n_bits as usize)).sqrt();
    Ok((1..n_bits)
        .map(|i| alpha / (pow2::<T>((n_bits - i - 1) as i32) * root))
        .collect())
}

/// `alpha V_DD / (2^N sqrt(12))`.
pub fn derive_sampling_bound<T: Scalar>(n_bits: u32, vdd: T, alpha: T) -> Result<T> {
    check_inputs(n_bits, alpha)?;
    Ok(alpha * vdd / (pow2::<T>(n_bits as i32) * T::lit(12.0).sqrt()))
}

/// Thermal-noise bound; same right-hand side as the sampling bound.
pub fn derive_noise_bound<T: Scalar>(n_bits: u32, vdd: T, alpha: T) -> Result<T> {
    derive_sampling_bound(n_bits, vdd, alpha)
}

/// `6.02 N - 4.25` dB.
pub fn derive_sndr_ceiling<T: Scalar>(n_bits: u32) -> Result<T> {
    if n_bits < 2 {
        return Err(Error::Spec(format!("resolution must be >= 2 bits, got {n_bits}")));
    }
    Ok(T::lit(6.02) * T::of_usize(n_bits as usize) - T::lit(4.25))
}
