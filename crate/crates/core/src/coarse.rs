//! Cheap single-point measurements used by the global phase.
//!
//! Three independent tests per candidate: a noise-free transient at full
//! differential input (sampling error and DAC step ratios), the analytic
//! thermal-noise total, and the mean conversion energy over a fixed input
//! grid.

use serde::{Deserialize, Serialize};

use crate::adc::AdcModel;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::specs::DerivedSpecs;

/// Inputs of the power grid.
pub const POWER_GRID_POINTS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinglePointResult<T> {
    pub sampling_error: T,
    pub ssre: Vec<T>,
    pub timing_ok: bool,
}

/// Measured coarse metrics plus signed margins against [`DerivedSpecs`].
///
/// `slack` layout: `ssre[0..N-1]`, sampling, noise, timing. Positive means
/// satisfied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoarseReport<T> {
    pub sampling_error: T,
    pub ssre: Vec<T>,
    pub noise_rms: T,
    pub power: T,
    pub timing_ok: bool,
    pub slack: Vec<T>,
}

impl<T: Scalar> CoarseReport<T> {
    pub fn objective(&self) -> T {
        self.power
    }

    pub fn is_feasible(&self) -> bool {
        self.slack.iter().all(|&s| s >= T::zero())
    }

    pub fn total_violation(&self) -> T {
        total_violation(&self.slack)
    }

    /// Violation with each slack divided by the magnitude of its bound, so
    /// that volts and ratios are commensurable.
    pub fn relative_violation(&self, specs: &DerivedSpecs<T>) -> T {
        self.slack
            .iter()
            .zip(bound_vector(specs))
            .map(|(&s, b)| (-s / b).max(T::zero()))
            .fold(T::zero(), |a, b| a + b)
    }
}

/// `sum max(0, -slack)`.
pub fn total_violation<T: Scalar>(slack: &[T]) -> T {
    slack.iter().map(|&s| (-s).max(T::zero())).fold(T::zero(), |a, b| a + b)
}

/// Bounds in slack order; timing counts as a unit bound.
pub fn bound_vector<T: Scalar>(specs: &DerivedSpecs<T>) -> Vec<T> {
    let mut b = specs.ssre_bound.clone();
    b.push(specs.sampling_bound);
    b.push(specs.noise_bound);
    b.push(T::one());
    b
}

/// `|s_i / s_{i+1} - 2|` for consecutive steps. A pair with a missing
/// (zero) step, as left behind by a timing failure, scores 2.
pub fn ssre_from_steps<T: Scalar>(steps: &[T]) -> Vec<T> {
    let two = T::lit(2.0);
    steps
        .windows(2)
        .map(|w| {
            if w[0] > T::zero() && w[1] > T::zero() {
                (w[0] / w[1] - two).abs()
            } else {
                two
            }
        })
        .collect()
}

/// Noise-free transient with the differential input held at `V_DD` and the
/// array reset to zero; steps are read at comparator strobe time.
pub fn single_point_test<T: Scalar>(model: &AdcModel<T>) -> SinglePointResult<T> {
    let v_in = model.cfg.vdd;
    let sampled = model.sample_input(v_in, T::zero(), None);
    let trace = model.convert(sampled, None);
    SinglePointResult {
        sampling_error: (v_in - sampled).abs(),
        ssre: ssre_from_steps(&trace.applied_step),
        timing_ok: trace.timing_ok,
    }
}

/// `sqrt(2kT/C_tot + sigma_cmp^2)`.
pub fn thermal_noise_estimate<T: Scalar>(model: &AdcModel<T>) -> T {
    let ktc = model.ktc_noise();
    let s = model.design.sigma_cmp;
    (ktc * ktc + s * s).sqrt()
}

/// Bin centres of an 8-way split of the differential full scale.
pub fn power_grid<T: Scalar>(model: &AdcModel<T>) -> Vec<T> {
    let v_fs = model.cfg.v_fs();
    let n = T::of_usize(POWER_GRID_POINTS);
    (0..POWER_GRID_POINTS)
        .map(|k| v_fs * ((T::of_usize(k) + T::lit(0.5)) / n - T::lit(0.5)))
        .collect()
}

/// Mean energy per conversion times the conversion rate.
pub fn mean_power<T: Scalar>(energies: &[T], f_s: T) -> T {
    let sum = energies.iter().fold(T::zero(), |a, &b| a + b);
    sum / T::of_usize(energies.len().max(1)) * f_s
}

pub fn power_estimate<T: Scalar>(model: &AdcModel<T>) -> T {
    let energies: Vec<T> = power_grid(model)
        .into_iter()
        .map(|v| model.sample_and_convert(v, T::zero(), None).e_total())
        .collect();
    mean_power(&energies, model.cfg.f_s)
}

pub fn evaluate_coarse<T: Scalar>(model: &AdcModel<T>, specs: &DerivedSpecs<T>) -> Result<CoarseReport<T>> {
    if model.n_bits() != specs.n_bits {
        return Err(Error::Spec(format!(
            "model has {} bits, specs derived for {}",
            model.n_bits(),
            specs.n_bits
        )));
    }
    let (single, (noise_rms, power)) = rayon::join(
        || single_point_test(model),
        || rayon::join(|| thermal_noise_estimate(model), || power_estimate(model)),
    );

    let mut slack: Vec<T> = single
        .ssre
        .iter()
        .zip(&specs.ssre_bound)
        .map(|(&m, &b)| b - m)
        .collect();
    slack.push(specs.sampling_bound - single.sampling_error);
    slack.push(specs.noise_bound - noise_rms);
    slack.push(if single.timing_ok { T::one() } else { -T::one() });

    Ok(CoarseReport {
        sampling_error: single.sampling_error,
        ssre: single.ssre,
        noise_rms,
        power,
        timing_ok: single.timing_ok,
        slack,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adc::{AdcConfig, DesignPoint};

    #[test]
    fn ideal_model_measures_nothing() {
        let m = AdcModel::<f64>::ideal(8, 1.0, 1e6);
        let r = single_point_test(&m);
        assert_eq!(r.sampling_error, 0.0);
        assert!(r.ssre.iter().all(|&s| s == 0.0));
        assert_eq!(r.ssre.len(), 7);
        assert!(r.timing_ok);

        let specs = DerivedSpecs::derive(8, 1.0, 1.0).unwrap();
        let rep = evaluate_coarse(&m, &specs).unwrap();
        assert_eq!(rep.slack.len(), specs.constraint_count());
        assert!(rep.slack.iter().all(|&s| s > 0.0));
        assert!(rep.is_feasible());
        // Ideal array still draws switching charge; no other terms.
        assert!(rep.power > 0.0);
    }

    #[test]
    fn step_ratio_examples() {
        let a = [1.0f64 * 1.01, 0.5];
        assert!((ssre_from_steps(&a)[0] - 0.02).abs() < 1e-15);
        let b = [1.0f64 * 1.01, 0.5 * 1.01];
        assert!(ssre_from_steps(&b)[0].abs() < 1e-15);
        assert_eq!(ssre_from_steps(&[1.0f64, 0.0]), vec![2.0]);
    }

    #[test]
    fn noise_examples() {
        let cfg = AdcConfig::new(10, 1e6, 1.0);
        let mut d = AdcModel::<f64>::ideal(10, 1.0, 1e6).design;
        d.c_unit = 1e-12 / 512.0;
        let m = AdcModel::derive(d, cfg.clone());
        assert!((thermal_noise_estimate(&m) - 91.0e-6).abs() < 0.05e-6);
        d.sigma_cmp = 100e-6;
        let m = AdcModel::derive(d, cfg.clone());
        assert!((thermal_noise_estimate(&m) - 135.2e-6).abs() < 0.05e-6);
        d.c_unit = 1e6;
        let m = AdcModel::derive(d, cfg);
        assert!((thermal_noise_estimate(&m) - 100e-6).abs() < 1e-15);
    }

    #[test]
    fn power_scales_with_rate() {
        assert!((mean_power(&[10e-12f64; 8], 1e6) - 10e-6).abs() < 1e-18);
        let ideal = AdcModel::<f64>::ideal(8, 1.0, 1e6);
        let mut d = ideal.design;
        d.c_unit = 0.0;
        let m = AdcModel::derive(d, ideal.cfg.clone());
        assert_eq!(power_estimate(&m), 0.0);

        let m1 = AdcModel::<f64>::ideal(8, 1.0, 1e6);
        let mut m2 = m1.clone();
        m2.cfg.f_s = 2e6;
        assert!((power_estimate(&m2) / power_estimate(&m1) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn grid_spans_full_scale() {
        let m = AdcModel::<f64>::ideal(8, 1.0, 1e6);
        let g = power_grid(&m);
        assert_eq!(g.len(), 8);
        assert_eq!(g[0], -0.875);
        assert_eq!(g[7], 0.875);
    }

    #[test]
    fn sampling_slack_example() {
        let cfg = AdcConfig::new(12, 1e6, 1.0);
        let d: DesignPoint<f64> = DesignPoint {
            c_unit: 2e-12 / 2048.0,
            r_sw: 1e3,
            t_sample: 10e-9,
            sigma_cmp: 10e-6,
            t_d0: 20e-12,
            tau_reg: 10e-12,
            r_drv_msb: 20.0,
            t_dff: 50e-12,
        };
        let m = AdcModel::derive(d, cfg);
        let specs = DerivedSpecs::derive(12, 1.0, 1.0).unwrap();
        let r = evaluate_coarse(&m, &specs).unwrap();
        assert!((r.sampling_error - 6.7379e-3).abs() < 1e-7);
        let s = r.slack[11];
        assert!((s - (-6.667e-3)).abs() < 1e-6, "slack {s}");
        assert!(!r.is_feasible());
    }

    #[test]
    fn boundary_slack_is_zero() {
        let m = AdcModel::<f64>::ideal(8, 1.0, 1e6);
        let mut specs = DerivedSpecs::derive(8, 1.0, 1.0).unwrap();
        specs.sampling_bound = 0.0;
        let r = evaluate_coarse(&m, &specs).unwrap();
        assert_eq!(r.slack[7], 0.0);
        assert!(r.is_feasible());
    }

    #[test]
    fn mismatched_resolution_rejected() {
        let m = AdcModel::<f64>::ideal(8, 1.0, 1e6);
        let specs = DerivedSpecs::derive(10, 1.0, 1.0).unwrap();
        assert!(matches!(evaluate_coarse(&m, &specs), Err(Error::Spec(_))));
    }

    #[test]
    fn violation_helpers() {
        assert!((total_violation(&[0.5f64, -0.2, 0.0, -0.1]) - 0.3).abs() < 1e-15);
        let specs = DerivedSpecs::<f64>::derive(4, 1.0, 1.0).unwrap();
        let r = CoarseReport {
            sampling_error: 0.0,
            ssre: vec![0.0; 3],
            noise_rms: 0.0,
            power: 0.0,
            timing_ok: false,
            slack: vec![1.0, 1.0, 1.0, 1.0, -specs.noise_bound, -1.0],
        };
        assert!((r.relative_violation(&specs) - 2.0).abs() < 1e-12);
    }
}
