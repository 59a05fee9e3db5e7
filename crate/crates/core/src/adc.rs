//! Behavioral model of an N-bit differential asynchronous SAR ADC.
//!
//! Topology: top-plate sampling through a bootstrapped switch, a binary
//! weighted CDAC with Vcm-based switching, a dynamic comparator and a
//! self-timed DFF chain. Each block is reduced to the behavioral quantities
//! that set accuracy, speed and energy:
//!
//! | block            | parameters                         |
//! |------------------|------------------------------------|
//! | sampling switch  | `r_sw`, `t_sample`                 |
//! | CDAC             | `c_unit`, `r_drv_msb`              |
//! | comparator       | `sigma_cmp`, `t_d0`, `tau_reg`     |
//! | SAR logic        | `t_dff`                            |
//!
//! Voltages are differential. The full-scale range is `V_FS = 2 V_DD`, the
//! input range `[-V_FS/2, V_FS/2]`.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{NoiseDomain, NoiseKey, NormalStream};
use crate::scalar::{Scalar, BOLTZMANN};
use crate::specs::pow2;

/// Converter-level constants that are not sized by the optimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdcConfig<T> {
    pub n_bits: u32,
    /// Sampling rate (Hz).
    pub f_s: T,
    /// Supply and reference voltage (V).
    pub vdd: T,
    /// Temperature (K).
    pub temperature: T,
    /// Comparator energy per decision times its noise variance (J V^2).
    pub kappa_cmp: T,
    /// Sampling-switch driver energy times on-resistance (J Ohm).
    pub kappa_sw: T,
    /// CDAC driver energy per conversion times MSB driver resistance (J Ohm).
    pub kappa_drv: T,
    /// Energy per register transition (J).
    pub e_dff: T,
    /// Smallest residue seen by the regeneration law (V).
    pub v_floor: T,
    /// Resistance of the minimum-size CDAC driver; per-bit driver
    /// resistance stops doubling here (Ohm).
    pub r_drv_max: T,
}

impl<T: Scalar> AdcConfig<T> {
    pub fn new(n_bits: u32, f_s: T, vdd: T) -> Self {
        Self {
            n_bits,
            f_s,
            vdd,
            temperature: T::lit(300.0),
            kappa_cmp: T::lit(5e-21),
            kappa_sw: T::lit(1e-12),
            kappa_drv: T::lit(1e-11),
            e_dff: T::lit(1e-15),
            v_floor: T::lit(1e-6),
            r_drv_max: T::lit(20e3),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: T| {
            if v > T::zero() && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Validation {
                    field: name.to_string(),
                    reason: format!("must be positive and finite, got {v}"),
                })
            }
        };
        if self.n_bits < 2 || self.n_bits > 24 {
            return Err(Error::Validation {
                field: "n_bits".into(),
                reason: format!("must be in 2..=24, got {}", self.n_bits),
            });
        }
        positive("f_s", self.f_s)?;
        positive("vdd", self.vdd)?;
        positive("temperature", self.temperature)?;
        positive("v_floor", self.v_floor)?;
        positive("r_drv_max", self.r_drv_max)?;
        for (name, v) in [
            ("kappa_cmp", self.kappa_cmp),
            ("kappa_sw", self.kappa_sw),
            ("kappa_drv", self.kappa_drv),
            ("e_dff", self.e_dff),
        ] {
            if !(v >= T::zero()) || !v.is_finite() {
                return Err(Error::Validation {
                    field: name.into(),
                    reason: format!("must be non-negative, got {v}"),
                });
            }
        }
        Ok(())
    }

    /// Conversion period `1 / f_s`.
    pub fn t_conv(&self) -> T {
        T::one() / self.f_s
    }

    /// Differential full scale.
    pub fn v_fs(&self) -> T {
        T::lit(2.0) * self.vdd
    }
}

/// Behavioral design variables, all in SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignPoint<T> {
    pub c_unit: T,
    pub r_sw: T,
    pub t_sample: T,
    pub sigma_cmp: T,
    pub t_d0: T,
    pub tau_reg: T,
    pub r_drv_msb: T,
    pub t_dff: T,
}

impl<T: Scalar> DesignPoint<T> {
    pub const DIM: usize = 8;
    pub const FIELDS: [&'static str; 8] = [
        "c_unit",
        "r_sw",
        "t_sample",
        "sigma_cmp",
        "t_d0",
        "tau_reg",
        "r_drv_msb",
        "t_dff",
    ];

    pub fn to_vec(&self) -> Vec<T> {
        vec![
            self.c_unit,
            self.r_sw,
            self.t_sample,
            self.sigma_cmp,
            self.t_d0,
            self.tau_reg,
            self.r_drv_msb,
            self.t_dff,
        ]
    }

    pub fn from_slice(v: &[T]) -> Self {
        assert_eq!(v.len(), Self::DIM, "design vector length");
        Self {
            c_unit: v[0],
            r_sw: v[1],
            t_sample: v[2],
            sigma_cmp: v[3],
            t_d0: v[4],
            tau_reg: v[5],
            r_drv_msb: v[6],
            t_dff: v[7],
        }
    }
}

/// Per-variable `[lo, hi]` box for [`DesignPoint`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignBounds<T> {
    pub lo: DesignPoint<T>,
    pub hi: DesignPoint<T>,
}

impl<T: Scalar> DesignBounds<T> {
    /// Generic box wide enough for 6..14 bit converters from kHz to
    /// hundreds of MHz; sampling window scales with the conversion period.
    pub fn default_for(cfg: &AdcConfig<T>) -> Self {
        let t = cfg.t_conv();
        let l = T::lit;
        Self {
            lo: DesignPoint {
                c_unit: l(0.25e-15),
                r_sw: l(5.0),
                t_sample: l(0.02) * t,
                sigma_cmp: l(20e-6),
                t_d0: l(10e-12),
                tau_reg: l(5e-12),
                r_drv_msb: l(20.0),
                t_dff: l(20e-12),
            },
            hi: DesignPoint {
                c_unit: l(50e-15),
                r_sw: l(5e3),
                t_sample: l(0.6) * t,
                sigma_cmp: l(5e-3),
                t_d0: l(2e-9),
                tau_reg: l(1e-9),
                r_drv_msb: l(20e3),
                t_dff: l(2e-9),
            },
        }
    }

    pub fn pairs(&self) -> Vec<(T, T)> {
        self.lo.to_vec().into_iter().zip(self.hi.to_vec()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in DesignPoint::<T>::FIELDS.iter().zip(self.pairs()) {
            if !(lo > T::zero() && lo < hi && hi.is_finite()) {
                return Err(Error::Validation {
                    field: format!("bounds.{name}"),
                    reason: format!("need 0 < lo < hi, got [{lo}, {hi}]"),
                });
            }
        }
        Ok(())
    }

    /// Fails with the first out-of-box field.
    pub fn check(&self, design: &DesignPoint<T>) -> Result<()> {
        for ((name, v), (lo, hi)) in DesignPoint::<T>::FIELDS.iter().zip(design.to_vec()).zip(self.pairs()) {
            if !(v >= lo && v <= hi) {
                return Err(Error::Bounds {
                    field: name,
                    value: v.to_f64_lossy(),
                    lo: lo.to_f64_lossy(),
                    hi: hi.to_f64_lossy(),
                });
            }
        }
        Ok(())
    }
}

/// Immutable model with all derived electrical quantities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdcModel<T> {
    pub cfg: AdcConfig<T>,
    pub design: DesignPoint<T>,
    /// Single-ended array capacitance `2^(N-1) C_unit` (F).
    pub c_tot: T,
    /// `R_sw C_tot` (s).
    pub tau_smp: T,
    /// Binary-weighted capacitors, MSB first: `C_j = 2^(N-1-j) C_unit`,
    /// `j = 1..N-1`, plus an implicit unit dummy.
    pub cap: Vec<T>,
    /// Driver resistance of capacitor `j`, doubling per bit up to
    /// `r_drv_max`.
    pub r_drv: Vec<T>,
    /// Settling constants `r_drv[j] * C_j (C_tot - C_j) / C_tot`: the
    /// driver sees capacitor `j` in series with the rest of the floating
    /// array.
    pub tau_drv: Vec<T>,
    /// Ideal differential steps `A_i = V_FS / 2^i`, `i = 1..N`.
    pub ideal_step: Vec<T>,
}

impl<T: Scalar> AdcModel<T> {
    /// Checked constructor.
    pub fn build(design: DesignPoint<T>, cfg: AdcConfig<T>, bounds: &DesignBounds<T>) -> Result<Self> {
        cfg.validate()?;
        bounds.check(&design)?;
        Ok(Self::derive(design, cfg))
    }

    /// Derives the model without a bounds check. Zero resistances, delays
    /// and noise are allowed and model the ideal limit.
    pub fn derive(design: DesignPoint<T>, cfg: AdcConfig<T>) -> Self {
        let n = cfg.n_bits;
        let c_tot = pow2::<T>(n as i32 - 1) * design.c_unit;
        let cap: Vec<T> = (1..n).map(|j| pow2::<T>((n - 1 - j) as i32) * design.c_unit).collect();
        let r_drv: Vec<T> = (1..n)
            .map(|j| (design.r_drv_msb * pow2::<T>(j as i32 - 1)).min(cfg.r_drv_max.max(design.r_drv_msb)))
            .collect();
        let tau_drv = r_drv
            .iter()
            .zip(&cap)
            .map(|(&r, &c)| r * c * (c_tot - c) / c_tot)
            .collect();
        let v_fs = cfg.v_fs();
        let ideal_step = (1..=n).map(|i| v_fs / pow2::<T>(i as i32)).collect();
        Self {
            tau_smp: design.r_sw * c_tot,
            c_tot,
            cap,
            r_drv,
            tau_drv,
            ideal_step,
            design,
            cfg,
        }
    }

    /// Instant settling, no noise, no delay, no energy coefficients.
    pub fn ideal(n_bits: u32, vdd: T, f_s: T) -> Self {
        let mut cfg = AdcConfig::new(n_bits, f_s, vdd);
        cfg.kappa_cmp = T::zero();
        cfg.kappa_sw = T::zero();
        cfg.kappa_drv = T::zero();
        cfg.e_dff = T::zero();
        let design = DesignPoint {
            c_unit: T::lit(1e-15),
            r_sw: T::zero(),
            t_sample: T::lit(0.5) / f_s,
            sigma_cmp: T::zero(),
            t_d0: T::zero(),
            tau_reg: T::zero(),
            r_drv_msb: T::zero(),
            t_dff: T::zero(),
        };
        Self::derive(design, cfg)
    }

    pub fn n_bits(&self) -> u32 {
        self.cfg.n_bits
    }

    /// rms of the differential kT/C sampling noise, `sqrt(2kT/C_tot)`.
    pub fn ktc_noise(&self) -> T {
        (T::lit(2.0 * BOLTZMANN) * self.cfg.temperature / self.c_tot).sqrt()
    }

    /// Track-and-hold: first-order RC settling from the previously held
    /// value plus kT/C noise when a key is given.
    pub fn sample_input(&self, v_in: T, v_prev: T, key: Option<NoiseKey>) -> T {
        let residual = settle_residual(self.design.t_sample, self.tau_smp);
        let held = v_in - (v_in - v_prev) * residual;
        match key {
            Some(k) => {
                let z: T = NormalStream::new(k, NoiseDomain::Sampling).next_normal();
                held + z * self.ktc_noise()
            }
            None => held,
        }
    }

    /// Comparator decision time for a given input magnitude.
    pub fn comparator_delay(&self, residue: T) -> T {
        let d = &self.design;
        let floor = self.cfg.v_floor;
        let t_max = d.t_d0 + d.tau_reg * (self.cfg.vdd / floor).ln().max(T::zero());
        let t = d.t_d0 + d.tau_reg * (self.cfg.vdd / residue.abs().max(floor)).ln();
        t.max(d.t_d0).min(t_max)
    }

    /// One asynchronous successive-approximation conversion.
    ///
    /// Bit 1 compares the sampled value directly. Before bit `i >= 2` the
    /// capacitor pair `i-1` switches according to bit `i-1`; its driver has
    /// `t_settle = t_dff + t_cmp(i)` to settle before the strobe, where the
    /// comparator delay is estimated from the fully settled residue and then
    /// refined once with the partially settled one.
    pub fn convert(&self, v_sampled: T, key: Option<NoiseKey>) -> ConversionTrace<T> {
        let n = self.cfg.n_bits as usize;
        let d = &self.design;
        let t_conv = self.cfg.t_conv();
        let mut noise = key.map(|k| NormalStream::new(k, NoiseDomain::Comparator));

        let mut bits = vec![false; n];
        let mut applied_step = vec![T::zero(); n];
        let mut t_bit = vec![T::zero(); n];
        let mut dq = vec![T::zero(); n];
        let mut fired = 0usize;
        let mut timing_ok = true;
        let mut elapsed = d.t_sample;
        let mut residue = v_sampled;
        let mut charge = ChargeLedger::new(self);

        for i in 0..n {
            let t_cmp = if i == 0 {
                applied_step[0] = self.ideal_step[0];
                self.comparator_delay(residue)
            } else {
                let sign = if bits[i - 1] { -T::one() } else { T::one() };
                let full = self.ideal_step[i];
                let tau = self.tau_drv[i - 1];
                let est = self.comparator_delay(residue + sign * full);
                let partial = full * (T::one() - settle_residual(d.t_dff + est, tau));
                let t_cmp = self.comparator_delay(residue + sign * partial);
                let step = full * (T::one() - settle_residual(d.t_dff + t_cmp, tau));
                applied_step[i] = step;
                residue += sign * step;
                dq[i] = charge.switch(i - 1, bits[i - 1]);
                t_cmp
            };
            t_bit[i] = t_cmp + d.t_dff;
            elapsed += t_bit[i];
            fired += 1;
            if elapsed > t_conv {
                timing_ok = false;
                break;
            }
            let z = match noise.as_mut() {
                Some(s) => s.next_normal::<T>() * d.sigma_cmp,
                None => T::zero(),
            };
            bits[i] = residue + z >= T::zero();
        }

        let code = bits.iter().fold(0u32, |acc, &b| (acc << 1) | u32::from(b));
        let mut trace = ConversionTrace {
            code,
            bits,
            applied_step,
            t_bit,
            dq,
            t_total: elapsed,
            q_ref: T::zero(),
            comparator_firings: fired,
            energy: EnergyBreakdown::default(),
            timing_ok,
        };
        trace.q_ref = trace.dq.iter().fold(T::zero(), |a, &b| a + b);
        trace.energy = conversion_energy(&trace, self);
        trace
    }

    pub fn sample_and_convert(&self, v_in: T, v_prev: T, key: Option<NoiseKey>) -> ConversionTrace<T> {
        self.convert(self.sample_input(v_in, v_prev, key), key)
    }

    /// Reference ideal quantizer on the same range, ties to the upper code.
    pub fn ideal_code(&self, v: T) -> u32 {
        let levels = pow2::<T>(self.cfg.n_bits as i32);
        let c = ((v / self.cfg.v_fs() + T::lit(0.5)) * levels).floor();
        let max = levels - T::one();
        c.max(T::zero()).min(max).to_u32().unwrap_or(0)
    }
}

/// `exp(-t / tau)`, with `tau = 0` treated as instant settling.
fn settle_residual<T: Scalar>(t: T, tau: T) -> T {
    if tau <= T::zero() {
        T::zero()
    } else {
        (-t / tau).exp()
    }
}

/// Incremental charge accounting for Vcm-based switching on both halves of
/// the differential array. Tracks the capacitance tied to V_DD per side.
struct ChargeLedger<'a, T> {
    model: &'a AdcModel<T>,
    c_hi_p: T,
    c_hi_n: T,
}

impl<'a, T: Scalar> ChargeLedger<'a, T> {
    fn new(model: &'a AdcModel<T>) -> Self {
        Self {
            model,
            c_hi_p: T::zero(),
            c_hi_n: T::zero(),
        }
    }

    /// Charge drawn from V_DD when capacitor `j` (0-based) leaves Vcm.
    /// Decision 1 pulls the positive side to ground and the negative side to
    /// V_DD; decision 0 does the opposite.
    fn switch(&mut self, j: usize, bit: bool) -> T {
        let c = self.model.cap[j];
        if c == T::zero() {
            return T::zero();
        }
        let half = self.model.cfg.vdd * T::lit(0.5);
        let dv_top = c * half / self.model.c_tot;
        let (up, down) = if bit {
            (&mut self.c_hi_n, self.c_hi_p)
        } else {
            (&mut self.c_hi_p, self.c_hi_n)
        };
        *up += c;
        let q_up = c * half - *up * dv_top;
        let q_down = down * dv_top;
        q_up + q_down
    }
}

/// Energy of one conversion split by source (J).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown<T> {
    pub dac: T,
    pub comparator: T,
    pub logic: T,
    pub sampling_switch: T,
    pub driver: T,
}

impl<T: Scalar> EnergyBreakdown<T> {
    pub fn total(&self) -> T {
        self.dac + self.comparator + self.logic + self.sampling_switch + self.driver
    }
}

/// Record of one conversion; vectors are indexed by bit, MSB first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversionTrace<T> {
    pub code: u32,
    pub bits: Vec<bool>,
    /// Realized differential step before each decision; bit 1 carries the
    /// nominal `A_1` since top-plate sampling needs no switching.
    pub applied_step: Vec<T>,
    pub t_bit: Vec<T>,
    /// Charge drawn from V_DD by the switching event preceding each bit.
    pub dq: Vec<T>,
    /// Sampling window plus all bit cycles (s).
    pub t_total: T,
    pub q_ref: T,
    pub comparator_firings: usize,
    pub energy: EnergyBreakdown<T>,
    pub timing_ok: bool,
}

impl<T: Scalar> ConversionTrace<T> {
    pub fn e_total(&self) -> T {
        self.energy.total()
    }

    /// One row per bit: `index,decision,applied_step,t_bit,dq`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["index", "decision", "applied_step", "t_bit", "dq"])?;
        for i in 0..self.bits.len() {
            w.write_record([
                (i + 1).to_string(),
                u8::from(self.bits[i]).to_string(),
                self.applied_step[i].to_f64_lossy().to_string(),
                self.t_bit[i].to_f64_lossy().to_string(),
                self.dq[i].to_f64_lossy().to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<trace>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(f)
    }
}

/// `E_dac + E_cmp * firings + E_dff * transitions + kappa_sw / R_sw +
/// kappa_drv / R_drv_msb`, where `E_cmp = kappa_cmp / sigma_cmp^2`.
/// Register transitions: one shift-register edge per comparator firing plus
/// one per bit register set to 1.
pub fn conversion_energy<T: Scalar>(trace: &ConversionTrace<T>, model: &AdcModel<T>) -> EnergyBreakdown<T> {
    let cfg = &model.cfg;
    let d = &model.design;
    let firings = T::of_usize(trace.comparator_firings);
    let ones = T::of_usize(trace.bits.iter().filter(|&&b| b).count());
    EnergyBreakdown {
        dac: cfg.vdd * trace.q_ref,
        comparator: ratio_or_zero(cfg.kappa_cmp, d.sigma_cmp * d.sigma_cmp) * firings,
        logic: cfg.e_dff * (firings + ones),
        sampling_switch: ratio_or_zero(cfg.kappa_sw, d.r_sw),
        driver: ratio_or_zero(cfg.kappa_drv, d.r_drv_msb),
    }
}

/// `k / x`; a zero coefficient costs nothing even in the ideal limit.
fn ratio_or_zero<T: Scalar>(k: T, x: T) -> T {
    if k == T::zero() {
        T::zero()
    } else {
        k / x
    }
}
