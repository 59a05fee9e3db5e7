//! Coherent sine-wave characterization with phase-shifted, reduced-rate
//! segments.
//!
//! A K-point capture at `f_s` is split into `M` independent segments of
//! `K / M` conversions at `f_s / M`. Segment `k` samples the sine at global
//! indices `n M + k`, so the merged capture covers every full-rate instant
//! exactly once. Noise is keyed by the global index, which makes the merged
//! capture bit-identical to a single full-rate run.

use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::adc::AdcModel;
use crate::error::{Error, Result};
use crate::rng::NoiseKey;
use crate::scalar::Scalar;

/// Default sine amplitude as a fraction of the differential half scale.
pub const DEFAULT_AMPLITUDE: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestPlan<T> {
    /// Capture length, a power of two.
    pub k: usize,
    /// Input cycles in the capture; odd, hence coprime to `k`.
    pub j: usize,
    pub f_s: T,
    /// `j f_s / k`.
    pub f_in: T,
    /// Segment count, divides `k`.
    pub m: usize,
    /// Amplitude relative to `V_FS / 2`.
    pub amplitude: T,
    /// Phase of the sine at index 0 (rad).
    pub phase: T,
    /// `None` disables sampling and comparator noise.
    pub seed: Option<u64>,
}

impl<T: Scalar> TestPlan<T> {
    pub fn validate(&self) -> Result<()> {
        if self.k < 4 || !self.k.is_power_of_two() {
            return Err(Error::Plan(format!("K must be a power of two >= 4, got {}", self.k)));
        }
        if self.m == 0 || !self.k.is_multiple_of(self.m) {
            return Err(Error::Plan(format!("M = {} must divide K = {}", self.m, self.k)));
        }
        if self.j == 0 || self.j.is_multiple_of(2) || gcd(self.j, self.k) != 1 || 2 * self.j >= self.k {
            return Err(Error::Plan(format!(
                "J = {} must be odd, coprime to K = {} and below K/2",
                self.j, self.k
            )));
        }
        if !(self.amplitude > T::zero()) {
            return Err(Error::Plan(format!(
                "amplitude must be positive, got {}",
                self.amplitude
            )));
        }
        Ok(())
    }

    pub fn with_segments(&self, m: usize) -> Result<Self> {
        let p = Self { m, ..self.clone() };
        p.validate()?;
        Ok(p)
    }

    /// Input period `K / (J f_s)`.
    pub fn t_in(&self) -> T {
        T::one() / self.f_in
    }

    /// Differential input at global sample `m` for full scale `v_fs`.
    ///
    /// The phase index is reduced modulo K in integers, so every schedule
    /// that visits index `m` computes the identical value.
    pub fn input_at(&self, v_fs: T, m: usize) -> T {
        let amp = self.amplitude * v_fs * T::lit(0.5);
        amp * self.angle(m).sin()
    }

    fn angle(&self, m: usize) -> T {
        let r = (self.j as u128 * m as u128 % self.k as u128) as usize;
        T::lit(2.0 * PI) * T::of_usize(r) / T::of_usize(self.k) + self.phase
    }
}

/// Picks the odd (hence coprime, `K` being a power of two) cycle count
/// nearest to `K f_target / f_s`, ties to the smaller.
pub fn plan_test<T: Scalar>(f_s: T, k: usize, m: usize, f_target: T) -> Result<TestPlan<T>> {
    if !(f_s > T::zero()) {
        return Err(Error::Plan(format!("f_s must be positive, got {f_s}")));
    }
    if !(f_target > T::zero()) || f_target >= f_s * T::lit(0.5) {
        return Err(Error::Plan(format!("target frequency {f_target} outside (0, f_s/2)")));
    }
    if k < 4 || !k.is_power_of_two() {
        return Err(Error::Plan(format!("K must be a power of two >= 4, got {k}")));
    }
    let ideal = (T::of_usize(k) * f_target / f_s).to_f64_lossy();
    let j = (1..k / 2)
        .step_by(2)
        .filter(|&j| gcd(j, k) == 1)
        .min_by(|&a, &b| {
            let da = (a as f64 - ideal).abs();
            let db = (b as f64 - ideal).abs();
            da.partial_cmp(&db).unwrap().then(a.cmp(&b))
        })
        .ok_or_else(|| Error::Plan(format!("no valid cycle count for K = {k}")))?;
    let plan = TestPlan {
        k,
        j,
        f_s,
        f_in: T::of_usize(j) * f_s / T::of_usize(k),
        m,
        amplitude: T::lit(DEFAULT_AMPLITUDE),
        phase: T::zero(),
        seed: None,
    };
    plan.validate()?;
    Ok(plan)
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// How noise keys are derived inside a segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKeying {
    /// Key by global sample index (bit-exact interleaving).
    Global,
    /// Key by the index within the segment; breaks equivalence and exists as
    /// a negative control.
    SegmentLocal,
}

/// Merged output of a segmented run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Capture<T> {
    pub inputs: Vec<T>,
    pub codes: Vec<u32>,
    pub timing_failures: usize,
}

impl<T: Scalar> Capture<T> {
    /// `index,input,code` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["index", "input", "code"])?;
        for (i, (v, c)) in self.inputs.iter().zip(&self.codes).enumerate() {
            w.write_record([i.to_string(), v.to_f64_lossy().to_string(), c.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<capture>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(f)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let mut inputs = Vec::new();
        let mut codes = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let parse_err = |what: &str| Error::Audit(format!("{}: bad {what} field", path.display()));
            let v: f64 = rec
                .get(1)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| parse_err("input"))?;
            let c: u32 = rec
                .get(2)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| parse_err("code"))?;
            inputs.push(T::lit(v));
            codes.push(c);
        }
        Ok(Self {
            inputs,
            codes,
            timing_failures: 0,
        })
    }
}

/// Steady-state held value of the track-and-hold for a sine input.
///
/// The sampler is the recursion `y[n] = (1 - e) x[n] + e y[n-1]` with
/// `e = exp(-t_sample / tau_smp)`; for a coherent sine its periodic response
/// is the input scaled and rotated by `H = (1 - e) / (1 - e exp(-j w))`.
/// Evaluating it in closed form per index lets every segment start from the
/// correct history without simulating its predecessors.
struct HeldSine<T> {
    gain: T,
    shift: T,
}

impl<T: Scalar> HeldSine<T> {
    fn new(model: &AdcModel<T>, plan: &TestPlan<T>) -> Self {
        let e = if model.tau_smp > T::zero() {
            (-model.design.t_sample / model.tau_smp).exp()
        } else {
            T::zero()
        };
        let w = T::lit(2.0 * PI) * T::of_usize(plan.j) / T::of_usize(plan.k);
        let h = Complex::new(T::one() - e, T::zero()) / Complex::new(T::one() - e * w.cos(), e * w.sin());
        Self {
            gain: h.norm(),
            shift: h.arg(),
        }
    }

    fn at(&self, plan: &TestPlan<T>, v_fs: T, m: usize) -> T {
        let amp = plan.amplitude * v_fs * T::lit(0.5);
        amp * self.gain * (plan.angle(m) + self.shift).sin()
    }
}

/// One reduced-rate segment: conversions at global indices `n M + k`.
fn run_segment<T: Scalar>(
    model: &AdcModel<T>,
    plan: &TestPlan<T>,
    held: &HeldSine<T>,
    seg: usize,
    keying: NoiseKeying,
) -> Vec<(T, u32, bool)> {
    let v_fs = model.cfg.v_fs();
    (0..plan.k / plan.m)
        .map(|n| {
            let idx = n * plan.m + seg;
            let prev = (idx + plan.k - 1) % plan.k;
            let v_in = plan.input_at(v_fs, idx);
            let v_prev = held.at(plan, v_fs, prev);
            let key = plan.seed.map(|s| {
                let counter = match keying {
                    NoiseKeying::Global => idx,
                    NoiseKeying::SegmentLocal => n,
                };
                NoiseKey::new(s, counter as u64)
            });
            let t = model.sample_and_convert(v_in, v_prev, key);
            (v_in, t.code, t.timing_ok)
        })
        .collect()
}

/// Runs the M segments as independent jobs and interleaves them.
pub fn run_segments<T: Scalar>(model: &AdcModel<T>, plan: &TestPlan<T>) -> Result<Capture<T>> {
    run_segments_keyed(model, plan, NoiseKeying::Global)
}

pub fn run_segments_keyed<T: Scalar>(
    model: &AdcModel<T>,
    plan: &TestPlan<T>,
    keying: NoiseKeying,
) -> Result<Capture<T>> {
    plan.validate()?;
    let held = HeldSine::new(model, plan);
    let segments: Vec<Vec<(T, u32, bool)>> = (0..plan.m)
        .into_par_iter()
        .map(|seg| run_segment(model, plan, &held, seg, keying))
        .collect();

    let mut inputs = vec![T::zero(); plan.k];
    let mut codes = vec![0u32; plan.k];
    let mut timing_failures = 0;
    for (seg, rows) in segments.into_iter().enumerate() {
        for (n, (v, c, ok)) in rows.into_iter().enumerate() {
            let idx = n * plan.m + seg;
            inputs[idx] = v;
            codes[idx] = c;
            timing_failures += usize::from(!ok);
        }
    }
    Ok(Capture {
        inputs,
        codes,
        timing_failures,
    })
}

/// Full-rate and segmented captures agree code for code.
pub fn equivalence_check<T: Scalar>(model: &AdcModel<T>, plan: &TestPlan<T>) -> Result<bool> {
    equivalence_check_keyed(model, plan, NoiseKeying::Global)
}

pub fn equivalence_check_keyed<T: Scalar>(
    model: &AdcModel<T>,
    plan: &TestPlan<T>,
    keying: NoiseKeying,
) -> Result<bool> {
    let full = run_segments_keyed(model, &plan.with_segments(1)?, keying)?;
    let split = run_segments_keyed(model, plan, keying)?;
    Ok(full.codes == split.codes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport<T> {
    pub sndr: T,
    pub sfdr: T,
    pub enob: T,
    /// Walden figure of merit (J per conversion step).
    pub fom_w: T,
    /// Schreier figure of merit (dB).
    pub fom_s: T,
    /// One-sided bin powers relative to the signal bin (dBc), bins
    /// `0..K/2`.
    pub bin_db: Vec<T>,
}

impl<T: Scalar> SpectrumReport<T> {
    /// `bin,db` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["bin", "db"])?;
        for (i, db) in self.bin_db.iter().enumerate() {
            w.write_record([i.to_string(), db.to_f64_lossy().to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<spectrum>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(f)
    }
}

/// `(SNDR - 1.76) / 6.02`.
pub fn enob_from_sndr<T: Scalar>(sndr: T) -> T {
    (sndr - T::lit(1.76)) / T::lit(6.02)
}

/// `P / (2^ENOB f_s)`.
pub fn fom_walden<T: Scalar>(power: T, enob: T, f_s: T) -> T {
    power / (T::lit(2.0).powf(enob) * f_s)
}

/// `SNDR + 10 log10((f_s / 2) / P)`.
pub fn fom_schreier<T: Scalar>(sndr: T, f_s: T, power: T) -> T {
    sndr + T::lit(10.0) * (f_s * T::lit(0.5) / power).log10()
}

const DB_FLOOR: f64 = -300.0;

/// Rectangular-window FFT metrics of a coherent capture.
pub fn spectrum_metrics<T: Scalar>(codes: &[u32], plan: &TestPlan<T>, power: T) -> Result<SpectrumReport<T>> {
    let k = plan.k;
    if codes.len() != k {
        return Err(Error::Metrics(format!(
            "capture has {} points, plan expects {k}",
            codes.len()
        )));
    }
    let mean = codes.iter().map(|&c| c as f64).sum::<f64>() / k as f64;
    let mut buf: Vec<Complex<T>> = codes
        .iter()
        .map(|&c| Complex::new(T::lit(c as f64 - mean), T::zero()))
        .collect();
    FftPlanner::<T>::new().plan_fft_forward(k).process(&mut buf);

    let half = k / 2;
    let power_of = |i: usize| -> T {
        let p = buf[i].norm_sqr();
        if i == 0 || i == half {
            p
        } else {
            p * T::lit(2.0)
        }
    };
    let signal = power_of(plan.j);
    if !(signal > T::zero()) {
        return Err(Error::Metrics("signal bin is empty".into()));
    }
    let mut noise = T::zero();
    let mut spur = T::zero();
    for i in 1..=half {
        if i != plan.j {
            let p = power_of(i);
            noise += p;
            spur = spur.max(p);
        }
    }
    if !(noise > T::zero()) {
        return Err(Error::Metrics(
            "no noise or distortion power; capture is degenerate".into(),
        ));
    }
    let ten = T::lit(10.0);
    let sndr = ten * (signal / noise).log10();
    let sfdr = (ten * (signal / spur).log10()).max(T::zero());
    let enob = enob_from_sndr(sndr);
    let bin_db = (0..half)
        .map(|i| {
            let p = power_of(i);
            if p > T::zero() {
                (ten * (p / signal).log10()).max(T::lit(DB_FLOOR))
            } else {
                T::lit(DB_FLOOR)
            }
        })
        .collect();
    Ok(SpectrumReport {
        sndr,
        sfdr,
        enob,
        fom_w: fom_walden(power, enob, plan.f_s),
        fom_s: fom_schreier(sndr, plan.f_s, power),
        bin_db,
    })
}
