//! YAML run configuration.
//!
//! Only `n_bits`, `f_s` and `vdd` are required. Every other key falls back
//! to a default, and each applied default is recorded in
//! [`RunConfig::defaults_applied`] so the run record shows exactly what was
//! used. Unknown keys produce warnings rather than errors.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adc::{AdcConfig, DesignBounds, DesignPoint};
use crate::error::{Error, Result};
use crate::global::GlobalParams;
use crate::harness::DEFAULT_AMPLITUDE;
use crate::local::{BlendReference, LocalParams};

/// Sine-test settings shared by the local phase and the final verification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnessConfig {
    /// Capture length during optimization; the final test uses `4 k`.
    pub k: usize,
    /// Segment count.
    pub m: usize,
    /// Target input frequency as a fraction of `f_s`.
    pub f_in_ratio: f64,
    /// Amplitude as a fraction of the differential half scale.
    pub amplitude: f64,
    /// Enable sampling and comparator noise (keyed by the run seed).
    pub noise: bool,
}

impl HarnessConfig {
    pub const FINAL_K_FACTOR: usize = 4;

    pub fn final_k(&self) -> usize {
        self.k * Self::FINAL_K_FACTOR
    }
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            k: 1024,
            m: 4,
            f_in_ratio: 0.1,
            amplitude: DEFAULT_AMPLITUDE,
            noise: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub adc: AdcConfig<f64>,
    pub alpha: f64,
    pub bounds: DesignBounds<f64>,
    pub global: GlobalParams<f64>,
    pub local: LocalParams<f64>,
    pub harness: HarnessConfig,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// `key = value` for every default that was filled in.
    pub defaults_applied: Vec<String>,
    /// Non-fatal findings such as unknown keys.
    pub warnings: Vec<String>,
}

impl RunConfig {
    /// Config with every optional key at its default.
    pub fn with_defaults(n_bits: u32, f_s: f64, vdd: f64) -> Result<Self> {
        let raw = RawConfig {
            n_bits: Some(n_bits),
            f_s: Some(f_s),
            vdd: Some(vdd),
            ..RawConfig::default()
        };
        raw.resolve()
    }

    pub fn validate(&self) -> Result<()> {
        self.adc.validate()?;
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(invalid("alpha", format!("must be positive, got {}", self.alpha)));
        }
        self.bounds.validate()?;
        self.global.validate().map_err(|e| invalid("global", e.to_string()))?;
        self.local.validate().map_err(|e| invalid("local", e.to_string()))?;
        let h = &self.harness;
        if h.k < 16 || !h.k.is_power_of_two() {
            return Err(invalid(
                "harness.k",
                format!("must be a power of two >= 16, got {}", h.k),
            ));
        }
        if h.m == 0 || !h.k.is_multiple_of(h.m) {
            return Err(invalid("harness.m", format!("must divide k = {}, got {}", h.k, h.m)));
        }
        if !(h.f_in_ratio > 0.0 && h.f_in_ratio < 0.5) {
            return Err(invalid(
                "harness.f_in_ratio",
                format!("must be in (0, 0.5), got {}", h.f_in_ratio),
            ));
        }
        if !(h.amplitude > 0.0 && h.amplitude <= 1.0) {
            return Err(invalid(
                "harness.amplitude",
                format!("must be in (0, 1], got {}", h.amplitude),
            ));
        }
        Ok(())
    }
}

fn invalid(field: &str, reason: String) -> Error {
    Error::Validation {
        field: field.into(),
        reason,
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let raw: RawConfig = if text.trim().is_empty() {
        RawConfig::default()
    } else {
        serde_yaml::from_str(text).map_err(|e| {
            let loc = e.location();
            Error::Parse {
                message: e.to_string(),
                line: loc.as_ref().map(|l| l.line()),
                column: loc.as_ref().map(|l| l.column()),
            }
        })?
    };
    raw.resolve()
}

type Extra = BTreeMap<String, serde_yaml::Value>;

/// `lambda` accepts a positive integer or `never`.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum LambdaSetting {
    Every(usize),
    Word(String),
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct RawGlobal {
    pop_size: Option<usize>,
    #[serde(alias = "F")]
    f: Option<f64>,
    #[serde(alias = "CR")]
    cr: Option<f64>,
    k_infill: Option<usize>,
    theta_conv: Option<f64>,
    n_conv_target: Option<usize>,
    max_evals: Option<usize>,
    #[serde(flatten)]
    extra: Extra,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct RawLocal {
    initial_step: Option<f64>,
    shrink: Option<f64>,
    lambda: Option<LambdaSetting>,
    #[serde(alias = "a")]
    penalty_scale: Option<f64>,
    #[serde(alias = "delta_w")]
    weight_step: Option<f64>,
    #[serde(alias = "epsilon")]
    tolerance: Option<f64>,
    w0: Option<f64>,
    max_iter: Option<usize>,
    max_extrapolations: Option<usize>,
    blend_reference: Option<BlendReference>,
    #[serde(flatten)]
    extra: Extra,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct RawHarness {
    #[serde(alias = "K")]
    k: Option<usize>,
    #[serde(alias = "M", alias = "segments")]
    m: Option<usize>,
    f_in_ratio: Option<f64>,
    amplitude: Option<f64>,
    noise: Option<bool>,
    #[serde(flatten)]
    extra: Extra,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default)]
struct RawConfig {
    #[serde(alias = "N")]
    n_bits: Option<u32>,
    #[serde(alias = "fs")]
    f_s: Option<f64>,
    #[serde(alias = "V_DD", alias = "Vdd")]
    vdd: Option<f64>,
    #[serde(alias = "α")]
    alpha: Option<f64>,
    temperature: Option<f64>,
    kappa_cmp: Option<f64>,
    kappa_sw: Option<f64>,
    kappa_drv: Option<f64>,
    e_dff: Option<f64>,
    v_floor: Option<f64>,
    r_drv_max: Option<f64>,
    seed: Option<u64>,
    output_dir: Option<PathBuf>,
    bounds: Option<BTreeMap<String, [f64; 2]>>,
    global: Option<RawGlobal>,
    local: Option<RawLocal>,
    harness: Option<RawHarness>,
    #[serde(flatten)]
    extra: Extra,
}

struct Filler {
    defaults: Vec<String>,
}

impl Filler {
    fn take<V: Display>(&mut self, key: &str, v: Option<V>, default: V) -> V {
        v.unwrap_or_else(|| {
            self.defaults.push(format!("{key} = {default}"));
            default
        })
    }
}

fn required<V>(key: &str, v: Option<V>) -> Result<V> {
    v.ok_or_else(|| invalid(key, "required key missing".into()))
}

fn unknown(prefix: &str, extra: &Extra, out: &mut Vec<String>) {
    for k in extra.keys() {
        out.push(format!("unknown config key `{prefix}{k}` ignored"));
    }
}

impl RawConfig {
    fn resolve(self) -> Result<RunConfig> {
        let n_bits = required("n_bits", self.n_bits)?;
        let f_s = required("f_s", self.f_s)?;
        let vdd = required("vdd", self.vdd)?;
        let mut fill = Filler { defaults: Vec::new() };
        let mut warnings = Vec::new();
        unknown("", &self.extra, &mut warnings);

        let base = AdcConfig::new(n_bits, f_s, vdd);
        let adc = AdcConfig {
            temperature: fill.take("temperature", self.temperature, base.temperature),
            kappa_cmp: fill.take("kappa_cmp", self.kappa_cmp, base.kappa_cmp),
            kappa_sw: fill.take("kappa_sw", self.kappa_sw, base.kappa_sw),
            kappa_drv: fill.take("kappa_drv", self.kappa_drv, base.kappa_drv),
            e_dff: fill.take("e_dff", self.e_dff, base.e_dff),
            v_floor: fill.take("v_floor", self.v_floor, base.v_floor),
            r_drv_max: fill.take("r_drv_max", self.r_drv_max, base.r_drv_max),
            ..base
        };
        let alpha = fill.take("alpha", self.alpha, 1.0);
        let seed = fill.take("seed", self.seed, 0);
        let output_dir = self.output_dir.unwrap_or_else(|| {
            fill.defaults.push("output_dir = runs".into());
            PathBuf::from("runs")
        });

        let bounds = resolve_bounds(&adc, self.bounds, &mut fill, &mut warnings)?;

        let g0 = GlobalParams::<f64>::defaults_for(DesignPoint::<f64>::DIM);
        let g = self.global.unwrap_or_default();
        unknown("global.", &g.extra, &mut warnings);
        let pop_size = fill.take("global.pop_size", g.pop_size, g0.pop_size);
        let global = GlobalParams {
            pop_size,
            f: fill.take("global.f", g.f, g0.f),
            cr: fill.take("global.cr", g.cr, g0.cr),
            k_infill: fill.take("global.k_infill", g.k_infill, (pop_size / 5).max(2)),
            theta_conv: fill.take("global.theta_conv", g.theta_conv, g0.theta_conv),
            n_conv_target: fill.take("global.n_conv_target", g.n_conv_target, g0.n_conv_target),
            max_evals: fill.take("global.max_evals", g.max_evals, g0.max_evals),
            seed,
        };

        let l0 = LocalParams::<f64>::default();
        let l = self.local.unwrap_or_default();
        unknown("local.", &l.extra, &mut warnings);
        let lambda = match l.lambda {
            None => {
                fill.defaults.push(format!("local.lambda = {}", l0.lambda.unwrap_or(0)));
                l0.lambda
            }
            Some(LambdaSetting::Every(n)) => Some(n),
            Some(LambdaSetting::Word(w)) if w == "never" => None,
            Some(LambdaSetting::Word(w)) => {
                return Err(invalid(
                    "local.lambda",
                    format!("expected an integer or `never`, got `{w}`"),
                ))
            }
        };
        let blend_reference = l.blend_reference.unwrap_or_else(|| {
            fill.defaults.push("local.blend_reference = candidate".into());
            l0.blend_reference
        });
        let local = LocalParams {
            initial_step: fill.take("local.initial_step", l.initial_step, l0.initial_step),
            shrink: fill.take("local.shrink", l.shrink, l0.shrink),
            lambda,
            penalty_scale: fill.take("local.penalty_scale", l.penalty_scale, l0.penalty_scale),
            weight_step: fill.take("local.weight_step", l.weight_step, l0.weight_step),
            tolerance: fill.take("local.tolerance", l.tolerance, l0.tolerance),
            w0: fill.take("local.w0", l.w0, l0.w0),
            max_iter: fill.take("local.max_iter", l.max_iter, l0.max_iter),
            max_extrapolations: fill.take("local.max_extrapolations", l.max_extrapolations, l0.max_extrapolations),
            blend_reference,
        };

        let h0 = HarnessConfig::default();
        let h = self.harness.unwrap_or_default();
        unknown("harness.", &h.extra, &mut warnings);
        let harness = HarnessConfig {
            k: fill.take("harness.k", h.k, h0.k),
            m: fill.take("harness.m", h.m, h0.m),
            f_in_ratio: fill.take("harness.f_in_ratio", h.f_in_ratio, h0.f_in_ratio),
            amplitude: fill.take("harness.amplitude", h.amplitude, h0.amplitude),
            noise: fill.take("harness.noise", h.noise, h0.noise),
        };

        let cfg = RunConfig {
            adc,
            alpha,
            bounds,
            global,
            local,
            harness,
            seed,
            output_dir,
            defaults_applied: fill.defaults,
            warnings,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn resolve_bounds(
    adc: &AdcConfig<f64>,
    given: Option<BTreeMap<String, [f64; 2]>>,
    fill: &mut Filler,
    warnings: &mut Vec<String>,
) -> Result<DesignBounds<f64>> {
    let default = DesignBounds::default_for(adc);
    let given = given.unwrap_or_default();
    for k in given.keys() {
        if !DesignPoint::<f64>::FIELDS.contains(&k.as_str()) {
            warnings.push(format!("unknown config key `bounds.{k}` ignored"));
        }
    }
    let mut lo = default.lo.to_vec();
    let mut hi = default.hi.to_vec();
    for (i, name) in DesignPoint::<f64>::FIELDS.iter().enumerate() {
        match given.get(*name) {
            Some(&[a, b]) => {
                lo[i] = a;
                hi[i] = b;
            }
            None => fill.defaults.push(format!("bounds.{name} = [{}, {}]", lo[i], hi[i])),
        }
    }
    Ok(DesignBounds {
        lo: DesignPoint::from_slice(&lo),
        hi: DesignPoint::from_slice(&hi),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg = parse_config("N: 12\nfs: 20e6\nV_DD: 1\n").unwrap();
        assert_eq!(cfg.adc.n_bits, 12);
        assert_eq!(cfg.adc.f_s, 20e6);
        assert_eq!(cfg.alpha, 1.0);
        assert_eq!(cfg.global.f, 0.5);
        assert_eq!(cfg.global.cr, 0.9);
        assert_eq!(cfg.local.lambda, Some(5));
        assert!(cfg.defaults_applied.iter().any(|d| d == "alpha = 1"));
        assert!(cfg.defaults_applied.iter().any(|d| d == "local.lambda = 5"));
        assert!(cfg.warnings.is_empty());
    }

    #[test]
    fn negative_alpha_is_rejected() {
        let err = parse_config("N: 8\nfs: 1e6\nV_DD: 1\nalpha: -1\n").unwrap_err();
        match err {
            Error::Validation { field, .. } => assert_eq!(field, "alpha"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn unknown_keys_warn() {
        let cfg = parse_config("N: 8\nfs: 1e6\nV_DD: 1\nflux: 3\nglobal:\n  zeta: 1\n").unwrap();
        assert_eq!(cfg.warnings.len(), 2);
        assert!(cfg.warnings[0].contains("flux"));
        assert!(cfg.warnings[1].contains("global.zeta"));
    }

    #[test]
    fn parse_errors_carry_line() {
        let err = parse_config("N: 8\nfs: [1e6\nV_DD: 1\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert!(line.is_some()),
            other => panic!("unexpected {other}"),
        }
        let err = parse_config("N: 8\nfs: 1e6\nV_DD: one\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, Some(3)),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn missing_required_key_named() {
        match parse_config("N: 8\nfs: 1e6\n").unwrap_err() {
            Error::Validation { field, .. } => assert_eq!(field, "vdd"),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn lambda_never_and_bounds_override() {
        let cfg =
            parse_config("N: 8\nfs: 1e6\nV_DD: 1\nlocal:\n  lambda: never\nbounds:\n  c_unit: [1.0e-15, 2.0e-15]\n")
                .unwrap();
        assert_eq!(cfg.local.lambda, None);
        assert_eq!(cfg.bounds.lo.c_unit, 1e-15);
        assert_eq!(cfg.bounds.hi.c_unit, 2e-15);
        assert!(!cfg.defaults_applied.iter().any(|d| d.starts_with("bounds.c_unit")));
    }

    #[test]
    fn invalid_segments_named() {
        match parse_config("N: 8\nfs: 1e6\nV_DD: 1\nharness:\n  M: 3\n").unwrap_err() {
            Error::Validation { field, .. } => assert_eq!(field, "harness.m"),
            other => panic!("unexpected {other}"),
        }
    }
}
