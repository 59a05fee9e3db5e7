//! End-to-end sizing flow: derive specs, global search on coarse metrics,
//! freeze converged variables, blended local search, final sine test.
//!
//! The optimizers work in normalized log coordinates: each design variable
//! maps from `u in [0, 1]` to `lo (hi / lo)^u`, so every variable spans
//! decades on an equal footing.

mod config;
mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use config::{load_config, parse_config, HarnessConfig, RunConfig};
pub use report::{emit_report, render_summary, summary_metrics, SummaryMetrics};

use crate::adc::{AdcConfig, AdcModel, DesignBounds, DesignPoint};
use crate::coarse::{bound_vector, evaluate_coarse, power_estimate, CoarseReport};
use crate::error::{Error, Result};
use crate::global::{run_global, Evaluation, GenerationRow, GlobalStatus, IdwSurrogate, Problem};
use crate::harness::{plan_test, run_segments, spectrum_metrics, Capture, SpectrumReport, TestPlan};
use crate::local::{run_local, LocalRow};
use crate::specs::DerivedSpecs;

/// Log-scaled map between the unit box and physical design values.
#[derive(Debug, Clone)]
pub struct LogBox {
    ln_lo: Vec<f64>,
    ln_span: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl LogBox {
    pub fn new(bounds: &DesignBounds<f64>) -> Self {
        let lo = bounds.lo.to_vec();
        let hi = bounds.hi.to_vec();
        Self {
            ln_lo: lo.iter().map(|v| v.ln()).collect(),
            ln_span: lo.iter().zip(&hi).map(|(l, h)| (h / l).ln()).collect(),
            lo,
            hi,
        }
    }

    pub fn to_design(&self, u: &[f64]) -> DesignPoint<f64> {
        let v: Vec<f64> = (0..u.len())
            .map(|i| {
                (self.ln_lo[i] + u[i] * self.ln_span[i])
                    .exp()
                    .clamp(self.lo[i], self.hi[i])
            })
            .collect();
        DesignPoint::from_slice(&v)
    }

    pub fn to_unit(&self, d: &DesignPoint<f64>) -> Vec<f64> {
        d.to_vec()
            .iter()
            .enumerate()
            .map(|(i, v)| ((v.ln() - self.ln_lo[i]) / self.ln_span[i]).clamp(0.0, 1.0))
            .collect()
    }
}

/// Coarse sizing problem: minimize power subject to the derived specs,
/// with each slack divided by its bound.
pub struct SarProblem {
    pub adc: AdcConfig<f64>,
    pub specs: DerivedSpecs<f64>,
    pub map: LogBox,
    unit: Vec<(f64, f64)>,
    scale: Vec<f64>,
}

impl SarProblem {
    pub fn new(adc: AdcConfig<f64>, specs: DerivedSpecs<f64>, bounds: &DesignBounds<f64>) -> Self {
        let scale = bound_vector(&specs);
        Self {
            adc,
            map: LogBox::new(bounds),
            unit: vec![(0.0, 1.0); DesignPoint::<f64>::DIM],
            specs,
            scale,
        }
    }

    pub fn model(&self, u: &[f64]) -> AdcModel<f64> {
        AdcModel::derive(self.map.to_design(u), self.adc.clone())
    }

    pub fn coarse(&self, u: &[f64]) -> Result<CoarseReport<f64>> {
        evaluate_coarse(&self.model(u), &self.specs)
    }
}

impl Problem<f64> for SarProblem {
    fn bounds(&self) -> &[(f64, f64)] {
        &self.unit
    }

    fn evaluate(&self, u: &[f64]) -> Evaluation<f64> {
        match self.coarse(u) {
            Ok(r) if r.power.is_finite() => Evaluation {
                objective: r.power,
                slack: r.slack.iter().zip(&self.scale).map(|(s, b)| s / b).collect(),
            },
            _ => Evaluation {
                objective: f64::INFINITY,
                slack: vec![f64::NEG_INFINITY; self.scale.len()],
            },
        }
    }
}

/// Sine-test plan for a config at capture length `k`.
pub fn sine_plan(cfg: &RunConfig, k: usize) -> Result<TestPlan<f64>> {
    let h = &cfg.harness;
    let mut plan = plan_test(cfg.adc.f_s, k, h.m, cfg.adc.f_s * h.f_in_ratio)?;
    plan.amplitude = h.amplitude;
    plan.seed = h.noise.then_some(cfg.seed);
    plan.validate()?;
    Ok(plan)
}

/// Full sine test; power comes from the coarse grid estimate.
pub fn sine_test(model: &AdcModel<f64>, plan: &TestPlan<f64>) -> Result<(Capture<f64>, SpectrumReport<f64>)> {
    let capture = run_segments(model, plan)?;
    let power = power_estimate(model);
    let spectrum = spectrum_metrics(&capture.codes, plan, power)?;
    Ok((capture, spectrum))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Warning,
}

/// Where the final design came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignSource {
    /// Local optimizer's returned point.
    Local,
    /// Local result violated a coarse constraint; lowest-power feasible
    /// point probed during the local phase.
    LocalFeasibleProbe,
    /// Local phase skipped; global best.
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSummary {
    pub k: usize,
    pub j: usize,
    pub f_in: f64,
    pub m: usize,
    pub amplitude: f64,
    pub noise_seed: Option<u64>,
    pub power: f64,
    pub sndr: f64,
    pub sfdr: f64,
    pub enob: f64,
    pub fom_w: f64,
    pub fom_s: f64,
    pub timing_failures: usize,
}

impl SpectrumSummary {
    fn new(plan: &TestPlan<f64>, power: f64, s: &SpectrumReport<f64>, c: &Capture<f64>) -> Self {
        Self {
            k: plan.k,
            j: plan.j,
            f_in: plan.f_in,
            m: plan.m,
            amplitude: plan.amplitude,
            noise_seed: plan.seed,
            power,
            sndr: s.sndr,
            sfdr: s.sfdr,
            enob: s.enob,
            fom_w: s.fom_w,
            fom_s: s.fom_s,
            timing_failures: c.timing_failures,
        }
    }

    pub fn plan(&self, f_s: f64) -> TestPlan<f64> {
        TestPlan {
            k: self.k,
            j: self.j,
            f_s,
            f_in: self.f_in,
            m: self.m,
            amplitude: self.amplitude,
            phase: 0.0,
            seed: self.noise_seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalSummary {
    pub status: GlobalStatus,
    pub evals: usize,
    pub generations: usize,
    pub converged_mask: Vec<bool>,
    pub design: DesignPoint<f64>,
    /// `None` when nothing was evaluated.
    pub best_power: Option<f64>,
    pub best_violation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalSummary {
    pub iterations: usize,
    pub rollbacks: usize,
    pub cheap_evals: usize,
    pub expensive_evals: usize,
    pub f_cheap: f64,
    /// `None` when never evaluated or the evaluation failed.
    pub f_expensive: Option<f64>,
    pub final_w: f64,
    /// Power that normalizes the cheap objective.
    pub power_scale: f64,
}

/// File names inside a run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceFiles {
    pub global_trace: String,
    pub local_trace: String,
    pub capture: String,
    pub spectrum: String,
}

impl Default for TraceFiles {
    fn default() -> Self {
        Self {
            global_trace: "global_trace.csv".into(),
            local_trace: "local_trace.csv".into(),
            capture: "capture.csv".into(),
            spectrum: "spectrum.csv".into(),
        }
    }
}

pub const RESULT_FILE: &str = "result.json";
pub const TIMINGS_FILE: &str = "timings.json";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const METRICS_FILE: &str = "metrics.csv";

/// Persisted run record. Reproducible from `(config, seed)`; wall-clock
/// timings live in a separate file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub status: RunStatus,
    pub warnings: Vec<String>,
    pub config: RunConfig,
    pub specs: DerivedSpecs<f64>,
    pub design: DesignPoint<f64>,
    pub design_source: DesignSource,
    pub coarse: CoarseReport<f64>,
    pub spectrum: SpectrumSummary,
    pub global: GlobalSummary,
    pub local: Option<LocalSummary>,
    pub files: TraceFiles,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub global_s: f64,
    pub local_s: f64,
    pub verify_s: f64,
}

/// Everything a run produces, before it is written out.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub result: RunResult,
    pub global_trace: Vec<GenerationRow<f64>>,
    pub local_trace: Vec<LocalRow<f64>>,
    pub capture: Capture<f64>,
    pub spectrum: SpectrumReport<f64>,
    pub timings: PhaseTimings,
}

/// Cheap objective: `P / P0 + 10 * relative violation`, never negative.
fn cheap_value(r: &CoarseReport<f64>, specs: &DerivedSpecs<f64>, p0: f64) -> f64 {
    let v = r.power / p0 + 10.0 * r.relative_violation(specs);
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

pub fn run_pipeline(cfg: &RunConfig) -> Result<RunArtifacts> {
    cfg.validate()?;
    let mut warnings = cfg.warnings.clone();
    let specs = DerivedSpecs::derive(cfg.adc.n_bits, cfg.adc.vdd, cfg.alpha)?;
    let problem = SarProblem::new(cfg.adc.clone(), specs.clone(), &cfg.bounds);

    let t0 = Instant::now();
    let mut surrogate = IdwSurrogate::default();
    let global = run_global(&problem, &cfg.global, &mut surrogate)?;
    let global_s = t0.elapsed().as_secs_f64();
    let best_power = global.best.as_ref().map(|e| e.objective).filter(|v| v.is_finite());
    let best_violation = global.best.as_ref().map(|e| e.violation()).filter(|v| v.is_finite());
    let global_summary = GlobalSummary {
        status: global.status,
        evals: global.evals(),
        generations: global.trace.last().map_or(0, |r| r.generation),
        converged_mask: global.mask.clone(),
        design: problem.map.to_design(&global.x_best),
        best_power,
        best_violation,
    };
    log::info!(
        "global phase: {:?} after {} evaluations, {} variables converged",
        global.status,
        global.evals(),
        global.mask.iter().filter(|&&m| m).count()
    );

    let opt_plan = sine_plan(cfg, cfg.harness.k)?;
    let t1 = Instant::now();
    let (u_final, source, local_summary, local_trace) = if global.status == GlobalStatus::NoFeasible {
        warnings.push("global phase found no feasible design; local phase skipped, least-violating point kept".into());
        (global.x_best.clone(), DesignSource::Global, None, Vec::new())
    } else {
        let p0 = best_power.unwrap_or(1.0);
        let mut best_probe: Option<(f64, Vec<f64>)> = None;
        let local = {
            let mut cheap = |u: &[f64]| match problem.coarse(u) {
                Ok(r) => {
                    if r.is_feasible() && best_probe.as_ref().is_none_or(|(p, _)| r.power < *p) {
                        best_probe = Some((r.power, u.to_vec()));
                    }
                    cheap_value(&r, &specs, p0)
                }
                Err(_) => f64::INFINITY,
            };
            let expensive = |u: &[f64]| match sine_test(&problem.model(u), &opt_plan) {
                Ok((_, s)) => -s.fom_s,
                Err(_) => f64::INFINITY,
            };
            run_local(
                &global.x_best,
                &global.mask,
                problem.bounds(),
                &mut cheap,
                expensive,
                &cfg.local,
            )?
        };
        let feasible = problem.coarse(&local.x_best)?.is_feasible();
        let (u, source) = match (feasible, best_probe) {
            (true, _) => (local.x_best.clone(), DesignSource::Local),
            (false, Some((_, u))) => {
                warnings.push("local optimum violates a coarse constraint; best feasible probe used".into());
                (u, DesignSource::LocalFeasibleProbe)
            }
            (false, None) => {
                warnings.push("local phase found no feasible point; global best kept".into());
                (global.x_best.clone(), DesignSource::Global)
            }
        };
        let summary = LocalSummary {
            iterations: local.iterations,
            rollbacks: local.rollbacks,
            cheap_evals: local.cheap_evals,
            expensive_evals: local.expensive_evals,
            f_cheap: local.f_cheap,
            f_expensive: Some(local.f_expensive).filter(|v| v.is_finite()),
            final_w: local.final_w,
            power_scale: p0,
        };
        (u, source, Some(summary), local.trace)
    };
    let local_s = t1.elapsed().as_secs_f64();

    let t2 = Instant::now();
    let design = problem.map.to_design(&u_final);
    let model = AdcModel::derive(design, cfg.adc.clone());
    let coarse = evaluate_coarse(&model, &specs)?;
    if !coarse.is_feasible() {
        warnings.push("final design violates at least one coarse constraint".into());
    }
    let final_plan = sine_plan(cfg, cfg.harness.final_k())?;
    let (capture, spectrum) = sine_test(&model, &final_plan)?;
    let verify_s = t2.elapsed().as_secs_f64();

    let result = RunResult {
        status: if warnings.is_empty() {
            RunStatus::Ok
        } else {
            RunStatus::Warning
        },
        warnings,
        config: cfg.clone(),
        specs,
        design,
        design_source: source,
        spectrum: SpectrumSummary::new(&final_plan, power_estimate(&model), &spectrum, &capture),
        coarse,
        global: global_summary,
        local: local_summary,
        files: TraceFiles::default(),
    };
    Ok(RunArtifacts {
        result,
        global_trace: global.trace,
        local_trace,
        capture,
        spectrum,
        timings: PhaseTimings {
            global_s,
            local_s,
            verify_s,
        },
    })
}

/// Runs the pipeline on a dedicated pool of `workers` threads.
pub fn run_pipeline_with_workers(cfg: &RunConfig, workers: usize) -> Result<RunArtifacts> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
    pool.install(|| run_pipeline(cfg))
}

pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_rows<S: Serialize>(path: &Path, rows: &[S], header: &[&str]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if rows.is_empty() {
        w.write_record(header)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_rows<D: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<D>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub const GLOBAL_TRACE_HEADER: [&str; 5] = ["generation", "evals", "best_objective", "best_violation", "converged"];
pub const LOCAL_TRACE_HEADER: [&str; 6] = ["iteration", "f_cheap", "f_expensive", "w", "step_norm", "rollback"];

/// Writes the run record, raw traces, capture and report into `dir`.
pub fn persist(art: &RunArtifacts, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = &art.result.files;
    let mut written = vec![dir.join(RESULT_FILE), dir.join(TIMINGS_FILE), dir.join(&files.capture)];
    write_json(&written[0], &art.result)?;
    write_json(&written[1], &art.timings)?;
    art.capture.save_csv(&written[2])?;
    written.extend(emit_report(
        &art.result,
        &art.global_trace,
        &art.local_trace,
        Some(&art.spectrum),
        dir,
    )?);
    Ok(written)
}

pub fn load_result(dir: &Path) -> Result<RunResult> {
    let path = dir.join(RESULT_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Regenerates the report files of a persisted run from its raw artifacts.
pub fn report_from_dir(dir: &Path) -> Result<Vec<PathBuf>> {
    let result = load_result(dir)?;
    let global: Vec<GenerationRow<f64>> = read_rows(&dir.join(&result.files.global_trace))?;
    let local: Vec<LocalRow<f64>> = read_rows(&dir.join(&result.files.local_trace))?;
    let capture = Capture::<f64>::load_csv(&dir.join(&result.files.capture))?;
    let plan = result.spectrum.plan(result.config.adc.f_s);
    let spectrum = spectrum_metrics(&capture.codes, &plan, result.spectrum.power)?;
    emit_report(&result, &global, &local, Some(&spectrum), dir)
}

/// Outcome of [`audit_run`]: the checks that were performed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditReport {
    pub checks: Vec<String>,
}

fn same(name: &str, a: f64, b: f64) -> Result<()> {
    if a.to_bits() == b.to_bits() {
        Ok(())
    } else {
        Err(Error::Audit(format!("{name}: recorded {a}, recomputed {b}")))
    }
}

/// Recomputes every reported number of a persisted run from its raw
/// artifacts and fails on the first disagreement.
pub fn audit_run(dir: &Path) -> Result<AuditReport> {
    let result = load_result(dir)?;
    let mut checks = Vec::new();

    let capture = Capture::<f64>::load_csv(&dir.join(&result.files.capture))?;
    let plan = result.spectrum.plan(result.config.adc.f_s);
    let s = spectrum_metrics(&capture.codes, &plan, result.spectrum.power)?;
    same("sndr", result.spectrum.sndr, s.sndr)?;
    same("sfdr", result.spectrum.sfdr, s.sfdr)?;
    same("enob", result.spectrum.enob, s.enob)?;
    same("fom_w", result.spectrum.fom_w, s.fom_w)?;
    same("fom_s", result.spectrum.fom_s, s.fom_s)?;
    checks.push("spectrum metrics recomputed from capture".to_string());

    let model = AdcModel::derive(result.design, result.config.adc.clone());
    let rerun = run_segments(&model, &plan)?;
    if rerun.codes != capture.codes {
        return Err(Error::Audit(
            "capture codes differ from a fresh simulation of the design".into(),
        ));
    }
    same("power", result.spectrum.power, power_estimate(&model))?;
    checks.push("capture re-simulated from design".to_string());

    let coarse = evaluate_coarse(&model, &result.specs)?;
    if coarse != result.coarse {
        return Err(Error::Audit("coarse report differs from re-evaluation".into()));
    }
    checks.push("coarse report re-evaluated".to_string());

    let global: Vec<GenerationRow<f64>> = read_rows(&dir.join(&result.files.global_trace))?;
    let local: Vec<LocalRow<f64>> = read_rows(&dir.join(&result.files.local_trace))?;
    let path = dir.join(SUMMARY_FILE);
    let written = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    if written != render_summary(&result, &global, &local) {
        return Err(Error::Audit(
            "summary differs from one rendered from persisted traces".into(),
        ));
    }
    checks.push("summary re-rendered from persisted record and traces".to_string());
    Ok(AuditReport { checks })
}
