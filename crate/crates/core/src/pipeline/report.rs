use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::adc::DesignPoint;
use crate::error::{Error, Result};
use crate::global::GenerationRow;
use crate::harness::{enob_from_sndr, fom_schreier, fom_walden, SpectrumReport};
use crate::local::LocalRow;

use super::{write_rows, RunResult, GLOBAL_TRACE_HEADER, LOCAL_TRACE_HEADER, METRICS_FILE, SUMMARY_FILE};

/// Figures of merit recomputed from SNDR, power and rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryMetrics {
    pub enob: f64,
    pub enob_recorded: f64,
    pub enob_consistent: bool,
    pub fom_s: f64,
    pub fom_w: f64,
}

pub fn summary_metrics(sndr: f64, power: f64, f_s: f64, enob_recorded: f64) -> SummaryMetrics {
    let enob = enob_from_sndr(sndr);
    SummaryMetrics {
        enob,
        enob_recorded,
        enob_consistent: (enob - enob_recorded).abs() <= 1e-9 * enob.abs().max(1.0),
        fom_s: fom_schreier(sndr, f_s, power),
        fom_w: fom_walden(power, enob, f_s),
    }
}

/// Human-readable run summary. Deterministic in its inputs.
pub fn render_summary(result: &RunResult, global: &[GenerationRow<f64>], local: &[LocalRow<f64>]) -> String {
    let cfg = &result.config;
    let sp = &result.spectrum;
    let m = summary_metrics(sp.sndr, sp.power, cfg.adc.f_s, sp.enob);
    let mut s = String::new();
    let _ = writeln!(s, "SAR ADC sizing run");
    let _ = writeln!(s, "status: {:?}", result.status);
    for w in &result.warnings {
        let _ = writeln!(s, "warning: {w}");
    }
    let _ = writeln!(
        s,
        "converter: {} bits, f_s = {} Hz, V_DD = {} V, alpha = {}, seed = {}",
        cfg.adc.n_bits, cfg.adc.f_s, cfg.adc.vdd, cfg.alpha, cfg.seed
    );
    let _ = writeln!(s, "design source: {:?}", result.design_source);
    let _ = writeln!(s);
    let _ = writeln!(s, "design:");
    for (name, v) in DesignPoint::<f64>::FIELDS.iter().zip(result.design.to_vec()) {
        let _ = writeln!(s, "  {name:<10} = {v:.6e}");
    }
    let _ = writeln!(s);
    let violated = result.coarse.slack.iter().filter(|&&x| x < 0.0).count();
    let _ = writeln!(
        s,
        "coarse constraints: {} of {} satisfied",
        result.coarse.slack.len() - violated,
        result.coarse.slack.len()
    );
    let _ = writeln!(
        s,
        "  sampling error = {:.4e} V (bound {:.4e})",
        result.coarse.sampling_error, result.specs.sampling_bound
    );
    let _ = writeln!(
        s,
        "  thermal noise  = {:.4e} V (bound {:.4e})",
        result.coarse.noise_rms, result.specs.noise_bound
    );
    let _ = writeln!(
        s,
        "  timing         = {}",
        if result.coarse.timing_ok { "ok" } else { "failed" }
    );
    let _ = writeln!(s);
    let _ = writeln!(
        s,
        "final sine test: K = {}, J = {}, f_in = {} Hz, M = {}",
        sp.k, sp.j, sp.f_in, sp.m
    );
    let _ = writeln!(
        s,
        "  SNDR  = {:.2} dB (ceiling {:.2} dB)",
        sp.sndr, result.specs.sndr_ceiling
    );
    let _ = writeln!(s, "  SFDR  = {:.2} dB", sp.sfdr);
    let _ = writeln!(
        s,
        "  ENOB  = {:.2} bits (recomputed {:.2}, {})",
        m.enob_recorded,
        m.enob,
        if m.enob_consistent { "consistent" } else { "MISMATCH" }
    );
    let _ = writeln!(s, "  power = {:.3} uW", sp.power * 1e6);
    let _ = writeln!(s, "  FoM_W = {:.1} fJ/conv-step", m.fom_w * 1e15);
    let _ = writeln!(s, "  FoM_S = {:.1} dB", m.fom_s);
    let _ = writeln!(s, "  timing failures = {}", sp.timing_failures);
    let _ = writeln!(s);
    let g = &result.global;
    let _ = writeln!(
        s,
        "global phase: {:?}, {} evaluations, {} generations, {} of {} variables converged",
        g.status,
        g.evals,
        g.generations,
        g.converged_mask.iter().filter(|&&c| c).count(),
        g.converged_mask.len()
    );
    match &result.local {
        Some(l) => {
            let _ = writeln!(
                s,
                "local phase: {} iterations, {} rollbacks, {} cheap / {} expensive evaluations, final w = {}",
                l.iterations, l.rollbacks, l.cheap_evals, l.expensive_evals, l.final_w
            );
        }
        None => {
            let _ = writeln!(s, "local phase: skipped");
        }
    }
    for (name, len) in [("global trace", global.len()), ("local trace", local.len())] {
        if len == 0 {
            let _ = writeln!(s, "{name}: no iterations");
        } else {
            let _ = writeln!(s, "{name}: {len} rows");
        }
    }
    s
}

fn metric_rows(result: &RunResult) -> Vec<(String, f64)> {
    let sp = &result.spectrum;
    let m = summary_metrics(sp.sndr, sp.power, result.config.adc.f_s, sp.enob);
    let mut rows = vec![
        ("sndr_db".to_string(), sp.sndr),
        ("sfdr_db".to_string(), sp.sfdr),
        ("enob".to_string(), sp.enob),
        ("power_w".to_string(), sp.power),
        ("fom_w_j".to_string(), m.fom_w),
        ("fom_s_db".to_string(), m.fom_s),
        ("sampling_error_v".to_string(), result.coarse.sampling_error),
        ("noise_rms_v".to_string(), result.coarse.noise_rms),
    ];
    let n = result.coarse.ssre.len();
    for (i, s) in result.coarse.slack.iter().enumerate() {
        let name = if i < n {
            format!("slack_ssre_{}", i + 1)
        } else {
            ["slack_sampling", "slack_noise", "slack_timing"][i - n].to_string()
        };
        rows.push((name, *s));
    }
    rows
}

/// Writes the summary, metrics table, convergence traces and (when given)
/// the spectrum into `dir`. Returns the written paths.
pub fn emit_report(
    result: &RunResult,
    global: &[GenerationRow<f64>],
    local: &[LocalRow<f64>],
    spectrum: Option<&SpectrumReport<f64>>,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();

    let p = dir.join(SUMMARY_FILE);
    fs::write(&p, render_summary(result, global, local)).map_err(|e| Error::io(&p, e))?;
    out.push(p);

    let p = dir.join(METRICS_FILE);
    let mut w = csv::Writer::from_path(&p)?;
    w.write_record(["metric", "value"])?;
    for (k, v) in metric_rows(result) {
        w.write_record([k, v.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(&p, e))?;
    out.push(p);

    let p = dir.join(&result.files.global_trace);
    write_rows(&p, global, &GLOBAL_TRACE_HEADER)?;
    out.push(p);
    let p = dir.join(&result.files.local_trace);
    write_rows(&p, local, &LOCAL_TRACE_HEADER)?;
    out.push(p);

    if let Some(sp) = spectrum {
        let p = dir.join(&result.files.spectrum);
        sp.save_csv(&p)?;
        out.push(p);
    }
    Ok(out)
}
