use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use sar_sizing::adc::{AdcModel, DesignPoint};
use sar_sizing::coarse::evaluate_coarse;
use sar_sizing::pipeline::{
    audit_run, load_config, persist, report_from_dir, run_pipeline, sine_plan, sine_test, write_json, RunConfig,
    RunStatus,
};
use sar_sizing::specs::DerivedSpecs;

/// Behavioral SAR ADC sizing: global/local optimization over a coarse
/// model with sine-test verification.
#[derive(Parser)]
#[command(name = "sarsize", version)]
struct Cli {
    /// Override the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory (for `run`, the exact run directory).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full sizing flow and persist the run directory.
    Run { config: PathBuf },
    /// Coarse report of one design.
    Eval {
        config: PathBuf,
        #[arg(long)]
        design: PathBuf,
    },
    /// Sine test of one design.
    Sndr {
        config: PathBuf,
        #[arg(long)]
        design: PathBuf,
        /// Segment count; must divide the capture length.
        #[arg(long)]
        segments: Option<usize>,
        /// Capture length (default: the configured optimization length).
        #[arg(long)]
        k: Option<usize>,
    },
    /// Regenerate the report of a run directory from its raw artifacts.
    Report {
        run_dir: PathBuf,
        /// Also recompute every reported number and fail on mismatch.
        #[arg(long)]
        audit: bool,
    },
}

fn load(path: &Path, seed: Option<u64>) -> Result<RunConfig> {
    let mut cfg = load_config(path).with_context(|| format!("loading {}", path.display()))?;
    if let Some(s) = seed {
        cfg.seed = s;
        cfg.global.seed = s;
    }
    for w in &cfg.warnings {
        log::warn!("{w}");
    }
    for d in &cfg.defaults_applied {
        log::debug!("default applied: {d}");
    }
    Ok(cfg)
}

fn load_design(path: &Path) -> Result<DesignPoint<f64>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing design file {}", path.display()))
}

fn run_dir(cli_out: Option<PathBuf>, cfg: &RunConfig) -> PathBuf {
    cli_out.unwrap_or_else(|| {
        let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
        cfg.output_dir.join(format!("run-{stamp}-seed{}", cfg.seed))
    })
}

fn execute(cli: Cli) -> Result<ExitCode> {
    if let Some(n) = cli.workers {
        if n == 0 {
            bail!("--workers must be at least 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Run { config } => {
            let cfg = load(&config, cli.seed)?;
            let dir = run_dir(cli.out, &cfg);
            let art = run_pipeline(&cfg)?;
            persist(&art, &dir)?;
            let r = &art.result;
            for w in &r.warnings {
                log::warn!("{w}");
            }
            println!(
                "{}: SNDR {:.2} dB, ENOB {:.2}, power {:.4e} W, FoM_S {:.1} dB",
                dir.display(),
                r.spectrum.sndr,
                r.spectrum.enob,
                r.spectrum.power,
                r.spectrum.fom_s
            );
            Ok(if r.status == RunStatus::Ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            })
        }
        Command::Eval { config, design } => {
            let cfg = load(&config, cli.seed)?;
            let model = AdcModel::build(load_design(&design)?, cfg.adc.clone(), &cfg.bounds)?;
            let specs = DerivedSpecs::derive(cfg.adc.n_bits, cfg.adc.vdd, cfg.alpha)?;
            let report = evaluate_coarse(&model, &specs)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            if let Some(dir) = cli.out {
                std::fs::create_dir_all(&dir)?;
                write_json(&dir.join("coarse.json"), &report)?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Sndr {
            config,
            design,
            segments,
            k,
        } => {
            let mut cfg = load(&config, cli.seed)?;
            if let Some(m) = segments {
                cfg.harness.m = m;
            }
            let model = AdcModel::build(load_design(&design)?, cfg.adc.clone(), &cfg.bounds)?;
            let plan = sine_plan(&cfg, k.unwrap_or(cfg.harness.k))?;
            let (capture, spectrum) = sine_test(&model, &plan)?;
            println!(
                "K = {}, J = {}, M = {}: SNDR {:.3} dB, SFDR {:.3} dB, ENOB {:.3}, FoM_S {:.2} dB, timing failures {}",
                plan.k,
                plan.j,
                plan.m,
                spectrum.sndr,
                spectrum.sfdr,
                spectrum.enob,
                spectrum.fom_s,
                capture.timing_failures
            );
            if let Some(dir) = cli.out {
                std::fs::create_dir_all(&dir)?;
                capture.save_csv(&dir.join("capture.csv"))?;
                spectrum.save_csv(&dir.join("spectrum.csv"))?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { run_dir, audit } => {
            for p in report_from_dir(&run_dir)? {
                println!("{}", p.display());
            }
            if audit {
                for c in audit_run(&run_dir)?.checks {
                    println!("audit ok: {c}");
                }
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
