//! `sga`: scenario-driven simulation, focusing and evaluation.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use sga_core::io;
use sga_core::pipeline::{self, CompareTolerance, ProcessingMode, RunOptions, Scenario, StageTimes};
use sga_core::SgaError;

#[derive(Parser, Debug)]
#[command(name = "sga", version, about = "Spherical-geometry SAR simulation and image formation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Scenario JSON file.
    scenario: PathBuf,
    /// Override the processing mode (sga_low, sga_high, bp).
    #[arg(long)]
    mode: Option<ProcessingMode>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Also write compressed data, phase history and wavenumber grid.
    #[arg(long)]
    keep_intermediates: bool,
    /// Output directory; defaults to `out/<scenario name>`.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate, focus and evaluate, writing every artifact.
    Run(Common),
    /// Simulate raw echoes into `raw.sgac`.
    Simulate(Common),
    /// Focus `raw.sgac` (or `--raw`) into `image.sgai` and `image.png`.
    Focus {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        raw: Option<PathBuf>,
    },
    /// Measure every target of the scenario in `image.sgai` (or `--image`).
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        image: Option<PathBuf>,
    },
    /// Compare two images on one grid at the scenario's targets.
    Compare {
        #[command(flatten)]
        common: Common,
        image_a: PathBuf,
        image_b: PathBuf,
    },
    /// Print and write the out-of-plane error budget.
    Budget(Common),
}

impl Common {
    fn load(&self) -> Result<(Scenario, PathBuf)> {
        let s = Scenario::from_file(&self.scenario).with_context(|| format!("stage config: reading {}", self.scenario.display()))?;
        let dir = self.output_dir.clone().unwrap_or_else(|| Path::new("out").join(&s.name));
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok((s, dir))
    }

    fn mode(&self, s: &Scenario) -> ProcessingMode {
        self.mode.unwrap_or(s.processing.mode)
    }
}

fn write_times(dir: &Path, name: &str, times: &StageTimes) -> Result<()> {
    let mut text = String::new();
    for (stage, secs) in &times.0 {
        text.push_str(&format!("{stage},{secs:.6}\n"));
    }
    std::fs::write(dir.join(name), text)?;
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(c) => {
            let (s, dir) = c.load()?;
            let summary = pipeline::run(
                &s,
                &RunOptions {
                    output_dir: dir.clone(),
                    mode: c.mode,
                    threads: c.threads,
                    keep_intermediates: c.keep_intermediates,
                },
            )?;
            print!("{}", io::metrics_csv(&summary.reports));
            println!("artifacts written to {}", dir.display());
        }
        Command::Simulate(c) => {
            let (s, dir) = c.load()?;
            pipeline::with_threads(c.threads, || -> Result<()> {
                let mut times = StageTimes::default();
                let st = pipeline::setup(&s)?;
                let raw = pipeline::simulate(&s, &st, &mut times)?;
                io::write_raw(&dir.join("raw.sgac"), &raw)?;
                write_times(&dir, "simulate_times.csv", &times)?;
                if raw.truncated_echoes > 0 {
                    eprintln!("warning: {} echoes were cut by the receive gate", raw.truncated_echoes);
                }
                Ok(())
            })??;
            println!("raw echoes written to {}", dir.join("raw.sgac").display());
        }
        Command::Focus { common: c, raw } => {
            let (s, dir) = c.load()?;
            let mode = c.mode(&s);
            let raw_path = raw.unwrap_or_else(|| dir.join("raw.sgac"));
            pipeline::with_threads(c.threads, || -> Result<()> {
                let mut times = StageTimes::default();
                let st = pipeline::setup(&s)?;
                let raw = io::read_raw(&raw_path).with_context(|| format!("stage focus: reading {}", raw_path.display()))?;
                let image = match mode {
                    ProcessingMode::Bp => pipeline::focus_bp(&s, &st, &raw, &mut times)?,
                    _ => {
                        let p = pipeline::focus_sga(&s, &st, &raw, mode, c.keep_intermediates, &mut times)?;
                        if let Some(ph) = &p.phase_history {
                            io::write_phase_history(&dir.join("phase_history.sgap"), ph)?;
                        }
                        if let Some(w) = &p.wavenumber {
                            io::write_wavenumber(&dir.join("wavenumber.sgaw"), w)?;
                        }
                        p.image
                    }
                };
                io::write_image(&dir.join("image.sgai"), &image)?;
                io::write_png(&dir.join("image.png"), &image, io::PNG_DYNAMIC_RANGE_DB)?;
                write_times(&dir, "focus_times.csv", &times)?;
                Ok(())
            })??;
            println!("image written to {}", dir.join("image.sgai").display());
        }
        Command::Evaluate { common: c, image } => {
            let (s, dir) = c.load()?;
            let path = image.unwrap_or_else(|| dir.join("image.sgai"));
            let st = pipeline::setup(&s)?;
            let img = io::read_image(&path).with_context(|| format!("stage evaluate: reading {}", path.display()))?;
            let reports = pipeline::evaluate(&s, &st, &img)?;
            io::write_metrics_csv(&dir.join("metrics.csv"), &reports)?;
            print!("{}", io::metrics_csv(&reports));
        }
        Command::Compare { common: c, image_a, image_b } => {
            let (s, dir) = c.load()?;
            let st = pipeline::setup(&s)?;
            let a = io::read_image(&image_a).with_context(|| format!("stage compare: reading {}", image_a.display()))?;
            let b = io::read_image(&image_b).with_context(|| format!("stage compare: reading {}", image_b.display()))?;
            let report = pipeline::compare(
                &a,
                &b,
                &st.target_xy(),
                s.evaluation.search_px,
                s.evaluation.oversample,
                CompareTolerance::default(),
            )?;
            std::fs::write(dir.join("compare.csv"), report.table())?;
            std::fs::write(dir.join("compare.json"), serde_json::to_string_pretty(&report)?)?;
            pipeline::write_profile_overlays(&dir, &a, &b, &report, s.evaluation.oversample)?;
            print!("{}", report.table());
            println!("overall: {}", if report.pass { "PASS" } else { "FAIL" });
        }
        Command::Budget(c) => {
            let (s, dir) = c.load()?;
            let st = pipeline::setup(&s)?;
            let b = pipeline::budget(&s, &st)?;
            std::fs::write(dir.join("error_budget.txt"), format!("{}\n{}", b.report(), b.key_values()))?;
            print!("{}", b.report());
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let validation = err.chain().any(|e| e.downcast_ref::<SgaError>().is_some_and(SgaError::is_validation));
    if validation {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
