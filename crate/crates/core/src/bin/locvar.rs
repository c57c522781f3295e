use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use locvar::error::{Error, Result};
use locvar::experiments::{self, Arm, ExperimentConfig, Outcome};

#[derive(Parser)]
#[command(name = "locvar", version, about = "Sampling and weighting experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// BS versus TBS on a 1-D function
    Toy1d(Common),
    /// BS versus TBS on the Bateman system, with error maps
    Bateman(Common),
    /// Uniform versus VBSW weights
    Vbsw(Common),
    /// Mean metric over the (m, k) grid
    Hypergrid(Common),
    /// Feature-space VBSW under label noise
    Noise(Common),
    /// Emit BS and TBS designs without training
    TbsSample(Common),
    /// Emit VBSW weights without training
    VbswWeights(Common),
}

#[derive(Args)]
struct Common {
    /// JSON or TOML experiment file; defaults apply when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// "3", "0,4,9" or "0..40"; overrides the file
    #[arg(long)]
    seeds: Option<String>,
    /// Output directory; overrides the file
    #[arg(long)]
    out: Option<PathBuf>,
    /// bs, tbs, baseline or vbsw; overrides the file
    #[arg(long)]
    arm: Option<String>,
}

impl Common {
    fn resolve(&self, default_out: &str) -> Result<(ExperimentConfig, PathBuf)> {
        let mut cfg = match &self.config {
            // an unreadable config file is a config error, not a run failure
            Some(p) => ExperimentConfig::load(p).map_err(|e| match e {
                Error::Io { .. } => Error::Config(e.to_string()),
                other => other,
            })?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = &self.seeds {
            cfg.seeds = experiments::parse_seeds(s)?;
        }
        if let Some(a) = &self.arm {
            cfg.arm = Some(Arm::parse(a)?);
        }
        let out = self
            .out
            .clone()
            .or_else(|| cfg.out_dir.clone())
            .unwrap_or_else(|| PathBuf::from(default_out));
        Ok((cfg, out))
    }
}

fn ignore_arm(cfg: &ExperimentConfig, name: &str) {
    if cfg.arm.is_some() {
        log::warn!("{name} runs every arm; --arm is ignored");
    }
}

fn run(command: Command) -> Result<()> {
    let (outcome, out): (Outcome, PathBuf) = match command {
        Command::Toy1d(c) => {
            let (cfg, out) = c.resolve("out/toy1d")?;
            (experiments::run_toy_1d(&cfg.toy1d, &cfg.seeds, cfg.arm)?, out)
        }
        Command::Bateman(c) => {
            let (cfg, out) = c.resolve("out/bateman")?;
            (experiments::run_bateman(&cfg.bateman, &cfg.seeds, cfg.arm)?, out)
        }
        Command::Vbsw(c) => {
            let (cfg, out) = c.resolve("out/vbsw")?;
            (experiments::run_vbsw_toy(&cfg.vbsw, &cfg.seeds, cfg.arm)?, out)
        }
        Command::Hypergrid(c) => {
            let (cfg, out) = c.resolve("out/hypergrid")?;
            ignore_arm(&cfg, "hypergrid");
            (experiments::run_hyper_grid(&cfg.hyper_grid, &cfg.seeds)?.1, out)
        }
        Command::Noise(c) => {
            let (cfg, out) = c.resolve("out/noise")?;
            ignore_arm(&cfg, "noise");
            (experiments::run_label_noise(&cfg.label_noise, &cfg.seeds)?, out)
        }
        Command::TbsSample(c) => {
            let (cfg, out) = c.resolve("out/tbs-sample")?;
            (experiments::run_tbs_sample(&cfg.tbs_sample, &cfg.seeds, cfg.arm)?, out)
        }
        Command::VbswWeights(c) => {
            let (cfg, out) = c.resolve("out/vbsw-weights")?;
            ignore_arm(&cfg, "vbsw-weights");
            (experiments::run_vbsw_weights(&cfg.vbsw_weights, &cfg.seeds)?, out)
        }
    };
    outcome.write(&out)?;
    for s in &outcome.summaries {
        let mut line = format!("{:<12} n={}", s.arm, s.count);
        for (name, st) in &s.stats {
            line.push_str(&format!("  {name}={:.4e}±{:.1e}", st.mean, st.ci95));
        }
        println!("{line}");
    }
    for (name, v) in &outcome.extras {
        println!("{name} = {v:.4e}");
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        _ if e.is_numerical() => 3,
        Error::Config(_)
        | Error::Argument(_)
        | Error::Parse { .. }
        | Error::Domain { .. }
        | Error::NotCategorical(_)
        | Error::UnsupportedOrder { .. } => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
