// SPDX-License-Identifier: Apache-2.0

//! `isac4d`: run the imaging pipeline, sweep SNR, or emit the demo scene.
//!
//! Exit codes: 0 success, 2 bad configuration or input, 3 I/O failure,
//! 4 a processing stage failed.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use isac4d_core::pipeline::{run_pipeline, run_sweep, AlgorithmChoice, RunConfig};
use isac4d_core::scene::generate_demo_scene;
use isac4d_core::{Error, Profile, RdmWindow};

const DEFAULT_OUT_DIR: &str = "isac4d-out";

#[derive(Parser)]
#[command(name = "isac4d", version, about = "Downlink OFDM ISAC 4D imaging simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Image the scene at every SNR point and write clouds, reports and metrics.csv
    Run(RunArgs),
    /// Deviation versus SNR for each algorithm; writes sweep.csv
    Sweep(RunArgs),
    /// Print the built-in street scene as CSV
    DemoScene {
        /// write here instead of stdout
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Print the resolved configuration as TOML
    Config(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML configuration; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    /// scene CSV (`bs,x,y,z` line, then `x,y,z,v[,gain]` rows)
    #[arg(long, conflicts_with = "demo")]
    scene: Option<PathBuf>,
    /// use the built-in street scene
    #[arg(long)]
    demo: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// comma-separated SNR points in dB, e.g. `-20,-5,10`
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    snr: Vec<f64>,
    /// music, fft4d or both
    #[arg(long)]
    algorithm: Option<AlgorithmChoice>,
    /// full or test
    #[arg(long)]
    profile: Option<Profile>,
    /// range/Doppler taper: hann or rectangular
    #[arg(long)]
    rdm_window: Option<RdmWindow>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// also write RDM, threshold and pseudo-spectrum dumps
    #[arg(long)]
    dump_intermediates: bool,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(profile) = self.profile {
            cfg.profile = profile;
        }
        if self.demo {
            cfg.scene = None;
        }
        if let Some(scene) = &self.scene {
            cfg.scene = Some(scene.clone());
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if !self.snr.is_empty() {
            cfg.snr_db = self.snr.clone();
        }
        if let Some(alg) = self.algorithm {
            cfg.algorithm = alg;
        }
        if let Some(window) = self.rdm_window {
            cfg.rdm_window = window;
        }
        if let Some(dir) = &self.out_dir {
            cfg.out_dir = Some(dir.clone());
        }
        if self.dump_intermediates {
            cfg.dump_intermediates = true;
        }
        Ok(cfg)
    }

    fn resolve_with_output(&self) -> Result<RunConfig, Error> {
        let mut cfg = self.resolve()?;
        cfg.out_dir.get_or_insert_with(|| PathBuf::from(DEFAULT_OUT_DIR));
        Ok(cfg)
    }
}

fn exit_code(err: &Error) -> u8 {
    match err.root() {
        Error::Config(_) | Error::Parse { .. } | Error::Scene(_) => 2,
        Error::Io { .. } => 3,
        _ => 4,
    }
}

fn execute(command: Command) -> Result<(), Error> {
    match command {
        Command::Run(args) => {
            let cfg = args.resolve_with_output()?;
            for o in run_pipeline(&cfg)? {
                println!(
                    "{} at {} dB: {} RDM cells, {} points, overall deviation {:.4}",
                    o.algorithm,
                    o.snr_db,
                    o.rdm_cells,
                    o.cloud.len(),
                    o.report.overall
                );
            }
            println!("outputs in {}", cfg.out_dir.clone().unwrap_or_default().display());
        }
        Command::Sweep(args) => {
            let cfg = args.resolve_with_output()?;
            for r in run_sweep(&cfg)? {
                match (&r.report, &r.error) {
                    (Some(rep), _) => println!("{} at {} dB: overall deviation {:.4}", r.algorithm, r.snr_db, rep.overall),
                    (None, err) => println!("{} at {} dB: failed: {}", r.algorithm, r.snr_db, err.as_deref().unwrap_or("")),
                }
            }
            println!("outputs in {}", cfg.out_dir.clone().unwrap_or_default().display());
        }
        Command::DemoScene { output } => {
            let text = generate_demo_scene().to_csv();
            match output {
                Some(path) => std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?,
                None => print!("{text}"),
            }
        }
        Command::Config(args) => print!("{}", args.resolve()?.to_toml()),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
