use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use srploc::pipeline::{
    self, cmd_evaluate, cmd_localize, cmd_simulate, cmd_spectrum, estimates_to_csv, format_report,
    parse_estimates, spectrum_to_csv, FeatureFile, FeatureSource, Inputs, Method, RunConfig, Setup,
    Sidecar,
};

#[derive(Parser)]
#[command(name = "srploc", version, about = "Multi-source DOA localization with SRP spectra")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a random room scenario to a WAV file plus ground truth.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Output directory.
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long)]
        num_sources: Option<usize>,
        /// Duration in seconds.
        #[arg(long)]
        duration: Option<f64>,
        /// Fix RT60 (seconds) instead of sampling it.
        #[arg(long)]
        rt60: Option<f64>,
        /// Fix SNR (dB) instead of sampling it.
        #[arg(long)]
        snr: Option<f64>,
        /// Keep sources in place.
        #[arg(long)]
        r#static: bool,
    },
    /// Estimate directions frame by frame.
    Localize {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        inputs: InputArgs,
        /// Estimates CSV (stdout if omitted).
        #[arg(long, short)]
        out: Option<PathBuf>,
        /// Also save the features that were localized.
        #[arg(long)]
        write_features: Option<PathBuf>,
    },
    /// Score an estimates CSV against ground truth.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        estimates: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Per-frame CSV.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Dump one frame's spatial spectrum as CSV (azimuth, elevation, value).
    Spectrum {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        inputs: InputArgs,
        #[arg(long, default_value_t = 0)]
        frame: usize,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Run internal consistency checks.
    Selftest {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Geometry file or `builtin:locata12`.
    #[arg(long)]
    geometry: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    #[arg(long)]
    k_max: Option<usize>,
    #[arg(long)]
    beta_th: Option<f64>,
    /// Return exactly this many sources per frame.
    #[arg(long)]
    known_k: Option<usize>,
}

#[derive(Args)]
struct InputArgs {
    #[arg(long, value_enum)]
    source: Option<SourceArg>,
    #[arg(long)]
    wav: Option<PathBuf>,
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    features: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Idl,
    Pd,
}

#[derive(Clone, Copy, ValueEnum)]
enum SourceArg {
    Oracle,
    Phat,
    File,
}

impl Common {
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p).with_context(|| format!("reading {}", p.display()))?,
            None => RunConfig::default(),
        };
        if let Some(g) = &self.geometry {
            cfg.geometry = g.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(m) = self.method {
            cfg.method = match m {
                MethodArg::Idl => Method::Idl,
                MethodArg::Pd => Method::Pd,
            };
        }
        if let Some(k) = self.k_max {
            cfg.idl.k_max = k;
        }
        if let Some(b) = self.beta_th {
            cfg.idl.beta_th = b;
        }
        if self.known_k.is_some() {
            cfg.idl.known_k = self.known_k;
        }
        Ok(cfg)
    }
}

impl InputArgs {
    fn apply(&self, cfg: &mut RunConfig) -> Inputs {
        if let Some(s) = self.source {
            cfg.feature_source = match s {
                SourceArg::Oracle => FeatureSource::Oracle,
                SourceArg::Phat => FeatureSource::Phat,
                SourceArg::File => FeatureSource::File,
            };
        }
        Inputs {
            wav: self.wav.clone(),
            truth: self.truth.clone(),
            features: self.features.clone(),
        }
    }
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate {
            common,
            out,
            num_sources,
            duration,
            rt60,
            snr,
            r#static,
        } => {
            let mut cfg = common.config()?;
            let sc = &mut cfg.scenario;
            if let Some(k) = num_sources {
                sc.num_sources = k;
            }
            if let Some(d) = duration {
                sc.duration = d;
            }
            if let Some(t) = rt60 {
                sc.rt60 = (t, t);
            }
            if let Some(s) = snr {
                sc.snr_db = (s, s);
            }
            if r#static {
                sc.moving = false;
            }
            let summary = cmd_simulate(&cfg, &out)?;
            for n in &summary.notes {
                println!("{n}");
            }
            println!(
                "wrote {} ({} samples) and {} ({} frames)",
                summary.wav.display(),
                summary.num_samples,
                summary.truth.display(),
                summary.output_frames
            );
        }
        Command::Localize {
            common,
            inputs,
            out,
            write_features,
        } => {
            let mut cfg = common.config()?;
            let inputs = inputs.apply(&mut cfg);
            let result = match &write_features {
                Some(path) => {
                    let setup = Setup::new(&cfg)?;
                    let feats = pipeline::load_features(&cfg, &setup.geometry, &inputs)?;
                    FeatureFile::from_features(&feats)?.write(path)?;
                    pipeline::detect(&cfg, &setup, &feats)?
                }
                None => cmd_localize(&cfg, &inputs)?,
            };
            emit(&out, &estimates_to_csv(&result))?;
        }
        Command::Evaluate {
            common,
            estimates,
            truth,
            out,
        } => {
            let cfg = common.config()?;
            let text = std::fs::read_to_string(&estimates)
                .with_context(|| format!("reading {}", estimates.display()))?;
            let est = parse_estimates(&text)?;
            let truth = Sidecar::read(&truth)?;
            let (report, csv) = cmd_evaluate(&est, &truth, cfg.active_beta)?;
            if out.is_some() {
                emit(&out, &csv)?;
            }
            println!("{}", format_report(&report));
        }
        Command::Spectrum {
            common,
            inputs,
            frame,
            out,
        } => {
            let mut cfg = common.config()?;
            let inputs = inputs.apply(&mut cfg);
            let rows = cmd_spectrum(&cfg, &inputs, frame)?;
            emit(&out, &spectrum_to_csv(&rows))?;
        }
        Command::Selftest { common } => {
            let checks = pipeline::selftest(&common.config()?)?;
            let mut ok = true;
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                ok &= c.passed;
            }
            if !ok {
                bail!("self-test failed");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
