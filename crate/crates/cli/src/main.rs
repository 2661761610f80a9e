use std::path::{Path, PathBuf};
use std::process::ExitCode;

use actseg::pipeline::{
    cmd_eval, cmd_segment, cmd_synth, cmd_train, EncoderKind, PipelineConfig, SynthOptions,
};
use actseg::{json, Error, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "actseg", version, about = "Segment videos into per-frame action labels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled synthetic dataset with a manifest.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        n_train: usize,
        #[arg(long, default_value_t = 4)]
        n_test: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 48)]
        rows: usize,
        #[arg(long, default_value_t = 64)]
        cols: usize,
        #[arg(long, default_value_t = 0.02)]
        noise: f64,
    },
    /// Train the vocabulary and classifier on a manifest's training split.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        /// Directory receiving vocab.json and model.json.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Label every frame of a video directory.
    Segment {
        #[arg(long)]
        video: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Output CSV with frame,label,maxprob rows.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Compare predicted and ground-truth label files.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Also write the report to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON config file; flags given on the command line take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    window_seconds: Option<f64>,
    /// fv or bow
    #[arg(long)]
    encoder: Option<String>,
    #[arg(long)]
    no_fv_norm: bool,
    #[arg(long)]
    svm_c: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Target frame size as ROWSxCOLS.
    #[arg(long)]
    rescale: Option<String>,
}

fn parse_rescale(s: &str) -> Result<(usize, usize)> {
    let bad = || Error::Argument(format!("rescale `{s}` is not of the form ROWSxCOLS"));
    let (r, c) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    Ok((r.trim().parse().map_err(|_| bad())?, c.trim().parse().map_err(|_| bad())?))
}

impl ConfigArgs {
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(v) = self.tau {
            cfg.tau = v;
        }
        if let Some(v) = self.k {
            cfg.k = v;
        }
        if let Some(v) = self.window_seconds {
            cfg.window_seconds = v;
        }
        if let Some(v) = &self.encoder {
            cfg.encoder = EncoderKind::parse(v)?;
        }
        if self.no_fv_norm {
            cfg.fv_norm = false;
        }
        if let Some(v) = self.svm_c {
            cfg.svm_c = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = &self.rescale {
            cfg.rescale = Some(parse_rescale(v)?);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth {
            out,
            n_train,
            n_test,
            seed,
            rows,
            cols,
            noise,
        } => {
            let opts = SynthOptions {
                rows,
                cols,
                noise_sigma: noise,
                ..SynthOptions::default()
            };
            let m = cmd_synth(&out, n_train, n_test, seed, &opts)?;
            eprintln!(
                "wrote {} training and {} test videos to {}",
                m.train.len(),
                m.test.len(),
                out.display()
            );
        }
        Command::Train {
            manifest,
            out,
            config,
        } => {
            let cfg = config.resolve()?;
            let s = cmd_train(&manifest, &cfg, &out)?;
            eprintln!(
                "trained {} classes on {} samples (dim {}, pool {})",
                s.class_names.len(),
                s.samples,
                s.dim,
                s.pool_size
            );
        }
        Command::Segment {
            video,
            vocab,
            model,
            out,
            config,
        } => {
            let cfg = config.resolve()?;
            let seg = cmd_segment(&video, &vocab, &model, &cfg, &out)?;
            eprintln!("labeled {} frames -> {}", seg.track.len(), out.display());
        }
        Command::Eval { pred, truth, out } => {
            let report = cmd_eval(&pred, &truth, out.as_deref().map(Path::new))?;
            print!("{}", json::to_string(&report)?);
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Argument(_) => 2,
        Error::Numerical(_) => 4,
        _ => 3,
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
