//! Staged experiment driver behind the `csipred` binary.
//!
//! Each subcommand reads and writes artifacts in a work directory, so stages
//! can be rerun or swapped independently:
//!
//! | stage              | writes                                              |
//! |--------------------|-----------------------------------------------------|
//! | `generate`         | `channels_u{u}.bin`                                 |
//! | `train-codec`      | `codec.json`                                        |
//! | `encode`           | `compressed_u{u}.bin`                               |
//! | `train-forecaster` | `forecaster_{arch}_p{P}_s{seed}.json`, `losscurve_…csv` |
//! | `evaluate`         | `eval_{arch}_p{P}_s{seed}.json`                     |
//! | `report`           | `metrics.json`, `sumrate.csv`, `losscurve.csv`      |
//!
//! Every artifact records the config hash and later stages refuse artifacts
//! from another config. Exit codes: 0 success, 1 usage error, 2 runtime error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use ndarray::Array2;

use crate::channel::{generate_series, ChannelSeries};
use crate::checkpoint::{codec_checkpoint, codec_from_checkpoint, forecaster_checkpoint, forecaster_from_checkpoint, Checkpoint};
use crate::codec::{train_codec, CodecModel};
use crate::config::ExperimentConfig;
use crate::diff::{finite_diff_check, Differentiable, GradCheckReport};
use crate::error::{Error, Result};
use crate::eval::{evaluate_pipeline, parse_snr_grid};
use crate::forecast::{train_forecaster, Arch, Forecaster, ModelConfig, ModelOptions, TrainedForecaster};
use crate::numerics::{RngStream, RealMatrix};
use crate::report::{parse_trace_csv, trace_csv, write_report, RunRecord};
use crate::tensor_io::CompressedSeries;

pub const WORKDIR_ENV: &str = "CSIPRED_WORKDIR";

/// Stream tags separating the random draws of different stages.
const TAG_CODEC: u64 = 0xC0DEC;
const TAG_FORECASTER: u64 = 0xF0CA;
const TAG_GRADCHECK: u64 = 0x6CEC;

#[derive(Debug, Parser)]
#[command(name = "csipred", version, about = "Compressed-CSI prediction experiments")]
pub struct Cli {
    /// Artifact directory (default: config paths.workdir, then $CSIPRED_WORKDIR, then .)
    #[arg(long, global = true)]
    pub workdir: Option<PathBuf>,
    /// Worker threads for training; results do not depend on it
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate channel series, one per user
    Generate {
        #[arg(long)]
        config: PathBuf,
        /// Write one user's series here instead of the work directory
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// User written with --out
        #[arg(long, default_value_t = 0)]
        user: usize,
    },
    /// Fit the shared linear codec on the training split of every user
    TrainCodec {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Compress every user's channel series with the trained codec
    Encode {
        #[arg(long)]
        config: PathBuf,
    },
    /// Train a forecaster on the pooled compressed series
    TrainForecaster {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        model: Option<Arch>,
        #[arg(long)]
        window: Option<usize>,
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Score a trained forecaster end to end
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        model: Option<Arch>,
        #[arg(long)]
        window: Option<usize>,
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// SNR grid in dB as lo:hi:step
        #[arg(long)]
        snr: Option<String>,
    },
    /// Compare analytic gradients with central differences
    Gradcheck {
        /// stemgnn, rnn, lstm or codec
        #[arg(long)]
        model: String,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        #[arg(long, default_value_t = crate::diff::DEFAULT_FD_EPS)]
        eps: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 12)]
        window: usize,
        #[arg(long, default_value_t = 3)]
        horizon: usize,
        /// Take model options from a config instead of the defaults
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Aggregate every evaluation in the work directory
    Report {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory (default: the work directory)
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

pub fn channels_path(dir: &Path, user: usize) -> PathBuf {
    dir.join(format!("channels_u{user}.bin"))
}

pub fn codec_path(dir: &Path) -> PathBuf {
    dir.join("codec.json")
}

pub fn compressed_path(dir: &Path, user: usize) -> PathBuf {
    dir.join(format!("compressed_u{user}.bin"))
}

fn run_tag(arch: Arch, horizon: usize, seed: u64) -> String {
    format!("{arch}_p{horizon}_s{seed}")
}

pub fn forecaster_path(dir: &Path, arch: Arch, horizon: usize, seed: u64) -> PathBuf {
    dir.join(format!("forecaster_{}.json", run_tag(arch, horizon, seed)))
}

pub fn trace_path(dir: &Path, arch: Arch, horizon: usize, seed: u64) -> PathBuf {
    dir.join(format!("losscurve_{}.csv", run_tag(arch, horizon, seed)))
}

pub fn eval_path(dir: &Path, arch: Arch, horizon: usize, seed: u64) -> PathBuf {
    dir.join(format!("eval_{}.json", run_tag(arch, horizon, seed)))
}

/// Runs the CLI on `args` (including the program name) and returns the exit
/// code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

struct Context {
    cfg: ExperimentConfig,
    hash: String,
    dir: PathBuf,
}

impl Context {
    fn load(cli: &Cli, config: &Path) -> Result<Self> {
        let mut cfg = ExperimentConfig::load(config)?;
        if let Some(t) = cli.threads {
            cfg.forecaster.hyper.threads = t.max(1);
        }
        let hash = cfg.hash()?;
        let dir = resolve_workdir(cli.workdir.as_deref(), Some(&cfg));
        std::fs::create_dir_all(&dir)?;
        Ok(Self { cfg, hash, dir })
    }

    fn channels(&self) -> Result<Vec<ChannelSeries>> {
        (0..self.cfg.eval.users)
            .map(|u| {
                let path = channels_path(&self.dir, u);
                let (series, hash) = ChannelSeries::load_tagged(&path)?;
                self.expect(hash.as_deref(), &path)?;
                Ok(series)
            })
            .collect()
    }

    fn codec(&self) -> Result<CodecModel> {
        let ckpt = Checkpoint::load(codec_path(&self.dir))?;
        ckpt.expect_hash(&self.hash)?;
        codec_from_checkpoint(&ckpt)
    }

    fn compressed(&self) -> Result<Vec<CompressedSeries>> {
        (0..self.cfg.eval.users)
            .map(|u| {
                let path = compressed_path(&self.dir, u);
                let s = CompressedSeries::load(&path)?;
                self.expect(Some(&s.meta.config_hash), &path)?;
                Ok(s)
            })
            .collect()
    }

    fn expect(&self, found: Option<&str>, path: &Path) -> Result<()> {
        match found {
            Some(h) if h == self.hash => Ok(()),
            Some(h) => Err(Error::ArtifactMismatch(format!(
                "{} was produced under config {h}, current config is {}",
                path.display(),
                self.hash
            ))),
            None => Err(Error::ArtifactMismatch(format!("{} carries no config hash", path.display()))),
        }
    }

    fn model_config(&self, model: Option<Arch>, window: Option<usize>, horizon: Option<usize>) -> Result<ModelConfig> {
        let f = &self.cfg.forecaster;
        self.cfg
            .model_config_for(model.unwrap_or(f.arch), window.unwrap_or(f.window), horizon.unwrap_or(f.horizon))
    }
}

/// `--workdir`, then the config's `paths.workdir`, then `$CSIPRED_WORKDIR`,
/// then the current directory.
pub fn resolve_workdir(flag: Option<&Path>, cfg: Option<&ExperimentConfig>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| cfg.and_then(|c| c.paths.workdir.clone()))
        .or_else(|| std::env::var_os(WORKDIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Generate { config, out, seed, user } => generate(&Context::load(cli, config)?, out.as_deref(), *seed, *user),
        Command::TrainCodec { config, seed, epochs } => {
            let ctx = Context::load(cli, config)?;
            let mut hyper = ctx.cfg.codec.hyper;
            if let Some(e) = epochs {
                hyper.epochs = *e;
            }
            let channels = ctx.channels()?;
            let started = Instant::now();
            let mut rng = RngStream::new(*seed).derive(TAG_CODEC);
            let trained = train_codec(&channels, ctx.cfg.n_latent()?, &hyper, &mut rng)?;
            codec_checkpoint(&trained.model, &ctx.hash)?.save(codec_path(&ctx.dir))?;
            println!(
                "codec C={} gamma={} final loss {:.6e} ({:.1}s)",
                trained.model.n_latent(),
                trained.model.gamma(),
                trained.loss_trace.last().copied().unwrap_or(f64::NAN),
                started.elapsed().as_secs_f64()
            );
            Ok(())
        }
        Command::Encode { config } => {
            let ctx = Context::load(cli, config)?;
            let codec = ctx.codec()?;
            for (u, series) in ctx.channels()?.iter().enumerate() {
                codec.encode_series(series, &ctx.hash, u)?.save(compressed_path(&ctx.dir, u))?;
            }
            println!("encoded {} users into C={}", ctx.cfg.eval.users, codec.n_latent());
            Ok(())
        }
        Command::TrainForecaster {
            config,
            model,
            window,
            horizon,
            epochs,
            seed,
        } => {
            let ctx = Context::load(cli, config)?;
            let mcfg = ctx.model_config(*model, *window, *horizon)?;
            let mut hyper = ctx.cfg.forecaster.hyper.clone();
            if let Some(e) = epochs {
                hyper.max_epochs = *e;
            }
            let series = ctx.compressed()?;
            let started = Instant::now();
            let mut rng = RngStream::new(*seed).derive(TAG_FORECASTER);
            let out = train_forecaster(&mcfg, &series, &hyper, &mut rng)?;
            let (arch, p) = (mcfg.arch(), mcfg.shape().2);
            forecaster_checkpoint(&out.model, &ctx.hash)?.save(forecaster_path(&ctx.dir, arch, p, *seed))?;
            std::fs::write(trace_path(&ctx.dir, arch, p, *seed), trace_csv(&out.trace))?;
            println!(
                "{arch} K={} P={p}: {} parameters, val rmse {:.4e} -> {:.4e} (best epoch {}, {:.1}s)",
                mcfg.shape().1,
                out.model.model.params().scalar_count(),
                out.init_val_rmse,
                out.best_val_rmse,
                out.best_epoch,
                started.elapsed().as_secs_f64()
            );
            Ok(())
        }
        Command::Evaluate {
            config,
            model,
            window,
            horizon,
            seed,
            snr,
        } => {
            let ctx = Context::load(cli, config)?;
            let mcfg = ctx.model_config(*model, *window, *horizon)?;
            let (arch, p) = (mcfg.arch(), mcfg.shape().2);
            let ckpt = Checkpoint::load(forecaster_path(&ctx.dir, arch, p, *seed))?;
            ckpt.expect_hash(&ctx.hash)?;
            let forecaster = forecaster_from_checkpoint(&ckpt)?;
            if forecaster.model.config() != mcfg {
                return Err(Error::ArtifactMismatch("stored forecaster does not match the requested shape".into()));
            }
            let mut tx = ctx.cfg.transmission()?;
            if let Some(grid) = snr {
                tx.snr_db = parse_snr_grid(grid)?;
            }
            let report = evaluate_pipeline(&ctx.channels()?, &ctx.codec()?, &forecaster, &tx)?;
            let trace = match std::fs::read_to_string(trace_path(&ctx.dir, arch, p, *seed)) {
                Ok(text) => parse_trace_csv(&text)?,
                Err(_) => Vec::new(),
            };
            println!(
                "{arch} P={p} seed {seed}: rmse {:.4e}, nmse {:.3} dB (codec {:.3} dB), skipped {}",
                report.rmse, report.nmse_db, report.codec_nmse_db, report.skipped_frames
            );
            RunRecord {
                config_hash: ctx.hash.clone(),
                arch,
                seed: *seed,
                report,
                trace,
            }
            .save(eval_path(&ctx.dir, arch, p, *seed))
        }
        Command::Gradcheck {
            model,
            tol,
            eps,
            seed,
            window,
            horizon,
            config,
        } => {
            let opts = match config {
                Some(path) => ExperimentConfig::load(path)?.forecaster.model,
                None => ModelOptions::default(),
            };
            let report = gradcheck(model, &opts, *window, *horizon, *eps, *seed)?;
            println!(
                "{model}: max relative error {:.3e} at {} over {} parameters (tol {tol:e})",
                report.max_relative_error, report.worst_param, report.checked_scalars
            );
            if report.max_relative_error < *tol {
                Ok(())
            } else {
                Err(Error::numeric("gradcheck", format!("{model} exceeds tolerance {tol:e}")))
            }
        }
        Command::Report { config, out } => {
            let cfg = config.as_deref().map(ExperimentConfig::load).transpose()?;
            let dir = resolve_workdir(cli.workdir.as_deref(), cfg.as_ref());
            let runs = collect_runs(&dir)?;
            if let Some(cfg) = &cfg {
                let hash = cfg.hash()?;
                if let Some(r) = runs.iter().find(|r| r.config_hash != hash) {
                    return Err(Error::ArtifactMismatch(format!(
                        "evaluation under config {} found, current config is {hash}",
                        r.config_hash
                    )));
                }
            }
            let out_dir = out.clone().unwrap_or(dir);
            std::fs::create_dir_all(&out_dir)?;
            let metrics = write_report(&out_dir, &runs)?;
            for e in &metrics.entries {
                println!(
                    "{:<8} gamma={} P={}: rmse {:.4e} ± {:.1e}, nmse {:.3} dB over seeds {:?}",
                    e.model, e.gamma, e.horizon, e.rmse, e.rmse_stderr, e.nmse_db, e.seeds
                );
            }
            Ok(())
        }
    }
}

fn generate(ctx: &Context, out: Option<&Path>, seed: Option<u64>, user: usize) -> Result<()> {
    let mut channel = ctx.cfg.channel.clone();
    if let Some(s) = seed {
        channel.seed = s;
    }
    let started = Instant::now();
    match out {
        Some(path) => {
            generate_series(&channel.for_user(user))?.save_tagged(path, &ctx.hash)?;
            println!("user {user} -> {}", path.display());
        }
        None => {
            for u in 0..ctx.cfg.eval.users {
                generate_series(&channel.for_user(u))?.save_tagged(channels_path(&ctx.dir, u), &ctx.hash)?;
            }
            println!(
                "{} users x {} frames -> {} ({:.1}s)",
                ctx.cfg.eval.users,
                channel.n_timestamps,
                ctx.dir.display(),
                started.elapsed().as_secs_f64()
            );
        }
    }
    Ok(())
}

/// Finite-difference check of one architecture on a random window (or batch,
/// for the codec). The codec is sized for the desk-scale channel.
pub fn gradcheck(model: &str, opts: &ModelOptions, window: usize, horizon: usize, eps: f64, seed: u64) -> Result<GradCheckReport> {
    const NODES: usize = 8;
    let mut rng = RngStream::new(seed).derive(TAG_GRADCHECK);
    if model == "codec" {
        let desk = crate::channel::ChannelConfig::desk_scale();
        let mut codec = CodecModel::new(desk.n_subcarriers, desk.n_tx(), 32, &mut rng)?;
        let x = random_matrix(4, desk.flat_len(), &mut rng);
        return finite_diff_check(&mut codec, &x, eps);
    }
    let arch: Arch = model.parse()?;
    let mut m = Forecaster::new(&ModelConfig::new(arch, NODES, window, horizon, opts), &mut rng)?;
    let x = random_matrix(NODES, window, &mut rng);
    finite_diff_check(&mut m, &x, eps)
}

fn random_matrix(rows: usize, cols: usize, rng: &mut RngStream) -> RealMatrix {
    Array2::from_shape_fn((rows, cols), |_| rng.normal())
}

/// Loads every `eval_*.json` in `dir`, in file-name order.
pub fn collect_runs(dir: &Path) -> Result<Vec<RunRecord>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("eval_") && n.ends_with(".json"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::State(format!("no eval_*.json files in {}", dir.display())));
    }
    paths.iter().map(RunRecord::load).collect()
}

/// Loads a trained forecaster checkpoint without a config.
pub fn load_forecaster(path: impl AsRef<Path>) -> Result<TrainedForecaster> {
    forecaster_from_checkpoint(&Checkpoint::load(path)?)
}
