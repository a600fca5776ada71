//! `lfrecon` — surface reconstruction from 4D light fields.
//!
//! Exit codes: 0 success, 1 invalid input (bad flags, malformed or missing
//! files), 2 internal failure (diverged training, non-converged solves).

mod config;
mod error;
mod meta;
mod pipeline;
mod stages;
mod util;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use lfrecon_core::error::Error;
use lfrecon_core::lightfield::Orientation;

use crate::config::{DifficultyArg, Estimator, PipelineConfig, PoseSet};
use crate::error::CliResult;
use crate::stages::PairExtras;

#[derive(Parser)]
#[command(
    name = "lfrecon",
    version = lfrecon_core::VERSION,
    about = "Model-free 3D surface reconstruction from 4D light fields",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Render a procedural ground-truthed light-field dataset.
    Synth(SynthArgs),
    /// Estimate a depth-map pair by analytic line search on every EPI.
    Epi(EpiArgs),
    /// Train one orientation's depth-curve regressor on a dataset.
    Train(TrainArgs),
    /// Predict a depth-map pair with trained regressors.
    Infer(InferArgs),
    /// Fuse a depth-map pair into one regularized surface mesh.
    Fuse(FuseArgs),
    /// Compare a fused surface against a ground-truth depth map.
    Eval(EvalArgs),
    /// Run the full chain (render, estimate, fuse, evaluate) in one go.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// JSON configuration supplying defaults for every flag.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of distinct scenes.
    #[arg(long)]
    scenes: Option<usize>,
    /// Pose set rendered per scene.
    #[arg(long, value_enum)]
    poses: Option<PoseSet>,
    /// Scene geometry tier.
    #[arg(long, value_enum)]
    difficulty: Option<DifficultyArg>,
    /// Per-view resolution "X,Y" in pixels.
    #[arg(long, value_parser = util::parse_pair)]
    res: Option<(usize, usize)>,
    /// Views per axis "U,V" (both odd, >= 3).
    #[arg(long, value_parser = util::parse_pair)]
    angular: Option<(usize, usize)>,
    /// Root seed for scene generation.
    #[arg(long)]
    seed: Option<u64>,
    /// Dataset output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EpiArgs {
    /// JSON configuration supplying defaults for the search flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Light-field container directory.
    #[arg(long = "in")]
    input: PathBuf,
    /// Use the analytic variance-minimizing line search. This is the
    /// default and only standalone estimator; trained models run via
    /// `infer`.
    #[arg(long)]
    oracle: bool,
    /// Lower edge of the disparity sweep, px/view.
    #[arg(long)]
    dmin: Option<f64>,
    /// Upper edge of the disparity sweep, px/view.
    #[arg(long)]
    dmax: Option<f64>,
    /// Number of coarse sweep samples.
    #[arg(long)]
    steps: Option<usize>,
    /// Skip parabolic refinement around the best coarse slope.
    #[arg(long)]
    no_refine: bool,
    /// Output prefix: writes <prefix>_h.pfm, <prefix>_v.pfm and
    /// <prefix>_meta.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum OrientArg {
    /// Horizontal EPIs (one per image row).
    H,
    /// Vertical EPIs (one per image column).
    V,
}

impl From<OrientArg> for Orientation {
    fn from(o: OrientArg) -> Orientation {
        match o {
            OrientArg::H => Orientation::Horizontal,
            OrientArg::V => Orientation::Vertical,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    /// JSON configuration supplying the optimizer settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset manifest JSON.
    #[arg(long)]
    manifest: PathBuf,
    /// Which EPI orientation the model regresses.
    #[arg(long, value_enum)]
    orientation: OrientArg,
    /// Expected EPI width; rejected if the dataset disagrees.
    #[arg(long)]
    width: Option<usize>,
    /// Total SGD iterations (overrides epoch-based scheduling).
    #[arg(long)]
    iters: Option<usize>,
    /// Root seed for shuffling and weight initialization.
    #[arg(long)]
    seed: Option<u64>,
    /// Output weights file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct InferArgs {
    /// Light-field container directory.
    #[arg(long)]
    lf: PathBuf,
    /// Horizontal-EPI model weights.
    #[arg(long)]
    hmodel: PathBuf,
    /// Vertical-EPI model weights.
    #[arg(long)]
    vmodel: PathBuf,
    /// Output prefix (same pair layout as `epi`).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FuseArgs {
    /// JSON configuration supplying the surface-fit settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Horizontal depth-map PFM.
    #[arg(long = "h", value_name = "PFM")]
    h_map: PathBuf,
    /// Vertical depth-map PFM.
    #[arg(long = "v", value_name = "PFM")]
    v_map: PathBuf,
    /// Pair meta JSON written next to the maps by `epi`/`infer`.
    #[arg(long)]
    meta: PathBuf,
    /// Surface regularization weight.
    #[arg(long)]
    lambda: Option<f64>,
    /// Grid nodes "GX,GY" (default: one node per pixel row/column).
    #[arg(long, value_parser = util::parse_pair)]
    grid: Option<(usize, usize)>,
    /// Output surface PLY; <stem>_grid.pfm and <stem>_axes.json are
    /// written next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// JSON configuration supplying the metric settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Fused surface PLY.
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth depth PFM.
    #[arg(long)]
    gt: PathBuf,
    /// Pair meta JSON (camera rig; optionally mask and landmarks).
    #[arg(long)]
    meta: PathBuf,
    /// Rigidly align the prediction to the ground truth before comparing.
    #[arg(long)]
    icp: bool,
    /// Output report JSON.
    #[arg(long)]
    report: PathBuf,
    /// Optional max-normalized error-heatmap PNG.
    #[arg(long)]
    heatmap: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineArgs {
    /// JSON configuration (defaults are used when omitted).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for all artifacts.
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated contiguous subset of the stage chain to run
    /// (e.g. "fuse,eval" to reuse existing depth maps).
    #[arg(long)]
    stages: Option<String>,
    /// Overrides the configuration's root seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configuration's depth estimator.
    #[arg(long, value_enum)]
    estimator: Option<Estimator>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    init_thread_pool()?;
    match cli.cmd {
        Cmd::Synth(a) => cmd_synth(a),
        Cmd::Epi(a) => cmd_epi(a),
        Cmd::Train(a) => cmd_train(a),
        Cmd::Infer(a) => cmd_infer(a),
        Cmd::Fuse(a) => cmd_fuse(a),
        Cmd::Eval(a) => cmd_eval(a),
        Cmd::Pipeline(a) => cmd_pipeline(a),
    }
}

/// Honors `LFRECON_THREADS`. The value is validated in every build; it
/// sizes the worker pool only when the parallel feature is compiled in.
fn init_thread_pool() -> CliResult<()> {
    let Ok(v) = std::env::var("LFRECON_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        Error::InvalidInput(format!(
            "LFRECON_THREADS must be a positive integer, got {v:?}"
        ))
    })?;
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| crate::error::CliError::internal(format!("thread pool setup failed: {e}")))?;
    #[cfg(not(feature = "parallel"))]
    let _ = n;
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> CliResult<()> {
    let mut cfg = PipelineConfig::load_or_default(a.config.as_deref())?;
    if let Some(v) = a.scenes {
        cfg.synth.scenes = v;
    }
    if let Some(v) = a.poses {
        cfg.synth.poses = v;
    }
    if let Some(v) = a.difficulty {
        cfg.synth.difficulty = v.into();
    }
    if let Some(v) = a.res {
        cfg.synth.res = v;
    }
    if let Some(v) = a.angular {
        cfg.synth.angular = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    cfg.validate()?;
    let manifest = stages::run_synth(&cfg.synth, cfg.seed, &a.out)?;
    println!(
        "rendered {} item(s) into {}",
        manifest.entries.len(),
        a.out.display()
    );
    Ok(())
}

/// Best-effort absolute form of a user-supplied path, so the pair meta's
/// source link stays valid from anywhere.
fn absolute(p: &PathBuf) -> PathBuf {
    std::fs::canonicalize(p).unwrap_or_else(|_| p.clone())
}

fn cmd_epi(a: EpiArgs) -> CliResult<()> {
    let mut cfg = PipelineConfig::load_or_default(a.config.as_deref())?;
    if let Some(v) = a.dmin {
        cfg.search.disparity_min = v;
    }
    if let Some(v) = a.dmax {
        cfg.search.disparity_max = v;
    }
    if let Some(v) = a.steps {
        cfg.search.coarse_steps = v;
    }
    if a.no_refine {
        cfg.search.refine = false;
    }
    let spec = cfg.search.to_spec();
    spec.validate()?;
    let extras = PairExtras {
        source: Some(absolute(&a.input)),
        ..PairExtras::default()
    };
    let (h, v, m) = stages::run_epi(&a.input, &spec, &a.out, extras)?;
    println!(
        "wrote {}, {} and {}",
        h.display(),
        v.display(),
        m.display()
    );
    Ok(())
}

fn cmd_train(a: TrainArgs) -> CliResult<()> {
    let mut cfg = PipelineConfig::load_or_default(a.config.as_deref())?;
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.iters {
        cfg.train.max_iters = Some(v);
    }
    let orientation: Orientation = a.orientation.into();
    let (train_seed, init_seed) = stages::train_seeds(cfg.seed, orientation);
    let outcome = stages::run_train(
        &a.manifest,
        orientation,
        a.width,
        cfg.train.fc_hidden,
        &cfg.train.to_core(train_seed),
        init_seed,
        &a.out,
    )?;
    println!(
        "trained {orientation} model on {} samples for {} iterations, \
         loss {:.4} -> {:.4} (final lr {:.2e}); saved {}",
        outcome.samples,
        outcome.iterations,
        outcome.first_loss,
        outcome.final_loss,
        outcome.final_lr,
        a.out.display()
    );
    Ok(())
}

fn cmd_infer(a: InferArgs) -> CliResult<()> {
    let h_model = stages::load_model(&a.hmodel)?;
    let v_model = stages::load_model(&a.vmodel)?;
    let extras = PairExtras {
        source: Some(absolute(&a.lf)),
        ..PairExtras::default()
    };
    let (h, v, m) = stages::run_infer(&a.lf, &h_model, &v_model, &a.out, extras)?;
    println!(
        "wrote {}, {} and {}",
        h.display(),
        v.display(),
        m.display()
    );
    Ok(())
}

fn cmd_fuse(a: FuseArgs) -> CliResult<()> {
    let mut cfg = PipelineConfig::load_or_default(a.config.as_deref())?;
    if let Some(v) = a.lambda {
        cfg.gridfit.lambda = v;
    }
    if let Some(v) = a.grid {
        cfg.gridfit.grid = Some(v);
    }
    let fused = stages::run_fuse(&a.h_map, &a.v_map, &a.meta, &cfg.gridfit, &a.out)?;
    let (gx, gy) = fused.grid.dims();
    println!(
        "fused {}x{} surface into {} (grid: {}, axes: {})",
        gx,
        gy,
        fused.ply.display(),
        fused.grid_pfm.display(),
        fused.axes_json.display()
    );
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> CliResult<()> {
    let cfg = PipelineConfig::load_or_default(a.config.as_deref())?;
    let mut opts = cfg.metrics.to_options();
    if a.icp {
        opts.align = true;
    }
    let report = stages::run_eval(
        &a.pred,
        &a.gt,
        &a.meta,
        &opts,
        &a.report,
        a.heatmap.as_deref(),
    )?;
    match report.nme {
        Some(nme) => println!(
            "rmse {:.3} mm, median {:.3} mm, nme {:.4} over {} positions; report: {}",
            report.rmse,
            report.median,
            nme,
            report.n,
            a.report.display()
        ),
        None => println!(
            "rmse {:.3} mm, median {:.3} mm over {} positions; report: {}",
            report.rmse,
            report.median,
            report.n,
            a.report.display()
        ),
    }
    Ok(())
}

fn cmd_pipeline(a: PipelineArgs) -> CliResult<()> {
    let mut cfg = PipelineConfig::load_or_default(a.config.as_deref())?;
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.estimator {
        cfg.estimator = v;
    }
    pipeline::run_pipeline(&cfg, &a.out, a.stages.as_deref())
}
