//! The end-to-end driver: a fixed stage chain per estimator, artifact
//! discovery between stages, and a reproducibility manifest.
//!
//! Layout under the output directory:
//!
//! ```text
//! data/       rendered dataset + manifest.json (+ train_manifest.json)
//! depth/      item_NNNN_{h,v}.pfm + item_NNNN_meta.json
//! models/     model_h.lfw, model_v.lfw          (network estimator only)
//! surfaces/   item_NNNN.ply, _grid.pfm, _axes.json
//! reports/    item_NNNN.json, summary.json
//! run.json    stage-by-stage record of what was produced
//! ```

use std::path::{Path, PathBuf};
use std::time::Instant;

use lfrecon_core::error::Error;
use lfrecon_core::io::manifest::{config_hash, DatasetManifest, RunManifest};
use lfrecon_core::io::jsonfmt;
use lfrecon_core::lightfield::Orientation;
use lfrecon_core::metrics::EvalReport;
use serde::Serialize;

use crate::config::{Estimator, PipelineConfig};
use crate::error::CliResult;
use crate::meta::{pair_paths, PairMeta};
use crate::stages::{self, PairExtras};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Synth,
    Epi,
    Train,
    Infer,
    Fuse,
    Eval,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Epi => "epi",
            Stage::Train => "train",
            Stage::Infer => "infer",
            Stage::Fuse => "fuse",
            Stage::Eval => "eval",
        }
    }

    pub fn parse(s: &str) -> CliResult<Stage> {
        match s.trim().to_ascii_lowercase().as_str() {
            "synth" => Ok(Stage::Synth),
            "epi" => Ok(Stage::Epi),
            "train" => Ok(Stage::Train),
            "infer" => Ok(Stage::Infer),
            "fuse" => Ok(Stage::Fuse),
            "eval" => Ok(Stage::Eval),
            other => Err(Error::InvalidInput(format!(
                "unknown stage {other:?}; expected synth, epi, train, infer, fuse or eval"
            ))
            .into()),
        }
    }
}

/// The stage order each estimator runs.
pub fn chain_for(estimator: Estimator) -> &'static [Stage] {
    match estimator {
        Estimator::Oracle => &[Stage::Synth, Stage::Epi, Stage::Fuse, Stage::Eval],
        Estimator::Network => &[
            Stage::Synth,
            Stage::Train,
            Stage::Infer,
            Stage::Fuse,
            Stage::Eval,
        ],
    }
}

/// Resolves `--stages`: every named stage must belong to the chain and the
/// selection must be one contiguous run of it, so each stage's inputs are
/// either just produced or already on disk from a previous invocation.
fn select_stages(chain: &'static [Stage], csv: Option<&str>) -> CliResult<Vec<Stage>> {
    let Some(csv) = csv else {
        return Ok(chain.to_vec());
    };
    let chain_names = || {
        chain
            .iter()
            .map(|s| s.name())
            .collect::<Vec<_>>()
            .join(", ")
    };
    let mut indices = Vec::new();
    for part in csv.split(',') {
        let stage = Stage::parse(part)?;
        let i = chain.iter().position(|&s| s == stage).ok_or_else(|| {
            Error::InvalidInput(format!(
                "stage {} is not part of this estimator's chain ({})",
                stage.name(),
                chain_names()
            ))
        })?;
        if indices.contains(&i) {
            return Err(Error::InvalidInput(format!(
                "stage {} was named twice",
                stage.name()
            ))
            .into());
        }
        indices.push(i);
    }
    indices.sort_unstable();
    if indices.windows(2).any(|w| w[1] != w[0] + 1) {
        return Err(Error::InvalidInput(format!(
            "--stages must be a contiguous run of the chain ({}); later stages read the \
             artifacts the skipped ones would have written",
            chain_names()
        ))
        .into());
    }
    Ok(indices.into_iter().map(|i| chain[i]).collect())
}

pub fn run_pipeline(cfg: &PipelineConfig, out: &Path, stages_csv: Option<&str>) -> CliResult<()> {
    cfg.validate()?;
    let selected = select_stages(chain_for(cfg.estimator), stages_csv)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut run = RunManifest::new(config_hash(cfg)?, cfg.seed);
    for &stage in &selected {
        let t0 = Instant::now();
        println!("[{}] starting", stage.name());
        let artifacts = execute_stage(stage, cfg, out)?;
        println!(
            "[{}] done in {:.1} s, {} artifact(s)",
            stage.name(),
            t0.elapsed().as_secs_f64(),
            artifacts.len()
        );
        run.record_stage(stage.name(), artifacts);
    }
    let run_path = out.join("run.json");
    run.write(&run_path)?;
    println!("run manifest: {}", run_path.display());
    Ok(())
}

fn execute_stage(stage: Stage, cfg: &PipelineConfig, out: &Path) -> CliResult<Vec<PathBuf>> {
    match stage {
        Stage::Synth => stage_synth(cfg, out),
        Stage::Epi => stage_epi(cfg, out),
        Stage::Train => stage_train(cfg, out),
        Stage::Infer => stage_infer(cfg, out),
        Stage::Fuse => stage_fuse(cfg, out),
        Stage::Eval => stage_eval(cfg, out),
    }
}

fn item_name(i: usize) -> String {
    format!("item_{i:04}")
}

fn depth_prefix(out: &Path, i: usize) -> PathBuf {
    out.join("depth").join(item_name(i))
}

fn surface_path(out: &Path, i: usize) -> PathBuf {
    out.join("surfaces").join(format!("{}.ply", item_name(i)))
}

/// Records artifacts relative to the output directory so `run.json` stays
/// valid when the directory moves.
fn rel(out: &Path, p: &Path) -> PathBuf {
    p.strip_prefix(out).unwrap_or(p).to_path_buf()
}

fn read_data_manifest(out: &Path) -> CliResult<(DatasetManifest, PathBuf)> {
    let data_dir = out.join("data");
    let path = data_dir.join("manifest.json");
    stages::require(&path)?;
    let manifest = DatasetManifest::read(&path)?;
    if manifest.entries.is_empty() {
        return Err(Error::InvalidInput(format!("{} lists no items", path.display())).into());
    }
    Ok((manifest, data_dir))
}

fn stage_synth(cfg: &PipelineConfig, out: &Path) -> CliResult<Vec<PathBuf>> {
    let manifest = stages::run_synth(&cfg.synth, cfg.seed, &out.join("data"))?;
    println!(
        "  rendered {} item(s) at {}x{}, {}x{} views",
        manifest.entries.len(),
        manifest.spatial_res.0,
        manifest.spatial_res.1,
        manifest.angular_res.0,
        manifest.angular_res.1
    );
    Ok(vec![PathBuf::from("data/manifest.json")])
}

fn stage_epi(cfg: &PipelineConfig, out: &Path) -> CliResult<Vec<PathBuf>> {
    let (manifest, data_dir) = read_data_manifest(out)?;
    let spec = cfg.search.to_spec();
    let mut artifacts = Vec::new();
    for (i, entry) in manifest.entries.iter().enumerate() {
        let t0 = Instant::now();
        let (h, v, m) = stages::run_epi(
            &entry.container_path(&data_dir),
            &spec,
            &depth_prefix(out, i),
            PairExtras::from_entry(entry, Path::new("../data")),
        )?;
        println!(
            "  {} estimated in {:.1} s",
            item_name(i),
            t0.elapsed().as_secs_f64()
        );
        artifacts.extend([rel(out, &h), rel(out, &v), rel(out, &m)]);
    }
    Ok(artifacts)
}

fn stage_train(cfg: &PipelineConfig, out: &Path) -> CliResult<Vec<PathBuf>> {
    let (manifest, data_dir) = read_data_manifest(out)?;
    let n = manifest.entries.len();
    let k = cfg.train.hold_out;
    if k >= n {
        return Err(Error::InvalidInput(format!(
            "train.hold_out = {k} leaves no training items (dataset has {n})"
        ))
        .into());
    }
    // The held-out tail stays visible to infer/fuse/eval but never reaches
    // the optimizer: training reads a filtered copy of the manifest.
    let train_manifest_path = data_dir.join("train_manifest.json");
    let mut train_manifest = manifest.clone();
    train_manifest.entries.truncate(n - k);
    train_manifest.write(&train_manifest_path)?;
    let mut artifacts = vec![rel(out, &train_manifest_path)];

    for orientation in [Orientation::Horizontal, Orientation::Vertical] {
        let tag = match orientation {
            Orientation::Horizontal => "h",
            Orientation::Vertical => "v",
        };
        let (train_seed, init_seed) = stages::train_seeds(cfg.seed, orientation);
        let out_model = out.join("models").join(format!("model_{tag}.lfw"));
        let t0 = Instant::now();
        let outcome = stages::run_train(
            &train_manifest_path,
            orientation,
            None,
            cfg.train.fc_hidden,
            &cfg.train.to_core(train_seed),
            init_seed,
            &out_model,
        )?;
        println!(
            "  {orientation}: {} samples, {} iterations, loss {:.4} -> {:.4} in {:.1} s",
            outcome.samples,
            outcome.iterations,
            outcome.first_loss,
            outcome.final_loss,
            t0.elapsed().as_secs_f64()
        );
        artifacts.push(rel(out, &out_model));
    }
    Ok(artifacts)
}

fn stage_infer(_cfg: &PipelineConfig, out: &Path) -> CliResult<Vec<PathBuf>> {
    let (manifest, data_dir) = read_data_manifest(out)?;
    let h_model = stages::load_model(&out.join("models").join("model_h.lfw"))?;
    let v_model = stages::load_model(&out.join("models").join("model_v.lfw"))?;
    let mut artifacts = Vec::new();
    for (i, entry) in manifest.entries.iter().enumerate() {
        let (h, v, m) = stages::run_infer(
            &entry.container_path(&data_dir),
            &h_model,
            &v_model,
            &depth_prefix(out, i),
            PairExtras::from_entry(entry, Path::new("../data")),
        )?;
        artifacts.extend([rel(out, &h), rel(out, &v), rel(out, &m)]);
    }
    println!("  predicted {} depth-map pair(s)", manifest.entries.len());
    Ok(artifacts)
}

fn stage_fuse(cfg: &PipelineConfig, out: &Path) -> CliResult<Vec<PathBuf>> {
    let (manifest, _) = read_data_manifest(out)?;
    let mut artifacts = Vec::new();
    for i in 0..manifest.entries.len() {
        let (h, v, m) = pair_paths(&depth_prefix(out, i));
        let t0 = Instant::now();
        let fused = stages::run_fuse(&h, &v, &m, &cfg.gridfit, &surface_path(out, i))?;
        println!(
            "  {} fused in {:.1} s",
            item_name(i),
            t0.elapsed().as_secs_f64()
        );
        artifacts.extend([
            rel(out, &fused.ply),
            rel(out, &fused.grid_pfm),
            rel(out, &fused.axes_json),
        ]);
    }
    Ok(artifacts)
}

#[derive(Serialize)]
struct ItemReport {
    item: String,
    #[serde(flatten)]
    report: EvalReport,
}

#[derive(Serialize)]
struct EvalSummary {
    n_items: usize,
    mean_rmse: f64,
    mean_median: f64,
    /// Mean over the items that produced one.
    mean_nme: Option<f64>,
    items: Vec<ItemReport>,
}

fn stage_eval(cfg: &PipelineConfig, out: &Path) -> CliResult<Vec<PathBuf>> {
    let (manifest, _) = read_data_manifest(out)?;
    let opts = cfg.metrics.to_options();
    let mut artifacts = Vec::new();
    let mut items = Vec::new();
    for i in 0..manifest.entries.len() {
        let (_, _, meta_path) = pair_paths(&depth_prefix(out, i));
        stages::require(&meta_path)?;
        let meta = PairMeta::read(&meta_path)?;
        let gt_rel = meta.ground_truth.as_ref().ok_or_else(|| {
            Error::InvalidInput(format!(
                "{} records no ground truth to evaluate against",
                meta_path.display()
            ))
        })?;
        let gt = PairMeta::resolve(&meta_path, gt_rel);
        let report_path = out.join("reports").join(format!("{}.json", item_name(i)));
        let report = stages::run_eval(
            &surface_path(out, i),
            &gt,
            &meta_path,
            &opts,
            &report_path,
            None,
        )?;
        match report.nme {
            Some(nme) => println!(
                "  {}: rmse {:.3} mm, median {:.3} mm, nme {:.4}",
                item_name(i),
                report.rmse,
                report.median,
                nme
            ),
            None => println!(
                "  {}: rmse {:.3} mm, median {:.3} mm",
                item_name(i),
                report.rmse,
                report.median
            ),
        }
        artifacts.push(rel(out, &report_path));
        items.push(ItemReport {
            item: item_name(i),
            report,
        });
    }
    let n_items = items.len();
    let mean_rmse = items.iter().map(|r| r.report.rmse).sum::<f64>() / n_items as f64;
    let mean_median = items.iter().map(|r| r.report.median).sum::<f64>() / n_items as f64;
    let nmes: Vec<f64> = items.iter().filter_map(|r| r.report.nme).collect();
    let summary = EvalSummary {
        n_items,
        mean_rmse,
        mean_median,
        mean_nme: (!nmes.is_empty()).then(|| nmes.iter().sum::<f64>() / nmes.len() as f64),
        items,
    };
    let summary_path = out.join("reports").join("summary.json");
    jsonfmt::write_file(&summary_path, &summary)?;
    println!(
        "  summary: mean rmse {:.3} mm over {} item(s)",
        summary.mean_rmse, n_items
    );
    artifacts.push(rel(out, &summary_path));
    Ok(artifacts)
}
