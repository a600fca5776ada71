//! Loss, SGD training loop, dataset assembly, and whole-image inference
//! for the EPI curve regressor.

use std::path::Path;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::io::container::read_container;
use crate::io::manifest::DatasetManifest;
use crate::io::pfm::read_pfm;
use crate::lightfield::{CameraRig, DepthMap, Epi, LightField, Orientation};
use crate::rng::derive_rng;

use super::model::FaceLfNet;
use super::real::Real;
use super::tensor::{Mat, Tensor4};

/// Mean squared error halved: `(1/2N) Σ ‖pred − target‖²` with gradient
/// `(pred − target)/N`, `N` the number of rows (curves) in the batch.
pub fn euclidean_loss<T: Real>(pred: &Mat<T>, target: &Mat<T>) -> Result<(T, Mat<T>)> {
    if (pred.rows, pred.cols) != (target.rows, target.cols) {
        return Err(Error::ShapeMismatch(format!(
            "loss shapes ({},{}) vs ({},{})",
            pred.rows, pred.cols, target.rows, target.cols
        )));
    }
    if pred.rows == 0 {
        return Err(Error::EmptySelection("loss over an empty batch".into()));
    }
    if !target.data.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidInput("loss target contains non-finite values".into()));
    }
    let n = T::of_f64(pred.rows as f64);
    let mut grad = Mat::zeros(pred.rows, pred.cols);
    let mut sum = T::zero();
    for i in 0..pred.data.len() {
        let d = pred.data[i] - target.data[i];
        sum = sum + d * d;
        grad.data[i] = d / n;
    }
    let loss = sum / (T::of_f64(2.0) * n);
    Ok((loss, grad))
}

/// Optimizer and schedule settings.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub base_lr: f64,
    /// Learning rate divides by this at every milestone.
    pub lr_drop_factor: f64,
    /// 1-based iteration numbers; the milestone iteration itself already
    /// runs at the dropped rate.
    pub drop_milestones: Vec<usize>,
    pub momentum: f64,
    pub batch: usize,
    pub epochs: usize,
    pub seed: u64,
    /// When set, stops after this many iterations regardless of epochs.
    pub max_iters: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            base_lr: 3e-4,
            lr_drop_factor: 10.0,
            drop_milestones: Vec::new(),
            momentum: 0.9,
            batch: 16,
            epochs: 1,
            seed: 0,
            max_iters: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(Error::InvalidInput(format!("base_lr must be positive, got {}", self.base_lr)));
        }
        if !(self.lr_drop_factor > 0.0 && self.lr_drop_factor.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "lr_drop_factor must be positive, got {}",
                self.lr_drop_factor
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidInput(format!(
                "momentum must be in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.batch == 0 {
            return Err(Error::InvalidInput("batch size must be positive".into()));
        }
        if self.epochs == 0 && self.max_iters.is_none() {
            return Err(Error::InvalidInput(
                "need epochs ≥ 1 or an explicit max_iters".into(),
            ));
        }
        if self.drop_milestones.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput("drop_milestones must be strictly increasing".into()));
        }
        if self.drop_milestones.first().is_some_and(|&m| m == 0) {
            return Err(Error::InvalidInput("drop_milestones are 1-based; 0 is invalid".into()));
        }
        Ok(())
    }

    /// Learning rate at 1-based iteration `iter`:
    /// `base_lr / factor^(number of milestones ≤ iter)`.
    pub fn learning_rate(&self, iter: usize) -> f64 {
        let drops = self.drop_milestones.iter().filter(|&&m| m <= iter).count();
        self.base_lr / self.lr_drop_factor.powi(drops as i32)
    }
}

/// In-memory training corpus: EPIs as channel-planar tensors and raw
/// (un-normalized) label curves in depth-proxy units.
#[derive(Debug, Clone)]
pub struct TrainingSet<T> {
    /// `(M, channels, A, W)`.
    pub inputs: Tensor4<T>,
    /// `(M, W)` depth proxies.
    pub labels: Mat<T>,
}

/// Converts an interleaved `[A][S][3]` EPI into a channel-planar
/// `(channels, A, S)` sample written into `dst` at batch index `n`.
pub fn epi_into_sample<T: Real>(epi: &Epi, dst: &mut Tensor4<T>, n: usize) {
    let (a_len, s_len) = epi.shape();
    debug_assert_eq!((dst.c, dst.h, dst.w), (3, a_len, s_len));
    let plane = a_len * s_len;
    let out = dst.sample_mut(n);
    for a in 0..a_len {
        for s in 0..s_len {
            let rgb = epi.sample(a, s);
            for ch in 0..3 {
                out[ch * plane + a * s_len + s] = T::of_f64(rgb[ch] as f64);
            }
        }
    }
}

impl<T: Real> TrainingSet<T> {
    pub fn new(inputs: Tensor4<T>, labels: Mat<T>) -> Result<Self> {
        if inputs.n != labels.rows || inputs.w != labels.cols {
            return Err(Error::ShapeMismatch(format!(
                "{} inputs of width {} vs labels ({}, {})",
                inputs.n, inputs.w, labels.rows, labels.cols
            )));
        }
        if inputs.n == 0 {
            return Err(Error::EmptySelection("empty training set".into()));
        }
        Ok(TrainingSet { inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.inputs.n
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.n == 0
    }

    /// Population mean and standard deviation of all label values. A
    /// zero-spread corpus gets σ = 1 so normalization stays invertible.
    pub fn label_stats(&self) -> (f64, f64) {
        let n = self.labels.data.len() as f64;
        let mean = self.labels.data.iter().map(|v| v.as_f64()).sum::<f64>() / n;
        let var = self
            .labels
            .data
            .iter()
            .map(|v| {
                let d = v.as_f64() - mean;
                d * d
            })
            .sum::<f64>()
            / n;
        let std = var.sqrt();
        (mean, if std > 0.0 { std } else { 1.0 })
    }

    /// Loads every EPI of the given orientation from every dataset item.
    /// Labels are ground-truth depths mapped to depth proxies with each
    /// item's own rig.
    pub fn from_manifest(manifest_path: impl AsRef<Path>, orientation: Orientation) -> Result<Self> {
        let manifest_path = manifest_path.as_ref();
        let manifest = DatasetManifest::read(manifest_path)?;
        let dir = manifest_path.parent().unwrap_or_else(|| Path::new("."));
        if manifest.entries.is_empty() {
            return Err(Error::EmptySelection(format!(
                "dataset manifest {} has no entries",
                manifest_path.display()
            )));
        }
        let (sx, sy) = manifest.spatial_res;
        let (au, av) = manifest.angular_res;
        let (n_a, width, per_item) = match orientation {
            Orientation::Horizontal => (au, sx, sy),
            Orientation::Vertical => (av, sy, sx),
        };
        let m = manifest.entries.len() * per_item;
        let mut inputs = Tensor4::zeros(m, 3, n_a, width);
        let mut labels = Mat::zeros(m, width);
        let mut n = 0usize;
        for entry in &manifest.entries {
            let (lf, rig) = read_container(entry.container_path(dir))?;
            let (gw, gh, gt) = read_pfm(entry.ground_truth_path(dir))?;
            if (gw, gh) != (sx, sy) || lf.spatial_res() != (sx, sy) {
                return Err(Error::ShapeMismatch(format!(
                    "item {} resolution disagrees with manifest {}x{}",
                    entry.container.display(),
                    sx,
                    sy
                )));
            }
            for j in 0..per_item {
                let epi = match orientation {
                    Orientation::Horizontal => lf.extract_horizontal_epi(j)?,
                    Orientation::Vertical => lf.extract_vertical_epi(j)?,
                };
                epi_into_sample(&epi, &mut inputs, n);
                for s in 0..width {
                    let z = match orientation {
                        Orientation::Horizontal => gt[j * sx + s],
                        Orientation::Vertical => gt[s * sx + j],
                    } as f64;
                    let proxy = rig.epi_scale_f * rig.disparity_of_depth(z)?;
                    labels.data[n * width + s] = T::of_f64(proxy);
                }
                n += 1;
            }
        }
        TrainingSet::new(inputs, labels)
    }
}

/// Per-run training record.
#[derive(Debug, Clone)]
pub struct TrainReport {
    /// Loss at every iteration, in order, evaluated before the update.
    pub losses: Vec<f64>,
    pub iterations: usize,
    pub final_lr: f64,
}

fn gather_batch<T: Real>(
    set: &TrainingSet<T>,
    order: &[usize],
    mean: T,
    std: T,
) -> (Tensor4<T>, Mat<T>) {
    let b = order.len();
    let (_, c, h, w) = set.inputs.shape();
    let mut x = Tensor4::zeros(b, c, h, w);
    let mut y = Mat::zeros(b, set.labels.cols);
    for (bi, &si) in order.iter().enumerate() {
        x.sample_mut(bi).copy_from_slice(set.inputs.sample(si));
        for k in 0..set.labels.cols {
            y.data[bi * y.cols + k] = (set.labels.data[si * y.cols + k] - mean) / std;
        }
    }
    (x, y)
}

/// One SGD step with momentum: `v ← μ·v + lr·g`, `w ← w − v`.
pub(crate) fn sgd_step<T: Real>(
    params: &mut [&mut Vec<T>],
    grads: &[Vec<T>],
    velocity: &mut [Vec<T>],
    lr: T,
    momentum: T,
) {
    for ((p, g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        debug_assert_eq!(p.len(), g.len());
        for i in 0..p.len() {
            v[i] = momentum * v[i] + lr * g[i];
            p[i] = p[i] - v[i];
        }
    }
}

/// Trains in place. Label statistics are computed from `set` and stored in
/// the model, which then consumes normalized targets. Deterministic for a
/// fixed (config, set, initial model).
pub fn train<T: Real>(
    model: &mut FaceLfNet<T>,
    set: &TrainingSet<T>,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    let (_, c, h, w) = set.inputs.shape();
    if (c, h, w)
        != (
            model.config.in_channels,
            model.config.angular,
            model.config.width,
        )
    {
        return Err(Error::ShapeMismatch(format!(
            "training samples ({c},{h},{w}) do not fit the configured ({},{},{})",
            model.config.in_channels, model.config.angular, model.config.width
        )));
    }
    let (mean, std) = set.label_stats();
    model.label_mean = mean;
    model.label_std = std;
    let (mean_t, std_t) = (T::of_f64(mean), T::of_f64(std));

    let m = set.len();
    let batches_per_epoch = m.div_ceil(cfg.batch);
    let total_iters = cfg.max_iters.unwrap_or(cfg.epochs * batches_per_epoch);
    let momentum = T::of_f64(cfg.momentum);

    let mut velocity: Vec<Vec<T>> = model.params().iter().map(|p| vec![T::zero(); p.len()]).collect();
    let mut losses = Vec::with_capacity(total_iters);
    let mut iter = 0usize;
    let mut epoch = 0usize;
    'outer: while iter < total_iters {
        let mut order: Vec<usize> = (0..m).collect();
        order.shuffle(&mut derive_rng(cfg.seed, &format!("epoch-{epoch}")));
        epoch += 1;
        for chunk in order.chunks(cfg.batch) {
            if iter >= total_iters {
                break 'outer;
            }
            iter += 1;
            let (x, y) = gather_batch(set, chunk, mean_t, std_t);
            let (pred, cache) = model.forward_train(&x)?;
            let (loss, dpred) = euclidean_loss(&pred, &y)?;
            let loss = loss.as_f64();
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged { iter });
            }
            losses.push(loss);
            let grads = model.backward(&x, &cache, &dpred)?;
            let lr = T::of_f64(cfg.learning_rate(iter));
            let mut params = model.params_mut();
            sgd_step(&mut params, &grads, &mut velocity, lr, momentum);
        }
    }
    Ok(TrainReport {
        iterations: iter,
        final_lr: cfg.learning_rate(iter.max(1)),
        losses,
    })
}

fn check_orientation<T>(model: &FaceLfNet<T>, want: Orientation) -> Result<()> {
    match model.orientation {
        Some(o) if o != want => Err(Error::InvalidInput(format!(
            "model trained for {o} EPIs used for {want} inference"
        ))),
        _ => Ok(()),
    }
}

/// Runs both regressors over every EPI of a light field and converts the
/// predicted proxy curves to metric depth. Row `y` of the horizontal map is
/// the horizontal model's output on the EPI at `y`; column `x` of the
/// vertical map likewise. Predictions past the rig's disparity horizon
/// become invalid pixels.
pub fn infer_depthmaps<T: Real>(
    h_model: &FaceLfNet<T>,
    v_model: &FaceLfNet<T>,
    lf: &LightField,
    rig: &CameraRig,
) -> Result<(DepthMap, DepthMap)> {
    let (width, height) = lf.spatial_res();
    let (n_u, n_v) = lf.angular_res();
    check_orientation(h_model, Orientation::Horizontal)?;
    check_orientation(v_model, Orientation::Vertical)?;
    if h_model.config.width != width || h_model.config.angular != n_u {
        return Err(Error::ShapeMismatch(format!(
            "horizontal model expects ({}, {}), light field has ({n_u}, {width})",
            h_model.config.angular, h_model.config.width
        )));
    }
    if v_model.config.width != height || v_model.config.angular != n_v {
        return Err(Error::ShapeMismatch(format!(
            "vertical model expects ({}, {}), light field has ({n_v}, {height})",
            v_model.config.angular, v_model.config.width
        )));
    }

    let mut hx = Tensor4::zeros(height, 3, n_u, width);
    for y in 0..height {
        epi_into_sample(&lf.extract_horizontal_epi(y)?, &mut hx, y);
    }
    let h_pred = h_model.forward_eval(&hx)?;
    let mut dm_h = DepthMap::new_invalid(width, height);
    for y in 0..height {
        for x in 0..width {
            let proxy = h_pred.data[y * width + x].as_f64() * h_model.label_std + h_model.label_mean;
            if let Ok(z) = rig.depth_of_proxy(proxy) {
                dm_h.set(x, y, z);
            }
        }
    }

    let mut vx = Tensor4::zeros(width, 3, n_v, height);
    for x in 0..width {
        epi_into_sample(&lf.extract_vertical_epi(x)?, &mut vx, x);
    }
    let v_pred = v_model.forward_eval(&vx)?;
    let mut dm_v = DepthMap::new_invalid(width, height);
    for x in 0..width {
        for y in 0..height {
            let proxy = v_pred.data[x * height + y].as_f64() * v_model.label_std + v_model.label_mean;
            if let Ok(z) = rig.depth_of_proxy(proxy) {
                dm_v.set(x, y, z);
            }
        }
    }
    Ok((dm_h, dm_v))
}
