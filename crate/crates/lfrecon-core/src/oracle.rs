//! Brute-force line-search depth oracle.
//!
//! A scene point traces a straight line through an EPI; its slope encodes
//! disparity and hence depth. For every spatial position the oracle scores
//! candidate slopes by the color variance of radiance sampled along the
//! sheared line `x = s + c·(a − a_center)` and keeps the minimizer — an
//! exact, derivative-free estimator that serves as baseline and as an
//! independent check on learned predictors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::lightfield::{CameraRig, DepthCurve, DepthMap, Epi, LightField};

/// Candidate range and sampling density of the line search. Candidate
/// values are EPI slopes in px/view (the negative of disparity).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeSearchSpec {
    pub disparity_min: f64,
    pub disparity_max: f64,
    pub coarse_steps: usize,
    /// Parabolic sub-step refinement around the best coarse candidate.
    pub refine: bool,
}

impl SlopeSearchSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.disparity_min < self.disparity_max) {
            return Err(Error::InvalidInput(format!(
                "disparity range [{}, {}] is empty",
                self.disparity_min, self.disparity_max
            )));
        }
        if self.coarse_steps < 16 {
            return Err(Error::InvalidInput(format!(
                "coarse_steps must be ≥ 16, got {}",
                self.coarse_steps
            )));
        }
        Ok(())
    }
}

impl Default for SlopeSearchSpec {
    fn default() -> Self {
        SlopeSearchSpec {
            disparity_min: -4.0,
            disparity_max: 4.0,
            coarse_steps: 96,
            refine: true,
        }
    }
}

/// Two or fewer in-bounds samples cannot define a variance minimum.
const MIN_SAMPLES: usize = 3;
/// Score spreads below this (radiance² units) are treated as everywhere-
/// tied, i.e. the position carries no usable texture.
const TIE_SPREAD: f64 = 1e-14;

/// Sum over RGB of the population variance of radiance sampled along the
/// line of slope `c` through position `s` (linear interpolation along each
/// angular row; out-of-bounds samples excluded). `None` when fewer than
/// three rows intersect the EPI.
pub fn variance_score(epi: &Epi, s: usize, c: f64) -> Option<f64> {
    let (n_a, n_s) = epi.shape();
    let a_c = epi.central_a() as f64;
    let mut count = 0usize;
    let mut sum = [0.0f64; 3];
    let mut sum_sq = [0.0f64; 3];
    for a in 0..n_a {
        let x = s as f64 + c * (a as f64 - a_c);
        if !(0.0..=(n_s - 1) as f64).contains(&x) {
            continue;
        }
        let x0 = (x.floor() as usize).min(n_s.saturating_sub(2));
        let t = (x - x0 as f64).clamp(0.0, 1.0);
        let row = epi.row(a);
        let i = x0 * 3;
        for ch in 0..3 {
            let lo = row[i + ch] as f64;
            let hi = row[i + 3 + ch] as f64;
            let v = lo + t * (hi - lo);
            sum[ch] += v;
            sum_sq[ch] += v * v;
        }
        count += 1;
    }
    if count < MIN_SAMPLES {
        return None;
    }
    let n = count as f64;
    let mut score = 0.0;
    for ch in 0..3 {
        let mean = sum[ch] / n;
        score += (sum_sq[ch] / n - mean * mean).max(0.0);
    }
    Some(score)
}

/// Candidate slope at index `i` of the coarse grid.
fn coarse_candidate(spec: &SlopeSearchSpec, i: usize) -> f64 {
    let h = (spec.disparity_max - spec.disparity_min) / (spec.coarse_steps - 1) as f64;
    spec.disparity_min + h * i as f64
}

/// Returns the winning slope (and its score) for one spatial position, or
/// None when the position is invalid.
fn search_position(epi: &Epi, spec: &SlopeSearchSpec, s: usize) -> Option<(f64, f64)> {
    let mut best: Option<(f64, f64)> = None; // (score, slope)
    let mut score_min = f64::INFINITY;
    let mut score_max = f64::NEG_INFINITY;
    let mut best_index = 0usize;
    let mut scores = vec![None; spec.coarse_steps];
    for i in 0..spec.coarse_steps {
        let c = coarse_candidate(spec, i);
        let Some(score) = variance_score(epi, s, c) else {
            continue;
        };
        scores[i] = Some(score);
        score_min = score_min.min(score);
        score_max = score_max.max(score);
        let better = match best {
            None => true,
            // Ties break toward the slope closest to zero.
            Some((bs, bc)) => score < bs || (score == bs && c.abs() < bc.abs()),
        };
        if better {
            best = Some((score, c));
            best_index = i;
        }
    }
    let (best_score, best_c) = best?;
    // Every candidate tied: no texture to disambiguate slopes.
    if score_max - score_min <= TIE_SPREAD {
        return None;
    }

    if spec.refine && best_index > 0 && best_index + 1 < spec.coarse_steps {
        if let (Some(s_lo), Some(s_hi)) = (scores[best_index - 1], scores[best_index + 1]) {
            // Parabola through the best candidate and its two neighbors;
            // vertex offset in units of the coarse step.
            let denom = s_lo - 2.0 * best_score + s_hi;
            if denom > 0.0 {
                let delta = (0.5 * (s_lo - s_hi) / denom).clamp(-1.0, 1.0);
                let h = (spec.disparity_max - spec.disparity_min)
                    / (spec.coarse_steps - 1) as f64;
                let c_ref = best_c + delta * h;
                if let Some(score_ref) = variance_score(epi, s, c_ref) {
                    if score_ref <= best_score {
                        return Some((c_ref, score_ref));
                    }
                }
            }
        }
    }
    Some((best_c, best_score))
}

/// Winning slope per spatial position (None = invalid).
pub fn search_slopes(epi: &Epi, spec: &SlopeSearchSpec) -> Result<Vec<Option<f64>>> {
    spec.validate()?;
    let (n_a, n_s) = epi.shape();
    if n_a < 3 {
        return Err(Error::InvalidInput(format!(
            "EPI angular extent must be ≥ 3, got {n_a}"
        )));
    }
    Ok((0..n_s)
        .map(|s| search_position(epi, spec, s).map(|(c, _)| c))
        .collect())
}

/// Depth estimate along one EPI: line search per position, then slope →
/// depth proxy → metric depth through the rig's optics.
pub fn estimate_curve(epi: &Epi, spec: &SlopeSearchSpec, rig: &CameraRig) -> Result<DepthCurve> {
    let slopes = search_slopes(epi, spec)?;
    let mut values = Vec::with_capacity(slopes.len());
    let mut valid = Vec::with_capacity(slopes.len());
    for slope in slopes {
        // Slopes whose disparity lies at or beyond the optical horizon have
        // no finite depth; such positions are marked invalid.
        let depth = slope.and_then(|c| rig.depth_of_proxy(rig.slope_to_depth_proxy(c)).ok());
        match depth {
            Some(z) => {
                values.push(z);
                valid.push(true);
            }
            None => {
                values.push(f64::NAN);
                valid.push(false);
            }
        }
    }
    Ok(DepthCurve {
        values,
        valid,
        orientation: epi.orientation,
        fixed_index: epi.fixed_index,
    })
}

/// Runs the oracle over every EPI of the light field: horizontal curves
/// fill the rows of the first map, vertical curves the columns of the
/// second. Both maps align to the central view.
pub fn estimate_depthmap(
    lf: &LightField,
    spec: &SlopeSearchSpec,
    rig: &CameraRig,
) -> Result<(DepthMap, DepthMap)> {
    spec.validate()?;
    let (width, height) = lf.spatial_res();

    let h_curves: Vec<Result<DepthCurve>> = exec::par_map_indices(height, |y| {
        estimate_curve(&lf.extract_horizontal_epi(y)?, spec, rig)
    });
    let mut dm_h = DepthMap::new_invalid(width, height);
    for (y, curve) in h_curves.into_iter().enumerate() {
        let curve = curve?;
        for x in 0..width {
            if curve.valid[x] {
                dm_h.set(x, y, curve.values[x]);
            }
        }
    }

    let v_curves: Vec<Result<DepthCurve>> = exec::par_map_indices(width, |x| {
        estimate_curve(&lf.extract_vertical_epi(x)?, spec, rig)
    });
    let mut dm_v = DepthMap::new_invalid(width, height);
    for (x, curve) in v_curves.into_iter().enumerate() {
        let curve = curve?;
        for y in 0..height {
            if curve.valid[y] {
                dm_v.set(x, y, curve.values[y]);
            }
        }
    }
    Ok((dm_h, dm_v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lightfield::Orientation;
    use crate::synth::{make_scene, render_lightfield_with, Difficulty, Pose, RenderOptions};

    fn spec() -> SlopeSearchSpec {
        SlopeSearchSpec::default()
    }

    fn render(
        difficulty: Difficulty,
        seed: u64,
        res: usize,
    ) -> (crate::lightfield::LightField, crate::synth::GroundTruth, CameraRig) {
        let scene = make_scene(seed, difficulty);
        let rig = CameraRig::default_for_res(res, res);
        let opts = RenderOptions {
            angular_res: (9, 9),
            ..Default::default()
        };
        let (lf, gt) =
            render_lightfield_with(&scene, &rig, &Pose::frontal(), (res, res), &opts).unwrap();
        (lf, gt, rig)
    }

    #[test]
    fn invalid_spec_rejected() {
        let mut s = spec();
        s.coarse_steps = 8;
        assert!(s.validate().is_err());
        let mut s = spec();
        s.disparity_min = 1.0;
        s.disparity_max = 1.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn flat_plane_at_focus_within_half_percent() {
        let (lf, _, rig) = render(Difficulty::FlatPlane, 3, 32);
        let epi = lf.extract_horizontal_epi(16).unwrap();
        let curve = estimate_curve(&epi, &spec(), &rig).unwrap();
        assert!(curve.valid_count() > 24, "only {} valid", curve.valid_count());
        for (i, &v) in curve.values.iter().enumerate() {
            if curve.valid[i] {
                assert!(
                    (v - rig.focus_depth).abs() < 0.005 * rig.focus_depth,
                    "position {i}: {v} mm vs focus {}",
                    rig.focus_depth
                );
            }
        }
    }

    #[test]
    fn constant_epi_all_invalid() {
        let samples = vec![0.5f32; 9 * 40 * 3];
        let epi = Epi::from_samples(9, 40, samples, Orientation::Horizontal, 0).unwrap();
        let curve = estimate_curve(&epi, &spec(), &CameraRig::default_for_res(40, 40)).unwrap();
        assert_eq!(curve.valid_count(), 0);
        assert!(curve.values.iter().all(|v| v.is_nan()));
    }

    #[test]
    fn tilted_plane_within_one_percent() {
        let (lf, gt, rig) = render(Difficulty::TiltedPlane, 5, 48);
        let (dm_h, _) = estimate_depthmap(&lf, &spec(), &rig).unwrap();
        let mut ok = 0usize;
        let mut valid = 0usize;
        for y in 0..48 {
            for x in 0..48 {
                if dm_h.is_valid(x, y) {
                    valid += 1;
                    let rel = (dm_h.get(x, y) - gt.depth.get(x, y)).abs() / gt.depth.get(x, y);
                    if rel < 0.01 {
                        ok += 1;
                    }
                }
            }
        }
        assert!(valid > 48 * 48 / 2, "too few valid: {valid}");
        assert!(
            ok as f64 >= 0.95 * valid as f64,
            "{ok}/{valid} within 1%"
        );
    }

    #[test]
    fn depthmap_row_matches_curve() {
        let (lf, _, rig) = render(Difficulty::FaceLike, 9, 32);
        let (dm_h, dm_v) = estimate_depthmap(&lf, &spec(), &rig).unwrap();
        let curve = estimate_curve(&lf.extract_horizontal_epi(10).unwrap(), &spec(), &rig).unwrap();
        for x in 0..32 {
            assert_eq!(dm_h.is_valid(x, 10), curve.valid[x]);
            if curve.valid[x] {
                assert_eq!(dm_h.get(x, 10), curve.values[x]);
            }
        }
        let vcurve = estimate_curve(&lf.extract_vertical_epi(7).unwrap(), &spec(), &rig).unwrap();
        for y in 0..32 {
            assert_eq!(dm_v.is_valid(7, y), vcurve.valid[y]);
        }
    }

    /// Median |h − v| disparity gap over the given positions.
    fn median_hv_gap(
        dm_h: &DepthMap,
        dm_v: &DepthMap,
        rig: &CameraRig,
        mut keep: impl FnMut(usize, usize) -> bool,
    ) -> (f64, usize) {
        let mut diffs: Vec<f64> = Vec::new();
        for y in 0..dm_h.height {
            for x in 0..dm_h.width {
                if keep(x, y) && dm_h.is_valid(x, y) && dm_v.is_valid(x, y) {
                    let da = rig.disparity_of_depth(dm_h.get(x, y)).unwrap();
                    let db = rig.disparity_of_depth(dm_v.get(x, y)).unwrap();
                    diffs.push((da - db).abs());
                }
            }
        }
        diffs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = diffs.len();
        (diffs.get(n / 2).copied().unwrap_or(f64::INFINITY), n)
    }

    #[test]
    fn horizontal_and_vertical_estimates_agree() {
        // A tilted plane is textured everywhere and occlusion-free, so the
        // two axes must agree across the whole frame.
        let (lf, _, rig) = render(Difficulty::TiltedPlane, 12, 48);
        let (dm_h, dm_v) = estimate_depthmap(&lf, &spec(), &rig).unwrap();
        let (median, n) = median_hv_gap(&dm_h, &dm_v, &rig, |_, _| true);
        assert!(n > 1000, "too few mutually valid positions: {n}");
        assert!(median < 0.2, "median h/v disparity gap {median} px over {n} positions");

        // On a face the silhouette sweeps wide occlusion bands through the
        // background EPIs (several px/view of parallax), so agreement is
        // only meaningful on foreground, where lines are unoccluded.
        let (lf, gt, rig) = render(Difficulty::FaceLike, 12, 48);
        let (dm_h, dm_v) = estimate_depthmap(&lf, &spec(), &rig).unwrap();
        let (median, n) = median_hv_gap(&dm_h, &dm_v, &rig, |x, y| gt.is_foreground(x, y));
        assert!(n > 200, "too few mutually valid foreground positions: {n}");
        assert!(
            median < 0.2,
            "median foreground h/v disparity gap {median} px over {n} positions"
        );
    }

    #[test]
    fn injecting_true_slope_never_worsens_the_chosen_score() {
        let (lf, gt, rig) = render(Difficulty::FaceLike, 21, 32);
        let epi = lf.extract_horizontal_epi(16).unwrap();
        let s = spec();
        for x in (2..30).step_by(5) {
            let Some((_, chosen_score)) = search_position(&epi, &s, x) else {
                continue;
            };
            let true_slope = -rig.disparity_of_depth(gt.depth.get(x, 16)).unwrap();
            if let Some(true_score) = variance_score(&epi, x, true_slope) {
                let with_injection = chosen_score.min(true_score);
                assert!(with_injection <= chosen_score);
            }
        }
    }

    #[test]
    fn oob_exclusion_beats_clamping_at_borders() {
        // A steep line through a border position leaves the EPI for most
        // rows; those rows must not contribute. With 9 angular rows and
        // slope 4, position 0 keeps only rows with x ≥ 0 — exactly 5 of 9.
        let mut samples = vec![0.0f32; 9 * 16 * 3];
        for (i, v) in samples.iter_mut().enumerate() {
            *v = (i % 7) as f32 / 7.0;
        }
        let epi = Epi::from_samples(9, 16, samples, Orientation::Horizontal, 0).unwrap();
        assert!(variance_score(&epi, 0, 4.0).is_some());
        // Slope so steep every non-central row falls outside: only one
        // in-bounds sample → no score.
        assert!(variance_score(&epi, 0, 1000.0).is_none());
    }
}
