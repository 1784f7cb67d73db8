//! Per-scene driver: degrade, rectify, match, filter, refine, evaluate.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{CorrespondenceSet, IntensityImage, Mask};
use crate::metrics::{
    depth_metrics, normal_metrics, pose_metrics, symmetry_metrics, DepthMirror, DepthReport,
    NormalReport, PoseReport, SymReport,
};
use crate::rectify::{
    build_transform, lift_flow_to_correspondences, warp_intensity, warp_mask, LiftStats,
    RectifyTransform,
};
use crate::solver::{refine, RefineReport, Refined, SolverConfig, Tradeoffs};
use crate::symmetry::{consistency_filter, match_scanlines, subsample_blocks, FilterConfig, MatcherConfig};
use crate::synth::{corrupt, NoiseSpec, Scene};

/// Where the refinement gets its symmetric pairs from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrespondenceSource {
    /// Rectify the degraded scene with its own camera and match scanlines.
    #[default]
    Matcher,
    /// Use the degraded scene's jittered ground-truth pairs.
    Simulated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub dataset: Option<std::path::PathBuf>,
    pub output: Option<std::path::PathBuf>,
    pub solver: SolverConfig,
    pub matcher: MatcherConfig,
    pub filter: FilterConfig,
    pub noise: NoiseSpec,
    pub correspondences: CorrespondenceSource,
    /// Keep one pair per 2x2 block after filtering.
    pub subsample: bool,
    pub seed: u64,
    /// Worker threads for scene-level parallelism; `None` uses all cores.
    pub threads: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            dataset: None,
            output: None,
            solver: SolverConfig::default(),
            matcher: MatcherConfig::default(),
            filter: FilterConfig::default(),
            noise: NoiseSpec::default(),
            correspondences: CorrespondenceSource::default(),
            subsample: false,
            seed: 0,
            threads: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        self.matcher.validate()?;
        self.filter.validate()?;
        self.noise.validate()?;
        if self.threads == Some(0) {
            return Err(Error::schema("threads", "must be at least 1"));
        }
        Ok(())
    }

    /// Noise with its seed mixed with the pipeline seed.
    pub fn scene_noise(&self) -> NoiseSpec {
        NoiseSpec {
            seed: crate::rng::derive_seed(self.seed, "noise", self.noise.seed),
            ..self.noise.clone()
        }
    }
}

/// Rectified canvas of one scene.
#[derive(Clone, Debug)]
pub struct Rectified {
    pub transform: RectifyTransform,
    pub intensity: IntensityImage,
    pub mask: Mask,
}

/// Rectifies `scene` using its own camera, on a canvas of the same size.
pub fn rectify_scene(scene: &Scene) -> Result<Rectified> {
    let (w, h) = (scene.width(), scene.height());
    let transform = build_transform(&scene.camera, w, h, &scene.mask)?;
    let frame = scene.mask.frame();
    let warped = warp_intensity(&scene.intensity, &transform, frame);
    let mask = warp_mask(&scene.mask, &transform, frame);
    let mask = crate::imaging::Grid::from_fn(w, h, |c, r| *mask.get(c, r) && *warped.valid.get(c, r));
    Ok(Rectified {
        transform,
        intensity: warped.values,
        mask,
    })
}

/// Rectify, match and lift back to the original image.
pub fn match_scene(scene: &Scene, cfg: &MatcherConfig) -> Result<(CorrespondenceSet, LiftStats)> {
    let rect = rectify_scene(scene)?;
    let flow = match_scanlines(&rect.intensity, &rect.mask, cfg)?;
    let (mut set, stats) = lift_flow_to_correspondences(&flow, &rect.transform, &rect.mask, scene.mask.frame());
    set.retain_in_bounds(scene.width(), scene.height());
    Ok((set, stats))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneReport {
    pub seed: u64,
    pub initial: DepthReport,
    pub refined: DepthReport,
    pub pose_initial: PoseReport,
    pub pose_refined: PoseReport,
    pub normals_initial: NormalReport,
    pub n_pairs_raw: usize,
    pub n_pairs_filtered: usize,
    /// Against the clean scene's mirror map; absent without a usable pair.
    pub symmetry_raw: Option<SymReport>,
    pub symmetry_filtered: Option<SymReport>,
    pub solver: RefineReport,
}

/// Correspondences of a degraded scene per `cfg`, before and after filtering.
pub fn scene_correspondences(
    degraded: &Scene,
    cfg: &PipelineConfig,
) -> Result<(CorrespondenceSet, CorrespondenceSet)> {
    let raw = match cfg.correspondences {
        CorrespondenceSource::Matcher => match_scene(degraded, &cfg.matcher)?.0,
        CorrespondenceSource::Simulated => degraded.correspondences.clone(),
    };
    let mut filtered = consistency_filter(&raw, &cfg.filter)?;
    if cfg.subsample {
        filtered = subsample_blocks(&filtered);
    }
    Ok((raw, filtered))
}

/// Refines a degraded scene and scores it against its clean counterpart.
pub fn run_scene(clean: &Scene, degraded: &Scene, cfg: &PipelineConfig) -> Result<(Refined, SceneReport)> {
    if degraded.mask != clean.mask {
        return Err(Error::invalid("degraded and clean scenes have different masks"));
    }
    let (raw, filtered) = scene_correspondences(degraded, cfg)?;
    let out = refine(
        &degraded.depth,
        &degraded.normals,
        &degraded.mask,
        &filtered,
        &degraded.camera,
        &cfg.solver,
    )?;
    let mirror = DepthMirror::new(&clean.depth, &clean.mask, clean.camera);
    let sym = |set: &CorrespondenceSet| symmetry_metrics(set, |p| mirror.mirror(p)).ok();
    let report = SceneReport {
        seed: clean.seed,
        initial: depth_metrics(&degraded.depth, &clean.depth, &clean.mask)?,
        refined: depth_metrics(&out.depth, &clean.depth, &clean.mask)?,
        pose_initial: pose_metrics(&degraded.camera, &clean.camera, clean.object_size)?,
        pose_refined: pose_metrics(&out.camera, &clean.camera, clean.object_size)?,
        normals_initial: normal_metrics(&degraded.normals, &clean.normals, &clean.mask)?,
        n_pairs_raw: raw.len(),
        n_pairs_filtered: filtered.len(),
        symmetry_raw: sym(&raw),
        symmetry_filtered: sym(&filtered),
        solver: out.report.clone(),
    };
    Ok((out, report))
}

/// Corrupts `clean` with the configured noise, then runs [`run_scene`].
pub fn degrade_and_run(clean: &Scene, cfg: &PipelineConfig) -> Result<(Scene, Refined, SceneReport)> {
    let degraded = corrupt(clean, &cfg.scene_noise())?;
    let (out, report) = run_scene(clean, &degraded, cfg)?;
    Ok((degraded, out, report))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Self {
        let v: Vec<f64> = values.into_iter().collect();
        if v.is_empty() {
            return MeanStd::default();
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        MeanStd { mean, std: var.sqrt() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n_scenes: usize,
    pub initial_rel: MeanStd,
    pub refined_rel: MeanStd,
    pub initial_rms: MeanStd,
    pub refined_rms: MeanStd,
    pub initial_sigma_125: MeanStd,
    pub refined_sigma_125: MeanStd,
    pub initial_rot_err_deg: MeanStd,
    pub refined_rot_err_deg: MeanStd,
    /// `1 - refined_rel / initial_rel` on the means.
    pub relative_improvement: f64,
    pub mean_iterations: f64,
    pub mean_pairs_filtered: f64,
}

/// Scene-order aggregate; sums run sequentially so the result does not
/// depend on how the scenes were scheduled.
pub fn aggregate(reports: &[SceneReport]) -> Result<Summary> {
    if reports.is_empty() {
        return Err(Error::invalid("nothing to aggregate"));
    }
    let m = |f: fn(&SceneReport) -> f64| MeanStd::of(reports.iter().map(f));
    let initial_rel = m(|r| r.initial.rel);
    let refined_rel = m(|r| r.refined.rel);
    Ok(Summary {
        n_scenes: reports.len(),
        initial_rel,
        refined_rel,
        initial_rms: m(|r| r.initial.rms),
        refined_rms: m(|r| r.refined.rms),
        initial_sigma_125: m(|r| r.initial.sigma_125),
        refined_sigma_125: m(|r| r.refined.sigma_125),
        initial_rot_err_deg: m(|r| r.pose_initial.rot_err_deg),
        refined_rot_err_deg: m(|r| r.pose_refined.rot_err_deg),
        relative_improvement: 1.0 - refined_rel.mean / initial_rel.mean,
        mean_iterations: m(|r| r.solver.iterations as f64).mean,
        mean_pairs_filtered: m(|r| r.n_pairs_filtered as f64).mean,
    })
}

/// Runs every `(clean, degraded)` pair in parallel and returns the reports
/// in input order.
pub fn run_all(scenes: &[(Scene, Scene)], cfg: &PipelineConfig) -> Result<Vec<SceneReport>> {
    scenes
        .par_iter()
        .map(|(clean, degraded)| run_scene(clean, degraded, cfg).map(|(_, r)| r))
        .collect()
}

/// Default tuning grid for each of `lambda` and `mu`.
pub const TUNE_GRID: [f64; 5] = [0.1, 0.3, 1.0, 3.0, 10.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneEntry {
    pub tradeoffs: Tradeoffs,
    pub mean_refined_rel: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneReport {
    /// Indices of the held-out scenes used for scoring.
    pub held_out: Vec<usize>,
    pub entries: Vec<TuneEntry>,
    pub best: TuneEntry,
}

/// Every tenth scene, at least one.
pub fn held_out_split(n: usize) -> Vec<usize> {
    let picked: Vec<usize> = (0..n).step_by(10).collect();
    if picked.is_empty() && n > 0 {
        vec![0]
    } else {
        picked
    }
}

/// Grid search over `grid x grid` tradeoffs on the held-out split. Ties keep
/// the earlier grid point.
pub fn tune(scenes: &[(Scene, Scene)], cfg: &PipelineConfig, grid: &[f64]) -> Result<TuneReport> {
    if grid.is_empty() {
        return Err(Error::invalid("empty tuning grid"));
    }
    let held_out = held_out_split(scenes.len());
    if held_out.is_empty() {
        return Err(Error::invalid("no scenes to tune on"));
    }
    let subset: Vec<(Scene, Scene)> = held_out.iter().map(|&i| scenes[i].clone()).collect();
    // correspondences do not depend on the tradeoffs; compute them once
    let pairs: Vec<CorrespondenceSet> = subset
        .par_iter()
        .map(|(_, d)| scene_correspondences(d, cfg).map(|(_, f)| f))
        .collect::<Result<_>>()?;
    let mut entries = Vec::new();
    for &lambda in grid {
        for &mu in grid {
            let solver = SolverConfig {
                tradeoffs: Tradeoffs::new(lambda, mu),
                ..cfg.solver.clone()
            };
            let rels: Vec<f64> = subset
                .par_iter()
                .zip(&pairs)
                .map(|((clean, d), set)| {
                    let out = refine(&d.depth, &d.normals, &d.mask, set, &d.camera, &solver)?;
                    Ok(depth_metrics(&out.depth, &clean.depth, &clean.mask)?.rel)
                })
                .collect::<Result<_>>()?;
            entries.push(TuneEntry {
                tradeoffs: solver.tradeoffs,
                mean_refined_rel: MeanStd::of(rels).mean,
            });
        }
    }
    let best = entries
        .iter()
        .fold(None::<&TuneEntry>, |b, e| match b {
            Some(b) if b.mean_refined_rel <= e.mean_refined_rel => Some(b),
            _ => Some(e),
        })
        .expect("grid is non-empty")
        .clone();
    Ok(TuneReport {
        held_out,
        entries,
        best,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, SceneSpec, ShapeFamily};

    fn clean(seed: u64) -> Scene {
        generate(&SceneSpec::random(ShapeFamily::BoxUnion, 48, 48, seed, 0)).unwrap()
    }

    #[test]
    fn noise_free_scene_is_left_in_place() {
        let s = clean(3);
        let cfg = PipelineConfig {
            noise: NoiseSpec::zero(),
            correspondences: CorrespondenceSource::Simulated,
            ..Default::default()
        };
        let (_, out, report) = degrade_and_run(&s, &cfg).unwrap();
        assert!(report.refined.rel <= 1e-9, "{}", report.refined.rel);
        assert!(out.camera.rotation.angle_to(&s.camera.rotation) <= 1e-9);
    }

    #[test]
    fn aggregate_is_scene_order_mean() {
        let s = clean(4);
        let cfg = PipelineConfig {
            correspondences: CorrespondenceSource::Simulated,
            ..Default::default()
        };
        let (_, _, r) = degrade_and_run(&s, &cfg).unwrap();
        let mut r2 = r.clone();
        r2.initial.rel = 0.5;
        let sum = aggregate(&[r.clone(), r2]).unwrap();
        assert_eq!(sum.n_scenes, 2);
        assert!((sum.initial_rel.mean - 0.5 * (r.initial.rel + 0.5)).abs() < 1e-15);
        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn held_out_split_takes_every_tenth() {
        assert_eq!(held_out_split(25), vec![0, 10, 20]);
        assert_eq!(held_out_split(3), vec![0]);
        assert!(held_out_split(0).is_empty());
    }

    #[test]
    fn config_rejects_unknown_keys() {
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"solvr": {}}"#).is_err());
        let c: PipelineConfig =
            serde_json::from_str(r#"{"correspondences": "simulated", "solver": {"tradeoffs": {"mu": 0}}}"#).unwrap();
        assert_eq!(c.correspondences, CorrespondenceSource::Simulated);
        assert_eq!(c.solver.tradeoffs.mu, 0.0);
    }
}
