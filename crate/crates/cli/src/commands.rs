//! Subcommand implementations. Every command reads its inputs, calls into
//! the library and writes deterministic outputs; timings are only added
//! when `--timing` is given.

use std::path::{Component, Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use symrefine::geometry::{CameraPose, ImageFrame, Quaternion};
use symrefine::imaging::{
    read_correspondences, read_depth, read_intensity, read_manifest, read_mask,
    write_correspondences, write_depth, write_intensity, write_mask,
};
use symrefine::metrics::{depth_metrics, pose_metrics};
use symrefine::pipeline::{
    aggregate, rectify_scene, run_scene, tune as tune_grid, PipelineConfig, SceneReport, TUNE_GRID,
};
use symrefine::rectify::{lift_flow_to_correspondences, RectifyTransform, TransformRecord};
use symrefine::solver::{refine as refine_depth, SolverConfig};
use symrefine::symmetry::{consistency_filter, match_scanlines, subsample_blocks, FilterConfig, MatcherConfig};
use symrefine::synth::{
    corrupt as corrupt_scene, generate_scenes, read_dataset, read_scene, write_dataset_index,
    write_scene, DatasetIndex, GeneratorSpec, NoiseSpec, Scene,
};

use crate::{
    CorruptArgs, EvalArgs, FilterArgs, GenArgs, Globals, MatchArgs, PipelineArgs, RectifyArgs,
    RefineArgs, TuneArgs,
};

pub const RECTIFIED_INTENSITY: &str = "intensity.pfm";
pub const RECTIFIED_MASK: &str = "mask.pgm";
pub const RECTIFIED_TRANSFORM: &str = "transform.json";

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(symrefine::Error),
}

impl From<symrefine::Error> for CliError {
    fn from(e: symrefine::Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    /// 2 usage, 3 data or format, 4 solver.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(symrefine::Error::Solver { .. }) => 4,
            CliError::Core(_) => 3,
        }
    }

    /// Prints one JSON line to stderr and returns the exit code.
    pub fn report(&self) -> ExitCode {
        let (kind, message) = match self {
            CliError::Usage(m) => ("usage", m.clone()),
            CliError::Core(e) => (e.kind(), e.to_string()),
        };
        eprintln!("{}", json!({ "error": kind, "message": message }));
        ExitCode::from(self.exit_code())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Core(symrefine::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| {
        CliError::Core(symrefine::Error::Format {
            path: path.display().to_string(),
            offset: None,
            message: e.to_string(),
        })
    })
}

fn read_json_or_default<T: DeserializeOwned + Default>(path: Option<&Path>) -> CliResult<T> {
    path.map_or_else(|| Ok(T::default()), read_json)
}

fn to_pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

/// Writes to `path`, or stdout when absent.
fn emit(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => {
            create_parent(p)?;
            std::fs::write(p, text).map_err(|e| io_err(p, e))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn create_parent(path: &Path) -> CliResult<()> {
    match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => std::fs::create_dir_all(d).map_err(|e| io_err(d, e)),
        _ => Ok(()),
    }
}

fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

fn init_threads(threads: Option<usize>) -> CliResult<()> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        // a second initialization in the same process is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// `target` relative to `base`, falling back to an absolute path when the
/// two share no root.
fn relative_path(base: &Path, target: &Path) -> CliResult<String> {
    let base = base.canonicalize().map_err(|e| io_err(base, e))?;
    let target = target.canonicalize().map_err(|e| io_err(target, e))?;
    let b: Vec<Component> = base.components().collect();
    let t: Vec<Component> = target.components().collect();
    let common = b.iter().zip(&t).take_while(|(x, y)| x == y).count();
    if common == 0 {
        return Ok(target.display().to_string());
    }
    let mut rel = PathBuf::new();
    for _ in common..b.len() {
        rel.push("..");
    }
    for c in &t[common..] {
        rel.push(c.as_os_str());
    }
    Ok(rel.to_string_lossy().replace('\\', "/"))
}

fn scene_dir_name(i: usize) -> String {
    format!("scene_{i:04}")
}

fn manifest_rel(i: usize) -> String {
    format!("{}/{}", scene_dir_name(i), symrefine::synth::MANIFEST_NAME)
}

fn camera_json(cam: &CameraPose) -> Value {
    json!({
        "quaternion": cam.quaternion().to_array(),
        "t_x": cam.t_x,
        "s": cam.s,
    })
}

fn camera_from_json(v: &Value) -> CliResult<CameraPose> {
    let bad = |m: &str| CliError::Core(symrefine::Error::Schema {
        field: "camera".into(),
        message: m.into(),
    });
    let q: Vec<f64> = v
        .get("quaternion")
        .and_then(Value::as_array)
        .ok_or_else(|| bad("missing quaternion"))?
        .iter()
        .map(|x| x.as_f64().ok_or_else(|| bad("quaternion entries must be numbers")))
        .collect::<CliResult<_>>()?;
    let q: [f64; 4] = q.try_into().map_err(|_| bad("quaternion needs 4 entries"))?;
    let t_x = v.get("t_x").and_then(Value::as_f64).ok_or_else(|| bad("missing t_x"))?;
    let s = v.get("s").and_then(Value::as_f64).ok_or_else(|| bad("missing s"))?;
    Ok(CameraPose::from_quaternion(&Quaternion::from_array(q), t_x, s)?)
}

pub fn gen(a: &GenArgs, g: Globals) -> CliResult<()> {
    init_threads(g.threads)?;
    let spec: GeneratorSpec = read_json_or_default(a.spec.as_deref())?;
    spec.validate()?;
    let (w, h) = (a.size[0], a.size[1]);
    if a.scenes == 0 {
        return Err(usage("--scenes must be at least 1"));
    }
    let start = Instant::now();
    let scenes = generate_scenes(&spec, a.scenes, w, h, a.seed)?;
    create_dir(&a.out)?;
    scenes
        .par_iter()
        .enumerate()
        .try_for_each(|(i, s)| write_scene(&a.out.join(scene_dir_name(i)), s, None).map(drop))?;
    write_dataset_index(
        &a.out,
        &DatasetIndex {
            scenes: (0..scenes.len()).map(manifest_rel).collect(),
            size: [w, h],
            seed: a.seed,
            noise: None,
        },
    )?;
    if g.timing {
        eprintln!("{}", json!({ "elapsed_ms": elapsed_ms(start) }));
    }
    Ok(())
}

pub fn corrupt(a: &CorruptArgs, g: Globals) -> CliResult<()> {
    init_threads(g.threads)?;
    let noise: NoiseSpec = read_json_or_default(a.noise.as_deref())?;
    noise.validate()?;
    let (index, manifests) = read_dataset(&a.dataset)?;
    create_dir(&a.out)?;
    manifests.par_iter().enumerate().try_for_each(|(i, m)| -> CliResult<()> {
        let clean = read_scene(m)?;
        let degraded = corrupt_scene(&clean, &noise)?;
        let dir = a.out.join(scene_dir_name(i));
        create_dir(&dir)?;
        let gt = relative_path(&dir, m)?;
        write_scene(&dir, &degraded, Some(&gt))?;
        Ok(())
    })?;
    write_dataset_index(
        &a.out,
        &DatasetIndex {
            scenes: (0..manifests.len()).map(manifest_rel).collect(),
            size: index.size,
            seed: index.seed,
            noise: Some(noise),
        },
    )?;
    Ok(())
}

pub fn rectify(a: &RectifyArgs) -> CliResult<()> {
    let scene = read_scene(&a.manifest)?;
    let rect = rectify_scene(&scene)?;
    create_dir(&a.out)?;
    write_intensity(a.out.join(RECTIFIED_INTENSITY), &rect.intensity)?;
    write_mask(a.out.join(RECTIFIED_MASK), &rect.mask)?;
    let record = rect.transform.to_record(scene.mask.frame(), rect.mask.frame());
    let path = a.out.join(RECTIFIED_TRANSFORM);
    std::fs::write(&path, to_pretty(&record)).map_err(|e| io_err(&path, e))
}

pub fn match_pairs(a: &MatchArgs) -> CliResult<()> {
    let cfg: MatcherConfig = read_json_or_default(a.config.as_deref())?;
    cfg.validate()?;
    let intensity = read_intensity(a.rectified.join(RECTIFIED_INTENSITY))?;
    let mask = read_mask(a.rectified.join(RECTIFIED_MASK))?;
    let record: TransformRecord = read_json(&a.rectified.join(RECTIFIED_TRANSFORM))?;
    if record.rectified_size != [mask.width(), mask.height()] || !intensity.same_size(&mask) {
        return Err(CliError::Core(symrefine::Error::Schema {
            field: "rectified_size".into(),
            message: "does not match the rectified images".into(),
        }));
    }
    let t = RectifyTransform::from_record(&record)?;
    let flow = match_scanlines(&intensity, &mask, &cfg)?;
    let [w, h] = record.original_size;
    let (mut set, _) = lift_flow_to_correspondences(&flow, &t, &mask, ImageFrame::new(w, h));
    set.retain_in_bounds(w, h);
    create_parent(&a.out)?;
    write_correspondences(&a.out, &set)?;
    Ok(())
}

pub fn filter(a: &FilterArgs) -> CliResult<()> {
    let cfg = FilterConfig {
        cycle_threshold: a.threshold,
    };
    cfg.validate()?;
    let pairs = read_correspondences(&a.corr)?;
    let mut kept = consistency_filter(&pairs, &cfg)?;
    if a.subsample {
        kept = subsample_blocks(&kept);
    }
    create_parent(&a.out)?;
    write_correspondences(&a.out, &kept)?;
    Ok(())
}

pub fn refine(a: &RefineArgs, g: Globals) -> CliResult<()> {
    let mut cfg: SolverConfig = read_json_or_default(a.config.as_deref())?;
    if let Some(l) = a.lambda {
        cfg.tradeoffs.lambda = l;
    }
    if let Some(m) = a.mu {
        cfg.tradeoffs.mu = m;
    }
    if a.freeze_camera {
        cfg.optimize_camera = false;
    }
    cfg.validate()?;
    let scene = read_scene(&a.manifest)?;
    let pairs = match &a.corr {
        Some(p) => read_correspondences(p)?,
        None => scene.correspondences.clone(),
    };
    let start = Instant::now();
    let out = refine_depth(&scene.depth, &scene.normals, &scene.mask, &pairs, &scene.camera, &cfg)?;
    let ms = elapsed_ms(start);
    create_parent(&a.out)?;
    write_depth(&a.out, &out.depth, Some(&scene.mask))?;
    let mut report = json!({
        "camera": camera_json(&out.camera),
        "solver": out.report,
    });
    if g.timing {
        report["elapsed_ms"] = json!(ms);
    }
    match &a.report {
        Some(p) => emit(Some(p), &to_pretty(&report)),
        None => Ok(()),
    }
}

pub fn eval(a: &EvalArgs) -> CliResult<()> {
    let loaded = read_manifest(&a.manifest)?;
    let scene = read_scene(&a.manifest)?;
    let gt = match &loaded.record.ground_truth {
        Some(rel) => Some(read_scene(loaded.resolve(rel))?),
        None => None,
    };
    let truth: &Scene = gt.as_ref().unwrap_or(&scene);
    let pred = read_depth(&a.pred, Some(&truth.mask))?;
    let mut report = json!({ "depth": depth_metrics(&pred, &truth.depth, &truth.mask)? });
    if gt.is_some() {
        report["initial_depth"] = json!(depth_metrics(&scene.depth, &truth.depth, &truth.mask)?);
        report["pose_initial"] = json!(pose_metrics(&scene.camera, &truth.camera, truth.object_size)?);
    }
    if let Some(p) = &a.refine_report {
        let r: Value = read_json(p)?;
        let cam = camera_from_json(r.get("camera").unwrap_or(&Value::Null))?;
        report["pose"] = json!(pose_metrics(&cam, &truth.camera, truth.object_size)?);
    }
    emit(a.report.as_deref(), &to_pretty(&report))
}

fn pipeline_config(path: Option<&Path>, dataset: Option<&Path>, g: Globals) -> CliResult<PipelineConfig> {
    let mut cfg: PipelineConfig = read_json_or_default(path)?;
    if let Some(d) = dataset {
        cfg.dataset = Some(d.to_path_buf());
    }
    if g.threads.is_some() {
        cfg.threads = g.threads;
    }
    cfg.validate()?;
    if cfg.dataset.is_none() {
        return Err(usage("no dataset: pass --dataset or set it in the config"));
    }
    init_threads(cfg.threads)?;
    Ok(cfg)
}

/// Clean and degraded scene of one manifest. Manifests that point at a
/// ground truth are used as the degraded input directly; clean ones are
/// degraded with the configured noise.
fn load_pair(manifest: &Path, cfg: &PipelineConfig) -> CliResult<(Scene, Scene)> {
    let loaded = read_manifest(manifest)?;
    let scene = read_scene(manifest)?;
    match &loaded.record.ground_truth {
        Some(rel) => Ok((read_scene(loaded.resolve(rel))?, scene)),
        None => {
            let degraded = corrupt_scene(&scene, &cfg.scene_noise())?;
            Ok((scene, degraded))
        }
    }
}

pub fn pipeline(a: &PipelineArgs, g: Globals) -> CliResult<()> {
    let cfg = pipeline_config(a.config.as_deref(), a.dataset.as_deref(), g)?;
    let out_dir = a.out.clone().or_else(|| cfg.output.clone());
    let dataset = cfg.dataset.clone().expect("checked above");
    let (_, manifests) = read_dataset(&dataset)?;
    let start = Instant::now();
    let results: Vec<(SceneReport, f64)> = manifests
        .par_iter()
        .enumerate()
        .map(|(i, m)| -> CliResult<(SceneReport, f64)> {
            let t0 = Instant::now();
            let (clean, degraded) = load_pair(m, &cfg)?;
            let (out, report) = run_scene(&clean, &degraded, &cfg)?;
            let ms = elapsed_ms(t0);
            if let Some(dir) = &out_dir {
                let dir = dir.join(scene_dir_name(i));
                let deg_dir = dir.join("degraded");
                create_dir(&deg_dir)?;
                let gt = relative_path(&deg_dir, m)?;
                write_scene(&deg_dir, &degraded, Some(&gt))?;
                write_depth(dir.join("refined.pfm"), &out.depth, Some(&clean.mask))?;
                let mut v = json!({ "camera": camera_json(&out.camera), "report": report });
                if g.timing {
                    v["elapsed_ms"] = json!(ms);
                }
                emit(Some(&dir.join("report.json")), &to_pretty(&v))?;
            }
            Ok((report, ms))
        })
        .collect::<CliResult<_>>()?;
    let reports: Vec<SceneReport> = results.iter().map(|(r, _)| r.clone()).collect();
    let summary = aggregate(&reports)?;
    let scenes: Vec<Value> = results
        .iter()
        .enumerate()
        .map(|(i, (r, ms))| {
            let mut v = json!({ "name": scene_dir_name(i), "report": r });
            if g.timing {
                v["elapsed_ms"] = json!(ms);
            }
            v
        })
        .collect();
    let mut doc = json!({ "summary": summary, "scenes": scenes });
    if g.timing {
        doc["elapsed_ms"] = json!(elapsed_ms(start));
    }
    emit(a.report.as_deref(), &to_pretty(&doc))
}

fn parse_grid(s: &str) -> CliResult<Vec<f64>> {
    if s == "default" {
        return Ok(TUNE_GRID.to_vec());
    }
    let grid: Vec<f64> = s
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| usage(format!("bad grid value {v:?}"))))
        .collect::<CliResult<_>>()?;
    if grid.is_empty() || grid.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(usage("grid values must be finite and non-negative"));
    }
    Ok(grid)
}

pub fn tune(a: &TuneArgs, g: Globals) -> CliResult<()> {
    let grid = parse_grid(&a.grid)?;
    let cfg = pipeline_config(a.config.as_deref(), a.dataset.as_deref(), g)?;
    let dataset = cfg.dataset.clone().expect("checked above");
    let (_, manifests) = read_dataset(&dataset)?;
    let start = Instant::now();
    let scenes: Vec<(Scene, Scene)> = manifests
        .par_iter()
        .map(|m| load_pair(m, &cfg))
        .collect::<CliResult<_>>()?;
    let report = tune_grid(&scenes, &cfg, &grid)?;
    let mut doc = json!(report);
    if g.timing {
        doc["elapsed_ms"] = json!(elapsed_ms(start));
    }
    emit(a.report.as_deref(), &to_pretty(&doc))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_error_category() {
        assert_eq!(usage("x").exit_code(), 2);
        let solver = CliError::Core(symrefine::Error::Solver { message: "x".into() });
        assert_eq!(solver.exit_code(), 4);
        let fmt = CliError::Core(symrefine::Error::InvalidInput("x".into()));
        assert_eq!(fmt.exit_code(), 3);
    }

    #[test]
    fn grid_parsing() {
        assert_eq!(parse_grid("default").unwrap(), TUNE_GRID.to_vec());
        assert_eq!(parse_grid("0.5, 2").unwrap(), vec![0.5, 2.0]);
        assert!(parse_grid("a,1").is_err());
        assert!(parse_grid("-1").is_err());
    }

    #[test]
    fn relative_paths_walk_up_to_the_common_root() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("x/y");
        let b = dir.path().join("z");
        std::fs::create_dir_all(&a).unwrap();
        std::fs::create_dir_all(&b).unwrap();
        std::fs::write(b.join("m.json"), "{}").unwrap();
        assert_eq!(relative_path(&a, &b.join("m.json")).unwrap(), "../../z/m.json");
    }

    #[test]
    fn camera_json_round_trips() {
        let cam = CameraPose::from_quaternion(&Quaternion::new(0.9, 0.1, -0.2, 0.3), 0.1, 0.6).unwrap();
        let back = camera_from_json(&camera_json(&cam)).unwrap();
        assert!(back.rotation.angle_to(&cam.rotation) < 1e-12);
        assert_eq!(back.s, cam.s);
        assert!(camera_from_json(&json!({ "quaternion": [1.0] })).is_err());
    }
}
