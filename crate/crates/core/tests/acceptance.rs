//! Acceptance suite. Runs as a plain binary (no libtest harness) and prints
//! one PASS/FAIL line per criterion; exits non-zero if any criterion fails.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use symrefine::geometry::{exp_map, quat_to_rotation, Quaternion, Rotation};
use symrefine::imaging::{
    decode_mask, decode_pfm, encode_mask, encode_pfm, format_correspondences,
    parse_correspondences, read_correspondences, read_depth, read_intensity, read_manifest,
    read_mask, read_normals, write_correspondences, write_depth, write_intensity, write_manifest,
    write_mask, write_normals, Correspondence, CorrespondenceSet, Flow1D, Grid, IntensityImage,
    Mask, PfmImage,
};
use symrefine::metrics::{depth_metrics, normal_metrics, pose_metrics, symmetry_metrics};
use symrefine::pipeline::{
    aggregate, rectify_scene, run_scene, CorrespondenceSource, PipelineConfig, SceneReport,
};
use symrefine::rectify::{build_transform, lift_flow_to_correspondences, pairs_to_flow, TransformRecord};
use symrefine::solver::{gauss_newton_step, update_weights, Problem, SolverState, Weights};
use symrefine::symmetry::{consistency_filter, match_scanlines, FilterConfig, MatcherConfig};
use symrefine::synth::{
    corrupt, corrupt_correspondences, generate_scenes, inject_outliers, write_scene,
    GeneratorSpec, NoiseSpec, Scene,
};
use symrefine::{CameraPose, PixelCoord, SolverConfig, Tradeoffs, Vec3};

const STANDARD_SEED: u64 = 2024;
const STANDARD_SCENES: usize = 50;
const SIZE: usize = 128;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn main() {
    // `cargo test -- <filter>` passes arguments; run everything regardless
    let standard = generate_scenes(&GeneratorSpec::default(), STANDARD_SCENES, SIZE, SIZE, STANDARD_SEED)
        .expect("standard dataset generates");

    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("oracle equivalence", Box::new(oracle_equivalence)),
        ("fixed point", Box::new(fixed_point)),
        ("symmetry improves depth", Box::new(|| symmetry_improves_depth(&standard))),
        ("scanline property", Box::new(|| scanline_property(&standard))),
        ("matcher sanity", Box::new(|| matcher_sanity(&standard[..10]))),
        ("filter behavior", Box::new(|| filter_behavior(&standard[..10]))),
        ("metric exactness", Box::new(metric_exactness)),
        ("numerical hygiene", Box::new(|| numerical_hygiene(&standard[0]))),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let o = run();
        let status = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {} {status} {name}: {} ({:.1} s)", i + 1, o.detail, t.elapsed().as_secs_f64());
        failed += !o.pass as usize;
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------- 1

/// Random instance on an 8x8 grid with a few pixels cut out of the mask.
fn random_problem(rng: &mut ChaCha8Rng) -> Problem {
    let n = 8;
    let mask: Mask = Grid::from_fn(n, n, |c, r| {
        let edge = c == 0 || r == 0 || c == n - 1 || r == n - 1;
        !(edge && rng.random::<f64>() < 0.3)
    });
    let (a, b) = (rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1));
    let depth = Grid::from_fn(n, n, |c, r| {
        (2.5 + a * c as f64 + b * r as f64) * (1.0 + 0.1 * rng.random_range(-1.0..1.0))
    });
    let normals = Grid::from_fn(n, n, |_, _| {
        Vec3::new(rng.random_range(-0.4..0.4), rng.random_range(-0.4..0.4), -1.0).normalize()
    });
    let w = Vec3::new(rng.random_range(-0.3..0.3), rng.random_range(-0.6..0.6), rng.random_range(-0.3..0.3));
    let camera = CameraPose::new(exp_map(&w), rng.random_range(-0.5..0.5), rng.random_range(0.3..0.8)).unwrap();
    let mut pairs = CorrespondenceSet::new();
    while pairs.len() < 12 {
        let p = PixelCoord::new(rng.random_range(1.0..6.0), rng.random_range(1.0..6.0));
        let q = PixelCoord::new(rng.random_range(1.0..6.0), p.row + rng.random_range(-0.5..0.5));
        pairs.push(Correspondence::new(p, q));
    }
    let t = Tradeoffs::new(rng.random_range(0.2..3.0), rng.random_range(0.2..3.0));
    Problem::new(&depth, &normals, &mask, &pairs, &camera, t).unwrap()
}

/// Flattened residual vector with its per-row weight.
fn weighted_residuals(p: &Problem, st: &SolverState, w: &Weights) -> (Vec<f64>, Vec<f64>) {
    let r = p.residuals(st);
    let t = p.tradeoffs;
    let mut v = Vec::new();
    let mut wt = Vec::new();
    for (x, wk) in r.depth.iter().zip(&w.depth) {
        v.push(*x);
        wt.push(*wk);
    }
    for (x, wk) in r.normal.iter().zip(&w.normal) {
        v.push(*x);
        wt.push(t.lambda * wk);
    }
    for (x, wk) in r.symmetry.iter().zip(&w.symmetry) {
        v.extend([x.x, x.y, x.z]);
        wt.extend([t.mu * wk; 3]);
    }
    (v, wt)
}

/// Dense Jacobian by Richardson-extrapolated central differences.
fn numeric_jacobian(p: &Problem, st: &SolverState, w: &Weights) -> DMatrix<f64> {
    let n_z = p.n_pixels();
    let n = n_z + 4;
    let m = weighted_residuals(p, st, w).0.len();
    let perturb = |k: usize, h: f64| -> Vec<f64> {
        let s = if k < n_z {
            let mut dz = vec![0.0; n_z];
            dz[k] = h;
            st.stepped(&dz, Some([0.0; 4]), 1.0)
        } else {
            let mut c = [0.0; 4];
            c[k - n_z] = h;
            st.stepped(&vec![0.0; n_z], Some(c), 1.0)
        };
        weighted_residuals(p, &s, w).0
    };
    let mut j = DMatrix::zeros(m, n);
    for k in 0..n {
        let h = 1e-3;
        let d = |h: f64| {
            let (a, b) = (perturb(k, h), perturb(k, -h));
            a.iter().zip(&b).map(|(x, y)| (x - y) / (2.0 * h)).collect::<Vec<f64>>()
        };
        let (d1, d2) = (d(h), d(h / 2.0));
        for i in 0..m {
            j[(i, k)] = (4.0 * d2[i] - d1[i]) / 3.0;
        }
    }
    j
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cfg = SolverConfig::default();
    let mut worst: f64 = 0.0;
    let mut elapsed = Duration::ZERO;
    for _ in 0..20 {
        let p = random_problem(&mut rng);
        let mut st = p.initial_state();
        for z in st.z.iter_mut() {
            *z *= 1.0 + 0.05 * rng.random_range(-1.0..1.0);
        }
        let w = update_weights(&p, &p.residuals(&st));

        let t = Instant::now();
        let inc = gauss_newton_step(&p, &st, &w, &cfg).unwrap();
        elapsed += t.elapsed();
        let mut x = inc.dz.clone();
        x.extend(inc.camera.unwrap());

        let j = numeric_jacobian(&p, &st, &w);
        let (r, wt) = weighted_residuals(&p, &st, &w);
        let wm = DMatrix::from_diagonal(&DVector::from_vec(wt));
        let mut h = j.transpose() * &wm * &j;
        let n_z = p.n_pixels();
        for k in n_z..n_z + 4 {
            h[(k, k)] += cfg.damping;
        }
        let g = -(j.transpose() * &wm * DVector::from_vec(r));
        let oracle = h.lu().solve(&g).expect("oracle system is regular");
        for (a, b) in x.iter().zip(oracle.iter()) {
            worst = worst.max((a - b).abs() / b.abs());
        }
    }
    outcome(
        worst <= 1e-8 && elapsed < Duration::from_secs(1),
        format!("max per-unknown relative difference {worst:.2e} (tolerance 1e-8), steps took {:.3} s", elapsed.as_secs_f64()),
    )
}

// ---------------------------------------------------------------- 2

fn fixed_point() -> Outcome {
    let clean = generate_scenes(&GeneratorSpec::planar(), 10, SIZE, SIZE, 7).unwrap();
    let cfg = PipelineConfig {
        noise: NoiseSpec::zero(),
        correspondences: CorrespondenceSource::Simulated,
        ..Default::default()
    };
    let reports: Vec<(SceneReport, CameraPose, CameraPose)> = clean
        .par_iter()
        .map(|s| {
            let degraded = corrupt(s, &cfg.scene_noise()).unwrap();
            let (out, r) = run_scene(s, &degraded, &cfg).unwrap();
            (r, out.camera, s.camera)
        })
        .collect();
    let mut max_rel: f64 = 0.0;
    let mut max_cam: f64 = 0.0;
    let mut monotone = true;
    for (r, got, gt) in &reports {
        max_rel = max_rel.max(r.refined.rel);
        max_cam = max_cam
            .max(got.rotation.angle_to(&gt.rotation))
            .max((got.t_x - gt.t_x).abs())
            .max((got.s - gt.s).abs());
        monotone &= r.solver.objective_trace.windows(2).all(|w| w[1] <= w[0]);
        monotone &= r.solver.steps.iter().all(|s| s.surrogate_after <= s.surrogate_before);
    }
    outcome(
        max_rel <= 1e-6 && max_cam <= 1e-6 && monotone,
        format!("max refined rel {max_rel:.2e}, max camera deviation {max_cam:.2e}, monotone trace {monotone}"),
    )
}

// ---------------------------------------------------------------- 3

fn symmetry_improves_depth(standard: &[Scene]) -> Outcome {
    let base = PipelineConfig {
        correspondences: CorrespondenceSource::Simulated,
        seed: STANDARD_SEED,
        ..Default::default()
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let pairs: Vec<(Scene, Scene)> =
        standard.iter().map(|s| (s.clone(), corrupt(s, &base.scene_noise()).unwrap())).collect();
    let run = |mu: f64| {
        let cfg = PipelineConfig {
            solver: SolverConfig::with_tradeoffs(1.0, mu),
            ..base.clone()
        };
        let mut slowest = Duration::ZERO;
        let reports: Vec<SceneReport> = pairs
            .iter()
            .map(|(c, d)| {
                let t = Instant::now();
                let r = pool.install(|| run_scene(c, d, &cfg)).unwrap().1;
                slowest = slowest.max(t.elapsed());
                r
            })
            .collect();
        (aggregate(&reports).unwrap(), slowest)
    };
    let (with, slow_a) = run(1.0);
    let (without, slow_b) = run(0.0);
    let slowest = slow_a.max(slow_b);
    let improvement = with.relative_improvement;
    outcome(
        improvement >= 0.10 && with.refined_rel.mean < without.refined_rel.mean && slowest < Duration::from_secs(5),
        format!(
            "mean rel {:.4} -> {:.4} ({:.1}% lower), mu=0 ablation {:.4}, slowest scene {:.2} s single-threaded",
            with.initial_rel.mean,
            with.refined_rel.mean,
            100.0 * improvement,
            without.refined_rel.mean,
            slowest.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------- 4

fn scanline_property(standard: &[Scene]) -> Outcome {
    let (mut within, mut total, mut degenerate) = (0usize, 0usize, 0usize);
    for s in standard {
        let t = build_transform(&s.camera, s.width(), s.height(), &s.mask).unwrap();
        degenerate += t.degenerate as usize;
        let (_, offsets) = pairs_to_flow(&s.correspondences, &t, s.mask.frame());
        total += offsets.len();
        within += offsets.iter().filter(|o| o.abs() <= 0.5).count();
    }
    let frac = within as f64 / total as f64;
    outcome(
        frac >= 0.95 && degenerate == 0,
        format!("{:.2}% of {total} pairs within 0.5 px of a common row over {} poses", 100.0 * frac, standard.len()),
    )
}

// ---------------------------------------------------------------- 5

/// Exhaustive mirrored-ZNCC scanline search, written independently of the
/// matcher. Each unordered pair is scored with its left pixel as reference.
fn brute_force_matches(image: &IntensityImage, mask: &Mask, cfg: &MatcherConfig) -> Flow1D {
    let (w, h) = (image.width(), image.height());
    let rad = cfg.patch_radius;
    let n = ((2 * rad + 1) * (2 * rad + 1)) as f64;
    let search = cfg.search_radius.unwrap_or(w - 1).max(1);
    let stats = |c: usize, r: usize| -> Option<(f64, f64)> {
        if c < rad || r < rad || c + rad >= w || r + rad >= h {
            return None;
        }
        let mut sum = 0.0;
        for y in r - rad..=r + rad {
            for x in c - rad..=c + rad {
                sum += image.get(x, y);
            }
        }
        let mean = sum / n;
        let mut ss = 0.0;
        for y in r - rad..=r + rad {
            for x in c - rad..=c + rad {
                ss += (image.get(x, y) - mean).powi(2);
            }
        }
        Some((mean, ss.sqrt()))
    };
    let mut flow = Flow1D::empty(w, h);
    for r in 0..h {
        let st: Vec<Option<(f64, f64)>> = (0..w)
            .map(|c| stats(c, r).filter(|&(_, norm)| *mask.get(c, r) && norm > 0.0))
            .collect();
        let zncc = |a: usize, b: usize| {
            let (lo, hi) = (a.min(b), a.max(b));
            let ((ml, nl), (mh, nh)) = (st[lo].unwrap(), st[hi].unwrap());
            let ri = rad as isize;
            let mut num = 0.0;
            for dy in -ri..=ri {
                let y = (r as isize + dy) as usize;
                for dx in -ri..=ri {
                    num += (image.get((lo as isize - dx) as usize, y) - ml)
                        * (image.get((hi as isize + dx) as usize, y) - mh);
                }
            }
            num / (nl * nh)
        };
        let candidates = |x: usize| (x.saturating_sub(search)..(x + search + 1).min(w)).filter(|&b| st[b].is_some());
        let best = |x: usize| -> Option<(usize, f64)> {
            st[x]?;
            candidates(x).fold(None, |acc: Option<(usize, f64)>, b| {
                let s = zncc(x, b);
                match acc {
                    Some((_, t)) if s <= t => acc,
                    _ => Some((b, s)),
                }
            })
        };
        for x in 0..w {
            let Some((b, s)) = best(x) else { continue };
            if st[x].unwrap().1 < cfg.min_contrast * n.sqrt() || s < cfg.zncc_accept {
                continue;
            }
            let Some((back, _)) = best(b) else { continue };
            if (back as f64 - x as f64).abs() > cfg.lr_tolerance {
                continue;
            }
            let side = |c: isize| {
                (c >= 0 && (c as usize) < w && c.abs_diff(x as isize) <= search && st[c as usize].is_some())
                    .then(|| zncc(x, c as usize))
            };
            let offset = match (side(b as isize - 1), side(b as isize + 1)) {
                (Some(a), Some(c)) if a - 2.0 * s + c < 0.0 => (0.5 * (a - c) / (a - 2.0 * s + c)).clamp(-0.5, 0.5),
                _ => 0.0,
            };
            flow.set(x, r, b as f64 + offset - x as f64, s);
        }
    }
    flow
}

/// Share of lifted matches within 1 px of the true mirror, and whether the
/// brute-force oracle reproduced every flow exactly.
fn match_accuracy(scenes: &[Scene], cfg: &MatcherConfig) -> (usize, usize, usize) {
    let (mut good, mut total, mut mismatched) = (0usize, 0usize, 0usize);
    for s in scenes {
        let rect = rectify_scene(s).unwrap();
        let flow = match_scanlines(&rect.intensity, &rect.mask, cfg).unwrap();
        if flow != brute_force_matches(&rect.intensity, &rect.mask, cfg) {
            mismatched += 1;
        }
        let (pairs, _) = lift_flow_to_correspondences(&flow, &rect.transform, &rect.mask, s.mask.frame());
        let view = s.view().expect("generated scenes carry their spec");
        let tol = 0.005 * s.object_size;
        for c in &pairs {
            if let Some(q) = view.mirror_of(c.p, tol) {
                total += 1;
                good += (c.q.distance(&q) <= 1.0) as usize;
            }
        }
    }
    (good, total, mismatched)
}

/// Cameras in the symmetry plane: the rectified image is then exactly
/// mirror-symmetric.
fn mirror_consistent_scenes(n: usize) -> Vec<Scene> {
    let mut g = GeneratorSpec::default();
    g.camera.azimuth_deg = [0.0, 0.0];
    g.camera.roll_deg = [0.0, 0.0];
    g.camera.jitter_deg = 0.0;
    generate_scenes(&g, n, SIZE, SIZE, 55).unwrap()
}

fn matcher_sanity(general: &[Scene]) -> Outcome {
    let cfg = MatcherConfig::default();
    let (good, total, mismatched) = match_accuracy(&mirror_consistent_scenes(10), &cfg);
    let (g_good, g_total, g_mismatched) = match_accuracy(general, &cfg);
    let frac = good as f64 / total as f64;
    outcome(
        frac >= 0.99 && mismatched + g_mismatched == 0,
        format!(
            "{:.2}% of {total} matches within 1 px on mirror-consistent views ({:.2}% on general poses), \
             brute-force disagreement on {} of {} images",
            100.0 * frac,
            100.0 * g_good as f64 / g_total as f64,
            mismatched + g_mismatched,
            10 + general.len()
        ),
    )
}

// ---------------------------------------------------------------- 6

fn filter_behavior(scenes: &[Scene]) -> Outcome {
    let noise = NoiseSpec::default();
    let cfg = FilterConfig::default();
    let (mut kept_inliers, mut inliers) = (0usize, 0usize);
    let mut decreased = true;
    let (mut before_sum, mut after_sum) = (0.0, 0.0);
    for (i, s) in scenes.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + i as u64);
        let mut set = corrupt_correspondences(&s.correspondences, &s.mask, noise.corr_jitter_sigma, 0.0, &mut rng);
        inject_outliers(&mut set, &s.mask, 0.2, &mut rng);
        let filtered = consistency_filter(&set, &cfg).unwrap();
        let kept: std::collections::HashSet<_> = filtered.iter().map(key).collect();

        // inlier: the chain closed through the true mirror of the target
        // ends within the threshold
        let view = s.view().expect("generated scenes carry their spec");
        let tol = 0.005 * s.object_size;
        for c in &set {
            let closes = view.mirror_of(c.q, tol).is_some_and(|m| m.distance(&c.p) <= cfg.cycle_threshold);
            if closes {
                inliers += 1;
                kept_inliers += kept.contains(&key(c)) as usize;
            }
        }

        let gt: HashMap<(i64, i64), PixelCoord> =
            s.correspondences.iter().map(|c| ((c.p.col as i64, c.p.row as i64), c.q)).collect();
        let lookup = |p: PixelCoord| gt.get(&(p.col as i64, p.row as i64)).copied();
        let before = symmetry_metrics(&set, lookup).unwrap().mean_pixel_err;
        let after = symmetry_metrics(&filtered, lookup).unwrap().mean_pixel_err;
        decreased &= after < before;
        before_sum += before;
        after_sum += after;
    }
    let retained = kept_inliers as f64 / inliers as f64;
    let n = scenes.len() as f64;
    outcome(
        retained >= 0.95 && decreased,
        format!(
            "{:.2}% of {inliers} inliers retained, mean pair error {:.2} -> {:.2} px (decreased in every scene: {decreased})",
            100.0 * retained,
            before_sum / n,
            after_sum / n
        ),
    )
}

fn key(c: &Correspondence) -> [u64; 4] {
    [c.p.col.to_bits(), c.p.row.to_bits(), c.q.col.to_bits(), c.q.row.to_bits()]
}

// ---------------------------------------------------------------- 7

fn metric_exactness() -> Outcome {
    let mask: Mask = Grid::filled(16, 12, true);
    let gt = Grid::from_fn(16, 12, |c, r| 1.0 + 0.1 * c as f64 + 0.05 * r as f64);
    let pred = gt.map(|z| z * std::f64::consts::E);
    let si = depth_metrics(&pred, &gt, &mask).unwrap().scale_invariant;

    let q = Quaternion::from_axis_angle(&Vec3::new(0.3, -0.5, 0.8), 1.1).unwrap();
    let a = CameraPose::from_quaternion(&q, 0.2, 0.5).unwrap();
    let b = CameraPose::from_quaternion(&q.neg(), 0.2, 0.5).unwrap();
    let pose = pose_metrics(&a, &b, 1.0).unwrap();

    let gt_n = Grid::from_fn(16, 12, |c, r| Vec3::new(0.02 * c as f64, -0.03 * r as f64, -1.0).normalize());
    let pred_n = gt_n.map(|n| {
        let axis = n.cross(&Vec3::new(1.0, 0.0, 0.0)).normalize();
        Rotation::about_axis(&axis, 10f64.to_radians()).unwrap().apply(n)
    });
    let normals = normal_metrics(&pred_n, &gt_n, &mask).unwrap();

    let si_err = (si - 0.5).abs();
    let ang_err = (normals.mean_angle_deg - 10.0).abs();
    outcome(
        si_err <= 1e-12 && pose.rot_err_deg == 0.0 && pose.pose_loss == 0.0 && ang_err <= 1e-9,
        format!(
            "scale-invariant error off by {si_err:.1e}, q vs -q rotation error {} deg, 10 deg normals off by {ang_err:.1e}",
            pose.rot_err_deg
        ),
    )
}

// ---------------------------------------------------------------- 8

fn numerical_hygiene(scene: &Scene) -> Outcome {
    // 100 solver iterations on a noisy scene, restarting whenever the
    // solver stops early
    let degraded = corrupt(scene, &NoiseSpec::default()).unwrap();
    let cfg = SolverConfig {
        max_outer_iters: 100,
        converge_tol: 0.0,
        ..Default::default()
    };
    let (mut depth, mut camera) = (degraded.depth.clone(), degraded.camera);
    let (mut iterations, mut ortho, mut steps): (usize, f64, usize) = (0, 0.0, 0);
    while iterations < 100 {
        let out = symrefine::refine(&depth, &degraded.normals, &degraded.mask, &degraded.correspondences, &camera, &SolverConfig {
            max_outer_iters: 100 - iterations,
            ..cfg.clone()
        })
        .unwrap();
        iterations += out.report.iterations.max(1);
        steps += out.report.steps.len();
        ortho = ortho.max(out.report.max_orthonormality_error);
        depth = out.depth;
        camera = out.camera;
    }
    ortho = ortho.max(camera.rotation.orthonormality_error());

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut cross: f64 = 0.0;
    for _ in 0..10_000 {
        let axis = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if axis.norm() < 1e-3 {
            continue;
        }
        let c = axis.normalize() * rng.random_range(0.0..std::f64::consts::PI);
        let q = Quaternion::from_axis_angle(&c.normalize(), c.norm()).unwrap();
        let d = exp_map(&c).matrix() - quat_to_rotation(&q).unwrap().matrix();
        cross = cross.max(d.abs().max());
    }

    let round_trip = formats_round_trip(scene);
    outcome(
        ortho <= 1e-9 && cross <= 1e-10 && round_trip.is_ok(),
        format!(
            "orthonormality error {ortho:.1e} over {iterations} iterations ({steps} accepted steps), exp-map vs quaternion {cross:.1e}, formats: {}",
            round_trip.err().unwrap_or_else(|| "bit-exact".into())
        ),
    )
}

fn formats_round_trip(scene: &Scene) -> Result<(), String> {
    let e = |e: symrefine::Error| e.to_string();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    std::fs::create_dir_all(&b).map_err(|e| e.to_string())?;
    let manifest = write_scene(&a, scene, None).map_err(e)?;

    // every file read into its in-memory form and written back
    let loaded = read_manifest(&manifest).map_err(e)?;
    let f = &loaded.record.files;
    write_manifest(b.join("manifest.json"), &loaded.record).map_err(e)?;
    let mask = read_mask(a.join(&f.mask)).map_err(e)?;
    write_mask(b.join(&f.mask), &mask).map_err(e)?;
    write_depth(b.join(&f.depth), &read_depth(a.join(&f.depth), Some(&mask)).map_err(e)?, Some(&mask)).map_err(e)?;
    write_normals(b.join(&f.normals), &read_normals(a.join(&f.normals)).map_err(e)?).map_err(e)?;
    write_intensity(b.join(&f.intensity), &read_intensity(a.join(&f.intensity)).map_err(e)?).map_err(e)?;
    write_correspondences(b.join(&f.correspondences), &read_correspondences(a.join(&f.correspondences)).map_err(e)?)
        .map_err(e)?;
    for entry in std::fs::read_dir(&a).map_err(|e| e.to_string())? {
        let name = entry.map_err(|e| e.to_string())?.file_name();
        let x = std::fs::read(a.join(&name)).map_err(|e| e.to_string())?;
        let y = std::fs::read(b.join(&name)).map_err(|e| e.to_string())?;
        if x != y {
            return Err(format!("{} differs after a round trip", name.to_string_lossy()));
        }
    }

    let t = build_transform(&scene.camera, scene.width(), scene.height(), &scene.mask).map_err(e)?;
    let rec = t.to_record(scene.mask.frame(), scene.mask.frame());
    let text = serde_json::to_string(&rec).map_err(|e| e.to_string())?;
    let back: TransformRecord = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    if back != rec || serde_json::to_string(&back).map_err(|e| e.to_string())? != text {
        return Err("transform record changed".into());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let img = PfmImage::scalar(&Grid::from_fn(7, 5, |_, _| rng.random_range(-1e3..1e3) as f32 as f64));
    let bytes = encode_pfm(&img);
    if encode_pfm(&decode_pfm(&bytes, "mem").map_err(|e| e.to_string())?) != bytes {
        return Err("PFM bytes changed".into());
    }
    let mask: Mask = Grid::from_fn(9, 4, |_, _| rng.random::<bool>());
    if decode_mask(&encode_mask(&mask), "mem").map_err(|e| e.to_string())? != mask {
        return Err("mask changed".into());
    }
    let set: CorrespondenceSet = (0..50)
        .map(|_| {
            Correspondence::new(
                PixelCoord::new(rng.random_range(0.0..100.0), rng.random_range(0.0..100.0)),
                PixelCoord::new(rng.random_range(0.0..100.0), rng.random_range(0.0..100.0)),
            )
            .with_score(rng.random())
        })
        .collect();
    if parse_correspondences(&format_correspondences(&set), "mem").map_err(|e| e.to_string())? != set {
        return Err("correspondences changed".into());
    }
    Ok(())
}
