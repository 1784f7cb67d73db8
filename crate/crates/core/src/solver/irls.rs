//! Robust reweighting, Gauss-Newton steps and the outer refinement loop.

use serde::{Deserialize, Serialize};

use super::linear::NormalEquations;
use super::problem::{Objective, Problem, Residuals, SolverState, Term, CAMERA_UNKNOWNS};
use super::{LinearSolver, SolverConfig, Tradeoffs};
use crate::error::{Error, Result};
use crate::geometry::CameraPose;
use crate::imaging::{CorrespondenceSet, DepthMap, Grid, Mask, NormalMap};

/// Below this robust scale every residual is treated as zero.
pub const SIGMA_FLOOR: f64 = 1e-12;

/// Robust weights of one outer iteration.
#[derive(Clone, Debug, PartialEq)]
pub struct Weights {
    pub depth: Vec<f64>,
    pub normal: Vec<f64>,
    pub symmetry: Vec<f64>,
    pub sigma: f64,
}

impl Weights {
    pub fn ones(problem: &Problem) -> Weights {
        Weights {
            depth: vec![1.0; problem.n_pixels()],
            normal: vec![1.0; problem.graph.edges.len()],
            symmetry: vec![1.0; problem.pairs.len()],
            sigma: 1.0,
        }
    }

    /// Row factor of the weighted surrogate, tradeoff included.
    pub(crate) fn row_factor(&self, t: &Tradeoffs, term: Term, k: usize) -> f64 {
        match term {
            Term::Depth => self.depth[k],
            Term::Normal => t.lambda * self.normal[k],
            Term::Symmetry => t.mu * self.symmetry[k / 3],
        }
    }

    /// `sum w_p r_p^2 + lambda sum w_e r_e^2 + mu sum w_c |r_c|^2`.
    pub fn surrogate(&self, t: &Tradeoffs, res: &Residuals) -> f64 {
        let d: f64 = res.depth.iter().zip(&self.depth).map(|(r, w)| w * r * r).sum();
        let n: f64 = res.normal.iter().zip(&self.normal).map(|(r, w)| w * r * r).sum();
        let s: f64 = res
            .symmetry
            .iter()
            .zip(&self.symmetry)
            .map(|(r, w)| w * r.norm_squared())
            .sum();
        d + t.lambda * n + t.mu * s
    }
}

/// Median, averaging the two middle values of an even-length list.
pub fn median(values: &mut [f64]) -> Option<f64> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let (_, hi, _) = values.select_nth_unstable_by(n / 2, f64::total_cmp);
    let hi = *hi;
    if n % 2 == 1 {
        return Some(hi);
    }
    let lo = values[..n / 2].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Some(0.5 * (lo + hi))
}

/// Robust scale and weights `sigma / sqrt(sigma^2 + t r^2)` from the current
/// residuals. The scale is the median of the pooled list of `|r_p|`,
/// `sqrt(lambda) |r_e|` and `sqrt(mu) |r_c|`; terms with a zero tradeoff are
/// left out of the pool. When the scale falls below [`SIGMA_FLOOR`] all
/// weights are one.
pub fn update_weights(problem: &Problem, res: &Residuals) -> Weights {
    let t = problem.tradeoffs;
    let mut pool: Vec<f64> = res.depth.iter().map(|r| r.abs()).collect();
    if t.lambda > 0.0 {
        let k = t.lambda.sqrt();
        pool.extend(res.normal.iter().map(|r| k * r.abs()));
    }
    if t.mu > 0.0 {
        let k = t.mu.sqrt();
        pool.extend(res.symmetry.iter().map(|r| k * r.norm()));
    }
    let sigma = median(&mut pool).unwrap_or(0.0);
    if !(sigma >= SIGMA_FLOOR) {
        return Weights {
            sigma,
            ..Weights::ones(problem)
        };
    }
    let w = |scaled2: f64| sigma / (sigma * sigma + scaled2).sqrt();
    Weights {
        depth: res.depth.iter().map(|r| w(r * r)).collect(),
        normal: res.normal.iter().map(|r| w(t.lambda * r * r)).collect(),
        symmetry: res.symmetry.iter().map(|r| w(t.mu * r.norm_squared())).collect(),
        sigma,
    }
}

/// Increment of one Gauss-Newton step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepIncrement {
    pub dz: Vec<f64>,
    /// `(c_y, c_z, t_x, s)`, absent when the camera is frozen.
    pub camera: Option<[f64; CAMERA_UNKNOWNS]>,
    pub method: LinearSolver,
    pub linear_iterations: usize,
    pub linear_residual: f64,
}

/// Solves the weighted, damped normal equations at `st`.
pub fn gauss_newton_step(
    problem: &Problem,
    st: &SolverState,
    weights: &Weights,
    cfg: &SolverConfig,
) -> Result<StepIncrement> {
    let t = problem.tradeoffs;
    let sys = NormalEquations::assemble(
        problem,
        st,
        |term, k| weights.row_factor(&t, term, k),
        cfg.optimize_camera,
        cfg.damping,
    );
    let sol = sys.solve(cfg.linear_solver, cfg.linear_solver_tol)?;
    if sol.x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Solver {
            message: "linear solve produced a non-finite increment".into(),
        });
    }
    let n = problem.n_pixels();
    let camera = cfg
        .optimize_camera
        .then(|| std::array::from_fn(|c| sol.x[n + c]));
    Ok(StepIncrement {
        dz: sol.x[..n].to_vec(),
        camera,
        method: sol.method,
        linear_iterations: sol.iterations,
        linear_residual: sol.relative_residual,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Relative change of the robust objective fell below the tolerance.
    Converged,
    /// The robust scale vanished: every residual is numerically zero.
    ZeroResidual,
    MaxIterations,
    /// No step length decreased the surrogate.
    LineSearchFailed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub outer: usize,
    pub surrogate_before: f64,
    pub surrogate_after: f64,
    pub alpha: f64,
    pub halvings: usize,
    pub linear_solver: LinearSolver,
    pub linear_iterations: usize,
    pub linear_residual: f64,
}

/// Counts of final weights in ten equal bins over `[0, 1]`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WeightHistograms {
    pub depth: [usize; 10],
    pub normal: [usize; 10],
    pub symmetry: [usize; 10],
}

impl WeightHistograms {
    fn of(w: &Weights) -> Self {
        let hist = |v: &[f64]| {
            let mut h = [0usize; 10];
            for &x in v {
                h[((x * 10.0) as usize).min(9)] += 1;
            }
            h
        };
        WeightHistograms {
            depth: hist(&w.depth),
            normal: hist(&w.normal),
            symmetry: hist(&w.symmetry),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefineReport {
    pub termination: Termination,
    /// Outer iterations that computed weights.
    pub iterations: usize,
    pub tradeoffs: Tradeoffs,
    pub optimize_camera: bool,
    pub n_pixels: usize,
    pub n_edges: usize,
    pub n_pairs: usize,
    /// Correspondences ignored because an endpoint has no masked support.
    pub dropped_pairs: usize,
    pub n_unknowns: usize,
    /// Robust objective before the first and after every outer iteration.
    pub objective_trace: Vec<f64>,
    pub sigma_trace: Vec<f64>,
    pub steps: Vec<StepRecord>,
    pub initial: Objective,
    #[serde(rename = "final")]
    pub final_objective: Objective,
    pub weight_histograms: WeightHistograms,
    /// Largest `|R^T R - I|` or `|det R - 1|` over all rotation iterates.
    pub max_orthonormality_error: f64,
}

#[derive(Clone, Debug)]
pub struct Refined {
    /// Refined depth on the mask, zero elsewhere.
    pub depth: DepthMap,
    pub camera: CameraPose,
    pub report: RefineReport,
}

/// Robust joint refinement of depth and camera.
///
/// `normals` are in the camera frame. Correspondences are used as given;
/// filter them beforehand.
pub fn refine(
    initial_depth: &DepthMap,
    normals: &NormalMap,
    mask: &Mask,
    correspondences: &CorrespondenceSet,
    camera: &CameraPose,
    cfg: &SolverConfig,
) -> Result<Refined> {
    cfg.validate()?;
    let problem = Problem::new(initial_depth, normals, mask, correspondences, camera, cfg.tradeoffs)?;
    let (state, report) = run(&problem, cfg)?;
    let mut depth = Grid::filled(mask.width(), mask.height(), 0.0);
    for (i, &(c, r)) in problem.pixels.iter().enumerate() {
        depth.set(c, r, state.z[i]);
    }
    Ok(Refined {
        depth,
        camera: state.camera,
        report,
    })
}

fn checked(o: Objective) -> Result<Objective> {
    if o.total.is_finite() {
        Ok(o)
    } else {
        Err(Error::Solver {
            message: format!("objective is not finite: {o:?}"),
        })
    }
}

/// The outer loop on a prepared problem.
pub(crate) fn run(problem: &Problem, cfg: &SolverConfig) -> Result<(SolverState, RefineReport)> {
    let t = problem.tradeoffs;
    let mut st = problem.initial_state();
    let mut res = problem.residuals(&st);
    let initial = checked(problem.objective_of(&res))?;
    let mut current = initial;
    let mut objective_trace = vec![initial.total];
    let mut sigma_trace = Vec::new();
    let mut steps = Vec::new();
    let mut max_ortho = st.camera.rotation.orthonormality_error();
    let mut weights = Weights::ones(problem);
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;

    'outer: for outer in 0..cfg.max_outer_iters {
        iterations = outer + 1;
        weights = update_weights(problem, &res);
        sigma_trace.push(weights.sigma);
        if weights.sigma < SIGMA_FLOOR {
            termination = Termination::ZeroResidual;
            break;
        }
        for _ in 0..cfg.gn_steps_per_reweight {
            let inc = gauss_newton_step(problem, &st, &weights, cfg)?;
            let before = weights.surrogate(&t, &res);
            let mut alpha = 1.0;
            let mut accepted = None;
            for halvings in 0..=cfg.line_search_max_halvings {
                let trial = st.stepped(&inc.dz, inc.camera, alpha);
                if trial.is_feasible() {
                    let trial_res = problem.residuals(&trial);
                    let after = weights.surrogate(&t, &trial_res);
                    if after <= before {
                        accepted = Some((trial, trial_res, after, halvings));
                        break;
                    }
                }
                alpha *= 0.5;
            }
            let Some((trial, trial_res, after, halvings)) = accepted else {
                termination = Termination::LineSearchFailed;
                break 'outer;
            };
            st = trial;
            res = trial_res;
            max_ortho = max_ortho.max(st.camera.rotation.orthonormality_error());
            steps.push(StepRecord {
                outer,
                surrogate_before: before,
                surrogate_after: after,
                alpha,
                halvings,
                linear_solver: inc.method,
                linear_iterations: inc.linear_iterations,
                linear_residual: inc.linear_residual,
            });
        }
        let next = checked(problem.objective_of(&res))?;
        objective_trace.push(next.total);
        let change = (current.total - next.total).abs() / current.total.max(f64::MIN_POSITIVE);
        current = next;
        if change < cfg.converge_tol {
            termination = Termination::Converged;
            break;
        }
    }

    let report = RefineReport {
        termination,
        iterations,
        tradeoffs: t,
        optimize_camera: cfg.optimize_camera,
        n_pixels: problem.n_pixels(),
        n_edges: problem.graph.edges.len(),
        n_pairs: problem.pairs.len(),
        dropped_pairs: problem.dropped_pairs,
        n_unknowns: problem.n_unknowns(cfg.optimize_camera),
        objective_trace,
        sigma_trace,
        steps,
        initial,
        final_objective: current,
        weight_histograms: WeightHistograms::of(&weights),
        max_orthonormality_error: max_ortho,
    };
    Ok((st, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{PixelCoord, Vec3};
    use crate::imaging::Correspondence;
    use crate::solver::problem::tests::random_instance;
    use proptest::prelude::*;

    #[test]
    fn median_examples() {
        assert_eq!(median(&mut [1.0, 2.0, 3.0, 4.0, 100.0]), Some(3.0));
        assert_eq!(median(&mut [4.0, 1.0, 3.0, 2.0]), Some(2.5));
        assert_eq!(median(&mut []), None);
    }

    fn flat_scene(w: usize, h: usize) -> (DepthMap, NormalMap, Mask) {
        (
            Grid::from_fn(w, h, |c, r| 2.0 + 0.05 * c as f64 + 0.02 * r as f64),
            Grid::filled(w, h, Vec3::new(0.0, 0.0, -1.0)),
            Grid::filled(w, h, true),
        )
    }

    #[test]
    fn weights_follow_the_scale() {
        let (d, n, m) = flat_scene(3, 3);
        let p = Problem::new(&d, &n, &m, &CorrespondenceSet::new(), &CameraPose::identity(), Tradeoffs::new(1.0, 0.0)).unwrap();
        let mut res = p.residuals(&p.initial_state());
        res.depth.iter_mut().for_each(|r| *r = 0.0);
        res.normal.iter_mut().for_each(|r| *r = 0.0);
        res.depth[0] = 1.0;
        res.depth[1] = 2.0;
        res.normal[0] = 3.0;
        // pooled list is mostly zero, so the scale vanishes
        let w = update_weights(&p, &res);
        assert!(w.sigma < SIGMA_FLOOR && w.depth.iter().all(|v| *v == 1.0));

        for r in res.normal.iter_mut() {
            *r = 2.0;
        }
        let w = update_weights(&p, &res);
        assert_eq!(w.sigma, 2.0);
        assert!((w.normal[5] - 1.0 / 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(w.depth[3], 1.0);
    }

    #[test]
    fn decoupled_step_has_closed_form() {
        let (d, n, m) = flat_scene(5, 4);
        let cam = CameraPose::new(crate::geometry::exp_map(&Vec3::new(0.1, 0.2, 0.0)), 0.2, 0.6).unwrap();
        let p = Problem::new(&d, &n, &m, &CorrespondenceSet::new(), &cam, Tradeoffs::new(0.0, 0.0)).unwrap();
        let mut st = p.initial_state();
        for (i, z) in st.z.iter_mut().enumerate() {
            *z *= 1.0 + 0.03 * (i as f64).sin();
        }
        let cfg = SolverConfig { optimize_camera: false, ..SolverConfig::with_tradeoffs(0.0, 0.0) };
        let inc = gauss_newton_step(&p, &st, &Weights::ones(&p), &cfg).unwrap();
        for i in 0..p.n_pixels() {
            let na = p.coord(i).ray(cam.s).norm();
            let expected = (p.target_ray_depth(i) - st.z[i] * na) / na;
            assert!((inc.dz[i] - expected).abs() <= 1e-12 * expected.abs().max(1e-3));
        }
    }

    #[test]
    fn zero_residuals_give_a_zero_step() {
        let (d, n, m) = flat_scene(4, 4);
        let p = Problem::new(&d, &n, &m, &CorrespondenceSet::new(), &CameraPose::identity(), Tradeoffs::new(0.0, 1.0)).unwrap();
        let inc = gauss_newton_step(&p, &p.initial_state(), &Weights::ones(&p), &SolverConfig::default()).unwrap();
        assert!(inc.dz.iter().all(|v| *v == 0.0));
        assert_eq!(inc.camera, Some([0.0; 4]));
    }

    fn prior_only_instance(optimize_camera: bool) -> (Problem, SolverState, SolverConfig) {
        let (d, n, m) = flat_scene(6, 5);
        let noisy = Grid::from_fn(6, 5, |c, r| d.get(c, r) * (1.0 + 0.2 * ((c * 5 + r * 3) as f64).sin()));
        let cam = CameraPose::new(crate::geometry::exp_map(&Vec3::new(0.0, 0.3, 0.1)), 0.1, 0.5).unwrap();
        let pairs: CorrespondenceSet =
            [Correspondence::new(PixelCoord::new(1.0, 1.0), PixelCoord::new(4.0, 1.0))].into_iter().collect();
        let p = Problem::new(&noisy, &n, &m, &pairs, &cam, Tradeoffs::new(0.0, 0.0)).unwrap();
        let mut st = p.initial_state();
        // start away from the prior
        for (i, z) in st.z.iter_mut().enumerate() {
            *z *= 1.0 + 0.25 * ((i * 7) as f64).cos();
        }
        let cfg = SolverConfig { optimize_camera, ..SolverConfig::with_tradeoffs(0.0, 0.0) };
        (p, st, cfg)
    }

    fn max_relative_depth_residual(p: &Problem, st: &SolverState) -> f64 {
        let r = p.residuals(st);
        (0..p.n_pixels()).map(|i| r.depth[i].abs() / p.target_ray_depth(i)).fold(0.0, f64::max)
    }

    #[test]
    fn without_normals_or_symmetry_the_prior_is_reached_in_one_step() {
        let (p, st, cfg) = prior_only_instance(false);
        let w = update_weights(&p, &p.residuals(&st));
        let inc = gauss_newton_step(&p, &st, &w, &cfg).unwrap();
        let next = st.stepped(&inc.dz, inc.camera, 1.0);
        assert!(max_relative_depth_residual(&p, &next) <= 1e-10);
    }

    #[test]
    fn with_a_free_camera_the_prior_is_reached_in_two_steps() {
        // s is unobservable here and only the damping fixes it, so one step
        // carries rounding noise of roughly eps / damping into s
        let (p, mut st, cfg) = prior_only_instance(true);
        for steps in 1..=2 {
            let w = update_weights(&p, &p.residuals(&st));
            let inc = gauss_newton_step(&p, &st, &w, &cfg).unwrap();
            st = st.stepped(&inc.dz, inc.camera, 1.0);
            let tol = if steps == 1 { 1e-7 } else { 1e-10 };
            assert!(max_relative_depth_residual(&p, &st) <= tol, "{steps}");
        }
    }

    #[test]
    fn noise_free_inputs_stop_immediately() {
        let (d, n, m) = flat_scene(6, 6);
        let out = refine(&d, &n, &m, &CorrespondenceSet::new(), &CameraPose::identity(), &SolverConfig::with_tradeoffs(0.0, 1.0)).unwrap();
        assert_eq!(out.report.termination, Termination::ZeroResidual);
        assert_eq!(out.depth, d);
    }

    #[test]
    fn surrogate_never_increases_and_rotation_stays_orthonormal() {
        let p = random_instance(11, 10, 30);
        let cfg = SolverConfig {
            max_outer_iters: 100,
            converge_tol: 0.0,
            ..SolverConfig::default()
        };
        let (st, report) = run(&p, &cfg).unwrap();
        assert!(st.is_feasible());
        for s in &report.steps {
            assert!(s.surrogate_after <= s.surrogate_before);
        }
        assert!(report.max_orthonormality_error <= 1e-9);
        assert!(report.final_objective.total < report.initial.total);
    }

    #[test]
    fn repeated_runs_are_bit_identical() {
        let p = random_instance(12, 9, 20);
        let a = run(&p, &SolverConfig::default()).unwrap();
        let b = run(&p, &SolverConfig::default()).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn weights_lie_in_the_unit_interval(seed in 0u64..10_000) {
            let p = random_instance(seed, 6, 8);
            let mut st = p.initial_state();
            st.camera.s *= 1.2;
            let w = update_weights(&p, &p.residuals(&st));
            prop_assert!(w.sigma > 0.0);
            for v in w.depth.iter().chain(&w.normal).chain(&w.symmetry) {
                prop_assert!(*v > 0.0 && *v <= 1.0);
            }
        }

        #[test]
        fn accepted_steps_do_not_increase_the_surrogate(seed in 0u64..10_000) {
            let p = random_instance(seed, 7, 12);
            let cfg = SolverConfig { max_outer_iters: 5, ..SolverConfig::default() };
            let (_, report) = run(&p, &cfg).unwrap();
            for s in &report.steps {
                prop_assert!(s.surrogate_after <= s.surrogate_before);
            }
        }
    }
}
