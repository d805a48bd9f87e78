//! Monte Carlo evaluation of solved policies: out-of-sample cost under the
//! true disturbance law, worst-case estimates under the solved adversary,
//! timing sweeps and controller comparisons.

use std::io::Write;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use crate::baselines::{solve_controller, Controller};
use crate::disturbance::{DisturbanceDataset, TrueDistribution};
use crate::error::{Error, Result};
use crate::forward::DIVERGENCE_LIMIT;
use crate::problem::OcpModel;
use crate::rng::{substream, Stream};
use crate::scalar::Real;
use crate::solver::{Solution, SolverConfig};
use crate::transport::hungarian;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub runs: usize,
    /// Disturbance paths simulated per run; the run cost is their average.
    pub samples_per_run: usize,
    pub seed: u64,
    /// A path collides when its clearance drops below this distance.
    pub collision_threshold: Option<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { runs: 200, samples_per_run: 50, seed: 0, collision_threshold: None }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 || self.samples_per_run == 0 {
            return Err(Error::Config("evaluation needs runs >= 1 and samples_per_run >= 1".into()));
        }
        if let Some(r) = self.collision_threshold {
            if !(r >= 0.0) {
                return Err(Error::Config("collision threshold must be nonnegative".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub cost: f64,
    /// Fraction of the run's paths that collided.
    pub collided: f64,
    pub diverged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub label: String,
    pub runs: Vec<RunOutcome>,
    pub mean_cost: f64,
    pub std_cost: f64,
    pub collision_rate: Option<f64>,
    pub diverged: usize,
    pub iter_time_mean: f64,
    pub iter_time_std: f64,
}

impl EvalReport {
    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Costs of the runs that stayed bounded.
    pub fn costs(&self) -> Vec<f64> {
        self.runs.iter().filter(|r| !r.diverged).map(|r| r.cost).collect()
    }
}

/// Mean and population standard deviation, reduced over sorted values so the
/// result does not depend on the order the runs finished in.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    let var = sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn blown<T: Real>(x: &DVector<T>) -> bool {
    x.iter().any(|v| !v.is_finite_value() || v.abs() > T::lit(DIVERGENCE_LIMIT))
}

/// Unpenalized cost of a stored state/control trajectory.
pub fn trajectory_cost<T: Real, M: OcpModel<T> + ?Sized>(model: &M, x: &[DVector<T>], u: &[DVector<T>]) -> T {
    let mut total = T::zero();
    for (t, (xt, ut)) in x.iter().zip(u).enumerate() {
        total += model.running_cost(xt, ut, t);
    }
    total + model.terminal_cost(&x[u.len()])
}

struct PathOutcome {
    cost: f64,
    min_clearance: Option<f64>,
    diverged: bool,
}

/// Closed-loop rollout of the control policy from the reference initial
/// state with disturbances produced by `draw(t, x)`.
fn simulate<T, M, F>(model: &M, solution: &Solution<T>, mut draw: F) -> PathOutcome
where
    T: Real,
    M: OcpModel<T> + ?Sized,
    F: FnMut(usize, &DVector<T>) -> (DVector<T>, T),
{
    let horizon = solution.policies.len();
    let mut x = solution.reference.x[0].clone();
    let mut cost = T::zero();
    let mut min_clearance: Option<f64> = None;
    let note = |x: &DVector<T>, m: &mut Option<f64>| {
        if let Some(c) = model.clearance(x) {
            let c = c.as_f64();
            *m = Some(m.map_or(c, |v: f64| v.min(c)));
        }
    };
    for t in 0..horizon {
        note(&x, &mut min_clearance);
        let u = solution.control(model, t, &x);
        let (w, offset) = draw(t, &x);
        cost += model.running_cost(&x, &u, t) - offset;
        x = model.dynamics(&x, &u, &w, t);
        if blown(&x) {
            return PathOutcome { cost: f64::INFINITY, min_clearance, diverged: true };
        }
    }
    note(&x, &mut min_clearance);
    cost += model.terminal_cost(&x);
    let cost = cost.as_f64();
    PathOutcome { cost, min_clearance, diverged: !cost.is_finite() }
}

/// Rolls the control policy under fresh draws from `true_dist` and reports
/// the unpenalized total cost. Run `r` uses evaluation substream `r`.
pub fn out_of_sample<T: Real, M: OcpModel<T> + ?Sized>(
    model: &M,
    solution: &Solution<T>,
    true_dist: &TrueDistribution,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    cfg.validate()?;
    let dims = model.dims();
    if solution.policies.len() != dims.horizon {
        return Err(Error::Dimension { context: "policies", expected: dims.horizon, actual: solution.policies.len() });
    }
    if true_dist.dim() != dims.n_w {
        return Err(Error::Dimension { context: "true distribution", expected: dims.n_w, actual: true_dist.dim() });
    }
    let sampler = true_dist.sampler()?;
    let runs: Vec<RunOutcome> = (0..cfg.runs)
        .into_par_iter()
        .map(|r| {
            let mut rng = substream(cfg.seed, Stream::Evaluation, r as u64);
            let mut total = 0.0;
            let mut collisions = 0usize;
            for _ in 0..cfg.samples_per_run {
                let path = simulate(model, solution, |_, _| (sampler.draw(&mut rng), T::zero()));
                if path.diverged {
                    return RunOutcome { cost: f64::INFINITY, collided: 0.0, diverged: true };
                }
                total += path.cost;
                if let (Some(thr), Some(c)) = (cfg.collision_threshold, path.min_clearance) {
                    collisions += usize::from(c < thr);
                }
            }
            let n = cfg.samples_per_run as f64;
            RunOutcome { cost: total / n, collided: collisions as f64 / n, diverged: false }
        })
        .collect();
    Ok(summarize(
        runs,
        solution,
        cfg.collision_threshold.is_some() && model.clearance(&solution.reference.x[0]).is_some(),
    ))
}

fn summarize<T: Real>(runs: Vec<RunOutcome>, solution: &Solution<T>, with_collisions: bool) -> EvalReport {
    let finite: Vec<f64> = runs.iter().filter(|r| !r.diverged).map(|r| r.cost).collect();
    let (mean_cost, std_cost) = mean_std(&finite);
    let collision_rate = with_collisions.then(|| {
        let c: Vec<f64> = runs.iter().filter(|r| !r.diverged).map(|r| r.collided).collect();
        mean_std(&c).0
    });
    let (iter_time_mean, iter_time_std) = mean_std(&solution.timing());
    EvalReport {
        label: String::new(),
        diverged: runs.len() - finite.len(),
        runs,
        mean_cost,
        std_cost,
        collision_rate,
        iter_time_mean,
        iter_time_std,
    }
}

/// Writes `controller, run, cost, collided, diverged`. Wall-clock figures
/// go to [`write_eval_timing_csv`] so that this file is reproducible.
pub fn write_eval_csv<W: Write>(reports: &[EvalReport], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["controller", "run", "cost", "collided", "diverged"])?;
    for rep in reports {
        for (i, r) in rep.runs.iter().enumerate() {
            w.write_record([
                rep.label.clone(),
                i.to_string(),
                format!("{:e}", r.cost),
                format!("{:e}", r.collided),
                u8::from(r.diverged).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes `controller, wall_time_iter_mean, wall_time_iter_std`.
pub fn write_eval_timing_csv<W: Write>(reports: &[EvalReport], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["controller", "wall_time_iter_mean", "wall_time_iter_std"])?;
    for rep in reports {
        w.write_record([rep.label.clone(), format!("{:e}", rep.iter_time_mean), format!("{:e}", rep.iter_time_std)])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    /// Sample standard deviation over `sqrt(runs)`.
    pub std_err: f64,
    pub values: Vec<f64>,
    pub diverged: usize,
}

fn estimate(values: Vec<f64>) -> Result<McEstimate> {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return Err(Error::Config("every Monte Carlo rollout diverged".into()));
    }
    let (mean, pop_std) = mean_std(&finite);
    let n = finite.len() as f64;
    let std_err = if finite.len() > 1 { pop_std * (n / (n - 1.0)).sqrt() / n.sqrt() } else { 0.0 };
    Ok(McEstimate { mean, std_err, diverged: values.len() - finite.len(), values })
}

/// State-dependent atoms `w_bar + h_i + H dx` of the solved adversary.
pub fn adversary_atoms<T: Real>(solution: &Solution<T>, t: usize, x: &DVector<T>) -> Vec<DVector<T>> {
    let p = &solution.policies[t];
    let shift = &solution.reference.w[t] + &p.gain_h * (x - &solution.reference.x[t]);
    p.h_i.iter().map(|h| &shift + h).collect()
}

fn matching<T: Real>(atoms: &[DVector<T>], data: &[DVector<T>]) -> (Vec<usize>, T) {
    let n = atoms.len();
    let cost = DMatrix::from_fn(n, n, |i, j| (&atoms[i] - &data[j]).norm_squared());
    let (assignment, total) = hungarian(&cost);
    (assignment, total / T::lit(n as f64))
}

/// Pulls each atom toward its optimally matched sample so the uniform
/// distributions are at most `theta` apart in W2.
pub fn project_atoms<T: Real>(atoms: &[DVector<T>], data: &[DVector<T>], theta: T) -> Vec<DVector<T>> {
    let (assignment, w2_sq) = matching(atoms, data);
    let w2 = w2_sq.sqrt();
    if w2 <= theta {
        return atoms.to_vec();
    }
    let s = theta / w2;
    atoms.iter().zip(&assignment).map(|(a, &j)| &data[j] + (a - &data[j]) * s).collect()
}

fn require_adversary<T: Real>(solution: &Solution<T>, dataset: &DisturbanceDataset<T>) -> Result<()> {
    let n = dataset.sample_count();
    if solution.policies.iter().any(|p| p.h_i.len() != n) {
        return Err(Error::Config("the solution carries no adversary policy for this dataset".into()));
    }
    Ok(())
}

/// Estimates `sup J_lambda` by rolling the solved policy pair: at each step
/// an atom of the adversary's distribution is drawn uniformly and
/// `lambda W2^2` between that distribution and the data is charged.
pub fn estimate_sup_j_lambda<T: Real, M: OcpModel<T> + ?Sized>(
    model: &M,
    solution: &Solution<T>,
    dataset: &DisturbanceDataset<T>,
    lambda: f64,
    runs: usize,
    seed: u64,
) -> Result<McEstimate> {
    require_adversary(solution, dataset)?;
    let lambda = T::lit(lambda);
    let values: Vec<f64> = (0..runs.max(1))
        .into_par_iter()
        .map(|r| {
            let mut rng = substream(seed, Stream::Tuning, r as u64);
            simulate(model, solution, |t, x| {
                let atoms = adversary_atoms(solution, t, x);
                let (_, w2_sq) = matching(&atoms, dataset.samples_at(t));
                let i = rng.random_range(0..atoms.len());
                (atoms[i].clone(), lambda * w2_sq)
            })
            .cost
        })
        .collect();
    estimate(values)
}

/// Expected unpenalized cost when the adversary plays the solved atoms
/// projected into the W2 ball of radius `theta` around the data.
pub fn estimate_worst_case_projected<T: Real, M: OcpModel<T> + ?Sized>(
    model: &M,
    solution: &Solution<T>,
    dataset: &DisturbanceDataset<T>,
    theta: f64,
    runs: usize,
    seed: u64,
) -> Result<McEstimate> {
    require_adversary(solution, dataset)?;
    let theta = T::lit(theta);
    let values: Vec<f64> = (0..runs.max(1))
        .into_par_iter()
        .map(|r| {
            let mut rng = substream(seed, Stream::Evaluation, r as u64);
            simulate(model, solution, |t, x| {
                let atoms = project_atoms(&adversary_atoms(solution, t, x), dataset.samples_at(t), theta);
                let i = rng.random_range(0..atoms.len());
                (atoms[i].clone(), T::zero())
            })
            .cost
        })
        .collect();
    estimate(values)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingRow {
    pub size: usize,
    pub iter_time_mean: f64,
    pub iter_time_std: f64,
    pub iterations: usize,
    pub error: Option<String>,
}

/// Solves once per size and records per-iteration wall times. Failures are
/// recorded in the row and the sweep continues.
pub fn timing_sweep<T, F>(sizes: &[usize], mut solve_at: F) -> Vec<TimingRow>
where
    T: Real,
    F: FnMut(usize) -> Result<Solution<T>>,
{
    sizes
        .iter()
        .map(|&size| match solve_at(size) {
            Ok(sol) => {
                let (iter_time_mean, iter_time_std) = mean_std(&sol.timing());
                TimingRow { size, iter_time_mean, iter_time_std, iterations: sol.iterations, error: None }
            }
            Err(e) => TimingRow {
                size,
                iter_time_mean: f64::NAN,
                iter_time_std: f64::NAN,
                iterations: 0,
                error: Some(e.to_string()),
            },
        })
        .collect()
}

/// Writes `size, iter_time_mean, iter_time_std`.
pub fn write_timing_csv<W: Write>(rows: &[TimingRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["size", "iter_time_mean", "iter_time_std"])?;
    for r in rows {
        w.write_record([r.size.to_string(), format!("{:e}", r.iter_time_mean), format!("{:e}", r.iter_time_std)])?;
    }
    w.flush()?;
    Ok(())
}

/// Least-squares slope of `ln y` against `ln x`, ignoring non-positive points.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let logs: Vec<(f64, f64)> =
        points.iter().filter(|(x, y)| *x > 0.0 && *y > 0.0 && y.is_finite()).map(|(x, y)| (x.ln(), y.ln())).collect();
    if logs.len() < 2 {
        return None;
    }
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = logs.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = logs.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Seconds elapsed while running `f`.
pub fn timed<R>(f: impl FnOnce() -> R) -> (R, f64) {
    let start = Instant::now();
    let r = f();
    (r, start.elapsed().as_secs_f64())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub controller: Controller,
    /// Attenuation weight used by the minimax baseline.
    pub gamma: Option<f64>,
    pub converged: bool,
    pub report: std::result::Result<EvalReport, String>,
}

/// Solves each controller on the same dataset and evaluates it with the
/// same seed. A failing controller yields a row carrying the error.
#[allow(clippy::too_many_arguments)]
pub fn compare_controllers<T: Real, M: OcpModel<T> + ?Sized>(
    model: &M,
    x0: &DVector<T>,
    dataset: &DisturbanceDataset<T>,
    true_dist: &TrueDistribution,
    controllers: &[Controller],
    solver: &SolverConfig,
    eval: &EvalConfig,
) -> Result<Vec<ComparisonRow>> {
    if controllers.len() < 2 {
        return Err(Error::Config("comparison needs at least two controllers".into()));
    }
    Ok(controllers
        .iter()
        .map(|&c| match solve_controller(model, x0, dataset, c, solver) {
            Ok((sol, gamma)) => ComparisonRow {
                controller: c,
                gamma,
                converged: sol.converged,
                report: out_of_sample(model, &sol, true_dist, eval)
                    .map(|r| r.with_label(c.label()))
                    .map_err(|e| e.to_string()),
            },
            Err(e) => ComparisonRow { controller: c, gamma: None, converged: false, report: Err(e.to_string()) },
        })
        .collect())
}

/// Writes `controller, gamma, converged, mean_cost, std_cost,
/// collision_rate, diverged, status`.
pub fn write_comparison_csv<W: Write>(rows: &[ComparisonRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "controller",
        "gamma",
        "converged",
        "mean_cost",
        "std_cost",
        "collision_rate",
        "diverged",
        "status",
    ])?;
    for row in rows {
        let gamma = row.gamma.map_or(String::new(), |g| format!("{g:e}"));
        match &row.report {
            Ok(r) => w.write_record([
                row.controller.label().to_string(),
                gamma,
                u8::from(row.converged).to_string(),
                format!("{:e}", r.mean_cost),
                format!("{:e}", r.std_cost),
                r.collision_rate.map_or(String::new(), |c| format!("{c:e}")),
                r.diverged.to_string(),
                "ok".to_string(),
            ])?,
            Err(e) => w.write_record([
                row.controller.label().to_string(),
                gamma,
                u8::from(row.converged).to_string(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                format!("failed: {e}"),
            ])?,
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::solve_box_ddp;
    use crate::benchmarks::LinearQuadratic;
    use crate::disturbance::draw_dataset;
    use crate::problem::Dims;
    use crate::solver::solve;

    fn lq() -> (LinearQuadratic<f64>, DVector<f64>) {
        (LinearQuadratic::random(Dims::new(3, 2, 2, 10).unwrap(), 2), DVector::from_vec(vec![1.0, -1.0, 0.5]))
    }

    #[test]
    fn zero_disturbance_matches_deterministic_rollout() {
        let (model, x0) = lq();
        let sol = solve_box_ddp(&model, &x0, &SolverConfig::default()).unwrap();
        let cfg = EvalConfig { runs: 3, samples_per_run: 2, ..EvalConfig::default() };
        let rep = out_of_sample(&model, &sol, &TrueDistribution::dirac(vec![0.0, 0.0]), &cfg).unwrap();
        let direct = trajectory_cost(&model, &sol.nominal.x, &sol.nominal.u);
        assert!((rep.mean_cost - direct).abs() <= 1e-10 * direct.abs().max(1.0));
        assert_eq!(rep.std_cost, 0.0);
        assert!(rep.collision_rate.is_none());
    }

    #[test]
    fn single_run_has_zero_spread() {
        let (model, x0) = lq();
        let sol = solve_box_ddp(&model, &x0, &SolverConfig::default()).unwrap();
        let cfg = EvalConfig { runs: 1, samples_per_run: 1, ..EvalConfig::default() };
        let rep = out_of_sample(&model, &sol, &TrueDistribution::isotropic_gaussian(0.0, 0.1, 2), &cfg).unwrap();
        assert_eq!(rep.std_cost, 0.0);
    }

    #[test]
    fn reports_are_reproducible_and_mean_is_bracketed() {
        let (model, x0) = lq();
        let sol = solve_box_ddp(&model, &x0, &SolverConfig::default()).unwrap();
        let cfg = EvalConfig { runs: 16, samples_per_run: 3, seed: 9, collision_threshold: None };
        let dist = TrueDistribution::uniform_box(-0.2, 0.2, 2);
        let a = out_of_sample(&model, &sol, &dist, &cfg).unwrap();
        let b = out_of_sample(&model, &sol, &dist, &cfg).unwrap();
        assert_eq!(a.mean_cost.to_bits(), b.mean_cost.to_bits());
        assert_eq!(a.runs, b.runs);
        let costs = a.costs();
        let lo = costs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = costs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(lo <= a.mean_cost && a.mean_cost <= hi);
    }

    #[test]
    fn evaluation_stream_differs_from_dataset_stream() {
        assert_ne!(Stream::Evaluation.label(), Stream::Dataset.label());
        let dist = TrueDistribution::isotropic_gaussian(0.0, 1.0, 2);
        let ds = draw_dataset::<f64>(&dist, 1, 1, 5).unwrap();
        let mut rng = substream(5, Stream::Evaluation, 0);
        let fresh: DVector<f64> = dist.sampler().unwrap().draw(&mut rng);
        assert_ne!(&fresh, ds.sample(0, 0));
    }

    #[test]
    fn diverging_runs_are_counted() {
        let model = LinearQuadratic::new(
            nalgebra::dmatrix![3.0],
            nalgebra::dmatrix![1.0],
            nalgebra::dmatrix![1.0],
            nalgebra::dmatrix![1.0],
            nalgebra::dmatrix![1.0],
            nalgebra::dmatrix![1.0],
            10,
        )
        .unwrap()
        .with_bounds(DVector::from_element(1, -1e-3), DVector::from_element(1, 1e-3))
        .unwrap();
        let sol = solve_box_ddp(
            &model,
            &DVector::from_element(1, 1.0),
            &SolverConfig { max_iters: 3, ..SolverConfig::default() },
        )
        .unwrap();
        let cfg = EvalConfig { runs: 4, samples_per_run: 1, ..EvalConfig::default() };
        let rep = out_of_sample(&model, &sol, &TrueDistribution::dirac(vec![1e4]), &cfg).unwrap();
        assert_eq!(rep.diverged, 4);
        assert!(rep.mean_cost.is_nan());
    }

    #[test]
    fn projection_lands_on_the_ball() {
        let data = vec![DVector::from_vec(vec![0.0, 0.0]), DVector::from_vec(vec![1.0, 0.0])];
        let atoms = vec![DVector::from_vec(vec![1.0, 2.0]), DVector::from_vec(vec![0.0, 2.0])];
        let projected = project_atoms(&atoms, &data, 0.5);
        let (_, w2_sq): (_, f64) = matching(&projected, &data);
        assert!((w2_sq.sqrt() - 0.5).abs() < 1e-12);
        let inside = project_atoms(&atoms, &data, 10.0);
        assert_eq!(inside, atoms);
    }

    #[test]
    fn sup_estimate_is_reproducible_and_requires_adversary() {
        let (model, x0) = lq();
        let ds = draw_dataset(&TrueDistribution::isotropic_gaussian(0.0, 0.01, 2), 10, 4, 3).unwrap();
        let sol = solve(&model, &x0, &ds, &SolverConfig { lambda: 100.0, ..SolverConfig::default() }).unwrap();
        let a = estimate_sup_j_lambda(&model, &sol, &ds, 100.0, 20, 1).unwrap();
        let b = estimate_sup_j_lambda(&model, &sol, &ds, 100.0, 20, 1).unwrap();
        assert_eq!(a, b);
        assert!(a.std_err >= 0.0);
        let plain = solve_box_ddp(&model, &x0, &SolverConfig::default()).unwrap();
        assert!(estimate_sup_j_lambda(&model, &plain, &ds, 100.0, 2, 1).is_err());
    }

    #[test]
    fn projected_worst_case_is_below_penalized_bound_on_lq() {
        let (model, x0) = lq();
        let ds = draw_dataset(&TrueDistribution::isotropic_gaussian(0.0, 0.01, 2), 10, 4, 3).unwrap();
        let lambda = 100.0;
        let theta = 0.1;
        let sol = solve(&model, &x0, &ds, &SolverConfig { lambda, ..SolverConfig::default() }).unwrap();
        let sup = estimate_sup_j_lambda(&model, &sol, &ds, lambda, 200, 1).unwrap();
        let worst = estimate_worst_case_projected(&model, &sol, &ds, theta, 200, 1).unwrap();
        let bound = lambda * 10.0 * theta * theta + sup.mean;
        assert!(worst.mean <= bound + 3.0 * (sup.std_err + worst.std_err), "{} vs {}", worst.mean, bound);
    }

    #[test]
    fn slope_of_power_law() {
        let pts: Vec<(f64, f64)> = [4.0, 8.0, 16.0, 32.0].iter().map(|&x: &f64| (x, 0.5 * x.powf(2.5))).collect();
        assert!((loglog_slope(&pts).unwrap() - 2.5).abs() < 1e-12);
        assert!(loglog_slope(&pts[..1]).is_none());
    }

    #[test]
    fn sweep_records_failures_and_continues() {
        let (model, x0) = lq();
        let rows = timing_sweep(&[1, 2, 3], |s| {
            if s == 2 {
                Err(Error::Config("boom".into()))
            } else {
                solve_box_ddp(&model, &x0, &SolverConfig::default())
            }
        });
        assert_eq!(rows.len(), 3);
        assert!(rows[0].iter_time_mean > 0.0 && rows[2].iter_time_mean > 0.0);
        assert_eq!(rows[1].error.as_deref(), Some("invalid configuration: boom"));
    }

    #[test]
    fn duplicate_controllers_give_identical_rows() {
        let (model, x0) = lq();
        let ds = draw_dataset(&TrueDistribution::isotropic_gaussian(0.0, 0.01, 2), 10, 4, 3).unwrap();
        let cfg = EvalConfig { runs: 8, samples_per_run: 2, seed: 4, collision_threshold: None };
        let rows = compare_controllers(
            &model,
            &x0,
            &ds,
            &TrueDistribution::isotropic_gaussian(0.0, 0.01, 2),
            &[Controller::DrDdp, Controller::DrDdp],
            &SolverConfig { lambda: 100.0, ..SolverConfig::default() },
            &cfg,
        )
        .unwrap();
        let a = rows[0].report.as_ref().unwrap();
        let b = rows[1].report.as_ref().unwrap();
        assert_eq!(a.runs, b.runs);
        let mut buf = Vec::new();
        write_comparison_csv(&rows, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 3);
    }
}
