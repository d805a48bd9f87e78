use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use drddp::baselines::solve_controller;
use drddp::evaluation::{
    compare_controllers, loglog_slope, out_of_sample, timing_sweep, write_comparison_csv, write_eval_csv,
    write_eval_timing_csv, write_timing_csv, ComparisonRow,
};
use drddp::solver::tune_lambda;
use drddp::{Controller, SolutionF64};

use crate::config::RunConfig;
use crate::manifest::{self, Manifest};
use crate::CliError;

/// Resolved invocation shared by every command.
pub struct Run {
    pub cfg: RunConfig,
    pub out: PathBuf,
    pub seed: u64,
    pub controller: Controller,
}

impl Run {
    fn start(&self, command: &str, artifacts: &[&str]) -> Result<(), CliError> {
        std::fs::create_dir_all(&self.out)?;
        let label = self.controller.label();
        let m = Manifest {
            tool: "drddp",
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed: self.seed,
            controller: label,
            input_hash: manifest::input_hash(command, self.seed, label, &self.cfg)?,
            created_unix: manifest::now_unix(),
            artifacts: artifacts.iter().map(|a| a.to_string()).collect(),
            config: &self.cfg,
        };
        manifest::write(&self.out, &m)
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>, CliError> {
        Ok(BufWriter::new(File::create(self.out.join(name))?))
    }
}

/// Writes `t, x0.., u0.., w0..`; the terminal row leaves inputs empty.
pub fn write_trajectory(path: &Path, sol: &SolutionF64) -> Result<(), CliError> {
    let nom = &sol.nominal;
    let (n_x, n_u, n_w) = (nom.x[0].len(), nom.u.first().map_or(0, |u| u.len()), nom.w.first().map_or(0, |w| w.len()));
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["t".to_string()];
    header.extend((0..n_x).map(|i| format!("x{i}")));
    header.extend((0..n_u).map(|i| format!("u{i}")));
    header.extend((0..n_w).map(|i| format!("w{i}")));
    w.write_record(&header)?;
    for (t, x) in nom.x.iter().enumerate() {
        let mut row = vec![t.to_string()];
        row.extend(x.iter().map(|v| format!("{v:e}")));
        match (nom.u.get(t), nom.w.get(t)) {
            (Some(u), Some(wt)) => {
                row.extend(u.iter().map(|v| format!("{v:e}")));
                row.extend(wt.iter().map(|v| format!("{v:e}")));
            }
            _ => row.extend(std::iter::repeat_n(String::new(), n_u + n_w)),
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `t, K_norm, k_norm, H_norm, h_bar_norm` (Frobenius/Euclidean).
fn write_policy_summary(path: &Path, sol: &SolutionF64) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t", "K_norm", "k_norm", "H_norm", "h_bar_norm"])?;
    for (t, p) in sol.policies.iter().enumerate() {
        w.write_record([
            t.to_string(),
            format!("{:e}", p.gain_k.norm()),
            format!("{:e}", p.k.norm()),
            format!("{:e}", p.gain_h.norm()),
            format!("{:e}", p.h_bar.norm()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_iteration_times(path: &Path, sol: &SolutionF64) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iteration", "wall_time"])?;
    for r in &sol.history {
        w.write_record([r.iteration.to_string(), format!("{:e}", r.wall_time)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn solve(run: &Run) -> Result<(), CliError> {
    run.start("solve", &["traj.csv", "iters.csv", "policy.csv", "timing.csv"])?;
    let inst = run.cfg.instance(run.seed, None)?;
    let ds = inst.dataset(&run.cfg, run.seed)?;
    let (sol, gamma) =
        solve_controller(inst.model(), &inst.initial_state(), &ds, run.controller, &run.cfg.solver_config(run.seed))?;
    write_trajectory(&run.out.join("traj.csv"), &sol)?;
    sol.write_iterations_csv(run.create("iters.csv")?)?;
    write_policy_summary(&run.out.join("policy.csv"), &sol)?;
    write_iteration_times(&run.out.join("timing.csv"), &sol)?;
    println!(
        "{}: {} iterations, final cost {:.6e}{}{}",
        run.controller,
        sol.iterations,
        sol.final_cost(),
        gamma.map_or(String::new(), |g| format!(", gamma {g:e}")),
        if sol.converged { "" } else { " (not converged)" }
    );
    if sol.converged {
        Ok(())
    } else {
        Err(CliError::NotConverged)
    }
}

pub fn tune(run: &Run, grid: Option<Vec<f64>>) -> Result<(), CliError> {
    run.start("tune", &["bounds.csv"])?;
    let inst = run.cfg.instance(run.seed, None)?;
    let ds = inst.dataset(&run.cfg, run.seed)?;
    let base = run.cfg.solver_config(run.seed);
    let grid = grid.unwrap_or_else(|| run.cfg.tune.grid.clone());
    let result = tune_lambda(
        inst.model(),
        &inst.initial_state(),
        &ds,
        base.theta,
        &grid,
        run.cfg.tune.eval_runs,
        run.seed,
        &base,
    )?;
    result.write_csv(run.create("bounds.csv")?)?;
    println!("lambda* = {:e}", result.lambda_star);
    Ok(())
}

pub fn eval(run: &Run, controllers: Vec<Controller>) -> Result<(), CliError> {
    run.start("eval", &["eval.csv", "summary.csv", "timing.csv"])?;
    let inst = run.cfg.instance(run.seed, None)?;
    let ds = inst.dataset(&run.cfg, run.seed)?;
    let solver = run.cfg.solver_config(run.seed);
    let eval = run.cfg.eval_config(run.seed);
    let dist = inst.true_distribution();
    let x0 = inst.initial_state();
    let rows = if controllers.len() >= 2 {
        compare_controllers(inst.model(), &x0, &ds, &dist, &controllers, &solver, &eval)?
    } else {
        let c = controllers[0];
        let (sol, gamma) = solve_controller(inst.model(), &x0, &ds, c, &solver)?;
        let report = out_of_sample(inst.model(), &sol, &dist, &eval)?.with_label(c.label());
        vec![ComparisonRow { controller: c, gamma, converged: sol.converged, report: Ok(report) }]
    };
    let reports: Vec<_> = rows.iter().filter_map(|r| r.report.as_ref().ok().cloned()).collect();
    write_eval_csv(&reports, run.create("eval.csv")?)?;
    write_comparison_csv(&rows, run.create("summary.csv")?)?;
    write_eval_timing_csv(&reports, run.create("timing.csv")?)?;
    for row in &rows {
        match &row.report {
            Ok(r) => println!(
                "{:<12} mean {:.6e} std {:.6e}{}",
                row.controller,
                r.mean_cost,
                r.std_cost,
                r.collision_rate.map_or(String::new(), |c| format!(" collisions {c:.3}"))
            ),
            Err(e) => println!("{:<12} failed: {e}", row.controller),
        }
    }
    if rows.iter().all(|r| r.report.is_err()) {
        return Err(CliError::Numerical("every controller failed".into()));
    }
    Ok(())
}

pub fn bench(run: &Run, sizes: Option<Vec<usize>>) -> Result<(), CliError> {
    let sizes = sizes.unwrap_or_else(|| run.cfg.bench.sizes.clone());
    if sizes.is_empty() || sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::Config("sizes must be non-empty and strictly ascending".into()));
    }
    // Fail on a non-scalable benchmark before writing anything.
    run.cfg.instance(run.seed, Some(sizes[0]))?;
    run.start("bench", &["bench.csv"])?;
    let solver = run.cfg.solver_config(run.seed);
    let rows = timing_sweep(&sizes, |size| {
        let inst = run.cfg.instance(run.seed, Some(size)).map_err(|e| drddp::Error::Config(e.to_string()))?;
        let ds = inst.dataset(&run.cfg, run.seed).map_err(|e| drddp::Error::Config(e.to_string()))?;
        solve_controller(inst.model(), &inst.initial_state(), &ds, run.controller, &solver).map(|(s, _)| s)
    });
    write_timing_csv(&rows, run.create("bench.csv")?)?;
    for r in &rows {
        match &r.error {
            None => {
                println!("size {:>4}: {:.4e} s/iteration over {} iterations", r.size, r.iter_time_mean, r.iterations)
            }
            Some(e) => println!("size {:>4}: failed: {e}", r.size),
        }
    }
    let points: Vec<_> = rows.iter().map(|r| (r.size as f64, r.iter_time_mean)).collect();
    if let Some(slope) = loglog_slope(&points) {
        println!("log-log slope {slope:.3}");
    }
    Ok(())
}
