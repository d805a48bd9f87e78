//! Run configuration file: TOML with one section per pipeline stage.

use std::path::{Path, PathBuf};

use drddp::benchmarks::{CarBenchmark, CarParams, KuramotoBenchmark, KuramotoParams, LinearQuadratic};
use drddp::problem::Dims;
use drddp::{Controller, Dataset, OcpModel, SolverConfig, TrueDistribution};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Root seed for every random stream.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_controller")]
    pub controller: String,
    /// Worker threads for evaluation and tuning; 0 uses every core.
    #[serde(default)]
    pub threads: usize,
    pub benchmark: BenchmarkConfig,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub tune: TuneSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub bench: BenchSection,
}

/// The tagged benchmark table is buffered before it is checked, so its
/// errors point at the table header; report the offending key's line instead.
fn describe_toml_error(text: &str, err: &toml::de::Error) -> String {
    let message = err.message();
    let key = message.strip_prefix("unknown field `").and_then(|rest| rest.split('`').next());
    let line = key.and_then(|key| {
        text.lines()
            .position(|l| l.trim_start().strip_prefix(key).is_some_and(|rest| rest.trim_start().starts_with('=')))
    });
    match line {
        Some(i) => format!("line {}: {message}", i + 1),
        None => err.to_string(),
    }
}

fn default_controller() -> String {
    "dr-ddp".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BenchmarkConfig {
    Car(CarParams),
    Kuramoto(KuramotoParams),
    Lq(LqParams),
}

/// Random linear-quadratic instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LqParams {
    pub n_x: usize,
    pub n_u: usize,
    pub n_w: usize,
    pub horizon: usize,
    pub x0: Option<Vec<f64>>,
    pub noise_variance: f64,
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
}

impl Default for LqParams {
    fn default() -> Self {
        LqParams { n_x: 4, n_u: 2, n_w: 2, horizon: 20, x0: None, noise_variance: 0.01, lower: None, upper: None }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Samples per step; defaults to the benchmark's value.
    pub samples: Option<usize>,
    /// Read the dataset from this CSV instead of sampling it.
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    /// Defaults to the benchmark's value.
    pub lambda: Option<f64>,
    pub theta: f64,
    pub max_iters: usize,
    pub cost_tolerance: f64,
    pub gradient_tolerance: f64,
    pub gauss_newton: bool,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverConfig::default();
        SolverSection {
            lambda: None,
            theta: d.theta,
            max_iters: d.max_iters,
            cost_tolerance: d.cost_tolerance,
            gradient_tolerance: d.gradient_tolerance,
            gauss_newton: d.gauss_newton,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuneSection {
    pub grid: Vec<f64>,
    pub eval_runs: usize,
}

impl Default for TuneSection {
    fn default() -> Self {
        TuneSection { grid: vec![1e2, 1e3, 1e4, 1e5], eval_runs: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub runs: usize,
    pub samples_per_run: usize,
    /// Defaults to the obstacle radius for the car.
    pub collision_threshold: Option<f64>,
    pub controllers: Vec<String>,
    /// Fixed minimax attenuation; calibrated when absent.
    pub minimax_gamma: Option<f64>,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            runs: 200,
            samples_per_run: 50,
            collision_threshold: None,
            controllers: vec!["dr-ddp".into(), "box-ddp".into(), "minimax-ddp".into()],
            minimax_gamma: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub sizes: Vec<usize>,
}

impl Default for BenchSection {
    fn default() -> Self {
        BenchSection { sizes: vec![4, 8, 16, 32, 64] }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<(Self, String), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg = Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        Ok((cfg, text))
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(describe_toml_error(text, &e)))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.controller_for(&self.controller)?;
        for c in &self.eval.controllers {
            self.controller_for(c)?;
        }
        if self.eval.controllers.is_empty() {
            return Err(CliError::Config("eval.controllers must name at least one controller".into()));
        }
        if self.bench.sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CliError::Config("bench.sizes must be strictly ascending".into()));
        }
        self.solver_config(self.seed).validate()?;
        self.eval_config(self.seed).validate()?;
        if self.data.samples == Some(0) {
            return Err(CliError::Config("data.samples must be positive".into()));
        }
        Ok(())
    }

    pub fn controller_for(&self, name: &str) -> Result<Controller, CliError> {
        let c: Controller = name.parse()?;
        Ok(match c {
            Controller::MinimaxDdp { .. } => Controller::MinimaxDdp { gamma: self.eval.minimax_gamma },
            other => other,
        })
    }

    pub fn default_lambda(&self) -> f64 {
        match self.benchmark {
            BenchmarkConfig::Car(_) => 9000.0,
            BenchmarkConfig::Kuramoto(_) => 1e4,
            BenchmarkConfig::Lq(_) => 100.0,
        }
    }

    pub fn solver_config(&self, seed: u64) -> SolverConfig {
        let s = &self.solver;
        SolverConfig {
            lambda: s.lambda.unwrap_or_else(|| self.default_lambda()),
            theta: s.theta,
            max_iters: s.max_iters,
            cost_tolerance: s.cost_tolerance,
            gradient_tolerance: s.gradient_tolerance,
            gauss_newton: s.gauss_newton,
            seed,
            ..SolverConfig::default()
        }
    }

    pub fn eval_config(&self, seed: u64) -> drddp::EvalConfig {
        let threshold = self.eval.collision_threshold.or(match &self.benchmark {
            BenchmarkConfig::Car(p) => Some(p.r_obs),
            _ => None,
        });
        drddp::EvalConfig {
            runs: self.eval.runs,
            samples_per_run: self.eval.samples_per_run,
            seed,
            collision_threshold: threshold,
        }
    }

    pub fn sample_count(&self) -> usize {
        self.data.samples.unwrap_or(match self.benchmark {
            BenchmarkConfig::Car(_) => 10,
            BenchmarkConfig::Kuramoto(_) => 50,
            BenchmarkConfig::Lq(_) => 5,
        })
    }

    /// Builds the problem instance. `size` overrides the benchmark's scaling
    /// dimension (oscillator count or state dimension).
    pub fn instance(&self, seed: u64, size: Option<usize>) -> Result<Instance, CliError> {
        Ok(match &self.benchmark {
            BenchmarkConfig::Car(p) => {
                if size.is_some() {
                    return Err(CliError::Config("the car benchmark has no size parameter to sweep".into()));
                }
                Instance::Car(CarBenchmark::new(p.clone())?)
            }
            BenchmarkConfig::Kuramoto(p) => {
                let mut p = p.clone();
                if let Some(l) = size {
                    p.oscillators = l;
                }
                Instance::Kuramoto(KuramotoBenchmark::new(p, seed)?)
            }
            BenchmarkConfig::Lq(p) => {
                let mut p = p.clone();
                if let Some(n) = size {
                    p.n_x = n;
                    p.x0 = None;
                }
                let dims = Dims::new(p.n_x, p.n_u, p.n_w, p.horizon)?;
                let mut lq = LinearQuadratic::random(dims, seed);
                if p.lower.is_some() || p.upper.is_some() {
                    let lo = p.lower.clone().unwrap_or(vec![f64::NEG_INFINITY; p.n_u]);
                    let hi = p.upper.clone().unwrap_or(vec![f64::INFINITY; p.n_u]);
                    lq = lq.with_bounds(DVector::from_vec(lo), DVector::from_vec(hi))?;
                }
                let x0 = match &p.x0 {
                    Some(v) if v.len() != p.n_x => {
                        return Err(CliError::Config(format!(
                            "benchmark.x0 has {} entries, expected {}",
                            v.len(),
                            p.n_x
                        )))
                    }
                    Some(v) => DVector::from_vec(v.clone()),
                    None => DVector::from_element(p.n_x, 1.0),
                };
                Instance::Lq { model: lq, x0, noise_variance: p.noise_variance }
            }
        })
    }
}

pub enum Instance {
    Car(CarBenchmark<f64>),
    Kuramoto(KuramotoBenchmark<f64>),
    Lq { model: LinearQuadratic<f64>, x0: DVector<f64>, noise_variance: f64 },
}

impl Instance {
    pub fn model(&self) -> &dyn OcpModel<f64> {
        match self {
            Instance::Car(m) => m,
            Instance::Kuramoto(m) => m,
            Instance::Lq { model, .. } => model,
        }
    }

    pub fn initial_state(&self) -> DVector<f64> {
        match self {
            Instance::Car(m) => m.initial_state(),
            Instance::Kuramoto(m) => m.initial_state(),
            Instance::Lq { x0, .. } => x0.clone(),
        }
    }

    pub fn true_distribution(&self) -> TrueDistribution {
        match self {
            Instance::Car(m) => m.true_distribution(),
            Instance::Kuramoto(m) => m.true_distribution(),
            Instance::Lq { model, noise_variance, .. } => {
                TrueDistribution::isotropic_gaussian(0.0, *noise_variance, model.d.ncols())
            }
        }
    }

    pub fn dataset(&self, cfg: &RunConfig, seed: u64) -> Result<Dataset, CliError> {
        let ds = match &cfg.data.file {
            Some(path) => {
                let file = std::fs::File::open(path)
                    .map_err(|e| CliError::Config(format!("cannot open dataset {}: {e}", path.display())))?;
                Dataset::read_csv(file)?
            }
            None => drddp::disturbance::draw_dataset(
                &self.true_distribution(),
                self.model().dims().horizon,
                cfg.sample_count(),
                seed,
            )?,
        };
        let dims = self.model().dims();
        if ds.horizon() != dims.horizon || ds.dim() != dims.n_w {
            return Err(CliError::Config(format!(
                "dataset is {}x{} (steps x dim), the benchmark needs {}x{}",
                ds.horizon(),
                ds.dim(),
                dims.horizon,
                dims.n_w
            )));
        }
        Ok(ds)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = RunConfig::parse("[benchmark]\nkind = \"lq\"\n").unwrap();
        assert_eq!(cfg.solver_config(0).lambda, 100.0);
        assert_eq!(cfg.sample_count(), 5);
        assert_eq!(cfg.eval.controllers.len(), 3);
    }

    #[test]
    fn unknown_fields_are_rejected_with_location() {
        let err = RunConfig::parse("[benchmark]\nkind = \"car\"\nhorizn = 3\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("horizn"), "{msg}");
        assert!(msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn bad_values_are_config_errors() {
        assert!(RunConfig::parse("controller = \"lqr\"\n[benchmark]\nkind = \"lq\"\n").is_err());
        assert!(RunConfig::parse("[benchmark]\nkind = \"lq\"\n[solver]\nlambda = -1.0\n").is_err());
        assert!(RunConfig::parse("[benchmark]\nkind = \"lq\"\n[bench]\nsizes = [8, 4]\n").is_err());
        assert!(RunConfig::parse("[benchmark]\nkind = \"lq\"\n[eval]\nruns = 0\n").is_err());
    }

    #[test]
    fn snapshot_round_trips() {
        let cfg = RunConfig::parse("seed = 4\n[benchmark]\nkind = \"kuramoto\"\noscillators = 5\n").unwrap();
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::parse(&text).unwrap(), cfg);
    }

    #[test]
    fn car_threshold_defaults_to_obstacle_radius() {
        let cfg = RunConfig::parse("[benchmark]\nkind = \"car\"\n").unwrap();
        assert_eq!(cfg.eval_config(0).collision_threshold, Some(0.2));
    }
}
