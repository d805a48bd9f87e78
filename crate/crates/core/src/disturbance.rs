//! Empirical disturbance datasets and the true distributions they are drawn from.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{substream, Stream};
use crate::scalar::Real;

/// Per-step samples `w_t^(i)`, `t < horizon`, `i < N`, with cached moments.
#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceDataset<T: Real> {
    samples: Vec<Vec<DVector<T>>>,
    means: Vec<DVector<T>>,
    covariances: Vec<DMatrix<T>>,
}

impl<T: Real> DisturbanceDataset<T> {
    /// Builds a dataset from `samples[t][i]`.
    pub fn new(samples: Vec<Vec<DVector<T>>>) -> Result<Self> {
        let n = samples.first().map(Vec::len).unwrap_or(0);
        if n == 0 {
            return Err(Error::Dataset("dataset needs at least one step and one sample".into()));
        }
        let n_w = samples[0][0].len();
        for (t, step) in samples.iter().enumerate() {
            if step.len() != n {
                return Err(Error::Dataset(format!("step {t} has {} samples, expected {n}", step.len())));
            }
            if let Some(bad) = step.iter().position(|w| w.len() != n_w) {
                return Err(Error::Dataset(format!("sample ({t}, {bad}) has wrong dimension")));
            }
            if step.iter().any(|w| w.iter().any(|v| !v.is_finite_value())) {
                return Err(Error::Dataset(format!("step {t} contains non-finite samples")));
            }
        }
        let (means, covariances) = samples.iter().map(|s| moments(s)).unzip();
        Ok(DisturbanceDataset { samples, means, covariances })
    }

    /// One zero-valued atom per step.
    pub fn zeros(horizon: usize, n_w: usize) -> Self {
        Self::new(vec![vec![DVector::zeros(n_w)]; horizon]).expect("zero dataset is valid")
    }

    pub fn horizon(&self) -> usize {
        self.samples.len()
    }

    pub fn sample_count(&self) -> usize {
        self.samples[0].len()
    }

    pub fn dim(&self) -> usize {
        self.samples[0][0].len()
    }

    pub fn samples_at(&self, t: usize) -> &[DVector<T>] {
        &self.samples[t]
    }

    pub fn sample(&self, t: usize, i: usize) -> &DVector<T> {
        &self.samples[t][i]
    }

    pub fn mean(&self, t: usize) -> &DVector<T> {
        &self.means[t]
    }

    pub fn covariance(&self, t: usize) -> &DMatrix<T> {
        &self.covariances[t]
    }

    /// Empirical mean and population covariance (divisor `N`) at step `t`.
    pub fn empirical_moments(&self, t: usize) -> (&DVector<T>, &DMatrix<T>) {
        (&self.means[t], &self.covariances[t])
    }

    /// Writes the `t,i,w_1..w_n` CSV form.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        let mut header = vec!["t".to_string(), "i".to_string()];
        header.extend((1..=self.dim()).map(|k| format!("w_{k}")));
        out.write_record(&header)?;
        for (t, step) in self.samples.iter().enumerate() {
            for (i, w) in step.iter().enumerate() {
                let mut row = vec![t.to_string(), i.to_string()];
                row.extend(w.iter().map(|v| format!("{:e}", v.as_f64())));
                out.write_record(&row)?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut input = csv::Reader::from_reader(reader);
        let n_w = input
            .headers()?
            .len()
            .checked_sub(2)
            .filter(|n| *n > 0)
            .ok_or_else(|| Error::Dataset("expected columns t,i,w_1..w_n".into()))?;
        let mut samples: Vec<Vec<DVector<T>>> = Vec::new();
        for (line, record) in input.records().enumerate() {
            let record = record?;
            let parse_idx = |k: usize| -> Result<usize> {
                record[k]
                    .trim()
                    .parse()
                    .map_err(|_| Error::Dataset(format!("row {}: bad index {:?}", line + 2, &record[k])))
            };
            let (t, i) = (parse_idx(0)?, parse_idx(1)?);
            let values = (0..n_w)
                .map(|k| {
                    record[k + 2]
                        .trim()
                        .parse::<f64>()
                        .map(T::lit)
                        .map_err(|_| Error::Dataset(format!("row {}: bad value {:?}", line + 2, &record[k + 2])))
                })
                .collect::<Result<Vec<T>>>()?;
            if t == samples.len() {
                samples.push(Vec::new());
            }
            if t + 1 != samples.len() || i != samples[t].len() {
                return Err(Error::Dataset(format!("row {}: rows must be ordered by (t, i)", line + 2)));
            }
            samples[t].push(DVector::from_vec(values));
        }
        Self::new(samples)
    }
}

fn moments<T: Real>(samples: &[DVector<T>]) -> (DVector<T>, DMatrix<T>) {
    let n = T::from_usize(samples.len()).unwrap();
    let dim = samples[0].len();
    let mut mean = DVector::zeros(dim);
    for w in samples {
        mean += w;
    }
    mean /= n;
    let mut cov = DMatrix::zeros(dim, dim);
    for w in samples {
        let d = w - &mean;
        cov.ger(T::one(), &d, &d, T::one());
    }
    cov /= n;
    (mean, cov)
}

/// Free function form of [`DisturbanceDataset::empirical_moments`].
pub fn empirical_moments<T: Real>(ds: &DisturbanceDataset<T>, t: usize) -> (DVector<T>, DMatrix<T>) {
    let (m, c) = ds.empirical_moments(t);
    (m.clone(), c.clone())
}

/// Ground-truth disturbance law used to draw datasets and evaluation noise.
///
/// Parameters are kept in double precision; samples are converted to the
/// solver's scalar type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrueDistribution {
    /// Independent uniform components on `[lower_k, upper_k]`.
    UniformBox {
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
    /// Multivariate normal; `covariance` is a dense row-major matrix.
    Gaussian {
        mean: Vec<f64>,
        covariance: Vec<Vec<f64>>,
    },
    Discrete {
        atoms: Vec<Vec<f64>>,
        weights: Vec<f64>,
    },
}

impl TrueDistribution {
    pub fn uniform_box(lower: f64, upper: f64, dim: usize) -> Self {
        TrueDistribution::UniformBox { lower: vec![lower; dim], upper: vec![upper; dim] }
    }

    /// Independent components with common mean and variance.
    pub fn isotropic_gaussian(mean: f64, variance: f64, dim: usize) -> Self {
        let covariance = (0..dim).map(|i| (0..dim).map(|j| if i == j { variance } else { 0.0 }).collect()).collect();
        TrueDistribution::Gaussian { mean: vec![mean; dim], covariance }
    }

    pub fn dirac(atom: Vec<f64>) -> Self {
        TrueDistribution::Discrete { atoms: vec![atom], weights: vec![1.0] }
    }

    pub fn dim(&self) -> usize {
        match self {
            TrueDistribution::UniformBox { lower, .. } => lower.len(),
            TrueDistribution::Gaussian { mean, .. } => mean.len(),
            TrueDistribution::Discrete { atoms, .. } => atoms.first().map_or(0, Vec::len),
        }
    }

    /// Validates the parameters and prepares a sampler.
    pub fn sampler(&self) -> Result<Sampler> {
        let bad = |m: String| Err(Error::Config(m));
        match self {
            TrueDistribution::UniformBox { lower, upper } => {
                if lower.is_empty() || lower.len() != upper.len() {
                    return bad("uniform box bounds must be non-empty and of equal length".into());
                }
                if lower.iter().zip(upper).any(|(l, u)| !(l.is_finite() && u.is_finite() && l <= u)) {
                    return bad("uniform box needs finite lower <= upper".into());
                }
                Ok(Sampler::Uniform { lower: lower.clone(), upper: upper.clone() })
            }
            TrueDistribution::Gaussian { mean, covariance } => {
                let n = mean.len();
                if n == 0 || covariance.len() != n || covariance.iter().any(|r| r.len() != n) {
                    return bad("gaussian covariance must be square and match the mean".into());
                }
                let cov = DMatrix::from_fn(n, n, |i, j| covariance[i][j]);
                if (&cov - cov.transpose()).abs().max() > 1e-12 {
                    return bad("gaussian covariance must be symmetric".into());
                }
                // Factor with a tiny jitter so PSD (rank-deficient) covariances are accepted.
                let scale = cov.abs().max().max(1.0);
                let jittered = &cov + DMatrix::identity(n, n) * (1e-14 * scale);
                let factor = jittered
                    .cholesky()
                    .ok_or_else(|| Error::Config("gaussian covariance is not positive semidefinite".into()))?
                    .unpack();
                Ok(Sampler::Gaussian { mean: DVector::from_vec(mean.clone()), factor })
            }
            TrueDistribution::Discrete { atoms, weights } => {
                if atoms.is_empty() || atoms.len() != weights.len() {
                    return bad("discrete distribution needs one weight per atom".into());
                }
                let dim = atoms[0].len();
                if dim == 0 || atoms.iter().any(|a| a.len() != dim) {
                    return bad("discrete atoms must share a positive dimension".into());
                }
                let total: f64 = weights.iter().sum();
                if weights.iter().any(|w| !(*w >= 0.0)) || (total - 1.0).abs() > 1e-9 {
                    return bad("discrete weights must be nonnegative and sum to 1".into());
                }
                let mut cumulative = Vec::with_capacity(weights.len());
                let mut acc = 0.0;
                for w in weights {
                    acc += w;
                    cumulative.push(acc);
                }
                Ok(Sampler::Discrete { atoms: atoms.clone(), cumulative })
            }
        }
    }
}

/// Validated, ready-to-draw form of a [`TrueDistribution`].
#[derive(Debug, Clone)]
pub enum Sampler {
    Uniform { lower: Vec<f64>, upper: Vec<f64> },
    Gaussian { mean: DVector<f64>, factor: DMatrix<f64> },
    Discrete { atoms: Vec<Vec<f64>>, cumulative: Vec<f64> },
}

impl Sampler {
    pub fn draw<T: Real, R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<T> {
        match self {
            Sampler::Uniform { lower, upper } => DVector::from_iterator(
                lower.len(),
                lower.iter().zip(upper).map(|(&l, &u)| T::lit(l + (u - l) * rng.random::<f64>())),
            ),
            Sampler::Gaussian { mean, factor } => {
                let z = DVector::<f64>::from_fn(mean.len(), |_, _| StandardNormal.sample(rng));
                (mean + factor * z).map(T::lit)
            }
            Sampler::Discrete { atoms, cumulative } => {
                let r = rng.random::<f64>() * cumulative[cumulative.len() - 1];
                let k = cumulative.iter().position(|&c| r < c).unwrap_or(atoms.len() - 1);
                DVector::from_iterator(atoms[k].len(), atoms[k].iter().map(|&v| T::lit(v)))
            }
        }
    }
}

/// Draws an i.i.d. dataset of `n` samples per step from the dataset substream of `seed`.
pub fn draw_dataset<T: Real>(
    dist: &TrueDistribution,
    horizon: usize,
    n: usize,
    seed: u64,
) -> Result<DisturbanceDataset<T>> {
    if n == 0 || horizon == 0 {
        return Err(Error::Config("dataset needs N >= 1 and a positive horizon".into()));
    }
    let sampler = dist.sampler()?;
    let mut rng = substream(seed, Stream::Dataset, 0);
    let samples = (0..horizon).map(|_| (0..n).map(|_| sampler.draw(&mut rng)).collect()).collect();
    DisturbanceDataset::new(samples)
}
