//! Convergence-rate experiments: sweep the sample size, replicate, measure
//! the Wasserstein error of each estimator against the ground-truth spectral
//! measure, aggregate per sample size and fit the log-log slope.
//!
//! Every `(n, replicate)` job draws its data from the stream
//! `(mix_seed(base_seed, n), replicate)` and its k-means seed from the same
//! pair, so results do not depend on scheduling or thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{
    conventional_threshold, count_exceedances, direction_threshold, estimate_conventional_counted,
    fit_two_step, tail_threshold, ConvConfig, TwoStepConfig,
};
use crate::model::{spectral_measure_of, DiscreteMeasure, LatentKind, Matrix, ModelSpec};
use crate::numerics::{fit_loglog_slope, SlopeFit};
use crate::sampling::{generate_dataset, mix_seed};
use crate::transport::wasserstein_p;

pub const TAG_CONV: &str = "conv";
pub const TAG_TWO_STEP: &str = "two_step";

/// Ground truth `A_n = diag(1 + n^{-s}, 1 - n^{-s})` and its spectral measure.
pub fn ground_truth_for(n: usize, alpha: f64, s: f64) -> Result<(Matrix, DiscreteMeasure)> {
    let tilt = (n as f64).powf(-s);
    let a = Matrix::diag(&[1.0 + tilt, 1.0 - tilt]);
    let k = spectral_measure_of(&a, alpha)?;
    Ok((a, k))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadingRule {
    /// `diag(1 + n^{-s}, 1 - n^{-s})`, recomputed for every sample size.
    WorstCaseDiagonal,
    Fixed(Matrix),
}

/// A model whose loading matrix may depend on the sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelTemplate {
    pub loading: LoadingRule,
    pub alpha: f64,
    pub s: f64,
    pub latent_kind: LatentKind,
    pub zeta: f64,
}

impl ModelTemplate {
    /// Worst-case loading together with the worst-case latent law.
    pub fn worst_case(alpha: f64, s: f64) -> Self {
        Self { loading: LoadingRule::WorstCaseDiagonal, alpha, s, latent_kind: LatentKind::TiltedWorstCase, zeta: 1.0 }
    }

    pub fn loading_at(&self, n: usize) -> Result<Matrix> {
        Ok(match &self.loading {
            LoadingRule::WorstCaseDiagonal => ground_truth_for(n, self.alpha, self.s)?.0,
            LoadingRule::Fixed(a) => a.clone(),
        })
    }

    pub fn instantiate(&self, n: usize) -> Result<ModelSpec> {
        let spec = ModelSpec {
            a: self.loading_at(n)?,
            alpha: self.alpha,
            s: self.s,
            latent_kind: self.latent_kind.clone(),
            zeta: self.zeta,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Output of one estimator on one batch.
#[derive(Debug, Clone)]
pub struct Estimate {
    pub measure: DiscreteMeasure,
}

/// Something the harness can score. `job_seed` is unique per `(n, replicate)`.
pub trait SpectralEstimator: Sync {
    fn tag(&self) -> &str;
    fn estimate(&self, samples: &[Vec<f64>], job_seed: u64) -> Result<Estimate>;
    /// Diagnostic exceedance counts `(n_tau, n_tau_tilde)`; never fails.
    fn counts(&self, samples: &[Vec<f64>]) -> (Option<usize>, Option<usize>);
}

impl SpectralEstimator for ConvConfig {
    fn tag(&self) -> &str {
        TAG_CONV
    }

    fn estimate(&self, samples: &[Vec<f64>], job_seed: u64) -> Result<Estimate> {
        let mut cfg = self.clone();
        cfg.kmeans.seed = mix_seed(cfg.kmeans.seed, job_seed);
        let (measure, _) = estimate_conventional_counted(samples, &cfg)?;
        Ok(Estimate { measure })
    }

    fn counts(&self, samples: &[Vec<f64>]) -> (Option<usize>, Option<usize>) {
        let tau = conventional_threshold(samples.len(), self);
        (Some(count_exceedances(samples, tau)), None)
    }
}

impl SpectralEstimator for TwoStepConfig {
    fn tag(&self) -> &str {
        TAG_TWO_STEP
    }

    fn estimate(&self, samples: &[Vec<f64>], job_seed: u64) -> Result<Estimate> {
        let mut cfg = self.clone();
        cfg.kmeans.seed = mix_seed(cfg.kmeans.seed, job_seed);
        Ok(Estimate { measure: fit_two_step(samples, &cfg)?.measure })
    }

    fn counts(&self, samples: &[Vec<f64>]) -> (Option<usize>, Option<usize>) {
        let n = samples.len();
        (
            Some(count_exceedances(samples, tail_threshold(n, self))),
            Some(count_exceedances(samples, direction_threshold(n, self))),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Aggregate {
    #[default]
    Median,
    Mean,
}

impl Aggregate {
    pub fn apply(&self, values: &[f64]) -> Option<f64> {
        if values.is_empty() {
            return None;
        }
        match self {
            Aggregate::Mean => Some(values.iter().sum::<f64>() / values.len() as f64),
            Aggregate::Median => {
                let mut v = values.to_vec();
                v.sort_by(f64::total_cmp);
                let k = v.len();
                Some(if k % 2 == 1 { v[k / 2] } else { 0.5 * (v[k / 2 - 1] + v[k / 2]) })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelTemplate,
    pub conv: Option<ConvConfig>,
    pub two_step: Option<TwoStepConfig>,
    pub n_grid: Vec<usize>,
    pub replicates: usize,
    pub base_seed: u64,
    pub aggregate: Aggregate,
    /// Wasserstein order.
    pub p: f64,
}

/// Default grid `2^11, ..., 2^17`.
pub fn default_n_grid() -> Vec<usize> {
    (11..=17).map(|k| 1usize << k).collect()
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_grid.len() < 3 {
            return Err(Error::ConfigInvalid("n_grid needs at least 3 sizes".into()));
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::ConfigInvalid("n_grid must be strictly increasing".into()));
        }
        if self.n_grid[0] < 3 {
            return Err(Error::ConfigInvalid("every n must be >= 3".into()));
        }
        if self.replicates < 1 {
            return Err(Error::ConfigInvalid("replicates must be >= 1".into()));
        }
        if !(self.p >= 1.0) {
            return Err(Error::ConfigInvalid(format!("p must be >= 1, got {}", self.p)));
        }
        if self.conv.is_none() && self.two_step.is_none() {
            return Err(Error::ConfigInvalid("no estimator selected".into()));
        }
        if let Some(c) = &self.conv {
            c.validate()?;
        }
        if let Some(t) = &self.two_step {
            t.validate()?;
        }
        self.model.instantiate(self.n_grid[0]).map(|_| ())
    }

    fn estimators(&self) -> Vec<&dyn SpectralEstimator> {
        let mut out: Vec<&dyn SpectralEstimator> = Vec::new();
        if let Some(c) = &self.conv {
            out.push(c);
        }
        if let Some(t) = &self.two_step {
            out.push(t);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRow {
    pub n: usize,
    pub replicate: usize,
    pub estimator: String,
    /// `None` when the replicate failed.
    pub error: Option<f64>,
    pub n_tau: Option<usize>,
    pub n_tau_tilde: Option<usize>,
    /// Error name of a failed replicate.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregatePoint {
    pub estimator: String,
    pub n: usize,
    pub value: f64,
    pub ok: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorFit {
    pub estimator: String,
    pub fit: Option<SlopeFit>,
    pub n_points: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentResult {
    pub rows: Vec<ExperimentRow>,
    pub aggregates: Vec<AggregatePoint>,
    pub slope_fits: Vec<EstimatorFit>,
    pub failure_rate: f64,
}

impl ExperimentResult {
    pub fn slope(&self, estimator: &str) -> Option<f64> {
        self.slope_fits.iter().find(|f| f.estimator == estimator)?.fit.map(|f| f.slope)
    }

    pub fn aggregate_at(&self, estimator: &str, n: usize) -> Option<f64> {
        self.aggregates.iter().find(|a| a.estimator == estimator && a.n == n).map(|a| a.value)
    }
}

fn job_seed(base_seed: u64, n: usize) -> u64 {
    mix_seed(base_seed, n as u64)
}

/// Runs every estimator on every `(n, replicate)` batch.
pub fn run_with_estimators(cfg: &ExperimentConfig, estimators: &[&dyn SpectralEstimator]) -> Result<ExperimentResult> {
    let jobs: Vec<(usize, usize)> =
        cfg.n_grid.iter().flat_map(|&n| (0..cfg.replicates).map(move |r| (n, r))).collect();
    let per_job: Vec<Result<Vec<ExperimentRow>>> = jobs
        .par_iter()
        .map(|&(n, r)| run_job(cfg, estimators, n, r))
        .collect();
    let mut rows = Vec::with_capacity(jobs.len() * estimators.len());
    for job in per_job {
        rows.extend(job?);
    }
    summarize(cfg, estimators, rows)
}

fn run_job(
    cfg: &ExperimentConfig,
    estimators: &[&dyn SpectralEstimator],
    n: usize,
    r: usize,
) -> Result<Vec<ExperimentRow>> {
    let spec = cfg.model.instantiate(n)?;
    let truth = spectral_measure_of(&spec.a, spec.alpha)?;
    let seed = job_seed(cfg.base_seed, n);
    let batch = generate_dataset(&spec, n, seed, r as u64);
    let mut rows = Vec::with_capacity(estimators.len());
    for est in estimators {
        let mut row = ExperimentRow {
            n,
            replicate: r,
            estimator: est.tag().to_string(),
            error: None,
            n_tau: None,
            n_tau_tilde: None,
            failure: None,
        };
        match &batch {
            Err(e) => row.failure = Some(e.name().to_string()),
            Ok(batch) => {
                (row.n_tau, row.n_tau_tilde) = est.counts(&batch.xs);
                let scored = est
                    .estimate(&batch.xs, mix_seed(seed, r as u64))
                    .and_then(|e| wasserstein_p(&e.measure, &truth, cfg.p));
                match scored {
                    Ok(err) => row.error = Some(err),
                    Err(e @ Error::SolverFailure(_)) => return Err(e),
                    Err(e) => row.failure = Some(e.name().to_string()),
                }
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

fn summarize(
    cfg: &ExperimentConfig,
    estimators: &[&dyn SpectralEstimator],
    rows: Vec<ExperimentRow>,
) -> Result<ExperimentResult> {
    let mut aggregates = Vec::new();
    let mut slope_fits = Vec::new();
    for est in estimators {
        let tag = est.tag();
        let mut ns = Vec::new();
        let mut values = Vec::new();
        for &n in &cfg.n_grid {
            let errs: Vec<f64> =
                rows.iter().filter(|r| r.estimator == tag && r.n == n).filter_map(|r| r.error).collect();
            let failed = cfg.replicates - errs.len();
            let Some(value) = cfg.aggregate.apply(&errs) else {
                return Err(Error::ExperimentAborted { estimator: tag.to_string(), n });
            };
            aggregates.push(AggregatePoint { estimator: tag.to_string(), n, value, ok: errs.len(), failed });
            // zero error cannot enter a log-log fit
            if value > 0.0 {
                ns.push(n);
                values.push(value);
            }
        }
        let fit = if ns.len() >= 2 { fit_loglog_slope(&ns, &values).ok() } else { None };
        slope_fits.push(EstimatorFit { estimator: tag.to_string(), fit, n_points: ns.len() });
    }
    let failed = rows.iter().filter(|r| r.failure.is_some()).count();
    let failure_rate = if rows.is_empty() { 0.0 } else { failed as f64 / rows.len() as f64 };
    Ok(ExperimentResult { rows, aggregates, slope_fits, failure_rate })
}

/// Runs the configured estimators on the current rayon pool.
pub fn run_convergence_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    run_with_estimators(cfg, &cfg.estimators())
}

/// [`run_convergence_experiment`] on a dedicated pool of `threads` workers.
pub fn run_convergence_experiment_on(cfg: &ExperimentConfig, threads: usize) -> Result<ExperimentResult> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::ConfigInvalid(format!("thread pool: {e}")))?;
    pool.install(|| run_convergence_experiment(cfg))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CountRow {
    pub n: usize,
    pub replicate: usize,
    /// Conventional-threshold exceedances.
    pub n_tau: Option<usize>,
    /// Direction-threshold exceedances of the two-step estimator.
    pub n_tau_tilde: Option<usize>,
}

/// Exceedance counts per `(n, replicate)`, without running the estimators.
pub fn diagnostic_counts(cfg: &ExperimentConfig) -> Result<Vec<CountRow>> {
    cfg.validate()?;
    let jobs: Vec<(usize, usize)> =
        cfg.n_grid.iter().flat_map(|&n| (0..cfg.replicates).map(move |r| (n, r))).collect();
    jobs.par_iter()
        .map(|&(n, r)| {
            let spec = cfg.model.instantiate(n)?;
            let batch = generate_dataset(&spec, n, job_seed(cfg.base_seed, n), r as u64)?;
            let n_tau = cfg.conv.as_ref().map(|c| count_exceedances(&batch.xs, conventional_threshold(n, c)));
            let n_tau_tilde =
                cfg.two_step.as_ref().map(|t| count_exceedances(&batch.xs, direction_threshold(n, t)));
            Ok(CountRow { n, replicate: r, n_tau, n_tau_tilde })
        })
        .collect()
}
