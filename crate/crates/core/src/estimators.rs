//! Spectral-measure estimators.
//!
//! * Conventional Peak-over-Threshold: normalize the samples whose l1-norm
//!   exceeds `tau`, cluster the resulting directions with k-means and report
//!   the weighted cluster centers.
//! * Two-step: recover the column directions `A~` from a very high threshold
//!   (about `log n` exceedances), decorrelate with `A~^{-1}`, then fit each
//!   column length from a one-dimensional tail-frequency equation and report
//!   `K_{A^}` for `A^ = A~ diag(theta^)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{l1_norm, spectral_measure_of, DiscreteMeasure, Matrix};
use crate::numerics::{invert_square_matrix, kmeans, KMeansConfig, DEFAULT_DET_TOL};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvConfig {
    pub kappa_bar: f64,
    pub alpha: f64,
    pub s: f64,
    /// Number of clusters kept in the estimate.
    pub collapse_k: usize,
    pub kmeans: KMeansConfig,
}

impl ConvConfig {
    pub fn new(kappa_bar: f64, alpha: f64, s: f64, d: usize) -> Self {
        Self { kappa_bar, alpha, s, collapse_k: d, kmeans: KMeansConfig { k: d, ..KMeansConfig::default() } }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa_bar > 0.0) || !(self.alpha > 0.0) || self.collapse_k < 1 {
            return Err(Error::ConfigInvalid(format!(
                "conventional estimator needs kappa_bar > 0, alpha > 0, collapse_k >= 1: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RHatPolicy {
    ConstantOne,
    Fixed { value: f64 },
}

impl RHatPolicy {
    pub fn value(&self) -> f64 {
        match self {
            RHatPolicy::ConstantOne => 1.0,
            RHatPolicy::Fixed { value } => *value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoStepConfig {
    /// Direction threshold scale.
    pub kappa_tilde: f64,
    /// Tail threshold scale.
    pub kappa: f64,
    pub alpha: f64,
    pub s: f64,
    pub m: usize,
    pub r_hat_policy: RHatPolicy,
    pub kmeans: KMeansConfig,
    pub det_tol: f64,
}

impl TwoStepConfig {
    pub fn new(kappa_tilde: f64, kappa: f64, alpha: f64, s: f64, m: usize) -> Self {
        Self {
            kappa_tilde,
            kappa,
            alpha,
            s,
            m,
            r_hat_policy: RHatPolicy::ConstantOne,
            kmeans: KMeansConfig { k: m, ..KMeansConfig::default() },
            det_tol: DEFAULT_DET_TOL,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let r_hat = self.r_hat_policy.value();
        if !(self.kappa_tilde > 0.0)
            || !(self.kappa > 0.0)
            || !(self.alpha > 0.0)
            || !(r_hat > 0.0)
            || !(self.det_tol > 0.0)
            || self.m < 2
        {
            return Err(Error::ConfigInvalid(format!(
                "two-step estimator needs positive scales, alpha, r_hat, det_tol and m >= 2: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Directions `x / |x|_1` of the samples with `|x|_1 > tau`, unmerged.
pub fn thresholded_directions(samples: &[Vec<f64>], tau: f64) -> Vec<Vec<f64>> {
    samples
        .iter()
        .filter_map(|x| {
            let r = l1_norm(x);
            (r > tau).then(|| x.iter().map(|v| v / r).collect())
        })
        .collect()
}

/// Number of samples with `|x|_1 > tau`.
pub fn count_exceedances(samples: &[Vec<f64>], tau: f64) -> usize {
    samples.iter().filter(|x| l1_norm(x) > tau).count()
}

/// Empirical angular measure `P_n^tau` and its exceedance count.
pub fn empirical_angular_measure(samples: &[Vec<f64>], tau: f64) -> Result<(DiscreteMeasure, usize)> {
    let dirs = thresholded_directions(samples, tau);
    let n_tau = dirs.len();
    if n_tau == 0 {
        return Err(Error::NoExceedances { threshold: tau });
    }
    let w = vec![1.0 / n_tau as f64; n_tau];
    Ok((DiscreteMeasure::from_weighted_atoms(dirs, w)?, n_tau))
}

/// Critical deviation `1 / (2 + max(1, alpha))` separating the two regimes.
pub fn critical_s(alpha: f64) -> f64 {
    1.0 / (2.0 + alpha.max(1.0))
}

/// Exponent `e` of the conventional threshold `kappa_bar * n^e`.
pub fn conventional_exponent(alpha: f64, s: f64) -> f64 {
    if s >= critical_s(alpha) {
        1.0 / (2.0 + alpha).min(3.0 * alpha)
    } else {
        (1.0 - 2.0 * s) / alpha
    }
}

pub fn conventional_threshold(n: usize, cfg: &ConvConfig) -> f64 {
    cfg.kappa_bar * (n as f64).powf(conventional_exponent(cfg.alpha, cfg.s))
}

fn renormalize(v: &[f64]) -> Vec<f64> {
    let r = l1_norm(v);
    v.iter().map(|x| x / r).collect()
}

/// Conventional estimate together with its exceedance count.
pub fn estimate_conventional_counted(samples: &[Vec<f64>], cfg: &ConvConfig) -> Result<(DiscreteMeasure, usize)> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::TooFewPoints { needed: 1, got: 0 });
    }
    let tau = conventional_threshold(samples.len(), cfg);
    let dirs = thresholded_directions(samples, tau);
    if dirs.is_empty() {
        return Err(Error::NoExceedances { threshold: tau });
    }
    let km = KMeansConfig { k: cfg.collapse_k, ..cfg.kmeans.clone() };
    let res = kmeans(&dirs, &km)?;
    let atoms: Vec<Vec<f64>> = res.centers.iter().map(|c| renormalize(c)).collect();
    Ok((DiscreteMeasure::from_weighted_atoms(atoms, res.weights)?, dirs.len()))
}

pub fn estimate_conventional(samples: &[Vec<f64>], cfg: &ConvConfig) -> Result<DiscreteMeasure> {
    estimate_conventional_counted(samples, cfg).map(|(k, _)| k)
}

/// `kappa_tilde * (n / ln n)^{1/alpha}`.
pub fn direction_threshold(n: usize, cfg: &TwoStepConfig) -> f64 {
    let n = n as f64;
    cfg.kappa_tilde * (n / n.ln()).powf(1.0 / cfg.alpha)
}

/// Tail threshold `kappa * n^{(1-2s)/alpha}`.
pub fn tail_threshold(n: usize, cfg: &TwoStepConfig) -> f64 {
    cfg.kappa * (n as f64).powf((1.0 - 2.0 * cfg.s) / cfg.alpha)
}

/// Column directions `A~`: the `m` k-means centers of the directions above
/// the direction threshold, each rescaled to unit l1-norm, sorted.
pub fn estimate_directions(samples: &[Vec<f64>], cfg: &TwoStepConfig) -> Result<Matrix> {
    cfg.validate()?;
    let tau = direction_threshold(samples.len(), cfg);
    let dirs = thresholded_directions(samples, tau);
    if dirs.len() < cfg.m {
        return Err(Error::TooFewPoints { needed: cfg.m, got: dirs.len() });
    }
    let km = KMeansConfig { k: cfg.m, ..cfg.kmeans.clone() };
    let res = kmeans(&dirs, &km)?;
    let mut cols: Vec<Vec<f64>> = res.centers.iter().map(|c| renormalize(c)).collect();
    cols.sort_by(|a, b| crate::model::lex_cmp(a, b));
    Matrix::from_columns(&cols)
}

/// Solves `count / n = r_hat (1 + tau / theta)^{-alpha}` for `theta`.
pub fn solve_theta(count: usize, n: usize, r_hat: f64, tau: f64, alpha: f64) -> Result<f64> {
    if count == 0 {
        return Err(Error::NoExceedances { threshold: tau });
    }
    theta_from_fraction(count as f64 / n as f64, r_hat, tau, alpha)
}

/// Solves `fraction = r_hat (1 + tau / theta)^{-alpha}` for `theta`.
pub fn theta_from_fraction(fraction: f64, r_hat: f64, tau: f64, alpha: f64) -> Result<f64> {
    let ratio = r_hat / fraction;
    if !(fraction > 0.0) || !(ratio > 1.0) {
        return Err(Error::NoSolution { fraction, r_hat });
    }
    // (r / fraction)^{1/alpha} - 1, accurate when the ratio is close to 1
    Ok(tau / (ratio.ln() / alpha).exp_m1())
}

/// Right-hand side of the estimating equation, `r_hat (1 + tau / theta)^{-alpha}`.
pub fn tail_fraction(theta: f64, r_hat: f64, tau: f64, alpha: f64) -> f64 {
    r_hat * (1.0 + tau / theta).powf(-alpha)
}

/// Intermediate quantities of one two-step fit.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoStepFit {
    pub a_tilde: Matrix,
    pub a_hat: Matrix,
    pub theta: Vec<f64>,
    pub measure: DiscreteMeasure,
    /// Exceedances of the direction threshold.
    pub n_tau_tilde: usize,
    /// Per-coordinate exceedances of the tail threshold after decorrelation.
    pub tail_counts: Vec<usize>,
}

pub fn fit_two_step(samples: &[Vec<f64>], cfg: &TwoStepConfig) -> Result<TwoStepFit> {
    cfg.validate()?;
    let n = samples.len();
    if n < 3 {
        return Err(Error::TooFewPoints { needed: 3, got: n });
    }
    let d = samples[0].len();
    if d != cfg.m {
        return Err(Error::DimensionMismatch { expected: cfg.m, got: d });
    }
    let n_tau_tilde = count_exceedances(samples, direction_threshold(n, cfg));
    let a_tilde = estimate_directions(samples, cfg)?;
    let inv = invert_square_matrix(&a_tilde, cfg.det_tol)?;
    let tau = tail_threshold(n, cfg);
    let mut tail_counts = vec![0usize; cfg.m];
    for x in samples {
        for (i, v) in inv.mul_vec(x).into_iter().enumerate() {
            if v > tau {
                tail_counts[i] += 1;
            }
        }
    }
    let r_hat = cfg.r_hat_policy.value();
    let theta = tail_counts
        .iter()
        .map(|&c| solve_theta(c, n, r_hat, tau, cfg.alpha))
        .collect::<Result<Vec<f64>>>()?;
    let a_hat = a_tilde.matmul(&Matrix::diag(&theta))?;
    let measure = spectral_measure_of(&a_hat, cfg.alpha)?;
    Ok(TwoStepFit { a_tilde, a_hat, theta, measure, n_tau_tilde, tail_counts })
}

/// Two-step estimate `(A^, K_{A^})`; needs square models (`d = m`).
pub fn estimate_two_step(samples: &[Vec<f64>], cfg: &TwoStepConfig) -> Result<(Matrix, DiscreteMeasure)> {
    fit_two_step(samples, cfg).map(|f| (f.a_hat, f.measure))
}
