//! JSON configuration shared by all subcommands.
//!
//! ```json
//! {
//!   "model": { "alpha": 2.0, "s": 0.2, "latent_kind": "tilted_worst_case", "n": 4096, "seed": 1 },
//!   "estimator": { "conv": { "kappa_bar": 1.0 }, "two_step": { "kappa_tilde": 0.3, "kappa": 1.0 } },
//!   "experiment": { "n_grid": [2048, 4096, 8192], "replicates": 30, "base_seed": 20240601 }
//! }
//! ```
//!
//! Without `model.a` the loading is the worst-case diagonal recomputed for
//! every sample size and `latent_kind` defaults to `tilted_worst_case`; with
//! an explicit matrix it defaults to `iid_pareto`.

use std::fmt;
use std::path::Path;

use serde::Deserialize;
use tailspec_core::estimators::{ConvConfig, RHatPolicy, TwoStepConfig};
use tailspec_core::harness::{default_n_grid, Aggregate, ExperimentConfig, LoadingRule, ModelTemplate};
use tailspec_core::numerics::{KMeansConfig, DEFAULT_DET_TOL};
use tailspec_core::{LatentKind, Matrix};

/// A configuration problem; always maps to exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

fn field(path: &str, msg: impl fmt::Display) -> ConfigError {
    ConfigError(format!("{path}: {msg}"))
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CliConfig {
    pub model: Option<ModelSection>,
    pub estimator: Option<EstimatorSection>,
    pub experiment: Option<ExperimentSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// Loading matrix as rows; omitted means the worst-case diagonal.
    pub a: Option<Vec<Vec<f64>>>,
    pub alpha: f64,
    pub s: f64,
    pub latent_kind: Option<LatentKind>,
    #[serde(default = "one")]
    pub zeta: f64,
    /// Sample size for `simulate`.
    pub n: Option<usize>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub stream_id: u64,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSection {
    /// Fall back to `model.alpha` / `model.s` when omitted.
    pub alpha: Option<f64>,
    pub s: Option<f64>,
    pub conv: Option<ConvSection>,
    pub two_step: Option<TwoStepSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvSection {
    #[serde(default = "one")]
    pub kappa_bar: f64,
    pub collapse_k: Option<usize>,
    #[serde(default)]
    pub kmeans: KMeansConfig,
}

impl Default for ConvSection {
    fn default() -> Self {
        Self { kappa_bar: 1.0, collapse_k: None, kmeans: KMeansConfig::default() }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoStepSection {
    #[serde(default = "default_kappa_tilde")]
    pub kappa_tilde: f64,
    #[serde(default = "one")]
    pub kappa: f64,
    #[serde(default = "default_r_hat")]
    pub r_hat_policy: RHatPolicy,
    #[serde(default)]
    pub kmeans: KMeansConfig,
    #[serde(default = "default_det_tol")]
    pub det_tol: f64,
}

impl Default for TwoStepSection {
    fn default() -> Self {
        Self {
            kappa_tilde: default_kappa_tilde(),
            kappa: 1.0,
            r_hat_policy: default_r_hat(),
            kmeans: KMeansConfig::default(),
            det_tol: DEFAULT_DET_TOL,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    #[serde(default = "default_n_grid")]
    pub n_grid: Vec<usize>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    pub base_seed: u64,
    #[serde(default)]
    pub aggregate: Aggregate,
    #[serde(default = "one")]
    pub p: f64,
}

fn one() -> f64 {
    1.0
}

fn default_kappa_tilde() -> f64 {
    0.3
}

fn default_r_hat() -> RHatPolicy {
    RHatPolicy::ConstantOne
}

fn default_det_tol() -> f64 {
    DEFAULT_DET_TOL
}

fn default_replicates() -> usize {
    30
}

fn positive(path: &str, x: f64) -> Result<(), ConfigError> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(field(path, format!("must be a positive number, got {x}")))
    }
}

fn check_kmeans(path: &str, k: &KMeansConfig) -> Result<(), ConfigError> {
    if k.restarts < 1 {
        return Err(field(&format!("{path}.restarts"), "must be >= 1"));
    }
    if k.max_iters < 1 {
        return Err(field(&format!("{path}.max_iters"), "must be >= 1"));
    }
    if !(k.tol >= 0.0) {
        return Err(field(&format!("{path}.tol"), "must be >= 0"));
    }
    Ok(())
}

impl CliConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: CliConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            if path == "." {
                ConfigError(e.inner().to_string())
            } else {
                field(&path, e.inner())
            }
        })?;
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<(), ConfigError> {
        if let Some(m) = &self.model {
            positive("model.alpha", m.alpha)?;
            if !(m.s > 0.0 && m.s < 0.5) {
                return Err(field("model.s", format!("must lie in (0, 0.5), got {}", m.s)));
            }
            positive("model.zeta", m.zeta)?;
            if let Some(a) = &m.a {
                if a.is_empty() || a.iter().any(|r| r.len() != a[0].len()) {
                    return Err(field("model.a", "must be a non-empty rectangular list of rows"));
                }
                if a.iter().flatten().any(|&x| !(x >= 0.0) || !x.is_finite()) {
                    return Err(field("model.a", "entries must be finite and non-negative"));
                }
            }
            if let Some(LatentKind::Custom { c }) = &m.latent_kind {
                if c.iter().any(|&x| !(x > 0.0)) {
                    return Err(field("model.latent_kind.custom.c", "entries must be positive"));
                }
            }
            if m.n == Some(0) {
                return Err(field("model.n", "must be >= 1"));
            }
        }
        if let Some(e) = &self.estimator {
            if let Some(a) = e.alpha {
                positive("estimator.alpha", a)?;
            }
            if let Some(s) = e.s {
                if !(s > 0.0 && s < 0.5) {
                    return Err(field("estimator.s", format!("must lie in (0, 0.5), got {s}")));
                }
            }
            if let Some(c) = &e.conv {
                positive("estimator.conv.kappa_bar", c.kappa_bar)?;
                if c.collapse_k == Some(0) {
                    return Err(field("estimator.conv.collapse_k", "must be >= 1"));
                }
                check_kmeans("estimator.conv.kmeans", &c.kmeans)?;
            }
            if let Some(t) = &e.two_step {
                positive("estimator.two_step.kappa_tilde", t.kappa_tilde)?;
                positive("estimator.two_step.kappa", t.kappa)?;
                positive("estimator.two_step.det_tol", t.det_tol)?;
                positive("estimator.two_step.r_hat_policy", t.r_hat_policy.value())?;
                check_kmeans("estimator.two_step.kmeans", &t.kmeans)?;
            }
        }
        if let Some(x) = &self.experiment {
            if x.n_grid.len() < 3 {
                return Err(field("experiment.n_grid", "needs at least 3 sizes"));
            }
            if x.n_grid.windows(2).any(|w| w[0] >= w[1]) {
                return Err(field("experiment.n_grid", "must be strictly increasing"));
            }
            if x.n_grid[0] < 3 {
                return Err(field("experiment.n_grid", "every n must be >= 3"));
            }
            if x.replicates < 1 {
                return Err(field("experiment.replicates", "must be >= 1"));
            }
            if !(x.p >= 1.0) {
                return Err(field("experiment.p", format!("must be >= 1, got {}", x.p)));
            }
        }
        Ok(())
    }

    pub fn model(&self) -> Result<&ModelSection, ConfigError> {
        self.model.as_ref().ok_or_else(|| ConfigError("model: section required".into()))
    }

    pub fn template(&self) -> Result<ModelTemplate, ConfigError> {
        let m = self.model()?;
        let (loading, default_kind) = match &m.a {
            None => (LoadingRule::WorstCaseDiagonal, LatentKind::TiltedWorstCase),
            Some(rows) => (
                LoadingRule::Fixed(Matrix::from_rows(rows).map_err(|e| field("model.a", e))?),
                LatentKind::IidPareto,
            ),
        };
        Ok(ModelTemplate {
            loading,
            alpha: m.alpha,
            s: m.s,
            latent_kind: m.latent_kind.clone().unwrap_or(default_kind),
            zeta: m.zeta,
        })
    }

    /// Tail index and deviation used by the estimators.
    fn estimator_alpha_s(&self) -> Result<(f64, f64), ConfigError> {
        let e = self.estimator.clone().unwrap_or_default();
        let alpha = e.alpha.or(self.model.as_ref().map(|m| m.alpha));
        let s = e.s.or(self.model.as_ref().map(|m| m.s));
        match (alpha, s) {
            (Some(a), Some(s)) => Ok((a, s)),
            (None, _) => Err(ConfigError("estimator.alpha: required when there is no model section".into())),
            (_, None) => Err(ConfigError("estimator.s: required when there is no model section".into())),
        }
    }

    pub fn conv(&self, d: usize) -> Result<ConvConfig, ConfigError> {
        let (alpha, s) = self.estimator_alpha_s()?;
        let sec = self.estimator.as_ref().and_then(|e| e.conv.clone()).unwrap_or_default();
        let k = sec.collapse_k.unwrap_or(d);
        Ok(ConvConfig {
            kappa_bar: sec.kappa_bar,
            alpha,
            s,
            collapse_k: k,
            kmeans: KMeansConfig { k, ..sec.kmeans },
        })
    }

    pub fn two_step(&self, m: usize) -> Result<TwoStepConfig, ConfigError> {
        let (alpha, s) = self.estimator_alpha_s()?;
        let sec = self.estimator.as_ref().and_then(|e| e.two_step.clone()).unwrap_or_default();
        Ok(TwoStepConfig {
            kappa_tilde: sec.kappa_tilde,
            kappa: sec.kappa,
            alpha,
            s,
            m,
            r_hat_policy: sec.r_hat_policy,
            kmeans: KMeansConfig { k: m, ..sec.kmeans },
            det_tol: sec.det_tol,
        })
    }

    pub fn experiment(&self, seed_override: Option<u64>) -> Result<ExperimentConfig, ConfigError> {
        let x = self.experiment.as_ref().ok_or_else(|| ConfigError("experiment: section required".into()))?;
        let template = self.template()?;
        let d = template.loading_at(x.n_grid[0]).map_err(|e| field("model", e))?.rows();
        let est = self.estimator.as_ref().ok_or_else(|| {
            ConfigError("estimator: section required (with `conv` and/or `two_step`)".into())
        })?;
        if est.conv.is_none() && est.two_step.is_none() {
            return Err(field("estimator", "select at least one of `conv`, `two_step`"));
        }
        let conv = est.conv.as_ref().map(|_| self.conv(d)).transpose()?;
        let two_step = est.two_step.as_ref().map(|_| self.two_step(d)).transpose()?;
        let cfg = ExperimentConfig {
            model: template,
            conv,
            two_step,
            n_grid: x.n_grid.clone(),
            replicates: x.replicates,
            base_seed: seed_override.unwrap_or(x.base_seed),
            aggregate: x.aggregate,
            p: x.p,
        };
        cfg.validate().map_err(|e| ConfigError(format!("experiment: {e}")))?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_field_names_its_path() {
        let err = CliConfig::parse(r#"{"model": {"s": 0.2}}"#).unwrap_err();
        assert!(err.0.contains("model") && err.0.contains("alpha"), "{err}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(CliConfig::parse(r#"{"modle": {}}"#).is_err());
        let err = CliConfig::parse(r#"{"model": {"alpha": 1, "s": 0.2, "beta": 3}}"#).unwrap_err();
        assert!(err.0.contains("beta"), "{err}");
    }

    #[test]
    fn ranges_are_checked() {
        let err = CliConfig::parse(r#"{"model": {"alpha": -1, "s": 0.2}}"#).unwrap_err();
        assert!(err.0.starts_with("model.alpha"), "{err}");
        let err = CliConfig::parse(r#"{"model": {"alpha": 1, "s": 0.7}}"#).unwrap_err();
        assert!(err.0.starts_with("model.s"), "{err}");
        let err = CliConfig::parse(
            r#"{"model": {"alpha": 1, "s": 0.2}, "experiment": {"n_grid": [8, 4, 16], "base_seed": 1}}"#,
        )
        .unwrap_err();
        assert!(err.0.starts_with("experiment.n_grid"), "{err}");
    }

    #[test]
    fn experiment_defaults() {
        let cfg = CliConfig::parse(
            r#"{"model": {"alpha": 2, "s": 0.2}, "estimator": {"conv": {}}, "experiment": {"base_seed": 7}}"#,
        )
        .unwrap();
        let x = cfg.experiment(Some(9)).unwrap();
        assert_eq!(x.n_grid, default_n_grid());
        assert_eq!(x.replicates, 30);
        assert_eq!(x.base_seed, 9);
        assert!(x.two_step.is_none());
        assert_eq!(x.conv.unwrap().kappa_bar, 1.0);
        assert_eq!(x.model.latent_kind, LatentKind::TiltedWorstCase);
    }
}
