//! Latent-factor samplers and dataset generation for `X = AZ`.
//!
//! All randomness comes from [`RngStream`]: ChaCha12 keyed with
//! `rand_chacha::ChaCha12Rng::seed_from_u64(seed)` and switched to stream
//! `stream_id` with `set_stream`. ChaCha is a counter-based cipher, so the
//! `(seed, stream_id)` pair names an independent, platform-stable sequence.
//! Uniforms are `[0, 1)` doubles with 53 random bits.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{fmt17, LatentKind, ModelSpec};

/// Number of pilot draws used to size the rejection budget.
pub const PILOT_DRAWS: usize = 10_000;
/// Rejection budget multiplier over the expected number of trials.
pub const TRIAL_BUDGET_FACTOR: u64 = 1000;

/// A seeded, reproducible stream of uniforms.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha12Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self { seed, stream_id, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    /// Standard normal via Box-Muller (used by test fixtures).
    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }
}

/// SplitMix64 finalizer; derives well-mixed child seeds from structured inputs.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Inverse CDF of the shifted Pareto law `f(x) = alpha (1 + x)^{-(alpha+1)}`.
pub fn pareto_from_uniform(u: f64, alpha: f64) -> f64 {
    // (1-u)^{-1/alpha} - 1 without cancellation near u = 0
    (-(-u).ln_1p() / alpha).exp_m1()
}

/// Inverse CDF of the tilted law with density `alpha c (1 + c z)^{-(alpha+1)}`.
pub fn tilted_pareto_from_uniform(u: f64, alpha: f64, c: f64) -> f64 {
    pareto_from_uniform(u, alpha) / c
}

pub fn sample_pareto(alpha: f64, rng: &mut RngStream) -> f64 {
    pareto_from_uniform(rng.uniform(), alpha)
}

pub fn sample_tilted_pareto(alpha: f64, c: f64, rng: &mut RngStream) -> f64 {
    tilted_pareto_from_uniform(rng.uniform(), alpha, c)
}

/// `m` i.i.d. Pareto(alpha) coordinates conditioned on `|z|_1 >= t`, by rejection.
/// Also returns the number of draws used.
pub fn sample_conditional_pareto_vec_counted(
    m: usize,
    alpha: f64,
    t: f64,
    rng: &mut RngStream,
    max_trials: u64,
) -> Result<(Vec<f64>, u64)> {
    let mut z = vec![0.0; m];
    for trial in 1..=max_trials {
        let mut norm = 0.0;
        for zi in z.iter_mut() {
            *zi = sample_pareto(alpha, rng);
            norm += *zi;
        }
        if norm >= t {
            return Ok((z, trial));
        }
    }
    Err(Error::MaxTrialsExceeded { max_trials, threshold: t })
}

pub fn sample_conditional_pareto_vec(
    m: usize,
    alpha: f64,
    t: f64,
    rng: &mut RngStream,
    max_trials: u64,
) -> Result<Vec<f64>> {
    sample_conditional_pareto_vec_counted(m, alpha, t, rng, max_trials).map(|(z, _)| z)
}

/// Monte Carlo estimate of `P(|Z|_1 >= t)` for `m` i.i.d. Pareto(alpha) coordinates.
pub fn pilot_exceedance(m: usize, alpha: f64, t: f64, draws: usize, rng: &mut RngStream) -> f64 {
    let hits = (0..draws)
        .filter(|_| (0..m).map(|_| sample_pareto(alpha, rng)).sum::<f64>() >= t)
        .count();
    hits as f64 / draws as f64
}

/// Rejection budget `1000 * ceil(1 / p)`; a zero pilot estimate is treated as
/// one hit so the budget stays finite.
pub fn trial_budget(p_hat: f64, draws: usize) -> u64 {
    let p = p_hat.max(1.0 / draws as f64);
    TRIAL_BUDGET_FACTOR * (1.0 / p).ceil() as u64
}

/// Tilt `n^{-s}` of the worst-case law at sample size `n`.
pub fn worst_case_tilt(n: usize, s: f64) -> f64 {
    (n as f64).powf(-s)
}

/// Tail threshold `zeta * n^{(1-2s)/alpha}` of the worst-case law.
pub fn worst_case_threshold(n: usize, alpha: f64, s: f64, zeta: f64) -> f64 {
    zeta * (n as f64).powf((1.0 - 2.0 * s) / alpha)
}

/// Latent-factor sampler prepared for one model and one sample size.
#[derive(Debug, Clone)]
pub struct LatentSampler {
    alpha: f64,
    m: usize,
    law: Law,
}

#[derive(Debug, Clone)]
enum Law {
    Iid,
    Worst { tilts: [f64; 2], threshold: f64, max_trials: u64 },
    Custom(Vec<f64>),
}

impl LatentSampler {
    /// `pilot` only feeds the rejection-budget estimate of the worst-case law.
    pub fn new(spec: &ModelSpec, n_context: usize, pilot: &mut RngStream) -> Result<Self> {
        if n_context < 2 {
            return Err(Error::ConfigInvalid(format!("sample size must be >= 2, got {n_context}")));
        }
        let m = spec.m();
        let law = match &spec.latent_kind {
            LatentKind::IidPareto => Law::Iid,
            LatentKind::TiltedWorstCase => {
                if m != 2 {
                    return Err(Error::WorstCaseDimension(m));
                }
                let tilt = worst_case_tilt(n_context, spec.s);
                let threshold = worst_case_threshold(n_context, spec.alpha, spec.s, spec.zeta);
                let p_hat = pilot_exceedance(2, spec.alpha, threshold, PILOT_DRAWS, pilot);
                Law::Worst {
                    tilts: [1.0 + tilt, 1.0 - tilt],
                    threshold,
                    max_trials: trial_budget(p_hat, PILOT_DRAWS),
                }
            }
            LatentKind::Custom { c } => {
                if c.len() != m {
                    return Err(Error::DimensionMismatch { expected: m, got: c.len() });
                }
                Law::Custom(c.clone())
            }
        };
        Ok(Self { alpha: spec.alpha, m, law })
    }

    /// Draws one latent vector; the second value is the number of rejection
    /// trials spent on a tail replacement (0 when none happened).
    pub fn sample_counted(&self, rng: &mut RngStream) -> Result<(Vec<f64>, u64)> {
        match &self.law {
            Law::Iid => Ok(((0..self.m).map(|_| sample_pareto(self.alpha, rng)).collect(), 0)),
            Law::Custom(c) => {
                Ok((c.iter().map(|&cj| sample_tilted_pareto(self.alpha, cj, rng)).collect(), 0))
            }
            Law::Worst { tilts, threshold, max_trials } => {
                let z: Vec<f64> =
                    tilts.iter().map(|&c| sample_tilted_pareto(self.alpha, c, rng)).collect();
                if z[0] + z[1] < *threshold {
                    return Ok((z, 0));
                }
                sample_conditional_pareto_vec_counted(2, self.alpha, *threshold, rng, *max_trials)
            }
        }
    }

    pub fn sample(&self, rng: &mut RngStream) -> Result<Vec<f64>> {
        self.sample_counted(rng).map(|(z, _)| z)
    }
}

/// One latent draw. Builds a fresh [`LatentSampler`] whose pilot stream is
/// derived from `rng`'s seed; prefer [`LatentSampler`] for repeated draws.
pub fn sample_latent(spec: &ModelSpec, n_context: usize, rng: &mut RngStream) -> Result<Vec<f64>> {
    let mut pilot = pilot_stream(rng.seed(), rng.stream_id());
    LatentSampler::new(spec, n_context, &mut pilot)?.sample(rng)
}

fn pilot_stream(seed: u64, stream_id: u64) -> RngStream {
    RngStream::new(mix_seed(seed, 0x0050_494C_4F54), stream_id)
}

/// `n` observations of one model with the seed that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub spec: ModelSpec,
    pub seed: u64,
    pub stream_id: u64,
    pub xs: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    spec: ModelSpec,
    seed: u64,
    stream_id: u64,
    n: usize,
}

/// Draws `n` observations `x_i = A z_i`, deterministic in `(seed, stream_id)`.
/// Worst-case tilts and thresholds use `n` as the sample-size context.
pub fn generate_dataset(spec: &ModelSpec, n: usize, seed: u64, stream_id: u64) -> Result<SampleBatch> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::ConfigInvalid("n must be >= 1".into()));
    }
    let mut pilot = pilot_stream(seed, stream_id);
    let sampler = LatentSampler::new(spec, n.max(2), &mut pilot)?;
    let mut rng = RngStream::new(seed, stream_id);
    let mut xs = Vec::with_capacity(n);
    for _ in 0..n {
        let z = sampler.sample(&mut rng)?;
        xs.push(spec.a.mul_vec(&z));
    }
    Ok(SampleBatch { spec: spec.clone(), seed, stream_id, xs })
}

impl SampleBatch {
    pub fn n(&self) -> usize {
        self.xs.len()
    }

    pub fn d(&self) -> usize {
        self.spec.d()
    }

    /// CSV with header `x1,...,xd` and 17-significant-digit values.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_samples_csv(&self.xs, self.d(), out)
    }

    pub fn sidecar_json(&self) -> String {
        let side = Sidecar {
            spec: self.spec.clone(),
            seed: self.seed,
            stream_id: self.stream_id,
            n: self.n(),
        };
        serde_json::to_string_pretty(&side).expect("sidecar serializes") + "\n"
    }

    /// Writes `path` (CSV) and the sidecar next to it with extension `.json`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))?;
        std::fs::write(path.with_extension("json"), self.sidecar_json())?;
        Ok(())
    }
}

pub fn write_samples_csv<W: Write>(xs: &[Vec<f64>], d: usize, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let header: Vec<String> = (1..=d).map(|j| format!("x{j}")).collect();
    w.write_record(&header).map_err(csv_err)?;
    for x in xs {
        if x.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: x.len() });
        }
        w.write_record(x.iter().map(|&v| fmt17(v))).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a sample CSV written by [`write_samples_csv`]; returns the rows.
pub fn read_samples_csv<R: Read>(input: R) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::Reader::from_reader(input);
    let d = r.headers().map_err(csv_err)?.len();
    if d == 0 {
        return Err(Error::Parse("sample CSV has an empty header".into()));
    }
    let mut xs = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let row = rec
            .iter()
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| Error::Parse(format!("row {}: {e}", line + 1)))?;
        if row.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: row.len() });
        }
        if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Parse(format!("row {}: samples must be finite and >= 0", line + 1)));
        }
        xs.push(row);
    }
    Ok(xs)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}
