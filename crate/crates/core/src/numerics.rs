//! Small numeric kernels: Lloyd's k-means with k-means++ seeding, dense
//! matrix inversion, and the log-log least-squares fit used for rates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{lex_cmp, Matrix};
use crate::sampling::{mix_seed, RngStream};

pub const DEFAULT_DET_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KMeansConfig {
    pub k: usize,
    pub max_iters: usize,
    /// Stop when no center moves more than this in l1.
    pub tol: f64,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self { k: 2, max_iters: 100, tol: 1e-9, restarts: 10, seed: 0 }
    }
}

impl KMeansConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 || self.max_iters < 1 || self.restarts < 1 || !(self.tol > 0.0) {
            return Err(Error::ConfigInvalid(format!(
                "k-means needs k, max_iters, restarts >= 1 and tol > 0, got {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    /// Sorted lexicographically.
    pub centers: Vec<Vec<f64>>,
    /// Fraction of points per center.
    pub weights: Vec<f64>,
    pub inertia: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest center, lowest index on ties.
fn nearest(p: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.iter().enumerate() {
        let d = sq_dist(p, center);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn plus_plus_seed(points: &[Vec<f64>], k: usize, rng: &mut RngStream) -> Vec<Vec<f64>> {
    let mut centers = vec![points[rng.index(points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.uniform() * total;
            let mut acc = 0.0;
            let mut idx = points.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if acc > target {
                    idx = i;
                    break;
                }
            }
            idx
        } else {
            rng.index(points.len())
        };
        centers.push(points[pick].clone());
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &centers[centers.len() - 1]));
        }
    }
    centers
}

struct LloydRun {
    centers: Vec<Vec<f64>>,
    counts: Vec<usize>,
    inertia: f64,
    /// Inertia after each assignment step.
    #[cfg_attr(not(test), allow(dead_code))]
    history: Vec<f64>,
}

fn lloyd(points: &[Vec<f64>], cfg: &KMeansConfig, rng: &mut RngStream) -> LloydRun {
    let k = cfg.k;
    let dim = points[0].len();
    let mut centers = plus_plus_seed(points, k, rng);
    let mut assign = vec![0usize; points.len()];
    let mut history = Vec::new();

    for _ in 0..cfg.max_iters {
        let mut inertia = 0.0;
        for (i, p) in points.iter().enumerate() {
            let (c, d) = nearest(p, &centers);
            assign[i] = c;
            inertia += d;
        }
        history.push(inertia);

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &c) in points.iter().zip(&assign) {
            counts[c] += 1;
            for (s, x) in sums[c].iter_mut().zip(p) {
                *s += x;
            }
        }
        let mut new_centers: Vec<Vec<f64>> = sums
            .into_iter()
            .zip(&counts)
            .map(|(s, &cnt)| if cnt > 0 { s.into_iter().map(|x| x / cnt as f64).collect() } else { Vec::new() })
            .collect();
        // An empty cluster is reseeded at the point farthest from its center.
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..points.len())
                    .max_by(|&a, &b| {
                        let da = sq_dist(&points[a], &centers[assign[a]]);
                        let db = sq_dist(&points[b], &centers[assign[b]]);
                        da.total_cmp(&db).then(b.cmp(&a))
                    })
                    .expect("non-empty points");
                new_centers[c] = points[far].clone();
                assign[far] = c;
            }
        }
        let shift = centers
            .iter()
            .zip(&new_centers)
            .map(|(a, b)| crate::model::l1_dist(a, b))
            .fold(0.0, f64::max);
        centers = new_centers;
        if shift <= cfg.tol {
            break;
        }
    }

    let mut counts = vec![0usize; k];
    let mut inertia = 0.0;
    for p in points {
        let (c, d) = nearest(p, &centers);
        counts[c] += 1;
        inertia += d;
    }
    history.push(inertia);
    LloydRun { centers, counts, inertia, history }
}

fn finish(run: LloydRun, n: usize) -> KMeansResult {
    let mut order: Vec<usize> = (0..run.centers.len()).collect();
    order.sort_by(|&a, &b| lex_cmp(&run.centers[a], &run.centers[b]));
    KMeansResult {
        centers: order.iter().map(|&c| run.centers[c].clone()).collect(),
        weights: order.iter().map(|&c| run.counts[c] as f64 / n as f64).collect(),
        inertia: run.inertia,
    }
}

fn prepare(points: &[Vec<f64>], cfg: &KMeansConfig) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    if points.len() < cfg.k {
        return Err(Error::TooFewPoints { needed: cfg.k, got: points.len() });
    }
    let dim = points[0].len();
    if let Some(bad) = points.iter().find(|p| p.len() != dim) {
        return Err(Error::DimensionMismatch { expected: dim, got: bad.len() });
    }
    // Sorting first makes the result independent of the input order.
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| lex_cmp(a, b));
    Ok(sorted)
}

/// Lloyd's algorithm with k-means++ seeding; keeps the restart with the
/// lowest inertia (ties broken by the lexicographically smaller centers).
/// Squared Euclidean distance throughout.
pub fn kmeans(points: &[Vec<f64>], cfg: &KMeansConfig) -> Result<KMeansResult> {
    let sorted = prepare(points, cfg)?;
    let mut best: Option<KMeansResult> = None;
    for restart in 0..cfg.restarts {
        let mut rng = RngStream::new(mix_seed(cfg.seed, 0x4B4D_4541_4E53), restart as u64);
        let res = finish(lloyd(&sorted, cfg, &mut rng), sorted.len());
        let better = match &best {
            None => true,
            Some(b) => {
                res.inertia < b.inertia
                    || (res.inertia == b.inertia
                        && res.centers.iter().flatten().partial_cmp(b.centers.iter().flatten())
                            == Some(std::cmp::Ordering::Less))
            }
        };
        if better {
            best = Some(res);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Inverse by Gauss-Jordan elimination with partial pivoting. Fails with
/// `NearSingular` when a pivot or the determinant falls below `det_tol`.
pub fn invert_square_matrix(m: &Matrix, det_tol: f64) -> Result<Matrix> {
    let n = m.rows();
    if m.cols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: m.cols() });
    }
    let mut a = m.clone();
    let mut inv = Matrix::identity(n);
    let mut det = 1.0;
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&x, &y| a[(x, col)].abs().total_cmp(&a[(y, col)].abs()))
            .expect("non-empty");
        let p = a[(piv, col)];
        if !(p.abs() >= det_tol) {
            return Err(Error::NearSingular { value: p.abs(), tol: det_tol });
        }
        if piv != col {
            for j in 0..n {
                let t = a[(col, j)];
                a[(col, j)] = a[(piv, j)];
                a[(piv, j)] = t;
                let t = inv[(col, j)];
                inv[(col, j)] = inv[(piv, j)];
                inv[(piv, j)] = t;
            }
            det = -det;
        }
        det *= p;
        for j in 0..n {
            a[(col, j)] /= p;
            inv[(col, j)] /= p;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = a[(r, col)];
            if f == 0.0 {
                continue;
            }
            for j in 0..n {
                a[(r, j)] -= f * a[(col, j)];
                inv[(r, j)] -= f * inv[(col, j)];
            }
        }
    }
    if !(det.abs() >= det_tol) {
        return Err(Error::NearSingular { value: det.abs(), tol: det_tol });
    }
    Ok(inv)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Ordinary least squares of `ln err` on `ln n`.
pub fn fit_loglog_slope(ns: &[usize], errs: &[f64]) -> Result<SlopeFit> {
    if ns.len() != errs.len() {
        return Err(Error::DimensionMismatch { expected: ns.len(), got: errs.len() });
    }
    if ns.len() < 2 {
        return Err(Error::TooFewPoints { needed: 2, got: ns.len() });
    }
    if ns.contains(&0) || errs.iter().any(|&e| !(e > 0.0) || !e.is_finite()) {
        return Err(Error::ConfigInvalid("log-log fit needs positive n and errors".into()));
    }
    let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateDesign);
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(SlopeFit { slope, intercept, r2 })
}
