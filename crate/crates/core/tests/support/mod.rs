//! Independent oracles for the integration and acceptance tests. Nothing in
//! here calls into the solver paths it is used to check.
#![allow(dead_code)]

use tailspec_core::sampling::RngStream;
use tailspec_core::DiscreteMeasure;

/// Solves the square system `a x = b` by elimination with partial pivoting.
/// Returns `None` when the system is singular.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        let (top, rest) = a.split_at_mut(col + 1);
        let pivot_row = &top[col];
        for (k, row) in rest.iter_mut().enumerate() {
            let f = row[col] / pivot_row[col];
            for (x, p) in row[col..].iter_mut().zip(&pivot_row[col..]) {
                *x -= f * p;
            }
            b[col + 1 + k] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = ((r + 1)..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Minimum transport cost by enumerating every basic solution of the
/// transportation polytope (subsets of `m + n - 1` cells). Only for tiny sizes.
pub fn brute_force_transport(mu: &DiscreteMeasure, nu: &DiscreteMeasure, p: f64) -> f64 {
    let (m, n) = (mu.len(), nu.len());
    let cost = |i: usize, j: usize| -> f64 {
        let d: f64 = mu.atoms()[i].iter().zip(&nu.atoms()[j]).map(|(a, b)| (a - b).abs()).sum();
        d.powf(p)
    };
    let k = m + n - 1;
    let mut best = f64::INFINITY;
    for cells in combinations(m * n, k) {
        // equations: all row sums and the first n-1 column sums (the last is implied)
        let mut a = vec![vec![0.0; k]; k];
        let mut b = vec![0.0; k];
        for (e, row) in a.iter_mut().enumerate().take(m) {
            for (v, &c) in cells.iter().enumerate() {
                if c / n == e {
                    row[v] = 1.0;
                }
            }
            b[e] = mu.weights()[e];
        }
        for j in 0..(n - 1) {
            for (v, &c) in cells.iter().enumerate() {
                if c % n == j {
                    a[m + j][v] = 1.0;
                }
            }
            b[m + j] = nu.weights()[j];
        }
        let Some(x) = solve_dense(a, b) else { continue };
        if x.iter().any(|&v| v < -1e-12) {
            continue;
        }
        let c: f64 = cells.iter().zip(&x).map(|(&cell, &v)| v * cost(cell / n, cell % n)).sum();
        best = best.min(c);
    }
    best
}

/// A random valid measure on the `dim`-simplex with `1..=max_atoms` atoms.
pub fn random_measure(rng: &mut RngStream, dim: usize, max_atoms: usize) -> DiscreteMeasure {
    let k = 1 + rng.index(max_atoms);
    let atoms: Vec<Vec<f64>> = (0..k)
        .map(|_| {
            // normalized exponentials are uniform on the simplex
            let e: Vec<f64> = (0..dim).map(|_| -(1.0 - rng.uniform()).ln()).collect();
            let s: f64 = e.iter().sum();
            e.iter().map(|x| x / s).collect()
        })
        .collect();
    let weights: Vec<f64> = (0..k).map(|_| 0.05 + rng.uniform()).collect();
    DiscreteMeasure::from_weighted_atoms(atoms, weights).unwrap()
}

/// Composite Simpson rule on `[a, b]` with `n` (even) panels.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

pub fn pareto_density(z: f64, alpha: f64) -> f64 {
    alpha * (1.0 + z).powf(-(alpha + 1.0))
}

/// `P(z1 > a | z1 + z2 >= t)` for two i.i.d. Pareto(alpha) coordinates, by
/// 2-d quadrature of the product density over the triangle `{z1 + z2 < t}`.
pub fn conditional_tail_quadrature(alpha: f64, t: f64, a: f64) -> f64 {
    let below = simpson(
        |z1| simpson(|z2| pareto_density(z1, alpha) * pareto_density(z2, alpha), 0.0, t - z1, 400),
        0.0,
        t,
        400,
    );
    let p_region = 1.0 - below;
    // {z1 > a}: outer integral of the density over [a, inf), inner over all z2
    // (mass 1); the substitution z1 = a + u/(1-u) maps it onto [0, 1).
    let p_joint = if a >= t {
        simpson(
            |u| {
                if u >= 1.0 {
                    0.0
                } else {
                    let z = a + u / (1.0 - u);
                    pareto_density(z, alpha) / ((1.0 - u) * (1.0 - u))
                }
            },
            0.0,
            1.0,
            20_000,
        )
    } else {
        panic!("oracle only covers a >= t");
    };
    p_joint / p_region
}

/// Kolmogorov-Smirnov distance between a sample and a continuous CDF.
pub fn ks_distance<F: Fn(f64) -> f64>(mut xs: Vec<f64>, cdf: F) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Root of a monotone function on `[lo, hi]` by bisection.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> f64 {
    let f_lo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (f(mid) > 0.0) == (f_lo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
