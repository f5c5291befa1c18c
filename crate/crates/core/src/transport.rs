//! Exact p-Wasserstein distance between discrete measures on the simplex.
//!
//! The transportation LP is solved with the primal network simplex on the
//! complete bipartite graph between the two supports. A basis is a spanning
//! tree with `rows + cols - 1` cells; the initial tree comes from the
//! north-west corner rule. Pivots use the most negative reduced cost and fall
//! back to Bland's smallest-index rule after a run of degenerate pivots, which
//! rules out cycling. The final plan is certified against the dual potentials.

use crate::error::{Error, Result};
use crate::model::{l1_dist, DiscreteMeasure};

/// Atoms lighter than this are removed before solving.
pub const DROP_WEIGHT: f64 = 1e-15;
/// Tolerance of the complementary-slackness certificate.
pub const CERT_TOL: f64 = 1e-8;

const DEGENERATE_RUN: usize = 50;

/// An optimal coupling between two discrete measures.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub rows: usize,
    pub cols: usize,
    /// Row-major `rows x cols` mass matrix.
    pub gamma: Vec<f64>,
    pub cost: f64,
}

impl TransportPlan {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.gamma[i * self.cols + j]
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|i| (0..self.cols).map(|j| self.get(i, j)).sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        (0..self.cols).map(|j| (0..self.rows).map(|i| self.get(i, j)).sum()).collect()
    }

    /// CSV with header `i,j,mass`, non-zero cells only.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("i,j,mass\n");
        for i in 0..self.rows {
            for j in 0..self.cols {
                let g = self.get(i, j);
                if g > 0.0 {
                    out.push_str(&format!("{i},{j},{}\n", crate::model::fmt17(g)));
                }
            }
        }
        out
    }
}

/// `|w - w2|_1^p`.
pub fn ground_cost(w: &[f64], w2: &[f64], p: f64) -> Result<f64> {
    if w.len() != w2.len() {
        return Err(Error::DimensionMismatch { expected: w.len(), got: w2.len() });
    }
    check_order(p)?;
    let d = l1_dist(w, w2);
    Ok(if p == 1.0 { d } else { d.powf(p) })
}

fn check_order(p: f64) -> Result<()> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::ConfigInvalid(format!("Wasserstein order must be >= 1, got {p}")));
    }
    Ok(())
}

/// `W_p^p(mu, nu)`: the optimal transport cost under `|.|_1^p`, with a plan.
pub fn wasserstein_pp(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    p: f64,
) -> Result<(f64, TransportPlan)> {
    check_order(p)?;
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch { expected: mu.dim(), got: nu.dim() });
    }
    let keep_r: Vec<usize> = (0..mu.len()).filter(|&i| mu.weights()[i] >= DROP_WEIGHT).collect();
    let keep_c: Vec<usize> = (0..nu.len()).filter(|&j| nu.weights()[j] >= DROP_WEIGHT).collect();
    let supply: Vec<f64> = keep_r.iter().map(|&i| mu.weights()[i]).collect();
    let mut demand: Vec<f64> = keep_c.iter().map(|&j| nu.weights()[j]).collect();
    // rebalance the sub-1e-9 mass mismatch so the LP is exactly feasible
    let ratio = supply.iter().sum::<f64>() / demand.iter().sum::<f64>();
    for b in &mut demand {
        *b *= ratio;
    }
    let mut cost = vec![0.0; keep_r.len() * keep_c.len()];
    for (a, &i) in keep_r.iter().enumerate() {
        for (b, &j) in keep_c.iter().enumerate() {
            cost[a * keep_c.len() + b] = ground_cost(&mu.atoms()[i], &nu.atoms()[j], p)?;
        }
    }
    let solved = solve_transport(&supply, &demand, &cost)?;

    let (rows, cols) = (mu.len(), nu.len());
    let mut gamma = vec![0.0; rows * cols];
    for (a, &i) in keep_r.iter().enumerate() {
        for (b, &j) in keep_c.iter().enumerate() {
            gamma[i * cols + j] = solved.flow[a * keep_c.len() + b];
        }
    }
    let value = solved.cost;
    Ok((value, TransportPlan { rows, cols, gamma, cost: value }))
}

/// `W_p(mu, nu) = (W_p^p)^{1/p}`.
pub fn wasserstein_p(mu: &DiscreteMeasure, nu: &DiscreteMeasure, p: f64) -> Result<f64> {
    let (pp, _) = wasserstein_pp(mu, nu, p)?;
    Ok(if p == 1.0 { pp } else { pp.max(0.0).powf(1.0 / p) })
}

/// Solution of a balanced transportation problem.
#[derive(Debug, Clone)]
pub struct TransportSolution {
    pub flow: Vec<f64>,
    pub cost: f64,
    pub row_potential: Vec<f64>,
    pub col_potential: Vec<f64>,
}

/// Solves `min sum c_ij x_ij` s.t. row sums `supply`, column sums `demand`,
/// `x >= 0`. Totals must agree (up to rounding).
pub fn solve_transport(supply: &[f64], demand: &[f64], cost: &[f64]) -> Result<TransportSolution> {
    let (m, n) = (supply.len(), demand.len());
    if m == 0 || n == 0 {
        return Err(Error::InvalidMeasure("empty support".into()));
    }
    if cost.len() != m * n {
        return Err(Error::DimensionMismatch { expected: m * n, got: cost.len() });
    }
    let mut tree = BasisTree::north_west(supply, demand);
    let scale = cost.iter().fold(0.0f64, |a, c| a.max(c.abs())).max(1.0);
    let eps = 1e-13 * scale;
    let max_pivots = 50 * (m + n) * (m + n) + 1000;
    let mut degenerate_run = 0usize;

    let (mut u, mut v) = tree.potentials(cost);
    for _ in 0..max_pivots {
        let bland = degenerate_run >= DEGENERATE_RUN;
        let Some((ei, ej)) = tree.entering(cost, &u, &v, eps, bland) else {
            return certify(&tree, supply, demand, cost, &u, &v);
        };
        let theta = tree.pivot(ei, ej, bland)?;
        if theta > 0.0 {
            degenerate_run = 0;
        } else {
            degenerate_run += 1;
        }
        (u, v) = tree.potentials(cost);
    }
    Err(Error::SolverFailure(format!("no convergence within {max_pivots} pivots")))
}

fn certify(
    tree: &BasisTree,
    supply: &[f64],
    demand: &[f64],
    cost: &[f64],
    u: &[f64],
    v: &[f64],
) -> Result<TransportSolution> {
    let (m, n) = (supply.len(), demand.len());
    let mut flow = vec![0.0; m * n];
    for &(i, j, x) in &tree.cells {
        if x < -1e-12 {
            return Err(Error::SolverFailure(format!("negative flow {x} at ({i},{j})")));
        }
        flow[i * n + j] = x.max(0.0);
    }
    let primal: f64 = flow.iter().zip(cost).map(|(x, c)| x * c).sum();
    let dual: f64 =
        supply.iter().zip(u).map(|(a, b)| a * b).sum::<f64>() + demand.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    let scale = cost.iter().fold(1.0f64, |a, c| a.max(c.abs()));
    for i in 0..m {
        for j in 0..n {
            let reduced = cost[i * n + j] - u[i] - v[j];
            if reduced < -CERT_TOL * scale {
                return Err(Error::SolverFailure(format!("dual infeasible at ({i},{j}): {reduced}")));
            }
            if flow[i * n + j] > 1e-12 && reduced.abs() > CERT_TOL * scale {
                return Err(Error::SolverFailure(format!("slackness violated at ({i},{j})")));
            }
        }
    }
    if (primal - dual).abs() > CERT_TOL * scale {
        return Err(Error::SolverFailure(format!("duality gap {}", primal - dual)));
    }
    Ok(TransportSolution { flow, cost: primal, row_potential: u.to_vec(), col_potential: v.to_vec() })
}

/// Spanning-tree basis. Nodes `0..m` are rows, `m..m+n` are columns.
struct BasisTree {
    m: usize,
    n: usize,
    /// Basic cells `(row, col, flow)`.
    cells: Vec<(usize, usize, f64)>,
    in_basis: Vec<bool>,
}

impl BasisTree {
    fn north_west(supply: &[f64], demand: &[f64]) -> Self {
        let (m, n) = (supply.len(), demand.len());
        let mut a = supply.to_vec();
        let mut b = demand.to_vec();
        let mut cells = Vec::with_capacity(m + n - 1);
        let (mut i, mut j) = (0, 0);
        loop {
            if i == m - 1 && j == n - 1 {
                // absorbs rounding residue on the final cell
                cells.push((i, j, a[i].min(b[j]).max(0.0)));
                break;
            }
            let q = a[i].min(b[j]).max(0.0);
            cells.push((i, j, q));
            a[i] -= q;
            b[j] -= q;
            if j == n - 1 || (i < m - 1 && a[i] <= b[j]) {
                i += 1;
            } else {
                j += 1;
            }
        }
        let mut in_basis = vec![false; m * n];
        for &(i, j, _) in &cells {
            in_basis[i * n + j] = true;
        }
        Self { m, n, cells, in_basis }
    }

    fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        // node -> (neighbor node, cell index)
        let mut adj = vec![Vec::new(); self.m + self.n];
        for (k, &(i, j, _)) in self.cells.iter().enumerate() {
            adj[i].push((self.m + j, k));
            adj[self.m + j].push((i, k));
        }
        adj
    }

    fn potentials(&self, cost: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (m, n) = (self.m, self.n);
        let adj = self.adjacency();
        let mut pot = vec![f64::NAN; m + n];
        pot[0] = 0.0;
        let mut stack = vec![0usize];
        while let Some(node) = stack.pop() {
            for &(next, k) in &adj[node] {
                if pot[next].is_nan() {
                    let (i, j, _) = self.cells[k];
                    // u_i + v_j = c_ij
                    pot[next] = cost[i * n + j] - pot[node];
                    stack.push(next);
                }
            }
        }
        (pot[..m].to_vec(), pot[m..].to_vec())
    }

    fn entering(&self, cost: &[f64], u: &[f64], v: &[f64], eps: f64, bland: bool) -> Option<(usize, usize)> {
        let n = self.n;
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..self.m {
            for j in 0..n {
                if self.in_basis[i * n + j] {
                    continue;
                }
                let r = cost[i * n + j] - u[i] - v[j];
                if r < -eps {
                    if bland {
                        return Some((i, j));
                    }
                    if best.is_none_or(|(_, _, b)| r < b) {
                        best = Some((i, j, r));
                    }
                }
            }
        }
        best.map(|(i, j, _)| (i, j))
    }

    /// Tree path from column node `m + ej` to row node `ei`, as cell indices.
    fn path(&self, ei: usize, ej: usize) -> Result<Vec<usize>> {
        let adj = self.adjacency();
        let start = self.m + ej;
        let mut parent: Vec<Option<(usize, usize)>> = vec![None; self.m + self.n];
        let mut seen = vec![false; self.m + self.n];
        seen[start] = true;
        let mut stack = vec![start];
        while let Some(node) = stack.pop() {
            if node == ei {
                break;
            }
            for &(next, k) in &adj[node] {
                if !seen[next] {
                    seen[next] = true;
                    parent[next] = Some((node, k));
                    stack.push(next);
                }
            }
        }
        if !seen[ei] {
            return Err(Error::SolverFailure("basis is not a spanning tree".into()));
        }
        let mut cells = Vec::new();
        let mut node = ei;
        while node != start {
            let (prev, k) = parent[node].expect("path back to start");
            cells.push(k);
            node = prev;
        }
        cells.reverse();
        Ok(cells)
    }

    /// Brings `(ei, ej)` into the basis; returns the step length.
    fn pivot(&mut self, ei: usize, ej: usize, bland: bool) -> Result<f64> {
        let path = self.path(ei, ej)?;
        // path runs from column ej to row ei; its cells alternate -, +, -, ...
        let mut leave: Option<usize> = None;
        let mut theta = f64::INFINITY;
        for (pos, &k) in path.iter().enumerate() {
            if pos % 2 == 1 {
                continue;
            }
            let (i, j, x) = self.cells[k];
            let better = match leave {
                None => true,
                Some(l) => {
                    let (li, lj, _) = self.cells[l];
                    x < theta || (bland && x == theta && (i, j) < (li, lj))
                }
            };
            if better {
                theta = x;
                leave = Some(k);
            }
        }
        let leave = leave.ok_or_else(|| Error::SolverFailure("empty pivot cycle".into()))?;
        let theta = theta.max(0.0);
        for (pos, &k) in path.iter().enumerate() {
            let x = &mut self.cells[k].2;
            if pos % 2 == 0 {
                *x = (*x - theta).max(0.0);
            } else {
                *x += theta;
            }
        }
        let (li, lj, _) = self.cells[leave];
        self.in_basis[li * self.n + lj] = false;
        self.in_basis[ei * self.n + ej] = true;
        self.cells[leave] = (ei, ej, theta);
        Ok(theta)
    }
}
