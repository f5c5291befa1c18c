//! Domain types shared across the crate and the closed-form spectral measure
//! of a linear factor model `X = AZ`.
//!
//! For a non-negative loading matrix `A` with columns `a_1, ..., a_m` and
//! i.i.d. regularly varying factors with tail index `alpha`, the limiting law
//! of `X / |X|_1` given `|X|_1 > tau` as `tau -> inf` is the Dirac mixture
//!
//! ```text
//! K_A = sum_i  |a_i|_1^alpha / sum_j |a_j|_1^alpha  *  delta(a_i / |a_i|_1)
//! ```
//!
//! [`DiscreteMeasure`] stores such mixtures in canonical form: atoms sorted
//! lexicographically, atoms closer than [`MERGE_TOL`] in l1 merged.

use std::cmp::Ordering;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Two atoms closer than this in l1 are the same atom.
pub const MERGE_TOL: f64 = 1e-9;
/// Allowed deviation of an atom's l1-norm (and of the total mass) from one.
pub const SIMPLEX_TOL: f64 = 1e-9;
/// Allowed negative excursion of an atom coordinate.
pub const COORD_TOL: f64 = 1e-12;

/// Formats a float with 17 significant digits, which round-trips every `f64`.
pub fn fmt17(x: f64) -> String {
    if x == 0.0 {
        // avoids "-0" and keeps zeros short in golden files
        return "0".to_string();
    }
    format!("{x:.16e}")
}

/// Lexicographic order on vectors using `f64::total_cmp`.
pub fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

pub fn l1_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

pub fn l1_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// Builds a matrix from row vectors; all rows must share one length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        if r == 0 {
            return Err(Error::InvalidModel("matrix has no rows".into()));
        }
        let c = rows[0].len();
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::DimensionMismatch { expected: c, got: row.len() });
            }
            data.extend_from_slice(row);
        }
        Ok(Self { rows: r, cols: c, data })
    }

    /// Builds a matrix whose columns are the given vectors.
    pub fn from_columns(cols: &[Vec<f64>]) -> Result<Self> {
        let c = cols.len();
        if c == 0 {
            return Err(Error::InvalidModel("matrix has no columns".into()));
        }
        let r = cols[0].len();
        let mut m = Self::zeros(r, c);
        for (j, col) in cols.iter().enumerate() {
            if col.len() != r {
                return Err(Error::DimensionMismatch { expected: r, got: col.len() });
            }
            for (i, &v) in col.iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn scaled(&self, t: f64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|x| x * t).collect() }
    }

    /// `self * v`.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch { expected: self.cols, got: other.rows });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        Ok(out)
    }

    /// Max-norm distance `max_ij |self_ij - other_ij|`.
    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

impl Serialize for Matrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Matrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        Matrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// A finitely supported probability measure on the positive unit l1-sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    atoms: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMeasure {
    atoms: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    /// Canonicalizes weighted atoms: drops nothing, merges atoms within
    /// [`MERGE_TOL`], sorts lexicographically and rescales weights to sum to 1.
    ///
    /// Atoms must already lie on the simplex; the result is checked with
    /// [`validate_measure`].
    pub fn from_weighted_atoms(atoms: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() || atoms.len() != weights.len() {
            return Err(Error::InvalidMeasure(format!(
                "{} atoms with {} weights",
                atoms.len(),
                weights.len()
            )));
        }
        let dim = atoms[0].len();
        if let Some(bad) = atoms.iter().find(|a| a.len() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, got: bad.len() });
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidMeasure("weights must be finite and non-negative".into()));
        }
        let mut order: Vec<usize> = (0..atoms.len()).collect();
        order.sort_by(|&a, &b| lex_cmp(&atoms[a], &atoms[b]));

        let mut merged_atoms: Vec<Vec<f64>> = Vec::new();
        let mut merged_weights: Vec<f64> = Vec::new();
        for idx in order {
            let atom = &atoms[idx];
            // Candidates for a merge share the first coordinate up to MERGE_TOL,
            // so they sit in a contiguous window at the end of the sorted list.
            let mut target = None;
            for k in (0..merged_atoms.len()).rev() {
                if atom[0] - merged_atoms[k][0] >= MERGE_TOL {
                    break;
                }
                if l1_dist(atom, &merged_atoms[k]) < MERGE_TOL {
                    target = Some(k);
                    break;
                }
            }
            match target {
                Some(k) => merged_weights[k] += weights[idx],
                None => {
                    merged_atoms.push(atom.clone());
                    merged_weights.push(weights[idx]);
                }
            }
        }
        let total: f64 = merged_weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidMeasure("total mass is zero".into()));
        }
        for w in &mut merged_weights {
            *w /= total;
        }
        let mu = Self { atoms: merged_atoms, weights: merged_weights };
        if !validate_measure(&mu) {
            return Err(Error::InvalidMeasure("atoms are not on the unit l1-simplex".into()));
        }
        Ok(mu)
    }

    /// A single unit mass at `atom`.
    pub fn dirac(atom: Vec<f64>) -> Result<Self> {
        Self::from_weighted_atoms(vec![atom], vec![1.0])
    }

    /// Wraps atoms and weights without any checking. Used to inspect external
    /// data with [`validate_measure`]; every other constructor validates.
    pub fn from_parts_unchecked(atoms: Vec<Vec<f64>>, weights: Vec<f64>) -> Self {
        Self { atoms, weights }
    }

    pub fn atoms(&self) -> &[Vec<f64>] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.atoms.first().map_or(0, Vec::len)
    }

    /// JSON object `{"atoms": [[...]], "weights": [...]}` with 17 significant digits.
    pub fn to_json(&self) -> String {
        let mut out = String::from("{\n  \"atoms\": [");
        for (i, atom) in self.atoms.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            out.push_str("\n    [");
            let coords: Vec<String> = atom.iter().map(|&x| fmt17(x)).collect();
            out.push_str(&coords.join(", "));
            out.push(']');
        }
        out.push_str("\n  ],\n  \"weights\": [");
        let ws: Vec<String> = self.weights.iter().map(|&w| fmt17(w)).collect();
        let _ = write!(out, "{}", ws.join(", "));
        out.push_str("]\n}\n");
        out
    }

    /// Parses the JSON form and rejects anything violating the measure invariants.
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawMeasure =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let mu = Self::from_parts_unchecked(raw.atoms, raw.weights);
        if !validate_measure(&mu) {
            return Err(Error::InvalidMeasure("measure violates simplex/mass invariants".into()));
        }
        Ok(mu)
    }
}

/// True iff every [`DiscreteMeasure`] invariant holds.
pub fn validate_measure(mu: &DiscreteMeasure) -> bool {
    let (atoms, weights) = (&mu.atoms, &mu.weights);
    if atoms.is_empty() || atoms.len() != weights.len() {
        return false;
    }
    let dim = atoms[0].len();
    if dim == 0 {
        return false;
    }
    for atom in atoms {
        if atom.len() != dim || atom.iter().any(|x| !x.is_finite() || *x < -COORD_TOL) {
            return false;
        }
        let s: f64 = atom.iter().sum();
        if (s - 1.0).abs() > SIMPLEX_TOL {
            return false;
        }
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return false;
    }
    if (weights.iter().sum::<f64>() - 1.0).abs() > SIMPLEX_TOL {
        return false;
    }
    let mut sorted: Vec<&Vec<f64>> = atoms.iter().collect();
    sorted.sort_by(|a, b| lex_cmp(a, b));
    for i in 0..sorted.len() {
        for j in (i + 1)..sorted.len() {
            if sorted[j][0] - sorted[i][0] >= MERGE_TOL {
                break;
            }
            if l1_dist(sorted[i], sorted[j]) < MERGE_TOL {
                return false;
            }
        }
    }
    true
}

/// Law of the latent factor vector `Z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatentKind {
    /// Independent standard Pareto(alpha) coordinates.
    IidPareto,
    /// The two-factor perturbed-Pareto law with tilts `1 +/- n^{-s}` below the
    /// tail threshold and exact product-Pareto shape above it.
    TiltedWorstCase,
    /// Coordinate `j` has density `alpha c_j (1 + c_j z)^{-(alpha+1)}`.
    Custom { c: Vec<f64> },
}

/// One member of the linear factor model class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub a: Matrix,
    pub alpha: f64,
    pub s: f64,
    pub latent_kind: LatentKind,
    #[serde(default = "default_zeta")]
    pub zeta: f64,
}

fn default_zeta() -> f64 {
    1.0
}

impl ModelSpec {
    pub fn new(a: Matrix, alpha: f64, s: f64, latent_kind: LatentKind) -> Result<Self> {
        let spec = Self { a, alpha, s, latent_kind, zeta: 1.0 };
        spec.validate()?;
        Ok(spec)
    }

    pub fn d(&self) -> usize {
        self.a.rows()
    }

    pub fn m(&self) -> usize {
        self.a.cols()
    }

    pub fn validate(&self) -> Result<()> {
        let (d, m) = (self.d(), self.m());
        if d < 2 {
            return Err(Error::InvalidModel(format!("need d >= 2, got {d}")));
        }
        if m < d {
            return Err(Error::InvalidModel(format!("need m >= d, got m = {m}, d = {d}")));
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::InvalidAlpha(self.alpha));
        }
        if !(self.s > 0.0 && self.s < 0.5) {
            return Err(Error::InvalidModel(format!("s must lie in (0, 1/2), got {}", self.s)));
        }
        if !(self.zeta > 0.0) {
            return Err(Error::InvalidModel(format!("zeta must be positive, got {}", self.zeta)));
        }
        for i in 0..d {
            for j in 0..m {
                let v = self.a[(i, j)];
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(Error::InvalidModel(format!("A[{i}][{j}] = {v} is not >= 0")));
                }
            }
        }
        for j in 0..m {
            if l1_norm(&self.a.column(j)) <= 0.0 {
                return Err(Error::ZeroColumn { column: j });
            }
        }
        match &self.latent_kind {
            LatentKind::TiltedWorstCase if m != 2 => Err(Error::WorstCaseDimension(m)),
            LatentKind::Custom { c } if c.len() != m => {
                Err(Error::DimensionMismatch { expected: m, got: c.len() })
            }
            LatentKind::Custom { c } if c.iter().any(|x| !(*x > 0.0)) => {
                Err(Error::InvalidModel("custom tilts must be positive".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Spectral measure `K_A` of the model `X = AZ` with tail index `alpha`.
pub fn spectral_measure_of(a: &Matrix, alpha: f64) -> Result<DiscreteMeasure> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidAlpha(alpha));
    }
    let mut norms = Vec::with_capacity(a.cols());
    let mut atoms = Vec::with_capacity(a.cols());
    for j in 0..a.cols() {
        let col = a.column(j);
        let norm = l1_norm(&col);
        if !(norm > 0.0) {
            return Err(Error::ZeroColumn { column: j });
        }
        atoms.push(col.iter().map(|x| x / norm).collect::<Vec<f64>>());
        norms.push(norm);
    }
    // Relative to the largest norm so that large alpha cannot overflow.
    let max_norm = norms.iter().cloned().fold(0.0, f64::max);
    let weights: Vec<f64> = norms.iter().map(|t| (t / max_norm).powf(alpha)).collect();
    DiscreteMeasure::from_weighted_atoms(atoms, weights)
}
