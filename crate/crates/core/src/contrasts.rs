//! Normalized mean-difference contrasts `Y_{jt}` and their p-values.

use crate::grids::{split_scale, Grid};
use crate::numerics::{sf, Prob, CLAMP_FLOOR};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ContrastError {
    #[error("matrix needs p >= 1 rows and n >= 2 columns, got {p}x{n}")]
    BadShape { p: usize, n: usize },
    #[error("expected {expected} values for the declared shape, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-finite entry at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("split outside sequence: t = {t}, n = {n}")]
    SplitOutsideSequence { t: usize, n: usize },
    #[error("grid/matrix n disagree: grid n = {grid_n}, matrix n = {matrix_n}")]
    DimensionMismatch { grid_n: usize, matrix_n: usize },
}

/// Whether exceedances are counted in the decreasing direction only or in
/// both directions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    #[serde(alias = "one-sided", alias = "onesided")]
    One,
    #[serde(alias = "two-sided", alias = "twosided")]
    Two,
}

/// A `p × n` observation matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationMatrix {
    p: usize,
    n: usize,
    values: Vec<f64>,
}

impl ObservationMatrix {
    pub fn new(p: usize, n: usize, values: Vec<f64>) -> Result<Self, ContrastError> {
        if p < 1 || n < 2 {
            return Err(ContrastError::BadShape { p, n });
        }
        if values.len() != p * n {
            return Err(ContrastError::LengthMismatch {
                expected: p * n,
                got: values.len(),
            });
        }
        if let Some(idx) = values.iter().position(|v| !v.is_finite()) {
            return Err(ContrastError::NonFinite {
                row: idx / n,
                col: idx % n,
            });
        }
        Ok(Self { p, n, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, ContrastError> {
        let p = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(p * n);
        for row in rows {
            if row.len() != n {
                return Err(ContrastError::LengthMismatch {
                    expected: n,
                    got: row.len(),
                });
            }
            values.extend_from_slice(row);
        }
        Self::new(p, n, values)
    }

    /// Build without the finiteness scan. Generators produce finite values
    /// by construction.
    pub(crate) fn from_parts_unchecked(p: usize, n: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), p * n);
        Self { p, n, values }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.values[j * self.n..(j + 1) * self.n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.n)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Flip the sign of every entry.
    pub fn negated(&self) -> Self {
        Self {
            p: self.p,
            n: self.n,
            values: self.values.iter().map(|v| -v).collect(),
        }
    }
}

/// Contrasts `Y_{jk}` for every row `j` and grid point `k`, stored
/// column-major so each grid column is a contiguous slice of `p` values.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastMatrix {
    p: usize,
    grid: Grid,
    values: Vec<f64>,
}

impl ContrastMatrix {
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn column(&self, k: usize) -> &[f64] {
        &self.values[k * self.p..(k + 1) * self.p]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.p)
    }

    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.values[k * self.p + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Contrast of every row at split `t`:
/// `√(t(n-t)/n) · (mean(X_{j,1..t}) - mean(X_{j,t+1..n}))`.
pub fn contrast_at(x: &ObservationMatrix, t: usize) -> Result<Vec<f64>, ContrastError> {
    let n = x.n();
    if t == 0 || t >= n {
        return Err(ContrastError::SplitOutsideSequence { t, n });
    }
    let scale = split_scale(n, t);
    Ok(x.rows()
        .map(|row| {
            let head = compensated_sum(&row[..t]);
            let tail = compensated_sum(&row[t..]);
            scale * (head / t as f64 - tail / (n - t) as f64)
        })
        .collect())
}

/// Contrasts over a whole grid in `O(p·(n + |grid|))` using one running
/// (compensated) prefix sum per row.
pub fn contrast_matrix(x: &ObservationMatrix, grid: &Grid) -> Result<ContrastMatrix, ContrastError> {
    if grid.n() != x.n() {
        return Err(ContrastError::DimensionMismatch {
            grid_n: grid.n(),
            matrix_n: x.n(),
        });
    }
    let (p, n) = (x.p(), x.n());
    let points = grid.points();
    let scales: Vec<f64> = points.iter().map(|&t| split_scale(n, t)).collect();
    let mut values = vec![0.0; p * points.len()];
    let mut prefix = vec![0.0; points.len()];
    for (j, row) in x.rows().enumerate() {
        let mut acc = Neumaier::default();
        let mut next = 0;
        for (i, &v) in row.iter().enumerate() {
            acc.add(v);
            // split t covers columns 1..=t, i.e. indices 0..t
            while next < points.len() && points[next] == i + 1 {
                prefix[next] = acc.total();
                next += 1;
            }
        }
        let total = acc.total();
        for (k, (&t, &scale)) in points.iter().zip(&scales).enumerate() {
            let head = prefix[k];
            let tail = total - head;
            values[k * p + j] = scale * (head / t as f64 - tail / (n - t) as f64);
        }
    }
    Ok(ContrastMatrix {
        p,
        grid: grid.clone(),
        values,
    })
}

/// p-values per contrast, column-major like [`ContrastMatrix`].
#[derive(Debug, Clone, PartialEq)]
pub struct PValueMatrix {
    p: usize,
    columns: usize,
    values: Vec<f64>,
}

impl PValueMatrix {
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn num_columns(&self) -> usize {
        self.columns
    }

    pub fn column(&self, k: usize) -> &[f64] {
        &self.values[k * self.p..(k + 1) * self.p]
    }

    pub fn get(&self, j: usize, k: usize) -> Prob {
        // entries are in [CLAMP_FLOOR, 1] by construction
        Prob::new(self.values[k * self.p + j]).expect("p-value in [0, 1]")
    }
}

/// One-sided `Φ̄(Y)` or two-sided `2Φ̄(|Y|)`, floored at [`CLAMP_FLOOR`].
#[inline]
pub fn pvalue(y: f64, side: Side) -> f64 {
    let v = match side {
        Side::One => sf(y),
        Side::Two => (2.0 * sf(y.abs())).min(1.0),
    };
    v.max(CLAMP_FLOOR)
}

pub fn pvalues(y: &ContrastMatrix, side: Side) -> PValueMatrix {
    PValueMatrix {
        p: y.p(),
        columns: y.grid().len(),
        values: y.values().iter().map(|&v| pvalue(v, side)).collect(),
    }
}

#[derive(Debug, Default, Clone, Copy)]
struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    #[inline]
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

fn compensated_sum(xs: &[f64]) -> f64 {
    let mut acc = Neumaier::default();
    xs.iter().for_each(|&v| acc.add(v));
    acc.total()
}
