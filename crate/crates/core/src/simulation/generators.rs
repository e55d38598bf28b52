//! Mean structures for the null and changepoint alternatives, and sampling
//! `X = θ + E` with standard normal noise.

use super::rng::TrialStreams;
use super::SimError;
use crate::contrasts::{ObservationMatrix, Side};
use crate::grids::split_scale;
use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Mean of one row: constant, or a single jump after column `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RowMean {
    Constant(f64),
    Step { t: usize, pre: f64, post: f64 },
}

impl RowMean {
    #[inline]
    fn at(&self, col: usize) -> f64 {
        match *self {
            RowMean::Constant(m) => m,
            RowMean::Step { t, pre, post } => {
                if col < t {
                    pre
                } else {
                    post
                }
            }
        }
    }
}

/// A `p × n` mean matrix stored row by row in compact form.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanMatrix {
    n: usize,
    rows: Vec<RowMean>,
}

impl MeanMatrix {
    pub fn new(n: usize, rows: Vec<RowMean>) -> Self {
        Self { n, rows }
    }

    pub fn p(&self) -> usize {
        self.rows.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rows(&self) -> &[RowMean] {
        &self.rows
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.p() * self.n);
        for r in &self.rows {
            out.extend((0..self.n).map(|c| r.at(c)));
        }
        out
    }
}

/// Add independent standard normal noise to `means`, row `j` drawing from
/// its own substream.
pub fn sample(means: &MeanMatrix, streams: &TrialStreams) -> ObservationMatrix {
    let (p, n) = (means.p(), means.n());
    let mut values = vec![0.0; p * n];
    for (j, (row, mean)) in values.chunks_exact_mut(n).zip(&means.rows).enumerate() {
        let mut rng = streams.row(j);
        for (c, v) in row.iter_mut().enumerate() {
            *v = mean.at(c) + rng.sample::<f64, _>(StandardNormal);
        }
    }
    ObservationMatrix::from_parts_unchecked(p, n, values)
}

pub fn generate_null(p: usize, n: usize, base_means: &[f64], streams: &TrialStreams) -> Result<ObservationMatrix, SimError> {
    check_dims(p, n)?;
    let rows = if base_means.is_empty() {
        vec![RowMean::Constant(0.0); p]
    } else if base_means.len() == p {
        base_means.iter().map(|&m| RowMean::Constant(m)).collect()
    } else {
        return Err(SimError::Invalid(format!(
            "base_means has {} entries, expected {p}",
            base_means.len()
        )));
    };
    Ok(sample(&MeanMatrix::new(n, rows), streams))
}

fn check_dims(p: usize, n: usize) -> Result<(), SimError> {
    if p < 1 || n < 2 {
        return Err(SimError::Invalid(format!("need p >= 1 and n >= 2, got {p}x{n}")));
    }
    Ok(())
}

/// A single-changepoint alternative: rows in `support` jump at `t_star`
/// with normalized size `rho`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlternativeSpec {
    pub p: usize,
    pub n: usize,
    pub t_star: usize,
    pub support: Vec<usize>,
    pub rho: f64,
    pub side: Side,
    /// One sign per support row; only consulted when two-sided.
    #[serde(default)]
    pub sign_pattern: Vec<i8>,
    /// Per-row constants; empty means all zero.
    #[serde(default)]
    pub base_means: Vec<f64>,
}

impl AlternativeSpec {
    /// Draw support (uniform `s`-subset), changepoint (uniform on
    /// `[1, n-1]` unless given) and, for two-sided specs, signs.
    pub fn draw<R: Rng + ?Sized>(
        p: usize,
        n: usize,
        s: usize,
        rho: f64,
        side: Side,
        t_star: Option<usize>,
        rng: &mut R,
    ) -> Result<Self, SimError> {
        check_dims(p, n)?;
        if s > p {
            return Err(SimError::Invalid(format!("support size {s} exceeds p = {p}")));
        }
        let t_star = match t_star {
            Some(t) => t,
            None => rng.random_range(1..n),
        };
        let mut support = index::sample(rng, p, s).into_vec();
        support.sort_unstable();
        let sign_pattern = match side {
            Side::One => Vec::new(),
            Side::Two => (0..s).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect(),
        };
        let spec = Self {
            p,
            n,
            t_star,
            support,
            rho,
            side,
            sign_pattern,
            base_means: Vec::new(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        check_dims(self.p, self.n)?;
        if self.t_star == 0 || self.t_star >= self.n {
            return Err(SimError::Invalid(format!(
                "t_star = {} outside [1, {}]",
                self.t_star,
                self.n - 1
            )));
        }
        if self.support.len() > self.p {
            return Err(SimError::Invalid(format!(
                "support size {} exceeds p = {}",
                self.support.len(),
                self.p
            )));
        }
        let mut seen = vec![false; self.p];
        for &j in &self.support {
            if j >= self.p || std::mem::replace(&mut seen[j], true) {
                return Err(SimError::Invalid(format!("bad or repeated support row {j}")));
            }
        }
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return Err(SimError::Invalid(format!("rho must be finite and >= 0, got {}", self.rho)));
        }
        if self.side == Side::Two && self.sign_pattern.len() != self.support.len() {
            return Err(SimError::Invalid("two-sided spec needs one sign per support row".into()));
        }
        if self.sign_pattern.iter().any(|&g| g != 1 && g != -1) {
            return Err(SimError::Invalid("signs must be +1 or -1".into()));
        }
        if !self.base_means.is_empty() && self.base_means.len() != self.p {
            return Err(SimError::Invalid("base_means must be empty or have p entries".into()));
        }
        Ok(())
    }

    /// Raw jump `Δ` with `√(t*(n-t*)/n)·Δ = rho`.
    pub fn jump(&self) -> f64 {
        self.rho / split_scale(self.n, self.t_star)
    }

    pub fn means(&self) -> MeanMatrix {
        let base = |j: usize| self.base_means.get(j).copied().unwrap_or(0.0);
        let mut rows: Vec<RowMean> = (0..self.p).map(|j| RowMean::Constant(base(j))).collect();
        let half = self.jump() / 2.0;
        for (i, &j) in self.support.iter().enumerate() {
            let sign = match self.side {
                Side::One => 1.0,
                Side::Two => f64::from(self.sign_pattern[i]),
            };
            rows[j] = RowMean::Step {
                t: self.t_star,
                pre: base(j) + sign * half,
                post: base(j) - sign * half,
            };
        }
        MeanMatrix::new(self.n, rows)
    }
}

pub fn generate_alternative(spec: &AlternativeSpec, streams: &TrialStreams) -> Result<ObservationMatrix, SimError> {
    spec.validate()?;
    Ok(sample(&spec.means(), streams))
}

/// Membership in the alternative parameter space, read off a dense
/// row-major mean matrix: every row is constant or has exactly one jump,
/// all jumps share one changepoint, and at least `s` rows jump by a
/// normalized size of at least `rho` (downwards when one-sided). Other
/// rows may jump by any amount in either direction.
pub fn in_alternative_space(means: &[f64], p: usize, n: usize, s: usize, rho: f64, side: Side) -> bool {
    if means.len() != p * n || n < 2 {
        return false;
    }
    let mut common_t = None;
    let mut qualifying = 0;
    for row in means.chunks_exact(n) {
        let first = row[0];
        let Some(t) = row.iter().position(|&v| v != first) else {
            continue;
        };
        let second = row[t];
        if row[t..].iter().any(|&v| v != second) {
            return false;
        }
        if *common_t.get_or_insert(t) != t {
            return false;
        }
        let diff = first - second;
        let signed = match side {
            Side::One => diff,
            Side::Two => diff.abs(),
        };
        if split_scale(n, t) * signed >= rho * (1.0 - 1e-9) {
            qualifying += 1;
        }
    }
    qualifying >= s
}
