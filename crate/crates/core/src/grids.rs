//! Candidate changepoint grids and the unit contrast directions `θ^(t)`.
//!
//! The upper-bound grid is a dense geometric grid mirrored around `n/2`;
//! the lower-bound grid is a sparse geometric grid with a large base. Both
//! are stored as strictly increasing split columns in `[1, n-1]`, where a
//! split `t` separates columns `1..=t` from `t+1..=n`.

use serde::{Deserialize, Serialize};
use std::str::FromStr;
use thiserror::Error;

/// Above this `n` the automatic δ is used uncapped.
const DELTA_CAP_BELOW_N: usize = 10_000;
const DELTA_CAP: f64 = 0.25;
const POWER_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("sequence too short: n = {n}, need at least {min}")]
    SequenceTooShort { n: usize, min: usize },
    #[error("delta auto-rule undefined at this n ({0}): log log n must exceed 1")]
    AutoDeltaUndefined(usize),
    #[error("delta must be positive and finite, got {0}")]
    InvalidDelta(f64),
    #[error("base must exceed 1, got {0}")]
    InvalidBase(f64),
    #[error("base auto-rule needs n >= 16, got {0}")]
    AutoBaseUndefined(usize),
    #[error("grid is empty for n = {0}")]
    EmptyGrid(usize),
    #[error("split outside sequence: t = {t}, n = {n}")]
    SplitOutsideSequence { t: usize, n: usize },
    #[error("grid point {t_tilde} does not cover t* = {t_star} with delta = {delta}")]
    NotCovering {
        t_star: usize,
        t_tilde: usize,
        delta: f64,
    },
}

/// δ for the upper grid: explicit, or `1 / log log n` (capped for small n).
/// Serialized as the string `"auto"` or a bare number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RuleRepr", into = "RuleRepr")]
pub enum DeltaRule {
    Auto,
    Fixed(f64),
}

/// Base for the lower grid: explicit, or `log n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RuleRepr", into = "RuleRepr")]
pub enum BaseRule {
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum RuleRepr {
    Value(f64),
    Word(String),
}

fn parse_rule(s: &str) -> Result<Option<f64>, String> {
    if s.trim().eq_ignore_ascii_case("auto") {
        return Ok(None);
    }
    s.trim()
        .parse::<f64>()
        .map(Some)
        .map_err(|_| format!("expected \"auto\" or a number, got {s:?}"))
}

macro_rules! rule_conversions {
    ($ty:ident) => {
        impl TryFrom<RuleRepr> for $ty {
            type Error = String;
            fn try_from(r: RuleRepr) -> Result<Self, String> {
                Ok(match r {
                    RuleRepr::Value(v) => $ty::Fixed(v),
                    RuleRepr::Word(w) => parse_rule(&w)?.map_or($ty::Auto, $ty::Fixed),
                })
            }
        }

        impl From<$ty> for RuleRepr {
            fn from(r: $ty) -> Self {
                match r {
                    $ty::Auto => RuleRepr::Word("auto".into()),
                    $ty::Fixed(v) => RuleRepr::Value(v),
                }
            }
        }

        impl FromStr for $ty {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                Ok(parse_rule(s)?.map_or($ty::Auto, $ty::Fixed))
            }
        }

        impl Default for $ty {
            fn default() -> Self {
                $ty::Auto
            }
        }
    };
}

rule_conversions!(DeltaRule);
rule_conversions!(BaseRule);

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GridFlavor {
    UpperSymmetric { delta: f64 },
    LowerGeometric { base: f64 },
    /// Every split `1..=n-1`; used for sequences too short for the
    /// geometric rules.
    Exhaustive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grid {
    points: Vec<usize>,
    flavor: GridFlavor,
    n: usize,
}

impl Grid {
    pub fn points(&self) -> &[usize] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn flavor(&self) -> GridFlavor {
        self.flavor
    }

    /// Every split of a length-`n` sequence.
    pub fn exhaustive(n: usize) -> Result<Self, GridError> {
        if n < 2 {
            return Err(GridError::SequenceTooShort { n, min: 2 });
        }
        Ok(Self {
            points: (1..n).collect(),
            flavor: GridFlavor::Exhaustive,
            n,
        })
    }

    /// A grid from explicit split points (sorted and deduplicated).
    pub fn from_points(n: usize, mut points: Vec<usize>) -> Result<Self, GridError> {
        points.sort_unstable();
        points.dedup();
        if let Some(&t) = points.iter().find(|&&t| t == 0 || t >= n) {
            return Err(GridError::SplitOutsideSequence { t, n });
        }
        if points.is_empty() {
            return Err(GridError::EmptyGrid(n));
        }
        Ok(Self {
            points,
            flavor: GridFlavor::Exhaustive,
            n,
        })
    }

    /// Largest grid point in `(t_star / (1 + delta), t_star]`, if any.
    pub fn covering_point(&self, t_star: usize, delta: f64) -> Option<usize> {
        let idx = self.points.partition_point(|&t| t <= t_star);
        let candidate = *self.points.get(idx.checked_sub(1)?)?;
        (candidate as f64 > t_star as f64 / (1.0 + delta)).then_some(candidate)
    }

    /// Index of split `t` in the grid.
    pub fn index_of(&self, t: usize) -> Option<usize> {
        self.points.binary_search(&t).ok()
    }
}

/// Resolve δ for the upper grid at length `n`.
pub fn resolve_delta(n: usize, rule: DeltaRule) -> Result<f64, GridError> {
    match rule {
        DeltaRule::Fixed(d) => {
            if d.is_finite() && d > 0.0 {
                Ok(d)
            } else {
                Err(GridError::InvalidDelta(d))
            }
        }
        DeltaRule::Auto => {
            let loglog = (n as f64).ln().ln();
            if !(loglog > 1.0) {
                return Err(GridError::AutoDeltaUndefined(n));
            }
            let d = 1.0 / loglog;
            Ok(if n < DELTA_CAP_BELOW_N { d.min(DELTA_CAP) } else { d })
        }
    }
}

/// Build the mirrored geometric grid used by the scan tests.
///
/// For each `i` with `(1+δ)^i <= n/2` the grid holds `⌈(1+δ)^i⌉` and its
/// mirror `⌊n - (1+δ)^i⌋ = n - ⌈(1+δ)^i⌉`. Rounding the left half up keeps
/// the two halves exact mirrors and guarantees every `t* <= n/2` has a grid
/// point in `(t*/(1+δ), t*]`.
pub fn build_upper_grid(n: usize, delta: DeltaRule) -> Result<Grid, GridError> {
    if n < 4 {
        return Err(GridError::SequenceTooShort { n, min: 4 });
    }
    let delta = resolve_delta(n, delta)?;
    let ratio = 1.0 + delta;
    let half = n as f64 / 2.0;
    let mut points = Vec::new();
    let mut i = 0;
    loop {
        let power = ratio.powi(i);
        if power > half * (1.0 + POWER_SLACK) {
            break;
        }
        let left = power.ceil() as usize;
        points.push(left);
        points.push(n - left);
        i += 1;
    }
    points.retain(|&t| t >= 1 && t < n);
    points.sort_unstable();
    points.dedup();
    Ok(Grid {
        points,
        flavor: GridFlavor::UpperSymmetric { delta },
        n,
    })
}

/// Grid used by the scan tests: the mirrored geometric grid when it is
/// defined, otherwise every split. Short sequences (`n < 4`, or `n <= 15`
/// with automatic δ) fall back to the exhaustive grid.
pub fn scan_grid(n: usize, delta: DeltaRule) -> Result<Grid, GridError> {
    match build_upper_grid(n, delta) {
        Err(GridError::SequenceTooShort { .. } | GridError::AutoDeltaUndefined(_)) => Grid::exhaustive(n),
        other => other,
    }
}

/// Build the sparse geometric grid `{⌊b^k⌋ : 1 <= k <= log_b(n-1)}`.
pub fn build_lower_grid(n: usize, base: BaseRule) -> Result<Grid, GridError> {
    let base = match base {
        BaseRule::Auto => {
            if n < 16 {
                return Err(GridError::AutoBaseUndefined(n));
            }
            (n as f64).ln()
        }
        BaseRule::Fixed(b) => {
            if !(b.is_finite() && b > 1.0) {
                return Err(GridError::InvalidBase(b));
            }
            b
        }
    };
    if n < 2 {
        return Err(GridError::SequenceTooShort { n, min: 2 });
    }
    let top = (n - 1) as f64;
    let mut points = Vec::new();
    let mut k = 1;
    loop {
        let power = base.powi(k);
        if power > top * (1.0 + POWER_SLACK) {
            break;
        }
        let t = (power.floor() as usize).min(n - 1);
        if t >= 1 {
            points.push(t);
        }
        k += 1;
    }
    points.dedup();
    if points.is_empty() {
        return Err(GridError::EmptyGrid(n));
    }
    Ok(Grid {
        points,
        flavor: GridFlavor::LowerGeometric { base },
        n,
    })
}

/// The unit vector whose inner product with a row is the normalized
/// mean-difference contrast at split `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThetaVector {
    pub n: usize,
    pub t: usize,
    pub head_value: f64,
    pub tail_value: f64,
}

impl ThetaVector {
    /// Explicit length-`n` vector. Only for checks; hot paths use prefix sums.
    pub fn materialize(&self) -> Vec<f64> {
        let mut v = vec![self.head_value; self.t];
        v.resize(self.n, self.tail_value);
        v
    }

    /// `⟨row, θ⟩` via the mean-difference identity.
    pub fn dot(&self, row: &[f64]) -> f64 {
        assert_eq!(row.len(), self.n, "row length must equal n");
        let head: f64 = row[..self.t].iter().sum();
        let tail: f64 = row[self.t..].iter().sum();
        split_scale(self.n, self.t) * (head / self.t as f64 - tail / (self.n - self.t) as f64)
    }

    pub fn squared_norm(&self) -> f64 {
        self.t as f64 * self.head_value * self.head_value
            + (self.n - self.t) as f64 * self.tail_value * self.tail_value
    }
}

/// `√(t(n-t)/n)`, the effective sample size factor at split `t`.
#[inline]
pub fn split_scale(n: usize, t: usize) -> f64 {
    let (n, t) = (n as f64, t as f64);
    (t * (n - t) / n).sqrt()
}

fn check_split(n: usize, t: usize) -> Result<(), GridError> {
    if t == 0 || t >= n {
        Err(GridError::SplitOutsideSequence { t, n })
    } else {
        Ok(())
    }
}

pub fn theta_vector(n: usize, t: usize) -> Result<ThetaVector, GridError> {
    check_split(n, t)?;
    let (nf, tf) = (n as f64, t as f64);
    Ok(ThetaVector {
        n,
        t,
        head_value: ((nf - tf) / (nf * tf)).sqrt(),
        tail_value: -(tf / (nf * (nf - tf))).sqrt(),
    })
}

/// Closed form `⟨θ^(t1), θ^(t2)⟩ = √(lo/hi) · √((n-hi)/(n-lo))`.
pub fn theta_inner(n: usize, t1: usize, t2: usize) -> Result<f64, GridError> {
    check_split(n, t1)?;
    check_split(n, t2)?;
    let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
    let (nf, lo, hi) = (n as f64, lo as f64, hi as f64);
    Ok((lo / hi).sqrt() * ((nf - hi) / (nf - lo)).sqrt())
}

/// Attenuation of the contrast mean when scanning at `t_tilde` instead of
/// the true split `t_star`: `√(t̃/t*) · √((n-t*)/(n-t̃))`.
pub fn coverage_factor(
    n: usize,
    t_star: usize,
    t_tilde: usize,
    delta: f64,
) -> Result<f64, GridError> {
    check_split(n, t_star)?;
    check_split(n, t_tilde)?;
    if t_tilde > t_star || t_tilde as f64 <= t_star as f64 / (1.0 + delta) {
        return Err(GridError::NotCovering {
            t_star,
            t_tilde,
            delta,
        });
    }
    let (nf, ts, tt) = (n as f64, t_star as f64, t_tilde as f64);
    Ok((tt / ts).sqrt() * ((nf - ts) / (nf - tt)).sqrt())
}
