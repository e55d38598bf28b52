//! Berk–Jones scan, the penalized grid maximum built on it, and the max test.

use crate::contrasts::{contrast_matrix, pvalue, ContrastError, ContrastMatrix, ObservationMatrix, Side};
use crate::grids::Grid;
use crate::numerics::{kl, Prob, CLAMP_CEIL, CLAMP_FLOOR};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DetectorError {
    #[error("no rows")]
    NoRows,
    #[error("penalty exponent must be positive, got {0}")]
    NonPositiveGamma(f64),
    #[error(transparent)]
    Contrast(#[from] ContrastError),
}

/// Outcome of scanning every grid column with the Berk–Jones statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BjScanResult {
    pub statistic: f64,
    pub argmax_grid_index: usize,
    /// One-based rank `j` of the ordered p-value attaining the column max.
    pub argmax_order_index: usize,
    pub argmax_t: usize,
    pub penalized: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestDecision {
    pub statistic: f64,
    pub threshold: f64,
    pub reject: bool,
    /// Set when the threshold collapses to zero because `p` (or `p·|grid|`)
    /// equals one.
    pub degenerate: bool,
}

impl TestDecision {
    fn new(statistic: f64, threshold: f64, degenerate: bool) -> Self {
        Self {
            statistic,
            threshold,
            reject: statistic > threshold,
            degenerate,
        }
    }

    /// How far the statistic sits above its threshold.
    pub fn margin(&self) -> f64 {
        self.statistic - self.threshold
    }
}

/// `max_j p·K(j/p, p_(j))` over the ascending order statistics of `pvals`,
/// with the smallest attaining `j` (one-based).
pub fn bj_at_column(pvals: &[Prob]) -> Result<(f64, usize), DetectorError> {
    if pvals.is_empty() {
        return Err(DetectorError::NoRows);
    }
    let mut buf: Vec<f64> = pvals.iter().map(|q| q.get()).collect();
    Ok(bj_in_place(&mut buf))
}

/// Sorts `buf` and evaluates the column statistic. `buf` must be non-empty.
pub(crate) fn bj_in_place(buf: &mut [f64]) -> (f64, usize) {
    buf.sort_unstable_by(f64::total_cmp);
    let p = buf.len() as f64;
    let mut best = f64::NEG_INFINITY;
    let mut best_j = 0;
    for (i, &q) in buf.iter().enumerate() {
        let t = q.clamp(CLAMP_FLOOR, CLAMP_CEIL);
        let v = p * kl((i + 1) as f64 / p, t);
        if v > best {
            best = v;
            best_j = i + 1;
        }
    }
    (best, best_j)
}

/// Penalty `2·ln|grid|` subtracted from the scan maximum.
pub fn grid_penalty(grid_len: usize) -> f64 {
    2.0 * (grid_len as f64).ln()
}

pub fn pbj_statistic(x: &ObservationMatrix, grid: &Grid, side: Side) -> Result<BjScanResult, DetectorError> {
    let y = contrast_matrix(x, grid)?;
    pbj_from_contrasts(&y, side)
}

pub fn pbj_from_contrasts(y: &ContrastMatrix, side: Side) -> Result<BjScanResult, DetectorError> {
    if y.p() == 0 {
        return Err(DetectorError::NoRows);
    }
    let mut buf = vec![0.0; y.p()];
    let mut best = (f64::NEG_INFINITY, 0, 0);
    for (k, col) in y.columns().enumerate() {
        for (dst, &v) in buf.iter_mut().zip(col) {
            *dst = pvalue(v, side);
        }
        let (value, j) = bj_in_place(&mut buf);
        if value > best.0 {
            best = (value, k, j);
        }
    }
    let (statistic, k, j) = best;
    Ok(BjScanResult {
        statistic,
        argmax_grid_index: k,
        argmax_order_index: j,
        argmax_t: y.grid().points()[k],
        penalized: statistic - grid_penalty(y.grid().len()),
    })
}

/// `2(2+γ)·ln p`.
pub fn pbj_threshold(p: usize, gamma: f64) -> f64 {
    2.0 * (2.0 + gamma) * (p as f64).ln()
}

/// `√((2+γ)·ln m)` where `m` counts the (row, grid point) pairs scanned.
pub fn max_threshold(cells: f64, gamma: f64) -> f64 {
    ((2.0 + gamma) * cells.ln()).max(0.0).sqrt()
}

fn check_gamma(gamma: f64) -> Result<(), DetectorError> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(DetectorError::NonPositiveGamma(gamma))
    }
}

pub fn pbj_test(x: &ObservationMatrix, grid: &Grid, side: Side, gamma: f64) -> Result<TestDecision, DetectorError> {
    check_gamma(gamma)?;
    let scan = pbj_statistic(x, grid, side)?;
    Ok(pbj_decision(&scan, x.p(), gamma))
}

pub(crate) fn pbj_decision(scan: &BjScanResult, p: usize, gamma: f64) -> TestDecision {
    TestDecision::new(scan.penalized, pbj_threshold(p, gamma), p < 2)
}

/// One-sided max test: rejects when some `Y_{jk}` exceeds
/// `√((2+γ)·ln(p·|grid|))`.
pub fn max_test(x: &ObservationMatrix, grid: &Grid, gamma: f64) -> Result<TestDecision, DetectorError> {
    check_gamma(gamma)?;
    let y = contrast_matrix(x, grid)?;
    Ok(max_from_contrasts(&y, Side::One, gamma))
}

/// Max test for either side. The two-sided form scans `|Y_{jk}|` and
/// doubles the cell count inside the logarithm to keep the same union bound.
pub fn max_from_contrasts(y: &ContrastMatrix, side: Side, gamma: f64) -> TestDecision {
    let cells = (y.p() * y.grid().len()) as f64;
    let (statistic, cells) = match side {
        Side::One => (y.values().iter().copied().fold(f64::NEG_INFINITY, f64::max), cells),
        Side::Two => (
            y.values().iter().map(|v| v.abs()).fold(f64::NEG_INFINITY, f64::max),
            2.0 * cells,
        ),
    };
    let degenerate = side == Side::One && cells <= 1.0;
    TestDecision::new(statistic, max_threshold(cells, gamma), degenerate)
}

/// Everything one pass over the contrasts yields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub scan: BjScanResult,
    pub pbj: TestDecision,
    pub max: TestDecision,
    pub combined: TestDecision,
}

pub fn detect(x: &ObservationMatrix, grid: &Grid, side: Side, gamma: f64) -> Result<Detection, DetectorError> {
    check_gamma(gamma)?;
    let y = contrast_matrix(x, grid)?;
    detect_from_contrasts(&y, side, gamma)
}

pub fn detect_from_contrasts(y: &ContrastMatrix, side: Side, gamma: f64) -> Result<Detection, DetectorError> {
    check_gamma(gamma)?;
    let scan = pbj_from_contrasts(y, side)?;
    let pbj = pbj_decision(&scan, y.p(), gamma);
    let max = max_from_contrasts(y, side, gamma);
    Ok(Detection {
        scan,
        pbj,
        max,
        combined: combine(&pbj, &max),
    })
}

/// Disjunction of two decisions, reported as the larger margin against a
/// zero threshold.
pub fn combine(a: &TestDecision, b: &TestDecision) -> TestDecision {
    let statistic = a.margin().max(b.margin());
    TestDecision {
        statistic,
        threshold: 0.0,
        reject: a.reject || b.reject,
        degenerate: a.degenerate || b.degenerate,
    }
}

pub fn combined_test(x: &ObservationMatrix, grid: &Grid, side: Side, gamma: f64) -> Result<TestDecision, DetectorError> {
    Ok(detect(x, grid, side, gamma)?.combined)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grids::{build_upper_grid, DeltaRule};
    use crate::numerics::{quantile_sf, sf};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn probs(v: &[f64]) -> Vec<Prob> {
        v.iter().map(|&x| Prob::new(x).unwrap()).collect()
    }

    fn gaussian_matrix(rng: &mut ChaCha8Rng, p: usize, n: usize) -> ObservationMatrix {
        let v = (0..p * n).map(|_| rng.sample(StandardNormal)).collect();
        ObservationMatrix::new(p, n, v).unwrap()
    }

    /// Direct evaluation of the supremum over the observed p-value lattice.
    fn lattice_oracle(pv: &[f64]) -> f64 {
        let p = pv.len() as f64;
        pv.iter()
            .map(|&q| {
                let count = pv.iter().filter(|&&u| u <= q).count() as f64;
                let t = q.clamp(CLAMP_FLOOR, CLAMP_CEIL);
                let x = count / p;
                let mut v = 0.0;
                if x > 0.0 {
                    v += x * (x / t).ln();
                }
                if x < 1.0 {
                    v += (1.0 - x) * ((1.0 - x) / (1.0 - t)).ln();
                }
                p * v
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn column_examples() {
        let (v, j) = bj_at_column(&probs(&[0.5; 4])).unwrap();
        assert!((v - 2.772_588_722_239_781).abs() < 1e-12);
        assert_eq!(j, 4);
        let (v, j) = bj_at_column(&probs(&[0.3, 0.1, 0.4, 0.2])).unwrap();
        assert!((v - 3.665_162_927_496_62).abs() < 1e-12, "{v}");
        assert_eq!(j, 4);
        assert_eq!(bj_at_column(&[]), Err(DetectorError::NoRows));
    }

    #[test]
    fn column_handles_extreme_pvalues() {
        let (v, j) = bj_at_column(&probs(&[0.0, 1.0, 1.0])).unwrap();
        assert!(v.is_finite() && v > 0.0);
        assert_eq!(j, 1);
    }

    #[test]
    fn column_matches_lattice_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..200 {
            let p = rng.random_range(1..=50);
            let pv: Vec<f64> = (0..p).map(|_| rng.random::<f64>()).collect();
            let (v, _) = bj_at_column(&probs(&pv)).unwrap();
            assert!((v - lattice_oracle(&pv)).abs() <= 1e-9);
        }
    }

    #[test]
    fn thresholds() {
        assert!((pbj_threshold(100, 0.5) - 23.025_850_929_940_46).abs() < 1e-12);
        assert!((pbj_threshold(100, 2.0) - 36.841_361_487_904_734).abs() < 1e-12);
        assert!((max_threshold(5000.0, 2.0) - 5.836_846_131_744_862).abs() < 1e-12);
        assert_eq!(max_threshold(1.0, 2.0), 0.0);
    }

    #[test]
    fn gamma_must_be_positive() {
        let x = ObservationMatrix::new(2, 4, vec![0.0; 8]).unwrap();
        let g = Grid::exhaustive(4).unwrap();
        assert_eq!(
            pbj_test(&x, &g, Side::One, 0.0),
            Err(DetectorError::NonPositiveGamma(0.0))
        );
        assert!(max_test(&x, &g, -1.0).is_err());
        assert!(combined_test(&x, &g, Side::Two, f64::NAN).is_err());
    }

    #[test]
    fn degenerate_sizes() {
        // one row with a contrast of exactly zero at the single split
        let x = ObservationMatrix::new(1, 2, vec![0.0, 0.0]).unwrap();
        let g = Grid::exhaustive(2).unwrap();
        let scan = pbj_statistic(&x, &g, Side::One).unwrap();
        assert!((scan.statistic - 2f64.ln()).abs() < 1e-15);
        assert_eq!(scan.penalized, scan.statistic);
        assert_eq!(scan.argmax_t, 1);

        // Y = 3 against a zero threshold
        let y = 3.0 * 2f64.sqrt();
        let x = ObservationMatrix::new(1, 2, vec![y / 2.0, -y / 2.0]).unwrap();
        let d = max_test(&x, &g, 2.0).unwrap();
        assert!((d.statistic - 3.0).abs() < 1e-12);
        assert_eq!(d.threshold, 0.0);
        assert!(d.reject && d.degenerate);
        let d = pbj_test(&x, &g, Side::One, 2.0).unwrap();
        assert!(d.degenerate);
    }

    #[test]
    fn combined_is_disjunction() {
        let acc = TestDecision::new(1.0, 2.0, false);
        let rej = TestDecision::new(3.0, 2.0, false);
        assert!(!combine(&acc, &acc).reject);
        assert!(combine(&acc, &rej).reject);
        assert!(combine(&rej, &acc).reject);
        let c = combine(&acc, &rej);
        assert_eq!(c.statistic, 1.0);
        assert_eq!(c.reject, c.statistic > c.threshold);
    }

    #[test]
    fn penalty_identity_against_singleton_grids() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let n = 300;
        let x = gaussian_matrix(&mut rng, 40, n);
        let g = build_upper_grid(n, DeltaRule::Fixed(0.2)).unwrap();
        for side in [Side::One, Side::Two] {
            let full = pbj_statistic(&x, &g, side).unwrap();
            let best = g
                .points()
                .iter()
                .map(|&t| {
                    let single = Grid::from_points(n, vec![t]).unwrap();
                    pbj_statistic(&x, &single, side).unwrap().statistic
                })
                .fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(full.statistic, best);
            assert_eq!(full.penalized, best - 2.0 * (g.len() as f64).ln());
        }
    }

    /// Independent reference: direct contrasts by summation and the lattice
    /// supremum per column.
    fn naive_penalized(x: &ObservationMatrix, grid: &Grid, side: Side) -> f64 {
        let n = x.n();
        let mut best = f64::NEG_INFINITY;
        for &t in grid.points() {
            let pv: Vec<f64> = (0..x.p())
                .map(|j| {
                    let row = x.row(j);
                    let a: f64 = row[..t].iter().sum::<f64>() / t as f64;
                    let b: f64 = row[t..].iter().sum::<f64>() / (n - t) as f64;
                    let y = ((t * (n - t)) as f64 / n as f64).sqrt() * (a - b);
                    match side {
                        Side::One => sf(y),
                        Side::Two => (2.0 * sf(y.abs())).min(1.0),
                    }
                    .max(CLAMP_FLOOR)
                })
                .collect();
            best = best.max(lattice_oracle(&pv));
        }
        best - 2.0 * (grid.len() as f64).ln()
    }

    #[test]
    fn matches_naive_reference_on_null_draw() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let x = gaussian_matrix(&mut rng, 100, 256);
        let g = build_upper_grid(256, DeltaRule::Fixed(0.1)).unwrap();
        for side in [Side::One, Side::Two] {
            let got = pbj_statistic(&x, &g, side).unwrap().penalized;
            let want = naive_penalized(&x, &g, side);
            assert!((got - want).abs() <= 1e-9, "{side:?}: {got} vs {want}");
        }
    }

    #[test]
    fn single_elevated_row_triggers_max_test() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let (p, n) = (100, 400);
        let g = build_upper_grid(n, DeltaRule::Auto).unwrap();
        let thr = max_threshold((p * g.len()) as f64, 2.0);
        let t = g.points()[g.len() / 2];
        let rho = 1.5 * thr;
        let delta = rho * (n as f64 / (t * (n - t)) as f64).sqrt();
        let mut hits = 0;
        for _ in 0..100 {
            let mut v: Vec<f64> = (0..p * n).map(|_| rng.sample(StandardNormal)).collect();
            for (c, cell) in v[..n].iter_mut().enumerate() {
                *cell += if c < t { delta / 2.0 } else { -delta / 2.0 };
            }
            let x = ObservationMatrix::new(p, n, v).unwrap();
            hits += max_test(&x, &g, 2.0).unwrap().reject as usize;
        }
        assert!(hits >= 95, "{hits}");
    }

    #[test]
    fn strong_sparse_signal_triggers_pbj() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let (p, n, s) = (200, 256, 20);
        let g = build_upper_grid(n, DeltaRule::Auto).unwrap();
        let t = 100;
        let rho = 2.0 * quantile_sf(1e-4);
        let delta = rho * (n as f64 / (t * (n - t)) as f64).sqrt();
        let mut v: Vec<f64> = (0..p * n).map(|_| rng.sample(StandardNormal)).collect();
        for j in 0..s {
            for c in 0..n {
                v[j * n + c] += if c < t { delta / 2.0 } else { -delta / 2.0 };
            }
        }
        let x = ObservationMatrix::new(p, n, v).unwrap();
        let d = detect(&x, &g, Side::One, 2.0).unwrap();
        assert!(d.pbj.reject, "{:?}", d.pbj);
        assert!(d.combined.reject);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn two_sided_sign_flip_invariance(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = gaussian_matrix(&mut rng, 30, 64);
            let g = build_upper_grid(64, DeltaRule::Auto).unwrap();
            let a = pbj_statistic(&x, &g, Side::Two).unwrap();
            let b = pbj_statistic(&x.negated(), &g, Side::Two).unwrap();
            prop_assert_eq!(a.statistic, b.statistic);
            prop_assert_eq!(a.penalized, b.penalized);
        }

        #[test]
        fn added_signal_never_removes_a_rejection(seed in any::<u64>(), bump in 0.0f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (p, n, s, t) = (50, 128, 10, 40);
            let g = build_upper_grid(n, DeltaRule::Auto).unwrap();
            let base = 3.0;
            let mut v: Vec<f64> = (0..p * n).map(|_| rng.sample(StandardNormal)).collect();
            for j in 0..s {
                for c in 0..t {
                    v[j * n + c] += base;
                }
            }
            let before = ObservationMatrix::new(p, n, v.clone()).unwrap();
            for j in 0..s {
                for c in 0..t {
                    v[j * n + c] += bump;
                }
            }
            let after = ObservationMatrix::new(p, n, v).unwrap();
            let gamma = 0.1;
            let r0 = pbj_test(&before, &g, Side::One, gamma).unwrap().reject;
            let r1 = pbj_test(&after, &g, Side::One, gamma).unwrap().reject;
            prop_assert!(!r0 || r1);
        }
    }
}
