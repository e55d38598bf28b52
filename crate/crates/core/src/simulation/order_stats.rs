//! Tail bounds for Berk–Jones terms of uniform order statistics.

use super::SimError;
use crate::numerics::{kl, CLAMP_CEIL, CLAMP_FLOOR};
use rand::Rng;
use std::f64::consts::{E, SQRT_2};

/// Bound on `P(n·K(j/n, U_(j)) > s)` for the `j`-th smallest of `n > 2`
/// independent uniforms. Values above one are returned unchanged.
pub fn chernoff_bound(n: usize, j: usize, s: f64) -> Result<f64, SimError> {
    if n <= 2 {
        return Err(SimError::Invalid(format!("lemma requires n > 2, got {n}")));
    }
    if j < 1 || j > n {
        return Err(SimError::Invalid(format!("need 1 <= j <= n, got j = {j}")));
    }
    if !(s > 0.0) {
        return Err(SimError::Invalid(format!("need s > 0, got {s}")));
    }
    Ok(if j == 1 {
        (1.0 + 9.0 / E) * (-s).exp()
    } else {
        E * SQRT_2 * j as f64 * (-(1.0 - 1.0 / j as f64) * s).exp()
    })
}

/// CDF of `Beta(j, n-j+1)`, the law of the `j`-th uniform order statistic,
/// as the binomial tail `P(Bin(n, x) >= j)`.
pub fn order_stat_cdf(n: usize, j: usize, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    // sum the shorter side in log space
    let ln_x = x.ln();
    let ln_1mx = (-x).ln_1p();
    let ln_choose = |k: usize| ln_gamma_int(n + 1) - ln_gamma_int(k + 1) - ln_gamma_int(n - k + 1);
    let pmf = |k: usize| (ln_choose(k) + k as f64 * ln_x + (n - k) as f64 * ln_1mx).exp();
    if j > n / 2 {
        (j..=n).map(pmf).sum::<f64>().min(1.0)
    } else {
        (1.0 - (0..j).map(pmf).sum::<f64>()).max(0.0)
    }
}

/// `ln((m-1)!)`.
fn ln_gamma_int(m: usize) -> f64 {
    (1..m).map(|k| (k as f64).ln()).sum()
}

/// Empirical `P(n·K(j/n, U_(j)) > s)` for each `(j, s)` pair, from `draws`
/// sorted uniform samples of size `n`.
pub fn empirical_tails<R: Rng + ?Sized>(n: usize, pairs: &[(usize, f64)], draws: usize, rng: &mut R) -> Vec<f64> {
    let mut hits = vec![0usize; pairs.len()];
    let mut u = vec![0.0; n];
    for _ in 0..draws {
        u.iter_mut().for_each(|v| *v = rng.random::<f64>());
        u.sort_unstable_by(f64::total_cmp);
        for (h, &(j, s)) in hits.iter_mut().zip(pairs) {
            let q = u[j - 1].clamp(CLAMP_FLOOR, CLAMP_CEIL);
            if n as f64 * kl(j as f64 / n as f64, q) > s {
                *h += 1;
            }
        }
    }
    hits.into_iter().map(|h| h as f64 / draws as f64).collect()
}
