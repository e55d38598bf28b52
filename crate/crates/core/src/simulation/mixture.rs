//! Bayesian mixture priors over the sparse grid, their sampler, and the
//! exact likelihood ratio against the null.

use super::generators::{sample, MeanMatrix, RowMean};
use super::rng::TrialStreams;
use super::SimError;
use crate::contrasts::{contrast_matrix, ContrastMatrix, ObservationMatrix, Side};
use crate::detectors::TestDecision;
use crate::grids::{theta_vector, Grid};
use rand::Rng;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "flavor", rename_all = "snake_case")]
pub enum MixturePrior {
    /// Each row is independently non-null with probability `epsilon`; all
    /// non-null rows share the mean `±rho·θ^(k*)`.
    SparseMixture {
        epsilon: f64,
        beta_bar: Option<f64>,
        rho: f64,
        grid: Grid,
        side: Side,
    },
    /// One uniformly chosen row carries `rho·θ^(k*)`.
    SingleRow { rho: f64, grid: Grid },
    /// The first `s` rows carry `rho·θ^(k*)`.
    EvenSpread { s: usize, rho: f64, grid: Grid },
}

/// Interpolated sparsity exponent used by the simulation presets.
pub fn preset_beta_bar(beta1: f64, beta: f64) -> f64 {
    beta1 + 0.6 * (beta - beta1)
}

impl MixturePrior {
    pub fn sparse(epsilon: f64, rho: f64, grid: Grid, side: Side) -> Result<Self, SimError> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(SimError::Invalid(format!("epsilon must lie in [0, 1], got {epsilon}")));
        }
        check_rho(rho)?;
        Ok(MixturePrior::SparseMixture {
            epsilon,
            beta_bar: None,
            rho,
            grid,
            side,
        })
    }

    /// Sparse mixture with `epsilon = p^(-beta_bar)`.
    pub fn sparse_from_beta_bar(p: usize, beta_bar: f64, rho: f64, grid: Grid, side: Side) -> Result<Self, SimError> {
        if !(beta_bar >= 0.0 && beta_bar.is_finite()) {
            return Err(SimError::Invalid(format!("beta_bar must be >= 0, got {beta_bar}")));
        }
        check_rho(rho)?;
        Ok(MixturePrior::SparseMixture {
            epsilon: (p as f64).powf(-beta_bar),
            beta_bar: Some(beta_bar),
            rho,
            grid,
            side,
        })
    }

    pub fn grid(&self) -> &Grid {
        match self {
            MixturePrior::SparseMixture { grid, .. }
            | MixturePrior::SingleRow { grid, .. }
            | MixturePrior::EvenSpread { grid, .. } => grid,
        }
    }

    pub fn rho(&self) -> f64 {
        match *self {
            MixturePrior::SparseMixture { rho, .. }
            | MixturePrior::SingleRow { rho, .. }
            | MixturePrior::EvenSpread { rho, .. } => rho,
        }
    }
}

fn check_rho(rho: f64) -> Result<(), SimError> {
    if rho >= 0.0 && rho.is_finite() {
        Ok(())
    } else {
        Err(SimError::Invalid(format!("rho must be finite and >= 0, got {rho}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureDraw {
    pub x: ObservationMatrix,
    pub k_star: usize,
    pub t_star: usize,
    pub nonnull_rows: Vec<usize>,
}

impl MixtureDraw {
    pub fn nonnull_count(&self) -> usize {
        self.nonnull_rows.len()
    }
}

/// Draw the random mean matrix of one realization. Auxiliary draws come
/// from the trial's auxiliary stream in a fixed order: `k*`, then the
/// per-row selections.
pub fn mixture_means(prior: &MixturePrior, p: usize, n: usize, streams: &TrialStreams) -> Result<(MeanMatrix, usize, Vec<usize>), SimError> {
    let grid = prior.grid();
    if grid.n() != n {
        return Err(SimError::Invalid(format!("prior grid is for n = {}, data has n = {n}", grid.n())));
    }
    if p < 1 {
        return Err(SimError::Invalid("need p >= 1".into()));
    }
    let mut aux = streams.aux();
    let k_star = aux.random_range(0..grid.len());
    let t = grid.points()[k_star];
    let theta = theta_vector(n, t)?;
    let step = |sign: f64| RowMean::Step {
        t,
        pre: sign * prior.rho() * theta.head_value,
        post: sign * prior.rho() * theta.tail_value,
    };
    let mut rows = vec![RowMean::Constant(0.0); p];
    let mut nonnull = Vec::new();
    match *prior {
        MixturePrior::SparseMixture { epsilon, side, .. } => {
            for (j, row) in rows.iter_mut().enumerate() {
                if aux.random::<f64>() < epsilon {
                    let sign = match side {
                        Side::One => 1.0,
                        Side::Two => {
                            if aux.random::<bool>() {
                                1.0
                            } else {
                                -1.0
                            }
                        }
                    };
                    *row = step(sign);
                    nonnull.push(j);
                }
            }
        }
        MixturePrior::SingleRow { .. } => {
            let j = aux.random_range(0..p);
            rows[j] = step(1.0);
            nonnull.push(j);
        }
        MixturePrior::EvenSpread { s, .. } => {
            if s > p {
                return Err(SimError::Invalid(format!("s = {s} exceeds p = {p}")));
            }
            for (j, row) in rows.iter_mut().enumerate().take(s) {
                *row = step(1.0);
                nonnull.push(j);
            }
        }
    }
    Ok((MeanMatrix::new(n, rows), k_star, nonnull))
}

pub fn generate_mixture(prior: &MixturePrior, p: usize, n: usize, streams: &TrialStreams) -> Result<MixtureDraw, SimError> {
    let (means, k_star, nonnull_rows) = mixture_means(prior, p, n, streams)?;
    Ok(MixtureDraw {
        x: sample(&means, streams),
        t_star: prior.grid().points()[k_star],
        k_star,
        nonnull_rows,
    })
}

#[inline]
fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

#[inline]
fn log_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// `ln(1 + ε(e^z - 1))`, accurate both when the correction is tiny and when
/// `e^z` overflows.
#[inline]
fn log_row_factor(eps: f64, ln_eps: f64, ln_1m_eps: f64, z: f64) -> f64 {
    if z <= 1.0 {
        (eps * z.exp_m1()).ln_1p()
    } else {
        log_add_exp(ln_1m_eps, ln_eps + z)
    }
}

/// `ln` of the likelihood ratio of the sparse mixture against the null,
/// evaluated from the contrasts at the prior's grid.
pub fn log_lr_from_contrasts(y: &ContrastMatrix, epsilon: f64, rho: f64, side: Side) -> Result<f64, SimError> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(SimError::Invalid(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    let ln_eps = epsilon.ln();
    let ln_1m_eps = (-epsilon).ln_1p();
    let half_rho2 = 0.5 * rho * rho;
    let per_point: Vec<f64> = y
        .columns()
        .map(|col| {
            col.iter()
                .map(|&v| {
                    let z = match side {
                        Side::One => rho * v - half_rho2,
                        Side::Two => log_cosh(rho * v) - half_rho2,
                    };
                    log_row_factor(epsilon, ln_eps, ln_1m_eps, z)
                })
                .sum::<f64>()
        })
        .collect();
    let top = per_point.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let value = if top.is_finite() {
        let s: f64 = per_point.iter().map(|&l| (l - top).exp()).sum();
        top + (s / per_point.len() as f64).ln()
    } else {
        top
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(SimError::LikelihoodRatioNotRepresentable(value))
    }
}

pub fn likelihood_ratio(x: &ObservationMatrix, prior: &MixturePrior) -> Result<f64, SimError> {
    match prior {
        MixturePrior::SparseMixture {
            epsilon,
            rho,
            grid,
            side,
            ..
        } => {
            let y = contrast_matrix(x, grid)?;
            log_lr_from_contrasts(&y, *epsilon, *rho, *side)
        }
        _ => Err(SimError::Invalid("likelihood ratio is implemented for the sparse mixture only".into())),
    }
}

/// Reject when the log likelihood ratio is strictly positive.
pub fn lrt_test(x: &ObservationMatrix, prior: &MixturePrior) -> Result<TestDecision, SimError> {
    let l = likelihood_ratio(x, prior)?;
    Ok(lrt_decision(l))
}

pub(crate) fn lrt_decision(log_lr: f64) -> TestDecision {
    TestDecision {
        statistic: log_lr,
        threshold: 0.0,
        reject: log_lr > 0.0,
        degenerate: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contrasts::contrast_at;
    use crate::grids::{build_lower_grid, theta_inner, BaseRule};
    use crate::simulation::generators::in_alternative_space;
    use crate::simulation::rng::Domain;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn lower(n: usize) -> Grid {
        build_lower_grid(n, BaseRule::Auto).unwrap()
    }

    #[test]
    fn log_row_factor_branches_agree() {
        let eps = 0.3;
        for z in [-50.0, -1.0, -1e-9, 0.0, 1e-9, 0.999, 1.0, 1.001, 5.0, 800.0] {
            let direct = eps * f64::exp(z) + (1.0 - eps);
            let got = log_row_factor(eps, eps.ln(), (-eps).ln_1p(), z);
            if z < 700.0 {
                assert!((got - direct.ln()).abs() < 1e-13, "z={z}");
            } else {
                assert!((got - (eps.ln() + z)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn small_epsilon_collapses_to_null() {
        let n = 64;
        let s = TrialStreams::new(1, Domain::Null, 0);
        let x = crate::simulation::generators::generate_null(10, n, &[], &s).unwrap();
        let prior = MixturePrior::sparse(1e-14, 1.0, lower(n), Side::One).unwrap();
        assert!(likelihood_ratio(&x, &prior).unwrap().abs() < 1e-10);
    }

    #[test]
    fn single_point_matches_density_ratio() {
        let n = 40;
        let t = 13;
        let grid = Grid::from_points(n, vec![t]).unwrap();
        let (eps, rho) = (0.25, 1.3);
        let theta = theta_vector(n, t).unwrap().materialize();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for side in [Side::One, Side::Two] {
            let prior = MixturePrior::sparse(eps, rho, grid.clone(), side).unwrap();
            for _ in 0..10 {
                let xs: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal) * 1.5).collect();
                // log of ∏ φ(x - μ)/φ(x) for mean μ = sign·ρθ
                let log_ratio = |sign: f64| -> f64 {
                    xs.iter()
                        .zip(&theta)
                        .map(|(x, th)| {
                            let mu = sign * rho * th;
                            -0.5 * (x - mu).powi(2) + 0.5 * x * x
                        })
                        .sum()
                };
                let want = match side {
                    Side::One => (1.0 - eps + eps * log_ratio(1.0).exp()).ln(),
                    Side::Two => (1.0 - eps + eps * 0.5 * (log_ratio(1.0).exp() + log_ratio(-1.0).exp())).ln(),
                };
                let x = ObservationMatrix::new(1, n, xs.clone()).unwrap();
                let got = likelihood_ratio(&x, &prior).unwrap();
                assert!((got - want).abs() < 1e-9, "{side:?}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn null_expectation_of_ratio_is_one() {
        let (p, n, trials) = (20, 64, 10_000u64);
        let prior = MixturePrior::sparse(0.2, 1.0, lower(n), Side::One).unwrap();
        let vals: Vec<f64> = (0..trials)
            .map(|i| {
                let x = crate::simulation::generators::generate_null(p, n, &[], &TrialStreams::new(11, Domain::Null, i)).unwrap();
                likelihood_ratio(&x, &prior).unwrap().exp()
            })
            .collect();
        let mean = vals.iter().sum::<f64>() / trials as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
        let se = (var / trials as f64).sqrt();
        assert!((mean - 1.0).abs() <= 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn strict_threshold_on_ties() {
        assert!(!lrt_decision(0.0).reject);
        assert!(lrt_decision(1e-300).reject);
    }

    #[test]
    fn nonnull_count_is_binomial() {
        let (p, n, trials) = (200, 64, 400u64);
        let eps = 0.05;
        let prior = MixturePrior::sparse(eps, 1.0, lower(n), Side::Two).unwrap();
        let mut total = 0usize;
        for i in 0..trials {
            let (_, _, rows) = mixture_means(&prior, p, n, &TrialStreams::new(3, Domain::Alternative, i)).unwrap();
            total += rows.len();
        }
        let mean = total as f64 / trials as f64;
        let pe = p as f64 * eps;
        let band = 4.0 * (pe * (1.0 - eps)).sqrt() / (trials as f64).sqrt();
        assert!((mean - pe).abs() <= band, "{mean}");
    }

    #[test]
    fn k_star_is_uniform_and_contrasts_follow_theta_inner() {
        let (p, n, trials) = (1, 1000, 3000u64);
        let grid = lower(n);
        let rho = 2.0;
        let prior = MixturePrior::EvenSpread { s: 1, rho, grid: grid.clone() };
        let len = grid.len();
        let mut counts = vec![0usize; len];
        let mut sums = vec![vec![0.0; len]; len];
        for i in 0..trials {
            let d = generate_mixture(&prior, p, n, &TrialStreams::new(4, Domain::Alternative, i)).unwrap();
            counts[d.k_star] += 1;
            for (k, &t) in grid.points().iter().enumerate() {
                sums[d.k_star][k] += contrast_at(&d.x, t).unwrap()[0];
            }
        }
        for (ks, &c) in counts.iter().enumerate() {
            let expect = trials as f64 / len as f64;
            assert!((c as f64 - expect).abs() < 4.0 * expect.sqrt());
            for (k, &t) in grid.points().iter().enumerate() {
                let mean = sums[ks][k] / c as f64;
                let want = rho * theta_inner(n, grid.points()[ks], t).unwrap();
                assert!((mean - want).abs() < 4.0 / (c as f64).sqrt(), "k*={ks} k={k}: {mean} vs {want}");
            }
        }
    }

    #[test]
    fn qualifying_draws_lie_in_alternative_space() {
        let (p, n, s, rho) = (100, 256, 5, 1.5);
        for side in [Side::One, Side::Two] {
            let prior = MixturePrior::sparse(0.08, rho, lower(n), side).unwrap();
            let mut qualifying = 0;
            for i in 0..300 {
                let (means, _, rows) = mixture_means(&prior, p, n, &TrialStreams::new(6, Domain::Alternative, i)).unwrap();
                if rows.len() >= s {
                    qualifying += 1;
                    assert!(in_alternative_space(&means.to_dense(), p, n, s, rho, side));
                }
            }
            assert!(qualifying > 100);
        }
    }

    #[test]
    fn single_row_prior_has_one_nonnull_row() {
        let prior = MixturePrior::SingleRow { rho: 1.0, grid: lower(100) };
        let d = generate_mixture(&prior, 30, 100, &TrialStreams::new(1, Domain::Alternative, 0)).unwrap();
        assert_eq!(d.nonnull_count(), 1);
        assert!(likelihood_ratio(&d.x, &prior).is_err());
    }

    #[test]
    fn beta_bar_preset() {
        assert!((preset_beta_bar(0.5, 0.7) - 0.62).abs() < 1e-15);
        let MixturePrior::SparseMixture { epsilon, .. } = MixturePrior::sparse_from_beta_bar(100, 0.5, 1.0, lower(64), Side::One).unwrap() else {
            unreachable!()
        };
        assert!((epsilon - 0.1).abs() < 1e-15);
    }
}
