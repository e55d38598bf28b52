//! Monte Carlo estimation of Type I and Type II errors.

use super::generators::{generate_null, sample, AlternativeSpec};
use super::mixture::{generate_mixture, log_lr_from_contrasts, lrt_decision, MixturePrior};
use super::rng::{Domain, TrialStreams};
use super::{ConfigIssue, SimError};
use crate::boundaries::{
    boundary_one_sided, boundary_regime2, boundary_two_sided, calibration_from_dims, BoundaryValue, Regime,
};
use crate::contrasts::{contrast_matrix, ObservationMatrix, Side};
use crate::detectors::{detect_from_contrasts, TestDecision};
use crate::grids::{build_lower_grid, scan_grid, BaseRule, DeltaRule, Grid};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;
/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestKind {
    Pbj,
    Max,
    Combined,
    Lrt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MixtureFlavor {
    Sparse,
    SingleRow,
    EvenSpread,
}

/// How one hypothesis generates data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorSpec {
    Null {
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        base_means: Vec<f64>,
    },
    /// `s` random rows jump at `t_star` (uniform per trial when absent).
    /// Signal is either an absolute `rho` or a `boundary_multiple` of the
    /// detection boundary at the effective calibration of `(p, n, s)`.
    Alternative {
        s: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rho: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        boundary_multiple: Option<f64>,
        #[serde(default = "default_regime")]
        regime: Regime,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        t_star: Option<usize>,
    },
    Mixture {
        flavor: MixtureFlavor,
        rho: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        epsilon: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        beta_bar: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        s: Option<usize>,
        #[serde(default)]
        base: BaseRule,
    },
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec::Null { base_means: Vec::new() }
    }
}

fn default_regime() -> Regime {
    Regime::ThreeLog
}

fn default_side() -> Side {
    Side::One
}

fn default_gamma() -> f64 {
    2.0
}

fn default_test() -> TestKind {
    TestKind::Combined
}

fn default_schema() -> u32 {
    SCHEMA_VERSION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    pub p: usize,
    pub n: usize,
    #[serde(default = "default_side")]
    pub side: Side,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default)]
    pub delta: DeltaRule,
    #[serde(default = "default_test")]
    pub test: TestKind,
    pub trials: u32,
    pub seed: u64,
    #[serde(default)]
    pub h0: GeneratorSpec,
    pub h1: GeneratorSpec,
}

impl ExperimentConfig {
    /// Null calibration check at `p = 200`, `n = 2000`, 200 trials, against
    /// a planted change four times the boundary.
    pub fn type1_audit() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            p: 200,
            n: 2000,
            side: Side::One,
            gamma: 2.0,
            delta: DeltaRule::Auto,
            test: TestKind::Combined,
            trials: 200,
            seed: 20_240_602,
            h0: GeneratorSpec::default(),
            h1: GeneratorSpec::Alternative {
                s: 10,
                rho: None,
                boundary_multiple: Some(4.0),
                regime: Regime::ThreeLog,
                t_star: None,
            },
        }
    }

    /// Every field-level problem, keyed by its dotted path.
    pub fn validate(&self) -> Vec<ConfigIssue> {
        let mut issues = Vec::new();
        let mut bad = |key: &str, msg: String| issues.push(ConfigIssue::new(key, msg));
        if self.schema_version != SCHEMA_VERSION {
            bad("schema_version", format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version));
        }
        if self.p < 1 {
            bad("p", "must be at least 1".into());
        }
        if self.n < 2 {
            bad("n", "must be at least 2".into());
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            bad("gamma", format!("penalty exponent must be positive, got {}", self.gamma));
        }
        if let DeltaRule::Fixed(d) = self.delta {
            if !(d > 0.0 && d.is_finite()) {
                bad("delta", format!("must be \"auto\" or positive, got {d}"));
            }
        }
        if self.trials < 1 {
            bad("trials", "must be at least 1".into());
        }
        for (name, g) in [("h0", &self.h0), ("h1", &self.h1)] {
            validate_generator(name, g, self.p, self.n, &mut bad);
        }
        if self.test == TestKind::Lrt
            && !matches!(self.h1, GeneratorSpec::Mixture { flavor: MixtureFlavor::Sparse, .. })
        {
            bad("test", "lrt needs h1 to be a sparse mixture".into());
        }
        issues
    }
}

fn validate_generator(prefix: &str, g: &GeneratorSpec, p: usize, n: usize, bad: &mut impl FnMut(&str, String)) {
    let key = |k: &str| format!("{prefix}.{k}");
    match g {
        GeneratorSpec::Null { base_means } => {
            if !base_means.is_empty() && base_means.len() != p {
                bad(&key("base_means"), format!("needs {p} entries, got {}", base_means.len()));
            }
            if base_means.iter().any(|v| !v.is_finite()) {
                bad(&key("base_means"), "entries must be finite".into());
            }
        }
        GeneratorSpec::Alternative {
            s,
            rho,
            boundary_multiple,
            t_star,
            ..
        } => {
            if *s > p {
                bad(&key("s"), format!("exceeds p = {p}"));
            }
            match (rho, boundary_multiple) {
                (Some(_), Some(_)) | (None, None) => {
                    bad(&key("rho"), "give exactly one of rho and boundary_multiple".into())
                }
                (Some(r), None) if !(*r >= 0.0 && r.is_finite()) => bad(&key("rho"), format!("must be >= 0, got {r}")),
                (None, Some(m)) if !(*m >= 0.0 && m.is_finite()) => {
                    bad(&key("boundary_multiple"), format!("must be >= 0, got {m}"))
                }
                _ => {}
            }
            if let Some(t) = t_star {
                if *t == 0 || *t >= n {
                    bad(&key("t_star"), format!("must lie in [1, n-1], got {t}"));
                }
            }
        }
        GeneratorSpec::Mixture {
            flavor,
            rho,
            epsilon,
            beta_bar,
            s,
            base,
        } => {
            if !(*rho >= 0.0 && rho.is_finite()) {
                bad(&key("rho"), format!("must be >= 0, got {rho}"));
            }
            match flavor {
                MixtureFlavor::Sparse => match (epsilon, beta_bar) {
                    (Some(e), None) if !(0.0..=1.0).contains(e) => {
                        bad(&key("epsilon"), format!("must lie in [0, 1], got {e}"))
                    }
                    (None, Some(b)) if !(*b >= 0.0 && b.is_finite()) => {
                        bad(&key("beta_bar"), format!("must be >= 0, got {b}"))
                    }
                    (Some(_), Some(_)) | (None, None) => {
                        bad(&key("epsilon"), "give exactly one of epsilon and beta_bar".into())
                    }
                    _ => {}
                },
                MixtureFlavor::EvenSpread => match s {
                    Some(s) if *s > p => bad(&key("s"), format!("exceeds p = {p}")),
                    None => bad(&key("s"), "required for even_spread".into()),
                    _ => {}
                },
                MixtureFlavor::SingleRow => {}
            }
            if let Err(e) = build_lower_grid(n, *base) {
                bad(&key("base"), e.to_string());
            }
        }
    }
}

/// Boundary `ρ²` for the given side and regime at `(a, β)`.
pub fn boundary_for(side: Side, regime: Regime, a: f64, beta: f64, p: f64) -> Result<BoundaryValue, SimError> {
    Ok(match (regime, side) {
        (Regime::ThreeLog, Side::One) => boundary_one_sided(a, beta, p)?,
        (Regime::ThreeLog, Side::Two) => boundary_two_sided(a, beta, p)?,
        (Regime::TwoLog, _) => boundary_regime2(a, beta, p)?,
    })
}

/// Signal strength `m·√ρ²` with `ρ²` taken at the effective calibration of
/// `(p, n, s)`.
pub fn boundary_multiple_rho(p: usize, n: usize, s: usize, side: Side, regime: Regime, m: f64) -> Result<f64, SimError> {
    let cal = calibration_from_dims(p as u64, n as u64, s as u64, regime)?;
    let b = boundary_for(side, regime, cal.a, cal.beta, p as f64)?;
    Ok(m * b.rho())
}

/// Resolved data-generating process.
#[derive(Debug, Clone, PartialEq)]
pub enum Hypothesis {
    Null { base_means: Vec<f64> },
    Alternative { s: usize, rho: f64, t_star: Option<usize> },
    Mixture(MixturePrior),
}

impl Hypothesis {
    fn resolve(g: &GeneratorSpec, p: usize, n: usize, side: Side) -> Result<Self, SimError> {
        Ok(match g {
            GeneratorSpec::Null { base_means } => Hypothesis::Null {
                base_means: base_means.clone(),
            },
            GeneratorSpec::Alternative {
                s,
                rho,
                boundary_multiple,
                regime,
                t_star,
            } => {
                let rho = match (rho, boundary_multiple) {
                    (Some(r), None) => *r,
                    (None, Some(m)) => boundary_multiple_rho(p, n, *s, side, *regime, *m)?,
                    _ => return Err(SimError::Invalid("give exactly one of rho and boundary_multiple".into())),
                };
                Hypothesis::Alternative {
                    s: *s,
                    rho,
                    t_star: *t_star,
                }
            }
            GeneratorSpec::Mixture {
                flavor,
                rho,
                epsilon,
                beta_bar,
                s,
                base,
            } => {
                let grid = build_lower_grid(n, *base)?;
                Hypothesis::Mixture(match flavor {
                    MixtureFlavor::Sparse => match (epsilon, beta_bar) {
                        (Some(e), None) => MixturePrior::sparse(*e, *rho, grid, side)?,
                        (None, Some(b)) => MixturePrior::sparse_from_beta_bar(p, *b, *rho, grid, side)?,
                        _ => return Err(SimError::Invalid("give exactly one of epsilon and beta_bar".into())),
                    },
                    MixtureFlavor::SingleRow => MixturePrior::SingleRow { rho: *rho, grid },
                    MixtureFlavor::EvenSpread => MixturePrior::EvenSpread {
                        s: s.ok_or_else(|| SimError::Invalid("even_spread needs s".into()))?,
                        rho: *rho,
                        grid,
                    },
                })
            }
        })
    }

    fn draw(&self, p: usize, n: usize, side: Side, streams: &TrialStreams) -> Result<ObservationMatrix, SimError> {
        match self {
            Hypothesis::Null { base_means } => generate_null(p, n, base_means, streams),
            Hypothesis::Alternative { s, rho, t_star } => {
                let spec = AlternativeSpec::draw(p, n, *s, *rho, side, *t_star, &mut streams.aux())?;
                Ok(sample(&spec.means(), streams))
            }
            Hypothesis::Mixture(prior) => Ok(generate_mixture(prior, p, n, streams)?.x),
        }
    }
}

/// A validated experiment ready to run.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub p: usize,
    pub n: usize,
    pub side: Side,
    pub gamma: f64,
    pub grid: Grid,
    pub h0: Hypothesis,
    pub h1: Hypothesis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    H0,
    H1,
}

impl Experiment {
    pub fn new(p: usize, n: usize, side: Side, gamma: f64, delta: DeltaRule, h0: Hypothesis, h1: Hypothesis) -> Result<Self, SimError> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(SimError::Invalid(format!("penalty exponent must be positive, got {gamma}")));
        }
        Ok(Self {
            p,
            n,
            side,
            gamma,
            grid: scan_grid(n, delta)?,
            h0,
            h1,
        })
    }

    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self, SimError> {
        let issues = cfg.validate();
        if !issues.is_empty() {
            return Err(SimError::Config(issues));
        }
        let h0 = Hypothesis::resolve(&cfg.h0, cfg.p, cfg.n, cfg.side)?;
        let h1 = Hypothesis::resolve(&cfg.h1, cfg.p, cfg.n, cfg.side)?;
        Self::new(cfg.p, cfg.n, cfg.side, cfg.gamma, cfg.delta, h0, h1)
    }

    fn lrt_prior(&self) -> Option<&MixturePrior> {
        match &self.h1 {
            Hypothesis::Mixture(prior @ MixturePrior::SparseMixture { .. }) => Some(prior),
            _ => None,
        }
    }

    /// Data for one trial of one hypothesis.
    pub fn draw(&self, which: Which, seed: u64, trial: u64) -> Result<ObservationMatrix, SimError> {
        let (hyp, domain) = match which {
            Which::H0 => (&self.h0, Domain::Null),
            Which::H1 => (&self.h1, Domain::Alternative),
        };
        hyp.draw(self.p, self.n, self.side, &TrialStreams::new(seed, domain, trial))
    }

    /// Apply every requested test to one data set.
    pub fn evaluate(&self, x: &ObservationMatrix, tests: &[TestKind]) -> Result<Vec<TestDecision>, SimError> {
        let needs_scan = tests.iter().any(|t| *t != TestKind::Lrt);
        let detection = if needs_scan {
            let y = contrast_matrix(x, &self.grid)?;
            Some(detect_from_contrasts(&y, self.side, self.gamma)?)
        } else {
            None
        };
        tests
            .iter()
            .map(|t| match (t, &detection) {
                (TestKind::Pbj, Some(d)) => Ok(d.pbj),
                (TestKind::Max, Some(d)) => Ok(d.max),
                (TestKind::Combined, Some(d)) => Ok(d.combined),
                (TestKind::Lrt, _) => {
                    let Some(MixturePrior::SparseMixture {
                        epsilon, rho, grid, side, ..
                    }) = self.lrt_prior()
                    else {
                        return Err(SimError::Invalid("lrt needs a sparse mixture alternative".into()));
                    };
                    let y = contrast_matrix(x, grid)?;
                    Ok(lrt_decision(log_lr_from_contrasts(&y, *epsilon, *rho, *side)?))
                }
                _ => unreachable!("scan computed whenever a scan test is requested"),
            })
            .collect()
    }

    /// Decisions for trials `0..trials` of one hypothesis, in trial order.
    /// Trials run on the current rayon pool; results do not depend on its
    /// size.
    pub fn run(&self, which: Which, tests: &[TestKind], trials: u64, seed: u64) -> Result<Vec<Vec<TestDecision>>, SimError> {
        (0..trials)
            .into_par_iter()
            .map(|i| {
                let x = self.draw(which, seed, i)?;
                self.evaluate(&x, tests)
            })
            .collect()
    }
}

/// A Bernoulli proportion with its Wilson 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proportion {
    pub count: u64,
    pub trials: u64,
    pub estimate: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Proportion {
    pub fn new(count: u64, trials: u64) -> Self {
        let (lo, hi) = wilson_interval(count, trials);
        Self {
            count,
            trials,
            estimate: if trials == 0 { f64::NAN } else { count as f64 / trials as f64 },
            lo,
            hi,
        }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    /// Binomial standard error at the point estimate.
    pub fn std_error(&self) -> f64 {
        (self.estimate * (1.0 - self.estimate) / self.trials as f64).sqrt()
    }
}

pub fn wilson_interval(count: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let nn = trials as f64;
    let x = count as f64;
    let z2 = Z95 * Z95;
    let denom = nn + z2;
    let center = (x + z2 / 2.0) / denom;
    let half = Z95 / denom * (x * (nn - x) / nn + z2 / 4.0).sqrt();
    // the bounds are exactly 0 and 1 at the extremes; pin them against rounding
    let lo = if count == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if count == trials { 1.0 } else { (center + half).min(1.0) };
    (lo, hi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McErrorReport {
    pub schema_version: u32,
    pub test: TestKind,
    pub trials: u64,
    pub seed: u64,
    pub type1: Proportion,
    pub type2: Proportion,
    pub risk: f64,
    /// Some decision used a threshold that collapsed to zero.
    pub degenerate: bool,
    pub config: ExperimentConfig,
}

/// Count rejections of each test across trials.
pub fn rejection_counts(decisions: &[Vec<TestDecision>], tests: usize) -> Vec<u64> {
    let mut counts = vec![0u64; tests];
    for row in decisions {
        for (c, d) in counts.iter_mut().zip(row) {
            *c += u64::from(d.reject);
        }
    }
    counts
}

pub fn estimate_errors(cfg: &ExperimentConfig) -> Result<McErrorReport, SimError> {
    let exp = Experiment::from_config(cfg)?;
    let trials = u64::from(cfg.trials);
    let tests = [cfg.test];
    let h0 = exp.run(Which::H0, &tests, trials, cfg.seed)?;
    let h1 = exp.run(Which::H1, &tests, trials, cfg.seed)?;
    let degenerate = h0.iter().chain(&h1).any(|r| r[0].degenerate);
    let rej0 = rejection_counts(&h0, 1)[0];
    let rej1 = rejection_counts(&h1, 1)[0];
    let type1 = Proportion::new(rej0, trials);
    let type2 = Proportion::new(trials - rej1, trials);
    Ok(McErrorReport {
        schema_version: SCHEMA_VERSION,
        test: cfg.test,
        trials,
        seed: cfg.seed,
        risk: type1.estimate + type2.estimate,
        type1,
        type2,
        degenerate,
        config: cfg.clone(),
    })
}
