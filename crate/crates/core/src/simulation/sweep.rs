//! Phase-plane sweeps: error estimates over a grid of calibrations and
//! signal multiples of the detection boundary.

use super::harness::{boundary_for, Experiment, Hypothesis, Proportion, TestKind, Which, SCHEMA_VERSION};
use super::rng::child_seed;
use super::{ConfigIssue, SimError};
use crate::boundaries::{calibration_from_dims, dims_from_calibration, CaseLabel, Calibration, Regime};
use crate::contrasts::Side;
use crate::detectors::TestDecision;
use crate::grids::DeltaRule;
use serde::{Deserialize, Serialize};

fn default_side() -> Side {
    Side::One
}

fn default_regime() -> Regime {
    Regime::ThreeLog
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

/// A sweep over either calibration exponents `(a, β)` or explicit
/// dimensions `(n, s)`, crossed with signal multipliers.
///
/// In `(a, β)` mode each cell runs at the sequence length implied by the
/// calibration, capped at `n`; capped cells are flagged as saturated. The
/// signal is a multiple of the boundary at the requested `(a, β)`. In
/// `(n, s)` mode the boundary is taken at the effective calibration of
/// each cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePlan {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    pub p: usize,
    /// Largest sequence length a cell may use.
    pub n: usize,
    #[serde(default)]
    pub a: Vec<f64>,
    #[serde(default)]
    pub beta: Vec<f64>,
    #[serde(default)]
    pub n_values: Vec<usize>,
    #[serde(default)]
    pub s_values: Vec<usize>,
    #[serde(default)]
    pub multipliers: Vec<f64>,
    #[serde(default = "default_side")]
    pub side: Side,
    #[serde(default = "default_regime")]
    pub regime: Regime,
    #[serde(default = "default_test")]
    pub test: TestKind,
    pub trials: u32,
    pub seed: u64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default)]
    pub delta: DeltaRule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_star: Option<usize>,
}

impl PhasePlan {
    /// The 3×3 demonstration grid at `p = 500`, `n ≤ 2000`, 100 trials per
    /// cell, including the zero-signal multiplier as a null reference.
    pub fn phase_demo() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            p: 500,
            n: 2000,
            a: vec![0.1, 0.3, 0.5],
            beta: vec![0.3, 0.5, 0.7],
            n_values: Vec::new(),
            s_values: Vec::new(),
            multipliers: vec![0.0, 0.5, 1.0, 2.0, 4.0],
            side: Side::One,
            regime: Regime::ThreeLog,
            test: TestKind::Combined,
            trials: 100,
            seed: 20_240_601,
            gamma: 2.0,
            delta: DeltaRule::Auto,
            t_star: None,
        }
    }

    pub fn validate(&self) -> Vec<ConfigIssue> {
        let mut issues = Vec::new();
        let mut bad = |key: &str, msg: String| issues.push(ConfigIssue::new(key, msg));
        if self.schema_version != SCHEMA_VERSION {
            bad("schema_version", format!("unsupported version {}, expected {SCHEMA_VERSION}", self.schema_version));
        }
        if self.p < 2 {
            bad("p", "must be at least 2".into());
        }
        if self.n < 2 {
            bad("n", "must be at least 2".into());
        }
        let ab = !self.a.is_empty() || !self.beta.is_empty();
        let ns = !self.n_values.is_empty() || !self.s_values.is_empty();
        if ab && ns {
            bad("a", "choose either a/beta or n_values/s_values, not both".into());
        }
        for (i, &a) in self.a.iter().enumerate() {
            if !(a > 0.0 && a.is_finite()) {
                bad(&format!("a[{i}]"), format!("must be positive, got {a}"));
            }
        }
        for (i, &b) in self.beta.iter().enumerate() {
            if !(b > 0.0 && b <= 1.0) {
                bad(&format!("beta[{i}]"), format!("must lie in (0, 1], got {b}"));
            }
        }
        for (i, &nv) in self.n_values.iter().enumerate() {
            if nv < 2 || nv > self.n {
                bad(&format!("n_values[{i}]"), format!("must lie in [2, n = {}], got {nv}", self.n));
            }
        }
        for (i, &s) in self.s_values.iter().enumerate() {
            if s < 1 || s > self.p {
                bad(&format!("s_values[{i}]"), format!("must lie in [1, p = {}], got {s}", self.p));
            }
        }
        for (i, &m) in self.multipliers.iter().enumerate() {
            if !(m >= 0.0 && m.is_finite()) {
                bad(&format!("multipliers[{i}]"), format!("must be >= 0, got {m}"));
            }
        }
        if self.trials < 1 {
            bad("trials", "must be at least 1".into());
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            bad("gamma", format!("penalty exponent must be positive, got {}", self.gamma));
        }
        if let DeltaRule::Fixed(d) = self.delta {
            if !(d > 0.0 && d.is_finite()) {
                bad("delta", format!("must be \"auto\" or positive, got {d}"));
            }
        }
        if self.test == TestKind::Lrt {
            bad("test", "sweeps run scan tests only".into());
        }
        issues
    }
}

/// One sweep cell at one signal multiple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    /// Calibration the signal was scaled against.
    pub a: f64,
    pub beta: f64,
    /// Calibration actually realized by `(p, n, s)`; `None` when `n` is too
    /// short for the regime's iterated logarithm.
    pub a_eff: Option<f64>,
    pub beta_eff: f64,
    pub case_label: CaseLabel,
    pub multiplier: f64,
    pub p: usize,
    pub n: usize,
    pub s: usize,
    pub rho: f64,
    pub type1: Proportion,
    pub type2: Proportion,
    pub risk: f64,
    pub saturated: bool,
}

struct Cell {
    a: f64,
    beta: f64,
    n: usize,
    s: usize,
    saturated: bool,
}

fn cells(plan: &PhasePlan) -> Result<Vec<Cell>, SimError> {
    let mut out = Vec::new();
    for &a in &plan.a {
        for &beta in &plan.beta {
            let dims = dims_from_calibration(&Calibration {
                regime: plan.regime,
                a,
                beta,
                p: plan.p as u64,
            })?;
            let capped = dims.saturated || dims.n > plan.n as u64;
            out.push(Cell {
                a,
                beta,
                n: if capped { plan.n } else { (dims.n as usize).max(2) },
                s: dims.s as usize,
                saturated: capped,
            });
        }
    }
    for &n in &plan.n_values {
        for &s in &plan.s_values {
            let cal = calibration_from_dims(plan.p as u64, n as u64, s as u64, plan.regime)?;
            out.push(Cell {
                a: cal.a,
                beta: cal.beta,
                n,
                s,
                saturated: false,
            });
        }
    }
    Ok(out)
}

/// Run every cell of the plan. Within a cell all multipliers share the
/// same seeds, so the noise is identical across signal strengths.
pub fn phase_sweep(plan: &PhasePlan) -> Result<Vec<PhasePoint>, SimError> {
    let issues = plan.validate();
    if !issues.is_empty() {
        return Err(SimError::Config(issues));
    }
    let trials = u64::from(plan.trials);
    let tests = [plan.test];
    let mut points = Vec::new();
    let cells = cells(plan)?;
    // resolve every boundary first so that domain errors surface before any
    // simulation time is spent
    let bounds = cells
        .iter()
        .map(|c| boundary_for(plan.side, plan.regime, c.a, c.beta, plan.p as f64))
        .collect::<Result<Vec<_>, _>>()?;
    for (idx, (cell, bound)) in cells.iter().zip(bounds).enumerate() {
        let seed = child_seed(plan.seed, idx as u64);
        let eff = calibration_from_dims(plan.p as u64, cell.n as u64, cell.s as u64, plan.regime).ok();
        let null = Hypothesis::Null { base_means: Vec::new() };
        let mut type1 = None;
        for &m in &plan.multipliers {
            let rho = m * bound.rho();
            let h1 = Hypothesis::Alternative {
                s: cell.s,
                rho,
                t_star: plan.t_star.filter(|&t| t < cell.n),
            };
            let exp = Experiment::new(plan.p, cell.n, plan.side, plan.gamma, plan.delta, null.clone(), h1)?;
            let t1 = match type1 {
                Some(t) => t,
                None => {
                    let r = count(&exp.run(Which::H0, &tests, trials, seed)?);
                    *type1.insert(Proportion::new(r, trials))
                }
            };
            let accepted = trials - count(&exp.run(Which::H1, &tests, trials, seed)?);
            let type2 = Proportion::new(accepted, trials);
            points.push(PhasePoint {
                a: cell.a,
                beta: cell.beta,
                a_eff: eff.map(|c| c.a),
                beta_eff: eff.map_or(f64::NAN, |c| c.beta),
                case_label: bound.case_label,
                multiplier: m,
                p: plan.p,
                n: cell.n,
                s: cell.s,
                rho,
                risk: t1.estimate + type2.estimate,
                type1: t1,
                type2,
                saturated: cell.saturated,
            });
        }
    }
    Ok(points)
}

fn count(d: &[Vec<TestDecision>]) -> u64 {
    d.iter().filter(|r| r[0].reject).count() as u64
}

/// Largest increase of risk between consecutive multipliers (sorted
/// ascending) of one cell, in units of the wider risk band of the two
/// points involved.
pub fn worst_monotonicity_violation(cell: &[PhasePoint]) -> f64 {
    let mut pts: Vec<&PhasePoint> = cell.iter().collect();
    pts.sort_by(|x, y| x.multiplier.total_cmp(&y.multiplier));
    pts.windows(2)
        .map(|w| {
            let rise = w[1].risk - w[0].risk;
            let width = risk_width(w[0]).max(risk_width(w[1]));
            if rise <= 0.0 {
                0.0
            } else {
                rise / width
            }
        })
        .fold(0.0, f64::max)
}

/// Width of the risk band: sum of the two Wilson widths.
pub fn risk_width(p: &PhasePoint) -> f64 {
    p.type1.width() + p.type2.width()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plan() -> PhasePlan {
        PhasePlan {
            schema_version: 1,
            p: 60,
            n: 120,
            a: vec![0.3],
            beta: vec![0.45, 0.7],
            n_values: vec![],
            s_values: vec![],
            multipliers: vec![0.0, 1.0, 4.0],
            side: Side::One,
            regime: Regime::ThreeLog,
            test: TestKind::Combined,
            trials: 30,
            seed: 1,
            gamma: 2.0,
            delta: DeltaRule::Auto,
            t_star: None,
        }
    }

    #[test]
    fn empty_plan_yields_no_rows() {
        let mut p = plan();
        p.a.clear();
        assert!(phase_sweep(&p).unwrap().is_empty());
        let mut p = plan();
        p.multipliers.clear();
        assert!(phase_sweep(&p).unwrap().is_empty());
    }

    #[test]
    fn saturated_cells_are_flagged_and_kept() {
        let pts = phase_sweep(&plan()).unwrap();
        assert_eq!(pts.len(), 6);
        assert!(pts.iter().all(|p| p.saturated && p.n == 120));
        assert_eq!(pts[0].case_label, CaseLabel::Moderate);
        for cell in pts.chunks(3) {
            // no signal: same null law under both hypotheses
            assert_eq!(cell[0].rho, 0.0);
            assert!((cell[0].risk - 1.0).abs() <= risk_width(&cell[0]));
            // paired seeds make type I identical across multipliers
            assert!(cell.iter().all(|p| p.type1 == cell[0].type1));
            assert!(worst_monotonicity_violation(cell) <= 2.0);
        }
    }

    #[test]
    fn dimension_mode_uses_effective_calibration() {
        let mut p = plan();
        p.a.clear();
        p.beta.clear();
        p.n_values = vec![100];
        p.s_values = vec![5];
        p.multipliers = vec![2.0];
        let pts = phase_sweep(&p).unwrap();
        let cal = calibration_from_dims(60, 100, 5, Regime::ThreeLog).unwrap();
        assert_eq!(pts[0].a, cal.a);
        assert_eq!(pts[0].a_eff, Some(cal.a));
        assert!(!pts[0].saturated);
    }

    #[test]
    fn domain_violations_are_errors() {
        let mut p = plan();
        p.regime = Regime::TwoLog;
        p.beta = vec![0.3];
        assert!(phase_sweep(&p).is_err());
        let mut p = plan();
        p.a = vec![0.3];
        p.n_values = vec![100];
        assert!(matches!(phase_sweep(&p), Err(SimError::Config(_))));
    }
}
