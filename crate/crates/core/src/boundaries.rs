//! Closed-form detection boundaries, reference rates, and the maps between
//! problem dimensions `(p, n, s)` and calibration exponents `(a, β)`.
//!
//! Boundaries are returned as squared radii `ρ²`. The dimension `p` is a real
//! number greater than one so that formulas can be evaluated at convenient
//! points such as `p = e`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoundaryError {
    #[error("calibration out of range: {0}")]
    OutOfRange(String),
    #[error("second-regime boundary defined for sparse beta only (need 1/2 < beta <= 1, got {0})")]
    SparseBetaRequired(f64),
    #[error("n too small for regime {regime:?}: iterated logarithm of n is {value}")]
    NTooSmall { regime: Regime, value: f64 },
}

/// How the sequence length `n` is tied to `p`: `ln ln ln n = a ln p` for
/// `ThreeLog`, `ln ln n = a ln p` for `TwoLog`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    #[serde(alias = "three-log", alias = "three_log")]
    ThreeLog,
    #[serde(alias = "two-log", alias = "two_log")]
    TwoLog,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseLabel {
    Dense,
    Moderate,
    Sparse,
    UltraSparse,
    Beta34,
    Beta1Minus,
    BetaOne,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryValue {
    pub rho_squared: f64,
    pub case_label: CaseLabel,
}

impl BoundaryValue {
    pub fn rho(&self) -> f64 {
        self.rho_squared.sqrt()
    }
}

fn out_of_range(msg: impl Into<String>) -> BoundaryError {
    BoundaryError::OutOfRange(msg.into())
}

fn check_p(p: f64) -> Result<(), BoundaryError> {
    if p > 1.0 && p.is_finite() {
        Ok(())
    } else {
        Err(out_of_range(format!("need p > 1, got {p}")))
    }
}

fn check_first_regime(a: f64, beta: f64, p: f64) -> Result<(), BoundaryError> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(out_of_range(format!("need a > 0, got {a}")));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(out_of_range(format!("need 0 < beta < 1, got {beta}")));
    }
    check_p(p)
}

/// Slack on the case edges so that a point on an edge such as
/// `a = 1 - 2β` lands in the left case despite rounding in `1 - 2β`.
const EDGE_SLACK: f64 = 1e-12;

fn first_regime(a: f64, beta: f64, p: f64, dense_scale: f64) -> Result<BoundaryValue, BoundaryError> {
    check_first_regime(a, beta, p)?;
    let lp = p.ln();
    let edge = a - EDGE_SLACK;
    let (rho_squared, case_label) = if edge <= 1.0 - 2.0 * beta {
        (p.powf(dense_scale * (a - (1.0 - 2.0 * beta))), CaseLabel::Dense)
    } else if edge <= 1.0 - 4.0 * beta / 3.0 {
        ((a - (1.0 - 2.0 * beta)) * lp, CaseLabel::Moderate)
    } else if edge <= 1.0 - beta {
        let d = (1.0 - a).sqrt() - (1.0 - a - beta).max(0.0).sqrt();
        (2.0 * d * d * lp, CaseLabel::Sparse)
    } else {
        (p.powf(a - (1.0 - beta)), CaseLabel::UltraSparse)
    };
    Ok(BoundaryValue {
        rho_squared,
        case_label,
    })
}

/// Boundary for decreasing changes.
pub fn boundary_one_sided(a: f64, beta: f64, p: f64) -> Result<BoundaryValue, BoundaryError> {
    first_regime(a, beta, p, 1.0)
}

/// Boundary when change directions are unrestricted. Only the dense case
/// differs, with its exponent halved.
pub fn boundary_two_sided(a: f64, beta: f64, p: f64) -> Result<BoundaryValue, BoundaryError> {
    first_regime(a, beta, p, 0.5)
}

/// Coefficient `r` of the second-regime boundary `ρ² = 2r·ln p`.
pub fn r2_star(a: f64, beta: f64) -> Result<f64, BoundaryError> {
    Ok(r2_case(a, beta)?.0)
}

fn r2_case(a: f64, beta: f64) -> Result<(f64, CaseLabel), BoundaryError> {
    if !(beta > 0.5 && beta <= 1.0) {
        return Err(BoundaryError::SparseBetaRequired(beta));
    }
    if !(a > 0.0 && a.is_finite()) {
        return Err(out_of_range(format!("need a > 0, got {a}")));
    }
    Ok(if beta <= 0.75 {
        (beta - 0.5, CaseLabel::Beta34)
    } else if beta < 1.0 {
        let d = 1.0 - (1.0 - beta).sqrt();
        (d * d, CaseLabel::Beta1Minus)
    } else {
        (1.0 + a, CaseLabel::BetaOne)
    })
}

pub fn boundary_regime2(a: f64, beta: f64, p: f64) -> Result<BoundaryValue, BoundaryError> {
    check_p(p)?;
    let (r, case_label) = r2_case(a, beta)?;
    Ok(BoundaryValue {
        rho_squared: 2.0 * r * p.ln(),
        case_label,
    })
}

/// Critical squared signal strength of the classical sparse normal mixture
/// detection problem.
pub fn idj_mu_star(beta: f64, p: f64) -> Result<f64, BoundaryError> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(out_of_range(format!("need 0 < beta < 1, got {beta}")));
    }
    check_p(p)?;
    let lp = p.ln();
    Ok(if beta <= 0.5 {
        p.powf(2.0 * beta - 1.0)
    } else if beta <= 0.75 {
        (2.0 * beta - 1.0) * lp
    } else {
        let d = 1.0 - (1.0 - beta).sqrt();
        2.0 * d * d * lp
    })
}

/// Order-level rates with the unknown constants set to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRates {
    pub collier: f64,
    pub liu: f64,
    /// Always true: the rates only hold up to multiplicative constants.
    pub up_to_constants: bool,
}

pub fn reference_rates(p: u64, n: u64, s: u64) -> Result<ReferenceRates, BoundaryError> {
    if n < 3 {
        return Err(out_of_range(format!("need n >= 3, got {n}")));
    }
    reference_rates_log_n(p, (n as f64).ln(), s)
}

/// As [`reference_rates`], taking `ln n` so that astronomically long
/// sequences can be described.
pub fn reference_rates_log_n(p: u64, ln_n: f64, s: u64) -> Result<ReferenceRates, BoundaryError> {
    if s < 1 || s > p {
        return Err(out_of_range(format!("need 1 <= s <= p, got s = {s}, p = {p}")));
    }
    if !(ln_n >= 3f64.ln()) {
        return Err(out_of_range(format!("need n >= 3, got ln n = {ln_n}")));
    }
    let (p, s) = (p as f64, s as f64);
    let collier = if s >= p.sqrt() {
        p.sqrt()
    } else {
        s * (std::f64::consts::E * p / (s * s)).ln()
    };
    let ll = (8f64.ln() + ln_n).ln();
    let liu = if s > (p * ll).sqrt() {
        (p * ll).sqrt()
    } else {
        s * (std::f64::consts::E * p * ll / (s * s)).ln() + ll
    };
    Ok(ReferenceRates {
        collier,
        liu,
        up_to_constants: true,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub regime: Regime,
    pub a: f64,
    pub beta: f64,
    pub p: u64,
}

pub fn calibration_from_dims(p: u64, n: u64, s: u64, regime: Regime) -> Result<Calibration, BoundaryError> {
    calibration_from_log_n(p, (n as f64).ln(), s, regime)
}

pub fn calibration_from_log_n(p: u64, ln_n: f64, s: u64, regime: Regime) -> Result<Calibration, BoundaryError> {
    if p < 2 {
        return Err(out_of_range(format!("need p >= 2, got {p}")));
    }
    if s < 1 || s > p {
        return Err(out_of_range(format!("need 1 <= s <= p, got s = {s}, p = {p}")));
    }
    let iterated = match regime {
        Regime::ThreeLog => ln_n.ln().ln(),
        Regime::TwoLog => ln_n.ln(),
    };
    if !(iterated > 0.0) {
        return Err(BoundaryError::NTooSmall {
            regime,
            value: iterated,
        });
    }
    let lp = (p as f64).ln();
    Ok(Calibration {
        regime,
        a: iterated / lp,
        beta: 1.0 - (s as f64).ln() / lp,
        p,
    })
}

/// Largest `n` reported by [`dims_from_calibration`].
pub const N_SATURATION: u64 = 1 << 62;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dims {
    pub p: u64,
    /// `n` clamped to [`N_SATURATION`].
    pub n: u64,
    pub ln_n: f64,
    pub s: u64,
    pub saturated: bool,
}

pub fn dims_from_calibration(cal: &Calibration) -> Result<Dims, BoundaryError> {
    if cal.p < 2 {
        return Err(out_of_range(format!("need p >= 2, got {}", cal.p)));
    }
    if !(cal.a > 0.0 && cal.a.is_finite()) {
        return Err(out_of_range(format!("need a > 0, got {}", cal.a)));
    }
    if !(cal.beta > 0.0 && cal.beta <= 1.0) {
        return Err(out_of_range(format!("need 0 < beta <= 1, got {}", cal.beta)));
    }
    let p = cal.p as f64;
    let inner = p.powf(cal.a);
    let ln_n = match cal.regime {
        Regime::ThreeLog => inner.exp(),
        Regime::TwoLog => inner,
    };
    let saturated = !(ln_n < (N_SATURATION as f64).ln());
    let n = if saturated {
        N_SATURATION
    } else {
        ln_n.exp().round() as u64
    };
    let s = p.powf(1.0 - cal.beta).round().clamp(1.0, p) as u64;
    Ok(Dims {
        p: cal.p,
        n,
        ln_n,
        s,
        saturated,
    })
}
