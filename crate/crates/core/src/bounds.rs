//! Incentive-based guarantees on approvals.
//!
//! An agent who runs a trial only when `R · E_Q[β_θ(τ)] ≥ C` reveals enough
//! about their prior that, given approval, the posterior odds of a nonnull
//! are at least `(C/R − τ)/τ`, equivalently the Bayes FDR is at most
//! `τR/C`. The prior-free counterpart ([`theorem2_ledger`]) says that if a
//! set of agents is not losing money in aggregate, the expected number of
//! true approvals outweighs false ones by the same factor.

use serde::Serialize;
use thiserror::Error;

use crate::model::{ApprovalProtocol, Economics, GaussianTestModel, ModelError, ParameterPoint};
use crate::numerics::Probability;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoundsError {
    #[error("threshold must be positive")]
    ZeroThreshold,
    #[error("target FDR level must lie in (0, 1), got {0}")]
    InvalidAlpha(f64),
    #[error("economics cannot support FDR level {alpha}: designed threshold {tau} is not below 1")]
    Infeasible { alpha: f64, tau: f64 },
    #[error("ledger requires the effective threshold {tau} to be below C/R = {ratio}")]
    HypothesisViolated { tau: f64, ratio: f64 },
    #[error("agent list is empty")]
    NoAgents,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// A nonnegative odds value that may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Odds {
    Finite(f64),
    Infinite,
}

impl Odds {
    /// `numerator / denominator`, or `None` when both masses vanish.
    pub fn from_masses(numerator: f64, denominator: f64) -> Option<Odds> {
        if denominator > 0.0 {
            Some(Odds::Finite(numerator / denominator))
        } else if numerator > 0.0 {
            Some(Odds::Infinite)
        } else {
            None
        }
    }

    pub fn value(&self) -> f64 {
        match *self {
            Odds::Finite(v) => v,
            Odds::Infinite => f64::INFINITY,
        }
    }
}

/// Lower bound on the posterior odds of a nonnull given approval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum OddsBound {
    AtLeast(f64),
    /// `τ ≥ C/R`: the raw value `(C/R − τ)/τ` is not positive.
    Vacuous(f64),
}

impl OddsBound {
    pub fn value(&self) -> f64 {
        match *self {
            OddsBound::AtLeast(v) | OddsBound::Vacuous(v) => v,
        }
    }

    pub fn is_vacuous(&self) -> bool {
        matches!(self, OddsBound::Vacuous(_))
    }
}

/// Upper bound on the Bayes FDR given approval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum FdrBound {
    AtMost(Probability),
    /// `τR/C ≥ 1`: the FDR cannot be bounded below 100%.
    NotApplicable(f64),
}

impl FdrBound {
    /// The bound clamped to `[0, 1]`.
    pub fn clamped(&self) -> f64 {
        match *self {
            FdrBound::AtMost(p) => p.value(),
            FdrBound::NotApplicable(_) => 1.0,
        }
    }

    pub fn raw(&self) -> f64 {
        match *self {
            FdrBound::AtMost(p) => p.value(),
            FdrBound::NotApplicable(v) => v,
        }
    }

    pub fn is_applicable(&self) -> bool {
        matches!(self, FdrBound::AtMost(_))
    }
}

/// Both incentive bounds plus the profit of an agent certain of the null.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundReport {
    pub tau: Probability,
    pub cost_reward_ratio: f64,
    pub posterior_odds_lower: OddsBound,
    pub bayes_fdr_upper: FdrBound,
    pub null_expected_profit: f64,
}

fn informative(econ: &Economics, tau: f64) -> bool {
    tau < econ.cost_reward_ratio()
}

/// `(C/R − τ)/τ`, flagged vacuous when not positive.
pub fn posterior_odds_bound(econ: &Economics, tau: Probability) -> Result<OddsBound, BoundsError> {
    let tau = tau.value();
    if tau <= 0.0 {
        return Err(BoundsError::ZeroThreshold);
    }
    let value = (econ.cost_reward_ratio() - tau) / tau;
    Ok(if informative(econ, tau) && value > 0.0 {
        OddsBound::AtLeast(value)
    } else {
        OddsBound::Vacuous(value)
    })
}

/// `τR/C`, or not applicable once it reaches 1.
pub fn bayes_fdr_bound(econ: &Economics, tau: Probability) -> Result<FdrBound, BoundsError> {
    let tau = tau.value();
    if tau <= 0.0 {
        return Err(BoundsError::ZeroThreshold);
    }
    let raw = tau * econ.reward() / econ.cost();
    Ok(if informative(econ, tau) && raw < 1.0 {
        FdrBound::AtMost(Probability::saturating(raw))
    } else {
        FdrBound::NotApplicable(raw)
    })
}

/// Threshold `αC/R` guaranteeing Bayes FDR at most `α`.
pub fn design_tau(alpha: Probability, econ: &Economics) -> Result<Probability, BoundsError> {
    let a = alpha.value();
    if !(a > 0.0 && a < 1.0) {
        return Err(BoundsError::InvalidAlpha(a));
    }
    let tau = a * econ.cost_reward_ratio();
    if tau >= 1.0 {
        return Err(BoundsError::Infeasible { alpha: a, tau });
    }
    Ok(Probability::saturating(tau))
}

/// `τR − C`.
pub fn null_expected_profit(econ: &Economics, tau: Probability) -> f64 {
    tau.value() * econ.reward() - econ.cost()
}

pub fn bound_report(econ: &Economics, tau: Probability) -> Result<BoundReport, BoundsError> {
    Ok(BoundReport {
        tau,
        cost_reward_ratio: econ.cost_reward_ratio(),
        posterior_odds_lower: posterior_odds_bound(econ, tau)?,
        bayes_fdr_upper: bayes_fdr_bound(econ, tau)?,
        null_expected_profit: null_expected_profit(econ, tau),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Consistent,
    TheoremViolated,
}

/// One agent's row of the ledger, in units of `R`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LedgerEntry {
    pub point: ParameterPoint,
    pub power: f64,
    /// `v^a = β − C/R`: the agent's expected profit divided by `R`.
    pub agent_value: f64,
    /// `v^p = 1{nonnull}·β − b·1{null}·β` with `b = (C/R − τ)/τ`.
    pub principal_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LedgerReport {
    /// `Σ_i (R·β_i − C)`.
    pub agent_total: f64,
    pub tp_mass: f64,
    pub fp_mass: f64,
    pub ratio: Option<Odds>,
    pub bound: f64,
    pub verdict: Verdict,
    pub entries: Vec<LedgerEntry>,
}

impl LedgerReport {
    pub fn principal_total(&self) -> f64 {
        self.entries.iter().map(|e| e.principal_value).sum()
    }
}

/// Prior-free accounting for a fixed list of agents who all ran trials.
///
/// Requires the protocol's effective threshold to be below `C/R` and every
/// point to respect the Gaussian null binding, so that null powers never
/// exceed the threshold.
pub fn theorem2_ledger(
    points: &[ParameterPoint],
    model: &GaussianTestModel,
    protocol: &ApprovalProtocol,
    econ: &Economics,
) -> Result<LedgerReport, BoundsError> {
    if points.is_empty() {
        return Err(BoundsError::NoAgents);
    }
    let tau = protocol.effective_tau().value();
    let ratio_cr = econ.cost_reward_ratio();
    if tau >= ratio_cr {
        return Err(BoundsError::HypothesisViolated {
            tau,
            ratio: ratio_cr,
        });
    }
    for p in points {
        model.check_point(p)?;
    }
    let bound = (ratio_cr - tau) / tau;

    let mut tp_mass = 0.0;
    let mut fp_mass = 0.0;
    let entries: Vec<LedgerEntry> = points
        .iter()
        .map(|&point| {
            let power = model.protocol_power_at(point.effect(), protocol);
            let principal_value = if point.is_null() {
                fp_mass += power;
                -bound * power
            } else {
                tp_mass += power;
                power
            };
            LedgerEntry {
                point,
                power,
                agent_value: power - ratio_cr,
                principal_value,
            }
        })
        .collect();

    let agent_total = econ.reward() * (tp_mass + fp_mass) - points.len() as f64 * econ.cost();
    let ratio = Odds::from_masses(tp_mass, fp_mass);
    let r = ratio.map_or(f64::NAN, |o| o.value());
    let weak_ok = agent_total < 0.0 || r >= bound;
    let strict_ok = agent_total <= 0.0 || r > bound;
    let verdict = if weak_ok && strict_ok {
        Verdict::Consistent
    } else {
        Verdict::TheoremViolated
    };

    Ok(LedgerReport {
        agent_total,
        tp_mass,
        fp_mass,
        ratio,
        bound,
        verdict,
        entries,
    })
}
