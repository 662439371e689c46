//! Exact posterior quantities for discrete priors under the Gaussian
//! p-value model.
//!
//! Everything here is a finite sum over the prior's support; conditioning
//! events with zero probability come back as `None` (or a dedicated
//! [`PopulationFdr`] variant) rather than as errors.

use serde::Serialize;
use thiserror::Error;

use crate::bounds::Odds;
use crate::model::{
    ApprovalProtocol, DiscretePrior, Economics, GaussianTestModel, ParameterPoint, PopulationSpec,
    TruthSource,
};
use crate::numerics::{NumericsError, Probability};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BayesError {
    #[error("region [{lo}, {hi}] is empty or reversed")]
    EmptyRegion { lo: f64, hi: f64 },
    #[error("local fdr is undefined at the endpoint x = {0}")]
    Endpoint(f64),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// A p-value interval `[lo, hi]` with `0 ≤ lo < hi ≤ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PValueRegion {
    lo: Probability,
    hi: Probability,
}

impl PValueRegion {
    pub fn new(lo: Probability, hi: Probability) -> Result<Self, BayesError> {
        if lo >= hi {
            return Err(BayesError::EmptyRegion {
                lo: lo.value(),
                hi: hi.value(),
            });
        }
        Ok(PValueRegion { lo, hi })
    }

    /// `[0, τ]`, the approval region of a single-trial protocol.
    pub fn approval(tau: Probability) -> Result<Self, BayesError> {
        Self::new(Probability::ZERO, tau)
    }

    pub fn lo(&self) -> Probability {
        self.lo
    }

    pub fn hi(&self) -> Probability {
        self.hi
    }
}

/// Null and total approval mass `(Σ_null w β, Σ w β)` under the protocol.
pub fn approval_masses(
    prior: &DiscretePrior,
    model: &GaussianTestModel,
    protocol: &ApprovalProtocol,
) -> (f64, f64) {
    prior.iter().fold((0.0, 0.0), |(null, total), (p, w)| {
        let m = w * model.protocol_power_at(p.effect(), protocol);
        if p.is_null() {
            (null + m, total + m)
        } else {
            (null, total + m)
        }
    })
}

/// `P(θ ∈ Θ0 | approve)`; `None` when approval has zero probability.
pub fn posterior_null_given_approve(
    prior: &DiscretePrior,
    model: &GaussianTestModel,
    protocol: &ApprovalProtocol,
) -> Option<Probability> {
    let (null, total) = approval_masses(prior, model, protocol);
    (total > 0.0).then(|| Probability::saturating(null / total))
}

/// `P(θ ∈ Θ1 | approve) / P(θ ∈ Θ0 | approve)`.
pub fn posterior_odds_nonnull(
    prior: &DiscretePrior,
    model: &GaussianTestModel,
    protocol: &ApprovalProtocol,
) -> Option<Odds> {
    let (null, nonnull) = prior.iter().fold((0.0, 0.0), |(null, nonnull), (p, w)| {
        let m = w * model.protocol_power_at(p.effect(), protocol);
        if p.is_null() {
            (null + m, nonnull)
        } else {
            (null, nonnull + m)
        }
    });
    Odds::from_masses(nonnull, null)
}

/// Bayes FDR over a region: `P(θ ∈ Θ0 | X ∈ [lo, hi])`, using
/// `P_θ(lo < X ≤ hi) = β_θ(hi) − β_θ(lo)`.
pub fn fdr_over_region(
    prior: &DiscretePrior,
    model: &GaussianTestModel,
    region: &PValueRegion,
) -> Option<Probability> {
    let (lo, hi) = (region.lo.value(), region.hi.value());
    let (null, total) = prior.iter().fold((0.0, 0.0), |(null, total), (p, w)| {
        let m = w * (model.power_at(p.effect(), hi) - model.power_at(p.effect(), lo));
        if p.is_null() {
            (null + m, total + m)
        } else {
            (null, total + m)
        }
    });
    (total > 0.0).then(|| Probability::saturating(null / total))
}

/// Marginal p-value density `f_X(x) = Σ w f_θ(x)`, for `0 < x < 1`.
pub fn marginal_density(prior: &DiscretePrior, model: &GaussianTestModel, x: f64) -> f64 {
    prior
        .iter()
        .map(|(p, w)| w * model.density_at(p.effect(), x))
        .sum()
}

/// `lfdr(x) = π0 f0(x) / f_X(x)`.
pub fn local_fdr(
    prior: &DiscretePrior,
    model: &GaussianTestModel,
    x: Probability,
) -> Result<Probability, BayesError> {
    let x = x.value();
    if x <= 0.0 || x >= 1.0 {
        return Err(BayesError::Endpoint(x));
    }
    let (null, total) = prior.iter().fold((0.0, 0.0), |(null, total), (p, w)| {
        let d = w * model.density_at(p.effect(), x);
        if p.is_null() {
            (null + d, total + d)
        } else {
            (null, total + d)
        }
    });
    if total > 0.0 && total.is_finite() {
        Ok(Probability::saturating(null / total))
    } else if total.is_infinite() {
        // Far in the left tail an alternative density overflows.
        Ok(Probability::ZERO)
    } else {
        Ok(Probability::ONE)
    }
}

/// Outcome of the exact population FDR at one threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum PopulationFdr {
    Defined(Probability),
    /// No group opts in, so no trials are run.
    NoParticipation,
    /// Some groups run trials but approval has zero probability.
    NoApprovals,
}

impl PopulationFdr {
    pub fn value(&self) -> Option<f64> {
        match self {
            PopulationFdr::Defined(p) => Some(p.value()),
            _ => None,
        }
    }
}

/// Expected fraction of false approvals among approvals in an infinitely
/// large population, counting only groups that opt in.
pub fn population_fdr_exact(
    population: &PopulationSpec,
    model: &GaussianTestModel,
    protocol: &ApprovalProtocol,
    econ: &Economics,
) -> PopulationFdr {
    let mut any = false;
    let mut null = 0.0;
    let mut total = 0.0;
    for g in population.groups() {
        if !g.participates(model, protocol, econ) {
            continue;
        }
        any = true;
        let (n, t) = match &g.truth {
            TruthSource::Prior => approval_masses(&g.profile.prior, model, protocol),
            TruthSource::Fixed(points) => {
                let k = points.len() as f64;
                fixed_masses(points, model, protocol, 1.0 / k)
            }
        };
        null += g.fraction * n;
        total += g.fraction * t;
    }
    if !any {
        PopulationFdr::NoParticipation
    } else if total <= 0.0 {
        PopulationFdr::NoApprovals
    } else {
        PopulationFdr::Defined(Probability::saturating(null / total))
    }
}

fn fixed_masses(
    points: &[ParameterPoint],
    model: &GaussianTestModel,
    protocol: &ApprovalProtocol,
    weight: f64,
) -> (f64, f64) {
    points.iter().fold((0.0, 0.0), |(null, total), p| {
        let m = weight * model.protocol_power_at(p.effect(), protocol);
        if p.is_null() {
            (null + m, total + m)
        } else {
            (null, total + m)
        }
    })
}

/// Expected false approvals over expected approvals for a fixed agent list.
pub fn marginal_fdr(
    points: &[ParameterPoint],
    model: &GaussianTestModel,
    protocol: &ApprovalProtocol,
) -> Option<Probability> {
    let (null, total) = fixed_masses(points, model, protocol, 1.0);
    (total > 0.0).then(|| Probability::saturating(null / total))
}
