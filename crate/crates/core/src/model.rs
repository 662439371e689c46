//! The principal–agent trial: parameters, priors, the Gaussian p-value
//! model, approval protocols, economics, and agent decision rules.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{self, NumericsError, Probability};

/// Tolerance on prior weights and population fractions summing to one.
pub const SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("effect size must be finite, got {0}")]
    NonFiniteEffect(f64),
    #[error("prior has empty support")]
    EmptySupport,
    #[error("prior weight {weight} at effect {effect} is negative or not finite")]
    InvalidWeight { effect: f64, weight: f64 },
    #[error("prior weights sum to {0}, expected 1")]
    WeightsDoNotSumToOne(f64),
    #[error("parameter point (effect {effect}, null {is_null}) appears more than once")]
    DuplicatePoint { effect: f64, is_null: bool },
    #[error("cost must be positive and finite, got {0}")]
    InvalidCost(f64),
    #[error("reward must be positive and finite, got {0}")]
    InvalidReward(f64),
    #[error("protocol needs at least one trial")]
    NoTrials,
    #[error("effective threshold {0} must lie in (0, 1]")]
    InvalidEffectiveThreshold(f64),
    #[error("risk aversion must be nonnegative and finite, got {0}")]
    InvalidRiskAversion(f64),
    #[error(
        "Gaussian model requires effect 0 to be null and effect > 0 to be nonnull, got effect {effect} with null = {is_null}"
    )]
    NullFlagMismatch { effect: f64, is_null: bool },
    #[error("population has no groups")]
    EmptyPopulation,
    #[error("group fraction {0} is negative or not finite")]
    InvalidFraction(f64),
    #[error("group fractions sum to {0}, expected 1")]
    FractionsDoNotSumToOne(f64),
    #[error("duplicate group name {0:?}")]
    DuplicateGroup(String),
    #[error("fixed effect list for group {0:?} is empty")]
    EmptyFixedEffects(String),
    #[error("trial is never profitable: expected profit at threshold 1 is {0}")]
    NeverProfitable(f64),
}

/// A point `θ` of the parameter space together with its membership in `Θ0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParameterPoint {
    effect: f64,
    is_null: bool,
}

impl ParameterPoint {
    pub fn new(effect: f64, is_null: bool) -> Result<Self, ModelError> {
        if !effect.is_finite() {
            return Err(ModelError::NonFiniteEffect(effect));
        }
        Ok(ParameterPoint { effect, is_null })
    }

    /// The point null `θ = 0`.
    pub fn null() -> Self {
        ParameterPoint {
            effect: 0.0,
            is_null: true,
        }
    }

    pub fn nonnull(effect: f64) -> Result<Self, ModelError> {
        Self::new(effect, false)
    }

    #[inline]
    pub fn effect(&self) -> f64 {
        self.effect
    }

    #[inline]
    pub fn is_null(&self) -> bool {
        self.is_null
    }
}

/// The agent's private prior `Q` over a finite parameter space.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePrior {
    support: Vec<(ParameterPoint, f64)>,
}

impl DiscretePrior {
    pub fn new(support: Vec<(ParameterPoint, f64)>) -> Result<Self, ModelError> {
        if support.is_empty() {
            return Err(ModelError::EmptySupport);
        }
        let mut total = 0.0;
        for (i, (point, weight)) in support.iter().enumerate() {
            if !weight.is_finite() || *weight < 0.0 {
                return Err(ModelError::InvalidWeight {
                    effect: point.effect,
                    weight: *weight,
                });
            }
            if support[..i].iter().any(|(p, _)| p == point) {
                return Err(ModelError::DuplicatePoint {
                    effect: point.effect,
                    is_null: point.is_null,
                });
            }
            total += weight;
        }
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(ModelError::WeightsDoNotSumToOne(total));
        }
        Ok(DiscretePrior { support })
    }

    /// Point mass on the null `θ = 0`.
    pub fn point_null() -> Self {
        DiscretePrior {
            support: vec![(ParameterPoint::null(), 1.0)],
        }
    }

    /// `{θ = effect: p_nonnull, θ = 0: 1 − p_nonnull}`.
    pub fn two_point(effect: f64, p_nonnull: f64) -> Result<Self, ModelError> {
        Self::new(vec![
            (ParameterPoint::nonnull(effect)?, p_nonnull),
            (ParameterPoint::null(), 1.0 - p_nonnull),
        ])
    }

    pub fn support(&self) -> &[(ParameterPoint, f64)] {
        &self.support
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ParameterPoint, f64)> + '_ {
        self.support.iter().map(|(p, w)| (p, *w))
    }

    /// `π0 = Q(Θ0)`.
    pub fn null_mass(&self) -> f64 {
        self.support
            .iter()
            .filter(|(p, _)| p.is_null)
            .map(|(_, w)| w)
            .sum()
    }

    /// Mixes several priors with the given nonnegative weights, merging
    /// identical points.
    pub fn mixture<'a, I>(components: I) -> Result<Self, ModelError>
    where
        I: IntoIterator<Item = (&'a DiscretePrior, f64)>,
    {
        let mut support: Vec<(ParameterPoint, f64)> = Vec::new();
        for (prior, mix) in components {
            for (point, w) in prior.iter() {
                match support.iter_mut().find(|(p, _)| p == point) {
                    Some((_, acc)) => *acc += mix * w,
                    None => support.push((*point, mix * w)),
                }
            }
        }
        Self::new(support)
    }

    /// Draws a point with probability equal to its weight.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ParameterPoint {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (point, w) in &self.support {
            acc += w;
            if u < acc {
                return *point;
            }
        }
        // Rounding left u above the running sum; fall back to the last
        // point carrying positive weight.
        self.support
            .iter()
            .rev()
            .find(|(_, w)| *w > 0.0)
            .map(|(p, _)| *p)
            .unwrap_or(self.support[0].0)
    }
}

/// Trial cost `C` and approval reward `R`, in the same currency unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Economics {
    cost: f64,
    reward: f64,
}

impl Economics {
    pub fn new(cost: f64, reward: f64) -> Result<Self, ModelError> {
        if !(cost.is_finite() && cost > 0.0) {
            return Err(ModelError::InvalidCost(cost));
        }
        if !(reward.is_finite() && reward > 0.0) {
            return Err(ModelError::InvalidReward(reward));
        }
        Ok(Economics { cost, reward })
    }

    #[inline]
    pub fn cost(&self) -> f64 {
        self.cost
    }

    #[inline]
    pub fn reward(&self) -> f64 {
        self.reward
    }

    /// `C / R`.
    #[inline]
    pub fn cost_reward_ratio(&self) -> f64 {
        self.cost / self.reward
    }
}

/// Unit-variance Gaussian shift model: `Z ~ N(θ, 1)`, `X = 1 − Φ(Z)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GaussianTestModel;

impl GaussianTestModel {
    /// `β_θ(t) = P_θ(X ≤ t) = 1 − Φ(Φ⁻¹(1 − t) − θ)`.
    pub fn power(&self, theta: f64, t: Probability) -> Result<Probability, ModelError> {
        if !theta.is_finite() {
            return Err(ModelError::NonFiniteEffect(theta));
        }
        Ok(Probability::saturating(self.power_at(theta, t.value())))
    }

    /// `Φ⁻¹(1 − t) = −Φ⁻¹(t)`, so the power is evaluated as `Φ(θ + Φ⁻¹(t))`
    /// which stays accurate for small `t`.
    pub(crate) fn power_at(&self, theta: f64, t: f64) -> f64 {
        if t <= 0.0 {
            0.0
        } else if t >= 1.0 {
            1.0
        } else if theta == 0.0 {
            t
        } else {
            numerics::phi(theta + numerics::quantile(t))
        }
    }

    /// Power of a protocol: every one of `k` independent trials must pass.
    pub fn protocol_power(
        &self,
        theta: f64,
        protocol: &ApprovalProtocol,
    ) -> Result<Probability, ModelError> {
        if !theta.is_finite() {
            return Err(ModelError::NonFiniteEffect(theta));
        }
        Ok(Probability::saturating(
            self.protocol_power_at(theta, protocol),
        ))
    }

    pub(crate) fn protocol_power_at(&self, theta: f64, protocol: &ApprovalProtocol) -> f64 {
        let single = self.power_at(theta, protocol.per_trial_threshold.value());
        single.powi(protocol.num_trials as i32)
    }

    /// Density of the p-value under `θ`:
    /// `f_θ(x) = φ(z − θ)/φ(z) = exp(θz − θ²/2)` with `z = Φ⁻¹(1 − x)`.
    /// Requires `0 < x < 1`.
    pub fn pvalue_density(&self, theta: f64, x: Probability) -> Result<f64, ModelError> {
        if !theta.is_finite() {
            return Err(ModelError::NonFiniteEffect(theta));
        }
        let x = x.value();
        if x <= 0.0 || x >= 1.0 {
            return Err(NumericsError::InfiniteQuantile(x).into());
        }
        Ok(self.density_at(theta, x))
    }

    pub(crate) fn density_at(&self, theta: f64, x: f64) -> f64 {
        if theta == 0.0 {
            return 1.0;
        }
        let z = -numerics::quantile(x);
        (theta * z - 0.5 * theta * theta).exp()
    }

    /// Draws `X = 1 − Φ(Z)` with `Z ~ N(θ, 1)`.
    pub fn sample_pvalue<R: Rng + ?Sized>(&self, theta: f64, rng: &mut R) -> Probability {
        Probability::saturating(self.sample_pvalue_raw(theta, rng))
    }

    #[inline]
    pub(crate) fn sample_pvalue_raw<R: Rng + ?Sized>(&self, theta: f64, rng: &mut R) -> f64 {
        let noise: f64 = rng.sample(StandardNormal);
        numerics::phi(-(theta + noise))
    }

    /// The Gaussian binding requires `θ = 0 ⇔ null` and rejects `θ < 0`.
    pub fn check_point(&self, point: &ParameterPoint) -> Result<(), ModelError> {
        let ok = if point.is_null {
            point.effect == 0.0
        } else {
            point.effect > 0.0
        };
        if ok {
            Ok(())
        } else {
            Err(ModelError::NullFlagMismatch {
                effect: point.effect,
                is_null: point.is_null,
            })
        }
    }

    pub fn check_prior(&self, prior: &DiscretePrior) -> Result<(), ModelError> {
        prior.iter().try_for_each(|(p, _)| self.check_point(p))
    }
}

/// Approve iff each of `num_trials` independent p-values is at most
/// `per_trial_threshold`; the effective type-I level is `t^k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ApprovalProtocol {
    per_trial_threshold: Probability,
    num_trials: u32,
    effective_tau: Probability,
}

impl ApprovalProtocol {
    pub fn new(per_trial_threshold: Probability, num_trials: u32) -> Result<Self, ModelError> {
        if num_trials == 0 {
            return Err(ModelError::NoTrials);
        }
        let effective = per_trial_threshold.value().powi(num_trials as i32);
        if !(effective > 0.0 && effective <= 1.0) {
            return Err(ModelError::InvalidEffectiveThreshold(effective));
        }
        Ok(ApprovalProtocol {
            per_trial_threshold,
            num_trials,
            effective_tau: Probability::saturating(effective),
        })
    }

    pub fn single(tau: Probability) -> Result<Self, ModelError> {
        Self::new(tau, 1)
    }

    /// A `k`-trial protocol whose effective level is `tau`.
    pub fn with_effective_tau(tau: Probability, num_trials: u32) -> Result<Self, ModelError> {
        if num_trials == 0 {
            return Err(ModelError::NoTrials);
        }
        if num_trials == 1 {
            return Self::single(tau);
        }
        let t = tau.value().powf(1.0 / num_trials as f64);
        Self::new(Probability::saturating(t), num_trials)
    }

    /// Two trials, each significant at one-sided 0.025.
    pub fn standard() -> Self {
        Self::new(Probability::new_unchecked(0.025), 2).expect("valid constant protocol")
    }

    /// One trial at 0.005.
    pub fn modernized() -> Self {
        Self::new(Probability::new_unchecked(0.005), 1).expect("valid constant protocol")
    }

    #[inline]
    pub fn per_trial_threshold(&self) -> Probability {
        self.per_trial_threshold
    }

    #[inline]
    pub fn num_trials(&self) -> u32 {
        self.num_trials
    }

    #[inline]
    pub fn effective_tau(&self) -> Probability {
        self.effective_tau
    }
}

/// Utility of profit: `u(0) = 0`, increasing.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UtilitySpec {
    #[default]
    Linear,
    /// `u(x) = (1 − e^{−a x}) / a`, slope 1 at the origin; `a = 0` is linear.
    Exponential { risk_aversion: f64 },
}

impl UtilitySpec {
    pub fn exponential(risk_aversion: f64) -> Result<Self, ModelError> {
        if !(risk_aversion.is_finite() && risk_aversion >= 0.0) {
            return Err(ModelError::InvalidRiskAversion(risk_aversion));
        }
        Ok(UtilitySpec::Exponential { risk_aversion })
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        match *self {
            UtilitySpec::Linear => Ok(()),
            UtilitySpec::Exponential { risk_aversion } => {
                Self::exponential(risk_aversion).map(|_| ())
            }
        }
    }

    pub fn eval(&self, profit: f64) -> f64 {
        match *self {
            UtilitySpec::Linear | UtilitySpec::Exponential { risk_aversion: 0.0 } => profit,
            UtilitySpec::Exponential { risk_aversion } => {
                -(-risk_aversion * profit).exp_m1() / risk_aversion
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentProfile {
    pub prior: DiscretePrior,
    pub utility: UtilitySpec,
}

impl AgentProfile {
    pub fn new(prior: DiscretePrior, utility: UtilitySpec) -> Result<Self, ModelError> {
        utility.validate()?;
        Ok(AgentProfile { prior, utility })
    }

    pub fn linear(prior: DiscretePrior) -> Self {
        AgentProfile {
            prior,
            utility: UtilitySpec::Linear,
        }
    }
}

/// How an agent decides whether to run a trial.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParticipationRule {
    /// Run iff expected profit is nonnegative.
    #[default]
    ExpectedProfit,
    /// Run iff expected utility is nonnegative.
    ExpectedUtility,
}

impl ParticipationRule {
    pub fn participates(
        &self,
        profile: &AgentProfile,
        model: &GaussianTestModel,
        protocol: &ApprovalProtocol,
        econ: &Economics,
    ) -> bool {
        match self {
            ParticipationRule::ExpectedProfit => opts_in(profile, model, protocol, econ),
            ParticipationRule::ExpectedUtility => {
                expected_utility(profile, model, protocol, econ) >= 0.0
            }
        }
    }
}

/// Where an agent's true `θ` comes from once they run a trial.
#[derive(Debug, Clone, PartialEq)]
pub enum TruthSource {
    /// Drawn from the group's own prior (the prior is correct).
    Prior,
    /// Drawn uniformly from a fixed list, independent of the prior.
    Fixed(Vec<ParameterPoint>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationGroup {
    pub name: String,
    pub profile: AgentProfile,
    pub fraction: f64,
    pub truth: TruthSource,
    pub rule: ParticipationRule,
}

impl PopulationGroup {
    pub fn new(name: impl Into<String>, profile: AgentProfile, fraction: f64) -> Self {
        PopulationGroup {
            name: name.into(),
            profile,
            fraction,
            truth: TruthSource::Prior,
            rule: ParticipationRule::ExpectedProfit,
        }
    }

    pub fn with_truth(mut self, truth: TruthSource) -> Self {
        self.truth = truth;
        self
    }

    pub fn with_rule(mut self, rule: ParticipationRule) -> Self {
        self.rule = rule;
        self
    }

    pub fn participates(
        &self,
        model: &GaussianTestModel,
        protocol: &ApprovalProtocol,
        econ: &Economics,
    ) -> bool {
        self.rule.participates(&self.profile, model, protocol, econ)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationSpec {
    groups: Vec<PopulationGroup>,
}

impl PopulationSpec {
    pub fn new(groups: Vec<PopulationGroup>) -> Result<Self, ModelError> {
        if groups.is_empty() {
            return Err(ModelError::EmptyPopulation);
        }
        let mut total = 0.0;
        for (i, g) in groups.iter().enumerate() {
            if !g.fraction.is_finite() || g.fraction < 0.0 {
                return Err(ModelError::InvalidFraction(g.fraction));
            }
            if groups[..i].iter().any(|h| h.name == g.name) {
                return Err(ModelError::DuplicateGroup(g.name.clone()));
            }
            if let TruthSource::Fixed(list) = &g.truth {
                if list.is_empty() {
                    return Err(ModelError::EmptyFixedEffects(g.name.clone()));
                }
            }
            g.profile.utility.validate()?;
            total += g.fraction;
        }
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(ModelError::FractionsDoNotSumToOne(total));
        }
        Ok(PopulationSpec { groups })
    }

    /// 1% promising agents `{θ=1: 0.8, θ=0: 0.2}` and 99% point-null agents.
    pub fn two_type_example() -> Self {
        let promising = DiscretePrior::two_point(1.0, 0.8).expect("valid prior");
        Self::new(vec![
            PopulationGroup::new("promising", AgentProfile::linear(promising), 0.01),
            PopulationGroup::new(
                "unpromising",
                AgentProfile::linear(DiscretePrior::point_null()),
                0.99,
            ),
        ])
        .expect("valid population")
    }

    pub fn groups(&self) -> &[PopulationGroup] {
        &self.groups
    }

    /// Checks every prior and fixed effect list against the Gaussian binding.
    pub fn check_model(&self, model: &GaussianTestModel) -> Result<(), ModelError> {
        for g in &self.groups {
            model.check_prior(&g.profile.prior)?;
            if let TruthSource::Fixed(list) = &g.truth {
                list.iter().try_for_each(|p| model.check_point(p))?;
            }
        }
        Ok(())
    }
}

/// `E_Q[β_θ(t)]` for a single trial at threshold `t`.
pub fn expected_power(
    prior: &DiscretePrior,
    model: &GaussianTestModel,
    t: Probability,
) -> Probability {
    let sum: f64 = prior
        .iter()
        .map(|(p, w)| w * model.power_at(p.effect, t.value()))
        .sum();
    Probability::saturating(sum)
}

/// `E_Q[β_θ]` for the protocol: the agent's approval probability.
pub fn approval_probability(
    prior: &DiscretePrior,
    model: &GaussianTestModel,
    protocol: &ApprovalProtocol,
) -> Probability {
    let sum: f64 = prior
        .iter()
        .map(|(p, w)| w * model.protocol_power_at(p.effect, protocol))
        .sum();
    Probability::saturating(sum)
}

/// `v_τ(Q) = R · E_Q[β_θ] − C`.
pub fn expected_profit(
    prior: &DiscretePrior,
    model: &GaussianTestModel,
    protocol: &ApprovalProtocol,
    econ: &Economics,
) -> f64 {
    econ.reward * approval_probability(prior, model, protocol).value() - econ.cost
}

/// `E[u(R·1{approve} − C)]`.
pub fn expected_utility(
    profile: &AgentProfile,
    model: &GaussianTestModel,
    protocol: &ApprovalProtocol,
    econ: &Economics,
) -> f64 {
    let p = approval_probability(&profile.prior, model, protocol).value();
    let u = &profile.utility;
    if let UtilitySpec::Linear = u {
        return econ.reward * p - econ.cost;
    }
    p * u.eval(econ.reward - econ.cost) + (1.0 - p) * u.eval(-econ.cost)
}

/// The agent runs a trial iff expected profit is nonnegative.
pub fn opts_in(
    profile: &AgentProfile,
    model: &GaussianTestModel,
    protocol: &ApprovalProtocol,
    econ: &Economics,
) -> bool {
    expected_profit(&profile.prior, model, protocol, econ) >= 0.0
}

/// Bracket width for [`opt_in_threshold`].
pub const OPT_IN_TOLERANCE: f64 = 1e-15;

/// Smallest single-trial threshold at which the agent runs a trial.
pub fn opt_in_threshold(
    prior: &DiscretePrior,
    model: &GaussianTestModel,
    econ: &Economics,
) -> Result<Probability, ModelError> {
    let profit_at = |t: f64| {
        let sum: f64 = prior
            .iter()
            .map(|(p, w)| w * model.power_at(p.effect, t))
            .sum();
        econ.reward * sum - econ.cost
    };
    let at_one = profit_at(1.0);
    if at_one < 0.0 {
        return Err(ModelError::NeverProfitable(at_one));
    }
    let root = numerics::find_root_increasing(profit_at, 0.0, 1.0, OPT_IN_TOLERANCE)?;
    Ok(Probability::saturating(root))
}
