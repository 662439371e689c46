//! JSON scenario files.
//!
//! ```json
//! {
//!   "economics": { "cost": 1, "reward": 100 },
//!   "protocol": { "per_trial_threshold": 0.005, "num_trials": 1 },
//!   "population": { "groups": [
//!     { "name": "promising", "fraction": 0.01,
//!       "prior": [ { "effect": 1.0, "null": false, "weight": 0.8 },
//!                  { "effect": 0.0, "null": true,  "weight": 0.2 } ],
//!       "utility": { "kind": "linear" },
//!       "decision": "expected_profit",
//!       "truth": "prior" }
//!   ] },
//!   "simulation": { "n_agents": 1000000, "seed": 7 },
//!   "sweep": { "tau_min": 1e-4, "tau_max": 0.05, "n_points": 200,
//!              "log_spacing": true, "mc_stride": 10 }
//! }
//! ```
//!
//! Currency amounts are dollars, given either as numbers or as strings with
//! an optional `$` prefix and `K`/`M`/`B` suffix (`"$50M"`, `"1B"`).
//! `utility`, `decision`, and `truth` are optional and default to linear
//! utility, the expected-profit rule, and truth drawn from the prior.
//! `truth` may instead be `{ "fixed": [ { "effect": 1.0, "null": false } ] }`.

use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::model::{
    AgentProfile, ApprovalProtocol, DiscretePrior, Economics, GaussianTestModel, ModelError,
    ParameterPoint, ParticipationRule, PopulationGroup, PopulationSpec, TruthSource, UtilitySpec,
};
use crate::numerics::Probability;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}:{line}:{column}: at `{field}`: {message}")]
    Parse {
        file: String,
        line: usize,
        column: usize,
        field: String,
        message: String,
    },
    #[error("{file}: at `{field}`: {message}")]
    Invalid {
        file: String,
        field: String,
        message: String,
    },
}

/// Dollar amount accepting `"$50M"`-style strings on input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Currency(pub f64);

impl Currency {
    pub fn parse(text: &str) -> Result<f64, String> {
        let t = text.trim();
        let t = t.strip_prefix('$').unwrap_or(t).trim();
        let (digits, scale) = match t.chars().last() {
            Some('k' | 'K') => (&t[..t.len() - 1], 1e3),
            Some('m' | 'M') => (&t[..t.len() - 1], 1e6),
            Some('b' | 'B') => (&t[..t.len() - 1], 1e9),
            _ => (t, 1.0),
        };
        let value: f64 = digits
            .trim()
            .replace('_', "")
            .parse()
            .map_err(|_| format!("cannot parse currency amount {text:?}"))?;
        Ok(value * scale)
    }
}

impl Serialize for Currency {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.0)
    }
}

impl<'de> Deserialize<'de> for Currency {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Number(v) => Ok(Currency(v)),
            Raw::Text(s) => Currency::parse(&s)
                .map(Currency)
                .map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EconomicsConfig {
    pub cost: Currency,
    pub reward: Currency,
}

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    pub per_trial_threshold: f64,
    #[serde(default = "one")]
    pub num_trials: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointConfig {
    pub effect: f64,
    pub null: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorPointConfig {
    pub effect: f64,
    pub null: bool,
    pub weight: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthConfig {
    #[default]
    Prior,
    Fixed(Vec<PointConfig>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupConfig {
    pub name: String,
    pub fraction: f64,
    pub prior: Vec<PriorPointConfig>,
    #[serde(default)]
    pub utility: UtilitySpec,
    #[serde(default)]
    pub decision: ParticipationRule,
    #[serde(default)]
    pub truth: TruthConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationConfig {
    pub groups: Vec<GroupConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub n_agents: u64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub tau_min: f64,
    pub tau_max: f64,
    pub n_points: usize,
    #[serde(default)]
    pub log_spacing: bool,
    /// Simulate at every n-th grid point (default: every point).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc_stride: Option<usize>,
}

impl SweepConfig {
    /// Grid from `tau_min` to `tau_max` inclusive.
    pub fn points(&self) -> Vec<f64> {
        let n = self.n_points;
        if n == 1 {
            return vec![self.tau_min];
        }
        (0..n)
            .map(|i| {
                if i == n - 1 {
                    return self.tau_max;
                }
                let frac = i as f64 / (n - 1) as f64;
                if self.log_spacing {
                    self.tau_min * (self.tau_max / self.tau_min).powf(frac)
                } else {
                    self.tau_min + (self.tau_max - self.tau_min) * frac
                }
            })
            .collect()
    }
}

/// On-disk form of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub economics: EconomicsConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protocol: Option<ProtocolConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub population: Option<PopulationConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

/// A validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub economics: Economics,
    pub protocol: Option<ApprovalProtocol>,
    pub population: Option<PopulationSpec>,
    pub simulation: Option<SimulationConfig>,
    pub sweep: Option<SweepConfig>,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let file = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: file.clone(),
            source,
        })?;
        Self::from_json(&text, &file)
    }

    /// Parses and validates; `file` only labels diagnostics.
    pub fn from_json(text: &str, file: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: ScenarioConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            let inner = e.into_inner();
            ConfigError::Parse {
                file: file.to_string(),
                line: inner.line(),
                column: inner.column(),
                field,
                message: inner.to_string(),
            }
        })?;
        Self::from_config(&config, file)
    }

    pub fn from_config(config: &ScenarioConfig, file: &str) -> Result<Self, ConfigError> {
        let invalid = |field: String, err: &dyn std::fmt::Display| ConfigError::Invalid {
            file: file.to_string(),
            field,
            message: err.to_string(),
        };
        let model = GaussianTestModel;

        let economics = Economics::new(config.economics.cost.0, config.economics.reward.0)
            .map_err(|e| {
                let field = match e {
                    ModelError::InvalidCost(_) => "economics.cost",
                    _ => "economics.reward",
                };
                invalid(field.into(), &e)
            })?;

        let protocol = config
            .protocol
            .as_ref()
            .map(|p| {
                let t = Probability::new(p.per_trial_threshold)
                    .map_err(|e| invalid("protocol.per_trial_threshold".into(), &e))?;
                ApprovalProtocol::new(t, p.num_trials)
                    .map_err(|e| invalid("protocol.num_trials".into(), &e))
            })
            .transpose()?;

        let population = config
            .population
            .as_ref()
            .map(|pop| {
                let mut groups = Vec::with_capacity(pop.groups.len());
                for (gi, g) in pop.groups.iter().enumerate() {
                    let at = |rest: &str| format!("population.groups[{gi}]{rest}");
                    let mut support = Vec::with_capacity(g.prior.len());
                    for (pi, pt) in g.prior.iter().enumerate() {
                        let point = ParameterPoint::new(pt.effect, pt.null)
                            .and_then(|p| model.check_point(&p).map(|_| p))
                            .map_err(|e| invalid(at(&format!(".prior[{pi}]")), &e))?;
                        support.push((point, pt.weight));
                    }
                    let prior =
                        DiscretePrior::new(support).map_err(|e| invalid(at(".prior"), &e))?;
                    let profile = AgentProfile::new(prior, g.utility)
                        .map_err(|e| invalid(at(".utility"), &e))?;
                    let truth = match &g.truth {
                        TruthConfig::Prior => TruthSource::Prior,
                        TruthConfig::Fixed(points) => {
                            let mut list = Vec::with_capacity(points.len());
                            for (pi, pt) in points.iter().enumerate() {
                                let point = ParameterPoint::new(pt.effect, pt.null)
                                    .and_then(|p| model.check_point(&p).map(|_| p))
                                    .map_err(|e| invalid(at(&format!(".truth.fixed[{pi}]")), &e))?;
                                list.push(point);
                            }
                            TruthSource::Fixed(list)
                        }
                    };
                    groups.push(
                        PopulationGroup::new(g.name.clone(), profile, g.fraction)
                            .with_truth(truth)
                            .with_rule(g.decision),
                    );
                }
                PopulationSpec::new(groups).map_err(|e| invalid("population.groups".into(), &e))
            })
            .transpose()?;

        if let Some(sim) = &config.simulation {
            if sim.n_agents == 0 {
                return Err(invalid("simulation.n_agents".into(), &"must be at least 1"));
            }
        }

        if let Some(sw) = &config.sweep {
            let in_unit = |v: f64| v > 0.0 && v < 1.0;
            if !in_unit(sw.tau_min) {
                return Err(invalid("sweep.tau_min".into(), &"must lie in (0, 1)"));
            }
            if !in_unit(sw.tau_max) || sw.tau_max <= sw.tau_min {
                return Err(invalid("sweep.tau_max".into(), &"must lie in (tau_min, 1)"));
            }
            if sw.n_points == 0 {
                return Err(invalid("sweep.n_points".into(), &"must be at least 1"));
            }
        }

        Ok(Scenario {
            economics,
            protocol,
            population,
            simulation: config.simulation,
            sweep: config.sweep,
        })
    }

    pub fn to_config(&self) -> ScenarioConfig {
        let point = |p: &ParameterPoint| PointConfig {
            effect: p.effect(),
            null: p.is_null(),
        };
        ScenarioConfig {
            economics: EconomicsConfig {
                cost: Currency(self.economics.cost()),
                reward: Currency(self.economics.reward()),
            },
            protocol: self.protocol.map(|p| ProtocolConfig {
                per_trial_threshold: p.per_trial_threshold().value(),
                num_trials: p.num_trials(),
            }),
            population: self.population.as_ref().map(|pop| PopulationConfig {
                groups: pop
                    .groups()
                    .iter()
                    .map(|g| GroupConfig {
                        name: g.name.clone(),
                        fraction: g.fraction,
                        prior: g
                            .profile
                            .prior
                            .iter()
                            .map(|(p, w)| PriorPointConfig {
                                effect: p.effect(),
                                null: p.is_null(),
                                weight: w,
                            })
                            .collect(),
                        utility: g.profile.utility,
                        decision: g.rule,
                        truth: match &g.truth {
                            TruthSource::Prior => TruthConfig::Prior,
                            TruthSource::Fixed(list) => {
                                TruthConfig::Fixed(list.iter().map(point).collect())
                            }
                        },
                    })
                    .collect(),
            }),
            simulation: self.simulation,
            sweep: self.sweep,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_config()).expect("config serializes")
    }
}
