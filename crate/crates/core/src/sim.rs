//! Seeded Monte Carlo simulation of the principal–agent trial.
//!
//! Randomness comes from ChaCha8 streams: the generator for work unit `i`
//! is `ChaCha8Rng::seed_from_u64(seed)` switched to stream `i`. Work units
//! are fixed-size chunks of agents (or single replicates), their results
//! are integer counts, and merging is a sum, so reports are bit-identical
//! regardless of how rayon schedules the units.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::bayes::{population_fdr_exact, PopulationFdr};
use crate::bounds::{theorem2_ledger, BoundsError, LedgerReport, Odds};
use crate::model::{
    approval_probability, ApprovalProtocol, Economics, GaussianTestModel, ModelError,
    ParameterPoint, PopulationGroup, PopulationSpec, TruthSource,
};
use crate::numerics::Probability;

/// Agents per independently seeded work unit.
const CHUNK: u64 = 1 << 16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("need at least one agent")]
    NoAgents,
    #[error("need at least one replicate")]
    NoReplicates,
    #[error("threshold grid is empty")]
    EmptyGrid,
    #[error("threshold grid must be strictly increasing inside (0, 1); offending value {0}")]
    BadGrid(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
}

/// Generator for work unit `stream` under `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// SplitMix64 finalizer, used to derive per-grid-point seeds.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub n_agents: u64,
    pub n_opted_in: u64,
    pub n_approved: u64,
    pub n_false_approved: u64,
    pub n_true_approved: u64,
    pub total_agent_profit: f64,
    pub empirical_fdr: Option<f64>,
    pub fdr_std_error: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Tally {
    opted_in: u64,
    approved: u64,
    false_approved: u64,
}

impl std::ops::Add for Tally {
    type Output = Tally;

    fn add(self, o: Tally) -> Tally {
        Tally {
            opted_in: self.opted_in + o.opted_in,
            approved: self.approved + o.approved,
            false_approved: self.false_approved + o.false_approved,
        }
    }
}

fn draw_truth<R: Rng + ?Sized>(group: &PopulationGroup, rng: &mut R) -> ParameterPoint {
    match &group.truth {
        TruthSource::Prior => group.profile.prior.sample(rng),
        TruthSource::Fixed(points) => points[rng.random_range(0..points.len())],
    }
}

/// Runs all trials of the protocol; approval needs every p-value at or
/// below the per-trial threshold.
fn run_protocol<R: Rng + ?Sized>(
    model: &GaussianTestModel,
    theta: f64,
    protocol: &ApprovalProtocol,
    rng: &mut R,
) -> bool {
    let t = protocol.per_trial_threshold().value();
    let mut approved = true;
    for _ in 0..protocol.num_trials() {
        if model.sample_pvalue_raw(theta, rng) > t {
            approved = false;
        }
    }
    approved
}

/// Simulates `n_agents` agents drawn from the population.
///
/// Each agent is assigned a group by fraction and decides whether to run a
/// trial from the group's prior alone; only then is their true `θ` drawn
/// and the protocol's trials run.
pub fn simulate(
    population: &PopulationSpec,
    model: &GaussianTestModel,
    protocol: &ApprovalProtocol,
    econ: &Economics,
    n_agents: u64,
    seed: u64,
) -> Result<SimulationReport, SimError> {
    if n_agents == 0 {
        return Err(SimError::NoAgents);
    }
    let groups = population.groups();
    let participates: Vec<bool> = groups
        .iter()
        .map(|g| g.participates(model, protocol, econ))
        .collect();
    let cumulative: Vec<f64> = groups
        .iter()
        .scan(0.0, |acc, g| {
            *acc += g.fraction;
            Some(*acc)
        })
        .collect();

    let n_chunks = n_agents.div_ceil(CHUNK);
    let tally = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = stream_rng(seed, chunk);
            let start = chunk * CHUNK;
            let end = (start + CHUNK).min(n_agents);
            let mut t = Tally::default();
            for _ in start..end {
                let u: f64 = rng.random();
                let g = cumulative
                    .iter()
                    .position(|&c| u < c)
                    .unwrap_or(groups.len() - 1);
                if !participates[g] {
                    continue;
                }
                t.opted_in += 1;
                let truth = draw_truth(&groups[g], &mut rng);
                if run_protocol(model, truth.effect(), protocol, &mut rng) {
                    t.approved += 1;
                    if truth.is_null() {
                        t.false_approved += 1;
                    }
                }
            }
            t
        })
        .reduce(Tally::default, |a, b| a + b);

    let total_agent_profit =
        tally.approved as f64 * econ.reward() - tally.opted_in as f64 * econ.cost();
    let (empirical_fdr, fdr_std_error) = if tally.approved > 0 {
        let f = tally.false_approved as f64 / tally.approved as f64;
        (
            Some(f),
            Some((f * (1.0 - f) / tally.approved as f64).sqrt()),
        )
    } else {
        (None, None)
    };
    Ok(SimulationReport {
        n_agents,
        n_opted_in: tally.opted_in,
        n_approved: tally.approved,
        n_false_approved: tally.false_approved,
        n_true_approved: tally.approved - tally.false_approved,
        total_agent_profit,
        empirical_fdr,
        fdr_std_error,
        seed,
    })
}

/// Mean and variance of one randomly drawn agent's realized profit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProfitMoments {
    pub mean: f64,
    pub variance: f64,
}

/// Exact per-agent profit moments for a population: the target that
/// [`simulate`]'s `total_agent_profit / n_agents` estimates.
pub fn population_profit_moments(
    population: &PopulationSpec,
    model: &GaussianTestModel,
    protocol: &ApprovalProtocol,
    econ: &Economics,
) -> ProfitMoments {
    let (r, c) = (econ.reward(), econ.cost());
    let mut mean = 0.0;
    let mut second = 0.0;
    for g in population.groups() {
        if !g.participates(model, protocol, econ) {
            continue;
        }
        let p = match &g.truth {
            TruthSource::Prior => approval_probability(&g.profile.prior, model, protocol).value(),
            TruthSource::Fixed(points) => {
                points
                    .iter()
                    .map(|pt| model.protocol_power_at(pt.effect(), protocol))
                    .sum::<f64>()
                    / points.len() as f64
            }
        };
        mean += g.fraction * (p * r - c);
        second += g.fraction * (p * (r - c).powi(2) + (1.0 - p) * c * c);
    }
    ProfitMoments {
        mean,
        variance: (second - mean * mean).max(0.0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepSettings {
    pub n_agents: u64,
    pub seed: u64,
    /// Simulate at every `mc_stride`-th grid point; 0 disables simulation.
    pub mc_stride: usize,
    pub num_trials: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub tau: Probability,
    pub exact_fdr: PopulationFdr,
    pub empirical_fdr: Option<f64>,
    pub simulation: Option<SimulationReport>,
    /// `min(1, τR/C)`.
    pub bound: f64,
    pub participation: Vec<bool>,
}

/// Exact and simulated population FDR along a grid of effective thresholds.
pub fn sweep_tau(
    population: &PopulationSpec,
    model: &GaussianTestModel,
    econ: &Economics,
    tau_grid: &[f64],
    settings: &SweepSettings,
) -> Result<Vec<SweepRow>, SimError> {
    if tau_grid.is_empty() {
        return Err(SimError::EmptyGrid);
    }
    let mut prev = 0.0;
    for &t in tau_grid {
        if !(t > prev && t < 1.0) {
            return Err(SimError::BadGrid(t));
        }
        prev = t;
    }
    if settings.mc_stride > 0 && settings.n_agents == 0 {
        return Err(SimError::NoAgents);
    }

    tau_grid
        .par_iter()
        .enumerate()
        .map(|(i, &t)| {
            let tau = Probability::new(t).map_err(ModelError::from)?;
            let protocol = ApprovalProtocol::with_effective_tau(tau, settings.num_trials)?;
            let exact_fdr = population_fdr_exact(population, model, &protocol, econ);
            let participation = population
                .groups()
                .iter()
                .map(|g| g.participates(model, &protocol, econ))
                .collect();
            let simulation = if settings.mc_stride > 0 && i % settings.mc_stride == 0 {
                let seed = derive_seed(settings.seed, i as u64);
                Some(simulate(
                    population,
                    model,
                    &protocol,
                    econ,
                    settings.n_agents,
                    seed,
                )?)
            } else {
                None
            };
            Ok(SweepRow {
                tau: protocol.effective_tau(),
                exact_fdr,
                empirical_fdr: simulation.as_ref().and_then(|s| s.empirical_fdr),
                simulation,
                bound: (t * econ.reward() / econ.cost()).min(1.0),
                participation,
            })
        })
        .collect()
}

/// Replicated play of a fixed agent list compared with its exact ledger.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Theorem2Empirical {
    pub n_replicates: u64,
    pub mean_profit: f64,
    pub profit_std_error: f64,
    pub mean_tp: f64,
    pub tp_std_error: f64,
    pub mean_fp: f64,
    pub fp_std_error: f64,
    pub empirical_ratio: Option<Odds>,
    pub ledger: LedgerReport,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    tp: u64,
    fp: u64,
    tp_sq: u128,
    fp_sq: u128,
    total_sq: u128,
}

impl std::ops::Add for Moments {
    type Output = Moments;

    fn add(self, o: Moments) -> Moments {
        Moments {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            tp_sq: self.tp_sq + o.tp_sq,
            fp_sq: self.fp_sq + o.fp_sq,
            total_sq: self.total_sq + o.total_sq,
        }
    }
}

fn mean_and_se(sum: u64, sum_sq: u128, n: u64) -> (f64, f64) {
    let n_f = n as f64;
    let mean = sum as f64 / n_f;
    if n < 2 {
        return (mean, f64::NAN);
    }
    let var = (sum_sq as f64 - n_f * mean * mean) / (n_f - 1.0);
    (mean, (var.max(0.0) / n_f).sqrt())
}

/// Every agent in `points` runs the protocol once per replicate; replicate
/// `r` uses stream `r` of `seed`.
pub fn theorem2_empirical(
    points: &[ParameterPoint],
    model: &GaussianTestModel,
    protocol: &ApprovalProtocol,
    econ: &Economics,
    n_replicates: u64,
    seed: u64,
) -> Result<Theorem2Empirical, SimError> {
    if n_replicates == 0 {
        return Err(SimError::NoReplicates);
    }
    let ledger = theorem2_ledger(points, model, protocol, econ)?;
    let m = (0..n_replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(seed, r);
            let (mut tp, mut fp) = (0u64, 0u64);
            for pt in points {
                if run_protocol(model, pt.effect(), protocol, &mut rng) {
                    if pt.is_null() {
                        fp += 1;
                    } else {
                        tp += 1;
                    }
                }
            }
            Moments {
                tp,
                fp,
                tp_sq: (tp as u128).pow(2),
                fp_sq: (fp as u128).pow(2),
                total_sq: ((tp + fp) as u128).pow(2),
            }
        })
        .reduce(Moments::default, |a, b| a + b);

    let (mean_tp, tp_std_error) = mean_and_se(m.tp, m.tp_sq, n_replicates);
    let (mean_fp, fp_std_error) = mean_and_se(m.fp, m.fp_sq, n_replicates);
    let (mean_approved, approved_se) = mean_and_se(m.tp + m.fp, m.total_sq, n_replicates);
    let n = points.len() as f64;
    Ok(Theorem2Empirical {
        n_replicates,
        mean_profit: econ.reward() * mean_approved - n * econ.cost(),
        profit_std_error: econ.reward() * approved_se,
        mean_tp,
        tp_std_error,
        mean_fp,
        fp_std_error,
        empirical_ratio: Odds::from_masses(m.tp as f64, m.fp as f64),
        ledger,
        seed,
    })
}
