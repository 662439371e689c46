//! Command implementations. Each writes data to `out`; anything that is
//! not data goes to `err`.

use std::io::Write;

use serde::Serialize;

use super::config::Scenario;
use super::render::{self, dollars_short, millions, percent, sig3, Table};
use super::CliError;
use crate::bayes::{self, PValueRegion, PopulationFdr};
use crate::bounds::{self, BoundReport, FdrBound, OddsBound};
use crate::model::{ApprovalProtocol, DiscretePrior, Economics, GaussianTestModel, PopulationSpec};
use crate::numerics::Probability;
use crate::sim::{self, SweepRow, SweepSettings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum OutputFormat {
    Table,
    Csv,
    JsonLines,
}

#[derive(Debug, Clone, Copy)]
pub struct RenderOptions {
    pub format: OutputFormat,
    pub precise: bool,
    pub seed: u64,
}

fn json_line<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<(), CliError> {
    serde_json::to_writer(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

/// Seed footer for tables; CSV keeps its header layout and reports the seed
/// on the diagnostic stream instead.
fn emit_seed(
    opts: &RenderOptions,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<(), CliError> {
    match opts.format {
        OutputFormat::Table => writeln!(out, "\nseed: {}", opts.seed)?,
        OutputFormat::Csv => writeln!(err, "seed: {}", opts.seed)?,
        OutputFormat::JsonLines => {}
    }
    Ok(())
}

fn fmt_prob(p: f64, precise: bool) -> String {
    if precise {
        format!("{p}")
    } else {
        percent(p)
    }
}

fn fmt_money(v: f64, precise: bool) -> String {
    if precise {
        format!("{v}")
    } else {
        millions(v)
    }
}

fn fmt_fdr_bound(b: &FdrBound, precise: bool) -> String {
    match b {
        FdrBound::AtMost(p) => fmt_prob(p.value(), precise),
        FdrBound::NotApplicable(_) => "n/a".into(),
    }
}

fn fmt_odds_bound(b: &OddsBound, precise: bool) -> String {
    match b {
        OddsBound::AtLeast(v) if precise => format!("{v}"),
        OddsBound::AtLeast(v) => sig3(*v),
        OddsBound::Vacuous(_) => "vacuous".into(),
    }
}

#[derive(Serialize)]
struct BoundLine<'a> {
    #[serde(flatten)]
    report: &'a BoundReport,
    seed: u64,
}

fn bound_table(reports: &[BoundReport], precise: bool) -> Table {
    let mut t = Table::new([
        "type-I level",
        "expected profit if null",
        "Bayes FDR bound",
        "C/R",
        "posterior odds bound",
    ]);
    for r in reports {
        t.push([
            fmt_prob(r.tau.value(), precise),
            fmt_money(r.null_expected_profit, precise),
            fmt_fdr_bound(&r.bayes_fdr_upper, precise),
            fmt_prob(r.cost_reward_ratio, precise),
            fmt_odds_bound(&r.posterior_odds_lower, precise),
        ]);
    }
    t
}

fn bound_csv(reports: &[BoundReport]) -> Table {
    let mut t = Table::new([
        "tau",
        "cost_reward_ratio",
        "posterior_odds_lower",
        "bayes_fdr_upper",
        "null_expected_profit",
    ]);
    for r in reports {
        let odds = (!r.posterior_odds_lower.is_vacuous()).then(|| r.posterior_odds_lower.value());
        let fdr = r
            .bayes_fdr_upper
            .is_applicable()
            .then(|| r.bayes_fdr_upper.raw());
        t.push([
            format!("{}", r.tau),
            format!("{}", r.cost_reward_ratio),
            render::raw(odds),
            render::raw(fdr),
            format!("{}", r.null_expected_profit),
        ]);
    }
    t
}

fn write_bound_reports(
    reports: &[BoundReport],
    opts: &RenderOptions,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<(), CliError> {
    match opts.format {
        OutputFormat::Table => bound_table(reports, opts.precise).write_markdown(out)?,
        OutputFormat::Csv => bound_csv(reports).write_csv(out)?,
        OutputFormat::JsonLines => {
            for r in reports {
                json_line(
                    out,
                    &BoundLine {
                        report: r,
                        seed: opts.seed,
                    },
                )?;
            }
        }
    }
    emit_seed(opts, out, err)
}

fn require_protocol(s: &Scenario) -> Result<ApprovalProtocol, CliError> {
    s.protocol.ok_or(CliError::MissingSection("protocol"))
}

fn require_population(s: &Scenario) -> Result<&PopulationSpec, CliError> {
    s.population
        .as_ref()
        .ok_or(CliError::MissingSection("population"))
}

pub fn cmd_bound(
    scenario: &Scenario,
    opts: &RenderOptions,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<BoundReport, CliError> {
    let protocol = require_protocol(scenario)?;
    let report = bounds::bound_report(&scenario.economics, protocol.effective_tau())?;
    write_bound_reports(&[report], opts, out, err)?;
    Ok(report)
}

pub fn cmd_design(
    alpha: f64,
    scenario: &Scenario,
    opts: &RenderOptions,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<Probability, CliError> {
    let alpha = Probability::new(alpha).map_err(|_| bounds::BoundsError::InvalidAlpha(alpha))?;
    let tau = bounds::design_tau(alpha, &scenario.economics)?;
    let report = bounds::bound_report(&scenario.economics, tau)?;
    match opts.format {
        OutputFormat::Table => {
            writeln!(
                out,
                "designed type-I level: {}\n",
                fmt_prob(tau.value(), opts.precise)
            )?;
            bound_table(&[report], opts.precise).write_markdown(out)?;
        }
        OutputFormat::Csv => bound_csv(&[report]).write_csv(out)?,
        OutputFormat::JsonLines => {
            #[derive(Serialize)]
            struct Line<'a> {
                alpha: f64,
                #[serde(flatten)]
                report: &'a BoundReport,
                seed: u64,
            }
            json_line(
                out,
                &Line {
                    alpha: alpha.value(),
                    report: &report,
                    seed: opts.seed,
                },
            )?;
        }
    }
    emit_seed(opts, out, err)?;
    Ok(tau)
}

/// One row of the FDA protocol comparison.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FdaRow {
    pub protocol: &'static str,
    pub tau: Probability,
    pub reward: f64,
    pub null_expected_profit: f64,
    pub bayes_fdr_bound: FdrBound,
}

/// `C = $50M`; `R ∈ {$1B, $10B, $100B}`; standard and modernized protocols.
pub fn fda_rows() -> Vec<FdaRow> {
    const COST: f64 = 50e6;
    const REWARDS: [f64; 3] = [1e9, 10e9, 100e9];
    let protocols = [
        ("standard", ApprovalProtocol::standard()),
        ("modernized", ApprovalProtocol::modernized()),
    ];
    let mut rows = Vec::with_capacity(6);
    for (name, protocol) in protocols {
        for reward in REWARDS {
            let econ = Economics::new(COST, reward).expect("positive constants");
            let tau = protocol.effective_tau();
            rows.push(FdaRow {
                protocol: name,
                tau,
                reward,
                null_expected_profit: bounds::null_expected_profit(&econ, tau),
                bayes_fdr_bound: bounds::bayes_fdr_bound(&econ, tau).expect("positive tau"),
            });
        }
    }
    rows
}

pub fn cmd_fda_table(
    opts: &RenderOptions,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<Vec<FdaRow>, CliError> {
    let rows = fda_rows();
    match opts.format {
        OutputFormat::Table => {
            let mut t = Table::new([
                "protocol",
                "type-I level",
                "revenue if approved",
                "expected profit if null",
                "Bayes FDR bound",
            ]);
            for r in &rows {
                t.push([
                    r.protocol.to_string(),
                    fmt_prob(r.tau.value(), opts.precise),
                    dollars_short(r.reward),
                    fmt_money(r.null_expected_profit, opts.precise),
                    fmt_fdr_bound(&r.bayes_fdr_bound, opts.precise),
                ]);
            }
            t.write_markdown(out)?;
        }
        OutputFormat::Csv => {
            let mut t = Table::new([
                "protocol",
                "tau",
                "reward",
                "null_expected_profit",
                "bayes_fdr_bound",
            ]);
            for r in &rows {
                let fdr = r
                    .bayes_fdr_bound
                    .is_applicable()
                    .then(|| r.bayes_fdr_bound.raw());
                t.push([
                    r.protocol.to_string(),
                    format!("{}", r.tau),
                    format!("{}", r.reward),
                    format!("{}", r.null_expected_profit),
                    render::raw(fdr),
                ]);
            }
            t.write_csv(out)?;
        }
        OutputFormat::JsonLines => {
            #[derive(Serialize)]
            struct Line<'a> {
                #[serde(flatten)]
                row: &'a FdaRow,
                seed: u64,
            }
            for r in &rows {
                json_line(
                    out,
                    &Line {
                        row: r,
                        seed: opts.seed,
                    },
                )?;
            }
        }
    }
    emit_seed(opts, out, err)?;
    Ok(rows)
}

fn fdr_value(f: &PopulationFdr) -> Option<f64> {
    f.value()
}

pub fn cmd_sweep(
    scenario: &Scenario,
    opts: &RenderOptions,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<Vec<SweepRow>, CliError> {
    let population = require_population(scenario)?;
    let sweep = scenario.sweep.ok_or(CliError::MissingSection("sweep"))?;
    let settings = SweepSettings {
        n_agents: scenario.simulation.map_or(0, |s| s.n_agents),
        seed: opts.seed,
        mc_stride: match scenario.simulation {
            Some(_) => sweep.mc_stride.unwrap_or(1),
            None => 0,
        },
        num_trials: scenario.protocol.map_or(1, |p| p.num_trials()),
    };
    let rows = sim::sweep_tau(
        population,
        &GaussianTestModel,
        &scenario.economics,
        &sweep.points(),
        &settings,
    )?;

    let mut header = vec![
        "tau".to_string(),
        "exact_fdr".into(),
        "empirical_fdr".into(),
        "bound".into(),
    ];
    header.extend(population.groups().iter().map(|g| format!("{}_in", g.name)));
    let mut t = Table::new(header);
    for r in &rows {
        let mut line = vec![
            format!("{}", r.tau),
            render::raw(fdr_value(&r.exact_fdr)),
            render::raw(r.empirical_fdr),
            format!("{}", r.bound),
        ];
        line.extend(r.participation.iter().map(|b| b.to_string()));
        t.push(line);
    }
    match opts.format {
        OutputFormat::Table => t.write_markdown(out)?,
        OutputFormat::Csv => t.write_csv(out)?,
        OutputFormat::JsonLines => {
            #[derive(Serialize)]
            struct Line<'a> {
                #[serde(flatten)]
                row: &'a SweepRow,
                seed: u64,
            }
            for r in &rows {
                json_line(
                    out,
                    &Line {
                        row: r,
                        seed: opts.seed,
                    },
                )?;
            }
        }
    }
    emit_seed(opts, out, err)?;
    Ok(rows)
}

pub fn cmd_simulate(
    scenario: &Scenario,
    opts: &RenderOptions,
    out: &mut dyn Write,
    _err: &mut dyn Write,
) -> Result<sim::SimulationReport, CliError> {
    let population = require_population(scenario)?;
    let protocol = require_protocol(scenario)?;
    let n_agents = scenario
        .simulation
        .ok_or(CliError::MissingSection("simulation"))?
        .n_agents;
    let model = GaussianTestModel;
    let econ = &scenario.economics;
    let report = sim::simulate(population, &model, &protocol, econ, n_agents, opts.seed)?;
    let exact = bayes::population_fdr_exact(population, &model, &protocol, econ);
    let moments = sim::population_profit_moments(population, &model, &protocol, econ);
    let expected_profit = moments.mean * n_agents as f64;

    match opts.format {
        OutputFormat::JsonLines => {
            #[derive(Serialize)]
            struct Line<'a> {
                #[serde(flatten)]
                report: &'a sim::SimulationReport,
                exact_fdr: Option<f64>,
                expected_total_profit: f64,
            }
            json_line(
                out,
                &Line {
                    report: &report,
                    exact_fdr: exact.value(),
                    expected_total_profit: expected_profit,
                },
            )?;
        }
        format => {
            let opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
            let mut t = Table::new(["field", "value"]);
            t.push(["n_agents".to_string(), report.n_agents.to_string()]);
            t.push(["n_opted_in".to_string(), report.n_opted_in.to_string()]);
            t.push(["n_approved".to_string(), report.n_approved.to_string()]);
            t.push([
                "n_false_approved".to_string(),
                report.n_false_approved.to_string(),
            ]);
            t.push([
                "n_true_approved".to_string(),
                report.n_true_approved.to_string(),
            ]);
            t.push([
                "total_agent_profit".to_string(),
                format!("{}", report.total_agent_profit),
            ]);
            t.push(["empirical_fdr".to_string(), opt(report.empirical_fdr)]);
            t.push(["fdr_std_error".to_string(), opt(report.fdr_std_error)]);
            t.push(["exact_fdr".to_string(), opt(exact.value())]);
            t.push([
                "expected_total_profit".to_string(),
                format!("{expected_profit}"),
            ]);
            t.push(["seed".to_string(), report.seed.to_string()]);
            if format == OutputFormat::Csv {
                t.write_csv(out)?;
            } else {
                t.write_markdown(out)?;
            }
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LfdrRow {
    pub x: f64,
    pub lfdr: f64,
    pub fdr_region_0_to_x: Option<f64>,
}

/// Default evaluation grid: `0.01, 0.02, …, 0.99`.
pub fn default_x_grid() -> Vec<f64> {
    (1..100).map(|i| i as f64 / 100.0).collect()
}

/// Prior used by `lfdr`: one named group, or the fraction-weighted mixture.
pub fn lfdr_prior(scenario: &Scenario, group: Option<&str>) -> Result<DiscretePrior, CliError> {
    let population = require_population(scenario)?;
    match group {
        Some(name) => population
            .groups()
            .iter()
            .find(|g| g.name == name)
            .map(|g| g.profile.prior.clone())
            .ok_or_else(|| CliError::UnknownGroup(name.to_string())),
        None => Ok(DiscretePrior::mixture(
            population
                .groups()
                .iter()
                .map(|g| (&g.profile.prior, g.fraction)),
        )?),
    }
}

pub fn cmd_lfdr(
    scenario: &Scenario,
    x_grid: &[f64],
    group: Option<&str>,
    opts: &RenderOptions,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> Result<Vec<LfdrRow>, CliError> {
    let prior = lfdr_prior(scenario, group)?;
    let model = GaussianTestModel;
    let mut rows = Vec::with_capacity(x_grid.len());
    for &x in x_grid {
        if !(x > 0.0 && x < 1.0) {
            return Err(CliError::BadGridPoint(x));
        }
        let p = Probability::new(x).map_err(|_| CliError::BadGridPoint(x))?;
        let lfdr = bayes::local_fdr(&prior, &model, p)?.value();
        let region = PValueRegion::approval(p)?;
        let fdr = bayes::fdr_over_region(&prior, &model, &region).map(|v| v.value());
        rows.push(LfdrRow {
            x,
            lfdr,
            fdr_region_0_to_x: fdr,
        });
    }
    let mut t = Table::new(["x", "lfdr", "fdr_region_0_to_x"]);
    for r in &rows {
        t.push([
            format!("{}", r.x),
            format!("{}", r.lfdr),
            render::raw(r.fdr_region_0_to_x),
        ]);
    }
    match opts.format {
        OutputFormat::Table => t.write_markdown(out)?,
        OutputFormat::Csv => t.write_csv(out)?,
        OutputFormat::JsonLines => {
            #[derive(Serialize)]
            struct Line<'a> {
                #[serde(flatten)]
                row: &'a LfdrRow,
                seed: u64,
            }
            for r in &rows {
                json_line(
                    out,
                    &Line {
                        row: r,
                        seed: opts.seed,
                    },
                )?;
            }
        }
    }
    emit_seed(opts, out, err)?;
    Ok(rows)
}
