//! End-to-end acceptance checks. Runs without the libtest harness so each
//! criterion prints one PASS/FAIL line even when output is captured.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{adaptive_simpson, p, promising, three_point, PHI_REFERENCE};
use incentive_fdr::bayes::{
    fdr_over_region, local_fdr, marginal_density, population_fdr_exact,
    posterior_null_given_approve, posterior_odds_nonnull, PValueRegion, PopulationFdr,
};
use incentive_fdr::bounds::{posterior_odds_bound, theorem2_ledger, Verdict};
use incentive_fdr::cli::commands::{cmd_fda_table, OutputFormat, RenderOptions};
use incentive_fdr::model::{
    expected_profit, expected_utility, opt_in_threshold, AgentProfile, ApprovalProtocol,
    DiscretePrior, Economics, GaussianTestModel, ParameterPoint, ParticipationRule,
    PopulationGroup, PopulationSpec, TruthSource, UtilitySpec,
};
use incentive_fdr::numerics::{find_root_increasing, std_normal_cdf, std_normal_quantile};
use incentive_fdr::sim::{
    derive_seed, population_profit_moments, simulate, sweep_tau, SweepSettings,
};

const M: GaussianTestModel = GaussianTestModel;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn econ(c: f64, r: f64) -> Economics {
    Economics::new(c, r).unwrap()
}

fn within_budget(elapsed: Duration, budget_secs: f64) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < budget_secs, || {
        format!("took {:.2}s, budget {budget_secs}s", elapsed.as_secs_f64())
    })
}

const TABLE_GOLDEN: &str = "\
| protocol | type-I level | revenue if approved | expected profit if null | Bayes FDR bound |
| --- | --- | --- | --- | --- |
| standard | 0.0625% | $1B | -$49M | 1.25% |
| standard | 0.0625% | $10B | -$44M | 12.5% |
| standard | 0.0625% | $100B | $13M | n/a |
| modernized | 0.5% | $1B | -$45M | 10% |
| modernized | 0.5% | $10B | $0M | n/a |
| modernized | 0.5% | $100B | $450M | n/a |
";

fn fda_table() -> Outcome {
    let start = Instant::now();
    let opts = RenderOptions {
        format: OutputFormat::Table,
        precise: false,
        seed: 0,
    };
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let rows = cmd_fda_table(&opts, &mut out, &mut err).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let text = String::from_utf8(out).unwrap();
    ensure(text.starts_with(TABLE_GOLDEN), || {
        format!("table differs:\n{text}")
    })?;
    ensure(rows.len() == 6, || format!("{} rows", rows.len()))?;
    within_budget(elapsed, 1.0)?;
    Ok(format!(
        "6 rows match, {:.1}ms",
        elapsed.as_secs_f64() * 1e3
    ))
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

fn flip_location(
    population: &PopulationSpec,
    group: usize,
    econ: &Economics,
    lo: f64,
    hi: f64,
) -> f64 {
    let g = &population.groups()[group];
    let f = |t: f64| {
        let protocol = ApprovalProtocol::single(p(t)).unwrap();
        if g.participates(&M, &protocol, econ) {
            1.0
        } else {
            -1.0
        }
    };
    find_root_increasing(f, lo, hi, 1e-14).unwrap()
}

fn sweep_structure() -> Outcome {
    let start = Instant::now();
    let population = PopulationSpec::two_type_example();
    let econ = econ(1.0, 100.0);
    let grid = log_grid(1e-4, 5e-2, 200);
    let settings = SweepSettings {
        n_agents: 1_000_000,
        seed: 7,
        mc_stride: 10,
        num_trials: 1,
    };
    let rows = sweep_tau(&population, &M, &econ, &grid, &settings).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();

    // (a)
    let tau_p = opt_in_threshold(&promising(), &M, &econ).unwrap().value();
    ensure(grid[0] < tau_p, || {
        "grid starts above the promising threshold".into()
    })?;
    for r in &rows {
        let t = r.tau.value();
        let defined = matches!(r.exact_fdr, PopulationFdr::Defined(_));
        ensure(defined == (t >= tau_p), || {
            format!(
                "tau {t}: {:?} with promising threshold {tau_p}",
                r.exact_fdr
            )
        })?;
    }

    // (b)
    let flips: Vec<usize> = (1..rows.len())
        .filter(|&i| rows[i].participation != rows[i - 1].participation)
        .collect();
    ensure(flips.len() == 2, || {
        format!("{} participation flips", flips.len())
    })?;
    let first = flips[0];
    ensure(grid[first - 1] < tau_p && tau_p <= grid[first], || {
        "first flip does not bracket the promising threshold".into()
    })?;
    let second = flips[1];
    let (lo, hi) = (grid[second - 1], grid[second]);
    ensure(
        !rows[second - 1].participation[1] && rows[second].participation[1],
        || "second flip is not the unpromising group".into(),
    )?;
    let located = flip_location(&population, 1, &econ, lo, hi);
    ensure((located - 0.01).abs() <= 1e-9, || {
        format!("second flip at {located}")
    })?;
    let threshold = opt_in_threshold(&DiscretePrior::point_null(), &M, &econ)
        .unwrap()
        .value();
    ensure((threshold - 0.01).abs() <= 1e-9, || {
        format!("unpromising threshold {threshold}")
    })?;

    // (c)
    let mut checked = 0;
    for r in &rows {
        if let Some(fdr) = r.exact_fdr.value() {
            let t = r.tau.value();
            let cap = (100.0 * t).min(1.0);
            ensure(fdr <= cap + 1e-12, || {
                format!("tau {t}: fdr {fdr} above {cap}")
            })?;
            checked += 1;
        }
    }

    // (d)
    let at = |t: f64| {
        let protocol = ApprovalProtocol::single(p(t)).unwrap();
        population_fdr_exact(&population, &M, &protocol, &econ)
            .value()
            .unwrap()
    };
    let left = at(0.01 * (1.0 - 1e-12));
    let right = at(0.01);
    ensure(right - left > 0.1, || format!("jump {left} -> {right}"))?;
    ensure((left - 0.026_354_003_312_865_51).abs() < 1e-9, || {
        format!("left limit {left}")
    })?;
    ensure((right - 0.930_677_825_638_463_1).abs() < 1e-12, || {
        format!("right limit {right}")
    })?;

    // Monte Carlo agreement at the simulated points.
    let mut simulated = 0;
    for r in &rows {
        let Some(sim) = &r.simulation else {
            continue;
        };
        let Some(exact) = r.exact_fdr.value() else {
            ensure(sim.n_opted_in == 0 && sim.empirical_fdr.is_none(), || {
                format!("tau {}: agents ran trials below every threshold", r.tau)
            })?;
            continue;
        };
        let emp = sim.empirical_fdr.ok_or("no approvals in a defined run")?;
        let se = (exact * (1.0 - exact) / sim.n_approved as f64).sqrt();
        ensure((emp - exact).abs() <= 4.0 * se, || {
            format!("tau {}: empirical {emp} vs exact {exact} (se {se})", r.tau)
        })?;
        simulated += 1;
    }
    ensure(
        rows.iter().filter(|r| r.simulation.is_some()).count() == 20,
        || "expected 20 simulated points".into(),
    )?;

    within_budget(elapsed, 30.0)?;
    Ok(format!(
        "flips at {tau_p:.6e} and {located:.12}, {checked} bounded points, jump {left:.4} -> {right:.4}, \
         {simulated} MC points within 4 SE, {:.2}s",
        elapsed.as_secs_f64()
    ))
}

fn random_tau_below(rng: &mut ChaCha8Rng, ratio: f64) -> f64 {
    loop {
        let t = ratio * rng.random::<f64>();
        if t > 0.0 {
            return t;
        }
    }
}

fn odds_bound_suite() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x7431);
    let (mut accepted, mut drawn) = (0, 0);
    let mut tightest = f64::INFINITY;
    while accepted < 1000 {
        drawn += 1;
        let theta = rng.random_range(0.2..3.0);
        let p1 = rng.random_range(0.0..1.0);
        let ratio = rng.random_range(0.001..0.5);
        let tau = random_tau_below(&mut rng, ratio);
        let prior = DiscretePrior::two_point(theta, p1).unwrap();
        let econ = econ(ratio, 1.0);
        let protocol = ApprovalProtocol::single(p(tau)).unwrap();
        if expected_profit(&prior, &M, &protocol, &econ) < 0.0 {
            continue;
        }
        accepted += 1;
        let bound = posterior_odds_bound(&econ, p(tau)).unwrap().value();
        ensure(
            (bound - (ratio - tau) / tau).abs() <= 1e-12 * bound.max(1.0),
            || "bound formula".into(),
        )?;
        let odds = posterior_odds_nonnull(&prior, &M, &protocol)
            .ok_or("zero approval mass")?
            .value();
        ensure(odds >= bound - 1e-12, || {
            format!("theta {theta}, p1 {p1}, C/R {ratio}, tau {tau}: odds {odds} < {bound}")
        })?;
        tightest = tightest.min(odds / bound);
    }
    let elapsed = start.elapsed();
    within_budget(elapsed, 5.0)?;
    Ok(format!(
        "1000 participating instances ({drawn} drawn), min odds/bound {tightest:.4}, {:.2}s",
        elapsed.as_secs_f64()
    ))
}

fn ledger_suite() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x7432);
    let mut premise_held = 0;
    for _ in 0..1000 {
        let n = rng.random_range(1..=50);
        let null_share = rng.random::<f64>();
        let points: Vec<ParameterPoint> = (0..n)
            .map(|_| {
                if rng.random::<f64>() < null_share {
                    ParameterPoint::null()
                } else {
                    let theta = 3.0 * (1.0 - rng.random::<f64>());
                    ParameterPoint::nonnull(theta).unwrap()
                }
            })
            .collect();
        let ratio = rng.random_range(0.001..0.5);
        let tau = random_tau_below(&mut rng, ratio);
        let econ = econ(ratio, 1.0);
        let protocol = ApprovalProtocol::single(p(tau)).unwrap();
        let ledger = theorem2_ledger(&points, &M, &protocol, &econ).map_err(|e| e.to_string())?;

        let tp: f64 = ledger
            .entries
            .iter()
            .filter(|e| !e.point.is_null())
            .map(|e| e.power)
            .sum();
        let fp: f64 = ledger
            .entries
            .iter()
            .filter(|e| e.point.is_null())
            .map(|e| e.power)
            .sum();
        let total: f64 = ledger.entries.iter().map(|e| e.power - ratio).sum();
        let r = if fp > 0.0 { tp / fp } else { f64::INFINITY };
        if total >= 0.0 {
            premise_held += 1;
            ensure(r >= ledger.bound, || {
                format!("total {total} >= 0 but ratio {r} < {}", ledger.bound)
            })?;
        }
        if total > 0.0 {
            ensure(r > ledger.bound, || {
                format!("total {total} > 0 but ratio {r} <= {}", ledger.bound)
            })?;
        }
        ensure(ledger.verdict == Verdict::Consistent, || {
            "ledger verdict".into()
        })?;
        for e in &ledger.entries {
            ensure(e.principal_value >= e.agent_value - 1e-15, || {
                format!(
                    "v^p {} < v^a {} at {:?}",
                    e.principal_value, e.agent_value, e.point
                )
            })?;
        }
    }
    let elapsed = start.elapsed();
    within_budget(elapsed, 5.0)?;
    Ok(format!(
        "1000 agent lists, premise held in {premise_held}, {:.2}s",
        elapsed.as_secs_f64()
    ))
}

fn group(name: &str, prior: DiscretePrior, fraction: f64) -> PopulationGroup {
    PopulationGroup::new(name, AgentProfile::linear(prior), fraction)
}

fn two_type() -> PopulationSpec {
    PopulationSpec::two_type_example()
}

struct Scenario {
    name: &'static str,
    population: PopulationSpec,
    protocol: ApprovalProtocol,
    econ: Economics,
}

fn scenarios() -> Vec<Scenario> {
    let single = |t: f64| ApprovalProtocol::single(p(t)).unwrap();
    let mut out = Vec::new();
    for (name, t) in [
        ("two-type tau=0.0008", 0.0008),
        ("two-type tau=0.003", 0.003),
        ("two-type tau=0.01", 0.01),
        ("two-type tau=0.02", 0.02),
        ("two-type tau=0.04", 0.04),
    ] {
        out.push(Scenario {
            name,
            population: two_type(),
            protocol: single(t),
            econ: econ(1.0, 100.0),
        });
    }
    out.push(Scenario {
        name: "two-type, two trials at 0.025",
        population: two_type(),
        protocol: ApprovalProtocol::standard(),
        econ: econ(1.0, 100.0),
    });
    out.push(Scenario {
        name: "fixed truth",
        population: PopulationSpec::new(vec![
            group("optimist", promising(), 0.3).with_truth(TruthSource::Fixed(vec![
                ParameterPoint::null(),
                ParameterPoint::null(),
                ParameterPoint::nonnull(2.0).unwrap(),
            ])),
            group("mixed", three_point(), 0.7),
        ])
        .unwrap(),
        protocol: single(0.01),
        econ: econ(1.0, 50.0),
    });
    out.push(Scenario {
        name: "risk-averse group",
        population: PopulationSpec::new(vec![
            PopulationGroup::new(
                "averse",
                AgentProfile::new(three_point(), UtilitySpec::exponential(0.02).unwrap()).unwrap(),
                0.4,
            )
            .with_rule(ParticipationRule::ExpectedUtility),
            group("null", DiscretePrior::point_null(), 0.6),
        ])
        .unwrap(),
        protocol: single(0.02),
        econ: econ(1.0, 100.0),
    });
    out.push(Scenario {
        name: "three groups",
        population: PopulationSpec::new(vec![
            group("strong", DiscretePrior::two_point(2.0, 0.5).unwrap(), 0.2),
            group("weak", DiscretePrior::two_point(0.5, 0.3).unwrap(), 0.3),
            group("null", DiscretePrior::point_null(), 0.5),
        ])
        .unwrap(),
        protocol: single(0.05),
        econ: econ(1.0, 20.0),
    });
    out.push(Scenario {
        name: "two-type, R=200, tau=0.006",
        population: two_type(),
        protocol: single(0.006),
        econ: econ(1.0, 200.0),
    });
    out
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let n = 1_000_000u64;
    let mut worst: f64 = 0.0;
    for (i, s) in scenarios().iter().enumerate() {
        let seed = derive_seed(2024, i as u64);
        let sim = simulate(&s.population, &M, &s.protocol, &s.econ, n, seed)
            .map_err(|e| e.to_string())?;
        match population_fdr_exact(&s.population, &M, &s.protocol, &s.econ) {
            PopulationFdr::Defined(exact) => {
                let exact = exact.value();
                let emp = sim
                    .empirical_fdr
                    .ok_or_else(|| format!("{}: no approvals", s.name))?;
                let se = (exact * (1.0 - exact) / sim.n_approved as f64).sqrt();
                let z = if se > 0.0 {
                    (emp - exact).abs() / se
                } else {
                    0.0
                };
                ensure(
                    z <= 4.0 && (se > 0.0 || (emp - exact).abs() < 1e-12),
                    || format!("{}: empirical fdr {emp} vs {exact} (se {se})", s.name),
                )?;
                worst = worst.max(z);
            }
            other => {
                ensure(sim.empirical_fdr.is_none(), || {
                    format!("{}: {other:?} but simulated fdr", s.name)
                })?;
            }
        }
        let m = population_profit_moments(&s.population, &M, &s.protocol, &s.econ);
        let nf = n as f64;
        let se = (nf * m.variance).sqrt();
        let dev = (sim.total_agent_profit - nf * m.mean).abs();
        ensure(dev <= 4.0 * se + 1e-9 * nf, || {
            format!(
                "{}: profit {} vs {} (se {se})",
                s.name,
                sim.total_agent_profit,
                nf * m.mean
            )
        })?;
        if se > 0.0 {
            worst = worst.max(dev / se);
        }
    }
    let elapsed = start.elapsed();
    within_budget(elapsed, 60.0)?;
    Ok(format!(
        "10 scenarios at n=1e6, largest deviation {worst:.2} SE, {:.2}s",
        elapsed.as_secs_f64()
    ))
}

fn risk_aversion() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0x7436);
    let random_profile = |rng: &mut ChaCha8Rng| {
        let prior =
            DiscretePrior::two_point(rng.random_range(0.2..3.0), rng.random::<f64>()).unwrap();
        let a = 10f64.powf(rng.random_range(-3.0..0.5));
        AgentProfile::new(prior, UtilitySpec::exponential(a).unwrap()).unwrap()
    };

    let mut accepted = 0;
    while accepted < 500 {
        let profile = random_profile(&mut rng);
        let econ = econ(1.0, 1.0 / rng.random_range(0.001..0.5));
        let protocol = ApprovalProtocol::single(p(rng.random_range(1e-4..0.2))).unwrap();
        if expected_profit(&profile.prior, &M, &protocol, &econ) >= 0.0 {
            continue;
        }
        accepted += 1;
        let eu = expected_utility(&profile, &M, &protocol, &econ);
        ensure(eu < 0.0, || {
            format!("profit < 0 but utility {eu} for {profile:?}")
        })?;
    }

    let grid = log_grid(1e-5, 0.5, 100);
    let (mut averse_in, mut linear_in) = (0, 0);
    for _ in 0..50 {
        let profile = random_profile(&mut rng);
        let linear = AgentProfile::linear(profile.prior.clone());
        let econ = econ(1.0, 1.0 / rng.random_range(0.001..0.5));
        for &t in &grid {
            let protocol = ApprovalProtocol::single(p(t)).unwrap();
            let averse =
                ParticipationRule::ExpectedUtility.participates(&profile, &M, &protocol, &econ);
            let neutral =
                ParticipationRule::ExpectedProfit.participates(&linear, &M, &protocol, &econ);
            ensure(!averse || neutral, || {
                format!("risk-averse opts in alone at tau {t}")
            })?;
            averse_in += averse as usize;
            linear_in += neutral as usize;
        }
    }
    Ok(format!(
        "500 negative-profit instances, containment {averse_in} <= {linear_in} on 50x100 grid, {:.2}s",
        start.elapsed().as_secs_f64()
    ))
}

fn numerics() -> Outcome {
    let mut worst: f64 = 0.0;
    for &(x, want) in PHI_REFERENCE.iter() {
        let got = std_normal_cdf(x).unwrap().value();
        let err = (got - want).abs();
        ensure(err <= 1e-9, || {
            format!("phi({x}) = {got}, reference {want}")
        })?;
        worst = worst.max(err);
    }
    let mut worst_p: f64 = 0.0;
    for k in -120i32..=120 {
        let e = k as f64 / 10.0;
        let v = 1.0 / (1.0 + (-e).exp());
        for prob in [v, 10f64.powf(-(k.abs() as f64) / 10.0 - 0.1)] {
            if prob <= 0.0 || prob >= 1.0 {
                continue;
            }
            let x = std_normal_quantile(p(prob)).unwrap();
            let back = std_normal_cdf(x).unwrap().value();
            let err = (back - prob).abs();
            ensure(err <= 1e-8, || format!("round trip at p={prob}: {back}"))?;
            worst_p = worst_p.max(err);
        }
    }
    let mut worst_x: f64 = 0.0;
    for i in 0..=1100 {
        let x = -6.0 + i as f64 * 0.01;
        let back = std_normal_quantile(std_normal_cdf(x).unwrap()).unwrap();
        let err = (back - x).abs();
        ensure(err <= 1e-8, || format!("round trip at x={x}: {back}"))?;
        worst_x = worst_x.max(err);
    }
    Ok(format!(
        "41 points, max |err| {worst:.1e}; round trips p {worst_p:.1e}, x {worst_x:.1e}"
    ))
}

fn quadrature_priors() -> Vec<(&'static str, DiscretePrior)> {
    vec![
        ("50/50 theta=1", DiscretePrior::two_point(1.0, 0.5).unwrap()),
        ("promising", promising()),
        ("three-point", three_point()),
    ]
}

fn region_consistency() -> Outcome {
    let mut worst_region: f64 = 0.0;
    let mut priors = quadrature_priors();
    priors.push(("sparse strong", DiscretePrior::two_point(3.0, 0.1).unwrap()));
    for (name, prior) in &priors {
        for t in log_grid(1e-6, 0.5, 60) {
            let region = PValueRegion::approval(p(t)).unwrap();
            let by_region = fdr_over_region(prior, &M, &region).unwrap().value();
            let protocol = ApprovalProtocol::single(p(t)).unwrap();
            let posterior = posterior_null_given_approve(prior, &M, &protocol)
                .unwrap()
                .value();
            let err = (by_region - posterior).abs();
            ensure(err <= 1e-14, || {
                format!("{name} at {t}: {by_region} vs {posterior}")
            })?;
            worst_region = worst_region.max(err);
        }
    }

    let mut worst_quad: f64 = 0.0;
    for (name, prior) in quadrature_priors() {
        for (lo, hi) in [(0.001, 0.05), (0.01, 0.5), (0.2, 0.9)] {
            let weighted = |x: f64| {
                local_fdr(&prior, &M, p(x)).unwrap().value() * marginal_density(&prior, &M, x)
            };
            let density = |x: f64| marginal_density(&prior, &M, x);
            let quad = adaptive_simpson(&weighted, lo, hi, 1e-12)
                / adaptive_simpson(&density, lo, hi, 1e-12);
            let region = PValueRegion::new(p(lo), p(hi)).unwrap();
            let exact = fdr_over_region(&prior, &M, &region).unwrap().value();
            let err = (quad - exact).abs();
            ensure(err <= 1e-6, || {
                format!("{name} on [{lo}, {hi}]: quadrature {quad} vs {exact}")
            })?;
            worst_quad = worst_quad.max(err);
        }
    }

    for theta in [0.0, 0.5, 1.0, 2.0, 3.0] {
        let (lo, hi) = (1e-4, 1.0 - 1e-4);
        let f = |x: f64| M.pvalue_density(theta, p(x)).unwrap();
        let mass = adaptive_simpson(&f, lo, hi, 1e-12);
        let want = M.power(theta, p(hi)).unwrap().value() - M.power(theta, p(lo)).unwrap().value();
        ensure((mass - want).abs() <= 1e-8, || {
            format!("density mass at theta {theta}: {mass} vs {want}")
        })?;
    }
    Ok(format!(
        "region vs posterior max {worst_region:.1e}; quadrature max {worst_quad:.1e}"
    ))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("1 fda table golden", fda_table),
        ("2 threshold sweep structure", sweep_structure),
        ("3 posterior odds bound", odds_bound_suite),
        ("4 prior-free ledger", ledger_suite),
        ("5 simulator vs exact engine", oracle_equivalence),
        ("6 risk aversion", risk_aversion),
        ("7 normal cdf and quantile", numerics),
        ("8 region and local fdr", region_consistency),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome =
            catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".to_string()));
        match outcome {
            Ok(detail) => println!("PASS  criterion {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  criterion {name}: {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} of 8 criteria failed");
        std::process::exit(1);
    }
    println!("all 8 criteria passed");
}
