//! Scenario runner, sweep driver, and CSV aggregation.
//!
//! One scenario = one topology + one quorum construction + a fixed
//! attempt cadence, run once per seed. Global consensus attempts launch
//! every reconciliation interval from t = 0; when local measurement is
//! on, Earth-local and Mars-local attempts launch on the same cadence.
//! Per-seed rates are aggregated into mean ± 95% confidence interval
//! rows, keyed by the scenario parameters.

use std::io::{self, Write};
use std::ops::RangeInclusive;

use rayon::prelude::*;
use thiserror::Error;

use crate::config::{self, ConfigError};
use crate::paxos::{AttemptOutcome, AttemptSpec, Scope, Simulation};
use crate::quorum::{
    flat_phase1, local_families, phase2, read_wall, verify_cross_intersection, wall_phase1,
    LocalScope, QuorumFamily,
};
use crate::simcore::RandomStream;
use crate::topology::{build_topology, BlackoutModel, BlackoutWindow, Coverage, Tier};

/// When crashes are configured, they all land at this instant — after the
/// run has settled, before the default blackout opens.
pub const CRASH_TIME: f64 = 550.0;

/// Which Phase-1 geometry the global attempts use.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Construction {
    /// One respondent from every tier, regardless of proposer.
    Flat,
    /// Tier-anchored obligations: every tier at or below the proposer's.
    Wall,
}

impl Construction {
    pub fn name(self) -> &'static str {
        match self {
            Construction::Flat => "flat",
            Construction::Wall => "wall",
        }
    }

    pub fn from_name(s: &str) -> Option<Construction> {
        match s {
            "flat" => Some(Construction::Flat),
            "wall" => Some(Construction::Wall),
            _ => None,
        }
    }
}

/// Everything one scenario needs. `scenario_id` keys the RNG stream, so
/// two scenarios with identical parameters but different ids draw
/// different jitter.
#[derive(Clone, PartialEq, Debug)]
pub struct ScenarioConfig {
    pub scenario_id: String,
    pub construction: Construction,
    /// The tier whose proposer runs the global attempts.
    pub tier: Tier,
    pub coverage: Coverage,
    pub mars_delay: f64,
    pub blackout_start: f64,
    /// Zero means no blackout.
    pub blackout_duration: f64,
    pub blackout_model: BlackoutModel,
    pub global_k: u32,
    /// Earth-local consensus variant (when locals are measured).
    pub local_scope: LocalScope,
    pub measure_locals: bool,
    pub crashes: u32,
    pub round_budget: f64,
    pub local_round_budget: f64,
    /// Attempt cadence: one attempt per scope every this many seconds.
    pub reconciliation: f64,
    pub sim_end: f64,
}

impl Default for ScenarioConfig {
    fn default() -> ScenarioConfig {
        ScenarioConfig {
            scenario_id: "default".to_string(),
            construction: Construction::Wall,
            tier: Tier::Earth,
            coverage: Coverage::Full,
            mars_delay: 186.0,
            blackout_start: 600.0,
            blackout_duration: 900.0,
            blackout_model: BlackoutModel::Hard,
            global_k: 5,
            local_scope: LocalScope::EarthStd,
            measure_locals: false,
            crashes: 0,
            round_budget: 500.0,
            local_round_budget: 1.0,
            reconciliation: 120.0,
            sim_end: 4000.0,
        }
    }
}

impl ScenarioConfig {
    /// Canonical id for this point within a sweep family.
    pub fn compute_id(&self, family: &str) -> String {
        format!(
            "{family}:{}:{}:{}:{}:{}:{}:k{}:{}:x{}",
            self.construction.name(),
            self.tier.name(),
            self.coverage.name(),
            fmt_param(self.mars_delay),
            fmt_param(self.blackout_duration),
            self.blackout_model.name(),
            self.global_k,
            self.local_scope.name(),
            self.crashes,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("quorum families fail cross-intersection: {q1} is disjoint from {q2}")]
    UnsafeQuorums { q1: String, q2: String },
}

/// One scope's attempt outcomes for one seed, in launch order.
#[derive(Clone, Debug, Default)]
pub struct ScopeOutcomes {
    pub outcomes: Vec<AttemptOutcome>,
}

impl ScopeOutcomes {
    /// Commit fraction over attempts launched inside the window.
    pub fn during_rate(&self, window: Option<(f64, f64)>) -> Option<f64> {
        let (w0, w1) = window?;
        rate(self.outcomes.iter().filter(|o| o.started_at >= w0 && o.started_at < w1))
    }

    /// Commit fraction over attempts launched at or after `boundary`.
    pub fn post_rate(&self, boundary: f64) -> Option<f64> {
        rate(self.outcomes.iter().filter(|o| o.started_at >= boundary))
    }

    /// Mean commit latency over every committed attempt in the run.
    pub fn mean_latency(&self) -> Option<f64> {
        let latencies: Vec<f64> = self.outcomes.iter().filter_map(AttemptOutcome::latency).collect();
        (!latencies.is_empty()).then(|| latencies.iter().sum::<f64>() / latencies.len() as f64)
    }

    /// Seconds from `boundary` to the first commit of an attempt launched
    /// at or after it.
    pub fn recovery_lag(&self, boundary: f64) -> Option<f64> {
        self.outcomes
            .iter()
            .filter(|o| o.started_at >= boundary)
            .find_map(|o| o.latency().map(|l| o.started_at + l - boundary))
    }
}

fn rate<'a>(outcomes: impl Iterator<Item = &'a AttemptOutcome>) -> Option<f64> {
    let (mut total, mut committed) = (0usize, 0usize);
    for o in outcomes {
        total += 1;
        committed += o.committed() as usize;
    }
    (total > 0).then(|| committed as f64 / total as f64)
}

/// One (scenario, seed) run.
#[derive(Clone, Debug)]
pub struct RunRecord {
    pub scenario_id: String,
    pub seed: u64,
    /// Blackout window as (start, end), when one was configured.
    pub window: Option<(f64, f64)>,
    /// The O(tiers) liveness read taken mid-disruption, before any
    /// attempt ran. The acceptance gate holds it against the measured
    /// during-window rate.
    pub predicted_live: bool,
    pub global: ScopeOutcomes,
    pub earth_local: Option<ScopeOutcomes>,
    pub mars_local: Option<ScopeOutcomes>,
}

fn global_families(cfg: &ScenarioConfig) -> Result<(QuorumFamily, QuorumFamily), ScenarioError> {
    let invalid = |e: crate::quorum::FamilyError| ScenarioError::Invalid(e.to_string());
    let q1 = match cfg.construction {
        Construction::Flat => flat_phase1(),
        Construction::Wall => wall_phase1(cfg.tier, cfg.global_k).map_err(invalid)?,
    };
    let q2 = phase2(cfg.global_k).map_err(invalid)?;
    Ok((q1, q2))
}

fn check_intersection(q1: &QuorumFamily, q2: &QuorumFamily) -> Result<(), ScenarioError> {
    let v = verify_cross_intersection(q1, q2);
    if v.holds {
        Ok(())
    } else {
        let (a, b) = v.counterexample.expect("failed verdicts carry a counterexample");
        Err(ScenarioError::UnsafeQuorums {
            q1: a.to_string(),
            q2: b.to_string(),
        })
    }
}

fn validate(cfg: &ScenarioConfig) -> Result<(), ScenarioError> {
    let bad = |m: String| Err(ScenarioError::Invalid(m));
    if !(3..=5).contains(&cfg.global_k) {
        return bad(format!("global_k must be 3, 4, or 5, got {}", cfg.global_k));
    }
    if cfg.local_scope == LocalScope::MarsLocal {
        return bad("local_scope selects the Earth-local variant: std or maj".to_string());
    }
    if cfg.crashes > 2 {
        return bad(format!("at most 2 crashes are supported, got {}", cfg.crashes));
    }
    for (name, v) in [
        ("mars_delay_s", cfg.mars_delay),
        ("round_budget_s", cfg.round_budget),
        ("local_round_budget_s", cfg.local_round_budget),
        ("reconciliation_s", cfg.reconciliation),
        ("sim_end_s", cfg.sim_end),
    ] {
        if !(v > 0.0) {
            return bad(format!("{name} must be positive, got {v}"));
        }
    }
    if cfg.blackout_duration < 0.0 || cfg.blackout_start < 0.0 {
        return bad("blackout start/duration must be non-negative".to_string());
    }
    Ok(())
}

/// Run one scenario under one seed.
pub fn run_scenario(cfg: &ScenarioConfig, seed: u64) -> Result<RunRecord, ScenarioError> {
    validate(cfg)?;

    let mut topology = build_topology(cfg.coverage, cfg.mars_delay);
    let window = (cfg.blackout_duration > 0.0).then(|| {
        (cfg.blackout_start, cfg.blackout_start + cfg.blackout_duration)
    });
    if let Some((start, _)) = window {
        topology.add_blackout(BlackoutWindow {
            start,
            duration: cfg.blackout_duration,
            model: cfg.blackout_model,
            severed_tier: Tier::Mars,
        });
    }
    topology.crash_first(cfg.crashes as usize, CRASH_TIME);

    let (q1, q2) = global_families(cfg)?;
    check_intersection(&q1, &q2)?;
    let earth_pair = local_families(cfg.local_scope);
    let mars_pair = local_families(LocalScope::MarsLocal);
    if cfg.measure_locals {
        check_intersection(&earth_pair.0, &earth_pair.1)?;
        check_intersection(&mars_pair.0, &mars_pair.1)?;
    }

    // Liveness prediction, read off the topology state mid-disruption.
    let probe_time = match window {
        Some((start, end)) => (start + end) / 2.0,
        None if cfg.crashes > 0 => 1000.0,
        None => 0.0,
    };
    let wall_verdict = read_wall(&topology, probe_time, cfg.tier, cfg.global_k);
    let predicted_live = match cfg.construction {
        Construction::Wall => wall_verdict.live,
        Construction::Flat => {
            let all_reachable = Tier::ALL
                .into_iter()
                .all(|j| topology.tier_reachable(probe_time, cfg.tier, j));
            all_reachable && wall_verdict.phase2_achievable
        }
    };

    let global_proposer = topology.proposer_for(cfg.tier);
    let earth_proposer = topology.proposer_site();
    let mars_proposer = topology.proposer_for(Tier::Mars);

    let rng = RandomStream::for_scenario(&cfg.scenario_id, seed);
    let mut sim = Simulation::new(topology, rng);

    let mut global_ids = Vec::new();
    let mut earth_ids = Vec::new();
    let mut mars_ids = Vec::new();
    let mut i: u64 = 0;
    loop {
        let at = i as f64 * cfg.reconciliation;
        if at >= cfg.sim_end {
            break;
        }
        global_ids.push(sim.schedule_attempt(
            at,
            AttemptSpec {
                scope: Scope::Global,
                proposer: global_proposer,
                q1,
                q2,
                value: 1_000_000 + i,
                round_budget: cfg.round_budget,
            },
        ));
        if cfg.measure_locals {
            earth_ids.push(sim.schedule_attempt(
                at,
                AttemptSpec {
                    scope: Scope::EarthLocal,
                    proposer: earth_proposer,
                    q1: earth_pair.0,
                    q2: earth_pair.1,
                    value: 2_000_000 + i,
                    round_budget: cfg.local_round_budget,
                },
            ));
            mars_ids.push(sim.schedule_attempt(
                at,
                AttemptSpec {
                    scope: Scope::MarsLocal,
                    proposer: mars_proposer,
                    q1: mars_pair.0,
                    q2: mars_pair.1,
                    value: 3_000_000 + i,
                    round_budget: cfg.local_round_budget,
                },
            ));
        }
        i += 1;
    }

    sim.run(cfg.sim_end);

    let collect = |ids: &[usize]| ScopeOutcomes {
        outcomes: ids.iter().map(|&id| sim.outcome(id)).collect(),
    };
    Ok(RunRecord {
        scenario_id: cfg.scenario_id.clone(),
        seed,
        window,
        predicted_live,
        global: collect(&global_ids),
        earth_local: cfg.measure_locals.then(|| collect(&earth_ids)),
        mars_local: cfg.measure_locals.then(|| collect(&mars_ids)),
    })
}

/// A sample mean with its 95% confidence half-width.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricSummary {
    pub mean: f64,
    pub ci: f64,
}

/// Mean ± 1.96·s/√n over the samples. The interval collapses to exactly
/// zero for a single sample or bit-identical samples, so deterministic
/// outcomes report a zero-width interval rather than float dust.
pub fn summarize(values: &[f64]) -> Option<MetricSummary> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let identical = values
        .windows(2)
        .all(|w| w[0].to_bits() == w[1].to_bits());
    let ci = if values.len() == 1 || identical {
        0.0
    } else {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        1.96 * var.sqrt() / n.sqrt()
    };
    Some(MetricSummary { mean, ci })
}

/// One output row: scenario parameters plus aggregated metrics.
#[derive(Clone, Debug)]
pub struct AggregateRow {
    /// `flat`, `wall`, or `local` for the Earth-local companion row.
    pub construction: String,
    pub tier: String,
    pub coverage: String,
    pub mars_delay: f64,
    pub blackout_duration: f64,
    pub global_k: u32,
    pub local_scope: String,
    pub crashes: u32,
    pub n_seeds: usize,
    pub during: Option<MetricSummary>,
    pub post: Option<MetricSummary>,
    pub latency: Option<MetricSummary>,
    pub recovery: Option<MetricSummary>,
}

fn aggregate_scope<'a>(
    cfg: &ScenarioConfig,
    records: &'a [RunRecord],
    construction: &str,
    pick: impl Fn(&'a RunRecord) -> &'a ScopeOutcomes,
) -> AggregateRow {
    let mut during = Vec::new();
    let mut post = Vec::new();
    let mut latency = Vec::new();
    let mut recovery = Vec::new();
    for r in records {
        let s = pick(r);
        let boundary = r.window.map_or(0.0, |w| w.1);
        during.extend(s.during_rate(r.window));
        post.extend(s.post_rate(boundary));
        latency.extend(s.mean_latency());
        if r.window.is_some() {
            recovery.extend(s.recovery_lag(boundary));
        }
    }
    AggregateRow {
        construction: construction.to_string(),
        tier: cfg.tier.name().to_string(),
        coverage: cfg.coverage.name().to_string(),
        mars_delay: cfg.mars_delay,
        blackout_duration: cfg.blackout_duration,
        global_k: cfg.global_k,
        local_scope: cfg.local_scope.name().to_string(),
        crashes: cfg.crashes,
        n_seeds: records.len(),
        during: summarize(&during),
        post: summarize(&post),
        latency: summarize(&latency),
        recovery: summarize(&recovery),
    }
}

/// Aggregate the global-scope outcomes of one scenario's records.
pub fn aggregate(cfg: &ScenarioConfig, records: &[RunRecord]) -> AggregateRow {
    aggregate_scope(cfg, records, cfg.construction.name(), |r| &r.global)
}

/// Aggregate the Earth-local outcomes into a `local` companion row.
pub fn aggregate_earth_local(cfg: &ScenarioConfig, records: &[RunRecord]) -> AggregateRow {
    aggregate_scope(cfg, records, "local", |r| {
        r.earth_local
            .as_ref()
            .expect("earth-local outcomes were measured")
    })
}

/// One scenario inside a sweep family.
#[derive(Clone, Debug)]
pub struct SweepPoint {
    pub config: ScenarioConfig,
    /// Emit an Earth-local companion row after the global row.
    pub emit_local_row: bool,
}

/// A parsed sweep family.
#[derive(Clone, Debug)]
pub struct SweepFile {
    pub family: String,
    pub points: Vec<SweepPoint>,
}

/// Run every point over every seed (seeds in parallel, outputs in seed
/// order) and aggregate one row per point, plus a `local` row where
/// requested.
pub fn sweep(points: &[SweepPoint], seeds: RangeInclusive<u64>) -> Result<Vec<AggregateRow>, ScenarioError> {
    let seed_list: Vec<u64> = seeds.collect();
    let mut rows = Vec::new();
    for p in points {
        let records = seed_list
            .par_iter()
            .map(|&s| run_scenario(&p.config, s))
            .collect::<Result<Vec<RunRecord>, ScenarioError>>()?;
        rows.push(aggregate(&p.config, &records));
        if p.emit_local_row {
            rows.push(aggregate_earth_local(&p.config, &records));
        }
    }
    Ok(rows)
}

pub const CSV_HEADER: &str = "construction,tier,coverage,mars_delay_s,blackout_s,global_k,\
local_scope,crashes,n_seeds,during_rate_mean,during_rate_ci,post_rate_mean,post_rate_ci,\
latency_mean_s,latency_ci_s,recovery_lag_mean_s,recovery_lag_ci_s";

/// Integer rendering for whole parameter values, plain float otherwise.
fn fmt_param(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

/// Metrics print with up to four decimals, trailing zeros trimmed but at
/// least one decimal kept (`1.0`, `0.98`, `0.0392`).
fn fmt_metric(v: f64) -> String {
    let s = format!("{v:.4}");
    let trimmed = s.trim_end_matches('0');
    if trimmed.ends_with('.') {
        format!("{trimmed}0")
    } else {
        trimmed.to_string()
    }
}

fn metric_cells(m: &Option<MetricSummary>) -> (String, String) {
    match m {
        Some(m) => (fmt_metric(m.mean), fmt_metric(m.ci)),
        None => (String::new(), String::new()),
    }
}

/// Write rows as CSV with the pinned 17-column header.
pub fn write_csv<W: Write>(mut out: W, rows: &[AggregateRow]) -> io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        let (d_m, d_c) = metric_cells(&r.during);
        let (p_m, p_c) = metric_cells(&r.post);
        let (l_m, l_c) = metric_cells(&r.latency);
        let (g_m, g_c) = metric_cells(&r.recovery);
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{d_m},{d_c},{p_m},{p_c},{l_m},{l_c},{g_m},{g_c}",
            r.construction,
            r.tier,
            r.coverage,
            fmt_param(r.mars_delay),
            fmt_param(r.blackout_duration),
            r.global_k,
            r.local_scope,
            r.crashes,
            r.n_seeds,
        )?;
    }
    Ok(())
}

const FLAT_VS_WALL_CFG: &str = include_str!("../../../sweeps/flat_vs_wall.cfg");
const TIER_LIVENESS_CFG: &str = include_str!("../../../sweeps/tier_liveness.cfg");
const CRASH_TOLERANCE_CFG: &str = include_str!("../../../sweeps/crash_tolerance.cfg");

/// The embedded sweep family's config text, if `name` matches one.
pub fn builtin_family(name: &str) -> Option<&'static str> {
    match name {
        "flat_vs_wall" => Some(FLAT_VS_WALL_CFG),
        "tier_liveness" => Some(TIER_LIVENESS_CFG),
        "crash_tolerance" => Some(CRASH_TOLERANCE_CFG),
        _ => None,
    }
}

/// Parse an embedded sweep family by name.
pub fn load_family(name: &str) -> Result<SweepFile, ConfigError> {
    let text = builtin_family(name).ok_or_else(|| ConfigError::Syntax {
        line: 0,
        message: format!(
            "unknown sweep family `{name}` (built-ins: flat_vs_wall, tier_liveness, crash_tolerance)"
        ),
    })?;
    config::parse_sweep(text)
}
