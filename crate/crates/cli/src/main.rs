//! `quorumwall`: verification, counting, wall-reading, and sweep
//! execution over the tiered Earth/LEO/Moon/Mars quorum system.

use std::fs;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use quorumwall::config::parse_sweep;
use quorumwall::quorum::{
    drop_tier_requirement, flat_phase1, local_families, phase2, verify_cross_intersection,
    wall_phase1, LocalScope, QuorumFamily,
};
use quorumwall::{
    build_topology, load_family, read_wall, sweep, write_csv, BlackoutModel, BlackoutWindow,
    Coverage, SweepPoint, Tier, CRASH_TIME, MARS_DELAY_BAND,
};

#[derive(Parser)]
#[command(
    name = "quorumwall",
    version,
    about = "Tiered quorum geometry and deterministic consensus simulation \
             over a 5/1/1/3 Earth/LEO/Moon/Mars deployment"
)]
struct Cli {
    /// Directory holding sweeps/<family>.cfg files that override the
    /// built-in sweep families.
    #[arg(long, global = true, env = "QUORUMWALL_CONFIG_DIR")]
    config_dir: Option<PathBuf>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Exhaustively verify cross-phase quorum intersection for every
    /// tier family and the local families.
    Verify(VerifyArgs),
    /// Print exact quorum-family member counts.
    Count(CountArgs),
    /// Read each tier's global-consensus capability off the link state.
    ReadWall(ReadWallArgs),
    /// Run a sweep family across seeds and write aggregated CSV rows.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct VerifyArgs {
    /// Phase-2 relaxation levels to verify (k-of-5 Earth).
    #[arg(long, value_delimiter = ',', default_value = "3,4,5")]
    k: Vec<u32>,

    /// Test hook: drop the Earth requirement from the named tier's
    /// Phase-1 family to demonstrate the verifier catches it
    /// (e.g. `drop-earth:leo`).
    #[arg(long, value_parser = parse_mutation)]
    mutate: Option<Mutation>,
}

#[derive(Args)]
struct CountArgs {
    /// Phase-2 relaxation level the counted families pair with.
    #[arg(long, default_value_t = 5)]
    k: u32,

    /// Also print the flat all-tiers family count.
    #[arg(long)]
    flat: bool,
}

#[derive(Args)]
struct ReadWallArgs {
    #[arg(long, default_value = "full", value_parser = parse_coverage)]
    coverage: Coverage,

    /// Sever this tier over [600, 1500) (only `mars` is supported).
    #[arg(long, value_parser = parse_blackout_tier)]
    blackout: Option<Tier>,

    /// Blackout model when --blackout is given.
    #[arg(long, default_value = "hard", value_parser = parse_model)]
    model: BlackoutModel,

    /// Phase-2 relaxation level to read against.
    #[arg(long, default_value_t = 5)]
    k: u32,

    /// Crash this many Earth nodes (configured order) at t=550.
    #[arg(long, default_value_t = 0)]
    crashes: u32,

    /// Read time in seconds (default: mid-blackout when one is set,
    /// 1000 with crashes, else 0).
    #[arg(long)]
    time: Option<f64>,

    /// Mars one-way delay in seconds.
    #[arg(long, default_value_t = 186.0)]
    mars_delay: f64,
}

#[derive(Args)]
struct SweepArgs {
    /// Sweep family name: a built-in (flat_vs_wall, tier_liveness,
    /// crash_tolerance) or a sweeps/<family>.cfg under --config-dir.
    family: String,

    /// Inclusive seed range, e.g. 40..89 (a single number runs one seed).
    #[arg(long, default_value = "40..89", value_parser = parse_seed_range)]
    seeds: SeedRange,

    /// Output CSV path (default: <family>.csv).
    #[arg(short, long)]
    out: Option<PathBuf>,

    /// Keep only scenario points whose id contains this substring.
    #[arg(long)]
    filter: Option<String>,
}

#[derive(Clone, Copy, Debug)]
struct Mutation {
    tier: Tier,
}

fn parse_mutation(s: &str) -> Result<Mutation, String> {
    let rest = s
        .strip_prefix("drop-earth:")
        .ok_or_else(|| format!("expected drop-earth:<tier>, got `{s}`"))?;
    Tier::from_name(rest)
        .map(|tier| Mutation { tier })
        .ok_or_else(|| format!("unknown tier `{rest}` (earth|leo|moon|mars)"))
}

fn parse_coverage(s: &str) -> Result<Coverage, String> {
    Coverage::from_name(s).ok_or_else(|| format!("expected full|sparse, got `{s}`"))
}

fn parse_model(s: &str) -> Result<BlackoutModel, String> {
    BlackoutModel::from_name(s).ok_or_else(|| format!("expected hard|repeater, got `{s}`"))
}

fn parse_blackout_tier(s: &str) -> Result<Tier, String> {
    match s {
        "mars" => Ok(Tier::Mars),
        _ => Err(format!("only `mars` blackouts are supported, got `{s}`")),
    }
}

#[derive(Clone, Copy, Debug)]
struct SeedRange {
    first: u64,
    last: u64,
}

fn parse_seed_range(s: &str) -> Result<SeedRange, String> {
    let bad = || format!("expected FIRST..LAST (inclusive) or a single seed, got `{s}`");
    if let Some((a, b)) = s.split_once("..") {
        let first: u64 = a.trim().parse().map_err(|_| bad())?;
        let last: u64 = b.trim().trim_start_matches('=').trim().parse().map_err(|_| bad())?;
        if last < first {
            return Err(format!("seed range `{s}` is empty"));
        }
        Ok(SeedRange { first, last })
    } else {
        let seed: u64 = s.trim().parse().map_err(|_| bad())?;
        Ok(SeedRange { first: seed, last: seed })
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.cmd {
        Cmd::Verify(args) => cmd_verify(args),
        Cmd::Count(args) => cmd_count(args),
        Cmd::ReadWall(args) => cmd_read_wall(args),
        Cmd::Sweep(args) => cmd_sweep(cli.config_dir, args),
    }
}

fn report_pair(label: &str, q1: &QuorumFamily, q2: &QuorumFamily) -> bool {
    let v = verify_cross_intersection(q1, q2);
    match v.counterexample {
        None => {
            println!("PASS {label} pairs_checked={}", v.pairs_checked);
            true
        }
        Some((a, b)) => {
            println!("FAIL {label} counterexample {a} vs {b} (after {} pairs)", v.pairs_checked);
            false
        }
    }
}

fn cmd_verify(args: VerifyArgs) -> Result<ExitCode> {
    let mut all_hold = true;
    let mut tier_pairs = 0;
    for &k in &args.k {
        let q2 = phase2(k)?;
        for tier in Tier::ALL {
            let mut q1 = wall_phase1(tier, k)?;
            let mut label = format!("wall({},k={k}) x phase2(k={k})", tier.name());
            if args.mutate.map(|m| m.tier) == Some(tier) {
                q1 = drop_tier_requirement(&q1, Tier::Earth);
                label.push_str(" [mutated: earth requirement dropped]");
            }
            all_hold &= report_pair(&label, &q1, &q2);
            tier_pairs += 1;
        }
    }
    let mut local_pairs = 0;
    for scope in [LocalScope::EarthStd, LocalScope::EarthMaj, LocalScope::MarsLocal] {
        let (q1, q2) = local_families(scope);
        all_hold &= report_pair(&format!("local({}) q1 x q2", scope.name()), &q1, &q2);
        local_pairs += 1;
    }
    println!(
        "{tier_pairs} tier family pairs + {local_pairs} local pairs checked: {}",
        if all_hold { "all hold" } else { "INTERSECTION FAILURE" }
    );
    Ok(if all_hold { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn cmd_count(args: CountArgs) -> Result<ExitCode> {
    let counts = Tier::ALL
        .into_iter()
        .map(|tier| Ok(wall_phase1(tier, args.k)?.count_members()))
        .collect::<Result<Vec<u64>>>()?;
    let ratio = counts[0] as f64 / counts[3] as f64;
    println!(
        "earth={} leo={} moon={} mars={} ratio={ratio:.2}",
        counts[0], counts[1], counts[2], counts[3]
    );
    if args.flat {
        println!("flat={}", flat_phase1().count_members());
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_read_wall(args: ReadWallArgs) -> Result<ExitCode> {
    if args.mars_delay < MARS_DELAY_BAND.0 || args.mars_delay > MARS_DELAY_BAND.1 {
        eprintln!(
            "warning: mars delay {} s is outside the calibrated band [{}, {}]",
            args.mars_delay, MARS_DELAY_BAND.0, MARS_DELAY_BAND.1
        );
    }
    let mut topology = build_topology(args.coverage, args.mars_delay);
    let window = args.blackout.map(|severed_tier| BlackoutWindow {
        start: 600.0,
        duration: 900.0,
        model: args.model,
        severed_tier,
    });
    if let Some(w) = window {
        topology.add_blackout(w);
    }
    topology.crash_first(args.crashes as usize, CRASH_TIME);
    let time = args.time.unwrap_or(match window {
        Some(w) => w.start + w.duration / 2.0,
        None if args.crashes > 0 => 1000.0,
        None => 0.0,
    });
    let line = Tier::ALL
        .into_iter()
        .map(|tier| {
            let v = read_wall(&topology, time, tier, args.k);
            let word = if v.live {
                "LIVE".to_string()
            } else if !v.obligations_met {
                "BLOCKED".to_string()
            } else {
                "BLOCKED(phase2)".to_string()
            };
            format!("{}:{word}", tier.name())
        })
        .collect::<Vec<_>>()
        .join(" ");
    println!("{line}");
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(config_dir: Option<PathBuf>, args: SweepArgs) -> Result<ExitCode> {
    let file = match &config_dir {
        Some(dir) => {
            let path = dir.join("sweeps").join(format!("{}.cfg", args.family));
            let text = fs::read_to_string(&path)
                .with_context(|| format!("reading sweep config {}", path.display()))?;
            parse_sweep(&text)?
        }
        None => load_family(&args.family)?,
    };
    let mut points: Vec<SweepPoint> = file.points;
    if let Some(filter) = &args.filter {
        points.retain(|p| p.config.scenario_id.contains(filter.as_str()));
        if points.is_empty() {
            bail!("filter `{filter}` matched none of the {} points", file.family);
        }
    }
    let rows = sweep(&points, args.seeds.first..=args.seeds.last)?;
    let out = args
        .out
        .unwrap_or_else(|| PathBuf::from(format!("{}.csv", file.family)));
    let handle = fs::File::create(&out)
        .with_context(|| format!("creating output file {}", out.display()))?;
    write_csv(BufWriter::new(handle), &rows)?;
    println!("wrote {} rows to {}", rows.len(), out.display());
    Ok(ExitCode::SUCCESS)
}
