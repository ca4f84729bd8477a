//! Quorum geometry and deterministic consensus simulation for tiered,
//! high-latency deployments.
//!
//! The model is a four-tier acceptor universe — five Earth ground
//! stations, one LEO relay, one lunar station, three Mars nodes — and a
//! quorum construction that anchors every Phase-1 quorum on Earth while
//! requiring one respondent from each tier between the proposer and the
//! anchor. Cross-phase intersection then follows structurally, and each
//! tier's global liveness can be read off the link state in O(tiers)
//! without probing.
//!
//! * [`topology`] — the 5/1/1/3 network: links, delays, jitter, blackout
//!   windows, crash schedules.
//! * [`quorum`] — quorum families as per-tier minimum counts: membership,
//!   exact counting (closed form and brute force), exhaustive cross-phase
//!   intersection verification, and the wall reader.
//! * [`simcore`] — deterministic discrete-event engine: virtual clock,
//!   seeded random stream, message transport over the topology.
//! * [`paxos`] — single-decree proposers and acceptors parameterized by
//!   arbitrary Phase-1/Phase-2 quorum families.
//! * [`harness`] — scenario orchestration, blackout/crash injection,
//!   metric extraction, seed sweeps, CSV emission.
//! * [`config`] — the line-based file format for topologies and sweeps.

pub mod config;
pub mod harness;
pub mod paxos;
pub mod quorum;
pub mod simcore;
pub mod topology;

pub use config::ConfigError;
pub use harness::{
    aggregate, aggregate_earth_local, builtin_family, load_family, run_scenario, summarize,
    sweep, write_csv, AggregateRow, Construction, MetricSummary, RunRecord, ScenarioConfig,
    ScenarioError, ScopeOutcomes, SweepFile, SweepPoint, CRASH_TIME, CSV_HEADER,
};
pub use paxos::{
    propose, AcceptorState, AttemptOutcome, AttemptResult, AttemptSpec, Ballot, Scope,
    Simulation, Value,
};
pub use quorum::{
    flat_phase1, local_families, min_earth_for_intersection, phase2, read_wall,
    verify_cross_intersection, wall_phase1, IntersectionVerdict, LocalScope, NodeSet,
    QuorumFamily, TierVerdict,
};
pub use simcore::{Engine, RandomStream, SimTime};
pub use topology::{
    build_topology, BlackoutModel, BlackoutWindow, Coverage, NodeId, Tier, Topology,
    MARS_DELAY_BAND,
};
