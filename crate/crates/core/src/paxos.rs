//! Single-decree Paxos with independently chosen phase families.
//!
//! Correctness needs only cross-phase intersection: every Phase-1 quorum
//! of any ballot must meet every Phase-2 quorum of any ballot. Phase-1
//! quorums of the same phase may be mutually disjoint. Each [`Scope`] is
//! one consensus instance; acceptors keep per-scope state, so successive
//! attempts in a scope re-discover and re-propose any value an earlier
//! ballot got accepted.

use std::collections::BTreeMap;

use crate::quorum::{NodeSet, QuorumFamily};
use crate::simcore::{Describe, Engine, RandomStream, SimTime, Trace};
use crate::topology::{NodeId, Topology};

/// Proposed/decided payload.
pub type Value = u64;

/// Totally ordered ballot: round first, proposer identity as tiebreak.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub struct Ballot {
    pub round: u64,
    pub proposer: NodeId,
}

impl std::fmt::Display for Ballot {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{})", self.round, self.proposer.code())
    }
}

/// Acceptor reply to a Phase-1 prepare.
#[derive(Clone, Copy, PartialEq, Debug)]
pub enum PrepareReply {
    /// Promise not to accept lower ballots, reporting anything already
    /// accepted so the proposer adopts it.
    Promise { accepted: Option<(Ballot, Value)> },
    Nack { promised: Ballot },
}

/// Acceptor reply to a Phase-2 accept.
#[derive(Clone, Copy, PartialEq, Debug)]
pub enum AcceptReply {
    Accepted,
    Nack { promised: Ballot },
}

/// One acceptor's durable state for one consensus instance.
#[derive(Clone, Copy, Default, Debug)]
pub struct AcceptorState {
    pub promised: Option<Ballot>,
    pub accepted: Option<(Ballot, Value)>,
}

impl AcceptorState {
    /// Phase 1: promise iff `b` is strictly above anything promised.
    pub fn on_prepare(&mut self, b: Ballot) -> PrepareReply {
        match self.promised {
            Some(p) if b <= p => PrepareReply::Nack { promised: p },
            _ => {
                self.promised = Some(b);
                PrepareReply::Promise {
                    accepted: self.accepted,
                }
            }
        }
    }

    /// Phase 2: accept iff `b` is at least the promise (a proposer may
    /// accept its own prepared ballot).
    pub fn on_accept(&mut self, b: Ballot, v: Value) -> AcceptReply {
        match self.promised {
            Some(p) if b < p => AcceptReply::Nack { promised: p },
            _ => {
                if let Some((prev, _)) = self.accepted {
                    debug_assert!(b >= prev, "accepted ballot went backwards");
                }
                self.promised = Some(b);
                self.accepted = Some((b, v));
                AcceptReply::Accepted
            }
        }
    }
}

/// Which consensus instance an attempt belongs to.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub enum Scope {
    Global,
    EarthLocal,
    MarsLocal,
}

impl Scope {
    fn tag(self) -> &'static str {
        match self {
            Scope::Global => "global",
            Scope::EarthLocal => "earth-local",
            Scope::MarsLocal => "mars-local",
        }
    }
}

/// Wire messages. Every message names its scope and ballot; replies are
/// routed back to the ballot's proposer.
#[derive(Clone, Copy, Debug)]
pub enum Message {
    Prepare { scope: Scope, ballot: Ballot },
    Promise { scope: Scope, ballot: Ballot, accepted: Option<(Ballot, Value)> },
    PrepareNack { scope: Scope, ballot: Ballot, promised: Ballot },
    Accept { scope: Scope, ballot: Ballot, value: Value },
    Accepted { scope: Scope, ballot: Ballot },
    AcceptNack { scope: Scope, ballot: Ballot, promised: Ballot },
}

impl Message {
    fn scope_ballot(&self) -> (Scope, Ballot) {
        match *self {
            Message::Prepare { scope, ballot }
            | Message::Promise { scope, ballot, .. }
            | Message::PrepareNack { scope, ballot, .. }
            | Message::Accept { scope, ballot, .. }
            | Message::Accepted { scope, ballot }
            | Message::AcceptNack { scope, ballot, .. } => (scope, ballot),
        }
    }
}

/// Index of an attempt within its simulation.
pub type AttemptId = usize;

/// Events flowing through the engine.
#[derive(Clone, Copy, Debug)]
pub enum SimEvent {
    Message(Message),
    StartAttempt { attempt: AttemptId },
    PhaseDeadline { attempt: AttemptId, phase: u8 },
}

impl Describe for SimEvent {
    fn describe(&self) -> String {
        match self {
            SimEvent::Message(m) => {
                let (scope, ballot) = m.scope_ballot();
                let what = match m {
                    Message::Prepare { .. } => "prepare".to_string(),
                    Message::Promise { accepted: Some((b, v)), .. } => {
                        format!("promise carrying {b}:{v}")
                    }
                    Message::Promise { .. } => "promise".to_string(),
                    Message::PrepareNack { promised, .. } => format!("prepare-nack at {promised}"),
                    Message::Accept { value, .. } => format!("accept v={value}"),
                    Message::Accepted { .. } => "accepted".to_string(),
                    Message::AcceptNack { promised, .. } => format!("accept-nack at {promised}"),
                };
                format!("{} {what} b={ballot}", scope.tag())
            }
            SimEvent::StartAttempt { attempt } => format!("start attempt {attempt}"),
            SimEvent::PhaseDeadline { attempt, phase } => {
                format!("attempt {attempt} phase-{phase} deadline")
            }
        }
    }
}

/// Everything needed to run one attempt.
#[derive(Clone, Copy, Debug)]
pub struct AttemptSpec {
    pub scope: Scope,
    pub proposer: NodeId,
    pub q1: QuorumFamily,
    pub q2: QuorumFamily,
    pub value: Value,
    /// Whole-round budget; each phase gets half.
    pub round_budget: f64,
}

/// How an attempt ended.
#[derive(Clone, Copy, PartialEq, Debug)]
pub enum AttemptResult {
    Committed { value: Value, latency: f64 },
    /// The numbered phase missed its deadline.
    TimedOut(u8),
    /// Never launched: the proposer was already down.
    NoQuorumPossible,
}

impl AttemptResult {
    pub fn committed(&self) -> bool {
        matches!(self, AttemptResult::Committed { .. })
    }
}

/// Post-run view of one attempt.
#[derive(Clone, Copy, Debug)]
pub struct AttemptOutcome {
    pub scope: Scope,
    pub proposer: NodeId,
    pub started_at: SimTime,
    /// `None` when the simulation horizon cut the attempt off unresolved.
    pub result: Option<AttemptResult>,
    /// When the attempt finished gathering promises and began Phase 2.
    pub phase2_entered_at: Option<SimTime>,
    /// The value it pushed in Phase 2 (its own, or one adopted from a
    /// promise).
    pub proposal: Option<Value>,
}

impl AttemptOutcome {
    pub fn committed(&self) -> bool {
        self.result.is_some_and(|r| r.committed())
    }

    /// Commit latency, present only when the attempt committed.
    pub fn latency(&self) -> Option<f64> {
        match self.result {
            Some(AttemptResult::Committed { latency, .. }) => Some(latency),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Debug)]
enum Phase {
    Pending,
    Gathering,
    Accepting,
    Resolved,
}

#[derive(Clone, Debug)]
struct Attempt {
    spec: AttemptSpec,
    ballot: Ballot,
    started_at: SimTime,
    phase: Phase,
    promises: NodeSet,
    highest_accepted: Option<(Ballot, Value)>,
    accepts: NodeSet,
    proposal: Option<Value>,
    phase2_entered_at: Option<SimTime>,
    result: Option<AttemptResult>,
}

/// A full protocol simulation: engine, per-scope acceptor states, and the
/// attempt book.
pub struct Simulation {
    engine: Engine<SimEvent>,
    acceptors: BTreeMap<(Scope, NodeId), AcceptorState>,
    attempts: Vec<Attempt>,
    by_ballot: BTreeMap<(Scope, Ballot), AttemptId>,
    next_round: BTreeMap<(Scope, NodeId), u64>,
    commits: Vec<(Scope, Value, SimTime)>,
}

impl Simulation {
    pub fn new(topology: Topology, rng: RandomStream) -> Simulation {
        Simulation {
            engine: Engine::new(topology, rng),
            acceptors: BTreeMap::new(),
            attempts: Vec::new(),
            by_ballot: BTreeMap::new(),
            next_round: BTreeMap::new(),
            commits: Vec::new(),
        }
    }

    pub fn now(&self) -> SimTime {
        self.engine.now()
    }

    pub fn topology(&self) -> &Topology {
        self.engine.topology()
    }

    pub fn enable_trace(&mut self) {
        self.engine.enable_trace();
    }

    pub fn trace(&self) -> &Trace {
        self.engine.trace()
    }

    /// All committed (scope, value, time) triples, in commit order.
    pub fn commits(&self) -> &[(Scope, Value, SimTime)] {
        &self.commits
    }

    pub fn outcome(&self, id: AttemptId) -> AttemptOutcome {
        let a = &self.attempts[id];
        AttemptOutcome {
            scope: a.spec.scope,
            proposer: a.spec.proposer,
            started_at: a.started_at,
            result: a.result,
            phase2_entered_at: a.phase2_entered_at,
            proposal: a.proposal,
        }
    }

    pub fn outcomes(&self) -> Vec<AttemptOutcome> {
        (0..self.attempts.len()).map(|i| self.outcome(i)).collect()
    }

    /// Register an attempt to launch at `at`. Ballot rounds increase per
    /// (scope, proposer), so a proposer's later attempts always outrank
    /// its earlier ones.
    pub fn schedule_attempt(&mut self, at: SimTime, spec: AttemptSpec) -> AttemptId {
        let round = self
            .next_round
            .entry((spec.scope, spec.proposer))
            .or_insert(1);
        let ballot = Ballot {
            round: *round,
            proposer: spec.proposer,
        };
        *round += 1;
        let id = self.attempts.len();
        self.attempts.push(Attempt {
            spec,
            ballot,
            started_at: at,
            phase: Phase::Pending,
            promises: NodeSet::EMPTY,
            highest_accepted: None,
            accepts: NodeSet::EMPTY,
            proposal: None,
            phase2_entered_at: None,
            result: None,
        });
        self.by_ballot.insert((spec.scope, ballot), id);
        self.engine.schedule(at, SimEvent::StartAttempt { attempt: id });
        id
    }

    /// Drain events up to `until`, then return the trace.
    pub fn run(&mut self, until: SimTime) -> &Trace {
        while let Some(ev) = self.engine.pop(until) {
            match ev.payload {
                SimEvent::StartAttempt { attempt } => self.start_attempt(attempt),
                SimEvent::PhaseDeadline { attempt, phase } => self.deadline(attempt, phase),
                SimEvent::Message(m) => {
                    let (from, to) = ev.transport.expect("messages always travel");
                    self.on_message(from, to, m);
                }
            }
        }
        self.engine.trace()
    }

    fn start_attempt(&mut self, id: AttemptId) {
        let now = self.engine.now();
        let a = &mut self.attempts[id];
        debug_assert_eq!(a.phase, Phase::Pending);
        a.started_at = now;
        if self.engine.topology().is_crashed(a.spec.proposer, now) {
            a.phase = Phase::Resolved;
            a.result = Some(AttemptResult::NoQuorumPossible);
            return;
        }
        a.phase = Phase::Gathering;
        let (proposer, scope, ballot, budget) = (a.spec.proposer, a.spec.scope, a.ballot, a.spec.round_budget);
        let targets: Vec<NodeId> = a.spec.q1.universe().iter().collect();
        for node in targets {
            self.engine
                .send(proposer, node, SimEvent::Message(Message::Prepare { scope, ballot }));
        }
        self.engine
            .schedule(now + budget / 2.0, SimEvent::PhaseDeadline { attempt: id, phase: 1 });
        self.engine
            .schedule(now + budget, SimEvent::PhaseDeadline { attempt: id, phase: 2 });
    }

    fn deadline(&mut self, id: AttemptId, phase: u8) {
        let a = &mut self.attempts[id];
        let timed_out = match (phase, a.phase) {
            (1, Phase::Gathering) => true,
            (2, Phase::Gathering) | (2, Phase::Accepting) => true,
            _ => false,
        };
        if timed_out {
            let stuck = if a.phase == Phase::Gathering { 1 } else { 2 };
            a.phase = Phase::Resolved;
            a.result = Some(AttemptResult::TimedOut(stuck));
        }
    }

    fn on_message(&mut self, from: NodeId, to: NodeId, m: Message) {
        match m {
            Message::Prepare { scope, ballot } => {
                let state = self.acceptors.entry((scope, to)).or_default();
                let reply = match state.on_prepare(ballot) {
                    PrepareReply::Promise { accepted } => Message::Promise { scope, ballot, accepted },
                    PrepareReply::Nack { promised } => Message::PrepareNack { scope, ballot, promised },
                };
                self.engine.send(to, ballot.proposer, SimEvent::Message(reply));
            }
            Message::Accept { scope, ballot, value } => {
                let state = self.acceptors.entry((scope, to)).or_default();
                let reply = match state.on_accept(ballot, value) {
                    AcceptReply::Accepted => Message::Accepted { scope, ballot },
                    AcceptReply::Nack { promised } => Message::AcceptNack { scope, ballot, promised },
                };
                self.engine.send(to, ballot.proposer, SimEvent::Message(reply));
            }
            Message::Promise { scope, ballot, accepted } => {
                let Some(&id) = self.by_ballot.get(&(scope, ballot)) else {
                    return;
                };
                let now = self.engine.now();
                let a = &mut self.attempts[id];
                if a.phase != Phase::Gathering {
                    return;
                }
                a.promises.insert(from);
                if let Some((b, v)) = accepted {
                    if a.highest_accepted.map_or(true, |(hb, _)| b > hb) {
                        a.highest_accepted = Some((b, v));
                    }
                }
                if a.spec.q1.is_member(a.promises) {
                    a.phase = Phase::Accepting;
                    a.phase2_entered_at = Some(now);
                    let value = a.highest_accepted.map(|(_, v)| v).unwrap_or(a.spec.value);
                    a.proposal = Some(value);
                    let (proposer, targets): (NodeId, Vec<NodeId>) =
                        (a.spec.proposer, a.spec.q2.universe().iter().collect());
                    for node in targets {
                        self.engine.send(
                            proposer,
                            node,
                            SimEvent::Message(Message::Accept { scope, ballot, value }),
                        );
                    }
                }
            }
            Message::Accepted { scope, ballot } => {
                let Some(&id) = self.by_ballot.get(&(scope, ballot)) else {
                    return;
                };
                let now = self.engine.now();
                let a = &mut self.attempts[id];
                if a.phase != Phase::Accepting {
                    return;
                }
                a.accepts.insert(from);
                if a.spec.q2.is_member(a.accepts) {
                    a.phase = Phase::Resolved;
                    let value = a.proposal.expect("proposal fixed on entering phase 2");
                    a.result = Some(AttemptResult::Committed {
                        value,
                        latency: now - a.started_at,
                    });
                    self.commits.push((scope, value, now));
                }
            }
            // Nacks carry no obligation here: contention resolves through
            // the next scheduled ballot, and hopeless attempts hit their
            // phase deadline.
            Message::PrepareNack { .. } | Message::AcceptNack { .. } => {}
        }
    }
}

/// Run one attempt to resolution (or the heat-death horizon) and return
/// its result.
pub fn propose(
    sim: &mut Simulation,
    proposer: NodeId,
    q1: QuorumFamily,
    q2: QuorumFamily,
    value: Value,
    round_budget: f64,
) -> AttemptResult {
    let start = sim.now();
    let id = sim.schedule_attempt(
        start,
        AttemptSpec {
            scope: Scope::Global,
            proposer,
            q1,
            q2,
            value,
            round_budget,
        },
    );
    // The phase-2 deadline at start + budget resolves the attempt if
    // nothing else did, so this horizon always suffices.
    sim.run(start + round_budget);
    sim.attempts[id].result.expect("deadline resolves the attempt")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quorum::{local_families, phase2, wall_phase1, LocalScope};
    use crate::topology::{build_topology, Coverage, Tier};

    fn b(round: u64, node: NodeId) -> Ballot {
        Ballot { round, proposer: node }
    }

    fn earth(o: u8) -> NodeId {
        NodeId::new(Tier::Earth, o)
    }

    #[test]
    fn acceptor_promises_fresh_ballots_and_reports_prior_accepts() {
        let mut s = AcceptorState::default();
        assert_eq!(s.on_prepare(b(1, earth(0))), PrepareReply::Promise { accepted: None });
        // Same ballot again is not strictly higher.
        assert_eq!(
            s.on_prepare(b(1, earth(0))),
            PrepareReply::Nack { promised: b(1, earth(0)) }
        );
        assert_eq!(s.on_accept(b(1, earth(0)), 77), AcceptReply::Accepted);
        // A later prepare learns the accepted pair.
        assert_eq!(
            s.on_prepare(b(2, earth(1))),
            PrepareReply::Promise { accepted: Some((b(1, earth(0)), 77)) }
        );
    }

    #[test]
    fn ballot_order_breaks_round_ties_by_proposer() {
        let mars = NodeId::new(Tier::Mars, 0);
        let mut s = AcceptorState::default();
        // (2, e1) outranks (1, m1) by round...
        assert!(matches!(s.on_prepare(b(2, earth(0))), PrepareReply::Promise { .. }));
        assert_eq!(
            s.on_prepare(b(1, mars)),
            PrepareReply::Nack { promised: b(2, earth(0)) }
        );
        // ...and within a round, the earlier node id loses to the later.
        assert!(b(1, earth(0)) < b(1, mars));
    }

    #[test]
    fn accept_without_prior_prepare_succeeds_and_blocks_lower_accepts() {
        let mut s = AcceptorState::default();
        assert_eq!(s.on_accept(b(3, earth(2)), 9), AcceptReply::Accepted);
        assert_eq!(s.promised, Some(b(3, earth(2))));
        assert_eq!(
            s.on_accept(b(2, earth(1)), 8),
            AcceptReply::Nack { promised: b(3, earth(2)) }
        );
        // Equal ballot re-accept is allowed (idempotent retransmit).
        assert_eq!(s.on_accept(b(3, earth(2)), 9), AcceptReply::Accepted);
    }

    fn quiet_sim() -> Simulation {
        let mut t = build_topology(Coverage::Full, 186.0);
        t.set_uniform_jitter(0.0);
        Simulation::new(t, RandomStream::from_seed(11))
    }

    #[test]
    fn earth_proposer_commits_within_the_mesh_latency_envelope() {
        let mut sim = quiet_sim();
        let proposer = sim.topology().proposer_site();
        let q1 = wall_phase1(Tier::Earth, 5).unwrap();
        let q2 = phase2(5).unwrap();
        match propose(&mut sim, proposer, q1, q2, 42, 500.0) {
            AttemptResult::Committed { value, latency } => {
                assert_eq!(value, 42);
                // Two mesh round-trips plus processing, no jitter.
                assert!((0.15..0.30).contains(&latency), "latency {latency}");
            }
            other => panic!("expected commit, got {other:?}"),
        }
        assert_eq!(sim.commits().len(), 1);
    }

    #[test]
    fn moon_proposer_commits_after_two_moon_round_trips() {
        let mut sim = quiet_sim();
        let proposer = sim.topology().proposer_for(Tier::Moon);
        let q1 = wall_phase1(Tier::Moon, 5).unwrap();
        let q2 = phase2(5).unwrap();
        match propose(&mut sim, proposer, q1, q2, 7, 500.0) {
            AttemptResult::Committed { latency, .. } => {
                assert!((5.1..5.2).contains(&latency), "latency {latency}");
            }
            other => panic!("expected commit, got {other:?}"),
        }
    }

    #[test]
    fn mars_proposer_times_out_in_phase_one_under_the_default_budget() {
        let mut sim = quiet_sim();
        let proposer = sim.topology().proposer_for(Tier::Mars);
        let q1 = wall_phase1(Tier::Mars, 5).unwrap();
        let q2 = phase2(5).unwrap();
        // 186 s each way can't fit a 250 s phase deadline.
        assert_eq!(
            propose(&mut sim, proposer, q1, q2, 7, 500.0),
            AttemptResult::TimedOut(1)
        );
        assert!(sim.commits().is_empty());
    }

    #[test]
    fn local_families_commit_within_their_scopes() {
        for (scope, family_scope, proposer_tier) in [
            (Scope::EarthLocal, LocalScope::EarthStd, Tier::Earth),
            (Scope::EarthLocal, LocalScope::EarthMaj, Tier::Earth),
            (Scope::MarsLocal, LocalScope::MarsLocal, Tier::Mars),
        ] {
            let mut sim = quiet_sim();
            let (q1, q2) = local_families(family_scope);
            let proposer = sim.topology().proposer_for(proposer_tier);
            let id = sim.schedule_attempt(
                0.0,
                AttemptSpec { scope, proposer, q1, q2, value: 5, round_budget: 1.0 },
            );
            sim.run(10.0);
            let out = sim.outcome(id);
            assert!(
                matches!(out.result, Some(AttemptResult::Committed { .. })),
                "{family_scope:?}: {out:?}"
            );
        }
    }

    #[test]
    fn later_ballot_adopts_previously_committed_value() {
        let mut sim = quiet_sim();
        let q1 = wall_phase1(Tier::Earth, 5).unwrap();
        let q2 = phase2(5).unwrap();
        let proposer = sim.topology().proposer_site();
        let first = sim.schedule_attempt(
            0.0,
            AttemptSpec { scope: Scope::Global, proposer, q1, q2, value: 111, round_budget: 500.0 },
        );
        let second = sim.schedule_attempt(
            10.0,
            AttemptSpec { scope: Scope::Global, proposer, q1, q2, value: 222, round_budget: 500.0 },
        );
        sim.run(600.0);
        let (a, b) = (sim.outcome(first), sim.outcome(second));
        assert!(matches!(a.result, Some(AttemptResult::Committed { value: 111, .. })));
        // The second attempt must re-commit 111, not its own 222.
        assert!(matches!(b.result, Some(AttemptResult::Committed { value: 111, .. })), "{b:?}");
        assert!(sim.commits().iter().all(|&(_, v, _)| v == 111));
    }

    #[test]
    fn crashed_proposer_reports_no_quorum_possible() {
        let mut t = build_topology(Coverage::Full, 186.0);
        t.set_uniform_jitter(0.0);
        t.crash_first(1, 0.0); // SA-East down from the start
        let crashed = t.node_by_label("SA-East").unwrap();
        let mut sim = Simulation::new(t, RandomStream::from_seed(2));
        let q1 = wall_phase1(Tier::Earth, 3).unwrap();
        let q2 = phase2(3).unwrap();
        let id = sim.schedule_attempt(
            1.0,
            AttemptSpec {
                scope: Scope::Global,
                proposer: crashed,
                q1,
                q2,
                value: 1,
                round_budget: 500.0,
            },
        );
        sim.run(1000.0);
        assert_eq!(sim.outcome(id).result, Some(AttemptResult::NoQuorumPossible));
    }

    #[test]
    fn strict_quorum_fails_phase_two_when_an_earth_node_is_down() {
        let mut t = build_topology(Coverage::Full, 186.0);
        t.set_uniform_jitter(0.0);
        t.crash_first(1, 0.0);
        let mut sim = Simulation::new(t, RandomStream::from_seed(2));
        let proposer = sim.topology().proposer_site();
        let q1 = wall_phase1(Tier::Earth, 5).unwrap();
        let q2 = phase2(5).unwrap();
        // Phase 1 needs just one Earth promise, so it proceeds; Phase 2
        // needs all five and stalls.
        assert_eq!(
            propose(&mut sim, proposer, q1, q2, 3, 500.0),
            AttemptResult::TimedOut(2)
        );
    }
}
