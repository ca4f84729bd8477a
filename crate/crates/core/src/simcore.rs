//! Deterministic discrete-event engine.
//!
//! Time is `f64` seconds. Events are delivered in (time, insertion order)
//! — ties break FIFO — so a run is a pure function of topology, seed, and
//! the schedule. Message transport samples link delay at send time, but
//! delivery re-checks the link and the receiver: a message in flight when
//! its link is severed, or addressed to a node that has crashed by
//! arrival, is dropped.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::topology::{NodeId, Topology};

/// Simulation clock value, in seconds.
pub type SimTime = f64;

/// Seedable random stream; every draw is reproducible from the seed.
#[derive(Clone, Debug)]
pub struct RandomStream {
    rng: ChaCha8Rng,
}

impl RandomStream {
    pub fn from_seed(seed: u64) -> RandomStream {
        RandomStream {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Derive an independent stream for one (scenario, seed) cell by
    /// hashing the scenario id and seed together (FNV-1a over the id
    /// bytes, then the little-endian seed bytes), so neighbouring seeds
    /// and neighbouring scenarios decorrelate.
    pub fn for_scenario(scenario_id: &str, seed: u64) -> RandomStream {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for &b in scenario_id.as_bytes().iter().chain(seed.to_le_bytes().iter()) {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        RandomStream::from_seed(h)
    }

    /// Uniform draw from [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Symmetric multiplicative jitter in [-fraction, +fraction].
    /// A zero fraction returns exactly zero (no RNG advance asymmetry:
    /// the draw still happens, keeping streams aligned across configs).
    pub fn jitter(&mut self, fraction: f64) -> f64 {
        (2.0 * self.uniform() - 1.0) * fraction
    }
}

/// Payloads carried by engine events; `describe` feeds the trace.
pub trait Describe {
    fn describe(&self) -> String;
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum TraceKind {
    Send,
    Deliver,
    Drop,
    Note,
}

/// One trace line: what happened, when, and between whom.
#[derive(Clone, Debug)]
pub struct TraceRecord {
    pub time: SimTime,
    pub kind: TraceKind,
    pub from: Option<NodeId>,
    pub to: Option<NodeId>,
    pub detail: String,
}

impl TraceRecord {
    pub fn to_line(&self) -> String {
        let kind = match self.kind {
            TraceKind::Send => "send",
            TraceKind::Deliver => "deliver",
            TraceKind::Drop => "drop",
            TraceKind::Note => "note",
        };
        let route = match (self.from, self.to) {
            (Some(f), Some(t)) => format!(" {}->{}", f.code(), t.code()),
            (None, Some(t)) => format!(" ->{}", t.code()),
            _ => String::new(),
        };
        format!("{:10.3} {kind:7}{route} {}", self.time, self.detail)
    }
}

/// Event trace, recorded only when enabled.
#[derive(Clone, Debug, Default)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
    enabled: bool,
}

impl Trace {
    pub fn lines(&self) -> Vec<String> {
        self.records.iter().map(TraceRecord::to_line).collect()
    }

    fn push(&mut self, rec: TraceRecord) {
        if self.enabled {
            self.records.push(rec);
        }
    }
}

/// A queued occurrence: a timer (no transport) or an in-flight message.
#[derive(Clone, Debug)]
struct Queued<P> {
    at: SimTime,
    seq: u64,
    /// (from, to) for messages; `None` for timers and self-delivery keeps
    /// the pair for tracing but skips link checks when from == to.
    transport: Option<(NodeId, NodeId)>,
    payload: P,
}

impl<P> PartialEq for Queued<P> {
    fn eq(&self, other: &Self) -> bool {
        self.seq == other.seq
    }
}
impl<P> Eq for Queued<P> {}

impl<P> Ord for Queued<P> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.at
            .total_cmp(&other.at)
            .then_with(|| self.seq.cmp(&other.seq))
    }
}

impl<P> PartialOrd for Queued<P> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// An event popped from the queue, ready for the caller to act on.
#[derive(Clone, Debug)]
pub struct Event<P> {
    pub at: SimTime,
    /// (from, to) when the event was a delivered message.
    pub transport: Option<(NodeId, NodeId)>,
    pub payload: P,
}

/// The event loop: a clock, a priority queue, the topology, and one
/// random stream.
pub struct Engine<P> {
    topology: Topology,
    rng: RandomStream,
    clock: SimTime,
    next_seq: u64,
    queue: BinaryHeap<Reverse<Queued<P>>>,
    trace: Trace,
}

impl<P: Describe> Engine<P> {
    pub fn new(topology: Topology, rng: RandomStream) -> Engine<P> {
        Engine {
            topology,
            rng,
            clock: 0.0,
            next_seq: 0,
            queue: BinaryHeap::new(),
            trace: Trace::default(),
        }
    }

    pub fn now(&self) -> SimTime {
        self.clock
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn enable_trace(&mut self) {
        self.trace.enabled = true;
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    /// Record a free-form trace note at the current clock.
    pub fn note(&mut self, detail: impl Into<String>) {
        self.trace.push(TraceRecord {
            time: self.clock,
            kind: TraceKind::Note,
            from: None,
            to: None,
            detail: detail.into(),
        });
    }

    /// Queue a timer at absolute time `at` (never before the clock).
    pub fn schedule(&mut self, at: SimTime, payload: P) {
        assert!(
            at >= self.clock,
            "scheduled at {at} before current clock {}",
            self.clock
        );
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Reverse(Queued {
            at,
            seq,
            transport: None,
            payload,
        }));
    }

    /// Send a message. Self-sends arrive after the processing delay;
    /// remote sends sample the link delay (with jitter) plus processing,
    /// or are dropped immediately when the link is down.
    pub fn send(&mut self, from: NodeId, to: NodeId, payload: P) {
        let detail = payload.describe();
        if from == to {
            let at = self.clock + self.topology.processing_delay();
            self.trace.push(TraceRecord {
                time: self.clock,
                kind: TraceKind::Send,
                from: Some(from),
                to: Some(to),
                detail: detail.clone(),
            });
            let seq = self.next_seq;
            self.next_seq += 1;
            self.queue.push(Reverse(Queued {
                at,
                seq,
                transport: Some((from, to)),
                payload,
            }));
            return;
        }
        match self.topology.sample_delay(self.clock, from, to, &mut self.rng) {
            Some(delay) => {
                self.trace.push(TraceRecord {
                    time: self.clock,
                    kind: TraceKind::Send,
                    from: Some(from),
                    to: Some(to),
                    detail: detail.clone(),
                });
                let at = self.clock + delay + self.topology.processing_delay();
                let seq = self.next_seq;
                self.next_seq += 1;
                self.queue.push(Reverse(Queued {
                    at,
                    seq,
                    transport: Some((from, to)),
                    payload,
                }));
            }
            None => {
                self.trace.push(TraceRecord {
                    time: self.clock,
                    kind: TraceKind::Drop,
                    from: Some(from),
                    to: Some(to),
                    detail: format!("at send: {detail}"),
                });
            }
        }
    }

    /// Pop the next event at or before `until`, advancing the clock.
    /// Messages whose link died or whose receiver crashed while they were
    /// in flight are dropped here, at delivery time.
    pub fn pop(&mut self, until: SimTime) -> Option<Event<P>> {
        loop {
            let head_at = self.queue.peek()?.0.at;
            if head_at > until {
                return None;
            }
            let Reverse(q) = self.queue.pop().expect("peeked head exists");
            self.clock = q.at;
            if let Some((from, to)) = q.transport {
                let severed = from != to && !self.topology.link_active(q.at, from, to);
                let dead = self.topology.is_crashed(to, q.at);
                if severed || dead {
                    let why = if dead { "receiver down" } else { "link severed" };
                    self.trace.push(TraceRecord {
                        time: q.at,
                        kind: TraceKind::Drop,
                        from: Some(from),
                        to: Some(to),
                        detail: format!("at delivery ({why}): {}", q.payload.describe()),
                    });
                    continue;
                }
                self.trace.push(TraceRecord {
                    time: q.at,
                    kind: TraceKind::Deliver,
                    from: Some(from),
                    to: Some(to),
                    detail: q.payload.describe(),
                });
            }
            return Some(Event {
                at: q.at,
                transport: q.transport,
                payload: q.payload,
            });
        }
    }
}
