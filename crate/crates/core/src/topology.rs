//! The 5/1/1/3 network substrate: five Earth ground stations, one LEO
//! relay, one lunar station, and three Mars surface nodes.
//!
//! Link state is a pure function of simulation time — blackout windows and
//! crash times are data inside [`Topology`] — so "is this link up at t?"
//! needs no event history. That is what keeps the wall reader in
//! [`crate::quorum`] an O(tiers) check rather than a probe.

use std::collections::BTreeMap;
use std::fmt;

use crate::config::{self, ConfigError};
use crate::simcore::RandomStream;

/// Latency tier, ordered fastest (Earth) to slowest (Mars).
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub enum Tier {
    Earth = 0,
    Leo = 1,
    Moon = 2,
    Mars = 3,
}

pub const TIER_COUNT: usize = 4;

/// Nodes per tier in the evaluated universe: 5 Earth, 1 LEO, 1 Moon, 3 Mars.
pub const TIER_SIZES: [usize; TIER_COUNT] = [5, 1, 1, 3];

/// Total acceptor count (10).
pub const NODE_COUNT: usize = 10;

/// First dense node index of each tier (Earth 0, LEO 5, Moon 6, Mars 7).
const TIER_OFFSETS: [usize; TIER_COUNT] = [0, 5, 6, 7];

impl Tier {
    pub const ALL: [Tier; TIER_COUNT] = [Tier::Earth, Tier::Leo, Tier::Moon, Tier::Mars];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn size(self) -> usize {
        TIER_SIZES[self.index()]
    }

    pub fn name(self) -> &'static str {
        match self {
            Tier::Earth => "earth",
            Tier::Leo => "leo",
            Tier::Moon => "moon",
            Tier::Mars => "mars",
        }
    }

    pub fn from_name(s: &str) -> Option<Tier> {
        Tier::ALL.into_iter().find(|t| t.name() == s)
    }

    fn from_index(i: usize) -> Tier {
        Tier::ALL[i]
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One acceptor: a tier plus a 0-based ordinal within the tier.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct NodeId {
    pub tier: Tier,
    pub ordinal: u8,
}

impl NodeId {
    pub fn new(tier: Tier, ordinal: u8) -> NodeId {
        assert!(
            (ordinal as usize) < tier.size(),
            "ordinal {ordinal} out of range for tier {tier}"
        );
        NodeId { tier, ordinal }
    }

    /// Dense index over the whole universe: Earth 0-4, LEO 5, Moon 6, Mars 7-9.
    pub fn bit(self) -> usize {
        TIER_OFFSETS[self.tier.index()] + self.ordinal as usize
    }

    pub fn from_bit(bit: usize) -> NodeId {
        assert!(bit < NODE_COUNT, "node index {bit} out of range");
        let tier_idx = match bit {
            0..=4 => 0,
            5 => 1,
            6 => 2,
            _ => 3,
        };
        NodeId {
            tier: Tier::from_index(tier_idx),
            ordinal: (bit - TIER_OFFSETS[tier_idx]) as u8,
        }
    }

    /// Short code for traces and set displays: e1..e5, l1, u1, m1..m3.
    pub fn code(self) -> String {
        let prefix = match self.tier {
            Tier::Earth => "e",
            Tier::Leo => "l",
            Tier::Moon => "u",
            Tier::Mars => "m",
        };
        format!("{}{}", prefix, self.ordinal + 1)
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.code())
    }
}

/// All ten nodes in dense-index order.
pub fn all_nodes() -> impl Iterator<Item = NodeId> {
    (0..NODE_COUNT).map(NodeId::from_bit)
}

/// A symmetric point-to-point link. Delay is one-way seconds; jitter is a
/// multiplicative fraction (0.10 means each sample lands in ±10%).
#[derive(Clone, Copy, Debug)]
pub struct LinkSpec {
    pub one_way_delay: f64,
    pub jitter_fraction: f64,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Coverage {
    Sparse,
    Full,
}

impl Coverage {
    pub fn name(self) -> &'static str {
        match self {
            Coverage::Sparse => "sparse",
            Coverage::Full => "full",
        }
    }

    pub fn from_name(s: &str) -> Option<Coverage> {
        match s {
            "sparse" => Some(Coverage::Sparse),
            "full" => Some(Coverage::Full),
            _ => None,
        }
    }
}

impl fmt::Display for Coverage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How a blackout window treats links between the severed tier and the rest
/// of the system: `Hard` removes them outright; `Repeater` keeps only the
/// links to the designated relay stations, at a multiplied delay.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum BlackoutModel {
    Hard,
    Repeater,
}

impl BlackoutModel {
    pub fn name(self) -> &'static str {
        match self {
            BlackoutModel::Hard => "hard",
            BlackoutModel::Repeater => "repeater",
        }
    }

    pub fn from_name(s: &str) -> Option<BlackoutModel> {
        match s {
            "hard" => Some(BlackoutModel::Hard),
            "repeater" => Some(BlackoutModel::Repeater),
            _ => None,
        }
    }
}

/// A scheduled disconnection of one tier over the half-open interval
/// [start, start + duration).
#[derive(Clone, Copy, Debug)]
pub struct BlackoutWindow {
    pub start: f64,
    pub duration: f64,
    pub model: BlackoutModel,
    pub severed_tier: Tier,
}

impl BlackoutWindow {
    pub fn end(&self) -> f64 {
        self.start + self.duration
    }

    pub fn covers(&self, time: f64) -> bool {
        time >= self.start && time < self.end()
    }

    /// True if this window (when active) affects the link a-b: exactly one
    /// endpoint sits in the severed tier. Intra-tier links stay up.
    fn severs(&self, a: NodeId, b: NodeId) -> bool {
        (a.tier == self.severed_tier) != (b.tier == self.severed_tier)
    }
}

/// The full network state: nodes, links, coverage variant, blackout
/// windows, and crash schedule. Immutable once a scenario starts; the
/// setter methods exist for scenario setup only.
#[derive(Clone, Debug)]
pub struct Topology {
    labels: Vec<String>, // indexed by NodeId::bit()
    links: BTreeMap<(usize, usize), LinkSpec>, // key: (min bit, max bit)
    coverage: Coverage,
    mars_one_way: f64,
    processing_delay: f64,
    repeater_delay_factor: f64,
    repeater_stations: Vec<NodeId>,
    proposer_site: NodeId,
    crash_order: Vec<NodeId>,
    blackouts: Vec<BlackoutWindow>,
    crashed: BTreeMap<NodeId, f64>,
}

const FULL_CFG: &str = include_str!("../../../topologies/5113_full.cfg");
const SPARSE_CFG: &str = include_str!("../../../topologies/5113_sparse.cfg");

/// Mars one-way delay band covered by the shipped experiments (seconds).
/// Values outside it build fine but are flagged by the CLI.
pub const MARS_DELAY_BAND: (f64, f64) = (186.0, 1342.0);

/// Build the 5/1/1/3 topology from the embedded config for `coverage`,
/// with every `mars`-delay link resolved to `mars_one_way` seconds.
pub fn build_topology(coverage: Coverage, mars_one_way: f64) -> Topology {
    let text = match coverage {
        Coverage::Full => FULL_CFG,
        Coverage::Sparse => SPARSE_CFG,
    };
    let t = config::parse_topology(text, Some(mars_one_way))
        .expect("embedded topology config is valid");
    assert_eq!(t.coverage(), coverage);
    t
}

impl Topology {
    /// Parse a topology from config text. `mars_override`, when given,
    /// replaces the file's `mars_one_way_s` value.
    pub fn from_config_str(text: &str, mars_override: Option<f64>) -> Result<Topology, ConfigError> {
        config::parse_topology(text, mars_override)
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_parts(
        labels: Vec<String>,
        links: BTreeMap<(usize, usize), LinkSpec>,
        coverage: Coverage,
        mars_one_way: f64,
        processing_delay: f64,
        repeater_delay_factor: f64,
        repeater_stations: Vec<NodeId>,
        proposer_site: NodeId,
        crash_order: Vec<NodeId>,
        blackouts: Vec<BlackoutWindow>,
        crashed: BTreeMap<NodeId, f64>,
    ) -> Topology {
        assert_eq!(labels.len(), NODE_COUNT);
        Topology {
            labels,
            links,
            coverage,
            mars_one_way,
            processing_delay,
            repeater_delay_factor,
            repeater_stations,
            proposer_site,
            crash_order,
            blackouts,
            crashed,
        }
    }

    pub fn coverage(&self) -> Coverage {
        self.coverage
    }

    pub fn mars_one_way(&self) -> f64 {
        self.mars_one_way
    }

    /// Per-message processing delay applied at the receiver (seconds).
    pub fn processing_delay(&self) -> f64 {
        self.processing_delay
    }

    pub fn label(&self, n: NodeId) -> &str {
        &self.labels[n.bit()]
    }

    pub fn node_by_label(&self, label: &str) -> Option<NodeId> {
        self.labels
            .iter()
            .position(|l| l == label)
            .map(NodeId::from_bit)
    }

    /// The Earth station that hosts the Earth-tier proposer.
    pub fn proposer_site(&self) -> NodeId {
        self.proposer_site
    }

    /// Designated proposer for a tier: the configured Earth site for Earth,
    /// the first node otherwise.
    pub fn proposer_for(&self, tier: Tier) -> NodeId {
        match tier {
            Tier::Earth => self.proposer_site,
            _ => NodeId::new(tier, 0),
        }
    }

    /// Crash order used when a scenario asks for "the first n crashes".
    pub fn crash_order(&self) -> &[NodeId] {
        &self.crash_order
    }

    pub fn tier_nodes(&self, tier: Tier) -> impl Iterator<Item = NodeId> {
        (0..tier.size()).map(move |o| NodeId::new(tier, o as u8))
    }

    pub fn has_link(&self, a: NodeId, b: NodeId) -> bool {
        self.link(a, b).is_some()
    }

    pub fn link(&self, a: NodeId, b: NodeId) -> Option<&LinkSpec> {
        self.links.get(&link_key(a, b))
    }

    /// Number of distinct links (unordered pairs).
    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    /// Degree of `n` counting only links to `tier`.
    pub fn degree_to_tier(&self, n: NodeId, tier: Tier) -> usize {
        self.tier_nodes(tier)
            .filter(|&m| m != n && self.has_link(n, m))
            .count()
    }

    // ---- scenario setup -------------------------------------------------

    pub fn add_blackout(&mut self, w: BlackoutWindow) {
        assert!(w.duration >= 0.0, "blackout duration must be non-negative");
        self.blackouts.push(w);
    }

    pub fn schedule_crash(&mut self, n: NodeId, time: f64) {
        self.crashed.insert(n, time);
    }

    /// Crash the first `n` nodes of the configured crash order at `time`.
    pub fn crash_first(&mut self, n: usize, time: f64) {
        assert!(
            n <= self.crash_order.len(),
            "crash count {n} exceeds configured crash order ({})",
            self.crash_order.len()
        );
        for i in 0..n {
            self.schedule_crash(self.crash_order[i], time);
        }
    }

    /// Set every link's jitter fraction (test helper; 0.0 makes delays exact).
    pub fn set_uniform_jitter(&mut self, fraction: f64) {
        assert!(fraction >= 0.0);
        for l in self.links.values_mut() {
            l.jitter_fraction = fraction;
        }
    }

    // ---- time-dependent state -------------------------------------------

    pub fn is_crashed(&self, n: NodeId, time: f64) -> bool {
        self.crashed.get(&n).is_some_and(|&t| time >= t)
    }

    pub fn blackouts(&self) -> &[BlackoutWindow] {
        &self.blackouts
    }

    /// True iff a direct link exists between `a` and `b`, neither endpoint
    /// has crashed by `time`, and no active blackout severs the pair. Under
    /// the repeater model a severed pair stays active only when the
    /// non-severed endpoint is one of the relay stations.
    pub fn link_active(&self, time: f64, a: NodeId, b: NodeId) -> bool {
        assert!(a != b, "link_active queried on identical endpoints");
        if !self.has_link(a, b) {
            return false;
        }
        if self.is_crashed(a, time) || self.is_crashed(b, time) {
            return false;
        }
        for w in &self.blackouts {
            if w.covers(time) && w.severs(a, b) {
                match w.model {
                    BlackoutModel::Hard => return false,
                    BlackoutModel::Repeater => {
                        let station = if a.tier == w.severed_tier { b } else { a };
                        if !self.repeater_stations.contains(&station) {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }

    /// Base one-way delay and jitter fraction for `a`-`b` at `time`, after
    /// any repeater multiplication. `None` when the link is inactive.
    fn effective_link(&self, time: f64, a: NodeId, b: NodeId) -> Option<(f64, f64)> {
        if !self.link_active(time, a, b) {
            return None;
        }
        let link = self.link(a, b).expect("active link exists");
        let mut delay = link.one_way_delay;
        for w in &self.blackouts {
            if w.covers(time) && w.severs(a, b) && w.model == BlackoutModel::Repeater {
                delay *= self.repeater_delay_factor;
                break;
            }
        }
        Some((delay, link.jitter_fraction))
    }

    /// Draw one jittered one-way delay for `a`-`b` at `time`, or `None`
    /// when the pair is unreachable (caller treats the message as lost).
    pub fn sample_delay(
        &self,
        time: f64,
        a: NodeId,
        b: NodeId,
        rng: &mut RandomStream,
    ) -> Option<f64> {
        let (delay, jitter) = self.effective_link(time, a, b)?;
        Some(delay * (1.0 + rng.jitter(jitter)))
    }

    /// True iff some active link connects a node of `from` to a node of
    /// `to` at `time` (direct links only; there is no multi-hop routing).
    /// Same-tier is always reachable.
    pub fn tier_reachable(&self, time: f64, from: Tier, to: Tier) -> bool {
        if from == to {
            return true;
        }
        self.tier_nodes(from)
            .any(|a| self.tier_nodes(to).any(|b| self.link_active(time, a, b)))
    }
}

fn link_key(a: NodeId, b: NodeId) -> (usize, usize) {
    let (x, y) = (a.bit(), b.bit());
    if x < y {
        (x, y)
    } else {
        (y, x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn n(tier: Tier, ordinal: u8) -> NodeId {
        NodeId::new(tier, ordinal)
    }

    fn mars_window(model: BlackoutModel) -> BlackoutWindow {
        BlackoutWindow {
            start: 600.0,
            duration: 900.0,
            model,
            severed_tier: Tier::Mars,
        }
    }

    #[test]
    fn node_indexing_round_trips() {
        for (i, node) in all_nodes().enumerate() {
            assert_eq!(node.bit(), i);
            assert_eq!(NodeId::from_bit(i), node);
        }
        assert_eq!(all_nodes().count(), NODE_COUNT);
    }

    #[test]
    fn full_coverage_degrees() {
        let t = build_topology(Coverage::Full, 186.0);
        assert_eq!(t.degree_to_tier(n(Tier::Leo, 0), Tier::Earth), 5);
        assert_eq!(t.degree_to_tier(n(Tier::Mars, 0), Tier::Earth), 5);
        assert_eq!(t.degree_to_tier(n(Tier::Moon, 0), Tier::Earth), 5);
        // Earth mesh is complete.
        for a in t.tier_nodes(Tier::Earth) {
            assert_eq!(t.degree_to_tier(a, Tier::Earth), 4);
        }
        // 10 earth + 5 leo + 6 moon + 15 mars-earth + 3 mars-leo + 3 mars-moon + 3 mars mesh
        assert_eq!(t.link_count(), 45);
    }

    #[test]
    fn sparse_coverage_degrees() {
        let t = build_topology(Coverage::Sparse, 186.0);
        assert_eq!(t.degree_to_tier(n(Tier::Leo, 0), Tier::Earth), 3);
        assert_eq!(t.degree_to_tier(n(Tier::Mars, 0), Tier::Earth), 2);
        // Moon keeps all five ground links in both variants.
        assert_eq!(t.degree_to_tier(n(Tier::Moon, 0), Tier::Earth), 5);
    }

    #[test]
    fn sparse_links_are_a_subset_of_full_with_identical_delays() {
        let full = build_topology(Coverage::Full, 186.0);
        let sparse = build_topology(Coverage::Sparse, 186.0);
        let mut shared = 0;
        for a in all_nodes() {
            for b in all_nodes() {
                if a.bit() >= b.bit() {
                    continue;
                }
                if let Some(ls) = sparse.link(a, b) {
                    let lf = full.link(a, b).expect("sparse link missing from full");
                    assert_eq!(ls.one_way_delay, lf.one_way_delay);
                    shared += 1;
                }
            }
        }
        assert!(shared > 0 && shared == sparse.link_count());
    }

    #[test]
    fn mars_delay_applies_to_every_mars_link() {
        let t = build_topology(Coverage::Full, 1342.0);
        for m in t.tier_nodes(Tier::Mars) {
            for e in t.tier_nodes(Tier::Earth) {
                assert_eq!(t.link(m, e).unwrap().one_way_delay, 1342.0);
            }
            assert_eq!(t.link(m, n(Tier::Leo, 0)).unwrap().one_way_delay, 1342.0);
            assert_eq!(t.link(m, n(Tier::Moon, 0)).unwrap().one_way_delay, 1342.0);
        }
        // The Mars surface mesh keeps its local 5 ms delay.
        assert_eq!(
            t.link(n(Tier::Mars, 0), n(Tier::Mars, 1)).unwrap().one_way_delay,
            0.005
        );
    }

    #[test]
    fn hard_blackout_window_is_half_open() {
        let mut t = build_topology(Coverage::Full, 186.0);
        t.add_blackout(mars_window(BlackoutModel::Hard));
        let mars = n(Tier::Mars, 0);
        let earth = t.node_by_label("NA-West").unwrap();
        assert!(t.link_active(599.9, mars, earth));
        assert!(!t.link_active(600.0, mars, earth));
        assert!(!t.link_active(700.0, mars, earth));
        assert!(!t.link_active(1499.9, mars, earth));
        assert!(t.link_active(1500.0, mars, earth));
        // Non-Mars pairs are untouched mid-window.
        assert!(t.link_active(700.0, t.node_by_label("Europe").unwrap(), n(Tier::Moon, 0)));
        // The Mars surface mesh stays up through the window.
        assert!(t.link_active(700.0, mars, n(Tier::Mars, 1)));
    }

    #[test]
    fn repeater_keeps_only_relay_stations_at_tripled_delay() {
        let mut t = build_topology(Coverage::Full, 186.0);
        t.add_blackout(mars_window(BlackoutModel::Repeater));
        let mars = n(Tier::Mars, 0);
        let nawest = t.node_by_label("NA-West").unwrap();
        let asia = t.node_by_label("Asia").unwrap();
        assert!(t.link_active(700.0, mars, nawest));
        assert!(!t.link_active(700.0, mars, asia));
        assert!(!t.link_active(700.0, mars, n(Tier::Moon, 0)));
        let (delay, _) = t.effective_link(700.0, mars, nawest).unwrap();
        assert_eq!(delay, 3.0 * 186.0);
        // Outside the window the direct delay returns.
        let (delay, _) = t.effective_link(100.0, mars, nawest).unwrap();
        assert_eq!(delay, 186.0);
    }

    #[test]
    fn crashes_remove_a_nodes_links_from_crash_time_on() {
        let mut t = build_topology(Coverage::Full, 186.0);
        let saeast = t.node_by_label("SA-East").unwrap();
        let europe = t.node_by_label("Europe").unwrap();
        t.schedule_crash(saeast, 550.0);
        assert!(t.link_active(549.9, saeast, europe));
        assert!(!t.link_active(550.0, saeast, europe));
        assert!(!t.link_active(4000.0, saeast, europe));
        assert!(t.is_crashed(saeast, 550.0));
        assert!(!t.is_crashed(saeast, 549.9));
    }

    #[test]
    fn crash_order_is_saeast_then_africa() {
        let mut t = build_topology(Coverage::Full, 186.0);
        let order: Vec<String> = t.crash_order().iter().map(|&n| t.label(n).to_string()).collect();
        assert_eq!(order, ["SA-East", "Africa"]);
        t.crash_first(2, 550.0);
        assert!(t.is_crashed(t.node_by_label("SA-East").unwrap(), 551.0));
        assert!(t.is_crashed(t.node_by_label("Africa").unwrap(), 551.0));
        assert!(!t.is_crashed(t.node_by_label("Asia").unwrap(), 551.0));
    }

    #[test]
    fn tier_reachability_during_hard_blackout() {
        let mut t = build_topology(Coverage::Full, 186.0);
        t.add_blackout(mars_window(BlackoutModel::Hard));
        assert!(!t.tier_reachable(700.0, Tier::Mars, Tier::Earth));
        assert!(!t.tier_reachable(700.0, Tier::Mars, Tier::Leo));
        assert!(!t.tier_reachable(700.0, Tier::Mars, Tier::Moon));
        assert!(t.tier_reachable(700.0, Tier::Mars, Tier::Mars));
        assert!(t.tier_reachable(700.0, Tier::Moon, Tier::Earth));
        assert!(t.tier_reachable(700.0, Tier::Moon, Tier::Leo));
        assert!(t.tier_reachable(1500.0, Tier::Mars, Tier::Earth));
    }

    #[test]
    fn zero_jitter_sampling_is_exact() {
        let mut t = build_topology(Coverage::Full, 186.0);
        t.set_uniform_jitter(0.0);
        let mut rng = RandomStream::from_seed(7);
        let moon = n(Tier::Moon, 0);
        let earth = t.node_by_label("NA-West").unwrap();
        assert_eq!(t.sample_delay(0.0, moon, earth, &mut rng), Some(1.28));
        let m1 = n(Tier::Mars, 0);
        let m2 = n(Tier::Mars, 1);
        assert_eq!(t.sample_delay(0.0, m1, m2, &mut rng), Some(0.005));
    }

    #[test]
    fn sampling_inactive_link_signals_unreachable() {
        let mut t = build_topology(Coverage::Full, 186.0);
        t.add_blackout(mars_window(BlackoutModel::Hard));
        let mut rng = RandomStream::from_seed(7);
        let mars = n(Tier::Mars, 0);
        let earth = t.node_by_label("NA-West").unwrap();
        assert_eq!(t.sample_delay(700.0, mars, earth, &mut rng), None);
    }

    proptest! {
        #[test]
        fn link_activity_is_symmetric(
            time in 0.0f64..4000.0,
            ai in 0usize..NODE_COUNT,
            bi in 0usize..NODE_COUNT,
            hard in proptest::bool::ANY,
            crashes in 0usize..=2,
        ) {
            prop_assume!(ai != bi);
            let mut t = build_topology(Coverage::Sparse, 186.0);
            let model = if hard { BlackoutModel::Hard } else { BlackoutModel::Repeater };
            t.add_blackout(mars_window(model));
            t.crash_first(crashes, 550.0);
            let a = NodeId::from_bit(ai);
            let b = NodeId::from_bit(bi);
            prop_assert_eq!(t.link_active(time, a, b), t.link_active(time, b, a));
        }

        #[test]
        fn sampled_delays_stay_inside_the_jitter_band(seed in proptest::num::u64::ANY) {
            let t = build_topology(Coverage::Full, 186.0);
            let mut rng = RandomStream::from_seed(seed);
            for a in all_nodes() {
                for b in all_nodes() {
                    if a.bit() >= b.bit() || !t.has_link(a, b) {
                        continue;
                    }
                    let base = t.link(a, b).unwrap().one_way_delay;
                    let d = t.sample_delay(0.0, a, b, &mut rng).unwrap();
                    prop_assert!(d >= base * 0.9 && d <= base * 1.1);
                }
            }
        }
    }
}
