//! Quorum families over the tiered universe, encoded as per-tier minimum
//! counts.
//!
//! One encoding covers every family used here — the tier-anchored Phase-1
//! families, strict and relaxed Phase-2, the flat all-tiers family, and
//! the Earth/Mars local families. A set is a member iff it meets each
//! tier's minimum, so membership is upward-closed, counting factors into
//! a product over tiers, and a family's *minimal* members are exactly the
//! per-tier combinations at the minimum counts. Exhaustive intersection
//! checking therefore reduces to minimal-member pairs: a disjoint member
//! pair strips down to a disjoint minimal pair, and every minimal pair is
//! itself a member pair.

use std::fmt;

use thiserror::Error;

use crate::topology::{all_nodes, NodeId, Tier, Topology, NODE_COUNT, TIER_COUNT, TIER_SIZES};

/// A set of nodes, packed into one bit per dense node index.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Debug)]
pub struct NodeSet(u16);

const UNIVERSE_MASK: u16 = (1 << NODE_COUNT) - 1;

impl NodeSet {
    pub const EMPTY: NodeSet = NodeSet(0);
    /// All ten nodes.
    pub const ALL: NodeSet = NodeSet(UNIVERSE_MASK);

    pub fn single(n: NodeId) -> NodeSet {
        NodeSet(1 << n.bit())
    }

    pub fn from_nodes(nodes: &[NodeId]) -> NodeSet {
        nodes.iter().copied().collect()
    }

    pub fn from_bits(bits: u16) -> NodeSet {
        assert_eq!(bits & !UNIVERSE_MASK, 0, "bits outside the 10-node universe");
        NodeSet(bits)
    }

    pub fn bits(self) -> u16 {
        self.0
    }

    /// The mask selecting every node of one tier.
    pub fn tier_mask(tier: Tier) -> NodeSet {
        let mut bits = 0u16;
        for o in 0..tier.size() {
            bits |= 1 << NodeId::new(tier, o as u8).bit();
        }
        NodeSet(bits)
    }

    pub fn insert(&mut self, n: NodeId) {
        self.0 |= 1 << n.bit();
    }

    pub fn remove(&mut self, n: NodeId) {
        self.0 &= !(1 << n.bit());
    }

    pub fn contains(self, n: NodeId) -> bool {
        self.0 & (1 << n.bit()) != 0
    }

    pub fn len(self) -> u32 {
        self.0.count_ones()
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn union(self, other: NodeSet) -> NodeSet {
        NodeSet(self.0 | other.0)
    }

    pub fn intersect(self, other: NodeSet) -> NodeSet {
        NodeSet(self.0 & other.0)
    }

    pub fn is_subset(self, other: NodeSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn count_in_tier(self, tier: Tier) -> u32 {
        self.intersect(Self::tier_mask(tier)).len()
    }

    pub fn iter(self) -> impl Iterator<Item = NodeId> {
        all_nodes().filter(move |&n| self.contains(n))
    }
}

impl std::ops::BitOr for NodeSet {
    type Output = NodeSet;
    fn bitor(self, rhs: NodeSet) -> NodeSet {
        self.union(rhs)
    }
}

impl std::ops::BitAnd for NodeSet {
    type Output = NodeSet;
    fn bitand(self, rhs: NodeSet) -> NodeSet {
        self.intersect(rhs)
    }
}

impl FromIterator<NodeId> for NodeSet {
    fn from_iter<I: IntoIterator<Item = NodeId>>(iter: I) -> NodeSet {
        let mut s = NodeSet::EMPTY;
        for n in iter {
            s.insert(n);
        }
        s
    }
}

impl fmt::Display for NodeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, n) in self.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", n.code())?;
        }
        write!(f, "}}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FamilyError {
    #[error("k must be within 1..={max}, got {k}")]
    KOutOfRange { k: u32, max: u32 },
    #[error("tier {tier} requires {required} members but its slice of the universe holds {available}")]
    EmptyFamily {
        tier: Tier,
        required: u32,
        available: u32,
    },
}

/// An upward-closed family of acceptor subsets: `q` is a member iff
/// `|q ∩ T_j| ≥ min_per_tier[j]` for every tier `j`, with `q` drawn from
/// `universe`.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct QuorumFamily {
    universe: NodeSet,
    min_per_tier: [u32; TIER_COUNT],
}

impl QuorumFamily {
    /// Build a family, rejecting minimums no subset of the universe can meet.
    pub fn new(universe: NodeSet, min_per_tier: [u32; TIER_COUNT]) -> Result<QuorumFamily, FamilyError> {
        for tier in Tier::ALL {
            let available = universe.count_in_tier(tier);
            let required = min_per_tier[tier.index()];
            if required > available {
                return Err(FamilyError::EmptyFamily {
                    tier,
                    required,
                    available,
                });
            }
        }
        Ok(QuorumFamily {
            universe,
            min_per_tier,
        })
    }

    pub fn universe(&self) -> NodeSet {
        self.universe
    }

    pub fn min_for(&self, tier: Tier) -> u32 {
        self.min_per_tier[tier.index()]
    }

    /// Membership test. `q` must be drawn from this family's universe.
    pub fn is_member(&self, q: NodeSet) -> bool {
        assert!(
            q.is_subset(self.universe),
            "membership query outside the family universe"
        );
        Tier::ALL
            .into_iter()
            .all(|t| q.count_in_tier(t) >= self.min_per_tier[t.index()])
    }

    /// Exact member count via the closed form: a product over tiers of the
    /// number of tier subsets meeting the minimum.
    pub fn count_members(&self) -> u64 {
        Tier::ALL
            .into_iter()
            .map(|t| {
                let size = self.universe.count_in_tier(t) as u64;
                let min = self.min_per_tier[t.index()] as u64;
                (min..=size).map(|c| binomial(size, c)).sum::<u64>()
            })
            .product()
    }

    /// Exact member count by enumerating every subset of the universe.
    /// Exists to cross-check `count_members`; the two must always agree.
    pub fn count_members_bruteforce(&self) -> u64 {
        let u = self.universe.bits();
        // Enumerate submasks of u, including the empty set.
        let mut count = 0;
        let mut sub = u;
        loop {
            if self.is_member(NodeSet(sub)) {
                count += 1;
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & u;
        }
        count
    }

    /// The family's minimal members: every way of picking exactly the
    /// minimum count from each tier's slice of the universe.
    pub fn minimal_members(&self) -> Vec<NodeSet> {
        let mut result = vec![NodeSet::EMPTY];
        for tier in Tier::ALL {
            let bits: Vec<u8> = self
                .universe
                .intersect(NodeSet::tier_mask(tier))
                .iter()
                .map(|n| n.bit() as u8)
                .collect();
            let choices = k_subsets(&bits, self.min_per_tier[tier.index()] as usize);
            let mut next = Vec::with_capacity(result.len() * choices.len());
            for base in &result {
                for &c in &choices {
                    next.push(NodeSet(base.0 | c));
                }
            }
            result = next;
        }
        result
    }
}

/// All C(bits.len(), k) masks choosing exactly `k` of the given bit positions.
fn k_subsets(bits: &[u8], k: usize) -> Vec<u16> {
    fn go(bits: &[u8], k: usize, start: usize, acc: u16, out: &mut Vec<u16>) {
        if k == 0 {
            out.push(acc);
            return;
        }
        for i in start..=bits.len().saturating_sub(k) {
            go(bits, k - 1, i + 1, acc | (1 << bits[i]), out);
        }
    }
    let mut out = Vec::new();
    if k <= bits.len() {
        go(bits, k, 0, 0, &mut out);
    }
    out
}

fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc = 1u64;
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// Earth-node minimum any Phase-1 family needs to intersect every
/// k-of-Earth Phase-2 quorum: two such Phase-2 quorums overlap in at least
/// `|E| - k + 1` Earth nodes by pigeonhole, and that same count in Phase-1
/// guarantees a common node.
pub fn min_earth_for_intersection(k: u32) -> u32 {
    let earth = TIER_SIZES[0] as u32;
    assert!((1..=earth).contains(&k), "k out of range");
    earth - k + 1
}

/// Phase-1 family for a proposer on tier `i`: at least one respondent from
/// every tier between the proposer and Earth, anchored by enough Earth
/// nodes to intersect the k-of-Earth Phase-2 family. Strict is k = 5
/// (Earth minimum 1).
pub fn wall_phase1(i: Tier, k: u32) -> Result<QuorumFamily, FamilyError> {
    let earth = TIER_SIZES[0] as u32;
    if !(1..=earth).contains(&k) {
        return Err(FamilyError::KOutOfRange { k, max: earth });
    }
    let mut min = [0u32; TIER_COUNT];
    min[0] = min_earth_for_intersection(k).max(1);
    for j in 1..=i.index() {
        min[j] = 1;
    }
    QuorumFamily::new(NodeSet::ALL, min)
}

/// Phase-2 family: k of the five Earth nodes, nothing else required.
/// k = 5 is the strict family whose only minimal member is all of Earth.
pub fn phase2(k: u32) -> Result<QuorumFamily, FamilyError> {
    let earth = TIER_SIZES[0] as u32;
    if !(1..=earth).contains(&k) {
        return Err(FamilyError::KOutOfRange { k, max: earth });
    }
    QuorumFamily::new(NodeSet::ALL, [k, 0, 0, 0])
}

/// The flat Phase-1 family: one respondent from every tier, regardless of
/// who proposes.
pub fn flat_phase1() -> QuorumFamily {
    QuorumFamily::new(NodeSet::ALL, [1, 1, 1, 1]).expect("flat family is satisfiable")
}

/// Intra-tier consensus variants.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum LocalScope {
    /// Earth-local Flexible Paxos, q1 = 4 of 5, q2 = 2 of 5.
    EarthStd,
    /// Earth-local majority, q1 = q2 = 3 of 5.
    EarthMaj,
    /// Mars-local majority, q1 = q2 = 2 of 3.
    MarsLocal,
}

impl LocalScope {
    pub fn name(self) -> &'static str {
        match self {
            LocalScope::EarthStd => "std",
            LocalScope::EarthMaj => "maj",
            LocalScope::MarsLocal => "mars",
        }
    }

    pub fn from_name(s: &str) -> Option<LocalScope> {
        match s {
            "std" => Some(LocalScope::EarthStd),
            "maj" => Some(LocalScope::EarthMaj),
            "mars" => Some(LocalScope::MarsLocal),
            _ => None,
        }
    }
}

/// The (Phase-1, Phase-2) family pair for an intra-tier consensus scope.
pub fn local_families(scope: LocalScope) -> (QuorumFamily, QuorumFamily) {
    let earth = NodeSet::tier_mask(Tier::Earth);
    let mars = NodeSet::tier_mask(Tier::Mars);
    let f = |u: NodeSet, min: [u32; TIER_COUNT]| {
        QuorumFamily::new(u, min).expect("local families are satisfiable")
    };
    match scope {
        LocalScope::EarthStd => (f(earth, [4, 0, 0, 0]), f(earth, [2, 0, 0, 0])),
        LocalScope::EarthMaj => (f(earth, [3, 0, 0, 0]), f(earth, [3, 0, 0, 0])),
        LocalScope::MarsLocal => (f(mars, [0, 0, 0, 2]), f(mars, [0, 0, 0, 2])),
    }
}

/// Mutation hook for the verifier's own tests: the same family with one
/// tier's minimum forced to zero. Used to demonstrate that
/// [`verify_cross_intersection`] catches broken geometry.
pub fn drop_tier_requirement(f: &QuorumFamily, tier: Tier) -> QuorumFamily {
    let mut min = f.min_per_tier;
    min[tier.index()] = 0;
    QuorumFamily {
        universe: f.universe,
        min_per_tier: min,
    }
}

/// Outcome of an exhaustive cross-intersection check.
#[derive(Clone, Debug)]
pub struct IntersectionVerdict {
    pub holds: bool,
    /// A disjoint member pair, present exactly when `holds` is false.
    pub counterexample: Option<(NodeSet, NodeSet)>,
    pub pairs_checked: u64,
}

/// Exhaustively verify that every member of `f1` intersects every member
/// of `f2`, by checking all pairs of minimal members. Minimal pairs are
/// sufficient: members only grow upward from minimal ones, and growing a
/// set can only add intersection.
pub fn verify_cross_intersection(f1: &QuorumFamily, f2: &QuorumFamily) -> IntersectionVerdict {
    assert_eq!(
        f1.universe(),
        f2.universe(),
        "cross-intersection requires a shared universe"
    );
    let mut pairs_checked = 0;
    for a in f1.minimal_members() {
        for b in f2.minimal_members() {
            pairs_checked += 1;
            if a.intersect(b).is_empty() {
                return IntersectionVerdict {
                    holds: false,
                    counterexample: Some((a, b)),
                    pairs_checked,
                };
            }
        }
    }
    IntersectionVerdict {
        holds: true,
        counterexample: None,
        pairs_checked,
    }
}

/// Per-tier liveness verdict, decomposed into the two independent causes:
/// `obligations_met` is the wall check (every tier at or below the
/// proposer's is reachable), `phase2_achievable` the network check (enough
/// live Earth nodes in direct reach).
#[derive(Clone, Copy, Debug)]
pub struct TierVerdict {
    pub tier: Tier,
    pub obligations_met: bool,
    pub phase2_achievable: bool,
    pub live: bool,
}

/// Read one tier's global-consensus capability off the topology state at
/// `time`, in O(tiers): no quorum enumeration, no probing.
pub fn read_wall(t: &Topology, time: f64, i: Tier, k: u32) -> TierVerdict {
    let obligations_met = Tier::ALL
        .into_iter()
        .filter(|j| j.index() <= i.index())
        .all(|j| t.tier_reachable(time, i, j));
    let reachable_earth = match i {
        // An Earth proposer can relay within the tier: count live Earth
        // nodes holding any active intra-Earth link.
        Tier::Earth => t
            .tier_nodes(Tier::Earth)
            .filter(|&e| {
                !t.is_crashed(e, time)
                    && t.tier_nodes(Tier::Earth)
                        .any(|o| o != e && t.link_active(time, e, o))
            })
            .count(),
        // Elsewhere only Earth nodes directly linked to the tier's
        // proposer count (no multi-hop routing).
        _ => {
            let proposer = t.proposer_for(i);
            t.tier_nodes(Tier::Earth)
                .filter(|&e| t.link_active(time, proposer, e))
                .count()
        }
    };
    let phase2_achievable = reachable_earth as u32 >= k;
    TierVerdict {
        tier: i,
        obligations_met,
        phase2_achievable,
        live: obligations_met && phase2_achievable,
    }
}
