//! Mapping replica counts onto concrete serving peers.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::cluster::{Catalog, MovieId, Peer, PeerId};
use crate::error::{Error, Result};
use crate::replication::ReplicationPlan;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MovieWeight {
    pub movie: MovieId,
    pub weight: f64,
}

/// `W_m = A_m · X · q_m / R_m`.
pub fn movie_weight(movie: MovieId, rate: f64, popularity: f64, replicas: usize, scale: f64) -> Result<MovieWeight> {
    if replicas == 0 {
        return Err(Error::UndefinedWeight(movie));
    }
    let weight = rate * scale * popularity / replicas as f64;
    if !(weight >= 0.0 && weight.is_finite()) {
        return Err(Error::invalid("weight", weight, "must be finite and nonnegative"));
    }
    Ok(MovieWeight { movie, weight })
}

/// Capacity view of one peer while a placement is being computed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeerSlot {
    pub id: PeerId,
    pub free_bytes: u64,
    pub free_slots: usize,
    /// Bytes already stored.
    pub load_bytes: u64,
    pub holds: BTreeSet<MovieId>,
}

impl PeerSlot {
    pub fn from_peer(peer: &Peer) -> Self {
        PeerSlot {
            id: peer.id,
            free_bytes: peer.free_bytes(),
            free_slots: peer.max_movies.saturating_sub(peer.stored_count()),
            load_bytes: peer.used_bytes(),
            holds: peer.stored().collect(),
        }
    }

    pub fn eligible(&self, movie: MovieId, bytes: u64) -> bool {
        self.free_slots > 0 && self.free_bytes >= bytes && !self.holds.contains(&movie)
    }

    fn take(&mut self, movie: MovieId, bytes: u64) {
        self.free_bytes -= bytes;
        self.free_slots -= 1;
        self.load_bytes += bytes;
        self.holds.insert(movie);
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PlacementAssignment {
    pub pairs: Vec<(MovieId, PeerId)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlacementStep {
    pub round: usize,
    pub movie: MovieId,
    pub peer: PeerId,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PlacementOutcome {
    pub assignment: PlacementAssignment,
    /// Replicas that found no eligible peer.
    pub leftover: BTreeMap<MovieId, usize>,
    pub log: Vec<PlacementStep>,
}

impl PlacementOutcome {
    fn place(&mut self, round: usize, movie: MovieId, slot: &mut PeerSlot, bytes: u64) {
        slot.take(movie, bytes);
        self.assignment.pairs.push((movie, slot.id));
        self.log.push(PlacementStep { round, movie, peer: slot.id });
    }

    fn leave(&mut self, movie: MovieId) {
        *self.leftover.entry(movie).or_default() += 1;
    }

    pub fn leftover_total(&self) -> usize {
        self.leftover.values().sum()
    }
}

/// Replicas ordered by weight, heaviest first, ties by movie id.
pub fn replica_order(plan: &ReplicationPlan, weights: &[MovieWeight]) -> Vec<MovieId> {
    let weight_of = |m: MovieId| weights.iter().find(|w| w.movie == m).map_or(0.0, |w| w.weight);
    let mut movies: Vec<(MovieId, usize, f64)> = plan.iter().filter(|e| e.1 > 0).map(|(m, r)| (m, r, weight_of(m))).collect();
    movies.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));
    movies.into_iter().flat_map(|(m, r, _)| std::iter::repeat_n(m, r)).collect()
}

fn size_of(catalog: &Catalog, movie: MovieId) -> u64 {
    catalog.get(movie).map_or(u64::MAX, |m| m.size_bytes)
}

/// Smallest Load First. Replicas are taken in weight order, `per_round` at a
/// time (default: every peer with a free slot); within a round each replica
/// goes to the least-loaded eligible peer not yet used in that round.
pub fn smallest_load_first(
    plan: &ReplicationPlan,
    weights: &[MovieWeight],
    peers: &[PeerSlot],
    per_round: Option<usize>,
    catalog: &Catalog,
) -> PlacementOutcome {
    let mut slots = peers.to_vec();
    let mut out = PlacementOutcome::default();
    let mut pending: VecDeque<MovieId> = replica_order(plan, weights).into();
    let mut round = 0;
    while !pending.is_empty() {
        let width = per_round.unwrap_or_else(|| slots.iter().filter(|s| s.free_slots > 0).count());
        if width == 0 {
            pending.drain(..).for_each(|m| out.leave(m));
            break;
        }
        let mut used = BTreeSet::new();
        let mut deferred = Vec::new();
        let mut taken = 0;
        while taken < width {
            let Some(movie) = pending.pop_front() else { break };
            taken += 1;
            let bytes = size_of(catalog, movie);
            let target = (0..slots.len())
                .filter(|&i| !used.contains(&slots[i].id) && slots[i].eligible(movie, bytes))
                .min_by_key(|&i| (slots[i].load_bytes, slots[i].id));
            match target {
                Some(i) => {
                    used.insert(slots[i].id);
                    out.place(round, movie, &mut slots[i], bytes);
                }
                None if slots.iter().any(|s| s.eligible(movie, bytes)) => deferred.push(movie),
                None => out.leave(movie),
            }
        }
        for m in deferred.into_iter().rev() {
            pending.push_front(m);
        }
        round += 1;
    }
    out
}

/// Each replica goes to a uniformly chosen eligible peer.
pub fn random_placement<R: Rng + ?Sized>(
    plan: &ReplicationPlan,
    weights: &[MovieWeight],
    peers: &[PeerSlot],
    catalog: &Catalog,
    rng: &mut R,
) -> PlacementOutcome {
    let mut slots = peers.to_vec();
    let mut out = PlacementOutcome::default();
    for movie in replica_order(plan, weights) {
        let bytes = size_of(catalog, movie);
        let eligible: Vec<usize> = (0..slots.len()).filter(|&i| slots[i].eligible(movie, bytes)).collect();
        if eligible.is_empty() {
            out.leave(movie);
            continue;
        }
        let i = eligible[rng.random_range(0..eligible.len())];
        out.place(0, movie, &mut slots[i], bytes);
    }
    out
}

/// Cycle through peers in id order, skipping ineligible ones.
pub fn round_robin_placement(
    plan: &ReplicationPlan,
    weights: &[MovieWeight],
    peers: &[PeerSlot],
    catalog: &Catalog,
) -> PlacementOutcome {
    let mut slots = peers.to_vec();
    slots.sort_by_key(|s| s.id);
    let mut out = PlacementOutcome::default();
    let mut cursor = 0;
    for movie in replica_order(plan, weights) {
        let bytes = size_of(catalog, movie);
        let n = slots.len();
        match (0..n).map(|k| (cursor + k) % n).find(|&i| slots[i].eligible(movie, bytes)) {
            Some(i) => {
                out.place(0, movie, &mut slots[i], bytes);
                cursor = (i + 1) % n;
            }
            None => out.leave(movie),
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PlacementPolicy {
    SmallestLoadFirst,
    Random,
    RoundRobin,
}

impl PlacementPolicy {
    pub const ALL: [PlacementPolicy; 3] = [PlacementPolicy::SmallestLoadFirst, PlacementPolicy::Random, PlacementPolicy::RoundRobin];

    pub fn name(self) -> &'static str {
        match self {
            PlacementPolicy::SmallestLoadFirst => "slf",
            PlacementPolicy::Random => "random",
            PlacementPolicy::RoundRobin => "round_robin",
        }
    }

    pub fn place<R: Rng + ?Sized>(
        self,
        plan: &ReplicationPlan,
        weights: &[MovieWeight],
        peers: &[PeerSlot],
        per_round: Option<usize>,
        catalog: &Catalog,
        rng: &mut R,
    ) -> PlacementOutcome {
        match self {
            PlacementPolicy::SmallestLoadFirst => smallest_load_first(plan, weights, peers, per_round, catalog),
            PlacementPolicy::Random => random_placement(plan, weights, peers, catalog, rng),
            PlacementPolicy::RoundRobin => round_robin_placement(plan, weights, peers, catalog),
        }
    }
}

impl fmt::Display for PlacementPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PlacementPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PlacementPolicy::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::invalid("placement", s, "expected one of slf, random, round_robin"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::Movie;
    use crate::workload::{stream, StreamId};
    use proptest::prelude::*;

    fn catalog(movies: usize, size: u64) -> Catalog {
        Catalog::new(
            (1..=movies as u32)
                .map(|id| Movie {
                    id,
                    size_bytes: size,
                    duration_s: 7200.0,
                    popularity: 1.0 / movies as f64,
                    arrival_rate: 0.0,
                    channels: 1,
                    num_blocks: 100,
                })
                .collect(),
        )
        .unwrap()
    }

    fn empty_slot(id: PeerId, slots: usize, size: u64) -> PeerSlot {
        PeerSlot { id, free_bytes: slots as u64 * size, free_slots: slots, load_bytes: 0, holds: BTreeSet::new() }
    }

    fn weights(ws: &[f64]) -> Vec<MovieWeight> {
        ws.iter().enumerate().map(|(i, w)| MovieWeight { movie: i as u32 + 1, weight: *w }).collect()
    }

    #[test]
    fn weight_examples() {
        assert!((movie_weight(1, 0.5, 0.2, 5, 1.0).unwrap().weight - 0.02).abs() < 1e-15);
        assert_eq!(movie_weight(1, 1.0, 1.0, 1, 1.0).unwrap().weight, 1.0);
        let two = movie_weight(1, 0.3, 0.4, 2, 1.0).unwrap().weight;
        let four = movie_weight(1, 0.3, 0.4, 4, 1.0).unwrap().weight;
        assert!((two - 2.0 * four).abs() < 1e-15);
        assert!(matches!(movie_weight(7, 1.0, 1.0, 0, 1.0), Err(Error::UndefinedWeight(7))));
    }

    #[test]
    fn slf_three_identical_peers() {
        let cat = catalog(2, 10);
        let peers: Vec<_> = (0..3).map(|i| empty_slot(i, 10, 10)).collect();
        let plan = ReplicationPlan::from_counts([(1, 2), (2, 1)]);
        let out = smallest_load_first(&plan, &weights(&[2.0, 1.0]), &peers, Some(3), &cat);
        assert_eq!(out.assignment.pairs, vec![(1, 0), (1, 1), (2, 2)]);
        assert!(out.leftover.is_empty());
    }

    #[test]
    fn slf_reports_duplicate_as_leftover() {
        let cat = catalog(1, 10);
        let mut slot = empty_slot(0, 10, 10);
        slot.holds.insert(1);
        let out = smallest_load_first(&ReplicationPlan::from_counts([(1, 1)]), &weights(&[1.0]), &[slot], None, &cat);
        assert!(out.assignment.pairs.is_empty());
        assert_eq!(out.leftover, BTreeMap::from([(1, 1)]));
    }

    #[test]
    fn slf_zero_capacity_leaves_everything() {
        let cat = catalog(2, 10);
        let peers = vec![empty_slot(0, 0, 10), empty_slot(1, 0, 10)];
        let out = smallest_load_first(&ReplicationPlan::from_counts([(1, 2), (2, 1)]), &weights(&[1.0, 1.0]), &peers, None, &cat);
        assert_eq!(out.leftover_total(), 3);
    }

    #[test]
    fn random_single_eligible_peer_and_determinism() {
        let cat = catalog(3, 10);
        let mut full = empty_slot(0, 0, 10);
        full.free_bytes = 0;
        let peers = vec![full, empty_slot(1, 5, 10)];
        let plan = ReplicationPlan::from_counts([(1, 1)]);
        let out = random_placement(&plan, &weights(&[1.0]), &peers, &cat, &mut stream(1, StreamId::Placement));
        assert_eq!(out.assignment.pairs, vec![(1, 1)]);

        let peers: Vec<_> = (0..6).map(|i| empty_slot(i, 3, 10)).collect();
        let plan = ReplicationPlan::from_counts([(1, 3), (2, 2), (3, 4)]);
        let w = weights(&[0.3, 0.2, 0.1]);
        let a = random_placement(&plan, &w, &peers, &cat, &mut stream(4, StreamId::Placement));
        let b = random_placement(&plan, &w, &peers, &cat, &mut stream(4, StreamId::Placement));
        assert_eq!(a, b);

        let over = ReplicationPlan::from_counts([(1, 7)]);
        assert_eq!(random_placement(&over, &w, &peers, &cat, &mut stream(4, StreamId::Placement)).leftover[&1], 1);
    }

    #[test]
    fn round_robin_alternates_and_skips_full() {
        let cat = catalog(4, 10);
        let peers = vec![empty_slot(0, 5, 10), empty_slot(1, 5, 10)];
        let plan = ReplicationPlan::from_counts([(1, 1), (2, 1), (3, 1), (4, 1)]);
        let out = round_robin_placement(&plan, &weights(&[4.0, 3.0, 2.0, 1.0]), &peers, &cat);
        let order: Vec<_> = out.assignment.pairs.iter().map(|p| p.1).collect();
        assert_eq!(order, vec![0, 1, 0, 1]);

        let peers = vec![empty_slot(0, 1, 10), empty_slot(1, 5, 10), empty_slot(2, 5, 10)];
        let out = round_robin_placement(&plan, &weights(&[4.0, 3.0, 2.0, 1.0]), &peers, &cat);
        let order: Vec<_> = out.assignment.pairs.iter().map(|p| p.1).collect();
        assert_eq!(order, vec![0, 1, 2, 1]);

        let empty = round_robin_placement(&ReplicationPlan::default(), &[], &peers, &cat);
        assert!(empty.assignment.pairs.is_empty());
    }

    #[test]
    fn policy_names() {
        for p in PlacementPolicy::ALL {
            assert_eq!(p.name().parse::<PlacementPolicy>().unwrap(), p);
        }
        assert!("best".parse::<PlacementPolicy>().is_err());
    }

    fn arb_slots() -> impl Strategy<Value = Vec<PeerSlot>> {
        proptest::collection::vec((0usize..4, 0u64..30, proptest::collection::btree_set(1u32..6, 0..3)), 1..8).prop_map(|v| {
            v.into_iter()
                .enumerate()
                .map(|(i, (slots, load, holds))| PeerSlot {
                    id: i as u32,
                    free_bytes: slots as u64 * 10,
                    free_slots: slots,
                    load_bytes: load,
                    holds,
                })
                .collect()
        })
    }

    fn check_constraints(peers: &[PeerSlot], out: &PlacementOutcome, plan: &ReplicationPlan) -> std::result::Result<(), TestCaseError> {
        let mut seen = BTreeSet::new();
        let mut used: BTreeMap<PeerId, usize> = BTreeMap::new();
        for &(m, p) in &out.assignment.pairs {
            prop_assert!(seen.insert((m, p)), "duplicate pair");
            let slot = peers.iter().find(|s| s.id == p).unwrap();
            prop_assert!(!slot.holds.contains(&m));
            *used.entry(p).or_default() += 1;
        }
        for (p, n) in used {
            let slot = peers.iter().find(|s| s.id == p).unwrap();
            prop_assert!(n <= slot.free_slots);
            prop_assert!(n as u64 * 10 <= slot.free_bytes);
        }
        prop_assert_eq!(out.assignment.pairs.len() + out.leftover_total(), plan.total());
        Ok(())
    }

    proptest! {
        #[test]
        fn placements_respect_constraints(
            peers in arb_slots(),
            counts in proptest::collection::vec(0usize..5, 5),
            ws in proptest::collection::vec(0.0f64..1.0, 5),
            seed in 0u64..100,
        ) {
            let cat = catalog(5, 10);
            let plan = ReplicationPlan::from_counts(counts.iter().enumerate().map(|(i, c)| (i as u32 + 1, *c)));
            let w = weights(&ws);
            for policy in PlacementPolicy::ALL {
                let out = policy.place(&plan, &w, &peers, None, &cat, &mut stream(seed, StreamId::Placement));
                check_constraints(&peers, &out, &plan)?;
            }
        }

        /// Replay the log from the initial loads: each chosen peer must have
        /// the least load among peers eligible and unused in its round.
        #[test]
        fn slf_log_replay_minimality(
            peers in arb_slots(),
            counts in proptest::collection::vec(0usize..5, 5),
            ws in proptest::collection::vec(0.0f64..1.0, 5),
            width in proptest::option::of(1usize..4),
        ) {
            let cat = catalog(5, 10);
            let plan = ReplicationPlan::from_counts(counts.iter().enumerate().map(|(i, c)| (i as u32 + 1, *c)));
            let out = smallest_load_first(&plan, &weights(&ws), &peers, width, &cat);
            check_constraints(&peers, &out, &plan)?;

            let mut state: BTreeMap<PeerId, (u64, usize, BTreeSet<MovieId>)> = peers
                .iter()
                .map(|s| (s.id, (s.load_bytes, s.free_slots, s.holds.clone())))
                .collect();
            let mut round_used: BTreeSet<PeerId> = BTreeSet::new();
            let mut current_round = usize::MAX;
            for step in &out.log {
                if step.round != current_round {
                    current_round = step.round;
                    round_used.clear();
                }
                let eligible_loads: Vec<u64> = state
                    .iter()
                    .filter(|(id, (_, free, holds))| !round_used.contains(id) && *free > 0 && !holds.contains(&step.movie))
                    .map(|(_, (load, _, _))| *load)
                    .collect();
                let chosen = state[&step.peer].0;
                prop_assert!(eligible_loads.iter().all(|&l| chosen <= l));
                let entry = state.get_mut(&step.peer).unwrap();
                entry.0 += 10;
                entry.1 -= 1;
                entry.2.insert(step.movie);
                round_used.insert(step.peer);
            }
        }

        /// Rescaling every weight by the same positive constant leaves the
        /// replica order, and hence every placement, unchanged.
        #[test]
        fn weight_scale_invariance(
            rates in proptest::collection::vec(0.0f64..2.0, 5),
            counts in proptest::collection::vec(1usize..4, 5),
            scale in 0.001f64..1000.0,
        ) {
            let q = crate::workload::zipf_popularity(5, 0.271).unwrap();
            let plan = ReplicationPlan::from_counts(counts.iter().enumerate().map(|(i, c)| (i as u32 + 1, *c)));
            let weigh = |x: f64| -> Vec<MovieWeight> {
                (0..5).map(|i| movie_weight(i as u32 + 1, rates[i], q[i], counts[i], x).unwrap()).collect()
            };
            prop_assert_eq!(replica_order(&plan, &weigh(1.0)), replica_order(&plan, &weigh(scale)));
            let peers: Vec<_> = (0..4).map(|i| empty_slot(i, 3, 10)).collect();
            let cat = catalog(5, 10);
            prop_assert_eq!(
                smallest_load_first(&plan, &weigh(1.0), &peers, None, &cat),
                smallest_load_first(&plan, &weigh(scale), &peers, None, &cat)
            );
        }
    }
}
