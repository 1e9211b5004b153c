//! Replica-count strategies. Each returns a [`ReplicationPlan`] holding the
//! desired number of live replicas per movie for one batch window.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::cluster::{valid_replication, Cluster, MovieId, Violation, Validity};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReplicationPlan {
    counts: BTreeMap<MovieId, usize>,
}

impl ReplicationPlan {
    pub fn from_counts(counts: impl IntoIterator<Item = (MovieId, usize)>) -> Self {
        ReplicationPlan { counts: counts.into_iter().collect() }
    }

    pub fn get(&self, movie: MovieId) -> usize {
        self.counts.get(&movie).copied().unwrap_or(0)
    }

    pub fn set(&mut self, movie: MovieId, count: usize) {
        self.counts.insert(movie, count);
    }

    pub fn iter(&self) -> impl Iterator<Item = (MovieId, usize)> + '_ {
        self.counts.iter().map(|(m, c)| (*m, *c))
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

/// Requests observed during one batch window.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RequestBatch {
    /// `(movie, measured requests per second)`, one entry per movie.
    pub entries: Vec<(MovieId, f64)>,
    pub window_s: f64,
}

impl RequestBatch {
    pub fn from_counts(counts: &BTreeMap<MovieId, u64>, window_s: f64) -> Self {
        RequestBatch {
            entries: counts
                .iter()
                .filter(|(_, c)| **c > 0)
                .map(|(m, c)| (*m, *c as f64 / window_s))
                .collect(),
            window_s,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn rate(&self, movie: MovieId) -> f64 {
        self.entries.iter().find(|(m, _)| *m == movie).map_or(0.0, |e| e.1)
    }

    /// Batched movies from most to least popular.
    fn by_popularity(&self, cluster: &Cluster) -> Vec<MovieId> {
        let mut ids: Vec<MovieId> = self.entries.iter().map(|e| e.0).collect();
        ids.sort_by(|a, b| {
            cluster
                .catalog
                .popularity(*b)
                .total_cmp(&cluster.catalog.popularity(*a))
                .then(a.cmp(b))
        });
        ids.dedup();
        ids
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    Proposed,
    Random,
    MinReq,
    MaxHit,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::Proposed, Strategy::MinReq, Strategy::MaxHit, Strategy::Random];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Proposed => "proposed",
            Strategy::Random => "random",
            Strategy::MinReq => "minreq",
            Strategy::MaxHit => "maxhit",
        }
    }

    /// Plan for one batch. Baselines spend `budget` replicas, defaulting to
    /// the proposed plan's total on the same inputs.
    pub fn plan<R: Rng + ?Sized>(
        self,
        batch: &RequestBatch,
        cluster: &Cluster,
        budget: Option<i64>,
        rng: &mut R,
    ) -> Result<ReplicationPlan> {
        if self == Strategy::Proposed {
            return Ok(proposed_replicas(batch, cluster));
        }
        let budget = match budget {
            Some(b) => b,
            None => proposed_replicas(batch, cluster).total() as i64,
        };
        match self {
            Strategy::Random => random_replicas(batch, cluster, budget, rng),
            Strategy::MinReq => minreq_replicas(batch, cluster, budget),
            Strategy::MaxHit => maxhit_replicas(batch, cluster, budget),
            Strategy::Proposed => unreachable!(),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| {
            Error::invalid("strategy", s, "expected one of proposed, random, minreq, maxhit")
        })
    }
}

/// Online serving peers that hold `movie` or have room for a copy of it.
pub fn available_peers(cluster: &Cluster, movie: MovieId) -> usize {
    let Some(size) = cluster.catalog.get(movie).map(|m| m.size_bytes) else {
        return 0;
    };
    cluster
        .serving_peers()
        .filter(|p| p.online && (p.holds(movie) || p.can_store(movie, size)))
        .count()
}

/// Batch-aware replica counts: `Ω_m = (A_m / max A + q_m) / 2`, then
/// `R_m = min(T_R, max(1, ⌈Ω_m·T_R⌉))` where `T_R` counts online serving peers
/// able to host the movie.
pub fn proposed_replicas(batch: &RequestBatch, cluster: &Cluster) -> ReplicationPlan {
    let max_rate = batch.entries.iter().map(|e| e.1).fold(0.0, f64::max);
    let mut plan = ReplicationPlan::default();
    for movie in batch.by_popularity(cluster) {
        let t_r = available_peers(cluster, movie);
        let normalized = if max_rate > 0.0 { batch.rate(movie) / max_rate } else { 0.0 };
        let omega = (normalized + cluster.catalog.popularity(movie)) / 2.0;
        let count = if t_r == 0 {
            0
        } else {
            let raw = (omega * t_r as f64 - 1e-9).ceil().max(1.0) as usize;
            raw.min(t_r)
        };
        plan.set(movie, count);
    }
    shrink_to_valid(plan, cluster)
}

fn check_budget(budget: i64) -> Result<usize> {
    usize::try_from(budget).map_err(|_| Error::NegativeBudget(budget))
}

pub fn random_replicas<R: Rng + ?Sized>(
    batch: &RequestBatch,
    cluster: &Cluster,
    budget: i64,
    rng: &mut R,
) -> Result<ReplicationPlan> {
    let budget = check_budget(budget)?;
    let movies = batch.by_popularity(cluster);
    let mut plan = ReplicationPlan::default();
    if movies.is_empty() || budget == 0 {
        return Ok(plan);
    }
    for _ in 0..budget {
        let m = movies[rng.random_range(0..movies.len())];
        plan.set(m, plan.get(m) + 1);
    }
    Ok(shrink_to_valid(plan, cluster))
}

/// Near-uniform spread; the remainder goes to the most popular movies.
pub fn maxhit_replicas(batch: &RequestBatch, cluster: &Cluster, budget: i64) -> Result<ReplicationPlan> {
    let budget = check_budget(budget)?;
    let movies = batch.by_popularity(cluster);
    if movies.is_empty() || budget == 0 {
        return Ok(ReplicationPlan::default());
    }
    let base = budget / movies.len();
    let extra = budget % movies.len();
    let plan = ReplicationPlan::from_counts(movies.iter().enumerate().map(|(i, m)| (*m, base + usize::from(i < extra))));
    Ok(shrink_to_valid(plan, cluster))
}

/// Counts proportional to popularity with largest-remainder rounding.
pub fn minreq_replicas(batch: &RequestBatch, cluster: &Cluster, budget: i64) -> Result<ReplicationPlan> {
    let budget = check_budget(budget)?;
    let movies = batch.by_popularity(cluster);
    if movies.is_empty() || budget == 0 {
        return Ok(ReplicationPlan::default());
    }
    let weights: Vec<f64> = movies.iter().map(|m| cluster.catalog.popularity(*m)).collect();
    let total: f64 = weights.iter().sum();
    let quotas: Vec<f64> = if total > 0.0 {
        weights.iter().map(|w| budget as f64 * w / total).collect()
    } else {
        vec![budget as f64 / movies.len() as f64; movies.len()]
    };
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..movies.len()).collect();
    // Stable sort keeps rank order among equal remainders.
    order.sort_by(|&a, &b| (quotas[b] - quotas[b].floor()).total_cmp(&(quotas[a] - quotas[a].floor())));
    for &i in order.iter().take(budget.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    let plan = ReplicationPlan::from_counts(movies.iter().copied().zip(counts));
    Ok(shrink_to_valid(plan, cluster))
}

/// Trim counts from the least popular movies until the plan fits aggregate
/// storage. Movies keep one replica while any other movie still has more.
/// The channel constraint does not depend on the plan and is left to the
/// caller's verdict.
pub fn shrink_to_valid(mut plan: ReplicationPlan, cluster: &Cluster) -> ReplicationPlan {
    loop {
        match valid_replication(&plan, cluster) {
            Validity::Valid => return plan,
            Validity::Invalid(v) if !v.iter().any(|v| matches!(v, Violation::Storage { .. })) => return plan,
            Validity::Invalid(_) => {}
        }
        let mut candidates: Vec<(MovieId, usize)> = plan.iter().filter(|(_, c)| *c > 0).collect();
        if candidates.is_empty() {
            return plan;
        }
        let least_popular = |c: &[(MovieId, usize)]| {
            c.iter()
                .min_by(|a, b| {
                    cluster
                        .catalog
                        .popularity(a.0)
                        .total_cmp(&cluster.catalog.popularity(b.0))
                        .then(b.0.cmp(&a.0))
                })
                .copied()
        };
        let above_floor: Vec<_> = candidates.iter().copied().filter(|(_, c)| *c > 1).collect();
        if !above_floor.is_empty() {
            candidates = above_floor;
        }
        let (m, c) = least_popular(&candidates).expect("nonempty");
        plan.set(m, c - 1);
    }
}
