//! Single-threaded discrete-event simulation of one proxy cluster.
//!
//! Requests first stream a prefix from the proxy and are then handed to the
//! least-loaded serving peer holding the movie. Serving peers churn; a peer
//! going down loses its replicas, which are repaired after an exponential
//! delay if another copy survives. Every `batch_interval_s` the configured
//! strategy turns the window's request counts into replica targets and the
//! configured placement fills any deficit.

pub mod event;

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::cluster::{
    availability, lfu_place, register_serving_peer, Catalog, ChurnProfile, Cluster, MovieId, Peer, PeerId, PeerResources,
    ProxyServer, Role,
};
use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::metrics::{Averaged, Counts, LifetimeRow, MetricsReport, UtilizationWindow};
use crate::placement::{movie_weight, PeerSlot};
use crate::reliability::{mean_time_to_failure, CtmcParams};
use crate::replication::{ReplicationPlan, RequestBatch};
use crate::selection::{discover, failover, least_load_first, FailoverOutcome, Selection};
use crate::workload::{sample_exponential, stream, ArrivalProcess, StreamId, WorkloadConfig};

pub use event::{Event, EventKind, EventQueue, LineageId, SessionId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Peer(PeerId),
    Proxy,
    MainServer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionStatus {
    Active,
    Completed,
    Failed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub id: SessionId,
    pub movie: MovieId,
    pub requester: PeerId,
    pub source: Source,
    pub start_s: f64,
    pub position_s: f64,
    pub status: SessionStatus,
    pub failover_count: u32,
    /// Proxy is streaming beyond the prefix and needs the whole movie cached.
    past_prefix: bool,
}

impl Session {
    fn on_proxy(&self) -> bool {
        matches!(self.source, Source::Proxy | Source::MainServer)
    }
}

/// Chain of replicas descended from one placement; repairs extend it.
#[derive(Debug, Clone)]
struct Lineage {
    movie: MovieId,
    n: usize,
    created_s: f64,
    lost_s: f64,
    ended_s: Option<f64>,
}

#[derive(Debug)]
struct Utilization {
    interval: f64,
    horizon: f64,
    last: f64,
    cur: usize,
    busy_area: Vec<f64>,
    buffer_area: Vec<f64>,
    copy_s: Vec<f64>,
}

impl Utilization {
    fn new(interval: f64, horizon: f64) -> Self {
        let n = ((horizon / interval).ceil() as usize).max(1);
        Utilization {
            interval,
            horizon,
            last: 0.0,
            cur: 0,
            busy_area: vec![0.0; n],
            buffer_area: vec![0.0; n],
            copy_s: vec![0.0; n],
        }
    }

    fn window_end(&self, i: usize) -> f64 {
        ((i + 1) as f64 * self.interval).min(self.horizon)
    }

    /// Integrate the current proxy state from the last update to `t`.
    fn advance(&mut self, t: f64, busy: u32, bytes: u64) {
        let end = t.min(self.horizon);
        while self.last < end {
            while self.cur + 1 < self.busy_area.len() && self.window_end(self.cur) <= self.last {
                self.cur += 1;
            }
            let stop = self.window_end(self.cur).min(end);
            let stop = if stop > self.last { stop } else { end };
            let dt = stop - self.last;
            self.busy_area[self.cur] += busy as f64 * dt;
            self.buffer_area[self.cur] += bytes as f64 * dt;
            self.last = stop;
        }
    }

    fn charge_copies(&mut self, t: f64, channel_s: f64) {
        if t < self.horizon {
            let i = ((t / self.interval) as usize).min(self.copy_s.len() - 1);
            self.copy_s[i] += channel_s;
        }
    }

    fn finish(&self, channels: u32, buffer_bytes: u64) -> Vec<UtilizationWindow> {
        (0..self.busy_area.len())
            .map(|i| {
                let start = i as f64 * self.interval;
                let len = self.window_end(i) - start;
                let frac = |area: f64, cap: f64| if cap > 0.0 && len > 0.0 { (area / (cap * len)).min(1.0) } else { 0.0 };
                UtilizationWindow {
                    start_s: start,
                    bandwidth_frac: frac(self.busy_area[i] + self.copy_s[i], channels as f64),
                    buffer_frac: frac(self.buffer_area[i], buffer_bytes as f64),
                }
            })
            .collect()
    }
}

/// Build the initial cluster: the first `serving_peers()` ids register as
/// serving peers, the rest only request.
pub fn build_cluster(cfg: &SimConfig, catalog: Catalog) -> Result<Cluster> {
    let churn = ChurnProfile::new(cfg.mean_up_s, cfg.mean_dn_s)?;
    let peers = (0..cfg.peers)
        .map(|i| Peer::new(i as PeerId, Role::NonServing, 0, cfg.max_movies_per_peer, cfg.base_uplink_channels, churn))
        .collect();
    let mut cluster = Cluster::new(ProxyServer::new(cfg.proxy_channels, cfg.proxy_buffer_bytes), peers, catalog)?;
    let resources = PeerResources {
        storage_bytes: cfg.movie_size_bytes.saturating_mul(cfg.max_movies_per_peer as u64),
        uplink_channels: cfg.base_uplink_channels * cfg.uplink_ratio,
        churn,
    };
    for id in 0..cfg.serving_peers() {
        register_serving_peer(&mut cluster, id as PeerId, resources)?;
    }
    Ok(cluster)
}

pub struct Simulation<'a> {
    cfg: &'a SimConfig,
    seed: u64,
    audit: bool,
    cluster: Cluster,
    queue: EventQueue,
    arrivals: ArrivalProcess,
    churn_rngs: Vec<ChaCha8Rng>,
    repair_rng: ChaCha8Rng,
    replication_rng: ChaCha8Rng,
    placement_rng: ChaCha8Rng,
    requesters: Vec<PeerId>,
    sessions: Vec<Session>,
    active: BTreeSet<SessionId>,
    /// Online holders per movie, indexed by `movie - 1`.
    holders: Vec<BTreeSet<PeerId>>,
    pending_repairs: Vec<usize>,
    lineages: Vec<Lineage>,
    live_lineage: BTreeMap<(PeerId, MovieId), LineageId>,
    window_requests: BTreeMap<MovieId, u64>,
    counts: Counts,
    util: Utilization,
    planned: Vec<f64>,
    planned_batches: u64,
    handoff_s: Option<f64>,
    prefix_bytes: Vec<u64>,
    last_clock: f64,
}

impl<'a> Simulation<'a> {
    pub fn new(cfg: &'a SimConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let workload = WorkloadConfig {
            num_movies: cfg.movies,
            zipf_skew: cfg.zipf_skew,
            aggregate_rate: cfg.aggregate_rate(),
            sim_duration_s: cfg.sim_duration_s,
            seed,
        };
        let catalog = workload.catalog(cfg.movie_size_bytes, cfg.movie_duration_s, cfg.num_blocks)?;
        let popularity: Vec<f64> = catalog.iter().map(|m| m.popularity).collect();
        let arrivals = ArrivalProcess::new(stream(seed, StreamId::Arrivals), &popularity, workload.aggregate_rate)?;
        let cluster = build_cluster(cfg, catalog)?;

        // The handoff happens at a block boundary.
        let blocks = cfg.num_blocks as f64;
        let handoff_block = (cfg.handoff_fraction * blocks).ceil();
        let handoff_s = (handoff_block < blocks).then(|| handoff_block / blocks * cfg.movie_duration_s);
        let prefix_bytes = cluster
            .catalog
            .iter()
            .map(|m| ((handoff_block / blocks) * m.size_bytes as f64).ceil() as u64)
            .collect();

        let serving = cfg.serving_peers();
        let mut requesters: Vec<PeerId> = (serving..cfg.peers).map(|i| i as PeerId).collect();
        if requesters.is_empty() {
            requesters = (0..cfg.peers as PeerId).collect();
        }
        Ok(Simulation {
            cfg,
            seed,
            audit: false,
            churn_rngs: (0..serving).map(|i| stream(seed, StreamId::Churn(i as u32))).collect(),
            repair_rng: stream(seed, StreamId::Repair),
            replication_rng: stream(seed, StreamId::Replication),
            placement_rng: stream(seed, StreamId::Placement),
            requesters,
            sessions: Vec::new(),
            active: BTreeSet::new(),
            holders: vec![BTreeSet::new(); cfg.movies],
            pending_repairs: vec![0; cfg.movies],
            lineages: Vec::new(),
            live_lineage: BTreeMap::new(),
            window_requests: BTreeMap::new(),
            counts: Counts::default(),
            util: Utilization::new(cfg.batch_interval_s, cfg.sim_duration_s),
            planned: vec![0.0; cfg.movies],
            planned_batches: 0,
            handoff_s,
            prefix_bytes,
            last_clock: 0.0,
            cluster,
            queue: EventQueue::default(),
            arrivals,
        })
    }

    /// Check conservation invariants after every event; violations abort the
    /// run with an error.
    pub fn with_audit(mut self, audit: bool) -> Self {
        self.audit = audit;
        self
    }

    pub fn cluster(&self) -> &Cluster {
        &self.cluster
    }

    pub fn sessions(&self) -> &[Session] {
        &self.sessions
    }

    fn exp(rng: &mut ChaCha8Rng, mean: f64) -> f64 {
        sample_exponential(rng, mean).expect("mean validated positive")
    }

    fn init(&mut self) {
        let (a_up, _) = availability(&ChurnProfile { mean_up_s: self.cfg.mean_up_s, mean_dn_s: self.cfg.mean_dn_s })
            .expect("churn validated");
        for i in 0..self.churn_rngs.len() {
            let online = self.churn_rngs[i].random::<f64>() < a_up;
            self.cluster.peers[i].online = online;
            self.schedule_churn(i as PeerId, 0.0);
        }
        self.schedule_next_arrival(0.0);
        if self.cfg.batch_interval_s < self.cfg.sim_duration_s {
            self.queue.schedule(self.cfg.batch_interval_s, EventKind::ReplicationBatch);
        }
    }

    /// Schedule the end of the peer's current up or down period. A zero mean
    /// for the other state means the peer never leaves this one.
    fn schedule_churn(&mut self, peer: PeerId, now: f64) {
        let online = self.cluster.peers[peer as usize].online;
        let (stay, other) = if online {
            (self.cfg.mean_up_s, self.cfg.mean_dn_s)
        } else {
            (self.cfg.mean_dn_s, self.cfg.mean_up_s)
        };
        if stay <= 0.0 || other <= 0.0 {
            return;
        }
        let dt = Self::exp(&mut self.churn_rngs[peer as usize], stay);
        let kind = if online { EventKind::PeerDown(peer) } else { EventKind::PeerUp(peer) };
        self.queue.schedule(now + dt, kind);
    }

    fn schedule_next_arrival(&mut self, now: f64) {
        if let Some((gap, movie)) = self.arrivals.next_request() {
            let t = now + gap;
            if t < self.cfg.sim_duration_s {
                let i = self.arrivals.rng().random_range(0..self.requesters.len());
                let requester = self.requesters[i];
                self.queue.schedule(t, EventKind::RequestArrival { movie, requester });
            }
        }
    }

    pub fn run(mut self) -> Result<MetricsReport> {
        self.init();
        while let Some(ev) = self.queue.pop() {
            if ev.time_s >= self.cfg.sim_duration_s && self.active.is_empty() {
                break;
            }
            if ev.time_s < self.last_clock {
                return Err(Error::invalid("clock", ev.time_s, "event popped from the past"));
            }
            self.last_clock = ev.time_s;
            self.util.advance(ev.time_s, self.cluster.proxy.busy_channels, self.cluster.proxy.used_bytes());
            self.handle(ev)?;
            if self.audit {
                self.check().map_err(|reason| Error::invalid("audit", format!("t={}", ev.time_s), reason))?;
            }
        }
        self.util
            .advance(self.cfg.sim_duration_s, self.cluster.proxy.busy_channels, self.cluster.proxy.used_bytes());
        Ok(self.report())
    }

    fn handle(&mut self, ev: Event) -> Result<()> {
        let t = ev.time_s;
        match ev.kind {
            EventKind::RequestArrival { movie, requester } => self.on_request(t, movie, requester),
            EventKind::Handoff(s) => self.on_handoff(s),
            EventKind::SessionEnd(s) => self.on_session_end(t, s),
            EventKind::PeerDown(p) => self.on_peer_down(t, p),
            EventKind::PeerUp(p) => {
                self.cluster.peers[p as usize].online = true;
                self.schedule_churn(p, t);
            }
            EventKind::RepairComplete(l) => self.on_repair(l),
            EventKind::ReplicationBatch => self.on_batch(t)?,
        }
        Ok(())
    }

    fn movie_ix(movie: MovieId) -> usize {
        movie as usize - 1
    }

    fn on_request(&mut self, t: f64, movie: MovieId, requester: PeerId) {
        self.schedule_next_arrival(t);
        *self.window_requests.entry(movie).or_default() += 1;
        self.cluster.proxy.note_request(movie);

        let source = if self.cluster.proxy.free_channels() > 0 {
            if self.cluster.proxy.cache_entry(movie).is_some() {
                self.counts.cache_hits += 1;
                self.counts.immediate += 1;
                Source::Proxy
            } else {
                self.counts.cache_misses += 1;
                self.counts.via_main_server += 1;
                let m = self.cluster.catalog.get(movie).expect("catalog movie").clone();
                let pop: Vec<f64> = self.cluster.catalog.iter().map(|m| m.popularity).collect();
                lfu_place(&mut self.cluster.proxy, &m, |id| pop[Self::movie_ix(id)]);
                Source::MainServer
            }
        } else {
            match least_load_first(&discover(&self.cluster, movie, None)) {
                Selection::Peer(p) => {
                    self.counts.immediate += 1;
                    Source::Peer(p)
                }
                Selection::ProxyFallback => {
                    self.counts.rejected += 1;
                    return;
                }
            }
        };

        let id = self.sessions.len();
        match source {
            Source::Peer(p) => self.cluster.peers[p as usize].active_streams += 1,
            _ => self.cluster.proxy.busy_channels += 1,
        }
        self.sessions.push(Session {
            id,
            movie,
            requester,
            source,
            start_s: t,
            position_s: 0.0,
            status: SessionStatus::Active,
            failover_count: 0,
            past_prefix: matches!(source, Source::Peer(_)),
        });
        self.active.insert(id);
        self.counts.admitted += 1;
        let duration = self.cluster.catalog.get(movie).expect("catalog movie").duration_s;
        self.queue.schedule(t + duration, EventKind::SessionEnd(id));
        if !matches!(source, Source::Peer(_)) {
            match self.handoff_s {
                Some(h) => self.queue.schedule(t + h, EventKind::Handoff(id)),
                None => self.sessions[id].past_prefix = true,
            }
        }
        self.refresh_cache(movie);
    }

    fn on_handoff(&mut self, id: SessionId) {
        let s = &self.sessions[id];
        if s.status != SessionStatus::Active || !s.on_proxy() || s.past_prefix {
            return;
        }
        let movie = s.movie;
        match least_load_first(&discover(&self.cluster, movie, None)) {
            Selection::Peer(p) => {
                self.cluster.proxy.busy_channels -= 1;
                self.cluster.peers[p as usize].active_streams += 1;
                let s = &mut self.sessions[id];
                s.source = Source::Peer(p);
                s.past_prefix = true;
                self.counts.chained += 1;
            }
            Selection::ProxyFallback => self.sessions[id].past_prefix = true,
        }
        self.refresh_cache(movie);
    }

    fn release(&mut self, id: SessionId) {
        match self.sessions[id].source {
            Source::Peer(p) => self.cluster.peers[p as usize].active_streams -= 1,
            _ => self.cluster.proxy.busy_channels -= 1,
        }
    }

    fn on_session_end(&mut self, t: f64, id: SessionId) {
        if self.sessions[id].status != SessionStatus::Active {
            return;
        }
        self.release(id);
        let s = &mut self.sessions[id];
        s.status = SessionStatus::Completed;
        s.position_s = t - s.start_s;
        let movie = s.movie;
        self.active.remove(&id);
        self.counts.completed += 1;
        self.refresh_cache(movie);
    }

    fn on_peer_down(&mut self, t: f64, peer: PeerId) {
        if !self.cluster.peers[peer as usize].online {
            return;
        }
        self.cluster.peers[peer as usize].online = false;
        let lost = self.cluster.peers[peer as usize].clear();
        for &m in &lost {
            self.holders[Self::movie_ix(m)].remove(&peer);
            let Some(l) = self.live_lineage.remove(&(peer, m)) else { continue };
            self.lineages[l].lost_s = t;
            if self.cfg.repair_gamma > 0.0 {
                self.pending_repairs[Self::movie_ix(m)] += 1;
                let dt = Self::exp(&mut self.repair_rng, self.cfg.mean_up_s / self.cfg.repair_gamma);
                self.queue.schedule(t + dt, EventKind::RepairComplete(l));
            } else {
                self.lineages[l].ended_s = Some(t);
            }
        }

        let victims: Vec<SessionId> =
            self.active.iter().copied().filter(|&s| self.sessions[s].source == Source::Peer(peer)).collect();
        for id in victims {
            self.cluster.peers[peer as usize].active_streams -= 1;
            let movie = self.sessions[id].movie;
            match failover(&self.cluster, movie, peer) {
                FailoverOutcome::Peer(q) => {
                    self.cluster.peers[q as usize].active_streams += 1;
                    self.sessions[id].source = Source::Peer(q);
                    self.sessions[id].failover_count += 1;
                    self.counts.failovers += 1;
                }
                FailoverOutcome::Proxy => {
                    self.cluster.proxy.busy_channels += 1;
                    let s = &mut self.sessions[id];
                    s.source = Source::Proxy;
                    s.past_prefix = true;
                    s.failover_count += 1;
                    self.counts.failovers += 1;
                }
                FailoverOutcome::Exhausted => {
                    let s = &mut self.sessions[id];
                    s.status = SessionStatus::Failed;
                    s.position_s = t - s.start_s;
                    self.active.remove(&id);
                    self.counts.failed += 1;
                }
            }
            self.refresh_cache(movie);
        }
        for m in lost {
            self.refresh_cache(m);
        }
        self.schedule_churn(peer, t);
    }

    /// Least-loaded online serving peer that can take a copy of `movie`.
    fn repair_target(&self, movie: MovieId, bytes: u64) -> Option<PeerId> {
        self.cluster
            .serving_peers()
            .filter(|p| p.online && p.can_store(movie, bytes))
            .min_by_key(|p| (p.used_bytes(), p.id))
            .map(|p| p.id)
    }

    fn on_repair(&mut self, l: LineageId) {
        let movie = self.lineages[l].movie;
        self.pending_repairs[Self::movie_ix(movie)] -= 1;
        let bytes = self.cluster.catalog.get(movie).expect("catalog movie").size_bytes;
        // A repair copies from a surviving replica; with none left the
        // lineage has been absorbed.
        let target = if self.holders[Self::movie_ix(movie)].is_empty() { None } else { self.repair_target(movie, bytes) };
        match target {
            Some(p) => {
                self.cluster.peers[p as usize].store(movie, bytes);
                self.holders[Self::movie_ix(movie)].insert(p);
                self.live_lineage.insert((p, movie), l);
                // Copied from a surviving peer replica, not through the proxy.
                self.counts.repairs_completed += 1;
                self.refresh_cache(movie);
            }
            None => {
                self.lineages[l].ended_s = Some(self.lineages[l].lost_s);
                self.counts.repairs_failed += 1;
            }
        }
    }

    fn on_batch(&mut self, t: f64) -> Result<()> {
        self.queue.schedule(t + self.cfg.batch_interval_s, EventKind::ReplicationBatch);
        self.counts.batches += 1;
        let batch = RequestBatch::from_counts(&self.window_requests, self.cfg.batch_interval_s);
        self.window_requests.clear();
        if batch.is_empty() {
            return Ok(());
        }
        let plan = self.cfg.strategy.plan(&batch, &self.cluster, None, &mut self.replication_rng)?;
        for (m, r) in plan.iter() {
            self.planned[Self::movie_ix(m)] += r as f64;
        }
        self.planned_batches += 1;

        let mut deficit = ReplicationPlan::default();
        let mut weights = Vec::new();
        for (m, r) in plan.iter() {
            let ix = Self::movie_ix(m);
            let have = self.holders[ix].len() + self.pending_repairs[ix];
            if r > have {
                deficit.set(m, r - have);
                let movie = self.cluster.catalog.get(m).expect("catalog movie");
                weights.push(movie_weight(m, batch.rate(m), movie.popularity, r, self.cfg.weight_scale)?);
            }
        }
        if deficit.is_empty() {
            return Ok(());
        }
        let slots: Vec<PeerSlot> =
            self.cluster.serving_peers().filter(|p| p.online).map(PeerSlot::from_peer).collect();
        let per_round = (self.cfg.slf_round_size > 0).then_some(self.cfg.slf_round_size);
        let outcome = self.cfg.placement.place(
            &deficit,
            &weights,
            &slots,
            per_round,
            &self.cluster.catalog,
            &mut self.placement_rng,
        );
        self.counts.placement_leftover += outcome.leftover_total() as u64;
        for &(m, p) in &outcome.assignment.pairs {
            let bytes = self.cluster.catalog.get(m).expect("catalog movie").size_bytes;
            if !self.cluster.peers[p as usize].store(m, bytes) {
                continue;
            }
            self.holders[Self::movie_ix(m)].insert(p);
            let l = self.lineages.len();
            self.lineages.push(Lineage { movie: m, n: plan.get(m), created_s: t, lost_s: t, ended_s: None });
            self.live_lineage.insert((p, m), l);
            self.counts.replicas_placed += 1;
            self.util.charge_copies(t, self.cfg.replica_copy_s);
        }
        for m in 1..=self.cfg.movies as MovieId {
            self.refresh_cache(m);
        }
        Ok(())
    }

    /// Keep the whole movie in the proxy buffer only while it has no peer
    /// replica or the proxy is streaming past the prefix; otherwise only the
    /// prefix stays cached. Growth succeeds only into free space.
    fn refresh_cache(&mut self, movie: MovieId) {
        let Some(entry) = self.cluster.proxy.cache_entry(movie) else { return };
        let current = entry.bytes;
        let ix = Self::movie_ix(movie);
        let full = self.cluster.catalog.get(movie).expect("catalog movie").size_bytes;
        let streaming_body = self
            .active
            .iter()
            .any(|&s| self.sessions[s].movie == movie && self.sessions[s].on_proxy() && self.sessions[s].past_prefix);
        let target = if self.holders[ix].is_empty() || streaming_body { full } else { self.prefix_bytes[ix] };
        if target != current {
            self.cluster.proxy.resize_entry(movie, target);
        }
    }

    fn check(&self) -> std::result::Result<(), String> {
        self.cluster.check_invariants()?;
        let mut per_peer = vec![0u32; self.cluster.peers.len()];
        let mut proxy = 0u32;
        for &id in &self.active {
            let s = &self.sessions[id];
            if s.status != SessionStatus::Active {
                return Err(format!("session {id} is listed active but is {:?}", s.status));
            }
            match s.source {
                Source::Peer(p) => {
                    if !self.cluster.peers[p as usize].online {
                        return Err(format!("session {id} sourced by offline peer {p}"));
                    }
                    per_peer[p as usize] += 1;
                }
                _ => proxy += 1,
            }
        }
        for p in &self.cluster.peers {
            if per_peer[p.id as usize] != p.active_streams {
                return Err(format!("peer {} counts {} streams, sessions say {}", p.id, p.active_streams, per_peer[p.id as usize]));
            }
        }
        if proxy != self.cluster.proxy.busy_channels {
            return Err(format!("proxy counts {} channels, sessions say {proxy}", self.cluster.proxy.busy_channels));
        }
        let c = &self.counts;
        if c.completed + c.failed + self.active.len() as u64 != c.admitted {
            return Err(format!("{} completed + {} failed + {} active != {} admitted", c.completed, c.failed, self.active.len(), c.admitted));
        }
        for (ix, hs) in self.holders.iter().enumerate() {
            let m = ix as MovieId + 1;
            for &p in hs {
                let peer = &self.cluster.peers[p as usize];
                if !peer.online || !peer.holds(m) {
                    return Err(format!("holder index lists peer {p} for movie {m}"));
                }
            }
        }
        for s in &self.sessions {
            let d = self.cluster.catalog.get(s.movie).map_or(0.0, |m| m.duration_s);
            if s.position_s > d + 1e-6 {
                return Err(format!("session {} played {} of {d}", s.id, s.position_s));
            }
        }
        Ok(())
    }

    fn report(self) -> MetricsReport {
        let cfg = self.cfg;
        let replicas_per_movie = if self.planned_batches > 0 {
            self.planned.iter().map(|s| s / self.planned_batches as f64).collect()
        } else {
            vec![0.0; cfg.movies]
        };
        let terminal = self.counts.completed + self.counts.failed;
        let success = Averaged::of(self.counts.completed as f64 / terminal.max(1) as f64, if terminal > 0 { 1.0 } else { 0.0 });

        let mut by_n: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
        let mut by_movie = vec![(0.0, 0.0); cfg.movies];
        for l in &self.lineages {
            if let Some(end) = l.ended_s {
                let life = end - l.created_s;
                let e = by_n.entry(l.n).or_default();
                e.0 += life;
                e.1 += 1.0;
                let e = &mut by_movie[Self::movie_ix(l.movie)];
                e.0 += life;
                e.1 += 1.0;
            }
        }
        let lifetimes = by_n
            .into_iter()
            .map(|(n, (sum, k))| {
                let analytic = if cfg.mean_up_s > 0.0 {
                    CtmcParams::with_gamma(n, 1.0 / cfg.mean_up_s, cfg.repair_gamma)
                        .and_then(|p| mean_time_to_failure(&p))
                        .unwrap_or(f64::NAN)
                } else {
                    0.0
                };
                LifetimeRow { n, gamma: cfg.repair_gamma, mttf_analytic: analytic, mttf_empirical: Averaged::of(sum / k, k) }
            })
            .collect();

        MetricsReport {
            runs: 1,
            seeds: vec![self.seed],
            fingerprint: cfg.fingerprint(),
            config_echo: cfg.echo(),
            sweep_var: "arrival_per_hour".into(),
            sweep_value: cfg.arrival_per_hour,
            replicas_per_movie,
            success_playback_prob: success,
            counts: self.counts,
            utilization: self.util.finish(cfg.proxy_channels, cfg.proxy_buffer_bytes),
            lifetimes,
            mean_replica_lifetime_s: by_movie.into_iter().map(|(s, k)| Averaged::of(if k > 0.0 { s / k } else { 0.0 }, k)).collect(),
        }
    }
}

/// Run one seed.
pub fn run(cfg: &SimConfig, seed: u64) -> Result<MetricsReport> {
    Simulation::new(cfg, seed)?.run()
}

/// Run one seed, checking conservation invariants after every event.
pub fn run_audited(cfg: &SimConfig, seed: u64) -> Result<MetricsReport> {
    Simulation::new(cfg, seed)?.with_audit(true).run()
}

/// Run every configured seed in parallel and merge the reports.
pub fn run_seeds(cfg: &SimConfig) -> Result<MetricsReport> {
    use rayon::prelude::*;
    cfg.validate()?;
    let reports: Vec<MetricsReport> = cfg.seeds.par_iter().map(|&s| run(cfg, s)).collect::<Result<_>>()?;
    MetricsReport::merge(&reports)
}
