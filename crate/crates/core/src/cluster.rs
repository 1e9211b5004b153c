//! Domain model of one cluster: the movie catalog, serving and non-serving
//! peers, and the proxy server with its LFU-managed buffer and peer registry.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::replication::ReplicationPlan;

pub type MovieId = u32;
pub type PeerId = u32;

/// A catalog entry. Ids are popularity ranks starting at 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Movie {
    pub id: MovieId,
    pub size_bytes: u64,
    pub duration_s: f64,
    pub popularity: f64,
    /// Mean request rate in requests per second.
    pub arrival_rate: f64,
    /// Minimum channels needed to stream the movie.
    pub channels: u32,
    pub num_blocks: u32,
}

impl Movie {
    pub fn validate(&self) -> Result<()> {
        let field = |name: &str, v: String, why: &str| Error::invalid(&format!("movie {}.{name}", self.id), v, why);
        if self.size_bytes == 0 {
            return Err(field("size_bytes", "0".into(), "must be positive"));
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(field("duration_s", self.duration_s.to_string(), "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.popularity) {
            return Err(field("popularity", self.popularity.to_string(), "must lie in [0, 1]"));
        }
        if self.channels == 0 {
            return Err(field("channels", "0".into(), "must be at least 1"));
        }
        if self.num_blocks == 0 {
            return Err(field("num_blocks", "0".into(), "must be at least 1"));
        }
        Ok(())
    }
}

/// Movies indexed by rank; `movies[i].id == i + 1`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Catalog {
    movies: Vec<Movie>,
}

impl Catalog {
    pub fn new(movies: Vec<Movie>) -> Result<Self> {
        for (i, m) in movies.iter().enumerate() {
            if m.id as usize != i + 1 {
                return Err(Error::invalid("catalog", m.id, format!("expected id {}", i + 1)));
            }
            m.validate()?;
        }
        Ok(Catalog { movies })
    }

    pub fn get(&self, id: MovieId) -> Option<&Movie> {
        (id as usize).checked_sub(1).and_then(|i| self.movies.get(i))
    }

    pub fn movie(&self, id: MovieId) -> Result<&Movie> {
        self.get(id).ok_or(Error::UnknownMovie(id))
    }

    pub fn len(&self) -> usize {
        self.movies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.movies.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Movie> {
        self.movies.iter()
    }

    pub fn as_slice(&self) -> &[Movie] {
        &self.movies
    }

    /// Total channel demand `C`.
    pub fn total_channels(&self) -> u64 {
        self.movies.iter().map(|m| m.channels as u64).sum()
    }

    pub fn popularity(&self, id: MovieId) -> f64 {
        self.get(id).map_or(0.0, |m| m.popularity)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChurnProfile {
    pub mean_up_s: f64,
    pub mean_dn_s: f64,
}

impl ChurnProfile {
    pub fn new(mean_up_s: f64, mean_dn_s: f64) -> Result<Self> {
        let c = ChurnProfile { mean_up_s, mean_dn_s };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let (up, down) = (self.mean_up_s, self.mean_dn_s);
        if !(up >= 0.0 && down >= 0.0 && up.is_finite() && down.is_finite()) {
            return Err(Error::InvalidChurn { up, down });
        }
        if up + down <= 0.0 {
            return Err(Error::DegenerateChurn);
        }
        Ok(())
    }

    /// Churn profile with the given long-run availability and mean uptime.
    pub fn with_availability(mean_up_s: f64, a_up: f64) -> Result<Self> {
        if !(a_up > 0.0 && a_up <= 1.0) {
            return Err(Error::invalid("availability", a_up, "must lie in (0, 1]"));
        }
        Self::new(mean_up_s, mean_up_s * (1.0 - a_up) / a_up)
    }
}

/// Long-run probabilities `(A_up, A_dn)` that a peer with this churn profile
/// is online or offline.
pub fn availability(churn: &ChurnProfile) -> Result<(f64, f64)> {
    churn.validate()?;
    let total = churn.mean_up_s + churn.mean_dn_s;
    let up = churn.mean_up_s / total;
    Ok((up, churn.mean_dn_s / total))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Serving,
    NonServing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Peer {
    pub id: PeerId,
    pub role: Role,
    pub storage_bytes: u64,
    pub max_movies: usize,
    pub uplink_channels: u32,
    pub churn: ChurnProfile,
    pub online: bool,
    /// Stored replicas, movie id to bytes.
    stored: BTreeMap<MovieId, u64>,
    used_bytes: u64,
    pub active_streams: u32,
}

impl Peer {
    pub fn new(id: PeerId, role: Role, storage_bytes: u64, max_movies: usize, uplink_channels: u32, churn: ChurnProfile) -> Self {
        Peer {
            id,
            role,
            storage_bytes,
            max_movies,
            uplink_channels,
            churn,
            online: true,
            stored: BTreeMap::new(),
            used_bytes: 0,
            active_streams: 0,
        }
    }

    pub fn is_serving(&self) -> bool {
        self.role == Role::Serving
    }

    pub fn holds(&self, movie: MovieId) -> bool {
        self.stored.contains_key(&movie)
    }

    pub fn stored(&self) -> impl Iterator<Item = MovieId> + '_ {
        self.stored.keys().copied()
    }

    pub fn stored_count(&self) -> usize {
        self.stored.len()
    }

    pub fn used_bytes(&self) -> u64 {
        self.used_bytes
    }

    pub fn free_bytes(&self) -> u64 {
        self.storage_bytes.saturating_sub(self.used_bytes)
    }

    pub fn free_channels(&self) -> u32 {
        self.uplink_channels.saturating_sub(self.active_streams)
    }

    /// Whether a new replica of `movie` with `bytes` could be stored here.
    pub fn can_store(&self, movie: MovieId, bytes: u64) -> bool {
        self.is_serving()
            && !self.holds(movie)
            && self.free_bytes() >= bytes
            && self.stored.len() < self.max_movies
    }

    /// Store a replica. Returns false (and changes nothing) if not storable.
    pub fn store(&mut self, movie: MovieId, bytes: u64) -> bool {
        if !self.can_store(movie, bytes) {
            return false;
        }
        self.stored.insert(movie, bytes);
        self.used_bytes += bytes;
        true
    }

    pub fn remove(&mut self, movie: MovieId) -> bool {
        match self.stored.remove(&movie) {
            Some(bytes) => {
                self.used_bytes -= bytes;
                true
            }
            None => false,
        }
    }

    /// Drop every stored replica, returning the ids that were held.
    pub fn clear(&mut self) -> Vec<MovieId> {
        let lost: Vec<_> = self.stored.keys().copied().collect();
        self.stored.clear();
        self.used_bytes = 0;
        lost
    }

    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let sum: u64 = self.stored.values().sum();
        if sum != self.used_bytes || sum > self.storage_bytes {
            return Err(format!("peer {}: stored {} bytes, capacity {}", self.id, sum, self.storage_bytes));
        }
        if self.stored.len() > self.max_movies {
            return Err(format!("peer {}: {} movies over cap {}", self.id, self.stored.len(), self.max_movies));
        }
        if self.active_streams > self.uplink_channels {
            return Err(format!("peer {}: {} streams over {} channels", self.id, self.active_streams, self.uplink_channels));
        }
        if !self.is_serving() && !self.stored.is_empty() {
            return Err(format!("non-serving peer {} stores movies", self.id));
        }
        Ok(())
    }
}

/// Resources a peer hands to the proxy when volunteering as a serving peer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeerResources {
    pub storage_bytes: u64,
    pub uplink_channels: u32,
    pub churn: ChurnProfile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CacheEntry {
    pub bytes: u64,
    /// Requests seen while cached; reported only, eviction uses popularity.
    pub requests: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProxyServer {
    pub bandwidth_channels: u32,
    pub buffer_bytes: u64,
    pub busy_channels: u32,
    cached: BTreeMap<MovieId, CacheEntry>,
    used_bytes: u64,
    registry: BTreeMap<PeerId, PeerResources>,
}

impl ProxyServer {
    pub fn new(bandwidth_channels: u32, buffer_bytes: u64) -> Self {
        ProxyServer {
            bandwidth_channels,
            buffer_bytes,
            busy_channels: 0,
            cached: BTreeMap::new(),
            used_bytes: 0,
            registry: BTreeMap::new(),
        }
    }

    pub fn free_channels(&self) -> u32 {
        self.bandwidth_channels.saturating_sub(self.busy_channels)
    }

    pub fn cache_entry(&self, movie: MovieId) -> Option<&CacheEntry> {
        self.cached.get(&movie)
    }

    pub fn cached(&self) -> impl Iterator<Item = (MovieId, &CacheEntry)> {
        self.cached.iter().map(|(k, v)| (*k, v))
    }

    pub fn used_bytes(&self) -> u64 {
        self.used_bytes
    }

    pub fn free_bytes(&self) -> u64 {
        self.buffer_bytes.saturating_sub(self.used_bytes)
    }

    pub fn note_request(&mut self, movie: MovieId) {
        if let Some(e) = self.cached.get_mut(&movie) {
            e.requests += 1;
        }
    }

    /// Resize a cached entry in place. Growing only succeeds into free space.
    pub fn resize_entry(&mut self, movie: MovieId, bytes: u64) -> bool {
        let free = self.free_bytes();
        let Some(e) = self.cached.get_mut(&movie) else {
            return false;
        };
        if bytes > e.bytes && bytes - e.bytes > free {
            return false;
        }
        self.used_bytes = self.used_bytes - e.bytes + bytes;
        e.bytes = bytes;
        true
    }

    pub fn registry(&self) -> &BTreeMap<PeerId, PeerResources> {
        &self.registry
    }

    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let sum: u64 = self.cached.values().map(|e| e.bytes).sum();
        if sum != self.used_bytes || sum > self.buffer_bytes {
            return Err(format!("proxy caches {sum} bytes, capacity {}", self.buffer_bytes));
        }
        if self.busy_channels > self.bandwidth_channels {
            return Err(format!("proxy uses {} of {} channels", self.busy_channels, self.bandwidth_channels));
        }
        Ok(())
    }
}

/// Storage with LFU-by-popularity replacement, implemented by the proxy
/// buffer and by peers.
pub trait MovieStore {
    fn capacity_bytes(&self) -> u64;
    fn used_bytes(&self) -> u64;
    fn max_entries(&self) -> Option<usize>;
    fn entries(&self) -> Vec<(MovieId, u64)>;
    fn contains(&self, movie: MovieId) -> bool;
    fn insert(&mut self, movie: MovieId, bytes: u64);
    fn evict(&mut self, movie: MovieId);
}

impl MovieStore for ProxyServer {
    fn capacity_bytes(&self) -> u64 {
        self.buffer_bytes
    }
    fn used_bytes(&self) -> u64 {
        self.used_bytes
    }
    fn max_entries(&self) -> Option<usize> {
        None
    }
    fn entries(&self) -> Vec<(MovieId, u64)> {
        self.cached.iter().map(|(k, e)| (*k, e.bytes)).collect()
    }
    fn contains(&self, movie: MovieId) -> bool {
        self.cached.contains_key(&movie)
    }
    fn insert(&mut self, movie: MovieId, bytes: u64) {
        self.used_bytes += bytes;
        self.cached.insert(movie, CacheEntry { bytes, requests: 0 });
    }
    fn evict(&mut self, movie: MovieId) {
        if let Some(e) = self.cached.remove(&movie) {
            self.used_bytes -= e.bytes;
        }
    }
}

impl MovieStore for Peer {
    fn capacity_bytes(&self) -> u64 {
        self.storage_bytes
    }
    fn used_bytes(&self) -> u64 {
        self.used_bytes
    }
    fn max_entries(&self) -> Option<usize> {
        Some(self.max_movies)
    }
    fn entries(&self) -> Vec<(MovieId, u64)> {
        self.stored.iter().map(|(k, v)| (*k, *v)).collect()
    }
    fn contains(&self, movie: MovieId) -> bool {
        self.holds(movie)
    }
    fn insert(&mut self, movie: MovieId, bytes: u64) {
        self.stored.insert(movie, bytes);
        self.used_bytes += bytes;
    }
    fn evict(&mut self, movie: MovieId) {
        self.remove(movie);
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LfuOutcome {
    Stored { evicted: Vec<MovieId> },
    Rejected(LfuRejection),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LfuRejection {
    AlreadyStored,
    /// Larger than the whole store.
    TooLarge,
    /// Not enough space can be freed by evicting strictly less popular movies.
    LessPopular,
}

/// Place `movie` into `store`, evicting strictly less popular movies (least
/// popular first, higher id first on ties) when space is short. The store is
/// left untouched on rejection.
pub fn lfu_place<S: MovieStore>(store: &mut S, movie: &Movie, popularity: impl Fn(MovieId) -> f64) -> LfuOutcome {
    if store.contains(movie.id) {
        return LfuOutcome::Rejected(LfuRejection::AlreadyStored);
    }
    let size = movie.size_bytes;
    let cap = store.capacity_bytes();
    if size > cap || store.max_entries() == Some(0) {
        return LfuOutcome::Rejected(LfuRejection::TooLarge);
    }
    let entries = store.entries();
    let fits = |used: u64, count: usize| used + size <= cap && store.max_entries().is_none_or(|max| count < max);

    let mut used = store.used_bytes();
    let mut count = entries.len();
    let mut victims = Vec::new();
    if !fits(used, count) {
        let mut candidates: Vec<(f64, MovieId, u64)> = entries
            .iter()
            .map(|&(id, bytes)| (popularity(id), id, bytes))
            .filter(|&(p, _, _)| p < movie.popularity)
            .collect();
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
        for (_, id, bytes) in candidates {
            victims.push(id);
            used -= bytes;
            count -= 1;
            if fits(used, count) {
                break;
            }
        }
        if !fits(used, count) {
            return LfuOutcome::Rejected(LfuRejection::LessPopular);
        }
    }
    for &v in &victims {
        store.evict(v);
    }
    store.insert(movie.id, size);
    LfuOutcome::Stored { evicted: victims }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub proxy: ProxyServer,
    /// Indexed by peer id.
    pub peers: Vec<Peer>,
    pub catalog: Catalog,
}

impl Cluster {
    pub fn new(proxy: ProxyServer, peers: Vec<Peer>, catalog: Catalog) -> Result<Self> {
        for (i, p) in peers.iter().enumerate() {
            if p.id as usize != i {
                return Err(Error::invalid("peers", p.id, format!("expected id {i}")));
            }
        }
        Ok(Cluster { proxy, peers, catalog })
    }

    pub fn peer(&self, id: PeerId) -> Result<&Peer> {
        self.peers.get(id as usize).ok_or(Error::UnknownPeer(id))
    }

    pub fn peer_mut(&mut self, id: PeerId) -> Result<&mut Peer> {
        self.peers.get_mut(id as usize).ok_or(Error::UnknownPeer(id))
    }

    pub fn serving_peers(&self) -> impl Iterator<Item = &Peer> {
        self.peers.iter().filter(|p| p.is_serving())
    }

    pub fn serving_count(&self) -> usize {
        self.serving_peers().count()
    }

    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        if self.serving_count() > self.peers.len() {
            return Err("more serving peers than peers".into());
        }
        for p in &self.peers {
            p.check_invariants()?;
            if let Some(m) = p.stored().find(|m| self.catalog.get(*m).is_none()) {
                return Err(format!("peer {} stores unknown movie {m}", p.id));
            }
        }
        for id in self.proxy.registry.keys() {
            match self.peers.get(*id as usize) {
                Some(p) if p.is_serving() => {}
                _ => return Err(format!("registry lists peer {id} which is not serving")),
            }
        }
        self.proxy.check_invariants()
    }
}

/// Which capacity constraint a replication plan breaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Violation {
    Storage { required: u64, available: u64 },
    Channels { required: u64, available: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Validity {
    Valid,
    Invalid(Vec<Violation>),
}

impl Validity {
    pub fn is_valid(&self) -> bool {
        matches!(self, Validity::Valid)
    }

    pub fn storage_ok(&self) -> bool {
        match self {
            Validity::Valid => true,
            Validity::Invalid(v) => !v.iter().any(|v| matches!(v, Violation::Storage { .. })),
        }
    }
}

/// Check a plan against aggregate serving-peer storage and uplink channels.
pub fn valid_replication(plan: &ReplicationPlan, cluster: &Cluster) -> Validity {
    let required: u64 = plan
        .iter()
        .map(|(m, r)| cluster.catalog.get(m).map_or(0, |mv| mv.size_bytes) * r as u64)
        .sum();
    let available: u64 = cluster.serving_peers().map(|p| p.storage_bytes).sum();
    let channels: u64 = cluster.serving_peers().map(|p| p.uplink_channels as u64).sum();
    let demand = cluster.catalog.total_channels();

    let mut violations = Vec::new();
    if required > available {
        violations.push(Violation::Storage { required, available });
    }
    if channels < demand {
        violations.push(Violation::Channels { required: demand, available: channels });
    }
    if violations.is_empty() {
        Validity::Valid
    } else {
        Validity::Invalid(violations)
    }
}

/// Record a peer's volunteered resources at the proxy and promote it to a
/// serving peer. Returns `true` if the peer was newly registered; repeated
/// registrations leave the registry untouched.
pub fn register_serving_peer(cluster: &mut Cluster, peer_id: PeerId, resources: PeerResources) -> Result<bool> {
    let peer = cluster.peers.get_mut(peer_id as usize).ok_or(Error::UnknownPeer(peer_id))?;
    if cluster.proxy.registry.contains_key(&peer_id) {
        return Ok(false);
    }
    resources.churn.validate()?;
    peer.role = Role::Serving;
    peer.storage_bytes = resources.storage_bytes;
    peer.uplink_channels = resources.uplink_channels;
    peer.churn = resources.churn;
    cluster.proxy.registry.insert(peer_id, resources);
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;

    const GB: u64 = 1_000_000_000;

    fn movie(id: MovieId, popularity: f64, size: u64) -> Movie {
        Movie {
            id,
            size_bytes: size,
            duration_s: 7200.0,
            popularity,
            arrival_rate: 0.0,
            channels: 1,
            num_blocks: 100,
        }
    }

    fn churn() -> ChurnProfile {
        ChurnProfile::new(3600.0, 32400.0).unwrap()
    }

    fn serving(id: PeerId, storage: u64, uplink: u32) -> Peer {
        Peer::new(id, Role::Serving, storage, 10, uplink, churn())
    }

    #[test]
    fn availability_of_default_churn_means() {
        let (up, down) = availability(&churn()).unwrap();
        assert_eq!(up, 0.1);
        assert_eq!(down, 0.9);
    }

    #[test]
    fn availability_edge_profiles() {
        assert_eq!(availability(&ChurnProfile { mean_up_s: 50.0, mean_dn_s: 50.0 }).unwrap().0, 0.5);
        assert_eq!(availability(&ChurnProfile { mean_up_s: 0.0, mean_dn_s: 10.0 }).unwrap().0, 0.0);
        assert!(matches!(
            availability(&ChurnProfile { mean_up_s: 0.0, mean_dn_s: 0.0 }),
            Err(Error::DegenerateChurn)
        ));
        assert!(ChurnProfile::new(-1.0, 5.0).is_err());
    }

    #[test]
    fn churn_from_availability() {
        let c = ChurnProfile::with_availability(3600.0, 0.1).unwrap();
        assert!((c.mean_dn_s - 32400.0).abs() < 1e-9);
    }

    fn two_peer_cluster(storage: u64, uplink: u32, movies: usize) -> Cluster {
        let catalog = Catalog::new((1..=movies as u32).map(|i| movie(i, 1.0 / movies as f64, GB)).collect()).unwrap();
        Cluster::new(
            ProxyServer::new(10, 5 * GB),
            vec![serving(0, storage, uplink), serving(1, storage, uplink)],
            catalog,
        )
        .unwrap()
    }

    #[test]
    fn validity_storage_boundary_is_inclusive() {
        let cluster = two_peer_cluster(2 * GB, 1, 2);
        let exact = ReplicationPlan::from_counts([(1, 2), (2, 2)]);
        assert_eq!(valid_replication(&exact, &cluster), Validity::Valid);

        let mut cluster = cluster;
        cluster.peers[1].storage_bytes -= 1;
        let v = valid_replication(&exact, &cluster);
        assert_eq!(
            v,
            Validity::Invalid(vec![Violation::Storage { required: 4 * GB, available: 4 * GB - 1 }])
        );
    }

    #[test]
    fn validity_channel_shortfall() {
        let cluster = two_peer_cluster(10 * GB, 1, 3);
        let v = valid_replication(&ReplicationPlan::default(), &cluster);
        assert_eq!(v, Validity::Invalid(vec![Violation::Channels { required: 3, available: 2 }]));
        assert!(v.storage_ok());
    }

    fn pops(id: MovieId) -> f64 {
        match id {
            1 => 0.5,
            2 => 0.3,
            3 => 0.4,
            4 => 0.2,
            5 => 0.3,
            _ => 0.0,
        }
    }

    #[test]
    fn lfu_stores_without_eviction_when_space_is_free() {
        let mut p = serving(0, 3 * GB, 1);
        assert_eq!(lfu_place(&mut p, &movie(1, 0.5, GB), pops), LfuOutcome::Stored { evicted: vec![] });
        assert!(p.holds(1));
    }

    #[test]
    fn lfu_evicts_least_popular_below_newcomer() {
        let mut p = serving(0, 2 * GB, 1);
        lfu_place(&mut p, &movie(1, 0.5, GB), pops);
        lfu_place(&mut p, &movie(2, 0.3, GB), pops);
        let out = lfu_place(&mut p, &movie(3, 0.4, GB), pops);
        assert_eq!(out, LfuOutcome::Stored { evicted: vec![2] });
        assert_eq!(p.stored().collect::<Vec<_>>(), vec![1, 3]);
    }

    #[test]
    fn lfu_rejects_less_popular_newcomer() {
        let mut p = serving(0, 2 * GB, 1);
        lfu_place(&mut p, &movie(1, 0.5, GB), pops);
        lfu_place(&mut p, &movie(2, 0.3, GB), pops);
        let before = p.clone();
        assert_eq!(lfu_place(&mut p, &movie(4, 0.2, GB), pops), LfuOutcome::Rejected(LfuRejection::LessPopular));
        assert_eq!(p, before);
    }

    #[test]
    fn lfu_rejects_oversized_movie() {
        let mut proxy = ProxyServer::new(1, GB);
        assert_eq!(
            lfu_place(&mut proxy, &movie(1, 0.9, 2 * GB), pops),
            LfuOutcome::Rejected(LfuRejection::TooLarge)
        );
    }

    #[test]
    fn lfu_tie_evicts_higher_id() {
        let mut p = serving(0, 2 * GB, 1);
        lfu_place(&mut p, &movie(2, 0.3, GB), pops);
        lfu_place(&mut p, &movie(5, 0.3, GB), pops);
        let out = lfu_place(&mut p, &movie(1, 0.5, GB), pops);
        assert_eq!(out, LfuOutcome::Stored { evicted: vec![5] });
    }

    #[test]
    fn lfu_respects_peer_movie_cap() {
        let mut p = Peer::new(0, Role::Serving, 100 * GB, 1, 1, churn());
        lfu_place(&mut p, &movie(2, 0.3, GB), pops);
        assert_eq!(lfu_place(&mut p, &movie(1, 0.5, GB), pops), LfuOutcome::Stored { evicted: vec![2] });
        assert_eq!(p.stored_count(), 1);
    }

    #[test]
    fn register_is_idempotent() {
        let mut cluster = two_peer_cluster(GB, 1, 1);
        cluster.peers.push(Peer::new(2, Role::NonServing, 0, 10, 1, churn()));
        let res = PeerResources { storage_bytes: 3 * GB, uplink_channels: 2, churn: churn() };
        assert!(register_serving_peer(&mut cluster, 2, res).unwrap());
        assert_eq!(cluster.proxy.registry().len(), 1);
        assert_eq!(cluster.peers[2].role, Role::Serving);

        let other = PeerResources { storage_bytes: GB, ..res };
        assert!(!register_serving_peer(&mut cluster, 2, other).unwrap());
        assert_eq!(cluster.proxy.registry()[&2], res);
        assert!(matches!(register_serving_peer(&mut cluster, 9, res), Err(Error::UnknownPeer(9))));
        cluster.check_invariants().unwrap();
    }

    #[test]
    fn peer_store_rejects_duplicates_and_overflow() {
        let mut p = serving(0, 2 * GB, 1);
        assert!(p.store(1, GB));
        assert!(!p.store(1, GB));
        assert!(p.store(2, GB));
        assert!(!p.store(3, GB));
        p.check_invariants().unwrap();
        assert_eq!(p.clear(), vec![1, 2]);
        assert_eq!(p.used_bytes(), 0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn availability_sums_to_one(up in 0.0f64..1e6, down in 0.0f64..1e6) {
                prop_assume!(up + down > 0.0);
                let (a, d) = availability(&ChurnProfile { mean_up_s: up, mean_dn_s: down }).unwrap();
                prop_assert!((a + d - 1.0).abs() <= 1e-12);
            }

            #[test]
            fn removing_a_replica_keeps_plan_valid(counts in proptest::collection::vec(0usize..4, 1..6)) {
                let cluster = two_peer_cluster(6 * GB, 3, counts.len());
                let plan = ReplicationPlan::from_counts(counts.iter().enumerate().map(|(i, c)| (i as u32 + 1, *c)));
                if valid_replication(&plan, &cluster).is_valid() {
                    for (m, r) in plan.iter() {
                        if r > 0 {
                            let mut smaller = plan.clone();
                            smaller.set(m, r - 1);
                            prop_assert!(valid_replication(&smaller, &cluster).is_valid());
                        }
                    }
                }
            }

            #[test]
            fn lfu_keeps_capacity_and_never_lowers_min_on_reject(
                seq in proptest::collection::vec((1u32..8, 1u64..4), 1..30),
            ) {
                let pop = |id: MovieId| 1.0 / id as f64;
                let mut p = Peer::new(0, Role::Serving, 5, 3, 1, ChurnProfile { mean_up_s: 1.0, mean_dn_s: 1.0 });
                for (id, size) in seq {
                    let m = Movie { size_bytes: size, ..movie(id, pop(id), size) };
                    let min_before = p.stored().map(pop).fold(f64::INFINITY, f64::min);
                    let before = p.clone();
                    match lfu_place(&mut p, &m, pop) {
                        LfuOutcome::Rejected(_) => {
                            prop_assert_eq!(&p, &before);
                            let min_after = p.stored().map(pop).fold(f64::INFINITY, f64::min);
                            prop_assert!(min_after >= min_before);
                        }
                        LfuOutcome::Stored { .. } => prop_assert!(p.holds(id)),
                    }
                    prop_assert!(p.check_invariants().is_ok());
                    let ids: Vec<_> = p.stored().collect();
                    let mut dedup = ids.clone();
                    dedup.dedup();
                    prop_assert_eq!(ids, dedup);
                }
            }
        }
    }
}
