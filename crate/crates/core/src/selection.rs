//! Least Load First source selection and failover.

use crate::cluster::{Cluster, MovieId, PeerId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResourceSnapshot {
    pub peer: PeerId,
    pub free_uplink_channels: u32,
    pub online: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selection {
    Peer(PeerId),
    ProxyFallback,
}

/// Pick the candidate with the most free uplink channels (lowest id on ties)
/// among those online with at least one free channel.
pub fn least_load_first(candidates: &[ResourceSnapshot]) -> Selection {
    let mut sorted: Vec<&ResourceSnapshot> = candidates.iter().collect();
    sorted.sort_by(|a, b| b.free_uplink_channels.cmp(&a.free_uplink_channels).then(a.peer.cmp(&b.peer)));
    sorted
        .into_iter()
        .find(|c| c.online && c.free_uplink_channels >= 1)
        .map_or(Selection::ProxyFallback, |c| Selection::Peer(c.peer))
}

/// Current snapshots of the registered serving peers holding `movie`.
pub fn discover(cluster: &Cluster, movie: MovieId, exclude: Option<PeerId>) -> Vec<ResourceSnapshot> {
    cluster
        .proxy
        .registry()
        .keys()
        .filter_map(|id| cluster.peers.get(*id as usize))
        .filter(|p| Some(p.id) != exclude && p.holds(movie))
        .map(|p| ResourceSnapshot { peer: p.id, free_uplink_channels: p.free_channels(), online: p.online })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailoverOutcome {
    Peer(PeerId),
    Proxy,
    /// No peer and no proxy channel: playback fails.
    Exhausted,
}

/// Re-select a source after `failed` dropped a stream of `movie`.
pub fn failover(cluster: &Cluster, movie: MovieId, failed: PeerId) -> FailoverOutcome {
    match least_load_first(&discover(cluster, movie, Some(failed))) {
        Selection::Peer(p) => FailoverOutcome::Peer(p),
        Selection::ProxyFallback if cluster.proxy.free_channels() > 0 => FailoverOutcome::Proxy,
        Selection::ProxyFallback => FailoverOutcome::Exhausted,
    }
}
