//! Flat `key = value` experiment configuration.

use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::placement::PlacementPolicy;
use crate::replication::Strategy;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub peers: usize,
    pub serving_fraction: f64,
    pub movies: usize,
    pub zipf_skew: f64,
    pub arrival_per_hour: f64,
    pub movie_duration_s: f64,
    pub movie_size_bytes: u64,
    pub num_blocks: u32,
    pub mean_up_s: f64,
    pub mean_dn_s: f64,
    pub max_movies_per_peer: usize,
    /// Serving peer uplink as a multiple of the non-serving uplink.
    pub uplink_ratio: u32,
    pub base_uplink_channels: u32,
    pub strategy: Strategy,
    pub placement: PlacementPolicy,
    /// Replicas per SLF round; 0 means one per peer with a free slot.
    pub slf_round_size: usize,
    pub weight_scale: f64,
    pub batch_interval_s: f64,
    /// Repair rate over failure rate; repair mean is `mean_up_s / repair_gamma`.
    pub repair_gamma: f64,
    pub handoff_fraction: f64,
    pub proxy_channels: u32,
    pub proxy_buffer_bytes: u64,
    /// Proxy channel-seconds charged per replica copy.
    pub replica_copy_s: f64,
    pub sim_duration_s: f64,
    pub seeds: Vec<u64>,
    pub out_dir: String,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            peers: 1500,
            serving_fraction: 0.2,
            movies: 20,
            zipf_skew: 0.271,
            arrival_per_hour: 300.0,
            movie_duration_s: 7200.0,
            movie_size_bytes: 1_000_000_000,
            num_blocks: 100,
            mean_up_s: 3600.0,
            mean_dn_s: 32400.0,
            max_movies_per_peer: 10,
            uplink_ratio: 2,
            base_uplink_channels: 1,
            strategy: Strategy::Proposed,
            placement: PlacementPolicy::SmallestLoadFirst,
            slf_round_size: 0,
            weight_scale: 1.0,
            batch_interval_s: 600.0,
            repair_gamma: 1.0,
            handoff_fraction: 0.1,
            proxy_channels: 120,
            proxy_buffer_bytes: 5_000_000_000,
            replica_copy_s: 60.0,
            sim_duration_s: 14400.0,
            seeds: vec![1],
            out_dir: "out".to_string(),
        }
    }
}

pub const KEYS: &[&str] = &[
    "peers",
    "serving_fraction",
    "movies",
    "zipf_skew",
    "arrival_per_hour",
    "movie_duration_s",
    "movie_size_bytes",
    "num_blocks",
    "mean_up_s",
    "mean_dn_s",
    "max_movies_per_peer",
    "uplink_ratio",
    "base_uplink_channels",
    "strategy",
    "placement",
    "slf_round_size",
    "weight_scale",
    "batch_interval_s",
    "repair_gamma",
    "handoff_fraction",
    "proxy_channels",
    "proxy_buffer_bytes",
    "replica_copy_s",
    "sim_duration_s",
    "seeds",
    "out_dir",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value.parse().map_err(|e: T::Err| Error::invalid(key, value, e))
}

/// Integers may be written in float notation (`5e9`) as long as they are whole.
fn parse_count<T: TryFrom<u64>>(key: &str, value: &str) -> Result<T> {
    let n = match value.parse::<u64>() {
        Ok(n) => n,
        Err(_) => {
            let f: f64 = parse(key, value)?;
            if !(f >= 0.0 && f.fract() == 0.0 && f < u64::MAX as f64) {
                return Err(Error::invalid(key, value, "expected a nonnegative integer"));
            }
            f as u64
        }
    };
    T::try_from(n).map_err(|_| Error::invalid(key, value, "out of range"))
}

fn parse_seeds(value: &str) -> Result<Vec<u64>> {
    let inner = value.trim().trim_start_matches('[').trim_end_matches(']');
    let seeds: Vec<u64> = inner
        .split([',', ';'])
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse("seeds", s))
        .collect::<Result<_>>()?;
    if seeds.is_empty() {
        return Err(Error::invalid("seeds", value, "at least one seed is required"));
    }
    Ok(seeds)
}

fn unquote(value: &str) -> &str {
    let v = value.trim();
    v.strip_prefix('"').and_then(|s| s.strip_suffix('"')).unwrap_or(v)
}

impl SimConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = unquote(value);
        match key {
            "peers" => self.peers = parse_count(key, value)?,
            "serving_fraction" => self.serving_fraction = parse(key, value)?,
            "movies" => self.movies = parse_count(key, value)?,
            "zipf_skew" => self.zipf_skew = parse(key, value)?,
            "arrival_per_hour" => self.arrival_per_hour = parse(key, value)?,
            "movie_duration_s" => self.movie_duration_s = parse(key, value)?,
            "movie_size_bytes" => self.movie_size_bytes = parse_count(key, value)?,
            "num_blocks" => self.num_blocks = parse_count(key, value)?,
            "mean_up_s" => self.mean_up_s = parse(key, value)?,
            "mean_dn_s" => self.mean_dn_s = parse(key, value)?,
            "max_movies_per_peer" => self.max_movies_per_peer = parse_count(key, value)?,
            "uplink_ratio" => self.uplink_ratio = parse_count(key, value)?,
            "base_uplink_channels" => self.base_uplink_channels = parse_count(key, value)?,
            "strategy" => self.strategy = value.parse()?,
            "placement" => self.placement = value.parse()?,
            "slf_round_size" => self.slf_round_size = parse_count(key, value)?,
            "weight_scale" => self.weight_scale = parse(key, value)?,
            "batch_interval_s" => self.batch_interval_s = parse(key, value)?,
            "repair_gamma" => self.repair_gamma = parse(key, value)?,
            "handoff_fraction" => self.handoff_fraction = parse(key, value)?,
            "proxy_channels" => self.proxy_channels = parse_count(key, value)?,
            "proxy_buffer_bytes" => self.proxy_buffer_bytes = parse_count(key, value)?,
            "replica_copy_s" => self.replica_copy_s = parse(key, value)?,
            "sim_duration_s" => self.sim_duration_s = parse(key, value)?,
            "seeds" => self.seeds = parse_seeds(value)?,
            "out_dir" => self.out_dir = value.to_string(),
            _ => return Err(Error::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Apply `key = value` lines on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Syntax {
                line: i + 1,
                reason: format!("expected `key = value`, got `{line}`"),
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Read { path: path.to_path_buf(), source })?;
        let mut cfg = SimConfig::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    pub fn get(&self, key: &str) -> Result<String> {
        Ok(match key {
            "peers" => self.peers.to_string(),
            "serving_fraction" => self.serving_fraction.to_string(),
            "movies" => self.movies.to_string(),
            "zipf_skew" => self.zipf_skew.to_string(),
            "arrival_per_hour" => self.arrival_per_hour.to_string(),
            "movie_duration_s" => self.movie_duration_s.to_string(),
            "movie_size_bytes" => self.movie_size_bytes.to_string(),
            "num_blocks" => self.num_blocks.to_string(),
            "mean_up_s" => self.mean_up_s.to_string(),
            "mean_dn_s" => self.mean_dn_s.to_string(),
            "max_movies_per_peer" => self.max_movies_per_peer.to_string(),
            "uplink_ratio" => self.uplink_ratio.to_string(),
            "base_uplink_channels" => self.base_uplink_channels.to_string(),
            "strategy" => self.strategy.to_string(),
            "placement" => self.placement.to_string(),
            "slf_round_size" => self.slf_round_size.to_string(),
            "weight_scale" => self.weight_scale.to_string(),
            "batch_interval_s" => self.batch_interval_s.to_string(),
            "repair_gamma" => self.repair_gamma.to_string(),
            "handoff_fraction" => self.handoff_fraction.to_string(),
            "proxy_channels" => self.proxy_channels.to_string(),
            "proxy_buffer_bytes" => self.proxy_buffer_bytes.to_string(),
            "replica_copy_s" => self.replica_copy_s.to_string(),
            "sim_duration_s" => self.sim_duration_s.to_string(),
            "seeds" => self.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(";"),
            "out_dir" => self.out_dir.clone(),
            _ => return Err(Error::UnknownKey(key.to_string())),
        })
    }

    /// Every effective key and value, in declaration order. Values use the
    /// shortest round-tripping form, so feeding the echo back through
    /// [`SimConfig::set`] reproduces the config.
    pub fn echo(&self) -> Vec<(String, String)> {
        KEYS.iter().map(|k| (k.to_string(), self.get(k).expect("known key"))).collect()
    }

    /// Identity of the simulated system: the echo without seeds or output
    /// location. Runs with equal fingerprints may be merged.
    pub fn fingerprint(&self) -> String {
        self.echo()
            .into_iter()
            .filter(|(k, _)| k != "seeds" && k != "out_dir")
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn serving_peers(&self) -> usize {
        (self.peers as f64 * self.serving_fraction).round() as usize
    }

    /// Aggregate request rate in requests per second.
    pub fn aggregate_rate(&self) -> f64 {
        self.arrival_per_hour / 3600.0
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |key: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(key, v, "must be positive"))
            }
        };
        let nonneg = |key: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(key, v, "must be nonnegative"))
            }
        };
        if self.peers == 0 {
            return Err(Error::invalid("peers", self.peers, "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.serving_fraction) {
            return Err(Error::invalid("serving_fraction", self.serving_fraction, "must lie in [0, 1]"));
        }
        if self.movies == 0 {
            return Err(Error::EmptyCatalog);
        }
        if !(self.zipf_skew >= 0.0 && self.zipf_skew.is_finite()) {
            return Err(Error::InvalidSkew(self.zipf_skew));
        }
        nonneg("arrival_per_hour", self.arrival_per_hour)?;
        positive("movie_duration_s", self.movie_duration_s)?;
        if self.movie_size_bytes == 0 {
            return Err(Error::invalid("movie_size_bytes", 0, "must be positive"));
        }
        if self.num_blocks == 0 {
            return Err(Error::invalid("num_blocks", 0, "must be positive"));
        }
        crate::cluster::ChurnProfile::new(self.mean_up_s, self.mean_dn_s)?;
        if self.uplink_ratio == 0 {
            return Err(Error::invalid("uplink_ratio", 0, "must be positive"));
        }
        positive("weight_scale", self.weight_scale)?;
        positive("batch_interval_s", self.batch_interval_s)?;
        nonneg("repair_gamma", self.repair_gamma)?;
        if !(0.0..=1.0).contains(&self.handoff_fraction) {
            return Err(Error::invalid("handoff_fraction", self.handoff_fraction, "must lie in [0, 1]"));
        }
        nonneg("replica_copy_s", self.replica_copy_s)?;
        positive("sim_duration_s", self.sim_duration_s)?;
        if self.seeds.is_empty() {
            return Err(Error::invalid("seeds", "", "at least one seed is required"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        SimConfig::default().validate().unwrap();
        assert_eq!(SimConfig::default().serving_peers(), 300);
    }

    #[test]
    fn parses_file_text_with_comments() {
        let mut c = SimConfig::default();
        c.apply_text("# header\npeers = 150  # desk scale\nstrategy = minreq\nseeds = [1, 2,3]\nproxy_buffer_bytes = 5e9\nout_dir = \"res\"\n")
            .unwrap();
        assert_eq!(c.peers, 150);
        assert_eq!(c.strategy, Strategy::MinReq);
        assert_eq!(c.seeds, vec![1, 2, 3]);
        assert_eq!(c.proxy_buffer_bytes, 5_000_000_000);
        assert_eq!(c.out_dir, "res");
    }

    #[test]
    fn errors_name_the_problem() {
        let mut c = SimConfig::default();
        let e = c.apply_text("bogus = 1").unwrap_err().to_string();
        assert!(e.contains("bogus"), "{e}");
        let e = c.set("strategy", "nosuch").unwrap_err().to_string();
        assert!(e.contains("proposed") && e.contains("maxhit"), "{e}");
        let e = c.apply_text("peers 10").unwrap_err().to_string();
        assert!(e.contains("line 1"), "{e}");
        assert!(c.set("peers", "1.5").is_err());
    }

    #[test]
    fn echo_round_trips() {
        let mut c = SimConfig::default();
        c.set("zipf_skew", "0.5").unwrap();
        c.set("seeds", "4,5").unwrap();
        c.set("placement", "round_robin").unwrap();
        let mut back = SimConfig { peers: 1, ..SimConfig::default() };
        for (k, v) in c.echo() {
            back.set(&k, &v).unwrap();
        }
        assert_eq!(back, c);
    }

    #[test]
    fn fingerprint_ignores_seeds() {
        let a = SimConfig::default();
        let b = SimConfig { seeds: vec![9, 10], out_dir: "x".into(), ..SimConfig::default() };
        assert_eq!(a.fingerprint(), b.fingerprint());
        let c = SimConfig { peers: 10, ..SimConfig::default() };
        assert_ne!(a.fingerprint(), c.fingerprint());
    }
}
