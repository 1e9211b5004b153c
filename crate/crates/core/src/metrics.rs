//! Run reports, merging across seeds, and CSV output.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// A mean carrying the weight it was computed from. Weight 0 means no data.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Averaged {
    pub mean: f64,
    pub weight: f64,
}

impl Averaged {
    pub fn of(mean: f64, weight: f64) -> Self {
        if weight > 0.0 {
            Averaged { mean, weight }
        } else {
            Averaged::default()
        }
    }

    pub fn none() -> Self {
        Averaged::default()
    }

    pub fn value(&self) -> Option<f64> {
        (self.weight > 0.0).then_some(self.mean)
    }

    pub fn combine(self, other: Averaged) -> Averaged {
        let w = self.weight + other.weight;
        if w <= 0.0 {
            return Averaged::none();
        }
        Averaged { mean: (self.mean * self.weight + other.mean * other.weight) / w, weight: w }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Counts {
    pub admitted: u64,
    pub rejected: u64,
    /// Started without waiting on the main server: proxy cache hit or peer.
    pub immediate: u64,
    pub via_main_server: u64,
    /// Sessions handed from the proxy to a serving peer.
    pub chained: u64,
    pub completed: u64,
    pub failed: u64,
    pub failovers: u64,
    pub cache_hits: u64,
    pub cache_misses: u64,
    pub replicas_placed: u64,
    pub placement_leftover: u64,
    pub repairs_completed: u64,
    pub repairs_failed: u64,
    pub batches: u64,
}

impl Counts {
    fn fields(&self) -> [(&'static str, u64); 15] {
        [
            ("admitted", self.admitted),
            ("rejected", self.rejected),
            ("immediate", self.immediate),
            ("via_main_server", self.via_main_server),
            ("chained", self.chained),
            ("completed", self.completed),
            ("failed", self.failed),
            ("failovers", self.failovers),
            ("cache_hits", self.cache_hits),
            ("cache_misses", self.cache_misses),
            ("replicas_placed", self.replicas_placed),
            ("placement_leftover", self.placement_leftover),
            ("repairs_completed", self.repairs_completed),
            ("repairs_failed", self.repairs_failed),
            ("batches", self.batches),
        ]
    }

    fn add(&mut self, o: &Counts) {
        self.admitted += o.admitted;
        self.rejected += o.rejected;
        self.immediate += o.immediate;
        self.via_main_server += o.via_main_server;
        self.chained += o.chained;
        self.completed += o.completed;
        self.failed += o.failed;
        self.failovers += o.failovers;
        self.cache_hits += o.cache_hits;
        self.cache_misses += o.cache_misses;
        self.replicas_placed += o.replicas_placed;
        self.placement_leftover += o.placement_leftover;
        self.repairs_completed += o.repairs_completed;
        self.repairs_failed += o.repairs_failed;
        self.batches += o.batches;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtilizationWindow {
    pub start_s: f64,
    pub bandwidth_frac: f64,
    pub buffer_frac: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LifetimeRow {
    /// Replica target at placement time.
    pub n: usize,
    pub gamma: f64,
    pub mttf_analytic: f64,
    pub mttf_empirical: Averaged,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsReport {
    pub runs: u32,
    pub seeds: Vec<u64>,
    /// Config identity without seeds; only equal fingerprints merge.
    pub fingerprint: String,
    pub config_echo: Vec<(String, String)>,
    pub sweep_var: String,
    pub sweep_value: f64,
    /// Mean planned replica count per movie rank.
    pub replicas_per_movie: Vec<f64>,
    pub success_playback_prob: Averaged,
    pub counts: Counts,
    pub utilization: Vec<UtilizationWindow>,
    pub lifetimes: Vec<LifetimeRow>,
    pub mean_replica_lifetime_s: Vec<Averaged>,
}

fn runs_mean(a: f64, wa: u32, b: f64, wb: u32) -> f64 {
    (a * wa as f64 + b * wb as f64) / (wa + wb) as f64
}

impl MetricsReport {
    fn combine(&self, other: &MetricsReport) -> Result<MetricsReport> {
        if self.runs == 0 {
            return Ok(other.clone());
        }
        if other.runs == 0 {
            return Ok(self.clone());
        }
        if self.fingerprint != other.fingerprint
            || self.sweep_var != other.sweep_var
            || self.sweep_value != other.sweep_value
            || self.replicas_per_movie.len() != other.replicas_per_movie.len()
            || self.utilization.len() != other.utilization.len()
        {
            return Err(Error::ConfigMismatch);
        }
        let (wa, wb) = (self.runs, other.runs);
        let mut seeds = self.seeds.clone();
        seeds.extend(&other.seeds);
        let mut counts = self.counts;
        counts.add(&other.counts);

        let mut lifetimes: BTreeMap<usize, LifetimeRow> = self.lifetimes.iter().map(|r| (r.n, *r)).collect();
        for r in &other.lifetimes {
            lifetimes
                .entry(r.n)
                .and_modify(|e| e.mttf_empirical = e.mttf_empirical.combine(r.mttf_empirical))
                .or_insert(*r);
        }

        Ok(MetricsReport {
            runs: wa + wb,
            seeds,
            fingerprint: self.fingerprint.clone(),
            config_echo: self.config_echo.clone(),
            sweep_var: self.sweep_var.clone(),
            sweep_value: self.sweep_value,
            replicas_per_movie: self
                .replicas_per_movie
                .iter()
                .zip(&other.replicas_per_movie)
                .map(|(a, b)| runs_mean(*a, wa, *b, wb))
                .collect(),
            success_playback_prob: self.success_playback_prob.combine(other.success_playback_prob),
            counts,
            utilization: self
                .utilization
                .iter()
                .zip(&other.utilization)
                .map(|(a, b)| UtilizationWindow {
                    start_s: a.start_s,
                    bandwidth_frac: runs_mean(a.bandwidth_frac, wa, b.bandwidth_frac, wb),
                    buffer_frac: runs_mean(a.buffer_frac, wa, b.buffer_frac, wb),
                })
                .collect(),
            lifetimes: lifetimes.into_values().collect(),
            mean_replica_lifetime_s: self
                .mean_replica_lifetime_s
                .iter()
                .zip(&other.mean_replica_lifetime_s)
                .map(|(a, b)| a.combine(*b))
                .collect(),
        })
    }

    /// Average reports from runs of one configuration: scalars and series are
    /// run-weighted means, counts are summed, seeds are concatenated.
    pub fn merge(reports: &[MetricsReport]) -> Result<MetricsReport> {
        let (first, rest) = reports.split_first().ok_or(Error::NothingToMerge)?;
        rest.iter().try_fold(first.clone(), |acc, r| acc.combine(r))
    }

    /// Mean of the utilization series over windows whose start lies in
    /// `[from, to)` of the run, as fractions of the whole horizon.
    pub fn utilization_span(&self, from: f64, to: f64) -> Option<(f64, f64)> {
        let n = self.utilization.len();
        if n == 0 {
            return None;
        }
        let lo = (from * n as f64).floor() as usize;
        let hi = ((to * n as f64).ceil() as usize).clamp(lo + 1, n);
        let sel = &self.utilization[lo.min(n - 1)..hi];
        let k = sel.len() as f64;
        Some((
            sel.iter().map(|w| w.bandwidth_frac).sum::<f64>() / k,
            sel.iter().map(|w| w.buffer_frac).sum::<f64>() / k,
        ))
    }

    fn summary_rows(&self) -> Vec<(String, String)> {
        let mut rows = vec![
            ("runs".to_string(), self.runs.to_string()),
            ("seeds".to_string(), self.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(";")),
            ("success_playback_prob".to_string(), opt(self.success_playback_prob.value())),
        ];
        rows.extend(self.counts.fields().iter().map(|(k, v)| (k.to_string(), v.to_string())));
        let (bw, buf) = match self.utilization_span(0.0, 1.0) {
            Some((a, b)) => (fix(a), fix(b)),
            None => (String::new(), String::new()),
        };
        rows.push(("mean_bandwidth_util".to_string(), bw));
        rows.push(("mean_buffer_util".to_string(), buf));
        rows.extend(self.config_echo.iter().map(|(k, v)| (format!("config.{k}"), v.clone())));
        rows
    }

    /// File name and contents of every CSV, in a fixed order.
    pub fn csv_files(&self) -> Vec<(&'static str, String)> {
        let mut replicas = String::from("movie_rank,count\n");
        let mut playback = String::from("sweep_var,prob\n");
        let mut lifetime = String::from("n,gamma,mttf_analytic,mttf_empirical\n");
        let mut util = String::from("window_start_s,bandwidth_frac,buffer_frac\n");
        let mut summary = String::from("key,value\n");
        if self.runs > 0 {
            for (i, c) in self.replicas_per_movie.iter().enumerate() {
                let _ = writeln!(replicas, "{},{}", i + 1, fix(*c));
            }
            let _ = writeln!(playback, "{},{}", fix(self.sweep_value), opt(self.success_playback_prob.value()));
            for r in &self.lifetimes {
                let _ = writeln!(
                    lifetime,
                    "{},{},{},{}",
                    r.n,
                    fix(r.gamma),
                    fix(r.mttf_analytic),
                    opt(r.mttf_empirical.value())
                );
            }
            for w in &self.utilization {
                let _ = writeln!(util, "{},{},{}", fix(w.start_s), fix(w.bandwidth_frac), fix(w.buffer_frac));
            }
            for (k, v) in self.summary_rows() {
                let _ = writeln!(summary, "{k},{v}");
            }
        }
        vec![
            ("replicas.csv", replicas),
            ("playback.csv", playback),
            ("lifetime.csv", lifetime),
            ("utilization.csv", util),
            ("summary.csv", summary),
        ]
    }

    /// Write the CSVs and a gnuplot script into `dir`, creating it if needed.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|source| Error::Write { path: dir.to_path_buf(), source })?;
        let mut files = self.csv_files();
        files.push(("plots.gp", GNUPLOT.to_string()));
        for (name, body) in files {
            let path = dir.join(name);
            std::fs::write(&path, body).map_err(|source| Error::Write { path, source })?;
        }
        Ok(())
    }
}

pub fn fix(x: f64) -> String {
    format!("{x:.6}")
}

fn opt(x: Option<f64>) -> String {
    x.map(fix).unwrap_or_default()
}

const GNUPLOT: &str = "\
set datafile separator ','
set terminal pngcairo size 800,500
set key autotitle columnhead

set output 'replicas.png'
set xlabel 'movie rank'; set ylabel 'replicas'
plot 'replicas.csv' using 1:2 with linespoints

set output 'utilization.png'
set xlabel 'time (s)'; set ylabel 'fraction of capacity'
plot 'utilization.csv' using 1:2 with lines, '' using 1:3 with lines

set output 'lifetime.png'
set xlabel 'replicas'; set ylabel 'MTTF (s)'
set logscale y
plot 'lifetime.csv' using 1:3 with linespoints, '' using 1:4 with points
";
