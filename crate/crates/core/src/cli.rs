//! Command-line front end: `run`, `compare` and `reliability`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Arg, ArgMatches, Args, Command, FromArgMatches, Parser, Subcommand};
use rayon::prelude::*;

use crate::config::{SimConfig, KEYS};
use crate::error::{Error, Result};
use crate::metrics::{fix, MetricsReport};
use crate::reliability::{
    lifetime_decomposition, mean_jumps, monte_carlo_lifetime, repair_bandwidth, CtmcParams, ReliabilityConstraints,
};
use crate::replication::Strategy;
use crate::sim::{run_audited, run_seeds};
use crate::workload::{stream, StreamId};

pub const OUT_DIR_ENV: &str = "VODSIM_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "vodsim", version, about = "Proxy-assisted P2P video-on-demand simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Simulate one configuration over every seed and write the merged CSVs.
    Run(RunArgs),
    /// Run several strategies on identical seeds, optionally over a sweep.
    Compare(CompareArgs),
    /// Tabulate replica lifetime over a grid of replica counts and repair ratios.
    Reliability(ReliabilityArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Config file of `key = value` lines.
    pub config: Option<PathBuf>,
    /// Check conservation invariants after every event.
    #[arg(long)]
    pub audit: bool,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    pub config: Option<PathBuf>,
    /// Comma-separated strategy names.
    #[arg(long, default_value = "proposed,minreq,maxhit,random")]
    pub strategies: String,
    /// `key=v1,v2,...`; the key `availability` sets mean_dn_s from A_up.
    #[arg(long)]
    pub sweep: Option<String>,
    #[command(flatten)]
    pub overrides: Overrides,
}

#[derive(Debug, Args)]
pub struct ReliabilityArgs {
    /// Replica counts, `1..10` or `1,2,5`.
    #[arg(long, default_value = "1..10")]
    pub n: String,
    /// Repair ratios μ/λ, comma-separated.
    #[arg(long, default_value = "0.1,1,10")]
    pub gamma: String,
    /// Per-replica failure rate (1/s).
    #[arg(long, default_value_t = 1.0 / 3600.0)]
    pub lambda: f64,
    /// Monte Carlo trials per row; 0 disables the estimate.
    #[arg(long, default_value_t = 10_000)]
    pub trials: usize,
    /// Skip Monte Carlo rows whose expected jump count exceeds this.
    #[arg(long, default_value_t = 5e7)]
    pub mc_budget: f64,
    /// Bytes per replica, for the repair bandwidth column.
    #[arg(long, default_value_t = 1_000_000_000)]
    pub replica_bytes: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Output CSV path; defaults to `<out_dir>/reliability.csv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// One optional `--key value` flag per config key.
#[derive(Debug, Clone, Default)]
pub struct Overrides(pub Vec<(String, String)>);

impl FromArgMatches for Overrides {
    fn from_arg_matches(m: &ArgMatches) -> std::result::Result<Self, clap::Error> {
        let mut out = Overrides::default();
        out.update_from_arg_matches(m)?;
        Ok(out)
    }

    fn update_from_arg_matches(&mut self, m: &ArgMatches) -> std::result::Result<(), clap::Error> {
        for key in KEYS {
            if let Some(v) = m.get_one::<String>(key) {
                self.0.push((key.to_string(), v.clone()));
            }
        }
        Ok(())
    }
}

impl Args for Overrides {
    fn augment_args(cmd: Command) -> Command {
        KEYS.iter().fold(cmd, |cmd, key| {
            cmd.arg(Arg::new(*key).long(*key).value_name("VALUE").help_heading("Config overrides"))
        })
    }

    fn augment_args_for_update(cmd: Command) -> Command {
        Self::augment_args(cmd)
    }
}

/// File values, then the output directory variable, then flags.
pub fn effective_config(path: Option<&Path>, overrides: &Overrides, env_out_dir: Option<String>) -> Result<SimConfig> {
    let mut cfg = match path {
        Some(p) => SimConfig::from_file(p)?,
        None => SimConfig::default(),
    };
    if let Some(dir) = env_out_dir.filter(|d| !d.is_empty()) {
        cfg.out_dir = dir;
    }
    for (k, v) in &overrides.0 {
        cfg.set(k, v)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn env_out_dir() -> Option<String> {
    std::env::var(OUT_DIR_ENV).ok()
}

pub fn cmd_run(cfg: &SimConfig, audit: bool) -> Result<PathBuf> {
    let report = if audit {
        let reports: Vec<MetricsReport> = cfg.seeds.par_iter().map(|&s| run_audited(cfg, s)).collect::<Result<_>>()?;
        MetricsReport::merge(&reports)?
    } else {
        run_seeds(cfg)?
    };
    let dir = PathBuf::from(&cfg.out_dir);
    report.write_dir(&dir)?;
    Ok(dir)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub key: String,
    pub values: Vec<String>,
}

impl Sweep {
    pub fn parse(spec: &str) -> Result<Self> {
        let (key, values) = spec.split_once('=').ok_or_else(|| Error::InvalidRange(spec.to_string()))?;
        let key = key.trim().to_string();
        if key != "availability" && !KEYS.contains(&key.as_str()) {
            return Err(Error::UnknownKey(key));
        }
        let values: Vec<String> =
            values.split(',').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect();
        if values.is_empty() {
            return Err(Error::InvalidRange(spec.to_string()));
        }
        Ok(Sweep { key, values })
    }

    /// Apply one sweep value; `availability` keeps mean_up_s and solves for
    /// mean_dn_s so that `A_up` equals the value.
    pub fn apply(&self, cfg: &mut SimConfig, value: &str) -> Result<f64> {
        if self.key == "availability" {
            let a: f64 = value.parse().map_err(|_| Error::invalid("availability", value, "expected a number"))?;
            if !(a > 0.0 && a <= 1.0) {
                return Err(Error::invalid("availability", value, "must lie in (0, 1]"));
            }
            cfg.mean_dn_s = cfg.mean_up_s * (1.0 - a) / a;
            return Ok(a);
        }
        cfg.set(&self.key, value)?;
        Ok(value.parse().unwrap_or(f64::NAN))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub strategy: Strategy,
    pub sweep_var: String,
    pub sweep_value: f64,
    pub report: MetricsReport,
}

pub fn parse_strategies(list: &str) -> Result<Vec<Strategy>> {
    let out: Vec<Strategy> = list.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::parse).collect::<Result<_>>()?;
    if out.len() < 2 {
        return Err(Error::invalid("strategies", list, "compare needs at least two strategies"));
    }
    Ok(out)
}

/// Run every strategy at every sweep point on the same seeds.
pub fn compare(base: &SimConfig, strategies: &[Strategy], sweep: Option<&Sweep>) -> Result<Vec<ComparisonRow>> {
    let default_point = Sweep { key: "arrival_per_hour".into(), values: vec![base.arrival_per_hour.to_string()] };
    let sweep = sweep.unwrap_or(&default_point);
    let mut jobs = Vec::new();
    for value in &sweep.values {
        for &strategy in strategies {
            let mut cfg = base.clone();
            let x = sweep.apply(&mut cfg, value)?;
            cfg.strategy = strategy;
            cfg.validate()?;
            jobs.push((strategy, x, cfg));
        }
    }
    jobs.into_par_iter()
        .map(|(strategy, x, cfg)| {
            let mut report = run_seeds(&cfg)?;
            report.sweep_var = sweep.key.clone();
            report.sweep_value = x;
            Ok(ComparisonRow { strategy, sweep_var: sweep.key.clone(), sweep_value: x, report })
        })
        .collect()
}

pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut out = String::from(
        "strategy,sweep_var,sweep_value,success_prob,admitted,rejected,failed,failovers,least_popular_replicas,mean_bandwidth_util,seeds\n",
    );
    for r in rows {
        let rep = &r.report;
        let least = rep.replicas_per_movie.last().copied().unwrap_or(0.0);
        let bw = rep.utilization_span(0.0, 1.0).map(|u| fix(u.0)).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.strategy,
            r.sweep_var,
            fix(r.sweep_value),
            rep.success_playback_prob.value().map(fix).unwrap_or_default(),
            rep.counts.admitted,
            rep.counts.rejected,
            rep.counts.failed,
            rep.counts.failovers,
            fix(least),
            bw,
            rep.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(";"),
        );
    }
    out
}

pub fn cmd_compare(base: &SimConfig, strategies: &[Strategy], sweep: Option<&Sweep>) -> Result<PathBuf> {
    let rows = compare(base, strategies, sweep)?;
    let dir = PathBuf::from(&base.out_dir);
    for r in &rows {
        let sub = dir.join(r.strategy.name()).join(format!("{}_{}", r.sweep_var, fix(r.sweep_value)));
        r.report.write_dir(&sub)?;
    }
    let path = dir.join("comparison.csv");
    std::fs::create_dir_all(&dir).map_err(|source| Error::Write { path: dir.clone(), source })?;
    std::fs::write(&path, comparison_csv(&rows)).map_err(|source| Error::Write { path: path.clone(), source })?;
    Ok(dir)
}

/// `a..b` (inclusive) or a comma list of integers.
pub fn parse_int_range(spec: &str) -> Result<Vec<usize>> {
    let bad = || Error::InvalidRange(spec.to_string());
    let out: Vec<usize> = if let Some((a, b)) = spec.split_once("..") {
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        (a..=b).collect()
    } else {
        spec.split(',').map(|s| s.trim().parse().map_err(|_| bad())).collect::<Result<_>>()?
    };
    if out.is_empty() {
        return Err(bad());
    }
    Ok(out)
}

pub fn parse_float_list(spec: &str) -> Result<Vec<f64>> {
    let out: Vec<f64> = spec
        .split(',')
        .map(|s| s.trim().parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| Error::InvalidRange(spec.to_string())))
        .collect::<Result<_>>()?;
    if out.is_empty() {
        return Err(Error::InvalidRange(spec.to_string()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReliabilityRow {
    pub n: usize,
    pub gamma: f64,
    pub mttf_exact: f64,
    pub n_e: f64,
    pub t_e: f64,
    pub phi: f64,
    /// Monte Carlo mean and 95% half-width, if it fit the budget.
    pub mc: Option<(f64, f64)>,
}

pub fn reliability_table(args: &ReliabilityArgs) -> Result<Vec<ReliabilityRow>> {
    let ns = parse_int_range(&args.n)?;
    let gammas = parse_float_list(&args.gamma)?;
    let mut jobs = Vec::new();
    for &g in &gammas {
        for &n in &ns {
            jobs.push((jobs.len() as u64, n, g));
        }
    }
    jobs.into_par_iter()
        .map(|(i, n, g)| {
            let params = CtmcParams::with_gamma(n, args.lambda, g)?;
            let d = lifetime_decomposition(&params)?;
            let constraints = ReliabilityConstraints {
                max_replicas: usize::MAX,
                max_repair_time_s: f64::INFINITY,
                max_bandwidth: f64::INFINITY,
                replica_bytes: args.replica_bytes,
            };
            let phi = repair_bandwidth(n, &constraints, &params).phi;
            let mc = if args.trials > 0 && args.trials as f64 * mean_jumps(&params)? <= args.mc_budget {
                let est = monte_carlo_lifetime(&params, args.trials, &mut stream(args.seed, StreamId::MonteCarlo(i)))?;
                Some((est.mean, est.half_width))
            } else {
                None
            };
            Ok(ReliabilityRow { n, gamma: g, mttf_exact: d.t_s, n_e: d.n_e, t_e: d.t_e, phi, mc })
        })
        .collect()
}

pub fn reliability_csv(rows: &[ReliabilityRow]) -> String {
    let mut out = String::from("n,gamma,mttf_exact,n_e,t_e,phi,mttf_mc,ci\n");
    for r in rows {
        let (mc, ci) = r.mc.map(|(m, h)| (fix(m), fix(h))).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{},{},{},{},{}", r.n, fix(r.gamma), fix(r.mttf_exact), fix(r.n_e), fix(r.t_e), fix(r.phi), mc, ci);
    }
    out
}

pub fn cmd_reliability(args: &ReliabilityArgs, out_dir: &str) -> Result<PathBuf> {
    let rows = reliability_table(args)?;
    let path = args.out.clone().unwrap_or_else(|| Path::new(out_dir).join("reliability.csv"));
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|source| Error::Write { path: parent.to_path_buf(), source })?;
    }
    std::fs::write(&path, reliability_csv(&rows)).map_err(|source| Error::Write { path: path.clone(), source })?;
    Ok(path)
}

/// Parse arguments and execute; returns the path that was written.
pub fn execute(cli: Cli) -> Result<PathBuf> {
    match cli.command {
        Cmd::Run(a) => {
            let cfg = effective_config(a.config.as_deref(), &a.overrides, env_out_dir())?;
            cmd_run(&cfg, a.audit)
        }
        Cmd::Compare(a) => {
            let cfg = effective_config(a.config.as_deref(), &a.overrides, env_out_dir())?;
            let strategies = parse_strategies(&a.strategies)?;
            let sweep = a.sweep.as_deref().map(Sweep::parse).transpose()?;
            cmd_compare(&cfg, &strategies, sweep.as_ref())
        }
        Cmd::Reliability(a) => {
            let out_dir = env_out_dir().filter(|d| !d.is_empty()).unwrap_or_else(|| SimConfig::default().out_dir);
            cmd_reliability(&a, &out_dir)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges() {
        assert_eq!(parse_int_range("1..4").unwrap(), vec![1, 2, 3, 4]);
        assert_eq!(parse_int_range("2,5").unwrap(), vec![2, 5]);
        assert!(parse_int_range("5..1").is_err());
        assert!(parse_int_range("x").is_err());
        assert_eq!(parse_float_list("0.1,1,10").unwrap(), vec![0.1, 1.0, 10.0]);
        assert!(parse_float_list("").is_err());
    }

    #[test]
    fn grid_has_one_row_per_point() {
        let args = ReliabilityArgs {
            n: "1..10".into(),
            gamma: "0.1,1,10".into(),
            lambda: 1.0 / 3600.0,
            trials: 0,
            mc_budget: 0.0,
            replica_bytes: 1,
            seed: 1,
            out: None,
        };
        let rows = reliability_table(&args).unwrap();
        assert_eq!(rows.len(), 30);
        assert!(rows.iter().all(|r| r.mc.is_none()));
        let csv = reliability_csv(&rows);
        assert_eq!(csv.lines().count(), 31);
        assert!(csv.lines().nth(1).unwrap().ends_with(",,"));
    }

    #[test]
    fn overrides_parse_from_flags() {
        let cli = Cli::try_parse_from(["vodsim", "run", "--peers", "150", "--strategy", "maxhit"]).unwrap();
        let Cmd::Run(a) = cli.command else { panic!() };
        let cfg = effective_config(None, &a.overrides, Some("elsewhere".into())).unwrap();
        assert_eq!(cfg.peers, 150);
        assert_eq!(cfg.strategy, Strategy::MaxHit);
        assert_eq!(cfg.out_dir, "elsewhere");

        let cli = Cli::try_parse_from(["vodsim", "run", "--strategy", "nosuch"]).unwrap();
        let Cmd::Run(a) = cli.command else { panic!() };
        let e = effective_config(None, &a.overrides, None).unwrap_err().to_string();
        assert!(e.contains("proposed, random, minreq, maxhit"), "{e}");
    }

    #[test]
    fn sweeps() {
        let s = Sweep::parse("availability=0.05,0.25").unwrap();
        let mut cfg = SimConfig::default();
        s.apply(&mut cfg, "0.25").unwrap();
        assert!((cfg.mean_dn_s - 10800.0).abs() < 1e-9);
        assert!(Sweep::parse("nosuch=1").is_err());
        assert!(Sweep::parse("peers").is_err());
        assert!(parse_strategies("proposed").is_err());
    }
}
