//! Replica lifetime under an absorbing birth–death chain.
//!
//! State `k` counts functioning replicas of one movie out of `n`. In state
//! `k` a replica fails with rate `k·λ` and a lost one is repaired with rate
//! `(n−k)·μ`; state 0 is absorbing. The exact mean time to absorption comes
//! from a first-step linear solve; the `Q*`/`n_e` closed form is reported
//! alongside for comparison only.

use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CtmcParams {
    pub n: usize,
    /// Per-replica failure rate λ (1/s).
    pub fail_rate: f64,
    /// Per-replica repair rate μ (1/s).
    pub repair_rate: f64,
}

impl CtmcParams {
    pub fn new(n: usize, fail_rate: f64, repair_rate: f64) -> Result<Self> {
        let p = CtmcParams { n, fail_rate, repair_rate };
        p.validate()?;
        Ok(p)
    }

    /// Parameters from a failure rate and repair ratio `γ = μ/λ`.
    pub fn with_gamma(n: usize, fail_rate: f64, gamma: f64) -> Result<Self> {
        Self::new(n, fail_rate, gamma * fail_rate)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidCtmc("n must be at least 1".into()));
        }
        if !(self.fail_rate > 0.0 && self.fail_rate.is_finite()) {
            return Err(Error::InvalidCtmc(format!("failure rate must be positive, got {}", self.fail_rate)));
        }
        if !(self.repair_rate >= 0.0 && self.repair_rate.is_finite()) {
            return Err(Error::InvalidCtmc(format!("repair rate must be nonnegative, got {}", self.repair_rate)));
        }
        Ok(())
    }

    pub fn gamma(&self) -> f64 {
        self.repair_rate / self.fail_rate
    }

    fn down_rate(&self, k: usize) -> f64 {
        k as f64 * self.fail_rate
    }

    fn up_rate(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            (self.n - k) as f64 * self.repair_rate
        }
    }

    fn exit_rate(&self, k: usize) -> f64 {
        self.down_rate(k) + self.up_rate(k)
    }
}

/// Dense generator over states `0..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    size: usize,
    rates: Vec<f64>,
}

impl Generator {
    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.rates[from * self.size + to]
    }

    pub fn states(&self) -> usize {
        self.size
    }

    pub fn row(&self, from: usize) -> &[f64] {
        &self.rates[from * self.size..(from + 1) * self.size]
    }
}

pub fn build_generator(params: &CtmcParams) -> Result<Generator> {
    params.validate()?;
    let size = params.n + 1;
    let mut rates = vec![0.0; size * size];
    for k in 1..=params.n {
        rates[k * size + k - 1] = params.down_rate(k);
        if k < params.n {
            rates[k * size + k + 1] = params.up_rate(k);
        }
        rates[k * size + k] = -params.exit_rate(k);
    }
    Ok(Generator { size, rates })
}

/// Thomas algorithm for `sub[i]·x[i−1] + diag[i]·x[i] + sup[i]·x[i+1] = rhs[i]`.
pub(crate) fn solve_tridiagonal(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    for i in 0..n {
        let lower = if i > 0 { sub[i] } else { 0.0 };
        let denom = diag[i] - lower * if i > 0 { c[i - 1] } else { 0.0 };
        if denom.abs() < f64::MIN_POSITIVE || !denom.is_finite() {
            return Err(Error::Singular(i));
        }
        c[i] = sup[i] / denom;
        d[i] = (rhs[i] - lower * if i > 0 { d[i - 1] } else { 0.0 }) / denom;
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        x[i] = d[i] - if i + 1 < n { c[i] * x[i + 1] } else { 0.0 };
    }
    Ok(x)
}

/// Solve `r_k·X_k − kλ·X_{k−1} − (n−k)μ·X_{k+1} = w_k` for `k = 1..=n`, `X_0 = 0`.
///
/// The increments `τ_k = X_k − X_{k−1}` obey `kλ·τ_k = w_k + (n−k)μ·τ_{k+1}`
/// with `τ_{n+1} = 0`; summing positive terms avoids the cancellation a
/// general tridiagonal solve suffers when `γ` is large.
fn first_step(params: &CtmcParams, weight: impl Fn(usize) -> f64) -> Result<Vec<f64>> {
    params.validate()?;
    let n = params.n;
    let mut tau = vec![0.0; n + 2];
    for k in (1..=n).rev() {
        tau[k] = (weight(k) + params.up_rate(k) * tau[k + 1]) / params.down_rate(k);
    }
    let mut x = Vec::with_capacity(n);
    let mut acc = 0.0;
    for t in &tau[1..=n] {
        acc += t;
        x.push(acc);
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular(n));
    }
    Ok(x)
}

/// Expected time to absorption from every state `1..=n` (index `k−1`).
pub fn absorption_times(params: &CtmcParams) -> Result<Vec<f64>> {
    first_step(params, |_| 1.0)
}

/// Exact expected time for the replica count to fall from `n` to 0.
pub fn mean_time_to_failure(params: &CtmcParams) -> Result<f64> {
    Ok(*absorption_times(params)?.last().expect("n >= 1"))
}

/// Expected number of jumps from `n` to absorption.
pub fn mean_jumps(params: &CtmcParams) -> Result<f64> {
    let p = *params;
    Ok(*first_step(params, |k| p.exit_rate(k))?.last().expect("n >= 1"))
}

/// Probabilities `Q_k`, `k = 0..=n`, of reaching state 0 before state `n`
/// from state `k`, with `Q_0 = 1` and `Q_n = 0`.
pub fn absorption_path_probabilities(params: &CtmcParams) -> Result<Vec<f64>> {
    params.validate()?;
    let n = params.n;
    let mut q = vec![0.0; n + 1];
    q[0] = 1.0;
    if n < 2 {
        return Ok(q);
    }
    // Q_k − p_k·Q_{k−1} − q_k·Q_{k+1} = 0 on interior states.
    let p = |k: usize| params.down_rate(k) / params.exit_rate(k);
    let interior = n - 1;
    let sub: Vec<f64> = (1..=interior).map(|k| -p(k)).collect();
    let diag = vec![1.0; interior];
    let sup: Vec<f64> = (1..=interior).map(|k| -(1.0 - p(k))).collect();
    let mut rhs = vec![0.0; interior];
    rhs[0] = p(1) * q[0];
    let solved = solve_tridiagonal(&sub, &diag, &sup, &rhs)?;
    q[1..n].copy_from_slice(&solved);
    Ok(q)
}

pub fn absorption_path_probability(params: &CtmcParams, k: usize) -> Result<f64> {
    params.validate()?;
    if k == 0 || k >= params.n {
        return Err(Error::StateOutOfRange { k, max: params.n.saturating_sub(1) });
    }
    Ok(absorption_path_probabilities(params)?[k])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraverseRate {
    pub q_star: f64,
    /// `1/Q*`.
    pub n_e: f64,
}

/// Literal `Q* = Σ_{k=0}^{n−1} γ^k / C(n−1, k)`.
pub fn qstar_closed_form(n: usize, gamma: f64) -> Result<TraverseRate> {
    if n == 0 {
        return Err(Error::InvalidCtmc("n must be at least 1".into()));
    }
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::InvalidCtmc(format!("gamma must be nonnegative, got {gamma}")));
    }
    let mut binom = 1.0;
    let mut q_star = 0.0;
    for k in 0..n {
        if k > 0 {
            binom = binom * (n - k) as f64 / k as f64;
        }
        q_star += gamma.powi(k as i32) / binom;
    }
    Ok(TraverseRate { q_star, n_e: 1.0 / q_star })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LifetimeDecomposition {
    pub n_e: f64,
    /// Derived as `T_s / n_e`.
    pub t_e: f64,
    /// Equal to the exact mean time to failure.
    pub t_s: f64,
}

pub fn lifetime_decomposition(params: &CtmcParams) -> Result<LifetimeDecomposition> {
    let t_s = mean_time_to_failure(params)?;
    let n_e = qstar_closed_form(params.n, params.gamma())?.n_e;
    Ok(LifetimeDecomposition { n_e, t_e: t_s / n_e, t_s })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    /// 95% normal-approximation half-width.
    pub half_width: f64,
    pub trials: usize,
}

impl Estimate {
    pub fn contains(&self, x: f64) -> bool {
        (x - self.mean).abs() <= self.half_width
    }
}

/// Simulate the jump chain from state `n` until absorption, `trials` times.
pub fn monte_carlo_lifetime<R: Rng + ?Sized>(params: &CtmcParams, trials: usize, rng: &mut R) -> Result<Estimate> {
    params.validate()?;
    if trials == 0 {
        return Err(Error::InvalidCtmc("trials must be at least 1".into()));
    }
    let holds: Vec<Exp<f64>> = (1..=params.n)
        .map(|k| Exp::new(params.exit_rate(k)).map_err(|e| Error::InvalidCtmc(e.to_string())))
        .collect::<Result<_>>()?;
    let p_down: Vec<f64> = (1..=params.n).map(|k| params.down_rate(k) / params.exit_rate(k)).collect();

    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..trials {
        let mut k = params.n;
        let mut t = 0.0;
        while k > 0 {
            t += holds[k - 1].sample(rng);
            if rng.random::<f64>() < p_down[k - 1] {
                k -= 1;
            } else {
                k += 1;
            }
        }
        sum += t;
        sum_sq += t * t;
    }
    let n = trials as f64;
    let mean = sum / n;
    let var = if trials > 1 { (sum_sq - n * mean * mean).max(0.0) / (n - 1.0) } else { 0.0 };
    Ok(Estimate { mean, half_width: 1.96 * (var / n).sqrt(), trials })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReliabilityConstraints {
    pub max_replicas: usize,
    pub max_repair_time_s: f64,
    /// Bytes per second.
    pub max_bandwidth: f64,
    pub replica_bytes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RepairBudget {
    /// Average repair bandwidth in bytes per second.
    pub phi: f64,
    pub bandwidth_ok: bool,
    pub replicas_ok: bool,
    pub repair_time_ok: bool,
}

impl RepairBudget {
    pub fn all_ok(&self) -> bool {
        self.bandwidth_ok && self.replicas_ok && self.repair_time_ok
    }
}

/// `φ = η·B / (1/λ + 1/μ)`: bytes re-created per replica lifecycle divided by
/// the mean up-plus-repair cycle. With `μ = 0` the cycle never completes and
/// `φ = 0`.
pub fn repair_bandwidth(replicas: usize, constraints: &ReliabilityConstraints, params: &CtmcParams) -> RepairBudget {
    let cycle = 1.0 / params.fail_rate + 1.0 / params.repair_rate;
    let phi = if cycle.is_finite() {
        replicas as f64 * constraints.replica_bytes as f64 / cycle
    } else {
        0.0
    };
    let repair_time = 1.0 / params.repair_rate;
    RepairBudget {
        phi,
        bandwidth_ok: phi <= constraints.max_bandwidth,
        replicas_ok: replicas <= constraints.max_replicas,
        repair_time_ok: replicas == 0 || repair_time <= constraints.max_repair_time_s,
    }
}
