//! Seeded workload generation: Zipf popularity, Poisson request arrivals and
//! exponential holding times, each drawn from its own named random stream.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp;

use crate::cluster::{Catalog, Movie, MovieId};
use crate::error::{Error, Result};

/// Independent random sub-streams. Each concern owns a stream so that
/// changing one policy never shifts the draws seen by another.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamId {
    Arrivals,
    /// One stream per peer for its up/down alternation.
    Churn(u32),
    Repair,
    Replication,
    Placement,
    MonteCarlo(u64),
}

impl StreamId {
    fn index(self) -> u64 {
        const TAG: u64 = 1 << 40;
        match self {
            StreamId::Arrivals => 1,
            StreamId::Repair => 2,
            StreamId::Replication => 3,
            StreamId::Placement => 4,
            StreamId::Churn(p) => TAG + p as u64,
            StreamId::MonteCarlo(i) => 2 * TAG + i,
        }
    }
}

pub fn stream(seed: u64, id: StreamId) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id.index());
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadConfig {
    pub num_movies: usize,
    pub zipf_skew: f64,
    /// Requests per second over the whole catalog.
    pub aggregate_rate: f64,
    pub sim_duration_s: f64,
    pub seed: u64,
}

impl WorkloadConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_movies == 0 {
            return Err(Error::EmptyCatalog);
        }
        if !(self.zipf_skew >= 0.0 && self.zipf_skew.is_finite()) {
            return Err(Error::InvalidSkew(self.zipf_skew));
        }
        if !(self.aggregate_rate >= 0.0 && self.aggregate_rate.is_finite()) {
            return Err(Error::invalid("aggregate_rate", self.aggregate_rate, "must be nonnegative"));
        }
        if !(self.sim_duration_s > 0.0 && self.sim_duration_s.is_finite()) {
            return Err(Error::invalid("sim_duration_s", self.sim_duration_s, "must be positive"));
        }
        Ok(())
    }

    /// Catalog of equally sized movies with Zipf popularities and per-movie
    /// request rates.
    pub fn catalog(&self, size_bytes: u64, duration_s: f64, num_blocks: u32) -> Result<Catalog> {
        self.validate()?;
        let q = zipf_popularity(self.num_movies, self.zipf_skew)?;
        let rates = per_movie_rates(&q, self.aggregate_rate);
        Catalog::new(
            q.iter()
                .zip(rates)
                .enumerate()
                .map(|(i, (&popularity, arrival_rate))| Movie {
                    id: i as MovieId + 1,
                    size_bytes,
                    duration_s,
                    popularity,
                    arrival_rate,
                    channels: 1,
                    num_blocks,
                })
                .collect(),
        )
    }
}

/// Normalized Zipf popularities `q_m ∝ 1/m^s` for ranks `1..=movies`.
pub fn zipf_popularity(movies: usize, skew: f64) -> Result<Vec<f64>> {
    if movies == 0 {
        return Err(Error::EmptyCatalog);
    }
    if !(skew >= 0.0 && skew.is_finite()) {
        return Err(Error::InvalidSkew(skew));
    }
    let raw: Vec<f64> = (1..=movies).map(|m| (m as f64).powf(-skew)).collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / total).collect())
}

pub fn per_movie_rates(popularity: &[f64], aggregate_rate: f64) -> Vec<f64> {
    popularity.iter().map(|q| q * aggregate_rate).collect()
}

pub fn sample_exponential<R: rand::Rng + ?Sized>(rng: &mut R, mean_s: f64) -> Result<f64> {
    if !(mean_s > 0.0 && mean_s.is_finite()) {
        return Err(Error::InvalidMean(mean_s));
    }
    Ok(Exp::new(1.0 / mean_s).map_err(|_| Error::InvalidMean(mean_s))?.sample(rng))
}

/// `P[T > t]` for an exponential lifetime with the given rate.
pub fn survival_prob(rate: f64, t: f64) -> f64 {
    (-rate * t).exp()
}

/// Merged Poisson request stream: exponential gaps at the aggregate rate,
/// each request tagged with a movie drawn by popularity.
#[derive(Debug, Clone)]
pub struct ArrivalProcess {
    rng: ChaCha8Rng,
    gap: Option<Exp<f64>>,
    pick: WeightedIndex<f64>,
}

impl ArrivalProcess {
    pub fn new(rng: ChaCha8Rng, popularity: &[f64], aggregate_rate: f64) -> Result<Self> {
        let pick = WeightedIndex::new(popularity).map_err(|e| Error::invalid("popularity", format!("{popularity:?}"), e))?;
        let gap = if aggregate_rate > 0.0 {
            Some(Exp::new(aggregate_rate).map_err(|e| Error::invalid("aggregate_rate", aggregate_rate, e))?)
        } else {
            None
        };
        Ok(ArrivalProcess { rng, gap, pick })
    }

    /// Gap to the next request and its movie; `None` when the rate is zero.
    pub fn next_request(&mut self) -> Option<(f64, MovieId)> {
        let gap = self.gap?.sample(&mut self.rng);
        let movie = self.pick.sample(&mut self.rng) as MovieId + 1;
        Some((gap, movie))
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zipf_trivial_cases() {
        assert_eq!(zipf_popularity(1, 0.271).unwrap(), vec![1.0]);
        assert_eq!(zipf_popularity(2, 0.0).unwrap(), vec![0.5, 0.5]);
        assert!(matches!(zipf_popularity(0, 1.0), Err(Error::EmptyCatalog)));
        assert!(zipf_popularity(3, -0.1).is_err());
    }

    #[test]
    fn zipf_three_movies_matches_frozen_values() {
        // Frozen from an independent normalized power-law evaluation:
        // w = [1, 2^-0.271, 3^-0.271]; q = w / sum(w).
        let expected = [0.3889157155083861, 0.3223119175028765, 0.28877236698873743];
        let q = zipf_popularity(3, 0.271).unwrap();
        for (a, b) in q.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        assert!(q[0] > q[1] && q[1] > q[2]);
    }

    #[test]
    fn rates_split_aggregate() {
        assert_eq!(per_movie_rates(&[1.0], 3.0), vec![3.0]);
        assert_eq!(per_movie_rates(&[0.5, 0.5], 2.0), vec![1.0, 1.0]);
        let q = zipf_popularity(20, 0.271).unwrap();
        let total: f64 = per_movie_rates(&q, 300.0 / 3600.0).iter().sum();
        assert!((total - 300.0 / 3600.0).abs() < 1e-15);
    }

    #[test]
    fn exponential_sample_mean_within_two_percent() {
        let mut rng = stream(11, StreamId::Repair);
        let n = 100_000;
        let mean = (0..n).map(|_| sample_exponential(&mut rng, 3600.0).unwrap()).sum::<f64>() / n as f64;
        assert!((3528.0..=3672.0).contains(&mean), "{mean}");
    }

    #[test]
    fn exponential_rejects_nonpositive_mean() {
        let mut rng = stream(1, StreamId::Repair);
        assert!(matches!(sample_exponential(&mut rng, 0.0), Err(Error::InvalidMean(_))));
        assert!(sample_exponential(&mut rng, -3.0).is_err());
    }

    #[test]
    fn streams_are_reproducible_and_disjoint() {
        let draw = |id| {
            let mut r = stream(42, id);
            (0..5).map(|_| sample_exponential(&mut r, 1.0).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(draw(StreamId::Arrivals), draw(StreamId::Arrivals));
        assert_ne!(draw(StreamId::Arrivals), draw(StreamId::Repair));
        assert_ne!(draw(StreamId::Churn(0)), draw(StreamId::Churn(1)));
    }

    #[test]
    fn survival_identities() {
        assert_eq!(survival_prob(3.0, 0.0), 1.0);
        assert_eq!(survival_prob(0.0, 100.0), 1.0);
        assert!((survival_prob(2.0, std::f64::consts::LN_2 / 2.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_rate_has_no_arrivals() {
        let mut a = ArrivalProcess::new(stream(1, StreamId::Arrivals), &[1.0], 0.0).unwrap();
        assert_eq!(a.next_request(), None);
    }

    /// Chi-square comparison of the merged-stream interarrival histogram
    /// against the exponential law at the aggregate rate.
    #[test]
    fn merged_stream_interarrivals_are_exponential() {
        let rate = 300.0 / 3600.0;
        let q = zipf_popularity(20, 0.271).unwrap();
        let mut arrivals = ArrivalProcess::new(stream(5, StreamId::Arrivals), &q, rate).unwrap();
        let n = 20_000;
        let bins = 10;
        let mut counts = vec![0usize; bins];
        let mut per_movie = vec![0usize; q.len()];
        for _ in 0..n {
            let (gap, m) = arrivals.next_request().unwrap();
            // Equiprobable bins of Exp(rate).
            let u = 1.0 - (-rate * gap).exp();
            counts[((u * bins as f64) as usize).min(bins - 1)] += 1;
            per_movie[m as usize - 1] += 1;
        }
        let expected = n as f64 / bins as f64;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 99.9th percentile of chi-square with 9 degrees of freedom.
        assert!(chi2 < 27.88, "chi2 = {chi2}");
        let chi2_movies: f64 = per_movie
            .iter()
            .zip(&q)
            .map(|(&c, &p)| (c as f64 - n as f64 * p).powi(2) / (n as f64 * p))
            .sum();
        // 99.9th percentile with 19 degrees of freedom.
        assert!(chi2_movies < 43.82, "chi2 = {chi2_movies}");
    }

    proptest! {
        #[test]
        fn zipf_is_normalized_and_non_increasing(m in 1usize..10_000, s in 0.0f64..2.0) {
            let q = zipf_popularity(m, s).unwrap();
            let total: f64 = q.iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
            prop_assert!(q.windows(2).all(|w| w[0] >= w[1]));
        }
    }
}
