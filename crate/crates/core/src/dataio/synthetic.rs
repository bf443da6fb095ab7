use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};

use super::{round6, DataError, Dataset};
use crate::ranking::{ConsumerId, ObservationSet, RankedList, ServiceId};

/// Latency of the best service, in ms.
const BASE_LATENCY_MS: f64 = 40.0;
/// Latency ratio between adjacent ground-truth positions.
const LATENCY_RATIO: f64 = 1.1;
const MAX_SERVICES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticParams {
    pub seed: u64,
    pub n_services: usize,
    pub n_consumers: usize,
    /// Probability that a consumer sees two adjacent ground-truth services
    /// in the wrong order. Must lie in `[0, 0.5)`.
    pub noise: f64,
    /// Probability that a consumer observes any given service.
    pub observe_prob: f64,
}

impl SyntheticParams {
    pub fn new(seed: u64, n_services: usize, n_consumers: usize, noise: f64) -> Self {
        Self { seed, n_services, n_consumers, noise, observe_prob: 0.8 }
    }

    pub fn with_observe_prob(self, observe_prob: f64) -> Self {
        Self { observe_prob, ..self }
    }

    fn validate(&self) -> Result<(), DataError> {
        let bad = |m: String| Err(DataError::InvalidParameter(m));
        if !(2..=MAX_SERVICES).contains(&self.n_services) {
            return bad(format!("n_services must be in 2..={MAX_SERVICES}, got {}", self.n_services));
        }
        if self.n_consumers == 0 {
            return bad("n_consumers must be at least 1".into());
        }
        if !(0.0..0.5).contains(&self.noise) {
            return bad(format!("noise must be in [0, 0.5), got {}", self.noise));
        }
        if !(self.observe_prob > 0.0 && self.observe_prob <= 1.0) {
            return bad(format!("observe_prob must be in (0, 1], got {}", self.observe_prob));
        }
        Ok(())
    }

    /// Log-space standard deviation giving the requested adjacent flip rate.
    ///
    /// Adjacent log-latencies differ by `ln r`; the difference of two iid
    /// `N(0, s^2)` terms flips the pair with probability `1 - Phi(ln r / (s sqrt 2))`.
    fn log_sigma(&self) -> f64 {
        if self.noise == 0.0 {
            return 0.0;
        }
        let z = Normal::standard().inverse_cdf(1.0 - self.noise);
        LATENCY_RATIO.ln() / (std::f64::consts::SQRT_2 * z)
    }
}

fn padded(prefix: &str, i: usize, count: usize) -> String {
    let width = (count.max(2) - 1).to_string().len();
    format!("{prefix}{i:0width$}")
}

/// Builds a dataset with a planted ground-truth ordering.
///
/// The ground truth is a seeded shuffle of the services. Position `k`
/// has base latency `40 * 1.1^k` ms, and each observation multiplies it by
/// log-normal noise. Identical parameters give identical datasets.
pub fn generate_synthetic(params: &SyntheticParams) -> Result<Dataset, DataError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let services: Vec<ServiceId> = (0..params.n_services)
        .map(|i| ServiceId::new(padded("svc", i, params.n_services)).expect("non-empty"))
        .collect();
    let mut truth = services.clone();
    truth.shuffle(&mut rng);

    let mut base = vec![0.0; services.len()];
    for (pos, s) in truth.iter().enumerate() {
        let idx = services.binary_search(s).expect("truth permutes services");
        base[idx] = BASE_LATENCY_MS * LATENCY_RATIO.powi(pos as i32);
    }

    let sigma = params.log_sigma();
    let mut consumers = Vec::with_capacity(params.n_consumers);
    for c in 0..params.n_consumers {
        let id = ConsumerId::new(padded("user", c, params.n_consumers)).expect("non-empty");
        let mut obs = ObservationSet::new(id);
        for (idx, service) in services.iter().enumerate() {
            // draw both values every time so the stream layout is independent of outcomes
            let seen = rng.random_bool(params.observe_prob);
            let z: f64 = rng.sample(StandardNormal);
            if seen {
                let latency = round6(base[idx] * (sigma * z).exp());
                obs.insert(service.clone(), latency.max(1e-6)).expect("positive latency");
            }
        }
        consumers.push(obs);
    }
    let truth = RankedList::from_ordering(truth).expect("permutation");
    Dataset::new(services.into_iter().collect(), consumers, Some(truth))
}
