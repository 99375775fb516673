//! Monte-Carlo estimation of clearing costs under a policy.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{holding_rate, service_rate, State, SystemParams};
use crate::policies::{Action, DecisionContext, Policy, Station};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    pub seed: u64,
    pub replications: u64,
    pub initial_state: State,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub replications: u64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

/// Generator for replication `rep`: one ChaCha stream per replication.
pub fn replication_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

/// Simulates one path to the empty state and returns its holding cost.
///
/// Each event consumes a single uniform: it selects the station and, after
/// rescaling to the chosen sub-interval, drives the exponential sojourn.
pub fn run_episode<R: Rng + ?Sized>(
    params: &SystemParams,
    policy: &Policy,
    initial: State,
    rng: &mut R,
) -> Result<f64> {
    if !initial.is_member(params) {
        return Err(Error::IndexOutOfSpace(initial));
    }
    let State { mut i, mut k, mut l } = initial;
    let mut cost = 0.0;
    while i + k + l > 0 {
        let rate1 = f64::from(k) * params.mu1;
        let total = service_rate(params, k, l);
        if total <= 0.0 {
            return Err(Error::StuckState(State::new(i, k, l)));
        }
        let share1 = rate1 / total;
        let u: f64 = rng.random();
        let (station1, v) = if u < share1 {
            (true, u / share1)
        } else {
            (false, (u - share1) / (1.0 - share1))
        };
        let sojourn = -(1.0 - v.min(1.0 - f64::EPSILON)).ln() / total;
        cost += holding_rate(params, State::new(i, k, l)) * sojourn;

        if i == 0 {
            if station1 {
                k -= 1;
            } else {
                l -= 1;
            }
            continue;
        }
        let ctx = if station1 {
            DecisionContext::new(i, k - 1, l, Station::Station1)
        } else {
            DecisionContext::new(i, k, l - 1, Station::Station2)
        };
        i -= 1;
        match policy.decide(&ctx)? {
            Action::Independent => {
                k = ctx.k_busy + 1;
                l = ctx.l_busy;
            }
            Action::Collaborative => {
                k = ctx.k_busy;
                l = ctx.l_busy + 1;
            }
        }
    }
    Ok(cost)
}

/// Mean and standard error over independent replications. Results do not
/// depend on the number of worker threads.
pub fn estimate(params: &SystemParams, policy: &Policy, config: &SimConfig) -> Result<SimEstimate> {
    if config.replications == 0 {
        return Err(Error::InvalidConfig("replications must be at least 1".into()));
    }
    if !config.initial_state.is_member(params) {
        return Err(Error::IndexOutOfSpace(config.initial_state));
    }
    let costs = (0..config.replications)
        .into_par_iter()
        .map(|rep| run_episode(params, policy, config.initial_state, &mut replication_rng(config.seed, rep)))
        .collect::<Result<Vec<f64>>>()?;
    let n = costs.len() as f64;
    let mean = costs.iter().sum::<f64>() / n;
    let (std_error, warning) = if costs.len() == 1 {
        (0.0, Some("single replication: standard error unavailable".to_string()))
    } else {
        let var = costs.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0);
        ((var / n).sqrt(), None)
    };
    Ok(SimEstimate { mean, std_error, replications: config.replications, seed: config.seed, warning })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policies::benchmark;

    #[test]
    fn empty_start_costs_nothing() {
        let p = SystemParams::new(2, 1, 10.0, 4.0, 0.1, 1.0, 0.5).unwrap();
        let pol = benchmark(&p, "pi1").unwrap();
        let c = run_episode(&p, &pol, State::EMPTY, &mut replication_rng(1, 0)).unwrap();
        assert_eq!(c, 0.0);
    }

    #[test]
    fn single_job_mean() {
        let p = SystemParams::new(1, 1, 2.0, 4.0, 0.1, 1.0, 0.5).unwrap();
        let pol = benchmark(&p, "pi1").unwrap();
        let cfg = SimConfig { seed: 3, replications: 20_000, initial_state: State::new(0, 1, 0) };
        let est = estimate(&p, &pol, &cfg).unwrap();
        assert!((est.mean - 0.5).abs() <= 3.0 * est.std_error, "{est:?}");
    }

    #[test]
    fn one_replication_flags_warning() {
        let p = SystemParams::new(1, 1, 2.0, 4.0, 0.1, 1.0, 0.5).unwrap();
        let pol = benchmark(&p, "pi3").unwrap();
        let cfg = SimConfig { seed: 3, replications: 1, initial_state: State::new(3, 1, 0) };
        let est = estimate(&p, &pol, &cfg).unwrap();
        assert_eq!(est.std_error, 0.0);
        assert!(est.warning.is_some());
    }

    #[test]
    fn same_seed_same_estimate() {
        let p = SystemParams::new(3, 1, 10.0, 6.0, 0.2, 1.0, 0.5).unwrap();
        let pol = benchmark(&p, "pi4").unwrap();
        let cfg = SimConfig { seed: 11, replications: 500, initial_state: State::new(5, 2, 1) };
        assert_eq!(estimate(&p, &pol, &cfg).unwrap(), estimate(&p, &pol, &cfg).unwrap());
        let other = SimConfig { seed: 12, ..cfg };
        assert_ne!(estimate(&p, &pol, &cfg).unwrap().mean, estimate(&p, &pol, &other).unwrap().mean);
    }

    #[test]
    fn bad_config_rejected() {
        let p = SystemParams::new(3, 1, 10.0, 6.0, 0.2, 1.0, 0.5).unwrap();
        let pol = benchmark(&p, "pi4").unwrap();
        let zero = SimConfig { seed: 1, replications: 0, initial_state: State::EMPTY };
        assert!(estimate(&p, &pol, &zero).is_err());
        let outside = SimConfig { seed: 1, replications: 5, initial_state: State::new(2, 1, 1) };
        assert_eq!(estimate(&p, &pol, &outside), Err(Error::IndexOutOfSpace(State::new(2, 1, 1))));
    }
}
