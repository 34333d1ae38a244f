use rand::Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Simulated oracle response time in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LatencyModel {
    Zero,
    Fixed { seconds: f64 },
    /// exp(N(mu, sigma²)) truncated at `cap`.
    LogNormal { mu: f64, sigma: f64, cap: f64 },
}

impl Default for LatencyModel {
    /// About 80% of draws in 1–2.5 s, rare draws up to 5 s.
    fn default() -> Self {
        LatencyModel::LogNormal { mu: 0.458, sigma: 0.3575, cap: 5.0 }
    }
}

impl LatencyModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            LatencyModel::Zero => Ok(()),
            LatencyModel::Fixed { seconds } if seconds.is_finite() && seconds >= 0.0 => Ok(()),
            LatencyModel::LogNormal { mu, sigma, cap }
                if mu.is_finite() && sigma.is_finite() && sigma >= 0.0 && cap > 0.0 =>
            {
                Ok(())
            }
            _ => Err(Error::validation(format!("invalid latency model {self:?}"))),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            LatencyModel::Zero => 0.0,
            LatencyModel::Fixed { seconds } => seconds,
            LatencyModel::LogNormal { mu, sigma, cap } => match LogNormal::new(mu, sigma) {
                Ok(d) => d.sample(rng).min(cap),
                Err(_) => mu.exp().min(cap),
            },
        }
    }
}
