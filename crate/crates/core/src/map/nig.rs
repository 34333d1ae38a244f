use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Normal-Inverse-Gamma belief over a cell's latent traversability mean and
/// variance, with the number of fused samples.
///
/// `kappa0` and `a0` are the pseudo-count and shape at `n = 0`. Keeping them
/// lets `kappa` and `a` be recomputed as `kappa0 + n` and `a0 + n/2` with a
/// single rounding, so the affine relation holds exactly however the samples
/// were grouped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NigState {
    pub gamma: f64,
    pub kappa: f64,
    pub a: f64,
    pub b: f64,
    pub n: u64,
    pub kappa0: f64,
    pub a0: f64,
}

impl NigState {
    pub fn new(gamma: f64, kappa: f64, a: f64, b: f64) -> Result<Self> {
        let s = Self {
            gamma,
            kappa,
            a,
            b,
            n: 0,
            kappa0: kappa,
            a0: a,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.gamma.is_finite() {
            return Err(Error::validation(format!("gamma not finite: {}", self.gamma)));
        }
        for (name, v) in [("kappa", self.kappa), ("a", self.a), ("b", self.b)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::validation(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Posterior after fusing `samples` in one shot.
    ///
    /// The location update uses the sample mean; `b` gains half the
    /// within-sample sum of squares plus the prior/data disagreement term.
    pub fn update_batch(&self, samples: &[f64]) -> Result<Self> {
        self.validate()?;
        check_finite(samples)?;
        if samples.is_empty() {
            return Ok(*self);
        }
        let m = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / m;
        let ss: f64 = samples.iter().map(|x| (x - mean) * (x - mean)).sum();
        let kappa_n = self.kappa + m;
        let d = mean - self.gamma;
        let n = self.n + samples.len() as u64;
        Ok(Self {
            gamma: (self.gamma * self.kappa + m * mean) / kappa_n,
            kappa: self.kappa0 + n as f64,
            a: self.a0 + 0.5 * n as f64,
            b: self.b + 0.5 * ss + self.kappa * m * d * d / (2.0 * kappa_n),
            n,
            ..*self
        })
    }

    /// Streaming form: the one-sample posterior is itself NIG, so folding
    /// samples one at a time reproduces the batch posterior for any grouping.
    pub fn update_one(&self, x: f64) -> Result<Self> {
        self.validate()?;
        check_finite(&[x])?;
        Ok(self.fold(x))
    }

    #[inline]
    pub(crate) fn fold(&self, x: f64) -> Self {
        let kappa_n = self.kappa + 1.0;
        let d = x - self.gamma;
        let n = self.n + 1;
        Self {
            gamma: self.gamma + d / kappa_n,
            kappa: self.kappa0 + n as f64,
            a: self.a0 + 0.5 * n as f64,
            b: self.b + self.kappa * d * d / (2.0 * kappa_n),
            n,
            ..*self
        }
    }
}

fn check_finite(samples: &[f64]) -> Result<()> {
    match samples.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(Error::validation(format!(
            "sample {i} is not finite: {}",
            samples[i]
        ))),
        None => Ok(()),
    }
}

pub fn nig_update_batch(prior: &NigState, samples: &[f64]) -> Result<NigState> {
    prior.update_batch(samples)
}

pub fn nig_update_one(prior: &NigState, x: f64) -> Result<NigState> {
    prior.update_one(x)
}

/// Map cell: traversability belief plus Beta occupancy counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellState {
    pub nig: NigState,
    pub alpha: f64,
    pub beta: f64,
}

impl CellState {
    pub fn occupancy_mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }

    pub fn with_hit(mut self, hit: bool) -> Self {
        if hit {
            self.alpha += 1.0;
        } else {
            self.beta += 1.0;
        }
        self
    }
}

pub fn beta_update(cell: &CellState, hit: bool) -> CellState {
    cell.with_hit(hit)
}

/// Prior hyperparameters shared by every cell of a map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MapPrior {
    pub gamma0: f64,
    pub kappa0: f64,
    pub a0: f64,
    pub b0: f64,
    pub alpha0: f64,
    pub beta0: f64,
}

impl Default for MapPrior {
    fn default() -> Self {
        Self {
            gamma0: 0.5,
            kappa0: 1.0,
            a0: 1.0,
            b0: 1.0,
            alpha0: 1.0,
            beta0: 1.0,
        }
    }
}

impl MapPrior {
    pub fn validate(&self) -> Result<()> {
        self.nig().validate()?;
        // 2a > 1 keeps the lower-tail expectation finite for every cell.
        if self.a0 <= 0.5 {
            return Err(Error::validation(format!("a0 must exceed 0.5, got {}", self.a0)));
        }
        for (name, v) in [("alpha0", self.alpha0), ("beta0", self.beta0)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::validation(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn nig(&self) -> NigState {
        NigState {
            gamma: self.gamma0,
            kappa: self.kappa0,
            a: self.a0,
            b: self.b0,
            n: 0,
            kappa0: self.kappa0,
            a0: self.a0,
        }
    }

    pub fn cell(&self) -> CellState {
        CellState {
            nig: self.nig(),
            alpha: self.alpha0,
            beta: self.beta0,
        }
    }
}
