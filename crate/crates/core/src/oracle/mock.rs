use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{LatencyModel, Oracle, OracleQuery, OracleReply, ReplyDiagnostics};
use crate::Result;

/// Ground-truth traversability distribution of one terrain class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TerrainStats {
    pub m: f64,
    pub sigma: f64,
}

pub trait TerrainField: Send + Sync {
    /// `None` outside the known world.
    fn terrain_at(&self, x: f64, y: f64) -> Option<TerrainStats>;
}

/// One clamped N(m̄, σ̄²) draw per region, averaging (m, σ) over the region's
/// ground points, then a latency draw.
pub fn mock_query<R: Rng + ?Sized>(
    field: &dyn TerrainField,
    footprints: &[Vec<[f64; 2]>],
    prior_mean: f64,
    latency: &LatencyModel,
    rng: &mut R,
) -> OracleReply {
    let mut diagnostics = ReplyDiagnostics::default();
    let mut values = Vec::with_capacity(footprints.len());
    for (i, pts) in footprints.iter().enumerate() {
        let mut m = 0.0;
        let mut s = 0.0;
        let mut n = 0usize;
        for p in pts {
            if let Some(t) = field.terrain_at(p[0], p[1]) {
                m += t.m;
                s += t.sigma;
                n += 1;
            }
        }
        if n == 0 {
            diagnostics.uncovered.push(i as u32 + 1);
            values.push(prior_mean);
            continue;
        }
        let (m, s) = (m / n as f64, s / n as f64);
        let z: f64 = rng.sample(StandardNormal);
        let x = if s > 0.0 { m + s * z } else { m };
        let c = x.clamp(0.0, 1.0);
        if c != x {
            diagnostics.clamped += 1;
        }
        values.push(c);
    }
    let latency = latency.sample(rng);
    OracleReply { values, latency, diagnostics }
}

/// Seeded mock backed by a ground-truth field.
pub struct MockOracle {
    field: Arc<dyn TerrainField>,
    rng: ChaCha8Rng,
    latency: LatencyModel,
    prior_mean: f64,
}

impl MockOracle {
    pub fn new(field: Arc<dyn TerrainField>, seed: u64, latency: LatencyModel) -> Self {
        Self { field, rng: ChaCha8Rng::seed_from_u64(seed), latency, prior_mean: 0.5 }
    }

    pub fn with_prior_mean(mut self, m: f64) -> Self {
        self.prior_mean = m;
        self
    }
}

impl Oracle for MockOracle {
    fn query(&mut self, q: &OracleQuery) -> Result<OracleReply> {
        let mut reply = mock_query(self.field.as_ref(), &q.footprints, self.prior_mean, &self.latency, &mut self.rng);
        // regions with no projected ground still get an answer
        reply.values.resize(q.n_regions as usize, self.prior_mean);
        Ok(reply)
    }
}
