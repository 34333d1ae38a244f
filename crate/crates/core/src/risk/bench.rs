use std::hint::black_box;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{t_quantile_exact, t_quantile_fast, QuantileTable, DEFAULT_LEVELS, DOF_MAX, DOF_MIN};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskBenchmark {
    pub levels: Vec<f64>,
    /// Over dof ∈ [DOF_MIN, DOF_MAX] in steps of 0.1 and every level.
    pub max_abs_quantile_error: f64,
    pub worst_dof: f64,
    pub worst_level: f64,
    pub evaluations: usize,
    pub fast_ns_per_eval: f64,
    pub exact_ns_per_eval: f64,
    pub speedup_ratio: f64,
}

/// Accuracy of the spline table against the exact quantile, and the time
/// of `evaluations` calls of each on the same random (dof, level) inputs.
pub fn benchmark(evaluations: usize, seed: u64) -> Result<RiskBenchmark> {
    if evaluations == 0 {
        return Err(Error::validation("need at least one evaluation"));
    }
    let table = QuantileTable::with_default_levels();
    let (mut worst, mut worst_dof, mut worst_level) = (0.0f64, DOF_MIN, DEFAULT_LEVELS[0]);
    let steps = ((DOF_MAX - DOF_MIN) / 0.1).round() as usize;
    for k in 0..=steps {
        let dof = DOF_MIN + 0.1 * k as f64;
        for &c in &DEFAULT_LEVELS {
            let e = (t_quantile_fast(&table, dof, c)? - t_quantile_exact(dof, c)?).abs();
            if e > worst {
                (worst, worst_dof, worst_level) = (e, dof, c);
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs: Vec<(f64, f64)> = (0..evaluations)
        .map(|_| (rng.random_range(DOF_MIN..=DOF_MAX), DEFAULT_LEVELS[rng.random_range(0..DEFAULT_LEVELS.len())]))
        .collect();
    let time = |f: &dyn Fn(f64, f64) -> Result<f64>| -> Result<f64> {
        let t0 = Instant::now();
        let mut acc = 0.0;
        for &(d, c) in &inputs {
            acc += f(black_box(d), black_box(c))?;
        }
        black_box(acc);
        Ok(t0.elapsed().as_secs_f64())
    };
    let fast = time(&|d, c| t_quantile_fast(&table, d, c))?;
    let exact = time(&|d, c| t_quantile_exact(d, c))?;
    let n = evaluations as f64;
    Ok(RiskBenchmark {
        levels: DEFAULT_LEVELS.to_vec(),
        max_abs_quantile_error: worst,
        worst_dof,
        worst_level,
        evaluations,
        fast_ns_per_eval: fast * 1e9 / n,
        exact_ns_per_eval: exact * 1e9 / n,
        speedup_ratio: exact / fast.max(1e-12),
    })
}
