use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_episode, EpisodeResult, SimConfig, World};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteRow {
    pub world: String,
    pub episodes: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub mean_elapsed: f64,
    /// Mean distance travelled over the start-goal distance, successful runs only.
    pub mean_path_ratio: Option<f64>,
    pub mean_queries: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteSummary {
    pub rows: Vec<SuiteRow>,
    pub episodes: Vec<EpisodeResult>,
}

impl SuiteSummary {
    pub fn table(&self) -> String {
        let mut s = format!("{:<14} {:>4} {:>8} {:>9} {:>7} {:>8}\n", "world", "runs", "success", "time [s]", "ratio", "queries");
        for r in &self.rows {
            let ratio = r.mean_path_ratio.map_or("-".to_string(), |x| format!("{x:.2}"));
            s += &format!(
                "{:<14} {:>4} {:>7.0}% {:>9.1} {:>7} {:>8.1}\n",
                r.world,
                r.episodes,
                100.0 * r.success_rate,
                r.mean_elapsed,
                ratio,
                r.mean_queries
            );
        }
        s
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(self)?)?;
        std::fs::write(dir.join("summary.txt"), self.table())?;
        Ok(())
    }
}

/// `episodes` runs per world with seeds `base_seed..base_seed + episodes`,
/// in parallel. Traces go to `trace_dir/<world>_<seed>.jsonl` when given.
pub fn run_suite(
    worlds: &[Arc<World>],
    config: &SimConfig,
    episodes: usize,
    base_seed: u64,
    trace_dir: Option<&Path>,
) -> Result<SuiteSummary> {
    if let Some(d) = trace_dir {
        std::fs::create_dir_all(d)?;
    }
    let jobs: Vec<(usize, u64)> = (0..worlds.len()).flat_map(|w| (0..episodes as u64).map(move |k| (w, base_seed + k))).collect();
    let results: Vec<EpisodeResult> = jobs
        .par_iter()
        .map(|&(w, seed)| {
            let mut ep = run_episode(&worlds[w], config, seed)?;
            if let Some(d) = trace_dir {
                let name = format!("{}_{}.jsonl", worlds[w].spec.name, seed);
                ep.write_trace(&d.join(&name))?;
                ep.result.trace = Some(name);
            }
            Ok(ep.result)
        })
        .collect::<Result<_>>()?;

    let rows = worlds
        .iter()
        .map(|w| {
            let rs: Vec<&EpisodeResult> = results.iter().filter(|r| r.world == w.spec.name).collect();
            let n = rs.len().max(1) as f64;
            let ok: Vec<&&EpisodeResult> = rs.iter().filter(|r| r.success).collect();
            SuiteRow {
                world: w.spec.name.clone(),
                episodes: rs.len(),
                successes: ok.len(),
                success_rate: ok.len() as f64 / n,
                mean_elapsed: rs.iter().map(|r| r.elapsed).sum::<f64>() / n,
                mean_path_ratio: (!ok.is_empty())
                    .then(|| ok.iter().map(|r| r.distance_travelled / r.straight_line).sum::<f64>() / ok.len() as f64),
                mean_queries: rs.iter().map(|r| r.queries as f64).sum::<f64>() / n,
            }
        })
        .collect();
    Ok(SuiteSummary { rows, episodes: results })
}
