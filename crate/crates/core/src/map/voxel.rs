use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use super::nig::{CellState, MapPrior};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VoxelKey {
    pub ix: i32,
    pub iy: i32,
    pub iz: i32,
}

impl VoxelKey {
    pub fn new(ix: i32, iy: i32, iz: i32) -> Self {
        Self { ix, iy, iz }
    }
}

/// Counters for one committed batch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InsertReport {
    pub fused: u64,
    pub clamped: u64,
    pub rejected: u64,
}

/// Sparse voxel map. Keys absent from `cells` are prior-only.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelMap {
    cells: HashMap<VoxelKey, CellState>,
    resolution: f64,
    origin: [f64; 3],
    revision: u64,
    prior: MapPrior,
    clamped_total: u64,
    rejected_total: u64,
}

impl VoxelMap {
    pub fn new(resolution: f64, origin: [f64; 3], prior: MapPrior) -> Result<Self> {
        if !(resolution.is_finite() && resolution > 0.0) {
            return Err(crate::Error::validation(format!(
                "map resolution must be > 0, got {resolution}"
            )));
        }
        prior.validate()?;
        Ok(Self {
            cells: HashMap::new(),
            resolution,
            origin,
            revision: 0,
            prior,
            clamped_total: 0,
            rejected_total: 0,
        })
    }

    pub(crate) fn from_parts(
        resolution: f64,
        origin: [f64; 3],
        prior: MapPrior,
        revision: u64,
        cells: HashMap<VoxelKey, CellState>,
    ) -> Result<Self> {
        let mut m = Self::new(resolution, origin, prior)?;
        m.revision = revision;
        m.cells = cells;
        Ok(m)
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn prior(&self) -> &MapPrior {
        &self.prior
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Total samples clamped into [0, 1] over the map's lifetime.
    pub fn clamped_total(&self) -> u64 {
        self.clamped_total
    }

    pub fn rejected_total(&self) -> u64 {
        self.rejected_total
    }

    pub fn key_at(&self, x: f64, y: f64, z: f64) -> VoxelKey {
        let r = self.resolution;
        VoxelKey {
            ix: ((x - self.origin[0]) / r).floor() as i32,
            iy: ((y - self.origin[1]) / r).floor() as i32,
            iz: ((z - self.origin[2]) / r).floor() as i32,
        }
    }

    pub fn center_of(&self, k: VoxelKey) -> [f64; 3] {
        let r = self.resolution;
        [
            self.origin[0] + (k.ix as f64 + 0.5) * r,
            self.origin[1] + (k.iy as f64 + 0.5) * r,
            self.origin[2] + (k.iz as f64 + 0.5) * r,
        ]
    }

    /// Cell state, falling back to the prior for unobserved keys.
    pub fn get(&self, k: VoxelKey) -> CellState {
        self.cells.get(&k).copied().unwrap_or_else(|| self.prior.cell())
    }

    pub fn observed(&self, k: VoxelKey) -> Option<&CellState> {
        self.cells.get(&k)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&VoxelKey, &CellState)> {
        self.cells.iter()
    }

    /// Fuse a batch of (voxel, traversability sample) pairs.
    ///
    /// Samples are clamped to [0, 1]; non-finite samples are dropped. Every
    /// fused sample also counts as an occupancy hit. The revision moves once
    /// per non-empty batch.
    pub fn insert_observations(&mut self, obs: &[(VoxelKey, f64)]) -> InsertReport {
        let mut report = InsertReport::default();
        if obs.is_empty() {
            return report;
        }
        for &(key, x) in obs {
            if !x.is_finite() {
                report.rejected += 1;
                continue;
            }
            let v = x.clamp(0.0, 1.0);
            if v != x {
                report.clamped += 1;
            }
            let prior = self.prior;
            let cell = self.cells.entry(key).or_insert_with(|| prior.cell());
            cell.nig = cell.nig.fold(v);
            *cell = cell.with_hit(true);
            report.fused += 1;
        }
        self.clamped_total += report.clamped;
        self.rejected_total += report.rejected;
        self.revision += 1;
        report
    }
}

/// Single-writer, many-reader handle. Readers hold immutable snapshots; a
/// batch becomes visible only once fully applied.
#[derive(Debug)]
pub struct SharedMap {
    current: RwLock<Arc<VoxelMap>>,
}

impl SharedMap {
    pub fn new(map: VoxelMap) -> Self {
        Self {
            current: RwLock::new(Arc::new(map)),
        }
    }

    pub fn snapshot(&self) -> Arc<VoxelMap> {
        self.current.read().expect("map lock poisoned").clone()
    }

    pub fn commit(&self, obs: &[(VoxelKey, f64)]) -> InsertReport {
        let mut next = (*self.snapshot()).clone();
        let report = next.insert_observations(obs);
        *self.current.write().expect("map lock poisoned") = Arc::new(next);
        report
    }
}
