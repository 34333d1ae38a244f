//! JSON snapshot of a voxel map.
//!
//! Layout:
//! ```json
//! { "header": { "resolution": 0.1, "origin": [0, 0, 0],
//!               "prior": { "gamma0": .., "kappa0": .., "a0": .., "b0": .., "alpha0": .., "beta0": .. },
//!               "revision": 3 },
//!   "cells": [ { "key": [ix, iy, iz], "gamma": .., "kappa": .., "a": .., "b": .., "n": ..,
//!                "alpha": .., "beta": .. }, ... ] }
//! ```
//! Floats are written in shortest round-trip form, so parsing a snapshot
//! reproduces every value bit for bit. Cells are sorted by key.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::nig::{CellState, MapPrior, NigState};
use super::voxel::{VoxelKey, VoxelMap};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotHeader {
    pub resolution: f64,
    pub origin: [f64; 3],
    pub prior: MapPrior,
    pub revision: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotCell {
    pub key: [i32; 3],
    pub gamma: f64,
    pub kappa: f64,
    pub a: f64,
    pub b: f64,
    pub n: u64,
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSnapshot {
    pub header: SnapshotHeader,
    pub cells: Vec<SnapshotCell>,
}

impl MapSnapshot {
    pub fn from_map(map: &VoxelMap) -> Self {
        let mut cells: Vec<SnapshotCell> = map
            .iter()
            .map(|(k, c)| SnapshotCell {
                key: [k.ix, k.iy, k.iz],
                gamma: c.nig.gamma,
                kappa: c.nig.kappa,
                a: c.nig.a,
                b: c.nig.b,
                n: c.nig.n,
                alpha: c.alpha,
                beta: c.beta,
            })
            .collect();
        cells.sort_by_key(|c| c.key);
        Self {
            header: SnapshotHeader {
                resolution: map.resolution(),
                origin: map.origin(),
                prior: *map.prior(),
                revision: map.revision(),
            },
            cells,
        }
    }

    pub fn into_map(self) -> Result<VoxelMap> {
        let prior = self.header.prior;
        let mut cells = HashMap::with_capacity(self.cells.len());
        for c in self.cells {
            let nig = NigState {
                gamma: c.gamma,
                kappa: c.kappa,
                a: c.a,
                b: c.b,
                n: c.n,
                kappa0: prior.kappa0,
                a0: prior.a0,
            };
            nig.validate()?;
            let key = VoxelKey::new(c.key[0], c.key[1], c.key[2]);
            if cells
                .insert(key, CellState { nig, alpha: c.alpha, beta: c.beta })
                .is_some()
            {
                return Err(crate::Error::validation(format!("duplicate cell key {:?}", c.key)));
            }
        }
        VoxelMap::from_parts(
            self.header.resolution,
            self.header.origin,
            prior,
            self.header.revision,
            cells,
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn json_round_trip_is_bit_exact(
            obs in prop::collection::vec(((-50i32..50, -50i32..50, 0i32..3), -0.5f64..1.5), 0..200),
            res in 0.01f64..1.0,
            ox in -100.0f64..100.0,
        ) {
            let mut m = VoxelMap::new(res, [ox, -ox / 3.0, 0.1], MapPrior::default()).unwrap();
            let batch: Vec<_> = obs.iter().map(|&((x, y, z), v)| (VoxelKey::new(x, y, z), v)).collect();
            m.insert_observations(&batch);
            let snap = MapSnapshot::from_map(&m);
            let text = snap.to_json().unwrap();
            let back = MapSnapshot::from_json(&text).unwrap();
            prop_assert_eq!(&back, &snap);
            let m2 = back.into_map().unwrap();
            prop_assert_eq!(m2.revision(), m.revision());
            for (k, c) in m.iter() {
                let d = m2.get(*k);
                prop_assert_eq!(d.nig.gamma.to_bits(), c.nig.gamma.to_bits());
                prop_assert_eq!(d.nig.b.to_bits(), c.nig.b.to_bits());
                prop_assert_eq!(d, *c);
            }
        }
    }

    #[test]
    fn duplicate_keys_rejected() {
        let mut m = VoxelMap::new(0.1, [0.0; 3], MapPrior::default()).unwrap();
        m.insert_observations(&[(VoxelKey::new(0, 0, 0), 0.4)]);
        let mut s = MapSnapshot::from_map(&m);
        s.cells.push(s.cells[0].clone());
        assert!(s.into_map().is_err());
    }
}
