//! Probabilistic traversability map.
//!
//! Each voxel carries a Normal-Inverse-Gamma belief over its latent
//! traversability plus a Beta posterior over occupancy. Voxels are stored
//! sparsely; an absent key behaves exactly like a prior-only cell.

mod grid;
mod nig;
mod snapshot;
mod voxel;

pub use grid::{compress_pillars, CellRisk, GridExtent, RiskCell, RiskGrid};
pub use nig::{beta_update, nig_update_batch, nig_update_one, CellState, MapPrior, NigState};
pub use snapshot::{MapSnapshot, SnapshotCell, SnapshotHeader};
pub use voxel::{InsertReport, SharedMap, VoxelKey, VoxelMap};
