//! Traversability oracle: prompt construction, reply parsing, a ground-truth
//! mock, and projection of image regions onto map voxels.

mod camera;
mod latency;
mod mock;
mod prompt;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::map::VoxelKey;
use crate::Result;

pub use camera::{project_regions, Camera, GroundHit};
pub use latency::LatencyModel;
pub use mock::{mock_query, MockOracle, TerrainField, TerrainStats};
pub use prompt::{build_prompt, parse_reply, ParsedReply, ReferenceTerrain, RobotDescription};

/// One region's traversability sample and the voxels it covers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionObservation {
    pub region_id: u32,
    pub value: f64,
    pub voxels: Vec<VoxelKey>,
}

#[derive(Debug, Clone)]
pub struct OracleQuery {
    pub image: RgbImage,
    pub n_regions: u32,
    pub prompt: String,
    /// World-frame ground points covered by each region, indexed by id − 1.
    /// Only the mock reads these; a vision model sees the image alone.
    pub footprints: Vec<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReplyDiagnostics {
    /// Values pulled into [0, 1].
    pub clamped: usize,
    /// Regions answered with the prior mean for lack of ground truth.
    pub uncovered: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReply {
    pub values: Vec<f64>,
    /// Seconds between dispatch and arrival.
    pub latency: f64,
    pub diagnostics: ReplyDiagnostics,
}

/// Anything that turns a numbered image into per-region values.
pub trait Oracle: Send {
    fn query(&mut self, query: &OracleQuery) -> Result<OracleReply>;
}
