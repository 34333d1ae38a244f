use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::geometry::PoseSE2;
use crate::map::{VoxelKey, VoxelMap};
use crate::segmentation::LabelMap;
use crate::{Error, Result};

/// Forward-looking pinhole camera over flat ground (z = 0), square pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Camera {
    pub width: u32,
    pub height: u32,
    pub vfov_deg: f64,
    /// Lens height above ground, metres.
    pub mount_height: f64,
    /// Downward tilt of the optical axis.
    pub pitch_deg: f64,
    /// Lens position along the robot heading; negative is behind the centre.
    pub mount_forward: f64,
    pub max_range: f64,
}

impl Default for Camera {
    fn default() -> Self {
        Self {
            width: 160,
            height: 120,
            vfov_deg: 80.0,
            mount_height: 1.0,
            pitch_deg: 40.0,
            mount_forward: -0.5,
            max_range: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundHit {
    pub x: f64,
    pub y: f64,
    /// Horizontal distance from the lens.
    pub range: f64,
}

impl Camera {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::validation("camera image must be non-empty"));
        }
        if !(self.vfov_deg > 0.0 && self.vfov_deg < 180.0) {
            return Err(Error::validation("vfov must lie in (0, 180) degrees"));
        }
        if !(self.mount_height > 0.0 && self.max_range > 0.0) {
            return Err(Error::validation("camera must sit above ground with a positive range"));
        }
        if !(self.pitch_deg.is_finite() && self.mount_forward.is_finite()) {
            return Err(Error::validation("camera pose must be finite"));
        }
        Ok(())
    }

    pub fn focal(&self) -> f64 {
        0.5 * self.height as f64 / (0.5 * self.vfov_deg.to_radians()).tan()
    }

    /// Lens position on the ground plane.
    pub fn lens_xy(&self, pose: &PoseSE2) -> [f64; 2] {
        let (s, c) = pose.psi.sin_cos();
        [pose.x + self.mount_forward * c, pose.y + self.mount_forward * s]
    }

    /// Where the ray through pixel centre (u, v) meets the ground, if it does.
    pub fn ground_hit(&self, pose: &PoseSE2, u: f64, v: f64) -> Option<GroundHit> {
        let f = self.focal();
        let xc = (u - 0.5 * self.width as f64) / f;
        let yc = (v - 0.5 * self.height as f64) / f;
        let (st, ct) = self.pitch_deg.to_radians().sin_cos();
        // robot frame: x forward, y left, z up
        let dx = ct - yc * st;
        let dy = -xc;
        let dz = -st - yc * ct;
        if dz >= -1e-12 {
            return None;
        }
        let t = self.mount_height / -dz;
        let (fx, fy) = (t * dx, t * dy);
        let (s, c) = pose.psi.sin_cos();
        let [lx, ly] = self.lens_xy(pose);
        Some(GroundHit { x: lx + c * fx - s * fy, y: ly + s * fx + c * fy, range: fx.hypot(fy) })
    }

    pub fn pixel_hit(&self, pose: &PoseSE2, px: u32, py: u32) -> Option<GroundHit> {
        self.ground_hit(pose, px as f64 + 0.5, py as f64 + 0.5)
    }
}

/// Ground voxels seen by each region (index id − 1), within the camera range.
/// Each list is sorted and free of duplicates.
pub fn project_regions(
    labels: &LabelMap,
    camera: &Camera,
    pose: &PoseSE2,
    map: &VoxelMap,
) -> Result<Vec<Vec<VoxelKey>>> {
    if labels.width != camera.width || labels.height != camera.height {
        return Err(Error::validation("label map does not match camera resolution"));
    }
    let lens = camera.lens_xy(pose);
    let mut sets = vec![BTreeSet::new(); labels.count as usize];
    for py in 0..labels.height {
        for px in 0..labels.width {
            let Some(hit) = camera.pixel_hit(pose, px, py) else { continue };
            if hit.range > camera.max_range {
                continue;
            }
            let key = map.key_at(hit.x, hit.y, 0.0);
            let c = map.center_of(key);
            if (c[0] - lens[0]).hypot(c[1] - lens[1]) > camera.max_range {
                continue;
            }
            sets[labels.get(px, py) as usize - 1].insert(key);
        }
    }
    Ok(sets.into_iter().map(|s| s.into_iter().collect()).collect())
}
