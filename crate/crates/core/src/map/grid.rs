use serde::{Deserialize, Serialize};

use super::nig::NigState;
use super::voxel::VoxelMap;

/// Scores a cell belief; implemented by the risk module's CVaR evaluator.
pub trait CellRisk {
    fn cell_cvar(&self, nig: &NigState) -> f64;
}

impl<F: Fn(&NigState) -> f64> CellRisk for F {
    fn cell_cvar(&self, nig: &NigState) -> f64 {
        self(nig)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskCell {
    pub cvar: f64,
    pub count: u64,
    pub observed: bool,
}

/// Index window of a 2D grid in voxel (ix, iy) coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridExtent {
    pub ix0: i32,
    pub iy0: i32,
    pub nx: usize,
    pub ny: usize,
}

impl GridExtent {
    /// Smallest window covering a world rectangle on `map`'s lattice.
    pub fn covering(map: &VoxelMap, min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Self {
        let lo = map.key_at(min_x, min_y, 0.0);
        let hi = map.key_at(max_x, max_y, 0.0);
        Self {
            ix0: lo.ix,
            iy0: lo.iy,
            nx: (hi.ix - lo.ix + 1).max(1) as usize,
            ny: (hi.iy - lo.iy + 1).max(1) as usize,
        }
    }
}

/// Worst-case 2D compression of the voxel map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskGrid {
    pub resolution: f64,
    /// World (x, y) of the lower-left corner of cell (0, 0).
    pub origin: [f64; 2],
    pub nx: usize,
    pub ny: usize,
    pub prior_cvar: f64,
    pub revision: u64,
    cells: Vec<RiskCell>,
}

impl RiskGrid {
    /// A grid with every cell unobserved.
    pub fn unobserved(resolution: f64, origin: [f64; 2], nx: usize, ny: usize, prior_cvar: f64) -> Self {
        Self {
            resolution,
            origin,
            nx,
            ny,
            prior_cvar,
            revision: 0,
            cells: vec![
                RiskCell {
                    cvar: prior_cvar,
                    count: 0,
                    observed: false,
                };
                nx * ny
            ],
        }
    }

    pub fn cells(&self) -> &[RiskCell] {
        &self.cells
    }

    #[inline]
    pub fn index(&self, cx: usize, cy: usize) -> usize {
        cy * self.nx + cx
    }

    pub fn get(&self, cx: usize, cy: usize) -> &RiskCell {
        &self.cells[self.index(cx, cy)]
    }

    pub fn set(&mut self, cx: usize, cy: usize, cell: RiskCell) {
        let i = self.index(cx, cy);
        self.cells[i] = cell;
    }

    /// Cell indices containing a world point, if inside the grid.
    #[inline]
    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let fx = ((x - self.origin[0]) / self.resolution).floor();
        let fy = ((y - self.origin[1]) / self.resolution).floor();
        if fx < 0.0 || fy < 0.0 || fx >= self.nx as f64 || fy >= self.ny as f64 {
            None
        } else {
            Some((fx as usize, fy as usize))
        }
    }

    pub fn cell_center(&self, cx: usize, cy: usize) -> [f64; 2] {
        [
            self.origin[0] + (cx as f64 + 0.5) * self.resolution,
            self.origin[1] + (cy as f64 + 0.5) * self.resolution,
        ]
    }

    /// Cell at integer lattice coordinates (may lie outside the grid).
    /// Outside cells read as unobserved prior.
    #[inline]
    pub fn lookup(&self, cx: i64, cy: i64) -> RiskCell {
        if cx < 0 || cy < 0 || cx >= self.nx as i64 || cy >= self.ny as i64 {
            RiskCell {
                cvar: self.prior_cvar,
                count: 0,
                observed: false,
            }
        } else {
            self.cells[cy as usize * self.nx + cx as usize]
        }
    }

    pub fn world_bounds(&self) -> crate::geometry::Bounds {
        crate::geometry::Bounds::new(
            self.origin[0],
            self.origin[1],
            self.origin[0] + self.nx as f64 * self.resolution,
            self.origin[1] + self.ny as f64 * self.resolution,
        )
    }
}

/// Collapse each vertical pillar of voxels whose centers lie in
/// `[z_min, z_max]` to one cell: the minimum CVaR and minimum sample count
/// among its observed voxels. Pillars with nothing observed carry the
/// prior's CVaR and are flagged unobserved.
pub fn compress_pillars(
    map: &VoxelMap,
    risk: &dyn CellRisk,
    z_min: f64,
    z_max: f64,
    extent: GridExtent,
) -> crate::Result<RiskGrid> {
    if !(z_min < z_max) {
        return Err(crate::Error::validation(format!(
            "z_min ({z_min}) must be below z_max ({z_max})"
        )));
    }
    let prior_cvar = risk.cell_cvar(&map.prior().nig());
    let r = map.resolution();
    let o = map.origin();
    let mut grid = RiskGrid::unobserved(
        r,
        [o[0] + extent.ix0 as f64 * r, o[1] + extent.iy0 as f64 * r],
        extent.nx,
        extent.ny,
        prior_cvar,
    );
    grid.revision = map.revision();
    for (key, cell) in map.iter() {
        let cx = key.ix as i64 - extent.ix0 as i64;
        let cy = key.iy as i64 - extent.iy0 as i64;
        if cx < 0 || cy < 0 || cx >= extent.nx as i64 || cy >= extent.ny as i64 {
            continue;
        }
        let zc = map.center_of(*key)[2];
        if zc < z_min || zc > z_max {
            continue;
        }
        let cvar = risk.cell_cvar(&cell.nig);
        let i = grid.index(cx as usize, cy as usize);
        let slot = &mut grid.cells[i];
        if slot.observed {
            slot.cvar = slot.cvar.min(cvar);
            slot.count = slot.count.min(cell.nig.n);
        } else {
            *slot = RiskCell {
                cvar,
                count: cell.nig.n,
                observed: true,
            };
        }
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::map::{MapPrior, VoxelKey};

    // Toy risk: the posterior location, so per-voxel scores are easy to set.
    fn loc(n: &NigState) -> f64 {
        n.gamma
    }

    fn map() -> VoxelMap {
        VoxelMap::new(1.0, [0.0, 0.0, 0.0], MapPrior::default()).unwrap()
    }

    fn ext() -> GridExtent {
        GridExtent { ix0: 0, iy0: 0, nx: 3, ny: 3 }
    }

    #[test]
    fn pillar_takes_min() {
        let mut m = map();
        // gamma after one sample x from prior 0.5 with kappa0 = 1: (0.5 + x) / 2
        m.insert_observations(&[
            (VoxelKey::new(1, 1, 0), 1.1),
            (VoxelKey::new(1, 1, 1), -0.1),
            (VoxelKey::new(1, 1, 2), 0.5),
            (VoxelKey::new(1, 1, 2), 0.5),
        ]);
        let g = compress_pillars(&m, &loc, 0.0, 10.0, ext()).unwrap();
        let c = g.get(1, 1);
        assert!(c.observed);
        assert_eq!(c.cvar, 0.25);
        assert_eq!(c.count, 1);
    }

    #[test]
    fn empty_pillar_is_prior() {
        let m = map();
        let g = compress_pillars(&m, &loc, 0.0, 10.0, ext()).unwrap();
        assert!(!g.get(0, 0).observed);
        assert_eq!(g.get(0, 0).cvar, 0.5);
        assert_eq!(g.prior_cvar, 0.5);
    }

    #[test]
    fn single_voxel_identity() {
        let mut m = map();
        m.insert_observations(&[(VoxelKey::new(2, 0, 0), 0.9)]);
        let g = compress_pillars(&m, &loc, 0.0, 10.0, ext()).unwrap();
        assert_eq!(g.get(2, 0).cvar, m.get(VoxelKey::new(2, 0, 0)).nig.gamma);
    }

    #[test]
    fn z_band_filters_voxels() {
        let mut m = map();
        m.insert_observations(&[(VoxelKey::new(0, 0, 5), 0.0)]);
        let g = compress_pillars(&m, &loc, 0.0, 2.0, ext()).unwrap();
        assert!(!g.get(0, 0).observed);
        assert!(compress_pillars(&m, &loc, 1.0, 1.0, ext()).is_err());
    }

    #[test]
    fn order_invariant() {
        let obs: Vec<_> = (0..30)
            .map(|i| (VoxelKey::new(i % 3, (i / 3) % 3, i % 4), (i as f64 * 0.37) % 1.0))
            .collect();
        let mut a = map();
        a.insert_observations(&obs);
        let mut rev = obs.clone();
        rev.reverse();
        let mut b = map();
        for o in rev.chunks(1) {
            b.insert_observations(o);
        }
        let ga = compress_pillars(&a, &loc, -1.0, 10.0, ext()).unwrap();
        let gb = compress_pillars(&b, &loc, -1.0, 10.0, ext()).unwrap();
        for (x, y) in ga.cells().iter().zip(gb.cells()) {
            assert_eq!(x.count, y.count);
            assert!((x.cvar - y.cvar).abs() < 1e-12);
        }
    }
}
