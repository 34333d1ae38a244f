use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::PoseSE2;
use crate::oracle::{TerrainField, TerrainStats};
use crate::planner::{footprint_cells, RobotDims};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerrainClass {
    pub name: String,
    pub m: f64,
    pub sigma: f64,
    pub color: [u8; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Circle {
    pub center: [f64; 2],
    pub radius: f64,
}

/// Painted onto the terrain grid in order; later shapes win.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Rect { class: u8, min: [f64; 2], max: [f64; 2] },
    Disc { class: u8, center: [f64; 2], radius: f64 },
    /// Seeded random discs inside `min..max`, at least `clearance` apart
    /// (edge to edge) and outside every keep-out circle.
    Scatter {
        class: u8,
        count: usize,
        radius: [f64; 2],
        min: [f64; 2],
        max: [f64; 2],
        clearance: f64,
        #[serde(default)]
        keepout: Vec<Circle>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldSpec {
    pub name: String,
    /// Extent in metres; the world spans `[0, size[0]] × [0, size[1]]`.
    pub size: [f64; 2],
    pub cell_size: f64,
    pub seed: u64,
    pub classes: Vec<TerrainClass>,
    pub background: u8,
    #[serde(default)]
    pub shapes: Vec<Shape>,
    pub start: PoseSE2,
    pub goal: [f64; 2],
}

/// A rasterised world.
#[derive(Debug, Clone)]
pub struct World {
    pub spec: WorldSpec,
    pub nx: usize,
    pub ny: usize,
    cells: Vec<u8>,
}

const CANONICAL: [(&str, &str); 4] = [
    ("open_field", include_str!("../../worlds/open_field.json")),
    ("corridor", include_str!("../../worlds/corridor.json")),
    ("forest", include_str!("../../worlds/forest.json")),
    ("island_goal", include_str!("../../worlds/island_goal.json")),
];

impl World {
    pub fn from_spec(spec: WorldSpec) -> Result<Self> {
        let [w, h] = spec.size;
        if !(w > 0.0 && h > 0.0 && spec.cell_size > 0.0) {
            return Err(Error::validation("world size and cell size must be positive"));
        }
        if spec.classes.is_empty() {
            return Err(Error::validation("world needs at least one terrain class"));
        }
        for c in &spec.classes {
            if !(0.0..=1.0).contains(&c.m) || !(c.sigma >= 0.0 && c.sigma.is_finite()) {
                return Err(Error::validation(format!("class {:?} needs m in [0, 1] and sigma >= 0", c.name)));
            }
        }
        let nclass = spec.classes.len();
        let check = |c: u8| {
            if (c as usize) < nclass {
                Ok(())
            } else {
                Err(Error::validation(format!("unknown terrain class {c}")))
            }
        };
        check(spec.background)?;
        let nx = (w / spec.cell_size).ceil() as usize;
        let ny = (h / spec.cell_size).ceil() as usize;
        let mut world = Self { nx, ny, cells: vec![spec.background; nx * ny], spec };
        let mut rng = ChaCha8Rng::seed_from_u64(world.spec.seed);
        for shape in world.spec.shapes.clone() {
            match shape {
                Shape::Rect { class, min, max } => {
                    check(class)?;
                    world.paint(class, |x, y| x >= min[0] && x <= max[0] && y >= min[1] && y <= max[1]);
                }
                Shape::Disc { class, center, radius } => {
                    check(class)?;
                    world.paint(class, |x, y| (x - center[0]).hypot(y - center[1]) <= radius);
                }
                Shape::Scatter { class, count, radius, min, max, clearance, keepout } => {
                    check(class)?;
                    if !(radius[0] > 0.0 && radius[0] <= radius[1]) || !(min[0] < max[0] && min[1] < max[1]) {
                        return Err(Error::validation("scatter needs 0 < r_min <= r_max and a non-empty box"));
                    }
                    let mut placed: Vec<Circle> = Vec::new();
                    let mut attempts = 0;
                    while placed.len() < count && attempts < count * 200 {
                        attempts += 1;
                        let c = [rng.random_range(min[0]..max[0]), rng.random_range(min[1]..max[1])];
                        let r = rng.random_range(radius[0]..=radius[1]);
                        let clear = |o: &Circle, gap: f64| (c[0] - o.center[0]).hypot(c[1] - o.center[1]) >= r + o.radius + gap;
                        if placed.iter().all(|o| clear(o, clearance)) && keepout.iter().all(|o| clear(o, 0.0)) {
                            placed.push(Circle { center: c, radius: r });
                        }
                    }
                    for d in placed {
                        world.paint(class, |x, y| (x - d.center[0]).hypot(y - d.center[1]) <= d.radius);
                    }
                }
            }
        }
        let s = &world.spec.start;
        if !world.contains(s.x, s.y) || !world.contains(world.spec.goal[0], world.spec.goal[1]) {
            return Err(Error::validation("start and goal must lie inside the world"));
        }
        Ok(world)
    }

    /// Loads a world file, checking that the start terrain clears `validity_threshold`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_spec(serde_json::from_str(&text)?)
    }

    pub fn canonical(name: &str) -> Result<Self> {
        let (_, text) = CANONICAL
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| Error::validation(format!("no canonical world named {name:?}")))?;
        Self::from_spec(serde_json::from_str(text)?)
    }

    pub fn canonical_names() -> impl Iterator<Item = &'static str> {
        CANONICAL.iter().map(|(n, _)| *n)
    }

    /// Loads by canonical name or JSON file path.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        if CANONICAL.iter().any(|(n, _)| *n == name_or_path) {
            Self::canonical(name_or_path)
        } else {
            Self::load(Path::new(name_or_path))
        }
    }

    pub fn check_start(&self, validity_threshold: f64) -> Result<()> {
        let s = &self.spec.start;
        let m = self.class_at(s.x, s.y).map(|c| self.spec.classes[c].m).unwrap_or(0.0);
        if m <= validity_threshold {
            return Err(Error::validation(format!(
                "start terrain mean {m} is not above the validity threshold {validity_threshold}"
            )));
        }
        Ok(())
    }

    fn paint(&mut self, class: u8, inside: impl Fn(f64, f64) -> bool) {
        let cs = self.spec.cell_size;
        for j in 0..self.ny {
            let y = (j as f64 + 0.5) * cs;
            for i in 0..self.nx {
                if inside((i as f64 + 0.5) * cs, y) {
                    self.cells[j * self.nx + i] = class;
                }
            }
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= 0.0 && y >= 0.0 && x < self.spec.size[0] && y < self.spec.size[1]
    }

    pub fn class_at(&self, x: f64, y: f64) -> Option<usize> {
        if !self.contains(x, y) {
            return None;
        }
        let cs = self.spec.cell_size;
        let i = ((x / cs).floor() as usize).min(self.nx - 1);
        let j = ((y / cs).floor() as usize).min(self.ny - 1);
        Some(self.cells[j * self.nx + i] as usize)
    }

    pub fn class(&self, id: usize) -> &TerrainClass {
        &self.spec.classes[id]
    }

    /// Ground-truth mean traversability; zero outside the world.
    pub fn traversability_at(&self, x: f64, y: f64) -> f64 {
        self.class_at(x, y).map_or(0.0, |c| self.spec.classes[c].m)
    }

    /// Mean ground truth over the same half-size footprint the planner scores,
    /// sampled on a 5 cm lattice.
    pub fn footprint_traversability(&self, pose: &PoseSE2, dims: &RobotDims) -> f64 {
        const STEP: f64 = 0.05;
        let cells = footprint_cells(pose, dims, STEP, [0.0, 0.0]);
        let sum: f64 = cells
            .iter()
            .map(|&(i, j)| self.traversability_at((i as f64 + 0.5) * STEP, (j as f64 + 0.5) * STEP))
            .sum();
        sum / cells.len() as f64
    }

    pub fn goal_pose(&self) -> PoseSE2 {
        PoseSE2::new(self.spec.goal[0], self.spec.goal[1], 0.0)
    }
}

impl TerrainField for World {
    fn terrain_at(&self, x: f64, y: f64) -> Option<TerrainStats> {
        self.class_at(x, y).map(|c| TerrainStats { m: self.spec.classes[c].m, sigma: self.spec.classes[c].sigma })
    }
}
