use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use super::font::rasterize;
use super::LabelMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionInfo {
    pub id: u32,
    /// Mean of pixel centres, in pixel units.
    pub centroid: [f64; 2],
    /// Pixel where the id is drawn; always inside the region.
    pub marker: [u32; 2],
    pub pixel_count: u64,
    /// Inclusive `[x0, y0, x1, y1]`.
    pub bbox: [u32; 4],
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RegionRegistry {
    pub width: u32,
    pub height: u32,
    pub regions: Vec<RegionInfo>,
}

impl RegionRegistry {
    pub fn from_labels(labels: &LabelMap) -> Self {
        let n = labels.count as usize;
        let mut sum = vec![[0.0f64; 2]; n];
        let mut count = vec![0u64; n];
        let mut bbox = vec![[u32::MAX, u32::MAX, 0, 0]; n];
        for y in 0..labels.height {
            for x in 0..labels.width {
                let i = labels.get(x, y) as usize - 1;
                sum[i][0] += x as f64 + 0.5;
                sum[i][1] += y as f64 + 0.5;
                count[i] += 1;
                let b = &mut bbox[i];
                b[0] = b[0].min(x);
                b[1] = b[1].min(y);
                b[2] = b[2].max(x);
                b[3] = b[3].max(y);
            }
        }
        let mut regions: Vec<RegionInfo> = (0..n)
            .map(|i| RegionInfo {
                id: i as u32 + 1,
                centroid: [sum[i][0] / count[i] as f64, sum[i][1] / count[i] as f64],
                marker: [0, 0],
                pixel_count: count[i],
                bbox: bbox[i],
            })
            .collect();
        for r in &mut regions {
            r.marker = marker_pixel(labels, r);
        }
        Self { width: labels.width, height: labels.height, regions }
    }

    pub fn get(&self, id: u32) -> Option<&RegionInfo> {
        id.checked_sub(1).and_then(|i| self.regions.get(i as usize))
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn to_json(&self) -> crate::Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Centroid pixel if it lies in the region, else the region pixel nearest the centroid.
fn marker_pixel(labels: &LabelMap, r: &RegionInfo) -> [u32; 2] {
    let cx = (r.centroid[0].floor() as u32).min(labels.width - 1);
    let cy = (r.centroid[1].floor() as u32).min(labels.height - 1);
    if labels.get(cx, cy) == r.id {
        return [cx, cy];
    }
    let mut best = (f64::INFINITY, [cx, cy]);
    for y in r.bbox[1]..=r.bbox[3] {
        for x in r.bbox[0]..=r.bbox[2] {
            if labels.get(x, y) != r.id {
                continue;
            }
            let d = (x as f64 + 0.5 - r.centroid[0]).powi(2) + (y as f64 + 0.5 - r.centroid[1]).powi(2);
            if d < best.0 {
                best = (d, [x, y]);
            }
        }
    }
    best.1
}

const BOUNDARY: Rgb<u8> = Rgb([255, 255, 0]);
const INK: Rgb<u8> = Rgb([255, 255, 255]);
const BACKDROP: Rgb<u8> = Rgb([0, 0, 0]);

/// Draws region outlines and each id at its marker pixel.
pub fn number_masks(labels: &LabelMap, image: &RgbImage) -> (RgbImage, RegionRegistry) {
    let registry = RegionRegistry::from_labels(labels);
    let mut out = image.clone();
    let (w, h) = (labels.width, labels.height);
    for y in 0..h {
        for x in 0..w {
            let l = labels.get(x, y);
            if (x + 1 < w && labels.get(x + 1, y) != l) || (y + 1 < h && labels.get(x, y + 1) != l) {
                out.put_pixel(x, y, BOUNDARY);
            }
        }
    }
    let scale = (w.min(h) / 160).max(1);
    for r in &registry.regions {
        let (tw, th, lit) = rasterize(&r.id.to_string());
        let (bw, bh) = ((tw + 2) * scale, (th + 2) * scale);
        let x0 = r.marker[0] as i64 - (bw / 2) as i64;
        let y0 = r.marker[1] as i64 - (bh / 2) as i64;
        let mut paint = |px: i64, py: i64, c: Rgb<u8>| {
            if px >= 0 && py >= 0 && (px as u32) < w && (py as u32) < h {
                out.put_pixel(px as u32, py as u32, c);
            }
        };
        for dy in 0..bh as i64 {
            for dx in 0..bw as i64 {
                paint(x0 + dx, y0 + dy, BACKDROP);
            }
        }
        for &(cx, cy) in &lit {
            for sy in 0..scale {
                for sx in 0..scale {
                    paint(
                        x0 + ((cx + 1) * scale + sx) as i64,
                        y0 + ((cy + 1) * scale + sy) as i64,
                        INK,
                    );
                }
            }
        }
    }
    (out, registry)
}
