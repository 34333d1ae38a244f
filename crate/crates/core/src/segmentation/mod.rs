//! Superpixel segmentation and numbered visual markers.

mod font;
mod lab;
mod markers;
mod slic;

use serde::{Deserialize, Serialize};

pub use lab::{srgb_to_lab, Lab};
pub use markers::{number_masks, RegionInfo, RegionRegistry};
pub use slic::{slic, SlicParams};

/// Per-pixel region ids in `1..=count`, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMap {
    pub width: u32,
    pub height: u32,
    pub count: u32,
    labels: Vec<u32>,
}

impl LabelMap {
    /// Builds a label map, checking the partition invariant.
    pub fn new(width: u32, height: u32, labels: Vec<u32>) -> crate::Result<Self> {
        if labels.len() != width as usize * height as usize {
            return Err(crate::Error::validation("label buffer does not match dimensions"));
        }
        let count = labels.iter().copied().max().unwrap_or(0);
        let map = Self { width, height, count, labels };
        map.check_partition()?;
        Ok(map)
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u32 {
        self.labels[(y * self.width + x) as usize]
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    /// Every pixel has an id in 1..=count and every id is used.
    pub fn check_partition(&self) -> crate::Result<()> {
        let mut used = vec![false; self.count as usize + 1];
        for &l in &self.labels {
            if l == 0 || l > self.count {
                return Err(crate::Error::validation(format!("label {l} outside 1..={}", self.count)));
            }
            used[l as usize] = true;
        }
        if let Some(missing) = (1..=self.count as usize).find(|&i| !used[i]) {
            return Err(crate::Error::validation(format!("label {missing} unused")));
        }
        Ok(())
    }

    /// Number of 4-neighbour pixel pairs that straddle two regions.
    pub fn boundary_length(&self) -> usize {
        let (w, h) = (self.width as usize, self.height as usize);
        let mut n = 0;
        for y in 0..h {
            for x in 0..w {
                let l = self.labels[y * w + x];
                if x + 1 < w && self.labels[y * w + x + 1] != l {
                    n += 1;
                }
                if y + 1 < h && self.labels[(y + 1) * w + x] != l {
                    n += 1;
                }
            }
        }
        n
    }

    /// True if every region is 4-connected.
    pub fn regions_connected(&self) -> bool {
        let (w, h) = (self.width as usize, self.height as usize);
        let mut seen = vec![false; w * h];
        let mut started = vec![false; self.count as usize + 1];
        let mut stack = Vec::new();
        for start in 0..w * h {
            if seen[start] {
                continue;
            }
            let l = self.labels[start];
            if started[l as usize] {
                return false;
            }
            started[l as usize] = true;
            seen[start] = true;
            stack.push(start);
            while let Some(p) = stack.pop() {
                let (x, y) = (p % w, p / w);
                let mut visit = |q: usize| {
                    if !seen[q] && self.labels[q] == l {
                        seen[q] = true;
                        stack.push(q);
                    }
                };
                if x > 0 {
                    visit(p - 1);
                }
                if x + 1 < w {
                    visit(p + 1);
                }
                if y > 0 {
                    visit(p - w);
                }
                if y + 1 < h {
                    visit(p + w);
                }
            }
        }
        true
    }
}

pub fn read_rgb(path: &std::path::Path) -> crate::Result<image::RgbImage> {
    Ok(image::open(path)?.to_rgb8())
}

pub fn write_rgb(path: &std::path::Path, img: &image::RgbImage) -> crate::Result<()> {
    img.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

/// PNG bytes of `img`.
pub fn encode_png(img: &image::RgbImage) -> crate::Result<Vec<u8>> {
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png)?;
    Ok(out.into_inner())
}
