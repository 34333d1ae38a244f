use std::collections::HashMap;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use super::lab::srgb_to_lab;
use super::LabelMap;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SlicParams {
    pub k: u32,
    pub compactness: f64,
    pub iters: u32,
}

impl Default for SlicParams {
    fn default() -> Self {
        Self { k: 48, compactness: 10.0, iters: 10 }
    }
}

#[derive(Debug, Clone, Copy)]
struct Center {
    f: [f64; 5],
}

/// Picks an `nx × ny` seed grid with `nx·ny` near `k` and cells as square as possible.
fn seed_grid(w: u32, h: u32, k: u32) -> (u32, u32) {
    let tol = 0.1 * k as f64;
    let mut best: Option<((bool, u64, f64), (u32, u32))> = None;
    for nx in 1..=w.min(k.saturating_mul(2).max(1)) {
        let approx = (k as f64 / nx as f64).round().max(1.0) as u32;
        for ny in approx.saturating_sub(1).max(1)..=(approx + 1).min(h) {
            let n = nx as u64 * ny as u64;
            let off = n.abs_diff(k as u64);
            let inside = (off as f64) <= tol;
            let aspect = ((w as f64 / nx as f64) / (h as f64 / ny as f64)).ln().abs();
            // within tolerance first, then squarest, then closest count
            let key = (!inside, if inside { 0 } else { off }, aspect);
            let better = match &best {
                None => true,
                Some((bk, _)) => {
                    (key.0, key.1) < (bk.0, bk.1) || ((key.0, key.1) == (bk.0, bk.1) && key.2 < bk.2 - 1e-12)
                }
            };
            if better {
                best = Some((key, (nx, ny)));
            }
        }
    }
    best.map(|b| b.1).unwrap_or((1, 1))
}

/// SLIC superpixels in (L, a, b, x, y) with 4-connectivity enforced afterwards.
pub fn slic(img: &RgbImage, params: &SlicParams) -> Result<LabelMap> {
    let (w, h) = img.dimensions();
    let npix = w as usize * h as usize;
    if npix == 0 {
        return Err(Error::validation("image is empty"));
    }
    if params.k == 0 {
        return Err(Error::validation("k must be at least 1"));
    }
    if params.k as usize > npix {
        return Err(Error::validation(format!("k = {} exceeds pixel count {npix}", params.k)));
    }
    if !params.compactness.is_finite() || params.compactness < 0.0 {
        return Err(Error::validation("compactness must be finite and non-negative"));
    }

    let lab: Vec<[f64; 3]> = img
        .pixels()
        .map(|p| {
            let c = srgb_to_lab(p.0);
            [c.l, c.a, c.b]
        })
        .collect();
    let (wu, hu) = (w as usize, h as usize);

    let (nx, ny) = seed_grid(w, h, params.k);
    let sx = w as f64 / nx as f64;
    let sy = h as f64 / ny as f64;
    let s = (sx * sy).sqrt();
    let spatial = (params.compactness / s).powi(2);

    let grad = |x: usize, y: usize| -> f64 {
        let at = |x: usize, y: usize| lab[y * wu + x];
        let (l, r) = (at(x.saturating_sub(1), y), at((x + 1).min(wu - 1), y));
        let (u, d) = (at(x, y.saturating_sub(1)), at(x, (y + 1).min(hu - 1)));
        (0..3).map(|i| (r[i] - l[i]).powi(2) + (d[i] - u[i]).powi(2)).sum()
    };

    let mut centers = Vec::with_capacity((nx * ny) as usize);
    for j in 0..ny {
        for i in 0..nx {
            let cx = (i as f64 + 0.5) * sx;
            let cy = (j as f64 + 0.5) * sy;
            let px = (cx.floor() as usize).min(wu - 1);
            let py = (cy.floor() as usize).min(hu - 1);
            let mut pos = (cx, cy);
            let mut best = (grad(px, py), px, py);
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (qx, qy) = (px as i64 + dx, py as i64 + dy);
                    if qx < 0 || qy < 0 || qx >= wu as i64 || qy >= hu as i64 {
                        continue;
                    }
                    let g = grad(qx as usize, qy as usize);
                    if g < best.0 {
                        best = (g, qx as usize, qy as usize);
                    }
                }
            }
            if (best.1, best.2) != (px, py) {
                pos = (best.1 as f64 + 0.5, best.2 as f64 + 0.5);
            }
            let c = lab[best.2 * wu + best.1];
            centers.push(Center { f: [c[0], c[1], c[2], pos.0, pos.1] });
        }
    }

    let mut assign = vec![u32::MAX; npix];
    let mut dist = vec![f64::INFINITY; npix];
    for it in 0..=params.iters {
        assign.fill(u32::MAX);
        dist.fill(f64::INFINITY);
        for (ci, c) in centers.iter().enumerate() {
            let x0 = (c.f[3] - sx).floor().max(0.0) as usize;
            let x1 = ((c.f[3] + sx).ceil() as usize).min(wu);
            let y0 = (c.f[4] - sy).floor().max(0.0) as usize;
            let y1 = ((c.f[4] + sy).ceil() as usize).min(hu);
            for y in y0..y1 {
                let dyy = y as f64 + 0.5 - c.f[4];
                for x in x0..x1 {
                    let p = y * wu + x;
                    let q = lab[p];
                    let dc = (q[0] - c.f[0]).powi(2) + (q[1] - c.f[1]).powi(2) + (q[2] - c.f[2]).powi(2);
                    let dxx = x as f64 + 0.5 - c.f[3];
                    let d = dc + spatial * (dxx * dxx + dyy * dyy);
                    if d < dist[p] {
                        dist[p] = d;
                        assign[p] = ci as u32;
                    }
                }
            }
        }
        // pixels outside every window fall back to the spatially nearest centre
        for p in 0..npix {
            if assign[p] == u32::MAX {
                let (px, py) = ((p % wu) as f64 + 0.5, (p / wu) as f64 + 0.5);
                let mut best = (f64::INFINITY, 0u32);
                for (ci, c) in centers.iter().enumerate() {
                    let d = (px - c.f[3]).powi(2) + (py - c.f[4]).powi(2);
                    if d < best.0 {
                        best = (d, ci as u32);
                    }
                }
                assign[p] = best.1;
            }
        }
        if it == params.iters {
            break;
        }
        let mut acc = vec![[0.0f64; 6]; centers.len()];
        for p in 0..npix {
            let a = &mut acc[assign[p] as usize];
            let q = lab[p];
            a[0] += q[0];
            a[1] += q[1];
            a[2] += q[2];
            a[3] += (p % wu) as f64 + 0.5;
            a[4] += (p / wu) as f64 + 0.5;
            a[5] += 1.0;
        }
        for (c, a) in centers.iter_mut().zip(&acc) {
            if a[5] > 0.0 {
                for i in 0..5 {
                    c.f[i] = a[i] / a[5];
                }
            }
        }
    }

    let labels = enforce_connectivity(&assign, wu, hu);
    LabelMap::new(w, h, labels)
}

struct Dsu(Vec<usize>);

impl Dsu {
    fn find(&mut self, mut i: usize) -> usize {
        while self.0[i] != i {
            self.0[i] = self.0[self.0[i]];
            i = self.0[i];
        }
        i
    }
}

/// Keeps the largest 4-connected piece of every cluster and merges the other
/// pieces into whichever neighbouring group shares the longest border.
/// Returns labels renumbered 1.. in raster order of first appearance.
fn enforce_connectivity(assign: &[u32], w: usize, h: usize) -> Vec<u32> {
    let npix = w * h;
    let mut comp = vec![usize::MAX; npix];
    let mut comp_label = Vec::new();
    let mut comp_size = Vec::new();
    let mut stack = Vec::new();
    for start in 0..npix {
        if comp[start] != usize::MAX {
            continue;
        }
        let id = comp_label.len();
        let l = assign[start];
        comp_label.push(l);
        let mut size = 0usize;
        comp[start] = id;
        stack.push(start);
        while let Some(p) = stack.pop() {
            size += 1;
            let (x, y) = (p % w, p / w);
            let nbrs = [
                (x > 0).then(|| p - 1),
                (x + 1 < w).then(|| p + 1),
                (y > 0).then(|| p - w),
                (y + 1 < h).then(|| p + w),
            ];
            for q in nbrs.into_iter().flatten() {
                if comp[q] == usize::MAX && assign[q] == l {
                    comp[q] = id;
                    stack.push(q);
                }
            }
        }
        comp_size.push(size);
    }

    let ncomp = comp_label.len();
    let mut largest: HashMap<u32, usize> = HashMap::new();
    for c in 0..ncomp {
        let e = largest.entry(comp_label[c]).or_insert(c);
        if comp_size[c] > comp_size[*e] {
            *e = c;
        }
    }
    let mut kept = vec![false; ncomp];
    for &c in largest.values() {
        kept[c] = true;
    }

    // border lengths between adjacent components, sorted for a stable order
    let mut border: HashMap<(usize, usize), usize> = HashMap::new();
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            for q in [(x + 1 < w).then(|| p + 1), (y + 1 < h).then(|| p + w)].into_iter().flatten() {
                let (a, b) = (comp[p], comp[q]);
                if a != b {
                    *border.entry((a.min(b), a.max(b))).or_default() += 1;
                }
            }
        }
    }
    let mut edges: Vec<((usize, usize), usize)> = border.into_iter().collect();
    edges.sort_unstable();

    let mut dsu = Dsu((0..ncomp).collect());
    let mut root_kept = kept.clone();
    loop {
        let orphan = (0..ncomp).find(|&c| dsu.0[c] == c && !root_kept[c]);
        let Some(orphan) = orphan else { break };
        let mut shared: HashMap<usize, usize> = HashMap::new();
        for &((a, b), n) in &edges {
            let (ra, rb) = (dsu.find(a), dsu.find(b));
            if ra == rb {
                continue;
            }
            if ra == orphan {
                *shared.entry(rb).or_default() += n;
            } else if rb == orphan {
                *shared.entry(ra).or_default() += n;
            }
        }
        // longest border wins, lowest id on ties
        let target = shared.into_iter().max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0))).map(|t| t.0);
        match target {
            Some(t) => {
                dsu.0[orphan] = t;
                root_kept[t] |= root_kept[orphan];
            }
            None => root_kept[orphan] = true,
        }
    }

    let mut remap: HashMap<usize, u32> = HashMap::new();
    let mut out = vec![0u32; npix];
    for p in 0..npix {
        let r = dsu.find(comp[p]);
        let next = remap.len() as u32 + 1;
        out[p] = *remap.entry(r).or_insert(next);
    }
    out
}
