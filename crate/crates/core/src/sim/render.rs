use image::{Rgb, RgbImage};
use rand::Rng;

use super::World;
use crate::geometry::PoseSE2;
use crate::oracle::Camera;

const SKY: [u8; 3] = [150, 185, 225];
const VOID: [u8; 3] = [45, 45, 50];

/// Flat-ground view through `camera`, each class in its display colour plus
/// uniform per-channel noise. Uses the same ray model as `project_regions`.
pub fn render_view<R: Rng + ?Sized>(world: &World, pose: &PoseSE2, camera: &Camera, noise: u8, rng: &mut R) -> RgbImage {
    let mut img = RgbImage::new(camera.width, camera.height);
    let amp = noise as i16;
    for py in 0..camera.height {
        for px in 0..camera.width {
            let base = match camera.pixel_hit(pose, px, py) {
                None => SKY,
                Some(h) => world.class_at(h.x, h.y).map_or(VOID, |c| world.class(c).color),
            };
            let rgb = base.map(|c| {
                let d = if amp > 0 { rng.random_range(-amp..=amp) } else { 0 };
                (c as i16 + d).clamp(0, 255) as u8
            });
            img.put_pixel(px, py, Rgb(rgb));
        }
    }
    img
}
