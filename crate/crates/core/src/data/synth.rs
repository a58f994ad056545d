//! Procedural scenes: a slanted background plane with spheres and boxes in
//! front of it, seen by an orthographic camera looking along +z.

use drnet_tensor::{Real, Tensor};
use rand::Rng;

use crate::backbone::check_divisible;
use crate::data::netpbm::quantize_u8;
use crate::error::Result;
use crate::layers::{seeded, SeededRng};

/// Width of the view in metres; pixels are square.
pub const VIEW_SPAN: Real = 4.0;
pub const MIN_DEPTH: Real = 0.5;
pub const MAX_DEPTH: Real = 10.0;

#[derive(Clone, Debug)]
pub struct Scene {
    /// (1, 3, h, w), 8-bit quantized values in [0, 1]
    pub rgb: Tensor,
    /// (1, 1, h, w), metres
    pub depth: Tensor,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct SceneParams {
    /// Fixed object count; random in 3..=8 when absent.
    pub objects: Option<usize>,
}

enum Shape {
    Sphere { c: [Real; 3], r: Real },
    Box { lo: [Real; 3], hi: [Real; 2] },
}

struct Object {
    shape: Shape,
    albedo: [Real; 3],
}

impl Object {
    /// Depth and unit normal (facing the camera) of the first hit at (x, y).
    fn hit(&self, x: Real, y: Real) -> Option<(Real, [Real; 3])> {
        match self.shape {
            Shape::Sphere { c, r } => {
                let (dx, dy) = (x - c[0], y - c[1]);
                let rem = r * r - dx * dx - dy * dy;
                (rem >= 0.0).then(|| {
                    let dz = -rem.sqrt();
                    (c[2] + dz, [dx / r, dy / r, dz / r])
                })
            }
            Shape::Box { lo, hi } => {
                (x >= lo[0] && x <= hi[0] && y >= lo[1] && y <= hi[1]).then_some((lo[2], [0.0, 0.0, -1.0]))
            }
        }
    }
}

fn albedo(rng: &mut SeededRng) -> [Real; 3] {
    [rng.gen_range(0.2..1.0), rng.gen_range(0.2..1.0), rng.gen_range(0.2..1.0)]
}

fn normalize(v: [Real; 3]) -> [Real; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

pub fn synth_scene(seed: u64, h: usize, w: usize) -> Result<Scene> {
    synth_scene_with(seed, h, w, SceneParams::default())
}

pub fn synth_scene_with(seed: u64, h: usize, w: usize, params: SceneParams) -> Result<Scene> {
    check_divisible(h, w)?;
    let mut rng = seeded(seed);
    let pitch = VIEW_SPAN / w as Real;
    let half_x = VIEW_SPAN / 2.0;
    let half_y = pitch * h as Real / 2.0;

    let d0: Real = rng.gen_range(3.0..7.0);
    let slope = [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)];
    let plane_albedo = albedo(&mut rng);
    let plane_normal = normalize([slope[0], slope[1], -1.0]);
    // light direction, pointing from the surface towards the light
    let light = normalize([rng.gen_range(-0.7..0.7), rng.gen_range(-0.7..0.7), -1.0]);

    let count = params.objects.unwrap_or_else(|| rng.gen_range(3..=8));
    let objects: Vec<Object> = (0..count)
        .map(|_| {
            let cx = rng.gen_range(-half_x..half_x);
            let cy = rng.gen_range(-half_y..half_y);
            let shape = if rng.gen_bool(0.5) {
                let r = rng.gen_range(0.2..0.8);
                Shape::Sphere { c: [cx, cy, rng.gen_range(1.5..6.0)], r }
            } else {
                let (ex, ey) = (rng.gen_range(0.2..0.7), rng.gen_range(0.2..0.7));
                Shape::Box { lo: [cx - ex, cy - ey, rng.gen_range(1.0..6.0)], hi: [cx + ex, cy + ey] }
            };
            Object { shape, albedo: albedo(&mut rng) }
        })
        .collect();

    let plane = h * w;
    let mut rgb = vec![0.0; 3 * plane];
    let mut depth = vec![0.0; plane];
    for row in 0..h {
        let y = (row as Real + 0.5) * pitch - half_y;
        for col in 0..w {
            let x = (col as Real + 0.5) * pitch - half_x;
            let mut z = d0 + slope[0] * x + slope[1] * y;
            let mut normal = plane_normal;
            let mut color = plane_albedo;
            for obj in &objects {
                if let Some((oz, n)) = obj.hit(x, y) {
                    if oz < z {
                        (z, normal, color) = (oz, n, obj.albedo);
                    }
                }
            }
            let lambert = (normal[0] * light[0] + normal[1] * light[1] + normal[2] * light[2]).max(0.0);
            let shade = 0.25 + 0.75 * lambert;
            let p = row * w + col;
            for c in 0..3 {
                rgb[c * plane + p] = quantize_u8(color[c] * shade) as Real / 255.0;
            }
            depth[p] = z.clamp(MIN_DEPTH, MAX_DEPTH);
        }
    }
    Ok(Scene {
        rgb: Tensor::from_vec((1, 3, h, w), rgb)?,
        depth: Tensor::from_vec((1, 1, h, w), depth)?,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        let a = synth_scene(42, 64, 64).unwrap();
        let b = synth_scene(42, 64, 64).unwrap();
        assert_eq!(a.rgb.data(), b.rgb.data());
        assert_eq!(a.depth.data(), b.depth.data());
        let c = synth_scene(43, 64, 64).unwrap();
        assert_ne!(a.depth.data(), c.depth.data());
    }

    #[test]
    fn ranges() {
        for seed in 0..10 {
            let s = synth_scene(seed, 64, 96).unwrap();
            assert!(s.depth.data().iter().all(|&d| (MIN_DEPTH..=MAX_DEPTH).contains(&d)));
            assert!(s.rgb.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
            assert!(s.rgb.data().iter().all(|&v| ((v * 255.0).round() - v * 255.0).abs() < 1e-9));
        }
    }

    #[test]
    fn size_must_be_divisible() {
        assert!(synth_scene(0, 48, 64).is_err());
    }
}
