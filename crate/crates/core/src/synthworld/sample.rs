use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use super::{Scene, SynthError};
use crate::geometry::{Point3, PointCloud};

/// Axis-aligned rectangle: `axis` is fixed at `value`, the other two
/// coordinates span `[lo, hi]`.
struct Rect {
    axis: usize,
    value: f64,
    lo: [f64; 3],
    hi: [f64; 3],
}

impl Rect {
    fn area(&self) -> f64 {
        (0..3).filter(|&a| a != self.axis).map(|a| self.hi[a] - self.lo[a]).product()
    }
}

/// Uniform random points on every exposed surface at `density` points per
/// square meter (Poisson count per face). Box bottoms resting on the ground
/// are contact surfaces and are skipped, as is the ground under each box.
pub fn sample_surface(scene: &Scene, density: f64, seed: u64) -> Result<PointCloud, SynthError> {
    if !(density > 0.0) || !density.is_finite() {
        return Err(SynthError::InvalidDensity(density));
    }
    scene.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rects = Vec::new();
    for b in &scene.boxes {
        for axis in 0..3 {
            for value in [b.min[axis], b.max[axis]] {
                if axis == 2 && value == 0.0 {
                    continue;
                }
                rects.push(Rect { axis, value, lo: b.min.into(), hi: b.max.into() });
            }
        }
    }
    let mut pts = Vec::new();
    for r in &rects {
        draw(r, density, &mut rng, &mut pts);
    }
    // Ground by rejection against box footprints.
    let ground = Rect {
        axis: 2,
        value: 0.0,
        lo: [scene.ground_min[0], scene.ground_min[1], 0.0],
        hi: [scene.ground_max[0], scene.ground_max[1], 0.0],
    };
    let start = pts.len();
    draw(&ground, density, &mut rng, &mut pts);
    let mut kept = start;
    for i in start..pts.len() {
        let p = pts[i];
        let under = scene.boxes.iter().any(|b| {
            b.min.z == 0.0 && p.x > b.min.x && p.x < b.max.x && p.y > b.min.y && p.y < b.max.y
        });
        if !under {
            pts[kept] = p;
            kept += 1;
        }
    }
    pts.truncate(kept);
    Ok(PointCloud::from_points(pts, "world").expect("sampled points are finite"))
}

fn draw(r: &Rect, density: f64, rng: &mut ChaCha8Rng, out: &mut Vec<Point3>) {
    let mean = r.area() * density;
    if !(mean > 0.0) {
        return;
    }
    let n = Poisson::new(mean).map(|d| d.sample(rng) as usize).unwrap_or(0);
    for _ in 0..n {
        let mut c = [0.0; 3];
        for a in 0..3 {
            c[a] = if a == r.axis { r.value } else { rng.random_range(r.lo[a]..=r.hi[a]) };
        }
        out.push(Point3::from(c));
    }
}
