//! Synthetic polarized cells: a soft elliptical body, a brighter protrusion
//! lobe at the front and a small dim rear, on a noisy dark background.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::{DataError, LabeledImage};
use crate::angle::{wrap, Angle};

/// Mean background intensity before noise.
pub const BACKGROUND: f64 = 0.1;
/// Standard deviation of the additive pixel noise.
pub const NOISE_SIGMA: f64 = 0.05;
const MIN_SIZE: usize = 32;

/// Randomized shape parameters of one cell, in pixels and radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellGeometry {
    pub center: (f64, f64),
    /// Semi-axes of the body ellipse.
    pub body_axes: (f64, f64),
    pub body_orientation: f64,
    pub body_intensity: f64,
    /// Angle of the lobe offset from the body center. Equals the label up
    /// to a few degrees of jitter.
    pub lobe_direction: f64,
    pub lobe_distance: f64,
    /// Radial and tangential semi-axes of the lobe.
    pub lobe_axes: (f64, f64),
    pub lobe_intensity: f64,
    pub rear_radius: f64,
    pub rear_intensity: f64,
}

impl CellGeometry {
    pub fn lobe_center(&self) -> (f64, f64) {
        let (s, c) = self.lobe_direction.sin_cos();
        (self.center.0 + self.lobe_distance * c, self.center.1 + self.lobe_distance * s)
    }

    fn rear_center(&self) -> (f64, f64) {
        let (s, c) = self.lobe_direction.sin_cos();
        let d = self.body_axes.0.min(self.body_axes.1) * 0.9;
        (self.center.0 - d * c, self.center.1 - d * s)
    }

    fn sample<R: Rng>(size: usize, direction: Angle, rng: &mut R) -> Self {
        let s = size as f64;
        let mid = (s - 1.0) / 2.0;
        let jitter = 0.04 * s;
        let radius = 0.13 * s * rng.random_range(0.9..1.15);
        let ecc = rng.random_range(1.0..1.4);
        Self {
            center: (mid + rng.random_range(-jitter..jitter), mid + rng.random_range(-jitter..jitter)),
            body_axes: (radius * ecc, radius / ecc),
            body_orientation: rng.random_range(0.0..std::f64::consts::PI),
            body_intensity: rng.random_range(0.35..0.5),
            lobe_direction: direction.radians() + rng.random_range(-0.1..0.1),
            lobe_distance: radius * rng.random_range(0.8..1.05),
            lobe_axes: (radius * rng.random_range(0.45..0.6), radius * rng.random_range(0.8..1.1)),
            lobe_intensity: rng.random_range(0.7..0.9),
            rear_radius: radius * rng.random_range(0.25..0.35),
            rear_intensity: rng.random_range(0.25..0.35),
        }
    }
}

// Smooth step from 1 inside to 0 outside a unit normalized radius.
fn soft(rho2: f64) -> f64 {
    1.0 / (1.0 + ((rho2.sqrt() - 1.0) / 0.12).exp())
}

fn ellipse(x: f64, y: f64, center: (f64, f64), axes: (f64, f64), orientation: f64) -> f64 {
    let (s, c) = orientation.sin_cos();
    let (dx, dy) = (x - center.0, y - center.1);
    let (u, v) = (c * dx + s * dy, -s * dx + c * dy);
    soft((u / axes.0).powi(2) + (v / axes.1).powi(2))
}

/// Noise-free intensity field of `g` on a `size × size` grid.
pub fn render_cell(size: usize, g: &CellGeometry) -> Vec<f64> {
    let lobe = g.lobe_center();
    let rear = g.rear_center();
    let mut out = Vec::with_capacity(size * size);
    for row in 0..size {
        for col in 0..size {
            let (x, y) = (col as f64, row as f64);
            let body = g.body_intensity * ellipse(x, y, g.center, g.body_axes, g.body_orientation);
            let front = g.lobe_intensity * ellipse(x, y, lobe, g.lobe_axes, g.lobe_direction);
            let back = g.rear_intensity * ellipse(x, y, rear, (g.rear_radius, g.rear_radius), 0.0);
            out.push(BACKGROUND + body.max(front).max(back) * (1.0 - BACKGROUND));
        }
    }
    out
}

/// Renders one noisy cell migrating toward `direction`. The id is left empty.
pub fn generate_cell(size: usize, direction: Angle, seed: u64) -> Result<(LabeledImage, CellGeometry), DataError> {
    if size < MIN_SIZE {
        return Err(DataError::Config(format!("image size {size} is below {MIN_SIZE}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let geometry = CellGeometry::sample(size, direction, &mut rng);
    let noise = Normal::new(0.0, NOISE_SIGMA).expect("valid sigma");
    let pixels = render_cell(size, &geometry)
        .into_iter()
        .map(|v| (v + noise.sample(&mut rng)).clamp(0.0, 1.0))
        .collect();
    Ok((LabeledImage { id: String::new(), size, pixels, label: direction }, geometry))
}

/// `count` cells with uniformly random directions. Item `i` is drawn from
/// seed `base_seed + i`, so any prefix of a larger set is reproduced exactly.
pub fn generate_dataset(count: usize, size: usize, base_seed: u64) -> Result<Vec<LabeledImage>, DataError> {
    (0..count)
        .into_par_iter()
        .map(|i| {
            let seed = base_seed.wrapping_add(i as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_d1ec);
            let direction = wrap(rng.random_range(0.0..std::f64::consts::TAU))?;
            let (mut img, _) = generate_cell(size, direction, seed)?;
            img.id = format!("cell_{i:05}");
            Ok(img)
        })
        .collect()
}
