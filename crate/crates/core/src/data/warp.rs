//! Inverse-mapped affine warps with bilinear sampling. Every rotation in the
//! crate, augmentation and test-time alike, goes through [`warp_affine`].
//!
//! Pixel `(col, row)` sits at `(x, y) = (col, row)`; the image center is
//! `((size - 1) / 2, (size - 1) / 2)` and y points down.

/// Forward transform about the image center: mirror, then scale and rotate,
/// then shift (in pixels).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine {
    pub theta: f64,
    pub scale: f64,
    pub shift: (f64, f64),
    pub h_mirror: bool,
    pub v_mirror: bool,
}

impl Affine {
    pub fn rotation(theta: f64) -> Self {
        Self { theta, scale: 1.0, shift: (0.0, 0.0), h_mirror: false, v_mirror: false }
    }

    /// Maps an output pixel position back to the source position.
    fn inverse(&self, c: f64, x: f64, y: f64) -> (f64, f64) {
        let (dx, dy) = ((x - c - self.shift.0) / self.scale, (y - c - self.shift.1) / self.scale);
        let (s, co) = self.theta.sin_cos();
        let (mut u, mut v) = (co * dx + s * dy, -s * dx + co * dy);
        if self.h_mirror {
            u = -u;
        }
        if self.v_mirror {
            v = -v;
        }
        (c + u, c + v)
    }
}

/// Mean of the one-pixel border, used as the fill value for uncovered pixels.
pub fn background_level(pixels: &[f64], size: usize) -> f64 {
    if size == 1 {
        return pixels[0];
    }
    let mut sum = 0.0;
    for i in 0..size {
        sum += pixels[i] + pixels[(size - 1) * size + i];
    }
    for j in 1..size - 1 {
        sum += pixels[j * size] + pixels[j * size + size - 1];
    }
    sum / (4 * size - 4) as f64
}

/// Applies `t` to a square image. Samples falling outside the source take
/// `fill`; neighbors are blended bilinearly, so edges fade into the fill.
pub fn warp_affine(pixels: &[f64], size: usize, t: &Affine, fill: f64) -> Vec<f64> {
    assert_eq!(pixels.len(), size * size, "pixel buffer does not match size");
    let c = (size as f64 - 1.0) / 2.0;
    let at = |col: isize, row: isize| -> f64 {
        if col < 0 || row < 0 || col >= size as isize || row >= size as isize {
            fill
        } else {
            pixels[row as usize * size + col as usize]
        }
    };
    let mut out = Vec::with_capacity(size * size);
    for row in 0..size {
        for col in 0..size {
            let (sx, sy) = t.inverse(c, col as f64, row as f64);
            let (x0, y0) = (sx.floor(), sy.floor());
            let (fx, fy) = (sx - x0, sy - y0);
            let (x0, y0) = (x0 as isize, y0 as isize);
            let top = at(x0, y0) * (1.0 - fx) + at(x0 + 1, y0) * fx;
            let bottom = at(x0, y0 + 1) * (1.0 - fx) + at(x0 + 1, y0 + 1) * fx;
            out.push((top * (1.0 - fy) + bottom * fy).clamp(0.0, 1.0));
        }
    }
    out
}

/// Rotates by `theta` about the center, filling with the border mean. A
/// direction at angle `a` in the input points at `a + theta` in the output.
pub fn rotate_image(pixels: &[f64], size: usize, theta: f64) -> Vec<f64> {
    warp_affine(pixels, size, &Affine::rotation(theta), background_level(pixels, size))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn ramp(size: usize) -> Vec<f64> {
        (0..size * size).map(|i| (i % size) as f64 / size as f64).collect()
    }

    #[test]
    fn identity_is_exact() {
        let img = ramp(9);
        assert_eq!(warp_affine(&img, 9, &Affine::rotation(0.0), 0.3), img);
    }

    #[test]
    fn quarter_turn_moves_right_to_down() {
        let mut img = vec![0.0; 25];
        img[2 * 5 + 4] = 1.0; // right of center
        let out = rotate_image(&img, 5, FRAC_PI_2);
        let hot = out.iter().position(|&v| v > 0.999).unwrap();
        assert_eq!((hot % 5, hot / 5), (2, 4));
    }

    #[test]
    fn half_turn_twice_is_identity() {
        let img = ramp(8);
        let once = warp_affine(&img, 8, &Affine::rotation(PI), 0.0);
        let twice = warp_affine(&once, 8, &Affine::rotation(PI), 0.0);
        for (a, b) in img.iter().zip(&twice) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn mirrors_flip_axes() {
        let img = ramp(4);
        let h = Affine { h_mirror: true, ..Affine::rotation(0.0) };
        let out = warp_affine(&img, 4, &h, 0.0);
        for row in 0..4 {
            for col in 0..4 {
                assert!((out[row * 4 + col] - img[row * 4 + 3 - col]).abs() < 1e-12);
            }
        }
        let v = Affine { v_mirror: true, ..Affine::rotation(0.0) };
        let out = warp_affine(&img, 4, &v, 0.0);
        for row in 0..4 {
            for col in 0..4 {
                assert!((out[row * 4 + col] - img[(3 - row) * 4 + col]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn uncovered_pixels_take_fill() {
        let img = vec![0.5; 16];
        let t = Affine { shift: (10.0, 0.0), ..Affine::rotation(0.0) };
        assert!(warp_affine(&img, 4, &t, 0.1).iter().all(|&v| (v - 0.1).abs() < 1e-15));
    }

    #[test]
    fn border_mean() {
        let mut img = vec![1.0; 9];
        img[4] = 0.0;
        assert_eq!(background_level(&img, 3), 1.0);
    }
}
