use std::f64::consts::{PI, TAU};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::warp::{background_level, warp_affine, Affine};
use super::LabeledImage;
use crate::angle::{wrap, Angle};

/// Random augmentation ranges. Rotations are always drawn from `[0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub rotate: bool,
    /// Maximum shift per axis as a fraction of the image size.
    pub shift_frac: f64,
    /// Scale factors are drawn from `1 ± scale_delta`.
    pub scale_delta: f64,
    pub h_mirror: bool,
    pub v_mirror: bool,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self { rotate: true, shift_frac: 0.2, scale_delta: 0.1, h_mirror: true, v_mirror: true, seed: 0 }
    }
}

/// One concrete draw from an [`AugmentConfig`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentParams {
    pub theta: f64,
    /// Shift as a fraction of the image size.
    pub shift: (f64, f64),
    pub scale: f64,
    pub h_mirror: bool,
    pub v_mirror: bool,
}

impl AugmentParams {
    pub fn identity() -> Self {
        Self { theta: 0.0, shift: (0.0, 0.0), scale: 1.0, h_mirror: false, v_mirror: false }
    }

    pub fn sample<R: Rng>(cfg: &AugmentConfig, rng: &mut R) -> Self {
        let mut range = |half: f64| if half > 0.0 { rng.random_range(-half..half) } else { 0.0 };
        let shift = (range(cfg.shift_frac), range(cfg.shift_frac));
        let scale = 1.0 + range(cfg.scale_delta);
        Self {
            theta: if cfg.rotate { rng.random_range(0.0..TAU) } else { 0.0 },
            shift,
            scale,
            h_mirror: cfg.h_mirror && rng.random_bool(0.5),
            v_mirror: cfg.v_mirror && rng.random_bool(0.5),
        }
    }

    /// The label after mirroring (horizontal: `π − a`, vertical: `−a`) and
    /// then rotating by `theta`. Shifts and scaling leave it unchanged.
    pub fn correct_label(&self, label: Angle) -> Angle {
        let mut a = label.radians();
        if self.h_mirror {
            a = PI - a;
        }
        if self.v_mirror {
            a = -a;
        }
        wrap(a + self.theta).expect("finite label")
    }

    pub fn apply(&self, img: &LabeledImage) -> LabeledImage {
        let s = img.size as f64;
        let t = Affine {
            theta: self.theta,
            scale: self.scale,
            shift: (self.shift.0 * s, self.shift.1 * s),
            h_mirror: self.h_mirror,
            v_mirror: self.v_mirror,
        };
        let fill = background_level(&img.pixels, img.size);
        LabeledImage {
            id: img.id.clone(),
            size: img.size,
            pixels: warp_affine(&img.pixels, img.size, &t, fill),
            label: self.correct_label(img.label),
        }
    }
}

/// Draws parameters from `cfg` with `rng` and applies them.
pub fn augment<R: Rng>(img: &LabeledImage, cfg: &AugmentConfig, rng: &mut R) -> LabeledImage {
    AugmentParams::sample(cfg, rng).apply(img)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::angle::{cyclic_distance, unit_to_angle};
    use crate::data::{generate_cell, intensity_centroid, BACKGROUND, NOISE_SIGMA};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn centroid_angle(img: &LabeledImage) -> Angle {
        let c = (img.size as f64 - 1.0) / 2.0;
        let (x, y) = intensity_centroid(&img.pixels, img.size, BACKGROUND + 2.0 * NOISE_SIGMA).unwrap();
        unit_to_angle(x - c, y - c).unwrap()
    }

    #[test]
    fn quarter_turn_of_direction_zero() {
        let (img, _) = generate_cell(64, Angle::ZERO, 11).unwrap();
        let p = AugmentParams { theta: FRAC_PI_2, ..AugmentParams::identity() };
        let out = p.apply(&img);
        assert!((out.label.radians() - FRAC_PI_2).abs() < 1e-15);
        assert!(cyclic_distance(centroid_angle(&out), out.label) < 0.35);
    }

    #[test]
    fn mirror_labels() {
        let a = Angle::new(FRAC_PI_4).unwrap();
        let h = AugmentParams { h_mirror: true, ..AugmentParams::identity() };
        let v = AugmentParams { v_mirror: true, ..AugmentParams::identity() };
        assert!((h.correct_label(a).radians() - 3.0 * FRAC_PI_4).abs() < 1e-15);
        assert!((v.correct_label(a).radians() - 7.0 * FRAC_PI_4).abs() < 1e-15);
    }

    // The label correction must move the image's own centroid direction the
    // same way the warp does.
    #[test]
    fn image_and_label_move_together() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cfg = AugmentConfig { shift_frac: 0.0, scale_delta: 0.0, ..Default::default() };
        for k in 0..20 {
            let (img, _) = generate_cell(64, Angle::new(0.3 * k as f64).unwrap(), k).unwrap();
            let p = AugmentParams::sample(&cfg, &mut rng);
            let out = p.apply(&img);
            let expected = p.correct_label(centroid_angle(&img));
            let err = cyclic_distance(centroid_angle(&out), expected).to_degrees();
            assert!(err < 3.0, "case {k}: {err:.2} deg");
        }
    }

    #[test]
    fn disabled_config_is_identity() {
        let cfg = AugmentConfig { rotate: false, shift_frac: 0.0, scale_delta: 0.0, h_mirror: false, v_mirror: false, seed: 0 };
        let (img, _) = generate_cell(32, Angle::new(2.0).unwrap(), 1).unwrap();
        let out = augment(&img, &cfg, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(out, img);
    }

    proptest! {
        #[test]
        fn mirror_is_an_involution(a in 0.0..TAU, h in any::<bool>(), v in any::<bool>()) {
            let p = AugmentParams { h_mirror: h, v_mirror: v, ..AugmentParams::identity() };
            let label = Angle::new(a).unwrap();
            let back = p.correct_label(p.correct_label(label));
            prop_assert!(cyclic_distance(back, label) < 1e-12);
        }

        #[test]
        fn rotations_compose(a in 0.0..TAU, t1 in 0.0..TAU, t2 in 0.0..TAU) {
            let r = |t| AugmentParams { theta: t, ..AugmentParams::identity() };
            let label = Angle::new(a).unwrap();
            let two = r(t2).correct_label(r(t1).correct_label(label));
            prop_assert!(cyclic_distance(two, r(t1 + t2).correct_label(label)) < 1e-12);
        }

        #[test]
        fn sampled_params_stay_in_range(seed in any::<u64>()) {
            let p = AugmentParams::sample(&AugmentConfig::default(), &mut ChaCha8Rng::seed_from_u64(seed));
            prop_assert!((0.0..TAU).contains(&p.theta));
            prop_assert!(p.shift.0.abs() <= 0.2 && p.shift.1.abs() <= 0.2);
            prop_assert!((0.9..=1.1).contains(&p.scale));
        }
    }
}
