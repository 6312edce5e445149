//! The von Mises density and its log-likelihood.
//!
//! For a fixed concentration the negative log-likelihood of a set of angles is
//! an affine function of the summed cosine loss, so minimizing the cosine loss
//! is maximum-likelihood estimation of the mean direction.

use std::f64::consts::TAU;

use thiserror::Error;

use crate::angle::Angle;

/// Above this the asymptotic expansion replaces the power series.
pub const SERIES_CROSSOVER: f64 = 15.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VonMisesError {
    #[error("concentration must be finite and positive, got {0}")]
    Kappa(f64),
    #[error("Bessel argument must be finite and non-negative, got {0}")]
    NegativeArgument(f64),
    #[error("likelihood needs at least one sample")]
    NoSamples,
}

/// `e^{-κ} I₀(κ)`, finite for every finite κ ≥ 0.
fn scaled_i0(kappa: f64) -> f64 {
    if kappa <= SERIES_CROSSOVER {
        return series_i0(kappa) * (-kappa).exp();
    }
    // I₀(κ) ~ e^κ / √(2πκ) · Σ c_k / κ^k with c_k = ((2k-1)!!)² / (k! 8^k).
    // The series is asymptotic; stop once the terms stop shrinking.
    let mut term: f64 = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        let odd = (2 * k - 1) as f64;
        let next = term * odd * odd / (8.0 * k as f64 * kappa);
        if next >= term || next < sum * 1e-17 {
            break;
        }
        sum += next;
        term = next;
    }
    sum / (TAU * kappa).sqrt()
}

fn series_i0(kappa: f64) -> f64 {
    let q = 0.25 * kappa * kappa;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut m = 1.0;
    while term > sum * 1e-17 {
        term *= q / (m * m);
        sum += term;
        m += 1.0;
    }
    sum
}

/// Modified Bessel function of the first kind, order zero.
///
/// Power series up to κ = 15, asymptotic expansion beyond; relative error is
/// below 1e-10 on `[0, 100]`.
pub fn bessel_i0(kappa: f64) -> Result<f64, VonMisesError> {
    if !(kappa >= 0.0) || !kappa.is_finite() {
        return Err(VonMisesError::NegativeArgument(kappa));
    }
    Ok(if kappa <= SERIES_CROSSOVER { series_i0(kappa) } else { scaled_i0(kappa) * kappa.exp() })
}

/// `ln I₀(κ)` without overflow for large κ.
pub fn ln_bessel_i0(kappa: f64) -> Result<f64, VonMisesError> {
    bessel_i0(kappa)?;
    Ok(if kappa <= SERIES_CROSSOVER { series_i0(kappa).ln() } else { kappa + scaled_i0(kappa).ln() })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VonMises {
    mu: Angle,
    kappa: f64,
    // ln(2π I₀(κ))
    ln_norm: f64,
}

impl VonMises {
    pub fn new(mu: Angle, kappa: f64) -> Result<Self, VonMisesError> {
        if !(kappa > 0.0) || !kappa.is_finite() {
            return Err(VonMisesError::Kappa(kappa));
        }
        let ln_norm = TAU.ln() + ln_bessel_i0(kappa)?;
        Ok(Self { mu, kappa, ln_norm })
    }

    pub fn mu(&self) -> Angle {
        self.mu
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// `ln(2π I₀(κ))`, the per-sample normalizer.
    pub fn ln_normalizer(&self) -> f64 {
        self.ln_norm
    }

    pub fn pdf(&self, t: Angle) -> f64 {
        let c = (t.radians() - self.mu.radians()).cos();
        // e^{κ(cos - 1)} / (2π e^{-κ} I₀(κ)) keeps both factors in range.
        (self.kappa * (c - 1.0)).exp() / (TAU * scaled_i0(self.kappa))
    }

    /// `-Σ ln p(t_k) = -κ Σ cos(t_k - μ) + N ln(2π I₀(κ))`.
    pub fn neg_log_likelihood(&self, samples: &[Angle]) -> Result<f64, VonMisesError> {
        if samples.is_empty() {
            return Err(VonMisesError::NoSamples);
        }
        let cos_sum: f64 = samples.iter().map(|t| (t.radians() - self.mu.radians()).cos()).sum();
        Ok(-self.kappa * cos_sum + samples.len() as f64 * self.ln_norm)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::angle::{circular_mean_oracle, cyclic_distance, wrap, PredictionSet};
    use crate::loss::{loss, LossKind};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    // I₀ reference values computed at 40 significant digits.
    const I0_TABLE: [(f64, f64); 8] = [
        (0.5, 1.0634833707413235193),
        (1.0, 1.2660658777520083356),
        (5.0, 27.239871823604446895),
        (15.0, 339649.37329791387952),
        (15.0001, 339682.18737903411715),
        (20.0, 43558282.559553533272),
        (50.0, 2.9325537838493363267e+20),
        (100.0, 1.0737517071310738235e+42),
    ];

    #[test]
    fn bessel_examples() {
        assert_eq!(bessel_i0(0.0).unwrap(), 1.0);
        assert!(bessel_i0(-1.0).is_err());
        assert!(bessel_i0(f64::NAN).is_err());
        for (k, want) in I0_TABLE {
            assert_relative_eq!(bessel_i0(k).unwrap(), want, max_relative = 1e-10);
        }
    }

    // Independent oracle: the raw series summed in reverse order, no scaling.
    #[test]
    fn bessel_matches_plain_series_on_grid() {
        for i in 0..=400 {
            let k = i as f64 * 0.25;
            let q = 0.25 * k * k;
            let terms: Vec<f64> = (0..400)
                .scan(1.0, |t, m| {
                    if m > 0 {
                        *t *= q / (m as f64 * m as f64);
                    }
                    Some(*t)
                })
                .collect();
            let oracle: f64 = terms.iter().rev().sum();
            assert_relative_eq!(bessel_i0(k).unwrap(), oracle, max_relative = 1e-10);
            assert_relative_eq!(ln_bessel_i0(k).unwrap(), oracle.ln(), max_relative = 1e-10, epsilon = 1e-14);
        }
    }

    #[test]
    fn pdf_examples() {
        let mu = wrap(1.0).unwrap();
        let tiny = VonMises::new(mu, 1e-12).unwrap();
        for t in [0.0, 2.0, 5.5] {
            assert_relative_eq!(tiny.pdf(wrap(t).unwrap()), 1.0 / TAU, max_relative = 1e-10);
        }
        let d = VonMises::new(mu, 3.0).unwrap();
        assert_relative_eq!(d.pdf(mu), 3f64.exp() / (TAU * bessel_i0(3.0).unwrap()), max_relative = 1e-13);
        let d = VonMises::new(Angle::ZERO, 1.0).unwrap();
        assert_relative_eq!(d.pdf(wrap(PI).unwrap()), 0.046245485762777705692, max_relative = 1e-12);
        assert!(VonMises::new(mu, 0.0).is_err());
        assert!(VonMises::new(mu, -2.0).is_err());
    }

    #[test]
    fn pdf_peaks_at_mean_and_stays_positive() {
        let d = VonMises::new(wrap(2.0).unwrap(), 50.0).unwrap();
        let peak = d.pdf(d.mu());
        for i in 0..1000 {
            let t = wrap(i as f64 * TAU / 1000.0).unwrap();
            let p = d.pdf(t);
            assert!(p > 0.0 && p <= peak);
        }
    }

    #[test]
    fn pdf_integrates_to_one() {
        for kappa in [0.5, 1.0, 5.0, 20.0] {
            let d = VonMises::new(wrap(0.7).unwrap(), kappa).unwrap();
            let n = 10_000;
            let h = TAU / n as f64;
            // Composite trapezoid on a periodic integrand: both end points
            // have the same value, so each node carries weight h.
            let total: f64 = (0..n).map(|i| d.pdf(wrap(i as f64 * h).unwrap())).sum::<f64>() * h;
            assert!((total - 1.0).abs() < 1e-8, "kappa {kappa}: {total}");
        }
    }

    #[test]
    fn likelihood_examples() {
        let d = VonMises::new(Angle::ZERO, 1.0).unwrap();
        assert_relative_eq!(d.neg_log_likelihood(&[Angle::ZERO]).unwrap(), 1.0737914249165241323, max_relative = 1e-13);
        let tiny = VonMises::new(Angle::ZERO, 1e-12).unwrap();
        let samples: Vec<Angle> = (0..7).map(|i| wrap(i as f64).unwrap()).collect();
        assert_relative_eq!(tiny.neg_log_likelihood(&samples).unwrap(), 7.0 * TAU.ln(), max_relative = 1e-10);
        assert_eq!(d.neg_log_likelihood(&[]).unwrap_err(), VonMisesError::NoSamples);
    }

    #[test]
    fn likelihood_is_affine_in_cos_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let d = VonMises::new(wrap(rng.random_range(0.0..TAU)).unwrap(), rng.random_range(0.05..60.0)).unwrap();
            let samples: Vec<Angle> = (0..rng.random_range(1..50)).map(|_| wrap(rng.random_range(0.0..TAU)).unwrap()).collect();
            let cos_total: f64 = samples.iter().map(|t| loss(LossKind::Cos, &[d.mu().radians()], &[t.radians()]).unwrap().value).sum();
            let affine = d.kappa() * cos_total + samples.len() as f64 * d.ln_normalizer();
            assert_relative_eq!(d.neg_log_likelihood(&samples).unwrap(), affine, max_relative = 1e-12);
        }
    }

    #[test]
    fn likelihood_minimized_at_circular_mean() {
        let samples: Vec<Angle> = [5.9, 0.2, 0.5, 6.1, 0.9].iter().map(|&r| wrap(r).unwrap()).collect();
        let grid = 100_000;
        let (best, _) = (0..grid)
            .map(|i| {
                let mu = wrap(i as f64 * TAU / grid as f64).unwrap();
                (mu, VonMises::new(mu, 2.0).unwrap().neg_log_likelihood(&samples).unwrap())
            })
            .fold((Angle::ZERO, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
        let mean = circular_mean_oracle(&PredictionSet::new(samples).unwrap()).unwrap();
        assert!(cyclic_distance(best, mean) <= TAU / grid as f64);
    }
}
