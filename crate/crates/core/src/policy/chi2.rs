//! Noncentral chi-squared CDF with three degrees of freedom.
//!
//! For `X ~ N(x, sigma^2 I_3)` the probability `P(|X| < c)` is the CDF of a
//! noncentral chi-squared variable with noncentrality `lambda = |x|^2 / sigma^2`
//! evaluated at `c^2 / sigma^2`. With `a = sqrt(lambda)` and `b = c / sigma`
//! the upper tail is the Marcum function
//!
//! ```text
//! Q_{3/2}(a, b) = Q(b - a) + Q(b + a)
//!               + (exp(-(b - a)^2 / 2) - exp(-(b + a)^2 / 2)) / (a sqrt(2 pi))
//! ```
//!
//! where `Q` is the Gaussian tail. The last term is replaced by its series in
//! `a b` when `a b` is small, where the difference cancels.

use nalgebra::Vector3;
use statrs::function::erf::erfc;

use crate::error::{domain, Result};

const SQRT_2: f64 = std::f64::consts::SQRT_2;
/// `sqrt(2 / pi)`.
const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;

/// Gaussian upper tail `P(N(0,1) > x)`.
pub fn gaussian_q(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

/// Upper tail `Q_{3/2}(a, b)` of the 3-dof noncentral chi distribution.
pub fn marcum_q32(a: f64, b: f64) -> f64 {
    let ab = a * b;
    let tails = gaussian_q(b - a) + gaussian_q(b + a);
    let bump = if ab < 1e-4 {
        // sinh(ab) / a = b (1 + (ab)^2 / 6 + ...)
        SQRT_2_OVER_PI * (-(a * a + b * b) / 2.0).exp() * b * (1.0 + ab * ab / 6.0)
    } else {
        SQRT_2_OVER_PI * ((-(b - a).powi(2) / 2.0).exp() - (-(b + a).powi(2) / 2.0).exp()) / (2.0 * a)
    };
    tails + bump
}

/// `P(|X| < c)` for `X ~ N(x, sigma^2 I_3)`.
pub fn chi2_noncentral_cdf(c: f64, x: &Vector3<f64>, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(domain(format!("sigma must be positive, got {sigma}")));
    }
    if !(c >= 0.0) {
        return Err(domain(format!("threshold must be non-negative, got {c}")));
    }
    if c == 0.0 {
        return Ok(0.0);
    }
    if c.is_infinite() {
        return Ok(1.0);
    }
    let a = x.norm() / sigma;
    let b = c / sigma;
    Ok((1.0 - marcum_q32(a, b)).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    #[test]
    fn limits() {
        let x = Vector3::new(3.0, -1.0, 2.0);
        assert_eq!(chi2_noncentral_cdf(0.0, &x, 1.0).unwrap(), 0.0);
        assert!(chi2_noncentral_cdf(1e6, &x, 1.0).unwrap() > 1.0 - 1e-12);
        assert_eq!(chi2_noncentral_cdf(f64::INFINITY, &x, 1.0).unwrap(), 1.0);
        assert!(chi2_noncentral_cdf(1.0, &x, 0.0).is_err());
        assert!(chi2_noncentral_cdf(-1.0, &x, 1.0).is_err());
    }

    #[test]
    fn central_case_matches_chi_squared() {
        let dist = ChiSquared::new(3.0).unwrap();
        for c in [0.1, 0.5, 1.0, 2.0, 3.5, 7.0] {
            for sigma in [0.5, 1.0, 4.0] {
                let got = chi2_noncentral_cdf(c, &Vector3::zeros(), sigma).unwrap();
                let want = dist.cdf((c / sigma).powi(2));
                assert!((got - want).abs() < 1e-9, "c={c} sigma={sigma}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn series_and_closed_form_agree_near_switch() {
        for b in [0.5, 1.0, 3.0] {
            let a = 1e-4 / b;
            let lo = marcum_q32(a * 0.999, b);
            let hi = marcum_q32(a * 1.001, b);
            assert!((lo - hi).abs() < 1e-9);
        }
    }

    #[test]
    fn monte_carlo_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let n = 200_000;
        for (c, d, sigma) in [(2.0, 1.0, 1.0), (20.0, 15.0, 4.0), (35.0, 40.0, 6.0), (1.0, 3.0, 0.7)] {
            let x = Vector3::new(d, 0.0, 0.0);
            let hits = (0..n)
                .filter(|_| {
                    let e = Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
                    (x + e * sigma).norm() < c
                })
                .count();
            let p = chi2_noncentral_cdf(c, &x, sigma).unwrap();
            let se = (p * (1.0 - p) / n as f64).sqrt().max(1.0 / n as f64);
            assert!(
                (hits as f64 / n as f64 - p).abs() < 3.0 * se,
                "c={c} d={d} sigma={sigma}"
            );
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn monotone_in_threshold_and_offset(c in 0.0..60.0f64, dc in 0.0..10.0f64, d in 0.0..60.0f64, dd in 0.0..10.0f64, sigma in 0.05..20.0f64) {
                let x = Vector3::new(d, 0.0, 0.0);
                let p = chi2_noncentral_cdf(c, &x, sigma).unwrap();
                prop_assert!((0.0..=1.0).contains(&p));
                prop_assert!(chi2_noncentral_cdf(c + dc, &x, sigma).unwrap() >= p - 1e-12);
                prop_assert!(chi2_noncentral_cdf(c, &Vector3::new(d + dd, 0.0, 0.0), sigma).unwrap() <= p + 1e-12);
            }

            #[test]
            fn depends_only_on_offset_norm(x in -20.0..20.0f64, y in -20.0..20.0f64, z in -20.0..20.0f64, c in 0.1..40.0f64) {
                let v = Vector3::new(x, y, z);
                let p = chi2_noncentral_cdf(c, &v, 3.0).unwrap();
                let q = chi2_noncentral_cdf(c, &Vector3::new(v.norm(), 0.0, 0.0), 3.0).unwrap();
                prop_assert!((p - q).abs() < 1e-12);
            }
        }
    }
}
