//! Kernel and density primitives.
//!
//! Shared by the parametric models and the kernel-intensity model:
//! bivariate Gaussian densities (optionally truncated to a rectangle), the
//! exponential triggering kernel `α·exp(-β·Δt)`, the normalized spatial RBF
//! kernel, and the symmetric exponential temporal kernel.

use crate::events::SpatialRegion;
use crate::quad;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub(crate) const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("covariance not symmetric: |m01 - m10| = {0:e}")]
    Asymmetric(f64),
    #[error("covariance not positive definite (det = {0:e})")]
    NotPositiveDefinite(f64),
    #[error("non-finite kernel parameter")]
    NonFinite,
    #[error("{name} must be positive, got {value}")]
    NotPositive { name: &'static str, value: f64 },
    #[error("truncation mass failed: {0}")]
    Mass(#[from] quad::QuadError),
}

/// 2×2 symmetric matrix stored row-major as `[m00, m01, m10, m11]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Mat2(pub [f64; 4]);

impl Mat2 {
    pub fn diagonal(a: f64, b: f64) -> Self {
        Mat2([a, 0.0, 0.0, b])
    }

    pub fn identity() -> Self {
        Self::diagonal(1.0, 1.0)
    }

    pub fn det(&self) -> f64 {
        self.0[0] * self.0[3] - self.0[1] * self.0[2]
    }

    pub fn inverse(&self) -> Mat2 {
        let d = self.det();
        Mat2([self.0[3] / d, -self.0[1] / d, -self.0[2] / d, self.0[0] / d])
    }

    /// Lower Cholesky factor; requires positive definiteness.
    pub fn cholesky(&self) -> [f64; 3] {
        let l00 = self.0[0].sqrt();
        let l10 = self.0[2] / l00;
        let l11 = (self.0[3] - l10 * l10).sqrt();
        [l00, l10, l11]
    }

    pub fn is_diagonal(&self) -> bool {
        self.0[1].abs() < 1e-14 && self.0[2].abs() < 1e-14
    }
}

/// Bivariate Gaussian density with full covariance.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Gauss2 {
    pub mean: [f64; 2],
    pub cov: Mat2,
}

impl Gauss2 {
    /// Validates symmetry (within 1e-12) and positive definiteness.
    pub fn new(mean: [f64; 2], cov: Mat2) -> Result<Self, KernelError> {
        if !mean.iter().all(|v| v.is_finite()) || !cov.0.iter().all(|v| v.is_finite()) {
            return Err(KernelError::NonFinite);
        }
        let skew = (cov.0[1] - cov.0[2]).abs();
        if skew > 1e-12 {
            return Err(KernelError::Asymmetric(skew));
        }
        let det = cov.det();
        if det <= 0.0 || cov.0[0] <= 0.0 {
            return Err(KernelError::NotPositiveDefinite(det));
        }
        Ok(Self { mean, cov })
    }

    pub fn standard() -> Self {
        Self {
            mean: [0.0, 0.0],
            cov: Mat2::identity(),
        }
    }

    /// Density at `s`: `(2π)⁻¹ |Σ|^(-1/2) exp(-½ (s-m) Σ⁻¹ (s-m)ᵀ)`.
    pub fn pdf(&self, s: [f64; 2]) -> f64 {
        let det = self.cov.det();
        let inv = self.cov.inverse();
        let dx = s[0] - self.mean[0];
        let dy = s[1] - self.mean[1];
        let q = dx * (inv.0[0] * dx + inv.0[1] * dy) + dy * (inv.0[2] * dx + inv.0[3] * dy);
        (-0.5 * q).exp() / (TWO_PI * det.sqrt())
    }

    /// Probability mass over a rectangle.
    ///
    /// Diagonal covariances use the product of 1D normal CDF differences;
    /// full covariances fall back to 2D quadrature at tolerance 1e-8.
    pub fn mass_on(&self, region: &SpatialRegion) -> Result<f64, KernelError> {
        match region {
            SpatialRegion::UnboundedPlane => Ok(1.0),
            SpatialRegion::Rectangle { lo, hi } => {
                if self.cov.is_diagonal() {
                    let mut mass = 1.0;
                    for d in 0..2 {
                        let sd = self.cov.0[3 * d].sqrt();
                        mass *= normal_cdf((hi[d] - self.mean[d]) / sd)
                            - normal_cdf((lo[d] - self.mean[d]) / sd);
                    }
                    Ok(mass)
                } else {
                    Ok(quad::integrate_2d(
                        &mut |x, y| self.pdf([x, y]),
                        *lo,
                        *hi,
                        1e-8,
                    )?)
                }
            }
        }
    }

    /// Density renormalized to the region; zero outside it.
    pub fn truncated_pdf(&self, s: [f64; 2], region: &SpatialRegion) -> Result<f64, KernelError> {
        if !region.contains(s) {
            return Ok(0.0);
        }
        Ok(self.pdf(s) / self.mass_on(region)?)
    }

    /// Draw a sample: `mean + L·z` with `L` the Cholesky factor.
    pub fn sample(&self, rng: &mut crate::rng::SplitRng) -> [f64; 2] {
        let [l00, l10, l11] = self.cov.cholesky();
        let z0 = rng.normal();
        let z1 = rng.normal();
        [self.mean[0] + l00 * z0, self.mean[1] + l10 * z0 + l11 * z1]
    }
}

/// Standard normal CDF via erf.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

/// Exponential decay triggering kernel `g₁(Δt) = α·exp(-β·Δt)`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ExpDecay {
    pub alpha: f64,
    pub beta: f64,
}

impl ExpDecay {
    pub fn new(alpha: f64, beta: f64) -> Result<Self, KernelError> {
        if !(alpha > 0.0) {
            return Err(KernelError::NotPositive {
                name: "alpha",
                value: alpha,
            });
        }
        if !(beta > 0.0) {
            return Err(KernelError::NotPositive {
                name: "beta",
                value: beta,
            });
        }
        Ok(Self { alpha, beta })
    }

    pub fn eval(&self, dt: f64) -> f64 {
        self.alpha * (-self.beta * dt).exp()
    }

    /// `∫_0^dt g₁(u) du = (α/β)(1 - exp(-β·dt))`.
    pub fn integral(&self, dt: f64) -> f64 {
        self.alpha / self.beta * (1.0 - (-self.beta * dt).exp())
    }
}

/// Normalized spatial RBF kernel on the plane:
/// `k_s(s, sᵢ; γ) = (γ²/2π)·exp(-γ‖s - sᵢ‖)`.
///
/// The normalizer is the closed form of `∫_{R²} exp(-γ‖s‖) ds = 2π/γ²`, so
/// the kernel integrates to one for every bandwidth; `γ` is per event.
pub fn rbf_spatial(s: [f64; 2], s_i: [f64; 2], gamma: f64) -> f64 {
    debug_assert!(gamma > 0.0);
    let dx = s[0] - s_i[0];
    let dy = s[1] - s_i[1];
    let r = (dx * dx + dy * dy).sqrt();
    gamma * gamma / TWO_PI * (-gamma * r).exp()
}

/// Exponential temporal kernel `k_t(t, tᵢ; β) = exp(-β|t - tᵢ|)`.
///
/// `β` may be any real; negative values model growing influence.
pub fn exp_temporal(t: f64, t_i: f64, beta: f64) -> f64 {
    (-beta * (t - t_i).abs()).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::{integrate_1d, integrate_2d};

    #[test]
    fn gauss2_peak_of_standard_normal() {
        let g = Gauss2::standard();
        let got = g.pdf([0.0, 0.0]);
        assert!((got - 1.0 / TWO_PI).abs() < 1e-12, "got {got}");
        let off = g.pdf([1.0, 0.0]);
        assert!((off - (-0.5f64).exp() / TWO_PI).abs() < 1e-12);
    }

    #[test]
    fn gauss2_peak_with_scaled_covariance() {
        // diag(0.2, 0.2) peak value 1/(2π·0.2)
        let g = Gauss2::new([0.0, 0.0], Mat2::diagonal(0.2, 0.2)).unwrap();
        let got = g.pdf([0.0, 0.0]);
        assert!((got - 1.0 / (TWO_PI * 0.2)).abs() < 1e-10, "got {got}");
    }

    #[test]
    fn gauss2_rejects_bad_covariance() {
        assert!(Gauss2::new([0.0, 0.0], Mat2([1.0, 0.5, 0.4, 1.0])).is_err());
        assert!(Gauss2::new([0.0, 0.0], Mat2([1.0, 2.0, 2.0, 1.0])).is_err());
    }

    #[test]
    fn gauss2_integrates_to_one() {
        let g = Gauss2::new([0.3, -0.2], Mat2([0.5, 0.1, 0.1, 0.8])).unwrap();
        let mass = integrate_2d(
            &mut |x, y| g.pdf([x, y]),
            [-12.0, -12.0],
            [12.0, 12.0],
            1e-8,
        )
        .unwrap();
        assert!((mass - 1.0).abs() < 1e-6, "mass {mass}");
    }

    #[test]
    fn truncated_pdf_matches_cdf_product_oracle() {
        let g = Gauss2::new([0.5, 0.5], Mat2::diagonal(0.25, 0.25)).unwrap();
        let region = SpatialRegion::unit_square();
        // 1D CDF product oracle: each axis is N(0.5, 0.5²) on [0,1] → Φ(1)-Φ(-1).
        let axis = normal_cdf(1.0) - normal_cdf(-1.0);
        let mass = axis * axis;
        let got = g.truncated_pdf([0.5, 0.5], &region).unwrap();
        let want = g.pdf([0.5, 0.5]) / mass;
        assert!((got - want).abs() < 1e-10, "got {got} want {want}");

        // The quadrature route must agree with the CDF product.
        let quad_mass =
            integrate_2d(&mut |x, y| g.pdf([x, y]), [0.0, 0.0], [1.0, 1.0], 1e-10).unwrap();
        assert!((quad_mass - mass).abs() < 1e-8);
    }

    #[test]
    fn truncated_pdf_outside_region_is_zero() {
        let g = Gauss2::standard();
        let region = SpatialRegion::unit_square();
        assert_eq!(g.truncated_pdf([1.5, 0.5], &region).unwrap(), 0.0);
    }

    #[test]
    fn truncation_to_huge_box_is_identity() {
        let g = Gauss2::standard();
        let region = SpatialRegion::rectangle([-50.0, -50.0], [50.0, 50.0]).unwrap();
        let got = g.truncated_pdf([0.3, 0.7], &region).unwrap();
        let want = g.pdf([0.3, 0.7]);
        assert!(((got - want) / want).abs() < 1e-6);
    }

    #[test]
    fn truncated_pdf_integrates_to_one_on_region() {
        let g = Gauss2::new([0.2, 0.8], Mat2::diagonal(0.3, 0.6)).unwrap();
        let region = SpatialRegion::unit_square();
        let mass = integrate_2d(
            &mut |x, y| g.truncated_pdf([x, y], &region).unwrap(),
            [0.0, 0.0],
            [1.0, 1.0],
            1e-8,
        )
        .unwrap();
        assert!((mass - 1.0).abs() < 1e-6, "mass {mass}");
    }

    #[test]
    fn rbf_normalizer_matches_polar_quadrature() {
        // α(γ) = ∫ exp(-γ‖s‖) ds = 2π ∫_0^∞ r·exp(-γr) dr, computed by
        // quadrature before freezing the closed form 2π/γ².
        for gamma in [0.5, 1.0, 2.0, 7.0] {
            let radial = integrate_1d(
                &mut |r: f64| r * (-gamma * r).exp(),
                0.0,
                60.0 / gamma,
                1e-12,
            )
            .unwrap();
            let alpha = TWO_PI * radial;
            assert!(
                (alpha - TWO_PI / (gamma * gamma)).abs() < 1e-9,
                "gamma {gamma}: quadrature {alpha}"
            );
        }
    }

    #[test]
    fn rbf_peak_values() {
        let got = rbf_spatial([0.0, 0.0], [0.0, 0.0], 1.0);
        assert!((got - 1.0 / TWO_PI).abs() < 1e-12);
        // γ = 2 at distance 1: (4/2π)·e⁻²
        let got = rbf_spatial([1.0, 0.0], [0.0, 0.0], 2.0);
        let want = 4.0 / TWO_PI * (-2.0f64).exp();
        assert!((got - want).abs() < 1e-12, "got {got} want {want}");
    }

    #[test]
    fn rbf_integrates_to_one_for_random_bandwidths() {
        let mut rng = crate::rng::SplitRng::new(42);
        for _ in 0..6 {
            let gamma = rng.uniform_in(0.1, 10.0);
            let extent = 40.0 / gamma;
            let mass = integrate_2d(
                &mut |x, y| rbf_spatial([x, y], [0.0, 0.0], gamma),
                [-extent, -extent],
                [extent, extent],
                1e-9,
            )
            .unwrap();
            assert!((mass - 1.0).abs() < 1e-6, "gamma {gamma}: mass {mass}");
        }
    }

    #[test]
    fn exp_temporal_symmetry_and_values() {
        assert_eq!(exp_temporal(3.0, 3.0, 5.0), 1.0);
        assert!((exp_temporal(1.0, 0.0, 1.0) - (-1.0f64).exp()).abs() < 1e-15);
        // negative decay grows
        assert!((exp_temporal(2.0, 0.0, -0.5) - 1.0f64.exp()).abs() < 1e-12);
        assert_eq!(exp_temporal(1.0, 4.0, 0.7), exp_temporal(7.0, 4.0, 0.7));
    }
}
