//! Closed-form kernel-intensity math on decoded parameters.
//!
//! The model's space-time intensity is a mixture over anchor points (the
//! history events followed by the representative points):
//!
//! ```text
//! λ*(s, t) = Σᵢ wᵢ · k_s(s, sᵢ; γᵢ) · k_t(t, tᵢ; βᵢ)
//! ```
//!
//! with the normalized spatial RBF kernel and the exponential temporal
//! kernel. Because `k_s` integrates to one over the plane, the temporal
//! marginal drops the spatial factor, and the compensator
//! `∫ λ*(τ) dτ` is a sum of elementary exponential integrals.

use crate::events::SpatialRegion;
use crate::kernels::{exp_temporal, rbf_spatial};
use crate::parametric::TemporalHazard;
use crate::rng::SplitRng;

/// One anchor: a location and a time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchor {
    pub s: [f64; 2],
    pub t: f64,
}

/// Per-anchor kernel parameters decoded from the latent state.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelParams {
    pub anchors: Vec<Anchor>,
    /// Intensity magnitudes, non-negative.
    pub weight: Vec<f64>,
    /// Spatial bandwidths, ≥ 1e-6.
    pub bandwidth: Vec<f64>,
    /// Temporal decay rates, any real.
    pub decay: Vec<f64>,
}

impl KernelParams {
    pub fn new(
        anchors: Vec<Anchor>,
        weight: Vec<f64>,
        bandwidth: Vec<f64>,
        decay: Vec<f64>,
    ) -> Self {
        assert_eq!(anchors.len(), weight.len());
        assert_eq!(anchors.len(), bandwidth.len());
        assert_eq!(anchors.len(), decay.len());
        debug_assert!(weight.iter().all(|w| *w >= 0.0));
        debug_assert!(bandwidth.iter().all(|g| *g > 0.0));
        Self {
            anchors,
            weight,
            bandwidth,
            decay,
        }
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    /// Space-time intensity `λ*(s, t)`.
    pub fn intensity(&self, s: [f64; 2], t: f64) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.len() {
            acc += self.weight[i]
                * rbf_spatial(s, self.anchors[i].s, self.bandwidth[i])
                * exp_temporal(t, self.anchors[i].t, self.decay[i]);
        }
        acc
    }

    /// Temporal marginal `λ*(t) = Σ wᵢ k_t(t, tᵢ)` — spatial kernels
    /// integrate out.
    pub fn temporal_intensity(&self, t: f64) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.len() {
            acc += self.weight[i] * exp_temporal(t, self.anchors[i].t, self.decay[i]);
        }
        acc
    }

    /// `∫_{t_n}^{t} λ*(τ) dτ = Σᵢ (wᵢ/βᵢ)(k_t(t_n, tᵢ) - k_t(t, tᵢ))`,
    /// with the series limit where `βᵢ` is near zero. Requires all anchor
    /// times ≤ `t_n` ≤ `t`.
    pub fn temporal_compensator(&self, t_n: f64, t: f64) -> f64 {
        debug_assert!(t >= t_n);
        let mut acc = 0.0;
        for i in 0..self.len() {
            let a = t_n - self.anchors[i].t;
            let b = t - self.anchors[i].t;
            acc += self.weight[i] * decay_integral_with_derivative(self.decay[i], a, b).0;
        }
        acc
    }

    /// Conditional density `f*(s, t) = λ*(s, t)·exp(-∫_{t_n}^t λ*)`.
    pub fn conditional_pdf(&self, t_n: f64, s: [f64; 2], t: f64) -> f64 {
        self.intensity(s, t) * (-self.temporal_compensator(t_n, t)).exp()
    }

    /// Kernel-weighted anchor mean — the model's closed-form location
    /// prediction at a fixed time. `None` when all temporal weights vanish.
    pub fn location_mean(&self, t: f64) -> Option<[f64; 2]> {
        let mut norm = 0.0;
        let mut mean = [0.0, 0.0];
        for i in 0..self.len() {
            let w = self.weight[i] * exp_temporal(t, self.anchors[i].t, self.decay[i]);
            norm += w;
            mean[0] += w * self.anchors[i].s[0];
            mean[1] += w * self.anchors[i].s[1];
        }
        if norm <= 0.0 {
            return None;
        }
        Some([mean[0] / norm, mean[1] / norm])
    }
}

/// Temporal hazard view of decoded kernel parameters after `t_n`.
#[derive(Debug, Clone, Copy)]
pub struct KernelHazard<'a> {
    pub params: &'a KernelParams,
    pub t_n: f64,
}

impl TemporalHazard for KernelHazard<'_> {
    fn t_n(&self) -> f64 {
        self.t_n
    }

    fn rate(&self, t: f64) -> f64 {
        self.params.temporal_intensity(t)
    }

    fn cumulative(&self, t: f64) -> f64 {
        self.params.temporal_compensator(self.t_n, t)
    }
}

/// `g(β) = ∫_a^b e^{-βu} du = (e^{-βa} - e^{-βb})/β` and `dg/dβ`, switching
/// to the power series where `|β|·max(|a|,|b|)` is small enough that the
/// closed form would cancel catastrophically (this covers the `|β| < 1e-8`
/// analytic limit).
pub fn decay_integral_with_derivative(beta: f64, a: f64, b: f64) -> (f64, f64) {
    let scale = beta.abs() * a.abs().max(b.abs());
    if scale < 1e-4 {
        let (a2, b2) = (a * a, b * b);
        let (a3, b3) = (a2 * a, b2 * b);
        let (a4, b4) = (a3 * a, b3 * b);
        let value = (b - a) - beta * (b2 - a2) / 2.0 + beta * beta * (b3 - a3) / 6.0
            - beta * beta * beta * (b4 - a4) / 24.0;
        let deriv = -(b2 - a2) / 2.0 + beta * (b3 - a3) / 3.0 - beta * beta * (b4 - a4) / 8.0;
        (value, deriv)
    } else {
        let ea = (-beta * a).exp();
        let eb = (-beta * b).exp();
        let value = (ea - eb) / beta;
        let deriv = ((-a * ea + b * eb) * beta - (ea - eb)) / (beta * beta);
        (value, deriv)
    }
}

/// Auxiliary background anchors: `J` locations uniform over the sampling
/// region, all carrying the window's boundary time `t_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct RepresentativePoints {
    pub locations: Vec<[f64; 2]>,
    pub time: f64,
}

impl RepresentativePoints {
    pub fn sample(count: usize, region: &SpatialRegion, t_n: f64, rng: &mut SplitRng) -> Self {
        let SpatialRegion::Rectangle { lo, hi } = region else {
            panic!("representative points need a bounded sampling region");
        };
        let locations = (0..count)
            .map(|_| [rng.uniform_in(lo[0], hi[0]), rng.uniform_in(lo[1], hi[1])])
            .collect();
        Self {
            locations,
            time: t_n,
        }
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::TWO_PI;
    use crate::quad;

    fn random_params(rng: &mut SplitRng, n: usize, t_n: f64) -> KernelParams {
        let anchors = (0..n)
            .map(|_| Anchor {
                s: [rng.uniform_in(-1.0, 1.0), rng.uniform_in(-1.0, 1.0)],
                t: rng.uniform_in(t_n - 3.0, t_n),
            })
            .collect();
        let weight = (0..n).map(|_| rng.uniform_in(0.0, 1.5)).collect();
        let bandwidth = (0..n).map(|_| rng.uniform_in(0.2, 5.0)).collect();
        let decay = (0..n).map(|_| rng.uniform_in(-2.0, 3.0)).collect();
        KernelParams::new(anchors, weight, bandwidth, decay)
    }

    #[test]
    fn zero_weights_give_zero_intensity() {
        let kp = KernelParams::new(
            vec![Anchor {
                s: [0.0, 0.0],
                t: 0.0,
            }],
            vec![0.0],
            vec![1.0],
            vec![1.0],
        );
        assert_eq!(kp.intensity([0.3, 0.3], 1.0), 0.0);
        assert_eq!(kp.temporal_compensator(0.0, 5.0), 0.0);
    }

    #[test]
    fn single_unit_anchor_peak_value() {
        let kp = KernelParams::new(
            vec![Anchor {
                s: [0.0, 0.0],
                t: 2.0,
            }],
            vec![1.0],
            vec![1.0],
            vec![1.0],
        );
        let got = kp.intensity([0.0, 0.0], 2.0);
        assert!((got - 1.0 / TWO_PI).abs() < 1e-14, "got {got}");
    }

    #[test]
    fn compensator_is_zero_at_window_edge_and_analytic_for_unit_case() {
        let kp = KernelParams::new(
            vec![Anchor {
                s: [0.0, 0.0],
                t: 1.0,
            }],
            vec![1.0],
            vec![1.0],
            vec![1.0],
        );
        assert_eq!(kp.temporal_compensator(1.0, 1.0), 0.0);
        // Single anchor with t_i = t_n: ∫ = 1 - e^{-(t - t_n)}.
        let got = kp.temporal_compensator(1.0, 3.5);
        let want = 1.0 - (-2.5f64).exp();
        assert!((got - want).abs() < 1e-14, "got {got} want {want}");
    }

    #[test]
    fn compensator_matches_quadrature_including_negative_and_tiny_decay() {
        let mut rng = SplitRng::new(40);
        for trial in 0..60 {
            let t_n = rng.uniform_in(0.0, 4.0);
            let mut kp = random_params(&mut rng, 1 + trial % 12, t_n);
            if trial % 3 == 0 {
                // Force the series branch.
                kp.decay[0] = rng.uniform_in(-1e-8, 1e-8);
            }
            let t = t_n + rng.uniform_in(0.0, 2.0);
            let closed = kp.temporal_compensator(t_n, t);
            let numeric =
                quad::integrate_1d(&mut |tau| kp.temporal_intensity(tau), t_n, t, 1e-10).unwrap();
            assert!(
                (closed - numeric).abs() < 1e-8,
                "trial {trial}: closed {closed} vs quadrature {numeric}"
            );
        }
    }

    #[test]
    fn decay_integral_derivative_matches_finite_differences() {
        let mut rng = SplitRng::new(41);
        for _ in 0..200 {
            let a = rng.uniform_in(0.0, 3.0);
            let b = a + rng.uniform_in(0.0, 2.0);
            let beta = if rng.uniform() < 0.3 {
                rng.uniform_in(-2e-4, 2e-4)
            } else {
                rng.uniform_in(-2.0, 3.0)
            };
            let (_, deriv) = decay_integral_with_derivative(beta, a, b);
            let h = 1e-6 * beta.abs().max(1.0);
            let fp = decay_integral_with_derivative(beta + h, a, b).0;
            let fm = decay_integral_with_derivative(beta - h, a, b).0;
            let fd = (fp - fm) / (2.0 * h);
            assert!(
                (deriv - fd).abs() / deriv.abs().max(1.0) < 1e-6,
                "beta {beta} a {a} b {b}: {deriv} vs {fd}"
            );
        }
    }

    #[test]
    fn pdf_equals_intensity_at_window_edge_and_stays_nonnegative() {
        let mut rng = SplitRng::new(42);
        let kp = random_params(&mut rng, 7, 2.0);
        let s = [0.1, -0.3];
        assert_eq!(kp.conditional_pdf(2.0, s, 2.0), kp.intensity(s, 2.0));
        for _ in 0..50 {
            let t = rng.uniform_in(2.0, 6.0);
            let s = [rng.uniform_in(-2.0, 2.0), rng.uniform_in(-2.0, 2.0)];
            assert!(kp.conditional_pdf(2.0, s, t) >= 0.0);
        }
    }

    #[test]
    fn pdf_mass_identity_for_positive_decay() {
        // Total mass over space and (t_n, ∞) equals
        // 1 - exp(-Σ wᵢ k_t(t_n, tᵢ)/βᵢ) when every β is positive.
        let mut rng = SplitRng::new(43);
        for trial in 0..5 {
            let t_n = 1.0;
            let mut kp = random_params(&mut rng, 3 + trial, t_n);
            for d in kp.decay.iter_mut() {
                *d = rng.uniform_in(0.3, 2.0);
            }
            let total_hazard: f64 = (0..kp.len())
                .map(|i| {
                    kp.weight[i] * exp_temporal(t_n, kp.anchors[i].t, kp.decay[i]) / kp.decay[i]
                })
                .sum();
            let want = 1.0 - (-total_hazard).exp();
            // Spatial integral is analytic (kernels normalized), so the mass
            // reduces to the 1D integral of f*(t).
            let t_max = t_n + 60.0 / kp.decay.iter().cloned().fold(f64::INFINITY, f64::min);
            let got = quad::integrate_1d(
                &mut |t| kp.temporal_intensity(t) * (-kp.temporal_compensator(t_n, t)).exp(),
                t_n,
                t_max,
                1e-10,
            )
            .unwrap();
            assert!(
                (got - want).abs() < 1e-5,
                "trial {trial}: got {got} want {want}"
            );
        }
    }

    #[test]
    fn intensity_is_invariant_under_anchor_permutation() {
        let mut rng = SplitRng::new(44);
        let kp = random_params(&mut rng, 9, 3.0);
        let mut order: Vec<usize> = (0..9).collect();
        rng.shuffle(&mut order);
        let permuted = KernelParams::new(
            order.iter().map(|&i| kp.anchors[i]).collect(),
            order.iter().map(|&i| kp.weight[i]).collect(),
            order.iter().map(|&i| kp.bandwidth[i]).collect(),
            order.iter().map(|&i| kp.decay[i]).collect(),
        );
        let s = [0.4, 0.2];
        for t in [3.0, 3.7, 5.0] {
            assert!((kp.intensity(s, t) - permuted.intensity(s, t)).abs() < 1e-12);
            assert!(
                (kp.temporal_compensator(3.0, t) - permuted.temporal_compensator(3.0, t)).abs()
                    < 1e-12
            );
            assert!(
                (kp.conditional_pdf(3.0, s, t) - permuted.conditional_pdf(3.0, s, t)).abs() < 1e-12
            );
        }
    }

    #[test]
    fn spatial_marginal_matches_temporal_intensity() {
        // ∫_{R²} λ*(s, t) ds = λ*(t) by the kernel normalization.
        let mut rng = SplitRng::new(45);
        let kp = random_params(&mut rng, 4, 2.0);
        let t = 2.8;
        let min_gamma = kp.bandwidth.iter().cloned().fold(f64::INFINITY, f64::min);
        let extent = 30.0 / min_gamma + 2.0;
        let got = quad::integrate_2d(
            &mut |x, y| kp.intensity([x, y], t),
            [-extent, -extent],
            [extent, extent],
            1e-7,
        )
        .unwrap();
        let want = kp.temporal_intensity(t);
        assert!((got - want).abs() < 1e-5, "got {got} want {want}");
    }

    #[test]
    fn location_mean_of_single_anchor_is_that_anchor() {
        let kp = KernelParams::new(
            vec![Anchor {
                s: [0.7, -0.2],
                t: 1.0,
            }],
            vec![0.8],
            vec![2.0],
            vec![0.5],
        );
        let m = kp.location_mean(2.0).unwrap();
        assert_eq!(m, [0.7, -0.2]);
    }

    #[test]
    fn representative_points_stay_in_region() {
        let region = SpatialRegion::rectangle([-1.0, 2.0], [3.0, 4.0]).unwrap();
        let mut rng = SplitRng::new(46);
        let rep = RepresentativePoints::sample(50, &region, 7.0, &mut rng);
        assert_eq!(rep.len(), 50);
        assert_eq!(rep.time, 7.0);
        for s in &rep.locations {
            assert!(region.contains(*s));
        }
    }
}
