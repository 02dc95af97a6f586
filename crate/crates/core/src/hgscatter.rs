//! Henyey–Greenstein scattering on the unit sphere of directions.
//!
//! `Lψ(Ω) = (1/4π)∫ p(Ω·Ω′)[ψ(Ω′) − ψ(Ω)] dΩ′` is applied by quadrature in
//! a frame with `Ω` at the pole. For `g = 1 − ε` the forward peak has
//! width `O(ε)`, so the polar rule uses geometrically graded panels
//! starting at that scale.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry3d::rotated_angles;
use crate::spectral::{graded_rule, mapped_rule, SphericalCoeffs};

/// Gauss–Legendre nodes per graded panel.
const PANEL_NODES: usize = 20;
/// Polar nodes for the `L₃/₂` integral, whose integrand is smooth.
const L32_NODES: usize = 64;

/// The anisotropy factor `g`, `|g| < 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HGParams {
    pub g: f64,
}

impl HGParams {
    pub fn new(g: f64) -> Result<Self> {
        if !(g.abs() < 1.0) {
            return Err(Error::InvalidInput(format!("anisotropy factor must satisfy |g| < 1, got {g}")));
        }
        Ok(HGParams { g })
    }

    /// `g = 1 − ε`.
    pub fn forward_peaked(eps: f64) -> Result<Self> {
        Self::new(1.0 - eps)
    }

    pub fn eps(&self) -> f64 {
        1.0 - self.g
    }
}

/// A real band-limited intensity `ψ(Ω) = Re Σ ψ̂_nm Y_nm(Ω)`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityField {
    pub coeffs: SphericalCoeffs,
}

impl IntensityField {
    pub fn new(coeffs: SphericalCoeffs) -> Result<Self> {
        if coeffs.as_slice().iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::InvalidInput("intensity coefficients must be finite".into()));
        }
        Ok(IntensityField { coeffs })
    }

    /// `Re Y_nm`.
    pub fn harmonic(n: usize, m: i64) -> Result<Self> {
        Self::new(SphericalCoeffs::single(n + 1, n, m)?)
    }

    /// From `(n, m, re, im)` entries.
    pub fn from_entries(entries: &[(usize, i64, f64, f64)]) -> Result<Self> {
        let degree = entries.iter().map(|e| e.0 + 1).max().unwrap_or(1);
        let mut coeffs = SphericalCoeffs::zeros(degree);
        for &(n, m, re, im) in entries {
            let old = coeffs.get(n, m);
            coeffs.set(n, m, old + Complex64::new(re, im))?;
        }
        Self::new(coeffs)
    }

    pub fn degree(&self) -> usize {
        self.coeffs.degree()
    }

    pub fn eval(&self, theta: f64, phi: f64) -> f64 {
        self.coeffs.eval_real(theta, phi)
    }

    pub fn laplacian(&self, theta: f64, phi: f64) -> f64 {
        self.coeffs.spherical_laplacian().eval_real(theta, phi)
    }

    /// `ψ̃(s) = (1/2π)∫ [ψ(s, t) − ψ(Ω)] dt` in the frame with `Ω` at the
    /// pole. Exact for the band limit.
    pub fn azimuthal_deviation(&self, s: f64, theta: f64, phi: f64) -> f64 {
        let m = (2 * self.degree()).max(8);
        let center = self.eval(theta, phi);
        let sum: f64 = (0..m)
            .map(|k| {
                let t = -PI + 2.0 * PI * k as f64 / m as f64;
                let (th, ph) = rotated_angles(s, t, theta, phi);
                self.eval(th, ph) - center
            })
            .sum();
        sum / m as f64
    }
}

/// `p(cos θ) = (1 − g²)/(1 + g² − 2g cos θ)^{3/2}`.
#[inline]
pub fn p_hg(cos_theta: f64, g: f64) -> f64 {
    (1.0 - g * g) / (1.0 + g * g - 2.0 * g * cos_theta).powf(1.5)
}

/// Poisson kernel of the unit ball at radius `1 − ε`, written in `ε`.
#[inline]
pub fn poisson_kernel(cos_theta: f64, eps: f64) -> f64 {
    eps * (2.0 - eps) / (eps * eps + 2.0 * (1.0 - eps) * (1.0 - cos_theta)).powf(1.5)
}

fn peak_rule(g: f64) -> (Vec<f64>, Vec<f64>) {
    // Width of the forward peak in θ.
    let width = (1.0 - g.abs()).clamp(1e-8, 0.5);
    graded_rule(0.0, PI, 0.5 * width, PANEL_NODES)
}

/// `Lψ(Ω)` by graded Gauss–Legendre in the polar angle about `Ω` and the
/// trapezoid rule in azimuth.
pub fn apply_l_direct(psi: &IntensityField, theta: f64, phi: f64, g: f64) -> Result<f64> {
    let g = HGParams::new(g)?.g;
    let (nodes, weights) = peak_rule(g);
    let mut sum = 0.0;
    for (&s, &w) in nodes.iter().zip(&weights) {
        sum += w * p_hg(s.cos(), g) * psi.azimuthal_deviation(s, theta, phi) * s.sin();
    }
    Ok(0.5 * sum)
}

/// `L₃/₂ψ(Ω) = (1/2√2)∫₀^π ψ̃(θ) sin θ/(1 − cos θ)^{3/2} dθ`.
pub fn apply_l32(psi: &IntensityField, theta: f64, phi: f64) -> f64 {
    let rule = mapped_rule(L32_NODES);
    let sum: f64 = rule
        .nodes
        .iter()
        .zip(&rule.weights)
        .map(|(&s, &w)| w * psi.azimuthal_deviation(s, theta, phi) * l32_weight(s))
        .sum();
    sum / (2.0 * std::f64::consts::SQRT_2)
}

/// `sin θ/(1 − cos θ)^{3/2}` written without cancellation.
fn l32_weight(s: f64) -> f64 {
    let h = 0.5 * s;
    h.cos() / (std::f64::consts::SQRT_2 * h.sin().powi(2))
}

/// The `L₃/₂` integrand after azimuthal averaging, including the
/// `1/(2√2)` factor. Bounded as `θ → 0`.
pub fn l32_integrand(psi: &IntensityField, s: f64, theta: f64, phi: f64) -> f64 {
    psi.azimuthal_deviation(s, theta, phi) * l32_weight(s) / (2.0 * std::f64::consts::SQRT_2)
}

/// `(ε + ε²)L₃/₂ψ(Ω) − (ε²/2)Δψ(Ω)`.
pub fn apply_l_asymptotic(psi: &IntensityField, theta: f64, phi: f64, eps: f64) -> f64 {
    (eps + eps * eps) * apply_l32(psi, theta, phi) - 0.5 * eps * eps * psi.laplacian(theta, phi)
}

/// Harmonic extension of `f` to `(1 − ε)y*` by quadrature of Poisson's
/// formula, `f(y*) + (Lf)(y*)` with `g = 1 − ε`.
pub fn poisson_close_eval(f: &IntensityField, theta: f64, phi: f64, eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidInput(format!("eps must lie in (0, 1), got {eps}")));
    }
    Ok(f.eval(theta, phi) + apply_l_direct(f, theta, phi, 1.0 - eps)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::gauss_legendre;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};

    const OMEGA: (f64, f64) = (0.9, -0.4);

    fn random_field(degree: usize, seed: u64) -> IntensityField {
        let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
        let mut c = SphericalCoeffs::zeros(degree);
        for n in 0..degree {
            for m in 0..=n {
                let im = if m == 0 { 0.0 } else { rng.gen_range(-1.0..1.0) };
                c.set_real_mode(n, m, Complex64::new(rng.gen_range(-1.0..1.0), im))
                    .unwrap();
            }
        }
        IntensityField::new(c).unwrap()
    }

    #[test]
    fn phase_function_values() {
        for x in [-1.0, 0.0, 0.4, 1.0] {
            assert_eq!(p_hg(x, 0.0), 1.0);
        }
        assert_abs_diff_eq!(p_hg(1.0, 0.9), 190.0, epsilon = 1e-10);
        let rule = gauss_legendre(64);
        let norm = 0.5 * rule.integrate(|x| p_hg(x, 0.5));
        assert_abs_diff_eq!(norm, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn params_validation() {
        assert!(HGParams::new(1.0).is_err());
        assert!(HGParams::new(-1.2).is_err());
        assert_abs_diff_eq!(HGParams::forward_peaked(0.1).unwrap().g, 0.9);
    }

    #[test]
    fn constants_are_annihilated() {
        let c = IntensityField::harmonic(0, 0).unwrap();
        assert_abs_diff_eq!(apply_l_direct(&c, OMEGA.0, OMEGA.1, 0.7).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(apply_l32(&c, OMEGA.0, OMEGA.1), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(apply_l_asymptotic(&c, OMEGA.0, OMEGA.1, 0.1), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn direct_eigenvalues() {
        for g in [0.3, 0.5, 0.7, 0.9] {
            for n in 0..=4usize {
                for m in [0, n as i64] {
                    let psi = IntensityField::harmonic(n, m).unwrap();
                    let y = psi.eval(OMEGA.0, OMEGA.1);
                    let l = apply_l_direct(&psi, OMEGA.0, OMEGA.1, g).unwrap();
                    assert_abs_diff_eq!(l, (g.powi(n as i32) - 1.0) * y, epsilon = 1e-8);
                }
            }
        }
    }

    #[test]
    fn isotropic_scattering_is_mean_minus_value() {
        let psi = random_field(4, 7);
        let mean = psi.coeffs.get(0, 0).re / (4.0 * PI).sqrt();
        let l = apply_l_direct(&psi, OMEGA.0, OMEGA.1, 0.0).unwrap();
        assert_abs_diff_eq!(l, mean - psi.eval(OMEGA.0, OMEGA.1), epsilon = 1e-12);
    }

    #[test]
    fn l32_eigenvalues() {
        for n in 0..=4usize {
            for m in [0, 1.min(n as i64), n as i64] {
                let psi = IntensityField::harmonic(n, m).unwrap();
                let y = psi.eval(OMEGA.0, OMEGA.1);
                assert_abs_diff_eq!(apply_l32(&psi, OMEGA.0, OMEGA.1), -(n as f64) * y, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn l32_integrand_is_bounded_near_pole() {
        let psi = random_field(4, 3);
        let quarter_lap = 0.25 * psi.laplacian(OMEGA.0, OMEGA.1).abs();
        for s in [1e-1, 1e-2, 1e-3] {
            let v = l32_integrand(&psi, s, OMEGA.0, OMEGA.1).abs();
            assert!(v <= quarter_lap * (1.0 + s * s) + 1e-6, "s = {s}: {v} vs {quarter_lap}");
        }
    }

    #[test]
    fn asymptotic_cancellation_cases() {
        // (1 − ε)ⁿ − 1 agrees with −nε + C(n,2)ε² exactly for n ≤ 2.
        for (n, m) in [(1usize, 0i64), (2, 0), (2, 1)] {
            let psi = IntensityField::harmonic(n, m).unwrap();
            for eps in [1e-1, 1e-2, 1e-3] {
                let d = apply_l_direct(&psi, OMEGA.0, OMEGA.1, 1.0 - eps).unwrap();
                let a = apply_l_asymptotic(&psi, OMEGA.0, OMEGA.1, eps);
                assert!((d - a).abs() <= 1e-10, "Y_{n}^{m}, eps {eps}: {:e}", (d - a).abs());
            }
        }
    }

    #[test]
    fn asymptotic_third_order() {
        for psi in [IntensityField::harmonic(3, 1).unwrap(), random_field(5, 11)] {
            let res = |eps: f64| {
                let d = apply_l_direct(&psi, OMEGA.0, OMEGA.1, 1.0 - eps).unwrap();
                (d - apply_l_asymptotic(&psi, OMEGA.0, OMEGA.1, eps)).abs()
            };
            let slope = (res(1e-1).log10() - res(1e-3).log10()) / 2.0;
            assert!((slope - 3.0).abs() <= 0.3, "slope {slope}");
        }
    }

    #[test]
    fn rotation_equivariance() {
        // Rotating ψ about the z-axis by α and Ω with it leaves Lψ unchanged.
        let psi = random_field(4, 5);
        let alpha = 0.83;
        let mut rotated = psi.coeffs.clone();
        for (n, m, c) in psi.coeffs.iter() {
            rotated.set(n, m, c * Complex64::from_polar(1.0, -(m as f64) * alpha)).unwrap();
        }
        let rotated = IntensityField::new(rotated).unwrap();
        let a = apply_l_direct(&psi, OMEGA.0, OMEGA.1, 0.8).unwrap();
        let b = apply_l_direct(&rotated, OMEGA.0, OMEGA.1 + alpha, 0.8).unwrap();
        assert_abs_diff_eq!(a, b, epsilon = 1e-9);
    }

    #[test]
    fn poisson_formula() {
        let one = IntensityField::harmonic(0, 0).unwrap();
        let y00 = one.eval(0.0, 0.0);
        for eps in [0.5, 0.1, 0.01] {
            assert_abs_diff_eq!(poisson_close_eval(&one, 1.0, 2.0, eps).unwrap(), y00, epsilon = 1e-14);
        }
        let f = IntensityField::harmonic(3, 1).unwrap();
        let v = poisson_close_eval(&f, OMEGA.0, OMEGA.1, 0.2).unwrap();
        assert_abs_diff_eq!(v, 0.8f64.powi(3) * f.eval(OMEGA.0, OMEGA.1), epsilon = 1e-8);
        assert!(poisson_close_eval(&f, 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn poisson_kernel_is_hg_kernel() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(1);
        for _ in 0..100 {
            let x = rng.gen_range(0.0..PI).cos();
            let eps = rng.gen_range(0.01..0.99);
            let a = poisson_kernel(x, eps);
            let b = p_hg(x, 1.0 - eps);
            assert!((a - b).abs() <= 1e-14 * a.abs().max(1.0), "{a} vs {b}");
        }
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]
            #[test]
            fn harmonics_are_eigenfunctions(
                g in 0.05f64..0.9,
                n in 0usize..5,
                m_frac in 0.0f64..1.0,
                th in 0.1f64..3.0,
                ph in -3.0f64..3.0,
            ) {
                let m = (m_frac * (n as f64 + 1.0)).floor().min(n as f64) as i64;
                let psi = IntensityField::harmonic(n, m).unwrap();
                let direct = apply_l_direct(&psi, th, ph, g).unwrap();
                let expect = (g.powi(n as i32) - 1.0) * psi.eval(th, ph);
                prop_assert!((direct - expect).abs() <= 1e-8);
            }
        }
    }
}
