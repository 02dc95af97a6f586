//! Four ways to evaluate the 2D double-layer potential at
//! `x = y* − εℓν*`: plain PTR, subtraction, and the `O(ε²)` and `O(ε³)`
//! asymptotic approximations.
//!
//! The asymptotic methods compute `f(y*) + εU₁ᴺ (+ ε²[U₂ᴺ + local terms])`.
//! The PTR cell containing `y*` is dropped from the nonlocal sums and
//! replaced by its local expansion with cell width `δ = 2π/N`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bie2d::{double_layer_kernel, DensityGrid2D};
use crate::error::{Error, Result};
use crate::geometry2d::{Curve2D, CurvePoint2D, Vec2};

const COINCIDENT: f64 = 1e-14;

/// A close-evaluation target: grid node `k`, distance parameter `ε` and
/// length scale `ℓ`.
#[derive(Debug, Clone, Copy)]
pub struct CloseEvalRequest2D<'a> {
    pub density: &'a DensityGrid2D,
    pub target: usize,
    pub eps: f64,
    pub ell: f64,
    point: Vec2,
}

impl<'a> CloseEvalRequest2D<'a> {
    pub fn new(density: &'a DensityGrid2D, target: usize, eps: f64, ell: f64) -> Result<Self> {
        if target >= density.len() {
            return Err(Error::InvalidInput(format!(
                "target index {target} out of range for N = {}",
                density.len()
            )));
        }
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::InvalidInput(format!("eps must be positive, got {eps}")));
        }
        if !(ell > 0.0) || !ell.is_finite() {
            return Err(Error::InvalidInput(format!("ell must be positive, got {ell}")));
        }
        let y = &density.nodes[target];
        let point = [
            y.position[0] - eps * ell * y.normal[0],
            y.position[1] - eps * ell * y.normal[1],
        ];
        if !density.curve.contains(point) {
            return Err(Error::PointOutside(point.to_vec()));
        }
        Ok(CloseEvalRequest2D {
            density,
            target,
            eps,
            ell,
            point,
        })
    }

    /// The evaluation point `x = y* − εℓν*`.
    pub fn point(&self) -> Vec2 {
        self.point
    }

    pub fn boundary_point(&self) -> &CurvePoint2D {
        &self.density.nodes[self.target]
    }
}

/// Plain `N`-point PTR quadrature of the double-layer potential.
pub fn dlp_ptr(req: &CloseEvalRequest2D<'_>) -> f64 {
    req.density.dlp_ptr(req.point)
}

/// `−μ(y*) + (1/2π)∫ K(x, y)[μ(y) − μ(y*)] dσ` by PTR.
pub fn dlp_subtraction(req: &CloseEvalRequest2D<'_>) -> f64 {
    let d = req.density;
    let mu_star = d.mu[req.target];
    let sum: f64 = d
        .nodes
        .iter()
        .zip(&d.mu)
        .map(|(p, &mu)| double_layer_kernel(req.point, p) * (mu - mu_star))
        .sum();
    -mu_star + sum / d.len() as f64
}

fn difference(target: &CurvePoint2D, source: &CurvePoint2D) -> Result<(Vec2, f64)> {
    let yd = [
        target.position[0] - source.position[0],
        target.position[1] - source.position[1],
    ];
    let r2 = yd[0] * yd[0] + yd[1] * yd[1];
    if r2.sqrt() < COINCIDENT {
        return Err(Error::Coincident { distance: r2.sqrt() });
    }
    Ok((yd, r2))
}

/// First-order kernel `K₁` at `source` for the boundary point `target`.
pub fn kernel_k1(source: &CurvePoint2D, target: &CurvePoint2D, ell: f64) -> Result<f64> {
    let (yd, r2) = difference(target, source)?;
    let nu_yd = source.normal[0] * yd[0] + source.normal[1] * yd[1];
    let ns_yd = target.normal[0] * yd[0] + target.normal[1] * yd[1];
    let nu_ns = source.normal[0] * target.normal[0] + source.normal[1] * target.normal[1];
    Ok(ell * (2.0 * nu_yd * ns_yd - nu_ns * r2) / (r2 * r2))
}

/// Second-order kernel `K₂` at `source` for the boundary point `target`.
pub fn kernel_k2(source: &CurvePoint2D, target: &CurvePoint2D, ell: f64) -> Result<f64> {
    let (yd, r2) = difference(target, source)?;
    let nu_yd = source.normal[0] * yd[0] + source.normal[1] * yd[1];
    let ns_yd = target.normal[0] * yd[0] + target.normal[1] * yd[1];
    let nu_ns = source.normal[0] * target.normal[0] + source.normal[1] * target.normal[1];
    Ok(ell * ell * (nu_yd * (4.0 * ns_yd * ns_yd - r2) - 2.0 * r2 * nu_ns * ns_yd) / (r2 * r2 * r2))
}

/// `K₁(t)` with `y* = y(t*)`.
pub fn kernel_k1_2d(curve: &Curve2D, t: f64, t_star: f64, ell: f64) -> Result<f64> {
    kernel_k1(&curve.eval(t)?, &curve.eval(t_star)?, ell)
}

/// `K₂(t)` with `y* = y(t*)`.
pub fn kernel_k2_2d(curve: &Curve2D, t: f64, t_star: f64, ell: f64) -> Result<f64> {
    kernel_k2(&curve.eval(t)?, &curve.eval(t_star)?, ell)
}

/// The ε-independent pieces of the asymptotic approximations at one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsymptoticTerms2D {
    /// Dirichlet data `f(y*)`.
    pub data: f64,
    /// `U₁ᴺ`.
    pub first: f64,
    /// `U₂ᴺ − ℓ²(y′·y″)μ̃′/(4J⁴) + ℓ²μ̃″/(4J²)`.
    pub second: f64,
}

impl AsymptoticTerms2D {
    pub fn new(density: &DensityGrid2D, k: usize, ell: f64) -> Result<Self> {
        let n = density.len();
        if k >= n {
            return Err(Error::InvalidInput(format!("target index {k} out of range for N = {n}")));
        }
        let star = &density.nodes[k];
        let mu_star = density.mu[k];
        let (mut s1, mut s2) = (0.0, 0.0);
        for (j, (p, &mu)) in density.nodes.iter().zip(&density.mu).enumerate() {
            if j == k {
                continue;
            }
            let w = p.jacobian * (mu - mu_star);
            s1 += kernel_k1(p, star, ell)? * w;
            s2 += kernel_k2(p, star, ell)? * w;
        }
        let nf = n as f64;
        let j = star.jacobian;
        let d1 = density.mu_d1[k];
        let d2 = density.mu_d2[k];
        let first = s1 / nf - ell * d2 / (2.0 * nf * j);
        let u2 = s2 / nf - ell * ell * star.curvature * d2 / (4.0 * nf * j);
        let tangent_dot = star.d1[0] * star.d2[0] + star.d1[1] * star.d2[1];
        let second = u2 - ell * ell * tangent_dot / (4.0 * j.powi(4)) * d1 + ell * ell / (4.0 * j * j) * d2;
        Ok(AsymptoticTerms2D {
            data: density.data[k],
            first,
            second,
        })
    }

    pub fn eps2(&self, eps: f64) -> f64 {
        self.data + eps * self.first
    }

    pub fn eps3(&self, eps: f64) -> f64 {
        self.data + eps * self.first + eps * eps * self.second
    }
}

/// `O(ε²)` asymptotic approximation `f(y*) + εU₁ᴺ`.
pub fn asym_eps2(req: &CloseEvalRequest2D<'_>) -> Result<f64> {
    Ok(AsymptoticTerms2D::new(req.density, req.target, req.ell)?.eps2(req.eps))
}

/// `O(ε³)` asymptotic approximation.
pub fn asym_eps3(req: &CloseEvalRequest2D<'_>) -> Result<f64> {
    Ok(AsymptoticTerms2D::new(req.density, req.target, req.ell)?.eps3(req.eps))
}

/// The 2D evaluation methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method2D {
    #[serde(rename = "ptr")]
    Ptr,
    #[serde(rename = "sub")]
    Subtraction,
    #[serde(rename = "asym2")]
    AsymEps2,
    #[serde(rename = "asym3")]
    AsymEps3,
}

impl Method2D {
    pub const ALL: [Method2D; 4] = [
        Method2D::Ptr,
        Method2D::Subtraction,
        Method2D::AsymEps2,
        Method2D::AsymEps3,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method2D::Ptr => "ptr",
            Method2D::Subtraction => "sub",
            Method2D::AsymEps2 => "asym2",
            Method2D::AsymEps3 => "asym3",
        }
    }

    pub fn evaluate(self, req: &CloseEvalRequest2D<'_>) -> Result<f64> {
        match self {
            Method2D::Ptr => Ok(dlp_ptr(req)),
            Method2D::Subtraction => Ok(dlp_subtraction(req)),
            Method2D::AsymEps2 => asym_eps2(req),
            Method2D::AsymEps3 => asym_eps3(req),
        }
    }
}

impl fmt::Display for Method2D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method2D {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "ptr" => Ok(Method2D::Ptr),
            "sub" | "subtraction" => Ok(Method2D::Subtraction),
            "asym2" => Ok(Method2D::AsymEps2),
            "asym3" => Ok(Method2D::AsymEps3),
            other => Err(Error::Config(format!("unknown 2D method '{other}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bie2d::{solve_density, solve_log_source, LogSource, DEFAULT_SOURCE};
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    const Y_A: usize = 16;
    const Y_B: usize = 80;

    #[test]
    fn k1_k2_on_unit_circle() {
        let c = Curve2D::unit_circle();
        assert_abs_diff_eq!(kernel_k1_2d(&c, PI, 0.0, 1.0).unwrap(), -0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(kernel_k2_2d(&c, PI, 0.0, 1.0).unwrap(), -0.125, epsilon = 1e-15);
        for t in [0.3, 1.2, 2.5] {
            let a = kernel_k1_2d(&c, t, 0.0, 1.0).unwrap();
            let b = kernel_k1_2d(&c, -t, 0.0, 1.0).unwrap();
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
        // ℓ enters linearly in K₁ and quadratically in K₂.
        assert_abs_diff_eq!(kernel_k1_2d(&c, PI, 0.0, 2.0).unwrap(), -0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(kernel_k2_2d(&c, PI, 0.0, 2.0).unwrap(), -0.5, epsilon = 1e-15);
        assert!(matches!(kernel_k1_2d(&c, 0.4, 0.4, 1.0), Err(Error::Coincident { .. })));
    }

    #[test]
    fn kernels_are_expansion_coefficients() {
        // K(t; ε)/J = εK₁ + ε²K₂ + O(ε³) away from the singular point.
        let kite = Curve2D::Kite;
        let star = kite.eval(-0.75 * PI).unwrap();
        let src = kite.eval(1.0).unwrap();
        let k_eps = |eps: f64| {
            let x = [star.position[0] - eps * star.normal[0], star.position[1] - eps * star.normal[1]];
            double_layer_kernel(x, &src) / src.jacobian - double_layer_kernel(star.position, &src) / src.jacobian
        };
        let k1 = kernel_k1(&src, &star, 1.0).unwrap();
        let k2 = kernel_k2(&src, &star, 1.0).unwrap();
        for eps in [1e-2, 5e-3, 2.5e-3] {
            let rem = (k_eps(eps) - eps * k1 - eps * eps * k2).abs();
            assert!(rem < 10.0 * eps.powi(3), "eps {eps}: remainder {rem:e}");
        }
    }

    #[test]
    fn constant_density_is_exact() {
        let kite = Curve2D::Kite;
        let d = solve_density(&kite, &vec![1.0; 128], 128).unwrap();
        let d = DensityGrid2D::from_samples(&kite, vec![-1.0; 128], d.data).unwrap();
        for eps in [0.5, 1e-3, 1e-6] {
            let r = CloseEvalRequest2D::new(&d, Y_A, eps, 1.0).unwrap();
            assert_eq!(dlp_subtraction(&r), 1.0);
            assert_eq!(asym_eps2(&r).unwrap(), 1.0);
            assert_eq!(asym_eps3(&r).unwrap(), 1.0);
        }
        let r = CloseEvalRequest2D::new(&d, Y_B, 0.5, 1.0).unwrap();
        assert_abs_diff_eq!(dlp_ptr(&r), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn far_field_agreement() {
        let d = solve_log_source(&Curve2D::Kite, DEFAULT_SOURCE, 128).unwrap();
        // Half a unit inward from y_B is still half a unit from the curve.
        let r = CloseEvalRequest2D::new(&d, Y_B, 0.5, 1.0).unwrap();
        let exact = LogSource::new(DEFAULT_SOURCE).value(r.point());
        assert!((dlp_ptr(&r) - exact).abs() <= 1e-10);
        assert!((dlp_subtraction(&r) - exact).abs() <= 1e-10);
    }

    #[test]
    fn ptr_fails_close_subtraction_does_not() {
        let d = solve_log_source(&Curve2D::Kite, DEFAULT_SOURCE, 128).unwrap();
        let exact = LogSource::new(DEFAULT_SOURCE);
        let r = CloseEvalRequest2D::new(&d, Y_A, 1e-6, 1.0).unwrap();
        let e_ptr = (dlp_ptr(&r) - exact.value(r.point())).abs();
        assert!(e_ptr >= 1e-2, "ptr error {e_ptr:e}");
        let r = CloseEvalRequest2D::new(&d, Y_B, 1e-4, 1.0).unwrap();
        let e_ptr = (dlp_ptr(&r) - exact.value(r.point())).abs();
        let e_sub = (dlp_subtraction(&r) - exact.value(r.point())).abs();
        assert!(e_sub * 1e3 <= e_ptr, "ptr {e_ptr:e} sub {e_sub:e}");
    }

    #[test]
    fn asymptotic_errors_shrink_with_eps() {
        let d = solve_log_source(&Curve2D::Kite, DEFAULT_SOURCE, 128).unwrap();
        let exact = LogSource::new(DEFAULT_SOURCE);
        for k in [Y_A, Y_B] {
            let terms = AsymptoticTerms2D::new(&d, k, 1.0).unwrap();
            let mut prev2 = f64::INFINITY;
            let mut prev3 = f64::INFINITY;
            for p in 1..=6 {
                let eps = 10f64.powi(-p);
                let r = CloseEvalRequest2D::new(&d, k, eps, 1.0).unwrap();
                let u = exact.value(r.point());
                let e2 = (terms.eps2(eps) - u).abs();
                let e3 = (terms.eps3(eps) - u).abs();
                assert!(e2 <= prev2.max(1e-13), "asym2 k={k} eps={eps}: {e2:e} > {prev2:e}");
                assert!(e3 <= prev3.max(1e-13), "asym3 k={k} eps={eps}: {e3:e} > {prev3:e}");
                prev2 = e2;
                prev3 = e3;
            }
        }
    }

    #[test]
    fn request_validation() {
        let d = solve_log_source(&Curve2D::Kite, DEFAULT_SOURCE, 64).unwrap();
        assert!(CloseEvalRequest2D::new(&d, 64, 1e-3, 1.0).is_err());
        assert!(CloseEvalRequest2D::new(&d, 0, 0.0, 1.0).is_err());
        assert!(CloseEvalRequest2D::new(&d, 0, 1e-3, -1.0).is_err());
        // Pushing 5 units inward from the kite leaves the domain.
        assert!(matches!(
            CloseEvalRequest2D::new(&d, 32, 5.0, 1.0),
            Err(Error::PointOutside(_))
        ));
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method2D::ALL {
            assert_eq!(m.name().parse::<Method2D>().unwrap(), m);
        }
        assert!("foo".parse::<Method2D>().is_err());
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            #[test]
            fn constant_density_exact_everywhere(
                c in -5.0f64..5.0,
                k in 0usize..64,
                log_eps in -7.0f64..-1.0,
                star in any::<bool>(),
            ) {
                let curve = if star { Curve2D::star() } else { Curve2D::Kite };
                let d = DensityGrid2D::from_samples(&curve, vec![c; 64], vec![-c; 64]).unwrap();
                let Ok(req) = CloseEvalRequest2D::new(&d, k, 10f64.powf(log_eps), 1.0) else {
                    return Ok(());
                };
                for m in [Method2D::Subtraction, Method2D::AsymEps2, Method2D::AsymEps3] {
                    prop_assert!((m.evaluate(&req).unwrap() + c).abs() <= 1e-13 * (1.0 + c.abs()));
                }
            }
        }
    }
}
