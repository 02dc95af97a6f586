//! Close evaluation of the 3D double-layer potential at
//! `x = y* − εℓν*`, either by the subtracted product rule or by the
//! `O(ε²)` asymptotic approximation `f(y*) + εU₁`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bie3d::{double_layer_kernel_3d, Density3D, RotatedQuadrature};
use crate::error::{Error, Result};
use crate::geometry3d::{dot, norm, rotated_angles, sub, Surface3D, SurfacePoint3D, Vec3};

const COINCIDENT: f64 = 1e-14;

/// A close-evaluation target on a 3D surface.
#[derive(Debug, Clone, Copy)]
pub struct CloseEvalRequest3D<'a> {
    pub density: &'a Density3D,
    pub theta: f64,
    pub phi: f64,
    pub eps: f64,
    pub ell: f64,
    /// Quadrature size: `N` Gauss–Legendre nodes in `s`, `2N` in `t`.
    pub n: usize,
    target: SurfacePoint3D,
    point: Vec3,
}

impl<'a> CloseEvalRequest3D<'a> {
    pub fn new(density: &'a Density3D, theta: f64, phi: f64, eps: f64, ell: f64, n: usize) -> Result<Self> {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::InvalidInput(format!("eps must be positive, got {eps}")));
        }
        if !(ell > 0.0) || !ell.is_finite() {
            return Err(Error::InvalidInput(format!("ell must be positive, got {ell}")));
        }
        let target = density.surface.eval(theta, phi)?;
        let point = closest_offset(&target, eps * ell);
        if !density.surface.contains(point) {
            return Err(Error::PointOutside(point.to_vec()));
        }
        Ok(CloseEvalRequest3D {
            density,
            theta,
            phi,
            eps,
            ell,
            n,
            target,
            point,
        })
    }

    pub fn point(&self) -> Vec3 {
        self.point
    }

    pub fn boundary_point(&self) -> &SurfacePoint3D {
        &self.target
    }
}

fn closest_offset(p: &SurfacePoint3D, d: f64) -> Vec3 {
    [
        p.position[0] - d * p.normal[0],
        p.position[1] - d * p.normal[1],
        p.position[2] - d * p.normal[2],
    ]
}

/// First-order kernel `K₁` of the 3D expansion at `source` for the
/// boundary point `target`.
pub fn kernel_k1_3d(source: &SurfacePoint3D, target: &SurfacePoint3D, ell: f64) -> Result<f64> {
    let yd = sub(target.position, source.position);
    let r = norm(yd);
    if r < COINCIDENT {
        return Err(Error::Coincident { distance: r });
    }
    let nu_yd = dot(source.normal, yd);
    let ns_yd = dot(target.normal, yd);
    let nu_ns = dot(source.normal, target.normal);
    Ok(ell * (3.0 * nu_yd * ns_yd - r * r * nu_ns) / r.powi(5))
}

/// `K₁` at rotated-frame angles `(s, t)` about `(θ*, φ*)`.
pub fn kernel_k1_3d_at(
    surface: &Surface3D,
    s: f64,
    t: f64,
    theta_star: f64,
    phi_star: f64,
    ell: f64,
) -> Result<f64> {
    let (theta, phi) = rotated_angles(s, t, theta_star, phi_star);
    kernel_k1_3d(&surface.eval(theta, phi)?, &surface.eval(theta_star, phi_star)?, ell)
}

/// Everything about one boundary target that does not depend on `ε`:
/// the rotated rule, `μ` at its nodes, `μ(y*)`, `f(y*)` and `U₁ᴺ`.
#[derive(Debug, Clone)]
pub struct PreparedTarget3D {
    pub quadrature: RotatedQuadrature,
    pub mu_nodes: Vec<f64>,
    pub mu_star: f64,
    pub data_star: f64,
    pub u1: f64,
    pub ell: f64,
}

impl PreparedTarget3D {
    pub fn new(density: &Density3D, theta: f64, phi: f64, n: usize, ell: f64) -> Result<Self> {
        let quadrature = RotatedQuadrature::new(&density.surface, theta, phi, n)?;
        let mu_nodes: Vec<f64> = quadrature
            .nodes
            .iter()
            .map(|q| density.mu(q.point.theta, q.point.phi))
            .collect();
        let mu_star = density.mu(theta, phi);
        let mut u1 = 0.0;
        for (q, &mu) in quadrature.nodes.iter().zip(&mu_nodes) {
            u1 += q.weight * kernel_k1_3d(&q.point, &quadrature.target, ell)? * (mu - mu_star);
        }
        Ok(PreparedTarget3D {
            quadrature,
            mu_nodes,
            mu_star,
            data_star: density.data_value(theta, phi),
            u1,
            ell,
        })
    }

    /// `x = y* − εℓν*`.
    pub fn point(&self, eps: f64) -> Vec3 {
        closest_offset(&self.quadrature.target, eps * self.ell)
    }

    /// `−μ(y*) + (1/4π)∬ K(x, y)[μ(y) − μ(y*)] dσ`.
    pub fn numerical(&self, x: Vec3) -> f64 {
        let sum: f64 = self
            .quadrature
            .nodes
            .iter()
            .zip(&self.mu_nodes)
            .map(|(q, &mu)| q.weight * double_layer_kernel_3d(x, &q.point) * (mu - self.mu_star))
            .sum();
        -self.mu_star + sum
    }

    pub fn asymptotic(&self, eps: f64) -> f64 {
        self.data_star + eps * self.u1
    }

    /// `F̄(s_j) = (1/2N)Σ_k K₁·J·sin s_j·[μ − μ(y*)]`, one value per
    /// Gauss–Legendre node.
    pub fn azimuthal_averages(&self) -> Result<Vec<(f64, f64)>> {
        let per_ring = 2 * self.quadrature.n;
        let mut out = Vec::with_capacity(self.quadrature.n);
        for (ring, mus) in self
            .quadrature
            .nodes
            .chunks(per_ring)
            .zip(self.mu_nodes.chunks(per_ring))
        {
            let s = ring[0].s;
            let mut acc = 0.0;
            for (q, &mu) in ring.iter().zip(mus) {
                let k1 = kernel_k1_3d(&q.point, &self.quadrature.target, self.ell)?;
                acc += k1 * q.point.jacobian * s.sin() * (mu - self.mu_star);
            }
            out.push((s, acc / per_ring as f64));
        }
        Ok(out)
    }
}

/// Subtracted product-rule value of the double-layer potential.
pub fn dlp_numerical_3d(req: &CloseEvalRequest3D<'_>) -> Result<f64> {
    let prep = PreparedTarget3D::new(req.density, req.theta, req.phi, req.n, req.ell)?;
    Ok(prep.numerical(req.point))
}

/// `O(ε²)` asymptotic approximation `f(y*) + εU₁ᴺ`.
pub fn asym_eps2_3d(req: &CloseEvalRequest3D<'_>) -> Result<f64> {
    let prep = PreparedTarget3D::new(req.density, req.theta, req.phi, req.n, req.ell)?;
    Ok(prep.asymptotic(req.eps))
}

/// The 3D evaluation methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method3D {
    #[serde(rename = "num")]
    Numerical,
    #[serde(rename = "asym2")]
    AsymEps2,
}

impl Method3D {
    pub const ALL: [Method3D; 2] = [Method3D::Numerical, Method3D::AsymEps2];

    pub fn name(self) -> &'static str {
        match self {
            Method3D::Numerical => "num",
            Method3D::AsymEps2 => "asym2",
        }
    }

    pub fn evaluate_prepared(self, prep: &PreparedTarget3D, eps: f64) -> f64 {
        match self {
            Method3D::Numerical => prep.numerical(prep.point(eps)),
            Method3D::AsymEps2 => prep.asymptotic(eps),
        }
    }
}

impl fmt::Display for Method3D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method3D {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "num" | "numerical" | "sub" => Ok(Method3D::Numerical),
            "asym2" => Ok(Method3D::AsymEps2),
            other => Err(Error::Config(format!("unknown 3D method '{other}'"))),
        }
    }
}
