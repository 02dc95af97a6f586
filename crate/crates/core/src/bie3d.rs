//! Galerkin solution of the 3D double-layer boundary integral equation in
//! spherical-harmonic coefficient space.
//!
//! The on-boundary operator is applied in subtracted form,
//! `(K g)(y₀) = −½g(y₀) + (1/4π)∬ K(y₀, y)[g(y) − g(y₀)] dσ`, with a
//! product quadrature in a frame where `y₀` sits at the north pole.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry3d::{
    direction_angles, dot, norm, sub, Surface3D, SurfaceKind, SurfacePoint3D, SurfaceSpec, Vec3,
};
use crate::spectral::{mapped_rule, sph_harm_table, SphereGrid, SphericalCoeffs};

/// Desk-scale default resolution.
pub const DEFAULT_N: usize = 16;

/// Source point of the default 3D harmonic data.
pub const DEFAULT_SOURCE: Vec3 = [5.0, 4.0, 3.0];

/// One node of a rotated product rule, with its weight already including
/// the area element and the `1/4π` normalization.
#[derive(Debug, Clone, Copy)]
pub struct QuadratureNode3D {
    pub s: f64,
    pub t: f64,
    pub point: SurfacePoint3D,
    pub weight: f64,
}

/// Product rule for `(1/4π)∬ F dσ` about a target `(θ₀, φ₀)`:
/// `2N` trapezoid nodes `t_k = −π + πk/N` and `N` Gauss–Legendre nodes in
/// `s ∈ [0, π]`.
#[derive(Debug, Clone)]
pub struct RotatedQuadrature {
    pub target: SurfacePoint3D,
    pub n: usize,
    pub nodes: Vec<QuadratureNode3D>,
}

impl RotatedQuadrature {
    pub fn new(surface: &Surface3D, theta0: f64, phi0: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidInput(format!("quadrature size must be >= 2, got {n}")));
        }
        let target = surface.eval(theta0, phi0)?;
        let rule = mapped_rule(n);
        let dt = PI / n as f64;
        let mut nodes = Vec::with_capacity(2 * n * n);
        for (&s, &ws) in rule.nodes.iter().zip(&rule.weights) {
            let sin_s = s.sin();
            for k in 0..2 * n {
                let t = -PI + dt * k as f64;
                let (theta, phi) = crate::geometry3d::rotated_angles(s, t, theta0, phi0);
                let point = surface.eval(theta, phi)?;
                nodes.push(QuadratureNode3D {
                    s,
                    t,
                    point,
                    weight: ws * dt * point.jacobian * sin_s / (4.0 * PI),
                });
            }
        }
        Ok(RotatedQuadrature { target, n, nodes })
    }

    /// `Σ weight · F(node)`.
    pub fn integrate(&self, mut f: impl FnMut(&QuadratureNode3D) -> f64) -> f64 {
        self.nodes.iter().map(|q| q.weight * f(q)).sum()
    }
}

/// `ν(y)·(x − y)/|x − y|³`.
#[inline]
pub fn double_layer_kernel_3d(x: Vec3, source: &SurfacePoint3D) -> f64 {
    let d = sub(x, source.position);
    let r = norm(d);
    dot(source.normal, d) / (r * r * r)
}

/// `(1/4π)∬ K(y₀, y)[g(y) − g(y₀)] dσ` at `y₀ = y(θ₀, φ₀)`. The full
/// on-boundary operator value is this minus `½g(y₀)`.
pub fn apply_k_subtracted(
    surface: &Surface3D,
    g: impl Fn(f64, f64) -> f64,
    theta0: f64,
    phi0: f64,
    n: usize,
) -> Result<f64> {
    let quad = RotatedQuadrature::new(surface, theta0, phi0, n)?;
    let g0 = g(theta0, phi0);
    let y0 = quad.target.position;
    Ok(quad.integrate(|q| double_layer_kernel_3d(y0, &q.point) * (g(q.point.theta, q.point.phi) - g0)))
}

/// Matrix of `K − ½I` on `{Y_nm : n < N}`, indexed by
/// [`sph_index`](crate::spectral::sph_index), with quadrature size `N`.
pub fn assemble_galerkin(surface: &Surface3D, n: usize) -> Result<DMatrix<Complex64>> {
    assemble_galerkin_with(surface, n, n)
}

/// [`assemble_galerkin`] with an independent quadrature size.
///
/// Each column is the spherical analysis of `g ↦ (K − ½I)g` for one basis
/// function, sampled on the `N × 2N` projection grid.
pub fn assemble_galerkin_with(surface: &Surface3D, n: usize, quad_n: usize) -> Result<DMatrix<Complex64>> {
    if n == 0 {
        return Err(Error::InvalidInput("Galerkin degree must be positive".into()));
    }
    let grid = SphereGrid::standard(n);
    let points = grid.points();
    let dim = n * n;
    // Row p of `values` holds (K − ½I)Y_b at grid point p for every b.
    let values: Vec<Vec<Complex64>> = points
        .par_iter()
        .map(|&(theta, phi)| -> Result<Vec<Complex64>> {
            let quad = RotatedQuadrature::new(surface, theta, phi, quad_n)?;
            let y0 = quad.target.position;
            let at_target = sph_harm_table(n, theta, phi);
            let mut acc = vec![Complex64::new(0.0, 0.0); dim];
            for q in &quad.nodes {
                let w = q.weight * double_layer_kernel_3d(y0, &q.point);
                let ys = sph_harm_table(n, q.point.theta, q.point.phi);
                for ((a, y), y_0) in acc.iter_mut().zip(&ys).zip(&at_target) {
                    *a += (y - y_0) * w;
                }
            }
            // −½Y from the operator plus −½Y from the identity term.
            for (a, y_0) in acc.iter_mut().zip(&at_target) {
                *a -= y_0;
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;

    let columns: Vec<SphericalCoeffs> = (0..dim)
        .into_par_iter()
        .map(|b| {
            let samples: Vec<Complex64> = values.iter().map(|row| row[b]).collect();
            grid.analysis(&samples)
        })
        .collect::<Result<_>>()?;
    Ok(DMatrix::from_fn(dim, dim, |i, j| columns[j].as_slice()[i]))
}

/// Dirichlet data for the 3D problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BoundaryData3D {
    /// Samples of `1/|y − x₀|` for an exterior `x₀`.
    InverseDistance { source: Vec3 },
    /// A band-limited field `g(θ, φ)` on the parameter sphere.
    Harmonics { coefficients: Vec<(usize, i64, f64, f64)> },
}

impl BoundaryData3D {
    pub fn inverse_distance(source: Vec3) -> Self {
        BoundaryData3D::InverseDistance { source }
    }

    /// Real field `Σ c·Y_nm` from `(n, m, re, im)` entries.
    pub fn harmonic(n: usize, m: i64) -> Self {
        BoundaryData3D::Harmonics {
            coefficients: vec![(n, m, 1.0, 0.0)],
        }
    }

    pub fn validate(&self, surface: &Surface3D) -> Result<()> {
        match self {
            BoundaryData3D::InverseDistance { source } => {
                if surface.contains(*source) {
                    return Err(Error::SourceNotExterior(source.to_vec()));
                }
                Ok(())
            }
            BoundaryData3D::Harmonics { coefficients } => {
                for &(n, m, re, im) in coefficients {
                    if m.unsigned_abs() as usize > n {
                        return Err(Error::InvalidHarmonic { n, m });
                    }
                    if !re.is_finite() || !im.is_finite() {
                        return Err(Error::InvalidInput("non-finite harmonic coefficient".into()));
                    }
                }
                Ok(())
            }
        }
    }

    /// The harmonic function with this trace, where it is known in closed
    /// form: always for point sources, and on the unit sphere for harmonics
    /// (`rⁿY_nm`).
    pub fn exact_interior(&self, surface: &Surface3D, x: Vec3) -> Option<f64> {
        match self {
            BoundaryData3D::InverseDistance { source } => Some(1.0 / norm(sub(x, *source))),
            BoundaryData3D::Harmonics { coefficients } => {
                if !matches!(surface.kind(), SurfaceKind::UnitSphere) {
                    return None;
                }
                let r = norm(x);
                let (theta, phi) = direction_angles(x);
                Some(
                    coefficients
                        .iter()
                        .map(|&(n, m, re, im)| {
                            let y = crate::spectral::sph_harm_eval(n, m, theta, phi)
                                .unwrap_or_else(|_| Complex64::new(0.0, 0.0));
                            r.powi(n as i32) * (Complex64::new(re, im) * y).re
                        })
                        .sum(),
                )
            }
        }
    }

    /// Data value at parameters `(θ, φ)`.
    pub fn value(&self, surface: &Surface3D, theta: f64, phi: f64) -> f64 {
        match self {
            BoundaryData3D::InverseDistance { source } => {
                1.0 / norm(sub(surface.position(theta, phi), *source))
            }
            BoundaryData3D::Harmonics { coefficients } => coefficients
                .iter()
                .map(|&(n, m, re, im)| {
                    let y = crate::spectral::sph_harm_eval(n, m, theta, phi)
                        .unwrap_or_else(|_| Complex64::new(0.0, 0.0));
                    (Complex64::new(re, im) * y).re
                })
                .sum(),
        }
    }
}

/// Solved density `μ = Σ μ̂_nm Y_nm` on a surface.
#[derive(Debug, Clone)]
pub struct Density3D {
    pub surface: Surface3D,
    pub coeffs: SphericalCoeffs,
    pub data: BoundaryData3D,
    /// `‖Aμ̂ − f̂‖_∞` of the solve (zero when loaded from a file).
    pub residual: f64,
}

impl Density3D {
    pub fn degree(&self) -> usize {
        self.coeffs.degree()
    }

    pub fn mu(&self, theta: f64, phi: f64) -> f64 {
        self.coeffs.eval_real(theta, phi)
    }

    pub fn data_value(&self, theta: f64, phi: f64) -> f64 {
        self.data.value(&self.surface, theta, phi)
    }

    pub fn to_file(&self) -> DensityFile {
        DensityFile {
            n: self.degree(),
            coefficients: self.coeffs.iter().map(|(n, m, c)| (n, m, c.re, c.im)).collect(),
            data: Some(self.data.clone()),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(&self.to_file())?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn from_file(surface: &Surface3D, file: &DensityFile, data: BoundaryData3D) -> Result<Self> {
        let mut coeffs = SphericalCoeffs::zeros(file.n);
        for &(n, m, re, im) in &file.coefficients {
            if n >= file.n {
                return Err(Error::InvalidInput(format!("coefficient degree {n} exceeds N = {}", file.n)));
            }
            if !re.is_finite() || !im.is_finite() {
                return Err(Error::InvalidInput("non-finite density coefficient".into()));
            }
            coeffs.set(n, m, Complex64::new(re, im))?;
        }
        Ok(Density3D {
            surface: surface.clone(),
            coeffs,
            data,
            residual: 0.0,
        })
    }

    pub fn load(surface: &Surface3D, path: &Path, data: BoundaryData3D) -> Result<Self> {
        let file: DensityFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if let Some(stored) = &file.data {
            if *stored != data {
                return Err(Error::Config(format!(
                    "cached density at {} was computed for different data",
                    path.display()
                )));
            }
        }
        Self::from_file(surface, &file, data)
    }
}

/// On-disk form of a [`Density3D`]: `{ "N": …, "coefficients": [[n, m, re, im], …] }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityFile {
    #[serde(rename = "N")]
    pub n: usize,
    pub coefficients: Vec<(usize, i64, f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<BoundaryData3D>,
}

/// Cache file name for a density keyed by surface, `N` and data.
pub fn cache_key(surface: &SurfaceSpec, n: usize, data: &BoundaryData3D) -> String {
    let surface = match surface {
        SurfaceSpec::Mushroom => "mushroom".to_string(),
        SurfaceSpec::UnitSphere => "sphere".to_string(),
        SurfaceSpec::CustomRadial { cosine, scale } => {
            format!("radial-{:016x}", fingerprint(&format!("{cosine:?}{scale:?}")))
        }
    };
    let data = serde_json::to_string(data).unwrap_or_default();
    format!("density-{surface}-N{n}-{:016x}.json", fingerprint(&data))
}

// FNV-1a, stable across runs and platforms.
fn fingerprint(text: &str) -> u64 {
    text.bytes().fold(0xcbf29ce484222325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x100000001b3)
    })
}

/// Solves `(K − ½I)μ = f` for given coefficients `f̂`.
pub fn solve_coefficients(
    matrix: &DMatrix<Complex64>,
    rhs: &SphericalCoeffs,
) -> Result<(SphericalCoeffs, f64)> {
    let f = DVector::from_column_slice(rhs.as_slice());
    let mu = matrix.clone().lu().solve(&f).ok_or(Error::SingularMatrix)?;
    if mu.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(Error::SingularMatrix);
    }
    let residual = (matrix * &mu - &f).iter().map(|c| c.norm()).fold(0.0, f64::max);
    Ok((SphericalCoeffs::from_vec(rhs.degree(), mu.as_slice().to_vec())?, residual))
}

/// Assembles, analyzes the data and solves, with quadrature size `N`.
pub fn solve_density3d(surface: &Surface3D, data: &BoundaryData3D, n: usize) -> Result<Density3D> {
    solve_density3d_with(surface, data, n, n)
}

/// [`solve_density3d`] with an independent quadrature size.
pub fn solve_density3d_with(
    surface: &Surface3D,
    data: &BoundaryData3D,
    n: usize,
    quad_n: usize,
) -> Result<Density3D> {
    data.validate(surface)?;
    let matrix = assemble_galerkin_with(surface, n, quad_n)?;
    let rhs = SphereGrid::standard(n).analyze_fn(|th, ph| data.value(surface, th, ph));
    let (coeffs, residual) = solve_coefficients(&matrix, &rhs)?;
    let scale = rhs.max_abs().max(1.0);
    if residual > 1e-10 * scale {
        return Err(Error::SingularMatrix);
    }
    Ok(Density3D {
        surface: surface.clone(),
        coeffs,
        data: data.clone(),
        residual,
    })
}
