//! Nyström solution of the 2D double-layer boundary integral equation
//! `(K − ½I)μ = f` with the `N`-point periodic trapezoid rule.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry2d::{Curve2D, CurvePoint2D, Vec2};
use crate::spectral::periodic_derivative;

/// Default Nyström resolution.
pub const DEFAULT_N: usize = 128;

/// Exterior source used by the 2D experiments.
pub const DEFAULT_SOURCE: Vec2 = [1.85, 1.65];

/// The harmonic function `u(x) = −(1/2π) log|x − x₀|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogSource {
    pub x0: Vec2,
}

impl LogSource {
    pub fn new(x0: Vec2) -> Self {
        LogSource { x0 }
    }

    pub fn value(&self, x: Vec2) -> f64 {
        -(x[0] - self.x0[0]).hypot(x[1] - self.x0[1]).ln() / (2.0 * PI)
    }
}

/// Samples of `−(1/2π) log|y − x₀|` at the `N` boundary nodes.
pub fn dirichlet_data(curve: &Curve2D, x0: Vec2, n: usize) -> Result<Vec<f64>> {
    if curve.signed_distance(x0) <= 1e-12 {
        return Err(Error::SourceNotExterior(x0.to_vec()));
    }
    let source = LogSource::new(x0);
    Ok(curve
        .sample(n)?
        .iter()
        .map(|p| source.value(p.position))
        .collect())
}

/// `ν(τ)·(y(t) − y(τ))/|y(t) − y(τ)|² · J(τ)` for distinct nodes.
#[inline]
pub fn double_layer_kernel(target: Vec2, source: &CurvePoint2D) -> f64 {
    let d = [target[0] - source.position[0], target[1] - source.position[1]];
    (source.normal[0] * d[0] + source.normal[1] * d[1]) / (d[0] * d[0] + d[1] * d[1]) * source.jacobian
}

/// Limit of [`double_layer_kernel`] as the source approaches the target
/// along the curve.
#[inline]
pub fn double_layer_diagonal(point: &CurvePoint2D) -> f64 {
    -0.5 * point.curvature * point.jacobian
}

/// Quadrature matrix of the double-layer operator `K` alone.
pub fn assemble_double_layer(curve: &Curve2D, n: usize) -> Result<DMatrix<f64>> {
    if n < 16 || n % 2 != 0 {
        return Err(Error::InvalidInput(format!("Nyström size must be even and >= 16, got {n}")));
    }
    let nodes = curve.sample(n)?;
    let h = 1.0 / n as f64;
    let rows: Vec<Vec<f64>> = nodes
        .par_iter()
        .enumerate()
        .map(|(i, target)| {
            nodes
                .iter()
                .enumerate()
                .map(|(j, source)| {
                    if i == j {
                        h * double_layer_diagonal(source)
                    } else {
                        h * double_layer_kernel(target.position, source)
                    }
                })
                .collect()
        })
        .collect();
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

/// System matrix of `(K − ½I)μ = f`.
pub fn assemble_nystrom(curve: &Curve2D, n: usize) -> Result<DMatrix<f64>> {
    let mut a = assemble_double_layer(curve, n)?;
    for i in 0..n {
        a[(i, i)] -= 0.5;
    }
    Ok(a)
}

/// Density samples on the periodic grid, with the data that produced them.
#[derive(Debug, Clone)]
pub struct DensityGrid2D {
    pub curve: Curve2D,
    pub nodes: Vec<CurvePoint2D>,
    pub mu: Vec<f64>,
    pub data: Vec<f64>,
    /// Spectral `μ̃′` at the nodes.
    pub mu_d1: Vec<f64>,
    /// Spectral `μ̃″` at the nodes.
    pub mu_d2: Vec<f64>,
    /// `‖Aμ − f‖_∞` of the solve.
    pub residual: f64,
}

impl DensityGrid2D {
    /// Wraps known density samples (no solve performed).
    pub fn from_samples(curve: &Curve2D, mu: Vec<f64>, data: Vec<f64>) -> Result<Self> {
        let n = mu.len();
        if data.len() != n {
            return Err(Error::InvalidInput("density and data lengths differ".into()));
        }
        if mu.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("density samples must be finite".into()));
        }
        let nodes = curve.sample(n)?;
        Ok(DensityGrid2D {
            curve: curve.clone(),
            nodes,
            mu_d1: periodic_derivative(&mu, 1),
            mu_d2: periodic_derivative(&mu, 2),
            mu,
            data,
            residual: 0.0,
        })
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    /// Plain PTR quadrature of the double-layer potential at `x`.
    pub fn dlp_ptr(&self, x: Vec2) -> f64 {
        let n = self.len() as f64;
        self.nodes
            .iter()
            .zip(&self.mu)
            .map(|(p, &mu)| double_layer_kernel(x, p) * mu)
            .sum::<f64>()
            / n
    }
}

/// Solves `(K − ½I)μ = f` by dense LU.
pub fn solve_density(curve: &Curve2D, data: &[f64], n: usize) -> Result<DensityGrid2D> {
    if data.len() != n {
        return Err(Error::InvalidInput(format!(
            "expected {n} data samples, got {}",
            data.len()
        )));
    }
    let a = assemble_nystrom(curve, n)?;
    let f = DVector::from_column_slice(data);
    let mu = a.clone().lu().solve(&f).ok_or(Error::SingularMatrix)?;
    if mu.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularMatrix);
    }
    let residual = (&a * &mu - &f).amax();
    let mut grid = DensityGrid2D::from_samples(curve, mu.as_slice().to_vec(), data.to_vec())?;
    grid.residual = residual;
    Ok(grid)
}

/// Dirichlet data from a log source followed by the density solve.
pub fn solve_log_source(curve: &Curve2D, x0: Vec2, n: usize) -> Result<DensityGrid2D> {
    let data = dirichlet_data(curve, x0, n)?;
    solve_density(curve, &data, n)
}
