//! Spectral toolbox: periodic Fourier differentiation, Gauss–Legendre rules,
//! orthonormal spherical harmonics and the pole form of the spherical
//! Laplacian.
//!
//! Spherical harmonics are the orthonormal complex `Y_nm` with the
//! Condon–Shortley phase, so `Y_{n,−m} = (−1)^m conj(Y_nm)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry3d::rotated_angles;

/// Samples of a periodic function at `φ_j = −π + 2πj/N`.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicGrid {
    pub values: Vec<f64>,
}

impl PeriodicGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 4 || values.len() % 2 != 0 {
            return Err(Error::InvalidInput(format!(
                "periodic grid needs an even count >= 4, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("periodic grid values must be finite".into()));
        }
        Ok(PeriodicGrid { values })
    }

    pub fn from_fn(n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(
            crate::geometry2d::periodic_nodes(n)
                .into_iter()
                .map(f)
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Spectral derivative of the trigonometric interpolant.
    pub fn derivative(&self, order: u32) -> PeriodicGrid {
        PeriodicGrid {
            values: periodic_derivative(&self.values, order),
        }
    }
}

/// Spectral derivative of order 1 or 2 of equispaced periodic samples.
///
/// For order 1 the Nyquist coefficient is dropped; for order 2 it is kept,
/// multiplied by `−(N/2)²`.
pub fn periodic_derivative(values: &[f64], order: u32) -> Vec<f64> {
    let n = values.len();
    if n == 0 || order == 0 {
        return values.to_vec();
    }
    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(n);
    let inverse = planner.plan_fft_inverse(n);
    let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    forward.process(&mut buf);
    for (j, c) in buf.iter_mut().enumerate() {
        let k = if j <= n / 2 { j as f64 } else { j as f64 - n as f64 };
        let nyquist = n % 2 == 0 && j == n / 2;
        if nyquist && order % 2 == 1 {
            *c = Complex64::new(0.0, 0.0);
            continue;
        }
        let k = if nyquist { n as f64 / 2.0 } else { k };
        *c *= Complex64::new(0.0, k).powu(order);
    }
    inverse.process(&mut buf);
    buf.iter().map(|c| c.re / n as f64).collect()
}

/// Domain of a one-dimensional quadrature rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QuadratureDomain {
    MinusOneToOne,
    ZeroToPi,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule1D {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub domain: QuadratureDomain,
}

impl QuadratureRule1D {
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// `P_n(x)` and `P_n′(x)` by the three-term recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Legendre polynomial `P_n(x)`.
pub fn legendre(n: usize, x: f64) -> f64 {
    legendre_with_derivative(n, x).0
}

/// `N`-point Gauss–Legendre rule on `[−1, 1]`, nodes ascending.
pub fn gauss_legendre(n: usize) -> QuadratureRule1D {
    assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d.is_finite() {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    QuadratureRule1D {
        nodes,
        weights,
        domain: QuadratureDomain::MinusOneToOne,
    }
}

/// Gauss–Legendre rule mapped to `[0, π]` with `s_j = π(z_j + 1)/2`.
pub fn mapped_rule(n: usize) -> QuadratureRule1D {
    let base = gauss_legendre(n);
    QuadratureRule1D {
        nodes: base.nodes.iter().map(|z| PI * (z + 1.0) / 2.0).collect(),
        weights: base.weights.iter().map(|w| w * PI / 2.0).collect(),
        domain: QuadratureDomain::ZeroToPi,
    }
}

/// Gauss–Legendre rule on `[a, b]` split into geometrically graded panels
/// `[a, a+h], [a+h, a+2h], [a+2h, a+4h], …`, each with `per_panel` nodes.
pub fn graded_rule(a: f64, b: f64, first: f64, per_panel: usize) -> (Vec<f64>, Vec<f64>) {
    let base = gauss_legendre(per_panel);
    let mut edges = vec![a];
    let mut width = first.min(b - a);
    let mut x = a;
    while x + width < b - 1e-14 * (b - a) {
        x += width;
        edges.push(x);
        if edges.len() > 2 {
            width *= 2.0;
        }
    }
    edges.push(b);
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for pair in edges.windows(2) {
        let (lo, hi) = (pair[0], pair[1]);
        let half = 0.5 * (hi - lo);
        for (&z, &w) in base.nodes.iter().zip(&base.weights) {
            nodes.push(lo + half * (z + 1.0));
            weights.push(w * half);
        }
    }
    (nodes, weights)
}

#[inline]
pub fn sph_index(n: usize, m: i64) -> usize {
    ((n * n + n) as i64 + m) as usize
}

/// Fully normalized associated Legendre values `P̄_n^m(cos θ)` for
/// `0 ≤ m ≤ n < degree`, Condon–Shortley phase included, stored at
/// `n(n+1)/2 + m`. `Y_nm = P̄_n^m(cos θ)·e^{imφ}` is orthonormal on the sphere.
pub fn normalized_legendre_table(degree: usize, theta: f64) -> Vec<f64> {
    let mut table = vec![0.0; degree * (degree + 1) / 2];
    if degree == 0 {
        return table;
    }
    let (st, ct) = theta.sin_cos();
    let at = |n: usize, m: usize| n * (n + 1) / 2 + m;
    let mut pmm = 1.0 / (4.0 * PI).sqrt();
    for m in 0..degree {
        if m > 0 {
            pmm *= -((2 * m + 1) as f64 / (2 * m) as f64).sqrt() * st;
        }
        table[at(m, m)] = pmm;
        if m + 1 < degree {
            table[at(m + 1, m)] = ((2 * m + 3) as f64).sqrt() * ct * pmm;
        }
        for n in m + 2..degree {
            let nf = n as f64;
            let mf = m as f64;
            let a = ((4.0 * nf * nf - 1.0) / (nf * nf - mf * mf)).sqrt();
            let b = (((nf - 1.0) * (nf - 1.0) - mf * mf) / (4.0 * (nf - 1.0) * (nf - 1.0) - 1.0)).sqrt();
            table[at(n, m)] = a * (ct * table[at(n - 1, m)] - b * table[at(n - 2, m)]);
        }
    }
    table
}

/// All `Y_nm(θ, φ)` with `n < degree`, indexed by [`sph_index`].
pub fn sph_harm_table(degree: usize, theta: f64, phi: f64) -> Vec<Complex64> {
    let legendre = normalized_legendre_table(degree, theta);
    let mut out = vec![Complex64::new(0.0, 0.0); degree * degree];
    let phases: Vec<Complex64> = (0..degree)
        .map(|m| Complex64::from_polar(1.0, m as f64 * phi))
        .collect();
    for n in 0..degree {
        for m in 0..=n {
            let y = phases[m] * legendre[n * (n + 1) / 2 + m];
            out[sph_index(n, m as i64)] = y;
            if m > 0 {
                let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                out[sph_index(n, -(m as i64))] = y.conj() * sign;
            }
        }
    }
    out
}

/// Orthonormal spherical harmonic `Y_nm(θ, φ)`.
pub fn sph_harm_eval(n: usize, m: i64, theta: f64, phi: f64) -> Result<Complex64> {
    if m.unsigned_abs() as usize > n {
        return Err(Error::InvalidHarmonic { n, m });
    }
    let legendre = normalized_legendre_table(n + 1, theta);
    let ma = m.unsigned_abs() as usize;
    let y = Complex64::from_polar(legendre[n * (n + 1) / 2 + ma], ma as f64 * phi);
    Ok(if m >= 0 {
        y
    } else if ma % 2 == 0 {
        y.conj()
    } else {
        -y.conj()
    })
}

/// Spherical-harmonic coefficients `μ̂_nm`, `0 ≤ n < degree`, `|m| ≤ n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SphericalCoeffs {
    degree: usize,
    coeffs: Vec<Complex64>,
}

impl SphericalCoeffs {
    pub fn zeros(degree: usize) -> Self {
        SphericalCoeffs {
            degree,
            coeffs: vec![Complex64::new(0.0, 0.0); degree * degree],
        }
    }

    pub fn from_vec(degree: usize, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != degree * degree {
            return Err(Error::InvalidInput(format!(
                "expected {} coefficients for degree {degree}, got {}",
                degree * degree,
                coeffs.len()
            )));
        }
        Ok(SphericalCoeffs { degree, coeffs })
    }

    /// Single harmonic `Y_nm` with unit coefficient.
    pub fn single(degree: usize, n: usize, m: i64) -> Result<Self> {
        let mut c = Self::zeros(degree);
        c.set(n, m, Complex64::new(1.0, 0.0))?;
        Ok(c)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn get(&self, n: usize, m: i64) -> Complex64 {
        if n >= self.degree || m.unsigned_abs() as usize > n {
            return Complex64::new(0.0, 0.0);
        }
        self.coeffs[sph_index(n, m)]
    }

    pub fn set(&mut self, n: usize, m: i64, value: Complex64) -> Result<()> {
        if n >= self.degree || m.unsigned_abs() as usize > n {
            return Err(Error::InvalidHarmonic { n, m });
        }
        self.coeffs[sph_index(n, m)] = value;
        Ok(())
    }

    /// Sets the `(n, ±m)` pair so that the represented field stays real.
    pub fn set_real_mode(&mut self, n: usize, m: usize, value: Complex64) -> Result<()> {
        if m == 0 {
            return self.set(n, 0, Complex64::new(value.re, 0.0));
        }
        self.set(n, m as i64, value)?;
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        self.set(n, -(m as i64), value.conj() * sign)
    }

    /// Iterates `(n, m, μ̂_nm)`.
    pub fn iter(&self) -> impl Iterator<Item = (usize, i64, Complex64)> + '_ {
        (0..self.degree).flat_map(move |n| {
            (-(n as i64)..=n as i64).map(move |m| (n, m, self.coeffs[sph_index(n, m)]))
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Evaluates the expansion at one point.
    pub fn synthesis(&self, theta: f64, phi: f64) -> Complex64 {
        let legendre = normalized_legendre_table(self.degree, theta);
        let mut sum = Complex64::new(0.0, 0.0);
        for m in 0..self.degree {
            let phase = Complex64::from_polar(1.0, m as f64 * phi);
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            let mut pos = Complex64::new(0.0, 0.0);
            let mut neg = Complex64::new(0.0, 0.0);
            for n in m..self.degree {
                let p = legendre[n * (n + 1) / 2 + m];
                pos += self.coeffs[sph_index(n, m as i64)] * p;
                if m > 0 {
                    neg += self.coeffs[sph_index(n, -(m as i64))] * (p * sign);
                }
            }
            sum += pos * phase;
            if m > 0 {
                sum += neg * phase.conj();
            }
        }
        sum
    }

    /// Real part of [`synthesis`](Self::synthesis), for real fields.
    pub fn eval_real(&self, theta: f64, phi: f64) -> f64 {
        self.synthesis(theta, phi).re
    }

    /// Applies `Δ_{S²}`: multiplies each `μ̂_nm` by `−n(n+1)`.
    pub fn spherical_laplacian(&self) -> SphericalCoeffs {
        let mut out = self.clone();
        for n in 0..self.degree {
            let lambda = -((n * (n + 1)) as f64);
            for m in -(n as i64)..=n as i64 {
                out.coeffs[sph_index(n, m)] *= lambda;
            }
        }
        out
    }

    /// Multiplies each degree-`n` block by `factor(n)`.
    pub fn scale_degrees(&self, factor: impl Fn(usize) -> f64) -> SphericalCoeffs {
        let mut out = self.clone();
        for n in 0..self.degree {
            let f = factor(n);
            for m in -(n as i64)..=n as i64 {
                out.coeffs[sph_index(n, m)] *= f;
            }
        }
        out
    }
}

/// Applies `Δ_{S²}` in coefficient space.
pub fn spherical_laplacian(coeffs: &SphericalCoeffs) -> SphericalCoeffs {
    coeffs.spherical_laplacian()
}

/// Gauss–Legendre (in `cos θ`) × uniform longitude grid for exact analysis
/// of fields with degree below `degree`.
#[derive(Debug, Clone)]
pub struct SphereGrid {
    pub degree: usize,
    pub thetas: Vec<f64>,
    /// Weights with respect to `d(cos θ)`.
    pub lat_weights: Vec<f64>,
    pub phis: Vec<f64>,
}

impl SphereGrid {
    /// `n_lat` Gauss–Legendre colatitudes and `n_lon` longitudes
    /// `φ_j = −π + 2πj/n_lon`.
    pub fn new(degree: usize, n_lat: usize, n_lon: usize) -> Result<Self> {
        if n_lat < degree || n_lon < 2 * degree {
            return Err(Error::InvalidInput(format!(
                "analysis grid {n_lat}x{n_lon} too coarse for degree {degree}"
            )));
        }
        let rule = gauss_legendre(n_lat);
        // Ascending cos θ means descending θ; reverse so θ ascends.
        let thetas = rule.nodes.iter().rev().map(|x| x.acos()).collect();
        let lat_weights = rule.weights.iter().rev().copied().collect();
        Ok(SphereGrid {
            degree,
            thetas,
            lat_weights,
            phis: crate::geometry2d::periodic_nodes(n_lon),
        })
    }

    /// The default `N × 2N` grid.
    pub fn standard(degree: usize) -> Self {
        Self::new(degree, degree.max(1), (2 * degree).max(2)).expect("standard grid is valid")
    }

    pub fn len(&self) -> usize {
        self.thetas.len() * self.phis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Grid points in row-major `(θ_i, φ_j)` order.
    pub fn points(&self) -> Vec<(f64, f64)> {
        self.thetas
            .iter()
            .flat_map(|&th| self.phis.iter().map(move |&ph| (th, ph)))
            .collect()
    }

    pub fn sample(&self, f: impl Fn(f64, f64) -> f64) -> Vec<Complex64> {
        self.points()
            .into_iter()
            .map(|(th, ph)| Complex64::new(f(th, ph), 0.0))
            .collect()
    }

    /// Projects row-major samples onto `Y_nm`, `n < degree`.
    pub fn analysis(&self, samples: &[Complex64]) -> Result<SphericalCoeffs> {
        let n_lon = self.phis.len();
        if samples.len() != self.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} samples, got {}",
                self.len(),
                samples.len()
            )));
        }
        let degree = self.degree;
        let dphi = 2.0 * PI / n_lon as f64;
        let mut out = SphericalCoeffs::zeros(degree);
        let mut fourier = vec![Complex64::new(0.0, 0.0); 2 * degree.max(1)];
        for (i, &theta) in self.thetas.iter().enumerate() {
            let row = &samples[i * n_lon..(i + 1) * n_lon];
            // F(m) = Σ_j f_j e^{−imφ_j} Δφ for |m| < degree.
            for m in -(degree as i64 - 1)..=(degree as i64 - 1) {
                let mut acc = Complex64::new(0.0, 0.0);
                for (&f, &phi) in row.iter().zip(&self.phis) {
                    acc += f * Complex64::from_polar(1.0, -(m as f64) * phi);
                }
                fourier[(m + degree as i64) as usize] = acc * dphi;
            }
            let legendre = normalized_legendre_table(degree, theta);
            let w = self.lat_weights[i];
            for n in 0..degree {
                for m in -(n as i64)..=n as i64 {
                    let ma = m.unsigned_abs() as usize;
                    let mut p = legendre[n * (n + 1) / 2 + ma];
                    if m < 0 && ma % 2 == 1 {
                        p = -p;
                    }
                    out.coeffs[sph_index(n, m)] += fourier[(m + degree as i64) as usize] * (w * p);
                }
            }
        }
        Ok(out)
    }

    /// Samples `f` on the grid and projects it.
    pub fn analyze_fn(&self, f: impl Fn(f64, f64) -> f64) -> SphericalCoeffs {
        self.analysis(&self.sample(f)).expect("sample count matches grid")
    }
}

/// Analysis of `f` on the standard grid for `degree`.
pub fn sph_analysis(degree: usize, f: impl Fn(f64, f64) -> f64) -> SphericalCoeffs {
    SphereGrid::standard(degree).analyze_fn(f)
}

/// Evaluates a coefficient table at one point.
pub fn sph_synthesis(coeffs: &SphericalCoeffs, theta: f64, phi: f64) -> Complex64 {
    coeffs.synthesis(theta, phi)
}

/// Default finite-difference step for [`pole_second_derivative_average`].
pub const POLE_FD_STEP: f64 = 1e-3;

/// Computes `(1/π)∫₀^π ∂²_s ψ|_{s=0} dt` in the frame rotated so that
/// `(θ*, φ*)` is the north pole, by central differences in `s` with
/// Richardson extrapolation over `(h, h/2)` and the periodic trapezoid rule
/// in `t`. This equals `½Δ_{S²}ψ` at the pole.
pub fn pole_second_derivative_average(
    field: impl Fn(f64, f64) -> f64,
    theta_star: f64,
    phi_star: f64,
    h: f64,
) -> f64 {
    const AZIMUTHS: usize = 32;
    let psi = |s: f64, t: f64| {
        let (th, ph) = rotated_angles(s, t, theta_star, phi_star);
        field(th, ph)
    };
    let center = field(theta_star, phi_star);
    let average_second_difference = |step: f64| {
        let mut acc = 0.0;
        for k in 0..AZIMUTHS {
            let t = PI * k as f64 / AZIMUTHS as f64;
            // ψ(−s, t) = ψ(s, t + π) by regularity at the pole.
            acc += psi(step, t) + psi(step, t + PI) - 2.0 * center;
        }
        acc / (AZIMUTHS as f64 * step * step)
    };
    let coarse = average_second_difference(h);
    let fine = average_second_difference(h / 2.0);
    (4.0 * fine - coarse) / 3.0
}
