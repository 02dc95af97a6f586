//! Closed surfaces parameterized over the sphere, and rotations of the
//! parameter sphere that move a chosen point to the north pole.
//!
//! All built-in surfaces have the radial form `y(θ, φ) = R(θ)·D·ŷ(θ, φ)` with
//! `ŷ` the unit direction and `D` a diagonal axis scaling. The area element
//! `W = |y_θ × y_φ|` factors as `J·sin θ` with `J` smooth across the poles;
//! quadrature code uses `J` and never divides by `sin θ`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];

#[inline]
pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

/// Unit direction `(sin θ cos φ, sin θ sin φ, cos θ)`.
#[inline]
pub fn unit_direction(theta: f64, phi: f64) -> Vec3 {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    [st * cp, st * sp, ct]
}

/// Polar and azimuthal angles of a nonzero vector.
pub fn direction_angles(v: Vec3) -> (f64, f64) {
    let rho = v[0].hypot(v[1]);
    let theta = rho.atan2(v[2]);
    let phi = if rho == 0.0 { 0.0 } else { v[1].atan2(v[0]) };
    (theta, phi)
}

type ProfileFn = dyn Fn(f64) -> (f64, f64) + Send + Sync;

/// Radial profile `R(θ)` with its analytic derivative `R′(θ)`.
#[derive(Clone)]
pub enum RadialProfile {
    /// `R(θ) = Σ_k a_k cos(kθ)`; smooth across both poles.
    CosineSeries(Vec<f64>),
    /// User-supplied `θ ↦ (R(θ), R′(θ))`. `R′` must vanish at both poles.
    Function(Arc<ProfileFn>),
}

impl fmt::Debug for RadialProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RadialProfile::CosineSeries(c) => f.debug_tuple("CosineSeries").field(c).finish(),
            RadialProfile::Function(_) => f.write_str("Function(..)"),
        }
    }
}

impl RadialProfile {
    fn eval(&self, theta: f64) -> (f64, f64) {
        match self {
            RadialProfile::CosineSeries(coeffs) => {
                coeffs
                    .iter()
                    .enumerate()
                    .fold((0.0, 0.0), |(r, dr), (k, &a)| {
                        let kf = k as f64;
                        let (s, c) = (kf * theta).sin_cos();
                        (r + a * c, dr - a * kf * s)
                    })
            }
            RadialProfile::Function(f) => f(theta),
        }
    }
}

/// Which analytic surface a [`Surface3D`] represents.
#[derive(Debug, Clone)]
pub enum SurfaceKind {
    /// `R(θ) = 2 − 1/(1 + 100(1 − cos θ)²)` with axis scaling `(1, 2, 1)`.
    Mushroom,
    UnitSphere,
    CustomRadial { profile: RadialProfile, scale: Vec3 },
}

/// Serializable surface description used by configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SurfaceSpec {
    Mushroom,
    UnitSphere,
    CustomRadial { cosine: Vec<f64>, scale: Vec3 },
}

/// An analytic closed surface with a fixed outward orientation.
#[derive(Debug, Clone)]
pub struct Surface3D {
    kind: SurfaceKind,
    orientation: f64,
}

/// Geometry of a surface at one parameter pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfacePoint3D {
    pub theta: f64,
    pub phi: f64,
    pub position: Vec3,
    pub d_theta: Vec3,
    pub d_phi: Vec3,
    pub normal: Vec3,
    /// `W = |y_θ × y_φ|`.
    pub area: f64,
    /// `J = W / sin θ`, the area per unit solid angle of the parameter sphere.
    pub jacobian: f64,
}

impl Surface3D {
    pub fn new(kind: SurfaceKind) -> Result<Self> {
        let mut surface = Surface3D {
            kind,
            orientation: 1.0,
        };
        // Orientation from an equatorial sample relative to the origin, which
        // is interior for every radial surface.
        let p = surface.eval(PI / 2.0, 0.3)?;
        if dot(p.position, p.normal) < 0.0 {
            surface.orientation = -1.0;
        }
        Ok(surface)
    }

    pub fn mushroom() -> Self {
        Self::new(SurfaceKind::Mushroom).expect("mushroom surface is non-degenerate")
    }

    pub fn unit_sphere() -> Self {
        Self::new(SurfaceKind::UnitSphere).expect("unit sphere is non-degenerate")
    }

    pub fn from_spec(spec: &SurfaceSpec) -> Result<Self> {
        match spec {
            SurfaceSpec::Mushroom => Ok(Self::mushroom()),
            SurfaceSpec::UnitSphere => Ok(Self::unit_sphere()),
            SurfaceSpec::CustomRadial { cosine, scale } => {
                if cosine.is_empty() || scale.iter().any(|&s| !(s > 0.0)) {
                    return Err(Error::Config("custom-radial surface needs a profile and positive scales".into()));
                }
                Self::new(SurfaceKind::CustomRadial {
                    profile: RadialProfile::CosineSeries(cosine.clone()),
                    scale: *scale,
                })
            }
        }
    }

    pub fn kind(&self) -> &SurfaceKind {
        &self.kind
    }

    fn radial(&self, theta: f64) -> (f64, f64, Vec3) {
        match &self.kind {
            SurfaceKind::Mushroom => {
                let (s, c) = theta.sin_cos();
                let a = 1.0 - c;
                let q = 1.0 + 100.0 * a * a;
                (2.0 - 1.0 / q, 200.0 * a * s / (q * q), [1.0, 2.0, 1.0])
            }
            SurfaceKind::UnitSphere => (1.0, 0.0, [1.0, 1.0, 1.0]),
            SurfaceKind::CustomRadial { profile, scale } => {
                let (r, dr) = profile.eval(theta);
                (r, dr, *scale)
            }
        }
    }

    /// Evaluates position, partials, outward normal and area element.
    pub fn eval(&self, theta: f64, phi: f64) -> Result<SurfacePoint3D> {
        let (r, dr, d) = self.radial(theta);
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        let yhat = [st * cp, st * sp, ct];
        let e_theta = [ct * cp, ct * sp, -st];
        let e_phi = [-sp, cp, 0.0];
        let scaled = |v: Vec3, f: f64| [f * d[0] * v[0], f * d[1] * v[1], f * d[2] * v[2]];

        let position = scaled(yhat, r);
        let a = {
            let p = scaled(yhat, dr);
            let q = scaled(e_theta, r);
            [p[0] + q[0], p[1] + q[1], p[2] + q[2]]
        };
        let b = scaled(e_phi, r);
        let d_phi = [st * b[0], st * b[1], st * b[2]];
        // y_θ × y_φ = sin θ · (a × b)
        let raw = cross(a, b);
        let jacobian = norm(raw);
        if !(jacobian > 1e-14) {
            return Err(Error::DegenerateSurface {
                theta,
                phi,
                area: jacobian * st.abs(),
            });
        }
        let s = self.orientation / jacobian;
        Ok(SurfacePoint3D {
            theta,
            phi,
            position,
            d_theta: a,
            d_phi,
            normal: [s * raw[0], s * raw[1], s * raw[2]],
            area: jacobian * st.abs(),
            jacobian,
        })
    }

    pub fn position(&self, theta: f64, phi: f64) -> Vec3 {
        let (r, _, d) = self.radial(theta);
        let y = unit_direction(theta, phi);
        [r * d[0] * y[0], r * d[1] * y[1], r * d[2] * y[2]]
    }

    /// Exact containment test for radial surfaces.
    pub fn contains(&self, x: Vec3) -> bool {
        let (_, _, d) = self.radial(0.0);
        let p = [x[0] / d[0], x[1] / d[1], x[2] / d[2]];
        let rho = norm(p);
        if rho == 0.0 {
            return true;
        }
        let (theta, _) = direction_angles(p);
        rho < self.radial(theta).0
    }

    /// Locates the parameter pair whose surface point is nearest to `target`.
    pub fn nearest_parameters(&self, target: Vec3) -> (f64, f64) {
        let dist2 = |th: f64, ph: f64| {
            let y = self.position(th, ph);
            let r = sub(y, target);
            dot(r, r)
        };
        let (nt, np) = (90, 180);
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for i in 0..=nt {
            let th = PI * i as f64 / nt as f64;
            for j in 0..np {
                let ph = -PI + 2.0 * PI * j as f64 / np as f64;
                let d = dist2(th, ph);
                if d < best.0 {
                    best = (d, th, ph);
                }
            }
        }
        // Pattern search refinement.
        let (mut d, mut th, mut ph) = best;
        let mut step = PI / nt as f64;
        while step > 1e-13 {
            let mut improved = false;
            for (dt, dp) in [(step, 0.0), (-step, 0.0), (0.0, step), (0.0, -step)] {
                let (t2, p2) = ((th + dt).clamp(0.0, PI), ph + dp);
                let d2 = dist2(t2, p2);
                if d2 < d {
                    d = d2;
                    th = t2;
                    ph = p2;
                    improved = true;
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        (th, crate::geometry2d::wrap_angle(ph))
    }
}

/// Rotation of the parameter sphere taking the north pole to `(θ*, φ*)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphereRotation {
    pub theta: f64,
    pub phi: f64,
    /// Row-major matrix whose columns are `û`, `v̂`, `ŵ`.
    pub matrix: [[f64; 3]; 3],
}

impl SphereRotation {
    pub fn new(theta: f64, phi: f64) -> Self {
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        SphereRotation {
            theta,
            phi,
            matrix: [
                [ct * cp, -sp, st * cp],
                [ct * sp, cp, st * sp],
                [-st, 0.0, ct],
            ],
        }
    }

    pub fn apply(&self, v: Vec3) -> Vec3 {
        let m = &self.matrix;
        [dot(m[0], v), dot(m[1], v), dot(m[2], v)]
    }

    pub fn column(&self, k: usize) -> Vec3 {
        [self.matrix[0][k], self.matrix[1][k], self.matrix[2][k]]
    }

    pub fn determinant(&self) -> f64 {
        dot(self.column(0), cross(self.column(1), self.column(2)))
    }
}

pub fn rotation_matrix(theta_star: f64, phi_star: f64) -> SphereRotation {
    SphereRotation::new(theta_star, phi_star)
}

/// Maps rotated-frame angles `(s, t)` to original angles `(θ, φ)` so that
/// `ŷ(θ, φ) = R(θ*, φ*)·ŷ(s, t)`. Returns `θ ∈ [0, π]`, `φ ∈ (−π, π]`.
pub fn rotated_angles(s: f64, t: f64, theta_star: f64, phi_star: f64) -> (f64, f64) {
    let (ss, cs) = s.sin_cos();
    let (st, ct) = t.sin_cos();
    let (sts, cts) = theta_star.sin_cos();
    let (sps, cps) = phi_star.sin_cos();
    let xi = cts * cps * ss * ct - sps * ss * st + sts * cps * cs;
    let eta = cts * sps * ss * ct + cps * ss * st + sts * sps * cs;
    let zeta = -sts * ss * ct + cts * cs;
    let rho = xi.hypot(eta);
    let theta = rho.atan2(zeta);
    let phi = if rho == 0.0 {
        phi_star
    } else {
        let p = eta.atan2(xi);
        if p <= -PI {
            p + 2.0 * PI
        } else {
            p
        }
    };
    (theta, phi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{gauss_legendre, mapped_rule};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn mushroom_poles() {
        let m = Surface3D::mushroom();
        let n = m.eval(0.0, 0.4).unwrap();
        assert_abs_diff_eq!(n.position[2], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(n.position[0], 0.0, epsilon = 1e-15);
        let s = m.eval(PI, 0.4).unwrap();
        assert_abs_diff_eq!(s.position[2], -(2.0 - 1.0 / 401.0), epsilon = 1e-15);
        // Normals are defined at the poles.
        assert_abs_diff_eq!(n.normal[2], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(s.normal[2], -1.0, epsilon = 1e-12);
    }

    #[test]
    fn unit_sphere_equator() {
        let p = Surface3D::unit_sphere().eval(PI / 2.0, 0.0).unwrap();
        for (a, b) in p.position.iter().zip([1.0, 0.0, 0.0]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
        }
        for (a, b) in p.normal.iter().zip([1.0, 0.0, 0.0]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(p.area, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn normals_orthogonal_to_partials() {
        for surface in [Surface3D::mushroom(), Surface3D::unit_sphere()] {
            for i in 1..20 {
                for j in 0..20 {
                    let th = PI * i as f64 / 20.0;
                    let ph = -PI + 2.0 * PI * j as f64 / 20.0;
                    let p = surface.eval(th, ph).unwrap();
                    let scale_t = norm(p.d_theta);
                    let scale_p = norm(p.d_phi);
                    assert!(dot(p.normal, p.d_theta).abs() < 1e-12 * scale_t.max(1.0));
                    assert!(dot(p.normal, p.d_phi).abs() < 1e-12 * scale_p.max(1.0));
                    assert_abs_diff_eq!(norm(p.normal), 1.0, epsilon = 1e-12);
                    let w = norm(cross(p.d_theta, p.d_phi));
                    assert_abs_diff_eq!(w, p.area, epsilon = 1e-12 * w.max(1.0));
                }
            }
        }
    }

    #[test]
    fn partials_match_finite_differences() {
        let m = Surface3D::mushroom();
        let h = 1e-6;
        for &(th, ph) in &[(0.3, 0.2), (1.2, -2.0), (2.5, 3.0)] {
            let p = m.eval(th, ph).unwrap();
            let dt = sub(m.position(th + h, ph), m.position(th - h, ph));
            let dp = sub(m.position(th, ph + h), m.position(th, ph - h));
            for k in 0..3 {
                assert_abs_diff_eq!(dt[k] / (2.0 * h), p.d_theta[k], epsilon = 1e-7);
                assert_abs_diff_eq!(dp[k] / (2.0 * h), p.d_phi[k], epsilon = 1e-7);
            }
        }
    }

    #[test]
    fn mushroom_normal_points_outward() {
        let m = Surface3D::mushroom();
        for i in 0..=30 {
            for j in 0..30 {
                let th = PI * i as f64 / 30.0;
                let ph = -PI + 2.0 * PI * j as f64 / 30.0;
                let p = m.eval(th, ph).unwrap();
                assert!(dot(p.position, p.normal) > 0.0);
            }
        }
    }

    #[test]
    fn sphere_area_by_product_quadrature() {
        let n = 32;
        let rule = mapped_rule(n);
        let sphere = Surface3D::unit_sphere();
        let mut area = 0.0;
        for (&th, &w) in rule.nodes.iter().zip(&rule.weights) {
            for k in 0..2 * n {
                let ph = -PI + PI * k as f64 / n as f64;
                area += w * (PI / n as f64) * sphere.eval(th, ph).unwrap().area;
            }
        }
        assert_abs_diff_eq!(area, 4.0 * PI, epsilon = 1e-10);
        // The [-1, 1] rule is the unmapped counterpart.
        assert_eq!(gauss_legendre(n).nodes.len(), n);
    }

    #[test]
    fn containment() {
        let m = Surface3D::mushroom();
        assert!(m.contains([0.0, 0.0, 0.0]));
        assert!(!m.contains([5.0, 4.0, 3.0]));
        let p = m.eval(1.1, 0.7).unwrap();
        let x = |e: f64| {
            [
                p.position[0] - e * p.normal[0],
                p.position[1] - e * p.normal[1],
                p.position[2] - e * p.normal[2],
            ]
        };
        assert!(m.contains(x(1e-6)));
        assert!(!m.contains(x(-1e-6)));
    }

    #[test]
    fn nearest_parameters_recovers_sample() {
        let m = Surface3D::mushroom();
        let y = m.position(0.9, -1.3);
        let (th, ph) = m.nearest_parameters(y);
        assert_abs_diff_eq!(th, 0.9, epsilon = 1e-8);
        assert_abs_diff_eq!(ph, -1.3, epsilon = 1e-8);
    }

    #[test]
    fn rotation_examples() {
        let r = rotation_matrix(0.0, 0.0);
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(r.matrix[i][j], e, epsilon = 1e-15);
            }
        }
        let r = rotation_matrix(PI / 2.0, PI / 2.0);
        let w = r.column(2);
        assert_abs_diff_eq!(w[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(w[1], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(w[2], 0.0, epsilon = 1e-15);

        let (th, ph) = rotated_angles(0.0, 1.234, 0.7, -2.1);
        assert_abs_diff_eq!(th, 0.7, epsilon = 1e-15);
        assert_abs_diff_eq!(ph, -2.1, epsilon = 1e-15);

        let (th, _) = rotated_angles(PI / 2.0, 0.0, PI / 2.0, 0.0);
        assert_abs_diff_eq!(th, PI, epsilon = 1e-15);

        // Own pole: identity.
        let (th, ph) = rotated_angles(0.8, 0.3, 0.0, 0.0);
        assert_abs_diff_eq!(th, 0.8, epsilon = 1e-15);
        assert_abs_diff_eq!(ph, 0.3, epsilon = 1e-15);
    }

    proptest! {
        #[test]
        fn rotation_is_proper_and_orthogonal(th in 0.0..PI, ph in -PI..PI) {
            let r = rotation_matrix(th, ph);
            prop_assert!((r.determinant() - 1.0).abs() < 1e-14);
            for i in 0..3 {
                for j in 0..3 {
                    let e = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((dot(r.column(i), r.column(j)) - e).abs() < 1e-14);
                }
            }
            let w = r.column(2);
            let y = unit_direction(th, ph);
            for k in 0..3 {
                prop_assert!((w[k] - y[k]).abs() < 1e-15);
            }
        }

        #[test]
        fn rotated_angles_round_trip(s in 0.0..PI, t in -PI..PI, th in 0.0..PI, ph in -PI..PI) {
            let (a, b) = rotated_angles(s, t, th, ph);
            prop_assert!((0.0..=PI).contains(&a));
            prop_assert!(b > -PI && b <= PI);
            let lhs = unit_direction(a, b);
            let rhs = rotation_matrix(th, ph).apply(unit_direction(s, t));
            for k in 0..3 {
                prop_assert!((lhs[k] - rhs[k]).abs() < 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn surface_frame_invariants(th in 0.05..PI - 0.05, ph in -PI..PI, mushroom in any::<bool>()) {
            let s = if mushroom { Surface3D::mushroom() } else { Surface3D::unit_sphere() };
            let p = s.eval(th, ph).unwrap();
            let scale = norm(p.d_theta).max(norm(p.d_phi));
            prop_assert!(dot(p.normal, p.d_theta).abs() <= 1e-12 * scale);
            prop_assert!(dot(p.normal, p.d_phi).abs() <= 1e-12 * scale);
            prop_assert!((norm(p.normal) - 1.0).abs() <= 1e-12);
            prop_assert!(p.area >= 0.0);
            let q = s.position(th, ph + 2.0 * PI);
            for k in 0..3 {
                prop_assert!((q[k] - p.position[k]).abs() <= 1e-12);
            }
        }
    }
}
