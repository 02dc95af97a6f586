//! Analytic closed plane curves and their differential geometry.
//!
//! Every curve is parameterized counterclockwise over `t ∈ [-π, π]`. The
//! outward normal is `(y₂′, −y₁′)/J` and the signed curvature is
//! `(y₁′y₂″ − y₂′y₁″)/J³`, so the unit circle has `κ = +1`.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec2 = [f64; 2];

const DEGENERATE_JACOBIAN: f64 = 1e-14;

/// An analytic closed curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Curve2D {
    /// `y(t) = (cos t + 0.65 cos 2t − 0.65, 1.5 sin t)`.
    Kite,
    /// `y(t) = r(t)(cos t, sin t)` with `r(t) = 1 + amplitude·cos(frequency·t)`.
    Star { amplitude: f64, frequency: u32 },
    Circle { radius: f64 },
    /// `y_i(t) = Σ_k cos_i[k]·cos(kt) + sin_i[k]·sin(kt)`, `k = 0, 1, …`.
    FourierCustom {
        x_cos: Vec<f64>,
        x_sin: Vec<f64>,
        y_cos: Vec<f64>,
        y_sin: Vec<f64>,
    },
}

/// Geometry of a curve at one parameter value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint2D {
    pub t: f64,
    pub position: Vec2,
    pub d1: Vec2,
    pub d2: Vec2,
    pub normal: Vec2,
    pub jacobian: f64,
    pub curvature: f64,
}

impl Curve2D {
    /// The five-armed star with amplitude 0.3.
    pub fn star() -> Self {
        Curve2D::Star {
            amplitude: 0.3,
            frequency: 5,
        }
    }

    pub fn unit_circle() -> Self {
        Curve2D::Circle { radius: 1.0 }
    }

    /// Builds a curve from a name and parameter list, e.g. `("star", [0.3, 5])`.
    pub fn from_name(name: &str, params: &[f64]) -> Result<Self> {
        let curve = match name {
            "kite" => Curve2D::Kite,
            "star" => {
                let amplitude = params.first().copied().unwrap_or(0.3);
                let frequency = params.get(1).copied().unwrap_or(5.0);
                if frequency < 0.0 || frequency.fract() != 0.0 {
                    return Err(Error::Config(format!(
                        "star frequency must be a non-negative integer, got {frequency}"
                    )));
                }
                Curve2D::Star {
                    amplitude,
                    frequency: frequency as u32,
                }
            }
            "circle" => Curve2D::Circle {
                radius: params.first().copied().unwrap_or(1.0),
            },
            other => return Err(Error::Config(format!("unknown curve '{other}'"))),
        };
        curve.validate()?;
        Ok(curve)
    }

    /// Loads a `fourier-custom` curve (or any tagged curve) from a JSON file.
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let curve: Curve2D = serde_json::from_str(&text)?;
        curve.validate()?;
        Ok(curve)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Curve2D::Kite => {}
            Curve2D::Star { amplitude, .. } => {
                if !(amplitude.abs() < 1.0) {
                    return Err(Error::Config(format!(
                        "star amplitude must satisfy |a| < 1, got {amplitude}"
                    )));
                }
            }
            Curve2D::Circle { radius } => {
                if !(*radius > 0.0) {
                    return Err(Error::Config(format!("circle radius must be positive, got {radius}")));
                }
            }
            Curve2D::FourierCustom { x_cos, y_cos, .. } => {
                if x_cos.is_empty() || y_cos.is_empty() {
                    return Err(Error::Config(
                        "fourier-custom curve needs at least the constant cosine coefficients".into(),
                    ));
                }
            }
        }
        // Non-degeneracy on a sample grid.
        for j in 0..256 {
            self.eval(-PI + 2.0 * PI * j as f64 / 256.0)?;
        }
        Ok(())
    }

    /// Position and its first two derivatives, without normalization.
    fn derivatives(&self, t: f64) -> (Vec2, Vec2, Vec2) {
        match self {
            Curve2D::Kite => {
                let (s, c) = t.sin_cos();
                let (s2, c2) = (2.0 * t).sin_cos();
                (
                    [c + 0.65 * c2 - 0.65, 1.5 * s],
                    [-s - 1.3 * s2, 1.5 * c],
                    [-c - 2.6 * c2, -1.5 * s],
                )
            }
            Curve2D::Star {
                amplitude,
                frequency,
            } => {
                let k = *frequency as f64;
                let (sk, ck) = (k * t).sin_cos();
                let r = 1.0 + amplitude * ck;
                let r1 = -amplitude * k * sk;
                let r2 = -amplitude * k * k * ck;
                polar_derivatives(t, r, r1, r2)
            }
            Curve2D::Circle { radius } => polar_derivatives(t, *radius, 0.0, 0.0),
            Curve2D::FourierCustom {
                x_cos,
                x_sin,
                y_cos,
                y_sin,
            } => {
                let (x, x1, x2) = fourier_series(x_cos, x_sin, t);
                let (y, y1, y2) = fourier_series(y_cos, y_sin, t);
                ([x, y], [x1, y1], [x2, y2])
            }
        }
    }

    /// Evaluates the curve geometry at `t` (wrapped into `[-π, π]`).
    pub fn eval(&self, t: f64) -> Result<CurvePoint2D> {
        if !t.is_finite() {
            return Err(Error::InvalidInput(format!("curve parameter must be finite, got {t}")));
        }
        let t = wrap_angle(t);
        let (position, d1, d2) = self.derivatives(t);
        let jacobian = d1[0].hypot(d1[1]);
        if jacobian <= DEGENERATE_JACOBIAN {
            return Err(Error::DegenerateCurve { t, jacobian });
        }
        let normal = [d1[1] / jacobian, -d1[0] / jacobian];
        let curvature = (d1[0] * d2[1] - d1[1] * d2[0]) / jacobian.powi(3);
        Ok(CurvePoint2D {
            t,
            position,
            d1,
            d2,
            normal,
            jacobian,
            curvature,
        })
    }

    pub fn position(&self, t: f64) -> Vec2 {
        self.derivatives(wrap_angle(t)).0
    }

    /// Samples the curve at the equispaced nodes `φ_j = −π + 2πj/N`.
    pub fn sample(&self, n: usize) -> Result<Vec<CurvePoint2D>> {
        periodic_nodes(n).into_iter().map(|t| self.eval(t)).collect()
    }

    /// Signed distance from `x` to the curve: negative inside, positive outside.
    ///
    /// The closest point is located on a coarse grid and polished by Newton
    /// iteration; the sign comes from the outward normal at that point.
    pub fn signed_distance(&self, x: Vec2) -> f64 {
        const COARSE: usize = 1024;
        let dist2 = |t: f64| {
            let p = self.position(t);
            (x[0] - p[0]).powi(2) + (x[1] - p[1]).powi(2)
        };
        let nodes = periodic_nodes(COARSE);
        let mut candidates: Vec<(f64, f64)> = nodes.iter().map(|&t| (dist2(t), t)).collect();
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut best: Option<(f64, f64)> = None;
        for &(_, t0) in candidates.iter().take(4) {
            let t = self.polish_closest(x, t0);
            let d = dist2(t);
            if best.map_or(true, |(bd, _)| d < bd) {
                best = Some((d, t));
            }
        }
        let (d2, t) = best.expect("coarse grid is non-empty");
        let (p, d1, _) = self.derivatives(wrap_angle(t));
        let side = (x[0] - p[0]) * d1[1] - (x[1] - p[1]) * d1[0];
        let dist = d2.sqrt();
        if side < 0.0 {
            -dist
        } else {
            dist
        }
    }

    fn polish_closest(&self, x: Vec2, t0: f64) -> f64 {
        let h = 2.0 * PI / 1024.0;
        let mut t = t0;
        for _ in 0..50 {
            let (p, d1, d2) = self.derivatives(wrap_angle(t));
            let r = [p[0] - x[0], p[1] - x[1]];
            let g = r[0] * d1[0] + r[1] * d1[1];
            let hess = d1[0] * d1[0] + d1[1] * d1[1] + r[0] * d2[0] + r[1] * d2[1];
            if hess <= 0.0 {
                break;
            }
            let step = (g / hess).clamp(-h, h);
            t -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        t
    }

    /// Even–odd containment test for a point.
    pub fn contains(&self, x: Vec2) -> bool {
        self.signed_distance(x) < 0.0
    }
}

fn polar_derivatives(t: f64, r: f64, r1: f64, r2: f64) -> (Vec2, Vec2, Vec2) {
    let (s, c) = t.sin_cos();
    (
        [r * c, r * s],
        [r1 * c - r * s, r1 * s + r * c],
        [r2 * c - 2.0 * r1 * s - r * c, r2 * s + 2.0 * r1 * c - r * s],
    )
}

fn fourier_series(cos: &[f64], sin: &[f64], t: f64) -> (f64, f64, f64) {
    let mut v = [0.0; 3];
    for (k, &a) in cos.iter().enumerate() {
        let kf = k as f64;
        let (s, c) = (kf * t).sin_cos();
        v[0] += a * c;
        v[1] -= a * kf * s;
        v[2] -= a * kf * kf * c;
    }
    for (k, &b) in sin.iter().enumerate() {
        let kf = k as f64;
        let (s, c) = (kf * t).sin_cos();
        v[0] += b * s;
        v[1] += b * kf * c;
        v[2] -= b * kf * kf * s;
    }
    (v[0], v[1], v[2])
}

/// Wraps an angle into `[-π, π]`, leaving values already in range untouched.
pub fn wrap_angle(t: f64) -> f64 {
    if (-PI..=PI).contains(&t) {
        t
    } else {
        let w = (t + PI).rem_euclid(2.0 * PI) - PI;
        if w < -PI {
            w + 2.0 * PI
        } else {
            w
        }
    }
}

/// Equispaced periodic nodes `φ_j = −π + 2πj/N`, `j = 0, …, N−1`.
pub fn periodic_nodes(n: usize) -> Vec<f64> {
    (0..n).map(|j| -PI + 2.0 * PI * j as f64 / n as f64).collect()
}
