//! Python module `closeeval`.

use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use closeeval_core::bie2d::{self, DensityGrid2D, LogSource};
use closeeval_core::bie3d::{self, BoundaryData3D};
use closeeval_core::closeeval2d::{CloseEvalRequest2D, Method2D};
use closeeval_core::closeeval3d::PreparedTarget3D;
use closeeval_core::geometry2d;
use closeeval_core::geometry3d;
use closeeval_core::harness::{self, StudyConfig};
use closeeval_core::hgscatter::{self, IntensityField};
use closeeval_core::Error;

fn py_err(e: Error) -> PyErr {
    match harness::exit_code(&e) {
        2 => PyValueError::new_err(e.to_string()),
        _ => PyArithmeticError::new_err(e.to_string()),
    }
}

type Harmonic = (usize, i64, f64, f64);

/// A closed curve in the plane.
#[pyclass(frozen, module = "closeeval")]
struct Curve2D {
    inner: geometry2d::Curve2D,
}

#[pymethods]
impl Curve2D {
    #[staticmethod]
    fn kite() -> Self {
        Curve2D {
            inner: geometry2d::Curve2D::Kite,
        }
    }

    #[staticmethod]
    #[pyo3(signature = (amplitude = 0.3, frequency = 5))]
    fn star(amplitude: f64, frequency: u32) -> PyResult<Self> {
        let inner = geometry2d::Curve2D::Star { amplitude, frequency };
        inner.validate().map_err(py_err)?;
        Ok(Curve2D { inner })
    }

    #[staticmethod]
    fn circle(radius: f64) -> PyResult<Self> {
        let inner = geometry2d::Curve2D::Circle { radius };
        inner.validate().map_err(py_err)?;
        Ok(Curve2D { inner })
    }

    /// Parses the JSON curve format, e.g. `{"kind": "fourier-custom", ...}`.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner: geometry2d::Curve2D =
            serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        inner.validate().map_err(py_err)?;
        Ok(Curve2D { inner })
    }

    fn position(&self, t: f64) -> (f64, f64) {
        let p = self.inner.position(t);
        (p[0], p[1])
    }

    /// Position, normal, jacobian and curvature at `t`.
    fn eval<'py>(&self, py: Python<'py>, t: f64) -> PyResult<Bound<'py, PyDict>> {
        let p = self.inner.eval(t).map_err(py_err)?;
        let d = PyDict::new(py);
        d.set_item("position", (p.position[0], p.position[1]))?;
        d.set_item("normal", (p.normal[0], p.normal[1]))?;
        d.set_item("jacobian", p.jacobian)?;
        d.set_item("curvature", p.curvature)?;
        Ok(d)
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        self.inner.contains([x, y])
    }

    fn __repr__(&self) -> String {
        format!("Curve2D({:?})", self.inner)
    }
}

/// Solved 2D density on the `N`-point grid.
#[pyclass(frozen, module = "closeeval")]
struct Density2D {
    inner: DensityGrid2D,
    source: LogSource,
}

#[pymethods]
impl Density2D {
    #[getter]
    fn mu(&self) -> Vec<f64> {
        self.inner.mu.clone()
    }

    #[getter]
    fn residual(&self) -> f64 {
        self.inner.residual
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// The evaluation point `y_k − εℓν_k`.
    #[pyo3(signature = (k, eps, ell = 1.0))]
    fn point(&self, k: usize, eps: f64, ell: f64) -> PyResult<(f64, f64)> {
        let r = CloseEvalRequest2D::new(&self.inner, k, eps, ell).map_err(py_err)?;
        let x = r.point();
        Ok((x[0], x[1]))
    }

    /// One of `ptr`, `sub`, `asym2`, `asym3` at node `k`.
    #[pyo3(signature = (method, k, eps, ell = 1.0))]
    fn evaluate(&self, method: &str, k: usize, eps: f64, ell: f64) -> PyResult<f64> {
        let m: Method2D = method.parse().map_err(py_err)?;
        let r = CloseEvalRequest2D::new(&self.inner, k, eps, ell).map_err(py_err)?;
        m.evaluate(&r).map_err(py_err)
    }

    /// The exact log-source solution at `(x, y)`.
    fn exact(&self, x: f64, y: f64) -> f64 {
        self.source.value([x, y])
    }
}

#[pyfunction]
#[pyo3(signature = (curve, x0 = (1.85, 1.65), n = 128))]
fn solve_log_source(curve: &Curve2D, x0: (f64, f64), n: usize) -> PyResult<Density2D> {
    let x0 = [x0.0, x0.1];
    let inner = bie2d::solve_log_source(&curve.inner, x0, n).map_err(py_err)?;
    Ok(Density2D {
        inner,
        source: LogSource::new(x0),
    })
}

/// Solved 3D density in spherical harmonics.
#[pyclass(frozen, module = "closeeval")]
struct Density3D {
    inner: bie3d::Density3D,
}

#[pymethods]
impl Density3D {
    #[getter]
    fn degree(&self) -> usize {
        self.inner.degree()
    }

    #[getter]
    fn residual(&self) -> f64 {
        self.inner.residual
    }

    fn mu(&self, theta: f64, phi: f64) -> f64 {
        self.inner.mu(theta, phi)
    }

    /// `(numerical, asym2, exact)` at `y(θ, φ) − εℓν`.
    #[pyo3(signature = (theta, phi, eps, n = None, ell = 1.0))]
    fn close_eval(&self, theta: f64, phi: f64, eps: f64, n: Option<usize>, ell: f64) -> PyResult<(f64, f64, f64)> {
        let n = n.unwrap_or(self.inner.degree());
        let prep = PreparedTarget3D::new(&self.inner, theta, phi, n, ell).map_err(py_err)?;
        let x = prep.point(eps);
        if !self.inner.surface.contains(x) {
            return Err(py_err(Error::PointOutside(x.to_vec())));
        }
        let exact = self
            .inner
            .data
            .exact_interior(&self.inner.surface, x)
            .unwrap_or(f64::NAN);
        Ok((prep.numerical(x), prep.asymptotic(eps), exact))
    }

    /// Writes the `{N, coefficients}` JSON file.
    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(std::path::Path::new(path)).map_err(py_err)
    }
}

fn surface_named(name: &str) -> PyResult<geometry3d::Surface3D> {
    match name {
        "mushroom" => Ok(geometry3d::Surface3D::mushroom()),
        "sphere" | "unit-sphere" => Ok(geometry3d::Surface3D::unit_sphere()),
        other => Err(PyValueError::new_err(format!("unknown surface '{other}'"))),
    }
}

/// Galerkin solve on `"mushroom"` or `"sphere"` with either an
/// inverse-distance source or `(n, m, re, im)` harmonic data.
#[pyfunction]
#[pyo3(signature = (surface, n = 16, source = None, harmonics = None, quadrature_n = None))]
fn solve_density3d(
    py: Python<'_>,
    surface: &str,
    n: usize,
    source: Option<(f64, f64, f64)>,
    harmonics: Option<Vec<Harmonic>>,
    quadrature_n: Option<usize>,
) -> PyResult<Density3D> {
    let surface = surface_named(surface)?;
    let data = match (source, harmonics) {
        (Some(_), Some(_)) => return Err(PyValueError::new_err("give source or harmonics, not both")),
        (Some((a, b, c)), None) => BoundaryData3D::inverse_distance([a, b, c]),
        (None, Some(h)) => BoundaryData3D::Harmonics { coefficients: h },
        (None, None) => BoundaryData3D::inverse_distance(bie3d::DEFAULT_SOURCE),
    };
    let q = quadrature_n.unwrap_or(n);
    let inner = py
        .detach(|| bie3d::solve_density3d_with(&surface, &data, n, q))
        .map_err(py_err)?;
    Ok(Density3D { inner })
}

#[pyfunction]
fn p_hg(cos_theta: f64, g: f64) -> f64 {
    hgscatter::p_hg(cos_theta, g)
}

fn field(harmonics: &[Harmonic]) -> PyResult<IntensityField> {
    IntensityField::from_entries(harmonics).map_err(py_err)
}

/// Direct quadrature of the scattering operator for `ψ = Re Σ c·Y_nm`.
#[pyfunction]
fn apply_l_direct(harmonics: Vec<Harmonic>, theta: f64, phi: f64, g: f64) -> PyResult<f64> {
    hgscatter::apply_l_direct(&field(&harmonics)?, theta, phi, g).map_err(py_err)
}

#[pyfunction]
fn apply_l32(harmonics: Vec<Harmonic>, theta: f64, phi: f64) -> PyResult<f64> {
    Ok(hgscatter::apply_l32(&field(&harmonics)?, theta, phi))
}

#[pyfunction]
fn apply_l_asymptotic(harmonics: Vec<Harmonic>, theta: f64, phi: f64, eps: f64) -> PyResult<f64> {
    Ok(hgscatter::apply_l_asymptotic(&field(&harmonics)?, theta, phi, eps))
}

/// `(slope, fit_lo, fit_hi, n_points)`.
#[pyfunction]
#[pyo3(signature = (eps, errors, lo = 1e-6, hi = 1e-2))]
fn fit_order(eps: Vec<f64>, errors: Vec<f64>, lo: f64, hi: f64) -> PyResult<(f64, f64, f64, usize)> {
    harness::fit_order(&eps, &errors, lo, hi).map_err(py_err)
}

/// Runs a study from a JSON config string; returns `(rows, fits)` as
/// lists of dicts.
#[pyfunction]
fn run_study<'py>(py: Python<'py>, config_json: &str) -> PyResult<(Vec<Bound<'py, PyDict>>, Vec<Bound<'py, PyDict>>)> {
    let config = StudyConfig::from_json_str(config_json).map_err(py_err)?;
    let (rows, fits) = py
        .detach(|| -> closeeval_core::Result<_> {
            if config.problem == harness::Problem::Hg {
                let r = harness::run_hg_study(&config)?;
                Ok((r.rows, r.fit.into_iter().collect::<Vec<_>>()))
            } else {
                let r = harness::run_error_map(&config)?;
                Ok((r.rows, r.fits))
            }
        })
        .map_err(py_err)?;
    let rows = rows
        .into_iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("target_param", r.target_param)?;
            d.set_item("eps", r.eps)?;
            d.set_item("method", r.method)?;
            d.set_item("value", r.value)?;
            d.set_item("exact", r.exact)?;
            d.set_item("abs_error", r.abs_error)?;
            Ok(d)
        })
        .collect::<PyResult<_>>()?;
    let fits = fits
        .into_iter()
        .map(|f| {
            let d = PyDict::new(py);
            d.set_item("target", f.target)?;
            d.set_item("method", f.method)?;
            d.set_item("slope", f.slope)?;
            d.set_item("fit_lo", f.fit_lo)?;
            d.set_item("fit_hi", f.fit_hi)?;
            d.set_item("n_points", f.n_points)?;
            Ok(d)
        })
        .collect::<PyResult<_>>()?;
    Ok((rows, fits))
}

#[pymodule]
fn closeeval(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Curve2D>()?;
    m.add_class::<Density2D>()?;
    m.add_class::<Density3D>()?;
    m.add_function(wrap_pyfunction!(solve_log_source, m)?)?;
    m.add_function(wrap_pyfunction!(solve_density3d, m)?)?;
    m.add_function(wrap_pyfunction!(p_hg, m)?)?;
    m.add_function(wrap_pyfunction!(apply_l_direct, m)?)?;
    m.add_function(wrap_pyfunction!(apply_l32, m)?)?;
    m.add_function(wrap_pyfunction!(apply_l_asymptotic, m)?)?;
    m.add_function(wrap_pyfunction!(fit_order, m)?)?;
    m.add_function(wrap_pyfunction!(run_study, m)?)?;
    Ok(())
}
