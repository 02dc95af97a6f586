//! Error studies: sweep `ε` over a set of boundary targets, compare each
//! method against the exact harmonic solution, fit orders of accuracy and
//! write CSV, JSON and gnuplot output.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bie2d::{self, LogSource};
use crate::bie3d::{self, BoundaryData3D, Density3D};
use crate::closeeval2d::{AsymptoticTerms2D, CloseEvalRequest2D, Method2D};
use crate::closeeval3d::{Method3D, PreparedTarget3D};
use crate::error::{Error, Result};
use crate::geometry2d::{Curve2D, Vec2};
use crate::geometry3d::{Surface3D, SurfaceSpec, Vec3};
use crate::hgscatter::{apply_l_asymptotic, apply_l_direct, IntensityField};

/// Errors at or below this level are treated as roundoff and excluded
/// from order fits.
pub const ERROR_FLOOR: f64 = 1e-14;

/// Minimum number of surviving points for an order fit.
pub const MIN_FIT_POINTS: usize = 4;

/// Kite parameters of the two named 2D targets.
pub const Y_A_2D: f64 = -0.75 * PI;
pub const Y_B_2D: f64 = 0.25 * PI;

/// Cartesian locations of the named mushroom targets.
pub const Y_A_3D: Vec3 = [1.7830, 0.0, 0.8390];
pub const Y_B_3D: Vec3 = [1.7439, 1.19175, 0.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Problem {
    #[serde(rename = "2d-kite")]
    Kite2D,
    #[serde(rename = "2d-star")]
    Star2D,
    /// A curve given inline or by file, e.g. a `fourier-custom` curve.
    #[serde(rename = "2d-custom")]
    Custom2D,
    #[serde(rename = "3d-mushroom")]
    Mushroom3D,
    #[serde(rename = "3d-sphere")]
    Sphere3D,
    #[serde(rename = "hg")]
    Hg,
}

impl Problem {
    pub fn dimension(self) -> usize {
        match self {
            Problem::Kite2D | Problem::Star2D | Problem::Custom2D => 2,
            Problem::Mushroom3D | Problem::Sphere3D | Problem::Hg => 3,
        }
    }

    fn default_methods(self) -> Vec<String> {
        let names: &[&str] = match self {
            Problem::Kite2D | Problem::Star2D | Problem::Custom2D => &["ptr", "sub", "asym2", "asym3"],
            Problem::Mushroom3D | Problem::Sphere3D => &["num", "asym2"],
            Problem::Hg => &["asym"],
        };
        names.iter().map(|s| s.to_string()).collect()
    }

    fn default_eps(self) -> EpsSpec {
        let (lo, hi) = match self.dimension() {
            2 => (1e-6, 1e-1),
            _ if self == Problem::Hg => (1e-3, 1e-1),
            _ => (1e-4, 1e-1),
        };
        EpsSpec::Range { lo, hi, per_decade: 4 }
    }

    fn default_fit_range(self) -> [f64; 2] {
        match self {
            Problem::Kite2D | Problem::Star2D | Problem::Custom2D => [1e-6, 1e-2],
            Problem::Mushroom3D | Problem::Sphere3D => [1e-4, 1e-1],
            Problem::Hg => [1e-3, 1e-1],
        }
    }
}

/// `ε` values: an explicit list or `per_decade` points per decade from
/// `hi` down to `lo`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EpsSpec {
    List(Vec<f64>),
    Range { lo: f64, hi: f64, per_decade: usize },
}

impl EpsSpec {
    /// Parses `lo:hi:per-decade`.
    pub fn parse_range(text: &str) -> Result<Self> {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::Config(format!("eps range must be lo:hi:per-decade, got '{text}'")));
        }
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad number '{s}' in eps range")))
        };
        let per_decade = parts[2]
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::Config(format!("bad per-decade count '{}'", parts[2])))?;
        Ok(EpsSpec::Range {
            lo: num(parts[0])?,
            hi: num(parts[1])?,
            per_decade,
        })
    }

    /// Sorted descending, duplicates removed.
    pub fn values(&self) -> Result<Vec<f64>> {
        let mut out = match self {
            EpsSpec::List(v) => v.clone(),
            &EpsSpec::Range { lo, hi, per_decade } => {
                if !(lo > 0.0 && hi >= lo && hi.is_finite()) || per_decade == 0 {
                    return Err(Error::Config(format!(
                        "eps range needs 0 < lo <= hi and per-decade >= 1 (got {lo}:{hi}:{per_decade})"
                    )));
                }
                let mut v = Vec::new();
                for k in 0.. {
                    let (decades, rest) = (k / per_decade, k % per_decade);
                    let mut eps = hi / 10f64.powi(decades as i32);
                    if rest > 0 {
                        eps /= 10f64.powf(rest as f64 / per_decade as f64);
                    }
                    if eps < lo * (1.0 - 1e-9) {
                        break;
                    }
                    v.push(eps);
                }
                v
            }
        };
        if out.is_empty() {
            return Err(Error::Config("eps list is empty".into()));
        }
        if let Some(bad) = out.iter().find(|e| !(**e > 0.0) || !e.is_finite()) {
            return Err(Error::Config(format!("eps values must be positive, got {bad}")));
        }
        out.sort_by(|a, b| b.total_cmp(a));
        out.dedup();
        Ok(out)
    }
}

/// One entry of an explicit target list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TargetEntry {
    /// 2D boundary parameter `t`.
    Param(f64),
    /// 3D parameter pair `[θ, φ]`.
    Pair([f64; 2]),
    /// `"y_A"` or `"y_B"`.
    Named(String),
    /// A Cartesian point; the nearest boundary parameters are used.
    Point { point: Vec<f64> },
}

/// Which boundary targets to evaluate near.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Targets {
    /// `"all-nodes"` (2D), `"x1x3-slice"` or `"x1x2-slice"` (3D).
    Keyword(String),
    List(Vec<TargetEntry>),
}

/// A study description, usually read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub problem: Problem,
    /// Nyström size (2D) or Galerkin degree bound (3D).
    #[serde(default)]
    pub n: Option<usize>,
    /// 3D quadrature size; defaults to `n`.
    #[serde(default)]
    pub quadrature_n: Option<usize>,
    #[serde(default)]
    pub methods: Option<Vec<String>>,
    #[serde(default)]
    pub eps: Option<EpsSpec>,
    #[serde(default)]
    pub targets: Option<Targets>,
    /// Points per 3D slice.
    #[serde(default)]
    pub slice_count: Option<usize>,
    #[serde(default)]
    pub ell: Option<f64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    /// `x₀` of the log source (2D) or the inverse-distance source (3D).
    #[serde(default)]
    pub source: Option<Vec<f64>>,
    #[serde(default)]
    pub curve: Option<Curve2D>,
    #[serde(default)]
    pub curve_file: Option<PathBuf>,
    #[serde(default)]
    pub surface: Option<SurfaceSpec>,
    /// `(n, m, re, im)` entries: boundary data on the sphere, or `ψ` for
    /// the scattering study.
    #[serde(default)]
    pub harmonics: Option<Vec<(usize, i64, f64, f64)>>,
    /// Direction `[θ, φ]` for the scattering study.
    #[serde(default)]
    pub omega: Option<[f64; 2]>,
    #[serde(default)]
    pub fit_range: Option<[f64; 2]>,
}

impl StudyConfig {
    pub fn new(problem: Problem) -> Self {
        StudyConfig {
            problem,
            n: None,
            quadrature_n: None,
            methods: None,
            eps: None,
            targets: None,
            slice_count: None,
            ell: None,
            output_dir: None,
            cache_dir: None,
            source: None,
            curve: None,
            curve_file: None,
            surface: None,
            harmonics: None,
            omega: None,
            fit_range: None,
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config = Self::from_json_str(&text)?;
        // Relative curve files resolve against the config's directory.
        if let (Some(file), Some(dir)) = (&config.curve_file, path.parent()) {
            if file.is_relative() {
                config.curve_file = Some(dir.join(file));
            }
        }
        Ok(config)
    }

    pub fn eps_values(&self) -> Result<Vec<f64>> {
        self.eps.clone().unwrap_or_else(|| self.problem.default_eps()).values()
    }

    pub fn method_names(&self) -> Result<Vec<String>> {
        let methods = self.methods.clone().unwrap_or_else(|| self.problem.default_methods());
        if methods.is_empty() {
            return Err(Error::Config("method list is empty".into()));
        }
        Ok(methods)
    }

    pub fn fit_window(&self) -> Result<[f64; 2]> {
        let [lo, hi] = self.fit_range.unwrap_or_else(|| self.problem.default_fit_range());
        if !(lo > 0.0 && hi >= lo) {
            return Err(Error::Config(format!("fit range needs 0 < lo <= hi, got [{lo}, {hi}]")));
        }
        Ok([lo, hi])
    }

    fn ell(&self) -> Result<f64> {
        let ell = self.ell.unwrap_or(1.0);
        if !(ell > 0.0) || !ell.is_finite() {
            return Err(Error::Config(format!("ell must be positive, got {ell}")));
        }
        Ok(ell)
    }
}

/// One evaluation: CSV columns `target_param, eps, method, value, exact, abs_error`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub target_param: String,
    pub eps: f64,
    pub method: String,
    pub value: f64,
    pub exact: f64,
    pub abs_error: f64,
}

/// Fitted order for one `(target, method)` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub target: String,
    pub method: String,
    pub slope: f64,
    pub fit_lo: f64,
    pub fit_hi: f64,
    pub n_points: usize,
}

/// A row that could not be evaluated, e.g. because `x` left the domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub target_param: String,
    pub eps: f64,
    pub method: String,
    pub reason: String,
}

/// A resolved boundary target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetInfo {
    pub label: String,
    /// `[t]` in 2D, `[θ, φ]` in 3D.
    pub params: Vec<f64>,
    pub position: Vec<f64>,
    /// Name the target was requested by, if any.
    pub name: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorStudyResult {
    pub problem: Problem,
    pub targets: Vec<TargetInfo>,
    pub rows: Vec<ErrorRow>,
    pub fits: Vec<FitSummary>,
    pub rejections: Vec<Rejection>,
    /// Residual of the density solve.
    pub residual: f64,
}

impl ErrorStudyResult {
    pub fn rows_for<'a>(&'a self, target: &'a str, method: &'a str) -> impl Iterator<Item = &'a ErrorRow> + 'a {
        self.rows
            .iter()
            .filter(move |r| r.target_param == target && r.method == method)
    }

    pub fn fit_for(&self, target: &str, method: &str) -> Option<&FitSummary> {
        self.fits.iter().find(|f| f.target == target && f.method == method)
    }
}

/// Least-squares slope of `log₁₀(error)` against `log₁₀(ε)` over
/// `ε ∈ [lo, hi]`, skipping errors at or below [`ERROR_FLOOR`].
pub fn fit_order(eps: &[f64], errors: &[f64], lo: f64, hi: f64) -> Result<(f64, f64, f64, usize)> {
    if eps.len() != errors.len() {
        return Err(Error::InvalidInput("eps and error lists differ in length".into()));
    }
    let tol = 1e-9;
    let points: Vec<(f64, f64)> = eps
        .iter()
        .zip(errors)
        .filter(|(e, err)| {
            **e >= lo * (1.0 - tol) && **e <= hi * (1.0 + tol) && err.is_finite() && **err > ERROR_FLOOR
        })
        .map(|(e, err)| (e.log10(), err.log10()))
        .collect();
    if points.len() < MIN_FIT_POINTS {
        return Err(Error::InsufficientPoints {
            needed: MIN_FIT_POINTS,
            got: points.len(),
        });
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientPoints {
            needed: MIN_FIT_POINTS,
            got: 1,
        });
    }
    let used = || points.iter().map(|p| 10f64.powf(p.0));
    let fit_lo = used().fold(f64::INFINITY, f64::min);
    let fit_hi = used().fold(0.0, f64::max);
    Ok((sxy / sxx, fit_lo, fit_hi, points.len()))
}

/// Fits every `(target, method)` group that has enough points.
pub fn fit_rows(rows: &[ErrorRow], lo: f64, hi: f64) -> Vec<FitSummary> {
    let mut groups: Vec<((String, String), (Vec<f64>, Vec<f64>))> = Vec::new();
    for r in rows {
        let key = (r.target_param.clone(), r.method.clone());
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, (e, err))) => {
                e.push(r.eps);
                err.push(r.abs_error);
            }
            None => groups.push((key, (vec![r.eps], vec![r.abs_error]))),
        }
    }
    groups
        .into_iter()
        .filter_map(|((target, method), (e, err))| {
            fit_order(&e, &err, lo, hi).ok().map(|(slope, fit_lo, fit_hi, n_points)| FitSummary {
                target,
                method,
                slope,
                fit_lo,
                fit_hi,
                n_points,
            })
        })
        .collect()
}

fn label(x: f64) -> String {
    format!("{x}")
}

fn pair_label(theta: f64, phi: f64) -> String {
    format!("{theta}:{phi}")
}

fn curve_for(config: &StudyConfig) -> Result<Curve2D> {
    let curve = match config.problem {
        Problem::Kite2D => config.curve.clone().unwrap_or(Curve2D::Kite),
        Problem::Star2D => config.curve.clone().unwrap_or_else(Curve2D::star),
        Problem::Custom2D => match (&config.curve, &config.curve_file) {
            (Some(c), None) => c.clone(),
            (None, Some(path)) => Curve2D::from_json_file(path).map_err(|e| Error::Config(format!("curve file: {e}")))?,
            _ => return Err(Error::Config("2d-custom needs exactly one of `curve` or `curve_file`".into())),
        },
        _ => return Err(Error::Config("not a 2D problem".into())),
    };
    curve.validate().map_err(|e| Error::Config(e.to_string()))?;
    Ok(curve)
}

/// Evaluates a 2D or 3D error study.
pub fn run_error_map(config: &StudyConfig) -> Result<ErrorStudyResult> {
    match config.problem.dimension() {
        _ if config.problem == Problem::Hg => Err(Error::Config(
            "the scattering problem is run by run_hg_study".into(),
        )),
        2 => run_2d(config),
        _ => run_3d(config, None),
    }
}

fn sort_and_fit(
    problem: Problem,
    targets: Vec<TargetInfo>,
    mut keyed: Vec<((usize, usize, usize), std::result::Result<ErrorRow, Rejection>)>,
    window: [f64; 2],
    residual: f64,
) -> ErrorStudyResult {
    keyed.sort_by_key(|(k, _)| *k);
    let mut rows = Vec::new();
    let mut rejections = Vec::new();
    for (_, r) in keyed {
        match r {
            Ok(row) => rows.push(row),
            Err(rej) => rejections.push(rej),
        }
    }
    let fits = fit_rows(&rows, window[0], window[1]);
    ErrorStudyResult {
        problem,
        targets,
        rows,
        fits,
        rejections,
        residual,
    }
}

fn run_2d(config: &StudyConfig) -> Result<ErrorStudyResult> {
    let curve = curve_for(config)?;
    let n = config.n.unwrap_or(bie2d::DEFAULT_N);
    if n < 16 || n % 2 != 0 {
        return Err(Error::Config(format!("2D resolution must be even and >= 16, got {n}")));
    }
    let methods: Vec<Method2D> = config
        .method_names()?
        .iter()
        .map(|m| m.parse())
        .collect::<Result<_>>()?;
    let eps = config.eps_values()?;
    let ell = config.ell()?;
    let window = config.fit_window()?;
    let x0: Vec2 = match config.source.as_deref() {
        None => bie2d::DEFAULT_SOURCE,
        Some(&[a, b]) => [a, b],
        Some(other) => return Err(Error::Config(format!("2D source needs two coordinates, got {other:?}"))),
    };
    if curve.signed_distance(x0) <= 1e-12 {
        return Err(Error::Config(format!("source {x0:?} is not outside the curve")));
    }

    let node_of = |t: f64| -> usize {
        let k = ((t + PI) * n as f64 / (2.0 * PI)).round() as i64;
        k.rem_euclid(n as i64) as usize
    };
    let indices: Vec<(usize, Option<String>)> = match config.targets.clone() {
        None => vec![(node_of(Y_A_2D), Some("y_A".into())), (node_of(Y_B_2D), Some("y_B".into()))],
        Some(Targets::Keyword(k)) if k == "all-nodes" => (0..n).map(|k| (k, None)).collect(),
        Some(Targets::Keyword(k)) => return Err(Error::Config(format!("unknown 2D target keyword '{k}'"))),
        Some(Targets::List(list)) => list
            .into_iter()
            .map(|e| match e {
                TargetEntry::Param(t) if t.is_finite() => Ok((node_of(t), None)),
                TargetEntry::Named(name) => match name.as_str() {
                    "y_A" => Ok((node_of(Y_A_2D), Some(name))),
                    "y_B" => Ok((node_of(Y_B_2D), Some(name))),
                    _ => Err(Error::Config(format!("unknown target name '{name}'"))),
                },
                other => Err(Error::Config(format!("invalid 2D target {other:?}"))),
            })
            .collect::<Result<_>>()?,
    };
    if indices.is_empty() {
        return Err(Error::Config("target list is empty".into()));
    }

    let density = bie2d::solve_log_source(&curve, x0, n)?;
    let exact = LogSource::new(x0);
    let targets: Vec<TargetInfo> = indices
        .iter()
        .map(|(k, name)| {
            let p = &density.nodes[*k];
            TargetInfo {
                label: label(p.t),
                params: vec![p.t],
                position: p.position.to_vec(),
                name: name.clone(),
            }
        })
        .collect();

    let keyed: Vec<_> = indices
        .par_iter()
        .enumerate()
        .map(|(ti, (k, _))| -> Result<Vec<_>> {
            let tlabel = &targets[ti].label;
            let terms = AsymptoticTerms2D::new(&density, *k, ell)?;
            let mut out = Vec::new();
            for (ei, &e) in eps.iter().enumerate() {
                let request = CloseEvalRequest2D::new(&density, *k, e, ell);
                for (mi, m) in methods.iter().enumerate() {
                    let key = (ti, ei, mi);
                    let req = match &request {
                        Ok(r) => r,
                        Err(err) => {
                            out.push((
                                key,
                                Err(Rejection {
                                    target_param: tlabel.clone(),
                                    eps: e,
                                    method: m.name().into(),
                                    reason: err.to_string(),
                                }),
                            ));
                            continue;
                        }
                    };
                    let value = match m {
                        Method2D::AsymEps2 => terms.eps2(e),
                        Method2D::AsymEps3 => terms.eps3(e),
                        _ => m.evaluate(req)?,
                    };
                    let u = exact.value(req.point());
                    out.push((
                        key,
                        Ok(ErrorRow {
                            target_param: tlabel.clone(),
                            eps: e,
                            method: m.name().into(),
                            value,
                            exact: u,
                            abs_error: (value - u).abs(),
                        }),
                    ));
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();

    Ok(sort_and_fit(config.problem, targets, keyed, window, density.residual))
}

/// The surface, data and resolution of a 3D study.
#[derive(Debug, Clone)]
pub struct Setup3D {
    pub spec: SurfaceSpec,
    pub surface: Surface3D,
    pub data: BoundaryData3D,
    pub n: usize,
    pub quad_n: usize,
}

impl Setup3D {
    pub fn from_config(config: &StudyConfig) -> Result<Self> {
        let spec = match (config.problem, &config.surface) {
            (Problem::Mushroom3D, None) => SurfaceSpec::Mushroom,
            (Problem::Sphere3D, None) => SurfaceSpec::UnitSphere,
            (Problem::Mushroom3D, Some(s)) => s.clone(),
            (Problem::Sphere3D, Some(_)) => {
                return Err(Error::Config("3d-sphere does not take a surface override".into()))
            }
            _ => return Err(Error::Config("not a 3D boundary problem".into())),
        };
        let surface = Surface3D::from_spec(&spec).map_err(|e| Error::Config(e.to_string()))?;
        let data = match (config.problem, &config.source, &config.harmonics) {
            (_, Some(_), Some(_)) => {
                return Err(Error::Config("give either `source` or `harmonics`, not both".into()))
            }
            (_, Some(src), None) => match src.as_slice() {
                &[a, b, c] => BoundaryData3D::inverse_distance([a, b, c]),
                other => return Err(Error::Config(format!("3D source needs three coordinates, got {other:?}"))),
            },
            (_, None, Some(h)) => BoundaryData3D::Harmonics { coefficients: h.clone() },
            (Problem::Sphere3D, None, None) => BoundaryData3D::harmonic(2, 0),
            (_, None, None) => BoundaryData3D::inverse_distance(bie3d::DEFAULT_SOURCE),
        };
        data.validate(&surface).map_err(|e| Error::Config(e.to_string()))?;
        if data.exact_interior(&surface, [0.0; 3]).is_none() {
            return Err(Error::Config(
                "harmonic boundary data has a closed-form solution only on 3d-sphere".into(),
            ));
        }
        let n = config.n.unwrap_or(bie3d::DEFAULT_N);
        let quad_n = config.quadrature_n.unwrap_or(n);
        if n == 0 || n > 64 || quad_n < 2 {
            return Err(Error::Config(format!("3D sizes out of range (n = {n}, quadrature_n = {quad_n})")));
        }
        Ok(Setup3D {
            spec,
            surface,
            data,
            n,
            quad_n,
        })
    }

    pub fn cache_file(&self) -> String {
        let base = bie3d::cache_key(&self.spec, self.n, &self.data);
        if self.quad_n == self.n {
            base
        } else {
            base.replace(".json", &format!("-Q{}.json", self.quad_n))
        }
    }

    /// Loads the density from `cache_dir` if present, otherwise solves and
    /// stores it there.
    pub fn density(&self, cache_dir: Option<&Path>) -> Result<Density3D> {
        if let Some(dir) = cache_dir {
            let path = dir.join(self.cache_file());
            if path.exists() {
                return Density3D::load(&self.surface, &path, self.data.clone());
            }
            let d = bie3d::solve_density3d_with(&self.surface, &self.data, self.n, self.quad_n)?;
            std::fs::create_dir_all(dir)?;
            d.save(&path)?;
            return Ok(d);
        }
        bie3d::solve_density3d_with(&self.surface, &self.data, self.n, self.quad_n)
    }
}

fn resolve_3d_targets(config: &StudyConfig, surface: &Surface3D) -> Result<Vec<TargetInfo>> {
    let count = config.slice_count.unwrap_or(32);
    let pair = |theta: f64, phi: f64, label: String, name: Option<String>| TargetInfo {
        label,
        params: vec![theta, phi],
        position: surface.position(theta, phi).to_vec(),
        name,
    };
    let locate = |x: Vec3, name: Option<String>| {
        let (th, ph) = surface.nearest_parameters(x);
        pair(th, ph, pair_label(th, ph), name)
    };
    let named = |name: &str| -> Result<TargetInfo> {
        match name {
            "y_A" => Ok(locate(Y_A_3D, Some(name.into()))),
            "y_B" => Ok(locate(Y_B_3D, Some(name.into()))),
            _ => Err(Error::Config(format!("unknown target name '{name}'"))),
        }
    };
    if count == 0 {
        return Err(Error::Config("slice_count must be positive".into()));
    }
    let targets = match config.targets.clone() {
        None if config.problem == Problem::Mushroom3D => vec![named("y_A")?, named("y_B")?],
        None => vec![pair(1.0, 0.4, pair_label(1.0, 0.4), None)],
        Some(Targets::Keyword(k)) if k == "x1x3-slice" => (0..count)
            .map(|j| {
                // Extended polar angle s₀ ∈ [0, 2π) around the x₁x₃ circle.
                let s0 = 2.0 * PI * j as f64 / count as f64;
                let (th, ph) = if s0 <= PI { (s0, 0.0) } else { (2.0 * PI - s0, PI) };
                pair(th, ph, label(s0), None)
            })
            .collect(),
        Some(Targets::Keyword(k)) if k == "x1x2-slice" => (0..count)
            .map(|j| {
                let t0 = -PI + 2.0 * PI * j as f64 / count as f64;
                pair(PI / 2.0, t0, label(t0), None)
            })
            .collect(),
        Some(Targets::Keyword(k)) => return Err(Error::Config(format!("unknown 3D target keyword '{k}'"))),
        Some(Targets::List(list)) => list
            .into_iter()
            .map(|e| match e {
                TargetEntry::Pair([th, ph]) if th.is_finite() && ph.is_finite() => {
                    Ok(pair(th, ph, pair_label(th, ph), None))
                }
                TargetEntry::Named(name) => named(&name),
                TargetEntry::Point { point } => match point.as_slice() {
                    &[a, b, c] => Ok(locate([a, b, c], None)),
                    _ => Err(Error::Config(format!("3D target point needs three coordinates, got {point:?}"))),
                },
                other => Err(Error::Config(format!("invalid 3D target {other:?}"))),
            })
            .collect::<Result<_>>()?,
    };
    if targets.is_empty() {
        return Err(Error::Config("target list is empty".into()));
    }
    Ok(targets)
}

/// Runs a 3D study; a supplied density skips the solve and the cache.
pub fn run_3d(config: &StudyConfig, density: Option<&Density3D>) -> Result<ErrorStudyResult> {
    let setup = Setup3D::from_config(config)?;
    let methods: Vec<Method3D> = config
        .method_names()?
        .iter()
        .map(|m| m.parse())
        .collect::<Result<_>>()?;
    let eps = config.eps_values()?;
    let ell = config.ell()?;
    let window = config.fit_window()?;
    let targets = resolve_3d_targets(config, &setup.surface)?;
    let owned;
    let density = match density {
        Some(d) => d,
        None => {
            owned = setup.density(config.cache_dir.as_deref())?;
            &owned
        }
    };

    let keyed: Vec<_> = targets
        .par_iter()
        .enumerate()
        .map(|(ti, target)| -> Result<Vec<_>> {
            let (theta, phi) = (target.params[0], target.params[1]);
            let prep = PreparedTarget3D::new(density, theta, phi, setup.quad_n, ell)?;
            let mut out = Vec::new();
            for (ei, &e) in eps.iter().enumerate() {
                let x = prep.point(e);
                let inside = setup.surface.contains(x);
                for (mi, m) in methods.iter().enumerate() {
                    let key = (ti, ei, mi);
                    if !inside {
                        out.push((
                            key,
                            Err(Rejection {
                                target_param: target.label.clone(),
                                eps: e,
                                method: m.name().into(),
                                reason: Error::PointOutside(x.to_vec()).to_string(),
                            }),
                        ));
                        continue;
                    }
                    let value = m.evaluate_prepared(&prep, e);
                    let u = setup
                        .data
                        .exact_interior(&setup.surface, x)
                        .expect("checked when the setup was built");
                    out.push((
                        key,
                        Ok(ErrorRow {
                            target_param: target.label.clone(),
                            eps: e,
                            method: m.name().into(),
                            value,
                            exact: u,
                            abs_error: (value - u).abs(),
                        }),
                    ));
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();

    Ok(sort_and_fit(config.problem, targets, keyed, window, density.residual))
}

/// Residuals of the asymptotic scattering operator against direct
/// quadrature, one row per `ε`.
#[derive(Debug, Clone, PartialEq)]
pub struct HgStudyResult {
    pub rows: Vec<ErrorRow>,
    pub fit: Option<FitSummary>,
}

pub fn run_hg_study(config: &StudyConfig) -> Result<HgStudyResult> {
    if config.problem != Problem::Hg {
        return Err(Error::Config("run_hg_study needs problem \"hg\"".into()));
    }
    let entries = config.harmonics.clone().unwrap_or_else(|| vec![(2, 0, 1.0, 0.0)]);
    if entries.is_empty() {
        return Err(Error::Config("hg study needs at least one harmonic".into()));
    }
    let psi = IntensityField::from_entries(&entries).map_err(|e| Error::Config(e.to_string()))?;
    let names = config.method_names()?;
    if names.iter().any(|m| m != "asym") {
        return Err(Error::Config(format!("hg study supports only the 'asym' method, got {names:?}")));
    }
    let [theta, phi] = config.omega.unwrap_or([0.9, -0.4]);
    let eps = config.eps_values()?;
    if let Some(bad) = eps.iter().find(|e| **e >= 0.5) {
        return Err(Error::Config(format!("hg study needs eps < 0.5, got {bad}")));
    }
    let window = config.fit_window()?;
    let target = pair_label(theta, phi);
    let rows: Vec<ErrorRow> = eps
        .par_iter()
        .map(|&e| -> Result<ErrorRow> {
            let direct = apply_l_direct(&psi, theta, phi, 1.0 - e)?;
            let asym = apply_l_asymptotic(&psi, theta, phi, e);
            Ok(ErrorRow {
                target_param: target.clone(),
                eps: e,
                method: "asym".into(),
                value: asym,
                exact: direct,
                abs_error: (asym - direct).abs(),
            })
        })
        .collect::<Result<_>>()?;
    let fit = fit_rows(&rows, window[0], window[1]).into_iter().next();
    Ok(HgStudyResult { rows, fit })
}

pub fn write_csv(rows: &[ErrorRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<ErrorRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

fn write_rejections(rejections: &[Rejection], path: &Path) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(["target_param", "eps", "method", "reason"])?;
    for r in rejections {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary(fits: &[FitSummary], path: &Path) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(fits)? + "\n")?;
    Ok(())
}

/// A gnuplot script that reads `results.csv` from its own directory.
pub fn gnuplot_script(methods: &[String], numeric_targets: bool, title: &str) -> String {
    let list = methods.join(" ");
    let mut s = String::new();
    let _ = writeln!(s, "# {title}");
    let _ = writeln!(s, "set datafile separator \",\"");
    let _ = writeln!(s, "set terminal pngcairo size 900,650");
    let _ = writeln!(s, "methods = \"{list}\"");
    let _ = writeln!(s);
    let _ = writeln!(s, "set output \"order.png\"");
    let _ = writeln!(s, "set logscale xy");
    let _ = writeln!(s, "set format xy \"10^{{%L}}\"");
    let _ = writeln!(s, "set xlabel \"epsilon\"");
    let _ = writeln!(s, "set ylabel \"absolute error\"");
    let _ = writeln!(s, "set key outside right");
    let _ = writeln!(
        s,
        "plot for [m in methods] \"results.csv\" skip 1 using 2:(strcol(3) eq m && $6 > 0 ? $6 : 1/0) with points title m"
    );
    if numeric_targets {
        let _ = writeln!(s);
        let _ = writeln!(s, "unset logscale x");
        let _ = writeln!(s, "set format x \"%g\"");
        let _ = writeln!(s, "set logscale y");
        let _ = writeln!(s, "set xlabel \"boundary parameter\"");
        let _ = writeln!(s, "set cblabel \"log10 error\"");
        let _ = writeln!(s, "do for [m in methods] {{");
        let _ = writeln!(s, "    set output sprintf(\"errormap-%s.png\", m)");
        let _ = writeln!(s, "    set title m");
        let _ = writeln!(
            s,
            "    plot \"results.csv\" skip 1 using 1:2:(strcol(3) eq m && $6 > 0 ? log10($6) : 1/0) with points pt 5 ps 0.6 palette notitle"
        );
        let _ = writeln!(s, "}}");
    }
    s
}

/// Writes `results.csv`, `summary.json`, `rejections.csv`, `targets.json`
/// and `plot.gp` into `dir`.
pub fn write_outputs(result: &ErrorStudyResult, methods: &[String], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_csv(&result.rows, &dir.join("results.csv"))?;
    write_summary(&result.fits, &dir.join("summary.json"))?;
    write_rejections(&result.rejections, &dir.join("rejections.csv"))?;
    std::fs::write(
        dir.join("targets.json"),
        serde_json::to_string_pretty(&result.targets)? + "\n",
    )?;
    let numeric = result.targets.iter().all(|t| t.label.parse::<f64>().is_ok());
    let title = format!("{:?} error study", result.problem);
    std::fs::write(dir.join("plot.gp"), gnuplot_script(methods, numeric, &title))?;
    Ok(())
}

pub fn write_hg_outputs(result: &HgStudyResult, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_csv(&result.rows, &dir.join("results.csv"))?;
    let fits: Vec<FitSummary> = result.fit.iter().cloned().collect();
    write_summary(&fits, &dir.join("summary.json"))?;
    std::fs::write(
        dir.join("plot.gp"),
        gnuplot_script(&["asym".to_string()], false, "scattering residual"),
    )?;
    Ok(())
}

/// Process exit code for an error: 2 for configuration problems, 3 for
/// numerical failures.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_)
        | Error::Json(_)
        | Error::Csv(_)
        | Error::Io(_)
        | Error::InvalidInput(_)
        | Error::InvalidHarmonic { .. }
        | Error::SourceNotExterior(_) => 2,
        Error::DegenerateCurve { .. }
        | Error::DegenerateSurface { .. }
        | Error::Coincident { .. }
        | Error::PointOutside(_)
        | Error::SingularMatrix
        | Error::InsufficientPoints { .. } => 3,
    }
}

/// Groups fitted slopes by method, for quick reporting.
pub fn slopes_by_method(fits: &[FitSummary]) -> BTreeMap<String, Vec<f64>> {
    let mut out: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for f in fits {
        out.entry(f.method.clone()).or_default().push(f.slope);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn synthetic_slope() {
        let eps: Vec<f64> = (0..9).map(|k| 10f64.powf(-2.0 - 0.5 * k as f64)).collect();
        let err: Vec<f64> = eps.iter().map(|e| 3.7 * e * e).collect();
        let (slope, lo, hi, n) = fit_order(&eps, &err, 1e-6, 1e-2).unwrap();
        assert_abs_diff_eq!(slope, 2.0, epsilon = 1e-10);
        assert_eq!(n, 9);
        assert_abs_diff_eq!(lo, 1e-6, epsilon = 1e-18);
        assert_abs_diff_eq!(hi, 1e-2, epsilon = 1e-15);
    }

    #[test]
    fn floor_and_window_filtering() {
        let eps = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7];
        let err = [1e-1, 1e-6, 1e-9, 1e-12, 1e-15, 0.0, 1e-3];
        assert!(matches!(
            fit_order(&eps, &err, 1e-6, 1e-2),
            Err(Error::InsufficientPoints { needed: 4, got: 3 })
        ));
        let err = [1e-1, 1e-6, 1e-9, 1e-12, 1e-14 * 1.5, 0.0, 1e-3];
        let (slope, _, _, n) = fit_order(&eps, &err, 1e-6, 1e-2).unwrap();
        assert_eq!(n, 4);
        assert!(slope > 2.0);
    }

    #[test]
    fn eps_range_parsing() {
        let spec = EpsSpec::parse_range("1e-4:1e-1:2").unwrap();
        let v = spec.values().unwrap();
        assert_eq!(v.len(), 7);
        assert_eq!(v[0], 0.1);
        assert_eq!(v[2], 0.01);
        assert_eq!(v[6], 1e-4);
        assert!(v.windows(2).all(|w| w[0] > w[1]));
        assert!(EpsSpec::parse_range("1e-4:1e-1").is_err());
        assert!(EpsSpec::parse_range("0:1e-1:2").unwrap().values().is_err());
        let list = EpsSpec::List(vec![1e-3, 1e-1, 1e-3]).values().unwrap();
        assert_eq!(list, vec![1e-1, 1e-3]);
    }

    #[test]
    fn config_validation() {
        let mut c = StudyConfig::new(Problem::Kite2D);
        c.methods = Some(vec![]);
        assert!(matches!(run_error_map(&c), Err(Error::Config(_))));
        c.methods = Some(vec!["asym4".into()]);
        assert!(matches!(run_error_map(&c), Err(Error::Config(_))));
        let mut c = StudyConfig::new(Problem::Mushroom3D);
        c.methods = Some(vec!["asym3".into()]);
        assert!(matches!(run_error_map(&c), Err(Error::Config(_))));
        assert!(StudyConfig::from_json_str(r#"{"problem": "2d-kite", "nn": 3}"#).is_err());
        assert!(StudyConfig::from_json_str(r#"{"problem": "2d-moon"}"#).is_err());
        let mut c = StudyConfig::new(Problem::Kite2D);
        c.source = Some(vec![0.0, 0.0]);
        assert!(matches!(run_error_map(&c), Err(Error::Config(_))));
    }

    #[test]
    fn config_json_shapes() {
        let c = StudyConfig::from_json_str(
            r#"{"problem": "2d-star", "n": 64, "methods": ["sub"],
                "eps": {"lo": 1e-4, "hi": 1e-2, "per_decade": 1},
                "targets": ["y_A", -0.5], "output_dir": "out"}"#,
        )
        .unwrap();
        assert_eq!(c.problem, Problem::Star2D);
        assert_eq!(c.eps_values().unwrap(), vec![1e-2, 1e-3, 1e-4]);
        assert_eq!(
            c.targets,
            Some(Targets::List(vec![TargetEntry::Named("y_A".into()), TargetEntry::Param(-0.5)]))
        );
        let c = StudyConfig::from_json_str(
            r#"{"problem": "3d-mushroom", "targets": [[1.0, 0.5], {"point": [1.78, 0.0, 0.84]}]}"#,
        )
        .unwrap();
        assert!(matches!(&c.targets, Some(Targets::List(l)) if matches!(l[0], TargetEntry::Pair(_))));
    }

    #[test]
    fn kite_study_rows_and_fits() {
        let mut c = StudyConfig::new(Problem::Kite2D);
        c.eps = Some(EpsSpec::Range {
            lo: 1e-6,
            hi: 1e-2,
            per_decade: 2,
        });
        let r = run_error_map(&c).unwrap();
        assert_eq!(r.rows.len(), 2 * 9 * 4);
        assert!(r.rejections.is_empty());
        let ya = &r.targets[0].label;
        let slope = |m: &str| r.fit_for(ya, m).unwrap().slope;
        assert!((slope("sub") - 1.0).abs() < 0.25);
        assert!((slope("asym2") - 2.0).abs() < 0.3);
        assert!((slope("asym3") - 3.0).abs() < 0.5);
        assert!(r.rows.iter().all(|row| row.abs_error >= 0.0));
    }

    #[test]
    fn rejections_are_recorded() {
        let mut c = StudyConfig::new(Problem::Kite2D);
        c.n = Some(64);
        c.eps = Some(EpsSpec::List(vec![5.0, 1e-3]));
        c.targets = Some(Targets::List(vec![TargetEntry::Param(0.0)]));
        let r = run_error_map(&c).unwrap();
        assert_eq!(r.rejections.len(), 4);
        assert_eq!(r.rows.len(), 4);
    }

    #[test]
    fn sphere_study() {
        let mut c = StudyConfig::new(Problem::Sphere3D);
        c.n = Some(4);
        c.quadrature_n = Some(24);
        let r = run_error_map(&c).unwrap();
        let t = &r.targets[0].label;
        let fit = r.fit_for(t, "asym2").unwrap();
        assert!((fit.slope - 2.0).abs() < 0.4);
        let far = r.rows_for(t, "num").find(|row| row.eps == 0.1).unwrap();
        assert!(far.abs_error < 1e-6);
    }

    #[test]
    fn hg_study() {
        let mut c = StudyConfig::new(Problem::Hg);
        c.harmonics = Some(vec![(3, 1, 1.0, 0.0)]);
        let r = run_hg_study(&c).unwrap();
        assert!((r.fit.unwrap().slope - 3.0).abs() < 0.3);
        c.harmonics = Some(vec![(0, 0, 2.0, 0.0)]);
        let r = run_hg_study(&c).unwrap();
        assert!(r.rows.iter().all(|row| row.abs_error == 0.0));
        assert!(r.fit.is_none());
    }

    #[test]
    fn outputs_are_deterministic() {
        let mut c = StudyConfig::new(Problem::Kite2D);
        c.n = Some(64);
        c.targets = Some(Targets::Keyword("all-nodes".into()));
        c.eps = Some(EpsSpec::List(vec![1e-2, 1e-4]));
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a"), dir.path().join("b"));
        let methods = c.method_names().unwrap();
        write_outputs(&run_error_map(&c).unwrap(), &methods, &a).unwrap();
        write_outputs(&run_error_map(&c).unwrap(), &methods, &b).unwrap();
        for f in ["results.csv", "summary.json", "plot.gp", "rejections.csv", "targets.json"] {
            assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
        }
        let rows = read_csv(&a.join("results.csv")).unwrap();
        assert_eq!(rows.len(), 64 * 2 * 4);
        let header = std::fs::read_to_string(a.join("results.csv")).unwrap();
        assert!(header.starts_with("target_param,eps,method,value,exact,abs_error\n"));
        assert!(std::fs::read_to_string(a.join("plot.gp")).unwrap().contains("errormap"));
    }

    #[test]
    fn density_cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = StudyConfig::new(Problem::Mushroom3D);
        c.n = Some(6);
        c.cache_dir = Some(dir.path().to_path_buf());
        c.eps = Some(EpsSpec::List(vec![1e-2]));
        let first = run_error_map(&c).unwrap();
        let files: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
        assert_eq!(files.len(), 1);
        let second = run_error_map(&c).unwrap();
        assert_eq!(first.rows, second.rows);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(exit_code(&Error::SingularMatrix), 3);
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn eps_ranges_are_sorted_and_bounded(lo_exp in -9i32..-1, span in 0i32..5, per_decade in 1usize..6) {
                let lo = 10f64.powi(lo_exp);
                let hi = 10f64.powi(lo_exp + span);
                let v = EpsSpec::Range { lo, hi, per_decade }.values().unwrap();
                prop_assert_eq!(v.len(), span as usize * per_decade + 1);
                prop_assert_eq!(v[0], hi);
                prop_assert!(v.windows(2).all(|w| w[1] < w[0]));
                prop_assert!(v.iter().all(|&e| e >= lo * (1.0 - 1e-9)));
            }

            #[test]
            fn csv_round_trip(values in prop::collection::vec((-1e3f64..1e3, 1e-12f64..1.0, 0usize..4), 1..20)) {
                let names = ["ptr", "sub", "asym2", "asym3"];
                let rows: Vec<ErrorRow> = values
                    .iter()
                    .map(|&(v, eps, m)| ErrorRow {
                        target_param: format!("{v}"),
                        eps,
                        method: names[m].into(),
                        value: v,
                        exact: v * 0.5,
                        abs_error: (v * 0.5).abs(),
                    })
                    .collect();
                let dir = tempfile::tempdir().unwrap();
                let path = dir.path().join("rows.csv");
                write_csv(&rows, &path).unwrap();
                prop_assert_eq!(read_csv(&path).unwrap(), rows);
            }
        }
    }
}
