//! Close evaluation of Laplace double-layer potentials.
//!
//! The interior Dirichlet problem is solved by a double-layer potential in
//! two dimensions (Nyström, periodic trapezoid rule) and three dimensions
//! (Galerkin in spherical harmonics). Near the boundary the potential is
//! evaluated either by quadrature baselines or by asymptotic approximations
//! of the form `u(y* − εℓν*) ≈ f(y*) + εU₁ + ε²U₂`. The crate also carries
//! the Henyey–Greenstein scattering operator and its forward-peaked
//! asymptotics, plus an error-study harness.

pub mod error;
pub mod geometry2d;
pub mod geometry3d;
pub mod spectral;
pub mod bie2d;
pub mod closeeval2d;
pub mod bie3d;
pub mod closeeval3d;
pub mod hgscatter;
pub mod harness;

pub use error::{Error, Result};
