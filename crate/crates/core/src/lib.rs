//! Spectral-Galerkin simulation of nonlinear wave equations on the torus
//! `T^d` (`d = 2, 3`) driven by divergence-free transport noise.
//!
//! Fields are truncated Fourier series over the Euclidean ball `|j| <= n`
//! with `e_j(x) = e^{2πi j·x}`. The noise is a finite family of real
//! cosine/sine channels `σ_ch(x)` built from an amplitude map `θ_k`; it can
//! act on the displacement (`Model::Swe1`) or on the velocity with its Itô
//! Laplacian (`Model::Swe2`). The [`experiments`] module runs the ensemble
//! studies: truncation convergence, the vanishing-noise limit towards the
//! plain wave equation, and the limit towards the damped wave equation with
//! a fitted rate.

pub mod brownian;
pub mod config;
pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod noise;
pub mod nonlinearity;
pub mod spectral;
pub mod stats;
pub mod verify;

pub use brownian::{path_seed, BrownianDriver};
pub use dynamics::{GalerkinState, Integrator, Model, ModelSpec, Scheme, Trajectory};
pub use error::{Error, Result};
pub use noise::{NoiseBasis, NoiseSpec, TransportOperator};
pub use nonlinearity::Nonlinearity;
pub use spectral::{Lattice, SpectralField};
