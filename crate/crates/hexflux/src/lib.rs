//! # hexflux
//!
//! Entropy-conservative and entropy-stable discretization of the compressible
//! Euler and Navier-Stokes equations on curvilinear hexahedral meshes with
//! h/p-nonconforming interfaces, built from diagonal-norm summation-by-parts
//! (SBP) operators on Legendre-Gauss-Lobatto nodes and simultaneous
//! approximation terms (SATs).
//!
//! Module map, roughly bottom-up:
//!
//! - [`sbp`] — 1D SBP operator construction (nodes, weights, `D`, `Q`) and
//!   Lagrange interpolation utilities.
//! - [`interp`] — norm-adjoint face interpolation pairs between nonconforming
//!   traces and their tensor-product application kernels.
//! - [`mesh`] — octree-refined, 2:1-balanced hexahedral meshes with
//!   per-element degrees, curved watertight interface geometry, and periodic
//!   or bounded box topology.
//! - [`geom`] — volume/surface metric terms, the discrete geometric
//!   conservation law (GCL), and the constrained metric optimization that
//!   makes free-stream preservation exact.
//! - [`phys`] — compressible-flow state algebra: entropy variables, the
//!   entropy-conservative two-point flux, upwind dissipation operators, and
//!   viscous fluxes in entropy-gradient form.
//! - [`problems`] — verification problems with independently validated exact
//!   solutions (isentropic vortex, viscous shock) plus the Taylor-Green
//!   vortex.
//! - [`rhs`] — the semidiscrete scheme: flux-differencing volume terms,
//!   nonconforming interface and boundary SATs, and viscous terms.
//! - [`timeint`] — embedded adaptive Runge-Kutta integration with optional
//!   entropy relaxation.
//! - [`config`], [`report`], [`experiments`] — JSON run configuration, CSV
//!   reporting, and the experiment drivers behind the CLI.

pub mod config;
pub mod error;
pub mod experiments;
pub mod geom;
pub mod interp;
pub mod mesh;
pub mod phys;
pub mod problems;
pub mod report;
pub mod rhs;
pub mod sbp;
pub mod timeint;
