//! Simulation and analysis of quasilinear impulsive systems driven by
//! piecewise-constant forcing sampled from a chaotic scalar orbit.
//!
//! The library covers the full pipeline:
//!
//! - [`matops`]: small dense real-matrix kernels (exp, principal log,
//!   eigenvalues, spectral norm, inverse) with pinned tolerances,
//! - [`schedule`]: periodic impulse-moment schedules and block indexing,
//! - [`expr`]: the scalar expression grammar used to describe nonlinearities,
//! - [`signals`]: logistic orbits, lifted forcing sequences, and the
//!   shift/separation witness search,
//! - [`system`]: the system description, hypothesis checks, and the constants
//!   derived from them,
//! - [`integrate`]: piecewise RK4 integration with exact jump application and
//!   the backward-truncated bounded solution,
//! - [`diagnostics`]: shift-convergence and separation reports over a computed
//!   trajectory,
//! - [`config`], [`output`], [`cli`]: run configuration, CSV/SVG emission, and
//!   the command-line front end.

pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod expr;
pub mod integrate;
pub mod matops;
pub mod output;
pub mod schedule;
pub mod signals;
pub mod system;
