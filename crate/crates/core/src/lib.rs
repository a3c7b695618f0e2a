//! Chain-complex calculus for families of gapped lattice systems.
//!
//! The crate implements a graded calculus over finite lattice windows:
//! observables with controlled supports, skew-adjoint chains with a
//! differential and graded bracket, contracting homotopies, and the
//! spectral machinery (ground states, parallel transport, locality-aware
//! solves) needed to extract quantized transport invariants of smooth
//! families of gapped Hamiltonians: Berry-type 2- and 3-forms, pump
//! invariants in one and two dimensions, Hall response, and the integer
//! refinements obtained from patchwise trivializations.
//!
//! Layout:
//! - [`lattice`]: finite windows, regions, bricks, metric.
//! - [`observable`]: dense-on-support operators with low-rank global tails.
//! - [`chain`]: graded chains, differential, bracket, homotopies, pairings.
//! - [`brick`]: brick decompositions and locality seminorms.
//! - [`spectral`]: ground data, transport generators, state-preserving solves.
//! - [`lga`]: locally generated automorphisms as integrated generator paths.
//! - [`mesh`]: simplicial parameter meshes, cochain calculus, good covers.
//! - [`descent`]: Maurer-Cartan towers (plain and charge-equivariant) and
//!   the invariant forms extracted from them.
//! - [`cech`]: patchwise trivializations, cocycles, and integer extraction.
//! - [`flux`]: flux-inserted families and the excess-curvature comparison.
//! - [`families`]: the model catalog with independent oracles.
//! - [`config`] / [`runner`]: run configuration and orchestration.

pub mod brick;
pub mod cech;
pub mod chain;
pub mod config;
mod dense;
pub mod descent;
pub mod error;
pub mod families;
pub mod flux;
pub mod lattice;
pub mod lga;
pub mod mesh;
pub mod observable;
pub mod runner;
pub mod spectral;

pub use error::{CoreError, Result};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;

/// Dense complex matrix.
pub type CMatrix = nalgebra::DMatrix<C64>;

/// Dense complex vector.
pub type CVector = nalgebra::DVector<C64>;
