//! Lattice laboratory for SU(2)/SL(2,C) gauge fields on flat periodic grids:
//! discrete exterior calculus, the flatness-defect functional and its
//! Bochner-Weitzenboeck bookkeeping, heat and Chern-Simons flows, Coulomb
//! gauge fixing, a constant-coefficient first-order elliptic operator with its
//! massive Green's function, Almgren frequency diagnostics, and exact
//! Z/2-harmonic one-form models with their measured foliations.

pub mod algebra;
pub mod error;
pub mod flows;
pub mod gauge;
pub mod grid;
pub mod sample;

pub use error::{Error, Result};
