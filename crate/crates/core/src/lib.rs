//! Exact finite-level Berezin-Toeplitz quantization over projective models.
//!
//! The crate works levelwise: every object lives on a graded slice
//! `GH_m` (degree-`m` polynomials modulo a homogeneous ideal, with the
//! symmetric Fock inner product), possibly tensored with `C^N`.

pub mod balance;
pub mod bundles;
pub mod cowen_douglas;
pub mod error;
pub mod fit;
pub mod linalg;
pub mod poly;
pub mod quotient;
pub mod report;
pub mod shifts;
pub mod space;
pub mod stability;
pub mod symbols;
pub mod szego;

pub use error::{Error, Result};
pub use space::{BoundaryPoint, FockLevel, Preset, SpaceModel};
