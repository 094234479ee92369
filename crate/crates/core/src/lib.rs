//! Commuting C0 approximations of almost-commuting smooth functions on the
//! flat n-torus, built from an explicit measure-collapsing self-map of R^n.
//!
//! The crate is organized around the stages of the construction:
//! grid fields and the n-ary volume bracket ([`bracket`]), the evaluation map
//! and its voxelized image ([`evalmap`]), the measure-collapsing map
//! ([`collapse`]), and the end-to-end pipeline with certified reports
//! ([`pipeline`]). Binary file formats live in [`io`].

pub mod bracket;
pub mod collapse;
pub mod domain;
pub mod error;
pub mod evalmap;
pub mod expr;
pub mod io;
pub mod pipeline;

pub use bracket::BracketReport;
pub use domain::{GridField, TorusDomain};
pub use error::{Error, Result};
pub use evalmap::{EvaluationSample, MultiplicityGrid, VoxelSet};
