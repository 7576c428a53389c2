//! Joint optimization of fidelity and commensurability (JOFC) for matched
//! dissimilarity data observed under two conditions.
//!
//! Two dissimilarity matrices over the same `n` objects are stacked into an
//! omnibus matrix and embedded jointly by weighted raw-stress MDS. The
//! tradeoff `w` weights commensurability (matched pairs embed together)
//! against fidelity (each condition keeps its own geometry). New test pairs
//! are embedded out of sample and their distance `tau` tests whether they
//! are the same object.

pub mod baseline;
pub mod error;
pub mod inference;
pub mod io;
pub mod matrix;
pub mod omnibus;
pub mod oos;
pub mod pipeline;
pub mod simgauss;
pub mod solver;

pub use error::{Error, Result};
pub use matrix::{Configuration, DissimilarityMatrix, WeightMatrix};
pub use omnibus::{build_omnibus, ImputationPolicy, OmnibusOptions, OmnibusProblem};
pub use solver::{smacof, smacof_multistart, Init, SolveResult, SolverSettings};
