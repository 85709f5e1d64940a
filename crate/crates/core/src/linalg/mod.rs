pub mod banded;
pub mod dense;
pub mod sparse;

pub use banded::PatternSolver;
pub use dense::{c, CMat, CVec};
pub use sparse::SparseMat;
