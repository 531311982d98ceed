//! Dense `f64` tensors, reverse-mode differentiation, Adam and a
//! finite-difference gradient checker.

mod adam;
mod gradcheck;
mod graph;
mod params;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use gradcheck::{finite_diff_check, GradCheckReport, REL_ERROR_FLOOR};
pub use graph::{Gradients, Graph, RopeTable, Var};
pub use params::{ParamRecord, ParamStore};
pub use tensor::Tensor;
