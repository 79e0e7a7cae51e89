//! Numerical kernel: dense tensors, small complex matrices, Cholesky helpers,
//! seeded random streams, a reverse-mode tape and the Adam update.

pub mod adam;
pub mod complex;
pub mod linalg;
pub mod rng;
pub mod tape;
pub mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use complex::ComplexMatrix;
pub use rng::{sample_standard_complex_gaussian, SimRng};
pub use tape::{Gradients, Tape, Var};
pub use tensor::RealTensor;
