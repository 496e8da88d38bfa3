//! Dense matrix arithmetic, seeded initialization and the Adam update.
//!
//! Everything here is generic over [`Scalar`] (`f32` or `f64`). The rest of
//! the crate runs in `f64`; the finite-difference gradient check needs the
//! headroom.

mod adam;
mod matrix;
mod rng;
mod scalar;

pub use adam::{adam_step, AdamState};
pub use matrix::{l2_normalize_rows, matmul, matmul_nt, matmul_tn, relu, xavier_uniform, Matrix, NORM_FLOOR};
pub use rng::Rng;
pub use scalar::Scalar;
