//! Dense arrays, parameters, seeded randomness and the finite-difference
//! oracle.

mod gradcheck;
mod param;
mod rng;
mod tensor;

pub use gradcheck::{
    finite_diff_grad, max_relative_error, relative_error, DEFAULT_STEP, REL_ERROR_FLOOR,
};
pub use param::{HasParams, Param};
pub use rng::{Rng, RNG_ALGORITHM};
pub use tensor::{Real, Tensor};
