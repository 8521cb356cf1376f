//! Dense arrays, stable nonlinearities, seeded sampling and reverse-mode gradients.

mod array;
mod gradcheck;
pub mod linalg;
mod ops;
mod real;
mod rng;
mod tape;

pub use array::NumArray;
pub(crate) use array::array_gemm;
pub use gradcheck::grad_check;
pub use ops::{
    log_add_exp, log_softmax, log_sum_exp, sample_categorical, sigmoid, softmax, softplus,
};
pub(crate) use ops::{lse_unchecked, sample_weighted, softmax_in_place};
pub use real::{DType, Real};
pub use rng::Rng;
pub use tape::{Grads, Graph, ParamId, ParamSet, Var};
