//! Dense f64 tensor primitives: batched products, stable row softmax,
//! per-token norms and rotary position embeddings.

mod ops;
mod tensor;
mod tokens;

pub use ops::{l2_norm_lastdim, matmul_qk, matmul_wv, rope_apply, softmax_rows, RopeParams};
pub use tensor::Tensor4;
pub use tokens::{rms_norm, Matrix, Tokens};

pub(crate) use ops::norm;
