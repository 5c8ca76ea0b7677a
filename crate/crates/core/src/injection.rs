//! Fusing retrieved context into the current step's key/value table.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kv_memory::MemorySnapshot;
use crate::numerics::{norm, Tensor4};
use crate::retrieval::RetrievalResult;

pub const DEFAULT_EPSILON: f64 = 1e-6;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InjectionMode {
    /// `K + K_ctx`, rescaled back to the per-token norm of `K`.
    #[default]
    ResidualNormPreserving,
    /// `K + K_ctx` without rescaling.
    ResidualPlain,
    /// Append raw history tokens after the current prefix (ablation).
    Concatenate,
}

impl InjectionMode {
    pub fn is_residual(self) -> bool {
        !matches!(self, InjectionMode::Concatenate)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InjectionOutput {
    pub k_fused: Tensor4,
    pub v_fused: Tensor4,
    /// Key/value token count the following attention sees.
    pub attended_length: usize,
}

pub fn residual_load(
    k_cur: &Tensor4,
    v_cur: &Tensor4,
    k_ctx: &Tensor4,
    v_ctx: &Tensor4,
) -> Result<(Tensor4, Tensor4)> {
    Ok((k_cur.add(k_ctx)?, v_cur.add(v_ctx)?))
}

/// Rescales each token of `fused` to the L2 norm of the matching token of
/// `original`: `fused * ‖original‖ / max(‖fused‖, epsilon)`.
pub fn norm_preserve(fused: &Tensor4, original: &Tensor4, epsilon: f64) -> Result<Tensor4> {
    fused.ensure_same_shape(original, "norm_preserve")?;
    if !(epsilon > 0.0) {
        return Err(Error::Config(format!("epsilon must be > 0, got {epsilon}")));
    }
    let d = fused.head_dim();
    let mut out = fused.clone();
    for (tok, orig) in out
        .data_mut()
        .chunks_exact_mut(d)
        .zip(original.data().chunks_exact(d))
    {
        let scale = norm(orig) / norm(tok).max(epsilon);
        for v in tok.iter_mut() {
            *v *= scale;
        }
    }
    Ok(out)
}

/// Injects retrieved history into the current keys/values.
///
/// With no history (`snapshot` is `None`) this is an exact passthrough in
/// every mode. Residual modes need `result`; concatenation reads the raw
/// history from `snapshot`.
pub fn inject(
    k_cur: &Tensor4,
    v_cur: &Tensor4,
    snapshot: Option<&MemorySnapshot>,
    result: Option<&RetrievalResult>,
    mode: InjectionMode,
    epsilon: f64,
) -> Result<InjectionOutput> {
    if !(epsilon > 0.0) {
        return Err(Error::Config(format!("epsilon must be > 0, got {epsilon}")));
    }
    k_cur.ensure_same_shape(v_cur, "current keys/values")?;
    let Some(snapshot) = snapshot else {
        return Ok(passthrough(k_cur, v_cur));
    };

    match mode {
        InjectionMode::Concatenate => {
            let k_fused = Tensor4::concat_tokens(&[k_cur, snapshot.k_hist()])?;
            let v_fused = Tensor4::concat_tokens(&[v_cur, snapshot.v_hist()])?;
            let attended_length = k_fused.tokens();
            Ok(InjectionOutput {
                k_fused,
                v_fused,
                attended_length,
            })
        }
        InjectionMode::ResidualPlain | InjectionMode::ResidualNormPreserving => {
            let result = result.ok_or_else(|| {
                Error::Config("residual injection needs a retrieval result".into())
            })?;
            let (mut k_fused, mut v_fused) =
                residual_load(k_cur, v_cur, &result.k_ctx, &result.v_ctx)?;
            if mode == InjectionMode::ResidualNormPreserving {
                k_fused = norm_preserve(&k_fused, k_cur, epsilon)?;
                v_fused = norm_preserve(&v_fused, v_cur, epsilon)?;
            }
            Ok(InjectionOutput {
                k_fused,
                v_fused,
                attended_length: k_cur.tokens(),
            })
        }
    }
}

fn passthrough(k_cur: &Tensor4, v_cur: &Tensor4) -> InjectionOutput {
    InjectionOutput {
        k_fused: k_cur.clone(),
        v_fused: v_cur.clone(),
        attended_length: k_cur.tokens(),
    }
}

/// Mean relative change of per-token norms, `|‖fused‖ - ‖orig‖| / ‖orig‖`.
///
/// Only the leading `original.tokens()` tokens of `fused` are compared.
pub fn norm_drift(fused: &Tensor4, original: &Tensor4) -> f64 {
    let [b_dim, h_dim, n_dim, _] = original.dims();
    let mut total = 0.0;
    let mut count = 0usize;
    for b in 0..b_dim {
        for h in 0..h_dim {
            for n in 0..n_dim {
                let base = norm(original.row(b, h, n));
                if base > 0.0 {
                    total += (norm(fused.row(b, h, n)) - base).abs() / base;
                    count += 1;
                }
            }
        }
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}
