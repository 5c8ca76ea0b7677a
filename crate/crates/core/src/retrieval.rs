//! Parameter-free key-to-key retrieval over a layer's history, with the
//! frame-gap temporal bias (FGTB) as a recency prior.
//!
//! Current prefix keys address the concatenated history keys in the same
//! pre-RoPE key space the frozen backbone uses. Per head and per query row:
//!
//! ```text
//! logits[i, j]  = k_cur[i] · k_hist[j] / sqrt(d) + mask[i, j] + bias[j]
//! bias[j]       = -beta * m_h * |t - tau_j| * alpha_s
//! weights       = softmax over all history tokens j
//! k_ctx, v_ctx  = weights · k_hist, weights · v_hist
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kv_memory::MemorySnapshot;
use crate::numerics::{matmul_qk, matmul_wv, softmax_rows, Tensor4};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrievalMode {
    /// Current keys address history keys.
    #[default]
    KToK,
    /// Current queries address history keys (ablation).
    QToK,
}

/// ALiBi-style geometric slopes `m_h = 2^(-8(h+1)/H)`.
pub fn head_slopes(num_heads: usize) -> Vec<f64> {
    let h_total = num_heads as f64;
    (0..num_heads)
        .map(|h| 2f64.powf(-8.0 * (h as f64 + 1.0) / h_total))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FgtbParams {
    beta: f64,
    alpha_s: f64,
    slopes: Vec<f64>,
}

impl FgtbParams {
    pub fn new(beta: f64, alpha_s: f64, slopes: Vec<f64>) -> Result<Self> {
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::Config(format!("beta must be >= 0, got {beta}")));
        }
        if !(alpha_s > 0.0 && alpha_s.is_finite()) {
            return Err(Error::Config(format!("alpha_s must be > 0, got {alpha_s}")));
        }
        if slopes.is_empty() || slopes.iter().any(|&m| !(m > 0.0 && m.is_finite())) {
            return Err(Error::Config(format!(
                "head slopes must be nonempty and positive, got {slopes:?}"
            )));
        }
        Ok(Self {
            beta,
            alpha_s,
            slopes,
        })
    }

    /// Default slope schedule with `alpha_s = S`.
    pub fn standard(num_heads: usize, prefix_tokens: usize, beta: f64) -> Result<Self> {
        Self::new(beta, prefix_tokens as f64, head_slopes(num_heads))
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn alpha_s(&self) -> f64 {
        self.alpha_s
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    pub fn num_heads(&self) -> usize {
        self.slopes.len()
    }

    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        Self::new(beta, self.alpha_s, self.slopes.clone())
    }
}

/// Per-head additive bias over history tokens, `[H, M]` row-major.
///
/// Constant across query rows.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameGapBias {
    heads: usize,
    history_len: usize,
    values: Vec<f64>,
}

impl FrameGapBias {
    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn history_len(&self) -> usize {
        self.history_len
    }

    pub fn get(&self, head: usize, token: usize) -> f64 {
        self.values[head * self.history_len + token]
    }

    pub fn head(&self, head: usize) -> &[f64] {
        &self.values[head * self.history_len..(head + 1) * self.history_len]
    }
}

pub fn fgtb_bias(t: u64, token_timesteps: &[u64], params: &FgtbParams) -> Result<FrameGapBias> {
    if let Some(&tau) = token_timesteps.iter().find(|&&tau| tau > t) {
        return Err(Error::Ordering(format!(
            "history timestep {tau} is later than current step {t}"
        )));
    }
    let mut values = Vec::with_capacity(params.slopes.len() * token_timesteps.len());
    for &m_h in &params.slopes {
        for &tau in token_timesteps {
            let gap = (t - tau) as f64;
            values.push(-params.beta * m_h * gap * params.alpha_s);
        }
    }
    Ok(FrameGapBias {
        heads: params.slopes.len(),
        history_len: token_timesteps.len(),
        values,
    })
}

/// Scaled dot-product logits `a · k_histᵀ / sqrt(d) + mask`, no softmax.
pub fn kk_logits(k_cur: &Tensor4, k_hist: &Tensor4, mask: Option<&Tensor4>) -> Result<Tensor4> {
    let mut logits = matmul_qk(k_cur, k_hist)?;
    let scale = 1.0 / (k_cur.head_dim() as f64).sqrt();
    for v in logits.data_mut() {
        *v *= scale;
    }
    if let Some(mask) = mask {
        mask.ensure_same_shape(&logits, "retrieval mask")?;
        for (v, m) in logits.data_mut().iter_mut().zip(mask.data()) {
            *v += m;
        }
    }
    Ok(logits)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RetrievalResult {
    /// `[B, H, S, M]`, rows sum to 1.
    pub weights: Tensor4,
    pub k_ctx: Tensor4,
    pub v_ctx: Tensor4,
}

impl RetrievalResult {
    /// Mean over (batch, head, query row) of the weight mass on tokens whose
    /// timestep equals `target`.
    pub fn mass_on_timestep(&self, token_timesteps: &[u64], target: u64) -> f64 {
        let m = self.weights.head_dim();
        let rows = self.weights.len() / m;
        let total: f64 = self
            .weights
            .data()
            .chunks_exact(m)
            .map(|row| {
                row.iter()
                    .zip(token_timesteps)
                    .filter(|(_, &tau)| tau == target)
                    .map(|(w, _)| w)
                    .sum::<f64>()
            })
            .sum();
        total / rows as f64
    }

    /// Mean Shannon entropy (nats) of the weight rows.
    pub fn mean_entropy(&self) -> f64 {
        let m = self.weights.head_dim();
        let rows = self.weights.len() / m;
        let total: f64 = self
            .weights
            .data()
            .chunks_exact(m)
            .map(|row| {
                -row.iter()
                    .filter(|&&w| w > 0.0)
                    .map(|&w| w * w.ln())
                    .sum::<f64>()
            })
            .sum();
        total / rows as f64
    }
}

/// Retrieves context for the current step from `snapshot`.
///
/// Returns `Ok(None)` when there is no history. `q_cur` is required in
/// [`RetrievalMode::QToK`] and ignored otherwise.
pub fn retrieve(
    k_cur: &Tensor4,
    q_cur: Option<&Tensor4>,
    snapshot: Option<&MemorySnapshot>,
    t: u64,
    fgtb: &FgtbParams,
    mode: RetrievalMode,
) -> Result<Option<RetrievalResult>> {
    retrieve_masked(k_cur, q_cur, snapshot, t, fgtb, mode, None)
}

/// [`retrieve`] with an additive `[B, H, S, M]` mask (e.g. padded prefixes).
pub fn retrieve_masked(
    k_cur: &Tensor4,
    q_cur: Option<&Tensor4>,
    snapshot: Option<&MemorySnapshot>,
    t: u64,
    fgtb: &FgtbParams,
    mode: RetrievalMode,
    mask: Option<&Tensor4>,
) -> Result<Option<RetrievalResult>> {
    let address = match mode {
        RetrievalMode::KToK => k_cur,
        RetrievalMode::QToK => {
            let q = q_cur.ok_or_else(|| {
                Error::Config("Q-to-K retrieval requires current query projections".into())
            })?;
            q.ensure_same_shape(k_cur, "query vs key projections")?;
            q
        }
    };
    let Some(snapshot) = snapshot else {
        return Ok(None);
    };
    if fgtb.num_heads() != k_cur.heads() {
        return Err(Error::Config(format!(
            "{} head slopes for {} heads",
            fgtb.num_heads(),
            k_cur.heads()
        )));
    }

    let mut logits = kk_logits(address, snapshot.k_hist(), mask)?;
    let bias = fgtb_bias(t, snapshot.token_timesteps(), fgtb)?;
    let [b_dim, h_dim, s_dim, _] = logits.dims();
    for b in 0..b_dim {
        for h in 0..h_dim {
            let head_bias = bias.head(h);
            for i in 0..s_dim {
                for (v, bj) in logits.row_mut(b, h, i).iter_mut().zip(head_bias) {
                    *v += bj;
                }
            }
        }
    }

    let weights = softmax_rows(&logits)?;
    let k_ctx = matmul_wv(&weights, snapshot.k_hist())?;
    let v_ctx = matmul_wv(&weights, snapshot.v_hist())?;
    Ok(Some(RetrievalResult {
        weights,
        k_ctx,
        v_ctx,
    }))
}
