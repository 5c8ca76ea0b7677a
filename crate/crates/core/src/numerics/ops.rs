use crate::error::{Error, Result};

use super::Tensor4;

/// Batched `a · bᵀ` over the last axis: `[B,H,N,d] x [B,H,M,d] -> [B,H,N,M]`.
pub fn matmul_qk(a: &Tensor4, b: &Tensor4) -> Result<Tensor4> {
    let [ba, ha, n, d] = a.dims();
    let [bb, hb, m, db] = b.dims();
    if ba != bb || ha != hb || d != db {
        return Err(Error::Dimension(format!(
            "matmul_qk: {:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    let mut out = Tensor4::filled([ba, ha, n, m], 0.0);
    for bi in 0..ba {
        for h in 0..ha {
            for i in 0..n {
                let lhs = a.row(bi, h, i);
                let base = out.offset(bi, h, i);
                for j in 0..m {
                    out.data_mut()[base + j] = dot(lhs, b.row(bi, h, j));
                }
            }
        }
    }
    Ok(out)
}

/// Batched `w · v`: `[B,H,N,M] x [B,H,M,d] -> [B,H,N,d]`.
///
/// This is the read-out half of attention (weights times values).
pub fn matmul_wv(w: &Tensor4, v: &Tensor4) -> Result<Tensor4> {
    let [bw, hw, n, m] = w.dims();
    let [bv, hv, mv, d] = v.dims();
    if bw != bv || hw != hv || m != mv {
        return Err(Error::Dimension(format!(
            "matmul_wv: {:?} vs {:?}",
            w.dims(),
            v.dims()
        )));
    }
    let mut out = Tensor4::filled([bw, hw, n, d], 0.0);
    for b in 0..bw {
        for h in 0..hw {
            for i in 0..n {
                let weights = w.row(b, h, i);
                let mut acc = vec![0.0; d];
                for (j, &wij) in weights.iter().enumerate() {
                    axpy(&mut acc, wij, v.row(b, h, j));
                }
                out.row_mut(b, h, i).copy_from_slice(&acc);
            }
        }
    }
    Ok(out)
}

/// Row-wise softmax over the last axis with max subtraction.
///
/// `-inf` logits get weight 0. A row where every logit is `-inf` is an error.
pub fn softmax_rows(logits: &Tensor4) -> Result<Tensor4> {
    let mut out = logits.clone();
    let [b_dim, h_dim, n_dim, _] = logits.dims();
    for b in 0..b_dim {
        for h in 0..h_dim {
            for n in 0..n_dim {
                if !softmax_in_place(out.row_mut(b, h, n)) {
                    return Err(Error::Masking(format!("[{b},{h},{n}]")));
                }
            }
        }
    }
    Ok(out)
}

/// Returns false when the row is entirely `-inf`.
fn softmax_in_place(row: &mut [f64]) -> bool {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return false;
    }
    let mut sum = 0.0;
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in row.iter_mut() {
        *x /= sum;
    }
    true
}

/// Per-token L2 norm over the last axis, shape `[B,H,N,1]`.
pub fn l2_norm_lastdim(x: &Tensor4) -> Tensor4 {
    let [b_dim, h_dim, n_dim, _] = x.dims();
    let mut out = Tensor4::filled([b_dim, h_dim, n_dim, 1], 0.0);
    for b in 0..b_dim {
        for h in 0..h_dim {
            for n in 0..n_dim {
                out.set(b, h, n, 0, norm(x.row(b, h, n)));
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RopeParams {
    head_dim: usize,
    base_frequency: f64,
}

impl RopeParams {
    pub const DEFAULT_BASE: f64 = 10_000.0;

    pub fn new(head_dim: usize, base_frequency: f64) -> Result<Self> {
        if head_dim == 0 || !head_dim.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "rope head_dim must be even and positive, got {head_dim}"
            )));
        }
        if !(base_frequency > 0.0 && base_frequency.is_finite()) {
            return Err(Error::Config(format!(
                "rope base frequency must be positive, got {base_frequency}"
            )));
        }
        Ok(Self {
            head_dim,
            base_frequency,
        })
    }

    pub fn with_default_base(head_dim: usize) -> Result<Self> {
        Self::new(head_dim, Self::DEFAULT_BASE)
    }

    pub fn head_dim(&self) -> usize {
        self.head_dim
    }

    pub fn base_frequency(&self) -> f64 {
        self.base_frequency
    }

    /// θ_i = base^(-2i/d) for pair index i.
    pub fn inv_frequency(&self, pair: usize) -> f64 {
        self.base_frequency
            .powf(-2.0 * pair as f64 / self.head_dim as f64)
    }
}

/// Rotate interleaved coordinate pairs `(2i, 2i+1)` of every token by `pos * θ_i`.
pub fn rope_apply(x: &Tensor4, positions: &[usize], params: &RopeParams) -> Result<Tensor4> {
    let [b_dim, h_dim, n_dim, d] = x.dims();
    if d != params.head_dim {
        return Err(Error::Config(format!(
            "rope configured for head_dim {}, tensor has {d}",
            params.head_dim
        )));
    }
    if positions.len() != n_dim {
        return Err(Error::Dimension(format!(
            "rope: {} positions for {n_dim} tokens",
            positions.len()
        )));
    }
    let half = d / 2;
    let freqs: Vec<f64> = (0..half).map(|i| params.inv_frequency(i)).collect();
    // (cos, sin) per token and pair, shared across batch and heads.
    let mut table = Vec::with_capacity(n_dim * half);
    for &pos in positions {
        for &f in &freqs {
            let angle = pos as f64 * f;
            table.push((angle.cos(), angle.sin()));
        }
    }
    let mut out = x.clone();
    for b in 0..b_dim {
        for h in 0..h_dim {
            for n in 0..n_dim {
                if positions[n] == 0 {
                    continue;
                }
                let rot = &table[n * half..(n + 1) * half];
                let row = out.row_mut(b, h, n);
                for (i, &(c, s)) in rot.iter().enumerate() {
                    let x0 = row[2 * i];
                    let x1 = row[2 * i + 1];
                    row[2 * i] = x0 * c - x1 * s;
                    row[2 * i + 1] = x0 * s + x1 * c;
                }
            }
        }
    }
    Ok(out)
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn axpy(acc: &mut [f64], alpha: f64, x: &[f64]) {
    for (a, v) in acc.iter_mut().zip(x) {
        *a += alpha * v;
    }
}

#[inline]
pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}
