//! Reference implementations and fixtures shared by the integration tests.
//!
//! The oracles here use plain nested loops over `get`/`set` and never call
//! the library's matmul, softmax or bias helpers.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tempofit::kv_memory::MemorySnapshot;
use tempofit::numerics::{Tensor4, Tokens};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_tensor(rng: &mut ChaCha8Rng, dims: [usize; 4]) -> Tensor4 {
    Tensor4::from_fn(dims, |_| rng.random_range(-1.0..1.0)).unwrap()
}

pub fn uniform_tokens(rng: &mut ChaCha8Rng, batch: usize, len: usize, width: usize) -> Tokens {
    let data = (0..batch * len * width)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    Tokens::new(batch, len, width, data).unwrap()
}

/// `steps` history entries of `s` tokens each at the given timesteps.
pub fn snapshot(rng: &mut ChaCha8Rng, dims: [usize; 4], timesteps: &[u64]) -> MemorySnapshot {
    let [b, h, s, d] = dims;
    let m = s * timesteps.len();
    let k = uniform_tensor(rng, [b, h, m, d]);
    let v = uniform_tensor(rng, [b, h, m, d]);
    let taus = timesteps
        .iter()
        .flat_map(|&tau| std::iter::repeat_n(tau, s))
        .collect();
    MemorySnapshot::new(k, v, taus).unwrap()
}

pub struct OracleRetrieval {
    pub weights: Tensor4,
    pub k_ctx: Tensor4,
    pub v_ctx: Tensor4,
}

/// Brute-force retrieval: scaled dot products, frame-gap bias, softmax and
/// weighted sums, one scalar at a time.
#[allow(clippy::too_many_arguments, clippy::needless_range_loop)]
pub fn oracle_retrieve(
    address: &Tensor4,
    k_hist: &Tensor4,
    v_hist: &Tensor4,
    taus: &[u64],
    t: u64,
    beta: f64,
    slopes: &[f64],
    alpha_s: f64,
) -> OracleRetrieval {
    let [b_dim, h_dim, s_dim, d] = address.dims();
    let m_dim = k_hist.tokens();
    let mut weights = Tensor4::zeros([b_dim, h_dim, s_dim, m_dim]).unwrap();
    let mut k_ctx = Tensor4::zeros([b_dim, h_dim, s_dim, d]).unwrap();
    let mut v_ctx = Tensor4::zeros([b_dim, h_dim, s_dim, d]).unwrap();
    for b in 0..b_dim {
        for h in 0..h_dim {
            for i in 0..s_dim {
                let mut logits = vec![0.0; m_dim];
                for j in 0..m_dim {
                    let mut acc = 0.0;
                    for k in 0..d {
                        acc += address.get(b, h, i, k) * k_hist.get(b, h, j, k);
                    }
                    let gap = t.abs_diff(taus[j]) as f64;
                    logits[j] = acc / (d as f64).sqrt() - beta * slopes[h] * gap * alpha_s;
                }
                let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
                let z: f64 = exps.iter().sum();
                for j in 0..m_dim {
                    let w = exps[j] / z;
                    weights.set(b, h, i, j, w);
                    for k in 0..d {
                        let kc = k_ctx.get(b, h, i, k) + w * k_hist.get(b, h, j, k);
                        k_ctx.set(b, h, i, k, kc);
                        let vc = v_ctx.get(b, h, i, k) + w * v_hist.get(b, h, j, k);
                        v_ctx.set(b, h, i, k, vc);
                    }
                }
            }
        }
    }
    OracleRetrieval {
        weights,
        k_ctx,
        v_ctx,
    }
}

pub fn token_norm(x: &Tensor4, b: usize, h: usize, n: usize) -> f64 {
    (0..x.head_dim())
        .map(|k| x.get(b, h, n, k).powi(2))
        .sum::<f64>()
        .sqrt()
}

pub fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
