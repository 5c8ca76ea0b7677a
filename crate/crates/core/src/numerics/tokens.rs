use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::ops::{axpy, dot};
use super::Tensor4;

/// Token activations, `[batch, tokens, width]` row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tokens {
    batch: usize,
    len: usize,
    width: usize,
    data: Vec<f64>,
}

impl Tokens {
    pub fn new(batch: usize, len: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if batch == 0 || len == 0 || width == 0 {
            return Err(Error::Dimension(format!(
                "tokens dims must be >= 1, got [{batch}, {len}, {width}]"
            )));
        }
        if data.len() != batch * len * width {
            return Err(Error::Dimension(format!(
                "tokens [{batch}, {len}, {width}] need {} elements, got {}",
                batch * len * width,
                data.len()
            )));
        }
        Ok(Self {
            batch,
            len,
            width,
            data,
        })
    }

    pub fn zeros(batch: usize, len: usize, width: usize) -> Result<Self> {
        Self::new(batch, len, width, vec![0.0; batch * len * width])
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn token(&self, b: usize, n: usize) -> &[f64] {
        let start = (b * self.len + n) * self.width;
        &self.data[start..start + self.width]
    }

    #[inline]
    pub fn token_mut(&mut self, b: usize, n: usize) -> &mut [f64] {
        let start = (b * self.len + n) * self.width;
        let w = self.width;
        &mut self.data[start..start + w]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn add_assign(&mut self, other: &Tokens) -> Result<()> {
        self.ensure_same_shape(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn ensure_same_shape(&self, other: &Tokens) -> Result<()> {
        if (self.batch, self.len, self.width) != (other.batch, other.len, other.width) {
            return Err(Error::Dimension(format!(
                "tokens [{}, {}, {}] vs [{}, {}, {}]",
                self.batch, self.len, self.width, other.batch, other.len, other.width
            )));
        }
        Ok(())
    }

    /// Frobenius distance.
    pub fn distance(&self, other: &Tokens) -> Result<f64> {
        self.ensure_same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }

    /// Concatenate along the token axis.
    pub fn concat(parts: &[&Tokens]) -> Result<Tokens> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Dimension("concat of zero token blocks".into()))?;
        if parts
            .iter()
            .any(|p| p.batch != first.batch || p.width != first.width)
        {
            return Err(Error::Dimension(
                "token blocks differ in batch or width".into(),
            ));
        }
        let len: usize = parts.iter().map(|p| p.len).sum();
        let mut data = Vec::with_capacity(first.batch * len * first.width);
        for b in 0..first.batch {
            for p in parts {
                let start = b * p.len * p.width;
                data.extend_from_slice(&p.data[start..start + p.len * p.width]);
            }
        }
        Tokens::new(first.batch, len, first.width, data)
    }

    /// Mean over the token axis, `batch * width` values.
    pub fn mean_pool(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.batch * self.width];
        for b in 0..self.batch {
            let acc = &mut out[b * self.width..(b + 1) * self.width];
            for n in 0..self.len {
                axpy(acc, 1.0, self.token(b, n));
            }
            for v in acc.iter_mut() {
                *v /= self.len as f64;
            }
        }
        out
    }

    /// `[B,N,H*d] -> [B,H,N,d]`.
    pub fn split_heads(&self, heads: usize) -> Result<Tensor4> {
        if heads == 0 || !self.width.is_multiple_of(heads) {
            return Err(Error::Dimension(format!(
                "width {} not divisible into {heads} heads",
                self.width
            )));
        }
        let d = self.width / heads;
        Tensor4::from_fn([self.batch, heads, self.len, d], |[b, h, n, k]| {
            self.data[(b * self.len + n) * self.width + h * d + k]
        })
    }

    /// `[B,H,N,d] -> [B,N,H*d]`.
    pub fn merge_heads(t: &Tensor4) -> Tokens {
        let [b_dim, h_dim, n_dim, d] = t.dims();
        let width = h_dim * d;
        let mut data = vec![0.0; b_dim * n_dim * width];
        for b in 0..b_dim {
            for h in 0..h_dim {
                for n in 0..n_dim {
                    let start = (b * n_dim + n) * width + h * d;
                    data[start..start + d].copy_from_slice(t.row(b, h, n));
                }
            }
        }
        Tokens {
            batch: b_dim,
            len: n_dim,
            width,
            data,
        }
    }
}

/// Row-major `[rows, cols]` weight matrix applied as `x · W`.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "matrix [{rows}, {cols}] with {} elements",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Applies the map to every token: `[B,N,rows] -> [B,N,cols]`.
    pub fn apply(&self, x: &Tokens) -> Result<Tokens> {
        if x.width != self.rows {
            return Err(Error::Dimension(format!(
                "linear: input width {} vs matrix rows {}",
                x.width, self.rows
            )));
        }
        let mut out = vec![0.0; x.batch * x.len * self.cols];
        for (src, dst) in x
            .data
            .chunks_exact(self.rows)
            .zip(out.chunks_exact_mut(self.cols))
        {
            for (i, &xi) in src.iter().enumerate() {
                axpy(dst, xi, self.row(i));
            }
        }
        Tokens::new(x.batch, x.len, self.cols, out)
    }

    /// `v · W` for a flat batch of row vectors.
    pub fn apply_rows(&self, v: &[f64]) -> Result<Vec<f64>> {
        if !v.len().is_multiple_of(self.rows) {
            return Err(Error::Dimension(format!(
                "vector length {} not a multiple of {}",
                v.len(),
                self.rows
            )));
        }
        let mut out = vec![0.0; v.len() / self.rows * self.cols];
        for (src, dst) in v
            .chunks_exact(self.rows)
            .zip(out.chunks_exact_mut(self.cols))
        {
            for (i, &xi) in src.iter().enumerate() {
                axpy(dst, xi, self.row(i));
            }
        }
        Ok(out)
    }
}

/// RMS normalisation per token with a learned-style gain vector.
pub fn rms_norm(x: &Tokens, gain: &[f64], eps: f64) -> Result<Tokens> {
    if gain.len() != x.width {
        return Err(Error::Dimension(format!(
            "rms_norm gain {} vs width {}",
            gain.len(),
            x.width
        )));
    }
    let mut out = x.clone();
    for tok in out.data.chunks_exact_mut(x.width) {
        let ms = dot(tok, tok) / x.width as f64;
        let inv = 1.0 / (ms + eps).sqrt();
        for (v, g) in tok.iter_mut().zip(gain) {
            *v *= inv * g;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_merge_roundtrip() {
        let x = Tokens::new(2, 3, 4, (0..24).map(f64::from).collect()).unwrap();
        let t = x.split_heads(2).unwrap();
        assert_eq!(t.dims(), [2, 2, 3, 2]);
        // batch 1, token 2, head 1 -> columns 2..4 of token (1,2)
        assert_eq!(t.row(1, 1, 2), &x.token(1, 2)[2..4]);
        assert_eq!(Tokens::merge_heads(&t), x);
    }

    #[test]
    fn linear_matches_manual() {
        let x = Tokens::new(1, 1, 2, vec![1.0, 2.0]).unwrap();
        let w = Matrix::new(2, 3, vec![1.0, 0.0, -1.0, 0.5, 1.0, 2.0]).unwrap();
        assert_eq!(w.apply(&x).unwrap().data(), &[2.0, 2.0, 3.0]);
    }

    #[test]
    fn rms_norm_unit_gain_gives_unit_rms() {
        let x = Tokens::new(1, 2, 4, vec![1.0, 2.0, 3.0, 4.0, -2.0, 0.0, 2.0, 0.0]).unwrap();
        let y = rms_norm(&x, &[1.0; 4], 0.0).unwrap();
        for n in 0..2 {
            let t = y.token(0, n);
            assert!((dot(t, t) / 4.0 - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn concat_and_pool() {
        let a = Tokens::new(1, 1, 2, vec![1.0, 3.0]).unwrap();
        let b = Tokens::new(1, 1, 2, vec![3.0, 5.0]).unwrap();
        let c = Tokens::concat(&[&a, &b]).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.mean_pool(), vec![2.0, 4.0]);
    }
}
