use crate::error::{Error, Result};

/// Dense `[batch, heads, tokens, head_dim]` tensor in row-major order.
///
/// Every axis is at least 1. Values are normally finite; additive masks and
/// logits may carry `-inf` sentinels.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor4 {
    dims: [usize; 4],
    data: Vec<f64>,
}

impl Tensor4 {
    pub fn new(dims: [usize; 4], data: Vec<f64>) -> Result<Self> {
        check_dims(dims)?;
        let expected = dims.iter().product::<usize>();
        if data.len() != expected {
            return Err(Error::Dimension(format!(
                "tensor {dims:?} needs {expected} elements, got {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: [usize; 4]) -> Result<Self> {
        check_dims(dims)?;
        Ok(Self::filled(dims, 0.0))
    }

    pub fn from_fn(dims: [usize; 4], mut f: impl FnMut([usize; 4]) -> f64) -> Result<Self> {
        check_dims(dims)?;
        let mut data = Vec::with_capacity(dims.iter().product());
        for b in 0..dims[0] {
            for h in 0..dims[1] {
                for n in 0..dims[2] {
                    for k in 0..dims[3] {
                        data.push(f([b, h, n, k]));
                    }
                }
            }
        }
        Ok(Self { dims, data })
    }

    pub(crate) fn filled(dims: [usize; 4], value: f64) -> Self {
        Self {
            dims,
            data: vec![value; dims.iter().product()],
        }
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn batch(&self) -> usize {
        self.dims[0]
    }

    pub fn heads(&self) -> usize {
        self.dims[1]
    }

    pub fn tokens(&self) -> usize {
        self.dims[2]
    }

    pub fn head_dim(&self) -> usize {
        self.dims[3]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn offset(&self, b: usize, h: usize, n: usize) -> usize {
        ((b * self.dims[1] + h) * self.dims[2] + n) * self.dims[3]
    }

    #[inline]
    pub fn get(&self, b: usize, h: usize, n: usize, k: usize) -> f64 {
        self.data[self.offset(b, h, n) + k]
    }

    #[inline]
    pub fn set(&mut self, b: usize, h: usize, n: usize, k: usize, value: f64) {
        let i = self.offset(b, h, n) + k;
        self.data[i] = value;
    }

    /// Last-axis vector for one (batch, head, token).
    #[inline]
    pub fn row(&self, b: usize, h: usize, n: usize) -> &[f64] {
        let start = self.offset(b, h, n);
        &self.data[start..start + self.dims[3]]
    }

    #[inline]
    pub fn row_mut(&mut self, b: usize, h: usize, n: usize) -> &mut [f64] {
        let start = self.offset(b, h, n);
        let d = self.dims[3];
        &mut self.data[start..start + d]
    }

    /// All tokens of one (batch, head) block, `tokens * head_dim` values.
    #[inline]
    pub fn block(&self, b: usize, h: usize) -> &[f64] {
        let start = self.offset(b, h, 0);
        &self.data[start..start + self.dims[2] * self.dims[3]]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn same_shape(&self, other: &Tensor4) -> bool {
        self.dims == other.dims
    }

    pub fn ensure_same_shape(&self, other: &Tensor4, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Dimension(format!(
                "{what}: {:?} vs {:?}",
                self.dims, other.dims
            )))
        }
    }

    /// Elementwise sum.
    pub fn add(&self, other: &Tensor4) -> Result<Tensor4> {
        self.ensure_same_shape(other, "add")?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Tensor4 {
            dims: self.dims,
            data,
        })
    }

    /// L-infinity distance between two same-shape tensors.
    pub fn max_abs_diff(&self, other: &Tensor4) -> Result<f64> {
        self.ensure_same_shape(other, "max_abs_diff")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Concatenate along the token axis; all parts share batch, heads and head_dim.
    pub fn concat_tokens(parts: &[&Tensor4]) -> Result<Tensor4> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Dimension("concat of zero tensors".into()))?;
        let [b_dim, h_dim, _, d] = first.dims;
        for p in parts {
            if p.dims[0] != b_dim || p.dims[1] != h_dim || p.dims[3] != d {
                return Err(Error::Dimension(format!(
                    "concat_tokens: {:?} vs {:?}",
                    first.dims, p.dims
                )));
            }
        }
        let total: usize = parts.iter().map(|p| p.dims[2]).sum();
        let mut data = Vec::with_capacity(b_dim * h_dim * total * d);
        for b in 0..b_dim {
            for h in 0..h_dim {
                for p in parts {
                    data.extend_from_slice(p.block(b, h));
                }
            }
        }
        Ok(Tensor4 {
            dims: [b_dim, h_dim, total, d],
            data,
        })
    }
}

fn check_dims(dims: [usize; 4]) -> Result<()> {
    if dims.contains(&0) {
        return Err(Error::Dimension(format!(
            "tensor dims must all be >= 1, got {dims:?}"
        )));
    }
    Ok(())
}
