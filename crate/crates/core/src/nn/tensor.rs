use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// NCHW extent of a 4-D tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TensorShape {
    pub batch: usize,
    pub channels: usize,
    pub rows: usize,
    pub cols: usize,
}

impl TensorShape {
    pub fn new(batch: usize, channels: usize, rows: usize, cols: usize) -> Self {
        TensorShape {
            batch,
            channels,
            rows,
            cols,
        }
    }

    pub fn numel(&self) -> usize {
        self.batch * self.channels * self.rows * self.cols
    }

    /// Elements of one sample.
    pub fn sample_len(&self) -> usize {
        self.channels * self.rows * self.cols
    }

    pub fn plane(&self) -> usize {
        self.rows * self.cols
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 || self.channels == 0 || self.rows == 0 || self.cols == 0 {
            return Err(Error::Input(format!("degenerate tensor shape {self:?}")));
        }
        Ok(())
    }
}

impl std::fmt::Display for TensorShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {}, {}, {})", self.batch, self.channels, self.rows, self.cols)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: TensorShape,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: TensorShape, data: Vec<f32>) -> Result<Self> {
        shape.validate()?;
        if data.len() != shape.numel() {
            return Err(Error::Input(format!(
                "tensor {shape} needs {} values, got {}",
                shape.numel(),
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: TensorShape) -> Self {
        Tensor {
            shape,
            data: vec![0.0; shape.numel()],
        }
    }

    pub fn full(shape: TensorShape, value: f32) -> Self {
        Tensor {
            shape,
            data: vec![value; shape.numel()],
        }
    }

    pub fn shape(&self) -> TensorShape {
        self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn sample(&self, b: usize) -> &[f32] {
        let n = self.shape.sample_len();
        &self.data[b * n..(b + 1) * n]
    }

    pub fn sample_mut(&mut self, b: usize) -> &mut [f32] {
        let n = self.shape.sample_len();
        &mut self.data[b * n..(b + 1) * n]
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn max_abs(&self) -> f32 {
        self.data.iter().fold(0.0f32, |m, v| m.max(v.abs()))
    }

    /// Stacks single-sample tensors along the batch axis.
    pub fn stack(samples: &[Tensor]) -> Result<Tensor> {
        let first = samples
            .first()
            .ok_or_else(|| Error::Input("cannot stack zero tensors".into()))?
            .shape;
        let mut data = Vec::with_capacity(first.sample_len() * samples.len());
        let mut batch = 0;
        for s in samples {
            let sh = s.shape;
            if (sh.channels, sh.rows, sh.cols) != (first.channels, first.rows, first.cols) {
                return Err(Error::Input(format!("cannot stack {sh} with {first}")));
            }
            batch += sh.batch;
            data.extend_from_slice(&s.data);
        }
        Tensor::new(TensorShape { batch, ..first }, data)
    }

    /// Sample `b` as a batch-of-one tensor.
    pub fn select(&self, b: usize) -> Tensor {
        Tensor {
            shape: TensorShape { batch: 1, ..self.shape },
            data: self.sample(b).to_vec(),
        }
    }

    /// Channel-wise concatenation `[a ‖ b]`.
    pub fn concat_channels(a: &Tensor, b: &Tensor) -> Result<Tensor> {
        let (sa, sb) = (a.shape, b.shape);
        if (sa.batch, sa.rows, sa.cols) != (sb.batch, sb.rows, sb.cols) {
            return Err(Error::Input(format!("cannot concatenate {sa} and {sb} along channels")));
        }
        let shape = TensorShape {
            channels: sa.channels + sb.channels,
            ..sa
        };
        let mut data = Vec::with_capacity(shape.numel());
        for n in 0..sa.batch {
            data.extend_from_slice(a.sample(n));
            data.extend_from_slice(b.sample(n));
        }
        Ok(Tensor { shape, data })
    }

    /// Inverse of [`Tensor::concat_channels`]: first `c` channels, rest.
    pub fn split_channels(&self, c: usize) -> (Tensor, Tensor) {
        let s = self.shape;
        assert!(c > 0 && c < s.channels, "split point {c} outside 1..{}", s.channels);
        let sa = TensorShape { channels: c, ..s };
        let sb = TensorShape {
            channels: s.channels - c,
            ..s
        };
        let (na, plane) = (sa.sample_len(), s.plane());
        let mut a = Vec::with_capacity(sa.numel());
        let mut b = Vec::with_capacity(sb.numel());
        for n in 0..s.batch {
            let x = self.sample(n);
            a.extend_from_slice(&x[..na]);
            b.extend_from_slice(&x[c * plane..]);
        }
        (Tensor { shape: sa, data: a }, Tensor { shape: sb, data: b })
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}
