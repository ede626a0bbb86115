//! 2-D convolution and transposed convolution via im2col + sgemm.
//!
//! Every sample runs its own GEMMs with identical dimensions, so a sample's
//! result does not depend on what else is in the batch.

use rand::Rng;

use super::{Mode, Module, Param, Tensor, TensorShape};
use crate::error::{Error, Result};

/// `c = a·b + beta·c` with `a` logically m×k and `b` k×n. `at`/`bt` mean the
/// operand is stored transposed (k×m resp. n×k, row-major).
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(m: usize, k: usize, n: usize, a: &[f32], at: bool, b: &[f32], bt: bool, beta: f32, c: &mut [f32]) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if at { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if bt { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: bounds asserted above; strides describe row-major storage of
    // exactly the asserted extents.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Sliding-window geometry: a `c×h×w` image scanned by a `k×k` window with
/// stride `s` and zero padding `p`, producing an `ho×wo` grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Geom {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub s: usize,
    pub p: usize,
    pub ho: usize,
    pub wo: usize,
}

impl Geom {
    fn rows(&self) -> usize {
        self.c * self.k * self.k
    }

    fn cols(&self) -> usize {
        self.ho * self.wo
    }
}

/// Output extent of a convolution, `None` when the window does not fit.
pub fn conv_out(len: usize, k: usize, s: usize, p: usize) -> Option<usize> {
    (len + 2 * p).checked_sub(k).map(|v| v / s + 1)
}

/// Output extent of a transposed convolution.
pub fn conv_transpose_out(len: usize, k: usize, s: usize, p: usize) -> Option<usize> {
    ((len - 1) * s + k).checked_sub(2 * p).filter(|&v| v > 0)
}

pub(crate) fn im2col(x: &[f32], g: &Geom, cols: &mut [f32]) {
    let n = g.cols();
    for ci in 0..g.c {
        let plane = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (ci * g.k + ki) * g.k + kj;
                let dst = &mut cols[row * n..(row + 1) * n];
                for oh in 0..g.ho {
                    let ih = (oh * g.s + ki) as isize - g.p as isize;
                    let out = &mut dst[oh * g.wo..(oh + 1) * g.wo];
                    if ih < 0 || ih >= g.h as isize {
                        out.fill(0.0);
                        continue;
                    }
                    let src = &plane[ih as usize * g.w..(ih as usize + 1) * g.w];
                    for (ow, o) in out.iter_mut().enumerate() {
                        let iw = (ow * g.s + kj) as isize - g.p as isize;
                        *o = if iw >= 0 && iw < g.w as isize { src[iw as usize] } else { 0.0 };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters-adds columns back onto `x`.
pub(crate) fn col2im(cols: &[f32], g: &Geom, x: &mut [f32]) {
    let n = g.cols();
    for ci in 0..g.c {
        let plane = &mut x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (ci * g.k + ki) * g.k + kj;
                let src = &cols[row * n..(row + 1) * n];
                for oh in 0..g.ho {
                    let ih = (oh * g.s + ki) as isize - g.p as isize;
                    if ih < 0 || ih >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[ih as usize * g.w..(ih as usize + 1) * g.w];
                    for ow in 0..g.wo {
                        let iw = (ow * g.s + kj) as isize - g.p as isize;
                        if iw >= 0 && iw < g.w as isize {
                            dst[iw as usize] += src[oh * g.wo + ow];
                        }
                    }
                }
            }
        }
    }
}

fn is_pointwise(g: &Geom) -> bool {
    g.k == 1 && g.s == 1 && g.p == 0
}

#[derive(Clone, Debug)]
pub struct Conv2d {
    pub weight: Param,
    pub bias: Option<Param>,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    input: Option<Tensor>,
}

impl Conv2d {
    /// Weights drawn from N(0, 0.02²), bias zero.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        bias: bool,
        rng: &mut impl Rng,
    ) -> Self {
        Conv2d {
            weight: Param::normal(
                format!("{name}.weight"),
                vec![out_channels, in_channels, kernel, kernel],
                0.0,
                0.02,
                rng,
            ),
            bias: bias.then(|| Param::zeros(format!("{name}.bias"), vec![out_channels])),
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            input: None,
        }
    }

    fn geom(&self, s: TensorShape) -> Result<Geom> {
        if s.channels != self.in_channels {
            return Err(Error::Input(format!(
                "{} expects {} input channels, got {}",
                self.weight.name, self.in_channels, s.channels
            )));
        }
        let ho = conv_out(s.rows, self.kernel, self.stride, self.padding);
        let wo = conv_out(s.cols, self.kernel, self.stride, self.padding);
        match (ho, wo) {
            (Some(ho), Some(wo)) => Ok(Geom {
                c: s.channels,
                h: s.rows,
                w: s.cols,
                k: self.kernel,
                s: self.stride,
                p: self.padding,
                ho,
                wo,
            }),
            _ => Err(Error::Input(format!(
                "{}: {}x{} input is smaller than the {}x{} kernel",
                self.weight.name, s.rows, s.cols, self.kernel, self.kernel
            ))),
        }
    }

    pub fn output_shape(&self, s: TensorShape) -> Result<TensorShape> {
        let g = self.geom(s)?;
        Ok(TensorShape::new(s.batch, self.out_channels, g.ho, g.wo))
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let g = self.geom(x.shape())?;
        let out_shape = TensorShape::new(x.shape().batch, self.out_channels, g.ho, g.wo);
        let mut out = Tensor::zeros(out_shape);
        let (m, k, n) = (self.out_channels, g.rows(), g.cols());
        let mut cols = if is_pointwise(&g) { Vec::new() } else { vec![0.0; k * n] };
        for b in 0..out_shape.batch {
            let xb = x.sample(b);
            let src: &[f32] = if is_pointwise(&g) {
                xb
            } else {
                im2col(xb, &g, &mut cols);
                &cols
            };
            let ob = out.sample_mut(b);
            gemm(m, k, n, &self.weight.value, false, src, false, 0.0, ob);
            if let Some(bias) = &self.bias {
                for (co, chunk) in ob.chunks_mut(n).enumerate() {
                    let bv = bias.value[co];
                    chunk.iter_mut().for_each(|v| *v += bv);
                }
            }
        }
        self.input = mode.is_train().then(|| x.clone());
        Ok(out)
    }

    /// Accumulates parameter gradients; returns the input gradient when asked.
    pub fn backward(&mut self, grad: &Tensor, need_input_grad: bool) -> Result<Option<Tensor>> {
        let x = self
            .input
            .take()
            .ok_or_else(|| Error::Internal(format!("{}: backward without a training forward", self.weight.name)))?;
        let g = self.geom(x.shape())?;
        let (m, k, n) = (self.out_channels, g.rows(), g.cols());
        if grad.shape() != TensorShape::new(x.shape().batch, m, g.ho, g.wo) {
            return Err(Error::Internal(format!("{}: gradient shape {}", self.weight.name, grad.shape())));
        }
        let mut dx = need_input_grad.then(|| Tensor::zeros(x.shape()));
        let mut cols = vec![0.0; k * n];
        let mut dcols = vec![0.0; k * n];
        for b in 0..x.shape().batch {
            let gb = grad.sample(b);
            let src: &[f32] = if is_pointwise(&g) {
                x.sample(b)
            } else {
                im2col(x.sample(b), &g, &mut cols);
                &cols
            };
            gemm(m, n, k, gb, false, src, true, 1.0, &mut self.weight.grad);
            if let Some(bias) = &mut self.bias {
                for (co, chunk) in gb.chunks(n).enumerate() {
                    bias.grad[co] += chunk.iter().sum::<f32>();
                }
            }
            if let Some(dx) = dx.as_mut() {
                if is_pointwise(&g) {
                    gemm(k, m, n, &self.weight.value, true, gb, false, 0.0, dx.sample_mut(b));
                } else {
                    gemm(k, m, n, &self.weight.value, true, gb, false, 0.0, &mut dcols);
                    col2im(&dcols, &g, dx.sample_mut(b));
                }
            }
        }
        Ok(dx)
    }
}

impl Module for Conv2d {
    fn visit(&self, f: &mut dyn FnMut(&Param)) {
        f(&self.weight);
        if let Some(b) = &self.bias {
            f(b);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.weight);
        if let Some(b) = &mut self.bias {
            f(b);
        }
    }
}

/// Transposed convolution with weights laid out `[in, out, k, k]`.
#[derive(Clone, Debug)]
pub struct ConvTranspose2d {
    pub weight: Param,
    pub bias: Option<Param>,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    input: Option<Tensor>,
}

impl ConvTranspose2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        bias: bool,
        rng: &mut impl Rng,
    ) -> Self {
        ConvTranspose2d {
            weight: Param::normal(
                format!("{name}.weight"),
                vec![in_channels, out_channels, kernel, kernel],
                0.0,
                0.02,
                rng,
            ),
            bias: bias.then(|| Param::zeros(format!("{name}.bias"), vec![out_channels])),
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            input: None,
        }
    }

    /// Geometry of the equivalent forward convolution, whose input is this
    /// layer's output.
    fn geom(&self, s: TensorShape) -> Result<Geom> {
        if s.channels != self.in_channels {
            return Err(Error::Input(format!(
                "{} expects {} input channels, got {}",
                self.weight.name, self.in_channels, s.channels
            )));
        }
        let h = conv_transpose_out(s.rows, self.kernel, self.stride, self.padding);
        let w = conv_transpose_out(s.cols, self.kernel, self.stride, self.padding);
        match (h, w) {
            (Some(h), Some(w)) => Ok(Geom {
                c: self.out_channels,
                h,
                w,
                k: self.kernel,
                s: self.stride,
                p: self.padding,
                ho: s.rows,
                wo: s.cols,
            }),
            _ => Err(Error::Input(format!("{}: degenerate output size", self.weight.name))),
        }
    }

    pub fn output_shape(&self, s: TensorShape) -> Result<TensorShape> {
        let g = self.geom(s)?;
        Ok(TensorShape::new(s.batch, self.out_channels, g.h, g.w))
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let g = self.geom(x.shape())?;
        let out_shape = TensorShape::new(x.shape().batch, self.out_channels, g.h, g.w);
        let mut out = Tensor::zeros(out_shape);
        let (kc, cin, n) = (g.rows(), self.in_channels, g.cols());
        let mut cols = vec![0.0; kc * n];
        for b in 0..out_shape.batch {
            gemm(kc, cin, n, &self.weight.value, true, x.sample(b), false, 0.0, &mut cols);
            let ob = out.sample_mut(b);
            col2im(&cols, &g, ob);
            if let Some(bias) = &self.bias {
                for (co, chunk) in ob.chunks_mut(g.h * g.w).enumerate() {
                    let bv = bias.value[co];
                    chunk.iter_mut().for_each(|v| *v += bv);
                }
            }
        }
        self.input = mode.is_train().then(|| x.clone());
        Ok(out)
    }

    pub fn backward(&mut self, grad: &Tensor, need_input_grad: bool) -> Result<Option<Tensor>> {
        let x = self
            .input
            .take()
            .ok_or_else(|| Error::Internal(format!("{}: backward without a training forward", self.weight.name)))?;
        let g = self.geom(x.shape())?;
        if grad.shape() != TensorShape::new(x.shape().batch, self.out_channels, g.h, g.w) {
            return Err(Error::Internal(format!("{}: gradient shape {}", self.weight.name, grad.shape())));
        }
        let (kc, cin, n) = (g.rows(), self.in_channels, g.cols());
        let mut dx = need_input_grad.then(|| Tensor::zeros(x.shape()));
        let mut dcols = vec![0.0; kc * n];
        for b in 0..x.shape().batch {
            let gb = grad.sample(b);
            im2col(gb, &g, &mut dcols);
            gemm(cin, n, kc, x.sample(b), false, &dcols, true, 1.0, &mut self.weight.grad);
            if let Some(bias) = &mut self.bias {
                for (co, chunk) in gb.chunks(g.h * g.w).enumerate() {
                    bias.grad[co] += chunk.iter().sum::<f32>();
                }
            }
            if let Some(dx) = dx.as_mut() {
                gemm(cin, kc, n, &self.weight.value, false, &dcols, false, 0.0, dx.sample_mut(b));
            }
        }
        Ok(dx)
    }
}

impl Module for ConvTranspose2d {
    fn visit(&self, f: &mut dyn FnMut(&Param)) {
        f(&self.weight);
        if let Some(b) = &self.bias {
            f(b);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.weight);
        if let Some(b) = &mut self.bias {
            f(b);
        }
    }
}
