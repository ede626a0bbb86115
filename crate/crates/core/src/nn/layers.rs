use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{activation, Conv2d, ConvTranspose2d, Mode, Module, Param, Tensor, TensorShape};
use crate::error::{Error, Result};
use crate::synth::mix_seed;

fn missing_cache(what: &str) -> Error {
    Error::Internal(format!("{what}: backward without a training forward"))
}

/// Per-channel batch normalization. Training uses batch statistics and
/// updates running estimates; evaluation uses the running estimates.
#[derive(Clone, Debug)]
pub struct BatchNorm2d {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Param,
    pub running_var: Param,
    pub eps: f64,
    pub momentum: f64,
    cache: Option<(Vec<f32>, Vec<f64>, TensorShape)>,
}

impl BatchNorm2d {
    /// gamma ~ N(1, 0.02²), beta = 0.
    pub fn new(name: &str, channels: usize, rng: &mut impl Rng) -> Self {
        BatchNorm2d {
            gamma: Param::normal(format!("{name}.gamma"), vec![channels], 1.0, 0.02, rng),
            beta: Param::zeros(format!("{name}.beta"), vec![channels]),
            running_mean: Param::buffer(format!("{name}.running_mean"), vec![channels], vec![0.0; channels]),
            running_var: Param::buffer(format!("{name}.running_var"), vec![channels], vec![1.0; channels]),
            eps: 1e-5,
            momentum: 0.1,
            cache: None,
        }
    }

    fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let s = x.shape();
        if s.channels != self.channels() {
            return Err(Error::Input(format!(
                "{} expects {} channels, got {}",
                self.gamma.name,
                self.channels(),
                s.channels
            )));
        }
        let plane = s.plane();
        let m = (s.batch * plane) as f64;
        let mut out = Tensor::zeros(s);
        let mut xhat = if mode.is_train() { vec![0.0f32; s.numel()] } else { Vec::new() };
        let mut inv_stds = vec![0.0f64; s.channels];
        for c in 0..s.channels {
            let (mean, var) = if mode.is_train() {
                let mut sum = 0.0f64;
                for b in 0..s.batch {
                    sum += x.sample(b)[c * plane..(c + 1) * plane].iter().map(|&v| v as f64).sum::<f64>();
                }
                let mean = sum / m;
                let mut sq = 0.0f64;
                for b in 0..s.batch {
                    sq += x.sample(b)[c * plane..(c + 1) * plane]
                        .iter()
                        .map(|&v| (v as f64 - mean).powi(2))
                        .sum::<f64>();
                }
                let var = sq / m;
                let unbiased = if m > 1.0 { sq / (m - 1.0) } else { var };
                let mom = self.momentum;
                let rm = &mut self.running_mean.value[c];
                *rm = ((1.0 - mom) * *rm as f64 + mom * mean) as f32;
                let rv = &mut self.running_var.value[c];
                *rv = ((1.0 - mom) * *rv as f64 + mom * unbiased) as f32;
                (mean, var)
            } else {
                (self.running_mean.value[c] as f64, self.running_var.value[c] as f64)
            };
            let inv_std = 1.0 / (var + self.eps).sqrt();
            inv_stds[c] = inv_std;
            let (g, be) = (self.gamma.value[c] as f64, self.beta.value[c] as f64);
            for b in 0..s.batch {
                let off = b * s.sample_len() + c * plane;
                for i in 0..plane {
                    let xh = (x.data()[off + i] as f64 - mean) * inv_std;
                    if mode.is_train() {
                        xhat[off + i] = xh as f32;
                    }
                    out.data_mut()[off + i] = (g * xh + be) as f32;
                }
            }
        }
        self.cache = mode.is_train().then_some((xhat, inv_stds, s));
        Ok(out)
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let (xhat, inv_stds, s) = self.cache.take().ok_or_else(|| missing_cache(&self.gamma.name))?;
        let plane = s.plane();
        let m = (s.batch * plane) as f64;
        let mut dx = Tensor::zeros(s);
        for c in 0..s.channels {
            let g = self.gamma.value[c] as f64;
            let (mut sum_dy, mut sum_dy_xh) = (0.0f64, 0.0f64);
            for b in 0..s.batch {
                let off = b * s.sample_len() + c * plane;
                for i in 0..plane {
                    let dy = grad.data()[off + i] as f64;
                    sum_dy += dy;
                    sum_dy_xh += dy * xhat[off + i] as f64;
                }
            }
            self.gamma.grad[c] += sum_dy_xh as f32;
            self.beta.grad[c] += sum_dy as f32;
            let k = g * inv_stds[c] / m;
            for b in 0..s.batch {
                let off = b * s.sample_len() + c * plane;
                for i in 0..plane {
                    let dy = grad.data()[off + i] as f64;
                    dx.data_mut()[off + i] = (k * (m * dy - sum_dy - xhat[off + i] as f64 * sum_dy_xh)) as f32;
                }
            }
        }
        Ok(dx)
    }
}

impl Module for BatchNorm2d {
    fn visit(&self, f: &mut dyn FnMut(&Param)) {
        f(&self.gamma);
        f(&self.beta);
        f(&self.running_mean);
        f(&self.running_var);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        f(&mut self.gamma);
        f(&mut self.beta);
        f(&mut self.running_mean);
        f(&mut self.running_var);
    }
}

/// Elementwise nonlinearity with its cached operand.
#[derive(Clone, Debug)]
pub struct Activation {
    pub kind: ActKind,
    cache: Option<Tensor>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ActKind {
    LeakyRelu(f32),
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    pub fn new(kind: ActKind) -> Self {
        Activation { kind, cache: None }
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Tensor {
        let y = match self.kind {
            ActKind::LeakyRelu(a) => x.map(|v| activation::leaky_relu_f32(v, a)),
            ActKind::Relu => x.map(|v| v.max(0.0)),
            ActKind::Tanh => x.map(f32::tanh),
            ActKind::Sigmoid => x.map(activation::sigmoid_f32),
        };
        // Piecewise-linear kinds need the input sign, smooth ones the output.
        self.cache = mode.is_train().then(|| match self.kind {
            ActKind::LeakyRelu(_) | ActKind::Relu => x.clone(),
            ActKind::Tanh | ActKind::Sigmoid => y.clone(),
        });
        y
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let c = self.cache.take().ok_or_else(|| missing_cache("activation"))?;
        let mut dx = grad.clone();
        let it = dx.data_mut().iter_mut().zip(c.data());
        match self.kind {
            ActKind::LeakyRelu(a) => it.for_each(|(g, &x)| {
                if x <= 0.0 {
                    *g *= a
                }
            }),
            ActKind::Relu => it.for_each(|(g, &x)| {
                if x <= 0.0 {
                    *g = 0.0
                }
            }),
            ActKind::Tanh => it.for_each(|(g, &y)| *g *= 1.0 - y * y),
            ActKind::Sigmoid => it.for_each(|(g, &y)| *g *= y * (1.0 - y)),
        }
        Ok(dx)
    }
}

/// Inverted dropout. The mask is a pure function of the step seed and the
/// layer's salt, so training runs replay exactly.
#[derive(Clone, Debug)]
pub struct Dropout {
    pub rate: f32,
    salt: u64,
    seed: u64,
    mask: Option<Vec<f32>>,
}

impl Dropout {
    pub fn new(rate: f32, salt: u64) -> Self {
        Dropout {
            rate,
            salt,
            seed: 0,
            mask: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Tensor {
        if !mode.is_train() || self.rate <= 0.0 {
            self.mask = mode.is_train().then(|| vec![1.0; x.len()]);
            return x.clone();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(self.seed, self.salt));
        let keep = 1.0 - self.rate;
        let mask: Vec<f32> = (0..x.len())
            .map(|_| if rng.gen::<f32>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let mut y = x.clone();
        y.data_mut().iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
        self.mask = Some(mask);
        y
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let mask = self.mask.take().ok_or_else(|| missing_cache("dropout"))?;
        let mut dx = grad.clone();
        dx.data_mut().iter_mut().zip(&mask).for_each(|(g, m)| *g *= m);
        Ok(dx)
    }
}

#[derive(Clone, Debug)]
pub enum Layer {
    Conv(Conv2d),
    ConvT(ConvTranspose2d),
    Norm(BatchNorm2d),
    Act(Activation),
    Dropout(Dropout),
}

impl Layer {
    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        match self {
            Layer::Conv(l) => l.forward(x, mode),
            Layer::ConvT(l) => l.forward(x, mode),
            Layer::Norm(l) => l.forward(x, mode),
            Layer::Act(l) => Ok(l.forward(x, mode)),
            Layer::Dropout(l) => Ok(l.forward(x, mode)),
        }
    }

    pub fn backward(&mut self, grad: &Tensor, need_input_grad: bool) -> Result<Option<Tensor>> {
        Ok(match self {
            Layer::Conv(l) => l.backward(grad, need_input_grad)?,
            Layer::ConvT(l) => l.backward(grad, need_input_grad)?,
            Layer::Norm(l) => Some(l.backward(grad)?),
            Layer::Act(l) => Some(l.backward(grad)?),
            Layer::Dropout(l) => Some(l.backward(grad)?),
        })
    }

    pub fn output_shape(&self, s: TensorShape) -> Result<TensorShape> {
        match self {
            Layer::Conv(l) => l.output_shape(s),
            Layer::ConvT(l) => l.output_shape(s),
            _ => Ok(s),
        }
    }
}

impl Module for Layer {
    fn visit(&self, f: &mut dyn FnMut(&Param)) {
        match self {
            Layer::Conv(l) => l.visit(f),
            Layer::ConvT(l) => l.visit(f),
            Layer::Norm(l) => l.visit(f),
            Layer::Act(_) | Layer::Dropout(_) => {}
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        match self {
            Layer::Conv(l) => l.visit_mut(f),
            Layer::ConvT(l) => l.visit_mut(f),
            Layer::Norm(l) => l.visit_mut(f),
            Layer::Act(_) | Layer::Dropout(_) => {}
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Sequential {
    pub layers: Vec<Layer>,
}

impl Sequential {
    pub fn new(layers: Vec<Layer>) -> Self {
        Sequential { layers }
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let mut iter = self.layers.iter_mut();
        let mut y = match iter.next() {
            Some(l) => l.forward(x, mode)?,
            None => return Ok(x.clone()),
        };
        for l in iter {
            y = l.forward(&y, mode)?;
        }
        Ok(y)
    }

    pub fn backward(&mut self, grad: &Tensor, need_input_grad: bool) -> Result<Option<Tensor>> {
        let n = self.layers.len();
        let mut g = Some(grad.clone());
        for (i, l) in self.layers.iter_mut().enumerate().rev() {
            let cur = g.take().expect("gradient present until the first layer");
            g = l.backward(&cur, i > 0 || need_input_grad)?;
            if i > 0 && g.is_none() {
                return Err(Error::Internal(format!("layer {i} of {n} produced no input gradient")));
            }
        }
        Ok(if need_input_grad { g } else { None })
    }

    pub fn output_shape(&self, s: TensorShape) -> Result<TensorShape> {
        self.layers.iter().try_fold(s, |s, l| l.output_shape(s))
    }

    pub fn set_dropout_seed(&mut self, seed: u64) {
        for l in &mut self.layers {
            if let Layer::Dropout(d) = l {
                d.seed = seed;
            }
        }
    }

    pub fn count_convs(&self) -> usize {
        self.layers
            .iter()
            .filter(|l| matches!(l, Layer::Conv(_) | Layer::ConvT(_)))
            .count()
    }
}

impl Module for Sequential {
    fn visit(&self, f: &mut dyn FnMut(&Param)) {
        self.layers.iter().for_each(|l| l.visit(f));
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.layers.iter_mut().for_each(|l| l.visit_mut(f));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rand_tensor(shape: TensorShape, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::new(shape, (0..shape.numel()).map(|_| rng.gen_range(-2.0f32..2.0)).collect()).unwrap()
    }

    fn weighted_sum(y: &Tensor, r: &Tensor) -> f64 {
        y.data().iter().zip(r.data()).map(|(a, b)| *a as f64 * *b as f64).sum()
    }

    #[test]
    fn batchnorm_normalizes_and_tracks_running_stats() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut bn = BatchNorm2d::new("bn", 2, &mut rng);
        bn.gamma.value = vec![1.0, 1.0];
        let x = rand_tensor(TensorShape::new(3, 2, 4, 4), 1);
        let y = bn.forward(&x, Mode::Train).unwrap();
        for c in 0..2 {
            let vals: Vec<f64> = (0..3).flat_map(|b| y.sample(b)[c * 16..(c + 1) * 16].to_vec()).map(|v| v as f64).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!(mean.abs() < 1e-5 && (var - 1.0).abs() < 1e-3);
        }
        assert!(bn.running_mean.value.iter().any(|&v| v != 0.0));
        // eval mode is a fixed affine map
        let e1 = bn.forward(&x, Mode::Eval).unwrap();
        let e2 = bn.forward(&x, Mode::Eval).unwrap();
        assert_eq!(e1, e2);
    }

    #[test]
    fn batchnorm_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut bn = BatchNorm2d::new("bn", 2, &mut rng);
        let mut x = rand_tensor(TensorShape::new(2, 2, 3, 3), 3);
        let r = rand_tensor(x.shape(), 4);
        bn.forward(&x, Mode::Train).unwrap();
        let dx = bn.backward(&r).unwrap();
        let eps = 1e-2f32;
        for i in 0..x.len() {
            x.data_mut()[i] += eps;
            let up = weighted_sum(&bn.forward(&x, Mode::Train).unwrap(), &r);
            x.data_mut()[i] -= 2.0 * eps;
            let down = weighted_sum(&bn.forward(&x, Mode::Train).unwrap(), &r);
            x.data_mut()[i] += eps;
            let fd = (up - down) / (2.0 * eps as f64);
            assert!((fd - dx.data()[i] as f64).abs() < 5e-3 * (1.0 + fd.abs()), "{i}: {fd} vs {}", dx.data()[i]);
        }
    }

    #[test]
    fn activation_gradients() {
        for kind in [ActKind::LeakyRelu(0.2), ActKind::Relu, ActKind::Tanh, ActKind::Sigmoid] {
            let mut act = Activation::new(kind);
            let mut x = rand_tensor(TensorShape::new(1, 1, 4, 4), 5);
            let r = rand_tensor(x.shape(), 6);
            act.forward(&x, Mode::Train);
            let dx = act.backward(&r).unwrap();
            let eps = 1e-3f32;
            for i in 0..x.len() {
                if x.data()[i].abs() < 2.0 * eps {
                    continue;
                }
                x.data_mut()[i] += eps;
                let up = weighted_sum(&act.forward(&x, Mode::Eval), &r);
                x.data_mut()[i] -= 2.0 * eps;
                let down = weighted_sum(&act.forward(&x, Mode::Eval), &r);
                x.data_mut()[i] += eps;
                let fd = (up - down) / (2.0 * eps as f64);
                assert!((fd - dx.data()[i] as f64).abs() < 2e-3, "{kind:?} {i}: {fd} vs {}", dx.data()[i]);
            }
        }
    }

    #[test]
    fn dropout_is_seeded_and_identity_in_eval() {
        let x = Tensor::full(TensorShape::new(1, 4, 8, 8), 1.0);
        let mut d = Dropout::new(0.5, 3);
        d.seed = 9;
        let a = d.forward(&x, Mode::Train);
        let b = d.forward(&x, Mode::Train);
        assert_eq!(a, b);
        let zeros = a.data().iter().filter(|&&v| v == 0.0).count();
        assert!(zeros > 64 && zeros < 192);
        assert!(a.data().iter().all(|&v| v == 0.0 || v == 2.0));
        d.seed = 10;
        assert_ne!(d.forward(&x, Mode::Train), a);
        assert_eq!(d.forward(&x, Mode::Eval), x);
    }
}
