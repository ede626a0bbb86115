use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Module;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

/// Bias-corrected Adam over the trainable parameters of one module, in
/// visiting order.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub t: u64,
    pub m: Vec<Vec<f32>>,
    pub v: Vec<Vec<f32>>,
}

impl Adam {
    pub fn new(config: AdamConfig, model: &impl Module) -> Self {
        let mut m = Vec::new();
        model.visit(&mut |p| {
            if p.trainable {
                m.push(vec![0.0; p.len()]);
            }
        });
        Adam {
            config,
            t: 0,
            v: m.clone(),
            m,
        }
    }

    /// Applies one update from the accumulated gradients.
    pub fn step(&mut self, model: &mut impl Module) -> Result<()> {
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.t.min(i32::MAX as u64) as i32);
        let bc2 = 1.0 - beta2.powi(self.t.min(i32::MAX as u64) as i32);
        let mut k = 0;
        let mut mismatch = false;
        let (ms, vs) = (&mut self.m, &mut self.v);
        model.visit_mut(&mut |p| {
            if !p.trainable {
                return;
            }
            let (Some(m), Some(v)) = (ms.get_mut(k), vs.get_mut(k)) else {
                mismatch = true;
                return;
            };
            if m.len() != p.len() {
                mismatch = true;
                return;
            }
            for i in 0..p.len() {
                let g = p.grad[i] as f64;
                let mi = beta1 * m[i] as f64 + (1.0 - beta1) * g;
                let vi = beta2 * v[i] as f64 + (1.0 - beta2) * g * g;
                m[i] = mi as f32;
                v[i] = vi as f32;
                let update = lr * (mi / bc1) / ((vi / bc2).sqrt() + eps);
                p.value[i] = (p.value[i] as f64 - update) as f32;
            }
            k += 1;
        });
        if mismatch || k != self.m.len() {
            return Err(Error::Internal("optimizer state does not match the model".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Param;

    struct Scalar(Param);

    impl Module for Scalar {
        fn visit(&self, f: &mut dyn FnMut(&Param)) {
            f(&self.0)
        }
        fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
            f(&mut self.0)
        }
    }

    #[test]
    fn matches_scalar_reference_on_a_quadratic() {
        let config = AdamConfig { lr: 0.05, beta1: 0.5, beta2: 0.999, eps: 1e-8 };
        // minimize (x - 3)²
        let mut model = Scalar(Param::new("x", vec![1], vec![0.0]));
        let mut adam = Adam::new(config, &model);
        let (mut x, mut m, mut v) = (0.0f64, 0.0f64, 0.0f64);
        for t in 1..=200 {
            let g = 2.0 * (x - 3.0);
            m = 0.5 * m + 0.5 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.5f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            x -= 0.05 * mh / (vh.sqrt() + 1e-8);

            model.0.grad[0] = (2.0 * (model.0.value[0] as f64 - 3.0)) as f32;
            adam.step(&mut model).unwrap();
            assert!((model.0.value[0] as f64 - x).abs() < 1e-4 * (1.0 + x.abs()), "t={t}");
        }
        assert!((x - 3.0).abs() < 0.05);
        assert_eq!(adam.t, 200);
    }

    #[test]
    fn skips_buffers() {
        struct Two(Param, Param);
        impl Module for Two {
            fn visit(&self, f: &mut dyn FnMut(&Param)) {
                f(&self.0);
                f(&self.1)
            }
            fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
                f(&mut self.0);
                f(&mut self.1)
            }
        }
        let mut m = Two(Param::new("w", vec![2], vec![1.0, 1.0]), Param::buffer("b", vec![1], vec![5.0]));
        m.0.grad = vec![1.0, -1.0];
        let mut adam = Adam::new(AdamConfig { lr: 0.1, beta1: 0.9, beta2: 0.999, eps: 1e-8 }, &m);
        adam.step(&mut m).unwrap();
        assert_eq!(adam.m.len(), 1);
        assert_eq!(m.1.value, vec![5.0]);
        // first step moves every coordinate by ~lr against the gradient sign
        assert!((m.0.value[0] - 0.9).abs() < 1e-6 && (m.0.value[1] - 1.1).abs() < 1e-6);
    }
}
