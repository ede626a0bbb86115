use rand::Rng;
use rand_distr::Normal;

/// A named tensor of model state. Trainable parameters carry a gradient
/// buffer; running statistics are stored as non-trainable params so that
/// checkpoints capture them too.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<f32>,
    pub grad: Vec<f32>,
    pub trainable: bool,
}

impl Param {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, value: Vec<f32>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        let grad = vec![0.0; value.len()];
        Param {
            name: name.into(),
            shape,
            value,
            grad,
            trainable: true,
        }
    }

    pub fn buffer(name: impl Into<String>, shape: Vec<usize>, value: Vec<f32>) -> Self {
        Param {
            grad: Vec::new(),
            trainable: false,
            ..Param::new(name, shape, value)
        }
    }

    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Param::new(name, shape, vec![0.0; n])
    }

    pub fn normal(name: impl Into<String>, shape: Vec<usize>, mean: f32, std: f32, rng: &mut impl Rng) -> Self {
        let n: usize = shape.iter().product();
        let dist = Normal::new(mean, std).expect("finite std");
        let value = (0..n).map(|_| rng.sample(dist)).collect();
        Param::new(name, shape, value)
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }
}

/// Anything that owns parameters.
pub trait Module {
    fn visit(&self, f: &mut dyn FnMut(&Param));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param));

    fn zero_grad(&mut self) {
        self.visit_mut(&mut |p| p.zero_grad());
    }

    /// Number of trainable scalars.
    fn param_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |p| {
            if p.trainable {
                n += p.len()
            }
        });
        n
    }

    fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        self.visit(&mut |p| names.push(p.name.clone()));
        names
    }
}
