use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Architecture, GeneratorSpec};
use crate::error::{Error, Result};
use crate::nn::{
    ActKind, Activation, BatchNorm2d, Conv2d, ConvTranspose2d, Dropout, Layer, Mode, Module, Param, Sequential,
    Tensor, TensorShape,
};
use crate::synth::mix_seed;

const SLOPE: f32 = 0.2;

/// One UNet branch, evaluated up to but excluding its last upsampling layer.
/// The output is `[e0 ‖ u1]`: the outermost encoder features next to the
/// decoder features at half the input resolution.
#[derive(Clone, Debug)]
pub struct UNetStream {
    down: Vec<Sequential>,
    /// `up[i]` produces decoder level `i + 1`.
    up: Vec<Sequential>,
    skip_widths: Vec<usize>,
    cache: bool,
}

impl UNetStream {
    pub fn new(prefix: &str, spec: &GeneratorSpec, salt: u64, rng: &mut ChaCha8Rng) -> Self {
        let levels = spec.n_levels;
        let w = |i: usize| spec.width(i);
        let mut down = Vec::with_capacity(levels);
        for i in 0..levels {
            let name = format!("{prefix}.down{i}");
            let layers = if i == 0 {
                vec![Layer::Conv(Conv2d::new(&format!("{name}.conv"), 1, w(0), 4, 2, 1, true, rng))]
            } else if i == levels - 1 {
                vec![
                    Layer::Act(Activation::new(ActKind::LeakyRelu(SLOPE))),
                    Layer::Conv(Conv2d::new(&format!("{name}.conv"), w(i - 1), w(i), 4, 2, 1, true, rng)),
                ]
            } else {
                vec![
                    Layer::Act(Activation::new(ActKind::LeakyRelu(SLOPE))),
                    Layer::Conv(Conv2d::new(&format!("{name}.conv"), w(i - 1), w(i), 4, 2, 1, false, rng)),
                    Layer::Norm(BatchNorm2d::new(&format!("{name}.norm"), w(i), rng)),
                ]
            };
            down.push(Sequential::new(layers));
        }
        let mut up = Vec::with_capacity(levels - 1);
        for i in 1..levels {
            let name = format!("{prefix}.up{i}");
            let innermost = i == levels - 1;
            let in_ch = if innermost { w(i) } else { 2 * w(i) };
            let mut layers = vec![
                Layer::Act(Activation::new(ActKind::Relu)),
                Layer::ConvT(ConvTranspose2d::new(&format!("{name}.convt"), in_ch, w(i - 1), 4, 2, 1, false, rng)),
                Layer::Norm(BatchNorm2d::new(&format!("{name}.norm"), w(i - 1), rng)),
            ];
            if !innermost && i + 4 >= levels && spec.dropout_rate > 0.0 {
                layers.push(Layer::Dropout(Dropout::new(spec.dropout_rate, salt * 64 + i as u64)));
            }
            up.push(Sequential::new(layers));
        }
        UNetStream {
            down,
            up,
            skip_widths: (0..levels).map(w).collect(),
            cache: false,
        }
    }

    /// Channels of the stream output.
    pub fn out_channels(&self) -> usize {
        2 * self.skip_widths[0]
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let mut skips = Vec::with_capacity(self.down.len());
        let mut h = self.down[0].forward(x, mode)?;
        for d in &mut self.down[1..] {
            let next = d.forward(&h, mode)?;
            skips.push(std::mem::replace(&mut h, next));
        }
        // h is the innermost encoding; skips[i] is encoder level i.
        let levels = self.down.len();
        let mut u = self.up[levels - 2].forward(&h, mode)?;
        for i in (1..levels - 1).rev() {
            u = self.up[i - 1].forward(&Tensor::concat_channels(&skips[i], &u)?, mode)?;
        }
        self.cache = mode.is_train();
        Tensor::concat_channels(&skips[0], &u)
    }

    pub fn backward(&mut self, grad: &Tensor) -> Result<()> {
        if !std::mem::take(&mut self.cache) {
            return Err(Error::Internal("stream backward without a training forward".into()));
        }
        let levels = self.down.len();
        let mut skip_grads: Vec<Option<Tensor>> = vec![None; levels];
        let (g0, mut gu) = grad.split_channels(self.skip_widths[0]);
        skip_grads[0] = Some(g0);
        for i in 1..levels - 1 {
            let g = self.up[i - 1].backward(&gu, true)?.expect("input gradient requested");
            let (gs, rest) = g.split_channels(self.skip_widths[i]);
            skip_grads[i] = Some(gs);
            gu = rest;
        }
        let mut g = self.up[levels - 2].backward(&gu, true)?.expect("input gradient requested");
        for i in (0..levels).rev() {
            if i < levels - 1 {
                let mut s = skip_grads[i].take().expect("skip gradient");
                s.add_assign(&g);
                g = s;
            }
            match self.down[i].backward(&g, i > 0)? {
                Some(next) => g = next,
                None => break,
            }
        }
        Ok(())
    }

    fn set_dropout_seed(&mut self, seed: u64) {
        self.up.iter_mut().for_each(|s| s.set_dropout_seed(seed));
    }
}

impl Module for UNetStream {
    fn visit(&self, f: &mut dyn FnMut(&Param)) {
        self.down.iter().chain(&self.up).for_each(|s| s.visit(f));
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.down.iter_mut().chain(&mut self.up).for_each(|s| s.visit_mut(f));
    }
}

/// Refines a normalized DSM patch, optionally guided by a PAN patch.
#[derive(Clone, Debug)]
pub struct WNetGenerator {
    pub spec: GeneratorSpec,
    pub dsm_stream: UNetStream,
    pub pan_stream: Option<UNetStream>,
    /// 1×1 convolution over the concatenated stream outputs.
    pub fusion: Option<Conv2d>,
    /// Shared final upsampling with tanh output.
    pub head: Sequential,
}

/// Builds a generator with weights drawn from a stream seeded by `seed`.
pub fn build_generator(spec: &GeneratorSpec, seed: u64) -> Result<WNetGenerator> {
    spec.validate()?;
    let rng = |k| ChaCha8Rng::seed_from_u64(mix_seed(seed, k));
    let dsm_stream = UNetStream::new("dsm", spec, 1, &mut rng(11));
    let mut head_rng = rng(13);
    let (pan_stream, fusion, head_in) = match spec.architecture {
        Architecture::Wnet => {
            let pan = UNetStream::new("pan", spec, 2, &mut rng(12));
            let fused_in = dsm_stream.out_channels() + pan.out_channels();
            let fusion = Conv2d::new("fusion", fused_in, spec.fusion_width, 1, 1, 0, true, &mut head_rng);
            (Some(pan), Some(fusion), spec.fusion_width)
        }
        Architecture::SingleStream => (None, None, dsm_stream.out_channels()),
    };
    let head = Sequential::new(vec![
        Layer::Act(Activation::new(ActKind::Relu)),
        Layer::ConvT(ConvTranspose2d::new("head.convt", head_in, 1, 4, 2, 1, true, &mut head_rng)),
        Layer::Act(Activation::new(ActKind::Tanh)),
    ]);
    Ok(WNetGenerator {
        spec: spec.clone(),
        dsm_stream,
        pan_stream,
        fusion,
        head,
    })
}

impl WNetGenerator {
    fn check_input(&self, t: &Tensor, what: &str) -> Result<()> {
        let s = t.shape();
        if s.channels != 1 || s.rows != self.spec.in_size || s.cols != self.spec.in_size {
            return Err(Error::Input(format!(
                "{what} must be (B, 1, {n}, {n}), got {s}",
                n = self.spec.in_size
            )));
        }
        Ok(())
    }

    /// `dsm` and `pan` are `(B, 1, in_size, in_size)` in [-1, 1].
    pub fn forward(&mut self, dsm: &Tensor, pan: &Tensor, mode: Mode) -> Result<Tensor> {
        self.check_input(dsm, "DSM patch")?;
        self.check_input(pan, "PAN patch")?;
        if dsm.shape() != pan.shape() {
            return Err(Error::Input(format!("DSM {} and PAN {} differ", dsm.shape(), pan.shape())));
        }
        let a = self.dsm_stream.forward(dsm, mode)?;
        let h = match (&mut self.pan_stream, &mut self.fusion) {
            (Some(ps), Some(fusion)) => {
                let b = ps.forward(pan, mode)?;
                fusion.forward(&Tensor::concat_channels(&a, &b)?, mode)?
            }
            _ => a,
        };
        self.head.forward(&h, mode)
    }

    /// Accumulates parameter gradients for `d loss / d output`.
    pub fn backward(&mut self, grad: &Tensor) -> Result<()> {
        let g = self.head.backward(grad, true)?.expect("input gradient requested");
        match (&mut self.pan_stream, &mut self.fusion) {
            (Some(ps), Some(fusion)) => {
                let g = fusion.backward(&g, true)?.expect("input gradient requested");
                let (ga, gb) = g.split_channels(self.dsm_stream.out_channels());
                self.dsm_stream.backward(&ga)?;
                ps.backward(&gb)
            }
            _ => self.dsm_stream.backward(&g),
        }
    }

    /// Seeds every dropout mask for the next training forward.
    pub fn set_dropout_seed(&mut self, seed: u64) {
        self.dsm_stream.set_dropout_seed(seed);
        if let Some(p) = &mut self.pan_stream {
            p.set_dropout_seed(seed);
        }
    }

    pub fn output_shape(&self, batch: usize) -> TensorShape {
        TensorShape::new(batch, 1, self.spec.in_size, self.spec.in_size)
    }
}

impl Module for WNetGenerator {
    fn visit(&self, f: &mut dyn FnMut(&Param)) {
        self.dsm_stream.visit(f);
        if let Some(p) = &self.pan_stream {
            p.visit(f);
        }
        if let Some(c) = &self.fusion {
            c.visit(f);
        }
        self.head.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.dsm_stream.visit_mut(f);
        if let Some(p) = &mut self.pan_stream {
            p.visit_mut(f);
        }
        if let Some(c) = &mut self.fusion {
            c.visit_mut(f);
        }
        self.head.visit_mut(f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::dead_gradients;
    use rand::Rng;

    fn small(arch: Architecture) -> GeneratorSpec {
        GeneratorSpec {
            in_size: 32,
            base_width: 4,
            n_levels: 5,
            fusion_width: 4,
            dropout_rate: 0.5,
            architecture: arch,
        }
    }

    fn random(shape: TensorShape, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::new(shape, (0..shape.numel()).map(|_| rng.gen_range(-1.0f32..1.0)).collect()).unwrap()
    }

    #[test]
    fn output_matches_input_size_and_range() {
        let mut g = build_generator(&small(Architecture::Wnet), 0).unwrap();
        let s = TensorShape::new(2, 1, 32, 32);
        let y = g.forward(&random(s, 1), &random(s, 2), Mode::Train).unwrap();
        assert_eq!(y.shape(), s);
        assert!(y.data().iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn fusion_is_pointwise_over_both_streams() {
        let spec = small(Architecture::Wnet);
        let g = build_generator(&spec, 0).unwrap();
        let f = g.fusion.as_ref().unwrap();
        assert_eq!((f.kernel, f.stride, f.padding), (1, 1, 0));
        assert_eq!(f.in_channels, 2 * g.dsm_stream.out_channels());
        assert_eq!(f.in_channels, 4 * spec.base_width);
        let single = build_generator(&small(Architecture::SingleStream), 0).unwrap();
        assert!(single.fusion.is_none() && single.pan_stream.is_none());
    }

    #[test]
    fn pan_input_is_live() {
        let mut g = build_generator(&small(Architecture::Wnet), 3).unwrap();
        let s = TensorShape::new(1, 1, 32, 32);
        let dsm = random(s, 4);
        let a = g.forward(&dsm, &random(s, 5), Mode::Eval).unwrap();
        let b = g.forward(&dsm, &random(s, 6), Mode::Eval).unwrap();
        let diff = a.data().iter().zip(b.data()).fold(0.0f32, |m, (x, y)| m.max((x - y).abs()));
        assert!(diff > 0.0);
        // the baseline ignores PAN entirely
        let mut single = build_generator(&small(Architecture::SingleStream), 3).unwrap();
        let a = single.forward(&dsm, &random(s, 5), Mode::Eval).unwrap();
        let b = single.forward(&dsm, &random(s, 6), Mode::Eval).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn samples_do_not_interact_in_eval_mode() {
        let mut g = build_generator(&small(Architecture::Wnet), 7).unwrap();
        let one = TensorShape::new(1, 1, 32, 32);
        let dsm: Vec<Tensor> = (0..5).map(|i| random(one, 10 + i)).collect();
        let pan: Vec<Tensor> = (0..5).map(|i| random(one, 20 + i)).collect();
        let batched = g
            .forward(&Tensor::stack(&dsm).unwrap(), &Tensor::stack(&pan).unwrap(), Mode::Eval)
            .unwrap();
        for i in 0..5 {
            let single = g.forward(&dsm[i], &pan[i], Mode::Eval).unwrap();
            assert_eq!(single.data(), batched.sample(i));
        }
        let again = g
            .forward(&Tensor::stack(&dsm).unwrap(), &Tensor::stack(&pan).unwrap(), Mode::Eval)
            .unwrap();
        assert_eq!(again, batched);
    }

    #[test]
    fn every_parameter_gets_gradient() {
        for arch in [Architecture::Wnet, Architecture::SingleStream] {
            let mut g = build_generator(&small(arch), 11).unwrap();
            let s = TensorShape::new(2, 1, 32, 32);
            g.set_dropout_seed(1);
            let y = g.forward(&random(s, 1), &random(s, 2), Mode::Train).unwrap();
            let target = random(s, 3);
            // d/dy of mean |y - t|
            let n = y.len() as f32;
            let grad = Tensor::new(
                s,
                y.data().iter().zip(target.data()).map(|(a, b)| (a - b).signum() / n).collect(),
            )
            .unwrap();
            g.backward(&grad).unwrap();
            assert!(dead_gradients(&g).is_empty(), "{arch:?}: {:?}", dead_gradients(&g));
        }
    }

    #[test]
    fn rejects_mismatched_inputs() {
        let mut g = build_generator(&small(Architecture::Wnet), 0).unwrap();
        let ok = TensorShape::new(1, 1, 32, 32);
        let bad = TensorShape::new(1, 1, 16, 16);
        assert!(matches!(g.forward(&random(ok, 0), &random(bad, 0), Mode::Eval), Err(Error::Input(_))));
        assert!(matches!(
            g.forward(&random(ok, 0), &random(TensorShape::new(2, 1, 32, 32), 0), Mode::Eval),
            Err(Error::Input(_))
        ));
        assert!(g.backward(&random(ok, 0)).is_err());
    }

    #[test]
    fn dropout_sits_on_three_levels_outside_the_innermost() {
        let spec = GeneratorSpec { in_size: 256, base_width: 2, ..GeneratorSpec::default() };
        let g = build_generator(&spec, 0).unwrap();
        let with_dropout: Vec<usize> = (1..spec.n_levels)
            .filter(|&i| g.dsm_stream.up[i - 1].layers.iter().any(|l| matches!(l, Layer::Dropout(_))))
            .collect();
        assert_eq!(with_dropout, vec![4, 5, 6]);
    }
}
