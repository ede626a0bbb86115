use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::DiscriminatorSpec;
use crate::error::{Error, Result};
use crate::nn::{ActKind, Activation, BatchNorm2d, Conv2d, Layer, Mode, Module, Param, Sequential, Tensor};
use crate::synth::mix_seed;

/// Conditional patch classifier over `[stereo DSM ‖ candidate]`. Each output
/// cell is the probability that its receptive field shows a real surface.
#[derive(Clone, Debug)]
pub struct PatchDiscriminator {
    pub spec: DiscriminatorSpec,
    pub net: Sequential,
}

pub fn build_discriminator(spec: &DiscriminatorSpec, seed: u64) -> Result<PatchDiscriminator> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 21));
    let mut layers = Vec::new();
    let mut in_ch = 2;
    for (i, (&out, &stride)) in spec.widths.iter().zip(&DiscriminatorSpec::STRIDES).enumerate() {
        let last = i == DiscriminatorSpec::N_LAYERS - 1;
        let norm = spec.norm && i > 0 && !last;
        let name = format!("disc.conv{i}");
        layers.push(Layer::Conv(Conv2d::new(&name, in_ch, out, 4, stride, 1, !norm, &mut rng)));
        if norm {
            layers.push(Layer::Norm(BatchNorm2d::new(&format!("disc.norm{i}"), out, &mut rng)));
        }
        let act = if last { ActKind::Sigmoid } else { ActKind::LeakyRelu(spec.leaky_slope) };
        layers.push(Layer::Act(Activation::new(act)));
        in_ch = out;
    }
    Ok(PatchDiscriminator {
        spec: spec.clone(),
        net: Sequential::new(layers),
    })
}

impl PatchDiscriminator {
    pub fn forward(&mut self, dsm: &Tensor, candidate: &Tensor, mode: Mode) -> Result<Tensor> {
        let (a, b) = (dsm.shape(), candidate.shape());
        if a != b || a.channels != 1 {
            return Err(Error::Input(format!(
                "discriminator inputs must be matching single-channel tensors, got {a} and {b}"
            )));
        }
        self.net.forward(&Tensor::concat_channels(dsm, candidate)?, mode)
    }

    /// Accumulates parameter gradients; returns the gradient with respect to
    /// the candidate channel when asked.
    pub fn backward(&mut self, grad: &Tensor, candidate_grad: bool) -> Result<Option<Tensor>> {
        Ok(self.net.backward(grad, candidate_grad)?.map(|g| g.split_channels(1).1))
    }

    pub fn conv_layers(&self) -> Vec<&Conv2d> {
        self.net
            .layers
            .iter()
            .filter_map(|l| match l {
                Layer::Conv(c) => Some(c),
                _ => None,
            })
            .collect()
    }
}

impl Module for PatchDiscriminator {
    fn visit(&self, f: &mut dyn FnMut(&Param)) {
        self.net.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Param)) {
        self.net.visit_mut(f);
    }
}
