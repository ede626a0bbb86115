//! Builds the full-size WNet generator and patch discriminator and prints
//! their shapes and parameter counts.

use dsm_refine::nets::{build_discriminator, build_generator, Architecture, DiscriminatorSpec, GeneratorSpec};
use dsm_refine::nn::{Mode, Module, Tensor, TensorShape};
use dsm_refine::Result;

fn main() -> Result<()> {
    let spec = GeneratorSpec::default();
    let mut g = build_generator(&spec, 0)?;
    let baseline = build_generator(&GeneratorSpec { architecture: Architecture::SingleStream, ..spec.clone() }, 0)?;
    let mut d = build_discriminator(&DiscriminatorSpec::default(), 0)?;
    println!("WNet generator: {} parameters", g.param_count());
    println!("single-stream generator: {} parameters", baseline.param_count());
    println!("discriminator: {} parameters, {} convolutions", d.param_count(), d.conv_layers().len());

    let shape = TensorShape::new(1, 1, spec.in_size, spec.in_size);
    let x = Tensor::full(shape, 0.1);
    let y = g.forward(&x, &x, Mode::Eval)?;
    let p = d.forward(&x, &y, Mode::Eval)?;
    println!("generator {shape} -> {}, output range ±{:.3}", y.shape(), y.max_abs());
    println!("discriminator map {}", p.shape());
    Ok(())
}
