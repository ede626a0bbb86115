//! Least-squares adversarial losses plus weighted L1 reconstruction.
//!
//! Inputs are flat slices of any `f64`-convertible scalar so the same code
//! serves `f32` training tensors and `f64` finite-difference checks. Every
//! loss has a matching gradient with respect to its direct inputs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub lambda_l1: f64,
    pub real_label: f64,
    pub fake_label: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_l1: 100.0,
            real_label: 1.0,
            fake_label: 0.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_l1.is_finite() && self.lambda_l1 >= 0.0) {
            return Err(Error::Parameter(format!("lambda_l1 must be finite and >= 0, got {}", self.lambda_l1)));
        }
        Ok(())
    }
}

/// Per-step loss components as written to the training log.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: u64,
    pub epoch: u32,
    pub d_loss: f64,
    pub g_adv: f64,
    pub g_l1: f64,
    pub g_total: f64,
}

fn nonempty<T>(x: &[T], what: &str) -> Result<()> {
    if x.is_empty() {
        return Err(Error::Parameter(format!("{what} is empty")));
    }
    Ok(())
}

fn same_len<T, U>(a: &[T], b: &[U], what: &str) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Input(format!("{what}: lengths {} and {} differ", a.len(), b.len())));
    }
    Ok(())
}

/// Mean of `(x - target)²`.
fn mean_sq<T: Copy + Into<f64>>(x: &[T], target: f64) -> f64 {
    x.iter().map(|&v| (v.into() - target).powi(2)).sum::<f64>() / x.len() as f64
}

fn mean_sq_grad<T: Copy + Into<f64>>(x: &[T], target: f64) -> Vec<f64> {
    let n = x.len() as f64;
    x.iter().map(|&v| 2.0 * (v.into() - target) / n).collect()
}

/// `mean((real - 1)²) + mean(fake²)`.
pub fn d_loss<T: Copy + Into<f64>>(d_on_real: &[T], d_on_fake: &[T]) -> Result<f64> {
    LossWeights::default().d_loss(d_on_real, d_on_fake)
}

/// `mean((fake - 1)²)`.
pub fn g_adv_loss<T: Copy + Into<f64>>(d_on_fake: &[T]) -> Result<f64> {
    LossWeights::default().g_adv_loss(d_on_fake)
}

/// Gradients of [`d_loss`] with respect to the real and fake maps.
pub fn d_loss_grad<T: Copy + Into<f64>>(d_on_real: &[T], d_on_fake: &[T]) -> Result<(Vec<f64>, Vec<f64>)> {
    LossWeights::default().d_loss_grad(d_on_real, d_on_fake)
}

pub fn g_adv_grad<T: Copy + Into<f64>>(d_on_fake: &[T]) -> Result<Vec<f64>> {
    LossWeights::default().g_adv_grad(d_on_fake)
}

fn counted<T: Copy + Into<f64>>(mask: Option<&[T]>, i: usize) -> bool {
    mask.is_none_or(|m| m[i].into() != 0.0)
}

fn l1_checks<T: Copy + Into<f64>>(generated: &[T], ground_truth: &[T], mask: Option<&[T]>) -> Result<usize> {
    same_len(generated, ground_truth, "l1 operands")?;
    if let Some(m) = mask {
        same_len(generated, m, "l1 mask")?;
    }
    let n = (0..generated.len()).filter(|&i| counted(mask, i)).count();
    if n == 0 {
        return Err(Error::Parameter("l1 loss has no valid pixels".into()));
    }
    Ok(n)
}

/// Mean absolute difference over pixels where `mask` is nonzero, or over
/// all pixels without a mask.
pub fn l1_loss<T: Copy + Into<f64>>(generated: &[T], ground_truth: &[T], mask: Option<&[T]>) -> Result<f64> {
    let n = l1_checks(generated, ground_truth, mask)?;
    let sum: f64 = (0..generated.len())
        .filter(|&i| counted(mask, i))
        .map(|i| (generated[i].into() - ground_truth[i].into()).abs())
        .sum();
    Ok(sum / n as f64)
}

/// Subgradient of [`l1_loss`] with respect to `generated`; zero at ties.
pub fn l1_grad<T: Copy + Into<f64>>(generated: &[T], ground_truth: &[T], mask: Option<&[T]>) -> Result<Vec<f64>> {
    let n = l1_checks(generated, ground_truth, mask)? as f64;
    Ok((0..generated.len())
        .map(|i| {
            if !counted(mask, i) {
                return 0.0;
            }
            let d = generated[i].into() - ground_truth[i].into();
            if d > 0.0 {
                1.0 / n
            } else if d < 0.0 {
                -1.0 / n
            } else {
                0.0
            }
        })
        .collect())
}

/// `g_adv_loss + lambda_l1 · l1_loss`.
pub fn g_total_loss<T: Copy + Into<f64>>(
    d_on_fake: &[T],
    generated: &[T],
    ground_truth: &[T],
    weights: &LossWeights,
    mask: Option<&[T]>,
) -> Result<f64> {
    Ok(weights.g_adv_loss(d_on_fake)? + weights.lambda_l1 * l1_loss(generated, ground_truth, mask)?)
}

/// Gradients of [`g_total_loss`] with respect to the discriminator output
/// on the fake and with respect to `generated` through the L1 term.
pub fn g_total_grad<T: Copy + Into<f64>>(
    d_on_fake: &[T],
    generated: &[T],
    ground_truth: &[T],
    weights: &LossWeights,
    mask: Option<&[T]>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let adv = weights.g_adv_grad(d_on_fake)?;
    let l1 = l1_grad(generated, ground_truth, mask)?
        .into_iter()
        .map(|g| weights.lambda_l1 * g)
        .collect();
    Ok((adv, l1))
}

impl LossWeights {
    pub fn d_loss<T: Copy + Into<f64>>(&self, d_on_real: &[T], d_on_fake: &[T]) -> Result<f64> {
        nonempty(d_on_real, "discriminator map on real")?;
        nonempty(d_on_fake, "discriminator map on fake")?;
        Ok(mean_sq(d_on_real, self.real_label) + mean_sq(d_on_fake, self.fake_label))
    }

    pub fn d_loss_grad<T: Copy + Into<f64>>(&self, d_on_real: &[T], d_on_fake: &[T]) -> Result<(Vec<f64>, Vec<f64>)> {
        nonempty(d_on_real, "discriminator map on real")?;
        nonempty(d_on_fake, "discriminator map on fake")?;
        Ok((self.d_real_grad(d_on_real)?, self.d_fake_grad(d_on_fake)?))
    }

    /// Gradient of the discriminator loss through its real-sample term only.
    pub fn d_real_grad<T: Copy + Into<f64>>(&self, d_on_real: &[T]) -> Result<Vec<f64>> {
        nonempty(d_on_real, "discriminator map on real")?;
        Ok(mean_sq_grad(d_on_real, self.real_label))
    }

    /// Gradient of the discriminator loss through its fake-sample term only.
    pub fn d_fake_grad<T: Copy + Into<f64>>(&self, d_on_fake: &[T]) -> Result<Vec<f64>> {
        nonempty(d_on_fake, "discriminator map on fake")?;
        Ok(mean_sq_grad(d_on_fake, self.fake_label))
    }

    pub fn g_adv_loss<T: Copy + Into<f64>>(&self, d_on_fake: &[T]) -> Result<f64> {
        nonempty(d_on_fake, "discriminator map on fake")?;
        Ok(mean_sq(d_on_fake, self.real_label))
    }

    pub fn g_adv_grad<T: Copy + Into<f64>>(&self, d_on_fake: &[T]) -> Result<Vec<f64>> {
        nonempty(d_on_fake, "discriminator map on fake")?;
        Ok(mean_sq_grad(d_on_fake, self.real_label))
    }
}
