//! Order-stable reductions over gathered pixel values.

use crate::error::{Error, Result};

/// Scale that makes the median absolute deviation consistent with the
/// standard deviation of a normal distribution.
pub const NMAD_SCALE: f64 = 1.4826;

const PAIRWISE_LEAF: usize = 64;

/// Pairwise (cascade) summation. Error grows with `log n` instead of `n`.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= PAIRWISE_LEAF {
        return xs.iter().sum();
    }
    let (a, b) = xs.split_at(xs.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

fn mean(xs: &[f64]) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::Evaluation("no valid pixels inside the mask".into()));
    }
    Ok(pairwise_sum(xs) / xs.len() as f64)
}

pub fn mae_of(deltas: &[f64]) -> Result<f64> {
    mean(&deltas.iter().map(|d| d.abs()).collect::<Vec<_>>())
}

pub fn rmse_of(deltas: &[f64]) -> Result<f64> {
    Ok(mean(&deltas.iter().map(|d| d * d).collect::<Vec<_>>())?.sqrt())
}

/// Median; even-sized sets take the midpoint of the two central values.
pub fn median(xs: &[f64]) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::Evaluation("median of an empty set".into()));
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Ok(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

pub fn nmad_of(deltas: &[f64]) -> Result<f64> {
    let m = median(deltas)?;
    let dev: Vec<f64> = deltas.iter().map(|d| (d - m).abs()).collect();
    Ok(NMAD_SCALE * median(&dev)?)
}

/// Pearson correlation; either series being constant is an error.
pub fn ncc_of(pred: &[f64], gt: &[f64]) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::Input(format!("series lengths differ: {} vs {}", pred.len(), gt.len())));
    }
    let (mp, mg) = (mean(pred)?, mean(gt)?);
    let dp: Vec<f64> = pred.iter().map(|p| p - mp).collect();
    let dg: Vec<f64> = gt.iter().map(|g| g - mg).collect();
    let cov = pairwise_sum(&dp.iter().zip(&dg).map(|(a, b)| a * b).collect::<Vec<_>>());
    let vp = pairwise_sum(&dp.iter().map(|a| a * a).collect::<Vec<_>>());
    let vg = pairwise_sum(&dg.iter().map(|b| b * b).collect::<Vec<_>>());
    if vp == 0.0 || vg == 0.0 {
        return Err(Error::Evaluation(format!(
            "correlation undefined: {} series is constant over the mask",
            if vp == 0.0 { "predicted" } else { "reference" }
        )));
    }
    Ok((cov / (vp * vg).sqrt()).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn nmad_worked_example() {
        let d = [0.0, 1.0, 2.0, 3.0, 100.0];
        assert_eq!(median(&d).unwrap(), 2.0);
        assert!((nmad_of(&d).unwrap() - 1.4826).abs() <= 1e-12);
        assert_eq!(nmad_of(&[5.0; 7]).unwrap(), 0.0);
    }

    #[test]
    fn even_median_is_the_midpoint() {
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]).unwrap(), 2.5);
        assert_eq!(median(&[7.0]).unwrap(), 7.0);
        assert!(median(&[]).is_err());
    }

    #[test]
    fn rmse_of_alternating_signs() {
        assert_eq!(rmse_of(&[3.0, -3.0, 3.0, -3.0]).unwrap(), 3.0);
        assert_eq!(mae_of(&[3.0, -3.0, 3.0, -3.0]).unwrap(), 3.0);
    }

    #[test]
    fn pairwise_sum_matches_exact_integers() {
        let xs: Vec<f64> = (1..=10_000).map(f64::from).collect();
        assert_eq!(pairwise_sum(&xs), 50_005_000.0);
    }

    #[test]
    fn nmad_resists_outliers_that_blow_up_rmse() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let clean: Vec<f64> = (0..1000).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut dirty = clean.clone();
        for d in dirty.iter_mut().step_by(10) {
            *d = 1000.0;
        }
        let (n0, n1) = (nmad_of(&clean).unwrap(), nmad_of(&dirty).unwrap());
        assert!((n1 - n0).abs() / n0 < 0.5, "{n0} -> {n1}");
        assert!(rmse_of(&dirty).unwrap() > 100.0 * rmse_of(&clean).unwrap());
    }
}
