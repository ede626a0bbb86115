//! Least-squares adversarial terms and the weighted L1 reconstruction loss.

use dsm_refine::objective::{d_loss, g_adv_loss, g_total_loss, l1_loss, LossWeights};
use dsm_refine::Result;

fn main() -> Result<()> {
    let d_real = [0.9f32, 0.8, 0.95, 0.7];
    let d_fake = [0.2f32, 0.4, 0.1, 0.3];
    let generated = [0.1f32, -0.5, 0.3, 0.9];
    let truth = [0.0f32, -0.4, 0.5, 0.9];
    let valid = [1.0f32, 1.0, 0.0, 1.0];
    let w = LossWeights::default();
    println!("discriminator loss   {:.4}", d_loss(&d_real, &d_fake)?);
    println!("generator adversarial {:.4}", g_adv_loss(&d_fake)?);
    println!("masked L1            {:.4}", l1_loss(&generated, &truth, Some(&valid[..]))?);
    println!(
        "generator total (λ = {}) {:.4}",
        w.lambda_l1,
        g_total_loss(&d_fake, &generated, &truth, &w, Some(&valid[..]))?
    );
    Ok(())
}
