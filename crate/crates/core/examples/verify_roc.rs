//! Face verification from cosine scores: accuracy at the best threshold,
//! AUC and a few ROC operating points, first on oracle identity codes, then
//! on noisy codes.

use bridge_distill::datagen::verification_pairs;
use bridge_distill::eval::verify_features;
use bridge_distill::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> bridge_distill::Result<()> {
    let ids: Vec<usize> = (0..300).map(|i| i % 15).collect();
    let pairs = verification_pairs(&ids, 150, 150, 0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for noise in [0.0f32, 0.5, 1.0, 3.0] {
        let feats = Tensor::from_fn(&[300, 15], |i| {
            let signal = if i % 15 == ids[i / 15] { 1.0 } else { 0.0 };
            signal + noise * rng.random_range(-1.0f32..1.0)
        })?;
        let v = verify_features(&feats, &pairs)?;
        println!(
            "noise {noise:3.1}: acc {:.3} at cos >= {:+.3}, auc {:.3}, tpr@fpr0.01 {:.3}, tpr@fpr0.1 {:.3}",
            v.accuracy,
            v.threshold,
            v.roc.auc,
            v.tpr_at_fpr(0.01),
            v.tpr_at_fpr(0.1)
        );
    }
    Ok(())
}
