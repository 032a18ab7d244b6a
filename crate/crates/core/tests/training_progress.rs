//! Training makes progress on the linear sinusoidal prior: the smoothed
//! loss trace (window 100) ends below where it started, averaged over seeds.

use tabcause_core::model::{ModelConfig, ModelState};
use tabcause_core::prior::SinusoidalPrior;
use tabcause_core::train::{train, TrainConfig};

#[test]
fn smoothed_loss_falls_over_training() {
    let window = 100;
    let mut head_sum = 0.0;
    let mut tail_sum = 0.0;
    for seed in [11u64, 12, 13] {
        let config = ModelConfig {
            n_layers: 1,
            d_model: 16,
            n_heads: 2,
            n_bins: 16,
            max_features: 12,
            base_support: (-10.0, 10.0),
            theta_t: 1.0,
        };
        let model = ModelState::init(config, seed).unwrap();
        let cfg = TrainConfig {
            b_t: 1,
            b_q: 8,
            steps: 2000,
            learning_rate: 3e-4,
            warmup_steps: 200,
            sigma_smooth: 0.5,
            seed,
            min_context: 8,
            max_context: 48,
            checkpoint_every: u64::MAX,
        };
        let sampler = SinusoidalPrior {
            omega_lo: 0.0,
            omega_hi: 0.0,
        };
        let (_, trace) = train(model, &cfg, &sampler, 1).unwrap();
        head_sum += trace[..window].iter().map(|r| r.loss).sum::<f64>() / window as f64;
        tail_sum += trace[trace.len() - window..]
            .iter()
            .map(|r| r.loss)
            .sum::<f64>()
            / window as f64;
    }
    assert!(
        tail_sum < head_sum,
        "mean smoothed loss did not fall: {:.4} -> {:.4}",
        head_sum / 3.0,
        tail_sum / 3.0
    );
}
