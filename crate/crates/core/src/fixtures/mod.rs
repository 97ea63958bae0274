//! Deterministic generators for the bundled fixture files.

pub mod demos;
pub mod hands;

use crate::pipeline::TransferConfig;

/// Transfer config for a bundled demo on the toy hand, with paths relative
/// to a `configs/` directory beside `hands/` and `demos/`.
pub fn toy_config(demo: &str) -> TransferConfig {
    let mut cfg = TransferConfig::new(
        "../hands/toy3.json",
        format!("../demos/{demo}.json"),
        format!("../../runs/{demo}_toy3"),
    );
    cfg.adapt.rho[..3].fill(0.15);
    cfg.ppo.hidden = vec![64, 64];
    cfg
}

/// Names and builders of the bundled configs.
pub fn bundled_configs() -> Vec<(String, TransferConfig)> {
    demos::bundled_demos()
        .into_iter()
        .map(|(name, _)| (format!("{name}_toy3"), toy_config(name)))
        .collect()
}
