//! Shared fixtures for the criterion benches.

use dabridge::approx::{Activation, Mlp, MlpConfig, TimeEmbedding};
use dabridge::datasets::gen_blur_pairs;
use dabridge::PairedDataset;

pub const SIDE: usize = 8;

/// Blurred 8×8 pairs; the same fixture for every bench.
pub fn blur_data(n: usize) -> PairedDataset {
    gen_blur_pairs(n, SIDE, 1, 17).expect("blur fixture")
}

/// Network at the reference width on 8×8 inputs.
pub fn reference_net(seed: u64) -> Mlp {
    let cfg = MlpConfig::for_data(SIDE * SIDE, &[128, 128], Activation::Tanh, TimeEmbedding::Scalar, false)
        .seed(seed);
    Mlp::new(cfg).expect("valid config")
}
