#![allow(dead_code)]

pub mod oracle;
pub mod suites;

use std::sync::OnceLock;

use flhhe_core::mlp::{load_mnist, mnist::default_data_dir, Mnist};
use flhhe_core::proto::{Clock, ExperimentConfig, Mode};
use flhhe_core::ring::RingParams;

/// MNIST from `$FLHHE_MNIST_DIR` or `data/mnist`, loaded once per test binary.
pub fn mnist() -> &'static Mnist {
    static DATA: OnceLock<Mnist> = OnceLock::new();
    DATA.get_or_init(|| {
        let dir = default_data_dir();
        load_mnist(&dir).unwrap_or_else(|e| panic!("MNIST not found in {} ({e}); run scripts/fetch_mnist.sh", dir.display()))
    })
}

/// Small, fast configuration: toy ring, a few hundred samples per client.
pub fn quick_config(modes: &[Mode], clients: usize, rounds: usize, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        modes: modes.to_vec(),
        clients,
        rounds,
        params: RingParams::toy(),
        seed,
        sample_cap: Some(256),
        test_cap: Some(500),
        parallel: false,
        clock: Clock::Frozen,
        ..ExperimentConfig::default()
    }
}
