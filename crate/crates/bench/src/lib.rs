//! Fixtures shared by the benchmarks.

use histoxai_core::dataset::{generate, GeneratorParams, LabeledSet};
use histoxai_core::models::{self, ArchitectureSpec, Family};
use histoxai_core::network::{Mode, Network};
use histoxai_core::Tensor4;

pub const SEED: u64 = 7;

pub fn images(n: usize) -> LabeledSet {
    generate(n, SEED, &GeneratorParams::default()).expect("generator")
}

/// A freshly built network whose batchnorm statistics have been seeded, so
/// it can run in eval mode.
pub fn ready_network(family: Family, batch: &Tensor4) -> Network {
    let mut net = models::build(&ArchitectureSpec::new(family, SEED)).expect("build");
    let cache = net.forward(batch, Mode::Train).expect("forward");
    net.commit_batch_stats(&cache);
    net
}
