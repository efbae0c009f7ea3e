//! Fixtures shared by the benchmarks.

use harmopack::stream::NullSink;
use harmopack::{EmptyBox, Packer, PackerConfig, Placement, Scalar};

/// Placement stream of the default policy for the first `n` rectangles.
pub fn placements<S: Scalar>(n: u64) -> Vec<Placement<S>> {
    let mut config = PackerConfig::new(n);
    config.mode = S::MODE;
    let mut out = Vec::new();
    Packer::<S>::new(config).unwrap().run(&mut out, None).unwrap();
    out
}

/// Store contents after `n` placements of the default policy.
pub fn boxes<S: Scalar>(n: u64) -> Vec<EmptyBox<S>> {
    let mut config = PackerConfig::new(n);
    config.mode = S::MODE;
    config.emit_placements = false;
    let mut packer = Packer::<S>::new(config).unwrap();
    packer.run(&mut NullSink, None).unwrap();
    packer.store().iter().cloned().collect()
}
