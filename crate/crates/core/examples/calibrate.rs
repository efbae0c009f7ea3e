//! Prints the largest-box ratio at the reference checkpoints for each
//! packing policy, next to the published values.
//!
//! cargo run --release -p harmopack-core --example calibrate -- 1000000

use harmopack::boxstore::BoxOrder;
use harmopack::geometry::OrientationRule;
use harmopack::stream::NullSink;
use harmopack::{Float, Packer, PackerConfig, SplitPolicy};

const REFERENCE: [(u64, f64); 4] = [(1_000, 0.4142), (10_000, 0.3441), (100_000, 0.3577), (1_000_000, 0.3554)];

fn main() {
    let n_max: u64 = std::env::args()
        .nth(1)
        .map(|s| s.parse().expect("n must be an integer"))
        .unwrap_or(100_000);
    for order in [BoxOrder::ShortSideArea, BoxOrder::AreaWidth] {
        for orientation in [OrientationRule::AcrossShortSide, OrientationRule::UnrotatedFirst] {
            for split in [SplitPolicy::Adaptive, SplitPolicy::Vertical, SplitPolicy::Horizontal] {
                let mut config = PackerConfig::new(n_max);
                config.order = order;
                config.orientation = orientation;
                config.split = split;
                config.snapshots = REFERENCE.iter().map(|r| r.0).filter(|&n| n <= n_max).collect();
                let started = std::time::Instant::now();
                let result = Packer::<Float>::new(config).unwrap().run(&mut NullSink, None).unwrap();
                print!("order={order:<5} orient={orientation:<9} split={split:<8} {:?}", result.termination);
                for s in &result.snapshots {
                    let target = REFERENCE.iter().find(|r| r.0 == s.n).unwrap().1;
                    print!("  n={} ratio={:.4} (ref {target})", s.n, s.ratio.0);
                }
                println!("  [{:.1?}]", started.elapsed());
            }
        }
    }
}
