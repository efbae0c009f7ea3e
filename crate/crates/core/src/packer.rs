//! The greedy packing loop.
//!
//! Starting from the unit square as the only empty box, rectangle `P_i` goes
//! into the smallest-key box it fits, at that box's lower-left corner, and
//! the leftover is split by the configured guillotine policy.

use std::io;
use std::path::Path;
use std::time::{Duration, Instant};

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::boxstore::{BoxKey, BoxOrder, BoxStore, StoreError};
use crate::checkpoint::{self, CheckpointError};
use crate::geometry::{
    fits_with, place_and_split, EmptyBox, GeometryError, Orientation, OrientationRule, Placement, RectSpec,
    SplitPolicy,
};
use crate::numerics::{Accumulator, NumericMode, Scalar};
use crate::stream::PlacementSink;

/// Snapshot points beyond the powers of ten: the rest of the grid of
/// reported ratios (2, 4 and 5 times 10^9; 2 and 5 times 10^10).
const EXTRA_SCHEDULE: [u64; 5] = [
    2_000_000_000,
    4_000_000_000,
    5_000_000_000,
    20_000_000_000,
    50_000_000_000,
];

/// Powers of ten up to 10^11 plus [`EXTRA_SCHEDULE`], ascending.
pub fn default_schedule() -> Vec<u64> {
    let mut s: Vec<u64> = (0..=11).map(|k| 10u64.pow(k)).collect();
    s.extend(EXTRA_SCHEDULE);
    s.sort_unstable();
    s
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PackerConfig {
    pub n_target: u64,
    pub mode: NumericMode,
    pub split: SplitPolicy,
    pub order: BoxOrder,
    pub orientation: OrientationRule,
    pub allow_rotation: bool,
    /// Strictly increasing `n` values at which snapshots are taken.
    pub snapshots: Vec<u64>,
    /// Save a checkpoint every this many placements (0 disables).
    pub checkpoint_every: u64,
    pub prune: bool,
    pub emit_placements: bool,
}

impl PackerConfig {
    /// Defaults: shortest-short-side box first, long side laid across the
    /// box, cut perpendicular to the box's long side. This is the only
    /// combination we found whose ratio series tracks the published one
    /// (see `examples/calibrate.rs`); the plain area order with a fixed cut
    /// runs out of room within the first hundred rectangles.
    pub const DEFAULT_SPLIT: SplitPolicy = SplitPolicy::Adaptive;
    pub const DEFAULT_ORDER: BoxOrder = BoxOrder::ShortSideArea;
    pub const DEFAULT_ORIENTATION: OrientationRule = OrientationRule::AcrossShortSide;

    pub fn new(n_target: u64) -> Self {
        PackerConfig {
            n_target,
            mode: NumericMode::Float,
            split: Self::DEFAULT_SPLIT,
            order: Self::DEFAULT_ORDER,
            orientation: Self::DEFAULT_ORIENTATION,
            allow_rotation: true,
            snapshots: default_schedule(),
            checkpoint_every: 0,
            prune: false,
            emit_placements: true,
        }
    }

    pub fn validate(&self) -> Result<(), PackError> {
        if self.n_target == 0 {
            return Err(PackError::InvalidConfig("n_target must be at least 1".into()));
        }
        if self.snapshots.windows(2).any(|w| w[0] >= w[1]) {
            return Err(PackError::InvalidConfig(
                "snapshot schedule must be strictly increasing".into(),
            ));
        }
        if self.snapshots.first() == Some(&0) {
            return Err(PackError::InvalidConfig("snapshot points start at n = 1".into()));
        }
        Ok(())
    }

    /// Hash of every setting that influences the placement stream. A
    /// checkpoint only resumes under a config with the same hash.
    pub fn stream_hash(&self) -> String {
        let mut canon = format!(
            "mode={};split={};order={};orient={};rotate={};prune={}",
            self.mode, self.split, self.order, self.orientation, self.allow_rotation, self.prune
        );
        if self.prune {
            canon.push_str(&format!(";n_target={}", self.n_target));
        }
        let digest = Sha256::digest(canon.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Error)]
pub enum PackError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("config selects {config} arithmetic but the engine runs {engine}")]
    ModeMismatch {
        config: NumericMode,
        engine: NumericMode,
    },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("placement stream: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

/// Scan lengths observed since the previous snapshot.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ScanWindow {
    pub queries: u64,
    pub total: u64,
    pub max: u64,
}

impl ScanWindow {
    fn record(&mut self, scanned: usize) {
        self.queries += 1;
        self.total += scanned as u64;
        self.max = self.max.max(scanned as u64);
    }

    pub fn mean(&self) -> f64 {
        if self.queries == 0 {
            0.0
        } else {
            self.total as f64 / self.queries as f64
        }
    }
}

/// Statistics after `n` placements.
#[derive(Clone, Debug)]
pub struct StatsSnapshot<S> {
    pub n: u64,
    pub largest_w: S,
    pub largest_h: S,
    pub largest_area: S,
    /// `1/(n+1)`.
    pub remaining: S,
    /// `largest_area * (n+1)`.
    pub ratio: S,
    pub box_count: u64,
    pub scan: ScanWindow,
    /// `1 - placed - stored - pruned`; zero for a sound exact run.
    pub residual: S,
    pub wall_time: Duration,
}

/// Equality ignores wall time.
impl<S: PartialEq> PartialEq for StatsSnapshot<S> {
    fn eq(&self, o: &Self) -> bool {
        self.n == o.n
            && self.largest_w == o.largest_w
            && self.largest_h == o.largest_h
            && self.largest_area == o.largest_area
            && self.remaining == o.remaining
            && self.ratio == o.ratio
            && self.box_count == o.box_count
            && self.scan == o.scan
            && self.residual == o.residual
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Termination {
    Completed,
    NoFit { index: u64 },
    Aborted { reason: String },
}

#[derive(Clone, Debug, PartialEq)]
pub struct PackingResult<S> {
    pub final_snapshot: Option<StatsSnapshot<S>>,
    pub snapshots: Vec<StatsSnapshot<S>>,
    pub termination: Termination,
    pub placed: u64,
}

/// One committed step.
#[derive(Clone, Debug)]
pub struct Step<S> {
    pub placement: Placement<S>,
    pub host: BoxKey<S>,
    pub scanned: usize,
}

pub struct Packer<S: Scalar> {
    config: PackerConfig,
    store: BoxStore<S>,
    next_id: u64,
    placed: u64,
    placed_area: S::Acc,
    snapshots: Vec<StatsSnapshot<S>>,
    window: ScanWindow,
    started: Instant,
}

impl<S: Scalar> Packer<S> {
    pub fn new(config: PackerConfig) -> Result<Self, PackError> {
        config.validate()?;
        if config.mode != S::MODE {
            return Err(PackError::ModeMismatch {
                config: config.mode,
                engine: S::MODE,
            });
        }
        let mut store = BoxStore::with_order(config.order);
        store.insert(EmptyBox::unit(0))?;
        if config.prune {
            store.prune_too_small(config.n_target);
        }
        Ok(Packer {
            config,
            store,
            next_id: 1,
            placed: 0,
            placed_area: S::Acc::default(),
            snapshots: Vec::new(),
            window: ScanWindow::default(),
            started: Instant::now(),
        })
    }

    pub fn config(&self) -> &PackerConfig {
        &self.config
    }

    pub fn store(&self) -> &BoxStore<S> {
        &self.store
    }

    /// Number of rectangles placed so far.
    pub fn placed(&self) -> u64 {
        self.placed
    }

    pub fn placed_area(&self) -> S {
        self.placed_area.value()
    }

    pub fn snapshots(&self) -> &[StatsSnapshot<S>] {
        &self.snapshots
    }

    /// Places the next rectangle.
    pub fn step(&mut self) -> Result<Step<S>, PackError> {
        let allow_rotation = self.config.allow_rotation;
        let rule = self.config.orientation;
        self.step_with(|b, r| fits_with(b, r, allow_rotation, rule))
    }

    /// Places the next rectangle using a substitute fit predicate. Used to
    /// inject faults when exercising the replay comparison.
    pub fn step_with<F>(&mut self, pred: F) -> Result<Step<S>, PackError>
    where
        F: FnMut(&EmptyBox<S>, &RectSpec<S>) -> Option<Orientation>,
    {
        let r = RectSpec::new(self.placed + 1);
        let got = self.store.extract_smallest_by(&r, pred)?;
        let (placement, children) = place_and_split(
            &got.boxed,
            &r,
            got.orientation,
            self.config.split,
            &mut self.next_id,
        )?;
        for child in children {
            self.store.insert(child)?;
        }
        self.placed_area.add(&placement.area());
        self.placed += 1;
        self.window.record(got.scanned);
        Ok(Step {
            placement,
            host: got.key,
            scanned: got.scanned,
        })
    }

    /// Statistics for the current state.
    pub fn snapshot(&self) -> StatsSnapshot<S> {
        let largest = self.store.largest().ok();
        let (w, h, area) = match largest {
            Some(b) => (b.w.clone(), b.h.clone(), b.area()),
            None => (S::zero(), S::zero(), S::zero()),
        };
        let n1 = S::from_u64(self.placed + 1);
        StatsSnapshot {
            n: self.placed,
            ratio: area.clone() * n1,
            remaining: S::recip(self.placed + 1),
            largest_w: w,
            largest_h: h,
            largest_area: area,
            box_count: self.store.len() as u64,
            scan: self.window,
            residual: self.residual(),
            wall_time: self.started.elapsed(),
        }
    }

    /// `1 - placed - stored - pruned`.
    pub fn residual(&self) -> S {
        S::one() - self.placed_area.value() - self.store.total_area() - self.store.pruned_area()
    }

    /// Runs to `n_target` or the first failure.
    pub fn run(
        &mut self,
        sink: &mut dyn PlacementSink<S>,
        checkpoint_path: Option<&Path>,
    ) -> Result<PackingResult<S>, PackError> {
        self.run_until(self.config.n_target, sink, checkpoint_path)
    }

    /// Runs until `limit` rectangles are placed (capped at `n_target`).
    /// Sink and checkpoint I/O failures are returned as errors; a missing
    /// fit ends the run with [`Termination::NoFit`].
    pub fn run_until(
        &mut self,
        limit: u64,
        sink: &mut dyn PlacementSink<S>,
        checkpoint_path: Option<&Path>,
    ) -> Result<PackingResult<S>, PackError> {
        let limit = limit.min(self.config.n_target);
        let mut next_snap = self.next_snapshot_index();
        let mut termination = Termination::Completed;
        while self.placed < limit {
            let step = match self.step() {
                Ok(step) => step,
                Err(PackError::Store(StoreError::NoFit(index))) => {
                    termination = Termination::NoFit { index };
                    break;
                }
                Err(e) => return Err(e),
            };
            if self.config.emit_placements {
                sink.accept(&step.placement)?;
            }
            if next_snap < self.config.snapshots.len() && self.config.snapshots[next_snap] == self.placed {
                self.take_snapshot();
                next_snap += 1;
            }
            if self.config.checkpoint_every > 0 && self.placed.is_multiple_of(self.config.checkpoint_every) {
                if let Some(path) = checkpoint_path {
                    sink.flush()?;
                    checkpoint::save(self, sink.position(), path)?;
                }
            }
        }
        sink.flush()?;
        if termination == Termination::Completed && self.placed < self.config.n_target {
            termination = Termination::Aborted {
                reason: format!("stopped at {} of {}", self.placed, self.config.n_target),
            };
        }
        let final_snapshot = (self.placed > 0).then(|| self.snapshot());
        Ok(PackingResult {
            final_snapshot,
            snapshots: self.snapshots.clone(),
            termination,
            placed: self.placed,
        })
    }

    fn take_snapshot(&mut self) {
        let snap = self.snapshot();
        self.snapshots.push(snap);
        self.window = ScanWindow::default();
    }

    fn next_snapshot_index(&self) -> usize {
        self.config.snapshots.partition_point(|&n| n <= self.placed)
    }

    pub(crate) fn parts(&self) -> PackerParts<'_, S> {
        PackerParts {
            config: &self.config,
            store: &self.store,
            next_id: self.next_id,
            placed: self.placed,
            placed_area: &self.placed_area,
            snapshots: &self.snapshots,
            window: self.window,
        }
    }

    pub(crate) fn from_parts(
        config: PackerConfig,
        store: BoxStore<S>,
        next_id: u64,
        placed: u64,
        placed_area: S::Acc,
        snapshots: Vec<StatsSnapshot<S>>,
        window: ScanWindow,
    ) -> Self {
        Packer {
            config,
            store,
            next_id,
            placed,
            placed_area,
            snapshots,
            window,
            started: Instant::now(),
        }
    }

    /// Resumes from a checkpoint written under an equivalent config.
    pub fn resume(config: PackerConfig, path: &Path) -> Result<(Self, u64), PackError> {
        config.validate()?;
        Ok(checkpoint::load(config, path)?)
    }
}

pub(crate) struct PackerParts<'a, S: Scalar> {
    pub config: &'a PackerConfig,
    pub store: &'a BoxStore<S>,
    pub next_id: u64,
    pub placed: u64,
    pub placed_area: &'a S::Acc,
    pub snapshots: &'a [StatsSnapshot<S>],
    pub window: ScanWindow,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{Exact, Float};
    use crate::stream::NullSink;

    fn exact_config(n: u64) -> PackerConfig {
        PackerConfig {
            mode: NumericMode::Exact,
            ..PackerConfig::new(n)
        }
    }

    #[test]
    fn single_step_trace() {
        let mut p = Packer::<Exact>::new(exact_config(1)).unwrap();
        let mut out = Vec::new();
        let res = p.run(&mut out, None).unwrap();
        assert_eq!(res.termination, Termination::Completed);
        assert_eq!(out.len(), 1);
        // The default rule stands P_1 upright in the square.
        assert_eq!((out[0].w.clone(), out[0].h.clone()), (Exact::ratio(1, 2), Exact::one()));
        assert!(out[0].rotated);
        let boxes: Vec<_> = p.store().iter().cloned().collect();
        assert_eq!(boxes.len(), 1);
        assert_eq!((boxes[0].w.clone(), boxes[0].h.clone()), (Exact::ratio(1, 2), Exact::one()));
        let snap = &res.snapshots[0];
        assert_eq!(snap.n, 1);
        assert_eq!(snap.ratio, Exact::one());
        assert_eq!(snap.residual, Exact::zero());
    }

    #[test]
    fn single_step_trace_unrotated_rule() {
        let mut c = exact_config(1);
        c.orientation = OrientationRule::UnrotatedFirst;
        let mut p = Packer::<Exact>::new(c).unwrap();
        let res = p.run(&mut NullSink, None).unwrap();
        let b = p.store().largest().unwrap();
        assert_eq!((b.x.clone(), b.y.clone()), (Exact::zero(), Exact::ratio(1, 2)));
        assert_eq!((b.w.clone(), b.h.clone()), (Exact::one(), Exact::ratio(1, 2)));
        assert_eq!(res.final_snapshot.unwrap().ratio, Exact::one());
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(Packer::<Float>::new(PackerConfig::new(0)).is_err());
        let mut c = PackerConfig::new(10);
        c.snapshots = vec![5, 5];
        assert!(Packer::<Float>::new(c).is_err());
        assert!(matches!(
            Packer::<Float>::new(exact_config(10)),
            Err(PackError::ModeMismatch { .. })
        ));
    }

    #[test]
    fn exact_conservation_holds_at_every_step() {
        let mut c = exact_config(600);
        let mut p = Packer::<Exact>::new(c.clone()).unwrap();
        while p.placed() < 600 {
            p.step().unwrap();
            assert_eq!(p.store().total_area(), Exact::recip(p.placed() + 1));
            assert_eq!(p.residual(), Exact::zero());
        }
        // The alternative policies dead-end early but conserve area until then.
        for split in [SplitPolicy::Vertical, SplitPolicy::Horizontal] {
            for rot in [false, true] {
                c.split = split;
                c.order = BoxOrder::AreaWidth;
                c.orientation = OrientationRule::UnrotatedFirst;
                c.allow_rotation = rot;
                let mut p = Packer::<Exact>::new(c.clone()).unwrap();
                while p.step().is_ok() {
                    assert_eq!(p.store().total_area(), Exact::recip(p.placed() + 1));
                }
            }
        }
    }

    #[test]
    fn area_order_with_fixed_cut_dead_ends() {
        let mut c = PackerConfig::new(1000);
        c.order = BoxOrder::AreaWidth;
        c.orientation = OrientationRule::UnrotatedFirst;
        c.split = SplitPolicy::Horizontal;
        let res = Packer::<Float>::new(c).unwrap().run(&mut NullSink, None).unwrap();
        assert_eq!(res.termination, Termination::NoFit { index: 4 });
        assert_eq!(res.placed, 3);
    }

    #[test]
    fn ratio_stays_in_unit_interval() {
        let mut c = PackerConfig::new(5000);
        c.snapshots = (1..=5000).step_by(97).collect();
        let mut p = Packer::<Float>::new(c).unwrap();
        let res = p.run(&mut NullSink, None).unwrap();
        for s in res.snapshots.iter().skip(1) {
            assert!(s.ratio.0 > 0.0 && s.ratio.0 < 1.0, "n={} ratio={}", s.n, s.ratio);
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let run = || {
            let mut p = Packer::<Float>::new(PackerConfig::new(3000)).unwrap();
            let mut v = Vec::new();
            let r = p.run(&mut v, None).unwrap();
            (v, r)
        };
        let (a, ra) = run();
        let (b, rb) = run();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
    }

    #[test]
    fn pruning_keeps_conservation_closed() {
        let mut c = exact_config(400);
        c.prune = true;
        let mut p = Packer::<Exact>::new(c).unwrap();
        let res = p.run(&mut NullSink, None).unwrap();
        assert_eq!(res.termination, Termination::Completed);
        assert_eq!(p.residual(), Exact::zero());
    }

    #[test]
    fn emit_flag_controls_sink() {
        let mut c = PackerConfig::new(50);
        c.emit_placements = false;
        let mut v = Vec::new();
        Packer::<Float>::new(c).unwrap().run(&mut v, None).unwrap();
        assert!(v.is_empty());
    }

    #[test]
    fn stream_hash_ignores_irrelevant_fields() {
        let a = PackerConfig::new(10);
        let mut b = PackerConfig::new(99);
        b.snapshots = vec![3];
        assert_eq!(a.stream_hash(), b.stream_hash());
        b.split = SplitPolicy::Vertical;
        assert_ne!(a.stream_hash(), b.stream_hash());
    }
}
