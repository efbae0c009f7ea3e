//! Independent checks over a placement stream: disjoint interiors,
//! containment, area conservation, and the float/exact replay comparison.
//!
//! Nothing here looks at engine internals; the inputs are the artifacts the
//! packer writes.

use std::collections::BTreeSet;

use serde::Serialize;
use thiserror::Error;

use crate::geometry::{fits_with, EmptyBox, Orientation, Placement, RectSpec};
use crate::numerics::{Accumulator, Exact, Float, NumericMode, Scalar};
use crate::packer::{PackError, Packer, PackerConfig};
use crate::stream::BoxDump;

/// Pairs kept in a report before the rest is only counted.
pub const MAX_REPORTED_PAIRS: usize = 100;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("placement stream holds {placements} rectangles but the box dump was taken at n={dump}")]
    MismatchedN { placements: u64, dump: u64 },
    #[error("replay is limited to n <= {max}, got {got}")]
    ReplayTooLong { max: u64, got: u64 },
    #[error(transparent)]
    Pack(#[from] PackError),
}

/// Overlapping pairs, as `(smaller index, larger index)` in ascending order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct OverlapReport {
    pub pairs: Vec<(u64, u64)>,
    pub total: u64,
}

impl OverlapReport {
    fn from_pairs(mut all: Vec<(u64, u64)>) -> Self {
        all.sort_unstable();
        all.dedup();
        let total = all.len() as u64;
        all.truncate(MAX_REPORTED_PAIRS);
        OverlapReport { pairs: all, total }
    }

    pub fn is_clean(&self) -> bool {
        self.total == 0
    }

    pub fn truncated(&self) -> u64 {
        self.total - self.pairs.len() as u64
    }
}

/// `(x, right, y, top)` of a placement.
type Extent<S> = (S, S, S, S);

fn extent<S: Scalar>(p: &Placement<S>) -> Extent<S> {
    (p.x.clone(), p.right(), p.y.clone(), p.top())
}

fn interiors_meet<S: Scalar>(a: &Extent<S>, b: &Extent<S>) -> bool {
    a.0 < b.1 && b.0 < a.1 && a.2 < b.3 && b.2 < a.3
}

fn ordered(a: u64, b: u64) -> (u64, u64) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Segment tree over compressed y coordinates. Each node keeps the active
/// intervals that cover it entirely and how many such entries sit in its
/// subtree, so queries skip empty parts of the tree.
struct CoverTree {
    size: usize,
    cover: Vec<Vec<u32>>,
    below: Vec<u32>,
}

impl CoverTree {
    fn new(segments: usize) -> Self {
        let size = segments.max(1).next_power_of_two();
        CoverTree {
            size,
            cover: vec![Vec::new(); 2 * size],
            below: vec![0; 2 * size],
        }
    }

    fn insert(&mut self, lo: usize, hi: usize, id: u32) {
        self.update(1, 0, self.size, lo, hi, id, true);
    }

    fn remove(&mut self, lo: usize, hi: usize, id: u32) {
        self.update(1, 0, self.size, lo, hi, id, false);
    }

    #[allow(clippy::too_many_arguments)]
    fn update(&mut self, node: usize, nl: usize, nr: usize, lo: usize, hi: usize, id: u32, add: bool) {
        if hi <= nl || nr <= lo {
            return;
        }
        if lo <= nl && nr <= hi {
            if add {
                self.cover[node].push(id);
            } else {
                let list = &mut self.cover[node];
                let at = list.iter().position(|&x| x == id).expect("interval was inserted");
                list.swap_remove(at);
            }
        } else {
            let mid = (nl + nr) / 2;
            self.update(2 * node, nl, mid, lo, hi, id, add);
            self.update(2 * node + 1, mid, nr, lo, hi, id, add);
        }
        if add {
            self.below[node] += 1;
        } else {
            self.below[node] -= 1;
        }
    }

    /// Calls `hit` for every stored interval sharing a segment with
    /// `[lo, hi)`; an interval may be reported more than once.
    fn query(&self, lo: usize, hi: usize, hit: &mut impl FnMut(u32)) {
        self.query_node(1, 0, self.size, lo, hi, hit);
    }

    fn query_node(&self, node: usize, nl: usize, nr: usize, lo: usize, hi: usize, hit: &mut impl FnMut(u32)) {
        if hi <= nl || nr <= lo || self.below[node] == 0 {
            return;
        }
        for &id in &self.cover[node] {
            hit(id);
        }
        if nr - nl > 1 {
            let mid = (nl + nr) / 2;
            self.query_node(2 * node, nl, mid, lo, hi, hit);
            self.query_node(2 * node + 1, mid, nr, lo, hi, hit);
        }
    }
}

/// Sweep over x. At equal x, rectangles ending there leave before those
/// starting there enter, so shared edges never count.
pub fn check_no_overlap<S: Scalar>(placements: &[Placement<S>]) -> OverlapReport {
    let n = placements.len();
    let ys: Vec<S> = placements
        .iter()
        .flat_map(|p| [p.y.clone(), p.top()])
        .collect::<BTreeSet<S>>()
        .into_iter()
        .collect();
    let slot = |v: &S| ys.binary_search(v).expect("coordinate was collected");
    let spans: Vec<(usize, usize)> = placements.iter().map(|p| (slot(&p.y), slot(&p.top()))).collect();

    // (x, 0 = leave / 1 = enter, rectangle)
    let mut events: Vec<(S, u8, u32)> = Vec::with_capacity(2 * n);
    for (k, p) in placements.iter().enumerate() {
        events.push((p.x.clone(), 1, k as u32));
        events.push((p.right(), 0, k as u32));
    }
    events.sort_unstable();

    let mut tree = CoverTree::new(ys.len().saturating_sub(1));
    let mut stamp = vec![u32::MAX; n];
    let mut found = Vec::new();
    for (_, kind, k) in events {
        let (lo, hi) = spans[k as usize];
        if kind == 0 {
            tree.remove(lo, hi, k);
            continue;
        }
        tree.query(lo, hi, &mut |other| {
            if stamp[other as usize] != k {
                stamp[other as usize] = k;
                found.push(ordered(placements[k as usize].index, placements[other as usize].index));
            }
        });
        tree.insert(lo, hi, k);
    }
    OverlapReport::from_pairs(found)
}

/// All-pairs check, split across threads.
pub fn check_no_overlap_brute<S: Scalar>(placements: &[Placement<S>]) -> OverlapReport {
    let n = placements.len();
    let extents: Vec<Extent<S>> = placements.iter().map(extent).collect();
    let extents = &extents;
    let workers = std::thread::available_parallelism().map_or(1, |w| w.get()).min(n.max(1));
    let found: Vec<(u64, u64)> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|t| {
                scope.spawn(move || {
                    let mut local = Vec::new();
                    // Strided rows balance the triangular loop.
                    for i in (t..n).step_by(workers) {
                        for j in i + 1..n {
                            if interiors_meet(&extents[i], &extents[j]) {
                                local.push(ordered(placements[i].index, placements[j].index));
                            }
                        }
                    }
                    local
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    });
    OverlapReport::from_pairs(found)
}

/// Indices of placements not inside `[0, side]²`.
pub fn check_containment<S: Scalar>(placements: &[Placement<S>], side: &S) -> Vec<u64> {
    let zero = S::zero();
    placements
        .iter()
        .filter(|p| {
            p.x < zero || p.y < zero || p.right() > *side || p.top() > *side || !p.w.is_positive() || !p.h.is_positive()
        })
        .map(|p| p.index)
        .collect()
}

/// `1 - placed - stored - pruned`, summed with the mode's accumulator.
pub fn check_conservation<S: Scalar>(placements: &[Placement<S>], dump: &BoxDump<S>) -> Result<S, VerifyError> {
    if placements.len() as u64 != dump.n {
        return Err(VerifyError::MismatchedN {
            placements: placements.len() as u64,
            dump: dump.n,
        });
    }
    let mut acc = S::Acc::default();
    acc.add(&S::one());
    for p in placements {
        acc.sub(&p.area());
    }
    for b in &dump.boxes {
        acc.sub(&b.area());
    }
    acc.sub(&dump.pruned_area);
    Ok(acc.value())
}

/// A host box key written out in the mode's text encoding.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct HostKey {
    pub id: u64,
    pub primary: String,
    pub secondary: String,
}

/// First step at which the two engines chose different host boxes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Divergence {
    pub index: u64,
    pub float_host: HostKey,
    pub exact_host: HostKey,
}

/// Largest replay the comparison accepts.
pub const MAX_REPLAY: u64 = 10_000;

/// Runs the float and exact engines side by side under `config` and
/// reports the first step whose host box id differs.
pub fn replay_compare(config: &PackerConfig, n_max: u64) -> Result<Option<Divergence>, VerifyError> {
    replay_compare_with(config, n_max, |_, _, _, fit| fit)
}

/// Same as [`replay_compare`], with a hook that may override the float
/// engine's fit decision. The hook gets the step index, the candidate box,
/// the rectangle and the regular decision.
pub fn replay_compare_with<F>(config: &PackerConfig, n_max: u64, mut perturb: F) -> Result<Option<Divergence>, VerifyError>
where
    F: FnMut(u64, &EmptyBox<Float>, &RectSpec<Float>, Option<Orientation>) -> Option<Orientation>,
{
    if n_max > MAX_REPLAY {
        return Err(VerifyError::ReplayTooLong {
            max: MAX_REPLAY,
            got: n_max,
        });
    }
    let mut float_cfg = config.clone();
    float_cfg.mode = NumericMode::Float;
    float_cfg.n_target = n_max.max(1);
    let mut exact_cfg = float_cfg.clone();
    exact_cfg.mode = NumericMode::Exact;
    let rotate = config.allow_rotation;
    let rule = config.orientation;

    let mut fl = Packer::<Float>::new(float_cfg)?;
    let mut ex = Packer::<Exact>::new(exact_cfg)?;
    for i in 1..=n_max {
        let a = fl.step_with(|b, r| perturb(i, b, r, fits_with(b, r, rotate, rule)))?;
        let b = ex.step()?;
        if a.host.id != b.host.id {
            return Ok(Some(Divergence {
                index: i,
                float_host: HostKey {
                    id: a.host.id,
                    primary: a.host.primary.encode(),
                    secondary: a.host.secondary.encode(),
                },
                exact_host: HostKey {
                    id: b.host.id,
                    primary: b.host.primary.encode(),
                    secondary: b.host.secondary.encode(),
                },
            }));
        }
    }
    Ok(None)
}

/// Summary of one verification pass.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidityReport {
    pub mode: NumericMode,
    pub n_checked: u64,
    pub container_side: String,
    pub overlap_violations: Vec<(u64, u64)>,
    pub overlap_total: u64,
    pub containment_violations: Vec<u64>,
    /// Encoded residual; absent when no box dump was supplied.
    pub conservation_residual: Option<String>,
    pub conservation_residual_f64: Option<f64>,
    pub brute_force_agrees: Option<bool>,
    pub first_divergence: Option<Divergence>,
}

impl ValidityReport {
    /// No overlaps, no containment failures and, in exact mode, a residual
    /// of exactly zero.
    pub fn is_valid(&self) -> bool {
        let residual_ok = match (&self.conservation_residual, self.mode) {
            (None, _) => true,
            (Some(r), NumericMode::Exact) => r == "0",
            (Some(_), NumericMode::Float) => self.conservation_residual_f64.is_some_and(|r| r.abs() <= 1e-11),
        };
        self.overlap_total == 0
            && self.containment_violations.is_empty()
            && residual_ok
            && self.brute_force_agrees != Some(false)
    }
}

/// Runs every check that the inputs allow. The brute-force cross-check
/// runs when the stream holds at most `brute_force_max` rectangles.
pub fn verify<S: Scalar>(
    placements: &[Placement<S>],
    dump: Option<&BoxDump<S>>,
    side: &S,
    brute_force_max: usize,
) -> Result<ValidityReport, VerifyError> {
    let overlaps = check_no_overlap(placements);
    let brute_force_agrees =
        (placements.len() <= brute_force_max).then(|| check_no_overlap_brute(placements) == overlaps);
    let residual = dump.map(|d| check_conservation(placements, d)).transpose()?;
    Ok(ValidityReport {
        mode: S::MODE,
        n_checked: placements.len() as u64,
        container_side: side.encode(),
        overlap_violations: overlaps.pairs,
        overlap_total: overlaps.total,
        containment_violations: check_containment(placements, side),
        conservation_residual_f64: residual.as_ref().map(|r| r.to_f64()),
        conservation_residual: residual.map(|r| r.encode()),
        brute_force_agrees,
        first_divergence: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boxstore::BoxOrder;
    use crate::geometry::SplitPolicy;
    use proptest::prelude::*;

    fn rect(index: u64, x: (u64, u64), y: (u64, u64), w: (u64, u64), h: (u64, u64)) -> Placement<Exact> {
        Placement {
            index,
            x: Exact::ratio(x.0, x.1),
            y: Exact::ratio(y.0, y.1),
            w: Exact::ratio(w.0, w.1),
            h: Exact::ratio(h.0, h.1),
            rotated: false,
        }
    }

    fn packed<S: Scalar>(n: u64, configure: impl FnOnce(&mut PackerConfig)) -> (Vec<Placement<S>>, BoxDump<S>) {
        let mut config = PackerConfig::new(n);
        config.mode = S::MODE;
        configure(&mut config);
        let mut packer = Packer::<S>::new(config).unwrap();
        let mut out: Vec<Placement<S>> = Vec::new();
        packer.run(&mut out, None).unwrap();
        let dump = BoxDump {
            n: packer.placed(),
            pruned_area: packer.store().pruned_area(),
            boxes: packer.store().iter().cloned().collect(),
        };
        (out, dump)
    }

    #[test]
    fn first_two_rectangles_are_disjoint() {
        // P_1 on the left, P_2 above the right half's bottom.
        let ps = vec![rect(1, (0, 1), (0, 1), (1, 1), (1, 2)), rect(2, (0, 1), (1, 2), (1, 2), (1, 3))];
        assert!(check_no_overlap(&ps).is_clean());
        assert!(check_containment(&ps, &Exact::one()).is_empty());
    }

    #[test]
    fn duplicate_placement_is_one_pair() {
        let p = rect(5, (1, 2), (1, 3), (1, 5), (1, 6));
        let mut q = p.clone();
        q.index = 6;
        let report = check_no_overlap(&[p, q]);
        assert_eq!(report.pairs, vec![(5, 6)]);
        assert_eq!(report.total, 1);
    }

    #[test]
    fn shared_edges_do_not_overlap() {
        let ps = vec![
            rect(1, (0, 1), (0, 1), (1, 2), (1, 2)),
            rect(2, (1, 2), (0, 1), (1, 2), (1, 2)),
            rect(3, (0, 1), (1, 2), (1, 2), (1, 2)),
            rect(4, (1, 2), (1, 2), (1, 2), (1, 2)),
        ];
        assert!(check_no_overlap(&ps).is_clean());
        assert!(check_no_overlap_brute(&ps).is_clean());
    }

    #[test]
    fn containment_flags_overhang() {
        let ps = vec![rect(1, (0, 1), (0, 1), (1, 2), (1, 2)), rect(2, (3, 4), (0, 1), (1, 2), (1, 3))];
        assert_eq!(check_containment(&ps, &Exact::one()), vec![2]);
        assert!(check_containment(&ps, &Exact::ratio(5, 4)).is_empty());
    }

    #[test]
    fn report_truncates_after_limit() {
        let p = rect(1, (0, 1), (0, 1), (1, 2), (1, 2));
        let ps: Vec<_> = (1..=20)
            .map(|i| Placement {
                index: i,
                ..p.clone()
            })
            .collect();
        let report = check_no_overlap(&ps);
        assert_eq!(report.total, 190);
        assert_eq!(report.pairs.len(), MAX_REPORTED_PAIRS);
        assert_eq!(report.truncated(), 90);
        assert_eq!(report, check_no_overlap_brute(&ps));
    }

    #[test]
    fn conservation_of_a_single_step_is_zero() {
        let (ps, dump) = packed::<Exact>(1, |_| {});
        assert_eq!(check_conservation(&ps, &dump).unwrap(), Exact::zero());
    }

    #[test]
    fn conservation_rejects_mismatched_dump() {
        let (ps, _) = packed::<Exact>(10, |_| {});
        let (_, dump) = packed::<Exact>(12, |_| {});
        assert!(matches!(
            check_conservation(&ps, &dump),
            Err(VerifyError::MismatchedN { placements: 10, dump: 12 })
        ));
    }

    #[test]
    fn exact_engine_output_is_valid_for_every_policy() {
        for split in [SplitPolicy::Adaptive, SplitPolicy::Vertical, SplitPolicy::Horizontal] {
            for rotate in [true, false] {
                let mut config = PackerConfig::new(600);
                config.mode = NumericMode::Exact;
                config.split = split;
                config.allow_rotation = rotate;
                let mut packer = Packer::<Exact>::new(config).unwrap();
                let mut out: Vec<Placement<Exact>> = Vec::new();
                // Some fixed-cut policies dead-end early; whatever was placed must still be sound.
                let _ = packer.run(&mut out, None);
                let dump = BoxDump {
                    n: packer.placed(),
                    pruned_area: packer.store().pruned_area(),
                    boxes: packer.store().iter().cloned().collect(),
                };
                let report = verify(&out, Some(&dump), &Exact::one(), 2000).unwrap();
                assert!(report.is_valid(), "{split} rotate={rotate}: {report:?}");
                assert_eq!(report.conservation_residual.as_deref(), Some("0"));
            }
        }
    }

    #[test]
    fn default_float_run_is_contained() {
        let (ps, dump) = packed::<Float>(1000, |_| {});
        assert!(check_containment(&ps, &Float::one()).is_empty());
        assert!(check_no_overlap(&ps).is_clean());
        assert!(check_conservation(&ps, &dump).unwrap().0.abs() < 1e-14);
    }

    #[test]
    fn replay_of_one_step_agrees() {
        assert_eq!(replay_compare(&PackerConfig::new(1), 1).unwrap(), None);
    }

    #[test]
    fn injected_fault_shows_at_its_step() {
        // Area order keeps the two engines together for seven steps, which
        // leaves room to plant a fault at step 6.
        let mut config = PackerConfig::new(7);
        config.order = BoxOrder::AreaWidth;
        assert_eq!(replay_compare(&config, 7).unwrap(), None);
        let mut skipped = false;
        let d = replay_compare_with(&config, 7, |i, _, _, fit| {
            if i == 6 && fit.is_some() && !skipped {
                skipped = true;
                return None;
            }
            fit
        })
        .unwrap()
        .expect("the skipped box changes the choice");
        assert_eq!(d.index, 6);
        assert_ne!(d.float_host.id, d.exact_host.id);
    }

    #[test]
    fn default_policy_divergence_is_a_short_side_tie() {
        // The exact engine sees two boxes with the same short side 1/6 and
        // settles on area; rounding in the float engine decides first.
        let d = replay_compare(&PackerConfig::new(1000), 1000).unwrap().unwrap();
        assert_eq!(d.index, 5);
        assert_eq!(d.exact_host.primary, "1/6");
        assert_ne!(d.float_host.id, d.exact_host.id);
    }

    #[test]
    fn replay_length_is_capped() {
        assert!(matches!(
            replay_compare(&PackerConfig::new(10), MAX_REPLAY + 1),
            Err(VerifyError::ReplayTooLong { .. })
        ));
    }

    #[test]
    fn float_report_accepts_small_residual() {
        let (ps, dump) = packed::<Float>(200, |_| {});
        let report = verify(&ps, Some(&dump), &Float::one(), 0).unwrap();
        assert_eq!(report.brute_force_agrees, None);
        assert!(report.is_valid());
    }

    fn arb_rects() -> impl Strategy<Value = Vec<Placement<Exact>>> {
        prop::collection::vec((0u64..12, 0u64..12, 1u64..6, 1u64..6), 0..60).prop_map(|v| {
            v.into_iter()
                .enumerate()
                .map(|(k, (x, y, w, h))| rect(k as u64 + 1, (x, 12), (y, 12), (w, 12), (h, 12)))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn sweep_matches_brute_force(ps in arb_rects()) {
            prop_assert_eq!(check_no_overlap(&ps), check_no_overlap_brute(&ps));
        }

        #[test]
        fn sweep_matches_brute_force_on_engine_prefixes(n in 1u64..400) {
            let (ps, _) = packed::<Float>(n, |_| {});
            prop_assert_eq!(check_no_overlap(&ps), check_no_overlap_brute(&ps));
        }
    }
}
