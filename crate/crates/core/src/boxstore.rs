//! Ordered store of empty boxes with a smallest-fitting-box query.
//!
//! Boxes are ordered by a [`BoxOrder`] key ending in the unique id. The
//! query walks that order from the first key that could host the rectangle
//! and returns the first box the fit predicate accepts.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{fits, fits_with, EmptyBox, Orientation, OrientationRule, RectSpec};
use crate::numerics::{Accumulator, ParseScalarError, Scalar};

/// Scan order of the store.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoxOrder {
    /// `(area, w, id)`.
    AreaWidth,
    /// `(min(w, h), area, id)`: the box with the shortest short side first.
    ShortSideArea,
}

impl BoxOrder {
    pub fn as_str(self) -> &'static str {
        match self {
            BoxOrder::AreaWidth => "area",
            BoxOrder::ShortSideArea => "short",
        }
    }
}

impl fmt::Display for BoxOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BoxOrder {
    type Err = ParseScalarError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "area" => Ok(BoxOrder::AreaWidth),
            "short" => Ok(BoxOrder::ShortSideArea),
            _ => Err(ParseScalarError {
                input: s.to_owned(),
                reason: "expected box order `area` or `short`",
            }),
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum StoreError {
    #[error("box id {0} is already in the store")]
    DuplicateId(u64),
    #[error("box {0} has a non-positive side")]
    Degenerate(u64),
    #[error("no empty box can hold rectangle {0}")]
    NoFit(u64),
    #[error("the store is empty")]
    Empty,
}

/// Store key; field meaning depends on the [`BoxOrder`].
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct BoxKey<S> {
    pub primary: S,
    pub secondary: S,
    pub id: u64,
}

/// `(area, w, id)`, the tie order for "largest box" in every store.
type AreaKey<S> = (S, S, u64);

impl<S: Scalar> BoxKey<S> {
    pub fn of(b: &EmptyBox<S>, order: BoxOrder) -> Self {
        match order {
            BoxOrder::AreaWidth => BoxKey {
                primary: b.area(),
                secondary: b.w.clone(),
                id: b.id,
            },
            BoxOrder::ShortSideArea => BoxKey {
                primary: b.w.clone().min(b.h.clone()),
                secondary: b.area(),
                id: b.id,
            },
        }
    }

    /// Smallest key a box hosting `r` can have.
    fn floor_for(r: &RectSpec<S>, order: BoxOrder) -> Self {
        let primary = match order {
            BoxOrder::AreaWidth => r.area(),
            // Either orientation needs the short side to cover 1/(i+1).
            BoxOrder::ShortSideArea => r.height.clone(),
        };
        BoxKey {
            primary,
            secondary: S::zero(),
            id: 0,
        }
    }
}

/// A box removed by a query, with the orientation that fits and the number
/// of members inspected to find it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Extracted<S> {
    pub key: BoxKey<S>,
    pub boxed: EmptyBox<S>,
    pub orientation: Orientation,
    pub scanned: usize,
}

#[derive(Clone, Debug)]
pub struct BoxStore<S: Scalar> {
    order: BoxOrder,
    entries: BTreeMap<BoxKey<S>, EmptyBox<S>>,
    /// Area index for `largest`, kept only when the scan order is not
    /// already area-first.
    by_area: Option<BTreeMap<AreaKey<S>, BoxKey<S>>>,
    ids: HashSet<u64>,
    total: S::Acc,
    pruned: S::Acc,
    pruned_count: u64,
    prune_below: Option<S>,
    max_w: Option<S>,
    max_h: Option<S>,
}

impl<S: Scalar> Default for BoxStore<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> BoxStore<S> {
    /// An `(area, w, id)` ordered store.
    pub fn new() -> Self {
        Self::with_order(BoxOrder::AreaWidth)
    }

    pub fn with_order(order: BoxOrder) -> Self {
        BoxStore {
            order,
            entries: BTreeMap::new(),
            by_area: (order != BoxOrder::AreaWidth).then(BTreeMap::new),
            ids: HashSet::new(),
            total: S::Acc::default(),
            pruned: S::Acc::default(),
            pruned_count: 0,
            prune_below: None,
            max_w: None,
            max_h: None,
        }
    }

    pub fn order(&self) -> BoxOrder {
        self.order
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Sum of member areas, maintained incrementally.
    pub fn total_area(&self) -> S {
        self.total.value()
    }

    /// Area of every box discarded by pruning.
    pub fn pruned_area(&self) -> S {
        self.pruned.value()
    }

    pub fn pruned_count(&self) -> u64 {
        self.pruned_count
    }

    /// Inserts a box. When a prune threshold is active and the box is too
    /// small for any remaining rectangle, it is counted as pruned instead.
    pub fn insert(&mut self, b: EmptyBox<S>) -> Result<(), StoreError> {
        if !(b.w.is_positive() && b.h.is_positive()) {
            return Err(StoreError::Degenerate(b.id));
        }
        if !self.ids.insert(b.id) {
            return Err(StoreError::DuplicateId(b.id));
        }
        if let Some(limit) = &self.prune_below {
            if b.w < *limit && b.h < *limit {
                self.pruned.add(&b.area());
                self.pruned_count += 1;
                self.ids.remove(&b.id);
                return Ok(());
            }
        }
        if self.max_w.as_ref().is_none_or(|m| b.w > *m) {
            self.max_w = Some(b.w.clone());
        }
        if self.max_h.as_ref().is_none_or(|m| b.h > *m) {
            self.max_h = Some(b.h.clone());
        }
        let key = BoxKey::of(&b, self.order);
        self.total.add(&b.area());
        if let Some(idx) = &mut self.by_area {
            idx.insert((b.area(), b.w.clone(), b.id), key.clone());
        }
        self.entries.insert(key, b);
        Ok(())
    }

    fn remove_entry(&mut self, key: &BoxKey<S>) -> EmptyBox<S> {
        let b = self.entries.remove(key).expect("key came from the map");
        self.ids.remove(&b.id);
        let area = b.area();
        if let Some(idx) = &mut self.by_area {
            idx.remove(&(area.clone(), b.w.clone(), b.id));
        }
        self.total.sub(&area);
        b
    }

    /// Removes and returns the smallest-key member that `r` fits, trying the
    /// unrotated orientation first.
    pub fn extract_smallest_fitting(
        &mut self,
        r: &RectSpec<S>,
        allow_rotation: bool,
    ) -> Result<Extracted<S>, StoreError> {
        self.extract_smallest_by(r, |b, r| fits(b, r, allow_rotation))
    }

    pub fn extract_smallest_fitting_with(
        &mut self,
        r: &RectSpec<S>,
        allow_rotation: bool,
        rule: OrientationRule,
    ) -> Result<Extracted<S>, StoreError> {
        self.extract_smallest_by(r, |b, r| fits_with(b, r, allow_rotation, rule))
    }

    /// Same walk as [`extract_smallest_fitting`](Self::extract_smallest_fitting)
    /// with a caller-supplied fit predicate. The predicate must never accept
    /// a box the rectangle cannot fit in some orientation.
    pub fn extract_smallest_by<F>(
        &mut self,
        r: &RectSpec<S>,
        mut pred: F,
    ) -> Result<Extracted<S>, StoreError>
    where
        F: FnMut(&EmptyBox<S>, &RectSpec<S>) -> Option<Orientation>,
    {
        if self.entries.is_empty() {
            return Err(StoreError::Empty);
        }
        // Every host needs a side at least as long as the rectangle's short side.
        let short = &r.height;
        let reachable = self.max_w.as_ref().is_some_and(|m| m >= short)
            && self.max_h.as_ref().is_some_and(|m| m >= short);
        if !reachable {
            return Err(StoreError::NoFit(r.index));
        }
        let floor = BoxKey::floor_for(r, self.order);
        let mut scanned = 0;
        let mut hit = None;
        for (key, b) in self.entries.range(floor..) {
            scanned += 1;
            if let Some(o) = pred(b, r) {
                hit = Some((key.clone(), o));
                break;
            }
        }
        let (key, orientation) = hit.ok_or(StoreError::NoFit(r.index))?;
        let boxed = self.remove_entry(&key);
        Ok(Extracted {
            key,
            boxed,
            orientation,
            scanned,
        })
    }

    /// A maximal-area member; ties go to the larger `(w, id)`.
    pub fn largest(&self) -> Result<&EmptyBox<S>, StoreError> {
        match &self.by_area {
            None => self.entries.last_key_value().map(|(_, b)| b),
            Some(idx) => idx.last_key_value().map(|(_, k)| &self.entries[k]),
        }
        .ok_or(StoreError::Empty)
    }

    /// Drops every box whose sides are both shorter than `1/(n_target+1)`;
    /// none of them can hold any `P_j` with `j <= n_target`. Later inserts
    /// are filtered the same way. Returns the number of members removed.
    pub fn prune_too_small(&mut self, n_target: u64) -> usize {
        let limit = S::recip(n_target + 1);
        // Both sides below `limit` bounds the key's primary component.
        let ceiling = match self.order {
            BoxOrder::AreaWidth => BoxKey {
                primary: limit.clone() * limit.clone(),
                secondary: limit.clone(),
                id: u64::MAX,
            },
            BoxOrder::ShortSideArea => BoxKey {
                primary: limit.clone(),
                secondary: S::zero(),
                id: 0,
            },
        };
        let doomed: Vec<BoxKey<S>> = self
            .entries
            .range(..=ceiling)
            .filter(|(_, b)| b.w < limit && b.h < limit)
            .map(|(k, _)| k.clone())
            .collect();
        for key in &doomed {
            let b = self.remove_entry(key);
            self.pruned.add(&b.area());
            self.pruned_count += 1;
        }
        self.prune_below = Some(limit);
        doomed.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = &EmptyBox<S>> {
        self.entries.values()
    }

    pub fn prune_threshold(&self) -> Option<&S> {
        self.prune_below.as_ref()
    }

    pub(crate) fn accumulators(&self) -> (&S::Acc, &S::Acc) {
        (&self.total, &self.pruned)
    }

    pub(crate) fn maxima(&self) -> (Option<&S>, Option<&S>) {
        (self.max_w.as_ref(), self.max_h.as_ref())
    }

    /// Rebuilds a store from checkpointed parts without touching the
    /// accumulators' rounding history.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn restore(
        order: BoxOrder,
        boxes: Vec<EmptyBox<S>>,
        total: S::Acc,
        pruned: S::Acc,
        pruned_count: u64,
        prune_below: Option<S>,
        max_w: Option<S>,
        max_h: Option<S>,
    ) -> Result<Self, StoreError> {
        let mut entries = BTreeMap::new();
        let mut by_area = (order != BoxOrder::AreaWidth).then(BTreeMap::new);
        let mut ids = HashSet::with_capacity(boxes.len());
        for b in boxes {
            if !(b.w.is_positive() && b.h.is_positive()) {
                return Err(StoreError::Degenerate(b.id));
            }
            if !ids.insert(b.id) {
                return Err(StoreError::DuplicateId(b.id));
            }
            let key = BoxKey::of(&b, order);
            if let Some(idx) = &mut by_area {
                idx.insert((b.area(), b.w.clone(), b.id), key.clone());
            }
            entries.insert(key, b);
        }
        Ok(BoxStore {
            order,
            entries,
            by_area,
            ids,
            total,
            pruned,
            pruned_count,
            prune_below,
            max_w,
            max_h,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{CompensatedSum, Exact, Float};

    fn q(p: u64, d: u64) -> Exact {
        Exact::ratio(p, d)
    }

    fn ebox(id: u64, w: Exact, h: Exact) -> EmptyBox<Exact> {
        EmptyBox {
            id,
            x: Exact::zero(),
            y: Exact::zero(),
            w,
            h,
        }
    }

    fn fbox(id: u64, w: f64, h: f64) -> EmptyBox<Float> {
        EmptyBox {
            id,
            x: Float(0.0),
            y: Float(0.0),
            w: Float(w),
            h: Float(h),
        }
    }

    #[test]
    fn insert_counts_and_rejects_duplicates() {
        let mut s = BoxStore::new();
        s.insert(ebox(1, q(1, 1), q(1, 1))).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.insert(ebox(1, q(1, 2), q(1, 1))), Err(StoreError::DuplicateId(1)));
        assert_eq!(s.insert(ebox(2, q(0, 1), q(1, 1))), Err(StoreError::Degenerate(2)));
        assert_eq!(s.len(), 1);
    }

    #[test]
    fn equal_areas_order_by_width_then_id() {
        let mut s = BoxStore::new();
        s.insert(ebox(5, q(1, 1), q(1, 6))).unwrap();
        s.insert(ebox(6, q(1, 2), q(1, 3))).unwrap();
        s.insert(ebox(4, q(1, 2), q(1, 3))).unwrap();
        let ids: Vec<u64> = s.iter().map(|b| b.id).collect();
        assert_eq!(ids, vec![4, 6, 5]);
    }

    #[test]
    fn unit_box_hosts_first_rectangle() {
        let mut s = BoxStore::<Exact>::new();
        s.insert(EmptyBox::unit(0)).unwrap();
        let got = s.extract_smallest_fitting(&RectSpec::new(1), false).unwrap();
        assert_eq!(got.boxed.id, 0);
        assert_eq!(got.orientation, Orientation::Unrotated);
        assert!(s.is_empty());
    }

    #[test]
    fn scan_order_picks_smaller_width_at_equal_area() {
        // Both boxes have area 1/6; the 1/2 x 1/3 box sorts first and fits P_3.
        let mut s = BoxStore::new();
        s.insert(ebox(1, q(1, 1), q(1, 6))).unwrap();
        s.insert(ebox(2, q(1, 2), q(1, 3))).unwrap();
        let got = s.extract_smallest_fitting(&RectSpec::new(3), false).unwrap();
        assert_eq!(got.boxed.id, 2);
        assert_eq!(got.scanned, 1);
    }

    #[test]
    fn no_fit_when_every_side_is_short() {
        let mut s = BoxStore::new();
        s.insert(ebox(1, q(1, 100), q(1, 100))).unwrap();
        s.insert(ebox(2, q(1, 200), q(1, 50))).unwrap();
        assert_eq!(
            s.extract_smallest_fitting(&RectSpec::new(10), true),
            Err(StoreError::NoFit(10))
        );
        assert_eq!(s.len(), 2);
        assert_eq!(
            BoxStore::<Exact>::new().extract_smallest_fitting(&RectSpec::new(1), true),
            Err(StoreError::Empty)
        );
    }

    #[test]
    fn largest_member() {
        let mut s = BoxStore::new();
        assert_eq!(s.largest(), Err(StoreError::Empty));
        s.insert(ebox(1, q(1, 1), q(1, 2))).unwrap();
        assert_eq!(s.largest().unwrap().id, 1);
        s.insert(ebox(2, q(1, 3), q(1, 2))).unwrap();
        s.insert(ebox(3, q(1, 4), q(1, 1))).unwrap();
        assert_eq!(s.largest().unwrap().id, 1);
    }

    #[test]
    fn short_side_order_scans_thin_boxes_first() {
        let mut s = BoxStore::with_order(BoxOrder::ShortSideArea);
        s.insert(ebox(1, q(1, 2), q(1, 2))).unwrap();
        s.insert(ebox(2, q(1, 1), q(1, 3))).unwrap();
        s.insert(ebox(3, q(1, 5), q(1, 1))).unwrap();
        let ids: Vec<u64> = s.iter().map(|b| b.id).collect();
        assert_eq!(ids, vec![3, 2, 1]);
        // Largest is by area whatever the scan order.
        assert_eq!(s.largest().unwrap().id, 2);
        // P_3 (1/3 x 1/4): box 3 is too thin, box 2 is the first host.
        let got = s
            .extract_smallest_fitting_with(&RectSpec::new(3), true, OrientationRule::AcrossShortSide)
            .unwrap();
        assert_eq!(got.boxed.id, 2);
        assert_eq!(got.orientation, Orientation::Rotated);
        assert_eq!(s.largest().unwrap().id, 1);
        assert_eq!(s.total_area(), q(1, 4) + q(1, 5));
    }

    #[test]
    fn pruning_thresholds() {
        let mut s = BoxStore::new();
        s.insert(fbox(1, 1e-6, 1e-6)).unwrap();
        s.insert(fbox(2, 2e-3, 1e-9)).unwrap();
        s.insert(fbox(3, 0.5, 0.5)).unwrap();
        assert_eq!(s.prune_too_small(1000), 1);
        let ids: HashSet<u64> = s.iter().map(|b| b.id).collect();
        assert_eq!(ids, HashSet::from([2, 3]));
        assert_eq!(s.pruned_area().0, 1e-12);
        // Later inserts obey the same threshold.
        s.insert(fbox(4, 1e-4, 1e-4)).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.pruned_count(), 2);
    }

    #[test]
    fn total_area_tracks_many_inserts_and_removals() {
        let mut s = BoxStore::<Float>::new();
        let mut state = 0x2545_f491_4f6c_dd1du64;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let mut expect = CompensatedSum::new();
        for id in 0..1_000_000u64 {
            let b = fbox(id, next() * 1e-3 + 1e-9, next() * 1e-3 + 1e-9);
            expect.push(b.w.0 * b.h.0);
            s.insert(b).unwrap();
        }
        let independent: CompensatedSum = s.iter().map(|b| b.w.0 * b.h.0).collect();
        assert!(((s.total_area().0 - expect.total()) / expect.total()).abs() < 1e-12);
        assert!(((s.total_area().0 - independent.total()) / independent.total()).abs() < 1e-12);
        for i in 0..1000u64 {
            let r = RectSpec::<Float>::new(2000 + i);
            if let Ok(got) = s.extract_smallest_fitting(&r, true) {
                expect.push(-got.boxed.area().0);
            }
        }
        assert!(((s.total_area().0 - expect.total()) / expect.total()).abs() < 1e-12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            #[test]
            fn extraction_matches_exhaustive_minimum(
                dims in prop::collection::vec((1u64..60, 1u64..60), 1..300),
                index in 1u64..40,
                rotate in any::<bool>(),
                short_first in any::<bool>(),
            ) {
                let order = if short_first { BoxOrder::ShortSideArea } else { BoxOrder::AreaWidth };
                let mut s = BoxStore::with_order(order);
                for (id, (a, b)) in dims.iter().enumerate() {
                    s.insert(ebox(id as u64, q(*a, 64), q(*b, 64))).unwrap();
                }
                let r = RectSpec::new(index);
                let best = s
                    .iter()
                    .filter(|b| fits(b, &r, rotate).is_some())
                    .map(|b| BoxKey::of(b, order))
                    .min();
                let got = s.extract_smallest_fitting(&r, rotate);
                match best {
                    Some(k) => prop_assert_eq!(got.unwrap().key, k),
                    None => prop_assert_eq!(got, Err(StoreError::NoFit(index))),
                }
                let sum = s.iter().fold(Exact::zero(), |acc, b| acc + b.area());
                prop_assert_eq!(s.total_area(), sum.clone());
                let biggest = s.iter().map(|b| (b.area(), b.w.clone(), b.id)).max();
                prop_assert_eq!(s.largest().ok().map(|b| (b.area(), b.w.clone(), b.id)), biggest);
            }
        }
    }
}
