//! Rectangles, empty boxes, the fit predicate and the guillotine split.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;
use thiserror::Error;

use crate::numerics::{ParseScalarError, Scalar};

/// The rectangle `P_i` with sides `1/i` (width) and `1/(i+1)` (height).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RectSpec<S> {
    pub index: u64,
    pub width: S,
    pub height: S,
}

impl<S: Scalar> RectSpec<S> {
    pub fn new(index: u64) -> Self {
        assert!(index >= 1, "rectangle index starts at 1");
        RectSpec {
            index,
            width: S::recip(index),
            height: S::recip(index + 1),
        }
    }

    pub fn area(&self) -> S {
        self.width.clone() * self.height.clone()
    }
}

/// An empty axis-aligned region of the container. `(x, y)` is the
/// lower-left corner.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EmptyBox<S> {
    pub id: u64,
    pub x: S,
    pub y: S,
    pub w: S,
    pub h: S,
}

impl<S: Scalar> EmptyBox<S> {
    pub fn unit(id: u64) -> Self {
        EmptyBox {
            id,
            x: S::zero(),
            y: S::zero(),
            w: S::one(),
            h: S::one(),
        }
    }

    pub fn area(&self) -> S {
        box_area(self)
    }
}

pub fn box_area<S: Scalar>(b: &EmptyBox<S>) -> S {
    b.w.clone() * b.h.clone()
}

/// A committed rectangle. `rotated` means the short side `1/(index+1)` is
/// horizontal.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Placement<S> {
    pub index: u64,
    pub x: S,
    pub y: S,
    pub w: S,
    pub h: S,
    pub rotated: bool,
}

impl<S: Scalar> Placement<S> {
    pub fn area(&self) -> S {
        self.w.clone() * self.h.clone()
    }

    pub fn right(&self) -> S {
        self.x.clone() + self.w.clone()
    }

    pub fn top(&self) -> S {
        self.y.clone() + self.h.clone()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Orientation {
    Unrotated,
    Rotated,
}

/// Which orientation to try first when both fit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrientationRule {
    /// Long side `1/i` horizontal whenever it fits.
    UnrotatedFirst,
    /// Long side across the box: vertical in a box at least as wide as
    /// tall, horizontal in a taller box.
    AcrossShortSide,
}

impl OrientationRule {
    pub fn as_str(self) -> &'static str {
        match self {
            OrientationRule::UnrotatedFirst => "unrotated",
            OrientationRule::AcrossShortSide => "across",
        }
    }
}

impl fmt::Display for OrientationRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OrientationRule {
    type Err = ParseScalarError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "unrotated" => Ok(OrientationRule::UnrotatedFirst),
            "across" => Ok(OrientationRule::AcrossShortSide),
            _ => Err(ParseScalarError {
                input: s.to_owned(),
                reason: "expected orientation rule `unrotated` or `across`",
            }),
        }
    }
}

/// How the L-shaped leftover of a box is cut into two boxes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitPolicy {
    /// Policy A: vertical cut through the placed rectangle's right edge.
    /// Children: right strip `(w - rw) x h`, then top strip `rw x (h - rh)`.
    Vertical,
    /// Policy B: horizontal cut through the placed rectangle's top edge.
    /// Children: top strip `w x (h - rh)`, then right strip `(w - rw) x rh`.
    Horizontal,
    /// Cut perpendicular to the box's longer side: A when `w >= h`, else B.
    /// The strip left along the long side keeps the box's full short side.
    Adaptive,
}

impl SplitPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitPolicy::Vertical => "a",
            SplitPolicy::Horizontal => "b",
            SplitPolicy::Adaptive => "adaptive",
        }
    }
}

impl fmt::Display for SplitPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SplitPolicy {
    type Err = ParseScalarError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "a" | "vertical" => Ok(SplitPolicy::Vertical),
            "b" | "horizontal" => Ok(SplitPolicy::Horizontal),
            "adaptive" => Ok(SplitPolicy::Adaptive),
            _ => Err(ParseScalarError {
                input: s.to_owned(),
                reason: "expected split policy `a` (vertical), `b` (horizontal) or `adaptive`",
            }),
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum GeometryError {
    #[error("rectangle {index} does not fit box {box_id} in the requested orientation")]
    DoesNotFit { index: u64, box_id: u64 },
}

/// Fit test with unrotated preferred. Comparisons are the scalar's own
/// order: exact for rationals, plain IEEE for floats.
pub fn fits<S: Scalar>(
    b: &EmptyBox<S>,
    r: &RectSpec<S>,
    allow_rotation: bool,
) -> Option<Orientation> {
    fits_with(b, r, allow_rotation, OrientationRule::UnrotatedFirst)
}

/// Fit test with an explicit orientation preference.
pub fn fits_with<S: Scalar>(
    b: &EmptyBox<S>,
    r: &RectSpec<S>,
    allow_rotation: bool,
    rule: OrientationRule,
) -> Option<Orientation> {
    let unrotated = b.w >= r.width && b.h >= r.height;
    let rotated = allow_rotation && b.w >= r.height && b.h >= r.width;
    let rotated_first = rule == OrientationRule::AcrossShortSide && b.w >= b.h;
    match (unrotated, rotated) {
        (true, true) if rotated_first => Some(Orientation::Rotated),
        (true, _) => Some(Orientation::Unrotated),
        (false, true) => Some(Orientation::Rotated),
        (false, false) => None,
    }
}

/// Children of one split; at most two.
pub type Children<S> = SmallVec<[EmptyBox<S>; 2]>;

/// Places `r` at the lower-left corner of `b` and cuts the rest into at
/// most two boxes. Zero-area children are dropped; surviving children take
/// ids from `next_id` in emission order.
pub fn place_and_split<S: Scalar>(
    b: &EmptyBox<S>,
    r: &RectSpec<S>,
    orientation: Orientation,
    policy: SplitPolicy,
    next_id: &mut u64,
) -> Result<(Placement<S>, Children<S>), GeometryError> {
    let (rw, rh) = match orientation {
        Orientation::Unrotated => (r.width.clone(), r.height.clone()),
        Orientation::Rotated => (r.height.clone(), r.width.clone()),
    };
    if rw > b.w || rh > b.h {
        return Err(GeometryError::DoesNotFit {
            index: r.index,
            box_id: b.id,
        });
    }

    let right_x = b.x.clone() + rw.clone();
    let top_y = b.y.clone() + rh.clone();
    let spare_w = b.w.clone() - rw.clone();
    let spare_h = b.h.clone() - rh.clone();

    let vertical = match policy {
        SplitPolicy::Vertical => true,
        SplitPolicy::Horizontal => false,
        SplitPolicy::Adaptive => b.w >= b.h,
    };
    let candidates: [(S, S, S, S); 2] = if vertical {
        [
            (right_x, b.y.clone(), spare_w, b.h.clone()),
            (b.x.clone(), top_y, rw.clone(), spare_h),
        ]
    } else {
        [
            (b.x.clone(), top_y, b.w.clone(), spare_h),
            (right_x, b.y.clone(), spare_w, rh.clone()),
        ]
    };
    let mut children = Children::new();
    for (x, y, w, h) in candidates {
        if w.is_positive() && h.is_positive() {
            children.push(EmptyBox {
                id: *next_id,
                x,
                y,
                w,
                h,
            });
            *next_id += 1;
        }
    }

    let placement = Placement {
        index: r.index,
        x: b.x.clone(),
        y: b.y.clone(),
        w: rw,
        h: rh,
        rotated: orientation == Orientation::Rotated,
    };
    Ok((placement, children))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{Exact, Float};

    fn q(p: u64, d: u64) -> Exact {
        Exact::ratio(p, d)
    }

    fn ebox(id: u64, x: Exact, y: Exact, w: Exact, h: Exact) -> EmptyBox<Exact> {
        EmptyBox { id, x, y, w, h }
    }

    #[test]
    fn fit_cases() {
        let unit = EmptyBox::<Exact>::unit(0);
        assert_eq!(fits(&unit, &RectSpec::new(1), false), Some(Orientation::Unrotated));

        let exact = ebox(1, q(0, 1), q(0, 1), q(1, 2), q(1, 3));
        assert_eq!(fits(&exact, &RectSpec::new(2), false), Some(Orientation::Unrotated));

        let tall = ebox(2, q(0, 1), q(0, 1), q(1, 3), q(1, 2));
        assert_eq!(fits(&tall, &RectSpec::new(2), true), Some(Orientation::Rotated));
        assert_eq!(fits(&tall, &RectSpec::new(2), false), None);
    }

    #[test]
    fn across_rule_turns_long_side_across_wide_boxes() {
        let wide = ebox(0, q(0, 1), q(0, 1), q(1, 1), q(1, 2));
        let tall = ebox(1, q(0, 1), q(0, 1), q(1, 2), q(1, 1));
        let r = RectSpec::new(2);
        let rule = OrientationRule::AcrossShortSide;
        assert_eq!(fits_with(&wide, &r, true, rule), Some(Orientation::Rotated));
        assert_eq!(fits_with(&tall, &r, true, rule), Some(Orientation::Unrotated));
        assert_eq!(fits_with(&wide, &r, false, rule), Some(Orientation::Unrotated));
        // Only one orientation fits: the rule does not matter.
        let strip = ebox(2, q(0, 1), q(0, 1), q(1, 1), q(1, 3));
        assert_eq!(fits_with(&strip, &r, true, rule), Some(Orientation::Unrotated));
    }

    #[test]
    fn adaptive_cut_follows_box_shape() {
        let wide = ebox(0, q(0, 1), q(0, 1), q(1, 1), q(1, 2));
        let mut next = 1;
        let (p, kids) = place_and_split(
            &wide,
            &RectSpec::new(2),
            Orientation::Rotated,
            SplitPolicy::Adaptive,
            &mut next,
        )
        .unwrap();
        assert_eq!((p.w.clone(), p.h.clone(), p.rotated), (q(1, 3), q(1, 2), true));
        // Full-height strip to the right; the sliver above is empty.
        assert_eq!(kids.as_slice(), &[ebox(1, q(1, 3), q(0, 1), q(2, 3), q(1, 2))]);

        let tall = ebox(5, q(0, 1), q(0, 1), q(1, 3), q(1, 1));
        let (_, kids) = place_and_split(
            &tall,
            &RectSpec::new(3),
            Orientation::Unrotated,
            SplitPolicy::Adaptive,
            &mut next,
        )
        .unwrap();
        assert_eq!(kids.as_slice(), &[ebox(2, q(0, 1), q(1, 4), q(1, 3), q(3, 4))]);
    }

    #[test]
    fn float_fit_has_no_tolerance() {
        let r = RectSpec::<Float>::new(3);
        let b = EmptyBox {
            id: 0,
            x: Float(0.0),
            y: Float(0.0),
            w: Float(f64::from_bits(r.width.0.to_bits() - 1)),
            h: Float(1.0),
        };
        assert_eq!(fits(&b, &r, false), None);
    }

    #[test]
    fn first_split_leaves_one_strip() {
        let mut next = 1;
        for policy in [SplitPolicy::Vertical, SplitPolicy::Horizontal] {
            next = 1;
            let unit = EmptyBox::<Exact>::unit(0);
            let (p, kids) =
                place_and_split(&unit, &RectSpec::new(1), Orientation::Unrotated, policy, &mut next)
                    .unwrap();
            assert_eq!((p.x.clone(), p.y.clone(), p.w.clone(), p.h.clone()), (q(0, 1), q(0, 1), q(1, 1), q(1, 2)));
            assert_eq!(kids.len(), 1);
            assert_eq!(kids[0], ebox(1, q(0, 1), q(1, 2), q(1, 1), q(1, 2)));
        }
        assert_eq!(next, 2);
    }

    #[test]
    fn second_split_horizontal() {
        let b = ebox(1, q(0, 1), q(1, 2), q(1, 1), q(1, 2));
        let mut next = 2;
        let (p, kids) = place_and_split(
            &b,
            &RectSpec::new(2),
            Orientation::Unrotated,
            SplitPolicy::Horizontal,
            &mut next,
        )
        .unwrap();
        assert_eq!((p.x, p.y, p.w, p.h), (q(0, 1), q(1, 2), q(1, 2), q(1, 3)));
        assert_eq!(
            kids.as_slice(),
            &[
                ebox(2, q(0, 1), q(5, 6), q(1, 1), q(1, 6)),
                ebox(3, q(1, 2), q(1, 2), q(1, 2), q(1, 3)),
            ]
        );
    }

    #[test]
    fn second_split_vertical() {
        let b = ebox(1, q(0, 1), q(1, 2), q(1, 1), q(1, 2));
        let mut next = 2;
        let (_, kids) = place_and_split(
            &b,
            &RectSpec::new(2),
            Orientation::Unrotated,
            SplitPolicy::Vertical,
            &mut next,
        )
        .unwrap();
        assert_eq!(
            kids.as_slice(),
            &[
                ebox(2, q(1, 2), q(1, 2), q(1, 2), q(1, 2)),
                ebox(3, q(0, 1), q(5, 6), q(1, 2), q(1, 6)),
            ]
        );
    }

    #[test]
    fn split_rejects_misfit() {
        let b = ebox(7, q(0, 1), q(0, 1), q(1, 3), q(1, 2));
        let mut next = 0;
        let err = place_and_split(
            &b,
            &RectSpec::new(2),
            Orientation::Unrotated,
            SplitPolicy::Vertical,
            &mut next,
        )
        .unwrap_err();
        assert_eq!(err, GeometryError::DoesNotFit { index: 2, box_id: 7 });
        assert_eq!(next, 0);
    }

    #[test]
    fn box_area_values() {
        assert_eq!(box_area(&ebox(0, q(0, 1), q(0, 1), q(1, 1), q(1, 2))), q(1, 2));
        let e = EmptyBox {
            id: 0,
            x: Float(0.0),
            y: Float(0.0),
            w: Float(1.8888838763176668e-6),
            h: Float(1.8888938763438099e-6),
        };
        // Product of the two printed side lengths, evaluated in exact decimal.
        assert!((box_area(&e).0 / 3.5679011871009993e-12 - 1.0).abs() < 1e-15);
        assert_eq!(box_area(&ebox(0, q(0, 1), q(0, 1), q(0, 1), q(1, 2))), q(0, 1));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn children_disjoint(a: &EmptyBox<Exact>, b: &EmptyBox<Exact>) -> bool {
            a.x.clone() + a.w.clone() <= b.x
                || b.x.clone() + b.w.clone() <= a.x
                || a.y.clone() + a.h.clone() <= b.y
                || b.y.clone() + b.h.clone() <= a.y
        }

        proptest! {
            #[test]
            fn split_conserves_area_and_stays_inside(
                index in 1u64..50,
                bw in 1u64..40, bh in 1u64..40,
                extra_w in 0u64..30, extra_h in 0u64..30,
                rotate in any::<bool>(),
                policy in 0u8..3,
            ) {
                let r = RectSpec::<Exact>::new(index);
                let (rw, rh) = if rotate { (r.height.clone(), r.width.clone()) } else { (r.width.clone(), r.height.clone()) };
                let b = EmptyBox {
                    id: 0,
                    x: q(bw, 97),
                    y: q(bh, 89),
                    w: rw.clone() + q(extra_w, 61),
                    h: rh.clone() + q(extra_h, 67),
                };
                let orientation = if rotate { Orientation::Rotated } else { Orientation::Unrotated };
                let policy = [SplitPolicy::Vertical, SplitPolicy::Horizontal, SplitPolicy::Adaptive][policy as usize];
                let mut next = 1;
                let (p, kids) = place_and_split(&b, &r, orientation, policy, &mut next).unwrap();
                let mut total = p.area();
                for k in &kids {
                    total = total + k.area();
                    prop_assert!(k.w.is_positive() && k.h.is_positive());
                    prop_assert!(k.x >= b.x && k.y >= b.y);
                    prop_assert!(k.x.clone() + k.w.clone() <= b.x.clone() + b.w.clone());
                    prop_assert!(k.y.clone() + k.h.clone() <= b.y.clone() + b.h.clone());
                    let as_box = EmptyBox { id: 99, x: p.x.clone(), y: p.y.clone(), w: p.w.clone(), h: p.h.clone() };
                    prop_assert!(children_disjoint(k, &as_box));
                }
                if kids.len() == 2 {
                    prop_assert!(children_disjoint(&kids[0], &kids[1]));
                }
                prop_assert_eq!(total, b.area());
            }
        }
    }
}
