//! Closed-form constructions around a finished run: the row-by-row strip
//! layout that holds every rectangle from `n` on, its area bound, the glued
//! layout in the `(1 + 1/n)`-square, the grid continuation bound and the
//! epsilon report.
//!
//! Inequalities are decided with rational arithmetic and the ln 2 bracket.
//! Row lengths that are too long to sum exactly are enclosed instead.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::geometry::Placement;
use crate::numerics::{harmonic_partial_exact, ln2_bracket, rational_to_f64, Decision, RationalInterval, Scalar};

/// Smallest `n` the strip construction accepts.
pub const MIN_N: u64 = 1000;

/// Default number of materialized rows.
pub const DEFAULT_ROWS: u32 = 40;

/// Rows with at most this many terms are summed exactly.
pub const EXACT_ROW_TERMS: u128 = 1 << 14;

/// Rows with at most this many terms get a directed-rounding sum.
pub const DYADIC_ROW_TERMS: u128 = 1 << 22;

/// Cap on rectangles emitted by [`glued_layout`].
pub const MAX_GLUED: u128 = 1 << 25;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AnalysisError {
    #[error("n = {n} is below the required minimum {min}")]
    TooSmall { n: u64, min: u64 },
    #[error("at least one row is needed")]
    NoRows,
    #[error("{rows} rows of n = {n} overflow the index range")]
    IndexOverflow { n: u64, rows: u32 },
    #[error("{count} rectangles exceed the layout cap of {max}")]
    TooManyRectangles { count: u128, max: u128 },
    #[error("box sides must be positive")]
    NonPositiveSide,
}

fn require_n(n: u64) -> Result<(), AnalysisError> {
    if n < MIN_N {
        return Err(AnalysisError::TooSmall { n, min: MIN_N });
    }
    Ok(())
}

fn q(p: u128, d: u128) -> BigRational {
    BigRational::new(BigInt::from(p), BigInt::from(d))
}

fn ser_rational<S: Serializer>(r: &BigRational, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&r.to_string())
}

fn ser_interval<S: Serializer>(r: &RationalInterval, s: S) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeStruct;
    let mut st = s.serialize_struct("Interval", 3)?;
    st.serialize_field("lo", &r.lo.to_string())?;
    st.serialize_field("hi", &r.hi.to_string())?;
    st.serialize_field("approx", &r.midpoint_f64())?;
    st.end()
}

/// How a row length was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LengthMethod {
    /// Exact rational sum.
    Exact,
    /// Sum of `floor` and `ceil` of `2^120 / j`.
    Dyadic,
    /// Asymptotic expansion with a bounded remainder.
    Asymptotic,
}

/// One row of the strip layout: rectangles `first..=last` side by side,
/// long sides along the row.
#[derive(Clone, Debug, Serialize)]
pub struct StripRow {
    pub i: u32,
    pub first: u128,
    pub last: u128,
    #[serde(serialize_with = "ser_rational")]
    pub width: BigRational,
    /// Encloses `sum_{j=first..=last} 1/j`.
    #[serde(serialize_with = "ser_interval")]
    pub exact_length: RationalInterval,
    pub method: LengthMethod,
    /// `ln 2 + 1/first`.
    #[serde(serialize_with = "ser_interval")]
    pub length_bound: RationalInterval,
    /// `ln 2 + 1/(2 first)`, the sharper bound from the rearranged sum.
    #[serde(serialize_with = "ser_interval")]
    pub sharp_bound: RationalInterval,
    pub below_bound: Decision,
    pub below_sharp_bound: Decision,
    pub bound_below_one: Decision,
}

impl StripRow {
    pub fn passes(&self) -> bool {
        self.below_bound == Decision::Holds
            && self.below_sharp_bound == Decision::Holds
            && self.bound_below_one == Decision::Holds
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct StripLayout {
    pub n: u64,
    pub rows: Vec<StripRow>,
    /// Sum of the materialized row widths, `(2 - 2^(1-rows)) / n`.
    #[serde(serialize_with = "ser_rational")]
    pub total_width: BigRational,
    /// Width of the rows not materialized, `2^(1-rows) / n`.
    #[serde(serialize_with = "ser_rational")]
    pub tail_width: BigRational,
    pub rows_materialized: u32,
}

impl StripLayout {
    pub fn width_limit(&self) -> BigRational {
        q(2, self.n as u128)
    }

    pub fn passes(&self) -> bool {
        self.rows.iter().all(StripRow::passes)
            && self.total_width < self.width_limit()
            && &self.total_width + &self.tail_width == self.width_limit()
    }
}

/// `sum_{j=m..=2m-1} 1/j` enclosed in a rational interval.
pub fn row_length(m: u128) -> (RationalInterval, LengthMethod) {
    assert!(m >= 1);
    if m <= EXACT_ROW_TERMS {
        let m = m as u64;
        return (RationalInterval::point(harmonic_partial_exact(m, 2 * m - 1)), LengthMethod::Exact);
    }
    if m <= DYADIC_ROW_TERMS {
        return (dyadic_sum(m, 2 * m - 1), LengthMethod::Dyadic);
    }
    (asymptotic_row_length(m), LengthMethod::Asymptotic)
}

const DYADIC_BITS: u32 = 120;

/// Bracket for `sum_{j=a..=b} 1/j` from per-term floor and ceiling at
/// 120 fractional bits.
pub fn dyadic_sum(a: u128, b: u128) -> RationalInterval {
    let one = 1u128 << DYADIC_BITS;
    let (mut lo, mut hi) = (0u128, 0u128);
    for j in a..=b {
        let (d, r) = (one / j, one % j);
        lo += d;
        hi += d + u128::from(r != 0);
    }
    let scale = BigInt::one() << DYADIC_BITS;
    RationalInterval {
        lo: BigRational::new(BigInt::from(lo), scale.clone()),
        hi: BigRational::new(BigInt::from(hi), scale),
    }
}

/// `sum_{j=m..=2m-1} 1/j = ln 2 + 1/(4m) + 1/(16m²) - 1/(128m⁴) + d` with
/// `-1/(16128 m⁶) < d < 1/(252 m⁶)`, from the harmonic number expansion
/// truncated after its `N⁻⁴` term.
pub fn asymptotic_row_length(m: u128) -> RationalInterval {
    let m = BigRational::from_integer(BigInt::from(m));
    let m2 = &m * &m;
    let m4 = &m2 * &m2;
    let m6 = &m4 * &m2;
    let one = BigRational::one();
    let series = &one / (BigRational::from_integer(4.into()) * &m) + &one / (BigRational::from_integer(16.into()) * &m2)
        - &one / (BigRational::from_integer(128.into()) * &m4);
    let ln2 = ln2_bracket();
    RationalInterval {
        lo: &ln2.lo + &series - &one / (BigRational::from_integer(16128.into()) * &m6),
        hi: &ln2.hi + &series + &one / (BigRational::from_integer(252.into()) * &m6),
    }
}

/// Rows `1..=rows` of the strip construction for the rectangles from `n` on.
pub fn strip_layout(n: u64, rows: u32) -> Result<StripLayout, AnalysisError> {
    require_n(n)?;
    if rows == 0 {
        return Err(AnalysisError::NoRows);
    }
    // The last row ends at 2^rows n - 1.
    if rows > 100 || (u128::from(n) << rows) >> rows != u128::from(n) {
        return Err(AnalysisError::IndexOverflow { n, rows });
    }
    let ln2 = ln2_bracket();
    let one = RationalInterval::point(BigRational::one());
    let mut out = Vec::with_capacity(rows as usize);
    let mut total = BigRational::zero();
    for i in 1..=rows {
        let first = (1u128 << (i - 1)) * u128::from(n);
        let width = q(1, first);
        let (length, method) = row_length(first);
        let length_bound = ln2.shift(&width);
        let sharp_bound = ln2.shift(&q(1, 2 * first));
        total += &width;
        out.push(StripRow {
            i,
            first,
            last: 2 * first - 1,
            below_bound: length.less_than(&length_bound),
            below_sharp_bound: length.less_than(&sharp_bound),
            bound_below_one: length_bound.less_than(&one),
            width,
            exact_length: length,
            method,
            length_bound,
            sharp_bound,
        });
    }
    let tail_width = q(1, (1u128 << (rows - 1)) * u128::from(n));
    Ok(StripLayout {
        n,
        rows: out,
        total_width: total,
        tail_width,
        rows_materialized: rows,
    })
}

/// `1 + 1/n`.
pub fn container_side(n: u64) -> Result<BigRational, AnalysisError> {
    require_n(n)?;
    Ok(BigRational::one() + q(1, n as u128))
}

/// Area bound `1 + (2/n)(ln 2 + 1/(2n))` for the unit square plus the
/// `2/n x (ln 2 + 1/(2n))` strip box, with ln 2 bracketed.
pub fn strip_area_interval(n: u64) -> Result<RationalInterval, AnalysisError> {
    require_n(n)?;
    Ok(ln2_bracket()
        .shift(&q(1, 2 * n as u128))
        .scale(&q(2, n as u128))
        .shift(&BigRational::one()))
}

/// Upper end of [`strip_area_interval`].
pub fn strip_area_bound(n: u64) -> Result<BigRational, AnalysisError> {
    strip_area_interval(n).map(|i| i.hi)
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundReport {
    pub n: u64,
    #[serde(serialize_with = "ser_rational")]
    pub side: BigRational,
    pub side_f64: f64,
    #[serde(serialize_with = "ser_interval")]
    pub area_bound: RationalInterval,
    /// Area bound below the area of the `(1 + 1/n)`-square.
    pub area_below_square: Decision,
    pub layout: StripLayout,
}

impl BoundReport {
    pub fn passes(&self) -> bool {
        self.area_below_square == Decision::Holds && self.layout.passes()
    }
}

pub fn bound_report(n: u64, rows: u32) -> Result<BoundReport, AnalysisError> {
    let side = container_side(n)?;
    let area_bound = strip_area_interval(n)?;
    let square = RationalInterval::point(&side * &side);
    Ok(BoundReport {
        n,
        side_f64: rational_to_f64(&side),
        area_below_square: area_bound.less_than(&square),
        side,
        area_bound,
        layout: strip_layout(n, rows)?,
    })
}

/// Rectangles `n..` in two strips around the unit square.
#[derive(Clone, Debug)]
pub struct GluedLayout<S> {
    pub n: u64,
    pub rows: u32,
    pub side: S,
    /// Strip 1: row 1 lying on top of the unit square.
    pub top_strip: (S, S, S, S),
    /// Strip 2: the remaining rows, turned upright, right of the square.
    pub side_strip: (S, S, S, S),
    pub placements: Vec<Placement<S>>,
}

/// Lays out rows `1..=rows` in the `(1 + 1/n)`-square: row 1 left to right
/// on top of the unit square, rows 2 and up stacked into a second strip of
/// width `1/n` that stands on the right edge. Rectangles keep their long
/// side along the row.
pub fn glued_layout<S: Scalar>(n: u64, rows: u32) -> Result<GluedLayout<S>, AnalysisError> {
    require_n(n)?;
    if rows == 0 {
        return Err(AnalysisError::NoRows);
    }
    let count = ((1u128 << rows.min(64)) - 1) * u128::from(n);
    if count > MAX_GLUED {
        return Err(AnalysisError::TooManyRectangles { count, max: MAX_GLUED });
    }
    let one = S::one();
    let band = S::recip(n);
    let side = one.clone() + band.clone();
    let mut placements = Vec::with_capacity(count as usize);

    let mut x = S::zero();
    for j in n..2 * n {
        let w = S::recip(j);
        placements.push(Placement {
            index: j,
            x: x.clone(),
            y: one.clone(),
            w: w.clone(),
            h: S::recip(j + 1),
            rotated: false,
        });
        x = x + w;
    }
    let top_strip = (S::zero(), one.clone(), x, band.clone());

    let mut column = one.clone();
    let mut longest = S::zero();
    for i in 2..=rows {
        let first = n << (i - 1);
        let width = S::recip(first);
        let mut y = S::zero();
        for j in first..2 * first {
            let h = S::recip(j);
            placements.push(Placement {
                index: j,
                x: column.clone(),
                y: y.clone(),
                w: S::recip(j + 1),
                h: h.clone(),
                rotated: true,
            });
            y = y + h;
        }
        longest = longest.max(y);
        column = column + width;
    }
    let side_strip = (one.clone(), S::zero(), column - one, longest);
    Ok(GluedLayout {
        n,
        rows,
        side,
        top_strip,
        side_strip,
        placements,
    })
}

/// Continuation of a finished run into its largest box.
#[derive(Clone, Debug, Serialize)]
pub struct ContinuationReport {
    #[serde(serialize_with = "ser_rational")]
    pub w: BigRational,
    #[serde(serialize_with = "ser_rational")]
    pub h: BigRational,
    pub n0: u64,
    pub cells_w: u128,
    pub cells_h: u128,
    /// Cells in the largest square grid of side `1/n0` cells inside the box.
    pub square_grid: u128,
    /// Cells in the full `cells_w x cells_h` grid.
    pub full_grid: u128,
    /// `n0 + square_grid`.
    pub composed_total: u128,
    /// `w h (n0 + 1)`: the box's share of the remaining area.
    pub ratio: f64,
}

/// Number of grid cells of side `1/n0` along a side of length `len`.
fn cells(len: &BigRational, n0: u64) -> u128 {
    (len * BigRational::from_integer(BigInt::from(n0)))
        .floor()
        .to_integer()
        .to_u128()
        .unwrap_or(0)
}

/// Rectangles from index `n0` on have both sides at most `1/n0`, so each
/// fits a grid cell of that side. Counts the largest square grid of such
/// cells in a `w x h` box: `floor(min(w, h) n0)²`.
pub fn grid_lower_bound(w: &BigRational, h: &BigRational, n0: u64) -> Result<u128, AnalysisError> {
    Ok(continuation(w, h, n0)?.square_grid)
}

pub fn continuation(w: &BigRational, h: &BigRational, n0: u64) -> Result<ContinuationReport, AnalysisError> {
    let zero = BigRational::zero();
    if *w <= zero || *h <= zero || n0 == 0 {
        return Err(AnalysisError::NonPositiveSide);
    }
    let cells_w = cells(w, n0);
    let cells_h = cells(h, n0);
    let k = cells_w.min(cells_h);
    let square_grid = k * k;
    let ratio = w * h * BigRational::from_integer(BigInt::from(n0) + 1);
    Ok(ContinuationReport {
        w: w.clone(),
        h: h.clone(),
        n0,
        cells_w,
        cells_h,
        square_grid,
        full_grid: cells_w * cells_h,
        composed_total: u128::from(n0) + square_grid,
        ratio: rational_to_f64(&ratio),
    })
}

/// Container side `1 + 1/(M+1)` when the first `M` rectangles are packed
/// into the unit square, and the excess area it implies.
#[derive(Clone, Debug, Serialize)]
pub struct EpsilonReport {
    pub packed_count: u64,
    #[serde(serialize_with = "ser_rational")]
    pub delta: BigRational,
    #[serde(serialize_with = "ser_rational")]
    pub side: BigRational,
    #[serde(serialize_with = "ser_rational")]
    pub epsilon: BigRational,
    pub epsilon_f64: f64,
    /// `(1 + delta)² - 1 - epsilon == 0`.
    pub identity_holds: bool,
    #[serde(serialize_with = "ser_rational")]
    pub target: BigRational,
    pub below_target: bool,
}

pub fn epsilon_report(m: u64, target: &BigRational) -> Result<EpsilonReport, AnalysisError> {
    require_n(m)?;
    let delta = q(1, u128::from(m) + 1);
    let two = BigRational::from_integer(2.into());
    let epsilon = &two * &delta + &delta * &delta;
    let side = BigRational::one() + &delta;
    let identity_holds = (&side * &side - BigRational::one() - &epsilon).is_zero();
    Ok(EpsilonReport {
        packed_count: m,
        epsilon_f64: rational_to_f64(&epsilon),
        below_target: epsilon < *target,
        delta,
        side,
        epsilon,
        identity_holds,
        target: target.clone(),
    })
}
