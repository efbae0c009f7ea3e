//! Scalar arithmetic in two modes plus harmonic-sum utilities.
//!
//! [`Float`] wraps binary64 with a total order, [`Exact`] wraps an
//! arbitrary-precision rational kept in lowest terms. Every engine run is
//! generic over one [`Scalar`] type, so the two modes never mix silently.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Mul, Sub};
use std::str::FromStr;
use std::sync::OnceLock;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Which arithmetic a run uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NumericMode {
    Float,
    Exact,
}

impl NumericMode {
    pub fn as_str(self) -> &'static str {
        match self {
            NumericMode::Float => "float",
            NumericMode::Exact => "exact",
        }
    }
}

impl fmt::Display for NumericMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NumericMode {
    type Err = ParseScalarError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "float" => Ok(NumericMode::Float),
            "exact" => Ok(NumericMode::Exact),
            other => Err(ParseScalarError::new(other, "expected `float` or `exact`")),
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("cannot parse `{input}`: {reason}")]
pub struct ParseScalarError {
    pub input: String,
    pub reason: &'static str,
}

impl ParseScalarError {
    fn new(input: &str, reason: &'static str) -> Self {
        ParseScalarError {
            input: input.to_owned(),
            reason,
        }
    }
}

/// A running sum that can also subtract. Float accumulators carry a
/// compensation term; exact ones are plain rational sums.
pub trait Accumulator<S>: Clone + fmt::Debug + Default + Send {
    fn add(&mut self, v: &S);
    fn sub(&mut self, v: &S);
    fn value(&self) -> S;
    /// Text form that restores the accumulator bit-for-bit.
    fn encode(&self) -> String;
    fn decode(s: &str) -> Result<Self, ParseScalarError>;
}

/// A real number in one of the two arithmetic modes.
pub trait Scalar:
    Clone
    + Ord
    + fmt::Debug
    + fmt::Display
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + 'static
{
    const MODE: NumericMode;
    type Acc: Accumulator<Self>;

    fn zero() -> Self;
    fn one() -> Self;
    fn from_u64(v: u64) -> Self;
    /// `p / q`; `q` must be nonzero.
    fn ratio(p: u64, q: u64) -> Self;
    /// Nearest value in this mode to an exact rational.
    fn from_rational(r: &BigRational) -> Self;
    fn to_f64(&self) -> f64;
    fn is_positive(&self) -> bool;
    /// Stream text: 17 significant digits (float) or `p/q` (exact).
    fn encode(&self) -> String;
    fn decode(s: &str) -> Result<Self, ParseScalarError>;
    /// `sum_{j=a..=b} 1/j`.
    fn harmonic(a: u64, b: u64) -> Self;

    fn recip(i: u64) -> Self {
        Self::ratio(1, i)
    }
}

/// Binary64 with the IEEE total order. Arithmetic is plain IEEE.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Float(pub f64);

impl Eq for Float {}

impl PartialOrd for Float {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Float {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl Add for Float {
    type Output = Float;
    fn add(self, rhs: Float) -> Float {
        Float(self.0 + rhs.0)
    }
}

impl Sub for Float {
    type Output = Float;
    fn sub(self, rhs: Float) -> Float {
        Float(self.0 - rhs.0)
    }
}

impl Mul for Float {
    type Output = Float;
    fn mul(self, rhs: Float) -> Float {
        Float(self.0 * rhs.0)
    }
}

impl fmt::Display for Float {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.0, f)
    }
}

/// Neumaier's variant of Kahan summation.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

impl Extend<f64> for CompensatedSum {
    fn extend<I: IntoIterator<Item = f64>>(&mut self, iter: I) {
        for v in iter {
            self.push(v);
        }
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::new();
        s.extend(iter);
        s
    }
}

impl Accumulator<Float> for CompensatedSum {
    fn add(&mut self, v: &Float) {
        self.push(v.0);
    }

    fn sub(&mut self, v: &Float) {
        self.push(-v.0);
    }

    fn value(&self) -> Float {
        Float(self.total())
    }

    fn encode(&self) -> String {
        format!("{}:{}", encode_f64(self.sum), encode_f64(self.comp))
    }

    fn decode(s: &str) -> Result<Self, ParseScalarError> {
        let (a, b) = s
            .split_once(':')
            .ok_or_else(|| ParseScalarError::new(s, "expected `sum:comp`"))?;
        Ok(CompensatedSum {
            sum: decode_f64(a)?,
            comp: decode_f64(b)?,
        })
    }
}

fn encode_f64(v: f64) -> String {
    format!("{:.16e}", v)
}

fn decode_f64(s: &str) -> Result<f64, ParseScalarError> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| ParseScalarError::new(s, "not a decimal number"))?;
    if !v.is_finite() {
        return Err(ParseScalarError::new(s, "not finite"));
    }
    Ok(v)
}

impl Scalar for Float {
    const MODE: NumericMode = NumericMode::Float;
    type Acc = CompensatedSum;

    fn zero() -> Self {
        Float(0.0)
    }

    fn one() -> Self {
        Float(1.0)
    }

    fn from_u64(v: u64) -> Self {
        Float(v as f64)
    }

    fn ratio(p: u64, q: u64) -> Self {
        Float(p as f64 / q as f64)
    }

    fn from_rational(r: &BigRational) -> Self {
        Float(rational_to_f64(r))
    }

    fn to_f64(&self) -> f64 {
        self.0
    }

    fn is_positive(&self) -> bool {
        self.0 > 0.0
    }

    fn encode(&self) -> String {
        encode_f64(self.0)
    }

    fn decode(s: &str) -> Result<Self, ParseScalarError> {
        decode_f64(s).map(Float)
    }

    fn harmonic(a: u64, b: u64) -> Self {
        Float(harmonic_partial_f64(a, b))
    }
}

/// Arbitrary-precision rational, always in lowest terms with positive
/// denominator.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Exact(pub BigRational);

impl Exact {
    pub fn as_rational(&self) -> &BigRational {
        &self.0
    }
}

impl Default for Exact {
    fn default() -> Self {
        Exact(BigRational::zero())
    }
}

impl Add for Exact {
    type Output = Exact;
    fn add(self, rhs: Exact) -> Exact {
        Exact(self.0 + rhs.0)
    }
}

impl Sub for Exact {
    type Output = Exact;
    fn sub(self, rhs: Exact) -> Exact {
        Exact(self.0 - rhs.0)
    }
}

impl Mul for Exact {
    type Output = Exact;
    fn mul(self, rhs: Exact) -> Exact {
        Exact(self.0 * rhs.0)
    }
}

impl fmt::Display for Exact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExactSum(Exact);

impl Accumulator<Exact> for ExactSum {
    fn add(&mut self, v: &Exact) {
        self.0 .0 += &v.0;
    }

    fn sub(&mut self, v: &Exact) {
        self.0 .0 -= &v.0;
    }

    fn value(&self) -> Exact {
        self.0.clone()
    }

    fn encode(&self) -> String {
        self.0.encode()
    }

    fn decode(s: &str) -> Result<Self, ParseScalarError> {
        Exact::decode(s).map(ExactSum)
    }
}

impl Scalar for Exact {
    const MODE: NumericMode = NumericMode::Exact;
    type Acc = ExactSum;

    fn zero() -> Self {
        Exact(BigRational::zero())
    }

    fn one() -> Self {
        Exact(BigRational::one())
    }

    fn from_u64(v: u64) -> Self {
        Exact(BigRational::from_integer(BigInt::from(v)))
    }

    fn ratio(p: u64, q: u64) -> Self {
        Exact(BigRational::new(BigInt::from(p), BigInt::from(q)))
    }

    fn from_rational(r: &BigRational) -> Self {
        Exact(r.clone())
    }

    fn to_f64(&self) -> f64 {
        rational_to_f64(&self.0)
    }

    fn is_positive(&self) -> bool {
        self.0.is_positive()
    }

    fn encode(&self) -> String {
        if self.0.is_integer() {
            self.0.numer().to_string()
        } else {
            format!("{}/{}", self.0.numer(), self.0.denom())
        }
    }

    fn decode(s: &str) -> Result<Self, ParseScalarError> {
        let s = s.trim();
        let r = match s.split_once('/') {
            Some((p, q)) => {
                let p: BigInt = p
                    .parse()
                    .map_err(|_| ParseScalarError::new(s, "bad numerator"))?;
                let q: BigInt = q
                    .parse()
                    .map_err(|_| ParseScalarError::new(s, "bad denominator"))?;
                if q.is_zero() {
                    return Err(ParseScalarError::new(s, "zero denominator"));
                }
                BigRational::new(p, q)
            }
            None => BigRational::from_integer(
                s.parse()
                    .map_err(|_| ParseScalarError::new(s, "bad integer"))?,
            ),
        };
        Ok(Exact(r))
    }

    fn harmonic(a: u64, b: u64) -> Self {
        Exact(harmonic_partial_exact(a, b))
    }
}

/// Converts a rational to the nearest-ish binary64 value (exact to within
/// a couple of ulps, which is all display and float seeding need).
pub fn rational_to_f64(r: &BigRational) -> f64 {
    if let (Some(n), Some(d)) = (r.numer().to_f64(), r.denom().to_f64()) {
        if n.is_finite() && d.is_finite() && d != 0.0 {
            return n / d;
        }
    }
    // Huge numerator/denominator: shift both down to 60 significant bits.
    let nb = r.numer().bits() as i64;
    let db = r.denom().bits() as i64;
    let shift_n = (nb - 60).max(0);
    let shift_d = (db - 60).max(0);
    let n = (r.numer() >> shift_n as usize).to_f64().unwrap_or(0.0);
    let d = (r.denom() >> shift_d as usize).to_f64().unwrap_or(1.0);
    (n / d) * 2f64.powi((shift_n - shift_d) as i32)
}

/// Parses `p/q`, an integer, or a decimal with optional exponent
/// (`1.8888838763176668e-6`, `1e11`) into an exact rational. Decimals are
/// taken as printed: the result has a power-of-ten denominator.
pub fn parse_rational(s: &str) -> Result<BigRational, ParseScalarError> {
    let s = s.trim();
    if s.contains('/') {
        return Exact::decode(s).map(|e| e.0);
    }
    let (mantissa, exp) = match s.find(['e', 'E']) {
        Some(pos) => {
            let e: i64 = s[pos + 1..]
                .parse()
                .map_err(|_| ParseScalarError::new(s, "bad exponent"))?;
            (&s[..pos], e)
        }
        None => (s, 0),
    };
    let (neg, mantissa) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    let digits: String = int_part.chars().chain(frac_part.chars()).collect();
    if digits.is_empty() || !digits.chars().all(|c| c.is_ascii_digit()) {
        return Err(ParseScalarError::new(s, "not a number"));
    }
    let mut numer: BigInt = digits.parse().expect("digits checked");
    if neg {
        numer = -numer;
    }
    let scale = exp - frac_part.len() as i64;
    let ten = BigInt::from(10u32);
    let r = if scale >= 0 {
        BigRational::from_integer(numer * num_traits::pow(ten, scale as usize))
    } else {
        BigRational::new(numer, num_traits::pow(ten, (-scale) as usize))
    };
    Ok(r)
}

/// Parses a non-negative integer written in any form [`parse_rational`]
/// accepts, so `1e6` and `135000000000` both work.
pub fn parse_count(s: &str) -> Result<u64, ParseScalarError> {
    let r = parse_rational(s)?;
    if !r.is_integer() {
        return Err(ParseScalarError::new(s, "not an integer"));
    }
    r.to_integer()
        .to_u64()
        .ok_or_else(|| ParseScalarError::new(s, "out of range for a count"))
}

/// Side lengths of the i-th rectangle: `(1/i, 1/(i+1))`.
pub fn rect_dims<S: Scalar>(i: u64) -> (S, S) {
    assert!(i >= 1, "rectangle index starts at 1");
    (S::recip(i), S::recip(i + 1))
}

/// Area still to be packed after the first `n` rectangles:
/// `1 - sum_{i<=n} 1/(i(i+1)) = 1/(n+1)`.
pub fn remaining_area<S: Scalar>(n: u64) -> S {
    S::recip(n + 1)
}

/// `sum_{j=a..=b} 1/j` in the requested mode.
pub fn harmonic_partial<S: Scalar>(a: u64, b: u64) -> S {
    assert!(1 <= a && a <= b, "harmonic_partial needs 1 <= a <= b");
    S::harmonic(a, b)
}

pub fn harmonic_partial_f64(a: u64, b: u64) -> f64 {
    // Smallest terms first.
    (a..=b).rev().map(|j| 1.0 / j as f64).collect::<CompensatedSum>().total()
}

/// Exact `sum_{j=a..=b} 1/j` by binary splitting: unreduced numerator and
/// denominator products are combined pairwise and reduced once at the end.
pub fn harmonic_partial_exact(a: u64, b: u64) -> BigRational {
    fn split(a: u64, b: u64) -> (BigUint, BigUint) {
        if b - a < 8 {
            let mut p = BigUint::zero();
            let mut q = BigUint::one();
            for j in a..=b {
                // p/q + 1/j = (p*j + q) / (q*j)
                p = p * j + &q;
                q *= j;
            }
            return (p, q);
        }
        let mid = a + (b - a) / 2;
        let (p1, q1) = split(a, mid);
        let (p2, q2) = split(mid + 1, b);
        (&p1 * &q2 + &p2 * &q1, q1 * q2)
    }
    let (p, q) = split(a, b);
    BigRational::new(BigInt::from(p), BigInt::from(q))
}

/// A closed interval with rational endpoints.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RationalInterval {
    pub lo: BigRational,
    pub hi: BigRational,
}

/// Outcome of comparing an interval against a bound.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Holds,
    Fails,
    /// The interval straddles the bound; neither side can be certified.
    Tight,
}

impl RationalInterval {
    pub fn point(v: BigRational) -> Self {
        RationalInterval { lo: v.clone(), hi: v }
    }

    pub fn width(&self) -> BigRational {
        &self.hi - &self.lo
    }

    pub fn add(&self, other: &RationalInterval) -> RationalInterval {
        RationalInterval {
            lo: &self.lo + &other.lo,
            hi: &self.hi + &other.hi,
        }
    }

    pub fn shift(&self, by: &BigRational) -> RationalInterval {
        RationalInterval {
            lo: &self.lo + by,
            hi: &self.hi + by,
        }
    }

    /// Scales by a nonnegative rational.
    pub fn scale(&self, by: &BigRational) -> RationalInterval {
        debug_assert!(!by.is_negative());
        RationalInterval {
            lo: &self.lo * by,
            hi: &self.hi * by,
        }
    }

    /// Decides `self < other` for every point of both intervals.
    pub fn less_than(&self, other: &RationalInterval) -> Decision {
        if self.hi < other.lo {
            Decision::Holds
        } else if self.lo >= other.hi {
            Decision::Fails
        } else {
            Decision::Tight
        }
    }

    pub fn midpoint_f64(&self) -> f64 {
        rational_to_f64(&((&self.lo + &self.hi) / BigInt::from(2u32)))
    }
}

/// Number of series terms used for the ln 2 bracket; the tail after `K`
/// terms is below `1/((K+1) 2^K)`.
const LN2_TERMS: u32 = 110;

/// Rational bracket `[L, U]` around ln 2 with `U - L < 1e-30`, from
/// `ln 2 = sum_{k>=1} 1/(k 2^k)`.
pub fn ln2_bracket() -> &'static RationalInterval {
    static BRACKET: OnceLock<RationalInterval> = OnceLock::new();
    BRACKET.get_or_init(|| {
        let mut lo = BigRational::zero();
        let mut pow = BigInt::one();
        for k in 1..=LN2_TERMS {
            pow <<= 1;
            lo += BigRational::new(BigInt::one(), BigInt::from(k) * &pow);
        }
        let tail = BigRational::new(BigInt::one(), BigInt::from(LN2_TERMS + 1) * &pow);
        let hi = &lo + tail;
        RationalInterval { lo, hi }
    })
}
