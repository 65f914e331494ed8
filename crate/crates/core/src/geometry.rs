//! Exact rational scalars, closed intervals, Snap, and the dyadic
//! aligned-interval family.
//!
//! Every coordinate in this crate is a [`Rational`]; all comparisons and
//! feasibility decisions are exact. There is no floating-point fast path.

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{Integer, One, Signed, Zero};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GeometryError {
    #[error("slot span {slot} exceeds window span {window}")]
    SlotExceedsWindow { slot: Rational, window: Rational },
    #[error("interval [{0}, {1}] contains no aligned interval at level >= 0")]
    NoAlignedInterval(Rational, Rational),
    #[error("invalid interval: start {0} > end {1}")]
    InvalidInterval(Rational, Rational),
    #[error("cannot parse rational from {0:?}")]
    ParseRational(String),
}

/// Arbitrary-precision rational, always in lowest terms with a positive
/// denominator (enforced by the underlying representation).
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Rational(BigRational);

impl Rational {
    pub fn new(numer: i64, denom: i64) -> Self {
        assert!(denom != 0, "zero denominator");
        Rational(BigRational::new(BigInt::from(numer), BigInt::from(denom)))
    }

    pub fn from_int(n: i64) -> Self {
        Rational(BigRational::from_integer(BigInt::from(n)))
    }

    pub fn from_big(n: BigInt) -> Self {
        Rational(BigRational::from_integer(n))
    }

    pub fn zero() -> Self {
        Rational(BigRational::zero())
    }

    pub fn one() -> Self {
        Rational(BigRational::one())
    }

    /// 2^k for any integer k (negative k gives 1/2^|k|).
    pub fn pow2(k: i64) -> Self {
        let one = BigInt::one();
        if k >= 0 {
            Rational(BigRational::from_integer(one << k as usize))
        } else {
            Rational(BigRational::new(one.clone(), one << (-k) as usize))
        }
    }

    pub fn pow(&self, exp: i64) -> Self {
        Rational(self.0.pow(exp as i32))
    }

    pub fn floor_big(&self) -> BigInt {
        self.0.floor().to_integer()
    }

    pub fn ceil_big(&self) -> BigInt {
        self.0.ceil().to_integer()
    }

    pub fn is_integer(&self) -> bool {
        self.0.is_integer()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    pub fn abs(&self) -> Self {
        Rational(self.0.abs())
    }

    pub fn min(self, other: Self) -> Self {
        if self <= other {
            self
        } else {
            other
        }
    }

    pub fn max(self, other: Self) -> Self {
        if self >= other {
            self
        } else {
            other
        }
    }

    pub fn numer(&self) -> &BigInt {
        self.0.numer()
    }

    pub fn denom(&self) -> &BigInt {
        self.0.denom()
    }

    /// Exact value as f64 where it fits; only used for report formatting.
    pub fn to_f64_lossy(&self) -> f64 {
        use num::ToPrimitive;
        self.0.to_f64().unwrap_or(f64::NAN)
    }
}

impl From<i64> for Rational {
    fn from(n: i64) -> Self {
        Rational::from_int(n)
    }
}

impl From<u64> for Rational {
    fn from(n: u64) -> Self {
        Rational(BigRational::from_integer(BigInt::from(n)))
    }
}

impl From<usize> for Rational {
    fn from(n: usize) -> Self {
        Rational(BigRational::from_integer(BigInt::from(n)))
    }
}

macro_rules! rational_binop {
    ($trait:ident, $method:ident) => {
        impl $trait for Rational {
            type Output = Rational;
            fn $method(self, rhs: Rational) -> Rational {
                Rational((self.0).$method(rhs.0))
            }
        }
        impl<'a> $trait<&'a Rational> for Rational {
            type Output = Rational;
            fn $method(self, rhs: &'a Rational) -> Rational {
                Rational((self.0).$method(&rhs.0))
            }
        }
        impl<'a> $trait<Rational> for &'a Rational {
            type Output = Rational;
            fn $method(self, rhs: Rational) -> Rational {
                Rational((&self.0).$method(rhs.0))
            }
        }
        impl<'a, 'b> $trait<&'b Rational> for &'a Rational {
            type Output = Rational;
            fn $method(self, rhs: &'b Rational) -> Rational {
                Rational((&self.0).$method(&rhs.0))
            }
        }
        impl $trait<i64> for Rational {
            type Output = Rational;
            fn $method(self, rhs: i64) -> Rational {
                (self).$method(Rational::from_int(rhs))
            }
        }
        impl<'a> $trait<i64> for &'a Rational {
            type Output = Rational;
            fn $method(self, rhs: i64) -> Rational {
                (self).$method(Rational::from_int(rhs))
            }
        }
    };
}

rational_binop!(Add, add);
rational_binop!(Sub, sub);
rational_binop!(Mul, mul);
rational_binop!(Div, div);

impl Neg for Rational {
    type Output = Rational;
    fn neg(self) -> Rational {
        Rational(-self.0)
    }
}

impl Neg for &Rational {
    type Output = Rational;
    fn neg(self) -> Rational {
        Rational(-&self.0)
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_integer() {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl fmt::Debug for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self)
    }
}

impl FromStr for Rational {
    type Err = GeometryError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || GeometryError::ParseRational(s.to_string());
        let (num, den) = match s.split_once('/') {
            Some((n, d)) => (n.trim(), d.trim()),
            None => (s.trim(), "1"),
        };
        let n: BigInt = num.parse().map_err(|_| bad())?;
        let d: BigInt = den.parse().map_err(|_| bad())?;
        if d <= BigInt::zero() {
            return Err(bad());
        }
        Ok(Rational(BigRational::new(n, d)))
    }
}

impl Serialize for Rational {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Rational {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(|e| D::Error::custom(format!("{e}")))
    }
}

/// Result of comparing two intervals under the componentwise partial order
/// `X <= Y  iff  X.start <= Y.start and X.end <= Y.end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntervalCmp {
    /// Both directions hold, i.e. the intervals are equal.
    Both,
    LessOrEqual,
    GreaterOrEqual,
    Incomparable,
}

/// Closed rational interval `[start, end]` with `start <= end`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Interval {
    start: Rational,
    end: Rational,
}

impl Interval {
    /// Panics if `start > end`; use [`Interval::try_new`] for untrusted data.
    pub fn new(start: Rational, end: Rational) -> Self {
        assert!(start <= end, "interval start {start} > end {end}");
        Interval { start, end }
    }

    pub fn try_new(start: Rational, end: Rational) -> Result<Self, GeometryError> {
        if start <= end {
            Ok(Interval { start, end })
        } else {
            Err(GeometryError::InvalidInterval(start, end))
        }
    }

    pub fn of_ints(start: i64, end: i64) -> Self {
        Interval::new(Rational::from_int(start), Rational::from_int(end))
    }

    /// Unit-length interval starting at `start`.
    pub fn unit_at(start: Rational) -> Self {
        let end = &start + 1;
        Interval { start, end }
    }

    pub fn start(&self) -> &Rational {
        &self.start
    }

    pub fn end(&self) -> &Rational {
        &self.end
    }

    pub fn span(&self) -> Rational {
        &self.end - &self.start
    }

    /// `other ⊆ self`.
    pub fn contains(&self, other: &Interval) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn contains_point(&self, p: &Rational) -> bool {
        &self.start <= p && p <= &self.end
    }

    /// Strict interior overlap; intervals touching at an endpoint do not
    /// overlap (closed intervals meeting at a point are disjoint for
    /// scheduling purposes).
    pub fn overlaps(&self, other: &Interval) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn shift(&self, by: &Rational) -> Interval {
        Interval {
            start: &self.start + by,
            end: &self.end + by,
        }
    }

    pub fn shift_int(&self, by: i64) -> Interval {
        self.shift(&Rational::from_int(by))
    }

    pub fn scale(&self, by: &Rational) -> Interval {
        Interval {
            start: &self.start * by,
            end: &self.end * by,
        }
    }

    /// Componentwise partial-order comparison.
    pub fn compare(&self, other: &Interval) -> IntervalCmp {
        let le = self.start <= other.start && self.end <= other.end;
        let ge = other.start <= self.start && other.end <= self.end;
        match (le, ge) {
            (true, true) => IntervalCmp::Both,
            (true, false) => IntervalCmp::LessOrEqual,
            (false, true) => IntervalCmp::GreaterOrEqual,
            (false, false) => IntervalCmp::Incomparable,
        }
    }

    /// `self <= other` in the partial order.
    pub fn le(&self, other: &Interval) -> bool {
        self.start <= other.start && self.end <= other.end
    }

    /// Lexicographic (start, end) key; a linear extension of the partial
    /// order used to sort instances.
    pub fn lex_cmp(&self, other: &Interval) -> std::cmp::Ordering {
        self.start
            .cmp(&other.start)
            .then_with(|| self.end.cmp(&other.end))
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.start, self.end)
    }
}

impl fmt::Debug for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.start, self.end)
    }
}

impl Serialize for Interval {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        [self.start.to_string(), self.end.to_string()].serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Interval {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let [s, e] = <[String; 2]>::deserialize(deserializer)?;
        let start: Rational = s.parse().map_err(|e| D::Error::custom(format!("{e}")))?;
        let end: Rational = e.parse().map_err(|e| D::Error::custom(format!("{e}")))?;
        Interval::try_new(start, end).map_err(|e| D::Error::custom(format!("{e}")))
    }
}

/// The slot within `w` closest to `s`: clamps `s` to the nearer end of `w`
/// when it sticks out, otherwise returns `s` unchanged.
pub fn snap(s: &Interval, w: &Interval) -> Result<Interval, GeometryError> {
    let len = s.span();
    if w.span() < len {
        return Err(GeometryError::SlotExceedsWindow {
            slot: len,
            window: w.span(),
        });
    }
    if s.start() < w.start() {
        return Ok(Interval::new(w.start().clone(), w.start() + &len));
    }
    if s.end() > w.end() {
        return Ok(Interval::new(w.end() - &len, w.end().clone()));
    }
    Ok(s.clone())
}

/// Which relative of an aligned interval to navigate to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlignedNav {
    Parent,
    Sibling,
    LeftHalf,
    RightHalf,
}

/// Dyadic interval `[a·2^k, (a+1)·2^k]`, stored as (level k, index a).
/// Negative levels are representable, though `align` never produces one.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct AlignedInterval {
    level: i64,
    index: BigInt,
}

impl AlignedInterval {
    pub fn new(level: i64, index: impl Into<BigInt>) -> Self {
        AlignedInterval {
            level,
            index: index.into(),
        }
    }

    pub fn level(&self) -> i64 {
        self.level
    }

    pub fn index(&self) -> &BigInt {
        &self.index
    }

    pub fn span(&self) -> Rational {
        Rational::pow2(self.level)
    }

    pub fn start(&self) -> Rational {
        Rational::from_big(self.index.clone()) * Rational::pow2(self.level)
    }

    pub fn end(&self) -> Rational {
        Rational::from_big(&self.index + 1) * Rational::pow2(self.level)
    }

    pub fn to_interval(&self) -> Interval {
        Interval::new(self.start(), self.end())
    }

    /// The unique aligned interval of double span containing this one.
    pub fn parent(&self) -> AlignedInterval {
        AlignedInterval {
            level: self.level + 1,
            index: self.index.div_floor(&BigInt::from(2)),
        }
    }

    /// The other child of this interval's parent.
    pub fn sibling(&self) -> AlignedInterval {
        AlignedInterval {
            level: self.level,
            index: &self.index ^ BigInt::one(),
        }
    }

    pub fn left_half(&self) -> AlignedInterval {
        AlignedInterval {
            level: self.level - 1,
            index: &self.index * 2,
        }
    }

    pub fn right_half(&self) -> AlignedInterval {
        AlignedInterval {
            level: self.level - 1,
            index: &self.index * 2 + 1,
        }
    }

    pub fn nav(&self, which: AlignedNav) -> AlignedInterval {
        match which {
            AlignedNav::Parent => self.parent(),
            AlignedNav::Sibling => self.sibling(),
            AlignedNav::LeftHalf => self.left_half(),
            AlignedNav::RightHalf => self.right_half(),
        }
    }

    /// `other ⊆ self` (as intervals; aligned intervals are laminar, so this
    /// is equivalent to being a descendant or equal).
    pub fn contains(&self, other: &AlignedInterval) -> bool {
        self.to_interval().contains(&other.to_interval())
    }

    /// Recognize an interval as aligned, if it is.
    pub fn from_interval(iv: &Interval) -> Option<AlignedInterval> {
        let span = iv.span();
        let level = if span.denom().is_one() {
            let n = span.numer();
            if n.is_zero() || !(n & (n - 1i32)).is_zero() {
                return None;
            }
            (n.bits() - 1) as i64
        } else if span.numer().is_one() {
            let d = span.denom();
            if !(d & (d - 1i32)).is_zero() {
                return None;
            }
            -((d.bits() - 1) as i64)
        } else {
            return None;
        };
        let idx = iv.start() / Rational::pow2(level);
        if idx.is_integer() {
            Some(AlignedInterval::new(level, idx.floor_big()))
        } else {
            None
        }
    }
}

impl fmt::Display for AlignedInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}+1]*2^{} ({})", self.index, self.level, self.to_interval())
    }
}

impl fmt::Debug for AlignedInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_interval())
    }
}

/// Largest aligned interval within `x`, leftmost among ties.
///
/// Only levels `k >= 0` are searched: inputs whose span is below 1, or which
/// merely straddle a finer grid, are rejected rather than descending to
/// negative levels.
pub fn align(x: &Interval) -> Result<AlignedInterval, GeometryError> {
    let span = x.span();
    let err = || GeometryError::NoAlignedInterval(x.start().clone(), x.end().clone());
    if span < Rational::one() {
        return Err(err());
    }
    let mut k: i64 = 0;
    while Rational::pow2(k + 1) <= span {
        k += 1;
    }
    while k >= 0 {
        let cell = Rational::pow2(k);
        let a = (x.start() / &cell).ceil_big();
        let end = Rational::from_big(&a + 1) * &cell;
        if &end <= x.end() {
            return Ok(AlignedInterval::new(k, a));
        }
        k -= 1;
    }
    Err(err())
}

/// Smallest aligned interval (level >= `min_level`) containing `[lo, hi]`.
pub fn aligned_hull(lo: &Rational, hi: &Rational, min_level: i64) -> AlignedInterval {
    assert!(lo <= hi);
    let mut k = min_level;
    loop {
        let cell = Rational::pow2(k);
        let a = (lo / &cell).floor_big();
        let end = Rational::from_big(&a + 1) * &cell;
        if &end >= hi {
            return AlignedInterval::new(k, a);
        }
        k += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64, d: i64) -> Rational {
        Rational::new(n, d)
    }

    #[test]
    fn rational_basics() {
        assert_eq!(r(2, 4), r(1, 2));
        assert_eq!(r(1, 2) + r(1, 3), r(5, 6));
        assert_eq!(r(-4, 2).to_string(), "-2");
        assert_eq!(r(3, 2).to_string(), "3/2");
        assert_eq!("3/2".parse::<Rational>().unwrap(), r(3, 2));
        assert_eq!("-7".parse::<Rational>().unwrap(), Rational::from_int(-7));
        assert!("1/0".parse::<Rational>().is_err());
        assert!("1/-2".parse::<Rational>().is_err());
        assert_eq!(Rational::pow2(-2), r(1, 4));
        assert_eq!(r(2, 3).pow(-2), r(9, 4));
    }

    #[test]
    fn interval_compare_examples() {
        let i = Interval::of_ints;
        assert_eq!(i(0, 1).compare(&i(0, 1)), IntervalCmp::Both);
        assert_eq!(i(0, 1).compare(&i(2, 3)), IntervalCmp::LessOrEqual);
        assert_eq!(i(2, 3).compare(&i(0, 1)), IntervalCmp::GreaterOrEqual);
        assert_eq!(i(0, 3).compare(&i(1, 2)), IntervalCmp::Incomparable);
    }

    #[test]
    fn snap_examples() {
        let i = Interval::of_ints;
        let w = i(0, 10);
        assert_eq!(snap(&i(5, 6), &w).unwrap(), i(5, 6));
        assert_eq!(snap(&i(-2, -1), &w).unwrap(), i(0, 1));
        let s = Interval::new(r(21, 2), r(23, 2));
        assert_eq!(snap(&s, &w).unwrap(), i(9, 10));
        assert!(snap(&i(0, 3), &i(4, 5)).is_err());
    }

    #[test]
    fn align_examples() {
        let i = Interval::of_ints;
        assert_eq!(align(&i(3, 9)).unwrap().to_interval(), i(4, 8));
        // values from the alignment counterexample remark
        assert_eq!(align(&i(82, 110)).unwrap().to_interval(), i(88, 96));
        assert_eq!(align(&i(1, 255)).unwrap().to_interval(), i(64, 128));
        assert!(align(&Interval::new(r(1, 2), r(3, 2))).is_err());
        assert!(align(&Interval::new(r(0, 1), r(1, 2))).is_err());
    }

    #[test]
    fn align_maximal_leftmost_exhaustive() {
        // against enumeration of all aligned intervals with integer
        // endpoints inside X, for X with integer endpoints in [-64, 64]
        for s in -64..=64i64 {
            for e in (s + 1)..=64 {
                let x = Interval::of_ints(s, e);
                let got = align(&x).unwrap();
                let mut best: Option<Interval> = None;
                let mut k = 0i64;
                while 1i64 << k <= e - s {
                    let cell = 1i64 << k;
                    let a0 = s.div_euclid(cell) - 1;
                    for a in a0..=(e / cell + 1) {
                        let cand = Interval::of_ints(a * cell, (a + 1) * cell);
                        if x.contains(&cand) {
                            let better = match &best {
                                None => true,
                                Some(b) => {
                                    cand.span() > b.span()
                                        || (cand.span() == b.span() && cand.start() < b.start())
                                }
                            };
                            if better {
                                best = Some(cand);
                            }
                        }
                    }
                    k += 1;
                }
                assert_eq!(got.to_interval(), best.unwrap(), "align({x})");
            }
        }
    }

    #[test]
    fn aligned_nav_examples() {
        let x = AlignedInterval::new(2, 1); // [4,8]
        assert_eq!(x.parent().to_interval(), Interval::of_ints(0, 8));
        assert_eq!(x.sibling().to_interval(), Interval::of_ints(0, 4));
        let p = AlignedInterval::new(3, 0); // [0,8]
        assert_eq!(p.left_half().to_interval(), Interval::of_ints(0, 4));
        assert_eq!(p.right_half().to_interval(), Interval::of_ints(4, 8));
        // round-trips
        assert_eq!(p.left_half().parent(), p);
        assert_eq!(p.right_half().parent(), p);
        assert_eq!(x.sibling().sibling(), x);
        // negative indices pair correctly
        let m = AlignedInterval::new(0, -1); // [-1,0]
        assert_eq!(m.sibling().to_interval(), Interval::of_ints(-2, -1));
        assert_eq!(m.parent().to_interval(), Interval::of_ints(-2, 0));
    }

    #[test]
    fn align_containment_bound() {
        // every Z with align(Z) ⊆ X lies within an interval of span 4*span(X)
        for xk in 0..=3i64 {
            for xa in -3..=3i64 {
                let x = AlignedInterval::new(xk, xa);
                let mut lo: Option<Rational> = None;
                let mut hi: Option<Rational> = None;
                for s in -80..=80i64 {
                    for e in (s + 1)..=80 {
                        let z = Interval::of_ints(s, e);
                        if let Ok(a) = align(&z) {
                            if x.contains(&a) {
                                let (zs, ze) = (z.start().clone(), z.end().clone());
                                lo = Some(match lo {
                                    None => zs.clone(),
                                    Some(l) => l.min(zs),
                                });
                                hi = Some(match hi {
                                    None => ze.clone(),
                                    Some(h) => h.max(ze),
                                });
                            }
                        }
                    }
                }
                if let (Some(lo), Some(hi)) = (lo, hi) {
                    assert!(hi - lo <= Rational::from_int(4) * x.span());
                }
            }
        }
    }

    #[test]
    fn aligned_recognition() {
        let x = AlignedInterval::from_interval(&Interval::of_ints(4, 8)).unwrap();
        assert_eq!(x, AlignedInterval::new(2, 1));
        let h = AlignedInterval::from_interval(&Interval::new(r(1, 2), r(1, 1))).unwrap();
        assert_eq!(h, AlignedInterval::new(-1, 1));
        assert!(AlignedInterval::from_interval(&Interval::of_ints(1, 3)).is_none());
        assert!(AlignedInterval::from_interval(&Interval::of_ints(3, 4)).is_some());
    }

    #[test]
    fn aligned_hull_works() {
        let h = aligned_hull(&r(3, 1), &r(9, 1), 0);
        assert!(h.to_interval().contains(&Interval::of_ints(3, 9)));
        assert_eq!(h.to_interval(), Interval::of_ints(0, 16));
        let h2 = aligned_hull(&r(0, 1), &r(8, 1), 0);
        assert_eq!(h2.to_interval(), Interval::of_ints(0, 8));
    }
}
