//! Exact arithmetic on the circle group.
//!
//! An [`Angle`] is a reduced rational in `[0, 1)` standing for `e^{2πi·value}`.
//! The group law is addition mod 1, so everything algebraic stays exact; only
//! chord-distance comparisons touch sin/cos, and those are decided by the
//! enclosure machinery with a symbolic fast path for the finitely many arc
//! distances whose chord² is rational (0, 1/6, 1/4, 1/3, 1/2).

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::enclosure::{chord_enclosure, chord_linear_bounds, chord_sq_enclosure, RatInterval};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CircleError {
    #[error("neighborhood coverage test requires a nonempty sample set")]
    EmptySampleSet,
    #[error("negative tolerance {0} in a chord comparison")]
    NegativeTolerance(String),
    #[error("not a valid angle literal: {0:?} (expected `p/q` or an integer)")]
    BadAngleLiteral(String),
}

/// A point of the circle group: a reduced rational in `[0, 1)`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Angle(BigRational);

impl Angle {
    /// Wraps any rational into `[0, 1)`; `Ratio` keeps it reduced.
    pub fn new(r: BigRational) -> Self {
        let wrapped = &r - r.floor();
        Angle(wrapped)
    }

    pub fn zero() -> Self {
        Angle(BigRational::zero())
    }

    pub fn from_frac(num: i64, den: i64) -> Self {
        assert!(den != 0);
        Angle::new(BigRational::new(BigInt::from(num), BigInt::from(den)))
    }

    pub fn value(&self) -> &BigRational {
        &self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    /// Group law of the circle: addition of values mod 1.
    pub fn combine(&self, other: &Angle) -> Angle {
        Angle::new(&self.0 + &other.0)
    }

    /// Group inverse: negation mod 1.
    pub fn inverse(&self) -> Angle {
        Angle::new(-self.0.clone())
    }

    /// Integer multiple `n·a` mod 1.
    pub fn scale_int(&self, n: &BigInt) -> Angle {
        Angle::new(&self.0 * BigRational::from_integer(n.clone()))
    }

    /// Arc distance in `[0, 1/2]`, exact.
    pub fn arc_distance(&self, other: &Angle) -> BigRational {
        let d = (&self.0 - &other.0).abs();
        let one = BigRational::one();
        if d > BigRational::new(BigInt::one(), BigInt::from(2)) {
            one - d
        } else {
            d
        }
    }

    pub fn to_f64(&self) -> f64 {
        let n = self.0.numer().to_string().parse::<f64>().unwrap_or(f64::NAN);
        let d = self.0.denom().to_string().parse::<f64>().unwrap_or(f64::NAN);
        n / d
    }
}

impl fmt::Display for Angle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.0.numer(), self.0.denom())
    }
}

impl fmt::Debug for Angle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Angle({})", self)
    }
}

impl FromStr for Angle {
    type Err = CircleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || CircleError::BadAngleLiteral(s.to_string());
        if let Some((n, d)) = s.split_once('/') {
            let n = BigInt::from_str(n.trim()).map_err(|_| bad())?;
            let d = BigInt::from_str(d.trim()).map_err(|_| bad())?;
            if d.is_zero() {
                return Err(bad());
            }
            Ok(Angle::new(BigRational::new(n, d)))
        } else {
            let n = BigInt::from_str(s.trim()).map_err(|_| bad())?;
            Ok(Angle::new(BigRational::from_integer(n)))
        }
    }
}

impl Serialize for Angle {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Angle {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Angle::from_str(&s).map_err(serde::de::Error::custom)
    }
}

/// The n-th roots of unity as the angle set `{k/n : 0 <= k < n}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RootsOfUnity {
    pub n: u64,
}

impl RootsOfUnity {
    pub fn new(n: u64) -> Self {
        assert!(n >= 1);
        RootsOfUnity { n }
    }

    pub fn contains(&self, a: &Angle) -> bool {
        (a.value() * BigRational::from_integer(BigInt::from(self.n))).is_integer()
    }

    pub fn angles(&self) -> impl Iterator<Item = Angle> + '_ {
        (0..self.n).map(move |k| Angle::new(BigRational::new(BigInt::from(k), BigInt::from(self.n))))
    }
}

/// Closure of the set of attainable character values for a group.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ValueRange {
    FullCircle,
    Roots(u64),
}

impl ValueRange {
    pub fn contains(&self, a: &Angle) -> bool {
        match self {
            ValueRange::FullCircle => true,
            ValueRange::Roots(m) => RootsOfUnity::new(*m).contains(a),
        }
    }
}

impl fmt::Display for ValueRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValueRange::FullCircle => write!(f, "full-circle"),
            ValueRange::Roots(m) => write!(f, "roots({m})"),
        }
    }
}

/// Compares the chord of a given arc distance `d ∈ [0, 1/2]` against a
/// rational threshold, exactly.
///
/// Symbolic path first: the only rational arc distances with rational chord²
/// are 0, 1/6, 1/4, 1/3, 1/2 (chord² = 0, 1, 2, 3, 4). Everywhere else the
/// chord is irrational, so interval refinement must terminate.
pub fn chord_of_arc_cmp(d: &BigRational, eps: &BigRational) -> Ordering {
    assert!(!d.is_negative() && d <= &BigRational::new(BigInt::one(), BigInt::from(2)));
    if eps.is_negative() {
        return Ordering::Greater;
    }
    let chord_sq_symbolic = symbolic_chord_sq(d);
    let eps_sq = eps * eps;
    if let Some(cs) = chord_sq_symbolic {
        return cs.cmp(&eps_sq);
    }
    if eps >= &BigRational::from_integer(BigInt::from(2)) {
        // chord <= 2 < eps unless d = 1/2, handled symbolically above
        return Ordering::Less;
    }
    let mut prec = 64;
    loop {
        let enc = chord_sq_enclosure(d, prec);
        if enc.lt(&eps_sq) {
            return Ordering::Less;
        }
        if enc.gt(&eps_sq) {
            return Ordering::Greater;
        }
        prec *= 2;
        assert!(
            prec <= 1 << 16,
            "chord comparison failed to converge; boundary equality escaped the symbolic path"
        );
    }
}

fn symbolic_chord_sq(d: &BigRational) -> Option<BigRational> {
    let table = [
        ((0i64, 1i64), 0i64),
        ((1, 6), 1),
        ((1, 4), 2),
        ((1, 3), 3),
        ((1, 2), 4),
    ];
    for ((n, den), cs) in table {
        if d == &BigRational::new(BigInt::from(n), BigInt::from(den)) {
            return Some(BigRational::from_integer(BigInt::from(cs)));
        }
    }
    None
}

/// Closed comparison: true iff `|e^{2πia} - e^{2πib}| <= eps`.
pub fn chord_leq(a: &Angle, b: &Angle, eps: &BigRational) -> bool {
    if eps.is_negative() {
        return false;
    }
    chord_of_arc_cmp(&a.arc_distance(b), eps) != Ordering::Greater
}

/// Strict variant, used where the contracts demand `<`.
pub fn chord_lt(a: &Angle, b: &Angle, eps: &BigRational) -> bool {
    chord_of_arc_cmp(&a.arc_distance(b), eps) == Ordering::Less
}

/// Certified enclosure of the chord `|e^{2πia} - e^{2πib}|`.
pub fn chord_between(a: &Angle, b: &Angle, prec: u32) -> RatInterval {
    let d = a.arc_distance(b);
    if let Some(cs) = symbolic_chord_sq(&d) {
        // perfect squares only occur at 0 and 4 in the table
        if cs.is_zero() {
            return RatInterval::point(BigRational::zero());
        }
        if cs == BigRational::from_integer(BigInt::from(4)) {
            return RatInterval::point(BigRational::from_integer(BigInt::from(2)));
        }
        if cs == BigRational::from_integer(BigInt::from(1)) {
            return RatInterval::point(BigRational::one());
        }
    }
    chord_enclosure(&d, prec)
}

/// Fast rational bracket on the chord for an arc distance.
pub fn chord_cheap_bounds(arc: &BigRational) -> RatInterval {
    chord_linear_bounds(arc)
}

/// A rational upper bound on the chord, cheap and certified.
pub fn chord_upper_bound(a: &Angle, b: &Angle) -> BigRational {
    let d = a.arc_distance(b);
    if d.is_zero() {
        return BigRational::zero();
    }
    if let Some(cs) = symbolic_chord_sq(&d) {
        if cs == BigRational::from_integer(BigInt::from(4)) {
            return BigRational::from_integer(BigInt::from(2));
        }
        if cs == BigRational::one() {
            return BigRational::one();
        }
    }
    chord_linear_bounds(&d).hi
}

/// True iff every point of `target` lies within chord `eps` of some element
/// of `s` (closed comparison).
///
/// For `Roots(m)` the m points are checked directly. For the full circle the
/// worst offenders are the midpoints of consecutive sample gaps, so coverage
/// reduces to the largest half-gap.
pub fn neighborhood_covers(
    s: &[Angle],
    eps: &BigRational,
    target: &ValueRange,
) -> Result<bool, CircleError> {
    if s.is_empty() {
        return Err(CircleError::EmptySampleSet);
    }
    if eps.is_negative() {
        return Err(CircleError::NegativeTolerance(eps.to_string()));
    }
    match target {
        ValueRange::Roots(m) => {
            let roots = RootsOfUnity::new(*m);
            let covered = roots.angles().all(|z| s.iter().any(|w| chord_leq(&z, w, eps)));
            Ok(covered)
        }
        ValueRange::FullCircle => {
            let mut sorted: Vec<&Angle> = s.iter().collect();
            sorted.sort();
            sorted.dedup();
            let half_gap = max_half_gap(&sorted);
            Ok(chord_of_arc_cmp(&half_gap, eps) != Ordering::Greater)
        }
    }
}

/// Largest half-gap (arc distance from a gap midpoint to its endpoints) of a
/// sorted, deduplicated set of angles.
fn max_half_gap(sorted: &[&Angle]) -> BigRational {
    let one = BigRational::one();
    let mut max_gap = BigRational::zero();
    for i in 0..sorted.len() {
        let next = sorted[(i + 1) % sorted.len()];
        let mut gap = next.value() - sorted[i].value();
        if gap <= BigRational::zero() {
            gap += &one;
        }
        if gap > max_gap {
            max_gap = gap;
        }
    }
    max_gap / BigRational::from_integer(BigInt::from(2))
}

/// Coverage of the full circle by a coset of the N-th roots of unity, without
/// materializing the N points: the half-gap is 1/(2N).
pub fn coset_covers_circle(order: &BigInt, eps: &BigRational) -> bool {
    let half_gap = BigRational::new(BigInt::one(), order * BigInt::from(2));
    chord_of_arc_cmp(&half_gap, eps) != Ordering::Greater
}

/// Rational bracket [lo, hi] of the arc distance t solving 2 sin(πt) = eps,
/// so that `arc <= lo` certifies chord <= eps and `arc > hi` certifies
/// chord > eps. Bisection to width 2^-bits; used to batch chord comparisons
/// against a fixed threshold.
pub fn chord_arc_threshold(eps: &BigRational, bits: u32) -> RatInterval {
    let half = BigRational::new(BigInt::one(), BigInt::from(2));
    if eps >= &BigRational::from_integer(BigInt::from(2)) {
        return RatInterval::point(half);
    }
    if eps <= &BigRational::zero() {
        return RatInterval::point(BigRational::zero());
    }
    let mut lo = BigRational::zero();
    let mut hi = half;
    let width_goal = BigRational::new(BigInt::one(), BigInt::one() << bits);
    while &hi - &lo > width_goal {
        let mid = (&lo + &hi) / BigRational::from_integer(BigInt::from(2));
        match chord_of_arc_cmp(&mid, eps) {
            Ordering::Less => lo = mid,
            Ordering::Greater => hi = mid,
            Ordering::Equal => return RatInterval::point(mid),
        }
    }
    RatInterval::new(lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ang(n: i64, d: i64) -> Angle {
        Angle::from_frac(n, d)
    }

    fn r(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    #[test]
    fn group_law_examples() {
        assert_eq!(ang(1, 3).combine(&ang(1, 3)), ang(2, 3));
        assert_eq!(ang(1, 4).inverse(), ang(3, 4));
        assert_eq!(ang(3, 4).combine(&ang(1, 2)), ang(1, 4));
    }

    #[test]
    fn chord_examples() {
        // antipodal chord is exactly the diameter
        assert!(chord_leq(&ang(0, 1), &ang(1, 2), &r(2, 1)));
        // chord from 1 to i is sqrt(2) > 1
        assert!(!chord_leq(&ang(0, 1), &ang(1, 4), &r(1, 1)));
        // 2 sin(pi/8) ≈ 0.7654 <= 4/5; frozen from the interval evaluation
        assert!(chord_leq(&ang(0, 1), &ang(1, 8), &r(4, 5)));
        assert!(!chord_leq(&ang(0, 1), &ang(1, 8), &r(7, 10)));
    }

    #[test]
    fn chord_decisions_match_f64_oracle_away_from_boundaries() {
        // independent oracle: chord = 2 sin(pi * arcdist) in f64, compared
        // only where the margin dwarfs f64 error
        let cases = [
            (ang(0, 1), ang(1, 8), r(4, 5)),
            (ang(1, 7), ang(3, 7), r(3, 2)),
            (ang(0, 1), ang(1, 100), r(1, 10)),
            (ang(2, 5), ang(4, 5), r(19, 10)),
        ];
        for (a, b, eps) in cases {
            let d = a.arc_distance(&b);
            let chord = 2.0
                * (std::f64::consts::PI * d.numer().to_string().parse::<f64>().unwrap()
                    / d.denom().to_string().parse::<f64>().unwrap())
                .sin();
            let eps_f = eps.numer().to_string().parse::<f64>().unwrap()
                / eps.denom().to_string().parse::<f64>().unwrap();
            assert!((chord - eps_f).abs() > 1e-9, "test case too close to boundary");
            assert_eq!(chord_leq(&a, &b, &eps), chord <= eps_f);
        }
    }

    #[test]
    fn boundary_equality_counts_as_leq() {
        // chord(0, 1/2) = 2 exactly
        assert!(chord_leq(&ang(0, 1), &ang(1, 2), &r(2, 1)));
        // chord(0, 1/6) = 1 exactly
        assert!(chord_leq(&ang(0, 1), &ang(1, 6), &r(1, 1)));
        assert!(!chord_lt(&ang(0, 1), &ang(1, 6), &r(1, 1)));
    }

    #[test]
    fn coverage_examples() {
        // {i, -i} misses 1 within eps = 1 (the gap half-chord is sqrt(2))
        let s = vec![ang(1, 4), ang(3, 4)];
        assert!(!neighborhood_covers(&s, &r(1, 1), &ValueRange::FullCircle).unwrap());
        // eighth roots cover the circle within 4/5 (max chord 2 sin(pi/16) ≈ 0.39)
        let r8: Vec<Angle> = RootsOfUnity::new(8).angles().collect();
        assert!(neighborhood_covers(&r8, &r(4, 5), &ValueRange::FullCircle).unwrap());
        // the identity covers the trivial target
        assert!(neighborhood_covers(&[Angle::zero()], &r(1, 10), &ValueRange::Roots(1)).unwrap());
        assert_eq!(
            neighborhood_covers(&[], &r(1, 1), &ValueRange::FullCircle),
            Err(CircleError::EmptySampleSet)
        );
    }

    #[test]
    fn roots_coverage_threshold() {
        // covers iff eps >= 2 sin(pi/(2m)); spot-check around m = 6:
        // 2 sin(pi/12) ≈ 0.5176
        let r6: Vec<Angle> = RootsOfUnity::new(6).angles().collect();
        assert!(neighborhood_covers(&r6, &r(52, 100), &ValueRange::FullCircle).unwrap());
        assert!(!neighborhood_covers(&r6, &r(51, 100), &ValueRange::FullCircle).unwrap());
    }

    #[test]
    fn angle_serde_round_trip() {
        let a = ang(22, 7);
        let json = serde_json::to_string(&a).unwrap();
        assert_eq!(json, "\"1/7\"");
        let back: Angle = serde_json::from_str(&json).unwrap();
        assert_eq!(a, back);
    }

    proptest! {
        #[test]
        fn combine_is_abelian_group(n1 in -40i64..40, d1 in 1i64..24, n2 in -40i64..40, d2 in 1i64..24, n3 in -40i64..40, d3 in 1i64..24) {
            let (a, b, c) = (ang(n1, d1), ang(n2, d2), ang(n3, d3));
            prop_assert_eq!(a.combine(&b), b.combine(&a));
            prop_assert_eq!(a.combine(&b).combine(&c), a.combine(&b.combine(&c)));
            prop_assert_eq!(a.combine(&Angle::zero()), a.clone());
            prop_assert_eq!(a.combine(&a.inverse()), Angle::zero());
        }

        #[test]
        fn chord_symmetric_and_monotone(n1 in 0i64..48, d1 in 1i64..24, n2 in 0i64..48, d2 in 1i64..24, e1 in 0i64..21, e2 in 0i64..21) {
            let (a, b) = (ang(n1, d1), ang(n2, d2));
            let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
            let (lo, hi) = (r(lo, 10), r(hi, 10));
            prop_assert_eq!(chord_leq(&a, &b, &lo), chord_leq(&b, &a, &lo));
            if chord_leq(&a, &b, &lo) {
                prop_assert!(chord_leq(&a, &b, &hi));
            }
        }

        #[test]
        fn coverage_monotone_in_set_and_eps(extra in 0i64..16, e in 3i64..20) {
            let base = vec![ang(0, 1), ang(1, 3), ang(2, 3)];
            let mut bigger = base.clone();
            bigger.push(ang(extra, 17));
            let eps = r(e, 10);
            let eps_bigger = r(e + 1, 10);
            if neighborhood_covers(&base, &eps, &ValueRange::FullCircle).unwrap() {
                prop_assert!(neighborhood_covers(&bigger, &eps, &ValueRange::FullCircle).unwrap());
                prop_assert!(neighborhood_covers(&base, &eps_bigger, &ValueRange::FullCircle).unwrap());
            }
        }
    }
}
