//! Certified enclosures for the transcendental comparisons.
//!
//! All group arithmetic elsewhere in the crate is exact rational; the only
//! place real analysis enters is the chord metric `|e^{2πia} - e^{2πib}|`
//! and unit-circle Cesàro averages. This module provides rational interval
//! enclosures of sin, cos and π with outward rounding to a dyadic grid, so
//! every endpoint stays a small rational no matter how wild the input
//! denominators are. Comparisons refine precision until unambiguous.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, Zero};

/// Closed rational interval `[lo, hi]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RatInterval {
    pub lo: BigRational,
    pub hi: BigRational,
}

fn floor_dyadic(x: &BigRational, bits: u32) -> BigRational {
    let scale = BigInt::one() << bits;
    let scaled = x * BigRational::from_integer(scale.clone());
    BigRational::new(scaled.floor().to_integer(), scale)
}

fn ceil_dyadic(x: &BigRational, bits: u32) -> BigRational {
    let scale = BigInt::one() << bits;
    let scaled = x * BigRational::from_integer(scale.clone());
    BigRational::new(scaled.ceil().to_integer(), scale)
}

impl RatInterval {
    pub fn point(x: BigRational) -> Self {
        RatInterval { lo: x.clone(), hi: x }
    }

    pub fn new(lo: BigRational, hi: BigRational) -> Self {
        debug_assert!(lo <= hi);
        RatInterval { lo, hi }
    }

    pub fn zero() -> Self {
        Self::point(BigRational::zero())
    }

    pub fn width(&self) -> BigRational {
        &self.hi - &self.lo
    }

    pub fn contains(&self, x: &BigRational) -> bool {
        &self.lo <= x && x <= &self.hi
    }

    /// Rounds both endpoints outward onto the grid of multiples of 2^-bits.
    pub fn round_out(&self, bits: u32) -> Self {
        RatInterval {
            lo: floor_dyadic(&self.lo, bits),
            hi: ceil_dyadic(&self.hi, bits),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        RatInterval {
            lo: &self.lo + &other.lo,
            hi: &self.hi + &other.hi,
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        RatInterval {
            lo: &self.lo - &other.hi,
            hi: &self.hi - &other.lo,
        }
    }

    pub fn neg(&self) -> Self {
        RatInterval {
            lo: -self.hi.clone(),
            hi: -self.lo.clone(),
        }
    }

    pub fn mul(&self, other: &Self) -> Self {
        let candidates = [
            &self.lo * &other.lo,
            &self.lo * &other.hi,
            &self.hi * &other.lo,
            &self.hi * &other.hi,
        ];
        let lo = candidates.iter().min().unwrap().clone();
        let hi = candidates.iter().max().unwrap().clone();
        RatInterval { lo, hi }
    }

    pub fn scale(&self, c: &BigRational) -> Self {
        if c.is_negative() {
            RatInterval {
                lo: &self.hi * c,
                hi: &self.lo * c,
            }
        } else {
            RatInterval {
                lo: &self.lo * c,
                hi: &self.hi * c,
            }
        }
    }

    pub fn div_nat(&self, d: u64) -> Self {
        let d = BigRational::from_integer(BigInt::from(d));
        RatInterval {
            lo: &self.lo / &d,
            hi: &self.hi / &d,
        }
    }

    /// Expands by `slop` on both sides.
    pub fn inflate(&self, slop: &BigRational) -> Self {
        debug_assert!(!slop.is_negative());
        RatInterval {
            lo: &self.lo - slop,
            hi: &self.hi + slop,
        }
    }

    pub fn intersect_clamp(&self, lo: &BigRational, hi: &BigRational) -> Self {
        RatInterval {
            lo: self.lo.clone().max(lo.clone()),
            hi: self.hi.clone().min(hi.clone()),
        }
    }

    /// Entirely below `x`?
    pub fn lt(&self, x: &BigRational) -> bool {
        &self.hi < x
    }

    /// Entirely above `x`?
    pub fn gt(&self, x: &BigRational) -> bool {
        &self.lo > x
    }
}

fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// arctan(1/m) by the alternating Leibniz series, tail bounded by the first
/// omitted term.
fn atan_inv(m: i64, prec: u32) -> RatInterval {
    let m2 = BigRational::from_integer(BigInt::from(m * m));
    let tol = BigRational::new(BigInt::one(), BigInt::one() << (prec + 8));
    let mut sum = BigRational::zero();
    let mut power = rat(1, m); // 1/m^{2k+1}
    let mut k: u64 = 0;
    loop {
        let term = &power / BigRational::from_integer(BigInt::from(2 * k + 1));
        if term < tol {
            // alternating with decreasing terms: partial sum error <= term
            let s = if k % 2 == 0 { sum.clone() } else { &sum + &term };
            let lo = if k % 2 == 0 { &sum - &term } else { sum.clone() };
            return RatInterval::new(lo, s).round_out(prec + 8);
        }
        if k % 2 == 0 {
            sum += &term;
        } else {
            sum -= &term;
        }
        power = &power / &m2;
        k += 1;
    }
}

/// Enclosure of π at roughly `prec` bits (Machin's formula), cached.
pub fn pi_interval(prec: u32) -> RatInterval {
    static CACHE: OnceLock<Mutex<HashMap<u32, RatInterval>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(v) = cache.lock().unwrap().get(&prec) {
        return v.clone();
    }
    let a = atan_inv(5, prec + 6);
    let b = atan_inv(239, prec + 6);
    let pi = a
        .scale(&BigRational::from_integer(BigInt::from(16)))
        .sub(&b.scale(&BigRational::from_integer(BigInt::from(4))))
        .round_out(prec + 4);
    cache.lock().unwrap().insert(prec, pi.clone());
    pi
}

/// How many Taylor terms until the tail of cos/sin at |x| <= 7 drops below
/// 2^-(prec+8). Beyond index 5 consecutive terms at |x| <= 7 shrink by at
/// least 1/2, so the tail is bounded by twice the first omitted term.
fn taylor_terms(prec: u32) -> usize {
    // term_k = 7^{2k}/(2k)!; solve 2 * term_T <= 2^-(prec+8) numerically once
    let mut term = 1f64;
    let mut k = 0usize;
    loop {
        k += 1;
        term *= 49.0 / ((2 * k - 1) as f64 * (2 * k) as f64);
        if k >= 6 && term.log2() < -((prec + 10) as f64) {
            return k + 1;
        }
    }
}

/// cos over an interval 0 <= x.lo <= x.hi <= 7, by exact Taylor at the
/// midpoint plus Lipschitz inflation (|cos'| <= 1).
pub fn cos_enclosure(x: &RatInterval, prec: u32) -> RatInterval {
    debug_assert!(!x.lo.is_negative());
    debug_assert!(x.hi <= BigRational::from_integer(BigInt::from(7)));
    let bits = prec + 16;
    let half_width = x.width() / BigRational::from_integer(BigInt::from(2));
    let mid = floor_dyadic(&((&x.lo + &x.hi) / BigRational::from_integer(BigInt::from(2))), bits);
    let t = taylor_terms(prec);
    // powers of the dyadic midpoint, re-rounded each step to keep denominators small
    let x2 = RatInterval::point(mid.clone())
        .mul(&RatInterval::point(mid))
        .round_out(bits);
    let mut term = RatInterval::point(BigRational::one());
    let mut sum = RatInterval::point(BigRational::one());
    for k in 1..=t {
        term = term
            .mul(&x2)
            .div_nat((2 * k as u64 - 1) * (2 * k as u64))
            .round_out(bits);
        if k % 2 == 1 {
            sum = sum.sub(&term);
        } else {
            sum = sum.add(&term);
        }
    }
    let tail = term.hi.abs() * BigRational::from_integer(BigInt::from(2));
    sum.inflate(&(&tail + &half_width))
        .intersect_clamp(&rat(-1, 1), &rat(1, 1))
        .round_out(bits)
}

/// sin over an interval 0 <= x.lo <= x.hi <= 7.
pub fn sin_enclosure(x: &RatInterval, prec: u32) -> RatInterval {
    debug_assert!(!x.lo.is_negative());
    debug_assert!(x.hi <= BigRational::from_integer(BigInt::from(7)));
    let bits = prec + 16;
    let half_width = x.width() / BigRational::from_integer(BigInt::from(2));
    let mid = floor_dyadic(&((&x.lo + &x.hi) / BigRational::from_integer(BigInt::from(2))), bits);
    let t = taylor_terms(prec);
    let x2 = RatInterval::point(mid.clone()).mul(&RatInterval::point(mid.clone()));
    let x2 = x2.round_out(bits);
    let mut term = RatInterval::point(mid);
    let mut sum = term.clone();
    for k in 1..=t {
        term = term
            .mul(&x2)
            .div_nat((2 * k as u64) * (2 * k as u64 + 1))
            .round_out(bits);
        if k % 2 == 1 {
            sum = sum.sub(&term);
        } else {
            sum = sum.add(&term);
        }
    }
    let tail = term.hi.abs() * BigRational::from_integer(BigInt::from(2));
    sum.inflate(&(&tail + &half_width))
        .intersect_clamp(&rat(-1, 1), &rat(1, 1))
        .round_out(bits)
}

/// Enclosure of chord² = |1 - e^{2πid}|² = 2 - 2 cos(2πd) for arc distance
/// d ∈ [0, 1/2].
pub fn chord_sq_enclosure(d: &BigRational, prec: u32) -> RatInterval {
    debug_assert!(!d.is_negative() && d <= &rat(1, 2));
    let pi = pi_interval(prec + 8);
    let x = pi.scale(&(d * rat(2, 1)));
    let c = cos_enclosure(&x, prec + 8);
    let two = RatInterval::point(rat(2, 1));
    two.sub(&c.scale(&rat(2, 1)))
        .intersect_clamp(&BigRational::zero(), &rat(4, 1))
}

/// Enclosure of the chord 2 sin(πd) itself, d ∈ [0, 1/2].
pub fn chord_enclosure(d: &BigRational, prec: u32) -> RatInterval {
    debug_assert!(!d.is_negative() && d <= &rat(1, 2));
    let pi = pi_interval(prec + 8);
    let x = pi.scale(d);
    sin_enclosure(&x, prec + 8)
        .scale(&rat(2, 1))
        .intersect_clamp(&BigRational::zero(), &rat(2, 1))
}

/// Cheap rational bracket for the chord of arc distance d ∈ [0, 1/2]:
/// 4d <= 2 sin(πd) <= (44/7)d (concavity on the left, 2π < 44/7 on the right).
pub fn chord_linear_bounds(d: &BigRational) -> RatInterval {
    debug_assert!(!d.is_negative() && d <= &rat(1, 2));
    let two = rat(2, 1);
    RatInterval {
        lo: (d * rat(4, 1)).min(two.clone()),
        hi: (d * rat(44, 7)).min(two),
    }
}

/// Rectangular enclosure of a point on the unit circle.
#[derive(Clone, Debug)]
pub struct ComplexEnclosure {
    pub re: RatInterval,
    pub im: RatInterval,
}

impl ComplexEnclosure {
    pub fn exact(re: BigRational, im: BigRational) -> Self {
        ComplexEnclosure {
            re: RatInterval::point(re),
            im: RatInterval::point(im),
        }
    }

    pub fn zero() -> Self {
        ComplexEnclosure {
            re: RatInterval::zero(),
            im: RatInterval::zero(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        ComplexEnclosure {
            re: self.re.add(&other.re),
            im: self.im.add(&other.im),
        }
    }

    pub fn div_nat(&self, d: u64) -> Self {
        ComplexEnclosure {
            re: self.re.div_nat(d),
            im: self.im.div_nat(d),
        }
    }

    pub fn round_out(&self, bits: u32) -> Self {
        ComplexEnclosure {
            re: self.re.round_out(bits),
            im: self.im.round_out(bits),
        }
    }

    /// |z|² enclosure.
    pub fn modulus_sq(&self) -> RatInterval {
        let sq = |iv: &RatInterval| -> RatInterval {
            let a = &iv.lo * &iv.lo;
            let b = &iv.hi * &iv.hi;
            if iv.contains(&BigRational::zero()) {
                RatInterval::new(BigRational::zero(), a.max(b))
            } else {
                RatInterval::new(a.clone().min(b.clone()), a.max(b))
            }
        };
        sq(&self.re).add(&sq(&self.im))
    }

    /// Enclosure of |z - w|².
    pub fn dist_sq(&self, other: &Self) -> RatInterval {
        ComplexEnclosure {
            re: self.re.sub(&other.re),
            im: self.im.sub(&other.im),
        }
        .modulus_sq()
    }

    pub fn max_width(&self) -> BigRational {
        self.re.width().max(self.im.width())
    }
}

/// e^{2πiv} for v ∈ [0, 1), with exact values when the denominator divides 4.
pub fn unit_circle_enclosure(v: &BigRational, prec: u32) -> ComplexEnclosure {
    debug_assert!(!v.is_negative() && v < &BigRational::one());
    let four = BigInt::from(4);
    if (v * BigRational::from_integer(four)).is_integer() {
        let q = (v * rat(4, 1)).to_integer();
        let q: i64 = i64::try_from(&q).unwrap();
        return match q {
            0 => ComplexEnclosure::exact(rat(1, 1), BigRational::zero()),
            1 => ComplexEnclosure::exact(BigRational::zero(), rat(1, 1)),
            2 => ComplexEnclosure::exact(rat(-1, 1), BigRational::zero()),
            _ => ComplexEnclosure::exact(BigRational::zero(), rat(-1, 1)),
        };
    }
    let pi = pi_interval(prec + 8);
    let x = pi.scale(&(v * rat(2, 1)));
    ComplexEnclosure {
        re: cos_enclosure(&x, prec),
        im: sin_abs_range(&x, prec),
    }
}

/// sin over [0, 2π) needs no range reduction beyond the Taylor tail bound;
/// this wrapper only exists to keep the [0, 7] precondition explicit.
fn sin_abs_range(x: &RatInterval, prec: u32) -> RatInterval {
    sin_enclosure(x, prec)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(iv: &RatInterval) -> (f64, f64) {
        let f = |r: &BigRational| {
            let n = r.numer().to_string().parse::<f64>().unwrap();
            let d = r.denom().to_string().parse::<f64>().unwrap();
            n / d
        };
        (f(&iv.lo), f(&iv.hi))
    }

    #[test]
    fn pi_enclosure_is_tight_and_correct() {
        let pi = pi_interval(64);
        let (lo, hi) = approx(&pi);
        assert!(lo <= std::f64::consts::PI && std::f64::consts::PI <= hi);
        assert!(pi.width() < rat(1, 1 << 40));
    }

    #[test]
    fn cos_matches_f64_reference() {
        for (num, den) in [(0i64, 1i64), (1, 4), (1, 3), (5, 7), (9, 5), (13, 11)] {
            let x = RatInterval::point(rat(num, den));
            let enc = cos_enclosure(&x, 64);
            let (lo, hi) = approx(&enc);
            let want = (num as f64 / den as f64).cos();
            assert!(lo - 1e-12 <= want && want <= hi + 1e-12, "cos({num}/{den})");
            assert!(hi - lo < 1e-15);
        }
    }

    #[test]
    fn sin_matches_f64_reference() {
        for (num, den) in [(1i64, 8i64), (1, 2), (2, 3), (3, 2), (6, 1)] {
            let x = RatInterval::point(rat(num, den));
            let enc = sin_enclosure(&x, 64);
            let (lo, hi) = approx(&enc);
            let want = (num as f64 / den as f64).sin();
            assert!(lo - 1e-12 <= want && want <= hi + 1e-12, "sin({num}/{den})");
        }
    }

    #[test]
    fn chord_sq_special_angles() {
        // Niven angles where the chord² is rational: d = 0, 1/6, 1/4, 1/3, 1/2
        for (d, want) in [
            (rat(0, 1), 0.0),
            (rat(1, 6), 1.0),
            (rat(1, 4), 2.0),
            (rat(1, 3), 3.0),
            (rat(1, 2), 4.0),
        ] {
            let enc = chord_sq_enclosure(&d, 64);
            let (lo, hi) = approx(&enc);
            assert!(lo <= want + 1e-12 && want - 1e-12 <= hi);
            assert!(hi - lo < 1e-12);
        }
    }

    #[test]
    fn chord_linear_bounds_bracket_truth() {
        for (n, d) in [(1i64, 8i64), (1, 16), (3, 8), (1, 100)] {
            let arc = rat(n, d);
            let cheap = chord_linear_bounds(&arc);
            let tight = chord_enclosure(&arc, 64);
            assert!(cheap.lo <= tight.lo && tight.hi <= cheap.hi);
        }
        // at the antipode both linear bounds collapse onto the diameter
        let half = chord_linear_bounds(&rat(1, 2));
        assert_eq!(half.lo, rat(2, 1));
        assert_eq!(half.hi, rat(2, 1));
    }

    #[test]
    fn unit_circle_exact_for_quarter_angles() {
        let z = unit_circle_enclosure(&rat(1, 2), 64);
        assert_eq!(z.re.lo, rat(-1, 1));
        assert_eq!(z.re.hi, rat(-1, 1));
        assert_eq!(z.im.lo, BigRational::zero());
        let z = unit_circle_enclosure(&rat(3, 4), 64);
        assert_eq!(z.im.lo, rat(-1, 1));
    }

    #[test]
    fn unit_circle_lands_on_circle() {
        let z = unit_circle_enclosure(&rat(1, 7), 96);
        let m = z.modulus_sq();
        assert!(m.contains(&rat(1, 1)));
        assert!(m.width() < rat(1, 1 << 60));
    }
}
