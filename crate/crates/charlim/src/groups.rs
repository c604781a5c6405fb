//! The stock compact abelian groups and their countable duals.
//!
//! Five group kinds are modeled: the circle, products of cyclic groups over
//! strictly increasing primes, powers of a fixed prime cyclic group, the
//! p-adic integers, and the Z₄×(Z₂)^ω counterexample. Points carry total
//! coordinate access (explicit prefix with constant tail, or a seeded stream,
//! plus overlays produced by witness constructions), so coordinate queries at
//! indices not known in advance always succeed. Character evaluation, the
//! base metrics, Haar sampling and cylinder measures are all exact.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{Integer, One, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circle::{Angle, ValueRange};

#[derive(Debug, Error)]
pub enum GroupError {
    #[error("spec mismatch: {context} (expected {expected}, got {got})")]
    SpecMismatch {
        context: &'static str,
        expected: String,
        got: String,
    },
    #[error("invalid character: {0}")]
    InvalidCharacter(String),
    #[error("invalid point: {0}")]
    InvalidPoint(String),
    #[error("operation unsupported for this group kind: {0}")]
    Unsupported(String),
    #[error("{0} is not prime")]
    NotPrime(u64),
    #[error("prime list must be strictly increasing primes, got {0:?}")]
    BadPrimeList(Vec<u64>),
    #[error("characters {0} and {1} violate subgroup closure")]
    NotSubgroup(String, String),
}

// ---------------------------------------------------------------------------
// primes and deterministic seeding
// ---------------------------------------------------------------------------

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    if n % 2 == 0 {
        return n == 2;
    }
    if n % 3 == 0 {
        return n == 3;
    }
    let mut d = 5u64;
    while d.saturating_mul(d) <= n {
        if n % d == 0 || n % (d + 2) == 0 {
            return false;
        }
        d += 6;
    }
    true
}

pub fn next_prime_at_least(n: u64) -> u64 {
    let mut c = n.max(2);
    while !is_prime(c) {
        c += 1;
    }
    c
}

pub(crate) fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One deterministic 64-bit word from (seed, lane, counter).
pub(crate) fn mix3(seed: u64, lane: u64, counter: u64) -> u64 {
    splitmix64(
        splitmix64(seed ^ 0xA076_1D64_78BD_642F)
            .wrapping_add(splitmix64(lane.wrapping_mul(0x9E6C_63D0_876A_68EF)))
            .wrapping_add(counter.wrapping_mul(0xD1B5_4A32_D192_ED03)),
    )
}

/// Unbiased uniform draw in `0..m`, deterministic in (seed, lane).
pub(crate) fn uniform_mod(seed: u64, lane: u64, m: u64) -> u64 {
    debug_assert!(m >= 1);
    if m == 1 {
        return 0;
    }
    // accept only below the largest multiple of m to avoid modulo bias
    let rem = ((u64::MAX % m) + 1) % m; // 2^64 mod m
    let limit = u64::MAX - rem;
    let mut counter = 0u64;
    loop {
        let r = mix3(seed, lane, counter);
        if r <= limit {
            return r % m;
        }
        counter += 1;
    }
}

/// Per-sample subseed derivation for parallel-safe experiment streams.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    mix3(seed, index, 0x5EED)
}

// ---------------------------------------------------------------------------
// group specs
// ---------------------------------------------------------------------------

/// A strictly increasing sequence of primes: an explicit prefix, continued by
/// the successive primes after its last element (all primes when empty).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrimeSeq {
    prefix: Vec<u64>,
}

impl PrimeSeq {
    pub fn all() -> Self {
        PrimeSeq { prefix: Vec::new() }
    }

    pub fn from_prefix(prefix: Vec<u64>) -> Result<Self, GroupError> {
        for w in prefix.windows(2) {
            if w[0] >= w[1] {
                return Err(GroupError::BadPrimeList(prefix.clone()));
            }
        }
        for &p in &prefix {
            if !is_prime(p) {
                return Err(GroupError::NotPrime(p));
            }
        }
        Ok(PrimeSeq { prefix })
    }

    pub fn get(&self, idx: usize) -> u64 {
        if idx < self.prefix.len() {
            return self.prefix[idx];
        }
        let mut last = self.prefix.last().copied().unwrap_or(1);
        for _ in self.prefix.len()..=idx {
            last = next_prime_at_least(last + 1);
        }
        last
    }

    /// Materializes the first `len` primes of the sequence.
    pub fn prefix_to(&self, len: usize) -> Vec<u64> {
        let mut out = Vec::with_capacity(len);
        out.extend_from_slice(&self.prefix[..self.prefix.len().min(len)]);
        let mut last = out.last().copied().unwrap_or(1);
        while out.len() < len {
            last = next_prime_at_least(last + 1);
            out.push(last);
        }
        out
    }
}

/// The stock compact groups plus the non-nice counterexample.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GroupSpec {
    Circle,
    ProductDistinctPrimes { primes: PrimeSeq },
    ProductFixedPrime { p: u64 },
    PAdic { p: u64 },
    Z4Z2Counterexample,
}

impl GroupSpec {
    pub fn circle() -> Self {
        GroupSpec::Circle
    }

    pub fn distinct_primes() -> Self {
        GroupSpec::ProductDistinctPrimes {
            primes: PrimeSeq::all(),
        }
    }

    pub fn fixed_prime(p: u64) -> Result<Self, GroupError> {
        if !is_prime(p) {
            return Err(GroupError::NotPrime(p));
        }
        Ok(GroupSpec::ProductFixedPrime { p })
    }

    pub fn padic(p: u64) -> Result<Self, GroupError> {
        if !is_prime(p) {
            return Err(GroupError::NotPrime(p));
        }
        Ok(GroupSpec::PAdic { p })
    }

    pub fn z4z2() -> Self {
        GroupSpec::Z4Z2Counterexample
    }

    /// Modulus of coordinate `idx` for the kinds with coordinates (the (Z₂)^ω
    /// part for the counterexample).
    pub fn coordinate_modulus(&self, idx: usize) -> Option<u64> {
        match self {
            GroupSpec::Circle => None,
            GroupSpec::ProductDistinctPrimes { primes } => Some(primes.get(idx)),
            GroupSpec::ProductFixedPrime { p } | GroupSpec::PAdic { p } => Some(*p),
            GroupSpec::Z4Z2Counterexample => Some(2),
        }
    }

    /// The product and p-adic kinds, whose points are coordinate streams.
    pub fn is_coordinate_kind(&self) -> bool {
        matches!(
            self,
            GroupSpec::ProductDistinctPrimes { .. }
                | GroupSpec::ProductFixedPrime { .. }
                | GroupSpec::PAdic { .. }
        )
    }

    /// Closure of the set of all character values on this group.
    pub fn value_range(&self) -> ValueRange {
        match self {
            GroupSpec::Circle => ValueRange::FullCircle,
            GroupSpec::ProductDistinctPrimes { .. } => ValueRange::FullCircle,
            GroupSpec::ProductFixedPrime { p } => ValueRange::Roots(*p),
            GroupSpec::PAdic { .. } => ValueRange::FullCircle,
            GroupSpec::Z4Z2Counterexample => ValueRange::Roots(4),
        }
    }

    pub fn identity_point(&self) -> Point {
        let repr = match self {
            GroupSpec::Circle => PointRepr::CircleAngle(Angle::zero()),
            GroupSpec::Z4Z2Counterexample => PointRepr::Z4Z2 {
                z4: 0,
                coords: CoordStream::constant(0),
            },
            _ => PointRepr::Coords(CoordStream::constant(0)),
        };
        Point {
            spec: self.clone(),
            repr,
        }
    }

    pub fn short_name(&self) -> String {
        match self {
            GroupSpec::Circle => "circle".into(),
            GroupSpec::ProductDistinctPrimes { .. } => "product-distinct-primes".into(),
            GroupSpec::ProductFixedPrime { p } => format!("(Z_{p})^w"),
            GroupSpec::PAdic { p } => format!("{p}-adic"),
            GroupSpec::Z4Z2Counterexample => "Z4x(Z2)^w".into(),
        }
    }
}

impl fmt::Display for GroupSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.short_name())
    }
}

fn ensure_same_spec(a: &GroupSpec, b: &GroupSpec, context: &'static str) -> Result<(), GroupError> {
    if a != b {
        return Err(GroupError::SpecMismatch {
            context,
            expected: a.to_string(),
            got: b.to_string(),
        });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// points
// ---------------------------------------------------------------------------

/// Total coordinate function of a point in a coordinate-kind group.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "kebab-case")]
pub enum CoordStream {
    /// Explicit finite prefix, then a constant tail value.
    Prefix { prefix: Vec<u64>, tail: u64 },
    /// Seed-derived pseudorandom stream, uniform per coordinate.
    Seeded { seed: u64 },
    /// Coordinatewise sum mod the per-index modulus.
    Sum {
        lhs: Box<CoordStream>,
        rhs: Box<CoordStream>,
    },
    /// Coordinatewise negation.
    Neg { inner: Box<CoordStream> },
    /// Digit-stream sum with carry (p-adic addition).
    CarrySum {
        lhs: Box<CoordStream>,
        rhs: Box<CoordStream>,
    },
    /// Digit-stream negation with borrow (p-adic negation).
    CarryNeg { inner: Box<CoordStream> },
    /// Finitely many overridden coordinates on top of a base stream.
    Overlay {
        base: Box<CoordStream>,
        overrides: BTreeMap<usize, u64>,
    },
}

impl CoordStream {
    pub fn constant(v: u64) -> Self {
        CoordStream::Prefix {
            prefix: Vec::new(),
            tail: v,
        }
    }

    /// Coordinate `idx`, reduced mod `modulus`. Queries are deterministic and
    /// repeatable.
    pub fn coord(&self, idx: usize, modulus: u64) -> u64 {
        match self {
            CoordStream::Prefix { prefix, tail } => {
                let raw = prefix.get(idx).copied().unwrap_or(*tail);
                raw % modulus
            }
            CoordStream::Seeded { seed } => uniform_mod(*seed, idx as u64, modulus),
            CoordStream::Sum { lhs, rhs } => {
                (lhs.coord(idx, modulus) + rhs.coord(idx, modulus)) % modulus
            }
            CoordStream::Neg { inner } => (modulus - inner.coord(idx, modulus)) % modulus,
            CoordStream::CarrySum { lhs, rhs } => {
                let mut carry = 0u64;
                for i in 0..idx {
                    carry = (lhs.coord(i, modulus) + rhs.coord(i, modulus) + carry) / modulus;
                }
                (lhs.coord(idx, modulus) + rhs.coord(idx, modulus) + carry) % modulus
            }
            CoordStream::CarryNeg { inner } => {
                // digits of -x: zeros up to the first nonzero digit j, then
                // p - x_j, then p-1-x_i beyond
                let mut first_nonzero = None;
                for i in 0..=idx {
                    if inner.coord(i, modulus) != 0 {
                        first_nonzero = Some(i);
                        break;
                    }
                }
                match first_nonzero {
                    None => 0,
                    Some(j) if j == idx => modulus - inner.coord(idx, modulus),
                    Some(_) => modulus - 1 - inner.coord(idx, modulus),
                }
            }
            CoordStream::Overlay { base, overrides } => overrides
                .get(&idx)
                .map(|v| v % modulus)
                .unwrap_or_else(|| base.coord(idx, modulus)),
        }
    }

    pub fn with_override(&self, idx: usize, value: u64) -> Self {
        match self {
            CoordStream::Overlay { base, overrides } => {
                let mut overrides = overrides.clone();
                overrides.insert(idx, value);
                CoordStream::Overlay {
                    base: base.clone(),
                    overrides,
                }
            }
            other => CoordStream::Overlay {
                base: Box::new(other.clone()),
                overrides: BTreeMap::from([(idx, value)]),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "repr", rename_all = "kebab-case")]
pub enum PointRepr {
    CircleAngle(Angle),
    Coords(CoordStream),
    Z4Z2 { z4: u8, coords: CoordStream },
}

/// An element of a stock group.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Point {
    spec: GroupSpec,
    repr: PointRepr,
}

impl Point {
    pub fn spec(&self) -> &GroupSpec {
        &self.spec
    }

    pub fn repr(&self) -> &PointRepr {
        &self.repr
    }

    pub fn circle(angle: Angle) -> Point {
        Point {
            spec: GroupSpec::Circle,
            repr: PointRepr::CircleAngle(angle),
        }
    }

    pub fn from_prefix(spec: &GroupSpec, prefix: Vec<u64>, tail: u64) -> Result<Point, GroupError> {
        if !spec.is_coordinate_kind() {
            return Err(GroupError::Unsupported(format!(
                "prefix points need a coordinate kind, got {spec}"
            )));
        }
        for (i, &v) in prefix.iter().enumerate() {
            let m = spec.coordinate_modulus(i).unwrap();
            if v >= m {
                return Err(GroupError::InvalidPoint(format!(
                    "coordinate {i} value {v} exceeds modulus {m}"
                )));
            }
        }
        // the tail must be valid at every index past the prefix; moduli are
        // nondecreasing for every kind, so checking the first suffices
        let tail_modulus = spec.coordinate_modulus(prefix.len()).unwrap();
        if tail >= tail_modulus {
            return Err(GroupError::InvalidPoint(format!(
                "tail value {tail} exceeds modulus {tail_modulus}"
            )));
        }
        Ok(Point {
            spec: spec.clone(),
            repr: PointRepr::Coords(CoordStream::Prefix { prefix, tail }),
        })
    }

    pub fn seeded(spec: &GroupSpec, seed: u64) -> Result<Point, GroupError> {
        if !spec.is_coordinate_kind() {
            return Err(GroupError::Unsupported(format!(
                "seeded points need a coordinate kind, got {spec}"
            )));
        }
        Ok(Point {
            spec: spec.clone(),
            repr: PointRepr::Coords(CoordStream::Seeded { seed }),
        })
    }

    pub fn z4z2(z4: u8, coords: CoordStream) -> Point {
        Point {
            spec: GroupSpec::Z4Z2Counterexample,
            repr: PointRepr::Z4Z2 { z4: z4 % 4, coords },
        }
    }

    pub fn angle(&self) -> Option<&Angle> {
        match &self.repr {
            PointRepr::CircleAngle(a) => Some(a),
            _ => None,
        }
    }

    /// Coordinate `idx` (the (Z₂)^ω part for the counterexample).
    pub fn coord(&self, idx: usize) -> Option<u64> {
        let m = self.spec.coordinate_modulus(idx)?;
        match &self.repr {
            PointRepr::Coords(cs) => Some(cs.coord(idx, m)),
            PointRepr::Z4Z2 { coords, .. } => Some(coords.coord(idx, m)),
            PointRepr::CircleAngle(_) => None,
        }
    }

    pub fn z4_part(&self) -> Option<u8> {
        match &self.repr {
            PointRepr::Z4Z2 { z4, .. } => Some(*z4),
            _ => None,
        }
    }

    /// A copy with one coordinate overridden.
    pub fn with_coord(&self, idx: usize, value: u64) -> Result<Point, GroupError> {
        let m = self
            .spec
            .coordinate_modulus(idx)
            .ok_or_else(|| GroupError::Unsupported("circle points have no coordinates".into()))?;
        if value >= m {
            return Err(GroupError::InvalidPoint(format!(
                "coordinate {idx} value {value} exceeds modulus {m}"
            )));
        }
        let repr = match &self.repr {
            PointRepr::Coords(cs) => PointRepr::Coords(cs.with_override(idx, value)),
            PointRepr::Z4Z2 { z4, coords } => PointRepr::Z4Z2 {
                z4: *z4,
                coords: coords.with_override(idx, value),
            },
            PointRepr::CircleAngle(_) => unreachable!(),
        };
        Ok(Point {
            spec: self.spec.clone(),
            repr,
        })
    }

    pub fn with_angle(&self, a: Angle) -> Result<Point, GroupError> {
        match &self.repr {
            PointRepr::CircleAngle(_) => Ok(Point::circle(a)),
            _ => Err(GroupError::Unsupported(
                "with_angle applies to circle points".into(),
            )),
        }
    }

    /// Group law.
    pub fn combine(&self, other: &Point) -> Result<Point, GroupError> {
        ensure_same_spec(&self.spec, &other.spec, "point product")?;
        let repr = match (&self.repr, &other.repr) {
            (PointRepr::CircleAngle(a), PointRepr::CircleAngle(b)) => {
                PointRepr::CircleAngle(a.combine(b))
            }
            (PointRepr::Coords(a), PointRepr::Coords(b)) => {
                let (lhs, rhs) = (Box::new(a.clone()), Box::new(b.clone()));
                PointRepr::Coords(if matches!(self.spec, GroupSpec::PAdic { .. }) {
                    CoordStream::CarrySum { lhs, rhs }
                } else {
                    CoordStream::Sum { lhs, rhs }
                })
            }
            (
                PointRepr::Z4Z2 { z4: za, coords: ca },
                PointRepr::Z4Z2 { z4: zb, coords: cb },
            ) => PointRepr::Z4Z2 {
                z4: (za + zb) % 4,
                coords: CoordStream::Sum {
                    lhs: Box::new(ca.clone()),
                    rhs: Box::new(cb.clone()),
                },
            },
            _ => {
                return Err(GroupError::InvalidPoint(
                    "mismatched point representations".into(),
                ))
            }
        };
        Ok(Point {
            spec: self.spec.clone(),
            repr,
        })
    }

    pub fn inverse(&self) -> Point {
        let repr = match &self.repr {
            PointRepr::CircleAngle(a) => PointRepr::CircleAngle(a.inverse()),
            PointRepr::Coords(c) => {
                let inner = Box::new(c.clone());
                PointRepr::Coords(if matches!(self.spec, GroupSpec::PAdic { .. }) {
                    CoordStream::CarryNeg { inner }
                } else {
                    CoordStream::Neg { inner }
                })
            }
            PointRepr::Z4Z2 { z4, coords } => PointRepr::Z4Z2 {
                z4: (4 - z4) % 4,
                coords: CoordStream::Neg {
                    inner: Box::new(coords.clone()),
                },
            },
        };
        Point {
            spec: self.spec.clone(),
            repr,
        }
    }
}

// ---------------------------------------------------------------------------
// characters
// ---------------------------------------------------------------------------

/// An element of the countable dual of a stock group, in canonical form.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "dual", rename_all = "kebab-case")]
pub enum Character {
    /// z ↦ z^n on the circle.
    Circle { exponent: BigInt },
    /// Finitely supported map index → residue (no zero residues stored).
    Product { support: BTreeMap<usize, u64> },
    /// An element a/p^k of the Prüfer group, 0 <= a < p^k, p ∤ a unless a = 0.
    PAdic { numerator: BigInt, level: u32 },
    /// (c mod 4, finitely supported binary support set).
    Z4Z2 { c: u8, support: BTreeSet<usize> },
}

impl Character {
    pub fn identity(spec: &GroupSpec) -> Character {
        match spec {
            GroupSpec::Circle => Character::Circle {
                exponent: BigInt::zero(),
            },
            GroupSpec::ProductDistinctPrimes { .. } | GroupSpec::ProductFixedPrime { .. } => {
                Character::Product {
                    support: BTreeMap::new(),
                }
            }
            GroupSpec::PAdic { .. } => Character::PAdic {
                numerator: BigInt::zero(),
                level: 0,
            },
            GroupSpec::Z4Z2Counterexample => Character::Z4Z2 {
                c: 0,
                support: BTreeSet::new(),
            },
        }
    }

    pub fn circle(exponent: impl Into<BigInt>) -> Character {
        Character::Circle {
            exponent: exponent.into(),
        }
    }

    /// Finitely supported product character, validated against the spec.
    pub fn product(spec: &GroupSpec, pairs: &[(usize, u64)]) -> Result<Character, GroupError> {
        if matches!(
            spec,
            GroupSpec::Circle | GroupSpec::PAdic { .. } | GroupSpec::Z4Z2Counterexample
        ) {
            return Err(GroupError::InvalidCharacter(format!(
                "product characters do not apply to {spec}"
            )));
        }
        let mut support = BTreeMap::new();
        for &(idx, res) in pairs {
            let m = spec.coordinate_modulus(idx).unwrap();
            let res = res % m;
            if res != 0 {
                support.insert(idx, res);
            }
        }
        Ok(Character::Product { support })
    }

    /// The single-coordinate character χ_idx^residue.
    pub fn coordinate(spec: &GroupSpec, idx: usize, residue: u64) -> Result<Character, GroupError> {
        Character::product(spec, &[(idx, residue)])
    }

    /// Canonical a/p^k in the Prüfer group.
    pub fn padic(spec: &GroupSpec, numerator: BigInt, level: u32) -> Result<Character, GroupError> {
        let p = match spec {
            GroupSpec::PAdic { p } => BigInt::from(*p),
            _ => {
                return Err(GroupError::InvalidCharacter(format!(
                    "p-adic characters do not apply to {spec}"
                )))
            }
        };
        let modulus = p.pow(level);
        let mut a = numerator.mod_floor(&modulus);
        let mut k = level;
        while k > 0 && (&a % &p).is_zero() {
            a /= &p;
            k -= 1;
        }
        if a.is_zero() {
            k = 0;
        }
        Ok(Character::PAdic {
            numerator: a,
            level: k,
        })
    }

    pub fn z4z2(c: u8, support: impl IntoIterator<Item = usize>) -> Character {
        Character::Z4Z2 {
            c: c % 4,
            support: support.into_iter().collect(),
        }
    }

    pub fn is_identity(&self) -> bool {
        match self {
            Character::Circle { exponent } => exponent.is_zero(),
            Character::Product { support } => support.is_empty(),
            Character::PAdic { numerator, .. } => numerator.is_zero(),
            Character::Z4Z2 { c, support } => *c == 0 && support.is_empty(),
        }
    }

    /// Largest coordinate index the character can see, when meaningful.
    pub fn max_support(&self) -> Option<usize> {
        match self {
            Character::Product { support } => support.keys().next_back().copied(),
            Character::Z4Z2 { support, .. } => support.iter().next_back().copied(),
            _ => None,
        }
    }

    /// Pointwise product in the dual group.
    pub fn multiply(&self, other: &Character, spec: &GroupSpec) -> Result<Character, GroupError> {
        match (self, other) {
            (Character::Circle { exponent: a }, Character::Circle { exponent: b }) => {
                Ok(Character::Circle { exponent: a + b })
            }
            (Character::Product { support: a }, Character::Product { support: b }) => {
                let mut support = a.clone();
                for (&idx, &res) in b {
                    let m = spec.coordinate_modulus(idx).ok_or_else(|| {
                        GroupError::InvalidCharacter("coordinate kind required".into())
                    })?;
                    let entry = support.entry(idx).or_insert(0);
                    *entry = (*entry + res) % m;
                    if *entry == 0 {
                        support.remove(&idx);
                    }
                }
                Ok(Character::Product { support })
            }
            (
                Character::PAdic {
                    numerator: a,
                    level: ka,
                },
                Character::PAdic {
                    numerator: b,
                    level: kb,
                },
            ) => {
                let p = match spec {
                    GroupSpec::PAdic { p } => *p,
                    _ => return Err(GroupError::InvalidCharacter("p-adic spec required".into())),
                };
                let k = (*ka).max(*kb);
                let pk = BigInt::from(p).pow(k);
                let lift_a = a * BigInt::from(p).pow(k - ka);
                let lift_b = b * BigInt::from(p).pow(k - kb);
                Character::padic(spec, (lift_a + lift_b).mod_floor(&pk), k)
            }
            (
                Character::Z4Z2 { c: ca, support: sa },
                Character::Z4Z2 { c: cb, support: sb },
            ) => Ok(Character::Z4Z2 {
                c: (ca + cb) % 4,
                support: sa.symmetric_difference(sb).copied().collect(),
            }),
            _ => Err(GroupError::InvalidCharacter(
                "cannot multiply characters of different duals".into(),
            )),
        }
    }

    pub fn invert(&self, spec: &GroupSpec) -> Result<Character, GroupError> {
        match self {
            Character::Circle { exponent } => Ok(Character::Circle {
                exponent: -exponent.clone(),
            }),
            Character::Product { support } => {
                let mut inv = BTreeMap::new();
                for (&idx, &res) in support {
                    let m = spec.coordinate_modulus(idx).ok_or_else(|| {
                        GroupError::InvalidCharacter("coordinate kind required".into())
                    })?;
                    inv.insert(idx, (m - res) % m);
                }
                Ok(Character::Product { support: inv })
            }
            Character::PAdic { numerator, level } => {
                let p = match spec {
                    GroupSpec::PAdic { p } => *p,
                    _ => return Err(GroupError::InvalidCharacter("p-adic spec required".into())),
                };
                let pk = BigInt::from(p).pow(*level);
                Character::padic(spec, (&pk - numerator).mod_floor(&pk), *level)
            }
            Character::Z4Z2 { c, support } => Ok(Character::Z4Z2 {
                c: (4 - c) % 4,
                support: support.clone(),
            }),
        }
    }

    pub(crate) fn matches_spec(&self, spec: &GroupSpec) -> bool {
        matches!(
            (self, spec),
            (Character::Circle { .. }, GroupSpec::Circle)
                | (
                    Character::Product { .. },
                    GroupSpec::ProductDistinctPrimes { .. } | GroupSpec::ProductFixedPrime { .. }
                )
                | (Character::PAdic { .. }, GroupSpec::PAdic { .. })
                | (Character::Z4Z2 { .. }, GroupSpec::Z4Z2Counterexample)
        )
    }
}

impl fmt::Display for Character {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Character::Circle { exponent } => write!(f, "n={exponent}"),
            Character::Product { support } => {
                write!(f, "[")?;
                for (i, (idx, res)) in support.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "({idx},{res})")?;
                }
                write!(f, "]")
            }
            Character::PAdic { numerator, level } => write!(f, "{numerator}/p^{level}"),
            Character::Z4Z2 { c, support } => {
                write!(f, "c={c};{{")?;
                for (i, idx) in support.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{idx}")?;
                }
                write!(f, "}}")
            }
        }
    }
}

/// Exact character evaluation.
pub fn evaluate(c: &Character, x: &Point) -> Result<Angle, GroupError> {
    if !c.matches_spec(&x.spec) {
        return Err(GroupError::SpecMismatch {
            context: "character evaluation",
            expected: x.spec.to_string(),
            got: format!("{c}"),
        });
    }
    match (c, &x.repr) {
        (Character::Circle { exponent }, PointRepr::CircleAngle(theta)) => {
            Ok(theta.scale_int(exponent))
        }
        (Character::Product { support }, PointRepr::Coords(coords)) => {
            let mut acc = BigRational::zero();
            for (&idx, &res) in support {
                let m = x.spec.coordinate_modulus(idx).unwrap();
                let xi = coords.coord(idx, m);
                acc += BigRational::new(BigInt::from(res) * BigInt::from(xi), BigInt::from(m));
            }
            Ok(Angle::new(acc))
        }
        (Character::PAdic { numerator, level }, PointRepr::Coords(coords)) => {
            let p = match &x.spec {
                GroupSpec::PAdic { p } => *p,
                _ => unreachable!(),
            };
            // x mod p^k from the first k digits
            let mut x_mod = BigInt::zero();
            let mut pow = BigInt::one();
            for i in 0..*level {
                let d = coords.coord(i as usize, p);
                x_mod += BigInt::from(d) * &pow;
                pow *= BigInt::from(p);
            }
            Ok(Angle::new(BigRational::new(numerator * x_mod, pow)))
        }
        (Character::Z4Z2 { c, support }, PointRepr::Z4Z2 { z4, coords }) => {
            let mut acc = BigRational::new(BigInt::from(*c as u64 * *z4 as u64), BigInt::from(4));
            for &idx in support {
                let y = coords.coord(idx, 2);
                acc += BigRational::new(BigInt::from(y), BigInt::from(2));
            }
            Ok(Angle::new(acc))
        }
        _ => Err(GroupError::InvalidPoint(
            "point representation does not match its spec".into(),
        )),
    }
}

/// cl(Ĝ(X)) for the spec.
pub fn value_range(spec: &GroupSpec) -> ValueRange {
    spec.value_range()
}

// ---------------------------------------------------------------------------
// base metric
// ---------------------------------------------------------------------------

/// Result of a base-metric query: exact distance, or agreement up to the
/// queried depth (distance 0 at the stated horizon).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum BaseDistance {
    Exact(BigRational),
    AgreesToDepth(u32),
}

impl BaseDistance {
    /// The certified value (0 for agreement markers).
    pub fn value(&self) -> BigRational {
        match self {
            BaseDistance::Exact(v) => v.clone(),
            BaseDistance::AgreesToDepth(_) => BigRational::zero(),
        }
    }
}

/// Base metric of the group: arc distance on the circle; 2^-m at the first
/// differing coordinate for the coordinate kinds; block metric on the
/// counterexample with the Z₄ part as block 0 and the (Z₂)^ω coordinates
/// shifted by one.
pub fn base_metric(x: &Point, y: &Point, depth: u32) -> Result<BaseDistance, GroupError> {
    ensure_same_spec(&x.spec, &y.spec, "base metric")?;
    match (&x.repr, &y.repr) {
        (PointRepr::CircleAngle(a), PointRepr::CircleAngle(b)) => {
            Ok(BaseDistance::Exact(a.arc_distance(b)))
        }
        (PointRepr::Coords(ca), PointRepr::Coords(cb)) => {
            for i in 0..depth as usize {
                let m = x.spec.coordinate_modulus(i).unwrap();
                if ca.coord(i, m) != cb.coord(i, m) {
                    return Ok(BaseDistance::Exact(BigRational::new(
                        BigInt::one(),
                        BigInt::one() << i,
                    )));
                }
            }
            Ok(BaseDistance::AgreesToDepth(depth))
        }
        (PointRepr::Z4Z2 { z4: za, coords: ca }, PointRepr::Z4Z2 { z4: zb, coords: cb }) => {
            if za != zb {
                return Ok(BaseDistance::Exact(BigRational::one()));
            }
            for i in 0..depth as usize {
                if ca.coord(i, 2) != cb.coord(i, 2) {
                    return Ok(BaseDistance::Exact(BigRational::new(
                        BigInt::one(),
                        BigInt::one() << (i + 1),
                    )));
                }
            }
            Ok(BaseDistance::AgreesToDepth(depth))
        }
        _ => Err(GroupError::InvalidPoint(
            "point representation does not match its spec".into(),
        )),
    }
}

// ---------------------------------------------------------------------------
// Haar sampling
// ---------------------------------------------------------------------------

/// The circle sampler's denominator: the smallest prime at least
/// `resolution`. A prime denominator larger than the experiment horizon
/// avoids the silent absorption of dyadic angles by factorial-exponent
/// characters.
pub fn circle_sampler_denominator(resolution: u64) -> u64 {
    next_prime_at_least(resolution.max(2))
}

/// Deterministic Haar sampling: uniform prime-denominator rationals on the
/// circle, seed-derived uniform coordinate streams elsewhere.
pub fn haar_sample(spec: &GroupSpec, seed: u64, resolution: u64) -> Point {
    match spec {
        GroupSpec::Circle => {
            let q = circle_sampler_denominator(resolution);
            let num = uniform_mod(seed, 0xC1BC1E, q);
            Point::circle(Angle::new(BigRational::new(
                BigInt::from(num),
                BigInt::from(q),
            )))
        }
        GroupSpec::Z4Z2Counterexample => {
            let z4 = uniform_mod(seed, 0x24, 4) as u8;
            Point::z4z2(
                z4,
                CoordStream::Seeded {
                    seed: derive_seed(seed, 0x22),
                },
            )
        }
        _ => Point {
            spec: spec.clone(),
            repr: PointRepr::Coords(CoordStream::Seeded { seed }),
        },
    }
}

// ---------------------------------------------------------------------------
// cylinder measures
// ---------------------------------------------------------------------------

/// Exact Haar measure of a finite character-equality cylinder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CylinderMeasure {
    pub measure: BigRational,
    /// False when the constraints admit no solution (measure is then 0).
    pub consistent: bool,
}

fn mod_inverse(a: u64, m: u64) -> Option<u64> {
    let (mut old_r, mut r) = (a as i128, m as i128);
    let (mut old_s, mut s) = (1i128, 0i128);
    while r != 0 {
        let q = old_r / r;
        (old_r, r) = (r, old_r - q * r);
        (old_s, s) = (s, old_s - q * s);
    }
    if old_r != 1 {
        return None;
    }
    Some(old_s.rem_euclid(m as i128) as u64)
}

fn inconsistent() -> CylinderMeasure {
    CylinderMeasure {
        measure: BigRational::zero(),
        consistent: false,
    }
}

/// Exact Haar measure of `{x : φ(x) = v for all (φ, v) in constraints}`,
/// by linear algebra over the relevant cyclic groups.
pub fn cylinder_measure(
    spec: &GroupSpec,
    constraints: &[(Character, Angle)],
) -> Result<CylinderMeasure, GroupError> {
    for (c, _) in constraints {
        if !c.matches_spec(spec) {
            return Err(GroupError::SpecMismatch {
                context: "cylinder measure",
                expected: spec.to_string(),
                got: c.to_string(),
            });
        }
    }
    match spec {
        GroupSpec::Circle => {
            let mut measure = BigRational::one();
            for (c, v) in constraints {
                let Character::Circle { exponent } = c else {
                    unreachable!()
                };
                if exponent.is_zero() {
                    if !v.is_zero() {
                        return Ok(inconsistent());
                    }
                } else {
                    // nontrivial character: the fiber is finite, measure 0
                    measure = BigRational::zero();
                }
            }
            Ok(CylinderMeasure {
                measure,
                consistent: true,
            })
        }
        GroupSpec::ProductFixedPrime { p } => fixed_prime_measure(*p, constraints),
        GroupSpec::ProductDistinctPrimes { primes } => distinct_primes_measure(primes, constraints),
        GroupSpec::PAdic { p } => padic_measure(*p, constraints),
        GroupSpec::Z4Z2Counterexample => z4z2_measure(constraints),
    }
}

/// Gaussian elimination over F_p; returns the rank, or None if inconsistent.
fn solve_mod_p(p: u64, rows: &mut Vec<(Vec<u64>, u64)>, ncols: usize) -> Option<usize> {
    let mut rank = 0usize;
    for col in 0..ncols {
        let pivot = (rank..rows.len()).find(|&r| rows[r].0[col] != 0);
        let Some(pivot) = pivot else { continue };
        rows.swap(rank, pivot);
        let inv = mod_inverse(rows[rank].0[col], p).expect("prime modulus");
        for j in 0..ncols {
            rows[rank].0[j] = rows[rank].0[j] * inv % p;
        }
        rows[rank].1 = rows[rank].1 * inv % p;
        for r in 0..rows.len() {
            if r != rank && rows[r].0[col] != 0 {
                let f = rows[r].0[col];
                for j in 0..ncols {
                    let sub = f * rows[rank].0[j] % p;
                    rows[r].0[j] = (rows[r].0[j] + p - sub) % p;
                }
                let sub = f * rows[rank].1 % p;
                rows[r].1 = (rows[r].1 + p - sub) % p;
            }
        }
        rank += 1;
        if rank == rows.len() {
            break;
        }
    }
    for r in rank..rows.len() {
        if rows[r].1 != 0 {
            return None;
        }
    }
    Some(rank)
}

fn angle_as_residue(v: &Angle, m: u64) -> Option<u64> {
    let scaled = v.value() * BigRational::from_integer(BigInt::from(m));
    if !scaled.is_integer() {
        return None;
    }
    u64::try_from(&scaled.to_integer().mod_floor(&BigInt::from(m))).ok()
}

fn fixed_prime_measure(
    p: u64,
    constraints: &[(Character, Angle)],
) -> Result<CylinderMeasure, GroupError> {
    let mut vars: BTreeSet<usize> = BTreeSet::new();
    for (c, _) in constraints {
        if let Character::Product { support } = c {
            vars.extend(support.keys().copied());
        }
    }
    let cols: Vec<usize> = vars.iter().copied().collect();
    let col_of: BTreeMap<usize, usize> = cols.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let mut rows = Vec::new();
    for (c, v) in constraints {
        let Character::Product { support } = c else {
            unreachable!()
        };
        let Some(rhs) = angle_as_residue(v, p) else {
            return Ok(inconsistent());
        };
        let mut row = vec![0u64; cols.len()];
        for (&idx, &res) in support {
            row[col_of[&idx]] = res;
        }
        rows.push((row, rhs));
    }
    match solve_mod_p(p, &mut rows, cols.len()) {
        None => Ok(inconsistent()),
        Some(rank) => Ok(CylinderMeasure {
            measure: BigRational::new(BigInt::one(), BigInt::from(p).pow(rank as u32)),
            consistent: true,
        }),
    }
}

fn distinct_primes_measure(
    primes: &PrimeSeq,
    constraints: &[(Character, Angle)],
) -> Result<CylinderMeasure, GroupError> {
    // distinct prime coordinates make every value decompose uniquely into
    // R_{p_i} components, so each constraint splits per coordinate
    let mut forced: BTreeMap<usize, u64> = BTreeMap::new();
    for (c, v) in constraints {
        let Character::Product { support } = c else {
            unreachable!()
        };
        let idxs: Vec<usize> = support.keys().copied().collect();
        let ps: Vec<u64> = idxs.iter().map(|&i| primes.get(i)).collect();
        let mut prod = BigInt::one();
        for &p in &ps {
            prod *= BigInt::from(p);
        }
        let scaled = v.value() * BigRational::from_integer(prod.clone());
        if !scaled.is_integer() {
            return Ok(inconsistent());
        }
        let t = scaled.to_integer().mod_floor(&prod);
        for (&idx, &p) in idxs.iter().zip(&ps) {
            let cof = (&prod / BigInt::from(p)).mod_floor(&BigInt::from(p));
            let cof = u64::try_from(&cof).unwrap();
            let t_p = u64::try_from(&t.mod_floor(&BigInt::from(p))).unwrap();
            let inv_cof = mod_inverse(cof % p, p).expect("distinct primes");
            let target = t_p * inv_cof % p;
            let a = support[&idx] % p;
            let inv_a = mod_inverse(a, p).expect("nonzero residue mod prime");
            let xi = inv_a * target % p;
            if let Some(&prev) = forced.get(&idx) {
                if prev != xi {
                    return Ok(inconsistent());
                }
            } else {
                forced.insert(idx, xi);
            }
        }
    }
    let mut measure = BigRational::one();
    for &idx in forced.keys() {
        measure /= BigRational::from_integer(BigInt::from(primes.get(idx)));
    }
    Ok(CylinderMeasure {
        measure,
        consistent: true,
    })
}

fn padic_measure(p: u64, constraints: &[(Character, Angle)]) -> Result<CylinderMeasure, GroupError> {
    // every nonidentity a/p^k fixes x mod p^k; merge the forced congruences
    let mut forced: Option<(BigInt, u32)> = None; // x ≡ r (mod p^k)
    for (c, v) in constraints {
        let Character::PAdic { numerator, level } = c else {
            unreachable!()
        };
        if numerator.is_zero() {
            if !v.is_zero() {
                return Ok(inconsistent());
            }
            continue;
        }
        let pk = BigInt::from(p).pow(*level);
        let scaled = v.value() * BigRational::from_integer(pk.clone());
        if !scaled.is_integer() {
            return Ok(inconsistent());
        }
        let cval = scaled.to_integer().mod_floor(&pk);
        let inv = big_mod_inverse(numerator, &pk).expect("unit numerator");
        let r = (inv * cval).mod_floor(&pk);
        forced = match forced {
            None => Some((r, *level)),
            Some((r0, k0)) => {
                let kmin = k0.min(*level);
                let pmin = BigInt::from(p).pow(kmin);
                if r.mod_floor(&pmin) != r0.mod_floor(&pmin) {
                    return Ok(inconsistent());
                }
                if *level > k0 {
                    Some((r, *level))
                } else {
                    Some((r0, k0))
                }
            }
        };
    }
    let k = forced.map(|(_, k)| k).unwrap_or(0);
    Ok(CylinderMeasure {
        measure: BigRational::new(BigInt::one(), BigInt::from(p).pow(k)),
        consistent: true,
    })
}

fn big_mod_inverse(a: &BigInt, m: &BigInt) -> Option<BigInt> {
    let e = a.extended_gcd(m);
    if !e.gcd.is_one() {
        return None;
    }
    Some(e.x.mod_floor(m))
}

fn z4z2_measure(constraints: &[(Character, Angle)]) -> Result<CylinderMeasure, GroupError> {
    let mut vars: BTreeSet<usize> = BTreeSet::new();
    for (c, _) in constraints {
        if let Character::Z4Z2 { support, .. } = c {
            vars.extend(support.iter().copied());
        }
    }
    let cols: Vec<usize> = vars.iter().copied().collect();
    let col_of: BTreeMap<usize, usize> = cols.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let mut total_solutions = BigInt::zero();
    for z in 0u64..4 {
        let mut rows = Vec::new();
        let mut feasible = true;
        for (c, v) in constraints {
            let Character::Z4Z2 { c: cc, support } = c else {
                unreachable!()
            };
            // c·z/4 + Σ y_n/2 = v (mod 1) ⇒ Σ y_n ≡ 2(v − cz/4) (mod 2)
            let rhs_angle =
                v.value() - BigRational::new(BigInt::from(*cc as u64 * z), BigInt::from(4));
            let scaled = rhs_angle * BigRational::from_integer(BigInt::from(2));
            if !scaled.is_integer() {
                feasible = false;
                break;
            }
            let rhs = u64::try_from(&scaled.to_integer().mod_floor(&BigInt::from(2))).unwrap();
            let mut row = vec![0u64; cols.len()];
            for &idx in support {
                row[col_of[&idx]] = 1;
            }
            rows.push((row, rhs));
        }
        if !feasible {
            continue;
        }
        if let Some(rank) = solve_mod_p(2, &mut rows, cols.len()) {
            total_solutions += BigInt::one() << (cols.len() - rank);
        }
    }
    if total_solutions.is_zero() && !constraints.is_empty() {
        return Ok(inconsistent());
    }
    let denom = BigInt::from(4) * (BigInt::one() << cols.len());
    Ok(CylinderMeasure {
        measure: BigRational::new(total_solutions, denom),
        consistent: true,
    })
}

/// Closes a generating set under product and inverse; errors if the closure
/// would exceed `cap` elements.
pub fn subgroup_closure(
    spec: &GroupSpec,
    generators: &[Character],
    cap: usize,
) -> Result<Vec<Character>, GroupError> {
    let mut elems: BTreeSet<Character> = BTreeSet::new();
    elems.insert(Character::identity(spec));
    let mut frontier: Vec<Character> = vec![Character::identity(spec)];
    while let Some(cur) = frontier.pop() {
        for g in generators {
            for next in [cur.multiply(g, spec)?, cur.multiply(&g.invert(spec)?, spec)?] {
                if elems.insert(next.clone()) {
                    if elems.len() > cap {
                        return Err(GroupError::Unsupported(format!(
                            "subgroup closure exceeded cap {cap}"
                        )));
                    }
                    frontier.push(next);
                }
            }
        }
    }
    Ok(elems.into_iter().collect())
}

/// Verifies closure under product and inverse, reporting a violating pair.
pub fn verify_subgroup(spec: &GroupSpec, s: &[Character]) -> Result<(), GroupError> {
    let set: BTreeSet<&Character> = s.iter().collect();
    let id = Character::identity(spec);
    if !set.contains(&id) {
        return Err(GroupError::NotSubgroup(
            "missing identity".into(),
            id.to_string(),
        ));
    }
    for a in s {
        let inv = a.invert(spec)?;
        if !set.contains(&inv) {
            return Err(GroupError::NotSubgroup(
                a.to_string(),
                format!("{inv} (missing inverse)"),
            ));
        }
        for b in s {
            let prod = a.multiply(b, spec)?;
            if !set.contains(&prod) {
                return Err(GroupError::NotSubgroup(a.to_string(), b.to_string()));
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// dual-side homomorphisms
// ---------------------------------------------------------------------------

/// A homomorphism of duals: sends each character of the domain group into a
/// character of the codomain group, injectively and multiplicatively. Point
/// quotient maps are represented only through this dual action.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DualHom {
    pub domain: GroupSpec,
    pub codomain: GroupSpec,
    kind: DualHomKind,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum DualHomKind {
    Identity,
    /// χ_S of (Z₂)^ω ↦ (0, S) on Z₄×(Z₂)^ω, the dual of the projection.
    BinaryCoordsIntoZ4Z2,
}

impl DualHom {
    pub fn identity(spec: &GroupSpec) -> DualHom {
        DualHom {
            domain: spec.clone(),
            codomain: spec.clone(),
            kind: DualHomKind::Identity,
        }
    }

    /// The dual of the projection Z₄×(Z₂)^ω → (Z₂)^ω.
    pub fn z2w_into_z4z2() -> DualHom {
        DualHom {
            domain: GroupSpec::ProductFixedPrime { p: 2 },
            codomain: GroupSpec::Z4Z2Counterexample,
            kind: DualHomKind::BinaryCoordsIntoZ4Z2,
        }
    }

    pub fn apply(&self, c: &Character) -> Result<Character, GroupError> {
        if !c.matches_spec(&self.domain) {
            return Err(GroupError::SpecMismatch {
                context: "dual homomorphism",
                expected: self.domain.to_string(),
                got: c.to_string(),
            });
        }
        match &self.kind {
            DualHomKind::Identity => Ok(c.clone()),
            DualHomKind::BinaryCoordsIntoZ4Z2 => {
                let Character::Product { support } = c else {
                    unreachable!()
                };
                Ok(Character::Z4Z2 {
                    c: 0,
                    support: support.keys().copied().collect(),
                })
            }
        }
    }
}

/// φ ∘ π through the dual action.
pub fn pullback(c: &Character, h: &DualHom) -> Result<Character, GroupError> {
    h.apply(c)
}

// ---------------------------------------------------------------------------
// canonical dual enumeration
// ---------------------------------------------------------------------------

/// The documented canonical enumeration of each dual:
/// circle 0, 1, −1, 2, −2, …; coordinate kinds by mixed-radix digits of the
/// index (low coordinate least significant), which orders by maximal support
/// then lexicographically; p-adic by level then numerator; the counterexample
/// by (support bits, Z₄ component) packed as index = c + 4·bits.
pub fn character_by_index(spec: &GroupSpec, n: u64) -> Character {
    match spec {
        GroupSpec::Circle => {
            if n == 0 {
                Character::circle(0)
            } else if n % 2 == 1 {
                Character::circle(BigInt::from((n + 1) / 2))
            } else {
                Character::circle(-BigInt::from(n / 2))
            }
        }
        GroupSpec::ProductDistinctPrimes { primes } => {
            let mut support = BTreeMap::new();
            let mut rest = n;
            let mut idx = 0usize;
            while rest > 0 {
                let p = primes.get(idx);
                let digit = rest % p;
                if digit != 0 {
                    support.insert(idx, digit);
                }
                rest /= p;
                idx += 1;
            }
            Character::Product { support }
        }
        GroupSpec::ProductFixedPrime { p } => {
            let mut support = BTreeMap::new();
            let mut rest = n;
            let mut idx = 0usize;
            while rest > 0 {
                let digit = rest % p;
                if digit != 0 {
                    support.insert(idx, digit);
                }
                rest /= p;
                idx += 1;
            }
            Character::Product { support }
        }
        GroupSpec::PAdic { p } => {
            if n == 0 {
                return Character::identity(spec);
            }
            // level k hosts indices p^{k-1} .. p^k - 1
            let mut k = 1u32;
            let mut lower = 1u64; // p^{k-1}
            while n >= lower * p {
                lower *= p;
                k += 1;
            }
            let j = n - lower + 1; // 1-based rank among units at this level
            let a = j + (j - 1) / (p - 1); // j-th positive integer not divisible by p
            Character::padic(spec, BigInt::from(a), k).expect("canonical p-adic index")
        }
        GroupSpec::Z4Z2Counterexample => {
            let c = (n % 4) as u8;
            let bits = n / 4;
            let support = (0..64).filter(|i| (bits >> i) & 1 == 1).collect();
            Character::Z4Z2 { c, support }
        }
    }
}

/// The first `count` characters in canonical order.
pub fn enumerate_characters(spec: &GroupSpec, count: usize) -> Vec<Character> {
    (0..count as u64).map(|n| character_by_index(spec, n)).collect()
}
