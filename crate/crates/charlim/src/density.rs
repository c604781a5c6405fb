//! Asymptotic density of index sets, Cesàro averaging of unit-circle values,
//! and density-one filter prefixes.
//!
//! Density-one membership is not decidable from finite prefixes, so closed
//! form tags carry the asymptotic guarantee while a prefix-ratio gate catches
//! misuse of ad hoc sets. Cesàro averages are certified complex enclosures;
//! the finite-prefix transfer bound (sup deviation on E plus twice the mass
//! outside E plus enclosure width) is computed alongside every verdict.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circle::{chord_upper_bound, Angle};
use crate::enclosure::{unit_circle_enclosure, ComplexEnclosure};
use crate::witnesses::{Verdict, VerdictKind};

#[derive(Debug, Error)]
pub enum DensityError {
    #[error("index set {set} fails the density-one gate at length {len}: prefix ratio {ratio}, required {threshold}")]
    DensityGateFailed {
        set: String,
        len: u64,
        ratio: BigRational,
        threshold: BigRational,
    },
    #[error("Cesàro average of an empty value sequence")]
    EmptyValues,
    #[error("not a valid index-set descriptor: {0:?}")]
    BadDescriptor(String),
}

/// A subset of ω with a decidable membership predicate, an enumerator, and
/// an optional closed form carrying its asymptotic density.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "set", rename_all = "kebab-case")]
pub enum IndexSet {
    All,
    Evens,
    Odds,
    Squares,
    Factorials,
    /// `{stride·k + offset : k ∈ ω}`.
    ArithmeticProgression { stride: u64, offset: u64 },
    Explicit { members: BTreeSet<u64> },
    Complement { inner: Box<IndexSet> },
}

impl IndexSet {
    pub fn contains(&self, n: u64) -> bool {
        match self {
            IndexSet::All => true,
            IndexSet::Evens => n % 2 == 0,
            IndexSet::Odds => n % 2 == 1,
            IndexSet::Squares => {
                let r = n.isqrt();
                r * r == n
            }
            IndexSet::Factorials => {
                let mut f = 1u64;
                let mut k = 1u64;
                while f < n {
                    f = f.saturating_mul(k);
                    k += 1;
                }
                f == n
            }
            IndexSet::ArithmeticProgression { stride, offset } => {
                n >= *offset && (n - offset) % stride == 0
            }
            IndexSet::Explicit { members } => members.contains(&n),
            IndexSet::Complement { inner } => !inner.contains(n),
        }
    }

    /// Indices below `limit`, ascending; predicate and enumerator agree by
    /// construction.
    pub fn indices_below(&self, limit: u64) -> Vec<u64> {
        (0..limit).filter(|&n| self.contains(n)).collect()
    }

    pub fn complement(&self) -> IndexSet {
        match self {
            IndexSet::Complement { inner } => (**inner).clone(),
            other => IndexSet::Complement {
                inner: Box::new(other.clone()),
            },
        }
    }

    /// The asymptotic density carried by the closed form, when the tag
    /// determines it. Explicit finite lists deliberately return None: they
    /// are prefix data and go through the ratio gate instead.
    pub fn known_density(&self) -> Option<BigRational> {
        match self {
            IndexSet::All => Some(BigRational::one()),
            IndexSet::Evens | IndexSet::Odds => {
                Some(BigRational::new(BigInt::one(), BigInt::from(2)))
            }
            IndexSet::Squares | IndexSet::Factorials => Some(BigRational::zero()),
            IndexSet::ArithmeticProgression { stride, .. } => {
                Some(BigRational::new(BigInt::one(), BigInt::from(*stride)))
            }
            IndexSet::Explicit { .. } => None,
            IndexSet::Complement { inner } => {
                inner.known_density().map(|d| BigRational::one() - d)
            }
        }
    }
}

impl fmt::Display for IndexSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IndexSet::All => write!(f, "all"),
            IndexSet::Evens => write!(f, "evens"),
            IndexSet::Odds => write!(f, "odds"),
            IndexSet::Squares => write!(f, "squares"),
            IndexSet::Factorials => write!(f, "factorials"),
            IndexSet::ArithmeticProgression { stride, offset } => {
                write!(f, "ap:{stride},{offset}")
            }
            IndexSet::Explicit { members } => {
                write!(f, "explicit:[")?;
                for (i, m) in members.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{m}")?;
                }
                write!(f, "]")
            }
            IndexSet::Complement { inner } => write!(f, "{inner}-complement"),
        }
    }
}

impl FromStr for IndexSet {
    type Err = DensityError;

    /// The CLI naming: `all`, `evens`, `odds`, `squares`,
    /// `squares-complement`, `factorials`, `factorials-complement`,
    /// `ap:a,b`, `explicit:[n,n,…]`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let bad = || DensityError::BadDescriptor(s.to_string());
        if let Some(base) = s.strip_suffix("-complement") {
            return Ok(IndexSet::from_str(base)?.complement());
        }
        match s {
            "all" => return Ok(IndexSet::All),
            "evens" => return Ok(IndexSet::Evens),
            "odds" => return Ok(IndexSet::Odds),
            "squares" => return Ok(IndexSet::Squares),
            "factorials" => return Ok(IndexSet::Factorials),
            _ => {}
        }
        if let Some(rest) = s.strip_prefix("ap:") {
            let (a, b) = rest.split_once(',').ok_or_else(bad)?;
            let stride: u64 = a.trim().parse().map_err(|_| bad())?;
            let offset: u64 = b.trim().parse().map_err(|_| bad())?;
            if stride == 0 {
                return Err(bad());
            }
            return Ok(IndexSet::ArithmeticProgression { stride, offset });
        }
        if let Some(rest) = s.strip_prefix("explicit:") {
            let inner = rest
                .trim()
                .strip_prefix('[')
                .and_then(|r| r.strip_suffix(']'))
                .ok_or_else(bad)?;
            let mut members = BTreeSet::new();
            for part in inner.split(',') {
                let part = part.trim();
                if part.is_empty() {
                    continue;
                }
                members.insert(part.parse().map_err(|_| bad())?);
            }
            return Ok(IndexSet::Explicit { members });
        }
        Err(bad())
    }
}

/// Exact prefix density |E ∩ n| / n.
pub fn density_prefix(e: &IndexSet, n: u64) -> BigRational {
    assert!(n >= 1);
    let count = (0..n).filter(|&k| e.contains(k)).count();
    BigRational::new(BigInt::from(count), BigInt::from(n))
}

/// Running density data over a geometric checkpoint schedule (n = 2^k).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub prefix: u64,
    pub count: u64,
    pub ratio: BigRational,
    pub liminf_candidate: BigRational,
    pub limsup_candidate: BigRational,
    pub checkpoints: Vec<(u64, BigRational)>,
}

pub fn density_scan(e: &IndexSet, n: u64) -> DensityEstimate {
    assert!(n >= 1);
    let mut count = 0u64;
    let mut checkpoints = Vec::new();
    let mut next_checkpoint = 1u64;
    for k in 0..n {
        if e.contains(k) {
            count += 1;
        }
        if k + 1 == next_checkpoint || k + 1 == n {
            checkpoints.push((
                k + 1,
                BigRational::new(BigInt::from(count), BigInt::from(k + 1)),
            ));
            while next_checkpoint <= k + 1 {
                next_checkpoint *= 2;
            }
        }
    }
    let ratio = checkpoints.last().unwrap().1.clone();
    // candidates over the tail half of the schedule, where early transients
    // have washed out
    let tail: Vec<&BigRational> = checkpoints
        .iter()
        .skip(checkpoints.len() / 2)
        .map(|(_, r)| r)
        .collect();
    let liminf_candidate = tail
        .iter()
        .copied()
        .min()
        .cloned()
        .unwrap_or_else(|| ratio.clone());
    let limsup_candidate = tail
        .iter()
        .copied()
        .max()
        .cloned()
        .unwrap_or_else(|| ratio.clone());
    DensityEstimate {
        prefix: n,
        count,
        ratio,
        liminf_candidate,
        limsup_candidate,
        checkpoints,
    }
}

/// Certified enclosure of `(1/j) Σ e^{2πi·v_n}`.
pub fn cesaro_average(values: &[Angle], prec: u32) -> Result<ComplexEnclosure, DensityError> {
    if values.is_empty() {
        return Err(DensityError::EmptyValues);
    }
    let mut sum = ComplexEnclosure::zero();
    for v in values {
        sum = sum.add(&unit_circle_enclosure(v.value(), prec));
    }
    Ok(sum.div_nat(values.len() as u64).round_out(prec + 16))
}

/// The density-one gate threshold at a given length: 1 − 1/ln(len).
pub fn density_one_threshold(len: u64) -> BigRational {
    let t = 1.0 - 1.0 / (len.max(3) as f64).ln();
    BigRational::from_float(t).unwrap_or_else(BigRational::zero)
}

/// Indices of `E` below `seq_length`, for use as a filter-element prefix.
///
/// Accepts sets whose closed form certifies density one; explicit prefix
/// data must clear the ratio gate; closed forms with density < 1 are
/// rejected with the measured ratio.
pub fn density_one_restriction(e: &IndexSet, seq_length: u64) -> Result<Vec<u64>, DensityError> {
    assert!(seq_length >= 1);
    let ratio = density_prefix(e, seq_length);
    let threshold = density_one_threshold(seq_length);
    let pass = match e.known_density() {
        Some(d) if d.is_one() => true,
        Some(_) => false,
        None => ratio >= threshold,
    };
    if !pass {
        return Err(DensityError::DensityGateFailed {
            set: e.to_string(),
            len: seq_length,
            ratio,
            threshold,
        });
    }
    Ok(e.indices_below(seq_length))
}

/// Gate predicate shared with the Cesàro transfer check.
pub fn density_one_certified(e: &IndexSet, len: u64) -> bool {
    match e.known_density() {
        Some(d) if d.is_one() => true,
        Some(_) => false,
        None => density_prefix(e, len) >= density_one_threshold(len),
    }
}

/// Finite-prefix statistical-Cesàro check: if the values on a density-one
/// set cluster at `s`, the Cesàro mean at the horizon must sit near `s`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StatCesaroReport {
    pub verdict: Verdict,
    /// Prefix density of E at the horizon.
    pub prefix_density: BigRational,
    /// Rational upper bound on sup chord(v_n, s) over n ∈ E ∩ horizon.
    pub sup_deviation_on_e: BigRational,
    /// δ + 2(1 − ratio) + enclosure slack: certified bound on |mean − s|.
    pub transfer_bound: BigRational,
    /// Upper end of the certified |mean − s|² enclosure.
    pub distance_sq_hi: BigRational,
    /// Set when E fails the density-one gate at this horizon.
    pub hypothesis_violation: bool,
}

pub fn check_stat_cesaro<F>(
    values: F,
    e: &IndexSet,
    s: &Angle,
    horizon: u64,
    tol: &BigRational,
) -> Result<StatCesaroReport, DensityError>
where
    F: Fn(u64) -> Angle,
{
    const PREC: u32 = 96;
    if horizon < 10 {
        return Ok(StatCesaroReport {
            verdict: Verdict::inconclusive("horizon below 10", horizon, tol.clone()),
            prefix_density: BigRational::zero(),
            sup_deviation_on_e: BigRational::zero(),
            transfer_bound: BigRational::zero(),
            distance_sq_hi: BigRational::zero(),
            hypothesis_violation: false,
        });
    }
    let vals: Vec<Angle> = (0..horizon).map(&values).collect();
    let mean = cesaro_average(&vals, PREC)?;
    let target = unit_circle_enclosure(s.value(), PREC);
    let dist_sq = mean.dist_sq(&target);
    let ratio = density_prefix(e, horizon);
    let mut sup_dev = BigRational::zero();
    for n in 0..horizon {
        if e.contains(n) {
            let dev = chord_upper_bound(&vals[n as usize], s);
            if dev > sup_dev {
                sup_dev = dev;
            }
        }
    }
    let slack =
        (mean.max_width() + target.max_width()) * BigRational::from_integer(BigInt::from(2));
    let transfer_bound = &sup_dev
        + (BigRational::one() - &ratio) * BigRational::from_integer(BigInt::from(2))
        + &slack;
    let hypothesis_violation = !density_one_certified(e, horizon);
    let tol_sq = tol * tol;
    let kind = if dist_sq.hi <= tol_sq {
        VerdictKind::ConvergedTo {
            limit: s.clone(),
            tail_start: 0,
            slack: dist_sq.hi.clone(),
        }
    } else {
        VerdictKind::Inconclusive {
            reason: format!(
                "Cesàro mean not certified within tol of the target (|mean-s|^2 in [{}, {}])",
                dist_sq.lo, dist_sq.hi
            ),
        }
    };
    Ok(StatCesaroReport {
        verdict: Verdict {
            kind,
            horizon,
            tol: tol.clone(),
        },
        prefix_density: ratio,
        sup_deviation_on_e: sup_dev,
        transfer_bound,
        distance_sq_hi: dist_sq.hi,
        hypothesis_violation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn r(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    fn ang(n: i64, d: i64) -> Angle {
        Angle::from_frac(n, d)
    }

    #[test]
    fn density_prefix_examples() {
        assert_eq!(density_prefix(&IndexSet::Evens, 10), r(1, 2));
        // squares below 100: 0,1,4,...,81 — ten of them
        assert_eq!(density_prefix(&IndexSet::Squares, 100), r(10, 100));
        assert_eq!(
            density_prefix(&IndexSet::Squares.complement(), 100),
            r(90, 100)
        );
    }

    #[test]
    fn density_complement_sums_to_one() {
        for set in [
            IndexSet::Evens,
            IndexSet::Squares,
            IndexSet::Factorials,
            IndexSet::ArithmeticProgression {
                stride: 3,
                offset: 1,
            },
        ] {
            for n in [1u64, 7, 64, 100] {
                let lhs = density_prefix(&set, n) + density_prefix(&set.complement(), n);
                assert!(lhs.is_one());
            }
        }
    }

    #[test]
    fn cesaro_constant_sequence() {
        let vals = vec![Angle::zero(); 50];
        let enc = cesaro_average(&vals, 96).unwrap();
        assert!(enc.re.contains(&BigRational::one()));
        assert!(enc.im.contains(&BigRational::zero()));
        assert!(enc.max_width().is_zero());
    }

    #[test]
    fn cesaro_alternating_signs_cancel() {
        let vals: Vec<Angle> = (0..1000)
            .map(|k| if k % 2 == 0 { ang(0, 1) } else { ang(1, 2) })
            .collect();
        let enc = cesaro_average(&vals, 96).unwrap();
        assert!(enc.re.contains(&BigRational::zero()));
        assert!(enc.max_width() < r(1, 1_000_000));
    }

    #[test]
    fn cesaro_full_third_root_cycles_cancel() {
        // oracle: 1 + w + w^2 = 0 for w a primitive cube root, and 999
        // values make 333 full cycles
        let vals: Vec<Angle> = (0..999u64).map(|k| ang((k % 3) as i64, 3)).collect();
        let enc = cesaro_average(&vals, 96).unwrap();
        assert!(enc.re.contains(&BigRational::zero()));
        assert!(enc.im.contains(&BigRational::zero()));
        assert!(enc.max_width() < r(1, 1_000_000));
    }

    #[test]
    fn stat_cesaro_constant_converges() {
        let rep = check_stat_cesaro(
            |_| Angle::zero(),
            &IndexSet::All,
            &Angle::zero(),
            100,
            &r(1, 100),
        )
        .unwrap();
        assert!(matches!(rep.verdict.kind, VerdictKind::ConvergedTo { .. }));
        assert!(!rep.hypothesis_violation);
    }

    #[test]
    fn stat_cesaro_flags_low_density_hypothesis() {
        // constant 1 on evens, −1 on odds: the mean sits near 0, far from 1,
        // and E = evens is not density one
        let rep = check_stat_cesaro(
            |n| if n % 2 == 0 { ang(0, 1) } else { ang(1, 2) },
            &IndexSet::Evens,
            &Angle::zero(),
            1000,
            &r(1, 20),
        )
        .unwrap();
        assert!(rep.hypothesis_violation);
        assert!(matches!(rep.verdict.kind, VerdictKind::Inconclusive { .. }));
    }

    #[test]
    fn stat_cesaro_off_squares_converges() {
        // arbitrary values on squares, identity elsewhere
        let rep = check_stat_cesaro(
            |n| {
                if IndexSet::Squares.contains(n) {
                    ang(1, 3)
                } else {
                    Angle::zero()
                }
            },
            &IndexSet::Squares.complement(),
            &Angle::zero(),
            10_000,
            &r(1, 20),
        )
        .unwrap();
        assert!(matches!(rep.verdict.kind, VerdictKind::ConvergedTo { .. }));
        assert!(!rep.hypothesis_violation);
    }

    #[test]
    fn stat_cesaro_small_horizon_inconclusive() {
        let rep = check_stat_cesaro(
            |_| Angle::zero(),
            &IndexSet::All,
            &Angle::zero(),
            9,
            &r(1, 10),
        )
        .unwrap();
        assert!(matches!(rep.verdict.kind, VerdictKind::Inconclusive { .. }));
    }

    #[test]
    fn density_one_restriction_examples() {
        assert_eq!(
            density_one_restriction(&IndexSet::All, 10).unwrap(),
            (0..10).collect::<Vec<u64>>()
        );
        let kept = density_one_restriction(&IndexSet::Squares.complement(), 100).unwrap();
        assert_eq!(kept.len(), 90);
        let err = density_one_restriction(&IndexSet::Evens, 100).unwrap_err();
        match err {
            DensityError::DensityGateFailed { ratio, .. } => assert_eq!(ratio, r(1, 2)),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn explicit_sets_use_prefix_gate() {
        // a dense explicit prefix passes
        let dense = IndexSet::Explicit {
            members: (0..100).filter(|n| n % 10 != 3 || *n > 50).collect(),
        };
        assert!(density_one_restriction(&dense, 100).is_ok());
        let sparse = IndexSet::Explicit {
            members: (0..50).collect(),
        };
        assert!(density_one_restriction(&sparse, 100).is_err());
    }

    #[test]
    fn descriptor_parsing_round_trips() {
        for s in [
            "evens",
            "squares-complement",
            "factorials",
            "ap:3,1",
            "explicit:[1,2,5]",
            "all",
        ] {
            let set: IndexSet = s.parse().unwrap();
            let back: IndexSet = set.to_string().parse().unwrap();
            assert_eq!(set, back);
        }
        assert!("nonsense".parse::<IndexSet>().is_err());
    }

    #[test]
    fn density_scan_checkpoints_are_geometric() {
        let est = density_scan(&IndexSet::Evens, 1000);
        assert_eq!(est.prefix, 1000);
        assert!(est.liminf_candidate <= est.limsup_candidate);
        let ns: Vec<u64> = est.checkpoints.iter().map(|(n, _)| *n).collect();
        assert!(ns.contains(&512) && ns.contains(&1000));
    }

    proptest! {
        #[test]
        fn cesaro_enclosure_meets_unit_disk(nums in proptest::collection::vec((0i64..50, 1i64..13), 1..40)) {
            let vals: Vec<Angle> = nums.iter().map(|&(n, d)| ang(n, d)).collect();
            let enc = cesaro_average(&vals, 64).unwrap();
            let m = enc.modulus_sq();
            // the true mean has modulus <= 1, so the enclosure must reach
            // into the closed unit disk
            prop_assert!(m.lo <= BigRational::one());
        }

        #[test]
        fn cesaro_transfer_bound_holds(seed in 0u64..500, horizon in 50u64..400) {
            // values exactly at the target off the squares, arbitrary on them
            let e = IndexSet::Squares.complement();
            let target = ang(1, 4);
            let t2 = target.clone();
            let rep = check_stat_cesaro(
                move |n| {
                    if IndexSet::Squares.contains(n) {
                        ang(((seed ^ n) % 7) as i64, 7)
                    } else {
                        t2.clone()
                    }
                },
                &e,
                &target,
                horizon,
                &r(1, 10),
            ).unwrap();
            let bound_sq = &rep.transfer_bound * &rep.transfer_bound;
            prop_assert!(rep.distance_sq_hi <= bound_sq);
        }
    }
}
