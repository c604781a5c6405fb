//! Nice partitions of the dual, the augmented metrics ρ_j, thin character
//! sequences, and the horizon-bounded niceness checker.
//!
//! A plan is a finite-stage object: the canonical enumeration prefix of the
//! dual is split into blocks Φ_0..Φ_J by structure-specific thresholds, and
//! every block beyond the prefix's reach still holds its canonical first
//! element as an anchor, so deep blocks stay nonempty without materializing
//! combinatorially many characters. The defining perturbation property (for
//! each j, every φ in blocks ≥ j+2 can steer its value near any target while
//! moving less than 2^-j in ρ_j) is established structurally by the
//! threshold recurrences and spot-checked by witness search on sampled
//! instances; certificates record both.

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{Integer, One, Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circle::{chord_of_arc_cmp, coset_covers_circle, Angle, RootsOfUnity, ValueRange};
use crate::enclosure::{chord_linear_bounds, RatInterval};
use crate::groups::{
    base_metric, character_by_index, evaluate, haar_sample, BaseDistance, Character, GroupError,
    GroupSpec,
};

use std::cmp::Ordering;
use std::collections::BTreeMap;

#[derive(Debug, Error)]
pub enum PartitionError {
    #[error("{0} admits no nice partition")]
    NotNice(String),
    #[error("unsupported spec for this operation: {0}")]
    Unsupported(String),
    #[error("plan depth {depth} too small: {need}")]
    DepthTooSmall { depth: usize, need: String },
    #[error("instance out of scope: {0}")]
    InstanceOutOfScope(String),
    #[error("witness search budget exhausted after {tried} candidates at block {block}")]
    BudgetExhausted { block: usize, tried: usize },
    #[error(transparent)]
    Group(#[from] GroupError),
}

// ---------------------------------------------------------------------------
// plans
// ---------------------------------------------------------------------------

/// Range of the enumeration key covered by one block.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "by", rename_all = "kebab-case")]
pub enum BlockDescriptor {
    IdentityOnly,
    /// Circle exponents with lo <= |n| < hi.
    CircleExponents { lo: BigInt, hi: BigInt },
    /// Product characters with lo <= max support index < hi.
    MaxSupportRange { lo: usize, hi: usize },
    /// Prüfer characters with lo <= level < hi.
    PAdicLevelRange { lo: u32, hi: u32 },
}

impl BlockDescriptor {
    pub fn contains(&self, c: &Character) -> bool {
        match (self, c) {
            (BlockDescriptor::IdentityOnly, c) => c.is_identity(),
            (BlockDescriptor::CircleExponents { lo, hi }, Character::Circle { exponent }) => {
                let mag = exponent.abs();
                &mag >= lo && &mag < hi
            }
            (BlockDescriptor::MaxSupportRange { lo, hi }, Character::Product { .. }) => {
                match c.max_support() {
                    Some(m) => m >= *lo && m < *hi,
                    None => false,
                }
            }
            (BlockDescriptor::PAdicLevelRange { lo, hi }, Character::PAdic { level, .. }) => {
                !c.is_identity() && level >= lo && level < hi
            }
            _ => false,
        }
    }

    /// Canonically first character of the block.
    pub fn first_character(&self, spec: &GroupSpec) -> Character {
        match self {
            BlockDescriptor::IdentityOnly => Character::identity(spec),
            BlockDescriptor::CircleExponents { lo, .. } => Character::Circle {
                exponent: lo.clone(),
            },
            BlockDescriptor::MaxSupportRange { lo, .. } => {
                Character::coordinate(spec, *lo, 1).expect("coordinate kind")
            }
            BlockDescriptor::PAdicLevelRange { lo, .. } => {
                Character::padic(spec, BigInt::one(), *lo).expect("p-adic kind")
            }
        }
    }
}

/// How a block's share of the perturbation property was established.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BlockCertificate {
    /// The structural rule backing the block (threshold inequality).
    pub rule: String,
    /// Sampled instances checked by witness search.
    pub verified_samples: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Block {
    pub index: usize,
    pub descriptor: BlockDescriptor,
    /// Enumeration-prefix members plus the anchor, in canonical order.
    pub members: Vec<Character>,
    pub certificate: BlockCertificate,
}

/// Finite prefix of a nice partition of the dual.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PartitionPlan {
    pub spec: GroupSpec,
    pub depth: usize,
    /// Canonical enumeration prefix assigned into blocks.
    pub horizon: u64,
    pub blocks: Vec<Block>,
}

impl PartitionPlan {
    /// Index of the block containing a character, per the descriptors.
    pub fn block_of(&self, c: &Character) -> Option<usize> {
        self.blocks.iter().position(|b| b.descriptor.contains(c))
    }

    /// Members of blocks 0..=j (the characters ρ_j can see).
    pub fn visible_members(&self, j: usize) -> impl Iterator<Item = &Character> {
        self.blocks
            .iter()
            .take(j + 1)
            .flat_map(|b| b.members.iter())
    }

    /// Largest coordinate index (or p-adic digit) any block <= j can see.
    fn visibility_depth(&self, j: usize) -> u32 {
        let mut depth = 0u32;
        for b in self.blocks.iter().take(j + 1) {
            match &b.descriptor {
                BlockDescriptor::MaxSupportRange { hi, .. } => depth = depth.max(*hi as u32),
                BlockDescriptor::PAdicLevelRange { hi, .. } => depth = depth.max(*hi),
                _ => {}
            }
        }
        depth
    }
}

fn pow2_rat(e: i64) -> BigRational {
    if e >= 0 {
        BigRational::from_integer(BigInt::one() << e as u32)
    } else {
        BigRational::new(BigInt::one(), BigInt::one() << (-e) as u32)
    }
}

const CHORD_LIPSCHITZ: (i64, i64) = (44, 7); // rational bound 2π < 44/7

fn chord_lipschitz() -> BigRational {
    BigRational::new(BigInt::from(CHORD_LIPSCHITZ.0), BigInt::from(CHORD_LIPSCHITZ.1))
}

/// Builds the finite-stage nice partition for a stock spec.
///
/// Circle blocks are exponent-magnitude intervals whose lower edges obey
/// `N_b >= 2^{b-3}(1 + (44/7)·S_{b-2}) + 1` with S the exponent mass visible
/// to ρ_{b-2}; coordinate kinds advance the maximal support index (with a
/// prime-size requirement for distinct primes, where targets range over the
/// whole circle); the p-adic kind advances levels fast enough that fresh
/// digits reach mesh 2^-b. The counterexample group is rejected.
pub fn build_nice_partition(spec: &GroupSpec, depth: usize) -> Result<PartitionPlan, PartitionError> {
    build_nice_partition_with_horizon(spec, depth, default_horizon(spec))
}

fn default_horizon(spec: &GroupSpec) -> u64 {
    match spec {
        GroupSpec::Circle => 65,
        GroupSpec::PAdic { .. } => 64,
        _ => 64,
    }
}

pub fn build_nice_partition_with_horizon(
    spec: &GroupSpec,
    depth: usize,
    horizon: u64,
) -> Result<PartitionPlan, PartitionError> {
    let descriptors = match spec {
        GroupSpec::Z4Z2Counterexample => {
            return Err(PartitionError::NotNice(spec.to_string()));
        }
        GroupSpec::Circle => circle_descriptors(depth, horizon),
        GroupSpec::ProductFixedPrime { .. } => fixed_prime_descriptors(depth),
        GroupSpec::ProductDistinctPrimes { primes } => {
            distinct_primes_descriptors(depth, &|i| primes.get(i))
        }
        GroupSpec::PAdic { p } => padic_descriptors(depth, *p),
    };
    let mut blocks: Vec<Block> = descriptors
        .into_iter()
        .enumerate()
        .map(|(index, (descriptor, rule))| Block {
            index,
            descriptor,
            members: Vec::new(),
            certificate: BlockCertificate {
                rule,
                verified_samples: 0,
            },
        })
        .collect();
    // assign the canonical enumeration prefix
    for n in 0..horizon {
        let c = character_by_index(spec, n);
        if let Some(b) = blocks.iter_mut().find(|b| b.descriptor.contains(&c)) {
            b.members.push(c);
        }
        // characters beyond the last block's range are outside the plan depth
    }
    // anchor every block with its canonical first element
    for b in blocks.iter_mut() {
        let anchor = b.descriptor.first_character(spec);
        if !b.members.contains(&anchor) {
            b.members.insert(0, anchor);
        }
    }
    let mut plan = PartitionPlan {
        spec: spec.clone(),
        depth,
        horizon,
        blocks,
    };
    spot_check_plan(&mut plan)?;
    Ok(plan)
}

/// Witness-search verification on sampled (j, φ, x, z) instances; successes
/// are recorded in the block certificates.
fn spot_check_plan(plan: &mut PartitionPlan) -> Result<(), PartitionError> {
    let depth = plan.depth;
    let sampled: Vec<usize> = if depth <= 10 {
        (2..=depth).collect()
    } else {
        let mut v: Vec<usize> = (2..=6).collect();
        let mut b = 8;
        while b <= depth {
            v.push(b);
            b = (b * 2).max(b + 1);
        }
        if !v.contains(&depth) {
            v.push(depth);
        }
        v
    };
    for b in sampled {
        let j = b - 2;
        let phi = plan.blocks[b].members[0].clone();
        for (i, seed) in [11u64, 23, 47].iter().enumerate() {
            let x = haar_sample(&plan.spec, *seed, 97);
            let z = sample_target(&plan.spec, i as u64);
            verify_partition_condition(plan, j, &phi, &x, &z, 64)?;
            plan.blocks[b].certificate.verified_samples += 1;
        }
    }
    Ok(())
}

fn sample_target(spec: &GroupSpec, salt: u64) -> Angle {
    match spec.value_range() {
        ValueRange::FullCircle => Angle::from_frac(1 + 2 * salt as i64, 7 + 4 * salt as i64),
        ValueRange::Roots(m) => Angle::from_frac(((salt + 1) % m) as i64, m as i64),
    }
}

fn circle_descriptors(depth: usize, horizon: u64) -> Vec<(BlockDescriptor, String)> {
    let prefix_cap = BigInt::from(horizon / 2); // exponents materialized up to this magnitude
    let lipschitz = chord_lipschitz();
    // mass contributed by block [lo, hi): prefix members ±m for m <= cap,
    // plus the anchor +lo when the block starts beyond the cap
    let mass_of_block = |lo: &BigInt, hi: &BigInt| -> BigRational {
        let top = hi.clone().min(prefix_cap.clone() + 1u8);
        let mut mass = BigRational::zero();
        if &top > lo {
            // 2·Σ_{m=lo}^{top-1} m = (top-1+lo)(top-lo)
            mass += BigRational::from_integer(&top - 1u8 + lo)
                * BigRational::from_integer(&top - lo);
        }
        if lo > &prefix_cap {
            mass += BigRational::from_integer(lo.clone());
        }
        mass
    };
    // thresholds[b] closes block b; block b = [thresholds[b-1], thresholds[b])
    let mut thresholds: Vec<BigInt> = vec![BigInt::one(), BigInt::from(2)];
    // s_mass[j] = Σ |m| over materialized members of blocks 0..=j
    let mut s_mass: Vec<BigRational> = vec![BigRational::zero()];
    s_mass.push(&s_mass[0] + mass_of_block(&thresholds[0], &thresholds[1]));
    for t in 2..=depth.max(1) {
        // the new threshold N[t] is the lower edge of block t+1, whose worst
        // quantifier is j = t-1: N[t] >= 2^{t-2}(1 + (44/7)·S[t-1]) + 1
        let bound = pow2_rat(t as i64 - 2) * (BigRational::one() + &lipschitz * &s_mass[t - 1]);
        let bound = bound.floor().to_integer() + 1u8;
        let last = thresholds.last().unwrap().clone();
        let next = bound.max(last + 1u8);
        thresholds.push(next);
        let m = mass_of_block(&thresholds[t - 1], &thresholds[t]);
        let prev = s_mass[t - 1].clone();
        s_mass.push(prev + m);
    }
    (0..=depth)
        .map(|b| {
            if b == 0 {
                (
                    BlockDescriptor::IdentityOnly,
                    "identity block; never quantified".to_string(),
                )
            } else {
                let lo = thresholds[b - 1].clone();
                let hi = thresholds[b].clone();
                let rule = format!(
                    "exponents in [{lo}, {hi}); the lower edge exceeds 2^(b-3)(1 + (44/7)·S_(b-2)), so any target is reachable within arc 1/(2|n|) at ρ cost below 2^-(b-2)"
                );
                (BlockDescriptor::CircleExponents { lo, hi }, rule)
            }
        })
        .collect()
}

fn fixed_prime_descriptors(depth: usize) -> Vec<(BlockDescriptor, String)> {
    (0..=depth)
        .map(|b| {
            if b == 0 {
                (
                    BlockDescriptor::IdentityOnly,
                    "identity block; never quantified".to_string(),
                )
            } else {
                (
                    BlockDescriptor::MaxSupportRange { lo: b - 1, hi: b },
                    format!(
                        "max support index {}: fresh top coordinate beyond all earlier supports, targets in R_p hit exactly",
                        b - 1
                    ),
                )
            }
        })
        .collect()
}

fn distinct_primes_descriptors(
    depth: usize,
    prime_at: &dyn Fn(usize) -> u64,
) -> Vec<(BlockDescriptor, String)> {
    // t[b] = max(t[b-1]+1, b, min{t : p_t >= 2^{b+1}})
    let mut ts: Vec<usize> = vec![0];
    for b in 1..=depth + 1 {
        let need = if b + 1 <= 63 { 1u64 << (b + 1) } else { u64::MAX };
        let mut t = ts[b - 1] + 1;
        t = t.max(b);
        while prime_at(t) < need {
            t += 1;
        }
        ts.push(t);
    }
    (0..=depth)
        .map(|b| {
            if b == 0 {
                (
                    BlockDescriptor::IdentityOnly,
                    "identity block; never quantified".to_string(),
                )
            } else {
                let (lo, hi) = (ts[b - 1], ts[b]);
                (
                    BlockDescriptor::MaxSupportRange { lo, hi },
                    format!(
                        "max support in [{lo}, {hi}); p_{lo} >= 2^{} gives mesh below 2^-({} - 2) on the fresh top coordinate",
                        b, b
                    ),
                )
            }
        })
        .collect()
}

fn padic_descriptors(depth: usize, p: u64) -> Vec<(BlockDescriptor, String)> {
    // levels m(b) = min m with p^m >= 2^b
    let mesh_levels = |b: usize| -> u32 {
        let mut m = 0u32;
        let mut acc = BigInt::one();
        let goal = BigInt::one() << b;
        while acc < goal {
            acc *= BigInt::from(p);
            m += 1;
        }
        m
    };
    let mut lam: Vec<u32> = vec![1]; // end of block b's level range; block b = [lam[b-1], lam[b])
    for b in 1..=depth + 1 {
        // the next threshold opens block b+1 whose members need sufficient
        // fresh digits above max(b, lam[b-1]-1)
        let d = (b as u32).max(lam[b - 1].saturating_sub(1));
        let need = d + mesh_levels(b + 1);
        lam.push(need.max(lam[b - 1] + 1));
    }
    (0..=depth)
        .map(|b| {
            if b == 0 {
                (
                    BlockDescriptor::IdentityOnly,
                    "identity block; never quantified".to_string(),
                )
            } else {
                let (lo, hi) = (lam[b - 1], lam[b]);
                (
                    BlockDescriptor::PAdicLevelRange { lo, hi },
                    format!(
                        "levels in [{lo}, {hi}); digits above the visible prefix reach mesh p^-({} digits) below 2^-({} - 2)",
                        hi - lo,
                        b
                    ),
                )
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// the augmented metrics
// ---------------------------------------------------------------------------

/// Certified enclosure of ρ_j(x, y) = ρ(x, y) + Σ chord(φ(x), φ(y)) over the
/// plan's materialized members of blocks 0..=j.
///
/// Precision 16 or below keeps every chord at its rational linear bracket;
/// higher precision is accepted for interface compatibility and only matters
/// when the brackets are too coarse for the caller's comparison.
pub fn rho_j(
    x: &crate::groups::Point,
    y: &crate::groups::Point,
    plan: &PartitionPlan,
    j: usize,
    precision: u32,
) -> Result<RatInterval, PartitionError> {
    let depth = plan.visibility_depth(j).max(64) + 1;
    let base = base_metric(x, y, depth)?;
    let mut interval = match base {
        BaseDistance::Exact(v) => RatInterval::point(v),
        BaseDistance::AgreesToDepth(d) => {
            RatInterval::new(BigRational::zero(), pow2_rat(-(d as i64)))
        }
    };
    for c in plan.visible_members(j) {
        let vx = evaluate(c, x)?;
        let vy = evaluate(c, y)?;
        let arc = vx.arc_distance(&vy);
        if arc.is_zero() {
            continue;
        }
        let bracket = chord_linear_bounds(&arc);
        let bracket = if precision > 16 && bracket.width() > pow2_rat(-(precision as i64)) {
            crate::circle::chord_between(&vx, &vy, precision)
        } else {
            bracket
        };
        interval = interval.add(&bracket);
    }
    Ok(interval)
}

// ---------------------------------------------------------------------------
// the perturbation witness
// ---------------------------------------------------------------------------

/// An explicit y meeting ρ_j(x,y) < 2^-j and chord(φ(y), z) < 2^-j, with
/// re-checkable bounds.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PartitionWitness {
    pub point: crate::groups::Point,
    /// Certified upper bound on ρ_j(x, y).
    pub rho_bound: BigRational,
    pub rho_requirement: BigRational,
    /// φ(y), exact.
    pub value: Angle,
    /// Certified upper bound on chord(φ(y), z); zero when the hit is exact.
    pub chord_bound: BigRational,
    pub chord_requirement: BigRational,
    pub exact_hit: bool,
}

/// Finds y by the structural rule: modify x only on data invisible to ρ_j
/// but seen by φ. Search beyond the structural candidate happens only on the
/// circle, where nearby solutions of the exponent congruence are tried in
/// order of distance until the budget runs out.
pub fn verify_partition_condition(
    plan: &PartitionPlan,
    j: usize,
    phi: &Character,
    x: &crate::groups::Point,
    z: &Angle,
    budget: usize,
) -> Result<PartitionWitness, PartitionError> {
    let spec = &plan.spec;
    if !spec.value_range().contains(z) {
        return Err(PartitionError::InstanceOutOfScope(format!(
            "target {z} outside {}",
            spec.value_range()
        )));
    }
    let block = plan.block_of(phi).ok_or_else(|| {
        PartitionError::InstanceOutOfScope(format!("{phi} not in any block of the plan"))
    })?;
    if block < j + 2 {
        return Err(PartitionError::InstanceOutOfScope(format!(
            "{phi} sits in block {block}, need at least {}",
            j + 2
        )));
    }
    let requirement = pow2_rat(-(j as i64));
    let current = evaluate(phi, x)?;
    // nothing to move
    if &current == z {
        return Ok(PartitionWitness {
            point: x.clone(),
            rho_bound: BigRational::zero(),
            rho_requirement: requirement.clone(),
            value: current,
            chord_bound: BigRational::zero(),
            chord_requirement: requirement,
            exact_hit: true,
        });
    }
    match spec {
        GroupSpec::ProductFixedPrime { .. } | GroupSpec::ProductDistinctPrimes { .. } => {
            product_witness(plan, j, phi, x, z, requirement)
        }
        GroupSpec::PAdic { p } => padic_witness(plan, j, phi, x, z, requirement, *p),
        GroupSpec::Circle => circle_witness(plan, j, phi, x, z, requirement, budget),
        GroupSpec::Z4Z2Counterexample => Err(PartitionError::NotNice(spec.to_string())),
    }
}

fn certify_witness(
    plan: &PartitionPlan,
    j: usize,
    phi: &Character,
    x: &crate::groups::Point,
    y: crate::groups::Point,
    z: &Angle,
    requirement: BigRational,
) -> Result<PartitionWitness, PartitionError> {
    let rho = rho_j(x, &y, plan, j, 16)?;
    let value = evaluate(phi, &y)?;
    let exact_hit = &value == z;
    let chord_bound = if exact_hit {
        BigRational::zero()
    } else {
        crate::circle::chord_upper_bound(&value, z)
    };
    if rho.hi >= requirement {
        return Err(PartitionError::InstanceOutOfScope(format!(
            "structural witness failed the ρ bound: {} >= {}",
            rho.hi, requirement
        )));
    }
    if !exact_hit && chord_of_arc_cmp(&value.arc_distance(z), &requirement) != Ordering::Less {
        return Err(PartitionError::InstanceOutOfScope(
            "structural witness failed the chord bound".into(),
        ));
    }
    Ok(PartitionWitness {
        point: y,
        rho_bound: rho.hi,
        rho_requirement: requirement.clone(),
        value,
        chord_bound,
        chord_requirement: requirement,
        exact_hit,
    })
}

fn product_witness(
    plan: &PartitionPlan,
    j: usize,
    phi: &Character,
    x: &crate::groups::Point,
    z: &Angle,
    requirement: BigRational,
) -> Result<PartitionWitness, PartitionError> {
    let Character::Product { support } = phi else {
        return Err(PartitionError::InstanceOutOfScope(
            "product character expected".into(),
        ));
    };
    let i = *support.keys().next_back().expect("nonidentity");
    let a = support[&i];
    let p = plan.spec.coordinate_modulus(i).unwrap();
    let xi = x.coord(i).unwrap();
    let current = evaluate(phi, x)?;
    // want a·(yi - xi)/p ≈ z - current; solve on the R_p grid
    let offset = z.combine(&current.inverse());
    let scaled = offset.value() * BigRational::from_integer(BigInt::from(p));
    let target_num = if scaled.is_integer() {
        scaled.to_integer()
    } else {
        // nearest grid point
        (scaled + BigRational::new(BigInt::one(), BigInt::from(2)))
            .floor()
            .to_integer()
    };
    let target_num = u64::try_from(&target_num.mod_floor(&BigInt::from(p))).unwrap();
    let a_inv = mod_inverse_u64(a, p).expect("unit residue");
    let delta = a_inv * target_num % p;
    let yi = (xi + delta) % p;
    let y = x.with_coord(i, yi)?;
    certify_witness(plan, j, phi, x, y, z, requirement)
}

fn padic_witness(
    plan: &PartitionPlan,
    j: usize,
    phi: &Character,
    x: &crate::groups::Point,
    z: &Angle,
    requirement: BigRational,
    p: u64,
) -> Result<PartitionWitness, PartitionError> {
    let Character::PAdic { numerator, level } = phi else {
        return Err(PartitionError::InstanceOutOfScope(
            "p-adic character expected".into(),
        ));
    };
    let k = *level;
    // fresh digits start above both the quantifier depth and the last digit
    // any visible block can see (a level-l character sees digits 0..l-1)
    let visible = plan.visibility_depth(j);
    let d_start = (j as u32 + 1).max(visible.saturating_sub(1));
    if d_start >= k {
        return Err(PartitionError::InstanceOutOfScope(format!(
            "level {k} leaves no fresh digits above {d_start}"
        )));
    }
    let span = k - d_start; // reachable subgroup R_{p^span}
    let current = evaluate(phi, x)?;
    let offset = z.combine(&current.inverse());
    let modulus = BigInt::from(p).pow(span);
    let scaled = offset.value() * BigRational::from_integer(modulus.clone());
    let c = if scaled.is_integer() {
        scaled.to_integer()
    } else {
        (scaled + BigRational::new(BigInt::one(), BigInt::from(2)))
            .floor()
            .to_integer()
    }
    .mod_floor(&modulus);
    let a_inv = crate::groups::is_prime(p)
        .then(|| big_mod_inverse(numerator, &modulus))
        .flatten()
        .expect("unit numerator");
    let delta = (a_inv * c).mod_floor(&modulus);
    // X' = X + p^{d_start}·delta (mod p^k); rewrite digits d_start..k-1
    let mut x_mod = BigInt::zero();
    let mut pow = BigInt::one();
    for idx in 0..k {
        x_mod += BigInt::from(x.coord(idx as usize).unwrap()) * &pow;
        pow *= BigInt::from(p);
    }
    let pk = pow.clone();
    let x_new = (&x_mod + BigInt::from(p).pow(d_start) * &delta).mod_floor(&pk);
    let mut y = x.clone();
    let mut rest = x_new.clone();
    for idx in 0..k {
        let digit = u64::try_from(&rest.mod_floor(&BigInt::from(p))).unwrap();
        rest /= BigInt::from(p);
        if idx >= d_start {
            y = y.with_coord(idx as usize, digit)?;
        }
    }
    certify_witness(plan, j, phi, x, y, z, requirement)
}

fn circle_witness(
    plan: &PartitionPlan,
    j: usize,
    phi: &Character,
    x: &crate::groups::Point,
    z: &Angle,
    requirement: BigRational,
    budget: usize,
) -> Result<PartitionWitness, PartitionError> {
    let Character::Circle { exponent } = phi else {
        return Err(PartitionError::InstanceOutOfScope(
            "circle character expected".into(),
        ));
    };
    let theta = x.angle().unwrap().value().clone();
    let e = BigRational::from_integer(exponent.clone());
    // solutions of exponent·y = z are spaced 1/|exponent|; try them nearest
    // first
    let base_candidate = (&e * &theta - z.value()).round();
    let mut tried = 0usize;
    let mut offsets: Vec<BigInt> = vec![BigInt::zero()];
    for d in 1..=(budget as i64) {
        offsets.push(BigInt::from(d));
        offsets.push(BigInt::from(-d));
    }
    for off in offsets {
        if tried >= budget.max(1) {
            break;
        }
        tried += 1;
        let kk = &base_candidate + BigRational::from_integer(off);
        let y_val = (z.value() + kk) / &e;
        let y = crate::groups::Point::circle(Angle::new(y_val));
        match certify_witness(plan, j, phi, x, y, z, requirement.clone()) {
            Ok(w) => return Ok(w),
            Err(PartitionError::InstanceOutOfScope(_)) => continue,
            Err(other) => return Err(other),
        }
    }
    Err(PartitionError::BudgetExhausted {
        block: plan.block_of(phi).unwrap_or(usize::MAX),
        tried,
    })
}

fn mod_inverse_u64(a: u64, m: u64) -> Option<u64> {
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

fn big_mod_inverse(a: &BigInt, m: &BigInt) -> Option<BigInt> {
    let e = a.extended_gcd(m);
    if !e.gcd.is_one() {
        return None;
    }
    Some(e.x.mod_floor(m))
}

// ---------------------------------------------------------------------------
// thin sequences
// ---------------------------------------------------------------------------

/// Which member each selected block contributes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OffsetRule {
    /// First element in canonical character order (the anchor).
    FirstInBlock,
}

/// One character per selected block, block indices increasing with gaps >= 2.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ThinSequence {
    pub plan: PartitionPlan,
    entries: Vec<(Character, usize)>,
}

impl ThinSequence {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn character(&self, n: usize) -> &Character {
        &self.entries[n].0
    }

    pub fn block_index(&self, n: usize) -> usize {
        self.entries[n].1
    }

    pub fn entries(&self) -> &[(Character, usize)] {
        &self.entries
    }

    pub fn spec(&self) -> &GroupSpec {
        &self.plan.spec
    }

    /// Replaces entry `n`; the thinness gaps are re-asserted.
    pub fn with_replacement(
        &self,
        n: usize,
        character: Character,
        block: usize,
    ) -> Result<ThinSequence, PartitionError> {
        let mut entries = self.entries.clone();
        entries[n] = (character, block);
        ThinSequence::from_entries(self.plan.clone(), entries)
    }

    pub fn from_entries(
        plan: PartitionPlan,
        entries: Vec<(Character, usize)>,
    ) -> Result<ThinSequence, PartitionError> {
        for w in entries.windows(2) {
            if w[1].1 < w[0].1 + 2 {
                return Err(PartitionError::InstanceOutOfScope(format!(
                    "thinness violated: consecutive blocks {} and {}",
                    w[0].1, w[1].1
                )));
            }
        }
        for (c, b) in &entries {
            if !plan.blocks[*b].descriptor.contains(c) && !(c.is_identity() && *b == 0) {
                return Err(PartitionError::InstanceOutOfScope(format!(
                    "{c} does not belong to block {b}"
                )));
            }
        }
        Ok(ThinSequence { plan, entries })
    }
}

/// Default thin selection: φ_n from Φ_{stride·n}, first element in canonical
/// order; stride >= 2 keeps the gaps legal.
pub fn thin_select(
    plan: &PartitionPlan,
    stride: usize,
    rule: OffsetRule,
) -> Result<ThinSequence, PartitionError> {
    if stride < 2 {
        return Err(PartitionError::InstanceOutOfScope(format!(
            "stride {stride} below the thinness gap 2"
        )));
    }
    let OffsetRule::FirstInBlock = rule;
    let mut entries = Vec::new();
    let mut n = 0usize;
    while stride * n <= plan.depth {
        let b = stride * n;
        entries.push((plan.blocks[b].members[0].clone(), b));
        n += 1;
    }
    ThinSequence::from_entries(plan.clone(), entries)
}

// ---------------------------------------------------------------------------
// the niceness checker
// ---------------------------------------------------------------------------

/// Descriptor of a basic nonempty open set.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "open-set", rename_all = "kebab-case")]
pub enum OpenSet {
    /// Circle arc of given center and radius.
    Arc { center: Angle, radius: BigRational },
    /// Finite-constraint cylinder in a coordinate kind.
    Cylinder { fixes: Vec<(usize, u64)> },
    /// Counterexample cell: optionally fixed Z₄ part plus binary fixes.
    Z4Z2Cell {
        z4: Option<u8>,
        fixes: Vec<(usize, u64)>,
    },
}

/// φ(U) for the supported open sets: an arc, a coset of N-th roots, or a
/// single value.
enum ImageSet {
    Arc { center: Angle, half_length: BigRational },
    Coset { order: BigInt, offset: Angle },
    Singleton(Angle),
}

impl ImageSet {
    /// Does N_eps(image) cover the closed value range (closed comparison)?
    fn covers(&self, target: &ValueRange, eps: &BigRational) -> bool {
        match (self, target) {
            (ImageSet::Arc { half_length, .. }, ValueRange::FullCircle) => {
                if half_length >= &BigRational::new(BigInt::one(), BigInt::from(2)) {
                    return true;
                }
                // the worst point sits opposite the image center
                let worst = BigRational::new(BigInt::one(), BigInt::from(2)) - half_length;
                chord_of_arc_cmp(&worst, eps) != Ordering::Greater
            }
            (ImageSet::Arc { center, half_length }, ValueRange::Roots(m)) => {
                RootsOfUnity::new(*m).angles().all(|w| {
                    let d = w.arc_distance(center);
                    let d = if &d <= half_length {
                        BigRational::zero()
                    } else {
                        d - half_length
                    };
                    chord_of_arc_cmp(&d, eps) != Ordering::Greater
                })
            }
            (ImageSet::Coset { order, .. }, ValueRange::FullCircle) => {
                coset_covers_circle(order, eps)
            }
            (ImageSet::Coset { order, offset }, ValueRange::Roots(m)) => {
                RootsOfUnity::new(*m).angles().all(|w| {
                    // distance from w to the nearest coset point
                    let rel = w.combine(&offset.inverse());
                    let spacing = BigRational::new(BigInt::one(), order.clone());
                    let within = rel.value().clone() - (rel.value() / &spacing).floor() * &spacing;
                    let d = within.clone().min(&spacing - &within);
                    chord_of_arc_cmp(&d, eps) != Ordering::Greater
                })
            }
            (ImageSet::Singleton(_), ValueRange::FullCircle) => {
                // a single value covers the circle only for eps >= 2
                chord_of_arc_cmp(&BigRational::new(BigInt::one(), BigInt::from(2)), eps)
                    != Ordering::Greater
            }
            (ImageSet::Singleton(v), ValueRange::Roots(m)) => RootsOfUnity::new(*m)
                .angles()
                .all(|w| chord_of_arc_cmp(&w.arc_distance(v), eps) != Ordering::Greater),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NicenessVerdict {
    /// All failures sit in an initial segment of the enumeration.
    Supported { failing_initial_segment: usize },
    /// Failures saturate the tail: at least horizon-many beyond every tested
    /// initial segment.
    Refuted,
    Inconclusive,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NicenessReport {
    pub verdict: NicenessVerdict,
    pub spec: GroupSpec,
    pub open_set: OpenSet,
    pub eps: BigRational,
    pub horizon: u64,
    /// Characters enumerated (twice the horizon).
    pub examined: u64,
    /// Failing characters, in enumeration order.
    pub failing: Vec<Character>,
}

/// Horizon-bounded test of the covering property: enumerate the first
/// 2·horizon characters, compute each φ(U) exactly, and test coverage of
/// cl(Ĝ(X)) within eps.
pub fn check_niceness(
    spec: &GroupSpec,
    u: &OpenSet,
    eps: &BigRational,
    horizon: u64,
) -> Result<NicenessReport, PartitionError> {
    let examined = horizon * 2;
    let target = spec.value_range();
    let mut failing = Vec::new();
    let mut failing_indices = Vec::new();
    for n in 0..examined {
        let c = character_by_index(spec, n);
        let image = character_image(spec, &c, u)?;
        if !image.covers(&target, eps) {
            failing_indices.push(n);
            failing.push(c);
        }
    }
    let tail_failures = failing_indices.iter().filter(|&&n| n >= horizon).count() as u64;
    let verdict = if tail_failures == 0 {
        NicenessVerdict::Supported {
            failing_initial_segment: failing_indices
                .iter()
                .max()
                .map(|&n| n as usize + 1)
                .unwrap_or(0),
        }
    } else if tail_failures == horizon && failing.len() as u64 >= horizon {
        NicenessVerdict::Refuted
    } else {
        NicenessVerdict::Inconclusive
    };
    Ok(NicenessReport {
        verdict,
        spec: spec.clone(),
        open_set: u.clone(),
        eps: eps.clone(),
        horizon,
        examined,
        failing,
    })
}

/// Exact φ(U) for the supported (spec, character, open set) combinations.
fn character_image(
    spec: &GroupSpec,
    c: &Character,
    u: &OpenSet,
) -> Result<ImageSet, PartitionError> {
    match (spec, c, u) {
        (GroupSpec::Circle, Character::Circle { exponent }, OpenSet::Arc { center, radius }) => {
            if exponent.is_zero() {
                return Ok(ImageSet::Singleton(Angle::zero()));
            }
            let mag = BigRational::from_integer(exponent.abs());
            let half = radius * &mag;
            if half >= BigRational::new(BigInt::one(), BigInt::from(2)) {
                // the image wraps the whole circle
                Ok(ImageSet::Arc {
                    center: Angle::zero(),
                    half_length: BigRational::new(BigInt::one(), BigInt::from(2)),
                })
            } else {
                Ok(ImageSet::Arc {
                    center: center.scale_int(exponent),
                    half_length: half,
                })
            }
        }
        (
            GroupSpec::ProductFixedPrime { p },
            Character::Product { support },
            OpenSet::Cylinder { fixes },
        ) => {
            let fixed: BTreeMap<usize, u64> = fixes.iter().copied().collect();
            let mut offset = BigRational::zero();
            let mut free = false;
            for (&idx, &res) in support {
                match fixed.get(&idx) {
                    Some(&v) => {
                        offset += BigRational::new(
                            BigInt::from(res) * BigInt::from(v % p),
                            BigInt::from(*p),
                        )
                    }
                    None => free = true,
                }
            }
            let offset = Angle::new(offset);
            if free {
                Ok(ImageSet::Coset {
                    order: BigInt::from(*p),
                    offset,
                })
            } else {
                Ok(ImageSet::Singleton(offset))
            }
        }
        (
            GroupSpec::ProductDistinctPrimes { primes },
            Character::Product { support },
            OpenSet::Cylinder { fixes },
        ) => {
            let fixed: BTreeMap<usize, u64> = fixes.iter().copied().collect();
            let mut offset = BigRational::zero();
            let mut order = BigInt::one();
            for (&idx, &res) in support {
                let p = primes.get(idx);
                match fixed.get(&idx) {
                    Some(&v) => {
                        offset += BigRational::new(
                            BigInt::from(res) * BigInt::from(v % p),
                            BigInt::from(p),
                        )
                    }
                    None => order *= BigInt::from(p),
                }
            }
            let offset = Angle::new(offset);
            if order.is_one() {
                Ok(ImageSet::Singleton(offset))
            } else {
                Ok(ImageSet::Coset { order, offset })
            }
        }
        (
            GroupSpec::PAdic { p },
            Character::PAdic { numerator, level },
            OpenSet::Cylinder { fixes },
        ) => {
            if numerator.is_zero() {
                return Ok(ImageSet::Singleton(Angle::zero()));
            }
            let fixed: BTreeMap<usize, u64> = fixes.iter().copied().collect();
            let k = *level;
            let mut free_min: Option<u32> = None;
            let mut x_fixed = BigInt::zero();
            for d in 0..k {
                match fixed.get(&(d as usize)) {
                    Some(&v) => {
                        x_fixed += BigInt::from(v % p) * BigInt::from(*p).pow(d);
                    }
                    None => {
                        if free_min.is_none() {
                            free_min = Some(d);
                        }
                    }
                }
            }
            let pk = BigInt::from(*p).pow(k);
            let offset = Angle::new(BigRational::new(numerator * x_fixed, pk));
            match free_min {
                None => Ok(ImageSet::Singleton(offset)),
                Some(d) => Ok(ImageSet::Coset {
                    order: BigInt::from(*p).pow(k - d),
                    offset,
                }),
            }
        }
        (
            GroupSpec::Z4Z2Counterexample,
            Character::Z4Z2 { c: cc, support },
            OpenSet::Z4Z2Cell { z4, fixes },
        ) => {
            let fixed: BTreeMap<usize, u64> = fixes.iter().copied().collect();
            let mut offset = BigRational::zero();
            let mut order = BigInt::one();
            match z4 {
                Some(zv) => {
                    offset += BigRational::new(
                        BigInt::from(*cc as u64 * (*zv as u64 % 4)),
                        BigInt::from(4),
                    );
                }
                None => {
                    // free Z₄ part contributes the subgroup generated by c/4
                    let g = num::integer::gcd(*cc as u64, 4);
                    order = order.lcm(&BigInt::from(4 / g));
                }
            }
            let mut free_binary = false;
            for &idx in support {
                match fixed.get(&idx) {
                    Some(&v) => {
                        offset += BigRational::new(BigInt::from(v % 2), BigInt::from(2));
                    }
                    None => free_binary = true,
                }
            }
            if free_binary {
                order = order.lcm(&BigInt::from(2));
            }
            let offset = Angle::new(offset);
            if order.is_one() {
                Ok(ImageSet::Singleton(offset))
            } else {
                Ok(ImageSet::Coset { order, offset })
            }
        }
        _ => Err(PartitionError::Unsupported(format!(
            "open set {u:?} does not match {spec}"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groups::Point;

    fn r(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    fn z2w() -> GroupSpec {
        GroupSpec::fixed_prime(2).unwrap()
    }

    #[test]
    fn depth_zero_plan_is_single_identity_block() {
        for spec in [
            GroupSpec::circle(),
            z2w(),
            GroupSpec::distinct_primes(),
            GroupSpec::padic(2).unwrap(),
        ] {
            let plan = build_nice_partition(&spec, 0).unwrap();
            assert_eq!(plan.blocks.len(), 1);
            assert_eq!(plan.blocks[0].members[0], Character::identity(&spec));
        }
    }

    #[test]
    fn z4z2_has_no_nice_partition() {
        assert!(matches!(
            build_nice_partition(&GroupSpec::z4z2(), 3),
            Err(PartitionError::NotNice(_))
        ));
    }

    #[test]
    fn blocks_partition_the_enumeration_prefix() {
        for spec in [
            GroupSpec::circle(),
            z2w(),
            GroupSpec::fixed_prime(3).unwrap(),
            GroupSpec::distinct_primes(),
            GroupSpec::padic(2).unwrap(),
        ] {
            let plan = build_nice_partition(&spec, 6).unwrap();
            for n in 0..plan.horizon {
                let c = character_by_index(&spec, n);
                let hits = plan
                    .blocks
                    .iter()
                    .filter(|b| b.descriptor.contains(&c))
                    .count();
                assert!(hits <= 1, "{spec}: {c} sits in {hits} blocks");
                // characters beyond the deepest block's range may be unassigned
                if hits == 1 {
                    assert!(plan.block_of(&c).is_some());
                }
            }
            for b in &plan.blocks {
                assert!(!b.members.is_empty());
                for m in &b.members {
                    assert!(b.descriptor.contains(m) || (b.index == 0 && m.is_identity()));
                }
            }
        }
    }

    #[test]
    fn rho_vanishes_on_equal_points() {
        let plan = build_nice_partition(&z2w(), 4).unwrap();
        let x = haar_sample(&z2w(), 5, 64);
        let rho = rho_j(&x, &x, &plan, 3, 64).unwrap();
        assert!(rho.hi.is_zero());
    }

    #[test]
    fn rho_sees_only_base_metric_for_invisible_coordinates() {
        // x, y differ at coordinate 1 and at a coordinate no block <= j sees
        let spec = z2w();
        let plan = build_nice_partition(&spec, 4).unwrap();
        let x = Point::from_prefix(&spec, vec![0, 0], 0).unwrap();
        let far = 40usize;
        let y = Point::from_prefix(&spec, vec![0, 1], 0)
            .unwrap()
            .with_coord(far, 1)
            .unwrap();
        // j = 0: only the identity block is visible, so ρ_0 = base = 1/2
        let rho = rho_j(&x, &y, &plan, 0, 64).unwrap();
        assert_eq!(rho.lo, r(1, 2));
        assert_eq!(rho.hi, r(1, 2));
    }

    #[test]
    fn rho_adds_antipodal_chord_for_visible_character() {
        // handcrafted plan whose Φ_0 holds χ_0, so ρ_0 sees the flip exactly
        let spec = z2w();
        let mut plan = build_nice_partition(&spec, 2).unwrap();
        plan.blocks[0]
            .members
            .push(Character::coordinate(&spec, 0, 1).unwrap());
        let x = Point::from_prefix(&spec, vec![0, 0], 0).unwrap();
        let y = Point::from_prefix(&spec, vec![1, 0], 0).unwrap();
        let rho = rho_j(&x, &y, &plan, 0, 64).unwrap();
        // base 1 (first differing coordinate 0) plus chord 2
        assert_eq!(rho.lo, r(3, 1));
        assert_eq!(rho.hi, r(3, 1));
    }

    #[test]
    fn rho_monotone_in_j() {
        let spec = z2w();
        let plan = build_nice_partition(&spec, 6).unwrap();
        let x = haar_sample(&spec, 1, 64);
        let y = haar_sample(&spec, 2, 64);
        let mut prev = BigRational::zero();
        for j in 0..=6 {
            let rho = rho_j(&x, &y, &plan, j, 64).unwrap();
            assert!(rho.hi >= prev);
            prev = rho.hi;
        }
    }

    #[test]
    fn witness_exact_on_fixed_prime() {
        let spec = z2w();
        let plan = build_nice_partition(&spec, 8).unwrap();
        for (j, b) in [(0usize, 2usize), (1, 4), (3, 8), (2, 5)] {
            let phi = plan.blocks[b].members[0].clone();
            let x = haar_sample(&spec, 7 + j as u64, 64);
            let z = Angle::from_frac(1, 2);
            let w = verify_partition_condition(&plan, j, &phi, &x, &z, 16).unwrap();
            assert!(w.exact_hit, "j={j} b={b}");
            assert!(w.chord_bound.is_zero());
            assert!(w.rho_bound < w.rho_requirement);
            assert_eq!(evaluate(&phi, &w.point).unwrap(), z);
        }
    }

    #[test]
    fn witness_trivial_when_target_already_met() {
        let spec = z2w();
        let plan = build_nice_partition(&spec, 4).unwrap();
        let phi = plan.blocks[4].members[0].clone();
        let x = spec.identity_point();
        let z = evaluate(&phi, &x).unwrap();
        let w = verify_partition_condition(&plan, 2, &phi, &x, &z, 16).unwrap();
        assert_eq!(w.point, x);
        assert!(w.rho_bound.is_zero() && w.chord_bound.is_zero());
    }

    #[test]
    fn witness_on_circle_solves_the_congruence() {
        let plan = build_nice_partition(&GroupSpec::circle(), 8).unwrap();
        let phi = plan.blocks[6].members[0].clone();
        let x = Point::circle(Angle::from_frac(2, 7));
        let z = Angle::from_frac(3, 11);
        let w = verify_partition_condition(&plan, 4, &phi, &x, &z, 64).unwrap();
        assert!(w.exact_hit);
        assert_eq!(evaluate(&phi, &w.point).unwrap(), z);
        assert!(w.rho_bound < w.rho_requirement);
    }

    #[test]
    fn witness_on_padic_reaches_grid_targets() {
        let spec = GroupSpec::padic(2).unwrap();
        let plan = build_nice_partition(&spec, 6).unwrap();
        let phi = plan.blocks[5].members[0].clone();
        let x = haar_sample(&spec, 3, 64);
        // an exactly reachable dyadic target
        let z = Angle::from_frac(1, 4);
        let w = verify_partition_condition(&plan, 3, &phi, &x, &z, 16).unwrap();
        assert!(w.exact_hit);
        assert_eq!(evaluate(&phi, &w.point).unwrap(), z);
    }

    #[test]
    fn witness_rejects_blocks_too_low() {
        let spec = z2w();
        let plan = build_nice_partition(&spec, 6).unwrap();
        let phi = plan.blocks[2].members[0].clone();
        let x = spec.identity_point();
        let z = Angle::from_frac(1, 2);
        assert!(matches!(
            verify_partition_condition(&plan, 2, &phi, &x, &z, 16),
            Err(PartitionError::InstanceOutOfScope(_))
        ));
    }

    #[test]
    fn sampled_witnesses_succeed_everywhere_on_coordinate_kinds() {
        // 100% success over a grid of sampled instances
        for spec in [z2w(), GroupSpec::fixed_prime(3).unwrap()] {
            let plan = build_nice_partition(&spec, 9).unwrap();
            let range = match spec.value_range() {
                ValueRange::Roots(m) => m,
                _ => unreachable!(),
            };
            let mut total = 0;
            for b in 2..=9usize {
                for j in 0..=(b - 2) {
                    let phi = plan.blocks[b].members[0].clone();
                    for seed in 0..4u64 {
                        let x = haar_sample(&spec, seed, 64);
                        for zk in 0..range {
                            let z = Angle::from_frac(zk as i64, range as i64);
                            let w = verify_partition_condition(&plan, j, &phi, &x, &z, 16)
                                .expect("structural witness");
                            assert!(w.exact_hit);
                            total += 1;
                        }
                    }
                }
            }
            assert!(total > 100);
        }
    }

    #[test]
    fn thin_selection_examples() {
        let plan = build_nice_partition(&z2w(), 12).unwrap();
        let thin = thin_select(&plan, 3, OffsetRule::FirstInBlock).unwrap();
        let blocks: Vec<usize> = (0..thin.len()).map(|n| thin.block_index(n)).collect();
        assert_eq!(blocks, vec![0, 3, 6, 9, 12]);
        for w in blocks.windows(2) {
            assert!(w[1] >= w[0] + 2);
        }
        let thin2 = thin_select(&plan, 2, OffsetRule::FirstInBlock).unwrap();
        let blocks2: Vec<usize> = (0..thin2.len()).map(|n| thin2.block_index(n)).collect();
        assert_eq!(blocks2, vec![0, 2, 4, 6, 8, 10, 12]);
        // determinism
        let again = thin_select(&plan, 3, OffsetRule::FirstInBlock).unwrap();
        assert_eq!(thin.entries(), again.entries());
        assert!(thin_select(&plan, 1, OffsetRule::FirstInBlock).is_err());
    }

    #[test]
    fn niceness_refutes_the_counterexample() {
        // U = {x = i}: every character image is {±i^c} or a point
        let u = OpenSet::Z4Z2Cell {
            z4: Some(1),
            fixes: vec![],
        };
        let rep = check_niceness(&GroupSpec::z4z2(), &u, &r(1, 1), 50).unwrap();
        assert_eq!(rep.verdict, NicenessVerdict::Refuted);
        assert!(rep.failing.len() >= 50);
        // smaller eps and horizons refute as well
        for eps in [r(1, 2), r(9, 10), r(1, 1)] {
            for h in [10u64, 25] {
                let rep = check_niceness(&GroupSpec::z4z2(), &u, &eps, h).unwrap();
                assert_eq!(rep.verdict, NicenessVerdict::Refuted, "eps={eps} h={h}");
            }
        }
    }

    #[test]
    fn niceness_supports_the_circle_arc() {
        let u = OpenSet::Arc {
            center: Angle::zero(),
            radius: r(1, 20), // arc of length 1/10
        };
        let rep = check_niceness(&GroupSpec::circle(), &u, &r(1, 2), 50).unwrap();
        match rep.verdict {
            NicenessVerdict::Supported {
                failing_initial_segment,
            } => assert!(failing_initial_segment <= 20),
            other => panic!("expected support, got {other:?}"),
        }
    }

    #[test]
    fn niceness_supports_binary_and_ternary_cylinders() {
        for p in [2u64, 3] {
            let spec = GroupSpec::fixed_prime(p).unwrap();
            let u = OpenSet::Cylinder {
                fixes: vec![(0, 1 % p)],
            };
            let rep = check_niceness(&spec, &u, &r(1, 2), 50).unwrap();
            match rep.verdict {
                NicenessVerdict::Supported {
                    failing_initial_segment,
                } => {
                    // only characters supported inside the fixed coordinate fail
                    assert!(failing_initial_segment <= p as usize);
                }
                other => panic!("expected support for p={p}, got {other:?}"),
            }
        }
    }

    #[test]
    fn niceness_padic_cylinder_supported() {
        let spec = GroupSpec::padic(2).unwrap();
        let u = OpenSet::Cylinder {
            fixes: vec![(0, 1)],
        };
        let rep = check_niceness(&spec, &u, &r(1, 2), 40).unwrap();
        assert!(matches!(rep.verdict, NicenessVerdict::Supported { .. }));
    }
}
