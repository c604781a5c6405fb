//! Exact-arithmetic toolkit for pointwise limits of character sequences on
//! compact abelian groups.
//!
//! The crate models the stock second-countable compact groups (the circle,
//! products of cyclic groups, powers of a fixed cyclic group, the p-adic
//! integers) together with their countable duals, and builds the finite-stage
//! objects that witness convergence phenomena: density-filtered index sets,
//! nice partitions of the dual, thin character sequences, split/dense/evasion
//! witness points with re-checkable certificates, and seeded Monte Carlo
//! experiments for the Haar-measure statements.

pub mod circle;
pub mod cli;
pub mod density;
pub mod enclosure;
pub mod groups;
pub mod measure;
pub mod partitions;
pub mod witnesses;

pub use circle::{Angle, RootsOfUnity, ValueRange};
pub use groups::{Character, GroupSpec, Point};
