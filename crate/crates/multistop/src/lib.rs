//! Numerical optimal stopping on finite scenario trees.
//!
//! The crate solves three nested problems:
//!
//! 1. **Single stopping** ([`snell`]): backward induction computes the value
//!    family of a nonnegative node reward; first-hitting rules of the contact
//!    set attain it and a `lambda`-relaxed family approximates it.
//! 2. **Double stopping** ([`double`]): a reward on ordered pairs of
//!    path-comparable nodes reduces to a single stopping problem over the
//!    new reward `max(u1, u2)` built from the two conditional one-stopping
//!    values; an optimal pair of rules is assembled constructively.
//! 3. **Exchange option with two exercise times** ([`exchange`]): the
//!    reduction specializes to closed-form one-leg values on a two-asset
//!    lognormal model, priced by dynamic programming on a recombining
//!    product lattice and validated by seeded Monte Carlo.
//!
//! Brute-force enumeration ([`oracle`]) and a randomized cross-check matrix
//! ([`verify`]) certify every engine output on small trees.
//!
//! All engines are pure functions of immutable inputs: results are
//! reproducible bit-for-bit across runs and thread counts.

pub mod double;
pub mod error;
pub mod exchange;
pub mod generators;
pub mod oracle;
mod seed;
pub mod snell;
pub mod tree;
pub mod verify;

pub use error::{Error, Result};
