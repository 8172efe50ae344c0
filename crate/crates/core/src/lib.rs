//! Numerical toolkit for two-weight norm inequalities of the
//! Littlewood–Paley g-function on finite dyadic lattices.
//!
//! Weights are atomic measures on a lattice over a base cube. On top of
//! that the crate provides shifted dyadic grids, Poisson-type kernels,
//! weighted martingale expansions, the discrete g-function with its exact
//! operator norm, stopping trees, estimators for the A₂ / testing /
//! pivotal constants, the intrinsic square function with a finite Hölder
//! family, and a harness that runs corpora of weight pairs.

pub mod constants;
pub mod dyadic;
pub mod error;
pub mod gfun;
pub mod harness;
pub mod intrinsic;
pub mod kernels;
pub mod lattice;
pub mod rng;
pub mod stopping;
pub mod transform;

pub use dyadic::{DyadicCube, DyadicGrid, WhitneyCollection};
pub use error::{GwError, Result};

pub use gfun::{Quadrature, TransformKind};
pub use kernels::Generator;
pub use lattice::{Atom, GridFunction, LatticeSpec, Point, Weight};
