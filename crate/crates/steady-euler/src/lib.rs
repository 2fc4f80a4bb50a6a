//! Steady solutions of the incompressible Euler equations on the round
//! 3-sphere, hyperbolic 3-space, the Heisenberg group and `SL(2, R)`, with a
//! numerical suite that certifies their defining properties: vanishing
//! divergence, the steady Euler property, curl eigenvalues, conservation of
//! speed and Bernoulli functions along the flow, isometric equivalences, and
//! C^k closeness of bifurcating families.
//!
//! The computational core is a forward-mode jet engine ([`jets`]) that
//! differentiates chart expressions exactly to rounding. Two independent
//! calculus pathways are built on top of it: coordinate charts with their
//! Levi-Civita connection ([`charts`]) and adapted orthonormal frames with
//! structure functions ([`frames`]). Solution families live in
//! [`families`], ambient isometries of the 3-sphere in [`isometries`], the
//! residual checks in [`verify`] and flow-line integration in [`dynamics`].

pub mod charts;
pub mod cli;
pub mod dynamics;
pub mod error;
pub mod families;
pub mod frames;
pub mod isometries;
pub mod jets;
pub mod profile;
pub mod verify;

pub use error::{Error, Result};
