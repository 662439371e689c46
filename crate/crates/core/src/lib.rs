//! Incentive-aware hypothesis testing.
//!
//! A regulator approves a product when a p-value falls below a threshold
//! `τ`. A firm with a private prior pays `C` to run the trial and earns `R`
//! on approval, so it only runs trials it expects to profit from. This crate
//! turns that participation constraint into guarantees on approvals and
//! checks them three ways: closed-form bounds ([`bounds`]), exact posterior
//! computations for discrete priors ([`bayes`]), and a seeded simulator of
//! whole agent populations ([`sim`]).

pub mod bayes;
pub mod bounds;
pub mod cli;
pub mod model;
pub mod numerics;
pub mod sim;

pub use numerics::Probability;
