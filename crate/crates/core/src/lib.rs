//! Contract-menu design, auditing and simulation for federated learning markets
//! where early ("critical") training rounds matter more than later ones.
//!
//! The crate is organized bottom-up:
//!
//! - [`market`]: validated parameters, client types, menus.
//! - [`economics`]: closed-form payoffs.
//! - [`solver`]: optimal menus under complete and incomplete information.
//! - [`feasibility`]: independent auditor for any menu.
//! - [`benchmarks`]: time-blind contracts and linear pricing.
//! - [`sim`]: multi-round simulation with cohort scheduling.
//! - [`ledger`]: hash-chained settlement log.
//! - [`cli`]: experiment harness behind the `r3t` binary.

pub mod benchmarks;
pub mod cli;
pub mod economics;
pub mod error;
pub mod feasibility;
pub mod ledger;
pub mod market;
pub mod sim;
pub mod solver;

pub use error::{Error, Result, Violation};
pub use market::{
    validate_config, ClientProfile, ContractItem, ContractMenu, InfoCase, MarketConfig,
    MarketParams, Mechanism, TimeFrame, TypeVector,
};

/// Absolute tolerance for every equality and inequality check.
pub const TOL: f64 = 1e-9;
