//! Pricing of European and American puts under rough Bergomi stochastic
//! volatility with a deep, per-time-step backward regression scheme.
//!
//! The crate is organised bottom-up:
//!
//! * [`paths`] simulates the driving Brownian motion `W`, the
//!   Riemann-Liouville fractional Brownian motion `Ŵ`, the independent
//!   Brownian motion `B` and the variance `V` exactly on a uniform grid.
//! * [`forward`] runs the Euler scheme for the discounted log-price and
//!   defines the put payoffs.
//! * [`nn`] is a small dense network library (sigmoid hidden layers, identity
//!   output, reverse-mode gradients, Adam).
//! * [`solver`] trains one triple of networks per time step, backwards in
//!   time, for the European linear driver, the American penalty driver and
//!   the American reflection scheme.
//! * [`reference`] holds independent oracle pricers (Monte Carlo,
//!   Black-Scholes, Cox-Ross-Rubinstein).
//! * [`study`] runs the path-dependence and refinement experiments, and
//!   [`report`] writes CSV output.

pub mod error;
pub mod forward;
pub mod model;
pub mod nn;
pub mod paths;
pub mod reference;
pub mod report;
pub mod rng;
pub mod solver;
pub mod stats;
pub mod study;

pub use error::{Error, Result};
pub use forward::{PayoffKind, PayoffSpec};
pub use model::ModelParams;
pub use paths::{GridSpec, PathBundle, PathSampler};
pub use solver::{Scheme, SchemeConfig, SolveResult};
