//! Regulation-triggered certainty-equivalence adaptive control.
//!
//! The crate simulates plants `ẋ = f(x,u) + g(x,u)θ` under a feedback that
//! uses a parameter estimate frozen between events. Events fire when a
//! Lyapunov function crosses a threshold or a dwell cap elapses, and each event
//! re-estimates `θ` by least squares over a moving window. Alongside the
//! simulator sit a runtime verifier for the closed-loop guarantees and a
//! Lie-derivative test of the parameter-observability condition that makes
//! identification finite-time.

#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::needless_range_loop,
    clippy::type_complexity,
    clippy::suspicious_arithmetic_impl
)]

pub mod error;
pub mod estimator;
pub mod executive;
pub mod integrator;
pub mod linalg;
pub mod models;
pub mod observability;
pub mod par;
pub mod polybridge;
pub mod poly;

pub use error::{Error, Result};
