//! Stability, hyperbolicity and small-delay robustness of linear delay systems
//! `u'(t) = B u(t) + Φ u_t` on `ℂⁿ`.

pub mod chebyshev;
pub mod cli;
mod contour;
pub mod criteria;
pub mod error;
pub mod linalg;
pub mod model;
pub mod resolvent;
pub mod roots;
pub mod simulator;
pub mod small_delay;

pub use error::{Error, Result};
