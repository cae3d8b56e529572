//! Interconversion of time-dependent quadratic Schrödinger equations.
//!
//! Three classes of one-dimensional equations are modelled (natural units,
//! `ħ = m = 1`):
//!
//! * **TQ** – general quadratic Hamiltonians with a dilation term and a drift
//!   linear in `P`,
//! * **TM** – "time-dependent mass" equations, `f(t) P²/2` kinetic term,
//! * **TO** – time-dependent oscillators in a reparameterised time `t'`.
//!
//! A TQ equation is mapped to a TM equation by the unitary gauge
//! `R(μ, ν, κ) = exp(iμP) exp(iνD) exp(iκP²)` whose parameters solve a set of
//! coupled first-order ODEs ([`transforms::solve_gauge`]); a TM equation is
//! mapped to a TO equation by the change of time `t' − t₀' = ∫ f`
//! ([`transforms::time_map_from_f`]). The [`propagate`] module checks these
//! claims on actual wavefunctions.

pub mod algebra;
pub mod error;
pub mod examples;
pub mod propagate;
pub mod systems;
pub mod timefn;
pub mod transforms;

pub use error::{Error, Result};
