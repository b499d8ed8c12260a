//! Numerical building blocks: ODE integration, quadrature, polynomials and
//! finite differences.

#[allow(clippy::excessive_precision, clippy::unreadable_literal)]
mod dop853_tableau;
pub mod fd;
pub mod ode;
pub mod poly;
pub mod quadrature;
