//! Statistical-thermodynamic analysis of economic systems with a conserved
//! quantity. A declared money function m(λ̄) determines an equilibrium density
//! ρ ∝ e^{-m/T}; the partition function Q(T, x̄) = ∫ e^{-m/T} dλ̄ then yields
//! the free money f = -T ln Q and from it every macro variable: entropy,
//! mean money, intensive variables, and heat capacity.
//!
//! - [`expr`]: parse and evaluate money functions given as text.
//! - [`quadrature`]: adaptive integration of Q and expectations on finite,
//!   semi-infinite, and infinite domains.
//! - [`catalog`]: closed forms for the analytically solvable families.
//! - [`thermo`]: numeric thermodynamic variables and consistency checks.
//! - [`phase`]: temperature scans for phase-transition candidates.
//! - [`exchange`]: kinetic Monte Carlo validation of the equilibrium premise.
//! - [`cli`]: command-line front end and file formats.

pub mod catalog;
pub mod cli;
pub mod exchange;
pub mod expr;
pub mod phase;
pub mod quadrature;
pub mod thermo;
