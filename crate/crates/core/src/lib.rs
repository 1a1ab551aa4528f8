//! Particle simulation and bound certification for the one-dimensional
//! diatomic Vlasov–Poisson system with singular oscillatory bonds.
//!
//! A molecule is a phase point `z = (x, v, ω, η)`: center of mass,
//! translational velocity, bond half-length in `(0, ε)` and bond rate.
//! Characteristics obey
//!
//! ```text
//! X' = V,   V' = F⁺(X, Ω),   Ω' = H,   H' = F⁻(X, Ω) + F^h(Ω)
//! ```
//!
//! with `F^±(x, ω) = F(x + ω) ± F(x − ω)` built from the self-consistent
//! step field `F` and the bond force `F^h`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod cli;
pub mod datum;
pub mod field;
pub mod hooke;
pub mod io;
pub mod picard;
pub mod simulator;
pub mod trajectory;
