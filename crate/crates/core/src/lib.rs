//! Numerical verifier for first- and second-order necessary optimality
//! conditions of constrained multiobjective programs with C^{1,1} data.
//!
//! Problems have the form
//!
//! ```text
//! minimize F(x) = (f_1(x), …, f_m(x))   subject to   H(x) = 0,  G(x) ∈ Q
//! ```
//!
//! with every function written in a small expression language ([`expr`],
//! [`sexpr`]) and `Q` polyhedral. [`certify::verdict`] searches for
//! Fritz-John type multipliers at a candidate point and along critical
//! directions; a direction where no multiplier exists refutes weak Pareto
//! efficiency.

pub mod certify;
pub mod cones;
pub mod corpus;
pub mod expr;
pub mod linalg;
pub mod lp;
pub mod oracle;
pub mod problem;
pub mod raycalc;
pub mod sexpr;
pub mod subdiff;
