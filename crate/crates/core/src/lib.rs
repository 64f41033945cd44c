//! Numerical laboratory for the non-abelian Hodge correspondence on a
//! compact genus-2 surface.
//!
//! The crate is organised by subject:
//!
//! - [`hyp`]: Möbius maps, the regular-octagon surface group, word balls and
//!   continuation paths in the upper half-plane.
//! - [`forms`]: jet providers and truncated Poincaré series (k-differentials).
//! - [`oper`]: Schwarzian calculus, oper ODE families, monodromy by analytic
//!   continuation, `w_k` covariants and Eichler cocycles.
//! - [`rep`]: representation utilities for `SL_n(C)`.
//! - [`hn`]: slopes, Harder–Narasimhan types and dominance order.
//! - [`harmonic`]: equivariant meshes and discrete harmonic maps into the
//!   symmetric space of positive hermitian matrices.
//! - [`gauge`]: discrete curvature, moment maps, the Yang–Mills–Higgs
//!   functional and flow, the Hitchin map.
//!
//! Data-parallel loops go through [`par`]; building without the default
//! `parallel` feature gives a sequential build with bit-identical results.

pub mod error;
pub mod forms;
pub mod gauge;
pub mod harmonic;
pub mod hn;
pub mod hyp;
pub mod jets;
pub mod json;
pub mod linalg;
pub mod oper;
pub mod par;
pub mod rep;
pub mod suite;

pub use error::{Error, Result};
pub use num_complex::Complex64;
