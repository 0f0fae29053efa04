//! Numerical verification toolkit for projective symmetries of metrics in
//! dimensions two and three.
//!
//! The library evaluates metrics and vector fields written in a small
//! expression DSL ([`expr`]), differentiates them exactly with second-order
//! forward-mode duals ([`autodiff`]), and builds the classical objects of
//! projective differential geometry on top: Christoffel symbols and curvature
//! ([`geometry`]), the projective connection together with its geodesics and
//! the jet-prolongation symmetry test ([`projective`]), the metrisability
//! linear system, Benenti tensors and the induced Lie action on the solution
//! space ([`metrisability`]), and the Riccati-type ODE families underlying the
//! classified metrics ([`ode_families`]).
//!
//! A registry of classified metric families with their claimed projective
//! generators lives in [`catalog`]; every claim is verified numerically at
//! deterministically sampled points.

// Tensor algebra reads most clearly with explicit index loops that mirror the
// summation convention, and the richly-typed autodiff results are local to a
// handful of call sites.
#![allow(clippy::needless_range_loop, clippy::type_complexity)]

pub mod autodiff;
pub mod catalog;
pub mod cli;
pub mod expr;
pub mod geometry;
pub mod metrisability;
pub mod ode_families;
pub mod projective;
