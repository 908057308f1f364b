// SPDX-License-Identifier: Apache-2.0

//! Logically constrained equations over an underlying theory model.

pub mod algebra;
pub mod cli;
pub mod lia;
pub mod models;
pub mod proofs;
pub mod rewriting;
pub mod sexp;
pub mod smt;
pub mod syntax;
pub mod terms;
