// Validation uses `!(x > 0.0)` on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod binder;
pub mod codec;
pub mod engine;
pub mod eval;
pub mod fixtures;
pub mod geo;
pub mod model;
pub mod ptg;
pub mod rank;
pub mod rerank;
pub mod search;
pub mod synth;

#[cfg(doctest)]
mod book;
