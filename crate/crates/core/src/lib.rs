//! Minimal-vector laboratory on finite-dimensional `l_p` spaces.

pub mod banach;
pub mod hyperinv;
pub mod lemma_suite;
pub mod minvec;
pub mod operators;
