#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod band;
pub mod cli;
pub mod domains;
pub mod eigensolve;
pub mod lattice;
pub mod linalg;
pub mod operator;
pub mod oracle;
pub mod potential;
pub mod scales;
pub mod schur;
pub mod verify;
