#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod experiment;
pub mod fem;
pub mod irgnm;
pub mod par;
pub mod qp;
pub mod radius;
pub mod semilinear;
pub mod sparse;
