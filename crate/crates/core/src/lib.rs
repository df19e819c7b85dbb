#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cluster;
pub mod encoding;
pub mod numerics;
pub mod par;
pub mod problem;
pub mod solver;
pub mod straggler;
