#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod dsl;
pub mod jets;
pub mod tensor;
pub mod riemann;
pub mod moebius;
pub mod catalog;
pub mod verify;
