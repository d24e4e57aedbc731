#![allow(clippy::neg_cmp_op_on_partial_ord)] // negations are deliberate NaN rejections

pub mod cf;
pub mod constraints;
pub mod lift;
pub mod matching;
pub mod mc;
pub mod steer;
