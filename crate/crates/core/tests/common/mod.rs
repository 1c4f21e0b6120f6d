#![allow(clippy::needless_range_loop)]
#![allow(dead_code)]

pub mod fixtures;
pub mod lp_oracle;
pub mod suite;
