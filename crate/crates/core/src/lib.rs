#![allow(
    clippy::needless_range_loop,
    clippy::neg_cmp_op_on_partial_ord,
    clippy::too_many_arguments
)]

pub mod cli;
pub mod concentration;
pub mod decompose;
pub mod error;
pub mod information;
pub mod measures;
pub mod processes;
pub mod transport;

pub use error::{Error, Result};

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/introduction.md")]
pub mod book_introduction {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/measures.md")]
pub mod book_measures {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/information.md")]
pub mod book_information {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/transport.md")]
pub mod book_transport {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/concentration.md")]
pub mod book_concentration {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/decomposition.md")]
pub mod book_decomposition {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/processes.md")]
pub mod book_processes {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/cli.md")]
pub mod book_cli {}
#[cfg(doctest)]
#[doc = include_str!("../../../README.md")]
pub mod readme {}
