//! Guide listings, compiled and run as doc-tests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/geometry.md")]
pub mod geometry {}
#[doc = include_str!("../../../book/src/cell-problems.md")]
pub mod cell_problems {}
#[doc = include_str!("../../../book/src/permeability.md")]
pub mod permeability {}
#[doc = include_str!("../../../book/src/darcy.md")]
pub mod darcy {}
#[doc = include_str!("../../../book/src/dns.md")]
pub mod dns {}
#[doc = include_str!("../../../book/src/unfolding.md")]
pub mod unfolding {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
