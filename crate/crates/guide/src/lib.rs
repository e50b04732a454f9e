//! The book chapters, compiled so that `cargo test` runs their snippets.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/jets.md")]
pub mod jets {}
#[doc = include_str!("../../../book/src/connections.md")]
pub mod connections {}
#[doc = include_str!("../../../book/src/total-space.md")]
pub mod total_space {}
#[doc = include_str!("../../../book/src/jet-prolongation.md")]
pub mod jet_prolongation {}
#[doc = include_str!("../../../book/src/naturality.md")]
pub mod naturality {}
#[doc = include_str!("../../../book/src/ranks.md")]
pub mod ranks {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
#[doc = include_str!("../../../README.md")]
pub mod readme {}
