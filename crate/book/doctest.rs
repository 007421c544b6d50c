// mdbook cannot run listings that depend on workspace crates, so every
// chapter is pulled in as a module doc and `cargo test --doc` runs them.

#[doc = include_str!("src/intro.md")]
pub mod intro {}
#[doc = include_str!("src/fields.md")]
pub mod fields {}
#[doc = include_str!("src/navier_stokes.md")]
pub mod navier_stokes {}
#[doc = include_str!("src/flows.md")]
pub mod flows {}
#[doc = include_str!("src/action.md")]
pub mod action {}
#[doc = include_str!("src/noether.md")]
pub mod noether {}
#[doc = include_str!("src/spde.md")]
pub mod spde {}
#[doc = include_str!("src/cli.md")]
pub mod cli {}
