//! Compiles and runs every Rust snippet in the guide under `book/` as a
//! doc-test, so the guide cannot drift from the library.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/frames.md")]
pub mod frames {}

#[doc = include_str!("../../../book/src/sensing.md")]
pub mod sensing {}

#[doc = include_str!("../../../book/src/barrier.md")]
pub mod barrier {}

#[doc = include_str!("../../../book/src/admittance.md")]
pub mod admittance {}

#[doc = include_str!("../../../book/src/simulator.md")]
pub mod simulator {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
