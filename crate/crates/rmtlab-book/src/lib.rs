//! Doc-test shim for the book under `book/`.
//!
//! mdbook renders the chapters but cannot compile their code blocks against
//! this workspace, so each chapter is included here as a module's
//! documentation and `cargo test --doc` runs every snippet. One module per
//! chapter, so a failing snippet names the file it lives in. The book and
//! the tests can't drift: they are the same bytes.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/ensemble.md")]
pub mod ensemble {}

#[doc = include_str!("../../../book/src/kernels.md")]
pub mod kernels {}

#[doc = include_str!("../../../book/src/quadrature.md")]
pub mod quadrature {}

#[doc = include_str!("../../../book/src/moments.md")]
pub mod moments {}

#[doc = include_str!("../../../book/src/asymptotics.md")]
pub mod asymptotics {}

#[doc = include_str!("../../../book/src/harness.md")]
pub mod harness {}
