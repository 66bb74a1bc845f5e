//! The guide's chapters, embedded as documentation.
//!
//! mdBook cannot run a book's code blocks as tests, so each chapter from
//! `book/src/` is included here as a module's doc string; `cargo test --doc`
//! then compiles and executes every Rust block in the book, keeping the
//! prose and the library in lockstep.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/getting-started.md")]
pub mod getting_started {}

#[doc = include_str!("../../../book/src/front-ends.md")]
pub mod front_ends {}

#[doc = include_str!("../../../book/src/fusion.md")]
pub mod fusion {}

#[doc = include_str!("../../../book/src/losses.md")]
pub mod losses_chapter {}

#[doc = include_str!("../../../book/src/metrics.md")]
pub mod metrics_chapter {}

#[doc = include_str!("../../../book/src/training.md")]
pub mod training_chapter {}

#[doc = include_str!("../../../book/src/formats.md")]
pub mod formats {}

#[doc = include_str!("../../../book/src/recipe.md")]
pub mod recipe {}
