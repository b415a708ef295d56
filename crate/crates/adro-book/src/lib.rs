//! Runs every code snippet in `book/` as a doc-test, one module per chapter
//! so a failure names the chapter it came from. `cargo test --doc -p
//! adro-book` (or a plain workspace `cargo test`) keeps the guide honest.

#[doc = include_str!("../../../book/src/overview.md")]
pub mod overview {}

#[doc = include_str!("../../../book/src/models.md")]
pub mod models {}

#[doc = include_str!("../../../book/src/robust_loss_chapter.md")]
pub mod robust_loss {}

#[doc = include_str!("../../../book/src/fitting.md")]
pub mod fitting {}

#[doc = include_str!("../../../book/src/adjustment.md")]
pub mod adjustment {}

#[doc = include_str!("../../../book/src/simulation.md")]
pub mod simulation {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
