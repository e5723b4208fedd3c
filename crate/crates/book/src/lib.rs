//! Compiles and runs the code snippets of the guide in `book/` as doc-tests.
//! One module per chapter, so a failure names its chapter.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/populations.md")]
pub mod populations {}
#[doc = include_str!("../../../book/src/soft-tissue.md")]
pub mod soft_tissue {}
#[doc = include_str!("../../../book/src/photographs.md")]
pub mod photographs {}
#[doc = include_str!("../../../book/src/overlay.md")]
pub mod overlay {}
#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}
#[doc = include_str!("../../../book/src/command-line.md")]
pub mod command_line {}
