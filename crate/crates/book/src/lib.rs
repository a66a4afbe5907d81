//! Runs the code blocks of the guide in `book/src` as doc-tests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/accounting.md")]
pub mod accounting {}

#[doc = include_str!("../../../book/src/tree.md")]
pub mod tree {}

#[doc = include_str!("../../../book/src/known.md")]
pub mod known {}

#[doc = include_str!("../../../book/src/unknown.md")]
pub mod unknown {}

#[doc = include_str!("../../../book/src/topk.md")]
pub mod topk {}

#[doc = include_str!("../../../book/src/meta.md")]
pub mod meta {}

#[doc = include_str!("../../../book/src/verification.md")]
pub mod verification {}

#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}
