//! The book's chapters, one module each, so `cargo test --doc -p fee-guide`
//! compiles and runs every Rust listing in `book/src`. A failing doc-test
//! names the module, which names the chapter.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/dataset.md")]
pub mod dataset {}
#[doc = include_str!("../../../book/src/model.md")]
pub mod model {}
#[doc = include_str!("../../../book/src/metrics.md")]
pub mod metrics {}
#[doc = include_str!("../../../book/src/thresholds.md")]
pub mod thresholds {}
#[doc = include_str!("../../../book/src/whatif.md")]
pub mod whatif {}
#[doc = include_str!("../../../book/src/elicitation.md")]
pub mod elicitation {}
#[doc = include_str!("../../../book/src/service.md")]
pub mod service {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
