// mdbook cannot run Rust snippets against workspace crates, so each chapter is
// pulled in as the doc comment of an empty module and `cargo test --doc` runs
// its code blocks. One module per chapter keeps failures traceable.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/probing.md")]
pub mod probing {}
#[doc = include_str!("../../../book/src/sampler.md")]
pub mod sampler {}
#[doc = include_str!("../../../book/src/analytic-lr.md")]
pub mod analytic_lr {}
#[doc = include_str!("../../../book/src/latent.md")]
pub mod latent {}
#[doc = include_str!("../../../book/src/trees.md")]
pub mod trees {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
