// Runs the code samples of the guide in `book/` as doc-tests.

#[doc = include_str!("../../../book/src/introduction.md")]
mod introduction {}
#[doc = include_str!("../../../book/src/quickstart.md")]
mod quickstart {}
#[doc = include_str!("../../../book/src/pipeline.md")]
mod pipeline {}
#[doc = include_str!("../../../book/src/ranking.md")]
mod ranking {}
#[doc = include_str!("../../../book/src/library.md")]
mod library {}
#[doc = include_str!("../../../book/src/cli.md")]
mod cli {}
#[doc = include_str!("../../../book/src/http.md")]
mod http {}
#[doc = include_str!("../../../book/src/evaluation.md")]
mod evaluation {}
#[doc = include_str!("../../../docs/data-formats.md")]
mod data_formats {}
