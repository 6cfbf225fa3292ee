//! Book chapters compiled as doctests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/time.md")]
pub mod time {}
#[doc = include_str!("../../../book/src/trails.md")]
pub mod trails {}
#[doc = include_str!("../../../book/src/bunny.md")]
pub mod bunny {}
#[doc = include_str!("../../../book/src/emergency.md")]
pub mod emergency {}
#[doc = include_str!("../../../book/src/parameters.md")]
pub mod parameters {}
#[doc = include_str!("../../../book/src/checking.md")]
pub mod checking {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
