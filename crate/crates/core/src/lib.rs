pub mod error;
pub mod fockspace;
pub mod optimizer;
pub mod protocols;
pub mod pulses;
pub mod report;
pub mod schedule;
pub mod scheme;
pub mod takagi;
pub mod witnesses;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/ensemble.md")]
    mod ensemble {}
    #[doc = include_str!("../../../book/src/pulses.md")]
    mod pulses {}
    #[doc = include_str!("../../../book/src/takagi.md")]
    mod takagi {}
    #[doc = include_str!("../../../book/src/preparation.md")]
    mod preparation {}
    #[doc = include_str!("../../../book/src/phase-gates.md")]
    mod phase_gates {}
    #[doc = include_str!("../../../book/src/braiding.md")]
    mod braiding {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
