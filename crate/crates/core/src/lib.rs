//! Traveling fronts of the planar Allen-Cahn equation `Δu + c u_y = F'(u)`:
//! one-dimensional profiles, a moving-frame relaxation solver, level-set
//! asymptotics, identity diagnostics and the layer-interaction ODE.

pub mod config;
pub mod diagnostics;
pub mod error;
pub mod interp;
pub mod io;
pub mod layerdyn;
pub mod levelset;
pub mod ode;
pub mod pipeline;
pub mod potentials;
pub mod profiles1d;
pub mod quad;
pub mod run;
pub mod solver2d;
pub mod stats;

pub use error::{Error, Result};

/// The book chapters, compiled so their code blocks run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/potentials.md")]
    mod potentials {}
    #[doc = include_str!("../../../book/src/profiles.md")]
    mod profiles {}
    #[doc = include_str!("../../../book/src/energy.md")]
    mod energy {}
    #[doc = include_str!("../../../book/src/solver.md")]
    mod solver {}
    #[doc = include_str!("../../../book/src/levelsets.md")]
    mod levelsets {}
    #[doc = include_str!("../../../book/src/diagnostics.md")]
    mod diagnostics {}
    #[doc = include_str!("../../../book/src/layerdyn.md")]
    mod layerdyn {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/config-reference.md")]
    mod config_reference {}
}
