//! Stochastic Hamiltonian systems driven by small, time-periodic additive
//! noise: simulation, Onsager-Machlup actions, most probable paths and Monte
//! Carlo estimators for tube, small-ball and torus-stability probabilities.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod diffusion;
pub mod error;
pub mod grid;
pub mod mc;
pub mod integrate;
pub mod model;
pub mod mpp;
pub mod noise;
pub mod path;
pub mod pathspace;
pub mod state;

pub use diffusion::{ChannelSchedule, DiffusionSchedule};
pub use error::{Error, Result};
pub use grid::TimeGrid;
pub use model::HamiltonianModel;
pub use noise::NoiseStream;
pub use path::DiscretePath;
pub use state::PhaseState;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/models.md")]
    mod models {}
    #[doc = include_str!("../../../book/src/integrators.md")]
    mod integrators {}
    #[doc = include_str!("../../../book/src/onsager-machlup.md")]
    mod onsager_machlup {}
    #[doc = include_str!("../../../book/src/most-probable-path.md")]
    mod most_probable_path {}
    #[doc = include_str!("../../../book/src/large-deviations.md")]
    mod large_deviations {}
    #[doc = include_str!("../../../book/src/small-balls.md")]
    mod small_balls {}
    #[doc = include_str!("../../../book/src/tori.md")]
    mod tori {}
    #[doc = include_str!("../../../book/src/density.md")]
    mod density {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
