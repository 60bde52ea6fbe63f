//! Norms on discretized paths and the Onsager-Machlup action.

mod norms;
mod om;

pub use norms::{holder_norm, holder_norm_nodes, holder_stride, sup_norm, HolderConfig, HolderEstimate, EXACT_PAIR_NODES};
pub use om::{
    derivative_energy, euler_lagrange_residual, om_functional, om_gradient, rate_function, OMValue, DERIVATIVE_SCHEME,
    QUADRATURE,
};
pub(crate) use om::{derivative_stencil, node_derivative, OmSetup};
