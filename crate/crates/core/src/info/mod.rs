//! Information-theoretic measurements used across the crate. Everything is
//! in bits.

pub mod causal;
pub mod coupling;
pub mod entropy;
pub mod graph;
pub mod semantic;

pub use causal::{causal_lower_bound, infer_causal_direction, CausalDirection, DirectionScores};
pub use coupling::{mec_brute_force, min_entropy_coupling, CouplingTable};
pub use entropy::{
    conditional_entropy, entropy_of, mutual_information, shannon_entropy, smoothed_entropy, Dist,
};
pub use graph::{jacobi_eigenvalues, von_neumann_entropy, ProtocolGraph};
pub use semantic::{binary_entropy, semantic_entropy};
