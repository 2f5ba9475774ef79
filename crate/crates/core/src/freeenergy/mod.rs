//! Coarse-grained free energies and the quantities built from them.

pub mod functional;
pub mod interaction;
pub mod entropy;
pub mod enumerate;
pub mod epsilon;
pub mod peierls;
pub mod profile;
pub mod surgery;

pub use enumerate::{constrained_log_z, eval_g, identity_gap, hat_h_enumerate, HatHBucket, HatHTable};
pub use functional::{eval_f, eval_f_ab, eval_f_real, f_terms, grid_project, grid_value, BoundaryProfile, FTerms, ProfileContext};
pub use profile::{decay_fit, j_tilde, j_tilde_base_blocks, j_tilde_value, kink_cost, phi_profile, relax, PhiResult};
pub use surgery::{surgery_profiles, Surgery, SurgeryTarget};
pub use epsilon::{block_cost, epsilon_a_scaling, epsilon_ab, EpsilonResult};
pub use peierls::{element_weight, entropy_condition, peierls_weight, peierls_weight_damped, peierls_weight_elements, PeierlsParams};
pub use interaction::{block_interaction_diff, InteractionDiff};
pub use entropy::{entropy_partial_sum, EntropySum, ENUMERATION_BUDGET};
