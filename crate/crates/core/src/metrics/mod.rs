//! Abduction fidelity and distributional scores.

mod cic;
mod ksg;
mod mmd;
mod scores;
mod validation;

pub use cic::{cic_score, delta_sre, delta_u};
pub use ksg::{digamma, ksg_cmi, KSG_NEIGHBOURS};
pub use mmd::{median_heuristic, mmd2_unbiased, mmd_permutation_test};
pub use scores::{
    cmi_score, kmd_score, prior_matching_diagnostic, CmiScore, EdgeScore, KmdScore, CMI_EPSILON,
};
pub use validation::{
    metric_validation_suite, ValidationModel, ValidationReport, ValidationRow,
    MODEL_B_DECODE_NOISE, MODEL_B_ENCODE_NOISE,
};
