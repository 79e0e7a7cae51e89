//! Neural estimator, hard decisions and likelihood-based baselines.

mod likelihood;
mod neural;

pub use likelihood::{
    complex_gaussian_log_density, exact_map_oracle, isotropic_log_density, ml_binary_log_scores, ml_decode_binary,
    BinaryMlDecoder, DecisionRule, ORACLE_LIMIT,
};
pub use neural::{decoder_forward, hard_estimate, record_logits, DecoderParams, DecoderVars, HIDDEN_UNITS};
