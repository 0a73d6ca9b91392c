//! Vocabulary-space attribution: logit lens, direct logit attribution, expert
//! contribution scores and the trigger-target experiment.

mod lens;
mod trigger_target;

pub use lens::{
    component_vector, contributions, dla, dla_logits, expert_contribution, expert_update, ln_linear, logit_lens,
    logit_lens_normalized, sequence_score, LensResult,
};
pub use trigger_target::{
    run_trigger_target, Aggregate, CaseError, CaseReport, Category, ExpertCases, TriggerTargetCase,
    TriggerTargetReport, PREDICTION_CONVENTION,
};
