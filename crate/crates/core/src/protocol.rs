//! Default experimental protocol constants.

/// Balanced token samples collected per concept before routed filtering.
pub const PROBE_SAMPLES: usize = 5000;
pub const TRAIN_FRACTION: f64 = 0.75;
pub const K_VALUES: [usize; 7] = [1, 2, 4, 8, 16, 32, 64];
/// Fewer routed samples than this per class and the probe is skipped.
pub const MIN_PER_CLASS: usize = 8;

pub const PROBE_MAX_ITER: usize = 500;
pub const PROBE_TOL: f64 = 1e-8;
pub const PROBE_THRESHOLD: f64 = 0.5;

pub const WINDOW_TOKENS: usize = 32;
pub const MINING_BUDGET_TOKENS: usize = 2_000_000;
pub const TOP_EXAMPLES: usize = 40;
pub const EXPLAINER_EXAMPLES: usize = 20;
pub const SCORER_POSITIVES: usize = 10;
pub const HELD_BACK_EXAMPLES: usize = 10;
pub const PROMOTED_TOKENS: usize = 3;
pub const TOP_ACTIVATIONS: usize = 5;

pub const CLUSTER_KS: [usize; 5] = [10, 50, 100, 1000, 5000];
pub const KMEANS_MAX_ITER: usize = 100;
pub const SPECIALIZATION_BUDGET_TOKENS: usize = 1_000_000;
pub const MC_SAMPLES: usize = 100;
pub const FUNCTIONAL_TOP_N: usize = PROMOTED_TOKENS;

pub const LLM_IN_FLIGHT: usize = 4;
pub const LLM_TEMPERATURE: f64 = 0.0;
pub const LLM_MAX_RETRIES: u32 = 3;
pub const LLM_TIMEOUT_SECS: u64 = 120;

/// Tokens per forward pass when tracing a corpus.
pub const CONTEXT_TOKENS: usize = 128;
