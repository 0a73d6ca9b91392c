//! Automatic expert labeling: example mining, prompt rendering, explainer and
//! scorer calls over a chat-style HTTP contract, and F1 scoring.

mod llm;
mod mining;
mod pipeline;
mod prompts;
mod templates;

pub use llm::{
    replay_verdicts, response_content, unix_millis, ChatRequest, HttpClient, LlmClient, LlmEndpoint, Message,
    MockClient, MockMode, Stage, TranscriptEntry, TranscriptStore, MOCK_HYPOTHESIS,
};
pub use mining::{
    mine_examples, select_negatives, ActivationItem, ExpertPool, MinedExample, MiningResult, MiningSettings,
};
pub use pipeline::{
    label_experts, layer_series, replay_f1, score_label, write_labels_csv, LabelLayerPoint, LabelRecord,
    LabelSettings, LabelStatus,
};
pub use prompts::{
    build_case_generation_prompt, build_explainer_prompt, build_reprompt, build_scorer_prompt, extract_hypothesis,
    parse_verdicts, Prompt, ScorerPrompt,
};
pub use templates::{PromptTemplates, TEMPLATE_VERSION};
