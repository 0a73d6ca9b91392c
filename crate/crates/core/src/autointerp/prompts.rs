//! Prompt assembly and parsing of model replies.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mining::{ExpertPool, MinedExample};
use super::templates::PromptTemplates;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub system: String,
    pub user: String,
}

pub fn build_explainer_prompt(templates: &PromptTemplates, pool: &ExpertPool, expected: usize) -> Result<Prompt> {
    let examples = pool.explainer_examples();
    if examples.len() != expected {
        return Err(Error::Data(format!(
            "explainer needs {expected} examples for L{}E{}, pool has {}",
            pool.layer,
            pool.expert,
            examples.len()
        )));
    }
    let mut blocks = Vec::with_capacity(examples.len());
    for (i, ex) in examples.iter().enumerate() {
        let items = ex
            .top_activations
            .iter()
            .map(|item| {
                templates.render(
                    "activation_item",
                    &[
                        ("token_str", &item.token_str),
                        ("score", &format!("{:.2}", item.score)),
                        ("promoted", &item.promoted.join(", ")),
                    ],
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let items = items.iter().map(|s| s.trim_end_matches('\n')).collect::<Vec<_>>().join("\n");
        blocks.push(templates.render(
            "explainer_example",
            &[("id", &(i + 1).to_string()), ("snippet", &ex.snippet()), ("items", &items)],
        )?);
    }
    Ok(Prompt {
        system: templates.render("explainer_system", &[])?,
        user: templates.render(
            "explainer_user",
            &[
                ("expert", &pool.expert.to_string()),
                ("layer", &pool.layer.to_string()),
                ("examples", &blocks.join("\n")),
            ],
        )?,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScorerPrompt {
    pub prompt: Prompt,
    /// Example ids in presentation order.
    pub order: Vec<String>,
    /// Hidden ground truth: `true` where the presented example is a positive.
    pub answer_key: Vec<bool>,
}

/// Shuffles positives and negatives with `seed` and renders the scorer prompt.
pub fn build_scorer_prompt(
    templates: &PromptTemplates,
    hypothesis: &str,
    positives: &[&MinedExample],
    negatives: &[&MinedExample],
    seed: u64,
) -> Result<ScorerPrompt> {
    if positives.is_empty() || negatives.len() < positives.len() {
        return Err(Error::Data(format!(
            "scorer needs as many negatives as positives, got {} and {}",
            negatives.len(),
            positives.len()
        )));
    }
    let mut presented: Vec<(&MinedExample, bool)> = positives
        .iter()
        .map(|e| (*e, true))
        .chain(negatives.iter().map(|e| (*e, false)))
        .collect();
    presented.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let blocks = presented
        .iter()
        .enumerate()
        .map(|(i, (ex, _))| {
            templates.render("scorer_example", &[("id", &(i + 1).to_string()), ("snippet", &ex.snippet())])
        })
        .collect::<Result<Vec<_>>>()?;
    let user = templates.render(
        "scorer_user",
        &[
            ("hypothesis", hypothesis.trim()),
            ("examples", &blocks.join("\n")),
            ("n", &presented.len().to_string()),
        ],
    )?;
    Ok(ScorerPrompt {
        prompt: Prompt {
            system: templates.render("scorer_system", &[])?,
            user,
        },
        order: presented.iter().map(|(e, _)| e.id.clone()).collect(),
        answer_key: presented.iter().map(|(_, p)| *p).collect(),
    })
}

pub fn build_reprompt(templates: &PromptTemplates, n: usize) -> Result<String> {
    templates.render("scorer_reprompt", &[("n", &n.to_string())])
}

/// Request for hand-curated trigger-target cases.
pub fn build_case_generation_prompt(
    templates: &PromptTemplates,
    hypothesis: &str,
    trigger: &str,
    target: &str,
    n: usize,
) -> Result<String> {
    templates.render(
        "case_generation",
        &[
            ("hypothesis", hypothesis),
            ("trigger", trigger),
            ("target", target),
            ("n", &n.to_string()),
        ],
    )
}

/// The last run of exactly `n` values from `{0, 1}` separated by whitespace or
/// commas (brackets allowed around it).
pub fn parse_verdicts(text: &str, n: usize) -> Result<Vec<bool>> {
    static RUN: std::sync::OnceLock<regex::Regex> = std::sync::OnceLock::new();
    let run = RUN.get_or_init(|| regex::Regex::new(r"\b[01]\b(?:[\s,]+\b[01]\b)*").expect("valid regex"));
    let last = run
        .find_iter(text)
        .map(|m| {
            m.as_str()
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|s| !s.is_empty())
                .map(|s| s == "1")
                .collect::<Vec<bool>>()
        })
        .filter(|v| v.len() == n)
        .last();
    last.ok_or_else(|| Error::Parse(format!("no list of exactly {n} binary values in the reply")))
}

/// Text inside the last `<hypothesis>` tag, else the last non-empty line.
pub fn extract_hypothesis(text: &str) -> Result<String> {
    if let Some(start) = text.rfind("<hypothesis>") {
        let body = &text[start + "<hypothesis>".len()..];
        let body = body.split("</hypothesis>").next().unwrap_or(body).trim();
        if !body.is_empty() {
            return Ok(body.to_string());
        }
    }
    text.lines()
        .rev()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .map(str::to_string)
        .ok_or_else(|| Error::Parse("empty explainer reply".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn last_list_of_twenty_wins() {
        let ones = vec!["1"; 20].join(", ");
        let mixed = (0..20).map(|i| (i % 2).to_string()).collect::<Vec<_>>().join(",");
        let text = format!("draft [{ones}]\nExample 3 scores 1 0 since...\nfinal:\n[{mixed}]");
        let v = parse_verdicts(&text, 20).unwrap();
        assert_eq!(v, (0..20).map(|i| i % 2 == 1).collect::<Vec<_>>());
        let spaced = vec!["0"; 20].join(" ");
        assert_eq!(parse_verdicts(&spaced, 20).unwrap(), vec![false; 20]);
    }

    #[test]
    fn wrong_counts_fail() {
        let nineteen = format!("[{}]", vec!["1"; 19].join(", "));
        assert!(matches!(parse_verdicts(&nineteen, 20), Err(Error::Parse(_))));
        let twentyone = format!("[{}]", vec!["1"; 21].join(", "));
        assert!(parse_verdicts(&twentyone, 20).is_err());
        assert!(parse_verdicts("[1, 0, 2, 1]", 4).is_err());
        assert!(parse_verdicts("10 01", 2).is_err());
    }

    #[test]
    fn hypothesis_tags_or_last_line() {
        assert_eq!(extract_hypothesis("x\n<hypothesis> Digits </hypothesis>\n").unwrap(), "Digits");
        assert_eq!(extract_hypothesis("thinking\nFinal: numbers\n\n").unwrap(), "Final: numbers");
        assert!(extract_hypothesis("  \n").is_err());
    }
}
