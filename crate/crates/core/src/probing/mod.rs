//! k-sparse probing of expert (or dense FFN) hidden activations.

mod activations;
mod logistic;
mod probe;
mod sweep;

use serde::{Deserialize, Serialize};

pub use activations::{ActivationTable, RoutedHidden};
pub use logistic::{fit_logistic, objective, LogisticFit};
pub use probe::{
    evaluate_f1, fit_probe, predict, rank_neurons, restrict, BinaryScores, NeuronRanking, ProbeOptions, ProbeResult,
};
pub use sweep::{run_sweep, BestSite, PlotPoint, ProbeOutcome, SkipRecord, SweepResult, SweepSettings, CI_METHOD};

use crate::error::{Error, Result};
use crate::model::ModelConfig;

/// A probed location: an expert of an MoE layer, or the FFN of a dense layer
/// (`expert = None`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Site {
    pub layer: usize,
    pub expert: Option<usize>,
}

impl Site {
    /// Index of the FFN inside the layer's expert list.
    pub fn expert_index(&self) -> usize {
        self.expert.unwrap_or(0)
    }

    /// Every site of the model, ordered by layer then expert.
    pub fn all(config: &ModelConfig) -> Vec<Site> {
        (0..config.n_layers)
            .flat_map(|layer| {
                if config.is_moe(layer) {
                    (0..config.n_experts).map(|e| Site { layer, expert: Some(e) }).collect()
                } else {
                    vec![Site { layer, expert: None }]
                }
            })
            .collect()
    }

    pub fn validate(&self, config: &ModelConfig) -> Result<()> {
        if self.layer >= config.n_layers {
            return Err(Error::Config(format!("site layer {} out of range", self.layer)));
        }
        match (config.is_moe(self.layer), self.expert) {
            (true, None) => Err(Error::Config(format!(
                "site kind mismatch: layer {} is an MoE layer, a dense site was given",
                self.layer
            ))),
            (false, Some(e)) => Err(Error::Config(format!(
                "site kind mismatch: layer {} is dense, expert {e} was given",
                self.layer
            ))),
            (true, Some(e)) if e >= config.n_experts => {
                Err(Error::Config(format!("expert {e} out of range at layer {}", self.layer)))
            }
            _ => Ok(()),
        }
    }
}

impl std::fmt::Display for Site {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.expert {
            Some(e) => write!(f, "L{}E{}", self.layer, e),
            None => write!(f, "L{}", self.layer),
        }
    }
}

impl std::str::FromStr for Site {
    type Err = Error;

    /// Parses `L{layer}E{expert}` or `L{layer}`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("site `{s}` is not of the form L<layer>E<expert> or L<layer>"));
        let rest = s.strip_prefix('L').ok_or_else(bad)?;
        let (layer, expert) = match rest.split_once('E') {
            Some((l, e)) => (l, Some(e.parse().map_err(|_| bad())?)),
            None => (rest, None),
        };
        Ok(Site {
            layer: layer.parse().map_err(|_| bad())?,
            expert,
        })
    }
}
