//! Expert hidden activations gathered at dataset positions.

use std::collections::{BTreeMap, HashMap};

use crate::corpus::{Chunk, TokenizedCorpus};
use crate::error::Result;
use crate::model::Model;

#[derive(Debug, Clone, PartialEq)]
pub struct RoutedHidden {
    pub expert: usize,
    pub gate: f32,
    pub hidden: Vec<f32>,
}

/// For each requested `(doc, position)`: per layer, the hidden vectors of the
/// experts routed there.
#[derive(Debug, Clone, Default)]
pub struct ActivationTable {
    index: HashMap<(usize, usize), usize>,
    rows: Vec<Vec<Vec<RoutedHidden>>>,
}

impl ActivationTable {
    /// Traces every context chunk that contains a requested position.
    pub fn collect(
        model: &Model,
        corpus: &TokenizedCorpus,
        positions: impl IntoIterator<Item = (usize, usize)>,
        context: usize,
    ) -> Result<Self> {
        use rayon::prelude::*;
        let mut by_chunk: BTreeMap<Chunk, Vec<(usize, usize)>> = BTreeMap::new();
        for (doc, pos) in positions {
            by_chunk.entry(corpus.chunk_of(doc, pos, context)).or_default().push((doc, pos));
        }
        let chunks: Vec<(Chunk, Vec<(usize, usize)>)> = by_chunk.into_iter().collect();
        let traced: Vec<Vec<((usize, usize), Vec<Vec<RoutedHidden>>)>> = chunks
            .par_iter()
            .map(|(chunk, wanted)| {
                let trace = model.forward(corpus.chunk_tokens(*chunk))?;
                Ok(wanted
                    .iter()
                    .map(|&(doc, pos)| {
                        let layers = trace
                            .layers
                            .iter()
                            .map(|layer| {
                                layer.positions[pos - chunk.start]
                                    .experts
                                    .iter()
                                    .map(|e| RoutedHidden {
                                        expert: e.expert,
                                        gate: e.gate,
                                        hidden: e.hidden.clone(),
                                    })
                                    .collect()
                            })
                            .collect();
                        ((doc, pos), layers)
                    })
                    .collect())
            })
            .collect::<Result<_>>()?;
        let mut table = Self::default();
        for (key, layers) in traced.into_iter().flatten() {
            if let std::collections::hash_map::Entry::Vacant(v) = table.index.entry(key) {
                v.insert(table.rows.len());
                table.rows.push(layers);
            }
        }
        Ok(table)
    }

    /// Hidden vector of `expert` at `(doc, position)`, if it was routed there.
    pub fn get(&self, doc: usize, position: usize, layer: usize, expert: usize) -> Option<&RoutedHidden> {
        let row = self.index.get(&(doc, position))?;
        self.rows[*row].get(layer)?.iter().find(|r| r.expert == expert)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}
