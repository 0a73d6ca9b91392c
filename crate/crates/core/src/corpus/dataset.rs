//! Balanced concept datasets with seeded train/test splits.

use std::io::Write;
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::{MIN_PER_CLASS, TRAIN_FRACTION};

/// One probed token: the activation at `(doc, position)` itself is used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Sample {
    pub doc: usize,
    pub position: usize,
    pub label: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoutedSite {
    pub layer: usize,
    pub expert: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptDataset {
    pub concept: String,
    pub samples: Vec<Sample>,
    /// Indices into `samples`.
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
    /// Set once the dataset has been restricted to tokens routed to a site.
    pub routed_to: Option<RoutedSite>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub positive: usize,
    pub negative: usize,
}

impl ClassCounts {
    pub fn positive_ratio(&self) -> f64 {
        let n = self.positive + self.negative;
        if n == 0 {
            0.0
        } else {
            self.positive as f64 / n as f64
        }
    }
}

/// Outcome of restricting a dataset to routed tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Filtered {
    Kept(ConceptDataset),
    /// Too few samples of some class survived; the probe is not trainable.
    Skipped(ClassCounts),
}

fn split(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (n as f64 * TRAIN_FRACTION).round() as usize;
    let mut train = idx[..n_train].to_vec();
    let mut test = idx[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

/// Samples `n/2` positive and `n - n/2` negative tokens uniformly without
/// replacement, then splits 75/25. `labels[d][p]` is the label of token `p`
/// in document `d`.
pub fn build_dataset(concept: &str, labels: &[Vec<bool>], n: usize, seed: u64) -> Result<ConceptDataset> {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for (doc, doc_labels) in labels.iter().enumerate() {
        for (position, &label) in doc_labels.iter().enumerate() {
            let s = Sample { doc, position, label };
            if label {
                pos.push(s);
            } else {
                neg.push(s);
            }
        }
    }
    let want_pos = n / 2;
    let want_neg = n - want_pos;
    if pos.len() < want_pos || neg.len() < want_neg {
        return Err(Error::Dataset(format!(
            "concept `{concept}`: need {want_pos} positive and {want_neg} negative tokens, found {} and {}",
            pos.len(),
            neg.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples: Vec<Sample> = index::sample(&mut rng, pos.len(), want_pos)
        .into_iter()
        .map(|i| pos[i])
        .chain(index::sample(&mut rng, neg.len(), want_neg).into_iter().map(|i| neg[i]))
        .collect();
    samples.shuffle(&mut rng);
    let (train, test) = split(samples.len(), seed);
    Ok(ConceptDataset {
        concept: concept.to_string(),
        samples,
        train,
        test,
        seed,
        routed_to: None,
    })
}

impl ConceptDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn counts(&self) -> ClassCounts {
        let positive = self.samples.iter().filter(|s| s.label).count();
        ClassCounts {
            positive,
            negative: self.samples.len() - positive,
        }
    }

    /// Keeps samples for which `routed` is true and re-splits 75/25 with the
    /// dataset seed. Fewer than [`MIN_PER_CLASS`] samples of either class
    /// yields [`Filtered::Skipped`].
    pub fn filter_routed(&self, site: RoutedSite, mut routed: impl FnMut(&Sample) -> bool) -> Filtered {
        let samples: Vec<Sample> = self.samples.iter().filter(|s| routed(s)).copied().collect();
        let kept = ConceptDataset {
            concept: self.concept.clone(),
            train: Vec::new(),
            test: Vec::new(),
            seed: self.seed,
            routed_to: Some(site),
            samples,
        };
        let counts = kept.counts();
        if counts.positive < MIN_PER_CLASS || counts.negative < MIN_PER_CLASS {
            return Filtered::Skipped(counts);
        }
        let (train, test) = split(kept.samples.len(), self.seed);
        Filtered::Kept(ConceptDataset { train, test, ..kept })
    }

    /// JSON-lines, one sample per line with its split tag.
    pub fn export_jsonl(&self, path: &Path) -> Result<()> {
        #[derive(Serialize)]
        struct Line<'a> {
            concept: &'a str,
            doc: usize,
            position: usize,
            label: u8,
            split: &'a str,
        }
        let mut tag = vec![""; self.samples.len()];
        self.train.iter().for_each(|&i| tag[i] = "train");
        self.test.iter().for_each(|&i| tag[i] = "test");
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        for (s, split) in self.samples.iter().zip(tag) {
            let line = Line {
                concept: &self.concept,
                doc: s.doc,
                position: s.position,
                label: s.label as u8,
                split,
            };
            serde_json::to_writer(&mut w, &line)?;
            w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn labels() -> Vec<Vec<bool>> {
        vec![vec![true, false, false, true, false], vec![false, false, true, false]]
    }

    #[test]
    fn smallest_balanced_case() {
        let labels = vec![vec![true, false, false, true, false]];
        let ds = build_dataset("c", &labels, 4, 1).unwrap();
        assert_eq!(ds.counts(), ClassCounts { positive: 2, negative: 2 });
        assert_eq!((ds.train.len(), ds.test.len()), (3, 1));
    }

    #[test]
    fn insufficient_positives_report_counts() {
        let err = build_dataset("c", &labels(), 8, 1).unwrap_err();
        assert!(err.to_string().contains("found 3 and 6"), "{err}");
    }

    #[test]
    fn same_seed_same_samples() {
        assert_eq!(build_dataset("c", &labels(), 6, 9).unwrap(), build_dataset("c", &labels(), 6, 9).unwrap());
    }

    #[test]
    fn unrouted_expert_is_skipped() {
        let ds = build_dataset("c", &labels(), 6, 2).unwrap();
        let site = RoutedSite { layer: 0, expert: 0 };
        assert!(matches!(ds.filter_routed(site, |_| false), Filtered::Skipped(_)));
    }

    proptest! {
        #[test]
        fn balanced_disjoint_split(seed in any::<u64>(), half in 1usize..40) {
            let labels: Vec<Vec<bool>> = (0..10).map(|d| (0..30).map(|p| (d * 7 + p * 3) % 5 == 0).collect()).collect();
            let ds = build_dataset("c", &labels, 2 * half + (seed % 2) as usize, seed).unwrap();
            let c = ds.counts();
            prop_assert!(c.positive.abs_diff(c.negative) <= 1);
            let mut all: Vec<usize> = ds.train.iter().chain(&ds.test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..ds.len()).collect::<Vec<_>>());
            prop_assert_eq!(ds.train.len(), (ds.len() as f64 * 0.75).round() as usize);
        }

        #[test]
        fn filter_never_invents_samples(seed in any::<u64>(), modulus in 1usize..5) {
            let labels: Vec<Vec<bool>> = (0..10).map(|d| (0..60).map(|p| (d + p) % 3 == 0).collect()).collect();
            let ds = build_dataset("c", &labels, 120, seed).unwrap();
            let site = RoutedSite { layer: 0, expert: 1 };
            if let Filtered::Kept(f) = ds.filter_routed(site, |s| s.position % modulus == 0) {
                for s in &f.samples {
                    prop_assert!(ds.samples.contains(s));
                }
            }
        }
    }
}
