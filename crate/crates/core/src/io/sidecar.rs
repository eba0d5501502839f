use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trees::{RankedTree, Tree, UnrootedTree};

/// Exact JSON form of a tree: leaf-label order, merge or edge order, and the
/// parameter vector. Floats round-trip bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TreeRecord {
    Ranked { labels: Vec<String>, merges: Vec<(usize, usize)>, holding_times: Vec<f64> },
    Unrooted { labels: Vec<String>, edges: Vec<(usize, usize)>, lengths: Vec<f64> },
}

impl TreeRecord {
    pub fn from_tree(tree: &Tree) -> Self {
        match tree {
            Tree::Ranked(t) => TreeRecord::Ranked {
                labels: t.labels().to_vec(),
                merges: t.merges().to_vec(),
                holding_times: t.holding_times().to_vec(),
            },
            Tree::Unrooted(t) => TreeRecord::Unrooted {
                labels: t.labels().to_vec(),
                edges: t.edges().to_vec(),
                lengths: t.lengths().to_vec(),
            },
        }
    }

    pub fn to_tree(&self) -> Result<Tree> {
        Ok(match self.clone() {
            TreeRecord::Ranked { labels, merges, holding_times } => {
                Tree::Ranked(RankedTree::new(labels, merges, holding_times)?)
            }
            TreeRecord::Unrooted { labels, edges, lengths } => {
                Tree::Unrooted(UnrootedTree::new(labels, edges, lengths)?)
            }
        })
    }
}

pub fn tree_to_json(tree: &Tree) -> Result<String> {
    Ok(serde_json::to_string_pretty(&TreeRecord::from_tree(tree))?)
}

pub fn tree_from_json(s: &str) -> Result<Tree> {
    let record: TreeRecord = serde_json::from_str(s).map_err(|e| Error::Parse(format!("tree sidecar: {e}")))?;
    record.to_tree()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::priors::Prior;
    use crate::seed;

    #[test]
    fn bit_exact_round_trip() {
        let mut rng = seed::rng_from(&[3]);
        for prior in [Prior::kingman(7).unwrap(), Prior::uniform(7, 2.0).unwrap()] {
            for _ in 0..20 {
                let t = prior.sample(&mut rng);
                assert_eq!(tree_from_json(&tree_to_json(&t).unwrap()).unwrap(), t);
            }
        }
    }

    #[test]
    fn invalid_record_rejected() {
        let bad = r#"{"kind":"ranked","labels":["a","b"],"merges":[[0,0]],"holding_times":[1.0]}"#;
        assert!(tree_from_json(bad).is_err());
        assert!(tree_from_json("{").is_err());
    }
}
