use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::SegmentationSample;
use crate::error::{Error, Result};

/// Sample ids assigned to each side for one seed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitAssignment {
    pub seed: u64,
    pub train: Vec<String>,
    pub val: Vec<String>,
}

/// Repeated random train/validation splits. Once assigned, the lists are
/// reused verbatim so reruns see identical splits.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seeds: Vec<u64>,
    pub assignment: Vec<SplitAssignment>,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.7,
            seeds: vec![0, 1, 2],
            assignment: Vec::new(),
        }
    }
}

impl SplitSpec {
    pub fn with_seeds(seeds: Vec<u64>) -> Self {
        SplitSpec {
            seeds,
            ..Self::default()
        }
    }

    /// `⌈fraction·n⌉`, guarded against float noise such as `0.7·10 = 7.000…1`.
    pub fn train_count(&self, n: usize) -> usize {
        (((self.train_fraction * n as f64) - 1e-9).ceil().max(0.0) as usize).min(n)
    }

    /// Computes assignments for every seed that has none yet.
    pub fn assign(&mut self, ids: &[String]) {
        let mut sorted = ids.to_vec();
        sorted.sort();
        let k = self.train_count(sorted.len());
        for &seed in &self.seeds {
            if self.assignment.iter().any(|a| a.seed == seed) {
                continue;
            }
            let mut order = sorted.clone();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let val = order.split_off(k);
            self.assignment.push(SplitAssignment {
                seed,
                train: order,
                val,
            });
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("train_fraction\t{}\n", self.train_fraction);
        for a in &self.assignment {
            let _ = writeln!(s, "seed\t{}", a.seed);
            let _ = writeln!(s, "train\t{}", a.train.join("\t"));
            let _ = writeln!(s, "val\t{}", a.val.join("\t"));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut spec = SplitSpec {
            seeds: Vec::new(),
            ..Self::default()
        };
        let mut current: Option<SplitAssignment> = None;
        for (i, line) in text.lines().enumerate() {
            let mut fields = line.split('\t');
            let key = fields.next().unwrap_or_default();
            let bad = |what: &str| Error::Format(format!("split file line {}: {what}", i + 1));
            match key {
                "" => continue,
                "train_fraction" => {
                    spec.train_fraction = fields
                        .next()
                        .and_then(|v| v.parse().ok())
                        .ok_or_else(|| bad("bad train_fraction"))?;
                }
                "seed" => {
                    spec.assignment.extend(current.take());
                    let seed = fields
                        .next()
                        .and_then(|v| v.parse().ok())
                        .ok_or_else(|| bad("bad seed"))?;
                    spec.seeds.push(seed);
                    current = Some(SplitAssignment {
                        seed,
                        train: Vec::new(),
                        val: Vec::new(),
                    });
                }
                "train" | "val" => {
                    let a = current.as_mut().ok_or_else(|| bad("id list before any seed"))?;
                    let ids = fields.filter(|f| !f.is_empty()).map(str::to_string);
                    if key == "train" {
                        a.train.extend(ids);
                    } else {
                        a.val.extend(ids);
                    }
                }
                other => return Err(bad(&format!("unknown key `{other}`"))),
            }
        }
        spec.assignment.extend(current);
        Ok(spec)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

/// One `(train, val)` pair per seed of `spec`, assigning seeds that have no
/// stored assignment yet. Stored ids must all exist in the corpus.
pub fn split(
    corpus: &[SegmentationSample],
    spec: &mut SplitSpec,
) -> Result<Vec<(Vec<SegmentationSample>, Vec<SegmentationSample>)>> {
    if corpus.is_empty() {
        return Err(Error::Validation("cannot split an empty corpus".into()));
    }
    let ids: Vec<String> = corpus.iter().map(|s| s.id.clone()).collect();
    spec.assign(&ids);
    let by_id: HashMap<&str, &SegmentationSample> = corpus.iter().map(|s| (s.id.as_str(), s)).collect();
    let pick = |list: &[String]| -> Result<Vec<SegmentationSample>> {
        list.iter()
            .map(|id| {
                by_id
                    .get(id.as_str())
                    .map(|s| (*s).clone())
                    .ok_or_else(|| Error::Validation(format!("split refers to unknown sample `{id}`")))
            })
            .collect()
    };
    spec.seeds
        .iter()
        .map(|seed| {
            let a = spec
                .assignment
                .iter()
                .find(|a| a.seed == *seed)
                .expect("assigned above");
            Ok((pick(&a.train)?, pick(&a.val)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("s{i:03}")).collect()
    }

    #[test]
    fn seventy_thirty() {
        let mut spec = SplitSpec::with_seeds(vec![0]);
        spec.assign(&ids(10));
        assert_eq!((spec.assignment[0].train.len(), spec.assignment[0].val.len()), (7, 3));
        assert_eq!(spec.train_count(11), 8);
    }

    #[test]
    fn seeds_cover_and_differ() {
        let mut spec = SplitSpec::default();
        spec.assign(&ids(100));
        for a in &spec.assignment {
            let mut all: Vec<_> = a.train.iter().chain(&a.val).cloned().collect();
            all.sort();
            assert_eq!(all, ids(100));
        }
        assert_ne!(spec.assignment[0].train, spec.assignment[1].train);
        assert_ne!(spec.assignment[1].train, spec.assignment[2].train);
        let mut again = SplitSpec::default();
        again.assign(&ids(100));
        assert_eq!(spec, again);
    }

    #[test]
    fn text_round_trip() {
        let mut spec = SplitSpec::default();
        spec.assign(&ids(9));
        assert_eq!(SplitSpec::from_text(&spec.to_text()).unwrap(), spec);
    }
}
