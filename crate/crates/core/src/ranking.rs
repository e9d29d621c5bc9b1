//! Core-sample selection by support-vector frequency.
//!
//! The full split-model training is repeated `R` times with seeds
//! `base_seed + r`; each sample's frequency is the number of runs in which it
//! lands in the union of the per-class support sets.

use std::fmt::Write as _;

use rayon::prelude::*;
use thiserror::Error;

use crate::data::{IdSet, LabeledDataset, SampleId};
use crate::pipeline::{self, Hyper, PipelineError};

#[derive(Debug, Error)]
pub enum RankingError {
    #[error("k = {k} outside [0, {m}]")]
    KOutOfRange { k: usize, m: usize },
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("run {run} (seed {seed}) failed: {source}")]
    Run {
        run: usize,
        seed: u64,
        #[source]
        source: Box<PipelineError>,
    },
    #[error("ranking file: {0}")]
    Parse(String),
}

/// Per-sample support-vector frequencies over `R` seeded runs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoreRanking {
    corpus_ids: IdSet,
    freq: Vec<u32>,
    run_seeds: Vec<u64>,
}

impl CoreRanking {
    /// `freq` is aligned with `corpus_ids`; `R = run_seeds.len()`.
    pub fn from_counts(corpus_ids: IdSet, freq: Vec<u32>, run_seeds: Vec<u64>) -> Result<Self, RankingError> {
        if freq.len() != corpus_ids.len() {
            return Err(RankingError::InvalidParam(format!(
                "{} frequencies for {} ids",
                freq.len(),
                corpus_ids.len()
            )));
        }
        if run_seeds.is_empty() {
            return Err(RankingError::InvalidParam("at least one run required".into()));
        }
        let mut seeds = run_seeds.clone();
        seeds.sort_unstable();
        if seeds.windows(2).any(|w| w[0] == w[1]) {
            return Err(RankingError::InvalidParam("run seeds must be distinct".into()));
        }
        if let Some(&f) = freq.iter().find(|&&f| f as usize > run_seeds.len()) {
            return Err(RankingError::InvalidParam(format!("frequency {f} exceeds run count {}", run_seeds.len())));
        }
        Ok(Self { corpus_ids, freq, run_seeds })
    }

    pub fn runs(&self) -> usize {
        self.run_seeds.len()
    }

    pub fn run_seeds(&self) -> &[u64] {
        &self.run_seeds
    }

    pub fn corpus_ids(&self) -> &IdSet {
        &self.corpus_ids
    }

    pub fn freq(&self) -> &[u32] {
        &self.freq
    }

    pub fn freq_of(&self, id: SampleId) -> Option<u32> {
        self.corpus_ids.position(id).map(|p| self.freq[p])
    }

    /// IDs ordered by descending frequency, ties by ascending ID.
    pub fn order(&self) -> Vec<SampleId> {
        let mut idx: Vec<usize> = (0..self.freq.len()).collect();
        // ids ascend with position, so a stable sort on frequency alone
        // breaks ties by id
        idx.sort_by(|&a, &b| self.freq[b].cmp(&self.freq[a]));
        idx.into_iter().map(|p| self.corpus_ids.as_slice()[p]).collect()
    }

    /// The `k` most frequent support vectors (the core set).
    pub fn top_k(&self, k: usize) -> Result<IdSet, RankingError> {
        if k > self.corpus_ids.len() {
            return Err(RankingError::KOutOfRange { k, m: self.corpus_ids.len() });
        }
        Ok(IdSet::from_unsorted(self.order().into_iter().take(k).collect()))
    }

    pub fn non_top_k(&self, k: usize) -> Result<IdSet, RankingError> {
        Ok(self.corpus_ids.difference(&self.top_k(k)?))
    }

    /// `hist[f]` = number of samples with frequency `f`, for `f` in `0..=R`.
    pub fn histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.runs() + 1];
        for &f in &self.freq {
            h[f as usize] += 1;
        }
        h
    }

    /// `# runs=R base_seed=S` header, then `id,freq` rows in ID order.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let seeds: Vec<String> = self.run_seeds.iter().map(u64::to_string).collect();
        writeln!(s, "# runs={} base_seed={} seeds={}", self.runs(), self.run_seeds[0], seeds.join(";")).unwrap();
        s.push_str("id,freq\n");
        for (id, f) in self.corpus_ids.iter().zip(&self.freq) {
            writeln!(s, "{id},{f}").unwrap();
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self, RankingError> {
        let bad = |m: String| RankingError::Parse(m);
        let mut seeds = None;
        let mut ids = Vec::new();
        let mut freq = Vec::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            if let Some(meta) = line.strip_prefix('#') {
                for kv in meta.split_whitespace() {
                    if let Some(v) = kv.strip_prefix("seeds=") {
                        seeds = Some(
                            v.split(';')
                                .map(|s| s.parse::<u64>().map_err(|e| bad(format!("seed {s:?}: {e}"))))
                                .collect::<Result<Vec<_>, _>>()?,
                        );
                    }
                }
                continue;
            }
            if line == "id,freq" {
                continue;
            }
            let (a, b) = line.split_once(',').ok_or_else(|| bad(format!("expected id,freq: {line:?}")))?;
            ids.push(a.trim().parse::<u64>().map_err(|e| bad(format!("id {a:?}: {e}")))?);
            freq.push(b.trim().parse::<u32>().map_err(|e| bad(format!("freq {b:?}: {e}")))?);
        }
        let seeds = seeds.ok_or_else(|| bad("missing seeds in header".into()))?;
        let corpus = IdSet::from_sorted(ids).map_err(|e| bad(e.to_string()))?;
        Self::from_counts(corpus, freq, seeds)
    }

    /// `freq,count` rows for `f` in `0..=R`.
    pub fn histogram_csv(&self) -> String {
        let mut s = String::from("freq,count\n");
        for (f, c) in self.histogram().into_iter().enumerate() {
            writeln!(s, "{f},{c}").unwrap();
        }
        s
    }
}

/// Runs the complete split-model training `runs` times on `ds` and counts how
/// often each sample is a support vector.
pub fn build_ranking(ds: &LabeledDataset, hyper: &Hyper, runs: usize, base_seed: u64) -> Result<CoreRanking, RankingError> {
    if runs == 0 {
        return Err(RankingError::InvalidParam("R must be at least 1".into()));
    }
    let all = ds.id_set();
    let seeds: Vec<u64> = (0..runs as u64).map(|r| base_seed.wrapping_add(r)).collect();
    let supports = seeds
        .par_iter()
        .enumerate()
        .map(|(run, &seed)| {
            pipeline::support_of_run(ds, hyper, seed).map_err(|e| RankingError::Run {
                run,
                seed,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut freq = vec![0u32; all.len()];
    for s in &supports {
        for id in s.iter() {
            freq[all.position(id).expect("support ids lie in the corpus")] += 1;
        }
    }
    CoreRanking::from_counts(all, freq, seeds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn example() -> CoreRanking {
        CoreRanking::from_counts(IdSet::range(4), vec![5, 1, 5, 0], vec![0, 1, 2, 3, 4]).unwrap()
    }

    #[test]
    fn top_k_examples() {
        let cr = example();
        assert_eq!(cr.top_k(2).unwrap().as_slice(), &[0, 2]);
        assert_eq!(cr.non_top_k(2).unwrap().as_slice(), &[1, 3]);
        assert!(cr.top_k(0).unwrap().is_empty());
        assert_eq!(cr.top_k(4).unwrap(), IdSet::range(4));
        assert!(cr.non_top_k(4).unwrap().is_empty());
        assert!(matches!(cr.top_k(5), Err(RankingError::KOutOfRange { k: 5, m: 4 })));
        assert!(cr.non_top_k(2).unwrap().sample(3, 0).is_err());
    }

    #[test]
    fn invariants_checked() {
        assert!(CoreRanking::from_counts(IdSet::range(2), vec![1], vec![0]).is_err());
        assert!(CoreRanking::from_counts(IdSet::range(2), vec![2, 0], vec![0]).is_err());
        assert!(CoreRanking::from_counts(IdSet::range(2), vec![0, 0], vec![3, 3]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let cr = CoreRanking::from_counts(IdSet::from_unsorted(vec![3, 8, 20]), vec![2, 0, 1], vec![7, 8]).unwrap();
        let text = cr.to_csv();
        assert!(text.starts_with("# runs=2 base_seed=7"));
        assert_eq!(CoreRanking::from_csv(&text).unwrap(), cr);
        assert_eq!(cr.histogram_csv(), "freq,count\n0,1\n1,1\n2,1\n");
    }

    proptest! {
        #[test]
        fn ranking_properties(freq in prop::collection::vec(0u32..4, 0..40), k_frac in 0.0f64..1.0) {
            let m = freq.len();
            let ids = IdSet::from_unsorted((0..m as u64).map(|i| i * 3 + 1).collect());
            let cr = CoreRanking::from_counts(ids.clone(), freq.clone(), vec![0, 1, 2]).unwrap();
            let k = (k_frac * m as f64) as usize;
            let top = cr.top_k(k).unwrap();
            let rest = cr.non_top_k(k).unwrap();
            prop_assert_eq!(top.len(), k);
            prop_assert!(top.is_disjoint(&rest));
            prop_assert_eq!(top.union(&rest), ids.clone());
            if k < m {
                prop_assert!(top.is_subset(&cr.top_k(k + 1).unwrap()));
            }
            // reference: sort (freq desc, id asc) and take k
            let mut pairs: Vec<(u32, u64)> = ids.iter().zip(&freq).map(|(id, &f)| (f, id)).collect();
            pairs.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
            let reference = IdSet::from_unsorted(pairs.iter().take(k).map(|p| p.1).collect());
            prop_assert_eq!(&top, &reference);
            let hist = cr.histogram();
            prop_assert_eq!(hist.iter().sum::<usize>(), m);
        }
    }
}
