//! Evaluation harness: ROC against ground-truth masks, retrieval recall,
//! gallery perturbations and the synthetic splice generator.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::index::QueryResult;

pub mod perturb;
pub mod roc;
pub mod synth;

pub use perturb::{perturb_hsv, perturb_poisson, perturb_rotate, rotate_by};
pub use roc::{roc, RocCurve, RocPoint, RocPool};
pub use synth::{synthesize_splices, Corpus, ProceduralCorpus, SpliceRecord, SynthConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecallReport {
    pub recall: f64,
    pub evaluated: usize,
    /// Probes without any ground-truth relative.
    pub skipped: usize,
}

/// Fraction of probes with at least one true relative in the top `rank` results.
pub fn recall_at_rank(results: &[QueryResult], truth: &[BTreeSet<u64>], rank: usize) -> Result<RecallReport> {
    if rank == 0 {
        return Err(Error::Parameter("rank must be at least 1".into()));
    }
    if results.len() != truth.len() {
        return Err(Error::Evaluation(format!(
            "{} results but {} truth sets",
            results.len(),
            truth.len()
        )));
    }
    let mut hits = 0usize;
    let mut evaluated = 0usize;
    let mut skipped = 0usize;
    for (res, t) in results.iter().zip(truth) {
        if t.is_empty() {
            skipped += 1;
            continue;
        }
        evaluated += 1;
        if res.ranked.iter().take(rank).any(|r| t.contains(&r.image_id)) {
            hits += 1;
        }
    }
    if evaluated == 0 {
        return Err(Error::Evaluation("no probe has ground truth".into()));
    }
    Ok(RecallReport {
        recall: hits as f64 / evaluated as f64,
        evaluated,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::RankedImage;

    fn result_with_truth_at(pos: usize, truth: u64) -> QueryResult {
        let ranked = (0..40u64)
            .map(|i| RankedImage {
                image_id: if i as usize + 1 == pos { truth } else { 1000 + i },
                votes: 100 - i as u32,
                distance_sum: 0.0,
            })
            .collect();
        QueryResult { ranked, requested: 100 }
    }

    #[test]
    fn recall_boundaries() {
        let truth: Vec<BTreeSet<u64>> = (0..5).map(|i| BTreeSet::from([i])).collect();
        let first: Vec<_> = (0..5).map(|i| result_with_truth_at(1, i)).collect();
        for rank in [1, 25, 100] {
            assert_eq!(recall_at_rank(&first, &truth, rank).unwrap().recall, 1.0);
        }
        let never: Vec<_> = (0..5).map(|i| result_with_truth_at(0, i)).collect();
        assert_eq!(recall_at_rank(&never, &truth, 25).unwrap().recall, 0.0);
        let at26: Vec<_> = (0..5).map(|i| result_with_truth_at(26, i)).collect();
        assert_eq!(recall_at_rank(&at26, &truth, 25).unwrap().recall, 0.0);
        assert_eq!(recall_at_rank(&at26, &truth, 26).unwrap().recall, 1.0);
    }

    #[test]
    fn empty_truth_is_skipped() {
        let truth = vec![BTreeSet::from([3]), BTreeSet::new()];
        let res = vec![result_with_truth_at(1, 3), result_with_truth_at(1, 4)];
        let r = recall_at_rank(&res, &truth, 5).unwrap();
        assert_eq!((r.recall, r.evaluated, r.skipped), (1.0, 1, 1));
        assert!(recall_at_rank(&res, &truth, 0).is_err());
    }
}
