//! Sliding-threshold ROC of heat maps against binary ground-truth masks.
//!
//! Pixels from every probe are pooled (micro-average); invalid heat-map pixels
//! are left out. Everything here depends on the rank order of the scores only,
//! so any strictly increasing transform of the scores yields the same curve.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::HeatMap;

pub const ROC_THRESHOLDS: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct RocPoint {
    /// Pixels scoring `>= threshold` are called tampered. `+inf` / `-inf` mark
    /// the `(0, 0)` and `(1, 1)` endpoints.
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    /// Sorted by `fpr`, then `tpr`, non-decreasing.
    pub points: Vec<RocPoint>,
    /// Trapezoidal area under the full empirical curve (every distinct score is a
    /// threshold), i.e. the Mann–Whitney statistic with ties counted half.
    pub auc: f64,
    pub positives: usize,
    pub negatives: usize,
}

impl RocCurve {
    /// `threshold,fpr,tpr` rows followed by `auc,<value>`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("threshold,fpr,tpr\n");
        for p in &self.points {
            let _ = writeln!(s, "{},{},{}", p.threshold, p.fpr, p.tpr);
        }
        let _ = writeln!(s, "auc,{}", self.auc);
        s
    }
}

/// Pooled `(score, label)` pixels from any number of probes. Merging is
/// concatenation, so per-probe pools can be built in parallel.
#[derive(Debug, Clone, Default)]
pub struct RocPool {
    samples: Vec<(f64, bool)>,
}

impl RocPool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Adds the valid pixels of `hm`; `mask` is `true` where tampered.
    pub fn add(&mut self, hm: &HeatMap, mask: &[bool]) -> Result<()> {
        if mask.len() != hm.scores.len() {
            return Err(Error::Evaluation(format!(
                "mask has {} pixels, heat map {}",
                mask.len(),
                hm.scores.len()
            )));
        }
        self.samples.extend(
            hm.scores
                .iter()
                .zip(&hm.valid)
                .zip(mask)
                .filter(|((_, v), _)| **v)
                .map(|((s, _), m)| (*s, *m)),
        );
        Ok(())
    }

    /// `(positives, negatives)`.
    pub fn counts(&self) -> (usize, usize) {
        let positives = self.samples.iter().filter(|s| s.1).count();
        (positives, self.samples.len() - positives)
    }

    pub fn add_raw(&mut self, score: f64, label: bool) {
        self.samples.push((score, label));
    }

    pub fn merge(&mut self, other: RocPool) {
        self.samples.extend(other.samples);
    }

    pub fn curve(mut self) -> Result<RocCurve> {
        let positives = self.samples.iter().filter(|s| s.1).count();
        let negatives = self.samples.len() - positives;
        if positives == 0 || negatives == 0 {
            return Err(Error::Evaluation(format!(
                "ROC needs both classes: {positives} positive, {negatives} negative pixels"
            )));
        }
        if self.samples.iter().any(|s| !s.0.is_finite()) {
            return Err(Error::Evaluation("non-finite heat-map score".into()));
        }
        self.samples.par_sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        let samples = &self.samples;
        let (p, n) = (positives as f64, negatives as f64);

        // suffix_pos[i] = positives among samples[i..]
        let mut suffix_pos = vec![0usize; samples.len() + 1];
        for i in (0..samples.len()).rev() {
            suffix_pos[i] = suffix_pos[i + 1] + usize::from(samples[i].1);
        }

        // Exact curve walking thresholds from high to low.
        let mut auc = 0.0;
        let (mut prev_fpr, mut prev_tpr) = (0.0, 0.0);
        let mut i = samples.len();
        while i > 0 {
            let score = samples[i - 1].0;
            while i > 0 && samples[i - 1].0 == score {
                i -= 1;
            }
            let tp = suffix_pos[i] as f64;
            let fp = (samples.len() - i) as f64 - tp;
            let (fpr, tpr) = (fp / n, tp / p);
            auc += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
            prev_fpr = fpr;
            prev_tpr = tpr;
        }

        // Reported points at rank quantiles of the pooled scores.
        let mut points = vec![
            RocPoint {
                threshold: f64::INFINITY,
                fpr: 0.0,
                tpr: 0.0,
            },
            RocPoint {
                threshold: f64::NEG_INFINITY,
                fpr: 1.0,
                tpr: 1.0,
            },
        ];
        let last = samples.len() - 1;
        for q in 0..ROC_THRESHOLDS {
            let idx = (q * last + (ROC_THRESHOLDS - 1) / 2) / (ROC_THRESHOLDS - 1);
            let threshold = samples[idx].0;
            let start = samples.partition_point(|s| s.0 < threshold);
            let tp = suffix_pos[start] as f64;
            let fp = (samples.len() - start) as f64 - tp;
            points.push(RocPoint {
                threshold,
                fpr: fp / n,
                tpr: tp / p,
            });
        }
        points.sort_by(|a, b| {
            a.fpr
                .total_cmp(&b.fpr)
                .then(a.tpr.total_cmp(&b.tpr))
                .then(b.threshold.total_cmp(&a.threshold))
        });
        Ok(RocCurve {
            points,
            auc: auc.clamp(0.0, 1.0),
            positives,
            negatives,
        })
    }
}

/// Micro-averaged ROC over heat maps and their masks.
pub fn roc(heatmaps: &[HeatMap], masks: &[Vec<bool>]) -> Result<RocCurve> {
    if heatmaps.len() != masks.len() {
        return Err(Error::Evaluation(format!(
            "{} heat maps but {} masks",
            heatmaps.len(),
            masks.len()
        )));
    }
    let mut pool = RocPool::new();
    for (hm, m) in heatmaps.iter().zip(masks) {
        pool.add(hm, m)?;
    }
    pool.curve()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use rand::Rng;

    fn hm(scores: Vec<f64>) -> HeatMap {
        let n = scores.len();
        HeatMap::new(n, 1, scores, vec![true; n]).unwrap()
    }

    fn mask(n: usize) -> Vec<bool> {
        (0..n).map(|i| i % 3 == 0).collect()
    }

    #[test]
    fn perfect_and_inverted() {
        let m = mask(300);
        let exact = hm(m.iter().map(|v| if *v { 1.0 } else { 0.0 }).collect());
        let inv = hm(m.iter().map(|v| if *v { 0.0 } else { 1.0 }).collect());
        assert_eq!(roc(&[exact], &[m.clone()]).unwrap().auc, 1.0);
        assert_eq!(roc(&[inv], &[m]).unwrap().auc, 0.0);
    }

    #[test]
    fn random_scores_are_chance() {
        let mut rng = seed::rng(1, "roc-test", 0);
        let n = 1_000_000;
        let scores: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
        let labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.2)).collect();
        let c = roc(&[hm(scores)], &[labels]).unwrap();
        assert!((c.auc - 0.5).abs() < 0.01, "{}", c.auc);
    }

    #[test]
    fn single_class_is_error() {
        let h = hm(vec![0.1, 0.2]);
        assert!(matches!(roc(&[h.clone()], &[vec![true, true]]), Err(Error::Evaluation(_))));
        assert!(matches!(roc(&[h], &[vec![false, false]]), Err(Error::Evaluation(_))));
    }

    #[test]
    fn invalid_pixels_excluded() {
        // The only negative is invalid, so there are no negatives left.
        let h = HeatMap::new(3, 1, vec![0.5, 0.6, 0.1], vec![true, true, false]).unwrap();
        assert!(roc(&[h], &[vec![true, true, false]]).is_err());
    }

    #[test]
    fn points_sorted_and_bounded() {
        let mut rng = seed::rng(2, "roc-test", 0);
        let scores: Vec<f64> = (0..5000).map(|_| rng.gen::<f64>().powi(3)).collect();
        let labels: Vec<bool> = scores.iter().map(|s| *s > 0.3 || rng.gen_bool(0.1)).collect();
        let c = roc(&[hm(scores)], &[labels]).unwrap();
        assert_eq!(c.points.len(), ROC_THRESHOLDS + 2);
        assert_eq!((c.points[0].fpr, c.points[0].tpr), (0.0, 0.0));
        let last = c.points.last().unwrap();
        assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
        for w in c.points.windows(2) {
            assert!(w[0].fpr <= w[1].fpr);
        }
        assert!((0.0..=1.0).contains(&c.auc));
        let csv = c.to_csv();
        assert!(csv.starts_with("threshold,fpr,tpr\n"));
        assert!(csv.trim_end().lines().last().unwrap().starts_with("auc,"));
    }

    #[test]
    fn auc_matches_pairwise_count() {
        // Brute-force Mann–Whitney: P(score+ > score-) + 0.5 P(tie).
        let mut rng = seed::rng(3, "roc-test", 0);
        let scores: Vec<f64> = (0..400).map(|_| (rng.gen::<f64>() * 20.0).floor()).collect();
        let labels: Vec<bool> = (0..400).map(|i| rng.gen_bool(0.3 + 0.01 * scores[i])).collect();
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for i in 0..400 {
            for j in 0..400 {
                if labels[i] && !labels[j] {
                    pairs += 1.0;
                    if scores[i] > scores[j] {
                        wins += 1.0;
                    } else if scores[i] == scores[j] {
                        wins += 0.5;
                    }
                }
            }
        }
        let c = roc(&[hm(scores)], &[labels]).unwrap();
        assert!((c.auc - wins / pairs).abs() < 1e-12);
    }
}
