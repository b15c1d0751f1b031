//! Average precision and credible set size over repeated localization tests.

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::ReplicaId;
use crate::locator::SourceRanking;

/// Result of one localization test.
#[derive(Debug, Clone, PartialEq)]
pub struct TestOutcome {
    pub true_source: ReplicaId,
    pub top_tie_size: usize,
    pub source_in_top: bool,
    /// Pessimistic rank: the source is placed last inside its tie group.
    pub source_rank: usize,
    /// Precision when only the physical node is judged: the found set is the
    /// distinct node labels of the top group.
    pub node_precision: f64,
}

impl TestOutcome {
    pub fn from_ranking(ranking: &SourceRanking, true_source: ReplicaId) -> Result<Self> {
        let top = ranking.top_group();
        if top.is_empty() {
            return Err(Error::invalid("empty ranking"));
        }
        let source_rank = source_rank(ranking, true_source)?;
        let mut nodes: Vec<usize> = top.iter().map(|c| c.candidate.node).collect();
        nodes.sort_unstable();
        nodes.dedup();
        let node_precision = if nodes.contains(&true_source.node) {
            1.0 / nodes.len() as f64
        } else {
            0.0
        };
        Ok(TestOutcome {
            true_source,
            top_tie_size: top.len(),
            source_in_top: top.iter().any(|c| c.candidate == true_source),
            source_rank,
            node_precision,
        })
    }
}

/// `tp / (tp + fp)` where the method reports the whole top tie group.
pub fn precision_single(outcome: &TestOutcome) -> f64 {
    if outcome.source_in_top && outcome.top_tie_size > 0 {
        1.0 / outcome.top_tie_size as f64
    } else {
        0.0
    }
}

/// Candidates scored strictly higher plus the size of the source's tie group.
pub fn source_rank(ranking: &SourceRanking, true_source: ReplicaId) -> Result<usize> {
    let pos = ranking
        .position(true_source)
        .ok_or_else(|| Error::invalid(format!("true source {true_source} missing from ranking")))?;
    let group = ranking
        .group_at(pos)
        .expect("every position belongs to a group");
    Ok(group.end)
}

/// Smallest `k` such that at least a fraction `alpha` of the ranks are `<= k`.
pub fn css(ranks: &[usize], alpha: f64) -> Result<usize> {
    if ranks.is_empty() {
        return Err(Error::invalid("credible set size needs at least one rank"));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::invalid(format!(
            "confidence {alpha} must lie in (0, 1]"
        )));
    }
    let mut sorted = ranks.to_vec();
    sorted.sort_unstable();
    let n = sorted.len() as f64;
    for (i, &k) in sorted.iter().enumerate() {
        // all equal ranks must be counted before testing the fraction
        if sorted.get(i + 1) == Some(&k) {
            continue;
        }
        if (i + 1) as f64 / n >= alpha {
            return Ok(k);
        }
    }
    Ok(*sorted.last().expect("non-empty"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsSummary {
    pub avg_precision: f64,
    /// `(alpha, css)` in the order the confidences were requested.
    pub css: Vec<(f64, usize)>,
    pub n_tests: usize,
    pub discarded: usize,
    pub avg_node_precision: f64,
}

impl MetricsSummary {
    pub fn css_at(&self, alpha: f64) -> Option<usize> {
        self.css.iter().find(|(a, _)| *a == alpha).map(|&(_, k)| k)
    }
}

pub fn summarize(outcomes: &[TestOutcome], alphas: &[f64]) -> Result<MetricsSummary> {
    if outcomes.is_empty() {
        return Err(Error::invalid("no outcomes to summarize"));
    }
    let n = outcomes.len() as f64;
    let avg_precision = outcomes.iter().map(precision_single).sum::<f64>() / n;
    let avg_node_precision = outcomes.iter().map(|o| o.node_precision).sum::<f64>() / n;
    let ranks: Vec<usize> = outcomes.iter().map(|o| o.source_rank).collect();
    let css = alphas
        .iter()
        .map(|&a| css(&ranks, a).map(|k| (a, k)))
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricsSummary {
        avg_precision,
        css,
        n_tests: outcomes.len(),
        discarded: 0,
        avg_node_precision,
    })
}

/// Percentile bootstrap interval for the mean of `values`.
pub fn bootstrap_mean_ci<R: Rng + ?Sized>(
    values: &[f64],
    resamples: usize,
    level: f64,
    rng: &mut R,
) -> (f64, f64) {
    if values.is_empty() || resamples == 0 {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len();
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| values[rng.gen_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    let pick = |q: f64| {
        let idx = (q * (resamples - 1) as f64).round() as usize;
        means[idx.min(resamples - 1)]
    };
    (pick(tail), pick(1.0 - tail))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::locator::CandidateScore;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn outcome(top: usize, hit: bool, rank: usize) -> TestOutcome {
        TestOutcome {
            true_source: ReplicaId::new(0, 0),
            top_tie_size: top,
            source_in_top: hit,
            source_rank: rank,
            node_precision: 0.0,
        }
    }

    fn ranking(scores: &[f64]) -> SourceRanking {
        SourceRanking::from_scores(
            scores
                .iter()
                .enumerate()
                .map(|(i, &s)| CandidateScore {
                    candidate: ReplicaId::new(i, 0),
                    score: s,
                    mu_v: vec![],
                })
                .collect(),
            scores.len(),
        )
    }

    #[test]
    fn single_precision() {
        assert_eq!(precision_single(&outcome(1, true, 1)), 1.0);
        assert_eq!(precision_single(&outcome(2, true, 2)), 0.5);
        assert_eq!(precision_single(&outcome(1, false, 4)), 0.0);
    }

    #[test]
    fn pessimistic_ranks() {
        let rk = ranking(&[9.0, 7.0, 7.0, 3.0]);
        assert_eq!(source_rank(&rk, ReplicaId::new(0, 0)).unwrap(), 1);
        assert_eq!(source_rank(&rk, ReplicaId::new(1, 0)).unwrap(), 3);
        assert_eq!(source_rank(&rk, ReplicaId::new(2, 0)).unwrap(), 3);
        let flat = ranking(&[1.0; 6]);
        assert_eq!(source_rank(&flat, ReplicaId::new(4, 0)).unwrap(), 6);
        assert!(source_rank(&flat, ReplicaId::new(9, 0)).is_err());
    }

    #[test]
    fn credible_set_size() {
        assert_eq!(css(&[1; 20], 0.95).unwrap(), 1);
        let ranks: Vec<usize> = (1..=100).collect();
        assert_eq!(css(&ranks, 0.95).unwrap(), 95);
        assert_eq!(css(&[1, 1, 1, 50], 0.5).unwrap(), 1);
        assert_eq!(css(&[1, 1, 1, 50], 1.0).unwrap(), 50);
        assert!(css(&[], 0.5).is_err());
        assert!(css(&[1], 0.0).is_err());
    }

    #[test]
    fn summary_averages_precision() {
        let s = summarize(
            &[
                outcome(1, true, 1),
                outcome(1, false, 3),
                outcome(2, true, 2),
            ],
            &[0.95],
        )
        .unwrap();
        assert_eq!(s.avg_precision, 0.5);
        assert_eq!(s.n_tests, 3);
        assert_eq!(s.css_at(0.95), Some(3));
        let s = summarize(&[outcome(1, true, 1)], &[0.95]).unwrap();
        assert_eq!(s.css_at(0.95), Some(1));
        assert!(summarize(&[], &[0.95]).is_err());
    }

    #[test]
    fn node_level_precision() {
        // replicas of node 0 in two layers tie at the top
        let entries = vec![
            CandidateScore {
                candidate: ReplicaId::new(0, 0),
                score: 2.0,
                mu_v: vec![],
            },
            CandidateScore {
                candidate: ReplicaId::new(0, 1),
                score: 2.0,
                mu_v: vec![],
            },
            CandidateScore {
                candidate: ReplicaId::new(1, 0),
                score: 1.0,
                mu_v: vec![],
            },
            CandidateScore {
                candidate: ReplicaId::new(1, 1),
                score: 0.0,
                mu_v: vec![],
            },
        ];
        let rk = SourceRanking::from_scores(entries, 2);
        let o = TestOutcome::from_ranking(&rk, ReplicaId::new(0, 0)).unwrap();
        assert_eq!(o.top_tie_size, 2);
        assert_eq!(precision_single(&o), 0.5);
        assert_eq!(o.node_precision, 1.0);
        assert_eq!(o.source_rank, 2);
    }

    #[test]
    fn bootstrap_interval_brackets_mean() {
        let values: Vec<f64> = (0..200).map(|i| (i % 2) as f64).collect();
        let (lo, hi) = bootstrap_mean_ci(&values, 2000, 0.95, &mut ChaCha8Rng::seed_from_u64(1));
        assert!(lo < 0.5 && 0.5 < hi);
        assert!(hi - lo < 0.2);
    }
}
