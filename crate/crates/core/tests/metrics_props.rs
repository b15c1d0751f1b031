use multiplex_locate::{
    css, precision_single, source_rank, CandidateScore, ReplicaId, SourceRanking, TestOutcome,
};
use proptest::prelude::*;

fn ranking(scores: &[f64]) -> SourceRanking {
    let entries = scores
        .iter()
        .enumerate()
        .map(|(i, &s)| CandidateScore {
            candidate: ReplicaId::new(i, 0),
            score: s,
            mu_v: Vec::new(),
        })
        .collect();
    SourceRanking::from_scores(entries, scores.len())
}

/// Scores drawn from a handful of values so ties are common.
fn tied_scores() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(
        prop::sample::select(vec![f64::NEG_INFINITY, -3.0, -1.0, 0.0, 0.5, 2.0]),
        1..40,
    )
}

proptest! {
    #[test]
    fn precision_is_a_fraction(scores in tied_scores(), pick in any::<prop::sample::Index>()) {
        let rk = ranking(&scores);
        let src = ReplicaId::new(pick.index(scores.len()), 0);
        let o = TestOutcome::from_ranking(&rk, src).unwrap();
        let p = precision_single(&o);
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert!((0.0..=1.0).contains(&o.node_precision));
        prop_assert_eq!(p > 0.0, o.source_rank == o.top_tie_size);
    }

    #[test]
    fn rank_counts_strictly_better_and_ties(scores in tied_scores(), pick in any::<prop::sample::Index>()) {
        let rk = ranking(&scores);
        let i = pick.index(scores.len());
        let better = scores.iter().filter(|&&s| s > scores[i]).count();
        let tied = scores.iter().filter(|&&s| s == scores[i]).count();
        prop_assert_eq!(source_rank(&rk, ReplicaId::new(i, 0)).unwrap(), better + tied);
    }

    #[test]
    fn css_grows_with_confidence(ranks in prop::collection::vec(1usize..200, 1..100), a in 0.01f64..1.0, b in 0.01f64..1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(css(&ranks, lo).unwrap() <= css(&ranks, hi).unwrap());
    }

    #[test]
    fn full_confidence_css_is_worst_rank(ranks in prop::collection::vec(1usize..200, 1..100)) {
        prop_assert_eq!(css(&ranks, 1.0).unwrap(), *ranks.iter().max().unwrap());
    }

    #[test]
    fn css_covers_requested_fraction(ranks in prop::collection::vec(1usize..50, 1..100), a in 0.01f64..1.0) {
        let k = css(&ranks, a).unwrap();
        let n = ranks.len() as f64;
        prop_assert!(ranks.iter().filter(|&&r| r <= k).count() as f64 / n >= a);
        if k > 1 {
            prop_assert!((ranks.iter().filter(|&&r| r < k).count() as f64 / n) < a);
        }
    }
}
