//! Detector-based maximum-likelihood source estimation on a multiplex.
//!
//! For a candidate source `v` the reporting observers are joined to `v` by
//! shortest paths under the mean link delays. On the resulting tree:
//!
//! * `mu_v[i]` is the expected delay of observer `i + 1` relative to the
//!   reference observer, i.e. the difference of their path weights;
//! * `cov_v[i][j]` is the summed delay variance over the links shared by the
//!   in-tree paths from observers `i + 1` and `j + 1` to the reference.
//!
//! The candidate's score is `mu_v' cov_v^-1 (d - mu_v / 2)`; the estimate is
//! the highest-scoring replica.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{EdgeClass, MultiplexGraph, ReplicaId};
use crate::observation::DelayVector;
use crate::spread::DelayMoments;

/// Relative tolerance for equal path lengths and equal scores, with an
/// absolute floor at magnitude 1.
pub const TIE_TOLERANCE: f64 = 1e-9;

pub fn nearly_equal(a: f64, b: f64) -> bool {
    if a == b {
        return true;
    }
    (a - b).abs() <= TIE_TOLERANCE * a.abs().max(b.abs()).max(1.0)
}

/// Ridge added to the covariance diagonal before factorization.
pub fn ridge(cov: &DMatrix<f64>) -> f64 {
    let max_diag = cov.diagonal().iter().copied().fold(0.0, f64::max);
    (1e-9 * max_diag).max(1e-12)
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Frontier {
    dist: f64,
    node: usize,
}

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Dijkstra distances from `root` (flat index) with mean delays as weights.
/// Unreachable replicas get `f64::INFINITY`.
pub fn shortest_distances(g: &MultiplexGraph, root: usize, moments: &DelayMoments) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; g.replica_count()];
    let mut heap = BinaryHeap::new();
    dist[root] = 0.0;
    heap.push(Frontier {
        dist: 0.0,
        node: root,
    });
    while let Some(Frontier { dist: d, node }) = heap.pop() {
        if d > dist[node] {
            continue;
        }
        for (next, class) in g.neighbors_flat(node) {
            let nd = d + moments.mu_of(class);
            if nd < dist[next] {
                dist[next] = nd;
                heap.push(Frontier {
                    dist: nd,
                    node: next,
                });
            }
        }
    }
    dist
}

/// Union of the shortest weighted paths from a candidate to every reporting
/// observer. Among equally short alternatives the lowest flat-index
/// predecessor is taken.
#[derive(Debug, Clone)]
pub struct PathTree {
    root: usize,
    nodes_per_layer: usize,
    observers: Vec<usize>,
    parent: Vec<Option<(usize, EdgeClass)>>,
    path_weight: Vec<f64>,
}

impl PathTree {
    pub fn root(&self) -> ReplicaId {
        ReplicaId::from_flat(self.root, self.nodes_per_layer)
    }

    /// Observers covered by the tree, in delay-vector order.
    pub fn observers(&self) -> Vec<ReplicaId> {
        self.observers
            .iter()
            .map(|&i| ReplicaId::from_flat(i, self.nodes_per_layer))
            .collect()
    }

    /// Mean-delay weight of the root-to-observer path, delay-vector order.
    pub fn path_weight(&self) -> &[f64] {
        &self.path_weight
    }

    pub fn parent(&self, r: ReplicaId) -> Option<(ReplicaId, EdgeClass)> {
        self.parent
            .get(r.flat(self.nodes_per_layer))
            .copied()
            .flatten()
            .map(|(p, c)| (ReplicaId::from_flat(p, self.nodes_per_layer), c))
    }

    pub fn contains(&self, r: ReplicaId) -> bool {
        let i = r.flat(self.nodes_per_layer);
        i == self.root || self.parent.get(i).is_some_and(Option::is_some)
    }

    /// Replicas of the tree, ascending flat index.
    pub fn members(&self) -> Vec<ReplicaId> {
        (0..self.parent.len())
            .filter(|&i| i == self.root || self.parent[i].is_some())
            .map(|i| ReplicaId::from_flat(i, self.nodes_per_layer))
            .collect()
    }
}

pub fn build_path_tree(
    g: &MultiplexGraph,
    root: ReplicaId,
    observers: &[ReplicaId],
    moments: &DelayMoments,
) -> Result<PathTree> {
    g.check(root)?;
    check_moments(g, moments)?;
    let root_flat = g.flat(root);
    let dist = shortest_distances(g, root_flat, moments);
    let mut parent: Vec<Option<(usize, EdgeClass)>> = vec![None; g.replica_count()];
    let mut obs_flat = Vec::with_capacity(observers.len());
    let mut path_weight = Vec::with_capacity(observers.len());
    for &o in observers {
        g.check(o)?;
        let target = g.flat(o);
        if !dist[target].is_finite() {
            return Err(Error::Unreachable {
                candidate: root,
                observer: o,
            });
        }
        obs_flat.push(target);
        path_weight.push(dist[target]);
        let mut w = target;
        while w != root_flat && parent[w].is_none() {
            let (p, class) = g
                .neighbors_flat(w)
                .find(|&(p, class)| {
                    dist[p] < dist[w] && nearly_equal(dist[p] + moments.mu_of(class), dist[w])
                })
                .expect("a reached replica has a shortest-path predecessor");
            parent[w] = Some((p, class));
            w = p;
        }
    }
    Ok(PathTree {
        root: root_flat,
        nodes_per_layer: g.nodes_per_layer(),
        observers: obs_flat,
        parent,
        path_weight,
    })
}

fn check_moments(g: &MultiplexGraph, moments: &DelayMoments) -> Result<()> {
    if moments.layer_count() != g.layer_count() {
        return Err(Error::invalid(format!(
            "delay moments cover {} layers, graph has {}",
            moments.layer_count(),
            g.layer_count()
        )));
    }
    Ok(())
}

/// `mu_v[i] = |P(v, o_{i+2})| - |P(v, o_1)|` under mean delays.
pub fn deterministic_delay(tree: &PathTree) -> Vec<f64> {
    let reference = tree.path_weight[0];
    tree.path_weight[1..]
        .iter()
        .map(|w| w - reference)
        .collect()
}

/// Delay covariance of the non-reference observers.
///
/// The tree is re-rooted at the reference observer. The links shared by the
/// paths `o_i -> o_1` and `o_j -> o_1` are then exactly the links above the
/// meeting vertex of `o_i` and `o_j`, so each entry is the variance depth of
/// that vertex. A post-order pass assigns every pair once, at its meeting
/// vertex.
pub fn covariance(tree: &PathTree, moments: &DelayMoments) -> DMatrix<f64> {
    let dim = tree.observers.len().saturating_sub(1);
    let mut cov = DMatrix::zeros(dim, dim);
    if dim == 0 {
        return cov;
    }

    // compact undirected copy of the tree
    let members: Vec<usize> = (0..tree.parent.len())
        .filter(|&i| i == tree.root || tree.parent[i].is_some())
        .collect();
    let mut local = vec![usize::MAX; tree.parent.len()];
    for (k, &m) in members.iter().enumerate() {
        local[m] = k;
    }
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); members.len()];
    for (k, &m) in members.iter().enumerate() {
        if let Some((p, class)) = tree.parent[m] {
            let w = moments.sigma2_of(class);
            adj[k].push((local[p], w));
            adj[local[p]].push((k, w));
        }
    }
    let mut slot = vec![None; members.len()];
    for (s, &o) in tree.observers.iter().enumerate() {
        slot[local[o]] = Some(s);
    }

    // preorder from the reference observer
    let start = local[tree.observers[0]];
    let mut depth = vec![0.0; members.len()];
    let mut up = vec![usize::MAX; members.len()];
    let mut order = Vec::with_capacity(members.len());
    let mut stack = vec![start];
    up[start] = start;
    while let Some(x) = stack.pop() {
        order.push(x);
        for &(y, w) in &adj[x] {
            if up[y] == usize::MAX {
                up[y] = x;
                depth[y] = depth[x] + w;
                stack.push(y);
            }
        }
    }

    let mut below: Vec<Vec<usize>> = vec![Vec::new(); members.len()];
    for &x in order.iter().rev() {
        let mut acc: Vec<usize> = Vec::new();
        if let Some(s) = slot[x].filter(|&s| s > 0) {
            cov[(s - 1, s - 1)] = depth[x];
            acc.push(s - 1);
        }
        for &(y, _) in &adj[x] {
            if up[y] != x || y == x {
                continue;
            }
            let child = std::mem::take(&mut below[y]);
            for &i in &acc {
                for &j in &child {
                    cov[(i, j)] = depth[x];
                    cov[(j, i)] = depth[x];
                }
            }
            if child.len() > acc.len() {
                let small = std::mem::replace(&mut acc, child);
                acc.extend(small);
            } else {
                acc.extend(child);
            }
        }
        below[x] = acc;
    }
    cov
}

/// `mu_v' cov^-1 (d - mu_v / 2)` through a Cholesky solve of the ridged
/// covariance. `None` when the factorization fails or the result is not
/// finite.
pub fn score(mu_v: &[f64], cov: &DMatrix<f64>, d: &[f64]) -> Option<f64> {
    let dim = mu_v.len();
    if dim != d.len() || cov.nrows() != dim || cov.ncols() != dim {
        return None;
    }
    if mu_v.iter().all(|&m| m == 0.0) {
        return Some(0.0);
    }
    let mut ridged = cov.clone();
    let eps = ridge(cov);
    for i in 0..dim {
        ridged[(i, i)] += eps;
    }
    let chol = ridged.cholesky()?;
    let mu = DVector::from_column_slice(mu_v);
    let x = chol.solve(&mu);
    let s: f64 = x
        .iter()
        .zip(d.iter().zip(mu_v))
        .map(|(xi, (di, mi))| xi * (di - 0.5 * mi))
        .sum();
    s.is_finite().then_some(s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateScore {
    pub candidate: ReplicaId,
    /// `-inf` for candidates that cannot be scored.
    pub score: f64,
    pub mu_v: Vec<f64>,
}

impl CandidateScore {
    pub fn is_valid(&self) -> bool {
        self.score.is_finite()
    }
}

/// Candidates in descending score order with explicit tie groups. Inside a
/// group candidates are ordered by flat index; invalid candidates form the
/// last group.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceRanking {
    entries: Vec<CandidateScore>,
    groups: Vec<Range<usize>>,
    nodes_per_layer: usize,
}

fn same_score(a: f64, b: f64) -> bool {
    if a.is_infinite() || b.is_infinite() {
        return a == b;
    }
    nearly_equal(a, b)
}

impl SourceRanking {
    pub fn from_scores(mut entries: Vec<CandidateScore>, nodes_per_layer: usize) -> Self {
        let flat = |c: &CandidateScore| c.candidate.flat(nodes_per_layer);
        entries.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then_with(|| flat(a).cmp(&flat(b)))
        });
        let mut groups = Vec::new();
        let mut start = 0;
        while start < entries.len() {
            let lead = entries[start].score;
            let mut end = start + 1;
            while end < entries.len() && same_score(lead, entries[end].score) {
                end += 1;
            }
            entries[start..end].sort_by_key(flat);
            groups.push(start..end);
            start = end;
        }
        SourceRanking {
            entries,
            groups,
            nodes_per_layer,
        }
    }

    pub fn entries(&self) -> &[CandidateScore] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn tie_groups(&self) -> &[Range<usize>] {
        &self.groups
    }

    /// Candidates sharing the best score.
    pub fn top_group(&self) -> &[CandidateScore] {
        self.groups
            .first()
            .map(|g| &self.entries[g.clone()])
            .unwrap_or(&[])
    }

    /// The estimate `s_hat`: first member of the top tie group.
    pub fn best(&self) -> Option<&CandidateScore> {
        self.entries.first()
    }

    pub fn position(&self, r: ReplicaId) -> Option<usize> {
        self.entries.iter().position(|c| c.candidate == r)
    }

    /// Tie group containing the entry at `position`.
    pub fn group_at(&self, position: usize) -> Option<Range<usize>> {
        self.groups.iter().find(|g| g.contains(&position)).cloned()
    }

    pub fn scores_by_flat(&self) -> Vec<f64> {
        let mut out = vec![f64::NEG_INFINITY; self.entries.len()];
        for c in &self.entries {
            let i = c.candidate.flat(self.nodes_per_layer);
            if i < out.len() {
                out[i] = c.score;
            }
        }
        out
    }
}

fn score_candidate(
    g: &MultiplexGraph,
    candidate: ReplicaId,
    dv: &DelayVector,
    d: &[f64],
    moments: &DelayMoments,
) -> Result<CandidateScore> {
    let invalid = CandidateScore {
        candidate,
        score: f64::NEG_INFINITY,
        mu_v: Vec::new(),
    };
    let tree = match build_path_tree(g, candidate, dv.reporting(), moments) {
        Ok(t) => t,
        Err(Error::Unreachable { .. }) => return Ok(invalid),
        Err(e) => return Err(e),
    };
    let mu_v = deterministic_delay(&tree);
    let cov = covariance(&tree, moments);
    Ok(match score(&mu_v, &cov, d) {
        Some(s) => CandidateScore {
            candidate,
            score: s,
            mu_v,
        },
        None => CandidateScore { mu_v, ..invalid },
    })
}

/// Scores the given candidates in parallel.
pub fn rank_candidates(
    g: &MultiplexGraph,
    dv: &DelayVector,
    moments: &DelayMoments,
    candidates: &[ReplicaId],
) -> Result<SourceRanking> {
    check_moments(g, moments)?;
    if dv.reporting().len() < 2 {
        return Err(Error::BudgetTooSmall(dv.reporting().len()));
    }
    for &r in dv.reporting() {
        g.check(r)?;
    }
    let d = dv.delays_f64();
    let scores = candidates
        .par_iter()
        .map(|&v| score_candidate(g, v, dv, &d, moments))
        .collect::<Result<Vec<_>>>()?;
    Ok(SourceRanking::from_scores(scores, g.nodes_per_layer()))
}

/// Scores every replica of the graph.
pub fn rank_sources(
    g: &MultiplexGraph,
    dv: &DelayVector,
    moments: &DelayMoments,
) -> Result<SourceRanking> {
    let all: Vec<ReplicaId> = (0..g.replica_count()).map(|i| g.replica(i)).collect();
    rank_candidates(g, dv, moments, &all)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{couple_multiplex, LayerGraph};
    use crate::spread::{delay_moments, SpreadParams};

    fn single(n: usize, edges: &[(usize, usize)]) -> MultiplexGraph {
        couple_multiplex(vec![LayerGraph::new(0, n, edges.iter().copied()).unwrap()]).unwrap()
    }

    fn moments1(mu: f64, sigma2: f64) -> DelayMoments {
        DelayMoments::new(vec![mu, mu], vec![sigma2, sigma2]).unwrap()
    }

    fn r(n: usize) -> ReplicaId {
        ReplicaId::new(n, 0)
    }

    #[test]
    fn direct_hop_beats_detour() {
        // duplex on two nodes: intra weight 2 in layer 0, 1 in layer 1, 1 across
        let g = couple_multiplex(vec![
            LayerGraph::new(0, 2, [(0, 1)]).unwrap(),
            LayerGraph::new(0, 2, [(0, 1)]).unwrap(),
        ])
        .unwrap();
        let m = DelayMoments::new(vec![2.0, 1.0, 1.0], vec![1.0, 1.0, 1.0]).unwrap();
        let t = build_path_tree(&g, r(0), &[r(1)], &m).unwrap();
        assert_eq!(t.path_weight(), &[2.0]);
        assert_eq!(t.parent(r(1)), Some((r(0), EdgeClass::Intra(0))));
        assert_eq!(t.members(), vec![r(0), r(1)]);
    }

    #[test]
    fn equal_weights_give_bfs_tree_with_low_index_parent() {
        // 4-cycle 0-1-3-2-0: node 3 reachable via 1 or 2 at equal distance
        let g = single(4, &[(0, 1), (1, 3), (3, 2), (2, 0)]);
        let t = build_path_tree(&g, r(0), &[r(3)], &moments1(1.0, 1.0)).unwrap();
        assert_eq!(t.parent(r(3)), Some((r(1), EdgeClass::Intra(0))));
        assert!(!t.contains(r(2)));
    }

    #[test]
    fn root_observer_has_zero_weight() {
        let g = single(3, &[(0, 1), (1, 2)]);
        let t = build_path_tree(&g, r(1), &[r(1), r(2)], &moments1(2.0, 1.0)).unwrap();
        assert_eq!(t.path_weight(), &[0.0, 2.0]);
        assert_eq!(deterministic_delay(&t), vec![2.0]);
    }

    #[test]
    fn unreachable_observer_is_reported() {
        let g = single(3, &[(0, 1)]);
        let err = build_path_tree(&g, r(0), &[r(1), r(2)], &moments1(1.0, 1.0)).unwrap_err();
        assert!(matches!(err, Error::Unreachable { .. }));
    }

    #[test]
    fn symmetric_candidate_has_zero_delay() {
        // o1 - v - o2
        let g = single(3, &[(0, 1), (1, 2)]);
        let t = build_path_tree(&g, r(1), &[r(0), r(2)], &moments1(1.0, 1.0)).unwrap();
        assert_eq!(deterministic_delay(&t), vec![0.0]);
    }

    #[test]
    fn off_center_candidate_delay() {
        // o1 - a - b - o2, candidate b, mu = 2
        let g = single(4, &[(0, 1), (1, 2), (2, 3)]);
        let t = build_path_tree(&g, r(2), &[r(0), r(3)], &moments1(2.0, 2.0)).unwrap();
        assert_eq!(deterministic_delay(&t), vec![-2.0]);
        let cov = covariance(&t, &moments1(2.0, 2.0));
        assert_eq!(cov, DMatrix::from_row_slice(1, 1, &[6.0]));
    }

    #[test]
    fn star_covariance() {
        // center 0, leaves 1, 2, 3 observed with o_1 = 1
        let g = single(4, &[(0, 1), (0, 2), (0, 3)]);
        let m = moments1(1.0, 2.0);
        let t = build_path_tree(&g, r(0), &[r(1), r(2), r(3)], &m).unwrap();
        let cov = covariance(&t, &m);
        assert_eq!(cov, DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 4.0]));
        assert_eq!(deterministic_delay(&t), vec![0.0, 0.0]);
        assert_eq!(score(&[0.0, 0.0], &cov, &[5.0, 1.0]), Some(0.0));
    }

    #[test]
    fn zero_variance_is_regularized() {
        let g = single(4, &[(0, 1), (0, 2), (0, 3)]);
        let m = delay_moments(&SpreadParams::new(vec![1.0], 1.0).unwrap());
        let t = build_path_tree(&g, r(1), &[r(1), r(2), r(3)], &m).unwrap();
        let cov = covariance(&t, &m);
        assert!(cov.iter().all(|&x| x == 0.0));
        let s = score(&deterministic_delay(&t), &cov, &[2.0, 2.0]).unwrap();
        assert!(s.is_finite());
    }

    #[test]
    fn one_by_one_score() {
        let cov = DMatrix::from_row_slice(1, 1, &[2.0]);
        let s = score(&[4.0], &cov, &[4.0]).unwrap();
        assert!((s - 4.0).abs() < 1e-6);
        assert_eq!(score(&[0.0], &cov, &[9.0]), Some(0.0));
        assert_eq!(score(&[1.0, 2.0], &cov, &[1.0]), None);
    }

    #[test]
    fn ranking_groups_ties_and_puts_invalid_last() {
        let mk = |n, s| CandidateScore {
            candidate: r(n),
            score: s,
            mu_v: vec![],
        };
        let ranking = SourceRanking::from_scores(
            vec![
                mk(0, 1.0),
                mk(1, f64::NEG_INFINITY),
                mk(2, 3.0),
                mk(3, 3.0 + 1e-12),
                mk(4, f64::NEG_INFINITY),
            ],
            5,
        );
        let order: Vec<usize> = ranking.entries().iter().map(|c| c.candidate.node).collect();
        assert_eq!(order, vec![2, 3, 0, 1, 4]);
        assert_eq!(ranking.tie_groups(), &[0..2, 2..3, 3..5]);
        assert_eq!(ranking.top_group().len(), 2);
        assert_eq!(ranking.group_at(4), Some(3..5));
    }

    #[test]
    fn path_center_wins_with_consistent_delays() {
        // a-b-c-d-e, observers a and e, source c gives d = [0]
        let g = single(5, &[(0, 1), (1, 2), (2, 3), (3, 4)]);
        let m = delay_moments(&SpreadParams::new(vec![0.9], 0.9).unwrap());
        let dv = DelayVector::from_reports(5, &[(r(0), Some(2)), (r(4), Some(2))]).unwrap();
        let ranking = rank_sources(&g, &dv, &m).unwrap();
        let top: Vec<usize> = ranking
            .top_group()
            .iter()
            .map(|c| c.candidate.node)
            .collect();
        assert_eq!(top, vec![2]);
    }

    #[test]
    fn rejects_mismatched_moments() {
        let g = single(3, &[(0, 1), (1, 2)]);
        let m = DelayMoments::new(vec![1.0, 1.0, 1.0], vec![1.0, 1.0, 1.0]).unwrap();
        let dv = DelayVector::from_reports(3, &[(r(0), Some(0)), (r(2), Some(1))]).unwrap();
        assert!(rank_sources(&g, &dv, &m).is_err());
    }
}
