//! Test-only helpers: a straight-line reference estimator and small
//! statistics utilities. Nothing here calls into the locator module.

#![allow(dead_code)]

use std::collections::BTreeSet;

use multiplex_locate::{DelayMoments, DelayVector, LayerGraph, MultiplexGraph, ReplicaId};
use rand::Rng;

const TOL: f64 = 1e-9;

fn close(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= TOL * a.abs().max(b.abs()).max(1.0)
}

/// Reference estimator over dense matrices: Floyd-Warshall distances,
/// explicit edge sets for every tree path, set intersection for the
/// covariance and Gauss-Jordan elimination for the solve. Returns scores
/// indexed by flat replica index.
pub fn oracle_scores(g: &MultiplexGraph, dv: &DelayVector, moments: &DelayMoments) -> Vec<f64> {
    let n = g.nodes_per_layer();
    let layers = g.layer_count();
    let total = n * layers;
    let inf = f64::INFINITY;

    let mut mu = vec![vec![inf; total]; total];
    let mut var = vec![vec![0.0; total]; total];
    for (l, layer) in g.layers().iter().enumerate() {
        for &(u, v) in layer.edges() {
            let (a, b) = (l * n + u, l * n + v);
            mu[a][b] = moments.mu()[l];
            mu[b][a] = moments.mu()[l];
            var[a][b] = moments.sigma2()[l];
            var[b][a] = moments.sigma2()[l];
        }
    }
    for u in 0..n {
        for a in 0..layers {
            for b in a + 1..layers {
                let (x, y) = (a * n + u, b * n + u);
                mu[x][y] = moments.mu()[layers];
                mu[y][x] = moments.mu()[layers];
                var[x][y] = moments.sigma2()[layers];
                var[y][x] = moments.sigma2()[layers];
            }
        }
    }

    let mut dist = mu.clone();
    for (i, row) in dist.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    for k in 0..total {
        for i in 0..total {
            for j in 0..total {
                let via = dist[i][k] + dist[k][j];
                if via < dist[i][j] {
                    dist[i][j] = via;
                }
            }
        }
    }

    let obs: Vec<usize> = dv.reporting().iter().map(|r| r.flat(n)).collect();
    let d: Vec<f64> = dv.delays().iter().map(|&x| x as f64).collect();

    (0..total)
        .map(|v| {
            if obs.iter().any(|&o| dist[v][o].is_infinite()) {
                return f64::NEG_INFINITY;
            }
            // explicit root-to-observer edge sets
            let path = |o: usize| -> Vec<(usize, usize)> {
                let mut edges = Vec::new();
                let mut w = o;
                while w != v {
                    let p = (0..total)
                        .find(|&p| {
                            mu[p][w].is_finite()
                                && dist[v][p] < dist[v][w]
                                && close(dist[v][p] + mu[p][w], dist[v][w])
                        })
                        .expect("predecessor");
                    edges.push((p.min(w), p.max(w)));
                    w = p;
                }
                edges
            };
            let paths: Vec<Vec<(usize, usize)>> = obs.iter().map(|&o| path(o)).collect();
            let weight = |edges: &[(usize, usize)], m: &Vec<Vec<f64>>| {
                edges.iter().map(|&(a, b)| m[a][b]).sum::<f64>()
            };
            let ref_len = weight(&paths[0], &mu);
            let mu_v: Vec<f64> = paths[1..]
                .iter()
                .map(|p| weight(p, &mu) - ref_len)
                .collect();

            let ref_set: BTreeSet<(usize, usize)> = paths[0].iter().copied().collect();
            let to_ref: Vec<BTreeSet<(usize, usize)>> = paths[1..]
                .iter()
                .map(|p| {
                    let s: BTreeSet<(usize, usize)> = p.iter().copied().collect();
                    s.symmetric_difference(&ref_set).copied().collect()
                })
                .collect();
            let k = mu_v.len();
            let mut lambda = vec![vec![0.0; k]; k];
            for i in 0..k {
                for j in 0..k {
                    lambda[i][j] = to_ref[i]
                        .intersection(&to_ref[j])
                        .map(|&(a, b)| var[a][b])
                        .sum();
                }
            }
            if mu_v.iter().all(|&m| m == 0.0) {
                return 0.0;
            }
            let max_diag = (0..k).map(|i| lambda[i][i]).fold(0.0, f64::max);
            let eps = (1e-9 * max_diag).max(1e-12);
            for (i, row) in lambda.iter_mut().enumerate() {
                row[i] += eps;
            }
            let x = gauss_solve(lambda, mu_v.clone());
            x.iter()
                .zip(d.iter().zip(&mu_v))
                .map(|(xi, (di, mi))| xi * (di - 0.5 * mi))
                .sum()
        })
        .collect()
}

/// Gauss-Jordan elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        let p = a[col][col];
        for x in &mut a[col][col..] {
            *x /= p;
        }
        b[col] /= p;
        let pivot_row = a[col].clone();
        for i in 0..n {
            let f = a[i][col];
            if i != col && f != 0.0 {
                for (x, y) in a[i][col..].iter_mut().zip(&pivot_row[col..]) {
                    *x -= f * y;
                }
                b[i] -= f * b[col];
            }
        }
    }
    b
}

pub fn scores_match(a: f64, b: f64) -> bool {
    if a.is_infinite() || b.is_infinite() {
        return a == b;
    }
    close(a, b)
}

/// Random multiplex with `L * n_l <= max_total`, each layer G(n, p).
pub fn random_multiplex<R: Rng>(rng: &mut R, max_total: usize) -> MultiplexGraph {
    let layers = rng.gen_range(1..=3usize);
    let n = rng.gen_range(3..=max_total / layers);
    let p = rng.gen_range(0.25..0.6);
    let layer_graphs = (0..layers)
        .map(|_| {
            let mut edges = Vec::new();
            for u in 0..n {
                for v in u + 1..n {
                    if rng.gen::<f64>() < p {
                        edges.push((u, v));
                    }
                }
            }
            LayerGraph::new(0, n, edges).unwrap()
        })
        .collect();
    multiplex_locate::couple_multiplex(layer_graphs).unwrap()
}

/// Picks `k` distinct replicas.
pub fn random_replicas<R: Rng>(rng: &mut R, g: &MultiplexGraph, k: usize) -> Vec<ReplicaId> {
    rand::seq::index::sample(rng, g.replica_count(), k)
        .into_iter()
        .map(|i| g.replica(i))
        .collect()
}

/// Ranks with ties averaged.
fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}
