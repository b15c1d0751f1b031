//! Multiplex graphs: `L` independently generated layers over the same node
//! labels, with every node coupled to each of its replicas in the other
//! layers.
//!
//! Replicas are addressed either by [`ReplicaId`] or by their flat index
//! `layer * n_l + node`, which is what the hot loops use.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// One node instance inside one layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ReplicaId {
    pub node: usize,
    pub layer: usize,
}

impl ReplicaId {
    pub fn new(node: usize, layer: usize) -> Self {
        ReplicaId { node, layer }
    }

    pub fn flat(self, nodes_per_layer: usize) -> usize {
        self.layer * nodes_per_layer + self.node
    }

    pub fn from_flat(index: usize, nodes_per_layer: usize) -> Self {
        ReplicaId {
            node: index % nodes_per_layer,
            layer: index / nodes_per_layer,
        }
    }
}

impl fmt::Display for ReplicaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, layer {})", self.node, self.layer)
    }
}

/// Classification of a multiplex edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EdgeClass {
    Intra(usize),
    Inter,
}

impl EdgeClass {
    /// Position of this class in a per-class parameter vector laid out as
    /// `[layer 0, .., layer L-1, inter]`.
    pub fn slot(self, layer_count: usize) -> usize {
        match self {
            EdgeClass::Intra(layer) => layer,
            EdgeClass::Inter => layer_count,
        }
    }
}

/// Undirected simple graph of one layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerGraph {
    layer_id: usize,
    node_count: usize,
    edges: Vec<(usize, usize)>,
    adj: Vec<Vec<usize>>,
}

impl LayerGraph {
    /// Builds a layer from an edge list. Edges are normalized to `(min, max)`;
    /// self-loops, duplicates and out-of-range endpoints are rejected.
    pub fn new(
        layer_id: usize,
        node_count: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let mut list: Vec<(usize, usize)> = Vec::new();
        for (u, v) in edges {
            if u >= node_count || v >= node_count {
                return Err(Error::invalid(format!(
                    "edge ({u}, {v}) has an endpoint outside [0, {node_count})"
                )));
            }
            if u == v {
                return Err(Error::invalid(format!("self-loop on node {u}")));
            }
            list.push((u.min(v), u.max(v)));
        }
        list.sort_unstable();
        if let Some(w) = list.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::invalid(format!(
                "duplicate edge ({}, {})",
                w[0].0, w[0].1
            )));
        }
        Ok(Self::from_sorted(layer_id, node_count, list))
    }

    fn from_sorted(layer_id: usize, node_count: usize, edges: Vec<(usize, usize)>) -> Self {
        let mut adj = vec![Vec::new(); node_count];
        for &(u, v) in &edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        LayerGraph {
            layer_id,
            node_count,
            edges,
            adj,
        }
    }

    pub fn layer_id(&self) -> usize {
        self.layer_id
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    /// Edge count `m_i` of this layer.
    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges as sorted `(u, v)` pairs with `u < v`.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Sorted intra-layer neighbors of `node`.
    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.adj[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adj[node].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.adj.iter().map(Vec::len).collect()
    }
}

/// G(n, p) layer with `p = k_avg / (n - 1)`.
pub fn generate_er_layer<R: Rng + ?Sized>(n: usize, k_avg: f64, rng: &mut R) -> Result<LayerGraph> {
    if n < 2 {
        return Err(Error::invalid(format!(
            "ER layer needs at least 2 nodes, got {n}"
        )));
    }
    if !(k_avg > 0.0 && k_avg <= (n - 1) as f64) {
        return Err(Error::invalid(format!(
            "ER mean degree {k_avg} must lie in (0, {}]",
            n - 1
        )));
    }
    let p = k_avg / (n - 1) as f64;
    let mut edges = Vec::new();
    for u in 0..n - 1 {
        for v in u + 1..n {
            if rng.gen::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    Ok(LayerGraph::from_sorted(0, n, edges))
}

/// Preferential attachment growth from a clique of `m` seed nodes. Node
/// labels follow insertion order.
pub fn generate_ba_layer<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> Result<LayerGraph> {
    if m < 1 || m >= n {
        return Err(Error::invalid(format!(
            "BA attachment count {m} must satisfy 1 <= m < n = {n}"
        )));
    }
    let mut edges = Vec::with_capacity(m * (m - 1) / 2 + (n - m) * m);
    // every edge contributes both endpoints, so sampling uniformly from this
    // list is sampling proportionally to degree
    let mut endpoints: Vec<usize> = Vec::with_capacity(2 * edges.capacity());
    for u in 0..m {
        for v in u + 1..m {
            edges.push((u, v));
            endpoints.push(u);
            endpoints.push(v);
        }
    }
    let mut targets: Vec<usize> = Vec::with_capacity(m);
    for j in m..n {
        targets.clear();
        while targets.len() < m {
            let t = if endpoints.is_empty() {
                rng.gen_range(0..j)
            } else {
                *endpoints.choose(rng).expect("non-empty")
            };
            if !targets.contains(&t) {
                targets.push(t);
            }
        }
        for &t in &targets {
            edges.push((t, j));
            endpoints.push(t);
            endpoints.push(j);
        }
    }
    edges.sort_unstable();
    Ok(LayerGraph::from_sorted(0, n, edges))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GraphModel {
    Er,
    Ba,
}

impl fmt::Display for GraphModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GraphModel::Er => "er",
            GraphModel::Ba => "ba",
        })
    }
}

impl FromStr for GraphModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "er" => Ok(GraphModel::Er),
            "ba" => Ok(GraphModel::Ba),
            other => Err(Error::invalid(format!("unknown graph model `{other}`"))),
        }
    }
}

/// Everything needed to regenerate a multiplex graph.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphGenSpec {
    pub model: GraphModel,
    pub layer_count: usize,
    pub nodes_per_layer: usize,
    pub mean_degree: f64,
    pub seed: u64,
}

impl GraphGenSpec {
    /// BA attachment count `round(<k> / 2)`.
    pub fn attachment_count(&self) -> usize {
        (self.mean_degree / 2.0).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_count == 0 {
            return Err(Error::invalid("layer count must be at least 1"));
        }
        let n = self.nodes_per_layer;
        match self.model {
            GraphModel::Er => {
                if n < 2 || !(self.mean_degree > 0.0 && self.mean_degree <= (n - 1) as f64) {
                    return Err(Error::invalid(format!(
                        "ER needs n >= 2 and 0 < <k> <= n - 1 (n = {n}, <k> = {})",
                        self.mean_degree
                    )));
                }
            }
            GraphModel::Ba => {
                let m = self.attachment_count();
                if m < 1 || m >= n {
                    return Err(Error::invalid(format!(
                        "BA needs 1 <= round(<k>/2) < n (m = {m}, n = {n})"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn generate(&self) -> Result<MultiplexGraph> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let layers = (0..self.layer_count)
            .map(|_| match self.model {
                GraphModel::Er => {
                    generate_er_layer(self.nodes_per_layer, self.mean_degree, &mut rng)
                }
                GraphModel::Ba => {
                    generate_ba_layer(self.nodes_per_layer, self.attachment_count(), &mut rng)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let mut graph = couple_multiplex(layers)?;
        graph.origin = Some((self.model, self.seed));
        Ok(graph)
    }
}

/// `L` layers of equal node count; interlinks join every pair of replicas of
/// the same node and are implied rather than stored.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiplexGraph {
    layers: Vec<LayerGraph>,
    nodes_per_layer: usize,
    origin: Option<(GraphModel, u64)>,
}

/// Couples layers into a multiplex. Layer ids are reassigned by position.
pub fn couple_multiplex(layers: Vec<LayerGraph>) -> Result<MultiplexGraph> {
    let first = layers
        .first()
        .ok_or_else(|| Error::invalid("a multiplex needs at least one layer"))?;
    let n = first.node_count;
    if let Some((i, bad)) = layers.iter().enumerate().find(|(_, l)| l.node_count != n) {
        return Err(Error::MismatchedLayers {
            layer: i,
            expected: n,
            found: bad.node_count,
        });
    }
    let layers = layers
        .into_iter()
        .enumerate()
        .map(|(i, mut l)| {
            l.layer_id = i;
            l
        })
        .collect();
    Ok(MultiplexGraph {
        layers,
        nodes_per_layer: n,
        origin: None,
    })
}

impl MultiplexGraph {
    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn nodes_per_layer(&self) -> usize {
        self.nodes_per_layer
    }

    /// Total replica count `n_tot = L * n_l`.
    pub fn replica_count(&self) -> usize {
        self.layers.len() * self.nodes_per_layer
    }

    pub fn layers(&self) -> &[LayerGraph] {
        &self.layers
    }

    pub fn layer(&self, layer: usize) -> &LayerGraph {
        &self.layers[layer]
    }

    pub fn origin(&self) -> Option<(GraphModel, u64)> {
        self.origin
    }

    pub fn interlink_count(&self) -> usize {
        let l = self.layers.len();
        self.nodes_per_layer * l * (l - 1) / 2
    }

    pub fn intra_edge_count(&self) -> usize {
        self.layers.iter().map(LayerGraph::edge_count).sum()
    }

    pub fn contains(&self, r: ReplicaId) -> bool {
        r.node < self.nodes_per_layer && r.layer < self.layers.len()
    }

    pub fn check(&self, r: ReplicaId) -> Result<()> {
        if self.contains(r) {
            Ok(())
        } else {
            Err(Error::ReplicaOutOfRange {
                node: r.node,
                layer: r.layer,
            })
        }
    }

    pub fn flat(&self, r: ReplicaId) -> usize {
        r.flat(self.nodes_per_layer)
    }

    pub fn replica(&self, index: usize) -> ReplicaId {
        ReplicaId::from_flat(index, self.nodes_per_layer)
    }

    /// Neighbors of `r` in ascending flat-index order.
    pub fn neighbors(&self, r: ReplicaId) -> Result<Vec<(ReplicaId, EdgeClass)>> {
        self.check(r)?;
        Ok(self
            .neighbors_flat(self.flat(r))
            .map(|(i, c)| (self.replica(i), c))
            .collect())
    }

    /// Flat-index neighbor iteration, ascending. Replicas in lower layers come
    /// first, then intra-layer neighbors, then replicas in higher layers.
    pub fn neighbors_flat(&self, index: usize) -> impl Iterator<Item = (usize, EdgeClass)> + '_ {
        let n = self.nodes_per_layer;
        let layer = index / n;
        let node = index % n;
        let below = (0..layer).map(move |b| (b * n + node, EdgeClass::Inter));
        let intra = self.layers[layer]
            .neighbors(node)
            .iter()
            .map(move |&u| (layer * n + u, EdgeClass::Intra(layer)));
        let above = (layer + 1..self.layers.len()).map(move |b| (b * n + node, EdgeClass::Inter));
        below.chain(intra).chain(above)
    }

    /// Line-oriented text: header `L n_l model seed`, then `layer u v` for
    /// every intra-layer edge. Graphs built from explicit layers use the
    /// model token `custom` and seed 0.
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        let (model, seed) = match self.origin {
            Some((m, s)) => (m.to_string(), s),
            None => ("custom".to_string(), 0),
        };
        writeln!(
            out,
            "{} {} {} {}",
            self.layers.len(),
            self.nodes_per_layer,
            model,
            seed
        )?;
        for layer in &self.layers {
            for &(u, v) in layer.edges() {
                writeln!(out, "{} {} {}", layer.layer_id, u, v)?;
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_text(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("ascii output")
    }

    pub fn read_text<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines().enumerate().map(|(i, l)| (i + 1, l)).filter(
            |(_, l)| !matches!(l, Ok(s) if s.trim().is_empty() || s.trim_start().starts_with('#')),
        );
        let (hline, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "missing header".into(),
        })?;
        let header = header?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(Error::Parse {
                line: hline,
                msg: "header must be `L n_l model seed`".into(),
            });
        }
        let layer_count: usize = parse_field(fields[0], hline, "L")?;
        let n: usize = parse_field(fields[1], hline, "n_l")?;
        let origin = match fields[2] {
            "custom" => None,
            m => Some((
                m.parse::<GraphModel>().map_err(|e| Error::Parse {
                    line: hline,
                    msg: e.to_string(),
                })?,
                parse_field(fields[3], hline, "seed")?,
            )),
        };
        if layer_count == 0 || n == 0 {
            return Err(Error::Parse {
                line: hline,
                msg: "L and n_l must be positive".into(),
            });
        }
        let mut edge_lists = vec![Vec::new(); layer_count];
        for (lineno, line) in lines {
            let line = line?;
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 3 {
                return Err(Error::Parse {
                    line: lineno,
                    msg: "edge line must be `layer u v`".into(),
                });
            }
            let layer: usize = parse_field(parts[0], lineno, "layer")?;
            let u: usize = parse_field(parts[1], lineno, "u")?;
            let v: usize = parse_field(parts[2], lineno, "v")?;
            if layer >= layer_count {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("layer {layer} out of range"),
                });
            }
            edge_lists[layer].push((u, v));
        }
        let layers = edge_lists
            .into_iter()
            .enumerate()
            .map(|(i, e)| LayerGraph::new(i, n, e))
            .collect::<Result<Vec<_>>>()?;
        let mut g = couple_multiplex(layers)?;
        g.origin = origin;
        Ok(g)
    }
}

pub(crate) fn parse_field<T: FromStr>(s: &str, line: usize, name: &str) -> Result<T> {
    s.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("cannot parse {name} from `{s}`"),
    })
}
