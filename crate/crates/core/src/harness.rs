//! Seeded Monte Carlo experiments over parameter grids.
//!
//! Four templates cover the bilayer sweeps (infection rates or observer
//! densities) and the layer-count sweeps (fixed nodes per layer or fixed
//! total size). Every realization draws a fresh graph, observer set, source
//! and spreading run from random streams keyed by the master seed, the grid
//! point and the realization index, so results do not depend on scheduling.

use std::fmt;
use std::fs;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::graph::{GraphGenSpec, GraphModel, MultiplexGraph, ReplicaId};
use crate::locator::rank_sources;
use crate::metrics::{precision_single, summarize, MetricsSummary, TestOutcome};
use crate::observation::{build_delay_vector, observers_per_layer, place_observers};
use crate::spread::{default_t_max, delay_moments, simulate, SpreadParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Template {
    RateGrid,
    DensityGrid,
    LayersFixedNl,
    LayersFixedNtot,
}

impl Template {
    pub fn name(self) -> &'static str {
        match self {
            Template::RateGrid => "rate_grid",
            Template::DensityGrid => "density_grid",
            Template::LayersFixedNl => "layers_fixed_nl",
            Template::LayersFixedNtot => "layers_fixed_ntot",
        }
    }

    fn tag(self) -> u64 {
        match self {
            Template::RateGrid => 1,
            Template::DensityGrid => 2,
            Template::LayersFixedNl => 3,
            Template::LayersFixedNtot => 4,
        }
    }

    /// Grid coordinate column names, in CSV order.
    pub fn coordinate_columns(self) -> &'static [&'static str] {
        match self {
            Template::RateGrid => &["beta1", "beta2", "beta_inter"],
            Template::DensityGrid => &["rho1", "rho2", "beta_inter"],
            Template::LayersFixedNl | Template::LayersFixedNtot => {
                &["layers", "nodes_per_layer", "n_tot", "beta_inter"]
            }
        }
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Template {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rate_grid" => Ok(Template::RateGrid),
            "density_grid" => Ok(Template::DensityGrid),
            "layers_fixed_nl" => Ok(Template::LayersFixedNl),
            "layers_fixed_ntot" => Ok(Template::LayersFixedNtot),
            other => Err(Error::config(
                "template",
                format!(
                    "unknown template `{other}` (expected rate_grid, density_grid, layers_fixed_nl or layers_fixed_ntot)"
                ),
            )),
        }
    }
}

/// Fully resolved experiment description.
///
/// The bilayer templates sweep `beta1 x beta2 x beta_inter` (rate grid) or
/// `rho1 x rho2 x beta_inter` (density grid); the non-swept pair must hold
/// exactly one value. The layer templates sweep `layers x beta_inter` with
/// scalar `beta_intra` and `rho` applied to every layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub template: Template,
    pub model: GraphModel,
    pub nodes_per_layer: usize,
    /// Only used by `layers_fixed_ntot`.
    pub total_nodes: usize,
    pub mean_degree: f64,
    pub beta1: Vec<f64>,
    pub beta2: Vec<f64>,
    pub beta_inter: Vec<f64>,
    pub rho1: Vec<f64>,
    pub rho2: Vec<f64>,
    pub layers: Vec<usize>,
    pub beta_intra: f64,
    pub rho: f64,
    pub realizations: usize,
    pub master_seed: u64,
    pub alphas: Vec<f64>,
    pub source_layer: usize,
    /// Reuse one graph per grid point instead of a fresh graph per
    /// realization.
    pub fixed_graph: bool,
    /// Append the physical-node precision column to the result CSV.
    pub node_level: bool,
}

fn tenths() -> Vec<f64> {
    (1..=9).map(|i| i as f64 / 10.0).collect()
}

impl ExperimentConfig {
    /// Defaults for a template and graph model.
    pub fn defaults(template: Template, model: GraphModel) -> Self {
        let base = ExperimentConfig {
            template,
            model,
            nodes_per_layer: 500,
            total_nodes: 1200,
            mean_degree: 8.0,
            beta1: vec![0.5],
            beta2: vec![0.5],
            beta_inter: vec![0.1, 0.5, 0.9],
            rho1: vec![0.1],
            rho2: vec![0.1],
            layers: vec![1, 2, 3, 4],
            beta_intra: 0.5,
            rho: 0.1,
            realizations: 1000,
            master_seed: 1,
            alphas: vec![0.95],
            source_layer: 0,
            fixed_graph: false,
            node_level: false,
        };
        match template {
            Template::RateGrid => ExperimentConfig {
                nodes_per_layer: if model == GraphModel::Er { 1000 } else { 500 },
                beta1: tenths(),
                beta2: tenths(),
                ..base
            },
            Template::DensityGrid => ExperimentConfig {
                rho1: vec![0.02, 0.05, 0.1, 0.15, 0.2],
                rho2: vec![0.02, 0.05, 0.1, 0.15, 0.2],
                ..base
            },
            Template::LayersFixedNl | Template::LayersFixedNtot => ExperimentConfig {
                beta_inter: vec![0.8],
                ..base
            },
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text)
            .map_err(|e| Error::config("<root>", format!("not valid JSON: {e}")))?;
        let obj = value
            .as_object()
            .ok_or_else(|| Error::config("<root>", "config must be a JSON object"))?;
        const KNOWN: &[&str] = &[
            "template",
            "model",
            "nodes_per_layer",
            "total_nodes",
            "mean_degree",
            "beta1",
            "beta2",
            "beta_inter",
            "rho1",
            "rho2",
            "layers",
            "beta_intra",
            "rho",
            "realizations",
            "master_seed",
            "alphas",
            "source_layer",
            "fixed_graph",
            "node_level",
        ];
        if let Some(k) = obj.keys().find(|k| !KNOWN.contains(&k.as_str())) {
            return Err(Error::config(k.clone(), "unknown field"));
        }
        let template: String = take(obj, "template")?
            .ok_or_else(|| Error::config("template", "missing required field"))?;
        let template: Template = template.parse()?;
        let model = match take::<String>(obj, "model")? {
            Some(m) => m
                .parse()
                .map_err(|e: Error| Error::config("model", e.to_string()))?,
            None => GraphModel::Er,
        };
        let mut cfg = Self::defaults(template, model);
        macro_rules! set {
            ($field:ident) => {
                if let Some(v) = take(obj, stringify!($field))? {
                    cfg.$field = v;
                }
            };
        }
        macro_rules! set_list {
            ($field:ident) => {
                if let Some(v) = take_list(obj, stringify!($field))? {
                    cfg.$field = v;
                }
            };
        }
        set!(nodes_per_layer);
        set!(total_nodes);
        set!(mean_degree);
        set_list!(beta1);
        set_list!(beta2);
        set_list!(beta_inter);
        set_list!(rho1);
        set_list!(rho2);
        set_list!(layers);
        set!(beta_intra);
        set!(rho);
        set!(realizations);
        set!(master_seed);
        set_list!(alphas);
        set!(source_layer);
        set!(fixed_graph);
        set!(node_level);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| {
            Error::config("--config", format!("cannot read {}: {e}", path.display()))
        })?;
        Self::from_json_str(&text)
    }

    /// Checks ranges and per-point feasibility; errors name the field.
    pub fn validate(&self) -> Result<()> {
        fn probs(field: &str, values: &[f64]) -> Result<()> {
            if values.is_empty() {
                return Err(Error::config(field, "must not be empty"));
            }
            for &v in values {
                if !(v > 0.0 && v <= 1.0) {
                    return Err(Error::config(
                        field,
                        format!("value {v} must lie in (0, 1]"),
                    ));
                }
            }
            let mut sorted = values.to_vec();
            sorted.sort_by(f64::total_cmp);
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::config(field, "duplicate values"));
            }
            Ok(())
        }
        probs("beta_inter", &self.beta_inter)?;
        probs("alphas", &self.alphas)?;
        if !(self.mean_degree.is_finite() && self.mean_degree > 0.0) {
            return Err(Error::config("mean_degree", "must be positive"));
        }
        if self.realizations == 0 {
            return Err(Error::config("realizations", "must be at least 1"));
        }
        match self.template {
            Template::RateGrid | Template::DensityGrid => {
                probs("beta1", &self.beta1)?;
                probs("beta2", &self.beta2)?;
                probs("rho1", &self.rho1)?;
                probs("rho2", &self.rho2)?;
                let fixed: [(&str, usize); 2] = if self.template == Template::RateGrid {
                    [("rho1", self.rho1.len()), ("rho2", self.rho2.len())]
                } else {
                    [("beta1", self.beta1.len()), ("beta2", self.beta2.len())]
                };
                for (field, len) in fixed {
                    if len != 1 {
                        return Err(Error::config(
                            field,
                            format!("the {} template takes a single value here", self.template),
                        ));
                    }
                }
                if self.source_layer >= 2 {
                    return Err(Error::config(
                        "source_layer",
                        "must be 0 or 1 for a bilayer template",
                    ));
                }
            }
            Template::LayersFixedNl | Template::LayersFixedNtot => {
                probs("beta_intra", &[self.beta_intra])?;
                probs("rho", &[self.rho])?;
                if self.layers.is_empty() || self.layers.contains(&0) {
                    return Err(Error::config(
                        "layers",
                        "must be a non-empty list of positive counts",
                    ));
                }
                let mut sorted = self.layers.clone();
                sorted.sort_unstable();
                sorted.dedup();
                if sorted.len() != self.layers.len() {
                    return Err(Error::config("layers", "duplicate values"));
                }
                if self.source_layer >= sorted[0] {
                    return Err(Error::config(
                        "source_layer",
                        format!("must be below the smallest layer count {}", sorted[0]),
                    ));
                }
                if self.template == Template::LayersFixedNtot {
                    if let Some(l) = self
                        .layers
                        .iter()
                        .find(|&&l| !self.total_nodes.is_multiple_of(l))
                    {
                        return Err(Error::config(
                            "total_nodes",
                            format!("{} is not divisible by layer count {l}", self.total_nodes),
                        ));
                    }
                }
            }
        }
        for point in self.grid() {
            let spec = GraphGenSpec {
                model: self.model,
                layer_count: point.layer_count,
                nodes_per_layer: point.nodes_per_layer,
                mean_degree: self.mean_degree,
                seed: 0,
            };
            let field = match self.template {
                Template::LayersFixedNtot => "total_nodes",
                _ => "nodes_per_layer",
            };
            spec.validate()
                .map_err(|e| Error::config(field, e.to_string()))?;
            let budget: usize = point
                .rho
                .iter()
                .map(|&r| observers_per_layer(r, point.nodes_per_layer))
                .sum();
            if budget < 2 {
                let field = match self.template {
                    Template::RateGrid | Template::DensityGrid => "rho1",
                    _ => "rho",
                };
                return Err(Error::config(
                    field,
                    format!("fewer than 2 observers at grid point {:?}", point.coords),
                ));
            }
        }
        Ok(())
    }

    /// Grid points in ascending coordinate order.
    pub fn grid(&self) -> Vec<GridPoint> {
        let sorted = |v: &[f64]| {
            let mut v = v.to_vec();
            v.sort_by(f64::total_cmp);
            v
        };
        let beta_inter = sorted(&self.beta_inter);
        let mut points = Vec::new();
        match self.template {
            Template::RateGrid | Template::DensityGrid => {
                let (xs, ys) = if self.template == Template::RateGrid {
                    (sorted(&self.beta1), sorted(&self.beta2))
                } else {
                    (sorted(&self.rho1), sorted(&self.rho2))
                };
                for &x in &xs {
                    for &y in &ys {
                        for &bi in &beta_inter {
                            let (betas, rhos) = if self.template == Template::RateGrid {
                                (vec![x, y], vec![self.rho1[0], self.rho2[0]])
                            } else {
                                (vec![self.beta1[0], self.beta2[0]], vec![x, y])
                            };
                            points.push(GridPoint {
                                coords: vec![x, y, bi],
                                layer_count: 2,
                                nodes_per_layer: self.nodes_per_layer,
                                beta_intra: betas,
                                beta_inter: bi,
                                rho: rhos,
                            });
                        }
                    }
                }
            }
            Template::LayersFixedNl | Template::LayersFixedNtot => {
                let mut layers = self.layers.clone();
                layers.sort_unstable();
                for &l in &layers {
                    let n_l = if self.template == Template::LayersFixedNl {
                        self.nodes_per_layer
                    } else {
                        self.total_nodes / l
                    };
                    for &bi in &beta_inter {
                        points.push(GridPoint {
                            coords: vec![l as f64, n_l as f64, (l * n_l) as f64, bi],
                            layer_count: l,
                            nodes_per_layer: n_l,
                            beta_intra: vec![self.beta_intra; l],
                            beta_inter: bi,
                            rho: vec![self.rho; l],
                        });
                    }
                }
            }
        }
        points
    }

    pub fn csv_header(&self) -> String {
        let mut cols: Vec<String> = self
            .template
            .coordinate_columns()
            .iter()
            .map(|s| s.to_string())
            .collect();
        cols.push("avg_precision".into());
        cols.extend(self.alphas.iter().map(|&a| css_column(a)));
        cols.push("n_tests".into());
        cols.push("discarded".into());
        if self.node_level {
            cols.push("node_precision".into());
        }
        cols.join(",")
    }
}

fn take<T: DeserializeOwned>(obj: &Map<String, Value>, field: &str) -> Result<Option<T>> {
    match obj.get(field) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => serde_json::from_value(v.clone())
            .map(Some)
            .map_err(|e| Error::config(field, e.to_string())),
    }
}

/// Accepts either a scalar or a list.
fn take_list<T: DeserializeOwned>(obj: &Map<String, Value>, field: &str) -> Result<Option<Vec<T>>> {
    match obj.get(field) {
        Some(Value::Array(_)) => take(obj, field),
        None | Some(Value::Null) => Ok(None),
        Some(v) => serde_json::from_value(v.clone())
            .map(|x| Some(vec![x]))
            .map_err(|e| Error::config(field, e.to_string())),
    }
}

/// `css95` for 0.95, `css99.9` for 0.999.
pub fn css_column(alpha: f64) -> String {
    let pct = (alpha * 100.0 * 1e6).round() / 1e6;
    format!("css{pct}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    /// Values of the template's coordinate columns.
    pub coords: Vec<f64>,
    pub layer_count: usize,
    pub nodes_per_layer: usize,
    pub beta_intra: Vec<f64>,
    pub beta_inter: f64,
    pub rho: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
enum Purpose {
    Graph = 1,
    Observers = 2,
    Source = 3,
    Spread = 4,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

impl GridPoint {
    fn key(&self, template: Template) -> u64 {
        self.coords.iter().fold(splitmix64(template.tag()), |h, c| {
            splitmix64(h ^ c.to_bits())
        })
    }
}

/// ChaCha stream for one (point, realization, purpose). The realization index
/// selects the stream, so substreams are independent of execution order.
fn stream(master: u64, point_key: u64, purpose: Purpose, realization: u64) -> ChaCha8Rng {
    let seed = splitmix64(master ^ splitmix64(point_key ^ splitmix64(purpose as u64)));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(realization);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub enum RealizationResult {
    Tested(TestOutcome),
    /// Fewer than two observers were infected.
    Discarded {
        source: ReplicaId,
    },
}

/// One test: graph, observers, source, spread, delay vector, ranking.
pub fn run_realization(
    cfg: &ExperimentConfig,
    point: &GridPoint,
    index: usize,
) -> Result<RealizationResult> {
    let key = point.key(cfg.template);
    let r = index as u64;
    let graph_stream = if cfg.fixed_graph { 0 } else { r };
    let graph_seed = stream(cfg.master_seed, key, Purpose::Graph, graph_stream).next_u64();
    let graph = GraphGenSpec {
        model: cfg.model,
        layer_count: point.layer_count,
        nodes_per_layer: point.nodes_per_layer,
        mean_degree: cfg.mean_degree,
        seed: graph_seed,
    }
    .generate()?;
    let params = SpreadParams::new(point.beta_intra.clone(), point.beta_inter)?;
    let obs = place_observers(
        &graph,
        &point.rho,
        &mut stream(cfg.master_seed, key, Purpose::Observers, r),
    )?;
    let source = ReplicaId::new(
        stream(cfg.master_seed, key, Purpose::Source, r).gen_range(0..point.nodes_per_layer),
        cfg.source_layer,
    );
    evaluate(
        &graph,
        source,
        &params,
        &obs,
        &mut stream(cfg.master_seed, key, Purpose::Spread, r),
    )
}

/// Spreads from `source`, then localizes it from the observers' reports.
pub fn evaluate<R: Rng + ?Sized>(
    graph: &MultiplexGraph,
    source: ReplicaId,
    params: &SpreadParams,
    obs: &crate::observation::ObserverSet,
    rng: &mut R,
) -> Result<RealizationResult> {
    let rec = simulate(graph, source, params, rng, default_t_max(graph, params))?;
    let dv = match build_delay_vector(&rec, obs) {
        Ok(dv) => dv,
        Err(Error::UnusableRealization { .. }) => {
            return Ok(RealizationResult::Discarded { source })
        }
        Err(e) => return Err(e),
    };
    let ranking = rank_sources(graph, &dv, &delay_moments(params))?;
    Ok(RealizationResult::Tested(TestOutcome::from_ranking(
        &ranking, source,
    )?))
}

#[derive(Debug, Clone)]
pub struct PointResult {
    pub point: GridPoint,
    pub realizations: Vec<RealizationResult>,
    pub summary: MetricsSummary,
}

impl PointResult {
    pub fn outcomes(&self) -> impl Iterator<Item = &TestOutcome> {
        self.realizations.iter().filter_map(|r| match r {
            RealizationResult::Tested(o) => Some(o),
            RealizationResult::Discarded { .. } => None,
        })
    }

    /// Per-test precision values, for interval estimates.
    pub fn precisions(&self) -> Vec<f64> {
        self.outcomes().map(precision_single).collect()
    }
}

fn summarize_point(
    outcomes: &[TestOutcome],
    discarded: usize,
    alphas: &[f64],
) -> Result<MetricsSummary> {
    if outcomes.is_empty() {
        return Ok(MetricsSummary {
            avg_precision: f64::NAN,
            css: Vec::new(),
            n_tests: 0,
            discarded,
            avg_node_precision: f64::NAN,
        });
    }
    let mut s = summarize(outcomes, alphas)?;
    s.discarded = discarded;
    Ok(s)
}

/// Runs every grid point for `cfg.realizations` realizations. `threads`
/// defaults to the available parallelism; results do not depend on it.
pub fn run_experiment(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<Vec<PointResult>> {
    cfg.validate()?;
    let points = cfg.grid();
    let tasks: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|p| (0..cfg.realizations).map(move |r| (p, r)))
        .collect();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t.max(1));
    }
    let pool = builder
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;
    let results: Vec<RealizationResult> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(p, r)| run_realization(cfg, &points[p], r))
            .collect::<Result<Vec<_>>>()
    })?;

    let mut out = Vec::with_capacity(points.len());
    let mut chunks = results.chunks(cfg.realizations);
    for point in points {
        let realizations = chunks.next().expect("one chunk per point").to_vec();
        let tested: Vec<TestOutcome> = realizations
            .iter()
            .filter_map(|r| match r {
                RealizationResult::Tested(o) => Some(o.clone()),
                RealizationResult::Discarded { .. } => None,
            })
            .collect();
        let discarded = realizations.len() - tested.len();
        let summary = summarize_point(&tested, discarded, &cfg.alphas)?;
        out.push(PointResult {
            point,
            realizations,
            summary,
        });
    }
    Ok(out)
}

fn fmt_coord(template: Template, column: usize, value: f64) -> String {
    match template {
        Template::LayersFixedNl | Template::LayersFixedNtot if column < 3 => {
            format!("{}", value as u64)
        }
        _ => format!("{value}"),
    }
}

fn write_summary_row<W: Write>(
    out: &mut W,
    template: Template,
    coords: &[f64],
    summary: &MetricsSummary,
    alphas: &[f64],
    node_level: bool,
) -> Result<()> {
    let mut fields: Vec<String> = coords
        .iter()
        .enumerate()
        .map(|(i, &c)| fmt_coord(template, i, c))
        .collect();
    fields.push(format!("{:.6}", summary.avg_precision));
    for &a in alphas {
        fields.push(match summary.css_at(a) {
            Some(k) => k.to_string(),
            None => "NA".into(),
        });
    }
    fields.push(summary.n_tests.to_string());
    fields.push(summary.discarded.to_string());
    if node_level {
        fields.push(format!("{:.6}", summary.avg_node_precision));
    }
    writeln!(out, "{}", fields.join(","))?;
    Ok(())
}

/// Writes one row per grid point.
pub fn write_results_csv<W: Write>(
    cfg: &ExperimentConfig,
    results: &[PointResult],
    mut out: W,
) -> Result<()> {
    writeln!(out, "{}", cfg.csv_header())?;
    for r in results {
        write_summary_row(
            &mut out,
            cfg.template,
            &r.point.coords,
            &r.summary,
            &cfg.alphas,
            cfg.node_level,
        )?;
    }
    Ok(())
}

/// Per-realization dump: coordinates, realization index, status and the
/// fields of the test outcome.
pub fn write_outcomes_csv<W: Write>(
    cfg: &ExperimentConfig,
    results: &[PointResult],
    mut out: W,
) -> Result<()> {
    let coords = cfg.template.coordinate_columns();
    writeln!(
        out,
        "template,{},realization,status,source_layer,source_node,top_tie_size,source_in_top,source_rank,node_precision",
        coords.join(",")
    )?;
    for r in results {
        let c: Vec<String> = r
            .point
            .coords
            .iter()
            .enumerate()
            .map(|(i, &v)| fmt_coord(cfg.template, i, v))
            .collect();
        for (i, real) in r.realizations.iter().enumerate() {
            match real {
                RealizationResult::Tested(o) => writeln!(
                    out,
                    "{},{},{},tested,{},{},{},{},{},{}",
                    cfg.template,
                    c.join(","),
                    i,
                    o.true_source.layer,
                    o.true_source.node,
                    o.top_tie_size,
                    o.source_in_top,
                    o.source_rank,
                    o.node_precision
                )?,
                RealizationResult::Discarded { source } => writeln!(
                    out,
                    "{},{},{},discarded,{},{},,,,",
                    cfg.template,
                    c.join(","),
                    i,
                    source.layer,
                    source.node
                )?,
            }
        }
    }
    Ok(())
}

/// Re-aggregates a per-realization dump with the given confidences. Rows
/// are grouped by their grid coordinates, in order of first appearance.
pub fn summarize_outcomes_csv<R: BufRead, W: Write>(
    input: R,
    alphas: &[f64],
    mut out: W,
) -> Result<usize> {
    let mut lines = input.lines();
    let header = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "missing header".into(),
    })??;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.first() != Some(&"template") {
        return Err(Error::Parse {
            line: 1,
            msg: "not an outcomes file (first column must be `template`)".into(),
        });
    }
    let idx = |name: &str| {
        cols.iter()
            .position(|c| *c == name)
            .ok_or_else(|| Error::Parse {
                line: 1,
                msg: format!("missing column `{name}`"),
            })
    };
    let real_col = idx("realization")?;
    let status_col = idx("status")?;
    let layer_col = idx("source_layer")?;
    let node_col = idx("source_node")?;
    let tie_col = idx("top_tie_size")?;
    let top_col = idx("source_in_top")?;
    let rank_col = idx("source_rank")?;
    let nodep_col = idx("node_precision")?;

    let mut template: Option<Template> = None;
    let mut groups: Vec<(Vec<f64>, Vec<TestOutcome>, usize)> = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != cols.len() {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected {} fields, found {}", cols.len(), f.len()),
            });
        }
        let t: Template = f[0].parse().map_err(|_| Error::Parse {
            line: lineno,
            msg: format!("unknown template `{}`", f[0]),
        })?;
        template.get_or_insert(t);
        let coords = f[1..real_col]
            .iter()
            .map(|s| crate::graph::parse_field::<f64>(s, lineno, "coordinate"))
            .collect::<Result<Vec<_>>>()?;
        let pos = match groups.iter().position(|(c, _, _)| *c == coords) {
            Some(p) => p,
            None => {
                groups.push((coords, Vec::new(), 0));
                groups.len() - 1
            }
        };
        match f[status_col] {
            "discarded" => groups[pos].2 += 1,
            "tested" => {
                let p = |col: usize, name: &str| {
                    crate::graph::parse_field::<usize>(f[col], lineno, name)
                };
                let outcome = TestOutcome {
                    true_source: ReplicaId::new(
                        p(node_col, "source_node")?,
                        p(layer_col, "source_layer")?,
                    ),
                    top_tie_size: p(tie_col, "top_tie_size")?,
                    source_in_top: crate::graph::parse_field(f[top_col], lineno, "source_in_top")?,
                    source_rank: p(rank_col, "source_rank")?,
                    node_precision: crate::graph::parse_field(
                        f[nodep_col],
                        lineno,
                        "node_precision",
                    )?,
                };
                groups[pos].1.push(outcome);
            }
            other => {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("unknown status `{other}`"),
                })
            }
        }
    }
    let template = template.ok_or(Error::Parse {
        line: 2,
        msg: "no outcome rows".into(),
    })?;
    let mut header_cols: Vec<String> = cols[1..real_col].iter().map(|s| s.to_string()).collect();
    header_cols.push("avg_precision".into());
    header_cols.extend(alphas.iter().map(|&a| css_column(a)));
    header_cols.push("n_tests".into());
    header_cols.push("discarded".into());
    writeln!(out, "{}", header_cols.join(","))?;
    for (coords, outcomes, discarded) in &groups {
        let summary = summarize_point(outcomes, *discarded, alphas)?;
        write_summary_row(&mut out, template, coords, &summary, alphas, false)?;
    }
    Ok(groups.len())
}
