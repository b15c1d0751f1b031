//! Observer placement and the relative delay vector.

use std::collections::BTreeSet;
use std::io::BufRead;

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{parse_field, MultiplexGraph, ReplicaId};
use crate::spread::InfectionRecord;

/// Monitored replicas, sorted by flat index.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverSet {
    observers: Vec<ReplicaId>,
    densities: Vec<f64>,
}

impl ObserverSet {
    /// Explicit observer list. Duplicates and out-of-range replicas are
    /// rejected; densities are recorded as the realized fraction per layer.
    pub fn from_replicas(
        g: &MultiplexGraph,
        observers: impl IntoIterator<Item = ReplicaId>,
    ) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for r in observers {
            g.check(r)?;
            if !seen.insert((g.flat(r), r)) {
                return Err(Error::invalid(format!("observer {r} listed twice")));
            }
        }
        if seen.len() < 2 {
            return Err(Error::BudgetTooSmall(seen.len()));
        }
        let observers: Vec<ReplicaId> = seen.into_iter().map(|(_, r)| r).collect();
        let n = g.nodes_per_layer() as f64;
        let densities = (0..g.layer_count())
            .map(|l| observers.iter().filter(|r| r.layer == l).count() as f64 / n)
            .collect();
        Ok(ObserverSet {
            observers,
            densities,
        })
    }

    pub fn observers(&self) -> &[ReplicaId] {
        &self.observers
    }

    pub fn densities(&self) -> &[f64] {
        &self.densities
    }

    /// Budget `b`.
    pub fn len(&self) -> usize {
        self.observers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observers.is_empty()
    }

    pub fn count_in_layer(&self, layer: usize) -> usize {
        self.observers.iter().filter(|r| r.layer == layer).count()
    }
}

/// Observer count for one layer, `round(rho * n_l)` with halves rounded up.
pub fn observers_per_layer(density: f64, nodes_per_layer: usize) -> usize {
    (density * nodes_per_layer as f64 + 0.5).floor() as usize
}

/// Uniform sampling without replacement inside each layer.
pub fn place_observers<R: Rng + ?Sized>(
    g: &MultiplexGraph,
    densities: &[f64],
    rng: &mut R,
) -> Result<ObserverSet> {
    if densities.len() != g.layer_count() {
        return Err(Error::invalid(format!(
            "{} observer densities given for a {}-layer graph",
            densities.len(),
            g.layer_count()
        )));
    }
    if let Some((l, rho)) = densities
        .iter()
        .enumerate()
        .find(|(_, r)| !(**r > 0.0 && **r <= 1.0))
    {
        return Err(Error::invalid(format!(
            "observer density for layer {l} is {rho}, must be in (0, 1]"
        )));
    }
    let n = g.nodes_per_layer();
    let counts: Vec<usize> = densities
        .iter()
        .map(|&rho| observers_per_layer(rho, n))
        .collect();
    let budget: usize = counts.iter().sum();
    if budget < 2 {
        return Err(Error::BudgetTooSmall(budget));
    }
    let mut observers = Vec::with_capacity(budget);
    for (layer, &k) in counts.iter().enumerate() {
        let mut picked: Vec<usize> = rand::seq::index::sample(rng, n, k).into_vec();
        picked.sort_unstable();
        observers.extend(picked.into_iter().map(|node| ReplicaId::new(node, layer)));
    }
    Ok(ObserverSet {
        observers,
        densities: densities.to_vec(),
    })
}

/// Delays of the reporting observers relative to the reference observer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DelayVector {
    reporting: Vec<ReplicaId>,
    delays: Vec<u32>,
}

impl DelayVector {
    /// Builds the vector from reported `(observer, time)` pairs; observers
    /// with no time are dropped. The reference is the earliest infected
    /// observer (ties by lowest flat index) and the others follow in
    /// ascending flat-index order.
    pub fn from_reports(
        nodes_per_layer: usize,
        reports: &[(ReplicaId, Option<u32>)],
    ) -> Result<Self> {
        let mut infected: Vec<(ReplicaId, u32)> = reports
            .iter()
            .filter_map(|&(r, t)| t.map(|t| (r, t)))
            .collect();
        if infected.len() < 2 {
            return Err(Error::UnusableRealization {
                infected: infected.len(),
            });
        }
        infected.sort_by_key(|(r, _)| r.flat(nodes_per_layer));
        if let Some(w) = infected.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::invalid(format!(
                "observer {} reported twice",
                w[0].0
            )));
        }
        let ref_pos = infected
            .iter()
            .enumerate()
            .min_by_key(|(_, (r, t))| (*t, r.flat(nodes_per_layer)))
            .map(|(i, _)| i)
            .expect("at least two entries");
        let (reference, t_ref) = infected.remove(ref_pos);
        let mut reporting = Vec::with_capacity(infected.len() + 1);
        reporting.push(reference);
        let mut delays = Vec::with_capacity(infected.len());
        for (r, t) in infected {
            reporting.push(r);
            delays.push(t - t_ref);
        }
        Ok(DelayVector { reporting, delays })
    }

    /// Reference observer `o_1`.
    pub fn reference(&self) -> ReplicaId {
        self.reporting[0]
    }

    /// Reporting observers, reference first.
    pub fn reporting(&self) -> &[ReplicaId] {
        &self.reporting
    }

    /// `d[i] = t(o_{i+2}) - t(o_1)`.
    pub fn delays(&self) -> &[u32] {
        &self.delays
    }

    pub fn delays_f64(&self) -> Vec<f64> {
        self.delays.iter().map(|&d| d as f64).collect()
    }

    pub fn len(&self) -> usize {
        self.delays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delays.is_empty()
    }
}

/// Reads the observers' infection times out of a spreading record.
pub fn build_delay_vector(rec: &InfectionRecord, obs: &ObserverSet) -> Result<DelayVector> {
    let reports: Vec<(ReplicaId, Option<u32>)> =
        obs.observers().iter().map(|&r| (r, rec.time(r))).collect();
    DelayVector::from_reports(rec.nodes_per_layer(), &reports)
}

/// Parses observation lines `layer node time`; a time of `-` marks an
/// observer that was never infected.
pub fn read_observations<R: BufRead>(input: R) -> Result<Vec<(ReplicaId, Option<u32>)>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = trimmed.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(Error::Parse {
                line: lineno,
                msg: "observation line must be `layer node time`".into(),
            });
        }
        let layer = parse_field(parts[0], lineno, "layer")?;
        let node = parse_field(parts[1], lineno, "node")?;
        let time = match parts[2] {
            "-" => None,
            s => Some(parse_field(s, lineno, "time")?),
        };
        out.push((ReplicaId::new(node, layer), time));
    }
    Ok(out)
}
