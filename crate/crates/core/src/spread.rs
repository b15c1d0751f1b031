//! Synchronous susceptible-infected dynamics on a multiplex.
//!
//! Every replica carries its own state. At each step every infected replica
//! makes one Bernoulli attempt on each susceptible neighbor, with the
//! probability of the connecting edge class. The per-link traversal time is
//! therefore geometric on `{1, 2, ..}`, which is where [`delay_moments`]
//! comes from.

use std::io::Write;

use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{EdgeClass, MultiplexGraph, ReplicaId};

/// Per-layer and inter-layer infection probabilities per step.
#[derive(Debug, Clone, PartialEq)]
pub struct SpreadParams {
    beta_intra: Vec<f64>,
    beta_inter: f64,
}

fn valid_beta(b: f64) -> bool {
    b > 0.0 && b <= 1.0
}

impl SpreadParams {
    pub fn new(beta_intra: Vec<f64>, beta_inter: f64) -> Result<Self> {
        if beta_intra.is_empty() {
            return Err(Error::invalid("at least one intra-layer rate is required"));
        }
        if let Some((i, b)) = beta_intra
            .iter()
            .enumerate()
            .find(|(_, b)| !valid_beta(**b))
        {
            return Err(Error::invalid(format!(
                "beta for layer {i} is {b}, must be in (0, 1]"
            )));
        }
        if !valid_beta(beta_inter) {
            return Err(Error::invalid(format!(
                "inter-layer beta is {beta_inter}, must be in (0, 1]"
            )));
        }
        Ok(SpreadParams {
            beta_intra,
            beta_inter,
        })
    }

    /// Same intra-layer rate on every one of `layers` layers.
    pub fn uniform(layers: usize, beta_intra: f64, beta_inter: f64) -> Result<Self> {
        Self::new(vec![beta_intra; layers], beta_inter)
    }

    pub fn layer_count(&self) -> usize {
        self.beta_intra.len()
    }

    pub fn beta_intra(&self) -> &[f64] {
        &self.beta_intra
    }

    pub fn beta_inter(&self) -> f64 {
        self.beta_inter
    }

    pub fn beta(&self, class: EdgeClass) -> f64 {
        match class {
            EdgeClass::Intra(l) => self.beta_intra[l],
            EdgeClass::Inter => self.beta_inter,
        }
    }
}

/// Mean and variance of the per-link delay, laid out as
/// `[layer 0, .., layer L-1, inter]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayMoments {
    mu: Vec<f64>,
    sigma2: Vec<f64>,
}

impl DelayMoments {
    pub fn new(mu: Vec<f64>, sigma2: Vec<f64>) -> Result<Self> {
        if mu.len() < 2 || mu.len() != sigma2.len() {
            return Err(Error::invalid(
                "delay moments need L + 1 means and L + 1 variances",
            ));
        }
        if mu.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
            return Err(Error::invalid("mean delays must be finite and positive"));
        }
        if sigma2.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::invalid(
                "delay variances must be finite and non-negative",
            ));
        }
        Ok(DelayMoments { mu, sigma2 })
    }

    pub fn layer_count(&self) -> usize {
        self.mu.len() - 1
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn sigma2(&self) -> &[f64] {
        &self.sigma2
    }

    pub fn mu_of(&self, class: EdgeClass) -> f64 {
        self.mu[class.slot(self.layer_count())]
    }

    pub fn sigma2_of(&self, class: EdgeClass) -> f64 {
        self.sigma2[class.slot(self.layer_count())]
    }

    pub fn max_mu(&self) -> f64 {
        self.mu.iter().copied().fold(f64::MIN, f64::max)
    }
}

/// Geometric moments `mu = 1/beta`, `sigma2 = (1 - beta)/beta^2` per class.
pub fn delay_moments(params: &SpreadParams) -> DelayMoments {
    let geo = |b: f64| (1.0 / b, (1.0 - b) / (b * b));
    let (mut mu, mut sigma2): (Vec<f64>, Vec<f64>) =
        params.beta_intra.iter().map(|&b| geo(b)).unzip();
    let (m, s) = geo(params.beta_inter);
    mu.push(m);
    sigma2.push(s);
    DelayMoments { mu, sigma2 }
}

/// Default step cap: `20 * mu_max * ceil(2 log2 n_tot)`, at least 1000.
pub fn default_t_max(g: &MultiplexGraph, params: &SpreadParams) -> u32 {
    let n_tot = g.replica_count().max(1) as f64;
    let diameter_bound = (2.0 * n_tot.log2()).ceil();
    let mu_max = delay_moments(params).max_mu();
    let cap = 20.0 * mu_max * diameter_bound;
    cap.max(1000.0).min(u32::MAX as f64) as u32
}

/// Outcome of one spreading run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InfectionRecord {
    source: ReplicaId,
    times: Vec<Option<u32>>,
    horizon: u32,
    nodes_per_layer: usize,
}

impl InfectionRecord {
    pub fn source(&self) -> ReplicaId {
        self.source
    }

    pub fn horizon(&self) -> u32 {
        self.horizon
    }

    pub fn nodes_per_layer(&self) -> usize {
        self.nodes_per_layer
    }

    pub fn time(&self, r: ReplicaId) -> Option<u32> {
        self.times
            .get(r.flat(self.nodes_per_layer))
            .copied()
            .flatten()
    }

    /// Infection times indexed by flat replica index.
    pub fn times(&self) -> &[Option<u32>] {
        &self.times
    }

    pub fn infected_count(&self) -> usize {
        self.times.iter().filter(|t| t.is_some()).count()
    }

    /// `layer node time` per infected replica, ascending flat index.
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        for (i, t) in self.times.iter().enumerate() {
            if let Some(t) = t {
                let r = ReplicaId::from_flat(i, self.nodes_per_layer);
                writeln!(out, "{} {} {}", r.layer, r.node, t)?;
            }
        }
        Ok(())
    }
}

/// Runs synchronous SI from `source` for at most `t_max` steps.
///
/// Replicas infected at step `t` start transmitting at `t + 1`. When several
/// infected neighbors hit the same target in one step the first success is
/// kept; the outcome is the same either way.
pub fn simulate<R: Rng + ?Sized>(
    g: &MultiplexGraph,
    source: ReplicaId,
    params: &SpreadParams,
    rng: &mut R,
    t_max: u32,
) -> Result<InfectionRecord> {
    g.check(source)?;
    if params.layer_count() != g.layer_count() {
        return Err(Error::invalid(format!(
            "{} intra-layer rates given for a {}-layer graph",
            params.layer_count(),
            g.layer_count()
        )));
    }
    if t_max == 0 {
        return Err(Error::invalid("t_max must be at least 1"));
    }
    let n_tot = g.replica_count();
    let mut times: Vec<Option<u32>> = vec![None; n_tot];
    let src = g.flat(source);
    times[src] = Some(0);

    let mut susceptible = n_tot - 1;
    let mut active = vec![src];
    let mut fresh = Vec::new();
    for t in 1..=t_max {
        if susceptible == 0 || active.is_empty() {
            break;
        }
        fresh.clear();
        for &i in &active {
            for (j, class) in g.neighbors_flat(i) {
                if times[j].is_none() && rng.gen::<f64>() < params.beta(class) {
                    times[j] = Some(t);
                    fresh.push(j);
                }
            }
        }
        susceptible -= fresh.len();
        active.extend_from_slice(&fresh);
        active.retain(|&i| g.neighbors_flat(i).any(|(j, _)| times[j].is_none()));
    }

    Ok(InfectionRecord {
        source,
        times,
        horizon: t_max,
        nodes_per_layer: g.nodes_per_layer(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{couple_multiplex, LayerGraph};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn path3() -> MultiplexGraph {
        couple_multiplex(vec![LayerGraph::new(0, 3, [(0, 1), (1, 2)]).unwrap()]).unwrap()
    }

    #[test]
    fn geometric_moments() {
        let m = delay_moments(&SpreadParams::new(vec![0.5, 1.0], 0.1).unwrap());
        assert_eq!(m.mu(), &[2.0, 1.0, 10.0]);
        assert_eq!(m.sigma2()[0], 2.0);
        assert_eq!(m.sigma2()[1], 0.0);
        assert!((m.sigma2()[2] - 90.0).abs() < 1e-9);
        assert_eq!(m.mu_of(EdgeClass::Inter), 10.0);
        assert_eq!(m.sigma2_of(EdgeClass::Intra(0)), 2.0);
    }

    #[test]
    fn rejects_zero_and_out_of_range_beta() {
        assert!(SpreadParams::new(vec![0.0], 0.5).is_err());
        assert!(SpreadParams::new(vec![0.5], 0.0).is_err());
        assert!(SpreadParams::new(vec![1.5], 0.5).is_err());
        assert!(SpreadParams::new(vec![], 0.5).is_err());
        assert!(SpreadParams::new(vec![f64::NAN], 0.5).is_err());
    }

    #[test]
    fn deterministic_spread_on_path() {
        let g = path3();
        let p = SpreadParams::new(vec![1.0], 1.0).unwrap();
        let rec = simulate(
            &g,
            ReplicaId::new(0, 0),
            &p,
            &mut ChaCha8Rng::seed_from_u64(0),
            10,
        )
        .unwrap();
        assert_eq!(rec.times(), &[Some(0), Some(1), Some(2)]);
        let mut buf = Vec::new();
        rec.write_text(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "0 0 0\n0 1 1\n0 2 2\n");
    }

    #[test]
    fn isolated_source_stays_alone() {
        let g = couple_multiplex(vec![LayerGraph::new(0, 1, []).unwrap()]).unwrap();
        let p = SpreadParams::new(vec![0.5], 0.5).unwrap();
        let rec = simulate(
            &g,
            ReplicaId::new(0, 0),
            &p,
            &mut ChaCha8Rng::seed_from_u64(0),
            5,
        )
        .unwrap();
        assert_eq!(rec.times(), &[Some(0)]);
        assert_eq!(rec.infected_count(), 1);
    }

    #[test]
    fn horizon_caps_spread() {
        let g = path3();
        let p = SpreadParams::new(vec![1.0], 1.0).unwrap();
        let rec = simulate(
            &g,
            ReplicaId::new(0, 0),
            &p,
            &mut ChaCha8Rng::seed_from_u64(0),
            1,
        )
        .unwrap();
        assert_eq!(rec.times(), &[Some(0), Some(1), None]);
        assert_eq!(rec.horizon(), 1);
    }

    #[test]
    fn rejects_bad_inputs() {
        let g = path3();
        let p = SpreadParams::new(vec![1.0], 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(simulate(&g, ReplicaId::new(3, 0), &p, &mut rng, 5).is_err());
        assert!(simulate(&g, ReplicaId::new(0, 0), &p, &mut rng, 0).is_err());
        let p2 = SpreadParams::uniform(2, 1.0, 1.0).unwrap();
        assert!(simulate(&g, ReplicaId::new(0, 0), &p2, &mut rng, 5).is_err());
    }

    #[test]
    fn t_max_floor() {
        let g = path3();
        let p = SpreadParams::new(vec![0.5], 0.5).unwrap();
        assert_eq!(default_t_max(&g, &p), 1000);
        let big = couple_multiplex(vec![LayerGraph::new(0, 1 << 12, []).unwrap(); 2]).unwrap();
        let slow = SpreadParams::uniform(2, 0.1, 0.1).unwrap();
        // 20 * 10 * ceil(2 * 13)
        assert_eq!(default_t_max(&big, &slow), 5200);
    }
}
