//! Algorithm/hardware co-design search.
//!
//! Every candidate MLP configuration is balanced for the DSP budget, its
//! latency estimated, and candidates slower than `alpha * latn_r` dropped
//! before any accuracy is requested. Accuracy comes from an
//! [`AccuracyOracle`], so measured results can be replayed from a CSV file.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering as AtomicOrdering};
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::GraphConfig;
use crate::hwmodel::{
    dsp_estimate, ii_balance, latency_estimate, BalanceLimits, HwBudget, LatencyEstimate, ParallelismConfig,
    PipelineDepths, ResourceEstimate,
};
use crate::model::{MlpSet, NUM_CLASSES};

/// The grid searched by [`enumerate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSpace {
    pub n_o: usize,
    pub p: usize,
    pub d_e: usize,
    pub d_o: usize,
    /// Hidden-layer counts of `f_R`; each hidden layer has one of `fr_sizes` units.
    pub fr_layer_counts: Vec<usize>,
    pub fr_sizes: Vec<usize>,
    pub fo_first_sizes: Vec<usize>,
    pub phio_first_sizes: Vec<usize>,
    /// Hidden layers of `f_O` after the first one, kept fixed.
    #[serde(default)]
    pub fo_tail: Vec<usize>,
    #[serde(default)]
    pub phio_tail: Vec<usize>,
    #[serde(default = "default_max_reuse")]
    pub max_reuse: u32,
    #[serde(default)]
    pub max_n_fr: Option<u32>,
    #[serde(default = "default_ii_mult")]
    pub ii_mult: u32,
    #[serde(default)]
    pub depths: PipelineDepths,
}

fn default_max_reuse() -> u32 {
    BalanceLimits::default().max_reuse
}

fn default_ii_mult() -> u32 {
    1
}

impl SearchSpace {
    pub fn from_json(text: &str) -> Result<Self> {
        let space: Self = serde_json::from_str(text)?;
        space.validate()?;
        Ok(space)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        GraphConfig::new(self.n_o, self.p)?;
        let sets: [(&str, &[usize]); 4] = [
            ("fr_layer_counts", &self.fr_layer_counts),
            ("fr_sizes", &self.fr_sizes),
            ("fo_first_sizes", &self.fo_first_sizes),
            ("phio_first_sizes", &self.phio_first_sizes),
        ];
        for (name, set) in sets {
            if set.is_empty() {
                return Err(Error::Config(format!("search space set {name} is empty")));
            }
        }
        let sizes = self.fr_sizes.iter().chain(&self.fo_first_sizes).chain(&self.phio_first_sizes);
        if self.d_e == 0 || self.d_o == 0 || sizes.chain(&self.fo_tail).chain(&self.phio_tail).any(|&s| s == 0) {
            return Err(Error::Config("layer sizes must be positive".into()));
        }
        if self.max_reuse == 0 || self.ii_mult == 0 || self.max_n_fr == Some(0) {
            return Err(Error::Config("parallelism limits must be positive".into()));
        }
        Ok(())
    }

    pub fn graph(&self) -> GraphConfig {
        GraphConfig::new(self.n_o, self.p).expect("validated")
    }

    pub fn limits(&self) -> BalanceLimits {
        BalanceLimits { max_reuse: self.max_reuse, max_n_fr: self.max_n_fr, ii_mult: self.ii_mult }
    }

    pub fn len(&self) -> usize {
        self.fr_layer_counts.len() * self.fr_sizes.len() * self.fo_first_sizes.len() * self.phio_first_sizes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All candidates, in grid order.
    pub fn candidates(&self) -> Vec<Candidate> {
        let mut out = Vec::with_capacity(self.len());
        for &fr_layers in &self.fr_layer_counts {
            for &fr_size in &self.fr_sizes {
                for &fo_first in &self.fo_first_sizes {
                    for &phio_first in &self.phio_first_sizes {
                        out.push(Candidate { fr_layers, fr_size, fo_first, phio_first });
                    }
                }
            }
        }
        out
    }

    pub fn mlps(&self, graph: GraphConfig, c: &Candidate) -> Result<MlpSet> {
        let mut fr = vec![c.fr_size; c.fr_layers];
        fr.push(self.d_e);
        let mut fo = vec![c.fo_first];
        fo.extend(&self.fo_tail);
        fo.push(self.d_o);
        let mut phi = vec![c.phio_first];
        phi.extend(&self.phio_tail);
        phi.push(NUM_CLASSES);
        MlpSet::from_sizes(graph, fr, fo, phi)
    }
}

/// One point of the MLP hyperparameter grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Candidate {
    pub fr_layers: usize,
    pub fr_size: usize,
    pub fo_first: usize,
    pub phio_first: usize,
}

impl Candidate {
    pub fn key(&self) -> String {
        format!("fr{}x{}-fo{}-phio{}", self.fr_layers, self.fr_size, self.fo_first, self.phio_first)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Objective {
    OptLatn,
    OptAcc,
}

impl std::str::FromStr for Objective {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "opt-latn" | "optlatn" | "latency" => Ok(Objective::OptLatn),
            "opt-acc" | "optacc" | "accuracy" => Ok(Objective::OptAcc),
            _ => Err(Error::Config(format!("unknown objective {s:?}; use opt-latn or opt-acc"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DseConstraints {
    /// Required latency in microseconds.
    pub latn_r: f64,
    /// Candidates slower than `alpha * latn_r` are pruned.
    pub alpha: f64,
    pub budget: HwBudget,
    pub objective: Objective,
}

impl DseConstraints {
    pub fn new(latn_r: f64, alpha: f64, budget: HwBudget, objective: Objective) -> Result<Self> {
        if !(latn_r.is_finite() && latn_r > 0.0) {
            return Err(Error::Config(format!("latn_r must be positive, got {latn_r}")));
        }
        if alpha.is_nan() || alpha < 1.0 {
            return Err(Error::Config(format!("alpha must be >= 1, got {alpha}")));
        }
        Ok(Self { latn_r, alpha, budget, objective })
    }

    pub fn threshold_us(&self) -> f64 {
        self.alpha * self.latn_r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PruneReason {
    DspBudget,
    Latency,
}

impl PruneReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            PruneReason::DspBudget => "dsp_budget",
            PruneReason::Latency => "latency",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DesignPoint {
    pub config: String,
    pub candidate: Candidate,
    /// Multiplications per edge/node/graph pass, summed over the three MLPs.
    pub weights: usize,
    pub par: Option<ParallelismConfig>,
    pub resources: Option<ResourceEstimate>,
    pub latency: Option<LatencyEstimate>,
    pub accuracy: Option<f64>,
    pub pruned: Option<PruneReason>,
}

impl DesignPoint {
    pub fn is_pruned(&self) -> bool {
        self.pruned.is_some()
    }

    pub fn dsp(&self) -> Option<u64> {
        self.resources.as_ref().map(|r| r.total)
    }

    pub fn latency_cycles(&self) -> Option<u64> {
        self.latency.map(|l| l.latency)
    }

    pub fn latency_us(&self) -> Option<f64> {
        self.latency.map(|l| l.latency_us)
    }
}

/// Iteration multiplicities of `(f_R, f_O, phi_O)`: per-edge, per-node and once.
pub fn rebalance_hint(graph: GraphConfig) -> (u64, u64, u64) {
    (graph.n_e() as u64, graph.n_o() as u64, 1)
}

/// Multiplications per inference with each MLP weighted by how often it runs.
pub fn weighted_cost(graph: GraphConfig, mlps: &MlpSet) -> u64 {
    let (e, n, g) = rebalance_hint(graph);
    e * mlps.f_r.weight_count() as u64 + n * mlps.f_o.weight_count() as u64 + g * mlps.phi_o.weight_count() as u64
}

/// Estimates every candidate, cheapest weighted cost first.
pub fn enumerate(space: &SearchSpace, graph: GraphConfig, constraints: &DseConstraints) -> Result<Vec<DesignPoint>> {
    space.validate()?;
    let limits = space.limits();
    let mut sets = space
        .candidates()
        .into_iter()
        .map(|c| space.mlps(graph, &c).map(|m| (weighted_cost(graph, &m), c, m)))
        .collect::<Result<Vec<_>>>()?;
    sets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

    Ok(sets
        .into_par_iter()
        .map(|(_, candidate, mlps)| {
            let weights = mlps.iter().map(|m| m.weight_count()).sum();
            let mut point = DesignPoint {
                config: candidate.key(),
                candidate,
                weights,
                par: None,
                resources: None,
                latency: None,
                accuracy: None,
                pruned: None,
            };
            match ii_balance(&mlps, graph, &constraints.budget, &limits) {
                Err(_) => point.pruned = Some(PruneReason::DspBudget),
                Ok(b) => {
                    debug_assert_eq!(b.resources, dsp_estimate(&mlps, &b.par, &constraints.budget));
                    let lat = latency_estimate(graph, &b.par, space.depths, &constraints.budget);
                    if lat.latency_us > constraints.threshold_us() {
                        point.pruned = Some(PruneReason::Latency);
                    }
                    point.par = Some(b.par);
                    point.resources = Some(b.resources);
                    point.latency = Some(lat);
                }
            }
            point
        })
        .collect())
}

/// Supplies the accuracy of a trained candidate.
pub trait AccuracyOracle {
    fn accuracy(&self, point: &DesignPoint) -> Result<f64>;
}

/// Synthetic surrogate: `0.70 + 0.12 * (1 - exp(-weights / 4000))`.
///
/// Deterministic and monotone in the multiplication count. Not a model of
/// any real dataset.
#[derive(Debug, Clone, Copy, Default)]
pub struct SyntheticOracle;

impl AccuracyOracle for SyntheticOracle {
    fn accuracy(&self, point: &DesignPoint) -> Result<f64> {
        Ok(0.70 + 0.12 * (1.0 - (-(point.weights as f64) / 4000.0).exp()))
    }
}

/// Accuracies looked up by candidate key from a `config,accuracy` CSV.
#[derive(Debug, Clone, Default)]
pub struct CsvOracle {
    table: BTreeMap<String, f64>,
}

impl CsvOracle {
    pub fn parse(text: &str) -> Result<Self> {
        let mut table = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (n == 0 && line.starts_with("config")) {
                continue;
            }
            let (key, acc) = line
                .split_once(',')
                .ok_or_else(|| Error::Config(format!("accuracy table line {}: expected config,accuracy", n + 1)))?;
            let acc: f64 = acc
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("accuracy table line {}: bad accuracy {acc:?}", n + 1)))?;
            if !(0.0..=1.0).contains(&acc) {
                return Err(Error::Config(format!("accuracy table line {}: {acc} is not a fraction", n + 1)));
            }
            table.insert(key.trim().to_owned(), acc);
        }
        Ok(Self { table })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

impl AccuracyOracle for CsvOracle {
    fn accuracy(&self, point: &DesignPoint) -> Result<f64> {
        self.table
            .get(&point.config)
            .copied()
            .ok_or_else(|| Error::Config(format!("no accuracy recorded for {}", point.config)))
    }
}

/// Records which candidates reached the wrapped oracle.
#[derive(Debug, Default)]
pub struct CountingOracle<O> {
    inner: O,
    calls: AtomicUsize,
    seen: Mutex<Vec<String>>,
}

impl<O> CountingOracle<O> {
    pub fn new(inner: O) -> Self {
        Self { inner, calls: AtomicUsize::new(0), seen: Mutex::new(Vec::new()) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(AtomicOrdering::SeqCst)
    }

    pub fn seen(&self) -> Vec<String> {
        self.seen.lock().expect("poisoned").clone()
    }
}

impl<O: AccuracyOracle> AccuracyOracle for CountingOracle<O> {
    fn accuracy(&self, point: &DesignPoint) -> Result<f64> {
        self.calls.fetch_add(1, AtomicOrdering::SeqCst);
        self.seen.lock().expect("poisoned").push(point.config.clone());
        self.inner.accuracy(point)
    }
}

/// Queries the oracle for every unpruned point, in order.
pub fn evaluate(points: &mut [DesignPoint], oracle: &dyn AccuracyOracle) -> Result<()> {
    for p in points.iter_mut().filter(|p| !p.is_pruned()) {
        let acc = oracle.accuracy(p)?;
        if !acc.is_finite() {
            return Err(Error::NonFinite(acc));
        }
        p.accuracy = Some(acc);
    }
    Ok(())
}

pub fn explore(
    space: &SearchSpace,
    graph: GraphConfig,
    constraints: &DseConstraints,
    oracle: &dyn AccuracyOracle,
) -> Result<Vec<DesignPoint>> {
    let mut points = enumerate(space, graph, constraints)?;
    evaluate(&mut points, oracle)?;
    Ok(points)
}

fn acc_of(p: &DesignPoint) -> f64 {
    p.accuracy.unwrap_or(f64::NEG_INFINITY)
}

fn latn_order(a: &DesignPoint, b: &DesignPoint) -> Ordering {
    a.latency_cycles()
        .cmp(&b.latency_cycles())
        .then_with(|| acc_of(b).total_cmp(&acc_of(a)))
        .then_with(|| a.dsp().cmp(&b.dsp()))
        .then_with(|| a.config.cmp(&b.config))
}

fn acc_order(a: &DesignPoint, b: &DesignPoint) -> Ordering {
    acc_of(b)
        .total_cmp(&acc_of(a))
        .then_with(|| a.latency_cycles().cmp(&b.latency_cycles()))
        .then_with(|| a.dsp().cmp(&b.dsp()))
        .then_with(|| a.config.cmp(&b.config))
}

/// Picks the design for `constraints.objective` among unpruned points.
///
/// Opt-Latn: lowest latency, then highest accuracy, fewest DSPs, config name.
/// Opt-Acc: highest accuracy with latency <= `latn_r`, then lowest latency.
pub fn select<'a>(points: &'a [DesignPoint], constraints: &DseConstraints) -> Result<&'a DesignPoint> {
    let live: Vec<&DesignPoint> = points.iter().filter(|p| !p.is_pruned() && p.latency.is_some()).collect();
    if live.is_empty() {
        let count = |r| points.iter().filter(|p| p.pruned == Some(r)).count();
        return Err(Error::Infeasible(format!(
            "all {} candidates pruned: {} exceed the DSP budget of {}, {} exceed alpha * latn_r = {} us",
            points.len(),
            count(PruneReason::DspBudget),
            constraints.budget.dsp_total,
            count(PruneReason::Latency),
            constraints.threshold_us()
        )));
    }
    match constraints.objective {
        Objective::OptLatn => Ok(live.into_iter().min_by(|a, b| latn_order(a, b)).expect("nonempty")),
        Objective::OptAcc => live
            .into_iter()
            .filter(|p| p.latency_us().is_some_and(|l| l <= constraints.latn_r))
            .min_by(|a, b| acc_order(a, b))
            .ok_or_else(|| {
                Error::Infeasible(format!("no candidate meets the latency requirement latn_r = {} us", constraints.latn_r))
            }),
    }
}

/// Points not dominated in (lower latency, higher accuracy), sorted by latency.
/// Only evaluated points take part; exact duplicates are all kept.
pub fn pareto_front(points: &[DesignPoint]) -> Vec<DesignPoint> {
    let mut live: Vec<&DesignPoint> = points.iter().filter(|p| p.accuracy.is_some() && p.latency.is_some()).collect();
    live.sort_by(|a, b| {
        a.latency_cycles()
            .cmp(&b.latency_cycles())
            .then_with(|| acc_of(b).total_cmp(&acc_of(a)))
            .then_with(|| a.config.cmp(&b.config))
    });
    let mut front: Vec<DesignPoint> = Vec::new();
    for p in live {
        let keep = match front.last() {
            None => true,
            Some(last) => {
                acc_of(p) > acc_of(last)
                    || (acc_of(p) == acc_of(last) && p.latency_cycles() == last.latency_cycles())
            }
        };
        if keep {
            front.push(p.clone());
        }
    }
    front
}

pub const DSE_CSV_HEADER: &str = "config,n_fr,reuse,dsp,ii_us,latency_us,accuracy,pruned_reason";

pub fn points_csv(points: &[DesignPoint]) -> String {
    let mut s = format!("{DSE_CSV_HEADER}\n");
    let opt = |v: Option<String>| v.unwrap_or_default();
    for p in points {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            p.config,
            opt(p.par.map(|x| x.n_fr.to_string())),
            opt(p.par.map(|x| x.r_fo.to_string())),
            opt(p.dsp().map(|x| x.to_string())),
            opt(p.latency.map(|l| format!("{:.4}", l.ii_us))),
            opt(p.latency.map(|l| format!("{:.4}", l.latency_us))),
            opt(p.accuracy.map(|a| format!("{a:.6}"))),
            p.pruned.map(|r| r.as_str()).unwrap_or(""),
        ));
    }
    s
}
