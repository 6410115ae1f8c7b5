//! Analytical DSP and initiation-interval/latency models of the fused
//! dataflow architecture.
//!
//! ```text
//! DSP_layer = ceil(FC_in * FC_out / R_NN)
//! DSP_NN    = sum of DSP_layer over the MLP's layers
//! DSP_model = DSP_fR * N_fR + DSP_fO + DSP_phiO        (<= DSP_total)
//!
//! II_loop   = II_mult * max(ceil((N_O - 1) / N_fR), R_fO, R_phiO)
//! II_model  = II_loop * N_O
//! Latency   = II_loop * (N_O - 1) + DP_loop + DP_tail
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::GraphConfig;
use crate::model::{MlpName, MlpSet};

/// Hardware parallelism knobs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParallelismConfig {
    /// Replicated `f_R` instances.
    pub n_fr: u32,
    /// Reuse factor of `f_R`; the edge function is always fully parallel.
    pub r_fr: u32,
    pub r_fo: u32,
    pub r_phio: u32,
    /// Multiplier initiation interval in cycles.
    pub ii_mult: u32,
}

impl Default for ParallelismConfig {
    fn default() -> Self {
        Self { n_fr: 1, r_fr: 1, r_fo: 1, r_phio: 1, ii_mult: 1 }
    }
}

impl ParallelismConfig {
    pub fn new(n_fr: u32, r_fo: u32, r_phio: u32) -> Result<Self> {
        let cfg = Self { n_fr, r_fo, r_phio, ..Self::default() };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_ii_mult(mut self, ii_mult: u32) -> Result<Self> {
        self.ii_mult = ii_mult;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.r_fr != 1 {
            return Err(Error::Config(format!("the f_R reuse factor is fixed at 1, got {}", self.r_fr)));
        }
        if self.n_fr == 0 || self.r_fo == 0 || self.r_phio == 0 || self.ii_mult == 0 {
            return Err(Error::Config(format!("parallelism parameters must be >= 1: {self:?}")));
        }
        Ok(())
    }

    pub fn reuse(&self, name: MlpName) -> u32 {
        match name {
            MlpName::FR => self.r_fr,
            MlpName::FO => self.r_fo,
            MlpName::PhiO => self.r_phio,
        }
    }

    /// Hardware copies of an MLP; only the edge function is replicated.
    pub fn instances(&self, name: MlpName) -> u32 {
        match name {
            MlpName::FR => self.n_fr,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HwBudget {
    pub dsp_total: u64,
    pub clock_mhz: f64,
}

impl HwBudget {
    /// Alveo U250 at 200 MHz.
    pub const U250: HwBudget = HwBudget { dsp_total: 12_288, clock_mhz: 200.0 };

    pub fn new(dsp_total: u64, clock_mhz: f64) -> Result<Self> {
        if dsp_total == 0 || clock_mhz.is_nan() || clock_mhz <= 0.0 {
            return Err(Error::Config(format!("budget needs positive DSPs and clock, got {dsp_total} DSPs at {clock_mhz} MHz")));
        }
        Ok(Self { dsp_total, clock_mhz })
    }

    pub fn unlimited(clock_mhz: f64) -> Self {
        Self { dsp_total: u64::MAX, clock_mhz }
    }

    pub fn cycles_to_us(&self, cycles: u64) -> f64 {
        cycles as f64 / self.clock_mhz
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MlpDsp {
    pub name: MlpName,
    pub per_layer: Vec<u64>,
    /// `DSP_NN`: one instance.
    pub per_instance: u64,
    pub instances: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ResourceEstimate {
    pub mlps: Vec<MlpDsp>,
    /// `DSP_model`.
    pub total: u64,
    pub feasible: bool,
}

impl ResourceEstimate {
    pub fn mlp(&self, name: MlpName) -> &MlpDsp {
        self.mlps.iter().find(|m| m.name == name).expect("all three MLPs present")
    }
}

/// DSP usage of one fully connected layer.
#[inline]
pub fn dsp_layer(fan_in: usize, fan_out: usize, reuse: u32) -> u64 {
    ((fan_in * fan_out) as u64).div_ceil(reuse as u64)
}

pub fn dsp_estimate(mlps: &MlpSet, par: &ParallelismConfig, budget: &HwBudget) -> ResourceEstimate {
    let per_mlp: Vec<MlpDsp> = mlps
        .iter()
        .map(|spec| {
            let reuse = par.reuse(spec.name);
            let per_layer: Vec<u64> = spec.layer_dims().map(|(i, o)| dsp_layer(i, o, reuse)).collect();
            MlpDsp { name: spec.name, per_instance: per_layer.iter().sum(), per_layer, instances: par.instances(spec.name) }
        })
        .collect();
    let total = per_mlp.iter().map(|m| m.per_instance * m.instances as u64).sum();
    ResourceEstimate { mlps: per_mlp, total, feasible: total <= budget.dsp_total }
}

/// Pipeline-depth constants of the fused loop and the logic after it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineDepths {
    pub dp_loop: u64,
    pub dp_tail: u64,
}

impl Default for PipelineDepths {
    /// Sums to 37 cycles, which puts the 30-particle, `N_fR = 10` design at
    /// 124 cycles (0.62 us at 200 MHz).
    fn default() -> Self {
        Self { dp_loop: 30, dp_tail: 7 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LatencyEstimate {
    pub ii_loop: u64,
    pub ii_model: u64,
    pub latency: u64,
    pub ii_us: f64,
    pub latency_us: f64,
    pub dp_loop: u64,
    pub dp_tail: u64,
}

/// `ceil((N_O - 1) / N_fR)`: FSM states needed to cover one receiver block.
#[inline]
pub fn edge_states(n_o: usize, n_fr: u32) -> u64 {
    ((n_o - 1) as u64).div_ceil(n_fr as u64)
}

pub fn ii_loop(graph: GraphConfig, par: &ParallelismConfig) -> u64 {
    par.ii_mult as u64 * edge_states(graph.n_o(), par.n_fr).max(par.r_fo as u64).max(par.r_phio as u64)
}

pub fn latency_estimate(graph: GraphConfig, par: &ParallelismConfig, depths: PipelineDepths, budget: &HwBudget) -> LatencyEstimate {
    let ii_loop = ii_loop(graph, par);
    let n_o = graph.n_o() as u64;
    let ii_model = ii_loop * n_o;
    let latency = ii_loop * (n_o - 1) + depths.dp_loop + depths.dp_tail;
    LatencyEstimate {
        ii_loop,
        ii_model,
        latency,
        ii_us: budget.cycles_to_us(ii_model),
        latency_us: budget.cycles_to_us(latency),
        dp_loop: depths.dp_loop,
        dp_tail: depths.dp_tail,
    }
}

/// Search bounds for [`ii_balance`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BalanceLimits {
    /// Largest reuse factor tried for `f_O` and `phi_O`.
    pub max_reuse: u32,
    /// Largest `N_fR` tried; `None` means `N_O - 1` (one instance per incoming edge).
    pub max_n_fr: Option<u32>,
    pub ii_mult: u32,
}

impl Default for BalanceLimits {
    fn default() -> Self {
        Self { max_reuse: 64, max_n_fr: None, ii_mult: 1 }
    }
}

/// A balanced configuration and its estimates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Balanced {
    pub par: ParallelismConfig,
    pub resources: ResourceEstimate,
    pub ii_loop: u64,
}

/// Picks the feasible parallelism with the smallest `II_model`; ties go to
/// fewer DSPs, then smaller `N_fR`, then smaller reuse factors.
///
/// For a fixed `N_fR` the loop II is `max(c, R_fO, R_phiO)` with
/// `c = ceil((N_O-1)/N_fR)`, and DSP usage falls as either reuse factor
/// grows. So at any achieved II `v` the cheapest choice sets both reuse
/// factors to `min(v, max_reuse)`, and only `v >= c` is worth trying.
pub fn ii_balance(mlps: &MlpSet, graph: GraphConfig, budget: &HwBudget, limits: &BalanceLimits) -> Result<Balanced> {
    let n_fr_cap = limits.max_n_fr.unwrap_or((graph.n_o() - 1) as u32).clamp(1, (graph.n_o() - 1) as u32);
    let max_reuse = limits.max_reuse.max(1);
    let mut best: Option<(u64, u64, u32, u32, Balanced)> = None;
    for n_fr in 1..=n_fr_cap {
        let c = edge_states(graph.n_o(), n_fr);
        let start = (c.min(max_reuse as u64)) as u32;
        for r in start..=max_reuse {
            let par = ParallelismConfig { n_fr, r_fr: 1, r_fo: r, r_phio: r, ii_mult: limits.ii_mult.max(1) };
            let res = dsp_estimate(mlps, &par, budget);
            if !res.feasible {
                continue;
            }
            let ii = ii_loop(graph, &par);
            let key = (ii, res.total, n_fr, r);
            if best.as_ref().is_none_or(|b| key < (b.0, b.1, b.2, b.3)) {
                best = Some((ii, res.total, n_fr, r, Balanced { par, resources: res, ii_loop: ii }));
            }
            // larger reuse only lowers DSPs at a higher II once feasible
            break;
        }
    }
    best.map(|b| b.4).ok_or_else(|| {
        Error::Infeasible(format!(
            "no parallelism configuration fits in {} DSPs (N_fR <= {n_fr_cap}, reuse <= {max_reuse})",
            budget.dsp_total
        ))
    })
}
