//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use ingnn::dse::{DesignPoint, DseConstraints, Objective};
use ingnn::hwmodel::{dsp_estimate, ii_loop, BalanceLimits, HwBudget, ParallelismConfig};
use ingnn::model::{Activation, Architecture, Layer, MlpSet, MlpSpec, ModelParams};
use ingnn::{GraphConfig, Matrix};

/// Plain dense evaluation of one MLP in f64.
pub fn mlp_dense(spec: &MlpSpec, layers: &[Layer], x: &[f64]) -> Vec<f64> {
    let mut cur = x.to_vec();
    for (layer, act) in layers.iter().zip(&spec.activations) {
        cur = (0..layer.fan_out())
            .map(|j| {
                let y = layer.b[j] + (0..layer.fan_in()).map(|k| layer.w.get(j, k) * cur[k]).sum::<f64>();
                match act {
                    Activation::Relu => y.max(0.0),
                    Activation::Linear => y,
                }
            })
            .collect();
    }
    cur
}

/// Forward pass written directly from the edge definitions: for every ordered
/// pair (r, s), r != s, the edge input is [I_r; I_s].
pub fn reference_logits(arch: &Architecture, params: &ModelParams, x: &Matrix) -> Vec<f64> {
    let n_o = arch.graph.n_o();
    let mut head_in = vec![0.0; arch.mlps.d_o()];
    for r in 0..n_o {
        let mut ebar = vec![0.0; arch.mlps.d_e()];
        for s in (0..n_o).filter(|&s| s != r) {
            let input: Vec<f64> = x.column(r).iter().chain(x.column(s)).copied().collect();
            for (acc, v) in ebar.iter_mut().zip(mlp_dense(&arch.mlps.f_r, &params.f_r, &input)) {
                *acc += v;
            }
        }
        let c: Vec<f64> = x.column(r).iter().copied().chain(ebar).collect();
        for (acc, v) in head_in.iter_mut().zip(mlp_dense(&arch.mlps.f_o, &params.f_o, &c)) {
            *acc += v;
        }
    }
    mlp_dense(&arch.mlps.phi_o, &params.phi_o, &head_in)
}

/// Value and worst-case fixed-point error of one quantity.
#[derive(Clone, Copy, Debug)]
pub struct Bounded {
    pub x: f64,
    pub err: f64,
}

/// Error-bound propagation for a datapath with `frac` fractional bits and an
/// accumulator with `acc_frac >= frac`.
///
/// Products round once into the accumulator, accumulation is exact, and each
/// narrowing to the datapath adds half a datapath ulp. Weights and inputs are
/// rounded to the nearest datapath value. Assumes nothing saturates; callers
/// check `max_magnitude` against the format range.
pub struct BoundPropagation {
    pub q: f64,
    pub q_acc: f64,
    pub max_magnitude: f64,
}

impl BoundPropagation {
    pub fn new(frac: u32, acc_frac: u32) -> Self {
        Self { q: (-(frac as f64)).exp2(), q_acc: (-(acc_frac as f64)).exp2(), max_magnitude: 0.0 }
    }

    fn round_q(&self, v: f64) -> f64 {
        (v / self.q).round_ties_even() * self.q
    }

    fn note(&mut self, b: Bounded) -> Bounded {
        self.max_magnitude = self.max_magnitude.max(b.x.abs() + b.err);
        b
    }

    fn mlp(&mut self, spec: &MlpSpec, layers: &[Layer], x: &[Bounded]) -> Vec<Bounded> {
        let mut cur = x.to_vec();
        for (layer, act) in layers.iter().zip(&spec.activations) {
            let mut next = Vec::with_capacity(layer.fan_out());
            for j in 0..layer.fan_out() {
                let b = layer.b[j];
                let mut y = b;
                let mut err = (self.round_q(b) - b).abs();
                for k in 0..layer.fan_in() {
                    let w = layer.w.get(j, k);
                    let w_hat = self.round_q(w);
                    y += w * cur[k].x;
                    err += w_hat.abs() * cur[k].err + (w_hat - w).abs() * cur[k].x.abs() + self.q_acc / 2.0;
                }
                self.max_magnitude = self.max_magnitude.max(y.abs() + err);
                err += self.q / 2.0;
                let out = match act {
                    Activation::Relu => Bounded { x: y.max(0.0), err },
                    Activation::Linear => Bounded { x: y, err },
                };
                next.push(self.note(out));
            }
            cur = next;
        }
        cur
    }

    /// Returns the real logits and a per-logit error bound.
    pub fn logits(&mut self, arch: &Architecture, params: &ModelParams, x: &Matrix) -> Vec<Bounded> {
        let n_o = arch.graph.n_o();
        let input: Vec<Vec<Bounded>> = (0..n_o)
            .map(|c| {
                x.column(c)
                    .iter()
                    .map(|&v| {
                        let b = Bounded { x: v, err: (self.round_q(v) - v).abs() };
                        self.note(b)
                    })
                    .collect()
            })
            .collect();
        let zero = Bounded { x: 0.0, err: 0.0 };
        let mut head_in = vec![zero; arch.mlps.d_o()];
        for r in 0..n_o {
            let mut ebar = vec![zero; arch.mlps.d_e()];
            for s in (0..n_o).filter(|&s| s != r) {
                let edge: Vec<Bounded> = input[r].iter().chain(&input[s]).copied().collect();
                for (acc, v) in ebar.iter_mut().zip(self.mlp(&arch.mlps.f_r, &params.f_r, &edge)) {
                    acc.x += v.x;
                    acc.err += v.err;
                }
            }
            for acc in ebar.iter_mut() {
                self.note(*acc);
                acc.err += self.q / 2.0;
            }
            let c: Vec<Bounded> = input[r].iter().copied().chain(ebar).collect();
            for (acc, v) in head_in.iter_mut().zip(self.mlp(&arch.mlps.f_o, &params.f_o, &c)) {
                acc.x += v.x;
                acc.err += v.err;
            }
        }
        for acc in head_in.iter_mut() {
            self.note(*acc);
            acc.err += self.q / 2.0;
        }
        self.mlp(&arch.mlps.phi_o, &params.phi_o, &head_in)
    }
}

/// Exhaustive balance search over independent reuse factors.
/// Returns the minimum `(II_loop, DSP)` over feasible configurations.
pub fn brute_balance(mlps: &MlpSet, graph: GraphConfig, budget: &HwBudget, limits: &BalanceLimits) -> Option<(u64, u64)> {
    let n_fr_cap = limits.max_n_fr.unwrap_or((graph.n_o() - 1) as u32).min((graph.n_o() - 1) as u32);
    let mut best: Option<(u64, u64)> = None;
    for n_fr in 1..=n_fr_cap {
        for r_fo in 1..=limits.max_reuse {
            for r_phio in 1..=limits.max_reuse {
                let par = ParallelismConfig { n_fr, r_fr: 1, r_fo, r_phio, ii_mult: limits.ii_mult };
                let res = dsp_estimate(mlps, &par, budget);
                if res.feasible {
                    let key = (ii_loop(graph, &par), res.total);
                    if best.is_none_or(|b| key < b) {
                        best = Some(key);
                    }
                }
            }
        }
    }
    best
}

/// Linear-scan selection with the documented tie-breaks.
pub fn brute_select(points: &[DesignPoint], c: &DseConstraints) -> Option<String> {
    let mut best: Option<&DesignPoint> = None;
    for p in points.iter().filter(|p| p.pruned.is_none()) {
        let lat = p.latency.unwrap();
        if c.objective == Objective::OptAcc && lat.latency_us > c.latn_r {
            continue;
        }
        let better = match best {
            None => true,
            Some(b) => {
                let (bl, pl) = (b.latency.unwrap().latency, lat.latency);
                let (ba, pa) = (b.accuracy.unwrap(), p.accuracy.unwrap());
                let (bd, pd) = (b.resources.as_ref().unwrap().total, p.resources.as_ref().unwrap().total);
                let primary = match c.objective {
                    Objective::OptLatn => (pl < bl, pl == bl, pa > ba, pa == ba),
                    Objective::OptAcc => (pa > ba, pa == ba, pl < bl, pl == bl),
                };
                match primary {
                    (true, _, _, _) => true,
                    (false, true, true, _) => true,
                    (false, true, false, true) => pd < bd || (pd == bd && p.config < b.config),
                    _ => false,
                }
            }
        };
        if better {
            best = Some(p);
        }
    }
    best.map(|p| p.config.clone())
}

/// O(n^2) dominance scan over evaluated points; returns sorted config names.
pub fn brute_pareto(points: &[DesignPoint]) -> Vec<String> {
    let live: Vec<&DesignPoint> = points.iter().filter(|p| p.accuracy.is_some()).collect();
    let mut out: Vec<String> = live
        .iter()
        .filter(|p| {
            !live.iter().any(|q| {
                let (ql, pl) = (q.latency.unwrap().latency, p.latency.unwrap().latency);
                let (qa, pa) = (q.accuracy.unwrap(), p.accuracy.unwrap());
                ql <= pl && qa >= pa && (ql < pl || qa > pa)
            })
        })
        .map(|p| p.config.clone())
        .collect();
    out.sort();
    out
}
