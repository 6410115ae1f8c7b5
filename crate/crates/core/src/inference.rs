//! End-to-end forward pass, identical control flow for real and fixed point.
//!
//! `I -> (B1, B2) -> B -> f_R -> E -> Ē -> C -> f_O -> O -> node reduction -> phi_O -> softmax`

use std::marker::PhantomData;
use std::path::Path;

use num_traits::Float;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fixed::{downcast, fx_mul, quantize, FixedSpec, FixedVal, Q12_12, Q16_16};
use crate::graph::{make_adjacency, AdjacencyStructure};
use crate::kernels::{aggregate_outer, concat_cols, gather_b1_b2};
use crate::matrix::ColMatrix;
use crate::model::{Activation, Architecture, Layer, MlpSpec, ModelParams, NUM_CLASSES};
use crate::scalar::Scalar;

/// Number system used by the forward pass.
///
/// `Value` is the datapath element, `Acc` the accumulator. Products of two
/// values land in the accumulator; `narrow` brings results back.
pub trait Arithmetic: Send + Sync {
    type Value: Scalar;
    type Acc: Scalar;

    fn encode(&self, x: f64) -> Result<Self::Value>;
    fn decode(&self, v: Self::Value) -> f64;
    fn widen(&self, v: Self::Value) -> Self::Acc;
    fn mul(&self, a: Self::Value, b: Self::Value) -> Self::Acc;
    fn narrow(&self, acc: Self::Acc) -> Self::Value;
    fn relu(&self, v: Self::Value) -> Self::Value;
}

/// Floating point in `T`.
#[derive(Debug, Clone, Copy, Default)]
pub struct RealArith<T>(PhantomData<T>);

impl<T> RealArith<T> {
    pub fn new() -> Self {
        Self(PhantomData)
    }
}

impl<T: Float + Scalar> Arithmetic for RealArith<T> {
    type Value = T;
    type Acc = T;

    fn encode(&self, x: f64) -> Result<T> {
        T::from(x).filter(|v| v.is_finite()).ok_or(Error::NonFinite(x))
    }
    fn decode(&self, v: T) -> f64 {
        v.to_f64().unwrap_or(f64::NAN)
    }
    #[inline]
    fn widen(&self, v: T) -> T {
        v
    }
    #[inline]
    fn mul(&self, a: T, b: T) -> T {
        a * b
    }
    #[inline]
    fn narrow(&self, acc: T) -> T {
        acc
    }
    #[inline]
    fn relu(&self, v: T) -> T {
        if v > T::zero() {
            v
        } else {
            T::zero()
        }
    }
}

/// Fixed-point datapath with a wider accumulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixedArith {
    pub datapath: FixedSpec,
    pub accumulator: FixedSpec,
}

impl Default for FixedArith {
    fn default() -> Self {
        Self { datapath: Q12_12, accumulator: Q16_16 }
    }
}

impl FixedArith {
    pub fn new(datapath: FixedSpec, accumulator: FixedSpec) -> Self {
        Self { datapath, accumulator }
    }

    /// Accumulator paired with a swept datapath: at least four extra integer
    /// bits and no fewer fractional bits, never narrower than Q16.16.
    pub fn for_datapath(datapath: FixedSpec) -> Result<Self> {
        let int_bits = (datapath.int_bits() + 4).max(16);
        let frac_bits = datapath.frac_bits().max(16);
        Ok(Self { datapath, accumulator: FixedSpec::new(int_bits, frac_bits)?.with_rounding(datapath.rounding()) })
    }
}

impl Arithmetic for FixedArith {
    type Value = FixedVal;
    type Acc = FixedVal;

    fn encode(&self, x: f64) -> Result<FixedVal> {
        quantize(x, self.datapath)
    }
    fn decode(&self, v: FixedVal) -> f64 {
        v.value()
    }
    #[inline]
    fn widen(&self, v: FixedVal) -> FixedVal {
        downcast(v, self.accumulator)
    }
    #[inline]
    fn mul(&self, a: FixedVal, b: FixedVal) -> FixedVal {
        fx_mul(a, b, self.accumulator)
    }
    #[inline]
    fn narrow(&self, acc: FixedVal) -> FixedVal {
        downcast(acc, self.datapath)
    }
    #[inline]
    fn relu(&self, v: FixedVal) -> FixedVal {
        if v.raw() > 0 {
            v
        } else {
            FixedVal::zero(v.spec())
        }
    }
}

/// How node outputs are reduced to the graph-level head input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeReduction {
    #[default]
    Sum,
    /// Not validated against any published model.
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NumericMode {
    #[default]
    Real,
    Fixed(FixedArith),
}

/// One MLP with parameters encoded for an arithmetic.
#[derive(Debug, Clone)]
pub struct EncodedMlp<V> {
    layers: Vec<EncodedLayer<V>>,
    input_size: usize,
}

#[derive(Debug, Clone)]
struct EncodedLayer<V> {
    w: ColMatrix<V>,
    b: Vec<V>,
    activation: Activation,
}

impl<V: Scalar> EncodedMlp<V> {
    pub fn encode<A: Arithmetic<Value = V>>(arith: &A, spec: &MlpSpec, layers: &[Layer]) -> Result<Self> {
        if layers.len() != spec.layer_sizes.len() {
            return Err(Error::dim("EncodedMlp::encode", format!("{} layers for {}", layers.len(), spec.name)));
        }
        let layers = layers
            .iter()
            .zip(&spec.activations)
            .map(|(l, &activation)| {
                Ok(EncodedLayer {
                    w: l.w.try_map(|x| arith.encode(x))?,
                    b: l.b.iter().map(|&x| arith.encode(x)).collect::<Result<_>>()?,
                    activation,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { layers, input_size: spec.input_size })
    }

    pub fn output_size(&self) -> usize {
        self.layers.last().map_or(self.input_size, |l| l.b.len())
    }
}

/// Applies an MLP to one column vector.
///
/// Each output starts from the widened bias, accumulates the products in
/// input order, and is narrowed back to the datapath before the activation.
pub fn mlp_forward<A: Arithmetic>(arith: &A, mlp: &EncodedMlp<A::Value>, x: &[A::Value]) -> Result<Vec<A::Value>> {
    if x.len() != mlp.input_size {
        return Err(Error::dim("mlp_forward", format!("input has {} elements, MLP expects {}", x.len(), mlp.input_size)));
    }
    let mut current = x.to_vec();
    for layer in &mlp.layers {
        let next = (0..layer.w.rows())
            .map(|j| {
                let acc = current
                    .iter()
                    .enumerate()
                    .fold(arith.widen(layer.b[j]), |acc, (k, &xk)| acc.add(arith.mul(layer.w.get(j, k), xk)));
                let y = arith.narrow(acc);
                match layer.activation {
                    Activation::Relu => arith.relu(y),
                    Activation::Linear => y,
                }
            })
            .collect();
        current = next;
    }
    Ok(current)
}

/// Class scores for one graph.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub logits: [f64; NUM_CLASSES],
    pub probabilities: [f64; NUM_CLASSES],
    pub argmax: usize,
}

impl Prediction {
    /// Softmax over `logits`; ties in argmax resolve to the lowest class index.
    pub fn from_logits(logits: [f64; NUM_CLASSES]) -> Self {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps = logits.map(|l| (l - max).exp());
        let total: f64 = exps.iter().sum();
        let probabilities = exps.map(|e| e / total);
        let argmax = argmax(&logits);
        Self { logits, probabilities, argmax }
    }
}

fn argmax(xs: &[f64]) -> usize {
    xs.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}

/// A model with all parameters encoded for one arithmetic, ready to run.
#[derive(Debug, Clone)]
pub struct Engine<A: Arithmetic> {
    arith: A,
    arch: Architecture,
    adj: AdjacencyStructure,
    f_r: EncodedMlp<A::Value>,
    f_o: EncodedMlp<A::Value>,
    phi_o: EncodedMlp<A::Value>,
    reduction: NodeReduction,
}

impl<A: Arithmetic> Engine<A> {
    pub fn new(arith: A, arch: &Architecture, params: &ModelParams, reduction: NodeReduction) -> Result<Self> {
        params.check(&arch.mlps)?;
        Ok(Self {
            f_r: EncodedMlp::encode(&arith, &arch.mlps.f_r, &params.f_r)?,
            f_o: EncodedMlp::encode(&arith, &arch.mlps.f_o, &params.f_o)?,
            phi_o: EncodedMlp::encode(&arith, &arch.mlps.phi_o, &params.phi_o)?,
            adj: make_adjacency(arch.graph),
            arch: arch.clone(),
            arith,
            reduction,
        })
    }

    pub fn arith(&self) -> &A {
        &self.arith
    }

    /// Runs the network up to (and including) the head; returns the head's raw outputs.
    pub fn logits(&self, i_mat: &ColMatrix<f64>) -> Result<Vec<A::Value>> {
        let graph = self.arch.graph;
        if i_mat.rows() != graph.p() || i_mat.cols() != graph.n_o() {
            return Err(Error::dim(
                "forward",
                format!("input is {}x{}, model expects {}x{}", i_mat.rows(), i_mat.cols(), graph.p(), graph.n_o()),
            ));
        }
        let a = &self.arith;
        let input = i_mat.try_map(|x| a.encode(x))?;

        // edge block
        let (b1, b2) = gather_b1_b2(&input, &self.adj, &mut ())?;
        let b = concat_cols(&b1, &b2)?;
        let e = apply_columns(a, &self.f_r, &b)?;

        // aggregation runs in the accumulator format
        let e_acc = e.map(|v| a.widen(v));
        let ebar = aggregate_outer(&e_acc, &self.adj, &mut ())?.map(|v| a.narrow(v));

        // node block
        let c = concat_cols(&input, &ebar)?;
        let o = apply_columns(a, &self.f_o, &c)?;

        let head_in = self.reduce_nodes(&o)?;
        mlp_forward(a, &self.phi_o, &head_in)
    }

    fn reduce_nodes(&self, o: &ColMatrix<A::Value>) -> Result<Vec<A::Value>> {
        let a = &self.arith;
        let n_o = o.cols();
        let mut sums: Vec<A::Acc> = o.column(0).iter().map(|&v| a.widen(v)).collect();
        for c in 1..n_o {
            for (s, &v) in sums.iter_mut().zip(o.column(c)) {
                *s = s.add(a.widen(v));
            }
        }
        let sums: Vec<A::Value> = sums.into_iter().map(|s| a.narrow(s)).collect();
        Ok(match self.reduction {
            NodeReduction::Sum => sums,
            NodeReduction::Mean => {
                let scale = a.encode(1.0 / n_o as f64)?;
                sums.into_iter().map(|s| a.narrow(a.mul(s, scale))).collect()
            }
        })
    }

    pub fn forward(&self, i_mat: &ColMatrix<f64>) -> Result<Prediction> {
        let raw = self.logits(i_mat)?;
        let mut logits = [0.0; NUM_CLASSES];
        for (slot, v) in logits.iter_mut().zip(raw) {
            *slot = self.arith.decode(v);
        }
        Ok(Prediction::from_logits(logits))
    }

    /// Evaluates a batch; results are in input order regardless of thread count.
    pub fn forward_batch(&self, inputs: &[ColMatrix<f64>]) -> Result<Vec<Prediction>> {
        inputs.par_iter().map(|i| self.forward(i)).collect()
    }
}

fn apply_columns<A: Arithmetic>(a: &A, mlp: &EncodedMlp<A::Value>, m: &ColMatrix<A::Value>) -> Result<ColMatrix<A::Value>> {
    let rows = mlp.output_size();
    let mut data = Vec::with_capacity(rows * m.cols());
    for col in m.columns() {
        data.extend(mlp_forward(a, mlp, col)?);
    }
    ColMatrix::from_col_major(rows, m.cols(), data)
}

/// Architecture, real-valued parameters and the numeric mode to run them in.
#[derive(Debug, Clone)]
pub struct Model {
    pub arch: Architecture,
    pub params: ModelParams,
    pub mode: NumericMode,
    pub reduction: NodeReduction,
}

impl Model {
    pub fn new(arch: Architecture, params: ModelParams) -> Result<Self> {
        params.check(&arch.mlps)?;
        Ok(Self { arch, params, mode: NumericMode::Real, reduction: NodeReduction::Sum })
    }

    pub fn with_mode(mut self, mode: NumericMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_reduction(mut self, reduction: NodeReduction) -> Self {
        self.reduction = reduction;
        self
    }

    pub fn real_engine(&self) -> Result<Engine<RealArith<f64>>> {
        Engine::new(RealArith::new(), &self.arch, &self.params, self.reduction)
    }

    pub fn fixed_engine(&self, arith: FixedArith) -> Result<Engine<FixedArith>> {
        Engine::new(arith, &self.arch, &self.params, self.reduction)
    }

    pub fn forward(&self, i_mat: &ColMatrix<f64>) -> Result<Prediction> {
        self.forward_batch(std::slice::from_ref(i_mat)).map(|mut v| v.remove(0))
    }

    pub fn forward_batch(&self, inputs: &[ColMatrix<f64>]) -> Result<Vec<Prediction>> {
        match self.mode {
            NumericMode::Real => self.real_engine()?.forward_batch(inputs),
            NumericMode::Fixed(arith) => self.fixed_engine(arith)?.forward_batch(inputs),
        }
    }
}

/// One labelled graph: `i` lists node columns (each of length `p`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub i: Vec<Vec<f64>>,
    #[serde(default)]
    pub label: Option<i64>,
}

impl Sample {
    pub fn matrix(&self) -> Result<ColMatrix<f64>> {
        ColMatrix::from_columns(&self.i)
    }

    pub fn from_matrix(m: &ColMatrix<f64>, label: Option<i64>) -> Self {
        Self { i: m.columns().map(<[f64]>::to_vec).collect(), label }
    }
}

/// Reads a sample file holding either one sample object or an array of them.
pub fn load_samples(path: impl AsRef<Path>) -> Result<Vec<Sample>> {
    parse_samples(&std::fs::read_to_string(path)?)
}

pub fn parse_samples(text: &str) -> Result<Vec<Sample>> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(Sample),
        Many(Vec<Sample>),
    }
    Ok(match serde_json::from_str(text)? {
        OneOrMany::One(s) => vec![s],
        OneOrMany::Many(v) => v,
    })
}

pub const PREDICTION_CSV_HEADER: &str = "sample_id,argmax,p0,p1,p2,p3,p4";

pub fn predictions_csv(predictions: &[Prediction]) -> String {
    let mut s = String::from(PREDICTION_CSV_HEADER);
    s.push('\n');
    for (id, p) in predictions.iter().enumerate() {
        s.push_str(&format!("{id},{}", p.argmax));
        for prob in p.probabilities {
            s.push_str(&format!(",{prob:.9}"));
        }
        s.push('\n');
    }
    s
}

/// Agreement of a fixed-point datapath with the real-valued model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub spec: FixedSpec,
    pub accumulator: FixedSpec,
    /// Fraction of samples whose fixed-mode argmax equals the real-mode argmax.
    pub agreement: f64,
    pub max_logit_error: f64,
}

/// For each datapath format, runs every sample in fixed point and compares
/// against the real-valued argmax. Accumulators follow [`FixedArith::for_datapath`].
pub fn quantization_sweep(model: &Model, dataset: &[ColMatrix<f64>], specs: &[FixedSpec]) -> Result<Vec<SweepRow>> {
    if dataset.is_empty() {
        return Err(Error::Empty("quantization sweep dataset"));
    }
    let reference = model.real_engine()?.forward_batch(dataset)?;
    specs
        .iter()
        .map(|&spec| {
            let arith = FixedArith::for_datapath(spec)?;
            let fixed = model.fixed_engine(arith)?.forward_batch(dataset)?;
            let agree = fixed.iter().zip(&reference).filter(|(f, r)| f.argmax == r.argmax).count();
            let max_logit_error = fixed
                .iter()
                .zip(&reference)
                .flat_map(|(f, r)| f.logits.iter().zip(&r.logits).map(|(a, b)| (a - b).abs()))
                .fold(0.0, f64::max);
            Ok(SweepRow {
                spec,
                accumulator: arith.accumulator,
                agreement: agree as f64 / dataset.len() as f64,
                max_logit_error,
            })
        })
        .collect()
}

pub const SWEEP_CSV_HEADER: &str = "spec,total_bits,int_bits,frac_bits,accumulator,agreement,max_logit_error";

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from(SWEEP_CSV_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{:.6},{:.9}\n",
            r.spec,
            r.spec.total_bits(),
            r.spec.int_bits(),
            r.spec.frac_bits(),
            r.accumulator,
            r.agreement,
            r.max_logit_error
        ));
    }
    s
}
