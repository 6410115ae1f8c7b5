//! Seeded generators for synthetic models and inputs.
//!
//! Everything here is reproducible from a `u64` seed and is meant for tests,
//! demos and the quantization harness. None of it resembles physics data.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::graph::GraphConfig;
use crate::inference::{Model, Sample};
use crate::matrix::ColMatrix;
use crate::model::{Architecture, Layer, MlpSet, MlpSpec, ModelParams};

pub type SynthRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SynthRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform weights in `+-gain/sqrt(fan_in)`, biases in `+-0.1`.
pub fn random_layers(spec: &MlpSpec, gain: f64, rng: &mut impl Rng) -> Result<Vec<Layer>> {
    spec.layer_dims()
        .map(|(fan_in, fan_out)| {
            let bound = gain / (fan_in as f64).sqrt();
            let w = (0..fan_in * fan_out).map(|_| rng.gen_range(-bound..=bound)).collect();
            let b = (0..fan_out).map(|_| rng.gen_range(-0.1..=0.1)).collect();
            Layer::new(ColMatrix::from_col_major(fan_out, fan_in, w)?, b)
        })
        .collect()
}

pub fn random_params(mlps: &MlpSet, gain: f64, rng: &mut impl Rng) -> Result<ModelParams> {
    Ok(ModelParams {
        f_r: random_layers(&mlps.f_r, gain, rng)?,
        f_o: random_layers(&mlps.f_o, gain, rng)?,
        phi_o: random_layers(&mlps.phi_o, gain, rng)?,
    })
}

/// A small random architecture: `n_o` in 2..=8, `p` in 1..=6, one hidden
/// layer per MLP of 2..=8 units.
pub fn random_architecture(rng: &mut impl Rng) -> Result<Architecture> {
    let graph = GraphConfig::new(rng.gen_range(2..=8), rng.gen_range(1..=6))?;
    let d_e = rng.gen_range(1..=6);
    let d_o = rng.gen_range(1..=6);
    let mut hidden = || rng.gen_range(2..=8);
    let mlps = MlpSet::from_sizes(graph, vec![hidden(), d_e], vec![hidden(), d_o], vec![hidden(), 5])?;
    Ok(Architecture { graph, mlps })
}

pub fn random_model(rng: &mut impl Rng) -> Result<Model> {
    let arch = random_architecture(rng)?;
    let params = random_params(&arch.mlps, 1.0, rng)?;
    Model::new(arch, params)
}

/// `count` inputs with features uniform in `[-1, 1]`.
pub fn random_inputs(graph: GraphConfig, count: usize, rng: &mut impl Rng) -> Vec<ColMatrix<f64>> {
    (0..count)
        .map(|_| {
            let data = (0..graph.p() * graph.n_o()).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            ColMatrix::from_col_major(graph.p(), graph.n_o(), data).expect("sized")
        })
        .collect()
}

/// Inputs whose real-valued top-two logits differ by at least `min_margin`.
///
/// Returns fewer than `count` inputs if `max_draws` random inputs are not enough.
pub fn separated_inputs(
    model: &Model,
    count: usize,
    min_margin: f64,
    max_draws: usize,
    rng: &mut impl Rng,
) -> Result<Vec<ColMatrix<f64>>> {
    let engine = model.real_engine()?;
    let mut out = Vec::with_capacity(count);
    for _ in 0..max_draws {
        if out.len() == count {
            break;
        }
        let x = random_inputs(model.arch.graph, 1, rng).remove(0);
        let mut logits = engine.forward(&x)?.logits;
        logits.sort_by(|a, b| b.total_cmp(a));
        if logits[0] - logits[1] >= min_margin {
            out.push(x);
        }
    }
    Ok(out)
}

pub fn to_samples(inputs: &[ColMatrix<f64>]) -> Vec<Sample> {
    inputs.iter().map(|m| Sample::from_matrix(m, None)).collect()
}
