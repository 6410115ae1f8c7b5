//! MLP shapes, parameters and the JSON model/weights file formats.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::GraphConfig;
use crate::matrix::ColMatrix;

/// Number of jet classes produced by the graph head.
pub const NUM_CLASSES: usize = 5;

/// The three trainable functions of the interaction network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MlpName {
    /// Edge function, applied per edge column of `B`.
    #[serde(rename = "f_R")]
    FR,
    /// Node function, applied per node column of `C`.
    #[serde(rename = "f_O")]
    FO,
    /// Graph head.
    #[serde(rename = "phi_O")]
    PhiO,
}

impl MlpName {
    pub const ALL: [MlpName; 3] = [MlpName::FR, MlpName::FO, MlpName::PhiO];

    pub fn as_str(&self) -> &'static str {
        match self {
            MlpName::FR => "f_R",
            MlpName::FO => "f_O",
            MlpName::PhiO => "phi_O",
        }
    }
}

impl fmt::Display for MlpName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct MlpSpec {
    pub name: MlpName,
    pub input_size: usize,
    pub layer_sizes: Vec<usize>,
    pub activations: Vec<Activation>,
}

impl MlpSpec {
    /// ReLU on every hidden layer, linear output.
    pub fn new(name: MlpName, input_size: usize, layer_sizes: Vec<usize>) -> Result<Self> {
        let n = layer_sizes.len();
        let activations = (0..n).map(|k| if k + 1 == n { Activation::Linear } else { Activation::Relu }).collect();
        Self::with_activations(name, input_size, layer_sizes, activations)
    }

    pub fn with_activations(
        name: MlpName,
        input_size: usize,
        layer_sizes: Vec<usize>,
        activations: Vec<Activation>,
    ) -> Result<Self> {
        if layer_sizes.is_empty() {
            return Err(Error::Config(format!("{name} has no layers")));
        }
        if input_size == 0 || layer_sizes.contains(&0) {
            return Err(Error::Config(format!("{name} has a zero-width layer")));
        }
        if activations.len() != layer_sizes.len() {
            return Err(Error::Config(format!(
                "{name}: {} activations for {} layers",
                activations.len(),
                layer_sizes.len()
            )));
        }
        Ok(Self { name, input_size, layer_sizes, activations })
    }

    pub fn output_size(&self) -> usize {
        *self.layer_sizes.last().expect("non-empty by construction")
    }

    /// `(fan_in, fan_out)` of every layer.
    pub fn layer_dims(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        std::iter::once(self.input_size)
            .chain(self.layer_sizes.iter().copied())
            .zip(self.layer_sizes.iter().copied())
    }

    /// Total weight count (multiplications per forward pass).
    pub fn weight_count(&self) -> usize {
        self.layer_dims().map(|(i, o)| i * o).sum()
    }
}

/// The three MLPs of one model.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct MlpSet {
    pub f_r: MlpSpec,
    pub f_o: MlpSpec,
    pub phi_o: MlpSpec,
}

impl MlpSet {
    /// Checks the dimension chain `f_R: 2P -> D_e`, `f_O: P + D_e -> D_o`, `phi_O: D_o -> 5`.
    pub fn new(graph: GraphConfig, f_r: MlpSpec, f_o: MlpSpec, phi_o: MlpSpec) -> Result<Self> {
        let p = graph.p();
        let expect = |spec: &MlpSpec, name: MlpName, input: usize| -> Result<()> {
            if spec.name != name {
                return Err(Error::Config(format!("expected {name}, found {}", spec.name)));
            }
            if spec.input_size != input {
                return Err(Error::Config(format!("{name} input is {}, expected {input}", spec.input_size)));
            }
            Ok(())
        };
        expect(&f_r, MlpName::FR, 2 * p)?;
        expect(&f_o, MlpName::FO, p + f_r.output_size())?;
        expect(&phi_o, MlpName::PhiO, f_o.output_size())?;
        if phi_o.output_size() != NUM_CLASSES {
            return Err(Error::Config(format!("phi_O must output {NUM_CLASSES} classes, got {}", phi_o.output_size())));
        }
        Ok(Self { f_r, f_o, phi_o })
    }

    /// Builds the set from layer sizes only, deriving every input width.
    pub fn from_sizes(graph: GraphConfig, f_r: Vec<usize>, f_o: Vec<usize>, phi_o: Vec<usize>) -> Result<Self> {
        let fr = MlpSpec::new(MlpName::FR, 2 * graph.p(), f_r)?;
        let fo = MlpSpec::new(MlpName::FO, graph.p() + fr.output_size(), f_o)?;
        let ph = MlpSpec::new(MlpName::PhiO, fo.output_size(), phi_o)?;
        Self::new(graph, fr, fo, ph)
    }

    pub fn get(&self, name: MlpName) -> &MlpSpec {
        match name {
            MlpName::FR => &self.f_r,
            MlpName::FO => &self.f_o,
            MlpName::PhiO => &self.phi_o,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &MlpSpec> {
        [&self.f_r, &self.f_o, &self.phi_o].into_iter()
    }

    pub fn d_e(&self) -> usize {
        self.f_r.output_size()
    }

    pub fn d_o(&self) -> usize {
        self.f_o.output_size()
    }
}

/// Graph dimensions plus the MLP shapes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Architecture {
    pub graph: GraphConfig,
    pub mlps: MlpSet,
}

/// One fully connected layer: `y = W x + b`, `W` is `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub w: ColMatrix<f64>,
    pub b: Vec<f64>,
}

impl Layer {
    pub fn new(w: ColMatrix<f64>, b: Vec<f64>) -> Result<Self> {
        if w.rows() != b.len() {
            return Err(Error::dim("Layer::new", format!("{} output rows but {} biases", w.rows(), b.len())));
        }
        Ok(Self { w, b })
    }

    pub fn fan_in(&self) -> usize {
        self.w.cols()
    }

    pub fn fan_out(&self) -> usize {
        self.w.rows()
    }
}

/// Real-valued parameters for the three MLPs.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub f_r: Vec<Layer>,
    pub f_o: Vec<Layer>,
    pub phi_o: Vec<Layer>,
}

impl ModelParams {
    pub fn get(&self, name: MlpName) -> &[Layer] {
        match name {
            MlpName::FR => &self.f_r,
            MlpName::FO => &self.f_o,
            MlpName::PhiO => &self.phi_o,
        }
    }

    /// Verifies every layer shape against `mlps`.
    pub fn check(&self, mlps: &MlpSet) -> Result<()> {
        for spec in mlps.iter() {
            let layers = self.get(spec.name);
            if layers.len() != spec.layer_sizes.len() {
                return Err(Error::Config(format!(
                    "{} has {} weight layers, spec has {}",
                    spec.name,
                    layers.len(),
                    spec.layer_sizes.len()
                )));
            }
            for (k, (layer, (fan_in, fan_out))) in layers.iter().zip(spec.layer_dims()).enumerate() {
                if layer.fan_in() != fan_in || layer.fan_out() != fan_out {
                    return Err(Error::dim(
                        "ModelParams::check",
                        format!(
                            "{} layer {k} is {}x{}, expected {fan_out}x{fan_in}",
                            spec.name,
                            layer.fan_out(),
                            layer.fan_in()
                        ),
                    ));
                }
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// File formats

/// `{"n_o": 30, "p": 16, "mlps": [{"name": "f_R", "layer_sizes": [...], "activations": [...]}]}`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDescription {
    pub n_o: usize,
    pub p: usize,
    pub mlps: Vec<MlpDescription>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpDescription {
    pub name: MlpName,
    pub layer_sizes: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activations: Option<Vec<Activation>>,
}

impl ModelDescription {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn architecture(&self) -> Result<Architecture> {
        let graph = GraphConfig::new(self.n_o, self.p)?;
        let find = |name: MlpName| -> Result<&MlpDescription> {
            let mut hits = self.mlps.iter().filter(|m| m.name == name);
            let first = hits.next().ok_or_else(|| Error::Config(format!("model description lacks {name}")))?;
            if hits.next().is_some() {
                return Err(Error::Config(format!("model description lists {name} twice")));
            }
            Ok(first)
        };
        let fr = find(MlpName::FR)?;
        let fo = find(MlpName::FO)?;
        let ph = find(MlpName::PhiO)?;
        let build = |d: &MlpDescription, input: usize| -> Result<MlpSpec> {
            match &d.activations {
                Some(acts) => MlpSpec::with_activations(d.name, input, d.layer_sizes.clone(), acts.clone()),
                None => MlpSpec::new(d.name, input, d.layer_sizes.clone()),
            }
        };
        let f_r = build(fr, 2 * graph.p())?;
        let f_o = build(fo, graph.p() + f_r.output_size())?;
        let phi_o = build(ph, f_o.output_size())?;
        Ok(Architecture { graph, mlps: MlpSet::new(graph, f_r, f_o, phi_o)? })
    }

    pub fn from_architecture(arch: &Architecture) -> Self {
        Self {
            n_o: arch.graph.n_o(),
            p: arch.graph.p(),
            mlps: arch
                .mlps
                .iter()
                .map(|s| MlpDescription {
                    name: s.name,
                    layer_sizes: s.layer_sizes.clone(),
                    activations: Some(s.activations.clone()),
                })
                .collect(),
        }
    }
}

/// `{"f_R": [{"w": [[...]], "b": [...]}, ...], "f_O": [...], "phi_O": [...]}` with `w[out][in]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightsFile {
    #[serde(rename = "f_R")]
    pub f_r: Vec<LayerWeights>,
    #[serde(rename = "f_O")]
    pub f_o: Vec<LayerWeights>,
    #[serde(rename = "phi_O")]
    pub phi_o: Vec<LayerWeights>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerWeights {
    pub w: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

impl WeightsFile {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn into_params(self) -> Result<ModelParams> {
        let convert = |layers: Vec<LayerWeights>| -> Result<Vec<Layer>> {
            layers
                .into_iter()
                .map(|l| {
                    if l.w.iter().flatten().chain(&l.b).any(|v| !v.is_finite()) {
                        return Err(Error::Config("weights contain non-finite values".into()));
                    }
                    Layer::new(ColMatrix::from_rows(&l.w)?, l.b)
                })
                .collect()
        };
        Ok(ModelParams { f_r: convert(self.f_r)?, f_o: convert(self.f_o)?, phi_o: convert(self.phi_o)? })
    }

    pub fn from_params(params: &ModelParams) -> Self {
        let convert =
            |layers: &[Layer]| layers.iter().map(|l| LayerWeights { w: l.w.to_rows(), b: l.b.clone() }).collect();
        Self { f_r: convert(&params.f_r), f_o: convert(&params.f_o), phi_o: convert(&params.phi_o) }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DESC: &str = r#"{"n_o": 3, "p": 2, "mlps": [
        {"name": "f_R", "layer_sizes": [4, 3]},
        {"name": "f_O", "layer_sizes": [6, 4], "activations": ["relu", "linear"]},
        {"name": "phi_O", "layer_sizes": [5]}
    ]}"#;

    #[test]
    fn description_derives_input_sizes() {
        let arch = ModelDescription::from_json(DESC).unwrap().architecture().unwrap();
        assert_eq!(arch.mlps.f_r.input_size, 4);
        assert_eq!(arch.mlps.f_o.input_size, 2 + 3);
        assert_eq!(arch.mlps.phi_o.input_size, 4);
        assert_eq!(arch.mlps.f_r.activations, vec![Activation::Relu, Activation::Linear]);
        assert_eq!(arch.mlps.phi_o.activations, vec![Activation::Linear]);
    }

    #[test]
    fn head_must_output_five_classes() {
        let bad = DESC.replace("\"layer_sizes\": [5]", "\"layer_sizes\": [3]");
        assert!(ModelDescription::from_json(&bad).unwrap().architecture().is_err());
    }

    #[test]
    fn missing_or_duplicate_mlps_rejected() {
        let missing = r#"{"n_o": 3, "p": 2, "mlps": [{"name": "f_R", "layer_sizes": [3]}]}"#;
        assert!(ModelDescription::from_json(missing).unwrap().architecture().is_err());
        let unknown = DESC.replace("phi_O", "phi");
        assert!(ModelDescription::from_json(&unknown).is_err());
    }

    #[test]
    fn weight_shapes_checked() {
        let arch = ModelDescription::from_json(DESC).unwrap().architecture().unwrap();
        let layer = |o: usize, i: usize| LayerWeights { w: vec![vec![0.1; i]; o], b: vec![0.0; o] };
        let good = WeightsFile {
            f_r: vec![layer(4, 4), layer(3, 4)],
            f_o: vec![layer(6, 5), layer(4, 6)],
            phi_o: vec![layer(5, 4)],
        };
        good.clone().into_params().unwrap().check(&arch.mlps).unwrap();
        let mut bad = good;
        bad.f_o[0] = layer(6, 4);
        assert!(bad.into_params().unwrap().check(&arch.mlps).is_err());
    }

    #[test]
    fn weight_count_sums_layers() {
        let g = GraphConfig::new(30, 16).unwrap();
        let set = MlpSet::from_sizes(g, vec![8, 8], vec![16, 6], vec![5]).unwrap();
        assert_eq!(set.f_r.weight_count(), 32 * 8 + 8 * 8);
        assert_eq!(set.f_o.input_size, 24);
    }
}
