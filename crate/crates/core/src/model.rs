//! MLP projection head mapping pair vectors onto the unit hypersphere.
//!
//! `num_layers` hidden layers of `width` units with a nonlinearity, then a
//! linear layer of `output_dim` units whose output is L2-normalized.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::kernel::DistanceMode;
use crate::linalg::{norm, Matrix};

/// Pre-normalization outputs with a smaller norm are rejected.
pub const MIN_OUTPUT_NORM: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Swish,
    Relu,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Swish => x * sigmoid(x),
            Activation::Relu => x.max(0.0),
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Swish => {
                let s = sigmoid(x);
                s + x * s * (1.0 - s)
            }
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    fn init_gain(self) -> f64 {
        match self {
            Activation::Swish => 1.0,
            Activation::Relu => std::f64::consts::SQRT_2,
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Swish => "swish",
            Activation::Relu => "relu",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "swish" => Ok(Activation::Swish),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::Config(format!(
                "unknown activation {other:?} (expected swish or relu)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArchConfig {
    pub num_layers: usize,
    pub width: usize,
    pub output_dim: usize,
    pub activation: Activation,
    pub input_dim: usize,
}

impl ArchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_layers < 1 {
            return Err(Error::Config("arch.num_layers must be at least 1".into()));
        }
        if self.output_dim < 2 {
            return Err(Error::Config("arch.output_dim must be at least 2".into()));
        }
        if self.width < self.output_dim {
            return Err(Error::Config(format!(
                "arch.width ({}) must be at least arch.output_dim ({})",
                self.width, self.output_dim
            )));
        }
        if self.input_dim == 0 {
            return Err(Error::Config("arch.input_dim must be positive".into()));
        }
        Ok(())
    }

    /// `l / m`, the depth-to-width ratio.
    pub fn depth_width_ratio(&self) -> f64 {
        self.num_layers as f64 / self.width as f64
    }

    /// `(in, out)` dimensions of every layer, input to output.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.num_layers + 1);
        let mut prev = self.input_dim;
        for _ in 0..self.num_layers {
            dims.push((prev, self.width));
            prev = self.width;
        }
        dims.push((prev, self.output_dim));
        dims
    }
}

/// Dense layer, `weights` is `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Layer {
    fn forward_into(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            self.weights
                .iter_rows()
                .zip(&self.bias)
                .map(|(w, b)| crate::linalg::dot(w, input) + b),
        );
    }
}

/// Gradients with the same layout as the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn zeros_like(model: &ProjectionModel) -> Self {
        Self {
            layers: model
                .layers
                .iter()
                .map(|l| Layer {
                    weights: Matrix::zeros(l.weights.rows(), l.weights.cols()),
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
            .collect()
    }

    /// All gradient entries in parameter order.
    pub fn flatten(&self) -> Vec<f64> {
        self.slices().concat()
    }

    pub fn is_finite(&self) -> bool {
        self.slices()
            .iter()
            .all(|s| s.iter().all(|v| v.is_finite()))
    }
}

/// Per-sample intermediates kept for backpropagation.
#[derive(Debug, Clone)]
pub(crate) struct ForwardTrace {
    /// Input to each layer; `inputs[0]` is the sample itself.
    inputs: Vec<Vec<f64>>,
    /// Pre-activation of each hidden layer.
    pre: Vec<Vec<f64>>,
    /// Unit-norm output.
    pub(crate) z: Vec<f64>,
    out_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionModel {
    pub arch: ArchConfig,
    pub distance_mode: DistanceMode,
    pub tau: f64,
    pub layers: Vec<Layer>,
}

impl ProjectionModel {
    /// Fan-in scaled uniform weights (variance `gain² / fan_in`), zero biases.
    pub fn init(arch: ArchConfig, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gain = arch.activation.init_gain();
        let dims = arch.layer_dims();
        let last = dims.len() - 1;
        let layers = dims
            .iter()
            .enumerate()
            .map(|(i, &(fan_in, fan_out))| {
                let g = if i == last { 1.0 } else { gain };
                let bound = g * (3.0 / fan_in as f64).sqrt();
                let w = (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-bound..bound))
                    .collect();
                Layer {
                    weights: Matrix::from_vec(fan_out, fan_in, w).expect("sized buffer"),
                    bias: vec![0.0; fan_out],
                }
            })
            .collect();
        Ok(Self {
            arch,
            distance_mode: DistanceMode::default(),
            tau: crate::train::DEFAULT_TEMPERATURE,
            layers,
        })
    }

    pub fn with_geometry(mut self, distance_mode: DistanceMode, tau: f64) -> Self {
        self.distance_mode = distance_mode;
        self.tau = tau;
        self
    }

    pub fn num_parameters(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.as_slice().len() + l.bias.len())
            .sum()
    }

    pub fn param_slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    /// All parameters in layer order, weights (row-major) before biases.
    pub fn flat_params(&self) -> Vec<f64> {
        self.param_slices().concat()
    }

    pub fn set_flat_params(&mut self, values: &[f64]) -> Result<()> {
        let n = self.num_parameters();
        if values.len() != n {
            return Err(Error::shape(n, values.len(), "flat parameter vector"));
        }
        let mut rest = values;
        for s in self.param_slices_mut() {
            let (head, tail) = rest.split_at(s.len());
            s.copy_from_slice(head);
            rest = tail;
        }
        Ok(())
    }

    /// Output of the final linear layer before normalization.
    pub fn forward_raw(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.trace_unchecked(x).0)
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.arch.input_dim {
            return Err(Error::shape(
                self.arch.input_dim,
                x.len(),
                "projection input",
            ));
        }
        Ok(())
    }

    fn trace_unchecked(&self, x: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let act = self.arch.activation;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len() - 1);
        let mut cur = x.to_vec();
        let mut buf = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            layer.forward_into(&cur, &mut buf);
            inputs.push(std::mem::take(&mut cur));
            if i + 1 < self.layers.len() {
                cur = buf.iter().map(|&v| act.apply(v)).collect();
                pre.push(std::mem::take(&mut buf));
            } else {
                cur = std::mem::take(&mut buf);
            }
        }
        (cur, inputs, pre)
    }

    pub(crate) fn trace(&self, x: &[f64]) -> Result<ForwardTrace> {
        self.check_input(x)?;
        let (out, inputs, pre) = self.trace_unchecked(x);
        let n = norm(&out);
        if !(n >= MIN_OUTPUT_NORM) {
            return Err(Error::Degenerate {
                norm: n,
                min: MIN_OUTPUT_NORM,
            });
        }
        let z = out.iter().map(|v| v / n).collect();
        Ok(ForwardTrace {
            inputs,
            pre,
            z,
            out_norm: n,
        })
    }

    /// Projects `x` onto the unit hypersphere.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.trace(x).map(|t| t.z)
    }

    /// Projects every row of `x`.
    pub fn project_batch<R: AsRef<[f64]>>(&self, xs: &[R]) -> Result<Matrix> {
        let rows = xs
            .iter()
            .map(|x| self.project(x.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        if rows.is_empty() {
            return Ok(Matrix::zeros(0, self.arch.output_dim));
        }
        Matrix::from_rows(&rows)
    }

    /// Accumulates into `grads` the parameter gradient given `dz`, the
    /// gradient of the loss with respect to the normalized output.
    pub(crate) fn backward(&self, trace: &ForwardTrace, dz: &[f64], grads: &mut Gradients) {
        let act = self.arch.activation;
        // d(u/|u|)/du applied to dz
        let zg = crate::linalg::dot(&trace.z, dz);
        let mut delta: Vec<f64> = trace
            .z
            .iter()
            .zip(dz)
            .map(|(z, g)| (g - z * zg) / trace.out_norm)
            .collect();

        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let input = &trace.inputs[li];
            let g = &mut grads.layers[li];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                g.bias[o] += d;
                for (gw, &a) in g.weights.row_mut(o).iter_mut().zip(input) {
                    *gw += d * a;
                }
            }
            if li == 0 {
                break;
            }
            let mut upstream = vec![0.0; layer.weights.cols()];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                for (u, &w) in upstream.iter_mut().zip(layer.weights.row(o)) {
                    *u += d * w;
                }
            }
            let pre = &trace.pre[li - 1];
            delta = upstream
                .iter()
                .zip(pre)
                .map(|(u, &p)| u * act.derivative(p))
                .collect();
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        io::write_json_precise(path, &ModelFile::from(self))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file: ModelFile = io::read_json(path)?;
        file.into_model()
            .map_err(|e| Error::Validation(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LayerFile {
    w: Vec<Vec<f64>>,
    b: Vec<f64>,
}

/// Serialized model layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    arch: ArchConfig,
    distance_mode: DistanceMode,
    tau: f64,
    layers: Vec<LayerFile>,
}

impl From<&ProjectionModel> for ModelFile {
    fn from(m: &ProjectionModel) -> Self {
        ModelFile {
            format_version: io::FORMAT_VERSION,
            arch: m.arch,
            distance_mode: m.distance_mode,
            tau: m.tau,
            layers: m
                .layers
                .iter()
                .map(|l| LayerFile {
                    w: l.weights.to_rows(),
                    b: l.bias.clone(),
                })
                .collect(),
        }
    }
}

impl ModelFile {
    fn into_model(self) -> Result<ProjectionModel> {
        if self.format_version != io::FORMAT_VERSION {
            return Err(Error::Validation(format!(
                "unsupported format_version {}",
                self.format_version
            )));
        }
        self.arch.validate()?;
        if !(self.tau > 0.0) {
            return Err(Error::Config(format!(
                "tau must be positive, got {}",
                self.tau
            )));
        }
        let dims = self.arch.layer_dims();
        if dims.len() != self.layers.len() {
            return Err(Error::shape(dims.len(), self.layers.len(), "layer count"));
        }
        let layers = self
            .layers
            .into_iter()
            .zip(dims)
            .enumerate()
            .map(|(i, (l, (fan_in, fan_out)))| {
                if l.w.len() != fan_out || l.b.len() != fan_out {
                    return Err(Error::shape(fan_out, l.w.len(), format!("layer {i} rows")));
                }
                let weights = Matrix::from_rows(&l.w)?;
                if weights.cols() != fan_in {
                    return Err(Error::shape(
                        fan_in,
                        weights.cols(),
                        format!("layer {i} columns"),
                    ));
                }
                Ok(Layer { weights, bias: l.b })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ProjectionModel {
            arch: self.arch,
            distance_mode: self.distance_mode,
            tau: self.tau,
            layers,
        })
    }
}
