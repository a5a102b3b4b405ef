//! Fully-connected encoder towers with exact reverse-mode gradients.
//!
//! Two tower flavors share one implementation: the video tower consumes a
//! single feature vector, the music tower consumes a low-level and a
//! high-level block that are concatenated before the first layer. Hidden
//! layers use ReLU, the final layer is always linear so the embedding can
//! point anywhere on the sphere.

use crate::error::{Error, Result};
use crate::numerics::{matvec, matvec_transpose, Matrix, Rng, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

/// One dense layer: `activation(weight · input + bias)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weight: Matrix, // out_dim x in_dim
    pub bias: Vector,   // out_dim
    pub activation: Activation,
}

impl LayerParams {
    pub fn in_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.rows()
    }
}

/// Input arity of a tower: one feature block, or two blocks fused by
/// concatenation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputDims {
    One(usize),
    Two(usize, usize),
}

impl InputDims {
    pub fn total(&self) -> usize {
        match *self {
            InputDims::One(d) => d,
            InputDims::Two(a, b) => a + b,
        }
    }

    pub fn arity(&self) -> usize {
        match self {
            InputDims::One(_) => 1,
            InputDims::Two(..) => 2,
        }
    }
}

/// Feature input for one tower, matching its arity.
#[derive(Debug, Clone, PartialEq)]
pub enum TowerFeatures {
    One(Vector),
    Two(Vector, Vector),
}

impl TowerFeatures {
    pub fn dims(&self) -> InputDims {
        match self {
            TowerFeatures::One(v) => InputDims::One(v.dim()),
            TowerFeatures::Two(a, b) => InputDims::Two(a.dim(), b.dim()),
        }
    }

    fn concatenated(&self) -> Vector {
        match self {
            TowerFeatures::One(v) => v.clone(),
            TowerFeatures::Two(a, b) => Vector::concat(a, b),
        }
    }
}

/// Weights of a whole tower.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    input_dims: InputDims,
    layers: Vec<LayerParams>,
}

/// Cached activations from one forward pass; consumed by [`EncoderParams::backward`].
#[derive(Debug, Clone)]
pub struct ForwardTape {
    input_dims: InputDims,
    layer_shapes: Vec<(usize, usize)>,
    /// layer_inputs[l] is the vector fed into layer l (index 0 is the
    /// concatenated raw input).
    layer_inputs: Vec<Vector>,
    /// Pre-activation z of every layer, needed for the ReLU mask.
    preacts: Vec<Vector>,
}

impl ForwardTape {
    /// Per-layer pre-activations, in layer order. Useful for diagnostics,
    /// e.g. detecting inputs that sit on a ReLU kink.
    pub fn preactivations(&self) -> &[Vector] {
        &self.preacts
    }
}

/// Gradients mirroring [`EncoderParams`], plus gradients w.r.t. the input
/// block(s).
#[derive(Debug, Clone)]
pub struct EncoderGradients {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vector>,
    pub inputs: Vec<Vector>,
}

impl EncoderParams {
    /// Initializes a tower: hidden layers are ReLU, the output layer is
    /// linear. Weights are uniform in ±1/sqrt(fan_in), biases zero.
    pub fn init(
        input_dims: InputDims,
        hidden: &[usize],
        output_dim: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        let mut sizes = vec![input_dims.total()];
        sizes.extend_from_slice(hidden);
        sizes.push(output_dim);
        if sizes.contains(&0) {
            return Err(Error::Config(format!(
                "encoder layer sizes must be positive, got {sizes:?}"
            )));
        }
        let n_layers = sizes.len() - 1;
        let mut layers = Vec::with_capacity(n_layers);
        for l in 0..n_layers {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let scale = 1.0 / (fan_in as f64).sqrt();
            let weight = Matrix::from_fn(fan_out, fan_in, |_, _| rng.uniform(-scale, scale));
            layers.push(LayerParams {
                weight,
                bias: Vector::zeros(fan_out),
                activation: if l + 1 == n_layers {
                    Activation::Identity
                } else {
                    Activation::Relu
                },
            });
        }
        Ok(Self { input_dims, layers })
    }

    /// Builds a tower from explicit layers, validating the chain.
    pub fn from_layers(input_dims: InputDims, layers: Vec<LayerParams>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("encoder needs at least one layer".into()));
        }
        let mut expect = input_dims.total();
        for (i, layer) in layers.iter().enumerate() {
            if layer.in_dim() != expect {
                return Err(Error::DimMismatch(format!(
                    "layer {i} expects input dim {}, previous produces {expect}",
                    layer.in_dim()
                )));
            }
            if layer.bias.dim() != layer.out_dim() {
                return Err(Error::DimMismatch(format!(
                    "layer {i} bias dim {} vs out dim {}",
                    layer.bias.dim(),
                    layer.out_dim()
                )));
            }
            expect = layer.out_dim();
        }
        if layers.last().unwrap().activation != Activation::Identity {
            return Err(Error::Config("final layer must be linear".into()));
        }
        Ok(Self { input_dims, layers })
    }

    pub fn input_dims(&self) -> InputDims {
        self.input_dims
    }

    pub fn layers(&self) -> &[LayerParams] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [LayerParams] {
        &mut self.layers
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.out_dim()).unwrap_or(0)
    }

    fn layer_shapes(&self) -> Vec<(usize, usize)> {
        self.layers
            .iter()
            .map(|l| (l.out_dim(), l.in_dim()))
            .collect()
    }

    /// Runs the tower, returning the embedding and the tape needed for an
    /// exact backward pass.
    pub fn forward(&self, input: &TowerFeatures) -> Result<(Vector, ForwardTape)> {
        if input.dims() != self.input_dims {
            return Err(Error::DimMismatch(format!(
                "tower expects {:?}, got {:?}",
                self.input_dims,
                input.dims()
            )));
        }
        let mut layer_inputs = Vec::with_capacity(self.layers.len());
        let mut preacts = Vec::with_capacity(self.layers.len());
        let mut current = input.concatenated();
        for layer in &self.layers {
            layer_inputs.push(current.clone());
            let mut z = matvec(&layer.weight, &current)?;
            for (zv, b) in z.as_mut_slice().iter_mut().zip(layer.bias.iter()) {
                *zv += b;
            }
            preacts.push(z.clone());
            if layer.activation == Activation::Relu {
                for zv in z.as_mut_slice() {
                    if *zv < 0.0 {
                        *zv = 0.0;
                    }
                }
            }
            current = z;
        }
        let tape = ForwardTape {
            input_dims: self.input_dims,
            layer_shapes: self.layer_shapes(),
            layer_inputs,
            preacts,
        };
        Ok((current, tape))
    }

    /// Embedding only, when no gradient is needed.
    pub fn embed(&self, input: &TowerFeatures) -> Result<Vector> {
        Ok(self.forward(input)?.0)
    }

    /// Exact reverse-mode gradients of `d_embedding · forward(x)` with
    /// respect to every weight, bias, and the input block(s).
    ///
    /// The ReLU subgradient at exactly zero is taken to be zero.
    pub fn backward(&self, tape: &ForwardTape, d_embedding: &Vector) -> Result<EncoderGradients> {
        if tape.input_dims != self.input_dims || tape.layer_shapes != self.layer_shapes() {
            return Err(Error::DimMismatch(
                "tape does not match this encoder's shape".into(),
            ));
        }
        if d_embedding.dim() != self.output_dim() {
            return Err(Error::DimMismatch(format!(
                "cotangent dim {} vs embedding dim {}",
                d_embedding.dim(),
                self.output_dim()
            )));
        }
        let n = self.layers.len();
        let mut weights = vec![Matrix::zeros(0, 0); n];
        let mut biases = vec![Vector::zeros(0); n];
        let mut d = d_embedding.clone();
        for l in (0..n).rev() {
            let layer = &self.layers[l];
            if layer.activation == Activation::Relu {
                for (dv, z) in d.as_mut_slice().iter_mut().zip(tape.preacts[l].iter()) {
                    if *z <= 0.0 {
                        *dv = 0.0;
                    }
                }
            }
            let mut dw = Matrix::zeros(layer.out_dim(), layer.in_dim());
            dw.add_outer_scaled(d.as_slice(), tape.layer_inputs[l].as_slice(), 1.0);
            weights[l] = dw;
            biases[l] = d.clone();
            d = matvec_transpose(&layer.weight, &d)?;
        }
        let inputs = match self.input_dims {
            InputDims::One(_) => vec![d],
            InputDims::Two(a, _) => {
                let low = Vector::from_fn(a, |i| d[i]);
                let high = Vector::from_fn(d.dim() - a, |i| d[a + i]);
                vec![low, high]
            }
        };
        Ok(EncoderGradients {
            weights,
            biases,
            inputs,
        })
    }
}

impl EncoderGradients {
    pub fn zeros_like(enc: &EncoderParams) -> Self {
        Self {
            weights: enc
                .layers
                .iter()
                .map(|l| Matrix::zeros(l.out_dim(), l.in_dim()))
                .collect(),
            biases: enc.layers.iter().map(|l| Vector::zeros(l.out_dim())).collect(),
            inputs: Vec::new(),
        }
    }

    /// `self += c * other` over weights and biases (input gradients are not
    /// accumulated; they belong to individual samples).
    pub fn add_scaled(&mut self, other: &EncoderGradients, c: f64) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.add_scaled(b, c);
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            a.add_scaled(b, c);
        }
    }
}
