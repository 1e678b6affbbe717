//! Fully connected tanh networks evaluated on jets.
//!
//! Hidden layers apply `tanh(W x + b)`; the output layer is affine. Weights
//! of layer `ℓ` are stored row-major (`rows = fan_out`, `cols = fan_in`)
//! followed by its bias, layer after layer, in one flat [`ParameterVector`].

pub mod batch;
mod checkpoint;

pub use batch::{
    AdjointBlock, ChunkAdjoints, ChunkOutputs, JetOrder, OutputBlock, PointOutputs, TermStats,
};
pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_FORMAT_VERSION};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::ScalarJet2;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkShape {
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden_layers: usize,
    pub hidden_width: usize,
}

/// Placement of one affine layer inside the flat parameter vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerLayout {
    pub rows: usize,
    pub cols: usize,
    pub weight_offset: usize,
    pub bias_offset: usize,
}

impl LayerLayout {
    pub fn bias_len(&self) -> usize {
        self.rows
    }

    pub fn end(&self) -> usize {
        self.bias_offset + self.rows
    }
}

impl NetworkShape {
    /// `(u, t) -> (x, y)`.
    pub fn curve(hidden_layers: usize, hidden_width: usize) -> Self {
        Self {
            input_dim: 2,
            output_dim: 2,
            hidden_layers,
            hidden_width,
        }
    }

    /// `(u1, u2, t) -> (x, y, z)`.
    pub fn surface(hidden_layers: usize, hidden_width: usize) -> Self {
        Self {
            input_dim: 3,
            output_dim: 3,
            hidden_layers,
            hidden_width,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=3).contains(&self.input_dim) {
            return Err(Error::config("network.input_dim", "must be 2 or 3"));
        }
        if !(2..=3).contains(&self.output_dim) {
            return Err(Error::config("network.output_dim", "must be 2 or 3"));
        }
        if self.hidden_layers == 0 {
            return Err(Error::config("network.hidden_layers", "must be at least 1"));
        }
        if self.hidden_width == 0 {
            return Err(Error::config("network.hidden_width", "must be at least 1"));
        }
        Ok(())
    }

    /// Layer layouts from input to output. A shape with zero hidden layers is
    /// a single affine map; configs reject it but the engine handles it.
    pub fn layout(&self) -> Vec<LayerLayout> {
        let mut widths = vec![self.input_dim];
        widths.extend(std::iter::repeat_n(self.hidden_width, self.hidden_layers));
        widths.push(self.output_dim);

        let mut offset = 0;
        widths
            .windows(2)
            .map(|w| {
                let (cols, rows) = (w[0], w[1]);
                let layer = LayerLayout {
                    rows,
                    cols,
                    weight_offset: offset,
                    bias_offset: offset + rows * cols,
                };
                offset = layer.end();
                layer
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layout().last().map_or(0, LayerLayout::end)
    }
}

/// Weight matrix (row-major) and bias of one layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerMatrices {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParameterVector {
    shape: NetworkShape,
    values: Vec<f64>,
}

impl ParameterVector {
    pub fn new(shape: NetworkShape, values: Vec<f64>) -> Result<Self> {
        let expected = shape.param_count();
        if values.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "shape needs {expected} parameters, got {}",
                values.len()
            )));
        }
        Ok(Self { shape, values })
    }

    pub fn zeros(shape: NetworkShape) -> Self {
        Self {
            values: vec![0.0; shape.param_count()],
            shape,
        }
    }

    pub fn shape(&self) -> NetworkShape {
        self.shape
    }

    pub fn layout(&self) -> Vec<LayerLayout> {
        self.shape.layout()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn to_matrices(&self) -> Vec<LayerMatrices> {
        self.layout()
            .iter()
            .map(|l| LayerMatrices {
                weights: self.values[l.weight_offset..l.bias_offset].to_vec(),
                bias: self.values[l.bias_offset..l.end()].to_vec(),
            })
            .collect()
    }

    pub fn from_matrices(shape: NetworkShape, layers: &[LayerMatrices]) -> Result<Self> {
        let layout = shape.layout();
        if layout.len() != layers.len() {
            return Err(Error::ShapeMismatch(format!(
                "shape has {} layers, got {}",
                layout.len(),
                layers.len()
            )));
        }
        let mut values = Vec::with_capacity(shape.param_count());
        for (l, m) in layout.iter().zip(layers) {
            if m.weights.len() != l.rows * l.cols || m.bias.len() != l.rows {
                return Err(Error::ShapeMismatch(format!(
                    "layer expects {}x{} weights and {} biases",
                    l.rows, l.cols, l.rows
                )));
            }
            values.extend_from_slice(&m.weights);
            values.extend_from_slice(&m.bias);
        }
        Ok(Self { shape, values })
    }
}

/// Xavier/Glorot uniform weights on `±√(6/(fan_in+fan_out))`, zero biases.
pub fn init_xavier(shape: NetworkShape, seed: u64) -> ParameterVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParameterVector::zeros(shape);
    for layer in shape.layout() {
        let bound = (6.0 / (layer.rows + layer.cols) as f64).sqrt();
        for w in &mut params.values[layer.weight_offset..layer.bias_offset] {
            *w = rng.random_range(-bound..bound);
        }
    }
    params
}

/// Per-coordinate affine map applied to raw inputs before the first layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputMap {
    pub scale: Vec<f64>,
    pub shift: Vec<f64>,
}

impl InputMap {
    pub fn identity(dim: usize) -> Self {
        Self {
            scale: vec![1.0; dim],
            shift: vec![0.0; dim],
        }
    }

    /// Maps each `[lo, hi]` onto `[-1, 1]`.
    pub fn normalizing(bounds: &[(f64, f64)]) -> Self {
        let scale: Vec<f64> = bounds.iter().map(|&(lo, hi)| 2.0 / (hi - lo)).collect();
        let shift = bounds
            .iter()
            .zip(&scale)
            .map(|(&(lo, _), s)| -1.0 - lo * s)
            .collect();
        Self { scale, shift }
    }

    pub fn dim(&self) -> usize {
        self.scale.len()
    }
}

/// A network with its input map: the trainable surrogate of the flow.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    pub params: ParameterVector,
    pub input_map: InputMap,
}

impl Network {
    pub fn new(params: ParameterVector) -> Self {
        let dim = params.shape().input_dim;
        Self {
            params,
            input_map: InputMap::identity(dim),
        }
    }

    pub fn with_input_map(params: ParameterVector, input_map: InputMap) -> Result<Self> {
        if input_map.dim() != params.shape().input_dim {
            return Err(Error::ShapeMismatch(
                "input map dimension differs from network input".into(),
            ));
        }
        Ok(Self { params, input_map })
    }

    pub fn shape(&self) -> NetworkShape {
        self.params.shape()
    }

    /// Output jets at one point, computed layer by layer with jet arithmetic.
    ///
    /// This is the reference path; training goes through the batched engine
    /// in [`batch`], which must agree with it.
    pub fn forward_jets<const D: usize>(&self, point: [f64; D]) -> Result<Vec<ScalarJet2<D>>> {
        let shape = self.shape();
        if shape.input_dim != D {
            return Err(Error::ShapeMismatch(format!(
                "network takes {} inputs, point has {D}",
                shape.input_dim
            )));
        }
        let mut x: Vec<ScalarJet2<D>> = (0..D)
            .map(|k| {
                ScalarJet2::variable(point[k], k) * self.input_map.scale[k]
                    + self.input_map.shift[k]
            })
            .collect();

        let layout = shape.layout();
        let values = self.params.values();
        for (li, layer) in layout.iter().enumerate() {
            let w = &values[layer.weight_offset..layer.bias_offset];
            let bias = &values[layer.bias_offset..layer.end()];
            let hidden = li + 1 < layout.len();
            let mut next = Vec::with_capacity(layer.rows);
            for i in 0..layer.rows {
                let mut z = ScalarJet2::constant(bias[i]);
                for (j, xj) in x.iter().enumerate() {
                    z = z + *xj * w[i * layer.cols + j];
                }
                let a = if hidden { z.tanh() } else { z };
                if !a.is_finite() {
                    return Err(Error::NumericOverflow { layer: li });
                }
                next.push(a);
            }
            x = next;
        }
        Ok(x)
    }

    /// Output values for `n` points stored row-major (`n × input_dim`);
    /// returns `n × output_dim`.
    pub fn forward_values(&self, points: &[f64]) -> Result<Vec<f64>> {
        self.evaluate(points, JetOrder::Value)
    }

    /// Output components for `n` points, laid out `[point][output][component]`
    /// with components ordered as in [`ScalarJet2::component`].
    pub fn evaluate(&self, points: &[f64], order: JetOrder) -> Result<Vec<f64>> {
        let shape = self.shape();
        let comps = order.components(shape.input_dim);
        let n = points.len() / shape.input_dim;
        let mut out = vec![0.0; n * shape.output_dim * comps];
        let stride = shape.output_dim * comps;
        let mut sink = |start: usize, block: &ChunkOutputs<'_>| {
            for p in 0..block.len() {
                let row = &mut out[(start + p) * stride..(start + p + 1) * stride];
                for o in 0..shape.output_dim {
                    for c in 0..comps {
                        row[o * comps + c] = block.get(p, o, c);
                    }
                }
            }
        };
        batch::for_each_chunk(self, points, order, &mut sink)?;
        Ok(out)
    }
}

/// Anything that yields position jets `X(point)` with derivatives in the
/// `D` input coordinates: the network, or an exact closure used as a
/// manufactured solution.
pub trait Field<const D: usize>: Sync {
    fn jets(&self, point: [f64; D]) -> Result<[ScalarJet2<D>; D]>;
}

impl<const D: usize> Field<D> for Network {
    fn jets(&self, point: [f64; D]) -> Result<[ScalarJet2<D>; D]> {
        if self.shape().output_dim != D {
            return Err(Error::ShapeMismatch(format!(
                "network has {} outputs, expected {D}",
                self.shape().output_dim
            )));
        }
        let v = self.forward_jets(point)?;
        Ok(std::array::from_fn(|i| v[i]))
    }
}

/// Batch evaluation of output jet components, laid out
/// `[point][output][component]`.
pub trait Evaluator: Sync {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn evaluate(&self, points: &[f64], order: JetOrder) -> Result<Vec<f64>>;
}

impl Evaluator for Network {
    fn input_dim(&self) -> usize {
        self.shape().input_dim
    }

    fn output_dim(&self) -> usize {
        self.shape().output_dim
    }

    fn evaluate(&self, points: &[f64], order: JetOrder) -> Result<Vec<f64>> {
        Network::evaluate(self, points, order)
    }
}

/// Evaluates a [`Field`] point by point.
pub struct FieldEvaluator<'a, F, const D: usize>(pub &'a F);

impl<F: Field<D>, const D: usize> Evaluator for FieldEvaluator<'_, F, D> {
    fn input_dim(&self) -> usize {
        D
    }

    fn output_dim(&self) -> usize {
        D
    }

    fn evaluate(&self, points: &[f64], order: JetOrder) -> Result<Vec<f64>> {
        let comps = order.components(D);
        let mut out = Vec::with_capacity(points.len() * comps);
        for p in points.chunks_exact(D) {
            let jets = self.0.jets(std::array::from_fn(|k| p[k]))?;
            for jet in &jets {
                out.extend((0..comps).map(|c| jet.component(c)));
            }
        }
        Ok(out)
    }
}
