//! Small fully-connected network: ReLU hidden layers, linear output,
//! exact backpropagation.

use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    /// Row-major `outputs × inputs`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    /// Uniform in `±1/sqrt(fan_in)` for weights and biases.
    pub fn random<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let mut draw = || rng.random_range(-bound..bound);
        let weights = (0..inputs * outputs).map(|_| draw()).collect();
        let bias = (0..outputs).map(|_| draw()).collect();
        Self {
            inputs,
            outputs,
            weights,
            bias,
        }
    }

    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            self.weights
                .chunks_exact(self.inputs)
                .zip(&self.bias)
                .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b),
        );
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    layers: Vec<Dense>,
}

/// Parameter gradients, shaped like the network's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    fn zeros_like(net: &QNetwork) -> Self {
        Self {
            layers: net.layers.iter().map(|l| Dense::zeros(l.inputs, l.outputs)).collect(),
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
            .collect()
    }
}

/// Activations retained from a forward pass.
struct Trace {
    /// Input to each layer, then the final output.
    values: Vec<Vec<f64>>,
}

impl QNetwork {
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        let layers = sizes.windows(2).map(|w| Dense::random(w[0], w[1], rng)).collect();
        Self { layers }
    }

    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        Self {
            layers: sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
        }
    }

    pub fn from_layers(layers: Vec<Dense>) -> Option<Self> {
        if layers.is_empty() || layers.windows(2).any(|w| w[0].outputs != w[1].inputs) {
            return None;
        }
        if layers
            .iter()
            .any(|l| l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs)
        {
            return None;
        }
        Some(Self { layers })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].inputs)
            .chain(self.layers.iter().map(|l| l.outputs))
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.trace(x).values.pop().unwrap_or_default()
    }

    fn trace(&self, x: &[f64]) -> Trace {
        debug_assert_eq!(x.len(), self.input_dim());
        let mut values = Vec::with_capacity(self.layers.len() + 1);
        values.push(x.to_vec());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut out = Vec::with_capacity(layer.outputs);
            layer.apply(&values[i], &mut out);
            if i < last {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            values.push(out);
        }
        Trace { values }
    }

    /// Backpropagates `d_out` (gradient w.r.t. the output vector) for input
    /// `x`, accumulating into `grads`.
    fn backward(&self, trace: &Trace, d_out: &[f64], grads: &mut Gradients) {
        let mut delta = d_out.to_vec();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let input = &trace.values[i];
            let g = &mut grads.layers[i];
            for (o, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                g.bias[o] += d;
                let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                row.iter_mut().zip(input).for_each(|(gw, x)| *gw += d * x);
            }
            if i == 0 {
                break;
            }
            // through the weights, then through the ReLU of the previous layer
            let mut prev = vec![0.0; layer.inputs];
            for (o, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                prev.iter_mut().zip(row).for_each(|(p, w)| *p += d * w);
            }
            for (p, a) in prev.iter_mut().zip(input) {
                if *a <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
    }

    /// Mean squared TD error over `(input, action, target)` samples, and its
    /// gradient. Only the taken action's output contributes.
    pub fn loss_and_gradient(&self, samples: &[(&[f64], usize, f64)]) -> (f64, Gradients) {
        let mut grads = Gradients::zeros_like(self);
        let n = samples.len() as f64;
        let mut loss = 0.0;
        let mut d_out = vec![0.0; self.output_dim()];
        for &(x, a, y) in samples {
            let trace = self.trace(x);
            let q = trace.values[trace.values.len() - 1][a];
            let err = q - y;
            loss += err * err;
            d_out.iter_mut().for_each(|v| *v = 0.0);
            d_out[a] = 2.0 * err / n;
            self.backward(&trace, &d_out, &mut grads);
        }
        (loss / n, grads)
    }

    pub fn loss(&self, samples: &[(&[f64], usize, f64)]) -> f64 {
        let n = samples.len() as f64;
        samples
            .iter()
            .map(|&(x, a, y)| {
                let e = self.forward(x)[a] - y;
                e * e
            })
            .sum::<f64>()
            / n
    }

    /// Plain gradient descent step.
    pub fn apply_gradients(&mut self, grads: &Gradients, learning_rate: f64) {
        for (layer, g) in self.layers.iter_mut().zip(&grads.layers) {
            layer
                .weights
                .iter_mut()
                .zip(&g.weights)
                .for_each(|(w, d)| *w -= learning_rate * d);
            layer
                .bias
                .iter_mut()
                .zip(&g.bias)
                .for_each(|(b, d)| *b -= learning_rate * d);
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Flat view in layer order, weights (row-major) then bias per layer.
    pub fn parameters(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
            .collect()
    }

    pub fn parameter_mut(&mut self, mut index: usize) -> &mut f64 {
        for l in &mut self.layers {
            if index < l.weights.len() {
                return &mut l.weights[index];
            }
            index -= l.weights.len();
            if index < l.bias.len() {
                return &mut l.bias[index];
            }
            index -= l.bias.len();
        }
        panic!("parameter index out of range");
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }
}
