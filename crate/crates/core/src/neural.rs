//! One-hidden-layer perceptron trained incrementally with momentum.
//!
//! Weights are stored per neuron with the bias as the last entry of each row.
//! The per-neuron primitives (`hidden_activation`, `output_delta`,
//! `update_output_neuron`, ...) are shared by the centralized trainer here and
//! by the distributed trainer in [`crate::engine`], which feeds them values
//! received over the simulated channel instead of the true ones.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{one_hot_encode, Dataset};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NeuralError {
    #[error("non-finite value in {context}")]
    Divergence { context: String },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("unknown sizing formula '{0}' (expected boger, kolmogorov, daqi or weka)")]
    UnknownFormula(String),
    #[error("invalid training parameter: {0}")]
    InvalidParameter(String),
}

/// Hidden-layer sizing heuristics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SizingFormula {
    /// `2/3 (n_in + n_out)`
    Boger,
    /// `2 n_in + 1`
    Kolmogorov,
    /// `sqrt(n_in (n_out + 2))`
    #[default]
    Daqi,
    /// `(n_in + n_out) / 2`
    Weka,
}

impl fmt::Display for SizingFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SizingFormula::Boger => "boger",
            SizingFormula::Kolmogorov => "kolmogorov",
            SizingFormula::Daqi => "daqi",
            SizingFormula::Weka => "weka",
        };
        f.write_str(s)
    }
}

impl FromStr for SizingFormula {
    type Err = NeuralError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "boger" => Ok(SizingFormula::Boger),
            "kolmogorov" => Ok(SizingFormula::Kolmogorov),
            "daqi" => Ok(SizingFormula::Daqi),
            "weka" => Ok(SizingFormula::Weka),
            _ => Err(NeuralError::UnknownFormula(s.to_string())),
        }
    }
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

pub fn hidden_count(formula: SizingFormula, n_in: usize, n_out: usize) -> usize {
    let n = match formula {
        SizingFormula::Boger => round_half_up(2.0 * (n_in + n_out) as f64 / 3.0),
        SizingFormula::Kolmogorov => 2 * n_in + 1,
        SizingFormula::Daqi => round_half_up(((n_in * (n_out + 2)) as f64).sqrt()),
        SizingFormula::Weka => round_half_up((n_in + n_out) as f64 / 2.0),
    };
    n.max(1)
}

/// Logistic function, written to avoid overflow for large `|t|`.
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Momentum step: `-rate * gradient + momentum * previous`.
#[inline]
pub fn momentum_step(learning_rate: f64, momentum: f64, gradient: f64, previous: f64) -> f64 {
    -learning_rate * gradient + momentum * previous
}

/// `sigmoid(w . [inputs; 1])` for one neuron's weight row.
#[inline]
pub fn activation(row: &[f64], inputs: &[f64]) -> f64 {
    let n = inputs.len();
    let mut net = row[n];
    for (w, x) in row[..n].iter().zip(inputs) {
        net += w * x;
    }
    sigmoid(net)
}

/// Output-layer error signal for squared error with a sigmoid unit.
#[inline]
pub fn output_delta(output: f64, target: f64) -> f64 {
    (output - target) * output * (1.0 - output)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub n_in: usize,
    pub n_hid: usize,
    pub n_out: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpNetwork {
    pub shape: Shape,
    /// `n_hid` rows of `n_in + 1` weights.
    pub weights_ih: Vec<Vec<f64>>,
    /// `n_out` rows of `n_hid + 1` weights.
    pub weights_ho: Vec<Vec<f64>>,
    pub prev_delta_ih: Vec<Vec<f64>>,
    pub prev_delta_ho: Vec<Vec<f64>>,
    pub learning_rate: f64,
    pub momentum: f64,
}

impl MlpNetwork {
    /// All-zero weights.
    pub fn zeros(shape: Shape, learning_rate: f64, momentum: f64) -> Result<Self, NeuralError> {
        if shape.n_in == 0 || shape.n_hid == 0 || shape.n_out == 0 {
            return Err(NeuralError::Shape(format!("empty layer in {shape:?}")));
        }
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(NeuralError::InvalidParameter(format!("learning rate {learning_rate}")));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(NeuralError::InvalidParameter(format!("momentum {momentum} outside [0, 1)")));
        }
        let ih = vec![vec![0.0; shape.n_in + 1]; shape.n_hid];
        let ho = vec![vec![0.0; shape.n_hid + 1]; shape.n_out];
        Ok(Self {
            shape,
            weights_ih: ih.clone(),
            weights_ho: ho.clone(),
            prev_delta_ih: ih,
            prev_delta_ho: ho,
            learning_rate,
            momentum,
        })
    }

    /// Weights uniform in `[-0.5, 0.5]`, momentum memory zeroed.
    pub fn init_weights<R: Rng + ?Sized>(rng: &mut R, shape: Shape, learning_rate: f64, momentum: f64) -> Result<Self, NeuralError> {
        let mut net = Self::zeros(shape, learning_rate, momentum)?;
        for row in net.weights_ih.iter_mut().chain(net.weights_ho.iter_mut()) {
            for w in row.iter_mut() {
                *w = rng.random_range(-0.5..=0.5);
            }
        }
        Ok(net)
    }

    pub fn hidden_activation(&self, i: usize, input: &[f64]) -> f64 {
        activation(&self.weights_ih[i], input)
    }

    pub fn output_activation(&self, j: usize, hidden: &[f64]) -> f64 {
        activation(&self.weights_ho[j], hidden)
    }

    pub fn forward_hidden(&self, input: &[f64]) -> Vec<f64> {
        (0..self.shape.n_hid).map(|i| self.hidden_activation(i, input)).collect()
    }

    pub fn forward_output(&self, hidden: &[f64]) -> Vec<f64> {
        (0..self.shape.n_out).map(|j| self.output_activation(j, hidden)).collect()
    }

    /// Hidden neuron `i`'s error signal from output deltas, using the current
    /// (not yet updated) hidden→output weights. `delta_from(j)` returns the
    /// delta neuron `i` has for output `j`.
    pub fn hidden_delta(&self, i: usize, hidden_i: f64, delta_from: impl Fn(usize) -> f64) -> f64 {
        let mut back = 0.0;
        for (j, row) in self.weights_ho.iter().enumerate() {
            back += row[i] * delta_from(j);
        }
        hidden_i * (1.0 - hidden_i) * back
    }

    fn update_row(row: &mut [f64], prev: &mut [f64], inputs: &[f64], delta: f64, rate: f64, momentum: f64) {
        let n = inputs.len();
        for m in 0..=n {
            let x = if m < n { inputs[m] } else { 1.0 };
            let step = momentum_step(rate, momentum, delta * x, prev[m]);
            row[m] += step;
            prev[m] = step;
        }
    }

    /// Updates output neuron `j`'s incoming weights from the hidden values it used.
    pub fn update_output_neuron(&mut self, j: usize, hidden_used: &[f64], delta: f64) {
        let (rate, mom) = (self.learning_rate, self.momentum);
        Self::update_row(&mut self.weights_ho[j], &mut self.prev_delta_ho[j], hidden_used, delta, rate, mom);
    }

    /// Updates hidden neuron `i`'s incoming weights from the network input.
    pub fn update_hidden_neuron(&mut self, i: usize, input: &[f64], delta: f64) {
        let (rate, mom) = (self.learning_rate, self.momentum);
        Self::update_row(&mut self.weights_ih[i], &mut self.prev_delta_ih[i], input, delta, rate, mom);
    }

    /// One incremental backpropagation step; returns the hidden-layer deltas.
    pub fn backward_and_update(&mut self, input: &[f64], hidden_used: &[f64], output: &[f64], target: &[f64]) -> Result<Vec<f64>, NeuralError> {
        if input.len() != self.shape.n_in || hidden_used.len() != self.shape.n_hid || output.len() != self.shape.n_out || target.len() != self.shape.n_out {
            return Err(NeuralError::Shape("backward_and_update argument lengths".into()));
        }
        let deltas_out: Vec<f64> = output.iter().zip(target).map(|(&o, &t)| output_delta(o, t)).collect();
        let deltas_hid: Vec<f64> = (0..self.shape.n_hid)
            .map(|i| self.hidden_delta(i, hidden_used[i], |j| deltas_out[j]))
            .collect();
        check_finite(&deltas_out, "output deltas")?;
        check_finite(&deltas_hid, "hidden deltas")?;
        for (j, &d) in deltas_out.iter().enumerate() {
            self.update_output_neuron(j, hidden_used, d);
        }
        for (i, &d) in deltas_hid.iter().enumerate() {
            self.update_hidden_neuron(i, input, d);
        }
        Ok(deltas_hid)
    }

    /// Forward pass plus update on one pattern.
    pub fn train_pattern(&mut self, input: &[f64], target: &[f64]) -> Result<(), NeuralError> {
        let hidden = self.forward_hidden(input);
        let output = self.forward_output(&hidden);
        self.backward_and_update(input, &hidden, &output, target)?;
        Ok(())
    }

    pub fn predict(&self, input: &[f64]) -> Vec<f64> {
        self.forward_output(&self.forward_hidden(input))
    }

    pub fn weights_finite(&self) -> bool {
        self.weights_ih.iter().chain(&self.weights_ho).flatten().all(|w| w.is_finite())
    }

    /// Half the summed squared error on one pattern; the quantity the updates descend.
    pub fn pattern_loss(&self, input: &[f64], target: &[f64]) -> f64 {
        0.5 * self.predict(input).iter().zip(target).map(|(o, t)| (o - t) * (o - t)).sum::<f64>()
    }

    /// Analytic gradients of [`MlpNetwork::pattern_loss`] as `(d/dW_ih, d/dW_ho)`.
    pub fn gradients(&self, input: &[f64], target: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let hidden = self.forward_hidden(input);
        let output = self.forward_output(&hidden);
        let d_out: Vec<f64> = output.iter().zip(target).map(|(&o, &t)| output_delta(o, t)).collect();
        let d_hid: Vec<f64> = (0..self.shape.n_hid).map(|i| self.hidden_delta(i, hidden[i], |j| d_out[j])).collect();
        let with_bias = |v: &[f64]| v.iter().copied().chain(std::iter::once(1.0)).collect::<Vec<_>>();
        let (x, h) = (with_bias(input), with_bias(&hidden));
        let g_ih = d_hid.iter().map(|&d| x.iter().map(|&v| d * v).collect()).collect();
        let g_ho = d_out.iter().map(|&d| h.iter().map(|&v| d * v).collect()).collect();
        (g_ih, g_ho)
    }

    /// Hidden→output weights as whitespace-separated rows (bias last).
    pub fn hidden_output_matrix_text(&self) -> String {
        matrix_text(&self.weights_ho)
    }

    pub fn input_hidden_matrix_text(&self) -> String {
        matrix_text(&self.weights_ih)
    }
}

fn check_finite(values: &[f64], context: &str) -> Result<(), NeuralError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(NeuralError::Divergence { context: context.to_string() })
    }
}

pub fn matrix_text(m: &[Vec<f64>]) -> String {
    let mut s = String::new();
    for row in m {
        let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    s
}

pub fn parse_matrix_text(text: &str) -> Result<Vec<Vec<f64>>, std::num::ParseFloatError> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split_whitespace().map(str::parse).collect())
        .collect()
}

/// Index of the largest entry; the first one wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub mse: f64,
    /// Rows are actual classes, columns predicted.
    pub confusion: Vec<Vec<u64>>,
}

impl Evaluation {
    /// Scores network outputs against labels.
    pub fn from_outputs(outputs: &[Vec<f64>], labels: &[usize], class_count: usize) -> Self {
        let mut confusion = vec![vec![0u64; class_count]; class_count];
        let mut sq = 0.0;
        let mut correct = 0usize;
        for (out, &label) in outputs.iter().zip(labels) {
            let predicted = argmax(out);
            confusion[label][predicted] += 1;
            if predicted == label {
                correct += 1;
            }
            for (c, &o) in out.iter().enumerate() {
                let t = if c == label { 1.0 } else { 0.0 };
                sq += (o - t) * (o - t);
            }
        }
        let n = outputs.len().max(1) as f64;
        Self { accuracy: correct as f64 / n, mse: sq / (n * class_count as f64), confusion }
    }
}

/// Plain (centralized) evaluation on a partition.
pub fn evaluate(net: &MlpNetwork, data: &Dataset) -> Evaluation {
    let outputs: Vec<Vec<f64>> = data.features.iter().map(|x| net.predict(x)).collect();
    Evaluation::from_outputs(&outputs, &data.labels, data.class_count())
}

/// One-hot targets for every instance of a partition.
pub fn targets(data: &Dataset) -> Vec<Vec<f64>> {
    data.labels
        .iter()
        .map(|&l| one_hot_encode(l, data.class_count()).expect("labels validated at load"))
        .collect()
}
