use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Example;
use crate::error::{Error, Result};
use crate::rng;

/// Per-example output of a forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardResult {
    /// Cross-entropy `-ln p[label]`.
    pub loss: f64,
    /// Softmax output.
    pub probs: Vec<f64>,
    pub predicted: usize,
}

/// Fully connected network with tanh hidden units and a softmax head.
///
/// Parameters live in one flat vector. Layer `l` maps `widths[l]` inputs to
/// `widths[l + 1]` outputs and stores its weight matrix row-major
/// (`out x in`) followed by its bias.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    widths: Vec<usize>,
    params: Vec<f64>,
}

fn param_count(widths: &[usize]) -> usize {
    widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    pub fn zeros(widths: &[usize]) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::config(format!(
                "architecture {widths:?} needs at least an input and an output layer of positive width"
            )));
        }
        Ok(Mlp {
            widths: widths.to_vec(),
            params: vec![0.0; param_count(widths)],
        })
    }

    /// Uniform init in `±1/sqrt(fan_in)` for weights and biases.
    pub fn new(widths: &[usize], seed: u64) -> Result<Self> {
        let mut m = Mlp::zeros(widths)?;
        let mut rng = rng::stream(seed, "init");
        let mut off = 0;
        for w in widths.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            for p in &mut m.params[off..off + fan_in * fan_out + fan_out] {
                *p = rng.gen_range(-bound..bound);
            }
            off += fan_in * fan_out + fan_out;
        }
        Ok(m)
    }

    pub fn from_params(widths: &[usize], params: Vec<f64>) -> Result<Self> {
        let m = Mlp::zeros(widths)?;
        if params.len() != m.params.len() {
            return Err(Error::config(format!(
                "architecture {widths:?} needs {} parameters, got {}",
                m.params.len(),
                params.len()
            )));
        }
        Ok(Mlp {
            widths: widths.to_vec(),
            params,
        })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn num_classes(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    fn num_layers(&self) -> usize {
        self.widths.len() - 1
    }

    fn check_example(&self, ex: &Example) -> Result<()> {
        if ex.features.len() != self.input_dim() {
            return Err(Error::config(format!(
                "example {} has {} features, model expects {}",
                ex.id,
                ex.features.len(),
                self.input_dim()
            )));
        }
        if ex.label >= self.num_classes() {
            return Err(Error::config(format!(
                "example {} label {} outside model's {} classes",
                ex.id,
                ex.label,
                self.num_classes()
            )));
        }
        Ok(())
    }

    /// Runs the network, leaving post-activation values of every layer in
    /// `acts` (`acts[0]` is the input) and softmax probabilities in the last.
    fn run(&self, x: &[f64], acts: &mut Vec<Vec<f64>>) {
        acts.resize_with(self.widths.len(), Vec::new);
        acts[0].clear();
        acts[0].extend_from_slice(x);
        let mut off = 0;
        let last = self.num_layers() - 1;
        for l in 0..self.num_layers() {
            let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
            let w = &self.params[off..off + n_in * n_out];
            let b = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            off += n_in * n_out + n_out;
            let (prev, next) = acts.split_at_mut(l + 1);
            let input = &prev[l];
            let out = &mut next[0];
            out.clear();
            for (row, &bias) in w.chunks_exact(n_in).zip(b) {
                let z = bias + row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>();
                out.push(if l == last { z } else { z.tanh() });
            }
        }
        softmax_in_place(acts.last_mut().unwrap());
    }

    pub fn forward_one(&self, ex: &Example) -> Result<ForwardResult> {
        self.check_example(ex)?;
        let mut acts = Vec::new();
        self.run(&ex.features, &mut acts);
        Ok(result_from_probs(acts.pop().unwrap(), ex.label))
    }

    pub fn forward<'a, I>(&self, batch: I) -> Result<Vec<ForwardResult>>
    where
        I: IntoIterator<Item = &'a Example>,
    {
        let mut acts = Vec::new();
        batch
            .into_iter()
            .map(|ex| {
                self.check_example(ex)?;
                self.run(&ex.features, &mut acts);
                Ok(result_from_probs(acts.last().unwrap().clone(), ex.label))
            })
            .collect()
    }

    /// Predicted class only; avoids allocating a result per example.
    pub fn predict(&self, ex: &Example, acts: &mut Vec<Vec<f64>>) -> usize {
        self.run(&ex.features, acts);
        argmax(acts.last().unwrap())
    }

    /// Mean cross-entropy over the batch and its gradient with respect to
    /// every parameter. No regularization terms.
    pub fn loss_and_gradient(&self, batch: &[&Example]) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return Err(Error::config("empty batch"));
        }
        let mut grad = vec![0.0; self.params.len()];
        let mut acts = Vec::new();
        let mut delta = Vec::new();
        let mut delta_prev = Vec::new();
        let mut total_loss = 0.0;

        // Layer offsets, so the backward sweep can walk them in reverse.
        let offsets: Vec<usize> = self
            .widths
            .windows(2)
            .scan(0, |off, w| {
                let o = *off;
                *off += w[0] * w[1] + w[1];
                Some(o)
            })
            .collect();

        for ex in batch {
            self.check_example(ex)?;
            self.run(&ex.features, &mut acts);
            let probs = acts.last().unwrap();
            total_loss += -probs[ex.label].max(f64::MIN_POSITIVE).ln();

            // dL/dz at the softmax input
            delta.clear();
            delta.extend_from_slice(probs);
            delta[ex.label] -= 1.0;

            for l in (0..self.num_layers()).rev() {
                let (n_in, n_out) = (self.widths[l], self.widths[l + 1]);
                let off = offsets[l];
                let input = &acts[l];
                let (gw, gb) = grad[off..off + n_in * n_out + n_out].split_at_mut(n_in * n_out);
                for ((grow, gbias), &d) in gw.chunks_exact_mut(n_in).zip(gb.iter_mut()).zip(&delta)
                {
                    *gbias += d;
                    for (g, &a) in grow.iter_mut().zip(input) {
                        *g += d * a;
                    }
                }
                if l > 0 {
                    let w = &self.params[off..off + n_in * n_out];
                    delta_prev.clear();
                    delta_prev.resize(n_in, 0.0);
                    for (row, &d) in w.chunks_exact(n_in).zip(&delta) {
                        for (dp, &wij) in delta_prev.iter_mut().zip(row) {
                            *dp += wij * d;
                        }
                    }
                    // tanh' = 1 - tanh^2, `input` already holds tanh(z)
                    for (dp, &a) in delta_prev.iter_mut().zip(input) {
                        *dp *= 1.0 - a * a;
                    }
                    std::mem::swap(&mut delta, &mut delta_prev);
                }
            }
        }
        let n = batch.len() as f64;
        for g in &mut grad {
            *g /= n;
        }
        Ok((total_loss / n, grad))
    }

    /// Mean cross-entropy only.
    pub fn mean_loss(&self, batch: &[&Example]) -> Result<f64> {
        let mut acts = Vec::new();
        let mut total = 0.0;
        for ex in batch {
            self.check_example(ex)?;
            self.run(&ex.features, &mut acts);
            total += -acts.last().unwrap()[ex.label].max(f64::MIN_POSITIVE).ln();
        }
        Ok(total / batch.len() as f64)
    }
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn result_from_probs(probs: Vec<f64>, label: usize) -> ForwardResult {
    ForwardResult {
        loss: -probs[label].max(f64::MIN_POSITIVE).ln(),
        predicted: argmax(&probs),
        probs,
    }
}

/// Shannon entropy in nats, `0 ln 0 = 0`.
pub fn prediction_entropy(dist: &[f64]) -> Result<f64> {
    if let Some(p) = dist.iter().find(|p| **p < 0.0 || !p.is_finite()) {
        return Err(Error::Numerical(format!(
            "distribution entry {p} is not a probability"
        )));
    }
    let h: f64 = dist
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum();
    Ok(h.max(0.0))
}
