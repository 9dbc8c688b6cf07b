//! One-hidden-layer perceptron with hand-written backpropagation.
//!
//! `flatten -> dense -> ReLU -> dense -> softmax`, cross-entropy loss averaged
//! over the batch. All arithmetic is f64.

use crate::transforms::SampleRng;

/// A labeled input vector.
pub type Example<'a> = (&'a [f64], usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub inputs: usize,
    pub hidden: usize,
    pub classes: usize,
    /// `w1 (hidden x inputs) | b1 | w2 (classes x hidden) | b2`, row-major.
    pub params: Vec<f64>,
}

impl Mlp {
    pub fn num_params(inputs: usize, hidden: usize, classes: usize) -> usize {
        hidden * inputs + hidden + classes * hidden + classes
    }

    pub fn zeros(inputs: usize, hidden: usize, classes: usize) -> Self {
        Mlp {
            inputs,
            hidden,
            classes,
            params: vec![0.0; Self::num_params(inputs, hidden, classes)],
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(inputs: usize, hidden: usize, classes: usize, seed: u64) -> Self {
        let mut net = Mlp::zeros(inputs, hidden, classes);
        let mut rng = SampleRng::from_seed(seed);
        let l1 = (6.0 / (inputs + hidden) as f64).sqrt();
        let l2 = (6.0 / (hidden + classes) as f64).sqrt();
        let (w1, b1, w2, _) = net.offsets();
        for v in &mut net.params[w1..b1] {
            *v = rng.uniform(-l1, l1);
        }
        for v in &mut net.params[w2..w2 + classes * hidden] {
            *v = rng.uniform(-l2, l2);
        }
        net
    }

    /// Start offsets of `w1, b1, w2, b2`.
    pub fn offsets(&self) -> (usize, usize, usize, usize) {
        let b1 = self.hidden * self.inputs;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.classes * self.hidden;
        (0, b1, w2, b2)
    }

    fn hidden_pre(&self, x: &[f64], pre: &mut [f64]) {
        let (_, b1, _, _) = self.offsets();
        for (j, out) in pre.iter_mut().enumerate() {
            let row = &self.params[j * self.inputs..(j + 1) * self.inputs];
            *out = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.params[b1 + j];
        }
    }

    fn output(&self, act: &[f64], logits: &mut [f64]) {
        let (_, _, w2, b2) = self.offsets();
        for (c, out) in logits.iter_mut().enumerate() {
            let row = &self.params[w2 + c * self.hidden..w2 + (c + 1) * self.hidden];
            *out = row.iter().zip(act).map(|(w, a)| w * a).sum::<f64>() + self.params[b2 + c];
        }
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        let mut pre = vec![0.0; self.hidden];
        self.hidden_pre(x, &mut pre);
        pre.iter_mut().for_each(|v| *v = v.max(0.0));
        let mut logits = vec![0.0; self.classes];
        self.output(&pre, &mut logits);
        logits
    }

    /// Arg-max class; ties go to the lower index.
    pub fn predict(&self, x: &[f64]) -> usize {
        let logits = self.logits(x);
        let mut best = 0;
        for (i, &v) in logits.iter().enumerate().skip(1) {
            if v > logits[best] {
                best = i;
            }
        }
        best
    }

    /// Mean cross-entropy over the batch.
    pub fn loss(&self, batch: &[Example<'_>]) -> f64 {
        batch
            .iter()
            .map(|(x, y)| cross_entropy(&self.logits(x), *y))
            .sum::<f64>()
            / batch.len() as f64
    }

    /// ReLU on/off pattern over the batch, for detecting kink crossings.
    pub fn activation_pattern(&self, batch: &[Example<'_>]) -> Vec<bool> {
        let mut pre = vec![0.0; self.hidden];
        let mut out = Vec::with_capacity(batch.len() * self.hidden);
        for (x, _) in batch {
            self.hidden_pre(x, &mut pre);
            out.extend(pre.iter().map(|&v| v > 0.0));
        }
        out
    }

    /// Mean loss and its gradient with respect to `params`.
    pub fn loss_and_grad(&self, batch: &[Example<'_>]) -> (f64, Vec<f64>) {
        let (_, b1, w2, b2) = self.offsets();
        let mut grad = vec![0.0; self.params.len()];
        let mut pre = vec![0.0; self.hidden];
        let mut act = vec![0.0; self.hidden];
        let mut logits = vec![0.0; self.classes];
        let mut dh = vec![0.0; self.hidden];
        let scale = 1.0 / batch.len() as f64;
        let mut total = 0.0;
        for (x, y) in batch {
            self.hidden_pre(x, &mut pre);
            for (a, &p) in act.iter_mut().zip(&pre) {
                *a = p.max(0.0);
            }
            self.output(&act, &mut logits);
            total += cross_entropy(&logits, *y);
            let probs = softmax(&logits);
            dh.iter_mut().for_each(|v| *v = 0.0);
            for c in 0..self.classes {
                let dz = (probs[c] - if c == *y { 1.0 } else { 0.0 }) * scale;
                grad[b2 + c] += dz;
                let row = w2 + c * self.hidden;
                for j in 0..self.hidden {
                    grad[row + j] += dz * act[j];
                    dh[j] += dz * self.params[row + j];
                }
            }
            for j in 0..self.hidden {
                if pre[j] <= 0.0 {
                    continue;
                }
                let d = dh[j];
                grad[b1 + j] += d;
                let row = &mut grad[j * self.inputs..(j + 1) * self.inputs];
                for (g, &v) in row.iter_mut().zip(x.iter()) {
                    *g += d * v;
                }
            }
        }
        (total * scale, grad)
    }

    pub fn sgd_step(&mut self, grad: &[f64], learning_rate: f64) {
        for (p, g) in self.params.iter_mut().zip(grad) {
            *p -= learning_rate * g;
        }
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    lse - logits[label]
}
