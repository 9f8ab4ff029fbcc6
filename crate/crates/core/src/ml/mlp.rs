//! Fully connected ReLU network trained with Adam on standardized targets.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{score_parts, Matrix, PreparedData, Preprocessor, TrainReport};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub n_in: usize,
    pub n_out: usize,
    /// Row-major `n_out × n_in`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    fn zeros(n_in: usize, n_out: usize) -> Self {
        Self {
            n_in,
            n_out,
            weights: vec![0.0; n_in * n_out],
            biases: vec![0.0; n_out],
        }
    }

    fn params(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().chain(&self.biases)
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights.iter_mut().chain(self.biases.iter_mut())
    }
}

/// ReLU on hidden layers, identity on the output layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpNet {
    pub layers: Vec<Layer>,
}

/// Per-sample activation buffers reused across a batch.
struct Workspace {
    acts: Vec<Vec<f64>>,
    deltas: Vec<Vec<f64>>,
}

impl MlpNet {
    /// Network with all parameters zero.
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Argument(format!("invalid layer sizes {sizes:?}")));
        }
        Ok(Self {
            layers: sizes.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect(),
        })
    }

    /// Hidden weights uniform in ±sqrt(6 / fan_in); the output layer starts at
    /// zero so an untrained network predicts the target mean.
    pub fn new(sizes: &[usize], seed: u64) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let last = net.layers.len() - 1;
        for layer in &mut net.layers[..last] {
            let bound = (6.0 / layer.n_in as f64).sqrt();
            for w in &mut layer.weights {
                *w = rng.random_range(-bound..bound);
            }
        }
        Ok(net)
    }

    /// Every parameter random, including the output layer. Used for gradient checks.
    pub fn random(sizes: &[usize], seed: u64) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut net.layers {
            let bound = (6.0 / layer.n_in as f64).sqrt();
            for p in layer.params_mut() {
                *p = rng.random_range(-bound..bound);
            }
        }
        Ok(net)
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].n_in];
        s.extend(self.layers.iter().map(|l| l.n_out));
        s
    }

    pub fn n_inputs(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn n_outputs(&self) -> usize {
        self.layers[self.layers.len() - 1].n_out
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    pub fn validate(&self, n_in: usize, n_out: usize) -> Result<()> {
        let bad = |m: String| Err(Error::ModelLoad(m));
        if self.layers.is_empty() || self.n_inputs() != n_in || self.n_outputs() != n_out {
            return bad(format!("network shape does not match {n_in} inputs / {n_out} outputs"));
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.weights.len() != l.n_in * l.n_out || l.biases.len() != l.n_out {
                return bad(format!("layer {i} has inconsistent array lengths"));
            }
            if i > 0 && self.layers[i - 1].n_out != l.n_in {
                return bad(format!("layer {i} does not chain to the previous layer"));
            }
            if l.params().any(|p| !p.is_finite()) {
                return bad(format!("layer {i} has non-finite parameters"));
            }
        }
        Ok(())
    }

    fn workspace(&self) -> Workspace {
        let sizes = self.sizes();
        Workspace {
            acts: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            deltas: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    fn forward_ws(&self, x: &[f64], ws: &mut Workspace) {
        ws.acts[0].copy_from_slice(x);
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let (prev, next) = ws.acts.split_at_mut(l + 1);
            let input = &prev[l];
            let out = &mut next[0];
            for (o, v) in out.iter_mut().enumerate() {
                let w = &layer.weights[o * layer.n_in..(o + 1) * layer.n_in];
                let z = layer.biases[o] + w.iter().zip(input).map(|(a, b)| a * b).sum::<f64>();
                *v = if l < last && z < 0.0 { 0.0 } else { z };
            }
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut ws = self.workspace();
        self.forward_ws(x, &mut ws);
        ws.acts.pop().unwrap_or_default()
    }

    pub fn forward_batch(&self, x: &Matrix) -> Matrix {
        let mut ws = self.workspace();
        let mut out = Matrix::zeros(x.rows, self.n_outputs());
        for i in 0..x.rows {
            self.forward_ws(x.row(i), &mut ws);
            out.row_mut(i).copy_from_slice(&ws.acts[ws.acts.len() - 1]);
        }
        out
    }

    /// Mean squared error over all rows and outputs.
    pub fn loss(&self, x: &Matrix, y: &Matrix) -> f64 {
        let mut ws = self.workspace();
        self.loss_ws(x, y, &(0..x.rows).collect::<Vec<_>>(), &mut ws)
    }

    fn loss_ws(&self, x: &Matrix, y: &Matrix, rows: &[usize], ws: &mut Workspace) -> f64 {
        let mut total = 0.0;
        for &i in rows {
            self.forward_ws(x.row(i), ws);
            let out = &ws.acts[ws.acts.len() - 1];
            total += out.iter().zip(y.row(i)).map(|(o, t)| (o - t).powi(2)).sum::<f64>();
        }
        total / (rows.len() * y.cols) as f64
    }

    /// Loss over `rows` and its gradient, accumulated into `grad`.
    fn backprop(
        &self,
        x: &Matrix,
        y: &Matrix,
        rows: &[usize],
        ws: &mut Workspace,
        grad: &mut [Layer],
    ) -> f64 {
        for g in grad.iter_mut() {
            g.params_mut().for_each(|p| *p = 0.0);
        }
        let scale = 1.0 / (rows.len() * y.cols) as f64;
        let n_layers = self.layers.len();
        let mut total = 0.0;
        for &i in rows {
            self.forward_ws(x.row(i), ws);
            let t = y.row(i);
            for (d, (o, t)) in ws.deltas[n_layers].iter_mut().zip(ws.acts[n_layers].iter().zip(t)) {
                total += (o - t).powi(2);
                *d = 2.0 * (o - t) * scale;
            }
            for l in (0..n_layers).rev() {
                let layer = &self.layers[l];
                let g = &mut grad[l];
                let (lower, upper) = ws.deltas.split_at_mut(l + 1);
                let delta = &upper[0];
                let input = &ws.acts[l];
                for (o, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    g.biases[o] += d;
                    let gw = &mut g.weights[o * layer.n_in..(o + 1) * layer.n_in];
                    for (gw, a) in gw.iter_mut().zip(input) {
                        *gw += d * a;
                    }
                }
                if l > 0 {
                    let below = &mut lower[l];
                    below.iter_mut().for_each(|v| *v = 0.0);
                    for (o, &d) in delta.iter().enumerate() {
                        if d == 0.0 {
                            continue;
                        }
                        let w = &layer.weights[o * layer.n_in..(o + 1) * layer.n_in];
                        for (b, w) in below.iter_mut().zip(w) {
                            *b += d * w;
                        }
                    }
                    for (b, a) in below.iter_mut().zip(input) {
                        if *a <= 0.0 {
                            *b = 0.0;
                        }
                    }
                }
            }
        }
        total * scale
    }

    /// Loss and analytic gradient (flattened layer by layer, weights then biases).
    pub fn loss_and_gradient(&self, x: &Matrix, y: &Matrix) -> (f64, Vec<f64>) {
        let mut ws = self.workspace();
        let mut grad: Vec<Layer> = self.layers.iter().map(|l| Layer::zeros(l.n_in, l.n_out)).collect();
        let rows: Vec<usize> = (0..x.rows).collect();
        let loss = self.backprop(x, y, &rows, &mut ws, &mut grad);
        (loss, grad.iter().flat_map(|g| g.params().copied()).collect())
    }

    fn param_mut(&mut self, mut k: usize) -> &mut f64 {
        for layer in &mut self.layers {
            let n = layer.weights.len() + layer.biases.len();
            if k < n {
                return layer.params_mut().nth(k).expect("index in range");
            }
            k -= n;
        }
        panic!("parameter index out of range")
    }
}

/// Largest relative difference between the analytic gradient of the squared
/// error at (`x`, `y`) and central finite differences with step `epsilon`.
pub fn mlp_gradient_check(net: &MlpNet, x: &[f64], y: &[f64], epsilon: f64) -> Result<f64> {
    if !(1e-7..=1e-3).contains(&epsilon) {
        return Err(Error::Argument(format!("epsilon {epsilon} outside [1e-7, 1e-3]")));
    }
    let xm = Matrix::from_rows(&[x])?;
    let ym = Matrix::from_rows(&[y])?;
    if xm.cols != net.n_inputs() || ym.cols != net.n_outputs() {
        return Err(Error::Argument("gradient check row does not fit the network".into()));
    }
    let (_, analytic) = net.loss_and_gradient(&xm, &ym);
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for (k, &a) in analytic.iter().enumerate() {
        let orig = *probe.param_mut(k);
        *probe.param_mut(k) = orig + epsilon;
        let up = probe.loss(&xm, &ym);
        *probe.param_mut(k) = orig - epsilon;
        let down = probe.loss(&xm, &ym);
        *probe.param_mut(k) = orig;
        let numeric = (up - down) / (2.0 * epsilon);
        let denom = a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((a - numeric).abs() / denom);
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpHyper {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    /// Epochs without held-out improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for MlpHyper {
    fn default() -> Self {
        Self {
            hidden: vec![12, 12],
            epochs: 200,
            batch: 32,
            lr: 1e-3,
            patience: 10,
            seed: 0,
        }
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Adam {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, net: &mut MlpNet, grad: &[Layer], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        let mut k = 0;
        for (layer, g) in net.layers.iter_mut().zip(grad) {
            for (p, &g) in layer.params_mut().zip(g.params()) {
                let m = &mut self.m[k];
                let v = &mut self.v[k];
                *m = BETA1 * *m + (1.0 - BETA1) * g;
                *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
                k += 1;
            }
        }
    }
}

/// Per-column mean and standard deviation; a constant column gets scale 1.
fn standardization(y: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let n = y.rows.max(1) as f64;
    let mean: Vec<f64> = (0..y.cols).map(|j| y.column(j).iter().sum::<f64>() / n).collect();
    let std = (0..y.cols)
        .map(|j| {
            let var = y.column(j).iter().map(|v| (v - mean[j]).powi(2)).sum::<f64>() / n;
            if var > 0.0 {
                var.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    (mean, std)
}

fn standardize(y: &Matrix, mean: &[f64], std: &[f64]) -> Matrix {
    let mut out = y.clone();
    for i in 0..out.rows {
        for (j, v) in out.row_mut(i).iter_mut().enumerate() {
            *v = (*v - mean[j]) / std[j];
        }
    }
    out
}

/// Training history of [`mlp_train`].
pub struct MlpFit {
    pub net: MlpNet,
    pub target_mean: Vec<f64>,
    pub target_std: Vec<f64>,
    pub epochs_run: usize,
    /// Epoch count of the kept weights: the lowest held-out loss, or the last epoch without a held-out part.
    pub best_epoch: usize,
    pub train_loss: Vec<f64>,
    pub test_loss: Vec<f64>,
}

/// Fit a network on scaled features. Targets are standardized with the
/// training statistics. The held-out part drives early stopping and picks
/// the epoch whose weights are returned.
pub fn mlp_train(
    x_train: &Matrix,
    y_train: &Matrix,
    x_test: &Matrix,
    y_test: &Matrix,
    hyper: &MlpHyper,
) -> Result<MlpFit> {
    if x_train.rows == 0 || x_train.rows != y_train.rows || x_test.rows != y_test.rows {
        return Err(Error::Argument("training data is empty or misaligned".into()));
    }
    if hyper.batch == 0 || !(hyper.lr > 0.0) {
        return Err(Error::Argument("batch size and learning rate must be positive".into()));
    }
    if y_train.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Argument("training targets must be finite".into()));
    }
    let mut sizes = vec![x_train.cols];
    sizes.extend(&hyper.hidden);
    sizes.push(y_train.cols);
    let mut net = MlpNet::new(&sizes, hyper.seed)?;
    let (mean, std) = standardization(y_train);
    let ys_train = standardize(y_train, &mean, &std);
    let ys_test = standardize(y_test, &mean, &std);

    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed ^ 0x05EE_D0FB_A7C4);
    let mut order: Vec<usize> = (0..x_train.rows).collect();
    let mut ws = net.workspace();
    let mut grad: Vec<Layer> = net.layers.iter().map(|l| Layer::zeros(l.n_in, l.n_out)).collect();
    let mut adam = Adam::new(net.n_params());
    let (mut train_loss, mut test_loss) = (Vec::new(), Vec::new());
    let mut best = f64::INFINITY;
    let mut best_net: Option<(MlpNet, usize)> = None;
    let mut stale = 0;
    for epoch in 0..hyper.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        for batch in order.chunks(hyper.batch) {
            let l = net.backprop(x_train, &ys_train, batch, &mut ws, &mut grad);
            if !l.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            sum += l * batch.len() as f64;
            adam.step(&mut net, &grad, hyper.lr);
        }
        train_loss.push(sum / x_train.rows as f64);
        if x_test.rows > 0 {
            let rows: Vec<usize> = (0..x_test.rows).collect();
            let l = net.loss_ws(x_test, &ys_test, &rows, &mut ws);
            if !l.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            test_loss.push(l);
            if l < best - 1e-12 {
                best = l;
                best_net = Some((net.clone(), epoch + 1));
                stale = 0;
            } else {
                stale += 1;
                if stale >= hyper.patience {
                    break;
                }
            }
        }
    }
    let epochs_run = train_loss.len();
    let (net, best_epoch) = best_net.unwrap_or((net, epochs_run));
    Ok(MlpFit {
        net,
        target_mean: mean,
        target_std: std,
        epochs_run,
        best_epoch,
        train_loss,
        test_loss,
    })
}

/// Network plus the scaling needed to apply it to raw feature rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub preprocessor: Preprocessor,
    pub target_mean: Vec<f64>,
    pub target_std: Vec<f64>,
    pub net: MlpNet,
}

impl MlpModel {
    /// Unclamped predictions for already scaled features.
    pub fn predict_scaled(&self, x: &Matrix) -> Matrix {
        let mut out = self.net.forward_batch(x);
        for i in 0..out.rows {
            for (j, v) in out.row_mut(i).iter_mut().enumerate() {
                *v = self.target_mean[j] + self.target_std[j] * *v;
            }
        }
        out
    }

    /// Predictions for unscaled feature rows, GPP clamped at zero.
    pub fn predict(&self, features: &Matrix) -> Result<Matrix> {
        let x = self.preprocessor.transform(features)?;
        Ok(self.preprocessor.finish(self.predict_scaled(&x)))
    }
}

/// Train on a prepared corpus and score both parts.
pub fn fit_mlp(data: &PreparedData, hyper: &MlpHyper) -> Result<(MlpModel, TrainReport)> {
    let start = Instant::now();
    let fit = mlp_train(&data.x_train, &data.y_train, &data.x_test, &data.y_test, hyper)?;
    let model = MlpModel {
        preprocessor: data.preprocessor.clone(),
        target_mean: fit.target_mean,
        target_std: fit.target_std,
        net: fit.net,
    };
    let p = &model.preprocessor;
    let pred_train = p.finish(model.predict_scaled(&data.x_train));
    let pred_test = p.finish(model.predict_scaled(&data.x_test));
    let scores = score_parts(&p.targets, &pred_train, &data.y_train, &pred_test, &data.y_test);
    let report = TrainReport {
        n_train: data.x_train.rows,
        n_test: data.x_test.rows,
        seed: hyper.seed,
        epochs_run: fit.epochs_run,
        best_epoch: fit.best_epoch,
        train_loss: fit.train_loss,
        test_loss: fit.test_loss,
        scores,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    Ok((model, report))
}
