//! The motion verifier network.
//!
//! Convolutional branch over the `rows x 128` fragment (rows are channels,
//! columns time), a two-layer LSTM reading one column per step, and a
//! linear head on the concatenation of both. All parameters live in one
//! flat `f64` vector; activations use `[row][col][channel]` order.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const INPUT_ROWS: usize = 6;
pub const INPUT_LEN: usize = 128;
pub const LSTM_HIDDEN: usize = 64;
pub const LSTM_LAYERS: usize = 2;
pub const N_CLASSES: usize = 2;
pub const ARCHITECTURE: &str = "lstm2x64+cnn(1x9s2x32,p2,1x3x64,1x3x128,p2,6x1x128)+fc2";

/// `(rows, cols, channels)`.
pub type Shape = (usize, usize, usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Conv {
    kh: usize,
    kw: usize,
    cin: usize,
    cout: usize,
    stride: usize,
}

impl Conv {
    fn weights(&self) -> usize {
        self.kh * self.kw * self.cin * self.cout
    }

    fn out_shape(&self, (h, w, _): Shape) -> Shape {
        (h + 1 - self.kh, w.div_ceil(self.stride), self.cout)
    }

    /// Left padding for "same" output width.
    fn pad_left(&self, w: usize) -> usize {
        let out = w.div_ceil(self.stride);
        ((out - 1) * self.stride + self.kw).saturating_sub(w) / 2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stage {
    Conv(Conv),
    /// 1x2 max pool, stride 2.
    Pool,
}

const STAGES: [Stage; 6] = [
    Stage::Conv(Conv { kh: 1, kw: 9, cin: 1, cout: 32, stride: 2 }),
    Stage::Pool,
    Stage::Conv(Conv { kh: 1, kw: 3, cin: 32, cout: 64, stride: 1 }),
    Stage::Conv(Conv { kh: 1, kw: 3, cin: 64, cout: 128, stride: 1 }),
    Stage::Pool,
    Stage::Conv(Conv { kh: INPUT_ROWS, kw: 1, cin: 128, cout: 128, stride: 1 }),
];

/// Shape after every convolutional stage, starting with the input.
pub fn conv_shapes() -> Vec<Shape> {
    let mut shapes = vec![(INPUT_ROWS, INPUT_LEN, 1)];
    for stage in STAGES {
        let s = *shapes.last().unwrap();
        shapes.push(match stage {
            Stage::Conv(c) => c.out_shape(s),
            Stage::Pool => (s.0, s.1 / 2, s.2),
        });
    }
    shapes
}

fn cnn_features() -> usize {
    let (h, w, c) = *conv_shapes().last().unwrap();
    h * w * c
}

/// Offsets of every parameter block in the flat vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    /// `(weights, bias)` start per convolution.
    conv: Vec<(usize, usize)>,
    /// `(weights, bias)` start per LSTM layer; weights are `[in + H][4H]`.
    lstm: Vec<(usize, usize)>,
    fc: (usize, usize),
    pub total: usize,
}

impl Layout {
    pub fn new() -> Self {
        let mut at = 0;
        let mut take = |n: usize| {
            let s = at;
            at += n;
            s
        };
        let conv = STAGES
            .iter()
            .filter_map(|s| match s {
                Stage::Conv(c) => Some((take(c.weights()), take(c.cout))),
                Stage::Pool => None,
            })
            .collect();
        let lstm = (0..LSTM_LAYERS)
            .map(|l| {
                let input = if l == 0 { INPUT_ROWS } else { LSTM_HIDDEN };
                (take((input + LSTM_HIDDEN) * 4 * LSTM_HIDDEN), take(4 * LSTM_HIDDEN))
            })
            .collect();
        let fc = (take((cnn_features() + LSTM_HIDDEN) * N_CLASSES), take(N_CLASSES));
        Layout { conv, lstm, fc, total: at }
    }
}

impl Default for Layout {
    fn default() -> Self {
        Self::new()
    }
}

#[inline]
fn axpy(out: &mut [f64], a: f64, x: &[f64]) {
    for (o, v) in out.iter_mut().zip(x) {
        *o += a * v;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn conv_forward(inp: &[f64], shape: Shape, conv: &Conv, wts: &[f64], bias: &[f64]) -> Vec<f64> {
    let (_, w, cin) = shape;
    let (oh, ow, cout) = conv.out_shape(shape);
    let pad = conv.pad_left(w) as isize;
    let mut out = vec![0.0; oh * ow * cout];
    for y in 0..oh {
        for x in 0..ow {
            let o = &mut out[(y * ow + x) * cout..][..cout];
            o.copy_from_slice(bias);
            for ky in 0..conv.kh {
                for kx in 0..conv.kw {
                    let ix = (x * conv.stride + kx) as isize - pad;
                    if ix < 0 || ix >= w as isize {
                        continue;
                    }
                    let irow = &inp[((y + ky) * w + ix as usize) * cin..][..cin];
                    let wbase = (ky * conv.kw + kx) * cin * cout;
                    for (ci, &v) in irow.iter().enumerate() {
                        if v != 0.0 {
                            axpy(o, v, &wts[wbase + ci * cout..][..cout]);
                        }
                    }
                }
            }
            for v in o.iter_mut() {
                *v = v.max(0.0);
            }
        }
    }
    out
}

/// Accumulates weight and bias gradients; returns the input gradient when
/// `want_input` is set. `dout` must already be masked by the ReLU.
#[allow(clippy::too_many_arguments)]
fn conv_backward(
    inp: &[f64],
    shape: Shape,
    conv: &Conv,
    wts: &[f64],
    dout: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
    want_input: bool,
) -> Option<Vec<f64>> {
    let (h, w, cin) = shape;
    let (oh, ow, cout) = conv.out_shape(shape);
    let pad = conv.pad_left(w) as isize;
    let mut din = want_input.then(|| vec![0.0; h * w * cin]);
    for y in 0..oh {
        for x in 0..ow {
            let g = &dout[(y * ow + x) * cout..][..cout];
            if g.iter().all(|&v| v == 0.0) {
                continue;
            }
            axpy(db, 1.0, g);
            for ky in 0..conv.kh {
                for kx in 0..conv.kw {
                    let ix = (x * conv.stride + kx) as isize - pad;
                    if ix < 0 || ix >= w as isize {
                        continue;
                    }
                    let ibase = ((y + ky) * w + ix as usize) * cin;
                    let wbase = (ky * conv.kw + kx) * cin * cout;
                    for ci in 0..cin {
                        let v = inp[ibase + ci];
                        let wrow = wbase + ci * cout;
                        if v != 0.0 {
                            axpy(&mut dw[wrow..wrow + cout], v, g);
                        }
                        if let Some(d) = din.as_mut() {
                            d[ibase + ci] += dot(&wts[wrow..wrow + cout], g);
                        }
                    }
                }
            }
        }
    }
    din
}

fn pool_forward(inp: &[f64], (h, w, c): Shape) -> (Vec<f64>, Vec<u32>) {
    let ow = w / 2;
    let mut out = vec![0.0; h * ow * c];
    let mut arg = vec![0u32; h * ow * c];
    for y in 0..h {
        for x in 0..ow {
            for ch in 0..c {
                let a = (y * w + 2 * x) * c + ch;
                let b = a + c;
                let o = (y * ow + x) * c + ch;
                // Ties go to the earlier column.
                let pick = if inp[b] > inp[a] { b } else { a };
                out[o] = inp[pick];
                arg[o] = pick as u32;
            }
        }
    }
    (out, arg)
}

struct LstmTrace {
    /// Per step: layer input followed by the previous hidden state.
    inputs: Vec<f64>,
    /// Per step: activated gates `i, f, g, o`.
    gates: Vec<f64>,
    cells: Vec<f64>,
    hidden: Vec<f64>,
    in_dim: usize,
}

fn lstm_forward(xs: &[f64], in_dim: usize, steps: usize, wts: &[f64], bias: &[f64]) -> LstmTrace {
    let hd = LSTM_HIDDEN;
    let cat = in_dim + hd;
    let mut tr = LstmTrace {
        inputs: vec![0.0; steps * cat],
        gates: vec![0.0; steps * 4 * hd],
        cells: vec![0.0; steps * hd],
        hidden: vec![0.0; steps * hd],
        in_dim,
    };
    let mut z = vec![0.0; 4 * hd];
    for t in 0..steps {
        {
            let inp = &mut tr.inputs[t * cat..(t + 1) * cat];
            inp[..in_dim].copy_from_slice(&xs[t * in_dim..(t + 1) * in_dim]);
            if t > 0 {
                inp[in_dim..].copy_from_slice(&tr.hidden[(t - 1) * hd..t * hd]);
            }
        }
        z.copy_from_slice(bias);
        for (j, &v) in tr.inputs[t * cat..(t + 1) * cat].iter().enumerate() {
            if v != 0.0 {
                axpy(&mut z, v, &wts[j * 4 * hd..(j + 1) * 4 * hd]);
            }
        }
        let gates = &mut tr.gates[t * 4 * hd..(t + 1) * 4 * hd];
        for k in 0..hd {
            gates[k] = sigmoid(z[k]);
            gates[hd + k] = sigmoid(z[hd + k]);
            gates[2 * hd + k] = z[2 * hd + k].tanh();
            gates[3 * hd + k] = sigmoid(z[3 * hd + k]);
        }
        for k in 0..hd {
            let prev = if t > 0 { tr.cells[(t - 1) * hd + k] } else { 0.0 };
            let c = gates[hd + k] * prev + gates[k] * gates[2 * hd + k];
            tr.cells[t * hd + k] = c;
            tr.hidden[t * hd + k] = gates[3 * hd + k] * c.tanh();
        }
    }
    tr
}

/// Backpropagation through time. `dh` holds the loss gradient on every
/// step's hidden output; returns the gradient on every step's input.
fn lstm_backward(tr: &LstmTrace, wts: &[f64], dh: &[f64], dw: &mut [f64], db: &mut [f64]) -> Vec<f64> {
    let hd = LSTM_HIDDEN;
    let in_dim = tr.in_dim;
    let cat = in_dim + hd;
    let steps = tr.cells.len() / hd;
    let mut dx = vec![0.0; steps * in_dim];
    let mut dh_next = vec![0.0; hd];
    let mut dc_next = vec![0.0; hd];
    let mut dz = vec![0.0; 4 * hd];
    for t in (0..steps).rev() {
        let gates = &tr.gates[t * 4 * hd..(t + 1) * 4 * hd];
        for k in 0..hd {
            let (i, f, g, o) = (gates[k], gates[hd + k], gates[2 * hd + k], gates[3 * hd + k]);
            let c = tr.cells[t * hd + k];
            let prev = if t > 0 { tr.cells[(t - 1) * hd + k] } else { 0.0 };
            let tc = c.tanh();
            let dht = dh[t * hd + k] + dh_next[k];
            let dc = dc_next[k] + dht * o * (1.0 - tc * tc);
            dz[k] = dc * g * i * (1.0 - i);
            dz[hd + k] = dc * prev * f * (1.0 - f);
            dz[2 * hd + k] = dc * i * (1.0 - g * g);
            dz[3 * hd + k] = dht * tc * o * (1.0 - o);
            dc_next[k] = dc * f;
        }
        axpy(db, 1.0, &dz);
        let inp = &tr.inputs[t * cat..(t + 1) * cat];
        for (j, &v) in inp.iter().enumerate() {
            let row = &wts[j * 4 * hd..(j + 1) * 4 * hd];
            if v != 0.0 {
                axpy(&mut dw[j * 4 * hd..(j + 1) * 4 * hd], v, &dz);
            }
            let d = dot(row, &dz);
            if j < in_dim {
                dx[t * in_dim + j] = d;
            } else {
                dh_next[j - in_dim] = d;
            }
        }
    }
    dx
}

/// Everything the backward pass needs from one forward pass.
pub struct Trace {
    acts: Vec<Vec<f64>>,
    pool_args: Vec<Vec<u32>>,
    lstm: Vec<LstmTrace>,
    features: Vec<f64>,
    pub probs: [f64; N_CLASSES],
    pub logits: [f64; N_CLASSES],
}

/// Trained or initialized motion verifier parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionNet {
    pub params: Vec<f64>,
}

impl MotionNet {
    /// Glorot-uniform weights, zero biases, forget-gate biases at one.
    pub fn init(seed: u64) -> Self {
        let layout = Layout::new();
        let mut params = vec![0.0; layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |params: &mut [f64], fan_in: usize, fan_out: usize| {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for p in params {
                *p = rng.random_range(-limit..limit);
            }
        };
        let mut conv_i = 0;
        for stage in STAGES {
            if let Stage::Conv(c) = stage {
                let (w, _) = layout.conv[conv_i];
                let field = c.kh * c.kw;
                fill(&mut params[w..w + c.weights()], field * c.cin, field * c.cout);
                conv_i += 1;
            }
        }
        for (l, &(w, b)) in layout.lstm.iter().enumerate() {
            let input = if l == 0 { INPUT_ROWS } else { LSTM_HIDDEN };
            let n = (input + LSTM_HIDDEN) * 4 * LSTM_HIDDEN;
            fill(&mut params[w..w + n], input + LSTM_HIDDEN, 4 * LSTM_HIDDEN);
            params[b + LSTM_HIDDEN..b + 2 * LSTM_HIDDEN].fill(1.0);
        }
        let feats = cnn_features() + LSTM_HIDDEN;
        fill(&mut params[layout.fc.0..layout.fc.0 + feats * N_CLASSES], feats, N_CLASSES);
        MotionNet { params }
    }

    pub fn check(&self) -> Result<()> {
        let total = Layout::new().total;
        if self.params.len() != total {
            return Err(Error::Data(format!(
                "model has {} parameters; the architecture needs {total}",
                self.params.len()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Trace> {
        if x.len() != INPUT_ROWS * INPUT_LEN {
            return Err(Error::Data(format!(
                "input has {} values; expected {INPUT_ROWS}x{INPUT_LEN}",
                x.len()
            )));
        }
        self.check()?;
        let layout = Layout::new();
        let p = &self.params;

        let mut acts = vec![x.to_vec()];
        let mut pool_args = Vec::new();
        let mut shape: Shape = (INPUT_ROWS, INPUT_LEN, 1);
        let mut conv_i = 0;
        for stage in STAGES {
            let inp = acts.last().unwrap();
            match stage {
                Stage::Conv(c) => {
                    let (w, b) = layout.conv[conv_i];
                    let out = conv_forward(inp, shape, &c, &p[w..w + c.weights()], &p[b..b + c.cout]);
                    shape = c.out_shape(shape);
                    acts.push(out);
                    conv_i += 1;
                }
                Stage::Pool => {
                    let (out, arg) = pool_forward(inp, shape);
                    shape = (shape.0, shape.1 / 2, shape.2);
                    acts.push(out);
                    pool_args.push(arg);
                }
            }
        }

        // The LSTM reads one column (all rows) per step.
        let mut seq: Vec<f64> = (0..INPUT_LEN)
            .flat_map(|t| (0..INPUT_ROWS).map(move |r| x[r * INPUT_LEN + t]))
            .collect();
        let mut lstm = Vec::with_capacity(LSTM_LAYERS);
        for (l, &(w, b)) in layout.lstm.iter().enumerate() {
            let in_dim = if l == 0 { INPUT_ROWS } else { LSTM_HIDDEN };
            let n = (in_dim + LSTM_HIDDEN) * 4 * LSTM_HIDDEN;
            let tr = lstm_forward(&seq, in_dim, INPUT_LEN, &p[w..w + n], &p[b..b + 4 * LSTM_HIDDEN]);
            seq = tr.hidden.clone();
            lstm.push(tr);
        }

        let mut features = acts.last().unwrap().clone();
        features.extend_from_slice(&seq[(INPUT_LEN - 1) * LSTM_HIDDEN..]);
        let (fw, fb) = layout.fc;
        let mut logits = [0.0; N_CLASSES];
        logits.copy_from_slice(&p[fb..fb + N_CLASSES]);
        for (j, &v) in features.iter().enumerate() {
            for (k, l) in logits.iter_mut().enumerate() {
                *l += v * p[fw + j * N_CLASSES + k];
            }
        }
        let probs = softmax(&logits);
        Ok(Trace {
            acts,
            pool_args,
            lstm,
            features,
            probs,
            logits,
        })
    }

    /// Class probabilities `[invalid, valid]`.
    pub fn predict(&self, x: &[f64]) -> Result<[f64; N_CLASSES]> {
        Ok(self.forward(x)?.probs)
    }

    /// Cross-entropy of one sample; adds its gradient into `grad`.
    pub fn loss_and_grad(&self, x: &[f64], label: usize, grad: &mut [f64]) -> Result<f64> {
        if label >= N_CLASSES {
            return Err(Error::Data(format!("label {label} out of range")));
        }
        if grad.len() != self.params.len() {
            return Err(Error::Data("gradient buffer does not match the parameter count".into()));
        }
        let tr = self.forward(x)?;
        let loss = -tr.probs[label].max(f64::MIN_POSITIVE).ln();
        self.backward(&tr, label, grad);
        Ok(loss)
    }

    /// Loss only.
    pub fn loss(&self, x: &[f64], label: usize) -> Result<f64> {
        let tr = self.forward(x)?;
        Ok(-tr.probs[label].max(f64::MIN_POSITIVE).ln())
    }

    fn backward(&self, tr: &Trace, label: usize, grad: &mut [f64]) {
        let layout = Layout::new();
        let p = &self.params;
        let mut dlogits = tr.probs;
        dlogits[label] -= 1.0;

        let (fw, fb) = layout.fc;
        for k in 0..N_CLASSES {
            grad[fb + k] += dlogits[k];
        }
        let mut dfeat = vec![0.0; tr.features.len()];
        for (j, &v) in tr.features.iter().enumerate() {
            for k in 0..N_CLASSES {
                grad[fw + j * N_CLASSES + k] += v * dlogits[k];
                dfeat[j] += p[fw + j * N_CLASSES + k] * dlogits[k];
            }
        }
        let n_cnn = cnn_features();

        // Recurrent branch: only the final hidden state of the top layer
        // feeds the head.
        let mut dh = vec![0.0; INPUT_LEN * LSTM_HIDDEN];
        dh[(INPUT_LEN - 1) * LSTM_HIDDEN..].copy_from_slice(&dfeat[n_cnn..]);
        for l in (0..LSTM_LAYERS).rev() {
            let (w, b) = layout.lstm[l];
            let in_dim = tr.lstm[l].in_dim;
            let n = (in_dim + LSTM_HIDDEN) * 4 * LSTM_HIDDEN;
            let (gw, rest) = grad.split_at_mut(b);
            let dx = lstm_backward(
                &tr.lstm[l],
                &p[w..w + n],
                &dh,
                &mut gw[w..w + n],
                &mut rest[..4 * LSTM_HIDDEN],
            );
            dh = dx;
        }

        // Convolutional branch.
        let shapes = conv_shapes();
        let mut dact = dfeat[..n_cnn].to_vec();
        let mut conv_i = layout.conv.len();
        let mut pool_i = tr.pool_args.len();
        for (s, stage) in STAGES.iter().enumerate().rev() {
            let inp = &tr.acts[s];
            let out = &tr.acts[s + 1];
            match stage {
                Stage::Conv(c) => {
                    conv_i -= 1;
                    for (d, &o) in dact.iter_mut().zip(out) {
                        if o <= 0.0 {
                            *d = 0.0;
                        }
                    }
                    let (w, b) = layout.conv[conv_i];
                    let (gw, rest) = grad.split_at_mut(b);
                    let din = conv_backward(
                        inp,
                        shapes[s],
                        c,
                        &p[w..w + c.weights()],
                        &dact,
                        &mut gw[w..w + c.weights()],
                        &mut rest[..c.cout],
                        s > 0,
                    );
                    match din {
                        Some(d) => dact = d,
                        None => break,
                    }
                }
                Stage::Pool => {
                    pool_i -= 1;
                    let mut din = vec![0.0; inp.len()];
                    for (o, &src) in tr.pool_args[pool_i].iter().enumerate() {
                        din[src as usize] += dact[o];
                    }
                    dact = din;
                }
            }
        }
    }
}

pub fn softmax(logits: &[f64; N_CLASSES]) -> [f64; N_CLASSES] {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out = [0.0; N_CLASSES];
    let mut sum = 0.0;
    for (o, l) in out.iter_mut().zip(logits) {
        *o = (l - m).exp();
        sum += *o;
    }
    for o in &mut out {
        *o /= sum;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..INPUT_ROWS * INPUT_LEN).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn shapes_follow_the_architecture_table() {
        assert_eq!(
            conv_shapes(),
            vec![
                (6, 128, 1),
                (6, 64, 32),
                (6, 32, 32),
                (6, 32, 64),
                (6, 32, 128),
                (6, 16, 128),
                (1, 16, 128),
            ]
        );
        assert_eq!(cnn_features(), 2048);
        let first = match STAGES[0] {
            Stage::Conv(c) => c,
            Stage::Pool => unreachable!(),
        };
        assert_eq!(first.pad_left(128), 3);
    }

    #[test]
    fn parameter_count() {
        let convs = (9 * 32 + 32) + (3 * 32 * 64 + 64) + (3 * 64 * 128 + 128) + (6 * 128 * 128 + 128);
        let lstm = (6 + 64) * 256 + 256 + (64 + 64) * 256 + 256;
        let fc = (2048 + 64) * 2 + 2;
        assert_eq!(Layout::new().total, convs + lstm + fc);
        assert_eq!(MotionNet::init(0).params.len(), convs + lstm + fc);
    }

    #[test]
    fn outputs_are_finite_probabilities() {
        let net = MotionNet::init(3);
        for (seed, scale) in [(1, 1.0), (2, 1e3), (3, 1e-6)] {
            let x: Vec<f64> = sample(seed).into_iter().map(|v| v * scale).collect();
            let tr = net.forward(&x).unwrap();
            assert!(tr.logits.iter().all(|l| l.is_finite()));
            assert!((tr.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        assert!(net.forward(&[0.0; 10]).is_err());
    }

    #[test]
    fn init_is_seeded() {
        assert_eq!(MotionNet::init(5), MotionNet::init(5));
        assert_ne!(MotionNet::init(5), MotionNet::init(6));
    }

    /// Central differences on randomly chosen parameters from every block.
    #[test]
    fn gradients_match_finite_differences() {
        let net = MotionNet::init(11);
        let x = sample(4);
        let mut grad = vec![0.0; net.params.len()];
        net.loss_and_grad(&x, 1, &mut grad).unwrap();

        let layout = Layout::new();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut blocks: Vec<(usize, usize)> = Vec::new();
        for (&(w, b), stage) in layout.conv.iter().zip(STAGES.iter().filter_map(|s| match s {
            Stage::Conv(c) => Some(*c),
            Stage::Pool => None,
        })) {
            blocks.push((w, w + stage.weights()));
            blocks.push((b, b + stage.cout));
        }
        for &(w, b) in &layout.lstm {
            blocks.push((w, b));
            blocks.push((b, b + 4 * LSTM_HIDDEN));
        }
        blocks.push((layout.fc.0, layout.fc.1));
        let mut checked = 0;
        let mut attempts = 0;
        while checked < 10 + blocks.len() && attempts < 10_000 {
            attempts += 1;
            let (lo, hi) = blocks[attempts % blocks.len()];
            let i = rng.random_range(lo..hi);
            if grad[i].abs() < 1e-7 {
                continue;
            }
            // Small enough that no ReLU or pooling decision flips.
            let h = 1e-6;
            let mut plus = net.clone();
            plus.params[i] += h;
            let mut minus = net.clone();
            minus.params[i] -= h;
            let numeric = (plus.loss(&x, 1).unwrap() - minus.loss(&x, 1).unwrap()) / (2.0 * h);
            let rel = (numeric - grad[i]).abs() / numeric.abs().max(grad[i].abs());
            assert!(rel < 1e-4, "param {i}: analytic {} numeric {numeric} rel {rel}", grad[i]);
            checked += 1;
        }
        assert!(checked >= 10);
    }
}
