//! Bidirectional LSTM classifier with hand-written backpropagation through
//! time. Gate order in every `4H` block is input, forget, candidate, output.
//! Sequences in a batch are padded; a padded step leaves the state of its row
//! untouched, so each direction's final state is the state after the last
//! real token.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::linear::softmax_rows;

const TENSOR_NAMES: [&str; 9] = [
    "embedding",
    "w_forward",
    "u_forward",
    "b_forward",
    "w_backward",
    "u_backward",
    "b_backward",
    "projection",
    "projection_bias",
];

#[derive(Clone, Debug, PartialEq)]
pub struct BiLstmParams {
    /// `vocab × input`; row 0 is the unknown token and stays zero.
    pub emb: Array2<f64>,
    /// Per direction (forward, backward): `4H × input`.
    pub w: [Array2<f64>; 2],
    /// Per direction: `4H × H`.
    pub u: [Array2<f64>; 2],
    /// Per direction: `4H`.
    pub b: [Array1<f64>; 2],
    /// `labels × 2H`.
    pub proj: Array2<f64>,
    pub proj_b: Array1<f64>,
}

impl BiLstmParams {
    pub fn zeros_like(other: &BiLstmParams) -> Self {
        BiLstmParams {
            emb: Array2::zeros(other.emb.raw_dim()),
            w: [Array2::zeros(other.w[0].raw_dim()), Array2::zeros(other.w[1].raw_dim())],
            u: [Array2::zeros(other.u[0].raw_dim()), Array2::zeros(other.u[1].raw_dim())],
            b: [Array1::zeros(other.b[0].raw_dim()), Array1::zeros(other.b[1].raw_dim())],
            proj: Array2::zeros(other.proj.raw_dim()),
            proj_b: Array1::zeros(other.proj_b.raw_dim()),
        }
    }

    pub fn tensor_names() -> [&'static str; 9] {
        TENSOR_NAMES
    }

    /// Flat views in [`tensor_names`](Self::tensor_names) order.
    pub fn tensors(&self) -> Vec<&[f64]> {
        fn flat(a: Option<&[f64]>) -> &[f64] {
            a.expect("standard layout")
        }
        vec![
            flat(self.emb.as_slice()),
            flat(self.w[0].as_slice()),
            flat(self.u[0].as_slice()),
            flat(self.b[0].as_slice()),
            flat(self.w[1].as_slice()),
            flat(self.u[1].as_slice()),
            flat(self.b[1].as_slice()),
            flat(self.proj.as_slice()),
            flat(self.proj_b.as_slice()),
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let [w0, w1] = &mut self.w;
        let [u0, u1] = &mut self.u;
        let [b0, b1] = &mut self.b;
        fn flat(a: Option<&mut [f64]>) -> &mut [f64] {
            a.expect("standard layout")
        }
        vec![
            flat(self.emb.as_slice_mut()),
            flat(w0.as_slice_mut()),
            flat(u0.as_slice_mut()),
            flat(b0.as_slice_mut()),
            flat(w1.as_slice_mut()),
            flat(u1.as_slice_mut()),
            flat(b1.as_slice_mut()),
            flat(self.proj.as_slice_mut()),
            flat(self.proj_b.as_slice_mut()),
        ]
    }

    pub fn shapes(&self) -> Vec<Vec<usize>> {
        vec![
            self.emb.shape().to_vec(),
            self.w[0].shape().to_vec(),
            self.u[0].shape().to_vec(),
            self.b[0].shape().to_vec(),
            self.w[1].shape().to_vec(),
            self.u[1].shape().to_vec(),
            self.b[1].shape().to_vec(),
            self.proj.shape().to_vec(),
            self.proj_b.shape().to_vec(),
        ]
    }

    pub fn count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BiLstm {
    pub params: BiLstmParams,
}

/// Dropout rates plus the generator for their masks.
pub struct DropoutSpec<'a> {
    pub rng: &'a mut ChaCha8Rng,
    pub input: f64,
    pub recurrent: f64,
}

struct Step {
    x: Array2<f64>,
    h_in: Array2<f64>,
    c_prev: Array2<f64>,
    /// Activated gates, `B × 4H`.
    gates: Array2<f64>,
    /// Cell value before masking.
    c_cell: Array2<f64>,
    live: Vec<bool>,
}

struct Trace {
    steps: Vec<Step>,
    rec_mask: Option<Array2<f64>>,
}

struct Encoded {
    rep: Array2<f64>,
    traces: [Trace; 2],
    input_masks: Option<Vec<Array2<f64>>>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn dropout_mask(rng: &mut ChaCha8Rng, shape: (usize, usize), p: f64) -> Array2<f64> {
    let keep = 1.0 / (1.0 - p);
    Array2::from_shape_simple_fn(shape, || if rng.random::<f64>() < p { 0.0 } else { keep })
}

/// Position read by `direction` at step `t` of a sequence of length `len`.
fn position(direction: usize, t: usize, len: usize) -> usize {
    if direction == 0 {
        t
    } else {
        len - 1 - t
    }
}

impl BiLstm {
    /// Kaiming-normal weights, zero biases except forget gates at 1.
    pub fn new(emb: Array2<f64>, hidden: usize, labels: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let input = emb.ncols();
        let mut kaiming = |rows: usize, fan_in: usize| {
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive fan-in");
            Array2::from_shape_simple_fn((rows, fan_in), || normal.sample(&mut rng))
        };
        let bias = || {
            let mut b = Array1::zeros(4 * hidden);
            b.slice_mut(s![hidden..2 * hidden]).fill(1.0);
            b
        };
        let w = [kaiming(4 * hidden, input), kaiming(4 * hidden, input)];
        let u = [kaiming(4 * hidden, hidden), kaiming(4 * hidden, hidden)];
        let proj = kaiming(labels, 2 * hidden);
        BiLstm {
            params: BiLstmParams {
                emb,
                w,
                u,
                b: [bias(), bias()],
                proj,
                proj_b: Array1::zeros(labels),
            },
        }
    }

    pub fn hidden(&self) -> usize {
        self.params.u[0].ncols()
    }

    pub fn labels(&self) -> usize {
        self.params.proj.nrows()
    }

    fn run_direction(&self, d: usize, xs: &[Array2<f64>], rec_mask: Option<Array2<f64>>) -> (Array2<f64>, Trace) {
        let p = &self.params;
        let (bsz, hid, dim) = (xs.len(), self.hidden(), p.emb.ncols());
        let t_max = xs.iter().map(|x| x.nrows()).max().unwrap_or(0);
        let mut h = Array2::zeros((bsz, hid));
        let mut c = Array2::zeros((bsz, hid));
        let mut steps = Vec::with_capacity(t_max);
        for t in 0..t_max {
            let mut x = Array2::zeros((bsz, dim));
            let live: Vec<bool> = xs.iter().map(|seq| t < seq.nrows()).collect();
            for (i, seq) in xs.iter().enumerate() {
                if live[i] {
                    x.row_mut(i).assign(&seq.row(position(d, t, seq.nrows())));
                }
            }
            let h_in = match &rec_mask {
                Some(m) => &h * m,
                None => h.clone(),
            };
            let mut gates = x.dot(&p.w[d].t()) + h_in.dot(&p.u[d].t()) + &p.b[d];
            gates.slice_mut(s![.., ..2 * hid]).mapv_inplace(sigmoid);
            gates.slice_mut(s![.., 2 * hid..3 * hid]).mapv_inplace(f64::tanh);
            gates.slice_mut(s![.., 3 * hid..]).mapv_inplace(sigmoid);
            let (ig, fg, gg, og) = split_gates(gates.view(), hid);
            let c_cell = &fg * &c + &ig * &gg;
            let h_cell = &og * &c_cell.mapv(f64::tanh);
            let c_prev = c;
            let mut c_next = c_cell.clone();
            let mut h_next = h_cell;
            for (i, &alive) in live.iter().enumerate() {
                if !alive {
                    c_next.row_mut(i).assign(&c_prev.row(i));
                    h_next.row_mut(i).assign(&h.row(i));
                }
            }
            steps.push(Step {
                x,
                h_in,
                c_prev,
                gates,
                c_cell,
                live,
            });
            h = h_next;
            c = c_next;
        }
        (h, Trace { steps, rec_mask })
    }

    fn encode(&self, batch: &[Vec<usize>], dropout: Option<&mut DropoutSpec>) -> Encoded {
        let emb = &self.params.emb;
        let dim = emb.ncols();
        let hid = self.hidden();
        let mut xs: Vec<Array2<f64>> = batch
            .iter()
            .map(|ids| {
                let mut x = Array2::zeros((ids.len(), dim));
                for (t, &id) in ids.iter().enumerate() {
                    x.row_mut(t).assign(&emb.row(id));
                }
                x
            })
            .collect();
        let mut input_masks = None;
        let mut rec_masks = [None, None];
        if let Some(spec) = dropout {
            if spec.input > 0.0 {
                let masks: Vec<Array2<f64>> = xs
                    .iter()
                    .map(|x| dropout_mask(spec.rng, x.dim(), spec.input))
                    .collect();
                for (x, m) in xs.iter_mut().zip(&masks) {
                    *x *= m;
                }
                input_masks = Some(masks);
            }
            if spec.recurrent > 0.0 {
                for m in &mut rec_masks {
                    *m = Some(dropout_mask(spec.rng, (batch.len(), hid), spec.recurrent));
                }
            }
        }
        let [m0, m1] = rec_masks;
        let (h_fwd, t_fwd) = self.run_direction(0, &xs, m0);
        let (h_bwd, t_bwd) = self.run_direction(1, &xs, m1);
        let mut rep = Array2::zeros((batch.len(), 2 * hid));
        rep.slice_mut(s![.., ..hid]).assign(&h_fwd);
        rep.slice_mut(s![.., hid..]).assign(&h_bwd);
        Encoded {
            rep,
            traces: [t_fwd, t_bwd],
            input_masks,
        }
    }

    fn logits(&self, rep: &Array2<f64>) -> Array2<f64> {
        rep.dot(&self.params.proj.t()) + &self.params.proj_b
    }

    /// Class probabilities without dropout, one row per sequence.
    pub fn probabilities(&self, batch: &[Vec<usize>]) -> Array2<f64> {
        let mut p = self.logits(&self.encode(batch, None).rep);
        softmax_rows(&mut p);
        p
    }

    fn penalty(&self, l2: f64) -> f64 {
        let p = &self.params;
        let sq = |a: &Array2<f64>| a.iter().map(|v| v * v).sum::<f64>();
        0.5 * l2 * (sq(&p.w[0]) + sq(&p.w[1]) + sq(&p.u[0]) + sq(&p.u[1]) + sq(&p.proj))
    }

    /// Mean cross-entropy plus `0.5 * l2 * (|W|² + |U|² + |P|²)`, no dropout.
    pub fn loss(&self, batch: &[Vec<usize>], targets: &[usize], l2: f64) -> f64 {
        let p = self.probabilities(batch);
        let ce: f64 = targets
            .iter()
            .enumerate()
            .map(|(i, &y)| -p[[i, y]].max(f64::MIN_POSITIVE).ln())
            .sum();
        ce / batch.len() as f64 + self.penalty(l2)
    }

    pub fn loss_and_grad(&self, batch: &[Vec<usize>], targets: &[usize], l2: f64) -> (f64, BiLstmParams) {
        self.loss_and_grad_with(batch, targets, l2, None)
    }

    pub fn loss_and_grad_with(
        &self,
        batch: &[Vec<usize>],
        targets: &[usize],
        l2: f64,
        mut dropout: Option<DropoutSpec>,
    ) -> (f64, BiLstmParams) {
        let p = &self.params;
        let hid = self.hidden();
        let bsz = batch.len();
        let enc = self.encode(batch, dropout.as_mut());
        let mut probs = self.logits(&enc.rep);
        softmax_rows(&mut probs);
        let mut loss = 0.0;
        for (i, &y) in targets.iter().enumerate() {
            loss -= probs[[i, y]].max(f64::MIN_POSITIVE).ln();
            probs[[i, y]] -= 1.0;
        }
        loss = loss / bsz as f64 + self.penalty(l2);
        let dlogits = probs / bsz as f64;

        let mut g = BiLstmParams::zeros_like(p);
        g.proj = dlogits.t().dot(&enc.rep) + &(&p.proj * l2);
        g.proj_b = dlogits.sum_axis(Axis(0));
        let drep = dlogits.dot(&p.proj);

        let mut dxs: Vec<Array2<f64>> = batch.iter().map(|ids| Array2::zeros((ids.len(), p.emb.ncols()))).collect();
        for d in 0..2 {
            let dh = drep.slice(s![.., d * hid..(d + 1) * hid]).to_owned();
            self.backprop_direction(d, &enc.traces[d], dh, &mut g, &mut dxs);
            g.w[d] += &(&p.w[d] * l2);
            g.u[d] += &(&p.u[d] * l2);
        }
        for (i, ids) in batch.iter().enumerate() {
            if let Some(masks) = &enc.input_masks {
                dxs[i] *= &masks[i];
            }
            for (t, &id) in ids.iter().enumerate() {
                let mut row = g.emb.row_mut(id);
                row += &dxs[i].row(t);
            }
        }
        g.emb.row_mut(0).fill(0.0);
        (loss, g)
    }

    fn backprop_direction(
        &self,
        d: usize,
        trace: &Trace,
        dh_final: Array2<f64>,
        g: &mut BiLstmParams,
        dxs: &mut [Array2<f64>],
    ) {
        let p = &self.params;
        let hid = self.hidden();
        let mut dh = dh_final;
        let mut dc = Array2::zeros(dh.raw_dim());
        for (t, step) in trace.steps.iter().enumerate().rev() {
            let mut dh_new = dh.clone();
            let mut dc_new = dc.clone();
            for (i, &alive) in step.live.iter().enumerate() {
                if !alive {
                    dh_new.row_mut(i).fill(0.0);
                    dc_new.row_mut(i).fill(0.0);
                }
            }
            let (ig, fg, gg, og) = split_gates(step.gates.view(), hid);
            let tc = step.c_cell.mapv(f64::tanh);
            let d_o = &dh_new * &tc;
            let dct = &dc_new + &(&dh_new * &og * &tc.mapv(|v| 1.0 - v * v));
            let di = &dct * &gg;
            let dg = &dct * &ig;
            let df = &dct * &step.c_prev;
            let mut dc_prev = &dct * &fg;

            let mut dz = Array2::zeros(step.gates.raw_dim());
            dz.slice_mut(s![.., ..hid]).assign(&(&di * &ig.mapv(|v| v * (1.0 - v))));
            dz.slice_mut(s![.., hid..2 * hid]).assign(&(&df * &fg.mapv(|v| v * (1.0 - v))));
            dz.slice_mut(s![.., 2 * hid..3 * hid]).assign(&(&dg * &gg.mapv(|v| 1.0 - v * v)));
            dz.slice_mut(s![.., 3 * hid..]).assign(&(&d_o * &og.mapv(|v| v * (1.0 - v))));

            g.w[d] += &dz.t().dot(&step.x);
            g.u[d] += &dz.t().dot(&step.h_in);
            g.b[d] += &dz.sum_axis(Axis(0));
            let dx = dz.dot(&p.w[d]);
            let mut dh_prev = dz.dot(&p.u[d]);
            if let Some(m) = &trace.rec_mask {
                dh_prev *= m;
            }
            for (i, &alive) in step.live.iter().enumerate() {
                if alive {
                    let len = dxs[i].nrows();
                    let mut row = dxs[i].row_mut(position(d, t, len));
                    row += &dx.row(i);
                } else {
                    dh_prev.row_mut(i).assign(&dh.row(i));
                    dc_prev.row_mut(i).assign(&dc.row(i));
                }
            }
            dh = dh_prev;
            dc = dc_prev;
        }
    }
}

fn split_gates(gates: ArrayView2<f64>, hid: usize) -> (Array2<f64>, Array2<f64>, Array2<f64>, Array2<f64>) {
    (
        gates.slice(s![.., ..hid]).to_owned(),
        gates.slice(s![.., hid..2 * hid]).to_owned(),
        gates.slice(s![.., 2 * hid..3 * hid]).to_owned(),
        gates.slice(s![.., 3 * hid..]).to_owned(),
    )
}

/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradientCheckEntry {
    pub tensor: &'static str,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub relative_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradientCheck {
    pub entries: Vec<GradientCheckEntry>,
}

impl GradientCheck {
    pub fn max_relative_error(&self) -> f64 {
        self.entries.iter().map(|e| e.relative_error).fold(0.0, f64::max)
    }
}

/// Compares analytic gradients with central differences of step `eps` at
/// `per_tensor` sampled entries of every tensor. Embedding samples come from
/// rows the batch uses.
pub fn gradient_check(
    model: &BiLstm,
    batch: &[Vec<usize>],
    targets: &[usize],
    l2: f64,
    per_tensor: usize,
    eps: f64,
    seed: u64,
) -> GradientCheck {
    let (_, grads) = model.loss_and_grad(batch, targets, l2);
    let grads = grads.tensors().iter().map(|t| t.to_vec()).collect::<Vec<_>>();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = model.params.emb.ncols();
    let used: Vec<usize> = batch.iter().flatten().copied().filter(|&id| id != 0).collect();
    let mut probe = model.clone();
    let mut entries = Vec::new();
    for (k, name) in TENSOR_NAMES.iter().enumerate() {
        let len = grads[k].len();
        for _ in 0..per_tensor {
            let index = if k == 0 && !used.is_empty() {
                used[rng.random_range(0..used.len())] * dim + rng.random_range(0..dim)
            } else {
                rng.random_range(0..len)
            };
            let original = probe.params.tensors()[k][index];
            probe.params.tensors_mut()[k][index] = original + eps;
            let hi = probe.loss(batch, targets, l2);
            probe.params.tensors_mut()[k][index] = original - eps;
            let lo = probe.loss(batch, targets, l2);
            probe.params.tensors_mut()[k][index] = original;
            let numeric = (hi - lo) / (2.0 * eps);
            let analytic = grads[k][index];
            entries.push(GradientCheckEntry {
                tensor: name,
                index,
                analytic,
                numeric,
                relative_error: relative_error(analytic, numeric),
            });
        }
    }
    GradientCheck { entries }
}
