//! Mean-pooled embeddings fed to a multinomial logistic regression, fit with
//! L-BFGS from a zero start. No randomness enters after the embedding matrix
//! is built, so results depend only on data, seed and config.

use std::collections::VecDeque;

use ndarray::{Array1, Array2, Axis};

use super::vocab::Vocab;

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct LinearModel {
    pub vocab: Vocab,
    pub emb: Array2<f64>,
    pub feat_mean: Array1<f64>,
    pub feat_scale: Array1<f64>,
    /// `labels × dim`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct FitOptions {
    pub l2: f64,
    pub max_iter: usize,
    pub tolerance: f64,
}

fn pool(vocab: &Vocab, emb: &Array2<f64>, tokens: &[String]) -> Array1<f64> {
    let mut acc = Array1::zeros(emb.ncols());
    if tokens.is_empty() {
        return acc;
    }
    for id in vocab.ids(tokens) {
        acc += &emb.row(id);
    }
    acc / tokens.len() as f64
}

pub(crate) fn softmax_rows(logits: &mut Array2<f64>) {
    for mut row in logits.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        row.mapv_inplace(|x| (x - max).exp());
        let sum = row.sum();
        row /= sum;
    }
}

/// Mean cross-entropy plus `0.5 * l2 * |W|²` and its gradient, over the flat
/// parameter vector `[W row-major, b]`.
fn objective(x: &Array2<f64>, y: &[usize], labels: usize, l2: f64, theta: &[f64]) -> (f64, Vec<f64>) {
    let (n, d) = x.dim();
    let w = Array2::from_shape_vec((labels, d), theta[..labels * d].to_vec()).expect("shape");
    let b = Array1::from(theta[labels * d..].to_vec());
    let mut p = x.dot(&w.t()) + &b;
    softmax_rows(&mut p);
    let mut loss = 0.0;
    for (i, &yi) in y.iter().enumerate() {
        loss -= p[[i, yi]].max(f64::MIN_POSITIVE).ln();
        p[[i, yi]] -= 1.0;
    }
    let inv = 1.0 / n as f64;
    loss = loss * inv + 0.5 * l2 * w.iter().map(|v| v * v).sum::<f64>();
    p *= inv;
    let gw = p.t().dot(x) + &(w * l2);
    let gb = p.sum_axis(Axis(0));
    let mut grad = gw.into_raw_vec_and_offset().0;
    grad.extend(gb.iter());
    (loss, grad)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Limited-memory BFGS with Armijo backtracking.
fn lbfgs(f: impl Fn(&[f64]) -> (f64, Vec<f64>), mut x: Vec<f64>, max_iter: usize, tolerance: f64) -> (Vec<f64>, usize) {
    const MEMORY: usize = 10;
    let (mut fx, mut g) = f(&x);
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    for iter in 0..max_iter {
        if g.iter().fold(0.0f64, |m, v| m.max(v.abs())) < tolerance {
            return (x, iter);
        }
        // Two-loop recursion for d = -H g.
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        let gamma = history
            .back()
            .map(|(s, y, _)| dot(s, y) / dot(y, y))
            .unwrap_or_else(|| 1.0 / dot(&g, &g).sqrt().max(1.0));
        q.iter_mut().for_each(|v| *v *= gamma);
        for ((s, y, rho), a) in history.iter().zip(alphas.into_iter().rev()) {
            let beta = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - beta) * si);
        }
        let mut dir: Vec<f64> = q.into_iter().map(|v| -v).collect();
        let mut slope = dot(&g, &dir);
        if slope >= 0.0 {
            history.clear();
            dir = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..50 {
            let cand: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + step * di).collect();
            let (fc, gc) = f(&cand);
            if fc <= fx + 1e-4 * step * slope {
                accepted = Some((cand, fc, gc));
                break;
            }
            step *= 0.5;
        }
        let Some((nx, nf, ng)) = accepted else {
            return (x, iter);
        };
        let s: Vec<f64> = nx.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = ng.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 {
            if history.len() == MEMORY {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        let decrease = fx - nf;
        x = nx;
        fx = nf;
        g = ng;
        if decrease <= 1e-14 * fx.abs().max(1.0) {
            return (x, iter + 1);
        }
    }
    (x, max_iter)
}

impl LinearModel {
    pub fn fit(
        vocab: Vocab,
        emb: Array2<f64>,
        tokens: &[&[String]],
        y: &[usize],
        labels: usize,
        options: FitOptions,
    ) -> (Self, usize) {
        let d = emb.ncols();
        let n = tokens.len();
        let mut x = Array2::zeros((n, d));
        for (i, t) in tokens.iter().enumerate() {
            x.row_mut(i).assign(&pool(&vocab, &emb, t));
        }
        let feat_mean = x.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(d));
        let feat_scale = x
            .std_axis(Axis(0), 0.0)
            .mapv(|s| if s > 1e-12 { 1.0 / s } else { 1.0 });
        x -= &feat_mean;
        x *= &feat_scale;

        let theta0 = vec![0.0; labels * (d + 1)];
        let (theta, iterations) = lbfgs(
            |t| objective(&x, y, labels, options.l2, t),
            theta0,
            options.max_iter,
            options.tolerance,
        );
        let weights = Array2::from_shape_vec((labels, d), theta[..labels * d].to_vec()).expect("shape");
        let bias = Array1::from(theta[labels * d..].to_vec());
        (
            LinearModel {
                vocab,
                emb,
                feat_mean,
                feat_scale,
                weights,
                bias,
            },
            iterations,
        )
    }

    /// Class probabilities, one row per instance.
    pub fn scores(&self, tokens: &[&[String]]) -> Array2<f64> {
        let d = self.emb.ncols();
        let mut x = Array2::zeros((tokens.len(), d));
        for (i, t) in tokens.iter().enumerate() {
            let f = (pool(&self.vocab, &self.emb, t) - &self.feat_mean) * &self.feat_scale;
            x.row_mut(i).assign(&f);
        }
        let mut p = x.dot(&self.weights.t()) + &self.bias;
        softmax_rows(&mut p);
        p
    }
}
