//! Additive attention pooling: u_i = tanh(W h_i + b), alpha ∝ exp(u_i . c),
//! output = sum_i alpha_i h_i.

use ndarray::{Array1, Array2};
use rand_chacha::ChaCha20Rng;

use super::gru::init_matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct AttnParams {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub ctx: Array1<f64>,
}

impl AttnParams {
    pub fn new(dim: usize, rng: &mut ChaCha20Rng) -> Self {
        AttnParams {
            w: init_matrix(dim, dim, rng),
            b: Array1::zeros(dim),
            ctx: init_matrix(1, dim, rng).row(0).to_owned(),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        AttnParams {
            w: Array2::zeros((dim, dim)),
            b: Array1::zeros(dim),
            ctx: Array1::zeros(dim),
        }
    }

    pub fn add_scaled(&mut self, other: &AttnParams, factor: f64) {
        self.w.scaled_add(factor, &other.w);
        self.b.scaled_add(factor, &other.b);
        self.ctx.scaled_add(factor, &other.ctx);
    }

    pub fn for_each(&self, f: &mut impl FnMut(f64)) {
        self.w.iter().for_each(|&v| f(v));
        self.b.iter().for_each(|&v| f(v));
        self.ctx.iter().for_each(|&v| f(v));
    }

    pub fn for_each_mut(&mut self, f: &mut impl FnMut(&mut f64)) {
        self.w.iter_mut().for_each(|v| f(v));
        self.b.iter_mut().for_each(|v| f(v));
        self.ctx.iter_mut().for_each(|v| f(v));
    }
}

#[derive(Debug, Clone)]
pub struct AttnCache {
    pub us: Vec<Array1<f64>>,
    pub alphas: Vec<f64>,
}

pub fn attn_forward(p: &AttnParams, hs: &[Array1<f64>]) -> (Array1<f64>, AttnCache) {
    let us: Vec<Array1<f64>> = hs
        .iter()
        .map(|h| (p.w.dot(h) + &p.b).mapv(f64::tanh))
        .collect();
    let scores: Vec<f64> = us.iter().map(|u| u.dot(&p.ctx)).collect();
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    let alphas: Vec<f64> = exps.iter().map(|e| e / total).collect();
    let mut out = Array1::zeros(hs[0].len());
    for (alpha, h) in alphas.iter().zip(hs) {
        out.scaled_add(*alpha, h);
    }
    (out, AttnCache { us, alphas })
}

/// Returns the loss gradient w.r.t. each pooled input and accumulates
/// parameter gradients into `grad`.
pub fn attn_backward(
    p: &AttnParams,
    hs: &[Array1<f64>],
    cache: &AttnCache,
    dout: &Array1<f64>,
    grad: &mut AttnParams,
) -> Vec<Array1<f64>> {
    let n = hs.len();
    // d(loss)/d(alpha_i) = dout . h_i
    let dalpha: Vec<f64> = hs.iter().map(|h| dout.dot(h)).collect();
    // Softmax jacobian: ds_i = alpha_i * (dalpha_i - sum_j alpha_j dalpha_j).
    let weighted: f64 = cache
        .alphas
        .iter()
        .zip(&dalpha)
        .map(|(a, d)| a * d)
        .sum();
    let mut dhs: Vec<Array1<f64>> = Vec::with_capacity(n);
    for i in 0..n {
        let dscore = cache.alphas[i] * (dalpha[i] - weighted);
        // score_i = u_i . ctx
        let du = dscore * &p.ctx;
        grad.ctx.scaled_add(dscore, &cache.us[i]);
        // u_i = tanh(W h_i + b)
        let dpre = du * (1.0 - &(&cache.us[i] * &cache.us[i]));
        for (row, &d) in dpre.iter().enumerate() {
            if d != 0.0 {
                grad.w.row_mut(row).scaled_add(d, &hs[i]);
            }
        }
        grad.b += &dpre;
        // direct path out = sum alpha_i h_i, plus through u_i
        let dh = cache.alphas[i] * dout + p.w.t().dot(&dpre);
        dhs.push(dh);
    }
    dhs
}
