//! Gated recurrent unit with manual backpropagation through time.
//!
//! Gate equations:
//!   z_t = sigmoid(Wz x_t + Uz h'_{t-1} + bz)
//!   r_t = sigmoid(Wr x_t + Ur h'_{t-1} + br)
//!   g_t = tanh(Wh x_t + Uh (r_t * h'_{t-1}) + bh)
//!   h_t = (1 - z_t) * h_{t-1} + z_t * g_t
//!
//! where h'_{t-1} is the previous state with the (variational) recurrent
//! dropout mask applied, and x_t carries the input dropout mask. Masks are
//! identity outside training.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha20Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct GruParams {
    pub wz: Array2<f64>,
    pub uz: Array2<f64>,
    pub bz: Array1<f64>,
    pub wr: Array2<f64>,
    pub ur: Array2<f64>,
    pub br: Array1<f64>,
    pub wh: Array2<f64>,
    pub uh: Array2<f64>,
    pub bh: Array1<f64>,
}

pub fn init_matrix(rows: usize, cols: usize, rng: &mut ChaCha20Rng) -> Array2<f64> {
    let bound = 1.0 / (cols as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-bound..bound))
}

impl GruParams {
    pub fn new(input_dim: usize, hidden: usize, rng: &mut ChaCha20Rng) -> Self {
        GruParams {
            wz: init_matrix(hidden, input_dim, rng),
            uz: init_matrix(hidden, hidden, rng),
            bz: Array1::zeros(hidden),
            wr: init_matrix(hidden, input_dim, rng),
            ur: init_matrix(hidden, hidden, rng),
            br: Array1::zeros(hidden),
            wh: init_matrix(hidden, input_dim, rng),
            uh: init_matrix(hidden, hidden, rng),
            bh: Array1::zeros(hidden),
        }
    }

    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        GruParams {
            wz: Array2::zeros((hidden, input_dim)),
            uz: Array2::zeros((hidden, hidden)),
            bz: Array1::zeros(hidden),
            wr: Array2::zeros((hidden, input_dim)),
            ur: Array2::zeros((hidden, hidden)),
            br: Array1::zeros(hidden),
            wh: Array2::zeros((hidden, input_dim)),
            uh: Array2::zeros((hidden, hidden)),
            bh: Array1::zeros(hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.bz.len()
    }

    pub fn add_scaled(&mut self, other: &GruParams, factor: f64) {
        self.wz.scaled_add(factor, &other.wz);
        self.uz.scaled_add(factor, &other.uz);
        self.bz.scaled_add(factor, &other.bz);
        self.wr.scaled_add(factor, &other.wr);
        self.ur.scaled_add(factor, &other.ur);
        self.br.scaled_add(factor, &other.br);
        self.wh.scaled_add(factor, &other.wh);
        self.uh.scaled_add(factor, &other.uh);
        self.bh.scaled_add(factor, &other.bh);
    }

    pub fn for_each(&self, f: &mut impl FnMut(f64)) {
        for m in [&self.wz, &self.uz, &self.wr, &self.ur, &self.wh, &self.uh] {
            m.iter().for_each(|&v| f(v));
        }
        for b in [&self.bz, &self.br, &self.bh] {
            b.iter().for_each(|&v| f(v));
        }
    }

    pub fn for_each_mut(&mut self, f: &mut impl FnMut(&mut f64)) {
        for m in [
            &mut self.wz,
            &mut self.uz,
            &mut self.wr,
            &mut self.ur,
            &mut self.wh,
            &mut self.uh,
        ] {
            m.iter_mut().for_each(|v| f(v));
        }
        for b in [&mut self.bz, &mut self.br, &mut self.bh] {
            b.iter_mut().for_each(|v| f(v));
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone)]
pub struct GruCache {
    /// Inputs after the input mask.
    pub xs: Vec<Array1<f64>>,
    /// States h_1..h_T.
    pub hs: Vec<Array1<f64>>,
    /// Masked previous states used in the gates (index t holds h'_{t-1}).
    pub hds: Vec<Array1<f64>>,
    pub zs: Vec<Array1<f64>>,
    pub rs: Vec<Array1<f64>>,
    pub gs: Vec<Array1<f64>>,
}

pub fn gru_forward(
    p: &GruParams,
    inputs: &[Array1<f64>],
    in_mask: Option<&Array1<f64>>,
    rec_mask: Option<&Array1<f64>>,
) -> GruCache {
    let hidden = p.hidden();
    let mut cache = GruCache {
        xs: Vec::with_capacity(inputs.len()),
        hs: Vec::with_capacity(inputs.len()),
        hds: Vec::with_capacity(inputs.len()),
        zs: Vec::with_capacity(inputs.len()),
        rs: Vec::with_capacity(inputs.len()),
        gs: Vec::with_capacity(inputs.len()),
    };
    let mut h_prev: Array1<f64> = Array1::zeros(hidden);
    for input in inputs {
        let x = match in_mask {
            Some(mask) => input * mask,
            None => input.clone(),
        };
        let hd = match rec_mask {
            Some(mask) => &h_prev * mask,
            None => h_prev.clone(),
        };
        let z = (p.wz.dot(&x) + p.uz.dot(&hd) + &p.bz).mapv(sigmoid);
        let r = (p.wr.dot(&x) + p.ur.dot(&hd) + &p.br).mapv(sigmoid);
        let g = (p.wh.dot(&x) + p.uh.dot(&(&r * &hd)) + &p.bh).mapv(f64::tanh);
        let h = (1.0 - &z) * &h_prev + &z * &g;
        cache.xs.push(x);
        cache.hds.push(hd);
        cache.zs.push(z);
        cache.rs.push(r);
        cache.gs.push(g);
        cache.hs.push(h.clone());
        h_prev = h;
    }
    cache
}

fn outer_add(acc: &mut Array2<f64>, col: &Array1<f64>, row: &Array1<f64>) {
    for (i, &c) in col.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        let mut slice = acc.row_mut(i);
        slice.scaled_add(c, row);
    }
}

/// Backpropagation through time. `dh_out[t]` is the loss gradient flowing
/// into h_t from above; returns gradients w.r.t. the original (unmasked)
/// inputs and accumulates parameter gradients into `grad`.
pub fn gru_backward(
    p: &GruParams,
    cache: &GruCache,
    dh_out: &[Array1<f64>],
    in_mask: Option<&Array1<f64>>,
    rec_mask: Option<&Array1<f64>>,
    grad: &mut GruParams,
) -> Vec<Array1<f64>> {
    let steps = cache.hs.len();
    let hidden = p.hidden();
    let mut dxs: Vec<Array1<f64>> = vec![Array1::zeros(cache.xs[0].len()); steps];
    let mut carry: Array1<f64> = Array1::zeros(hidden);
    for t in (0..steps).rev() {
        let h_prev = if t == 0 {
            Array1::zeros(hidden)
        } else {
            cache.hs[t - 1].clone()
        };
        let dh = &dh_out[t] + &carry;
        let z = &cache.zs[t];
        let r = &cache.rs[t];
        let g = &cache.gs[t];
        let hd = &cache.hds[t];
        let x = &cache.xs[t];

        let da_z = &dh * &(g - &h_prev) * z * &(1.0 - z);
        let dg_pre = &dh * z * &(1.0 - &(g * g));
        let dh_prev_direct = &dh * &(1.0 - z);

        outer_add(&mut grad.wh, &dg_pre, x);
        outer_add(&mut grad.uh, &dg_pre, &(r * hd));
        grad.bh += &dg_pre;

        let through_uh = p.uh.t().dot(&dg_pre);
        let dr = &through_uh * hd;
        let mut dhd = &through_uh * r;

        let da_r = &dr * r * &(1.0 - r);

        outer_add(&mut grad.wz, &da_z, x);
        outer_add(&mut grad.uz, &da_z, hd);
        grad.bz += &da_z;
        outer_add(&mut grad.wr, &da_r, x);
        outer_add(&mut grad.ur, &da_r, hd);
        grad.br += &da_r;

        dhd += &p.uz.t().dot(&da_z);
        dhd += &p.ur.t().dot(&da_r);
        if let Some(mask) = rec_mask {
            dhd *= mask;
        }
        carry = dh_prev_direct + dhd;

        let mut dx = p.wz.t().dot(&da_z) + p.wr.t().dot(&da_r) + p.wh.t().dot(&dg_pre);
        if let Some(mask) = in_mask {
            dx *= mask;
        }
        dxs[t] = dx;
    }
    dxs
}
