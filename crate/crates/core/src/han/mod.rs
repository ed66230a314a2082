//! Hierarchical attention network scoring narrative documents.
//!
//! Word-level GRU + attention pools each turn into a vector; a turn-level
//! GRU + attention pools the turn vectors into a document vector, which a
//! linear head maps to a score. All gradients are hand-derived; the
//! finite-difference check in [`gradient_check`] guards them.

pub mod attention;
pub mod gru;

use std::io::{Read as _, Write as _};
use std::path::Path;

use ndarray::Array1;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::narrative::{NarrativeDocument, NarrativeKind};

use attention::{attn_backward, attn_forward, AttnParams};
use gru::{gru_backward, gru_forward, GruCache, GruParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HanConfig {
    pub embedding_dim: usize,
    pub gru_units: usize,
    pub learning_rate: f64,
    pub gru_dropout: f64,
    pub recurrent_dropout: f64,
    pub l2: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub bidirectional: bool,
    pub max_turns: usize,
    pub max_words: usize,
}

impl Default for HanConfig {
    fn default() -> Self {
        HanConfig {
            embedding_dim: 300,
            gru_units: 64,
            learning_rate: 0.02,
            gru_dropout: 0.0,
            recurrent_dropout: 0.0,
            l2: 0.0,
            batch_size: 8,
            epochs: 350,
            seed: 1,
            bidirectional: false,
            max_turns: 200,
            max_words: 100,
        }
    }
}

impl HanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embedding_dim == 0 || self.gru_units == 0 {
            return Err(Error::Config("embedding_dim and gru_units must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        for (name, rate) in [("gru_dropout", self.gru_dropout), ("recurrent_dropout", self.recurrent_dropout)] {
            if !(0.0..1.0).contains(&rate) {
                return Err(Error::Config(format!("{name} must be in [0, 1), got {rate}")));
            }
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.l2 < 0.0 {
            return Err(Error::Config("l2 must be non-negative".into()));
        }
        if self.max_turns == 0 || self.max_words == 0 {
            return Err(Error::Config("max_turns and max_words must be positive".into()));
        }
        Ok(())
    }

    /// Width of the word-level encoder output (doubled when bidirectional).
    pub fn turn_input_dim(&self) -> usize {
        if self.bidirectional {
            2 * self.gru_units
        } else {
            self.gru_units
        }
    }

    /// Width of the document vector.
    pub fn doc_dim(&self) -> usize {
        self.turn_input_dim()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HanParams {
    pub word_fw: GruParams,
    pub word_bw: Option<GruParams>,
    pub word_attn: AttnParams,
    pub turn_fw: GruParams,
    pub turn_bw: Option<GruParams>,
    pub turn_attn: AttnParams,
    pub out_w: Array1<f64>,
    pub out_b: f64,
}

impl HanParams {
    pub fn init(cfg: &HanConfig, rng: &mut ChaCha20Rng) -> Self {
        let turn_in = cfg.turn_input_dim();
        let doc_dim = cfg.doc_dim();
        let bound = 1.0 / (doc_dim as f64).sqrt();
        HanParams {
            word_fw: GruParams::new(cfg.embedding_dim, cfg.gru_units, rng),
            word_bw: cfg
                .bidirectional
                .then(|| GruParams::new(cfg.embedding_dim, cfg.gru_units, rng)),
            word_attn: AttnParams::new(turn_in, rng),
            turn_fw: GruParams::new(turn_in, cfg.gru_units, rng),
            turn_bw: cfg
                .bidirectional
                .then(|| GruParams::new(turn_in, cfg.gru_units, rng)),
            turn_attn: AttnParams::new(doc_dim, rng),
            out_w: Array1::from_shape_fn(doc_dim, |_| rng.gen_range(-bound..bound)),
            out_b: 0.0,
        }
    }

    pub fn zeros(cfg: &HanConfig) -> Self {
        let turn_in = cfg.turn_input_dim();
        let doc_dim = cfg.doc_dim();
        HanParams {
            word_fw: GruParams::zeros(cfg.embedding_dim, cfg.gru_units),
            word_bw: cfg
                .bidirectional
                .then(|| GruParams::zeros(cfg.embedding_dim, cfg.gru_units)),
            word_attn: AttnParams::zeros(turn_in),
            turn_fw: GruParams::zeros(turn_in, cfg.gru_units),
            turn_bw: cfg
                .bidirectional
                .then(|| GruParams::zeros(turn_in, cfg.gru_units)),
            turn_attn: AttnParams::zeros(doc_dim),
            out_w: Array1::zeros(doc_dim),
            out_b: 0.0,
        }
    }

    pub fn add_scaled(&mut self, other: &HanParams, factor: f64) {
        self.word_fw.add_scaled(&other.word_fw, factor);
        if let (Some(a), Some(b)) = (self.word_bw.as_mut(), other.word_bw.as_ref()) {
            a.add_scaled(b, factor);
        }
        self.word_attn.add_scaled(&other.word_attn, factor);
        self.turn_fw.add_scaled(&other.turn_fw, factor);
        if let (Some(a), Some(b)) = (self.turn_bw.as_mut(), other.turn_bw.as_ref()) {
            a.add_scaled(b, factor);
        }
        self.turn_attn.add_scaled(&other.turn_attn, factor);
        self.out_w.scaled_add(factor, &other.out_w);
        self.out_b += factor * other.out_b;
    }

    pub fn for_each(&self, f: &mut impl FnMut(f64)) {
        self.word_fw.for_each(f);
        if let Some(bw) = &self.word_bw {
            bw.for_each(f);
        }
        self.word_attn.for_each(f);
        self.turn_fw.for_each(f);
        if let Some(bw) = &self.turn_bw {
            bw.for_each(f);
        }
        self.turn_attn.for_each(f);
        self.out_w.iter().for_each(|&v| f(v));
        f(self.out_b);
    }

    pub fn for_each_mut(&mut self, f: &mut impl FnMut(&mut f64)) {
        self.word_fw.for_each_mut(f);
        if let Some(bw) = self.word_bw.as_mut() {
            bw.for_each_mut(f);
        }
        self.word_attn.for_each_mut(f);
        self.turn_fw.for_each_mut(f);
        if let Some(bw) = self.turn_bw.as_mut() {
            bw.for_each_mut(f);
        }
        self.turn_attn.for_each_mut(f);
        self.out_w.iter_mut().for_each(|v| f(v));
        f(&mut self.out_b);
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.for_each(&mut |v| out.push(v));
        out
    }

    pub fn assign_from_flat(&mut self, flat: &[f64]) -> Result<()> {
        let mut idx = 0usize;
        let mut overflow = false;
        self.for_each_mut(&mut |v| {
            if idx < flat.len() {
                *v = flat[idx];
            } else {
                overflow = true;
            }
            idx += 1;
        });
        if overflow || idx != flat.len() {
            return Err(Error::Model(format!(
                "parameter count mismatch: expected {idx}, got {}",
                flat.len()
            )));
        }
        Ok(())
    }

    pub fn count(&self) -> usize {
        let mut n = 0usize;
        self.for_each(&mut |_| n += 1);
        n
    }

    pub fn sum_sq(&self) -> f64 {
        let mut total = 0.0;
        self.for_each(&mut |v| total += v * v);
        total
    }
}

#[derive(Debug, Clone)]
pub struct HanModel {
    pub config: HanConfig,
    pub params: HanParams,
}

/// One narrative turn with frozen embeddings already looked up.
#[derive(Debug, Clone)]
pub struct EncodedTurn {
    pub kind: NarrativeKind,
    pub tokens: Vec<String>,
    pub vectors: Vec<Array1<f64>>,
}

#[derive(Debug, Clone, Default)]
pub struct EncodedDoc {
    pub turns: Vec<EncodedTurn>,
}

pub fn encode(
    doc: &NarrativeDocument,
    table: &EmbeddingTable,
    cfg: &HanConfig,
) -> Result<EncodedDoc> {
    if table.dimension != cfg.embedding_dim {
        return Err(Error::Config(format!(
            "embedding table dimension {} does not match configured {}",
            table.dimension, cfg.embedding_dim
        )));
    }
    let mut turns = Vec::new();
    for turn in &doc.turns {
        if turns.len() >= cfg.max_turns {
            break;
        }
        let mut tokens = crate::corpus::tokenize(&turn.text);
        if tokens.is_empty() {
            continue;
        }
        tokens.truncate(cfg.max_words);
        let vectors = tokens
            .iter()
            .map(|w| Array1::from(table.lookup(w)))
            .collect();
        turns.push(EncodedTurn {
            kind: turn.kind,
            tokens,
            vectors,
        });
    }
    Ok(EncodedDoc { turns })
}

/// Attention weights from one forward pass; turn weights sum to 1 and each
/// turn's word weights sum to 1.
#[derive(Debug, Clone, Default)]
pub struct AttentionTrace {
    pub turn_weights: Vec<f64>,
    pub word_weights: Vec<Vec<f64>>,
}

struct DropoutMasks {
    word_in: Array1<f64>,
    word_rec: Array1<f64>,
    turn_in: Array1<f64>,
    turn_rec: Array1<f64>,
}

fn sample_mask(dim: usize, drop: f64, rng: &mut ChaCha20Rng) -> Array1<f64> {
    if drop == 0.0 {
        return Array1::ones(dim);
    }
    let keep = 1.0 - drop;
    Array1::from_shape_fn(dim, |_| {
        if rng.gen::<f64>() < keep {
            1.0 / keep
        } else {
            0.0
        }
    })
}

impl DropoutMasks {
    fn sample(cfg: &HanConfig, rng: &mut ChaCha20Rng) -> Self {
        DropoutMasks {
            word_in: sample_mask(cfg.embedding_dim, cfg.gru_dropout, rng),
            word_rec: sample_mask(cfg.gru_units, cfg.recurrent_dropout, rng),
            turn_in: sample_mask(cfg.turn_input_dim(), cfg.gru_dropout, rng),
            turn_rec: sample_mask(cfg.gru_units, cfg.recurrent_dropout, rng),
        }
    }
}

struct TurnCache {
    cache_fw: GruCache,
    cache_bw: Option<GruCache>,
    word_hs: Vec<Array1<f64>>,
    attn: attention::AttnCache,
}

struct DocCache {
    turns: Vec<TurnCache>,
    turn_cache_fw: GruCache,
    turn_cache_bw: Option<GruCache>,
    turn_hs: Vec<Array1<f64>>,
    doc_attn: attention::AttnCache,
    doc_vec: Array1<f64>,
}

/// Run a (possibly bidirectional) encoder level over a sequence, returning
/// per-step outputs (concatenated when bidirectional).
fn encode_sequence(
    fw: &GruParams,
    bw: Option<&GruParams>,
    inputs: &[Array1<f64>],
    in_mask: Option<&Array1<f64>>,
    rec_mask: Option<&Array1<f64>>,
) -> (GruCache, Option<GruCache>, Vec<Array1<f64>>) {
    let cache_fw = gru_forward(fw, inputs, in_mask, rec_mask);
    match bw {
        None => {
            let hs = cache_fw.hs.clone();
            (cache_fw, None, hs)
        }
        Some(bw) => {
            let reversed: Vec<Array1<f64>> = inputs.iter().rev().cloned().collect();
            let cache_bw = gru_forward(bw, &reversed, in_mask, rec_mask);
            let n = inputs.len();
            let hs = (0..n)
                .map(|i| {
                    let f = &cache_fw.hs[i];
                    let b = &cache_bw.hs[n - 1 - i];
                    Array1::from_iter(f.iter().chain(b.iter()).cloned())
                })
                .collect();
            (cache_fw, Some(cache_bw), hs)
        }
    }
}

fn forward_inner(
    params: &HanParams,
    doc: &EncodedDoc,
    masks: Option<&DropoutMasks>,
) -> (f64, AttentionTrace, Option<DocCache>) {
    if doc.turns.is_empty() {
        return (params.out_b, AttentionTrace::default(), None);
    }
    let (word_in, word_rec, turn_in, turn_rec) = match masks {
        Some(m) => (
            Some(&m.word_in),
            Some(&m.word_rec),
            Some(&m.turn_in),
            Some(&m.turn_rec),
        ),
        None => (None, None, None, None),
    };

    let mut turn_caches = Vec::with_capacity(doc.turns.len());
    let mut turn_vectors = Vec::with_capacity(doc.turns.len());
    let mut word_weights = Vec::with_capacity(doc.turns.len());
    for turn in &doc.turns {
        let (cache_fw, cache_bw, word_hs) = encode_sequence(
            &params.word_fw,
            params.word_bw.as_ref(),
            &turn.vectors,
            word_in,
            word_rec,
        );
        let (vec, attn) = attn_forward(&params.word_attn, &word_hs);
        word_weights.push(attn.alphas.clone());
        turn_vectors.push(vec);
        turn_caches.push(TurnCache {
            cache_fw,
            cache_bw,
            word_hs,
            attn,
        });
    }

    let (turn_cache_fw, turn_cache_bw, turn_hs) = encode_sequence(
        &params.turn_fw,
        params.turn_bw.as_ref(),
        &turn_vectors,
        turn_in,
        turn_rec,
    );
    let (doc_vec, doc_attn) = attn_forward(&params.turn_attn, &turn_hs);
    let score = params.out_w.dot(&doc_vec) + params.out_b;
    let trace = AttentionTrace {
        turn_weights: doc_attn.alphas.clone(),
        word_weights,
    };
    let cache = DocCache {
        turns: turn_caches,
        turn_cache_fw,
        turn_cache_bw,
        turn_hs,
        doc_attn,
        doc_vec,
    };
    (score, trace, Some(cache))
}

/// Raw (unclipped) score plus attention weights; no dropout.
pub fn forward(model: &HanModel, doc: &EncodedDoc) -> (f64, AttentionTrace) {
    let (score, trace, _) = forward_inner(&model.params, doc, None);
    (score, trace)
}

pub fn clip_prediction(raw: f64, lo: f64, hi: f64) -> f64 {
    raw.clamp(lo, hi)
}

/// Clipped prediction for a document.
pub fn predict(model: &HanModel, doc: &EncodedDoc) -> (f64, AttentionTrace) {
    let (raw, trace) = forward(model, doc);
    (
        clip_prediction(raw, crate::corpus::PHQ_MIN as f64, crate::corpus::PHQ_MAX as f64),
        trace,
    )
}

/// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(score).
fn backward_inner(
    params: &HanParams,
    doc: &EncodedDoc,
    cache: &DocCache,
    dscore: f64,
    masks: Option<&DropoutMasks>,
    grad: &mut HanParams,
) {
    let units = params.turn_fw.hidden();
    let (word_in, word_rec, turn_in, turn_rec) = match masks {
        Some(m) => (
            Some(&m.word_in),
            Some(&m.word_rec),
            Some(&m.turn_in),
            Some(&m.turn_rec),
        ),
        None => (None, None, None, None),
    };

    grad.out_w.scaled_add(dscore, &cache.doc_vec);
    grad.out_b += dscore;
    let ddoc = dscore * &params.out_w;

    let dturn_hs = attn_backward(
        &params.turn_attn,
        &cache.turn_hs,
        &cache.doc_attn,
        &ddoc,
        &mut grad.turn_attn,
    );

    let n_turns = doc.turns.len();
    let dturn_vecs: Vec<Array1<f64>> = match (&params.turn_bw, &cache.turn_cache_bw) {
        (Some(bw), Some(cache_bw)) => {
            let mut dh_fw = Vec::with_capacity(n_turns);
            let mut dh_bw = vec![Array1::zeros(units); n_turns];
            for (i, dh) in dturn_hs.iter().enumerate() {
                dh_fw.push(dh.slice(ndarray::s![..units]).to_owned());
                dh_bw[n_turns - 1 - i] = dh.slice(ndarray::s![units..]).to_owned();
            }
            let dx_fw = gru_backward(
                &params.turn_fw,
                &cache.turn_cache_fw,
                &dh_fw,
                turn_in,
                turn_rec,
                &mut grad.turn_fw,
            );
            let dx_bw = gru_backward(
                bw,
                cache_bw,
                &dh_bw,
                turn_in,
                turn_rec,
                grad.turn_bw.as_mut().expect("grad shape matches params"),
            );
            (0..n_turns)
                .map(|i| &dx_fw[i] + &dx_bw[n_turns - 1 - i])
                .collect()
        }
        _ => gru_backward(
            &params.turn_fw,
            &cache.turn_cache_fw,
            &dturn_hs,
            turn_in,
            turn_rec,
            &mut grad.turn_fw,
        ),
    };

    for (ti, turn_cache) in cache.turns.iter().enumerate() {
        let dword_hs = attn_backward(
            &params.word_attn,
            &turn_cache.word_hs,
            &turn_cache.attn,
            &dturn_vecs[ti],
            &mut grad.word_attn,
        );
        match (&params.word_bw, &turn_cache.cache_bw) {
            (Some(bw), Some(cache_bw)) => {
                let n = dword_hs.len();
                let mut dh_fw = Vec::with_capacity(n);
                let mut dh_bw = vec![Array1::zeros(units); n];
                for (i, dh) in dword_hs.iter().enumerate() {
                    dh_fw.push(dh.slice(ndarray::s![..units]).to_owned());
                    dh_bw[n - 1 - i] = dh.slice(ndarray::s![units..]).to_owned();
                }
                gru_backward(
                    &params.word_fw,
                    &turn_cache.cache_fw,
                    &dh_fw,
                    word_in,
                    word_rec,
                    &mut grad.word_fw,
                );
                gru_backward(
                    bw,
                    cache_bw,
                    &dh_bw,
                    word_in,
                    word_rec,
                    grad.word_bw.as_mut().expect("grad shape matches params"),
                );
            }
            _ => {
                gru_backward(
                    &params.word_fw,
                    &turn_cache.cache_fw,
                    &dword_hs,
                    word_in,
                    word_rec,
                    &mut grad.word_fw,
                );
            }
        }
    }
}

/// Per-sample loss used by the finite-difference check:
/// (score - target)^2 + l2 * ||params||^2.
pub fn sample_loss(params: &HanParams, cfg: &HanConfig, doc: &EncodedDoc, target: f64) -> f64 {
    let (score, _, _) = forward_inner(params, doc, None);
    let err = score - target;
    err * err + cfg.l2 * params.sum_sq()
}

/// Analytic gradient of [`sample_loss`].
pub fn sample_grad(params: &HanParams, cfg: &HanConfig, doc: &EncodedDoc, target: f64) -> HanParams {
    let mut grad = HanParams::zeros(cfg);
    let (score, _, cache) = forward_inner(params, doc, None);
    let dscore = 2.0 * (score - target);
    if let Some(cache) = cache {
        backward_inner(params, doc, &cache, dscore, None, &mut grad);
    } else {
        grad.out_b += dscore;
    }
    if cfg.l2 > 0.0 {
        grad.add_scaled(params, 2.0 * cfg.l2);
    }
    grad
}

/// Compares analytic gradients against central finite differences on
/// `probes` randomly chosen coordinates; returns the worst relative error
/// |a - n| / max(floor, |a| + |n|). The floor is epsilon * (1 + |loss|):
/// central differences of a loss L carry roundoff of order |L| * machine
/// epsilon / h, so coordinates whose true gradient sits below that noise
/// cannot be measured and must not dominate the check.
pub fn gradient_check(
    cfg: &HanConfig,
    doc: &EncodedDoc,
    target: f64,
    epsilon: f64,
    probes: usize,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let params = HanParams::init(cfg, &mut rng);
    let analytic = sample_grad(&params, cfg, doc, target).flatten();
    let flat = params.flatten();
    let floor = epsilon * (1.0 + sample_loss(&params, cfg, doc, target).abs());
    let mut scratch = HanParams::zeros(cfg);
    let mut worst = 0.0f64;
    for _ in 0..probes {
        let i = rng.gen_range(0..flat.len());
        let mut plus = flat.clone();
        plus[i] += epsilon;
        scratch.assign_from_flat(&plus).expect("same shape");
        let lp = sample_loss(&scratch, cfg, doc, target);
        let mut minus = flat.clone();
        minus[i] -= epsilon;
        scratch.assign_from_flat(&minus).expect("same shape");
        let lm = sample_loss(&scratch, cfg, doc, target);
        let numeric = (lp - lm) / (2.0 * epsilon);
        let a = analytic[i];
        let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(floor);
        worst = worst.max(rel);
    }
    worst
}

fn epoch_rng(seed: u64, epoch: usize) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(
        seed.wrapping_add((epoch as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)),
    )
}

/// Mini-batch SGD with mean-squared-error loss and L2 penalty. Returns the
/// trained model and one loss value per epoch; a non-finite loss aborts.
pub fn train(
    cfg: &HanConfig,
    docs: &[EncodedDoc],
    targets: &[f64],
) -> Result<(HanModel, Vec<f64>)> {
    cfg.validate()?;
    if docs.len() != targets.len() {
        return Err(Error::InvalidInput(format!(
            "{} documents but {} targets",
            docs.len(),
            targets.len()
        )));
    }
    if docs.is_empty() {
        return Err(Error::InvalidInput("no training documents".into()));
    }
    let mut init_rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let mut params = HanParams::init(cfg, &mut init_rng);
    let mut dropout_rng = ChaCha20Rng::seed_from_u64(cfg.seed ^ 0xd20f_00d5_eed5_eed5);
    let use_dropout = cfg.gru_dropout > 0.0 || cfg.recurrent_dropout > 0.0;
    let n = docs.len();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 0..cfg.epochs {
        let mut shuffle_rng = epoch_rng(cfg.seed, epoch);
        order.shuffle(&mut shuffle_rng);
        let mut sse = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let mut grad = HanParams::zeros(cfg);
            let scale = 1.0 / chunk.len() as f64;
            for &idx in chunk {
                let masks = use_dropout.then(|| DropoutMasks::sample(cfg, &mut dropout_rng));
                let (score, _, cache) = forward_inner(&params, &docs[idx], masks.as_ref());
                let err = score - targets[idx];
                sse += err * err;
                let dscore = 2.0 * err * scale;
                if let Some(cache) = cache {
                    backward_inner(&params, &docs[idx], &cache, dscore, masks.as_ref(), &mut grad);
                } else {
                    grad.out_b += dscore;
                }
            }
            if cfg.l2 > 0.0 {
                grad.add_scaled(&params, 2.0 * cfg.l2);
            }
            params.add_scaled(&grad, -cfg.learning_rate);
        }
        let loss = sse / n as f64 + cfg.l2 * params.sum_sq();
        if !loss.is_finite() {
            return Err(Error::Diverged(format!(
                "non-finite loss at epoch {epoch}; reduce learning_rate or increase l2"
            )));
        }
        history.push(loss);
    }
    Ok((
        HanModel {
            config: cfg.clone(),
            params,
        },
        history,
    ))
}

/// Sampling ranges for hyperparameter search. Scalar ranges are inclusive
/// of the low end; learning_rate and l2 are sampled log-uniformly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HanSearchSpace {
    pub learning_rate: (f64, f64),
    pub gru_units: Vec<usize>,
    pub gru_dropout: (f64, f64),
    pub recurrent_dropout: (f64, f64),
    pub l2: (f64, f64),
}

impl Default for HanSearchSpace {
    fn default() -> Self {
        HanSearchSpace {
            learning_rate: (1e-4, 1e-1),
            gru_units: vec![16, 32, 64, 128],
            gru_dropout: (0.0, 0.5),
            recurrent_dropout: (0.0, 0.5),
            l2: (1e-6, 1e-2),
        }
    }
}

fn log_uniform(range: (f64, f64), rng: &mut ChaCha20Rng) -> f64 {
    let (lo, hi) = range;
    if lo == hi {
        return lo;
    }
    (rng.gen_range(lo.ln()..hi.ln())).exp()
}

fn uniform(range: (f64, f64), rng: &mut ChaCha20Rng) -> f64 {
    let (lo, hi) = range;
    if lo == hi {
        return lo;
    }
    rng.gen_range(lo..hi)
}

#[derive(Debug, Clone)]
pub struct SearchTrial {
    pub config: HanConfig,
    pub score: f64,
}

/// Random hyperparameter search scored by pooled k-fold concordance.
/// Ties keep the earlier trial.
pub fn random_search(
    base: &HanConfig,
    space: &HanSearchSpace,
    budget: usize,
    k: usize,
    seed: u64,
    docs: &[EncodedDoc],
    targets: &[f64],
) -> Result<(HanConfig, Vec<SearchTrial>)> {
    if budget == 0 {
        return Err(Error::InvalidInput("search budget must be positive".into()));
    }
    if space.gru_units.is_empty() {
        return Err(Error::Config("gru_units choices must be non-empty".into()));
    }
    let ids: Vec<String> = (0..docs.len()).map(|i| i.to_string()).collect();
    let folds = crate::eval::kfold_split(&ids, k, seed)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut trials = Vec::with_capacity(budget);
    let mut best: Option<usize> = None;
    for _ in 0..budget {
        let mut cfg = base.clone();
        cfg.learning_rate = log_uniform(space.learning_rate, &mut rng);
        cfg.gru_units = space.gru_units[rng.gen_range(0..space.gru_units.len())];
        cfg.gru_dropout = uniform(space.gru_dropout, &mut rng);
        cfg.recurrent_dropout = uniform(space.recurrent_dropout, &mut rng);
        cfg.l2 = log_uniform(space.l2, &mut rng);

        let mut truths = Vec::with_capacity(docs.len());
        let mut preds = Vec::with_capacity(docs.len());
        for fold in 0..k {
            let train_idx: Vec<usize> = (0..docs.len()).filter(|i| folds[*i] != fold).collect();
            let test_idx: Vec<usize> = (0..docs.len()).filter(|i| folds[*i] == fold).collect();
            let train_docs: Vec<EncodedDoc> =
                train_idx.iter().map(|&i| docs[i].clone()).collect();
            let train_y: Vec<f64> = train_idx.iter().map(|&i| targets[i]).collect();
            let (model, _) = train(&cfg, &train_docs, &train_y)?;
            for &i in &test_idx {
                truths.push(targets[i]);
                preds.push(predict(&model, &docs[i]).0);
            }
        }
        let score = crate::eval::ccc(&truths, &preds)?;
        let idx = trials.len();
        trials.push(SearchTrial {
            config: cfg,
            score,
        });
        if best.map_or(true, |b| score > trials[b].score) {
            best = Some(idx);
        }
    }
    let best = best.expect("budget > 0");
    Ok((trials[best].config.clone(), trials))
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"HANCKP\x01\n";

/// Binary checkpoint: magic, JSON config header, then the parameter vector
/// as little-endian f64. Loading reproduces the parameters bit for bit.
pub fn save_checkpoint(model: &HanModel, path: &Path) -> Result<()> {
    let header =
        serde_json::to_vec(&model.config).map_err(|e| Error::Model(e.to_string()))?;
    let flat = model.params.flatten();
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut write = |bytes: &[u8]| file.write_all(bytes).map_err(|e| Error::io(path, e));
    write(CHECKPOINT_MAGIC)?;
    write(&(header.len() as u32).to_le_bytes())?;
    write(&header)?;
    write(&(flat.len() as u64).to_le_bytes())?;
    for v in &flat {
        write(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<HanModel> {
    let mut file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut buf = Vec::new();
    file.read_to_end(&mut buf).map_err(|e| Error::io(path, e))?;
    let fail = |msg: &str| Error::Model(format!("checkpoint {}: {msg}", path.display()));
    if buf.len() < 12 || &buf[..8] != CHECKPOINT_MAGIC {
        return Err(fail("bad magic"));
    }
    let header_len = u32::from_le_bytes(buf[8..12].try_into().unwrap()) as usize;
    let header_end = 12 + header_len;
    if buf.len() < header_end + 8 {
        return Err(fail("truncated header"));
    }
    let config: HanConfig = serde_json::from_slice(&buf[12..header_end])
        .map_err(|e| fail(&format!("bad config header: {e}")))?;
    let count =
        u64::from_le_bytes(buf[header_end..header_end + 8].try_into().unwrap()) as usize;
    let body = &buf[header_end + 8..];
    if body.len() != count * 8 {
        return Err(fail("parameter blob length mismatch"));
    }
    let flat: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let mut params = HanParams::zeros(&config);
    params.assign_from_flat(&flat)?;
    Ok(HanModel { config, params })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::narrative::NarrativeTurn;

    fn tiny_config() -> HanConfig {
        HanConfig {
            embedding_dim: 5,
            gru_units: 4,
            learning_rate: 0.01,
            epochs: 30,
            batch_size: 2,
            seed: 7,
            ..HanConfig::default()
        }
    }

    fn doc_from(texts: &[&str], table: &EmbeddingTable, cfg: &HanConfig) -> EncodedDoc {
        let doc = NarrativeDocument {
            turns: texts
                .iter()
                .map(|t| NarrativeTurn {
                    kind: NarrativeKind::Utterance,
                    text: t.to_string(),
                })
                .collect(),
        };
        encode(&doc, table, cfg).unwrap()
    }

    fn tiny_corpus(cfg: &HanConfig) -> (Vec<EncodedDoc>, Vec<f64>) {
        let table = EmbeddingTable::hashed(cfg.embedding_dim, 11);
        let docs = vec![
            doc_from(&["i feel sad and tired", "nothing helps"], &table, cfg),
            doc_from(&["today was a good day", "we laughed a lot"], &table, cfg),
            doc_from(&["i cannot sleep at night", "everything is heavy"], &table, cfg),
            doc_from(&["the garden is blooming", "i met my friends"], &table, cfg),
        ];
        let targets = vec![18.0, 2.0, 20.0, 4.0];
        (docs, targets)
    }

    #[test]
    fn attention_weights_sum_to_one() {
        let cfg = tiny_config();
        let (docs, _) = tiny_corpus(&cfg);
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let params = HanParams::init(&cfg, &mut rng);
        let model = HanModel {
            config: cfg,
            params,
        };
        let (_, trace) = forward(&model, &docs[0]);
        let turn_sum: f64 = trace.turn_weights.iter().sum();
        assert!((turn_sum - 1.0).abs() < 1e-9);
        for ws in &trace.word_weights {
            let s: f64 = ws.iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let cfg = tiny_config();
        let (docs, _) = tiny_corpus(&cfg);
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let params = HanParams::init(&cfg, &mut rng);
        let model = HanModel {
            config: cfg,
            params,
        };
        let (a, _) = forward(&model, &docs[0]);
        let (b, _) = forward(&model, &docs[0]);
        assert_eq!(a, b);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let cfg = HanConfig {
            l2: 1e-3,
            ..tiny_config()
        };
        let (docs, targets) = tiny_corpus(&cfg);
        let worst = gradient_check(&cfg, &docs[0], targets[0], 1e-5, 60, 42);
        assert!(worst < 1e-4, "max relative error {worst}");
    }

    #[test]
    fn gradients_match_finite_differences_bidirectional() {
        let cfg = HanConfig {
            bidirectional: true,
            ..tiny_config()
        };
        let (docs, targets) = tiny_corpus(&cfg);
        let worst = gradient_check(&cfg, &docs[2], targets[2], 1e-5, 60, 9);
        assert!(worst < 1e-4, "max relative error {worst}");
    }

    #[test]
    fn zero_loss_sample_has_zero_gradients() {
        let cfg = tiny_config();
        let (docs, _) = tiny_corpus(&cfg);
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let params = HanParams::init(&cfg, &mut rng);
        let (score, _, _) = super::forward_inner(&params, &docs[0], None);
        let grad = sample_grad(&params, &cfg, &docs[0], score);
        let mut max_abs = 0.0f64;
        grad.for_each(&mut |v| max_abs = max_abs.max(v.abs()));
        assert!(max_abs < 1e-12, "gradient {max_abs} at zero loss");
    }

    #[test]
    fn sign_bug_would_be_caught() {
        // harness self-test: a flipped analytic gradient must show a large
        // relative error against the numeric one
        let cfg = tiny_config();
        let (docs, targets) = tiny_corpus(&cfg);
        let mut rng = ChaCha20Rng::seed_from_u64(21);
        let params = HanParams::init(&cfg, &mut rng);
        let analytic = sample_grad(&params, &cfg, &docs[0], targets[0]).flatten();
        let flat = params.flatten();
        // probe the largest-magnitude coordinate with the sign flipped
        let (i, _) = analytic
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
            .unwrap();
        let eps = 1e-5;
        let mut scratch = HanParams::zeros(&cfg);
        let mut plus = flat.clone();
        plus[i] += eps;
        scratch.assign_from_flat(&plus).unwrap();
        let lp = sample_loss(&scratch, &cfg, &docs[0], targets[0]);
        let mut minus = flat;
        minus[i] -= eps;
        scratch.assign_from_flat(&minus).unwrap();
        let lm = sample_loss(&scratch, &cfg, &docs[0], targets[0]);
        let numeric = (lp - lm) / (2.0 * eps);
        let buggy = -analytic[i];
        let rel = (buggy - numeric).abs() / (buggy.abs() + numeric.abs()).max(1e-8);
        assert!(rel > 1e-2, "sign flip went unnoticed: {rel}");
    }

    #[test]
    fn training_reduces_loss_and_is_reproducible() {
        let cfg = tiny_config();
        let (docs, targets) = tiny_corpus(&cfg);
        let (model_a, history_a) = train(&cfg, &docs, &targets).unwrap();
        let (model_b, history_b) = train(&cfg, &docs, &targets).unwrap();
        assert_eq!(history_a, history_b);
        assert_eq!(model_a.params, model_b.params);
        assert!(history_a.last().unwrap() < history_a.first().unwrap());
    }

    #[test]
    fn divergence_is_reported() {
        let cfg = HanConfig {
            learning_rate: 1e6,
            ..tiny_config()
        };
        let (docs, targets) = tiny_corpus(&cfg);
        match train(&cfg, &docs, &targets) {
            Err(Error::Diverged(_)) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn predictions_are_clipped() {
        assert_eq!(clip_prediction(-3.0, 0.0, 24.0), 0.0);
        assert_eq!(clip_prediction(31.5, 0.0, 24.0), 24.0);
        assert_eq!(clip_prediction(12.25, 0.0, 24.0), 12.25);
    }

    #[test]
    fn checkpoint_roundtrip_is_bitwise_identical() {
        let cfg = tiny_config();
        let (docs, targets) = tiny_corpus(&cfg);
        let (model, _) = train(&cfg, &docs, &targets).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&model, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.config, model.config);
        let a = model.params.flatten();
        let b = loaded.params.flatten();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        let (sa, _) = forward(&model, &docs[0]);
        let (sb, _) = forward(&loaded, &docs[0]);
        assert_eq!(sa.to_bits(), sb.to_bits());
    }

    #[test]
    fn corrupt_checkpoint_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ckpt");
        std::fs::write(&path, b"not a checkpoint").unwrap();
        assert!(load_checkpoint(&path).is_err());
    }

    #[test]
    fn empty_document_predicts_bias() {
        let cfg = tiny_config();
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let mut params = HanParams::init(&cfg, &mut rng);
        params.out_b = 7.5;
        let model = HanModel {
            config: cfg,
            params,
        };
        let (score, trace) = forward(&model, &EncodedDoc::default());
        assert_eq!(score, 7.5);
        assert!(trace.turn_weights.is_empty());
    }

    #[test]
    fn random_search_is_deterministic_and_within_space() {
        let cfg = HanConfig {
            epochs: 5,
            ..tiny_config()
        };
        let space = HanSearchSpace {
            learning_rate: (1e-3, 1e-2),
            gru_units: vec![3, 4],
            gru_dropout: (0.0, 0.0),
            recurrent_dropout: (0.0, 0.0),
            l2: (1e-6, 1e-4),
        };
        let (docs, targets) = tiny_corpus(&cfg);
        let (best_a, trials_a) =
            random_search(&cfg, &space, 3, 2, 17, &docs, &targets).unwrap();
        let (best_b, _) = random_search(&cfg, &space, 3, 2, 17, &docs, &targets).unwrap();
        assert_eq!(best_a, best_b);
        for t in &trials_a {
            assert!(t.config.learning_rate >= 1e-3 && t.config.learning_rate <= 1e-2);
            assert!(space.gru_units.contains(&t.config.gru_units));
        }
    }
}
