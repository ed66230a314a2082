//! Evaluation: concordance correlation coefficient, k-fold cross-validation,
//! the six-configuration ablation runner, and bootstrap significance testing
//! of CCC differences.
//!
//! All moments are population moments so the metric is bit-reproducible.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::clients::{ComprehensionClient, PersonalityClient};
use crate::corpus::{Corpus, Gender};
use crate::error::{Error, Result};
use crate::features::{
    assemble_features, train_gender_model, SessionFeatures, ACTIONS_COLS, DEMOGRAPHICS_COLS,
    PROSODY_COLS,
};
use crate::model::{ConfigData, Regressor};
use crate::narrative::{assemble_input, AblationConfig, NarrativeDocument, Standardizer};

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

fn moments(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var)
}

fn covariance(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / n
}

fn check_lengths(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::InvalidInput(format!(
            "vector length mismatch: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::InvalidInput("need at least 2 points".into()));
    }
    Ok(())
}

/// Pearson correlation; defined as 0 when either vector is constant.
pub fn pcc(x: &[f64], y: &[f64]) -> Result<f64> {
    check_lengths(x, y)?;
    let (_, vx) = moments(x);
    let (_, vy) = moments(y);
    if vx == 0.0 || vy == 0.0 {
        return Ok(0.0);
    }
    Ok(covariance(x, y) / (vx.sqrt() * vy.sqrt()))
}

/// Concordance correlation coefficient. The numerator is computed as twice
/// the covariance, which equals 2 r sigma_x sigma_y when both deviations are
/// positive and stays well-defined when one of them is zero.
pub fn ccc(truth: &[f64], prediction: &[f64]) -> Result<f64> {
    check_lengths(truth, prediction)?;
    let (mx, vx) = moments(truth);
    let (my, vy) = moments(prediction);
    let denom = vx + vy + (mx - my) * (mx - my);
    if denom == 0.0 {
        // both vectors constant and equal
        return Ok(0.0);
    }
    Ok(2.0 * covariance(truth, prediction) / denom)
}

// ---------------------------------------------------------------------------
// Folds
// ---------------------------------------------------------------------------

/// Seeded shuffle then round-robin assignment; fold sizes differ by at most
/// one. Returns the fold index per id, parallel to `ids`.
pub fn kfold_split(ids: &[String], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 || k > ids.len() {
        return Err(Error::InvalidInput(format!(
            "k = {k} invalid for {} sessions",
            ids.len()
        )));
    }
    let mut order: Vec<usize> = (0..ids.len()).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    // Fisher-Yates
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    let mut assignment = vec![0usize; ids.len()];
    for (pos, &idx) in order.iter().enumerate() {
        assignment[idx] = pos % k;
    }
    Ok(assignment)
}

// ---------------------------------------------------------------------------
// Prediction sets and bootstrap
// ---------------------------------------------------------------------------

/// Per-session (truth, prediction) pairs keyed by session id.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PredictionSet {
    pub entries: BTreeMap<String, (f64, f64)>,
}

impl PredictionSet {
    pub fn insert(&mut self, id: impl Into<String>, truth: f64, prediction: f64) {
        self.entries.insert(id.into(), (truth, prediction));
    }

    pub fn truths_and_predictions(&self) -> (Vec<f64>, Vec<f64>) {
        let mut truths = Vec::with_capacity(self.entries.len());
        let mut preds = Vec::with_capacity(self.entries.len());
        for (t, p) in self.entries.values() {
            truths.push(*t);
            preds.push(*p);
        }
        (truths, preds)
    }

    pub fn ccc(&self) -> Result<f64> {
        let (t, p) = self.truths_and_predictions();
        ccc(&t, &p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapInterval {
    pub level: f64,
    pub low: f64,
    pub high: f64,
    pub significant: bool,
}

/// Paired bootstrap over sessions: resamples ids with replacement, computes
/// CCC(A) - CCC(B) per resample and reports two-sided percentile intervals.
pub fn bootstrap_ccc_diff(
    preds_a: &PredictionSet,
    preds_b: &PredictionSet,
    n_resamples: usize,
    levels: &[f64],
    seed: u64,
) -> Result<Vec<BootstrapInterval>> {
    let ids: Vec<&String> = preds_a.entries.keys().collect();
    if preds_b.entries.len() != ids.len()
        || !ids.iter().all(|id| preds_b.entries.contains_key(*id))
    {
        return Err(Error::InvalidInput(
            "prediction sets do not share session keys".into(),
        ));
    }
    for id in &ids {
        let ta = preds_a.entries[*id].0;
        let tb = preds_b.entries[*id].0;
        if ta != tb {
            return Err(Error::InvalidInput(format!(
                "truth mismatch for session {id}"
            )));
        }
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut diffs = Vec::with_capacity(n_resamples);
    let n = ids.len();
    let mut truths = vec![0.0; n];
    let mut pa = vec![0.0; n];
    let mut pb = vec![0.0; n];
    for _ in 0..n_resamples {
        for slot in 0..n {
            let pick = ids[rng.gen_range(0..n)];
            let (t, a) = preds_a.entries[pick];
            let (_, b) = preds_b.entries[pick];
            truths[slot] = t;
            pa[slot] = a;
            pb[slot] = b;
        }
        let ccc_a = ccc(&truths, &pa)?;
        let ccc_b = ccc(&truths, &pb)?;
        diffs.push(ccc_a - ccc_b);
    }
    diffs.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let percentile = |p: f64| -> f64 {
        // linear interpolation between order statistics
        let rank = p * (diffs.len() - 1) as f64;
        let lo = rank.floor() as usize;
        let hi = rank.ceil() as usize;
        let frac = rank - lo as f64;
        diffs[lo] * (1.0 - frac) + diffs[hi] * frac
    };

    Ok(levels
        .iter()
        .map(|&level| {
            let alpha = (1.0 - level) / 2.0;
            let low = percentile(alpha);
            let high = percentile(1.0 - alpha);
            BootstrapInterval {
                level,
                low,
                high,
                significant: low > 0.0 || high < 0.0,
            }
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Ablation report
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub fold_cccs: Vec<f64>,
    /// Mean of fold CCCs (the headline figure, std in brackets in the table).
    pub mean_ccc: f64,
    pub std_ccc: f64,
    /// CCC of the pooled out-of-fold predictions.
    pub pooled_ccc: f64,
    pub predictions: PredictionSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellEntry {
    pub model: String,
    pub config: AblationConfig,
    /// `None` renders as "N/A" (configurations the model does not consume).
    pub result: Option<CellResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub cell_a: String,
    pub cell_b: String,
    pub intervals: Vec<BootstrapInterval>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub configs: Vec<AblationConfig>,
    pub models: Vec<String>,
    pub cells: Vec<CellEntry>,
    pub comparisons: Vec<Comparison>,
}

impl EvalReport {
    pub fn cell(&self, model: &str, config: AblationConfig) -> Option<&CellEntry> {
        self.cells
            .iter()
            .find(|c| c.model == model && c.config == config)
    }

    /// Plain-text table with one row per configuration and one column per
    /// model, mean CCC with the fold standard deviation in brackets.
    pub fn to_table(&self) -> String {
        let mut out = String::from("Family");
        for model in &self.models {
            out.push_str(&format!("\t{model} CCC"));
        }
        out.push('\n');
        for &config in &self.configs {
            out.push_str(&config.to_string());
            for model in &self.models {
                let text = match self.cell(model, config).and_then(|c| c.result.as_ref()) {
                    Some(r) => format!("{:.3} ({:.3})", r.mean_ccc, r.std_ccc),
                    None => "N/A".to_string(),
                };
                out.push_str(&format!("\t{text}"));
            }
            out.push('\n');
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Ablation runner
// ---------------------------------------------------------------------------

pub struct AblationSettings {
    pub configs: Vec<AblationConfig>,
    pub k: usize,
    pub seed: u64,
    pub bootstrap_resamples: usize,
    pub bootstrap_levels: Vec<f64>,
}

impl Default for AblationSettings {
    fn default() -> Self {
        AblationSettings {
            configs: crate::narrative::ALL_CONFIGS.to_vec(),
            k: 5,
            seed: 1,
            bootstrap_resamples: 1000,
            bootstrap_levels: vec![0.90, 0.95],
        }
    }
}

/// Columns of the full design matrix that belong to one configuration.
pub fn config_columns(config: AblationConfig) -> Vec<usize> {
    let mut cols: Vec<usize> = DEMOGRAPHICS_COLS.collect();
    if config.includes_actions() {
        cols.extend(ACTIONS_COLS);
    }
    if config.includes_prosody() {
        cols.extend(PROSODY_COLS);
    }
    cols
}

pub struct FoldContext {
    pub features: Vec<SessionFeatures>,
    pub standardizer: Standardizer,
}

/// Fits the per-fold derived artifacts (gender model, personality-backed
/// features, standardizer) on the given training indices. Passing all
/// indices yields the whole-corpus context used outside cross-validation.
pub fn fit_fold_context(
    corpus: &Corpus,
    train_idx: &[usize],
    personality: &dyn PersonalityClient,
) -> Result<FoldContext> {
    // gender model from training-fold sessions carrying a gender label
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for &i in train_idx {
        let session = &corpus.sessions[i];
        if let Some(gender) = session.gender {
            for row in &session.egemaps {
                rows.push(row.clone());
                labels.push(gender);
            }
        }
    }
    let gender_model = if labels.contains(&Gender::Female) && labels.contains(&Gender::Male) {
        Some(train_gender_model(&rows, &labels)?)
    } else {
        None
    };

    let features: Vec<SessionFeatures> = corpus
        .sessions
        .iter()
        .map(|s| assemble_features(s, gender_model.as_ref(), personality))
        .collect::<Result<_>>()?;
    let train_features: Vec<SessionFeatures> =
        train_idx.iter().map(|&i| features[i].clone()).collect();
    let standardizer = Standardizer::fit(&train_features)?;
    Ok(FoldContext {
        features,
        standardizer,
    })
}

/// Runs the full cross-validated ablation: per fold, every fitted artifact
/// (gender model, standardizer, regressors) sees the training fold only.
pub fn run_ablation(
    corpus: &Corpus,
    personality: &dyn PersonalityClient,
    comprehension: &dyn ComprehensionClient,
    models: &[Box<dyn Regressor>],
    settings: &AblationSettings,
) -> Result<EvalReport> {
    let n = corpus.sessions.len();
    let labels: Vec<f64> = corpus
        .sessions
        .iter()
        .map(|s| {
            s.phq
                .map(|v| v as f64)
                .ok_or_else(|| Error::Session {
                    session: s.id.clone(),
                    message: "missing PHQ label".into(),
                })
        })
        .collect::<Result<_>>()?;
    let ids: Vec<String> = corpus.sessions.iter().map(|s| s.id.clone()).collect();

    let folds = match &corpus.split_labels {
        Some(assignment) => assignment.clone(),
        None => kfold_split(&ids, settings.k, settings.seed)?,
    };
    let k = folds.iter().max().copied().unwrap_or(0) + 1;

    let mut cells: Vec<CellEntry> = Vec::new();
    let mut accumulators: BTreeMap<(String, AblationConfig), CellResult> = BTreeMap::new();

    for fold in 0..k {
        let train_idx: Vec<usize> = (0..n).filter(|&i| folds[i] != fold).collect();
        let test_idx: Vec<usize> = (0..n).filter(|&i| folds[i] == fold).collect();
        if train_idx.iter().any(|i| test_idx.contains(i)) {
            return Err(Error::Model("fold leakage: train/test ids overlap".into()));
        }
        if test_idx.is_empty() {
            continue;
        }
        let context =
            fit_fold_context(corpus, &train_idx, personality).map_err(|e| Error::Model(
                format!("fold {fold}: {e}"),
            ))?;

        for &config in &settings.configs {
            // shared per-config inputs
            let numeric: Option<Vec<Vec<f64>>> = if config.is_numeric() {
                let cols = config_columns(config);
                Some(
                    context
                        .features
                        .iter()
                        .map(|f| {
                            let v = f.to_vector();
                            cols.iter().map(|&c| v[c]).collect()
                        })
                        .collect(),
                )
            } else {
                None
            };
            let documents: Vec<NarrativeDocument> = corpus
                .sessions
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    assemble_input(s, config, &context.features[i], &context.standardizer, comprehension)
                })
                .collect();
            let feature_names: Option<Vec<String>> = numeric.as_ref().map(|_| {
                let all = crate::features::feature_names();
                config_columns(config).iter().map(|&c| all[c].clone()).collect()
            });
            let data = ConfigData {
                numeric,
                numeric_names: feature_names,
                documents: Some(documents),
            };

            for model in models {
                if !model.supports(config) {
                    continue;
                }
                let fold_seed = settings
                    .seed
                    .wrapping_mul(0x9e37_79b9_7f4a_7c15)
                    .wrapping_add((fold as u64) << 8)
                    .wrapping_add(config as u64);
                let predictions = model
                    .fit_predict(&data, &labels, &train_idx, &test_idx, fold_seed)
                    .map_err(|e| Error::Model(format!(
                        "{} / {config} / fold {fold}: {e}",
                        model.name()
                    )))?;
                let entry = accumulators
                    .entry((model.name().to_string(), config))
                    .or_insert_with(|| CellResult {
                        fold_cccs: Vec::new(),
                        mean_ccc: 0.0,
                        std_ccc: 0.0,
                        pooled_ccc: 0.0,
                        predictions: PredictionSet::default(),
                    });
                let mut fold_truth = Vec::new();
                let mut fold_pred = Vec::new();
                for (slot, &i) in test_idx.iter().enumerate() {
                    entry
                        .predictions
                        .insert(ids[i].clone(), labels[i], predictions[slot]);
                    fold_truth.push(labels[i]);
                    fold_pred.push(predictions[slot]);
                }
                if fold_truth.len() >= 2 {
                    entry.fold_cccs.push(ccc(&fold_truth, &fold_pred)?);
                }
            }
        }
    }

    let model_names: Vec<String> = models.iter().map(|m| m.name().to_string()).collect();
    for &config in &settings.configs {
        for model in models {
            let key = (model.name().to_string(), config);
            let result = accumulators.remove(&key).map(|mut cell| {
                let (mean, var) = moments(&cell.fold_cccs);
                cell.mean_ccc = mean;
                cell.std_ccc = var.sqrt();
                cell.pooled_ccc = cell.predictions.ccc().unwrap_or(0.0);
                cell
            });
            cells.push(CellEntry {
                model: model.name().to_string(),
                config,
                result,
            });
        }
    }

    // pairwise bootstrap comparisons between all populated cells
    let populated: Vec<&CellEntry> = cells.iter().filter(|c| c.result.is_some()).collect();
    let mut comparisons = Vec::new();
    for (i, a) in populated.iter().enumerate() {
        for b in populated.iter().skip(i + 1) {
            let pa = &a.result.as_ref().unwrap().predictions;
            let pb = &b.result.as_ref().unwrap().predictions;
            let intervals = bootstrap_ccc_diff(
                pa,
                pb,
                settings.bootstrap_resamples,
                &settings.bootstrap_levels,
                settings.seed,
            )?;
            comparisons.push(Comparison {
                cell_a: format!("{}-{}", a.model, a.config),
                cell_b: format!("{}-{}", b.model, b.config),
                intervals,
            });
        }
    }

    Ok(EvalReport {
        configs: settings.configs.clone(),
        models: model_names,
        cells,
        comparisons,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pcc_examples() {
        assert!((pcc(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((pcc(&[1.0, 2.0, 3.0], &[-1.0, -2.0, -3.0]).unwrap() + 1.0).abs() < 1e-12);
        let r = pcc(&[0.0, 0.0, 1.0, 1.0], &[0.0, 1.0, 0.0, 1.0]).unwrap();
        assert!(r.abs() < 1e-12);
        assert!(pcc(&[1.0], &[1.0]).is_err());
        assert!(pcc(&[1.0, 2.0], &[1.0, 2.0, 3.0]).is_err());
        // constant vector defined as 0
        assert_eq!(pcc(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
    }

    #[test]
    fn ccc_examples() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert!((ccc(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        // hand evaluation with population moments: 2*2.5 / (1.25 + 5 + 6.25)
        let y = [2.0, 4.0, 6.0, 8.0];
        assert!((ccc(&x, &y).unwrap() - 0.4).abs() < 1e-9);
        // constant prediction
        assert_eq!(ccc(&x, &[3.0; 4]).unwrap(), 0.0);
        // symmetry
        assert_eq!(ccc(&x, &y).unwrap(), ccc(&y, &x).unwrap());
    }

    #[test]
    fn ccc_shift_invariance_and_bound() {
        let x = [1.0, 3.0, 2.0, 5.0, 4.0];
        let y = [2.0, 2.5, 2.0, 4.0, 5.0];
        let base = ccc(&x, &y).unwrap();
        let xs: Vec<f64> = x.iter().map(|v| v + 7.0).collect();
        let ys: Vec<f64> = y.iter().map(|v| v + 7.0).collect();
        assert!((ccc(&xs, &ys).unwrap() - base).abs() < 1e-12);
        assert!(base.abs() <= pcc(&x, &y).unwrap().abs() + 1e-12);
    }

    #[test]
    fn kfold_sizes_and_determinism() {
        let ids: Vec<String> = (0..10).map(|i| i.to_string()).collect();
        let folds = kfold_split(&ids, 5, 7).unwrap();
        for f in 0..5 {
            assert_eq!(folds.iter().filter(|&&x| x == f).count(), 2);
        }
        assert_eq!(folds, kfold_split(&ids, 5, 7).unwrap());

        let ids11: Vec<String> = (0..11).map(|i| i.to_string()).collect();
        let folds = kfold_split(&ids11, 5, 7).unwrap();
        let mut sizes: Vec<usize> = (0..5)
            .map(|f| folds.iter().filter(|&&x| x == f).count())
            .collect();
        sizes.sort();
        assert_eq!(sizes, vec![2, 2, 2, 2, 3]);

        assert!(kfold_split(&ids, 1, 0).is_err());
        assert!(kfold_split(&ids, 11, 0).is_err());
    }

    fn pset(pairs: &[(&str, f64, f64)]) -> PredictionSet {
        let mut set = PredictionSet::default();
        for (id, t, p) in pairs {
            set.insert(*id, *t, *p);
        }
        set
    }

    #[test]
    fn bootstrap_identical_sets_not_significant() {
        let a = pset(&[("a", 1.0, 2.0), ("b", 5.0, 4.0), ("c", 9.0, 8.0), ("d", 3.0, 3.0)]);
        let intervals = bootstrap_ccc_diff(&a, &a, 200, &[0.90, 0.95], 3).unwrap();
        for interval in intervals {
            assert!(!interval.significant);
            assert_eq!(interval.low, 0.0);
            assert_eq!(interval.high, 0.0);
        }
    }

    #[test]
    fn bootstrap_detects_clear_separation() {
        // A perfect, B anti-correlated, 20 sessions
        let mut a = PredictionSet::default();
        let mut b = PredictionSet::default();
        for i in 0..20 {
            let truth = i as f64;
            a.insert(format!("s{i}"), truth, truth);
            b.insert(format!("s{i}"), truth, 19.0 - truth);
        }
        let intervals = bootstrap_ccc_diff(&a, &b, 1000, &[0.95], 11).unwrap();
        assert!(intervals[0].significant);
        assert!(intervals[0].low > 0.0);
    }

    #[test]
    fn bootstrap_seeded_reproducibility_and_key_checks() {
        let a = pset(&[("a", 1.0, 2.0), ("b", 5.0, 4.0), ("c", 9.0, 8.0)]);
        let b = pset(&[("a", 1.0, 1.0), ("b", 5.0, 5.0), ("c", 9.0, 9.0)]);
        let one = bootstrap_ccc_diff(&a, &b, 300, &[0.95], 42).unwrap();
        let two = bootstrap_ccc_diff(&a, &b, 300, &[0.95], 42).unwrap();
        assert_eq!(one, two);

        let mismatched = pset(&[("a", 1.0, 1.0), ("b", 5.0, 5.0), ("x", 9.0, 9.0)]);
        assert!(bootstrap_ccc_diff(&a, &mismatched, 10, &[0.95], 1).is_err());

        let wrong_truth = pset(&[("a", 2.0, 1.0), ("b", 5.0, 5.0), ("c", 9.0, 9.0)]);
        assert!(bootstrap_ccc_diff(&a, &wrong_truth, 10, &[0.95], 1).is_err());
    }

    #[test]
    fn config_columns_are_cumulative() {
        assert_eq!(config_columns(AblationConfig::D).len(), 9);
        assert_eq!(config_columns(AblationConfig::DA).len(), 30);
        assert_eq!(config_columns(AblationConfig::DAP).len(), 35);
    }
}
