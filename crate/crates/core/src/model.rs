//! Regression strategies behind a common trait, registered by name and
//! selected at runtime.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::corpus::{PHQ_MAX, PHQ_MIN};
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::han::{self, EncodedDoc, HanConfig};
use crate::narrative::{AblationConfig, NarrativeDocument};
use crate::tree::{self, TreeHyperparams};

/// Inputs prepared for one ablation configuration. Numeric-only
/// configurations carry feature rows; narrative documents are always
/// available so text models can run on every configuration.
#[derive(Debug, Clone, Default)]
pub struct ConfigData {
    pub numeric: Option<Vec<Vec<f64>>>,
    pub numeric_names: Option<Vec<String>>,
    pub documents: Option<Vec<NarrativeDocument>>,
}

pub trait Regressor {
    fn name(&self) -> &str;
    fn supports(&self, config: AblationConfig) -> bool;
    /// Fits on the training rows and returns one prediction per test index,
    /// in `test_idx` order.
    fn fit_predict(
        &self,
        data: &ConfigData,
        labels: &[f64],
        train_idx: &[usize],
        test_idx: &[usize],
        seed: u64,
    ) -> Result<Vec<f64>>;
}

// ---------------------------------------------------------------------------
// Regression tree (numeric configurations only)
// ---------------------------------------------------------------------------

pub struct TreeRegressor {
    pub grid: Vec<TreeHyperparams>,
    /// Inner folds used to pick hyperparameters on the training rows.
    pub inner_k: usize,
}

impl Default for TreeRegressor {
    fn default() -> Self {
        TreeRegressor {
            grid: tree::default_grid(),
            inner_k: 3,
        }
    }
}

impl Regressor for TreeRegressor {
    fn name(&self) -> &str {
        "tree"
    }

    fn supports(&self, config: AblationConfig) -> bool {
        config.is_numeric()
    }

    fn fit_predict(
        &self,
        data: &ConfigData,
        labels: &[f64],
        train_idx: &[usize],
        test_idx: &[usize],
        seed: u64,
    ) -> Result<Vec<f64>> {
        let rows = data
            .numeric
            .as_ref()
            .ok_or_else(|| Error::Model("tree requires numeric features".into()))?;
        let names = data
            .numeric_names
            .clone()
            .unwrap_or_else(|| (0..rows[0].len()).map(|i| format!("f{i}")).collect());
        let train_rows: Vec<Vec<f64>> = train_idx.iter().map(|&i| rows[i].clone()).collect();
        let train_y: Vec<f64> = train_idx.iter().map(|&i| labels[i]).collect();
        let (best, _) = tree::grid_search_cv(
            &train_rows,
            &train_y,
            &names,
            &self.grid,
            self.inner_k.min(train_rows.len()),
            seed,
        )?;
        let model = tree::fit(&train_rows, &train_y, &names, best)?;
        test_idx
            .iter()
            .map(|&i| tree::predict(&model, &rows[i]))
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Hierarchical attention network (all configurations)
// ---------------------------------------------------------------------------

pub struct HanRegressor {
    pub config: HanConfig,
    pub embeddings: Arc<EmbeddingTable>,
}

impl Regressor for HanRegressor {
    fn name(&self) -> &str {
        "han"
    }

    fn supports(&self, _config: AblationConfig) -> bool {
        true
    }

    fn fit_predict(
        &self,
        data: &ConfigData,
        labels: &[f64],
        train_idx: &[usize],
        test_idx: &[usize],
        seed: u64,
    ) -> Result<Vec<f64>> {
        let documents = data
            .documents
            .as_ref()
            .ok_or_else(|| Error::Model("han requires narrative documents".into()))?;
        let mut cfg = self.config.clone();
        cfg.seed = seed;
        let encoded: Vec<EncodedDoc> = documents
            .iter()
            .map(|d| han::encode(d, &self.embeddings, &cfg))
            .collect::<Result<_>>()?;
        let train_docs: Vec<EncodedDoc> =
            train_idx.iter().map(|&i| encoded[i].clone()).collect();
        let train_y: Vec<f64> = train_idx.iter().map(|&i| labels[i]).collect();
        let (model, _) = han::train(&cfg, &train_docs, &train_y)?;
        Ok(test_idx
            .iter()
            .map(|&i| {
                let (raw, _) = han::forward(&model, &encoded[i]);
                han::clip_prediction(raw, PHQ_MIN as f64, PHQ_MAX as f64)
            })
            .collect())
    }
}

// ---------------------------------------------------------------------------
// Registry
// ---------------------------------------------------------------------------

type ModelBuilder = Box<dyn Fn() -> Box<dyn Regressor> + Send + Sync>;

#[derive(Default)]
pub struct ModelRegistry {
    builders: BTreeMap<String, ModelBuilder>,
}

impl ModelRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: &str, builder: ModelBuilder) {
        self.builders.insert(name.to_string(), builder);
    }

    pub fn names(&self) -> Vec<String> {
        self.builders.keys().cloned().collect()
    }

    pub fn build(&self, name: &str) -> Result<Box<dyn Regressor>> {
        let builder = self.builders.get(name).ok_or_else(|| {
            Error::Config(format!(
                "unknown model '{name}'; available: {}",
                self.names().join(", ")
            ))
        })?;
        Ok(builder())
    }
}

/// Registry with the two built-in strategies.
pub fn default_registry(
    tree_grid: Vec<TreeHyperparams>,
    inner_k: usize,
    han_config: HanConfig,
    embeddings: Arc<EmbeddingTable>,
) -> ModelRegistry {
    let mut registry = ModelRegistry::new();
    registry.register(
        "tree",
        Box::new(move || {
            Box::new(TreeRegressor {
                grid: tree_grid.clone(),
                inner_k,
            })
        }),
    );
    registry.register(
        "han",
        Box::new(move || {
            Box::new(HanRegressor {
                config: han_config.clone(),
                embeddings: Arc::clone(&embeddings),
            })
        }),
    );
    registry
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::narrative::{NarrativeKind, NarrativeTurn};

    fn numeric_data() -> (ConfigData, Vec<f64>) {
        // y follows the first feature exactly
        let rows: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64, 0.5]).collect();
        let labels: Vec<f64> = (0..12).map(|i| if i < 6 { 2.0 } else { 20.0 }).collect();
        (
            ConfigData {
                numeric: Some(rows),
                numeric_names: Some(vec!["a".into(), "b".into()]),
                documents: None,
            },
            labels,
        )
    }

    #[test]
    fn tree_regressor_learns_a_step() {
        let (data, labels) = numeric_data();
        let model = TreeRegressor::default();
        let train: Vec<usize> = (0..10).collect();
        let test = vec![10usize, 11];
        let preds = model.fit_predict(&data, &labels, &train, &test, 3).unwrap();
        for p in preds {
            assert!((p - 20.0).abs() < 1e-9);
        }
    }

    #[test]
    fn tree_rejects_missing_numeric_features() {
        let model = TreeRegressor::default();
        let data = ConfigData::default();
        assert!(model
            .fit_predict(&data, &[1.0, 2.0], &[0], &[1], 1)
            .is_err());
    }

    #[test]
    fn han_regressor_predicts_in_range() {
        let cfg = HanConfig {
            embedding_dim: 5,
            gru_units: 3,
            epochs: 10,
            learning_rate: 0.01,
            ..HanConfig::default()
        };
        let table = Arc::new(EmbeddingTable::hashed(5, 4));
        let model = HanRegressor {
            config: cfg,
            embeddings: table,
        };
        let documents: Vec<NarrativeDocument> = (0..6)
            .map(|i| NarrativeDocument {
                turns: vec![NarrativeTurn {
                    kind: NarrativeKind::Utterance,
                    text: format!("session number {i} feels heavy today"),
                }],
            })
            .collect();
        let labels = vec![3.0, 21.0, 8.0, 15.0, 1.0, 19.0];
        let data = ConfigData {
            numeric: None,
            numeric_names: None,
            documents: Some(documents),
        };
        let preds = model
            .fit_predict(&data, &labels, &[0, 1, 2, 3], &[4, 5], 9)
            .unwrap();
        assert_eq!(preds.len(), 2);
        for p in preds {
            assert!((0.0..=24.0).contains(&p));
        }
    }

    #[test]
    fn registry_builds_by_name_and_rejects_unknown() {
        let registry = default_registry(
            tree::default_grid(),
            3,
            HanConfig::default(),
            Arc::new(EmbeddingTable::hashed(8, 1)),
        );
        assert_eq!(registry.names(), vec!["han".to_string(), "tree".to_string()]);
        assert_eq!(registry.build("tree").unwrap().name(), "tree");
        assert_eq!(registry.build("han").unwrap().name(), "han");
        assert!(registry.build("mystery").is_err());
        assert!(registry
            .build("tree")
            .unwrap()
            .supports(AblationConfig::DAPC)
            == false);
    }
}
