//! Command-line surface. One TOML run config drives everything; a few
//! flags override individual fields and flags win.

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use clap::{Parser, Subcommand};

use crate::clients::{
    ComprehensionClient, PersonalityClient, RemoteComprehensionClient, RemoteConfig,
    RemotePersonalityClient, StubComprehensionClient, StubPersonalityClient,
};
use crate::config::{ClientMode, RunConfig};
use crate::corpus::{parse_corpus, validate, write_corpus, Corpus};
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::eval::{fit_fold_context, run_ablation, AblationSettings, FoldContext};
use crate::han;
use crate::model::default_registry;
use crate::narrative::{assemble_input, AblationConfig};
use crate::synth::{describe, generate, SynthParams};
use crate::tree;
use crate::viz;

#[derive(Debug, Parser)]
#[command(
    name = "convscreen",
    version,
    about = "Dyadic conversation screening pipeline: features, narratives, models, ablation, visualization"
)]
pub struct Cli {
    /// Run configuration TOML; defaults apply when absent
    #[arg(short = 'c', long, global = true)]
    pub config_file: Option<PathBuf>,
    /// Override the corpus directory from the config
    #[arg(long, global = true)]
    pub corpus: Option<PathBuf>,
    /// Override the output directory from the config
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    /// Override the master seed from the config
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Cap on parallel workers (execution is deterministic at any cap)
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse the corpus and report every invariant violation
    Validate,
    /// Write per-session numeric feature JSON
    Features,
    /// Write narrative text files for the selected configuration(s)
    Narrate {
        /// Single configuration name (default: all configured)
        #[arg(long = "config")]
        config_name: Option<String>,
    },
    /// Fit models on the full corpus and save checkpoints
    Train {
        /// Single model name (default: all configured)
        #[arg(long)]
        model: Option<String>,
        /// Configuration used for narrative models (default DAPN)
        #[arg(long = "config")]
        config_name: Option<String>,
    },
    /// Cross-validated ablation over configurations and models
    Ablate,
    /// Emit one attention HTML file per session
    Visualize {
        /// Reuse a saved checkpoint instead of training
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Configuration for the narrative input (default DAPN)
        #[arg(long = "config")]
        config_name: Option<String>,
    },
    /// Generate a synthetic corpus into the corpus directory
    Synth {
        /// Number of sessions to generate
        #[arg(long)]
        n_sessions: Option<usize>,
        /// Remove all planted effects (null corpus)
        #[arg(long)]
        null: bool,
    },
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut config = match &cli.config_file {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(corpus) = &cli.corpus {
        config.corpus = corpus.clone();
    }
    if let Some(output) = &cli.output {
        config.output = output.clone();
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
        config.han.seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn make_clients(
    mode: ClientMode,
) -> Result<(Box<dyn PersonalityClient>, Box<dyn ComprehensionClient>)> {
    match mode {
        ClientMode::Stub => Ok((
            Box::new(StubPersonalityClient),
            Box::new(StubComprehensionClient),
        )),
        ClientMode::Remote => Ok((
            Box::new(RemotePersonalityClient {
                config: RemoteConfig::from_env("CONVSCREEN_PERSONALITY")?,
            }),
            Box::new(RemoteComprehensionClient {
                config: RemoteConfig::from_env("CONVSCREEN_COMPREHENSION")?,
            }),
        )),
    }
}

fn load_embeddings(config: &RunConfig) -> Result<EmbeddingTable> {
    match &config.embedding_path {
        Some(path) => {
            let table = EmbeddingTable::load(path)?;
            if table.dimension != config.han.embedding_dim {
                return Err(Error::Config(format!(
                    "embedding file is {}-dimensional but han.embedding_dim is {}",
                    table.dimension, config.han.embedding_dim
                )));
            }
            Ok(table)
        }
        None => Ok(EmbeddingTable::hashed(config.han.embedding_dim, config.seed)),
    }
}

fn load_corpus(config: &RunConfig) -> Result<Corpus> {
    parse_corpus(&config.corpus)
}

fn full_context(
    corpus: &Corpus,
    personality: &dyn PersonalityClient,
) -> Result<FoldContext> {
    let all: Vec<usize> = (0..corpus.sessions.len()).collect();
    fit_fold_context(corpus, &all, personality)
}

fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content).map_err(|e| Error::io(path, e))
}

fn single_config(name: &Option<String>, fallback: AblationConfig) -> Result<AblationConfig> {
    match name {
        Some(raw) => AblationConfig::from_str(raw),
        None => Ok(fallback),
    }
}

fn cmd_validate(config: &RunConfig) -> Result<()> {
    let corpus = load_corpus(config)?;
    let violations = validate(&corpus);
    if violations.is_empty() {
        println!(
            "ok: {} sessions, no invariant violations",
            corpus.sessions.len()
        );
        Ok(())
    } else {
        for v in &violations {
            println!("{}: {}", v.session, v.message);
        }
        Err(Error::InvalidInput(format!(
            "{} invariant violation(s)",
            violations.len()
        )))
    }
}

fn cmd_features(config: &RunConfig) -> Result<()> {
    let corpus = load_corpus(config)?;
    let (personality, _) = make_clients(config.client_mode)?;
    let context = full_context(&corpus, personality.as_ref())?;
    let dir = config.output.join("features");
    ensure_dir(&dir)?;
    for (session, features) in corpus.sessions.iter().zip(&context.features) {
        let json = serde_json::to_string_pretty(features)
            .map_err(|e| Error::Model(e.to_string()))?;
        write_text(&dir.join(format!("{}.json", session.id)), &json)?;
    }
    println!("wrote {} feature files to {}", corpus.sessions.len(), dir.display());
    Ok(())
}

fn cmd_narrate(config: &RunConfig, config_name: &Option<String>) -> Result<()> {
    let corpus = load_corpus(config)?;
    let (personality, comprehension) = make_clients(config.client_mode)?;
    let context = full_context(&corpus, personality.as_ref())?;
    let selected: Vec<AblationConfig> = match config_name {
        Some(raw) => vec![AblationConfig::from_str(raw)?],
        None => config.parsed_configs()?,
    };
    for ablation in selected {
        let dir = config.output.join("narratives").join(ablation.to_string());
        ensure_dir(&dir)?;
        for (i, session) in corpus.sessions.iter().enumerate() {
            let doc = assemble_input(
                session,
                ablation,
                &context.features[i],
                &context.standardizer,
                comprehension.as_ref(),
            );
            write_text(&dir.join(format!("{}.txt", session.id)), &doc.to_text())?;
        }
        println!(
            "wrote {} narratives for {ablation} under {}",
            corpus.sessions.len(),
            dir.display()
        );
    }
    Ok(())
}

fn labels_of(corpus: &Corpus) -> Result<Vec<f64>> {
    corpus
        .sessions
        .iter()
        .map(|s| {
            s.phq.map(|v| v as f64).ok_or_else(|| Error::Session {
                session: s.id.clone(),
                message: "missing PHQ label".into(),
            })
        })
        .collect()
}

fn cmd_train(
    config: &RunConfig,
    model: &Option<String>,
    config_name: &Option<String>,
) -> Result<()> {
    let corpus = load_corpus(config)?;
    let (personality, comprehension) = make_clients(config.client_mode)?;
    let context = full_context(&corpus, personality.as_ref())?;
    let labels = labels_of(&corpus)?;
    let ablation = single_config(config_name, AblationConfig::DAPN)?;
    let dir = config.output.join("checkpoints");
    ensure_dir(&dir)?;
    let models: Vec<String> = match model {
        Some(name) => vec![name.clone()],
        None => config.models.clone(),
    };
    for name in &models {
        match name.as_str() {
            "tree" => {
                if !ablation.is_numeric() {
                    return Err(Error::Config(format!(
                        "tree supports numeric configurations only, not {ablation}"
                    )));
                }
                let cols = crate::eval::config_columns(ablation);
                let names = crate::features::feature_names();
                let selected_names: Vec<String> =
                    cols.iter().map(|&c| names[c].clone()).collect();
                let rows: Vec<Vec<f64>> = context
                    .features
                    .iter()
                    .map(|f| {
                        let v = f.to_vector();
                        cols.iter().map(|&c| v[c]).collect()
                    })
                    .collect();
                let (best, score) = tree::grid_search_cv(
                    &rows,
                    &labels,
                    &selected_names,
                    &config.tree.grid,
                    config.tree.inner_k,
                    config.seed,
                )?;
                let fitted = tree::fit(&rows, &labels, &selected_names, best)?;
                let json = serde_json::to_string_pretty(&fitted)
                    .map_err(|e| Error::Model(e.to_string()))?;
                let path = dir.join(format!("tree_{ablation}.json"));
                write_text(&path, &json)?;
                println!("tree {ablation}: cv ccc {score:.4}, saved {}", path.display());
            }
            "han" => {
                let table = Arc::new(load_embeddings(config)?);
                let docs: Vec<han::EncodedDoc> = corpus
                    .sessions
                    .iter()
                    .enumerate()
                    .map(|(i, s)| {
                        let doc = assemble_input(
                            s,
                            ablation,
                            &context.features[i],
                            &context.standardizer,
                            comprehension.as_ref(),
                        );
                        han::encode(&doc, &table, &config.han)
                    })
                    .collect::<Result<_>>()?;
                let (model, history) = han::train(&config.han, &docs, &labels)?;
                let path = dir.join(format!("han_{ablation}.ckpt"));
                han::save_checkpoint(&model, &path)?;
                println!(
                    "han {ablation}: final loss {:.4}, saved {}",
                    history.last().copied().unwrap_or(f64::NAN),
                    path.display()
                );
            }
            other => {
                return Err(Error::Config(format!(
                    "unknown model '{other}'; available: han, tree"
                )))
            }
        }
    }
    Ok(())
}

fn cmd_ablate(config: &RunConfig) -> Result<()> {
    let corpus = load_corpus(config)?;
    let (personality, comprehension) = make_clients(config.client_mode)?;
    let table = Arc::new(load_embeddings(config)?);
    let registry = default_registry(
        config.tree.grid.clone(),
        config.tree.inner_k,
        config.han.clone(),
        table,
    );
    let models: Vec<_> = config
        .models
        .iter()
        .map(|name| registry.build(name))
        .collect::<Result<_>>()?;
    let settings = AblationSettings {
        configs: config.parsed_configs()?,
        k: config.k,
        seed: config.seed,
        bootstrap_resamples: config.bootstrap_resamples,
        bootstrap_levels: config.bootstrap_levels.clone(),
    };
    let report = run_ablation(
        &corpus,
        personality.as_ref(),
        comprehension.as_ref(),
        &models,
        &settings,
    )?;
    ensure_dir(&config.output)?;
    let json =
        serde_json::to_string_pretty(&report).map_err(|e| Error::Model(e.to_string()))?;
    write_text(&config.output.join("eval_report.json"), &json)?;
    let table_text = report.to_table();
    write_text(&config.output.join("eval_table.txt"), &table_text)?;
    print!("{table_text}");
    Ok(())
}

fn cmd_visualize(
    config: &RunConfig,
    checkpoint: &Option<PathBuf>,
    config_name: &Option<String>,
) -> Result<()> {
    let corpus = load_corpus(config)?;
    let (personality, comprehension) = make_clients(config.client_mode)?;
    let context = full_context(&corpus, personality.as_ref())?;
    let ablation = single_config(config_name, AblationConfig::DAPN)?;
    let table = Arc::new(load_embeddings(config)?);
    let model = match checkpoint {
        Some(path) => han::load_checkpoint(path)?,
        None => {
            let labels = labels_of(&corpus)?;
            let docs: Vec<han::EncodedDoc> = corpus
                .sessions
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    let doc = assemble_input(
                        s,
                        ablation,
                        &context.features[i],
                        &context.standardizer,
                        comprehension.as_ref(),
                    );
                    han::encode(&doc, &table, &config.han)
                })
                .collect::<Result<_>>()?;
            han::train(&config.han, &docs, &labels)?.0
        }
    };
    let style = match &config.style_path {
        Some(path) => viz::StyleConfig::from_json_file(path)?,
        None => viz::StyleConfig::default(),
    };
    let dir = config.output.join("viz");
    ensure_dir(&dir)?;
    for (i, session) in corpus.sessions.iter().enumerate() {
        let doc = assemble_input(
            session,
            ablation,
            &context.features[i],
            &context.standardizer,
            comprehension.as_ref(),
        );
        let encoded = han::encode(&doc, &table, &model.config)?;
        if encoded.turns.is_empty() {
            eprintln!("warning: {} has an empty narrative, skipped", session.id);
            continue;
        }
        let (predicted, trace) = han::predict(&model, &encoded);
        let vizdoc = viz::build_viz_document(
            &session.id,
            predicted,
            session.phq.map(|v| v as f64),
            &encoded,
            &trace,
            config.word_mode(),
        )?;
        let html = viz::emit_html(&vizdoc, &style);
        write_text(&dir.join(viz::output_filename(&session.id)), &html)?;
    }
    println!("wrote attention pages to {}", dir.display());
    Ok(())
}

fn cmd_synth(config: &RunConfig, n_sessions: &Option<usize>, null: bool) -> Result<()> {
    let n = n_sessions.unwrap_or(config.synth.n_sessions);
    let params = if null || config.synth.null_effects {
        SynthParams::null(n, config.seed)
    } else {
        SynthParams {
            n_sessions: n,
            seed: config.seed,
            ..SynthParams::default()
        }
    };
    let corpus = generate(&params)?;
    write_corpus(&config.corpus, &corpus)?;
    let summary = describe(&corpus)?;
    println!(
        "wrote {n} sessions to {}\nplanted correlations: {summary:?}",
        config.corpus.display()
    );
    Ok(())
}

/// Entry point used by the binary; errors map to a one-line cause and a
/// nonzero exit. Usage errors (unknown flags/subcommands) exit 2 via clap.
pub fn run(cli: Cli) -> Result<()> {
    let config = load_config(&cli)?;
    match &cli.command {
        Command::Validate => cmd_validate(&config),
        Command::Features => cmd_features(&config),
        Command::Narrate { config_name } => cmd_narrate(&config, config_name),
        Command::Train { model, config_name } => cmd_train(&config, model, config_name),
        Command::Ablate => cmd_ablate(&config),
        Command::Visualize {
            checkpoint,
            config_name,
        } => cmd_visualize(&config, checkpoint, config_name),
        Command::Synth { n_sessions, null } => cmd_synth(&config, n_sessions, *null),
    }
}
