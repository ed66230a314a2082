//! Attention-weight standardization and a static HTML rendering of the
//! annotated conversation. Turn and word weights are z-scored within the
//! session; emphasis kicks in at z > 1 and strengthens at z > 2.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::han::{AttentionTrace, EncodedDoc};
use crate::narrative::NarrativeKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WordStandardization {
    /// z-scores across every word of the session (default reading).
    #[default]
    SessionWide,
    /// z-scores within each turn separately.
    PerTurn,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VizWord {
    pub token: String,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VizTurn {
    /// 1-based turn number shown in the gutter.
    pub index: usize,
    pub kind: NarrativeKind,
    pub z: f64,
    pub words: Vec<VizWord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VizDocument {
    pub session_id: String,
    pub predicted: f64,
    pub truth: Option<f64>,
    pub turns: Vec<VizTurn>,
}

fn zscores(values: &[f64]) -> Vec<f64> {
    if values.len() < 2 {
        return vec![0.0; values.len()];
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if var <= 0.0 {
        return vec![0.0; values.len()];
    }
    let std = var.sqrt();
    values.iter().map(|v| (v - mean) / std).collect()
}

/// Standardizes turn weights across the session's turns and word weights
/// either session-wide or per turn. Singleton or zero-variance inputs get
/// z = 0 throughout.
pub fn standardize_attention(
    trace: &AttentionTrace,
    mode: WordStandardization,
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    if trace.turn_weights.is_empty() {
        return Err(Error::InvalidInput(
            "attention trace has no turns to standardize".into(),
        ));
    }
    let turn_z = zscores(&trace.turn_weights);
    let word_z = match mode {
        WordStandardization::PerTurn => trace.word_weights.iter().map(|ws| zscores(ws)).collect(),
        WordStandardization::SessionWide => {
            let all: Vec<f64> = trace.word_weights.iter().flatten().copied().collect();
            let flat_z = zscores(&all);
            let mut out = Vec::with_capacity(trace.word_weights.len());
            let mut cursor = 0;
            for ws in &trace.word_weights {
                out.push(flat_z[cursor..cursor + ws.len()].to_vec());
                cursor += ws.len();
            }
            out
        }
    };
    Ok((turn_z, word_z))
}

pub fn build_viz_document(
    session_id: &str,
    predicted: f64,
    truth: Option<f64>,
    doc: &EncodedDoc,
    trace: &AttentionTrace,
    mode: WordStandardization,
) -> Result<VizDocument> {
    if doc.turns.len() != trace.turn_weights.len() {
        return Err(Error::InvalidInput(format!(
            "{} encoded turns but {} turn weights",
            doc.turns.len(),
            trace.turn_weights.len()
        )));
    }
    let (turn_z, word_z) = standardize_attention(trace, mode)?;
    let turns = doc
        .turns
        .iter()
        .zip(turn_z)
        .zip(word_z)
        .enumerate()
        .map(|(i, ((turn, tz), wz))| VizTurn {
            index: i + 1,
            kind: turn.kind,
            z: tz,
            words: turn
                .tokens
                .iter()
                .zip(wz)
                .map(|(token, z)| VizWord {
                    token: token.clone(),
                    z,
                })
                .collect(),
        })
        .collect();
    Ok(VizDocument {
        session_id: session_id.to_string(),
        predicted,
        truth,
        turns,
    })
}

/// Emphasis bucket for a z-score: 0 (plain), 1 (z > 1), 2 (z > 2).
pub fn tier(z: f64) -> u8 {
    if z > 2.0 {
        2
    } else if z > 1.0 {
        1
    } else {
        0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StyleConfig {
    pub turn_color: String,
    pub word_color: String,
    pub tier1_z: f64,
    pub tier2_z: f64,
}

impl Default for StyleConfig {
    fn default() -> Self {
        StyleConfig {
            turn_color: "#c0392b".into(),
            word_color: "#f1c40f".into(),
            tier1_z: 1.0,
            tier2_z: 2.0,
        }
    }
}

impl StyleConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&raw)
            .map_err(|e| Error::Config(format!("style config {}: {e}", path.display())))
    }

    fn bucket(&self, z: f64) -> u8 {
        if z > self.tier2_z {
            2
        } else if z > self.tier1_z {
            1
        } else {
            0
        }
    }
}

pub fn output_filename(session_id: &str) -> String {
    format!("{session_id}.attn.html")
}

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            _ => out.push(c),
        }
    }
    out
}

/// Self-contained HTML: inline styles only, no external assets. Turn
/// numbers and kind tags render from CSS counters/attributes so the text
/// content of `<main>` is exactly the narrative tokens.
pub fn emit_html(doc: &VizDocument, style: &StyleConfig) -> String {
    let mut html = String::new();
    html.push_str("<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n");
    html.push_str(&format!(
        "<title>{} attention</title>\n",
        escape(&doc.session_id)
    ));
    html.push_str("<style>\n");
    html.push_str(
        "body { font-family: sans-serif; max-width: 54em; margin: 2em auto; color: #222; }\n\
         header { border-bottom: 1px solid #999; margin-bottom: 1em; padding-bottom: 0.5em; }\n\
         main { counter-reset: turn; }\n\
         .turn { counter-increment: turn; position: relative; margin: 0.35em 0 0.35em 4.5em; \
         padding: 0.15em 0.4em; border-left: 4px solid transparent; }\n\
         .turn::before { content: counter(turn) \" \" attr(data-kind); position: absolute; \
         left: -4.5em; width: 4em; text-align: right; color: #888; font-size: 0.85em; }\n",
    );
    html.push_str(&format!(
        ".turn.t1 {{ border-left-color: {c}; }}\n\
         .turn.t2 {{ border-left-color: {c}; background: {c}22; }}\n\
         .w1 {{ background: {w}66; }}\n\
         .w2 {{ background: {w}; font-weight: bold; }}\n",
        c = style.turn_color,
        w = style.word_color,
    ));
    html.push_str("</style>\n</head>\n<body>\n<header>\n");
    let truth = doc
        .truth
        .map(|t| format!("{t}"))
        .unwrap_or_else(|| "unknown".into());
    html.push_str(&format!(
        "<h1>{}</h1>\n<p>predicted score {:.2} &middot; true score {}</p>\n",
        escape(&doc.session_id),
        doc.predicted,
        escape(&truth)
    ));
    html.push_str("</header>\n<main>\n");
    for turn in &doc.turns {
        let turn_class = match style.bucket(turn.z) {
            2 => " t2",
            1 => " t1",
            _ => "",
        };
        html.push_str(&format!(
            "<p class=\"turn{turn_class}\" data-kind=\"{}\">",
            turn.kind.tag()
        ));
        for (i, word) in turn.words.iter().enumerate() {
            if i > 0 {
                html.push(' ');
            }
            match style.bucket(word.z) {
                2 => html.push_str(&format!("<span class=\"w2\">{}</span>", escape(&word.token))),
                1 => html.push_str(&format!("<span class=\"w1\">{}</span>", escape(&word.token))),
                _ => html.push_str(&escape(&word.token)),
            }
        }
        html.push_str("</p>\n");
    }
    html.push_str("</main>\n</body>\n</html>\n");
    html
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::han::AttentionTrace;

    fn trace() -> AttentionTrace {
        AttentionTrace {
            turn_weights: vec![0.1, 0.2, 0.7],
            word_weights: vec![
                vec![0.5, 0.5],
                vec![0.25, 0.25, 0.5],
                vec![0.1, 0.9],
            ],
        }
    }

    #[test]
    fn turn_standardization_matches_hand_computation() {
        let (turn_z, _) = standardize_attention(&trace(), WordStandardization::SessionWide).unwrap();
        // population mean 1/3, std sqrt(((0.1-1/3)^2+(0.2-1/3)^2+(0.7-1/3)^2)/3)
        assert!((turn_z[2] - 1.397).abs() < 1e-3, "{turn_z:?}");
        assert!(turn_z[0] < 0.0 && turn_z[1] < 0.0);
    }

    #[test]
    fn uniform_weights_standardize_to_zero() {
        let t = AttentionTrace {
            turn_weights: vec![0.25; 4],
            word_weights: vec![vec![0.5, 0.5]; 4],
        };
        let (turn_z, word_z) = standardize_attention(&t, WordStandardization::SessionWide).unwrap();
        assert!(turn_z.iter().all(|&z| z == 0.0));
        assert!(word_z.iter().flatten().all(|&z| z == 0.0));
    }

    #[test]
    fn single_turn_is_zero() {
        let t = AttentionTrace {
            turn_weights: vec![1.0],
            word_weights: vec![vec![0.3, 0.7]],
        };
        let (turn_z, _) = standardize_attention(&t, WordStandardization::SessionWide).unwrap();
        assert_eq!(turn_z, vec![0.0]);
    }

    #[test]
    fn empty_trace_is_an_error() {
        assert!(standardize_attention(
            &AttentionTrace::default(),
            WordStandardization::SessionWide
        )
        .is_err());
    }

    #[test]
    fn per_turn_mode_differs_from_session_wide() {
        let (_, session) = standardize_attention(&trace(), WordStandardization::SessionWide).unwrap();
        let (_, per_turn) = standardize_attention(&trace(), WordStandardization::PerTurn).unwrap();
        assert_ne!(session, per_turn);
        // per-turn: a uniform turn standardizes to zeros even when the
        // session-wide view does not
        assert!(per_turn[0].iter().all(|&z| z == 0.0));
    }

    #[test]
    fn tier_buckets() {
        assert_eq!(tier(0.5), 0);
        assert_eq!(tier(1.0), 0);
        assert_eq!(tier(1.5), 1);
        assert_eq!(tier(2.0), 1);
        assert_eq!(tier(2.5), 2);
    }

    fn sample_doc() -> VizDocument {
        VizDocument {
            session_id: "s01".into(),
            predicted: 13.2,
            truth: Some(14.0),
            turns: vec![
                VizTurn {
                    index: 1,
                    kind: NarrativeKind::SummaryLine,
                    z: 0.0,
                    words: vec![
                        VizWord { token: "speech".into(), z: 0.0 },
                        VizWord { token: "rate".into(), z: 1.4 },
                        VizWord { token: "low".into(), z: 2.5 },
                    ],
                },
                VizTurn {
                    index: 2,
                    kind: NarrativeKind::Utterance,
                    z: 2.2,
                    words: vec![
                        VizWord { token: "i".into(), z: -0.2 },
                        VizWord { token: "can't".into(), z: 0.1 },
                        VizWord { token: "sleep".into(), z: 1.8 },
                    ],
                },
            ],
        }
    }

    fn strip_tags(html: &str) -> String {
        let main = html
            .split("<main>")
            .nth(1)
            .unwrap()
            .split("</main>")
            .next()
            .unwrap();
        let mut out = String::new();
        let mut in_tag = false;
        for c in main.chars() {
            match c {
                '<' => in_tag = true,
                '>' => in_tag = false,
                c if !in_tag => out.push(c),
                _ => {}
            }
        }
        out.replace("&amp;", "&")
            .replace("&lt;", "<")
            .replace("&gt;", ">")
            .replace("&quot;", "\"")
            .replace("&#39;", "'")
    }

    #[test]
    fn stripping_markup_recovers_tokens() {
        let html = emit_html(&sample_doc(), &StyleConfig::default());
        let text = strip_tags(&html);
        let tokens: Vec<&str> = text.split_whitespace().collect();
        assert_eq!(tokens, vec!["speech", "rate", "low", "i", "can't", "sleep"]);
    }

    #[test]
    fn strongest_word_gets_strongest_class() {
        let html = emit_html(&sample_doc(), &StyleConfig::default());
        assert!(html.contains("<span class=\"w2\">low</span>"));
        assert!(html.contains("<span class=\"w1\">sleep</span>"));
        assert!(html.contains("class=\"turn t2\""));
    }

    #[test]
    fn all_zero_doc_has_no_highlights() {
        let mut doc = sample_doc();
        for t in &mut doc.turns {
            t.z = 0.0;
            for w in &mut t.words {
                w.z = 0.0;
            }
        }
        let html = emit_html(&doc, &StyleConfig::default());
        assert!(!html.contains("w1\">") && !html.contains("w2\">"));
        assert!(!html.contains("turn t1") && !html.contains("turn t2"));
    }

    #[test]
    fn emission_is_deterministic_and_self_contained() {
        let doc = sample_doc();
        let style = StyleConfig::default();
        assert_eq!(emit_html(&doc, &style), emit_html(&doc, &style));
        let html = emit_html(&doc, &style);
        for forbidden in ["http://", "https://", "<script", "<link", "src="] {
            assert!(!html.contains(forbidden), "found {forbidden}");
        }
    }

    #[test]
    fn filenames_follow_convention() {
        assert_eq!(output_filename("synth0007"), "synth0007.attn.html");
    }
}
