//! Text narrative generation: the session-level coarse summary rendered from
//! z-score-bucketed features, the comprehension question/answer block, and
//! the multimodal narrative weaving prosody and laughter annotations into the
//! verbatim transcript.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::clients::ComprehensionClient;
use crate::corpus::{Gender, Session, Speaker, TalkTurn};
use crate::error::{Error, Result};
use crate::features::{feature_names, SessionFeatures};
use crate::numwords::delay_to_words;

/// Answers scoring below this probability are replaced by "not applicable".
pub const COMPREHENSION_MIN_PROBABILITY: f64 = 0.1;

pub const NOT_APPLICABLE: &str = "not applicable";

pub const YANG_QUESTIONS: [&str; 4] = [
    "Am I diagnosed?",
    "Am I sleeping well?",
    "Am I shy?",
    "How am I feeling lately?",
];

pub const DSM5_QUESTIONS: [&str; 5] = [
    "Do I feel depressed most of the day?",
    "Do I lose interest?",
    "Do I feel tired?",
    "Do I feel worthless?",
    "Do I feel like dying?",
];

// ---------------------------------------------------------------------------
// Qualifiers
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Qualifier {
    VeryLow,
    Low,
    Normal,
    High,
    VeryHigh,
}

impl Qualifier {
    pub fn text(self) -> Option<&'static str> {
        match self {
            Qualifier::VeryLow => Some("very low"),
            Qualifier::Low => Some("low"),
            Qualifier::Normal => None,
            Qualifier::High => Some("high"),
            Qualifier::VeryHigh => Some("very high"),
        }
    }
}

/// Strict thresholds: z exactly +-1 or +-2 falls in the less extreme bucket.
pub fn z_bucket(z: f64) -> Qualifier {
    if z < -2.0 {
        Qualifier::VeryLow
    } else if z < -1.0 {
        Qualifier::Low
    } else if z <= 1.0 {
        Qualifier::Normal
    } else if z <= 2.0 {
        Qualifier::High
    } else {
        Qualifier::VeryHigh
    }
}

/// Template 12 wording; inclusive bounds as printed.
pub fn delay_qualifier(z: f64) -> Option<&'static str> {
    if z >= 2.0 {
        Some("a significantly long delay")
    } else if z >= 1.0 {
        Some("a long delay")
    } else {
        None
    }
}

/// Template 13 wording; strict bounds, most extreme bucket wins.
pub fn rate_adverb(z: f64) -> Option<&'static str> {
    if z < -2.0 {
        Some("very slowly")
    } else if z < -1.0 {
        Some("slowly")
    } else if z > 2.0 {
        Some("very quickly")
    } else if z > 1.0 {
        Some("quickly")
    } else {
        None
    }
}

// ---------------------------------------------------------------------------
// Standardizer (training-fold statistics)
// ---------------------------------------------------------------------------

/// Per-feature mean and standard deviation fitted on the training fold only.
/// Zero-variance features are flagged and never emit a template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub names: Vec<String>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(training: &[SessionFeatures]) -> Result<Self> {
        if training.len() < 2 {
            return Err(Error::InvalidInput(
                "standardizer requires at least 2 training sessions".into(),
            ));
        }
        let rows: Vec<Vec<f64>> = training.iter().map(|f| f.to_vector()).collect();
        let names = feature_names();
        let dim = names.len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for row in &rows {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut std = vec![0.0; dim];
        for row in &rows {
            for ((s, v), m) in std.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        for s in &mut std {
            *s = (*s / n).sqrt();
        }
        Ok(Standardizer { names, mean, std })
    }

    pub fn from_parts(names: Vec<String>, mean: Vec<f64>, std: Vec<f64>) -> Self {
        assert_eq!(names.len(), mean.len());
        assert_eq!(names.len(), std.len());
        Standardizer { names, mean, std }
    }

    /// `None` for unknown or zero-variance (flagged) features.
    pub fn z(&self, name: &str, value: f64) -> Option<f64> {
        let idx = self.names.iter().position(|n| n == name)?;
        if self.std[idx] == 0.0 {
            return None;
        }
        Some((value - self.mean[idx]) / self.std[idx])
    }

    pub fn is_flagged(&self, name: &str) -> bool {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.std[i] == 0.0)
            .unwrap_or(true)
    }
}

// ---------------------------------------------------------------------------
// Narrative document
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NarrativeKind {
    SummaryLine,
    Question,
    Answer,
    Utterance,
}

impl NarrativeKind {
    pub fn tag(self) -> char {
        match self {
            NarrativeKind::SummaryLine => 'S',
            NarrativeKind::Question => 'Q',
            NarrativeKind::Answer => 'A',
            NarrativeKind::Utterance => 'U',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NarrativeTurn {
    pub kind: NarrativeKind,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NarrativeDocument {
    pub turns: Vec<NarrativeTurn>,
}

impl NarrativeDocument {
    /// Line-per-turn serialization with a kind tag prefix.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for turn in &self.turns {
            out.push(turn.kind.tag());
            out.push('|');
            out.push_str(&turn.text);
            out.push('\n');
        }
        out
    }
}

impl fmt::Display for NarrativeDocument {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_text())
    }
}

// ---------------------------------------------------------------------------
// Ablation configurations
// ---------------------------------------------------------------------------

/// Cumulative input families: Demographics, Actions, Prosody, Comprehension,
/// Narrative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AblationConfig {
    D,
    DA,
    DAP,
    DAPC,
    DAPN,
    DAPNC,
}

pub const ALL_CONFIGS: [AblationConfig; 6] = [
    AblationConfig::D,
    AblationConfig::DA,
    AblationConfig::DAP,
    AblationConfig::DAPC,
    AblationConfig::DAPN,
    AblationConfig::DAPNC,
];

impl AblationConfig {
    pub fn includes_actions(self) -> bool {
        !matches!(self, AblationConfig::D)
    }

    pub fn includes_prosody(self) -> bool {
        !matches!(self, AblationConfig::D | AblationConfig::DA)
    }

    pub fn includes_comprehension(self) -> bool {
        matches!(self, AblationConfig::DAPC | AblationConfig::DAPNC)
    }

    pub fn includes_narrative(self) -> bool {
        matches!(self, AblationConfig::DAPN | AblationConfig::DAPNC)
    }

    /// Only the text-free configurations have a numeric design matrix for
    /// the regression tree.
    pub fn is_numeric(self) -> bool {
        matches!(self, AblationConfig::D | AblationConfig::DA | AblationConfig::DAP)
    }
}

impl fmt::Display for AblationConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for AblationConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_uppercase().as_str() {
            "D" => Ok(AblationConfig::D),
            "DA" => Ok(AblationConfig::DA),
            "DAP" => Ok(AblationConfig::DAP),
            "DAPC" => Ok(AblationConfig::DAPC),
            "DAPN" => Ok(AblationConfig::DAPN),
            "DAPNC" => Ok(AblationConfig::DAPNC),
            other => Err(Error::Config(format!("unknown configuration {other:?}"))),
        }
    }
}

// ---------------------------------------------------------------------------
// Coarse summary (templates 1-7)
// ---------------------------------------------------------------------------

const AU_DISPLAY: [(&str, &str); 4] = [
    ("au5", "upper lid raiser"),
    ("au17", "chin raiser"),
    ("au20", "lip stretcher"),
    ("au25", "jaw drop"),
];

fn push_fragment(line: &mut String, standardizer: &Standardizer, name: &str, value: f64, phrase: &str) {
    if let Some(z) = standardizer.z(name, value) {
        if let Some(q) = z_bucket(z).text() {
            line.push_str(phrase);
            line.push(' ');
            line.push_str(q);
            line.push(' ');
        }
    }
}

fn push_line(turns: &mut Vec<NarrativeTurn>, line: String) {
    if !line.is_empty() {
        turns.push(NarrativeTurn {
            kind: NarrativeKind::SummaryLine,
            text: line,
        });
    }
}

/// Renders templates 1-7 for the families selected by `config`, in the fixed
/// order demographics, actions, prosody. Normal-bucket features are omitted;
/// the gender sentence (template 3) is always rendered.
pub fn coarse_summary(
    features: &SessionFeatures,
    standardizer: &Standardizer,
    config: AblationConfig,
) -> Vec<NarrativeTurn> {
    let mut turns = Vec::new();

    // template 1: talkativeness
    let mut line = String::new();
    push_fragment(&mut line, standardizer, "total_words", features.total_words as f64, "number of words");
    push_fragment(&mut line, standardizer, "distinct_words", features.distinct_words as f64, "number of distinct words");
    push_line(&mut turns, line);

    // template 2: big 5 personality
    let mut line = String::new();
    for (i, trait_name) in crate::clients::BIG5_TRAITS.iter().enumerate() {
        push_fragment(&mut line, standardizer, &format!("big5_{trait_name}"), features.big5[i], trait_name);
    }
    push_line(&mut turns, line);

    // template 3: gender, always rendered from the predicted gender
    let gender_text = match features.gender() {
        Gender::Female => "The participant is female .",
        Gender::Male => "The participant is male .",
    };
    turns.push(NarrativeTurn {
        kind: NarrativeKind::SummaryLine,
        text: gender_text.to_string(),
    });

    if config.includes_actions() {
        // template 4: laughter
        let mut line = String::new();
        push_fragment(&mut line, standardizer, "laughter_count", features.laughter_count as f64, "laughter counts");
        push_line(&mut turns, line);

        // template 5: one line per action unit
        for (i, (code, display)) in AU_DISPLAY.iter().enumerate() {
            let stats = &features.au_stats[i];
            let mut line = String::new();
            push_fragment(&mut line, standardizer, &format!("{code}_intensity_min"), stats.intensity.min, &format!("minimum {display}"));
            push_fragment(&mut line, standardizer, &format!("{code}_intensity_max"), stats.intensity.max, &format!("maximum {display}"));
            push_fragment(&mut line, standardizer, &format!("{code}_intensity_mean"), stats.intensity.mean, &format!("average {display}"));
            push_fragment(&mut line, standardizer, &format!("{code}_intensity_std"), stats.intensity.std, &format!("variance {display}"));
            push_fragment(&mut line, standardizer, &format!("{code}_presence_count"), stats.presence_count as f64, &format!("{display} counts"));
            push_line(&mut turns, line);
        }
    }

    if config.includes_prosody() {
        // template 6: delay summary
        let mut line = String::new();
        push_fragment(&mut line, standardizer, "delay_min_ms", features.delay_stats.min, "minimum delay");
        push_fragment(&mut line, standardizer, "delay_max_ms", features.delay_stats.max, "maximum delay");
        push_fragment(&mut line, standardizer, "delay_mean_ms", features.delay_stats.mean, "average delay");
        push_fragment(&mut line, standardizer, "delay_std_ms", features.delay_stats.std, "variance delay");
        push_line(&mut turns, line);

        // template 7: speech rate
        let mut line = String::new();
        push_fragment(&mut line, standardizer, "speech_rate_wpm", features.speech_rate_wpm, "speech rate");
        push_line(&mut turns, line);
    }

    turns
}

// ---------------------------------------------------------------------------
// Comprehension block (templates 8-9)
// ---------------------------------------------------------------------------

/// One Question/Answer pair per question; low-confidence or failed answers
/// become "not applicable".
pub fn comprehension_block(
    session: &Session,
    questions: &[&str],
    client: &dyn ComprehensionClient,
) -> Vec<NarrativeTurn> {
    let passage = session.participant_text();
    let mut turns = Vec::new();
    for question in questions {
        let answer = match client.comprehend(question, &passage) {
            Ok(ans) if ans.probability >= COMPREHENSION_MIN_PROBABILITY && !ans.answer.is_empty() => {
                ans.answer
            }
            Ok(_) => NOT_APPLICABLE.to_string(),
            Err(e) => {
                eprintln!("warning: comprehension client failed for {question:?}: {e}");
                NOT_APPLICABLE.to_string()
            }
        };
        turns.push(NarrativeTurn {
            kind: NarrativeKind::Question,
            text: (*question).to_string(),
        });
        turns.push(NarrativeTurn {
            kind: NarrativeKind::Answer,
            text: answer,
        });
    }
    turns
}

// ---------------------------------------------------------------------------
// Multimodal narrative (templates 10-13)
// ---------------------------------------------------------------------------

fn population_mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn turn_wpm(turn: &TalkTurn) -> Option<f64> {
    if turn.tokens.is_empty() || turn.duration_ms() <= 0 {
        return None;
    }
    Some(turn.tokens.len() as f64 / (turn.duration_ms() as f64 / 60_000.0))
}

/// Weaves one Utterance per transcript turn. Participant turns are composed
/// as: [after <words> milliseconds] [delay qualifier] "the participant"
/// [laughed and] [rate adverb] "said" <verbatim text>. Interviewer turns are
/// rendered as "the interviewer said <text>". The laughter annotation fires
/// only when a laughter window is completely contained within the turn
/// window. Delay and rate z-scores use within-session statistics only.
pub fn weave_narrative(session: &Session) -> Vec<NarrativeTurn> {
    // response latency per turn index (participant turns after an interviewer turn)
    let mut delay_by_turn: Vec<Option<i64>> = vec![None; session.turns.len()];
    for i in 1..session.turns.len() {
        if session.turns[i - 1].speaker == Speaker::Interviewer
            && session.turns[i].speaker == Speaker::Participant
        {
            delay_by_turn[i] = Some((session.turns[i].start_ms - session.turns[i - 1].end_ms).max(0));
        }
    }
    let delays: Vec<f64> = delay_by_turn.iter().flatten().map(|&d| d as f64).collect();
    let (delay_mean, delay_std) = population_mean_std(&delays);

    let rates: Vec<f64> = session
        .participant_turns()
        .filter_map(turn_wpm)
        .collect();
    let (rate_mean, rate_std) = population_mean_std(&rates);

    let mut turns = Vec::new();
    for (i, turn) in session.turns.iter().enumerate() {
        if turn.speaker == Speaker::Interviewer {
            let text = if turn.text.is_empty() {
                "the interviewer said".to_string()
            } else {
                format!("the interviewer said {}", turn.text)
            };
            turns.push(NarrativeTurn {
                kind: NarrativeKind::Utterance,
                text,
            });
            continue;
        }

        let mut parts: Vec<String> = Vec::new();
        if let Some(delay) = delay_by_turn[i] {
            if let Some(words) = delay_to_words(delay) {
                parts.push(format!("after {words} milliseconds"));
            }
            if delay_std > 0.0 {
                let z = (delay as f64 - delay_mean) / delay_std;
                if let Some(q) = delay_qualifier(z) {
                    parts.push(q.to_string());
                }
            }
        }
        parts.push("the participant".to_string());
        let laughed = session
            .laughter_events
            .iter()
            .any(|&(s, e)| s >= turn.start_ms && e <= turn.end_ms);
        if laughed {
            parts.push("laughed and".to_string());
        }
        if rate_std > 0.0 {
            if let Some(wpm) = turn_wpm(turn) {
                let z = (wpm - rate_mean) / rate_std;
                if let Some(adverb) = rate_adverb(z) {
                    parts.push(adverb.to_string());
                }
            }
        }
        parts.push("said".to_string());
        if !turn.text.is_empty() {
            parts.push(turn.text.clone());
        }
        turns.push(NarrativeTurn {
            kind: NarrativeKind::Utterance,
            text: parts.join(" "),
        });
    }
    turns
}

// ---------------------------------------------------------------------------
// Configuration assembly
// ---------------------------------------------------------------------------

/// Builds the text input for one ablation configuration: coarse summary for
/// the selected families, then the comprehension block, then the woven
/// narrative.
pub fn assemble_input(
    session: &Session,
    config: AblationConfig,
    features: &SessionFeatures,
    standardizer: &Standardizer,
    comprehension: &dyn ComprehensionClient,
) -> NarrativeDocument {
    let mut turns = coarse_summary(features, standardizer, config);
    if config.includes_comprehension() {
        let mut questions: Vec<&str> = YANG_QUESTIONS.to_vec();
        questions.extend(DSM5_QUESTIONS);
        turns.extend(comprehension_block(session, &questions, comprehension));
    }
    if config.includes_narrative() {
        turns.extend(weave_narrative(session));
    }
    NarrativeDocument { turns }
}
