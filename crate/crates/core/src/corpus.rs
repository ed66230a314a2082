//! Domain types for dyadic interview sessions and ingestion of the on-disk
//! corpus layout.
//!
//! A corpus root holds a `manifest.csv` listing session directories (with an
//! optional fold assignment), and one directory per session containing
//! `transcript.csv`, `egemaps.csv`, `au.csv`, `laughter.csv`, `label.txt` and
//! an optional `gender.txt`. All times are integer milliseconds.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PHQ_MIN: i32 = 0;
pub const PHQ_MAX: i32 = 24;

/// The 16 acoustic features expected in every `egemaps.csv` row.
pub const EGEMAPS_FEATURES: [&str; 16] = [
    "loudness",
    "alpha_ratio",
    "hammarberg_index",
    "spectral_slope_0_500",
    "spectral_slope_500_1500",
    "spectral_flux",
    "mfcc1",
    "mfcc2",
    "mfcc3",
    "mfcc4",
    "f0_semitone",
    "jitter",
    "shimmer",
    "hnr",
    "h1_h2",
    "h1_a3",
];

pub const EGEMAPS_DIM: usize = 16;

/// Action units tracked per frame, in column order.
pub const AU_CODES: [&str; 4] = ["au5", "au17", "au20", "au25"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Speaker {
    Interviewer,
    Participant,
}

impl fmt::Display for Speaker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Speaker::Interviewer => write!(f, "interviewer"),
            Speaker::Participant => write!(f, "participant"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Gender {
    Female,
    Male,
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Gender::Female => write!(f, "female"),
            Gender::Male => write!(f, "male"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TalkTurn {
    pub speaker: Speaker,
    pub start_ms: i64,
    pub end_ms: i64,
    pub text: String,
    /// Lowercase tokens derived from `text` at construction.
    pub tokens: Vec<String>,
}

impl TalkTurn {
    pub fn new(speaker: Speaker, start_ms: i64, end_ms: i64, text: impl Into<String>) -> Self {
        let text = text.into();
        let tokens = tokenize(&text);
        TalkTurn {
            speaker,
            start_ms,
            end_ms,
            text,
            tokens,
        }
    }

    pub fn duration_ms(&self) -> i64 {
        self.end_ms - self.start_ms
    }
}

/// One frame of the action-unit track: real intensity plus binary presence
/// for AU5, AU17, AU20, AU25.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuFrame {
    pub frame_ms: i64,
    pub intensity: [f64; 4],
    pub presence: [bool; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub turns: Vec<TalkTurn>,
    /// Per-window acoustic feature rows, each of length [`EGEMAPS_DIM`].
    pub egemaps: Vec<Vec<f64>>,
    pub au_frames: Vec<AuFrame>,
    /// Laughter windows as (start_ms, end_ms).
    pub laughter_events: Vec<(i64, i64)>,
    /// PHQ label in [0, 24]; absent at inference time.
    pub phq: Option<i32>,
    /// Optional reported gender, used to train the gender classifier.
    pub gender: Option<Gender>,
}

impl Session {
    pub fn participant_turns(&self) -> impl Iterator<Item = &TalkTurn> {
        self.turns
            .iter()
            .filter(|t| t.speaker == Speaker::Participant)
    }

    /// Participant transcript joined with newlines (one line per turn).
    pub fn participant_text(&self) -> String {
        let lines: Vec<&str> = self
            .participant_turns()
            .map(|t| t.text.as_str())
            .collect();
        lines.join("\n")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub sessions: Vec<Session>,
    /// Optional fold assignment per session, parallel to `sessions`.
    pub split_labels: Option<Vec<usize>>,
}

impl Corpus {
    pub fn session(&self, id: &str) -> Option<&Session> {
        self.sessions.iter().find(|s| s.id == id)
    }
}

/// Lowercases, strips punctuation except intra-word apostrophes, splits on
/// whitespace. Empty text yields an empty list.
pub fn tokenize(text: &str) -> Vec<String> {
    let lowered = text.to_lowercase();
    let mut tokens = Vec::new();
    for raw in lowered.split_whitespace() {
        let chars: Vec<char> = raw.chars().collect();
        let mut tok = String::new();
        for (i, &c) in chars.iter().enumerate() {
            if c.is_alphanumeric() {
                tok.push(c);
            } else if c == '\'' {
                let prev_ok = i > 0 && chars[i - 1].is_alphanumeric();
                let next_ok = i + 1 < chars.len() && chars[i + 1].is_alphanumeric();
                if prev_ok && next_ok {
                    tok.push(c);
                }
            }
        }
        if !tok.is_empty() {
            tokens.push(tok);
        }
    }
    tokens
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_i64(field: &str, file: &Path, line: usize, what: &str) -> Result<i64> {
    field
        .trim()
        .parse::<i64>()
        .map_err(|_| Error::parse(file, line, format!("{what}: not an integer: {field:?}")))
}

fn parse_f64(field: &str, file: &Path, line: usize, what: &str) -> Result<f64> {
    field
        .trim()
        .parse::<f64>()
        .map_err(|_| Error::parse(file, line, format!("{what}: not a number: {field:?}")))
}

fn parse_transcript(path: &Path) -> Result<Vec<TalkTurn>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)
        .map_err(|e| Error::parse(path, 0, e.to_string()))?;
    let mut turns = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2; // header is line 1
        let record = record.map_err(|e| Error::parse(path, line, e.to_string()))?;
        if record.len() < 4 {
            return Err(Error::parse(path, line, "expected 4 columns"));
        }
        let speaker = match record[0].trim().to_lowercase().as_str() {
            "interviewer" => Speaker::Interviewer,
            "participant" => Speaker::Participant,
            other => {
                return Err(Error::parse(
                    path,
                    line,
                    format!("unknown speaker {other:?}"),
                ))
            }
        };
        let start_ms = parse_i64(&record[1], path, line, "start_ms")?;
        let end_ms = parse_i64(&record[2], path, line, "end_ms")?;
        if start_ms < 0 {
            return Err(Error::parse(path, line, "start_ms must be >= 0"));
        }
        if end_ms < start_ms {
            return Err(Error::parse(
                path,
                line,
                format!("end_ms {end_ms} < start_ms {start_ms}"),
            ));
        }
        turns.push(TalkTurn::new(speaker, start_ms, end_ms, record[3].to_string()));
    }
    for pair in turns.windows(2) {
        if pair[1].start_ms < pair[0].start_ms {
            return Err(Error::parse(
                path,
                0,
                format!(
                    "turns not sorted by start_ms ({} after {})",
                    pair[1].start_ms, pair[0].start_ms
                ),
            ));
        }
    }
    Ok(turns)
}

fn parse_egemaps(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::parse(path, 0, e.to_string()))?;
    {
        let headers = reader
            .headers()
            .map_err(|e| Error::parse(path, 1, e.to_string()))?;
        if headers.len() != EGEMAPS_DIM {
            return Err(Error::parse(
                path,
                1,
                format!("expected {} columns, found {}", EGEMAPS_DIM, headers.len()),
            ));
        }
    }
    let mut rows = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2;
        let record = record.map_err(|e| Error::parse(path, line, e.to_string()))?;
        let mut row = Vec::with_capacity(EGEMAPS_DIM);
        for (col, field) in record.iter().enumerate() {
            row.push(parse_f64(field, path, line, EGEMAPS_FEATURES[col])?);
        }
        rows.push(row);
    }
    Ok(rows)
}

fn parse_au(path: &Path) -> Result<Vec<AuFrame>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::parse(path, 0, e.to_string()))?;
    let mut frames = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2;
        let record = record.map_err(|e| Error::parse(path, line, e.to_string()))?;
        if record.len() != 9 {
            return Err(Error::parse(path, line, "expected 9 columns"));
        }
        let frame_ms = parse_i64(&record[0], path, line, "frame_ms")?;
        let mut intensity = [0.0; 4];
        let mut presence = [false; 4];
        for i in 0..4 {
            intensity[i] = parse_f64(&record[1 + i], path, line, AU_CODES[i])?;
        }
        for i in 0..4 {
            let v = parse_f64(&record[5 + i], path, line, AU_CODES[i])?;
            if v != 0.0 && v != 1.0 {
                return Err(Error::parse(
                    path,
                    line,
                    format!("{}_c must be 0 or 1, found {v}", AU_CODES[i]),
                ));
            }
            presence[i] = v == 1.0;
        }
        frames.push(AuFrame {
            frame_ms,
            intensity,
            presence,
        });
    }
    Ok(frames)
}

fn parse_laughter(path: &Path) -> Result<Vec<(i64, i64)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::parse(path, 0, e.to_string()))?;
    let mut events = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2;
        let record = record.map_err(|e| Error::parse(path, line, e.to_string()))?;
        if record.len() < 2 {
            return Err(Error::parse(path, line, "expected 2 columns"));
        }
        let start = parse_i64(&record[0], path, line, "start_ms")?;
        let end = parse_i64(&record[1], path, line, "end_ms")?;
        if end < start {
            return Err(Error::parse(
                path,
                line,
                format!("laughter end {end} < start {start}"),
            ));
        }
        events.push((start, end));
    }
    Ok(events)
}

pub fn parse_session(dir: &Path, id: &str) -> Result<Session> {
    let turns = parse_transcript(&dir.join("transcript.csv"))?;

    let egemaps_path = dir.join("egemaps.csv");
    let egemaps = if egemaps_path.exists() {
        parse_egemaps(&egemaps_path)?
    } else {
        Vec::new()
    };

    let au_path = dir.join("au.csv");
    let au_frames = if au_path.exists() {
        parse_au(&au_path)?
    } else {
        Vec::new()
    };

    let laughter_path = dir.join("laughter.csv");
    let laughter_events = if laughter_path.exists() {
        parse_laughter(&laughter_path)?
    } else {
        Vec::new()
    };

    let label_path = dir.join("label.txt");
    let phq = if label_path.exists() {
        let raw = read_to_string(&label_path)?;
        let value = raw.trim().parse::<i32>().map_err(|_| {
            Error::parse(&label_path, 1, format!("PHQ label not an integer: {raw:?}"))
        })?;
        if !(PHQ_MIN..=PHQ_MAX).contains(&value) {
            return Err(Error::parse(
                &label_path,
                1,
                format!("PHQ label {value} out of range [{PHQ_MIN}, {PHQ_MAX}]"),
            ));
        }
        Some(value)
    } else {
        None
    };

    let gender_path = dir.join("gender.txt");
    let gender = if gender_path.exists() {
        let raw = read_to_string(&gender_path)?;
        match raw.trim().to_lowercase().as_str() {
            "female" => Some(Gender::Female),
            "male" => Some(Gender::Male),
            other => {
                return Err(Error::parse(
                    &gender_path,
                    1,
                    format!("expected female or male, found {other:?}"),
                ))
            }
        }
    } else {
        None
    };

    Ok(Session {
        id: id.to_string(),
        turns,
        egemaps,
        au_frames,
        laughter_events,
        phq,
        gender,
    })
}

/// Reads a corpus from `root` following the manifest.
pub fn parse_corpus(root: &Path) -> Result<Corpus> {
    let manifest = root.join("manifest.csv");
    let content = read_to_string(&manifest)?;
    let mut sessions = Vec::new();
    let mut folds: Vec<Option<usize>> = Vec::new();
    for (idx, line) in content.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.trim();
        if line.is_empty() || (idx == 0 && line.starts_with("session")) {
            continue;
        }
        let mut parts = line.split(',');
        let dir_name = parts.next().unwrap().trim();
        let fold = match parts.next().map(str::trim) {
            None | Some("") => None,
            Some(raw) => Some(raw.parse::<usize>().map_err(|_| {
                Error::parse(&manifest, line_no, format!("bad fold value {raw:?}"))
            })?),
        };
        let dir = root.join(dir_name);
        let session = parse_session(&dir, dir_name).map_err(|e| Error::Session {
            session: dir_name.to_string(),
            message: e.to_string(),
        })?;
        sessions.push(session);
        folds.push(fold);
    }
    let split_labels = if folds.iter().all(|f| f.is_some()) && !folds.is_empty() {
        Some(folds.into_iter().map(|f| f.unwrap()).collect())
    } else {
        None
    };
    Ok(Corpus {
        sessions,
        split_labels,
    })
}

// ---------------------------------------------------------------------------
// Serialization (inverse of parse_corpus on well-formed corpora)
// ---------------------------------------------------------------------------

fn write_file(path: &Path, content: &str) -> Result<()> {
    fs::write(path, content).map_err(|e| Error::io(path, e))
}

pub fn write_session(dir: &Path, session: &Session) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut transcript = String::from("speaker,start_ms,end_ms,text\n");
    for turn in &session.turns {
        let text = if turn.text.contains(',') || turn.text.contains('"') {
            format!("\"{}\"", turn.text.replace('"', "\"\""))
        } else {
            turn.text.clone()
        };
        transcript.push_str(&format!(
            "{},{},{},{}\n",
            turn.speaker, turn.start_ms, turn.end_ms, text
        ));
    }
    write_file(&dir.join("transcript.csv"), &transcript)?;

    if !session.egemaps.is_empty() {
        let mut out = EGEMAPS_FEATURES.join(",");
        out.push('\n');
        for row in &session.egemaps {
            let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        write_file(&dir.join("egemaps.csv"), &out)?;
    }

    if !session.au_frames.is_empty() {
        let mut out = String::from(
            "frame_ms,au5_r,au17_r,au20_r,au25_r,au5_c,au17_c,au20_c,au25_c\n",
        );
        for frame in &session.au_frames {
            out.push_str(&format!("{}", frame.frame_ms));
            for v in frame.intensity {
                out.push_str(&format!(",{v}"));
            }
            for p in frame.presence {
                out.push_str(if p { ",1" } else { ",0" });
            }
            out.push('\n');
        }
        write_file(&dir.join("au.csv"), &out)?;
    }

    if !session.laughter_events.is_empty() {
        let mut out = String::from("start_ms,end_ms\n");
        for (s, e) in &session.laughter_events {
            out.push_str(&format!("{s},{e}\n"));
        }
        write_file(&dir.join("laughter.csv"), &out)?;
    }

    if let Some(phq) = session.phq {
        write_file(&dir.join("label.txt"), &format!("{phq}\n"))?;
    }
    if let Some(gender) = session.gender {
        write_file(&dir.join("gender.txt"), &format!("{gender}\n"))?;
    }
    Ok(())
}

/// Writes `corpus` under `root` in the layout that `parse_corpus` reads.
pub fn write_corpus(root: &Path, corpus: &Corpus) -> Result<()> {
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let mut manifest = String::from("session,fold\n");
    for (i, session) in corpus.sessions.iter().enumerate() {
        let fold = corpus
            .split_labels
            .as_ref()
            .map(|f| f[i].to_string())
            .unwrap_or_default();
        manifest.push_str(&format!("{},{}\n", session.id, fold));
        write_session(&root.join(&session.id), session)?;
    }
    write_file(&root.join("manifest.csv"), &manifest)
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub session: String,
    pub message: String,
}

/// Collects every invariant violation; an empty report means the corpus is
/// well-formed. Never fails.
pub fn validate(corpus: &Corpus) -> Vec<Violation> {
    let mut report = Vec::new();
    let mut seen = BTreeSet::new();
    for session in &corpus.sessions {
        if !seen.insert(session.id.clone()) {
            report.push(Violation {
                session: session.id.clone(),
                message: "duplicate session id".to_string(),
            });
        }
        for (i, turn) in session.turns.iter().enumerate() {
            if turn.end_ms < turn.start_ms {
                report.push(Violation {
                    session: session.id.clone(),
                    message: format!("turn {i}: end_ms < start_ms"),
                });
            }
            if turn.start_ms < 0 {
                report.push(Violation {
                    session: session.id.clone(),
                    message: format!("turn {i}: negative start_ms"),
                });
            }
            let has_word = turn.text.chars().any(|c| c.is_alphanumeric());
            if has_word != !turn.tokens.is_empty() {
                report.push(Violation {
                    session: session.id.clone(),
                    message: format!("turn {i}: tokens inconsistent with text"),
                });
            }
        }
        for pair in session.turns.windows(2) {
            if pair[1].start_ms < pair[0].start_ms {
                report.push(Violation {
                    session: session.id.clone(),
                    message: "turns not sorted by start_ms".to_string(),
                });
                break;
            }
        }
        for (i, (s, e)) in session.laughter_events.iter().enumerate() {
            if e < s {
                report.push(Violation {
                    session: session.id.clone(),
                    message: format!("laughter event {i}: end < start"),
                });
            }
        }
        for (i, row) in session.egemaps.iter().enumerate() {
            if row.len() != EGEMAPS_DIM {
                report.push(Violation {
                    session: session.id.clone(),
                    message: format!("egemaps row {i}: expected {EGEMAPS_DIM} features"),
                });
            }
        }
        if let Some(phq) = session.phq {
            if !(PHQ_MIN..=PHQ_MAX).contains(&phq) {
                report.push(Violation {
                    session: session.id.clone(),
                    message: format!("phq {phq} out of range [{PHQ_MIN}, {PHQ_MAX}]"),
                });
            }
        }
    }
    report
}
