//! Synthetic dyadic interview corpus with planted severity-correlated
//! signals, so the full pipeline is exercisable end to end: higher severity
//! means longer response delays, slower speech, fewer laughs, and more
//! depressive vocabulary.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::corpus::{
    AuFrame, Corpus, Gender, Session, Speaker, TalkTurn, AU_CODES, EGEMAPS_FEATURES, PHQ_MAX,
};
use crate::error::{Error, Result};
use crate::eval::pcc;

/// Fixed interviewer script. The questions share content words with the
/// comprehension question set so extractive answers carry signal too.
pub const INTERVIEW_SCRIPT: [&str; 10] = [
    "how are you feeling lately",
    "are you sleeping well at night",
    "do you still enjoy your hobbies and interests",
    "do you feel tired during the day",
    "tell me about your friends and family",
    "what do you do to relax",
    "do you ever feel worthless or guilty",
    "how is your appetite these days",
    "do you feel depressed most of the day",
    "what are you looking forward to",
];

/// Neutral vocabulary pool for low-severity answers.
const NEUTRAL_WORDS: [&str; 24] = [
    "fine", "good", "great", "well", "happy", "okay", "cheerful", "relaxed", "friends", "garden",
    "music", "walking", "cooking", "reading", "work", "family", "sunshine", "weekend", "coffee",
    "movies", "games", "travel", "laughing", "energetic",
];

/// Depressive vocabulary pool; overlaps the neuroticism lexicon and the
/// screening questions' content words so every downstream channel can
/// pick the signal up.
const DEPRESSIVE_WORDS: [&str; 24] = [
    "sad", "tired", "worthless", "hopeless", "empty", "anxious", "worried", "nervous", "afraid",
    "stress", "upset", "tense", "fear", "overwhelmed", "exhausted", "sleepless", "depressed",
    "lonely", "guilty", "numb", "heavy", "dying", "crying", "nothing",
];

#[derive(Debug, Clone)]
pub struct SynthParams {
    pub n_sessions: usize,
    pub seed: u64,
    /// Additional response latency per severity point (ms).
    pub delay_slope_ms: f64,
    /// Speech-rate change per severity point (wpm, negative for slowing).
    pub rate_slope_wpm: f64,
    /// Per-turn word-count change per severity point (negative for terser).
    pub words_slope: f64,
    /// Laughter-event rate change per severity point (negative).
    pub laughter_slope: f64,
    /// Depressive-lexicon mixture weight per severity point.
    pub lexicon_slope: f64,
    /// Action-unit intensity shift per severity point.
    pub au_slope: f64,
    pub delay_noise_ms: f64,
    pub rate_noise_wpm: f64,
    pub au_noise: f64,
    pub egemaps_noise: f64,
    /// Distance between gender clusters in the acoustic windows.
    pub gender_separation: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            n_sessions: 120,
            seed: 1,
            delay_slope_ms: 120.0,
            rate_slope_wpm: -3.0,
            words_slope: -0.6,
            laughter_slope: -0.25,
            lexicon_slope: 0.04,
            au_slope: 0.05,
            delay_noise_ms: 120.0,
            rate_noise_wpm: 8.0,
            au_noise: 0.3,
            egemaps_noise: 1.0,
            gender_separation: 3.0,
        }
    }
}

impl SynthParams {
    /// All planted effects removed; the pipeline should find nothing.
    pub fn null(n_sessions: usize, seed: u64) -> Self {
        SynthParams {
            n_sessions,
            seed,
            delay_slope_ms: 0.0,
            rate_slope_wpm: 0.0,
            words_slope: 0.0,
            laughter_slope: 0.0,
            lexicon_slope: 0.0,
            au_slope: 0.0,
            ..SynthParams::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_sessions == 0 {
            return Err(Error::InvalidInput("n_sessions must be >= 1".into()));
        }
        for (name, v) in [
            ("delay_noise_ms", self.delay_noise_ms),
            ("rate_noise_wpm", self.rate_noise_wpm),
            ("au_noise", self.au_noise),
            ("egemaps_noise", self.egemaps_noise),
        ] {
            if v < 0.0 || !v.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "{name} must be a non-negative number, got {v}"
                )));
            }
        }
        Ok(())
    }
}

fn normal(mean: f64, std: f64, rng: &mut ChaCha20Rng) -> f64 {
    if std == 0.0 {
        return mean;
    }
    Normal::new(mean, std).expect("finite std").sample(rng)
}

/// Right-skewed severity draw mimicking a screening-score histogram: most
/// participants score low, a moderate shoulder, and a small severe tail.
fn draw_severity(rng: &mut ChaCha20Rng) -> f64 {
    let u: f64 = rng.gen();
    let s = if u < 0.6 {
        normal(3.0, 3.0, rng).abs()
    } else if u < 0.9 {
        normal(9.0, 4.0, rng)
    } else {
        normal(17.0, 4.0, rng)
    };
    s.clamp(0.0, PHQ_MAX as f64)
}

fn answer_words(severity: f64, count: usize, params: &SynthParams, rng: &mut ChaCha20Rng) -> String {
    let weight = (0.05 + params.lexicon_slope * severity).clamp(0.0, 1.0);
    let mut words = Vec::with_capacity(count);
    for _ in 0..count {
        let pool: &[&str] = if rng.gen::<f64>() < weight {
            &DEPRESSIVE_WORDS
        } else {
            &NEUTRAL_WORDS
        };
        words.push(pool[rng.gen_range(0..pool.len())]);
    }
    format!("i feel {}", words.join(" "))
}

fn generate_session(idx: usize, params: &SynthParams, seed: u64) -> Session {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let severity = draw_severity(&mut rng);
    let gender = if rng.gen::<bool>() {
        Gender::Female
    } else {
        Gender::Male
    };

    let interviewer_wpm = 150.0;
    let mut turns = Vec::new();
    let mut cursor: i64 = 0;
    for question in INTERVIEW_SCRIPT {
        let q_words = question.split_whitespace().count() as f64;
        let q_end = cursor + (q_words / interviewer_wpm * 60_000.0) as i64;
        turns.push(TalkTurn::new(Speaker::Interviewer, cursor, q_end, question));

        let delay = normal(
            300.0 + params.delay_slope_ms * severity,
            params.delay_noise_ms,
            &mut rng,
        )
        .max(0.0) as i64;
        let wpm = normal(
            170.0 + params.rate_slope_wpm * severity,
            params.rate_noise_wpm,
            &mut rng,
        )
        .max(40.0);
        let n_words =
            (normal(18.0 + params.words_slope * severity, 2.0, &mut rng).round() as i64).max(4)
                as usize;
        let text = answer_words(severity, n_words, params, &mut rng);
        let spoken = text.split_whitespace().count() as f64;
        let start = q_end + delay;
        let end = start + ((spoken / wpm * 60_000.0) as i64).max(1);
        turns.push(TalkTurn::new(Speaker::Participant, start, end, text));
        cursor = end + 500;
    }

    // laughter fully contained in participant turns
    let lambda = (5.0 + params.laughter_slope * severity * 4.0).max(0.0);
    let n_laughs = if lambda > 0.0 {
        Poisson::new(lambda).expect("positive lambda").sample(&mut rng) as usize
    } else {
        0
    };
    let participant_spans: Vec<(i64, i64)> = turns
        .iter()
        .filter(|t| t.speaker == Speaker::Participant && t.duration_ms() > 40)
        .map(|t| (t.start_ms, t.end_ms))
        .collect();
    let mut laughter_events = Vec::new();
    for _ in 0..n_laughs {
        let (s, e) = participant_spans[rng.gen_range(0..participant_spans.len())];
        let len = ((e - s) / 4).clamp(10, 800);
        let start = rng.gen_range(s..=e - len);
        laughter_events.push((start, start + len));
    }
    laughter_events.sort_unstable();

    // acoustic windows: one per participant turn; female and male sessions
    // sit in separated clusters so the gender model has something to learn
    let gender_shift = match gender {
        Gender::Female => params.gender_separation / 2.0,
        Gender::Male => -params.gender_separation / 2.0,
    };
    let egemaps = participant_spans
        .iter()
        .map(|_| {
            EGEMAPS_FEATURES
                .iter()
                .enumerate()
                .map(|(j, _)| {
                    let base = if j < 8 { gender_shift } else { 0.0 };
                    normal(base, params.egemaps_noise, &mut rng)
                })
                .collect()
        })
        .collect();

    // facial action-unit frames sampled across the session
    let session_end = turns.last().map(|t| t.end_ms).unwrap_or(0);
    let n_frames = 40;
    let au_frames = (0..n_frames)
        .map(|i| {
            let frame_ms = session_end * i as i64 / n_frames as i64;
            let mut intensity = [0.0; 4];
            let mut presence = [false; 4];
            for k in 0..AU_CODES.len() {
                let v = normal(1.0 + params.au_slope * severity, params.au_noise, &mut rng)
                    .max(0.0);
                intensity[k] = v;
                presence[k] = v > 1.0;
            }
            AuFrame {
                frame_ms,
                intensity,
                presence,
            }
        })
        .collect();

    Session {
        id: format!("synth{idx:04}"),
        turns,
        egemaps,
        au_frames,
        laughter_events,
        phq: Some((severity.round() as i32).clamp(0, PHQ_MAX)),
        gender: Some(gender),
    }
}

pub fn generate(params: &SynthParams) -> Result<Corpus> {
    params.validate()?;
    let mut master = ChaCha20Rng::seed_from_u64(params.seed);
    let session_seeds: Vec<u64> = (0..params.n_sessions).map(|_| master.gen()).collect();
    let sessions = session_seeds
        .iter()
        .enumerate()
        .map(|(i, &seed)| generate_session(i, params, seed))
        .collect();
    Ok(Corpus {
        sessions,
        split_labels: None,
    })
}

/// Empirical correlation of each planted channel with the labels; used to
/// calibrate acceptance thresholds against what the generator actually
/// planted.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSummary {
    pub delay_corr: f64,
    pub rate_corr: f64,
    pub words_corr: f64,
    pub laughter_corr: f64,
    pub lexicon_corr: f64,
    pub au_corr: f64,
}

pub fn describe(corpus: &Corpus) -> Result<SynthSummary> {
    let labels: Vec<f64> = corpus
        .sessions
        .iter()
        .map(|s| s.phq.unwrap_or(0) as f64)
        .collect();
    let mut delays = Vec::new();
    let mut rates = Vec::new();
    let mut words = Vec::new();
    let mut laughs = Vec::new();
    let mut lexicon = Vec::new();
    let mut au = Vec::new();
    for session in &corpus.sessions {
        let delay_seq = crate::features::delay_sequence(session);
        delays.push(if delay_seq.is_empty() {
            0.0
        } else {
            delay_seq.iter().map(|&d| d as f64).sum::<f64>() / delay_seq.len() as f64
        });
        rates.push(crate::features::avg_speech_rate(session));
        let tokens: Vec<&String> = session
            .participant_turns()
            .flat_map(|t| t.tokens.iter())
            .collect();
        words.push(tokens.len() as f64);
        let depressive = tokens
            .iter()
            .filter(|t| DEPRESSIVE_WORDS.contains(&t.as_str()))
            .count();
        lexicon.push(if tokens.is_empty() {
            0.0
        } else {
            depressive as f64 / tokens.len() as f64
        });
        laughs.push(session.laughter_events.len() as f64);
        let mean_intensity: f64 = if session.au_frames.is_empty() {
            0.0
        } else {
            session
                .au_frames
                .iter()
                .flat_map(|f| f.intensity.iter())
                .sum::<f64>()
                / (4 * session.au_frames.len()) as f64
        };
        au.push(mean_intensity);
    }
    Ok(SynthSummary {
        delay_corr: pcc(&labels, &delays)?,
        rate_corr: pcc(&labels, &rates)?,
        words_corr: pcc(&labels, &words)?,
        laughter_corr: pcc(&labels, &laughs)?,
        lexicon_corr: pcc(&labels, &lexicon)?,
        au_corr: pcc(&labels, &au)?,
    })
}
