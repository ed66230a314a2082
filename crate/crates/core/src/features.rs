//! Session-level numeric features: talkativeness, Big-5 percentiles,
//! predicted gender, laughter count, AU summary statistics, inter-turn delay
//! statistics and average speech rate.
//!
//! All moments are population moments (divide by n) so downstream z-scores
//! and the concordance metric are bit-reproducible.

use serde::{Deserialize, Serialize};

use crate::clients::PersonalityClient;
use crate::corpus::{Gender, Session, Speaker, AU_CODES, EGEMAPS_DIM};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub std: f64,
}

impl SummaryStats {
    pub fn zeros() -> Self {
        SummaryStats {
            min: 0.0,
            max: 0.0,
            mean: 0.0,
            std: 0.0,
        }
    }
}

/// Population moments of a series; `None` for an empty series (the caller
/// substitutes zeros).
pub fn summary_stats(series: &[f64]) -> Option<SummaryStats> {
    if series.is_empty() {
        return None;
    }
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let var = series.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let min = series.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = series.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Some(SummaryStats {
        min,
        max,
        mean,
        std: var.sqrt(),
    })
}

/// Word counts over participant turns only: (total, distinct).
pub fn talkativeness(session: &Session) -> (usize, usize) {
    let mut total = 0usize;
    let mut distinct = std::collections::BTreeSet::new();
    for turn in session.participant_turns() {
        total += turn.tokens.len();
        distinct.extend(turn.tokens.iter().cloned());
    }
    (total, distinct.len())
}

pub fn laughter_count(session: &Session) -> usize {
    session.laughter_events.len()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuStats {
    pub intensity: SummaryStats,
    pub presence_count: usize,
}

/// Per-AU intensity summary statistics plus presence-frame counts. Empty
/// tracks yield all-zero stats so partial sessions flow through ablations.
pub fn au_summary(session: &Session) -> [AuStats; 4] {
    let mut out = [AuStats {
        intensity: SummaryStats::zeros(),
        presence_count: 0,
    }; 4];
    if session.au_frames.is_empty() {
        return out;
    }
    for (i, stats) in out.iter_mut().enumerate() {
        let series: Vec<f64> = session.au_frames.iter().map(|f| f.intensity[i]).collect();
        stats.intensity = summary_stats(&series).unwrap_or_else(SummaryStats::zeros);
        stats.presence_count = session.au_frames.iter().filter(|f| f.presence[i]).count();
    }
    out
}

/// Participant response latencies: one entry per participant turn that
/// follows an interviewer turn, floored at zero for overlaps.
pub fn delay_sequence(session: &Session) -> Vec<i64> {
    let mut delays = Vec::new();
    for pair in session.turns.windows(2) {
        if pair[0].speaker == Speaker::Interviewer && pair[1].speaker == Speaker::Participant {
            delays.push((pair[1].start_ms - pair[0].end_ms).max(0));
        }
    }
    delays
}

/// Total participant words over total participant talk-turn minutes; zero
/// duration yields 0.
pub fn avg_speech_rate(session: &Session) -> f64 {
    let (total_words, _) = talkativeness(session);
    let duration_ms: i64 = session.participant_turns().map(|t| t.duration_ms()).sum();
    if duration_ms <= 0 {
        return 0.0;
    }
    total_words as f64 / (duration_ms as f64 / 60_000.0)
}

// ---------------------------------------------------------------------------
// Gender model
// ---------------------------------------------------------------------------

/// L2-regularized logistic regression over standardized egemaps windows.
/// The positive class is Female.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenderModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub feature_mean: Vec<f64>,
    pub feature_std: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

const GENDER_LR: f64 = 0.5;
const GENDER_L2: f64 = 1e-3;
const GENDER_ITERS: usize = 500;

/// Fits by full-batch gradient descent from zero initialization; fully
/// deterministic.
pub fn train_gender_model(rows: &[Vec<f64>], labels: &[Gender]) -> Result<GenderModel> {
    if rows.len() != labels.len() {
        return Err(Error::InvalidInput(
            "gender training rows and labels differ in length".into(),
        ));
    }
    if rows.is_empty() {
        return Err(Error::InvalidInput("no gender training rows".into()));
    }
    let has_female = labels.iter().any(|g| *g == Gender::Female);
    let has_male = labels.iter().any(|g| *g == Gender::Male);
    if !has_female || !has_male {
        return Err(Error::InvalidInput(
            "gender training requires both classes".into(),
        ));
    }
    let dim = rows[0].len();
    if dim != EGEMAPS_DIM || rows.iter().any(|r| r.len() != dim) {
        return Err(Error::InvalidInput(format!(
            "gender training rows must have {EGEMAPS_DIM} features"
        )));
    }

    let n = rows.len() as f64;
    let mut mean = vec![0.0; dim];
    for row in rows {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut std = vec![0.0; dim];
    for row in rows {
        for ((s, v), m) in std.iter_mut().zip(row).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    for s in &mut std {
        *s = (*s / n).sqrt();
        if *s == 0.0 {
            *s = 1.0;
        }
    }

    let standardized: Vec<Vec<f64>> = rows
        .iter()
        .map(|row| {
            row.iter()
                .zip(mean.iter().zip(&std))
                .map(|(v, (m, s))| (v - m) / s)
                .collect()
        })
        .collect();
    let targets: Vec<f64> = labels
        .iter()
        .map(|g| if *g == Gender::Female { 1.0 } else { 0.0 })
        .collect();

    let mut weights = vec![0.0; dim];
    let mut bias = 0.0;
    for _ in 0..GENDER_ITERS {
        let mut grad_w = vec![0.0; dim];
        let mut grad_b = 0.0;
        for (row, &t) in standardized.iter().zip(&targets) {
            let z = row.iter().zip(&weights).map(|(x, w)| x * w).sum::<f64>() + bias;
            let err = sigmoid(z) - t;
            for (g, x) in grad_w.iter_mut().zip(row) {
                *g += err * x;
            }
            grad_b += err;
        }
        for (w, g) in weights.iter_mut().zip(&grad_w) {
            *w -= GENDER_LR * (g / n + GENDER_L2 * *w);
        }
        bias -= GENDER_LR * grad_b / n;
    }
    if weights.iter().any(|w| !w.is_finite()) || !bias.is_finite() {
        return Err(Error::Diverged("gender model weights not finite".into()));
    }
    Ok(GenderModel {
        weights,
        bias,
        feature_mean: mean,
        feature_std: std,
    })
}

impl GenderModel {
    pub fn window_probability(&self, row: &[f64]) -> f64 {
        let z = row
            .iter()
            .zip(self.feature_mean.iter().zip(&self.feature_std))
            .zip(&self.weights)
            .map(|((v, (m, s)), w)| w * (v - m) / s)
            .sum::<f64>()
            + self.bias;
        sigmoid(z)
    }
}

/// Averages window probabilities over the session; ties at 0.5 go to Female.
pub fn predict_gender(model: &GenderModel, egemaps: &[Vec<f64>]) -> Result<Gender> {
    if egemaps.is_empty() {
        return Err(Error::InvalidInput(
            "cannot predict gender from empty egemaps".into(),
        ));
    }
    let mean_p = egemaps
        .iter()
        .map(|row| model.window_probability(row))
        .sum::<f64>()
        / egemaps.len() as f64;
    Ok(if mean_p >= 0.5 {
        Gender::Female
    } else {
        Gender::Male
    })
}

/// Pooled cross-validated accuracy of the gender model on labeled rows.
pub fn gender_cv_accuracy(
    rows: &[Vec<f64>],
    labels: &[Gender],
    k: usize,
    seed: u64,
) -> Result<f64> {
    let ids: Vec<String> = (0..rows.len()).map(|i| i.to_string()).collect();
    let folds = crate::eval::kfold_split(&ids, k, seed)?;
    let mut correct = 0usize;
    for fold in 0..k {
        let mut train_rows = Vec::new();
        let mut train_labels = Vec::new();
        let mut test_idx = Vec::new();
        for (i, &f) in folds.iter().enumerate() {
            if f == fold {
                test_idx.push(i);
            } else {
                train_rows.push(rows[i].clone());
                train_labels.push(labels[i]);
            }
        }
        let model = train_gender_model(&train_rows, &train_labels)?;
        for i in test_idx {
            let predicted = if model.window_probability(&rows[i]) >= 0.5 {
                Gender::Female
            } else {
                Gender::Male
            };
            if predicted == labels[i] {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / rows.len() as f64)
}

// ---------------------------------------------------------------------------
// Assembled feature vector
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionFeatures {
    pub total_words: usize,
    pub distinct_words: usize,
    /// Openness, conscientiousness, extraversion, agreeableness, neuroticism.
    pub big5: [f64; 5],
    /// (female, male); exactly one entry is 1.
    pub gender_onehot: (u8, u8),
    pub laughter_count: usize,
    pub au_stats: [AuStats; 4],
    pub delay_stats: SummaryStats,
    pub speech_rate_wpm: f64,
}

/// Column names of the design matrix, in the documented fixed order.
pub fn feature_names() -> Vec<String> {
    let mut names = vec![
        "total_words".to_string(),
        "distinct_words".to_string(),
        "big5_openness".to_string(),
        "big5_conscientiousness".to_string(),
        "big5_extraversion".to_string(),
        "big5_agreeableness".to_string(),
        "big5_neuroticism".to_string(),
        "gender_female".to_string(),
        "gender_male".to_string(),
        "laughter_count".to_string(),
    ];
    for au in AU_CODES {
        for stat in ["intensity_min", "intensity_max", "intensity_mean", "intensity_std"] {
            names.push(format!("{au}_{stat}"));
        }
        names.push(format!("{au}_presence_count"));
    }
    names.extend(
        ["delay_min_ms", "delay_max_ms", "delay_mean_ms", "delay_std_ms", "speech_rate_wpm"]
            .map(String::from),
    );
    names
}

pub const FEATURE_COUNT: usize = 35;

/// Column ranges of the three feature families in the design matrix.
pub const DEMOGRAPHICS_COLS: std::ops::Range<usize> = 0..9;
pub const ACTIONS_COLS: std::ops::Range<usize> = 9..30;
pub const PROSODY_COLS: std::ops::Range<usize> = 30..35;

impl SessionFeatures {
    pub fn gender(&self) -> Gender {
        if self.gender_onehot.0 == 1 {
            Gender::Female
        } else {
            Gender::Male
        }
    }

    pub fn to_vector(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(FEATURE_COUNT);
        v.push(self.total_words as f64);
        v.push(self.distinct_words as f64);
        v.extend(self.big5);
        v.push(self.gender_onehot.0 as f64);
        v.push(self.gender_onehot.1 as f64);
        v.push(self.laughter_count as f64);
        for au in &self.au_stats {
            v.push(au.intensity.min);
            v.push(au.intensity.max);
            v.push(au.intensity.mean);
            v.push(au.intensity.std);
            v.push(au.presence_count as f64);
        }
        v.push(self.delay_stats.min);
        v.push(self.delay_stats.max);
        v.push(self.delay_stats.mean);
        v.push(self.delay_stats.std);
        v.push(self.speech_rate_wpm);
        debug_assert_eq!(v.len(), FEATURE_COUNT);
        v
    }
}

pub fn assemble_features(
    session: &Session,
    gender_model: Option<&GenderModel>,
    personality: &dyn PersonalityClient,
) -> Result<SessionFeatures> {
    let (total_words, distinct_words) = talkativeness(session);
    let big5 = personality.personality(&session.participant_text())?.as_array();
    // Without a usable gender model (no labeled training sessions) the
    // predicted gender defaults to Female.
    let gender = match gender_model {
        Some(model) if !session.egemaps.is_empty() => predict_gender(model, &session.egemaps)?,
        _ => Gender::Female,
    };
    let gender_onehot = match gender {
        Gender::Female => (1, 0),
        Gender::Male => (0, 1),
    };
    let delays: Vec<f64> = delay_sequence(session).iter().map(|&d| d as f64).collect();
    Ok(SessionFeatures {
        total_words,
        distinct_words,
        big5,
        gender_onehot,
        laughter_count: laughter_count(session),
        au_stats: au_summary(session),
        delay_stats: summary_stats(&delays).unwrap_or_else(SummaryStats::zeros),
        speech_rate_wpm: avg_speech_rate(session),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clients::StubPersonalityClient;
    use crate::corpus::{AuFrame, TalkTurn};

    fn session_with_turns(turns: Vec<TalkTurn>) -> Session {
        Session {
            id: "t".into(),
            turns,
            egemaps: Vec::new(),
            au_frames: Vec::new(),
            laughter_events: Vec::new(),
            phq: None,
            gender: None,
        }
    }

    #[test]
    fn summary_stats_population_moments() {
        let s = summary_stats(&[2.0, 4.0]).unwrap();
        assert_eq!((s.min, s.max, s.mean, s.std), (2.0, 4.0, 3.0, 1.0));

        let s = summary_stats(&[5.0]).unwrap();
        assert_eq!((s.min, s.max, s.mean, s.std), (5.0, 5.0, 5.0, 0.0));

        let s = summary_stats(&[0.0, 1.0, 2.0, 3.0]).unwrap();
        assert!((s.std - 1.1180339887498949).abs() < 1e-12);

        assert!(summary_stats(&[]).is_none());

        let s = summary_stats(&[7.0; 9]).unwrap();
        assert_eq!(s.std, 0.0);
    }

    #[test]
    fn talkativeness_counts_participant_words() {
        let session = session_with_turns(vec![
            TalkTurn::new(Speaker::Interviewer, 0, 1000, "tell me more"),
            TalkTurn::new(Speaker::Participant, 1000, 3000, "i feel sad i feel tired"),
        ]);
        assert_eq!(talkativeness(&session), (6, 4));

        let empty = session_with_turns(vec![TalkTurn::new(
            Speaker::Interviewer,
            0,
            1000,
            "hello",
        )]);
        assert_eq!(talkativeness(&empty), (0, 0));

        let repeated = session_with_turns(vec![
            TalkTurn::new(Speaker::Participant, 0, 1000, "yes"),
            TalkTurn::new(Speaker::Participant, 1000, 2000, "yes"),
        ]);
        assert_eq!(talkativeness(&repeated), (2, 1));
    }

    #[test]
    fn delay_sequence_is_response_latency() {
        let session = session_with_turns(vec![
            TalkTurn::new(Speaker::Interviewer, 0, 10_000, "q"),
            TalkTurn::new(Speaker::Participant, 10_800, 12_000, "a"),
        ]);
        assert_eq!(delay_sequence(&session), vec![800]);

        // overlap floors at 0
        let overlap = session_with_turns(vec![
            TalkTurn::new(Speaker::Interviewer, 0, 10_000, "q"),
            TalkTurn::new(Speaker::Participant, 9_500, 12_000, "a"),
        ]);
        assert_eq!(delay_sequence(&overlap), vec![0]);

        // participant-then-participant contributes nothing
        let pp = session_with_turns(vec![
            TalkTurn::new(Speaker::Participant, 0, 1_000, "a"),
            TalkTurn::new(Speaker::Participant, 2_000, 3_000, "b"),
        ]);
        assert!(delay_sequence(&pp).is_empty());
    }

    #[test]
    fn speech_rate_words_per_minute() {
        let words = "w ".repeat(120);
        let session = session_with_turns(vec![TalkTurn::new(
            Speaker::Participant,
            0,
            120_000,
            words.trim(),
        )]);
        assert!((avg_speech_rate(&session) - 60.0).abs() < 1e-12);

        let silent = session_with_turns(vec![TalkTurn::new(Speaker::Participant, 0, 60_000, "")]);
        assert_eq!(avg_speech_rate(&silent), 0.0);

        let fast = "w ".repeat(30);
        let half = session_with_turns(vec![TalkTurn::new(
            Speaker::Participant,
            0,
            30_000,
            fast.trim(),
        )]);
        assert!((avg_speech_rate(&half) - 60.0).abs() < 1e-12);
    }

    #[test]
    fn au_summary_stats_and_presence() {
        let mut session = session_with_turns(vec![]);
        for (i, intensity) in [0.0, 1.0, 2.0, 3.0].iter().enumerate() {
            session.au_frames.push(AuFrame {
                frame_ms: i as i64 * 100,
                intensity: [*intensity, 0.0, 0.0, 0.0],
                presence: [i == 1 || i == 2, false, false, false],
            });
        }
        let stats = au_summary(&session);
        assert_eq!(stats[0].intensity.min, 0.0);
        assert_eq!(stats[0].intensity.max, 3.0);
        assert_eq!(stats[0].intensity.mean, 1.5);
        assert!((stats[0].intensity.std - 1.118).abs() < 1e-3);
        assert_eq!(stats[0].presence_count, 2);

        session.au_frames.clear();
        let empty = au_summary(&session);
        assert_eq!(empty[0].intensity, SummaryStats::zeros());
        assert_eq!(empty[0].presence_count, 0);
    }

    fn separable_rows(n: usize) -> (Vec<Vec<f64>>, Vec<Gender>) {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(11);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let female = i % 2 == 0;
            let shift = if female { 2.0 } else { -2.0 };
            let row: Vec<f64> = (0..EGEMAPS_DIM)
                .map(|j| {
                    let base: f64 = rng.gen_range(-0.5..0.5);
                    if j < 4 { base + shift } else { base }
                })
                .collect();
            rows.push(row);
            labels.push(if female { Gender::Female } else { Gender::Male });
        }
        (rows, labels)
    }

    #[test]
    fn gender_model_separates_synthetic_clusters() {
        let (rows, labels) = separable_rows(120);
        let acc = gender_cv_accuracy(&rows, &labels, 5, 3).unwrap();
        assert!(acc >= 0.99, "accuracy {acc}");
    }

    #[test]
    fn gender_model_rejects_single_class() {
        let rows = vec![vec![0.0; EGEMAPS_DIM]; 4];
        let labels = vec![Gender::Female; 4];
        assert!(train_gender_model(&rows, &labels).is_err());
    }

    #[test]
    fn gender_model_permutation_stable() {
        let (rows, labels) = separable_rows(40);
        let model_a = train_gender_model(&rows, &labels).unwrap();
        let mut permuted: Vec<(Vec<f64>, Gender)> =
            rows.iter().cloned().zip(labels.iter().cloned()).collect();
        permuted.reverse();
        let (rows_b, labels_b): (Vec<_>, Vec<_>) = permuted.into_iter().unzip();
        let model_b = train_gender_model(&rows_b, &labels_b).unwrap();
        for (a, b) in model_a.weights.iter().zip(&model_b.weights) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn predict_gender_threshold_and_tie() {
        let (rows, labels) = separable_rows(40);
        let model = train_gender_model(&rows, &labels).unwrap();
        let female_rows: Vec<Vec<f64>> = rows
            .iter()
            .zip(&labels)
            .filter(|(_, g)| **g == Gender::Female)
            .map(|(r, _)| r.clone())
            .collect();
        assert_eq!(predict_gender(&model, &female_rows).unwrap(), Gender::Female);
        assert!(predict_gender(&model, &[]).is_err());

        // tie at exactly 0.5: zero-weight model on its own mean
        let tie_model = GenderModel {
            weights: vec![0.0; EGEMAPS_DIM],
            bias: 0.0,
            feature_mean: vec![0.0; EGEMAPS_DIM],
            feature_std: vec![1.0; EGEMAPS_DIM],
        };
        assert_eq!(
            predict_gender(&tie_model, &[vec![0.0; EGEMAPS_DIM]]).unwrap(),
            Gender::Female
        );
    }

    #[test]
    fn assemble_features_is_deterministic_and_complete() {
        let mut session = session_with_turns(vec![
            TalkTurn::new(Speaker::Interviewer, 0, 5_000, "how have you been"),
            TalkTurn::new(Speaker::Participant, 5_400, 9_000, "i have been worried and tired"),
        ]);
        session.egemaps = vec![vec![1.0; EGEMAPS_DIM], vec![0.5; EGEMAPS_DIM]];
        let client = StubPersonalityClient;
        let a = assemble_features(&session, None, &client).unwrap();
        let b = assemble_features(&session, None, &client).unwrap();
        assert_eq!(a, b);
        let vector = a.to_vector();
        assert_eq!(vector.len(), FEATURE_COUNT);
        assert_eq!(feature_names().len(), FEATURE_COUNT);
        assert_eq!(a.gender_onehot.0 + a.gender_onehot.1, 1);
        assert_eq!(a.laughter_count, 0);
        assert_eq!(vector[0], 6.0); // total words
    }
}
