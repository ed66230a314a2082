//! Client boundaries for the personality-percentile service and the
//! extractive machine-comprehension model.
//!
//! Each boundary is a trait with a deterministic offline stub (the default)
//! and a JSON-over-HTTP remote variant configured through environment
//! variables. Downstream code depends only on the trait contracts.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::corpus::tokenize;
use crate::error::{Error, Result};

pub const BIG5_TRAITS: [&str; 5] = [
    "openness",
    "conscientiousness",
    "extraversion",
    "agreeableness",
    "neuroticism",
];

/// Words carrying no topical content for the comprehension stub's overlap
/// rule.
pub const STOPWORDS: [&str; 74] = [
    "a", "about", "after", "all", "am", "an", "and", "any", "are", "as", "at", "be", "been",
    "but", "by", "can", "could", "did", "do", "does", "for", "from", "had", "has", "have", "he",
    "her", "his", "how", "i", "i'm", "i've", "if", "in", "is", "it", "it's", "its", "just",
    "like", "me", "most", "my", "no", "not", "of", "on", "or", "our", "she", "so", "some",
    "than", "that", "the", "their", "them", "then", "there", "they", "this", "to", "up", "very",
    "was", "we", "were", "what", "when", "who", "will", "with", "would", "you",
];

pub fn is_stopword(token: &str) -> bool {
    STOPWORDS.contains(&token)
}

pub fn content_words(text: &str) -> Vec<String> {
    tokenize(text).into_iter().filter(|t| !is_stopword(t)).collect()
}

// ---------------------------------------------------------------------------
// Personality
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PersonalityResult {
    pub openness: f64,
    pub conscientiousness: f64,
    pub extraversion: f64,
    pub agreeableness: f64,
    pub neuroticism: f64,
}

impl PersonalityResult {
    pub fn as_array(&self) -> [f64; 5] {
        [
            self.openness,
            self.conscientiousness,
            self.extraversion,
            self.agreeableness,
            self.neuroticism,
        ]
    }

    pub fn neutral() -> Self {
        PersonalityResult {
            openness: 50.0,
            conscientiousness: 50.0,
            extraversion: 50.0,
            agreeableness: 50.0,
            neuroticism: 50.0,
        }
    }
}

pub trait PersonalityClient: Send + Sync {
    fn personality(&self, text: &str) -> Result<PersonalityResult>;
}

const OPENNESS_LEXICON: [&str; 10] = [
    "curious", "imagine", "creative", "art", "idea", "wonder", "explore", "dream", "novel",
    "music",
];
const CONSCIENTIOUSNESS_LEXICON: [&str; 10] = [
    "plan", "organized", "schedule", "careful", "work", "finish", "duty", "tidy", "routine",
    "precise",
];
const EXTRAVERSION_LEXICON: [&str; 10] = [
    "party", "friends", "talk", "outgoing", "social", "fun", "excited", "people", "laugh",
    "energetic",
];
const AGREEABLENESS_LEXICON: [&str; 10] = [
    "kind", "help", "care", "trust", "gentle", "warm", "share", "thank", "friendly", "support",
];
const NEUROTICISM_LEXICON: [&str; 10] = [
    "worried", "anxious", "nervous", "afraid", "stress", "panic", "upset", "tense", "fear",
    "overwhelmed",
];

pub const TRAIT_LEXICONS: [(&str, &[&str; 10]); 5] = [
    ("openness", &OPENNESS_LEXICON),
    ("conscientiousness", &CONSCIENTIOUSNESS_LEXICON),
    ("extraversion", &EXTRAVERSION_LEXICON),
    ("agreeableness", &AGREEABLENESS_LEXICON),
    ("neuroticism", &NEUROTICISM_LEXICON),
];

/// Each percentile is a clamped affine function of the trait-lexicon word
/// frequency in the text; empty text maps to the neutral 50.0.
#[derive(Debug, Default, Clone)]
pub struct StubPersonalityClient;

const PERCENTILE_SLOPE: f64 = 600.0;

impl PersonalityClient for StubPersonalityClient {
    fn personality(&self, text: &str) -> Result<PersonalityResult> {
        let tokens = tokenize(text);
        if tokens.is_empty() {
            return Ok(PersonalityResult::neutral());
        }
        let n = tokens.len() as f64;
        let mut scores = [50.0f64; 5];
        for (i, (_, lexicon)) in TRAIT_LEXICONS.iter().enumerate() {
            let hits = tokens.iter().filter(|t| lexicon.contains(&t.as_str())).count();
            let freq = hits as f64 / n;
            scores[i] = (50.0 + PERCENTILE_SLOPE * freq).clamp(0.0, 100.0);
        }
        Ok(PersonalityResult {
            openness: scores[0],
            conscientiousness: scores[1],
            extraversion: scores[2],
            agreeableness: scores[3],
            neuroticism: scores[4],
        })
    }
}

// ---------------------------------------------------------------------------
// Machine comprehension
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComprehensionAnswer {
    pub answer: String,
    pub probability: f64,
}

pub trait ComprehensionClient: Send + Sync {
    fn comprehend(&self, question: &str, passage: &str) -> Result<ComprehensionAnswer>;
}

/// Returns the passage sentence with the highest content-word overlap with
/// the question; probability is overlap over the question's content-word
/// count. Sentences split on `.`, `?`, `!` and line breaks (talk-turn
/// boundaries in passages assembled from transcripts).
#[derive(Debug, Default, Clone)]
pub struct StubComprehensionClient;

fn split_sentences(passage: &str) -> Vec<&str> {
    passage
        .split(['.', '?', '!', '\n'])
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect()
}

impl ComprehensionClient for StubComprehensionClient {
    fn comprehend(&self, question: &str, passage: &str) -> Result<ComprehensionAnswer> {
        if question.trim().is_empty() {
            return Err(Error::InvalidInput("empty comprehension question".into()));
        }
        let qwords: std::collections::BTreeSet<String> =
            content_words(question).into_iter().collect();
        if qwords.is_empty() || passage.trim().is_empty() {
            return Ok(ComprehensionAnswer {
                answer: String::new(),
                probability: 0.0,
            });
        }
        let mut best: Option<(&str, usize)> = None;
        for sentence in split_sentences(passage) {
            let swords: std::collections::BTreeSet<String> =
                content_words(sentence).into_iter().collect();
            let overlap = qwords.intersection(&swords).count();
            match best {
                Some((_, prev)) if prev >= overlap => {}
                _ => best = Some((sentence, overlap)),
            }
        }
        match best {
            Some((sentence, overlap)) if overlap > 0 => Ok(ComprehensionAnswer {
                answer: sentence.to_string(),
                probability: overlap as f64 / qwords.len() as f64,
            }),
            _ => Ok(ComprehensionAnswer {
                answer: String::new(),
                probability: 0.0,
            }),
        }
    }
}

// ---------------------------------------------------------------------------
// Remote variants (JSON over HTTP)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub retries: u32,
}

impl RemoteConfig {
    /// Reads `<PREFIX>_URL` and optional `<PREFIX>_API_KEY`.
    pub fn from_env(prefix: &str) -> Result<Self> {
        let endpoint = std::env::var(format!("{prefix}_URL"))
            .map_err(|_| Error::Config(format!("{prefix}_URL not set")))?;
        let api_key = std::env::var(format!("{prefix}_API_KEY")).ok();
        Ok(RemoteConfig {
            endpoint,
            api_key,
            timeout: Duration::from_secs(30),
            retries: 2,
        })
    }
}

fn post_json<Req: Serialize, Resp: for<'de> Deserialize<'de>>(
    cfg: &RemoteConfig,
    body: &Req,
) -> Result<Resp> {
    let client = reqwest::blocking::Client::builder()
        .timeout(cfg.timeout)
        .build()
        .map_err(|e| Error::Remote(e.to_string()))?;
    let mut last_err = String::new();
    for _ in 0..=cfg.retries {
        let mut req = client.post(&cfg.endpoint).json(body);
        if let Some(key) = &cfg.api_key {
            req = req.bearer_auth(key);
        }
        match req.send() {
            Ok(resp) => {
                if !resp.status().is_success() {
                    last_err = format!("http status {}", resp.status());
                    continue;
                }
                return resp.json::<Resp>().map_err(|e| Error::Remote(e.to_string()));
            }
            Err(e) => last_err = e.to_string(),
        }
    }
    Err(Error::Remote(last_err))
}

pub struct RemotePersonalityClient {
    pub config: RemoteConfig,
}

#[derive(Serialize)]
struct PersonalityRequest<'a> {
    text: &'a str,
}

impl PersonalityClient for RemotePersonalityClient {
    fn personality(&self, text: &str) -> Result<PersonalityResult> {
        post_json(&self.config, &PersonalityRequest { text })
    }
}

pub struct RemoteComprehensionClient {
    pub config: RemoteConfig,
}

#[derive(Serialize)]
struct ComprehensionRequest<'a> {
    question: &'a str,
    passage: &'a str,
}

impl ComprehensionClient for RemoteComprehensionClient {
    fn comprehend(&self, question: &str, passage: &str) -> Result<ComprehensionAnswer> {
        post_json(&self.config, &ComprehensionRequest { question, passage })
    }
}
