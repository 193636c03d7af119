//! Speaker-embedding corpora: records, JSON-lines persistence, d-vectors and
//! same-speaker splits.

mod io;
pub mod synthetic;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use io::{load_corpus, save_corpus, PROMPTS_FILE, SPEAKERS_FILE};
pub use synthetic::{generate_synthetic_corpus, CorpusConfig, SubsetConfig, SyntheticCorpus};

use crate::numerics::{self, RngStream};
use crate::prompt::Vocabulary;

#[derive(Debug, Error, PartialEq)]
pub enum CorpusError {
    #[error("invalid corpus config: {0}")]
    Config(String),
    #[error("{file}:{line}: {msg}")]
    Schema { file: String, line: usize, msg: String },
    #[error("speaker {speaker_id}: utterance {utterance} has dim {got}, corpus dim is {expected}")]
    DimMismatch { speaker_id: String, utterance: usize, expected: usize, got: usize },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("speaker {0} has fewer than 2 utterances")]
    TooFewUtterances(String),
    #[error("duplicate speaker id {0}")]
    DuplicateSpeaker(String),
    #[error("prompt references unknown speaker {0}")]
    UnknownSpeaker(String),
    #[error("speaker {0} has no prompt")]
    MissingPrompt(String),
    #[error("speaker {0} has a non-finite embedding value")]
    NonFinite(String),
    #[error("empty utterance list")]
    EmptyList,
    #[error("{0}")]
    Io(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Gender {
    Male,
    Female,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Age {
    Child,
    Young,
    MiddleAged,
    Old,
}

impl Gender {
    pub fn adjective(self) -> &'static str {
        match self {
            Gender::Male => "male",
            Gender::Female => "female",
        }
    }
}

impl Age {
    pub fn adjective(self) -> &'static str {
        match self {
            Age::Child => "little",
            Age::Young => "young",
            Age::MiddleAged => "middle-aged",
            Age::Old => "old",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Age::Child => "child",
            Age::Young => "young",
            Age::MiddleAged => "middle-aged",
            Age::Old => "old",
        }
    }

    pub fn noun(self, gender: Gender) -> &'static str {
        match (self, gender) {
            (Age::Child, Gender::Male) => "boy",
            (Age::Child, Gender::Female) => "girl",
            (_, Gender::Male) => "man",
            (_, Gender::Female) => "woman",
        }
    }
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.adjective())
    }
}

impl fmt::Display for Age {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Attributes {
    pub gender: Gender,
    pub age: Age,
    #[serde(default)]
    pub style: BTreeSet<String>,
}

impl Attributes {
    /// Categorical labels keyed by attribute name.
    pub fn labels(&self) -> BTreeMap<String, String> {
        BTreeMap::from([
            ("gender".to_string(), self.gender.to_string()),
            ("age".to_string(), self.age.to_string()),
        ])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeakerRecord {
    pub speaker_id: String,
    pub attributes: Attributes,
    pub utterances: Vec<Vec<f64>>,
    /// Noiseless speaker center, known only for synthetic corpora.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptRecord {
    pub speaker_id: String,
    pub annotator_id: u32,
    pub text: String,
}

/// Validated speakers and their descriptions.
#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    speakers: Vec<SpeakerRecord>,
    prompts: Vec<PromptRecord>,
    dim: usize,
    index: BTreeMap<String, usize>,
}

impl Corpus {
    pub fn new(speakers: Vec<SpeakerRecord>, prompts: Vec<PromptRecord>) -> Result<Self, CorpusError> {
        let first = speakers.first().ok_or(CorpusError::EmptyCorpus)?;
        let dim = first.utterances.first().map_or(0, Vec::len);
        if dim == 0 {
            return Err(CorpusError::TooFewUtterances(first.speaker_id.clone()));
        }
        let mut index = BTreeMap::new();
        for (i, s) in speakers.iter().enumerate() {
            check_speaker(s, dim)?;
            if index.insert(s.speaker_id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateSpeaker(s.speaker_id.clone()));
            }
        }
        let mut prompted = BTreeSet::new();
        for p in &prompts {
            if !index.contains_key(&p.speaker_id) {
                return Err(CorpusError::UnknownSpeaker(p.speaker_id.clone()));
            }
            prompted.insert(p.speaker_id.as_str());
        }
        if let Some(s) = speakers.iter().find(|s| !prompted.contains(s.speaker_id.as_str())) {
            return Err(CorpusError::MissingPrompt(s.speaker_id.clone()));
        }
        Ok(Self { speakers, prompts, dim, index })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn speakers(&self) -> &[SpeakerRecord] {
        &self.speakers
    }

    pub fn prompts(&self) -> &[PromptRecord] {
        &self.prompts
    }

    pub fn speaker(&self, id: &str) -> Option<&SpeakerRecord> {
        self.index.get(id).map(|&i| &self.speakers[i])
    }

    pub fn speaker_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn prompts_for<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a PromptRecord> + 'a {
        self.prompts.iter().filter(move |p| p.speaker_id == id)
    }

    pub fn vocabulary(&self) -> Vocabulary {
        Vocabulary::build(self.prompts.iter().map(|p| p.text.as_str()))
    }

    /// Ground-truth vector of each speaker: the noiseless center when known,
    /// otherwise the d-vector.
    pub fn ground_truth(&self, speaker: &SpeakerRecord) -> Vec<f64> {
        match &speaker.center {
            Some(c) => c.clone(),
            None => mean_of(&speaker.utterances),
        }
    }

    /// Mean ground-truth vector of the speakers sharing each value of each
    /// categorical attribute.
    pub fn attribute_centroids(&self) -> BTreeMap<String, BTreeMap<String, Vec<f64>>> {
        let mut groups: BTreeMap<String, BTreeMap<String, Vec<Vec<f64>>>> = BTreeMap::new();
        for s in &self.speakers {
            let gt = self.ground_truth(s);
            for (attr, value) in s.attributes.labels() {
                groups.entry(attr).or_default().entry(value).or_default().push(gt.clone());
            }
        }
        groups
            .into_iter()
            .map(|(attr, values)| (attr, values.into_iter().map(|(v, vs)| (v, mean_of(&vs))).collect()))
            .collect()
    }
}

fn check_speaker(s: &SpeakerRecord, dim: usize) -> Result<(), CorpusError> {
    if s.utterances.len() < 2 {
        return Err(CorpusError::TooFewUtterances(s.speaker_id.clone()));
    }
    let vectors = s.utterances.iter().chain(s.center.iter());
    for (i, u) in vectors.enumerate() {
        if u.len() != dim {
            return Err(CorpusError::DimMismatch {
                speaker_id: s.speaker_id.clone(),
                utterance: i,
                expected: dim,
                got: u.len(),
            });
        }
        if u.iter().any(|x| !x.is_finite()) {
            return Err(CorpusError::NonFinite(s.speaker_id.clone()));
        }
    }
    Ok(())
}

fn mean_of(vectors: &[Vec<f64>]) -> Vec<f64> {
    numerics::mean_vector(vectors).expect("nonempty by construction")
}

/// Speaker-level d-vector: the arithmetic mean of utterance embeddings.
pub fn speaker_dvector(utterances: &[Vec<f64>]) -> Result<Vec<f64>, CorpusError> {
    if utterances.is_empty() {
        return Err(CorpusError::EmptyList);
    }
    Ok(mean_of(utterances))
}

/// Random disjoint halves; the first gets the extra utterance when the count
/// is odd.
pub fn split_same_speaker(
    utterances: &[Vec<f64>],
    rng: &mut RngStream,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>), CorpusError> {
    if utterances.len() < 2 {
        return Err(CorpusError::TooFewUtterances(format!("<{} utterances>", utterances.len())));
    }
    let mut order: Vec<usize> = (0..utterances.len()).collect();
    rng.shuffle(&mut order);
    let cut = utterances.len().div_ceil(2);
    let pick = |idx: &[usize]| idx.iter().map(|&i| utterances[i].clone()).collect();
    Ok((pick(&order[..cut]), pick(&order[cut..])))
}
