//! Seeded generator of attribute-clustered speaker embeddings and templated
//! prompt annotations.
//!
//! Every (gender, age) combination owns a centroid at distance `separation`
//! from the origin in a random direction. A speaker's center is its centroid
//! plus isotropic noise with per-dimension standard deviation `cluster_noise`,
//! and each utterance adds `utterance_noise` on top of the center.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{Age, Attributes, Corpus, CorpusError, Gender, PromptRecord, SpeakerRecord};
use crate::numerics::{self, RngStream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubsetConfig {
    pub name: String,
    pub speakers: usize,
    /// Distinct descriptions per speaker, one per annotator.
    pub annotators: usize,
    /// Whether speakers carry style tags that appear in their descriptions.
    #[serde(default)]
    pub styled: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    #[serde(default = "defaults::subsets")]
    pub subsets: Vec<SubsetConfig>,
    #[serde(default = "defaults::utterances_per_speaker")]
    pub utterances_per_speaker: usize,
    #[serde(default = "defaults::dim")]
    pub dim: usize,
    #[serde(default = "defaults::genders")]
    pub genders: Vec<Gender>,
    #[serde(default = "defaults::ages")]
    pub ages: Vec<Age>,
    #[serde(default = "defaults::separation")]
    pub separation: f64,
    #[serde(default = "defaults::cluster_noise")]
    pub cluster_noise: f64,
    #[serde(default = "defaults::utterance_noise")]
    pub utterance_noise: f64,
    /// Required in config files; every other field has a default.
    pub seed: u64,
}

mod defaults {
    use super::*;

    pub fn subsets() -> Vec<SubsetConfig> {
        CorpusConfig::default().subsets
    }

    pub fn utterances_per_speaker() -> usize {
        CorpusConfig::default().utterances_per_speaker
    }

    pub fn dim() -> usize {
        CorpusConfig::default().dim
    }

    pub fn genders() -> Vec<Gender> {
        CorpusConfig::default().genders
    }

    pub fn ages() -> Vec<Age> {
        CorpusConfig::default().ages
    }

    pub fn separation() -> f64 {
        CorpusConfig::default().separation
    }

    pub fn cluster_noise() -> f64 {
        CorpusConfig::default().cluster_noise
    }

    pub fn utterance_noise() -> f64 {
        CorpusConfig::default().utterance_noise
    }
}

impl Default for CorpusConfig {
    /// 64 speakers in three subsets, 16 utterances each, 32 dimensions.
    fn default() -> Self {
        Self {
            subsets: vec![
                SubsetConfig { name: "stylistic".into(), speakers: 8, annotators: 13, styled: true },
                SubsetConfig { name: "reading".into(), speakers: 16, annotators: 3, styled: false },
                SubsetConfig { name: "conversational".into(), speakers: 40, annotators: 3, styled: false },
            ],
            utterances_per_speaker: 16,
            dim: 32,
            genders: vec![Gender::Male, Gender::Female],
            ages: vec![Age::Young, Age::MiddleAged],
            separation: 4.0,
            cluster_noise: 0.5,
            utterance_noise: 0.2,
            seed: 7,
        }
    }
}

const STYLE_WORDS: [&str; 10] =
    ["husky", "bright", "soft", "deep", "warm", "magnetic", "crisp", "gentle", "hoarse", "sweet"];

const STYLED_TEMPLATES: [&str; 13] = [
    "a {style} voice from a {age} {noun}",
    "{age} {noun} with a {style} voice",
    "the voice of a {age} {noun}, {style}",
    "{style} timbre, {gender} speaker, {age}",
    "a {age} {gender} speaker whose voice sounds {style}",
    "i want a {style} voice from a {age} {noun}",
    "{gender} voice, {age}, quite {style}",
    "sounds like a {age} {noun} speaking in a {style} tone",
    "a {noun} who is {age} and has a {style} voice",
    "{style} and {age} {gender} voice",
    "please generate a {age} {noun} with a {style} voice",
    "speaker: {age} {noun}; timbre: {style}",
    "a {style}, {age} {gender} voice",
];

const PLAIN_TEMPLATES: [&str; 5] = [
    "voice from a {age} {noun}",
    "a {age} {noun}'s voice",
    "{age} {gender} speaker",
    "the voice of a {age} {noun}",
    "a {gender} voice, {age}",
];

impl CorpusConfig {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let bad = |m: String| Err(CorpusError::Config(m));
        if self.subsets.is_empty() || self.subsets.iter().all(|s| s.speakers == 0) {
            return bad("at least one speaker is required".into());
        }
        for s in &self.subsets {
            let limit = if s.styled { STYLED_TEMPLATES.len() } else { PLAIN_TEMPLATES.len() };
            if s.annotators == 0 || s.annotators > limit {
                return bad(format!("subset {:?}: annotators must be in 1..={limit}", s.name));
            }
        }
        if self.utterances_per_speaker < 2 {
            return bad("utterances_per_speaker must be at least 2".into());
        }
        if self.dim == 0 {
            return bad("dim must be positive".into());
        }
        if self.genders.is_empty() || self.ages.is_empty() {
            return bad("genders and ages must be nonempty".into());
        }
        if !(self.separation > 0.0) {
            return bad("separation must be positive".into());
        }
        if !(self.cluster_noise >= 0.0 && self.utterance_noise >= 0.0) {
            return bad("noise scales must be non-negative".into());
        }
        if self.cluster_noise >= self.separation || self.utterance_noise >= self.separation {
            return bad("noise must be smaller than the cluster separation".into());
        }
        Ok(())
    }

    pub fn total_speakers(&self) -> usize {
        self.subsets.iter().map(|s| s.speakers).sum()
    }

    /// Attribute combinations in generation order.
    pub fn combinations(&self) -> Vec<(Gender, Age)> {
        self.genders.iter().flat_map(|g| self.ages.iter().map(move |a| (*g, *a))).collect()
    }
}

/// Natural-language description of a speaker in the style of a template.
pub fn describe(template: &str, gender: Gender, age: Age, style: &str) -> String {
    template
        .replace("{style}", style)
        .replace("{age}", age.adjective())
        .replace("{noun}", age.noun(gender))
        .replace("{gender}", gender.adjective())
}

/// Balanced test descriptions: `count` prompts cycling over every attribute
/// combination and over the styled templates.
pub fn test_descriptions(cfg: &CorpusConfig, count: usize) -> Vec<(String, Attributes)> {
    let combos = cfg.combinations();
    (0..count)
        .map(|i| {
            let (gender, age) = combos[i % combos.len()];
            let round = i / combos.len();
            let template = STYLED_TEMPLATES[(round * 5 + i) % STYLED_TEMPLATES.len()];
            let style = STYLE_WORDS[(i * 3 + round) % STYLE_WORDS.len()];
            let attrs = Attributes { gender, age, style: BTreeSet::from([style.to_string()]) };
            (describe(template, gender, age, style), attrs)
        })
        .collect()
}

/// Generated corpus plus the centroid of each attribute combination.
pub struct SyntheticCorpus {
    pub corpus: Corpus,
    pub centroids: Vec<((Gender, Age), Vec<f64>)>,
}

pub fn generate_synthetic_corpus(cfg: &CorpusConfig) -> Result<SyntheticCorpus, CorpusError> {
    cfg.validate()?;
    let mut root = RngStream::new(cfg.seed);
    let mut centroid_rng = root.split(1);
    let mut speaker_rng = root.split(2);
    let combos = cfg.combinations();
    let centroids: Vec<((Gender, Age), Vec<f64>)> = combos
        .iter()
        .map(|&combo| {
            let dir = loop {
                let v = numerics::standard_normal(&mut centroid_rng, cfg.dim);
                if numerics::norm(&v) > 1e-6 {
                    break v;
                }
            };
            let n = numerics::norm(&dir);
            (combo, dir.iter().map(|x| cfg.separation * x / n).collect())
        })
        .collect();

    let mut speakers = Vec::with_capacity(cfg.total_speakers());
    let mut prompts = Vec::new();
    let mut global = 0usize;
    for subset in &cfg.subsets {
        for i in 0..subset.speakers {
            let (combo, centroid) = &centroids[global % combos.len()];
            let (gender, age) = *combo;
            global += 1;
            let center: Vec<f64> =
                centroid.iter().map(|c| c + cfg.cluster_noise * speaker_rng.next_normal()).collect();
            let utterances = (0..cfg.utterances_per_speaker)
                .map(|_| center.iter().map(|c| c + cfg.utterance_noise * speaker_rng.next_normal()).collect())
                .collect();
            // Round-robin tags: five styled speakers already cover every word.
            let style: BTreeSet<String> = if subset.styled {
                [2 * i, 2 * i + 1].iter().map(|&k| STYLE_WORDS[k % STYLE_WORDS.len()].to_string()).collect()
            } else {
                BTreeSet::new()
            };
            let speaker_id = format!("{}_{i:03}", subset.name);
            let tags: Vec<&String> = style.iter().collect();
            for annotator in 0..subset.annotators {
                let text = if subset.styled {
                    let tag = tags[annotator % tags.len()];
                    describe(STYLED_TEMPLATES[annotator], gender, age, tag)
                } else {
                    describe(PLAIN_TEMPLATES[annotator], gender, age, "")
                };
                prompts.push(PromptRecord { speaker_id: speaker_id.clone(), annotator_id: annotator as u32 + 1, text });
            }
            speakers.push(SpeakerRecord {
                speaker_id,
                attributes: Attributes { gender, age, style },
                utterances,
                center: Some(center),
            });
        }
    }
    let corpus = Corpus::new(speakers, prompts)?;
    Ok(SyntheticCorpus { corpus, centroids })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::speaker_dvector;
    use crate::numerics::cosine_distance;

    fn small() -> CorpusConfig {
        CorpusConfig {
            subsets: vec![
                SubsetConfig { name: "styled".into(), speakers: 4, annotators: 13, styled: true },
                SubsetConfig { name: "plain".into(), speakers: 4, annotators: 2, styled: false },
            ],
            utterances_per_speaker: 4,
            dim: 8,
            seed: 7,
            ..CorpusConfig::default()
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate_synthetic_corpus(&small()).unwrap().corpus;
        let b = generate_synthetic_corpus(&small()).unwrap().corpus;
        assert_eq!(a, b);
        let mut other = small();
        other.seed = 8;
        assert_ne!(generate_synthetic_corpus(&other).unwrap().corpus, a);
    }

    #[test]
    fn zero_noise_gives_identical_utterances() {
        let cfg = CorpusConfig { utterance_noise: 0.0, ..small() };
        let corpus = generate_synthetic_corpus(&cfg).unwrap().corpus;
        for s in corpus.speakers() {
            assert!(s.utterances.iter().all(|u| u == &s.utterances[0]));
            let half = s.utterances.len() / 2;
            let a = speaker_dvector(&s.utterances[..half]).unwrap();
            let b = speaker_dvector(&s.utterances[half..]).unwrap();
            assert_eq!(cosine_distance(&a, &b).unwrap(), 0.0);
        }
    }

    #[test]
    fn prompt_counts_and_one_to_many() {
        let corpus = generate_synthetic_corpus(&small()).unwrap().corpus;
        assert_eq!(corpus.prompts().len(), 4 * 13 + 4 * 2);
        for s in corpus.speakers() {
            let texts: BTreeSet<&str> =
                corpus.prompts_for(&s.speaker_id).map(|p| p.text.as_str()).collect();
            let count = corpus.prompts_for(&s.speaker_id).count();
            assert!(count >= 1);
            assert_eq!(texts.len(), count, "{} has repeated descriptions", s.speaker_id);
        }
        // Distinct speakers can share a description.
        let plain: Vec<&str> = corpus
            .prompts()
            .iter()
            .filter(|p| p.speaker_id.starts_with("plain") && p.annotator_id == 1)
            .map(|p| p.text.as_str())
            .collect();
        assert!(plain.len() > 1);
    }

    #[test]
    fn descriptions_mention_attributes() {
        let text = describe(STYLED_TEMPLATES[0], Gender::Male, Age::MiddleAged, "husky");
        assert_eq!(text, "a husky voice from a middle-aged man");
        assert_eq!(describe(PLAIN_TEMPLATES[1], Gender::Female, Age::Child, ""), "a little girl's voice");
    }

    #[test]
    fn test_descriptions_cover_all_combinations() {
        let cfg = CorpusConfig::default();
        let prompts = test_descriptions(&cfg, 20);
        assert_eq!(prompts.len(), 20);
        for combo in cfg.combinations() {
            let n = prompts.iter().filter(|(_, a)| (a.gender, a.age) == combo).count();
            assert_eq!(n, 5);
        }
        let unique: BTreeSet<&String> = prompts.iter().map(|(t, _)| t).collect();
        assert_eq!(unique.len(), 20);
    }

    #[test]
    fn invalid_configs_rejected() {
        let cases = [
            CorpusConfig { utterances_per_speaker: 1, ..small() },
            CorpusConfig { separation: 0.0, ..small() },
            CorpusConfig { cluster_noise: 5.0, ..small() },
            CorpusConfig { genders: vec![], ..small() },
            CorpusConfig { subsets: vec![], ..small() },
        ];
        for cfg in cases {
            assert!(matches!(generate_synthetic_corpus(&cfg), Err(CorpusError::Config(_))));
        }
        let mut too_many = small();
        too_many.subsets[1].annotators = 6;
        assert!(generate_synthetic_corpus(&too_many).is_err());
    }

    #[test]
    fn default_corpus_centers_are_perfectly_classified() {
        // Brute-force nearest-centroid classifier over speaker centers.
        let synth = generate_synthetic_corpus(&CorpusConfig::default()).unwrap();
        assert_eq!(synth.corpus.speakers().len(), 64);
        for s in synth.corpus.speakers() {
            let center = s.center.as_ref().unwrap();
            let nearest = synth
                .centroids
                .iter()
                .min_by(|a, b| {
                    let da: f64 = a.1.iter().zip(center).map(|(x, y)| (x - y).powi(2)).sum();
                    let db: f64 = b.1.iter().zip(center).map(|(x, y)| (x - y).powi(2)).sum();
                    da.total_cmp(&db)
                })
                .unwrap();
            assert_eq!(nearest.0, (s.attributes.gender, s.attributes.age), "{}", s.speaker_id);
        }
    }

    #[test]
    fn config_requires_only_seed() {
        let cfg: CorpusConfig = serde_json::from_str(r#"{"seed": 3, "dim": 8}"#).unwrap();
        assert_eq!(cfg, CorpusConfig { seed: 3, dim: 8, ..CorpusConfig::default() });
        let err = serde_json::from_str::<CorpusConfig>(r#"{"dim": 8}"#).unwrap_err();
        assert!(err.to_string().contains("missing field `seed`"), "{err}");
        assert!(serde_json::from_str::<CorpusConfig>(r#"{"seed": 1, "dims": 8}"#).is_err());
    }
}
