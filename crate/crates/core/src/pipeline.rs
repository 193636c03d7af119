//! Prompt sets, batch generation and end-to-end evaluation of a trained model.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::synthetic::test_descriptions;
use crate::corpus::{Attributes, Corpus, CorpusConfig};
use crate::evaluation::{attribute_accuracy, compute_metrics, EvalError, MetricsReport, SpeakerSets};
use crate::model::{ExternalEmbeddings, Model, ModelError};
use crate::numerics::RngStream;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// A description to generate from, optionally labeled for the accuracy proxy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestPrompt {
    pub prompt_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attributes: Option<Attributes>,
}

/// Twenty labeled descriptions spread evenly over the attribute combinations
/// of `cfg`.
pub fn default_test_prompts(cfg: &CorpusConfig) -> Vec<TestPrompt> {
    test_descriptions(cfg, 20)
        .into_iter()
        .enumerate()
        .map(|(i, (text, attributes))| TestPrompt {
            prompt_id: format!("test_{i:02}"),
            text,
            attributes: Some(attributes),
        })
        .collect()
}

/// [`default_test_prompts`] over the gender and age values present in `corpus`.
pub fn corpus_test_prompts(corpus: &Corpus) -> Vec<TestPrompt> {
    let genders: BTreeSet<_> = corpus.speakers().iter().map(|s| s.attributes.gender).collect();
    let ages: BTreeSet<_> = corpus.speakers().iter().map(|s| s.attributes.age).collect();
    default_test_prompts(&CorpusConfig {
        genders: genders.into_iter().collect(),
        ages: ages.into_iter().collect(),
        ..CorpusConfig::default()
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratedSpeaker {
    pub prompt_id: String,
    pub prompt: String,
    pub sample: usize,
    pub embedding: Vec<f64>,
}

/// `n` speakers per prompt; prompt `i` draws from stream `i + 1` of `seed`,
/// so results do not depend on which other prompts are present before it.
pub fn generate_for_prompts(
    model: &Model,
    prompts: &[TestPrompt],
    n: usize,
    temperature: f64,
    seed: u64,
    external: Option<&ExternalEmbeddings>,
) -> Result<Vec<GeneratedSpeaker>, ModelError> {
    let mut root = RngStream::new(seed);
    let mut out = Vec::new();
    for (i, p) in prompts.iter().enumerate() {
        let tokens = model.tokens(&p.text, external)?;
        let mut rng = root.split(i as u64 + 1);
        for (k, embedding) in model.generate(&tokens, n, temperature, &mut rng)?.into_iter().enumerate() {
            out.push(GeneratedSpeaker { prompt_id: p.prompt_id.clone(), prompt: p.text.clone(), sample: k, embedding });
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub report: MetricsReport,
    pub generated: Vec<GeneratedSpeaker>,
}

/// Generates from every prompt and scores the result against `corpus`.
pub fn evaluate_model(
    model: &Model,
    corpus: &Corpus,
    prompts: &[TestPrompt],
    n_per_prompt: usize,
    temperature: f64,
    seed: u64,
    external: Option<&ExternalEmbeddings>,
) -> Result<Evaluation, PipelineError> {
    let generated = generate_for_prompts(model, prompts, n_per_prompt, temperature, seed, external)?;
    let gen = generated.iter().map(|g| (g.prompt_id.clone(), g.embedding.clone())).collect();
    let sets = SpeakerSets::from_corpus(corpus, gen, &mut RngStream::new(seed).split(0));
    let mut report = compute_metrics(&sets)?;

    let attributes: BTreeMap<&str, &Attributes> =
        prompts.iter().filter_map(|p| Some((p.prompt_id.as_str(), p.attributes.as_ref()?))).collect();
    let labeled: Vec<_> = generated
        .iter()
        .filter_map(|g| Some((attributes.get(g.prompt_id.as_str())?.labels(), g.embedding.clone())))
        .collect();
    if !labeled.is_empty() {
        report.attribute_accuracy = attribute_accuracy(&labeled, &corpus.attribute_centroids())?;
    }
    Ok(Evaluation { report, generated })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic_corpus, SubsetConfig};
    use crate::model::Mode;
    use crate::training::{train, TrainConfig};

    fn setup(mode: Mode) -> (Corpus, Model) {
        let cfg = CorpusConfig {
            subsets: vec![SubsetConfig { name: "s".into(), speakers: 8, annotators: 13, styled: true }],
            utterances_per_speaker: 4,
            dim: 8,
            seed: 3,
            ..CorpusConfig::default()
        };
        let corpus = generate_synthetic_corpus(&cfg).unwrap().corpus;
        let tc = TrainConfig { mode, steps: 10, batch_size: 4, flow_blocks: 2, encoder_width: 8, embed_dim: 8, seed: 1, ..TrainConfig::default() };
        let model = train(&corpus, &tc).unwrap().model;
        (corpus, model)
    }

    #[test]
    fn default_prompts_are_in_default_vocabulary() {
        let cfg = CorpusConfig::default();
        let corpus = generate_synthetic_corpus(&cfg).unwrap().corpus;
        let vocab = corpus.vocabulary();
        let prompts = default_test_prompts(&cfg);
        assert_eq!(prompts.len(), 20);
        for p in &prompts {
            vocab.encode(&p.text).unwrap();
        }
    }

    #[test]
    fn corpus_prompts_match_the_generating_config() {
        let cfg = CorpusConfig::default();
        let corpus = generate_synthetic_corpus(&cfg).unwrap().corpus;
        assert_eq!(corpus_test_prompts(&corpus), default_test_prompts(&cfg));
    }

    #[test]
    fn generation_is_reproducible_and_temperature_zero_collapses() {
        let (_, model) = setup(Mode::Proposed);
        let prompts = &default_test_prompts(&CorpusConfig::default())[..2];
        let a = generate_for_prompts(&model, prompts, 5, 1.0, 4, None).unwrap();
        assert_eq!(a, generate_for_prompts(&model, prompts, 5, 1.0, 4, None).unwrap());
        assert_eq!(a.len(), 10);
        for i in 0..5 {
            for j in 0..i {
                assert_ne!(a[i].embedding, a[j].embedding);
            }
        }
        // Each prompt's samples do not depend on the prompts after it.
        assert_eq!(generate_for_prompts(&model, &prompts[..1], 5, 1.0, 4, None).unwrap(), a[..5]);
        let cold = generate_for_prompts(&model, prompts, 4, 0.0, 4, None).unwrap();
        assert!(cold[..4].iter().all(|g| g.embedding == cold[0].embedding));
    }

    #[test]
    fn evaluation_reports_every_metric() {
        let (corpus, model) = setup(Mode::Proposed);
        let prompts = default_test_prompts(&CorpusConfig::default());
        let eval = evaluate_model(&model, &corpus, &prompts[..4], 3, 1.0, 2, None).unwrap();
        assert!(eval.report.gen2gen_near.is_some());
        assert_eq!(eval.generated.len(), 12);
        assert!(eval.report.attribute_accuracy.contains_key("gender"));
        let single = evaluate_model(&model, &corpus, &prompts[..4], 1, 1.0, 2, None).unwrap();
        assert_eq!(single.report.gen2gen_near, None);
    }

    #[test]
    fn baseline_generates_one_speaker_per_prompt() {
        let (corpus, model) = setup(Mode::Baseline);
        let prompts = default_test_prompts(&CorpusConfig::default());
        let eval = evaluate_model(&model, &corpus, &prompts[..4], 8, 1.0, 2, None).unwrap();
        assert_eq!(eval.generated.len(), 4);
        assert_eq!(eval.report.gen2gen_near, None);
    }
}
