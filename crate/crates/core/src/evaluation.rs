//! Cosine-distance metrics between ground-truth, synthesized and generated
//! speakers, the novelty verdict, and the attribute-accuracy proxy.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{speaker_dvector, split_same_speaker, Corpus};
use crate::numerics::{cosine_distance, NumericsError, RngStream};

/// Gap below which the novelty verdict calls a tie.
pub const VERDICT_TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("{metric}: {reason}")]
    Precondition { metric: &'static str, reason: String },
    #[error("empty comparison set")]
    EmptySet,
    #[error("unknown value {value:?} for attribute {attribute:?}")]
    UnknownAttribute { attribute: String, value: String },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Vectors compared by the metrics, keyed by speaker id.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SpeakerSets {
    pub gt: BTreeMap<String, Vec<f64>>,
    pub syn: BTreeMap<String, Vec<f64>>,
    /// `(prompt_id, embedding)`.
    pub gen: Vec<(String, Vec<f64>)>,
    /// d-vectors of two disjoint utterance halves per speaker.
    pub syn_same_pairs: BTreeMap<String, (Vec<f64>, Vec<f64>)>,
}

impl SpeakerSets {
    /// Corpus d-vectors as the synthesized set, speaker centers (or
    /// d-vectors when unknown) as ground truth, and half splits drawn from
    /// `rng` in speaker order.
    pub fn from_corpus(corpus: &Corpus, gen: Vec<(String, Vec<f64>)>, rng: &mut RngStream) -> Self {
        let mut sets = SpeakerSets { gen, ..Default::default() };
        for s in corpus.speakers() {
            let id = s.speaker_id.clone();
            sets.syn.insert(id.clone(), speaker_dvector(&s.utterances).expect("validated corpus"));
            sets.gt.insert(id.clone(), corpus.ground_truth(s));
            let (a, b) = split_same_speaker(&s.utterances, rng).expect("validated corpus");
            let pair = (speaker_dvector(&a).expect("nonempty"), speaker_dvector(&b).expect("nonempty"));
            sets.syn_same_pairs.insert(id, pair);
        }
        sets
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Novel,
    Memorized,
    Inconclusive,
}

impl Verdict {
    /// Novel when the generated-to-training distance sits nearer the
    /// between-speaker distance than the within-speaker one.
    pub fn from_distances(syn2syn_same: f64, syn2syn_near: f64, gen2syn_near: f64) -> Self {
        let to_near = (gen2syn_near - syn2syn_near).abs();
        let to_same = (gen2syn_near - syn2syn_same).abs();
        if (to_near - to_same).abs() <= VERDICT_TIE_TOLERANCE {
            Verdict::Inconclusive
        } else if to_near < to_same {
            Verdict::Novel
        } else {
            Verdict::Memorized
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(rename = "syn2gt-same")]
    pub syn2gt_same: f64,
    #[serde(rename = "syn2gt-near")]
    pub syn2gt_near: f64,
    #[serde(rename = "syn2syn-same")]
    pub syn2syn_same: f64,
    #[serde(rename = "syn2syn-near")]
    pub syn2syn_near: f64,
    #[serde(rename = "gen2syn-near")]
    pub gen2syn_near: f64,
    /// Absent when no prompt produced two or more speakers.
    #[serde(rename = "gen2gen-near")]
    pub gen2gen_near: Option<f64>,
    pub verdict: Verdict,
    pub diverse: Option<bool>,
    #[serde(default)]
    pub attribute_accuracy: BTreeMap<String, f64>,
}

/// Mean taken over ascending values so the result ignores input order.
fn mean(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum::<f64>() / values.len() as f64
}

/// Smallest cosine distance from `v` to any of `others`.
pub fn nearest_distance<'a>(v: &[f64], others: impl IntoIterator<Item = &'a [f64]>) -> Result<f64, EvalError> {
    let mut best: Option<f64> = None;
    for o in others {
        let d = cosine_distance(v, o)?;
        best = Some(best.map_or(d, |b| b.min(d)));
    }
    best.ok_or(EvalError::EmptySet)
}

fn require(metric: &'static str, ok: bool, reason: &str) -> Result<(), EvalError> {
    if ok {
        Ok(())
    } else {
        Err(EvalError::Precondition { metric, reason: reason.into() })
    }
}

pub fn compute_metrics(sets: &SpeakerSets) -> Result<MetricsReport, EvalError> {
    require("syn2gt-same", sets.syn.keys().eq(sets.gt.keys()), "syn and gt must hold the same speakers")?;
    require("syn2syn-near", sets.syn.len() >= 2, "needs at least 2 training speakers")?;
    require("syn2syn-same", !sets.syn_same_pairs.is_empty(), "needs at least 1 same-speaker pair")?;
    require("gen2syn-near", !sets.gen.is_empty(), "needs at least 1 generated speaker")?;

    let syn: Vec<(&String, &[f64])> = sets.syn.iter().map(|(k, v)| (k, v.as_slice())).collect();
    let near_other = |id: &String, v: &[f64], pool: &BTreeMap<String, Vec<f64>>| {
        nearest_distance(v, pool.iter().filter(|(k, _)| *k != id).map(|(_, o)| o.as_slice()))
    };

    let syn2gt_same = mean(
        syn.iter().map(|(id, v)| cosine_distance(v, &sets.gt[*id])).collect::<Result<_, _>>()?,
    );
    let syn2gt_near = mean(syn.iter().map(|(id, v)| near_other(id, v, &sets.gt)).collect::<Result<_, _>>()?);
    let syn2syn_same = mean(
        sets.syn_same_pairs.values().map(|(a, b)| cosine_distance(a, b)).collect::<Result<_, _>>()?,
    );
    let syn2syn_near = mean(syn.iter().map(|(id, v)| near_other(id, v, &sets.syn)).collect::<Result<_, _>>()?);
    let gen2syn_near = mean(
        sets.gen
            .iter()
            .map(|(_, g)| nearest_distance(g, syn.iter().map(|(_, v)| *v)))
            .collect::<Result<_, _>>()?,
    );

    let mut by_prompt: BTreeMap<&str, Vec<&[f64]>> = BTreeMap::new();
    for (p, g) in &sets.gen {
        by_prompt.entry(p.as_str()).or_default().push(g);
    }
    let gen2gen_near = if by_prompt.values().all(|g| g.len() < 2) {
        None
    } else {
        require("gen2gen-near", by_prompt.values().all(|g| g.len() >= 2), "every prompt needs at least 2 speakers")?;
        let mut per_prompt = Vec::with_capacity(by_prompt.len());
        for group in by_prompt.values() {
            let nearest = (0..group.len())
                .map(|i| {
                    let others = group.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, o)| *o);
                    nearest_distance(group[i], others)
                })
                .collect::<Result<_, _>>()?;
            per_prompt.push(mean(nearest));
        }
        Some(mean(per_prompt))
    };

    Ok(MetricsReport {
        syn2gt_same,
        syn2gt_near,
        syn2syn_same,
        syn2syn_near,
        gen2syn_near,
        gen2gen_near,
        verdict: Verdict::from_distances(syn2syn_same, syn2syn_near, gen2syn_near),
        diverse: gen2gen_near.map(|g| diversity_check(g, syn2syn_same)),
        attribute_accuracy: BTreeMap::new(),
    })
}

pub fn novelty_verdict(report: &MetricsReport) -> Verdict {
    Verdict::from_distances(report.syn2syn_same, report.syn2syn_near, report.gen2syn_near)
}

/// Generated speakers count as diverse when prompt-mates lie farther apart
/// than two halves of one training speaker.
pub fn diversity_check(gen2gen_near: f64, syn2syn_same: f64) -> bool {
    gen2gen_near > syn2syn_same
}

/// Attribute name → value → centroid.
pub type Centroids = BTreeMap<String, BTreeMap<String, Vec<f64>>>;

/// Per attribute, the fraction of embeddings whose nearest centroid carries
/// the prompt's label. Ties go to the alphabetically first value.
pub fn attribute_accuracy(
    gen: &[(BTreeMap<String, String>, Vec<f64>)],
    centroids: &Centroids,
) -> Result<BTreeMap<String, f64>, EvalError> {
    if gen.is_empty() {
        return Err(EvalError::EmptySet);
    }
    let mut out = BTreeMap::new();
    for (attribute, values) in centroids {
        let mut correct = 0usize;
        for (labels, v) in gen {
            let label = labels.get(attribute).ok_or_else(|| EvalError::UnknownAttribute {
                attribute: attribute.clone(),
                value: String::new(),
            })?;
            if !values.contains_key(label) {
                return Err(EvalError::UnknownAttribute { attribute: attribute.clone(), value: label.clone() });
            }
            let mut best: Option<(f64, &String)> = None;
            for (value, c) in values {
                let d = cosine_distance(v, c)?;
                if best.map_or(true, |(bd, _)| d < bd) {
                    best = Some((d, value));
                }
            }
            correct += usize::from(best.map(|(_, v)| v) == Some(label));
        }
        out.insert(attribute.clone(), correct as f64 / gen.len() as f64);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sets_from(syn: &[Vec<f64>], gen: &[(&str, Vec<f64>)]) -> SpeakerSets {
        let syn: BTreeMap<String, Vec<f64>> =
            syn.iter().enumerate().map(|(i, v)| (format!("s{i}"), v.clone())).collect();
        SpeakerSets {
            gt: syn.clone(),
            syn_same_pairs: syn.iter().map(|(k, v)| (k.clone(), (v.clone(), v.clone()))).collect(),
            syn,
            gen: gen.iter().map(|(p, v)| (p.to_string(), v.clone())).collect(),
        }
    }

    #[test]
    fn nearest_distance_examples() {
        assert_eq!(nearest_distance(&[1.0, 0.0], [[1.0, 0.0].as_slice()]).unwrap(), 0.0);
        let others = [vec![0.0, 1.0], vec![-1.0, 0.0]];
        assert_eq!(nearest_distance(&[1.0, 0.0], others.iter().map(Vec::as_slice)).unwrap(), 1.0);
        assert_eq!(nearest_distance(&[1.0, 0.0], std::iter::empty()), Err(EvalError::EmptySet));
    }

    #[test]
    fn nearest_distance_matches_exhaustive_scan() {
        let mut rng = RngStream::new(9);
        let vs: Vec<Vec<f64>> = (0..20).map(|_| (0..5).map(|_| rng.next_normal()).collect()).collect();
        let v: Vec<f64> = (0..5).map(|_| rng.next_normal()).collect();
        let mut best = f64::INFINITY;
        for o in &vs {
            let d = cosine_distance(&v, o).unwrap();
            if d < best {
                best = d;
            }
        }
        assert_eq!(nearest_distance(&v, vs.iter().map(Vec::as_slice)).unwrap(), best);
    }

    #[test]
    fn toy_set_by_hand() {
        // Pairwise table: d(e1, e2) = 1, d(gen, e1) = 0, d(gen, e2) = 1.
        let sets = sets_from(&[vec![1.0, 0.0], vec![0.0, 1.0]], &[("p", vec![1.0, 0.0])]);
        let r = compute_metrics(&sets).unwrap();
        assert_eq!(r.gen2syn_near, 0.0);
        assert_eq!(r.syn2syn_near, 1.0);
        assert_eq!(r.syn2gt_same, 0.0);
        assert_eq!(r.syn2syn_same, 0.0);
        assert_eq!(r.syn2gt_near, 1.0);
        assert_eq!(r.gen2gen_near, None);
        assert_eq!(r.diverse, None);
    }

    #[test]
    fn preconditions_name_the_metric() {
        let one = sets_from(&[vec![1.0, 0.0]], &[("p", vec![1.0, 0.0])]);
        assert!(matches!(compute_metrics(&one), Err(EvalError::Precondition { metric: "syn2syn-near", .. })));
        let no_gen = sets_from(&[vec![1.0, 0.0], vec![0.0, 1.0]], &[]);
        assert!(matches!(compute_metrics(&no_gen), Err(EvalError::Precondition { metric: "gen2syn-near", .. })));
        let uneven = sets_from(
            &[vec![1.0, 0.0], vec![0.0, 1.0]],
            &[("p", vec![1.0, 0.0]), ("p", vec![1.0, 1.0]), ("q", vec![0.0, 1.0])],
        );
        assert!(matches!(compute_metrics(&uneven), Err(EvalError::Precondition { metric: "gen2gen-near", .. })));
        let mut mismatched = sets_from(&[vec![1.0, 0.0], vec![0.0, 1.0]], &[("p", vec![1.0, 0.0])]);
        mismatched.gt.remove("s1");
        assert!(matches!(compute_metrics(&mismatched), Err(EvalError::Precondition { metric: "syn2gt-same", .. })));
    }

    #[test]
    fn verdict_examples() {
        assert_eq!(Verdict::from_distances(0.024, 0.113, 0.085), Verdict::Novel);
        assert_eq!(Verdict::from_distances(0.02, 0.11, 0.021), Verdict::Memorized);
        assert_eq!(Verdict::from_distances(0.02, 0.12, 0.07), Verdict::Inconclusive);
    }

    #[test]
    fn diversity_examples() {
        assert!(diversity_check(0.088, 0.024));
        assert!(!diversity_check(0.01, 0.024));
        assert!(!diversity_check(0.024, 0.024));
    }

    #[test]
    fn reference_pattern_reproduces_conclusions() {
        // Reference distances in the order syn2gt-same, syn2gt-near,
        // syn2syn-same, syn2syn-near, gen2syn-near, gen2gen-near.
        let [_, _, same, near, gen, gen2gen] = [0.143, 0.252, 0.024, 0.113, 0.085, 0.088];
        assert!(same < gen && gen < near);
        assert_eq!(Verdict::from_distances(same, near, gen), Verdict::Novel);
        assert!(diversity_check(gen2gen, same));
    }

    #[test]
    fn report_json_keys() {
        let sets = sets_from(
            &[vec![1.0, 0.0], vec![0.0, 1.0]],
            &[("p", vec![1.0, 0.2]), ("p", vec![0.3, 1.0])],
        );
        let json = serde_json::to_value(compute_metrics(&sets).unwrap()).unwrap();
        for key in ["syn2gt-same", "syn2gt-near", "syn2syn-same", "syn2syn-near", "gen2syn-near", "gen2gen-near"] {
            assert!(json[key].is_number(), "{key}");
        }
        let single = sets_from(&[vec![1.0, 0.0], vec![0.0, 1.0]], &[("p", vec![1.0, 0.2])]);
        let json = serde_json::to_value(compute_metrics(&single).unwrap()).unwrap();
        assert!(json["gen2gen-near"].is_null());
    }

    fn labels(gender: &str) -> BTreeMap<String, String> {
        BTreeMap::from([("gender".to_string(), gender.to_string())])
    }

    fn gender_centroids() -> Centroids {
        BTreeMap::from([(
            "gender".to_string(),
            BTreeMap::from([("female".to_string(), vec![0.0, 1.0]), ("male".to_string(), vec![1.0, 0.0])]),
        )])
    }

    #[test]
    fn accuracy_at_centroids_is_one() {
        let gen = vec![(labels("male"), vec![1.0, 0.0]), (labels("female"), vec![0.0, 1.0])];
        assert_eq!(attribute_accuracy(&gen, &gender_centroids()).unwrap()["gender"], 1.0);
        let bad = vec![(labels("robot"), vec![1.0, 0.0])];
        assert!(matches!(attribute_accuracy(&bad, &gender_centroids()), Err(EvalError::UnknownAttribute { .. })));
    }

    #[test]
    fn random_vectors_score_chance() {
        let mut rng = RngStream::new(21);
        let gen: Vec<_> = (0..10_000)
            .map(|i| (labels(if i % 2 == 0 { "male" } else { "female" }), vec![rng.next_normal(), rng.next_normal()]))
            .collect();
        let acc = attribute_accuracy(&gen, &gender_centroids()).unwrap()["gender"];
        assert!((0.45..=0.55).contains(&acc), "{acc}");
    }

    proptest! {
        #[test]
        fn metrics_scale_invariant(seed in any::<u64>(), scale in 0.01f64..100.0) {
            let mut rng = RngStream::new(seed);
            let mut draw = || (0..4).map(|_| rng.next_normal()).collect::<Vec<f64>>();
            let syn: Vec<Vec<f64>> = (0..4).map(|_| draw()).collect();
            let gen: Vec<(&str, Vec<f64>)> = (0..6).map(|i| (if i < 3 { "a" } else { "b" }, draw())).collect();
            let base = compute_metrics(&sets_from(&syn, &gen)).unwrap();
            let scaled_syn: Vec<Vec<f64>> = syn.iter().map(|v| v.iter().map(|x| x * scale).collect()).collect();
            let scaled_gen: Vec<(&str, Vec<f64>)> =
                gen.iter().map(|(p, v)| (*p, v.iter().map(|x| x * scale).collect())).collect();
            let scaled = compute_metrics(&sets_from(&scaled_syn, &scaled_gen)).unwrap();
            for (a, b) in [
                (base.syn2syn_near, scaled.syn2syn_near),
                (base.gen2syn_near, scaled.gen2syn_near),
                (base.gen2gen_near.unwrap(), scaled.gen2gen_near.unwrap()),
                (base.syn2gt_near, scaled.syn2gt_near),
            ] {
                prop_assert!((a - b).abs() <= 1e-12, "{} vs {}", a, b);
            }
        }

        #[test]
        fn metrics_permutation_invariant(seed in any::<u64>()) {
            let mut rng = RngStream::new(seed);
            let mut draw = || (0..3).map(|_| rng.next_normal()).collect::<Vec<f64>>();
            let syn: Vec<Vec<f64>> = (0..5).map(|_| draw()).collect();
            let gen: Vec<(&str, Vec<f64>)> = (0..6).map(|i| (["a", "b"][i % 2], draw())).collect();
            let base = compute_metrics(&sets_from(&syn, &gen)).unwrap();
            let mut order: Vec<usize> = (0..gen.len()).collect();
            rng.shuffle(&mut order);
            let shuffled_gen: Vec<_> = order.iter().map(|&i| gen[i].clone()).collect();
            let shuffled_syn: Vec<Vec<f64>> = syn.iter().rev().cloned().collect();
            let shuffled = compute_metrics(&sets_from(&shuffled_syn, &shuffled_gen)).unwrap();
            prop_assert_eq!(base.gen2syn_near, shuffled.gen2syn_near);
            prop_assert_eq!(base.gen2gen_near, shuffled.gen2gen_near);
            prop_assert_eq!(base.syn2syn_near, shuffled.syn2syn_near);
        }
    }
}
