use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::PromptError;

/// Lowercased alphanumeric runs; everything else separates tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Sorted word list; a token's id is its position.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vocabulary {
    words: Vec<String>,
}

impl Vocabulary {
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let words: BTreeSet<String> = texts.into_iter().flat_map(tokenize).collect();
        Self { words: words.into_iter().collect() }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn id(&self, word: &str) -> Option<usize> {
        self.words.binary_search_by(|w| w.as_str().cmp(word)).ok()
    }

    /// Token ids of `text`; every unknown word is reported at once.
    pub fn encode(&self, text: &str) -> Result<Vec<usize>, PromptError> {
        let words = tokenize(text);
        if words.is_empty() {
            return Err(PromptError::EmptyPrompt);
        }
        let mut unknown = Vec::new();
        let ids: Vec<usize> = words
            .iter()
            .filter_map(|w| {
                let id = self.id(w);
                if id.is_none() && !unknown.contains(w) {
                    unknown.push(w.clone());
                }
                id
            })
            .collect();
        if unknown.is_empty() {
            Ok(ids)
        } else {
            Err(PromptError::OutOfVocabulary(unknown))
        }
    }
}
