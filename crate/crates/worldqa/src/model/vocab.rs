//! Closed-world word tokenizer. The vocabulary is the closure of the
//! question templates over all block names and directions, plus answers and
//! specials; it is frozen once built, and unknown words are an error.

use crate::error::{Error, Result};
use crate::saqa::templates::vocabulary_words;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const EOS: u32 = 2;
pub const SEP: u32 = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, u32>,
}

impl Vocabulary {
    /// Standard vocabulary over the full template closure.
    pub fn build() -> Self {
        let mut tokens: Vec<String> =
            vec!["<pad>".into(), "<bos>".into(), "<eos>".into(), "<sep>".into()];
        tokens.push("yes".into());
        tokens.push("no".into());
        for w in vocabulary_words() {
            if !tokens.contains(&w) {
                tokens.push(w);
            }
        }
        Self::from_tokens(tokens)
    }

    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let index =
            tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        Vocabulary { tokens, index }
    }

    /// Rebuild the lookup map after deserialization.
    pub fn reindex(&mut self) {
        self.index =
            self.tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn yes_id(&self) -> u32 {
        self.index["yes"]
    }

    pub fn no_id(&self) -> u32 {
        self.index["no"]
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    /// Lowercase, treat `?` as its own token, split on whitespace.
    pub fn encode(&self, text: &str) -> Result<Vec<u32>> {
        let lowered = text.to_lowercase().replace('?', " ? ");
        lowered
            .split_whitespace()
            .map(|w| {
                self.index
                    .get(w)
                    .copied()
                    .ok_or_else(|| Error::UnknownToken(w.to_string()))
            })
            .collect()
    }

    /// Inverse of `encode` on normalized text: words joined by spaces, no
    /// space before `?`.
    pub fn decode(&self, ids: &[u32]) -> String {
        let mut out = String::new();
        for &id in ids {
            let tok = self.token(id);
            if !out.is_empty() && tok != "?" {
                out.push(' ');
            }
            out.push_str(tok);
        }
        out
    }

    pub fn answer_id(&self, answer: bool) -> u32 {
        if answer {
            self.yes_id()
        } else {
            self.no_id()
        }
    }
}
