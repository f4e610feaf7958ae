//! Word-level tokenizer over a closed vocabulary.
//!
//! Text is lowercased, split on whitespace, and every non-alphanumeric
//! character becomes its own token. Ids 0, 1 and 2 are reserved for padding,
//! unknown words and the `(` control token.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::error::{Error, Result};

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const CONTROL: &str = "(";
pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const CONTROL_ID: u32 = 2;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

pub fn segment(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut word = String::new();
    for ch in text.chars().flat_map(char::to_lowercase) {
        if ch.is_alphanumeric() {
            word.push(ch);
            continue;
        }
        if !word.is_empty() {
            out.push(std::mem::take(&mut word));
        }
        if !ch.is_whitespace() {
            out.push(ch.to_string());
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
    out
}

impl Vocab {
    /// Reserved tokens first, then every distinct word of `texts` in sorted order.
    pub fn build<'t>(texts: impl IntoIterator<Item = &'t str>) -> Self {
        let words: BTreeSet<String> = texts.into_iter().flat_map(segment).collect();
        let mut tokens = vec![PAD.to_string(), UNK.to_string(), CONTROL.to_string()];
        tokens.extend(words.into_iter().filter(|w| w != CONTROL));
        Self::from_tokens(tokens)
    }

    fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        Self { tokens, index }
    }

    /// Rebuilds a vocabulary from a `token → id` map; ids must be `0..n`.
    pub fn from_map(map: &BTreeMap<String, u32>) -> Result<Self> {
        let mut tokens = vec![String::new(); map.len()];
        for (t, &id) in map {
            let slot =
                tokens.get_mut(id as usize).ok_or_else(|| Error::Checkpoint(format!("vocab id {id} out of range")))?;
            *slot = t.clone();
        }
        if tokens.iter().any(String::is_empty) {
            return Err(Error::Checkpoint("vocab ids are not contiguous".into()));
        }
        if tokens.get(..3) != Some(&[PAD.to_string(), UNK.to_string(), CONTROL.to_string()][..]) {
            return Err(Error::Checkpoint("reserved vocab ids are wrong".into()));
        }
        Ok(Self::from_tokens(tokens))
    }

    pub fn to_map(&self) -> BTreeMap<String, u32> {
        self.index.iter().map(|(t, &i)| (t.clone(), i)).collect()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, word: &str) -> Option<u32> {
        self.index.get(word).copied()
    }

    pub fn token(&self, id: u32) -> &str {
        self.tokens.get(id as usize).map(String::as_str).unwrap_or(UNK)
    }

    pub fn tokenize(&self, text: &str) -> Result<Vec<u32>> {
        let ids: Vec<u32> = segment(text).iter().map(|w| self.id(w).unwrap_or(UNK_ID)).collect();
        if ids.is_empty() {
            return Err(Error::EmptyInput);
        }
        Ok(ids)
    }

    pub fn detokenize(&self, ids: &[u32]) -> String {
        ids.iter().map(|&i| self.token(i)).collect::<Vec<_>>().join(" ")
    }
}

/// Inclusive token span of a subject inside a prompt.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SubjectSpan {
    pub start: usize,
    pub end: usize,
}

impl SubjectSpan {
    pub fn last(&self) -> usize {
        self.end
    }
}

/// Last contiguous occurrence of `subject` in `prompt`.
pub fn find_subject_span(prompt: &[u32], subject: &[u32]) -> Result<SubjectSpan> {
    if prompt.is_empty() || subject.is_empty() {
        return Err(Error::EmptyInput);
    }
    if subject.len() <= prompt.len() {
        for start in (0..=prompt.len() - subject.len()).rev() {
            if &prompt[start..start + subject.len()] == subject {
                return Ok(SubjectSpan { start, end: start + subject.len() - 1 });
            }
        }
    }
    Err(Error::SubjectNotFound { subject: format!("{subject:?}"), prompt: format!("{prompt:?}") })
}
