// SPDX-License-Identifier: MIT OR Apache-2.0

//! Greedy longest-match tokenizer over an explicit vocabulary.
//!
//! Spaces are written as `▁` (U+2581) inside vocabulary entries. Input text
//! gets a leading `▁` unless it already starts with whitespace, so `"hot"`
//! and `" hot"` both tokenize to `"▁hot"`.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

/// Marker standing in for a space inside vocabulary entries.
pub const SPACE: char = '\u{2581}';
pub const UNK: &str = "<unk>";
pub const FILLER: &str = "<s>";

/// Outcome of tokenizing one string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Encoding {
    pub ids: Vec<usize>,
    /// Number of unknown spans mapped to `<unk>`.
    pub unknown: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimpleTokenizer {
    vocab: Vec<String>,
    index: HashMap<String, usize>,
    max_len: usize,
    unk_id: usize,
    filler_id: usize,
}

impl SimpleTokenizer {
    /// Build from vocabulary entries; `<unk>` and `<s>` must be present.
    pub fn new(vocab: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(vocab.len());
        for (id, entry) in vocab.iter().enumerate() {
            if entry.is_empty() {
                return Err(Error::Vocab(format!("empty entry at id {id}")));
            }
            if index.insert(entry.clone(), id).is_some() {
                return Err(Error::Vocab(format!("duplicate entry {entry:?}")));
            }
        }
        let unk_id = *index
            .get(UNK)
            .ok_or_else(|| Error::Vocab(format!("missing {UNK} entry")))?;
        let filler_id = *index
            .get(FILLER)
            .ok_or_else(|| Error::Vocab(format!("missing {FILLER} entry")))?;
        let max_len = vocab.iter().map(|s| s.chars().count()).max().unwrap_or(0);
        Ok(SimpleTokenizer {
            vocab,
            index,
            max_len,
            unk_id,
            filler_id,
        })
    }

    /// Read one entry per line. Trailing `\r` is stripped; blank lines are skipped.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    /// Parse vocabulary file contents.
    pub fn from_text(text: &str) -> Result<Self> {
        Self::new(
            text.lines()
                .map(|l| l.trim_end_matches('\r'))
                .filter(|l| !l.is_empty())
                .map(str::to_owned)
                .collect(),
        )
    }

    /// Vocabulary file contents, one entry per line.
    pub fn to_file_string(&self) -> String {
        let mut out = String::new();
        for entry in &self.vocab {
            out.push_str(entry);
            out.push('\n');
        }
        out
    }

    pub fn len(&self) -> usize {
        self.vocab.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocab.is_empty()
    }

    pub fn unk_id(&self) -> usize {
        self.unk_id
    }

    pub fn filler_id(&self) -> usize {
        self.filler_id
    }

    /// Use another entry as the filler token.
    pub fn with_filler(mut self, entry: &str) -> Result<Self> {
        self.filler_id = self
            .id(entry)
            .ok_or_else(|| Error::Vocab(format!("filler {entry:?} not in vocabulary")))?;
        Ok(self)
    }

    pub fn id(&self, entry: &str) -> Option<usize> {
        self.index.get(entry).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.vocab.get(id).map(String::as_str)
    }

    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn encode(&self, text: &str) -> Encoding {
        let mut chars: Vec<char> = Vec::with_capacity(text.len() + 1);
        if !text.starts_with(char::is_whitespace) {
            chars.push(SPACE);
        }
        chars.extend(text.chars().map(|c| if c == ' ' { SPACE } else { c }));

        let mut ids = Vec::new();
        let mut unknown = 0;
        let mut pos = 0;
        let mut buf = String::new();
        while pos < chars.len() {
            let mut matched = None;
            let longest = self.max_len.min(chars.len() - pos);
            for len in (1..=longest).rev() {
                buf.clear();
                buf.extend(&chars[pos..pos + len]);
                if let Some(&id) = self.index.get(buf.as_str()) {
                    matched = Some((id, len));
                    break;
                }
            }
            match matched {
                Some((id, len)) => {
                    ids.push(id);
                    pos += len;
                }
                None if chars[pos].is_whitespace() => pos += 1,
                None => {
                    // Swallow the rest of the unknown word.
                    ids.push(self.unk_id);
                    unknown += 1;
                    pos += 1;
                    while pos < chars.len() && chars[pos] != SPACE && !chars[pos].is_whitespace() {
                        pos += 1;
                    }
                }
            }
        }
        Encoding { ids, unknown }
    }

    /// Concatenate entries, turning `▁` back into spaces and dropping the
    /// leading space introduced by [`encode`](Self::encode).
    pub fn decode(&self, ids: &[usize]) -> String {
        let joined: String = ids
            .iter()
            .map(|&id| self.token(id).unwrap_or(UNK))
            .collect::<String>()
            .replace(SPACE, " ");
        match joined.strip_prefix(' ') {
            Some(rest) => rest.to_owned(),
            None => joined,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tok() -> SimpleTokenizer {
        let words = [
            "<s>", "<unk>", ".", ",", "▁Given", "▁an", "▁adjective", "▁state", "▁its", "▁antonym",
            "▁hot", "▁hotter", "▁cold", "▁a",
        ];
        SimpleTokenizer::new(words.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    #[test]
    fn instruction_sentence() {
        let t = tok();
        let enc = t.encode("Given an adjective, state its antonym.");
        assert_eq!(enc.unknown, 0);
        let toks: Vec<&str> = enc.ids.iter().map(|&i| t.token(i).unwrap()).collect();
        assert_eq!(toks, ["▁Given", "▁an", "▁adjective", ",", "▁state", "▁its", "▁antonym", "."]);
        assert_eq!(t.decode(&enc.ids), "Given an adjective, state its antonym.");
    }

    #[test]
    fn longest_match_wins() {
        let t = tok();
        assert_eq!(t.encode("hotter").ids, vec![t.id("▁hotter").unwrap()]);
        assert_eq!(t.encode("hot").ids, vec![t.id("▁hot").unwrap()]);
    }

    #[test]
    fn unknown_words_collapse_to_one_unk() {
        let t = tok();
        let enc = t.encode("hot zebra cold");
        assert_eq!(enc.unknown, 1);
        assert_eq!(enc.ids, vec![t.id("▁hot").unwrap(), t.unk_id(), t.id("▁cold").unwrap()]);
    }

    #[test]
    fn vocab_errors() {
        let dup = ["<s>", "<unk>", "a", "a"].iter().map(|s| s.to_string()).collect();
        assert!(SimpleTokenizer::new(dup).is_err());
        let no_unk = ["<s>", "a"].iter().map(|s| s.to_string()).collect();
        assert!(SimpleTokenizer::new(no_unk).is_err());
        assert!(tok().with_filler("nope").is_err());
        assert_eq!(tok().with_filler(".").unwrap().filler_id(), 2);
    }

    proptest! {
        #[test]
        fn encode_decode_roundtrip_on_vocab_words(picks in prop::collection::vec(4usize..14, 1..12)) {
            let t = tok();
            let text = t.decode(&picks);
            let enc = t.encode(&text);
            prop_assert_eq!(&enc.ids, &picks);
            prop_assert_eq!(t.decode(&enc.ids), text);
        }
    }
}
