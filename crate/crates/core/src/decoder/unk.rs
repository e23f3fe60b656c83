use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::Path;

use crate::corpus::{Vocabulary, UNK};

use super::Hypothesis;

/// Source word → best target word. Lookups never fail; a miss is `None`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TranslationDictionary {
    map: HashMap<String, String>,
}

impl TranslationDictionary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses `source<TAB>target` lines. The first entry for a source word
    /// wins; blank lines and lines without a tab are ignored.
    pub fn parse(text: &str) -> Self {
        let mut map = HashMap::new();
        for line in text.lines() {
            if let Some((s, t)) = line.split_once('\t') {
                let (s, t) = (s.trim(), t.trim());
                if !s.is_empty() && !t.is_empty() {
                    map.entry(s.to_string()).or_insert_with(|| t.to_string());
                }
            }
        }
        TranslationDictionary { map }
    }

    pub fn load(path: &Path) -> io::Result<Self> {
        Ok(Self::parse(&fs::read_to_string(path)?))
    }

    pub fn insert(&mut self, source: &str, target: &str) {
        self.map
            .entry(source.to_string())
            .or_insert_with(|| target.to_string());
    }

    pub fn lookup(&self, source: &str) -> Option<&str> {
        self.map.get(source).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Decodes `hyp` and replaces every UNK with the dictionary translation of
/// its aligned source word, or with that word itself when the dictionary has
/// no entry.
pub fn replace_unks(
    hyp: &Hypothesis,
    tgt_vocab: &Vocabulary,
    source_tokens: &[String],
    dict: &TranslationDictionary,
) -> Vec<String> {
    hyp.words()
        .iter()
        .zip(&hyp.alignment)
        .map(|(&id, &pos)| {
            if id != UNK {
                return tgt_vocab.token(id).unwrap_or(UNK_TOKEN).to_string();
            }
            match source_tokens.get(pos.wrapping_sub(1)) {
                Some(src) => dict.lookup(src).unwrap_or(src).to_string(),
                None => UNK_TOKEN.to_string(),
            }
        })
        .collect()
}

const UNK_TOKEN: &str = crate::corpus::SPECIAL_TOKENS[UNK];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{tokenize, EOS};

    fn hyp(tokens: Vec<usize>, alignment: Vec<usize>) -> Hypothesis {
        Hypothesis {
            attention: vec![Vec::new(); tokens.len()],
            tokens,
            score: 0.0,
            alignment,
            complete: true,
        }
    }

    fn setup() -> (Vocabulary, Vec<String>) {
        let v = Vocabulary::build([tokenize("the small is")], 10).unwrap();
        (v, tokenize("das Haus ist Quux"))
    }

    #[test]
    fn unk_uses_dictionary_entry() {
        let (v, src) = setup();
        let mut d = TranslationDictionary::new();
        d.insert("Haus", "house");
        let the = v.id("the").unwrap();
        let h = hyp(vec![the, UNK, EOS], vec![1, 2, 3]);
        assert_eq!(replace_unks(&h, &v, &src, &d), vec!["the", "house"]);
    }

    #[test]
    fn unk_without_entry_copies_source_word() {
        let (v, src) = setup();
        let h = hyp(vec![UNK, EOS], vec![4, 4]);
        assert_eq!(replace_unks(&h, &v, &src, &TranslationDictionary::new()), vec!["Quux"]);
    }

    #[test]
    fn no_unks_means_plain_decoding() {
        let (v, src) = setup();
        let ids = v.encode(&tokenize("the is small"));
        let mut toks = ids.clone();
        toks.push(EOS);
        let h = hyp(toks, vec![1, 2, 3, 1]);
        let mut d = TranslationDictionary::new();
        d.insert("das", "the");
        assert_eq!(replace_unks(&h, &v, &src, &d), v.decode(&ids));
    }

    #[test]
    fn output_length_is_preserved() {
        let (v, src) = setup();
        let h = hyp(vec![UNK, UNK, UNK, UNK], vec![1, 2, 3, 4]);
        let out = replace_unks(&h, &v, &src, &TranslationDictionary::new());
        assert_eq!(out.len(), h.words().len());
    }

    #[test]
    fn dictionary_first_entry_wins() {
        let d = TranslationDictionary::parse("Haus\thouse\nHaus\thome\nbad line\n\nist\tis\n");
        assert_eq!(d.lookup("Haus"), Some("house"));
        assert_eq!(d.lookup("ist"), Some("is"));
        assert_eq!(d.lookup("bad line"), None);
        assert_eq!(d.len(), 2);
    }
}
