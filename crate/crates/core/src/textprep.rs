//! Text normalization and paragraph segmentation.
//!
//! Raw text is cut into sentences at `.`, `!` or `?` followed by whitespace,
//! then each sentence is lowercased and reduced to alphabetic tokens with
//! stop-words and the most common words removed. Sentences are merged greedily
//! into paragraphs of roughly `target_words` tokens so that filing paragraphs
//! have the same granularity as knowledgebase descriptions.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tactic::Tactic;

/// Default paragraph target, close to the mean knowledgebase description length.
pub const DEFAULT_TARGET_WORDS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SourceKind {
    Filing,
    Knowledgebase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawDocument {
    pub doc_id: String,
    pub source_kind: SourceKind,
    pub text: String,
    pub metadata: BTreeMap<String, String>,
}

impl RawDocument {
    pub fn new(
        doc_id: impl Into<String>,
        source_kind: SourceKind,
        text: impl Into<String>,
        metadata: BTreeMap<String, String>,
    ) -> Result<Self> {
        let doc = Self {
            doc_id: doc_id.into(),
            source_kind,
            text: text.into(),
            metadata,
        };
        if doc.doc_id.is_empty() {
            return Err(Error::invalid("document id is empty"));
        }
        if source_kind == SourceKind::Knowledgebase {
            doc.tactic()?;
        }
        Ok(doc)
    }

    pub fn tactic(&self) -> Result<Tactic> {
        let name = self.metadata.get("tactic").ok_or_else(|| {
            Error::invalid(format!(
                "knowledgebase document {} has no tactic",
                self.doc_id
            ))
        })?;
        name.parse().map_err(|_| Error::UnknownTactic {
            entry: self.doc_id.clone(),
            name: name.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Paragraph {
    pub doc_id: String,
    pub index: usize,
    pub tokens: Vec<String>,
    pub word_count: usize,
}

impl Paragraph {
    pub fn new(doc_id: impl Into<String>, index: usize, tokens: Vec<String>) -> Self {
        Self {
            doc_id: doc_id.into(),
            index,
            word_count: tokens.len(),
            tokens,
        }
    }
}

/// A set of lowercase words, e.g. a stop-word list or a risk dictionary.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WordList {
    words: HashSet<String>,
}

impl WordList {
    pub fn new<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self {
            words: words
                .into_iter()
                .map(|w| w.as_ref().trim().to_lowercase())
                .filter(|w| !w.is_empty())
                .collect(),
        }
    }

    /// One token per line; blank lines and lines starting with `#` are skipped.
    pub fn parse(text: &str) -> Self {
        Self::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        )
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&text))
    }

    /// The `n` most frequent tokens of a corpus, ties broken alphabetically.
    pub fn most_common<'a, I>(tokens: I, n: usize) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for t in tokens {
            *counts.entry(t).or_default() += 1;
        }
        let mut ranked: Vec<_> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        Self::new(ranked.into_iter().take(n).map(|(w, _)| w))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Sorted contents, one per line.
    pub fn to_text(&self) -> String {
        let mut words: Vec<&str> = self.words.iter().map(String::as_str).collect();
        words.sort_unstable();
        let mut out = words.join("\n");
        out.push('\n');
        out
    }
}

fn split_sentences(text: &str) -> Vec<&str> {
    let mut sentences = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?') {
            let at_boundary = match chars.peek() {
                None => true,
                Some(&(_, next)) => next.is_whitespace(),
            };
            if at_boundary {
                let end = i + c.len_utf8();
                sentences.push(&text[start..end]);
                start = end;
            }
        }
    }
    if start < text.len() {
        sentences.push(&text[start..]);
    }
    sentences
}

fn tokenize(sentence: &str, stoplist: &WordList, common_words: &WordList) -> Vec<String> {
    let lowered: String = sentence
        .chars()
        .filter(|&c| c != '\'' && c != '\u{2019}')
        .flat_map(char::to_lowercase)
        .collect();
    lowered
        .split(|c: char| !c.is_alphabetic())
        .filter(|t| !t.is_empty())
        .filter(|t| !stoplist.contains(t) && !common_words.contains(t))
        .map(str::to_string)
        .collect()
}

/// Splits `doc` into sentences of cleaned tokens. Sentences left empty after
/// cleaning are dropped.
pub fn preprocess(
    doc: &RawDocument,
    stoplist: &WordList,
    common_words: &WordList,
) -> Vec<Vec<String>> {
    preprocess_text(&doc.text, stoplist, common_words)
}

pub fn preprocess_text(
    text: &str,
    stoplist: &WordList,
    common_words: &WordList,
) -> Vec<Vec<String>> {
    split_sentences(text)
        .into_iter()
        .map(|s| tokenize(s, stoplist, common_words))
        .filter(|s| !s.is_empty())
        .collect()
}

/// Renders token sentences back to text that `preprocess_text` maps to the same sentences.
pub fn detokenize(sentences: &[Vec<String>]) -> String {
    sentences
        .iter()
        .map(|s| format!("{}.", s.join(" ")))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Greedy merge: a paragraph closes at the first sentence boundary where it
/// holds at least `target_words` tokens. Sentences are never split.
pub fn segment_paragraphs(
    doc_id: &str,
    sentences: &[Vec<String>],
    target_words: usize,
) -> Result<Vec<Paragraph>> {
    if target_words == 0 {
        return Err(Error::invalid("target_words must be at least 1"));
    }
    let mut paragraphs = Vec::new();
    let mut current: Vec<String> = Vec::new();
    for sentence in sentences {
        current.extend(sentence.iter().cloned());
        if current.len() >= target_words {
            paragraphs.push(Paragraph::new(
                doc_id,
                paragraphs.len(),
                std::mem::take(&mut current),
            ));
        }
    }
    if !current.is_empty() {
        paragraphs.push(Paragraph::new(doc_id, paragraphs.len(), current));
    }
    Ok(paragraphs)
}

/// Serializes paragraphs as `doc_id<TAB>index<TAB>space-separated tokens`.
pub fn write_paragraphs<'a>(paragraphs: impl IntoIterator<Item = &'a Paragraph>) -> String {
    let mut out = String::new();
    for p in paragraphs {
        out.push_str(&format!(
            "{}\t{}\t{}\n",
            p.doc_id,
            p.index,
            p.tokens.join(" ")
        ));
    }
    out
}

/// Inverse of [`write_paragraphs`]; `#` lines and blank lines are skipped.
pub fn parse_paragraphs(text: &str, source: &str) -> Result<Vec<Paragraph>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split('\t');
        let (Some(doc_id), Some(index), Some(tokens), None) =
            (fields.next(), fields.next(), fields.next(), fields.next())
        else {
            return Err(Error::parse(
                source,
                format!("line {}: expected 3 tab-separated fields", i + 1),
            ));
        };
        let index = index
            .parse()
            .map_err(|_| Error::parse(source, format!("line {}: bad index {index:?}", i + 1)))?;
        out.push(Paragraph::new(
            doc_id,
            index,
            tokens.split_whitespace().map(str::to_string).collect(),
        ));
    }
    Ok(out)
}

pub fn load_paragraphs(path: impl AsRef<Path>) -> Result<Vec<Paragraph>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_paragraphs(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn strips_numbers_and_stop_words() {
        let stop = WordList::new(["the"]);
        let out = preprocess_text("The Firm faces 3 risks.", &stop, &WordList::default());
        assert_eq!(out, vec![words("firm faces risks")]);
    }

    #[test]
    fn empty_text_is_empty() {
        assert!(preprocess_text("", &WordList::default(), &WordList::default()).is_empty());
    }

    #[test]
    fn folds_case_and_punctuation() {
        let out = preprocess_text("AAA aaa, AAA!", &WordList::default(), &WordList::default());
        assert_eq!(out, vec![words("aaa aaa aaa")]);
    }

    #[test]
    fn splits_sentences_only_before_whitespace() {
        let out = preprocess_text(
            "Revenue grew 3.5 percent. Costs fell! Why? End",
            &WordList::default(),
            &WordList::default(),
        );
        assert_eq!(
            out,
            vec![
                words("revenue grew percent"),
                words("costs fell"),
                words("why"),
                words("end")
            ]
        );
    }

    #[test]
    fn hyphens_split_tokens() {
        let out = preprocess_text(
            "third-party risk",
            &WordList::default(),
            &WordList::default(),
        );
        assert_eq!(out, vec![words("third party risk")]);
    }

    #[test]
    fn common_words_removed() {
        let common = WordList::new(["company"]);
        let out = preprocess_text("The company sells.", &WordList::default(), &common);
        assert_eq!(out, vec![words("the sells")]);
    }

    #[test]
    fn greedy_paragraphs() {
        let sentences: Vec<Vec<String>> = (0..4).map(|i| vec![format!("w{i}"); 25]).collect();
        let paras = segment_paragraphs("d", &sentences, 40).unwrap();
        assert_eq!(paras.len(), 2);
        assert!(paras.iter().all(|p| p.word_count == 50));
        assert_eq!(paras[1].index, 1);

        let single = segment_paragraphs("d", &[vec!["x".to_string(); 10]], 40).unwrap();
        assert_eq!(single.len(), 1);
        assert_eq!(single[0].word_count, 10);
    }

    #[test]
    fn word_list_format() {
        let list = WordList::parse("# header\nrisk\n\n  Threat \n");
        assert_eq!(list.len(), 2);
        assert!(list.contains("threat"));
    }

    #[test]
    fn most_common_breaks_ties_alphabetically() {
        let list = WordList::most_common(["b", "a", "c", "c"], 2);
        assert!(list.contains("c") && list.contains("a"));
        assert!(!list.contains("b"));
    }

    #[test]
    fn knowledgebase_documents_need_a_tactic() {
        let mut meta = BTreeMap::new();
        assert!(RawDocument::new("k", SourceKind::Knowledgebase, "x", meta.clone()).is_err());
        meta.insert("tactic".into(), "Persuasion".into());
        assert!(RawDocument::new("k", SourceKind::Knowledgebase, "x", meta.clone()).is_err());
        meta.insert("tactic".into(), "Credential Access".into());
        assert!(RawDocument::new("k", SourceKind::Knowledgebase, "x", meta).is_ok());
        assert!(RawDocument::new("", SourceKind::Filing, "x", BTreeMap::new()).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn segmentation_conserves_tokens(
                lens in proptest::collection::vec(1usize..30, 0..20),
                target in 1usize..60,
            ) {
                let sentences: Vec<Vec<String>> = lens
                    .iter()
                    .enumerate()
                    .map(|(i, &n)| (0..n).map(|j| format!("s{i}w{j}")).collect())
                    .collect();
                let paras = segment_paragraphs("d", &sentences, target).unwrap();
                let flat_in: Vec<&String> = sentences.iter().flatten().collect();
                let flat_out: Vec<&String> = paras.iter().flat_map(|p| &p.tokens).collect();
                prop_assert_eq!(flat_in, flat_out);
                for p in &paras[..paras.len().saturating_sub(1)] {
                    prop_assert!(p.word_count >= target);
                }
            }

            #[test]
            fn preprocess_is_idempotent(text in "[A-Za-z0-9 ,;:.!?'-]{0,200}") {
                let stop = WordList::new(["the", "and"]);
                let once = preprocess_text(&text, &stop, &WordList::default());
                let twice = preprocess_text(&detokenize(&once), &stop, &WordList::default());
                prop_assert_eq!(&once, &twice);
                for t in once.iter().flatten() {
                    prop_assert!(t.chars().all(|c| c.is_alphabetic() && !c.is_uppercase()));
                    prop_assert!(t != "the" && t != "and");
                }
            }
        }
    }
}
