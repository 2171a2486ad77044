//! Corpus data model: tagged sentences, relation metadata, and file IO.
//!
//! Sentences arrive as JSON lines of the form
//! `{"tokens": [...], "pos": [...], "head": [s, e], "tail": [s, e], "relation": "..."}`.
//! The `pos` field is optional; rows without it are tagged with
//! [`tag_tokens`]. Entity spans are half-open token index ranges and must be
//! in bounds and non-overlapping.
//!
//! Relation metadata lives in a JSON catalog: one entry per relation with its
//! super-class, a short description word list, and the super-classes of the
//! head and tail entities.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coarse part-of-speech classes. Only the four open classes are ever
/// rewritten by augmentation; everything else is `Other`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Pos {
    Noun,
    Verb,
    Adj,
    Adv,
    Other,
}

impl Pos {
    /// True for the classes eligible for word-level substitution.
    pub fn is_content(self) -> bool {
        matches!(self, Pos::Noun | Pos::Verb | Pos::Adj | Pos::Adv)
    }
}

/// One labeled sentence with entity spans.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaggedSentence {
    pub tokens: Vec<String>,
    pub pos: Vec<Pos>,
    /// Head entity span, half-open token index range.
    pub head: [usize; 2],
    /// Tail entity span, half-open token index range.
    pub tail: [usize; 2],
    pub relation: String,
}

#[derive(Deserialize)]
struct SentenceRow {
    tokens: Vec<String>,
    #[serde(default)]
    pos: Option<Vec<Pos>>,
    head: [usize; 2],
    tail: [usize; 2],
    relation: String,
}

impl<'de> Deserialize<'de> for TaggedSentence {
    fn deserialize<D>(deserializer: D) -> std::result::Result<Self, D::Error>
    where
        D: serde::Deserializer<'de>,
    {
        let row = SentenceRow::deserialize(deserializer)?;
        let pos = row.pos.unwrap_or_else(|| tag_tokens(&row.tokens));
        Ok(TaggedSentence {
            tokens: row.tokens,
            pos,
            head: row.head,
            tail: row.tail,
            relation: row.relation,
        })
    }
}

impl TaggedSentence {
    /// Checks the structural invariants: non-empty, one tag per token,
    /// spans in bounds and non-overlapping.
    pub fn validate(&self) -> Result<()> {
        if self.tokens.is_empty() {
            return Err(Error::Data("sentence has no tokens".into()));
        }
        if self.pos.len() != self.tokens.len() {
            return Err(Error::Data(format!(
                "pos length {} does not match token length {}",
                self.pos.len(),
                self.tokens.len()
            )));
        }
        for (label, span) in [("head", self.head), ("tail", self.tail)] {
            if span[0] >= span[1] || span[1] > self.tokens.len() {
                return Err(Error::Data(format!(
                    "{label} span [{}, {}) out of bounds for {} tokens",
                    span[0],
                    span[1],
                    self.tokens.len()
                )));
            }
        }
        let disjoint = self.head[1] <= self.tail[0] || self.tail[1] <= self.head[0];
        if !disjoint {
            return Err(Error::Data(format!(
                "head span [{}, {}) overlaps tail span [{}, {})",
                self.head[0], self.head[1], self.tail[0], self.tail[1]
            )));
        }
        Ok(())
    }
}

/// Metadata for one relation: its super-class, a description word list, and
/// the super-classes of its head and tail entities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationMeta {
    pub name: String,
    pub super_class: String,
    pub description: Vec<String>,
    pub head_super: String,
    pub tail_super: String,
}

/// Looks up a relation by name in a catalog slice.
pub fn meta_for<'a>(catalog: &'a [RelationMeta], name: &str) -> Option<&'a RelationMeta> {
    catalog.iter().find(|m| m.name == name)
}

/// Reads a JSONL corpus, filling missing `pos` arrays with [`tag_tokens`]
/// and validating every row. Blank lines are skipped.
pub fn read_corpus(path: &Path) -> Result<Vec<TaggedSentence>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let sentence: TaggedSentence = serde_json::from_str(&line).map_err(|e| {
            Error::Data(format!("{}:{}: {e}", path.display(), lineno + 1))
        })?;
        sentence
            .validate()
            .map_err(|e| Error::Data(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
        out.push(sentence);
    }
    Ok(out)
}

/// Writes a corpus as one JSON object per line.
pub fn write_corpus(path: &Path, sentences: &[TaggedSentence]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for s in sentences {
        let line = serde_json::to_string(s)
            .map_err(|e| Error::Data(format!("serializing sentence: {e}")))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a relation catalog (JSON array of [`RelationMeta`]), rejecting
/// duplicate or empty relation names.
pub fn read_catalog(path: &Path) -> Result<Vec<RelationMeta>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let catalog: Vec<RelationMeta> = serde_json::from_str(&text)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let mut seen = BTreeSet::new();
    for meta in &catalog {
        if meta.name.is_empty() {
            return Err(Error::Data(format!(
                "{}: relation with empty name",
                path.display()
            )));
        }
        if !seen.insert(meta.name.as_str()) {
            return Err(Error::Data(format!(
                "{}: duplicate relation name {:?}",
                path.display(),
                meta.name
            )));
        }
    }
    Ok(catalog)
}

/// Writes a relation catalog as pretty-printed JSON.
pub fn write_catalog(path: &Path, catalog: &[RelationMeta]) -> Result<()> {
    let text = serde_json::to_string_pretty(catalog)
        .map_err(|e| Error::Data(format!("serializing catalog: {e}")))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Function words and other closed-class forms, kept lowercase.
const CLOSED_CLASS: &[&str] = &[
    "a", "about", "above", "after", "again", "all", "also", "am", "an", "and", "any", "are",
    "as", "at", "be", "because", "been", "being", "below", "between", "both", "but", "by",
    "can", "could", "did", "do", "does", "down", "during", "each", "few", "for", "from",
    "further", "had", "has", "have", "he", "her", "here", "hers", "him", "his", "how", "i",
    "if", "in", "into", "is", "it", "its", "just", "may", "me", "might", "more", "most",
    "must", "my", "no", "nor", "not", "now", "of", "off", "on", "once", "only", "or",
    "other", "our", "out", "over", "own", "shall", "she", "should", "so", "some", "such",
    "than", "that", "the", "their", "them", "then", "there", "these", "they", "this",
    "those", "through", "to", "too", "under", "until", "up", "us", "very", "was", "we",
    "were", "what", "when", "where", "which", "while", "who", "whom", "why", "will", "with",
    "would", "you", "your",
];

/// True if `word` (case-insensitive) is a function word or other
/// closed-class form.
pub fn is_closed_class(word: &str) -> bool {
    let lower = word.to_lowercase();
    CLOSED_CLASS.binary_search(&lower.as_str()).is_ok()
}

/// Tags tokens with a suffix heuristic: closed-class forms and
/// non-alphabetic tokens are `Other`; `-ly` marks adverbs, `-ing`/`-ed`
/// verbs, `-ous`/`-ful`/`-ive` adjectives; everything else is a noun.
pub fn tag_tokens(tokens: &[String]) -> Vec<Pos> {
    tokens.iter().map(|t| tag_token(t)).collect()
}

fn tag_token(token: &str) -> Pos {
    if is_closed_class(token) {
        return Pos::Other;
    }
    let lower = token.to_lowercase();
    if !lower.chars().all(|c| c.is_alphabetic()) {
        return Pos::Other;
    }
    let n = lower.len();
    if lower.ends_with("ly") && n >= 4 {
        Pos::Adv
    } else if lower.ends_with("ing") && n >= 5 {
        Pos::Verb
    } else if lower.ends_with("ed") && n >= 4 {
        Pos::Verb
    } else if (lower.ends_with("ous") || lower.ends_with("ful") || lower.ends_with("ive"))
        && n >= 5
    {
        Pos::Adj
    } else {
        Pos::Noun
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sentence(tokens: &[&str]) -> TaggedSentence {
        let tokens: Vec<String> = tokens.iter().map(|s| s.to_string()).collect();
        let pos = tag_tokens(&tokens);
        TaggedSentence {
            tokens,
            pos,
            head: [0, 1],
            tail: [2, 3],
            relation: "r".into(),
        }
    }

    #[test]
    fn closed_class_list_is_sorted_for_binary_search() {
        let mut sorted = CLOSED_CLASS.to_vec();
        sorted.sort_unstable();
        assert_eq!(CLOSED_CLASS, sorted.as_slice());
    }

    #[test]
    fn tagger_classes() {
        assert_eq!(tag_token("the"), Pos::Other);
        assert_eq!(tag_token("The"), Pos::Other);
        assert_eq!(tag_token(","), Pos::Other);
        assert_eq!(tag_token("1984"), Pos::Other);
        assert_eq!(tag_token("quickly"), Pos::Adv);
        assert_eq!(tag_token("running"), Pos::Verb);
        assert_eq!(tag_token("walked"), Pos::Verb);
        assert_eq!(tag_token("famous"), Pos::Adj);
        assert_eq!(tag_token("hopeful"), Pos::Adj);
        assert_eq!(tag_token("active"), Pos::Adj);
        assert_eq!(tag_token("dog"), Pos::Noun);
        assert_eq!(tag_token("fly"), Pos::Noun); // too short for -ly rule
    }

    #[test]
    fn validate_accepts_well_formed_sentence() {
        sentence(&["alice", "visited", "paris", "today"])
            .validate()
            .unwrap();
    }

    #[test]
    fn validate_rejects_bad_spans() {
        let mut s = sentence(&["a", "b", "c"]);
        s.head = [2, 2];
        assert!(s.validate().is_err());

        let mut s = sentence(&["a", "b", "c"]);
        s.tail = [1, 4];
        assert!(s.validate().is_err());

        let mut s = sentence(&["a", "b", "c"]);
        s.head = [0, 2];
        s.tail = [1, 3];
        assert!(s.validate().is_err(), "overlapping spans must be rejected");
    }

    #[test]
    fn validate_rejects_pos_length_mismatch() {
        let mut s = sentence(&["a", "b", "c"]);
        s.pos.pop();
        assert!(s.validate().is_err());
    }

    #[test]
    fn corpus_roundtrip_and_pos_defaulting() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        std::fs::write(
            &path,
            concat!(
                r#"{"tokens": ["bob", "visited", "rome"], "pos": ["NOUN", "VERB", "NOUN"], "head": [0, 1], "tail": [2, 3], "relation": "visited"}"#,
                "\n",
                r#"{"tokens": ["ann", "walked", "home"], "head": [0, 1], "tail": [2, 3], "relation": "visited"}"#,
                "\n",
            ),
        )
        .unwrap();
        let corpus = read_corpus(&path).unwrap();
        assert_eq!(corpus.len(), 2);
        assert_eq!(corpus[0].pos, vec![Pos::Noun, Pos::Verb, Pos::Noun]);
        // Second row had no pos field; the tagger fills it.
        assert_eq!(corpus[1].pos, vec![Pos::Noun, Pos::Verb, Pos::Noun]);

        let out = dir.path().join("copy.jsonl");
        write_corpus(&out, &corpus).unwrap();
        let again = read_corpus(&out).unwrap();
        assert_eq!(corpus, again);
    }

    #[test]
    fn corpus_read_reports_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(&path, "{\"tokens\": [}\n").unwrap();
        let err = read_corpus(&path).unwrap_err();
        assert!(err.to_string().contains(":1:"), "got: {err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn catalog_rejects_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("catalog.json");
        let meta = RelationMeta {
            name: "born_in".into(),
            super_class: "location".into(),
            description: vec!["place".into(), "of".into(), "birth".into()],
            head_super: "person".into(),
            tail_super: "location".into(),
        };
        write_catalog(&path, &[meta.clone(), meta]).unwrap();
        assert!(read_catalog(&path).is_err());
    }
}
