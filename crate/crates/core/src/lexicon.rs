//! Keyword and emotion lexicons.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Hierarchical term lists: category → subcategory → terms.
///
/// Terms are lowercase and may span several tokens ("grand mother").
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicon {
    categories: BTreeMap<String, BTreeMap<String, Vec<Vec<String>>>>,
}

impl Lexicon {
    pub fn new(raw: BTreeMap<String, BTreeMap<String, Vec<String>>>) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::InvalidInput("lexicon has no categories".into()));
        }
        let mut categories = BTreeMap::new();
        for (cat, subs) in raw {
            let mut parsed = BTreeMap::new();
            for (sub, terms) in subs {
                if terms.is_empty() {
                    return Err(Error::InvalidInput(format!("lexicon `{cat}.{sub}` has no terms")));
                }
                let mut seen = HashSet::new();
                let mut list = Vec::with_capacity(terms.len());
                for term in terms {
                    let tokens: Vec<String> = term.split_whitespace().map(str::to_lowercase).collect();
                    if tokens.is_empty() {
                        return Err(Error::InvalidInput(format!("lexicon `{cat}.{sub}` has a blank term")));
                    }
                    if !seen.insert(tokens.clone()) {
                        return Err(Error::InvalidInput(format!(
                            "lexicon `{cat}.{sub}` repeats term `{term}`"
                        )));
                    }
                    list.push(tokens);
                }
                parsed.insert(sub, list);
            }
            categories.insert(cat, parsed);
        }
        Ok(Self { categories })
    }

    /// Reads a lexicon from JSON `{category: {subcategory: [terms]}}`.
    pub fn from_json_str(raw: &str) -> Result<Self> {
        Self::new(serde_json::from_str(raw)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&raw)
    }

    pub fn categories(&self) -> impl Iterator<Item = (&str, &BTreeMap<String, Vec<Vec<String>>>)> {
        self.categories.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// Matcher over every term of one category.
    pub(crate) fn matcher(&self, category: &str) -> Option<TermMatcher> {
        let subs = self.categories.get(category)?;
        let mut matcher = TermMatcher::default();
        for (sub, terms) in subs {
            for term in terms {
                matcher.insert(term.clone(), sub.clone());
            }
        }
        Some(matcher)
    }
}

/// Longest-first, left-to-right matching of multi-token terms.
#[derive(Debug, Default, Clone)]
pub(crate) struct TermMatcher {
    by_first: HashMap<String, Vec<(Vec<String>, String)>>,
}

impl TermMatcher {
    fn insert(&mut self, term: Vec<String>, label: String) {
        let entry = self.by_first.entry(term[0].clone()).or_default();
        // Earlier subcategories win identical terms.
        if entry.iter().any(|(t, _)| *t == term) {
            return;
        }
        entry.push((term, label));
        entry.sort_by_key(|e| std::cmp::Reverse(e.0.len()));
    }

    /// Yields `(start, len, label)` for non-overlapping matches.
    pub fn find_all<'a>(&'a self, tokens: &'a [String]) -> Vec<(usize, usize, &'a str)> {
        let mut out = Vec::new();
        let mut i = 0;
        while i < tokens.len() {
            let hit = self.by_first.get(&tokens[i]).and_then(|cands| {
                cands
                    .iter()
                    .find(|(term, _)| tokens[i..].starts_with(term))
                    .map(|(term, label)| (term.len(), label.as_str()))
            });
            match hit {
                Some((len, label)) => {
                    out.push((i, len, label));
                    i += len;
                }
                None => i += 1,
            }
        }
        out
    }
}

pub const EKMAN_EMOTIONS: [&str; 6] = ["anger", "disgust", "fear", "joy", "sadness", "surprise"];

/// Word → emotion associations in the NRC layout.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EmotionLexicon {
    tags: HashMap<String, BTreeSet<String>>,
    emotions: BTreeSet<String>,
}

impl EmotionLexicon {
    /// Builds a lexicon from `emotion → terms` lists.
    pub fn from_lists<I, S>(lists: I) -> Self
    where
        I: IntoIterator<Item = (S, Vec<S>)>,
        S: AsRef<str>,
    {
        let mut lex = Self::default();
        for (emotion, terms) in lists {
            let emotion = emotion.as_ref().to_lowercase();
            lex.emotions.insert(emotion.clone());
            for t in terms {
                lex.tags
                    .entry(t.as_ref().to_lowercase())
                    .or_default()
                    .insert(emotion.clone());
            }
        }
        lex
    }

    /// Parses `term<TAB>emotion<TAB>0|1` lines. Rows with `0` still add the
    /// term to the vocabulary.
    pub fn from_tsv_str(raw: &str, source: &Path) -> Result<Self> {
        let mut lex = Self::default();
        for (lineno, line) in raw.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let parse_err = |message: &str| Error::Parse {
                path: source.to_owned(),
                line: lineno + 1,
                message: message.to_owned(),
            };
            if fields.len() != 3 {
                return Err(parse_err("expected term<TAB>emotion<TAB>0|1"));
            }
            let term = fields[0].trim().to_lowercase();
            let emotion = fields[1].trim().to_lowercase();
            let tags = lex.tags.entry(term).or_default();
            lex.emotions.insert(emotion.clone());
            match fields[2].trim() {
                "1" => {
                    tags.insert(emotion);
                }
                "0" => {}
                _ => return Err(parse_err("association must be 0 or 1")),
            }
        }
        Ok(lex)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_tsv_str(&raw, path)
    }

    pub fn emotions(&self) -> impl Iterator<Item = &str> {
        self.emotions.iter().map(String::as_str)
    }

    /// `None` when the word is outside the lexicon vocabulary.
    pub fn tags(&self, word: &str) -> Option<&BTreeSet<String>> {
        self.tags.get(word)
    }

    pub fn vocabulary_size(&self) -> usize {
        self.tags.len()
    }
}
