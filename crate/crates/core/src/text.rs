//! Rule-based sentence splitting, tokenization and small word-level helpers.

use std::collections::HashSet;
use std::ops::Range;
use std::sync::OnceLock;

const TERMINALS: [char; 3] = ['.', '!', '?'];
const CLOSERS: [char; 8] = ['"', '\'', ')', ']', '}', '\u{201d}', '\u{2019}', '\u{bb}'];
const OPENERS: [char; 8] = ['"', '\'', '(', '[', '{', '\u{201c}', '\u{2018}', '\u{ab}'];
const TRAILING: [char; 16] = [
    '.', ',', '!', '?', ';', ':', '"', '\'', ')', ']', '}', '\u{201d}', '\u{2019}', '\u{bb}',
    '\u{2026}', '-',
];

fn word_set(raw: &'static str) -> HashSet<&'static str> {
    raw.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect()
}

pub fn abbreviations() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| word_set(include_str!("../data/abbreviations.txt")))
}

pub fn pronouns() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| word_set(include_str!("../data/pronouns.txt")))
}

pub fn function_words() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| word_set(include_str!("../data/function_words.txt")))
}

pub(crate) fn bundled_list(raw: &'static str) -> HashSet<String> {
    word_set(raw).into_iter().map(str::to_owned).collect()
}

/// Collapses every whitespace run to a single space and trims the ends.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Splits raw text into sentence strings.
///
/// A sentence ends at a run of `.`, `!` or `?` (plus any closing quotes or
/// brackets) that is followed by whitespace and an upper-case letter, or by the
/// end of the text. A lone period closing a word on the abbreviation list
/// never ends a sentence.
pub fn split_sentences(raw: &str) -> Vec<String> {
    let chars: Vec<(usize, char)> = raw.char_indices().collect();
    let mut out = Vec::new();
    let mut start = 0usize;
    let mut i = 0usize;
    while i < chars.len() {
        let (_, c) = chars[i];
        if !TERMINALS.contains(&c) {
            i += 1;
            continue;
        }
        let run_start = i;
        let mut j = i;
        while j < chars.len() && TERMINALS.contains(&chars[j].1) {
            j += 1;
        }
        let only_period = j - run_start == 1 && c == '.';
        while j < chars.len() && CLOSERS.contains(&chars[j].1) {
            j += 1;
        }
        let end_byte = chars.get(j).map_or(raw.len(), |(b, _)| *b);

        let mut k = j;
        while k < chars.len() && chars[k].1.is_whitespace() {
            k += 1;
        }
        let at_end = k == chars.len();
        let mut boundary = at_end;
        if !at_end && k > j {
            let mut m = k;
            while m < chars.len() && OPENERS.contains(&chars[m].1) {
                m += 1;
            }
            boundary = m < chars.len() && chars[m].1.is_uppercase();
        }
        if boundary && only_period && is_abbreviation(raw, chars[run_start].0) {
            boundary = false;
        }
        if boundary {
            push_sentence(&mut out, &raw[start..end_byte]);
            start = end_byte;
        }
        i = j.max(i + 1);
    }
    push_sentence(&mut out, &raw[start..]);
    out
}

fn push_sentence(out: &mut Vec<String>, piece: &str) {
    let s = normalize_whitespace(piece);
    if !s.is_empty() {
        out.push(s);
    }
}

/// `period_at` is the byte offset of the period closing the candidate word.
fn is_abbreviation(raw: &str, period_at: usize) -> bool {
    let word_start = raw[..period_at]
        .rfind(char::is_whitespace)
        .map_or(0, |p| p + raw[p..].chars().next().map_or(1, char::len_utf8));
    let word = raw[word_start..=period_at].trim_start_matches(&OPENERS[..]);
    abbreviations().contains(word.to_lowercase().as_str())
}

/// Byte ranges of the tokens of `text`.
///
/// Each whitespace-delimited word is split into leading punctuation, a core,
/// and trailing punctuation, every punctuation character becoming its own
/// token. Abbreviations keep their period.
pub fn token_spans(text: &str) -> Vec<Range<usize>> {
    let mut spans = Vec::new();
    let mut offset = 0usize;
    for word in text.split_whitespace() {
        let begin = offset + text[offset..].find(word).expect("word comes from text");
        offset = begin + word.len();
        if abbreviations().contains(word.to_lowercase().as_str()) {
            spans.push(begin..offset);
            continue;
        }
        let mut lo = begin;
        let mut hi = offset;
        let mut leading = Vec::new();
        for c in word.chars() {
            if OPENERS.contains(&c) && lo < hi {
                leading.push(lo..lo + c.len_utf8());
                lo += c.len_utf8();
            } else {
                break;
            }
        }
        let mut trailing = Vec::new();
        while hi > lo {
            let c = text[lo..hi].chars().next_back().expect("non-empty");
            if TRAILING.contains(&c) {
                trailing.push(hi - c.len_utf8()..hi);
                hi -= c.len_utf8();
            } else {
                break;
            }
        }
        spans.extend(leading);
        if hi > lo {
            spans.push(lo..hi);
        }
        spans.extend(trailing.into_iter().rev());
    }
    spans
}

pub fn tokenize(text: &str) -> Vec<String> {
    token_spans(text)
        .into_iter()
        .map(|r| text[r].to_owned())
        .collect()
}

/// Joins tokens back into running text, attaching closing punctuation to the
/// preceding token.
pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut out = String::new();
    for tok in tokens {
        let tok = tok.as_ref();
        let attach = tok.chars().all(|c| TRAILING.contains(&c) && c != '-' && c != '"');
        if !out.is_empty() && !attach {
            out.push(' ');
        }
        out.push_str(tok);
    }
    out
}

/// True for tokens that carry at least one alphanumeric character.
pub fn is_word(token: &str) -> bool {
    token.chars().any(char::is_alphanumeric)
}

/// Vowel-group syllable estimate: maximal runs of `aeiouy`, minus one for a
/// terminal `e` when more than one group was found, never below one.
pub fn count_syllables(word: &str) -> usize {
    let lower = word.to_lowercase();
    let mut groups = 0usize;
    let mut in_vowel = false;
    for c in lower.chars() {
        let v = matches!(c, 'a' | 'e' | 'i' | 'o' | 'u' | 'y');
        if v && !in_vowel {
            groups += 1;
        }
        in_vowel = v;
    }
    if groups > 1 && lower.ends_with('e') {
        groups -= 1;
    }
    groups.max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CasePattern {
    Lower,
    Title,
    Upper,
}

impl CasePattern {
    pub fn of(token: &str) -> Self {
        let letters: Vec<char> = token.chars().filter(|c| c.is_alphabetic()).collect();
        match letters.first() {
            Some(first) if first.is_uppercase() => {
                if letters.len() > 1 && letters.iter().all(|c| c.is_uppercase()) {
                    CasePattern::Upper
                } else {
                    CasePattern::Title
                }
            }
            _ => CasePattern::Lower,
        }
    }

    pub fn apply(self, lower: &str) -> String {
        match self {
            CasePattern::Lower => lower.to_owned(),
            CasePattern::Upper => lower.to_uppercase(),
            CasePattern::Title => {
                let mut chars = lower.chars();
                match chars.next() {
                    Some(c) => c.to_uppercase().chain(chars).collect(),
                    None => String::new(),
                }
            }
        }
    }
}

/// 64-bit FNV-1a, used wherever a hash must be stable across builds.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_two_clauses() {
        assert_eq!(split_sentences("Hello there. Nice day."), vec!["Hello there.", "Nice day."]);
    }

    #[test]
    fn abbreviation_does_not_split() {
        assert_eq!(
            split_sentences("Dr. Smith left. She ran."),
            vec!["Dr. Smith left.", "She ran."]
        );
    }

    #[test]
    fn three_terminals() {
        assert_eq!(split_sentences("A! B? C."), vec!["A!", "B?", "C."]);
    }

    #[test]
    fn lowercase_continuation_does_not_split() {
        assert_eq!(split_sentences("It cost 3.5 dollars. then more"), vec!["It cost 3.5 dollars. then more"]);
    }

    #[test]
    fn quoted_sentence_end() {
        assert_eq!(
            split_sentences("\"Stop!\" she said. \"Why?\" He asked."),
            vec!["\"Stop!\" she said.", "\"Why?\"", "He asked."]
        );
    }

    #[test]
    fn tokenization_separates_punctuation() {
        assert_eq!(tokenize("Hello, (world)!"), vec!["Hello", ",", "(", "world", ")", "!"]);
        assert_eq!(tokenize("Dr. Who"), vec!["Dr.", "Who"]);
        assert_eq!(tokenize("hello"), vec!["hello"]);
        assert_eq!(tokenize("don't"), vec!["don't"]);
    }

    #[test]
    fn detokenize_reverses_simple_sentences() {
        let text = "He said, she left.";
        assert_eq!(detokenize(&tokenize(text)), text);
    }

    #[test]
    fn syllables() {
        assert_eq!(count_syllables("cat"), 1);
        assert_eq!(count_syllables("make"), 1);
        assert_eq!(count_syllables("the"), 1);
        assert_eq!(count_syllables("water"), 2);
        assert_eq!(count_syllables("beautiful"), 3);
        assert_eq!(count_syllables("rhythm"), 1);
        assert_eq!(count_syllables("42"), 1);
    }

    #[test]
    fn case_patterns() {
        assert_eq!(CasePattern::of("He"), CasePattern::Title);
        assert_eq!(CasePattern::of("HE"), CasePattern::Upper);
        assert_eq!(CasePattern::of("he"), CasePattern::Lower);
        assert_eq!(CasePattern::of("I"), CasePattern::Title);
        assert_eq!(CasePattern::Title.apply("she"), "She");
        assert_eq!(CasePattern::Upper.apply("she"), "SHE");
    }
}
