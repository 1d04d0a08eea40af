//! Tokenization and normalization shared by every analysis.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SWEDISH_STOPWORDS: &str = include_str!("../data/swedish_stopwords.txt");
const SWEDISH_SUFFIXES: &str = include_str!("../data/swedish_suffixes.txt");

/// Stems shorter than this are never produced by suffix stripping.
const MIN_STEM_CHARS: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub normalized: String,
}

impl Token {
    pub fn new(surface: impl Into<String>) -> Self {
        let surface = surface.into();
        let normalized = surface.clone();
        Token {
            surface,
            normalized,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizationConfig {
    pub lowercase: bool,
    /// One word per line, `#` comments. `None` selects the bundled Swedish list.
    pub stopword_path: Option<PathBuf>,
    pub stem: bool,
    /// `suffix→replacement` per line. `None` selects the bundled Swedish rules.
    pub stem_rules_path: Option<PathBuf>,
    pub min_len: usize,
    pub keep_numeric: bool,
    pub content_lexicon_path: Option<PathBuf>,
    pub lexicon_strict: bool,
}

impl Default for NormalizationConfig {
    fn default() -> Self {
        NormalizationConfig {
            lowercase: true,
            stopword_path: None,
            stem: true,
            stem_rules_path: None,
            min_len: 2,
            keep_numeric: true,
            content_lexicon_path: None,
            lexicon_strict: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StemRule {
    pub suffix: String,
    pub replacement: String,
}

/// Splits text into tokens.
///
/// Tokens are maximal runs of letters and digits. A `.` or `,` between two
/// digits stays inside a numeric token (`4,6`), and `%` is a token of its own.
pub fn tokenize(text: &str) -> Vec<Token> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (start, c) = chars[i];
        if c == '%' {
            tokens.push(Token::new("%"));
            i += 1;
            continue;
        }
        if !c.is_alphanumeric() {
            i += 1;
            continue;
        }
        let mut numeric = c.is_ascii_digit();
        let mut j = i + 1;
        while j < chars.len() {
            let c = chars[j].1;
            if c.is_alphanumeric() {
                numeric &= c.is_ascii_digit();
                j += 1;
            } else if (c == '.' || c == ',')
                && numeric
                && chars[j - 1].1.is_ascii_digit()
                && chars.get(j + 1).is_some_and(|&(_, n)| n.is_ascii_digit())
            {
                j += 1;
            } else {
                break;
            }
        }
        let end = chars.get(j).map_or(text.len(), |&(pos, _)| pos);
        tokens.push(Token::new(&text[start..end]));
        i = j;
    }
    tokens
}

/// Digits with optional internal separators, or a bare `%`.
pub fn is_numeric(s: &str) -> bool {
    s == "%"
        || (s.chars().any(|c| c.is_ascii_digit())
            && s.chars().all(|c| c.is_ascii_digit() || c == '.' || c == ','))
}

/// Loaded normalization resources.
#[derive(Debug, Clone)]
pub struct Normalizer {
    config: NormalizationConfig,
    stopwords: HashSet<String>,
    rules: Vec<StemRule>,
    lexicon: Option<HashSet<String>>,
}

impl Normalizer {
    /// Reads every file the config refers to.
    pub fn load(config: &NormalizationConfig) -> Result<Self> {
        if config.min_len < 1 {
            return Err(Error::Config("min_len must be at least 1".into()));
        }
        let stopwords = match &config.stopword_path {
            Some(path) => parse_word_list(&read_config_file(path)?),
            None => parse_word_list(SWEDISH_STOPWORDS),
        };
        let rules = match &config.stem_rules_path {
            Some(path) => parse_stem_rules(&read_config_file(path)?)?,
            None => parse_stem_rules(SWEDISH_SUFFIXES)?,
        };
        let lexicon = match &config.content_lexicon_path {
            Some(path) => Some(parse_word_list(&read_config_file(path)?)),
            None => None,
        };
        Ok(Normalizer::from_parts(config.clone(), stopwords, rules, lexicon))
    }

    pub fn from_parts(
        config: NormalizationConfig,
        stopwords: HashSet<String>,
        mut rules: Vec<StemRule>,
        lexicon: Option<HashSet<String>>,
    ) -> Self {
        rules.sort_by(|a, b| {
            b.suffix
                .chars()
                .count()
                .cmp(&a.suffix.chars().count())
                .then_with(|| a.suffix.cmp(&b.suffix))
        });
        Normalizer {
            config,
            stopwords,
            rules,
            lexicon,
        }
    }

    pub fn config(&self) -> &NormalizationConfig {
        &self.config
    }

    pub fn stopwords(&self) -> &HashSet<String> {
        &self.stopwords
    }

    /// Lowercases, stems, and drops stopwords and short tokens. Works on the
    /// `normalized` field, so applying it twice changes nothing.
    pub fn normalize(&self, tokens: Vec<Token>) -> Vec<Token> {
        tokens
            .into_iter()
            .filter_map(|mut token| {
                let mut form = if self.config.lowercase {
                    token.normalized.to_lowercase()
                } else {
                    token.normalized.clone()
                };
                if self.stopwords.contains(&form) {
                    return None;
                }
                if self.config.stem && !is_numeric(&form) {
                    form = self.stem(&form);
                    if self.stopwords.contains(&form) {
                        return None;
                    }
                }
                let numeric = is_numeric(&form);
                if form.chars().count() < self.config.min_len && !(numeric && self.config.keep_numeric)
                {
                    return None;
                }
                if form.is_empty() {
                    return None;
                }
                token.normalized = form;
                Some(token)
            })
            .collect()
    }

    /// Strips suffixes, longest matching rule first, until no rule applies.
    pub fn stem(&self, word: &str) -> String {
        let mut current = word.to_owned();
        loop {
            let len = current.chars().count();
            let rule = self.rules.iter().find(|r| {
                current.ends_with(r.suffix.as_str())
                    && len - r.suffix.chars().count() + r.replacement.chars().count() >= MIN_STEM_CHARS
            });
            match rule {
                Some(rule) => {
                    current.truncate(current.len() - rule.suffix.len());
                    current.push_str(&rule.replacement);
                }
                None => return current,
            }
        }
    }

    /// Tokenize, normalize and, when a lexicon is configured, content-filter.
    pub fn process(&self, text: &str) -> Vec<Token> {
        let tokens = self.normalize(tokenize(text));
        match &self.lexicon {
            Some(lexicon) => content_filter(tokens, lexicon, self.config.lexicon_strict),
            None => tokens,
        }
    }

    /// Normalized forms of [`Normalizer::process`].
    pub fn terms(&self, text: &str) -> Vec<String> {
        self.process(text).into_iter().map(|t| t.normalized).collect()
    }
}

/// Keeps lexicon tokens. Tokens outside the lexicon survive only when
/// `strict` is off, so a non-strict filter never removes anything.
pub fn content_filter(tokens: Vec<Token>, lexicon: &HashSet<String>, strict: bool) -> Vec<Token> {
    if !strict {
        return tokens;
    }
    tokens
        .into_iter()
        .filter(|t| lexicon.contains(&t.normalized))
        .collect()
}

fn read_config_file(path: &Path) -> Result<String> {
    fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))
}

pub fn parse_word_list(text: &str) -> HashSet<String> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub fn parse_stem_rules(text: &str) -> Result<Vec<StemRule>> {
    let mut rules = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (suffix, replacement) = line
            .split_once('→')
            .or_else(|| line.split_once("->"))
            .ok_or_else(|| Error::Config(format!("stem rule line {}: expected `suffix→replacement`", n + 1)))?;
        let (suffix, replacement) = (suffix.trim(), replacement.trim());
        if suffix.is_empty() {
            return Err(Error::Config(format!("stem rule line {}: empty suffix", n + 1)));
        }
        if replacement.chars().count() >= suffix.chars().count() {
            return Err(Error::Config(format!(
                "stem rule line {}: replacement must be shorter than the suffix",
                n + 1
            )));
        }
        rules.push(StemRule {
            suffix: suffix.to_lowercase(),
            replacement: replacement.to_lowercase(),
        });
    }
    Ok(rules)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn surfaces(tokens: &[Token]) -> Vec<&str> {
        tokens.iter().map(|t| t.surface.as_str()).collect()
    }

    fn normalized(tokens: &[Token]) -> Vec<&str> {
        tokens.iter().map(|t| t.normalized.as_str()).collect()
    }

    fn plain(config: NormalizationConfig) -> Normalizer {
        Normalizer::from_parts(config, HashSet::new(), Vec::new(), None)
    }

    #[test]
    fn tokenizes_decimal_comma_and_percent() {
        let tokens = tokenize("avdrag 4,6 % av månadslönen");
        assert_eq!(surfaces(&tokens), ["avdrag", "4,6", "%", "av", "månadslönen"]);
    }

    #[test]
    fn tokenize_edge_cases() {
        assert!(tokenize("").is_empty());
        assert_eq!(surfaces(&tokenize("a-b c")), ["a", "b", "c"]);
        assert_eq!(surfaces(&tokenize("4.6%")), ["4.6", "%"]);
        assert_eq!(surfaces(&tokenize("slut. 12,")), ["slut", "12"]);
        assert_eq!(surfaces(&tokenize("1,2,3 ab,5")), ["1,2,3", "ab", "5"]);
    }

    #[test]
    fn single_rule_stemming() {
        let rules = parse_stem_rules("en→").unwrap();
        let n = Normalizer::from_parts(NormalizationConfig::default(), HashSet::new(), rules, None);
        let out = n.normalize(vec![Token::new("Sjuklönen")]);
        assert_eq!(normalized(&out), ["sjuklön"]);
        assert_eq!(out[0].surface, "Sjuklönen");
    }

    #[test]
    fn longest_suffix_wins() {
        let rules = parse_stem_rules("a→\narna→\n").unwrap();
        let n = Normalizer::from_parts(NormalizationConfig::default(), HashSet::new(), rules, None);
        assert_eq!(n.stem("dagarna"), "dag");
    }

    #[test]
    fn stopwords_are_dropped() {
        let stop: HashSet<String> = ["av".to_string()].into();
        let n = Normalizer::from_parts(NormalizationConfig::default(), stop, Vec::new(), None);
        let out = n.normalize(vec![Token::new("avdrag"), Token::new("av")]);
        assert_eq!(normalized(&out), ["avdrag"]);
    }

    #[test]
    fn stem_off_only_lowercases() {
        let n = plain(NormalizationConfig {
            stem: false,
            ..Default::default()
        });
        assert_eq!(normalized(&n.normalize(vec![Token::new("Holiday")])), ["holiday"]);
    }

    #[test]
    fn short_tokens_dropped_unless_numeric() {
        let n = plain(NormalizationConfig::default());
        let out = n.normalize(tokenize("a 5 % x ok"));
        assert_eq!(normalized(&out), ["5", "%", "ok"]);
        let n = plain(NormalizationConfig {
            keep_numeric: false,
            ..Default::default()
        });
        assert_eq!(normalized(&n.normalize(tokenize("a 5 % ok"))), ["ok"]);
    }

    #[test]
    fn content_filter_cases() {
        let lex: HashSet<String> = ["semester".to_string()].into();
        let out = content_filter(vec![Token::new("semester"), Token::new("och")], &lex, true);
        assert_eq!(normalized(&out), ["semester"]);

        let input = vec![Token::new("a"), Token::new("b")];
        assert_eq!(content_filter(input.clone(), &HashSet::new(), false), input);

        let lex: HashSet<String> = ["lön".to_string()].into();
        let out = content_filter(vec![Token::new("lön"), Token::new("xyzzy")], &lex, false);
        assert_eq!(normalized(&out), ["lön", "xyzzy"]);
    }

    #[test]
    fn malformed_rules_are_config_errors() {
        assert!(matches!(parse_stem_rules("nosep"), Err(Error::Config(_))));
        assert!(matches!(parse_stem_rules("a→abc"), Err(Error::Config(_))));
        assert!(matches!(parse_stem_rules("→x"), Err(Error::Config(_))));
    }

    #[test]
    fn missing_file_is_config_error() {
        let config = NormalizationConfig {
            stopword_path: Some("/nonexistent/stop.txt".into()),
            ..Default::default()
        };
        assert!(matches!(Normalizer::load(&config), Err(Error::Config(_))));
    }

    #[test]
    fn bundled_swedish_defaults() {
        let n = Normalizer::load(&NormalizationConfig::default()).unwrap();
        let terms = n.terms("För varje uttagen obetald semesterdag görs avdrag med 4,6 % av månadslönen");
        assert!(terms.contains(&"4,6".to_string()));
        assert!(terms.contains(&"%".to_string()));
        assert!(!terms.contains(&"av".to_string()));
        assert!(terms.contains(&"månadslön".to_string()));
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(text in "[a-zåäö0-9 ,.%-]{0,60}", stem in any::<bool>()) {
            let config = NormalizationConfig { stem, ..Default::default() };
            let n = Normalizer::load(&config).unwrap();
            let once = n.normalize(tokenize(&text));
            let twice = n.normalize(once.clone());
            prop_assert_eq!(&once, &twice);
            prop_assert!(once.iter().all(|t| !t.normalized.is_empty()));
        }

        #[test]
        fn normalize_preserves_order(text in "[A-Za-zåäö0-9 ]{0,60}") {
            let n = Normalizer::load(&NormalizationConfig::default()).unwrap();
            let input = tokenize(&text);
            let output = n.normalize(input.clone());
            // output surfaces form a subsequence of input surfaces
            let mut it = input.iter();
            for t in &output {
                prop_assert!(it.any(|i| i.surface == t.surface));
            }
        }
    }
}
