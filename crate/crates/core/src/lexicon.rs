//! Lexicon of determiner phrases and typed predicates.
//!
//! A lexicon is the extension point of the dataset generator: every pair is
//! rendered from one entry list of determiner phrases and one list of
//! predicates tagged as distributive or ambiguous. The file format is TOML:
//!
//! ```toml
//! version = "seed-1"
//! quantifier_blocklist = ["each", "every", "all", "both"]
//!
//! [[determiner_phrases]]
//! text = "Mia"
//! category = "person"
//!
//! [[predicates]]
//! text = "pushed a rock"
//! type = "ambiguous"
//! phrasal = true
//! subjects = ["person", "animal"]   # optional, defaults to every category
//! ```

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The lexicon shipped with the crate.
pub const SEED_LEXICON_TOML: &str = include_str!("../data/seed_lexicon.toml");

pub const DEFAULT_QUANTIFIER_BLOCKLIST: &[&str] = &["each", "every", "all", "both"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Person,
    Animal,
    Object,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Person, Category::Animal, Category::Object];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distributivity {
    Distributive,
    Ambiguous,
}

impl Distributivity {
    pub fn flipped(self) -> Self {
        match self {
            Distributivity::Distributive => Distributivity::Ambiguous,
            Distributivity::Ambiguous => Distributivity::Distributive,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Distributivity::Distributive => "distributive",
            Distributivity::Ambiguous => "ambiguous",
        }
    }
}

impl fmt::Display for Distributivity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DeterminerPhrase {
    pub text: String,
    pub category: Category,
}

impl DeterminerPhrase {
    pub fn new(text: impl Into<String>, category: Category) -> Self {
        Self {
            text: text.into(),
            category,
        }
    }
}

/// A verb phrase with its distributivity type. `phrasal` marks multi-word
/// predicates such as "pushed a rock".
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Predicate {
    pub text: String,
    pub distributivity: Distributivity,
    pub phrasal: bool,
}

impl Predicate {
    pub fn new(text: impl Into<String>, distributivity: Distributivity) -> Self {
        let text = text.into();
        let phrasal = text.split_whitespace().count() > 1;
        Self {
            text,
            distributivity,
            phrasal,
        }
    }
}

/// A predicate as listed in a lexicon, with the subject categories it may
/// combine with.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredicateEntry {
    pub predicate: Predicate,
    pub subjects: BTreeSet<Category>,
}

impl PredicateEntry {
    pub fn accepts(&self, category: Category) -> bool {
        self.subjects.contains(&category)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicon {
    pub determiner_phrases: Vec<DeterminerPhrase>,
    pub predicates: Vec<PredicateEntry>,
    pub quantifier_blocklist: Vec<String>,
    pub version: String,
    pub seed_note: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLexicon {
    #[serde(default)]
    version: String,
    #[serde(default)]
    seed_note: String,
    #[serde(default)]
    quantifier_blocklist: Option<Vec<String>>,
    #[serde(default)]
    determiner_phrases: Vec<RawDeterminer>,
    #[serde(default)]
    predicates: Vec<RawPredicate>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDeterminer {
    text: String,
    category: Category,
    #[serde(default)]
    group_noun: bool,
    #[serde(default)]
    conventionalized_conjunction: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPredicate {
    text: String,
    #[serde(rename = "type")]
    distributivity: Distributivity,
    #[serde(default)]
    phrasal: Option<bool>,
    #[serde(default)]
    subjects: Option<Vec<Category>>,
}

/// Lowercased alphanumeric words of `text`.
pub fn words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric() && c != '\'')
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
}

/// First blocklisted token appearing as a whole word in `text`.
pub fn find_blocked_token<'a>(text: &str, blocklist: &'a [String]) -> Option<&'a str> {
    words(text).find_map(|w| {
        blocklist
            .iter()
            .find(|b| b.eq_ignore_ascii_case(&w))
            .map(String::as_str)
    })
}

pub fn load_lexicon(path: impl AsRef<Path>) -> Result<Lexicon> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Lexicon::from_toml_str(&text)
}

impl Lexicon {
    pub fn seed() -> Lexicon {
        Lexicon::from_toml_str(SEED_LEXICON_TOML).expect("shipped seed lexicon is valid")
    }

    pub fn from_toml_str(text: &str) -> Result<Lexicon> {
        let raw: RawLexicon =
            toml::from_str(text).map_err(|e| Error::LexiconParse(e.to_string()))?;

        let mut determiner_phrases = Vec::with_capacity(raw.determiner_phrases.len());
        for d in raw.determiner_phrases {
            if d.group_noun {
                return Err(rule(
                    &d.text,
                    "group nouns are not allowed as determiner phrases",
                ));
            }
            if d.conventionalized_conjunction {
                return Err(rule(
                    &d.text,
                    "conventionalized conjunctions are not allowed as determiner phrases",
                ));
            }
            determiner_phrases.push(DeterminerPhrase::new(d.text, d.category));
        }

        let predicates = raw
            .predicates
            .into_iter()
            .map(|p| {
                let phrasal = p
                    .phrasal
                    .unwrap_or_else(|| p.text.split_whitespace().count() > 1);
                let subjects = match p.subjects {
                    Some(s) => s.into_iter().collect(),
                    None => Category::ALL.into_iter().collect(),
                };
                PredicateEntry {
                    predicate: Predicate {
                        text: p.text,
                        distributivity: p.distributivity,
                        phrasal,
                    },
                    subjects,
                }
            })
            .collect();

        let quantifier_blocklist = raw.quantifier_blocklist.unwrap_or_else(|| {
            DEFAULT_QUANTIFIER_BLOCKLIST
                .iter()
                .map(|s| s.to_string())
                .collect()
        });

        let lexicon = Lexicon {
            determiner_phrases,
            predicates,
            quantifier_blocklist,
            version: raw.version,
            seed_note: raw.seed_note,
        };
        lexicon.validate()?;
        Ok(lexicon)
    }

    /// Checks every lexicon invariant, reporting the first offending entry.
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for d in &self.determiner_phrases {
            if d.text.trim().is_empty() {
                return Err(rule(&d.text, "determiner phrase text must be non-empty"));
            }
            if let Some(tok) = find_blocked_token(&d.text, &self.quantifier_blocklist) {
                return Err(rule(
                    &d.text,
                    &format!("contains quantifier {tok:?} from the quantifier blocklist"),
                ));
            }
            if !seen.insert(d.text.to_lowercase()) {
                return Err(rule(&d.text, "duplicate determiner phrase"));
            }
        }

        let mut seen = BTreeSet::new();
        for p in &self.predicates {
            let text = &p.predicate.text;
            if text.trim().is_empty() {
                return Err(rule(text, "predicate text must be non-empty"));
            }
            if let Some(tok) = find_blocked_token(text, &self.quantifier_blocklist) {
                return Err(rule(
                    text,
                    &format!("contains quantifier {tok:?} from the quantifier blocklist"),
                ));
            }
            if p.subjects.is_empty() {
                return Err(rule(
                    text,
                    "predicate must accept at least one subject category",
                ));
            }
            if !seen.insert(text.to_lowercase()) {
                return Err(rule(text, "duplicate predicate"));
            }
        }

        for kind in [Distributivity::Distributive, Distributivity::Ambiguous] {
            if !self
                .predicates
                .iter()
                .any(|p| p.predicate.distributivity == kind)
            {
                return Err(Error::MissingPredicateType(kind));
            }
        }
        Ok(())
    }

    pub fn predicates_of(&self, kind: Distributivity) -> impl Iterator<Item = &PredicateEntry> {
        self.predicates
            .iter()
            .filter(move |p| p.predicate.distributivity == kind)
    }

    pub fn find_predicate(&self, text: &str) -> Option<&PredicateEntry> {
        self.predicates.iter().find(|p| p.predicate.text == text)
    }

    /// Serializes back to the TOML file format.
    pub fn to_toml_string(&self) -> String {
        #[derive(Serialize)]
        struct OutDet<'a> {
            text: &'a str,
            category: Category,
        }
        #[derive(Serialize)]
        struct OutPred<'a> {
            text: &'a str,
            #[serde(rename = "type")]
            distributivity: Distributivity,
            phrasal: bool,
            subjects: Vec<Category>,
        }
        #[derive(Serialize)]
        struct Out<'a> {
            version: &'a str,
            seed_note: &'a str,
            quantifier_blocklist: &'a [String],
            determiner_phrases: Vec<OutDet<'a>>,
            predicates: Vec<OutPred<'a>>,
        }
        let out = Out {
            version: &self.version,
            seed_note: &self.seed_note,
            quantifier_blocklist: &self.quantifier_blocklist,
            determiner_phrases: self
                .determiner_phrases
                .iter()
                .map(|d| OutDet {
                    text: &d.text,
                    category: d.category,
                })
                .collect(),
            predicates: self
                .predicates
                .iter()
                .map(|p| OutPred {
                    text: &p.predicate.text,
                    distributivity: p.predicate.distributivity,
                    phrasal: p.predicate.phrasal,
                    subjects: p.subjects.iter().copied().collect(),
                })
                .collect(),
        };
        toml::to_string(&out).expect("lexicon serializes to toml")
    }
}

fn rule(entry: &str, rule: &str) -> Error {
    Error::LexiconRule {
        entry: entry.to_string(),
        rule: rule.to_string(),
    }
}
