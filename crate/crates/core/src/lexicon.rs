//! Sub-task templates, synonym tables and paraphrase-tolerant parsing of
//! goals and sub-tasks.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::worldsim::{Affordances, Catalog, TaskSpec, TaskType};

const BUILTIN_LEXICON: &str = include_str!("../data/lexicon.toml");

/// Canonical word → synonyms, for verbs and nouns.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Lexicon {
    #[serde(default)]
    pub verbs: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub nouns: BTreeMap<String, Vec<String>>,
}

impl Lexicon {
    pub fn builtin() -> &'static Lexicon {
        static LEX: std::sync::OnceLock<Lexicon> = std::sync::OnceLock::new();
        LEX.get_or_init(|| toml::from_str(BUILTIN_LEXICON).expect("builtin lexicon is valid"))
    }

    /// Synonym phrase → canonical noun, longest phrases first.
    fn noun_aliases(&self) -> Vec<(Vec<String>, &str)> {
        let mut v: Vec<(Vec<String>, &str)> = self
            .nouns
            .iter()
            .flat_map(|(canon, syns)| {
                syns.iter().map(move |s| (tokenize(s), canon.as_str()))
            })
            .collect();
        v.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));
        v
    }
}

/// Lowercased alphanumeric tokens; `in/on` splits into `in`, `on`.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

/// Indefinite article for a noun.
pub fn article(noun: &str) -> &'static str {
    match noun.chars().next() {
        Some('a' | 'e' | 'i' | 'o' | 'u') => "an",
        _ => "a",
    }
}

/// One step of a task decomposition.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SubTask {
    Take { object: String },
    Place { object: String, receptacle: String },
    Heat { object: String },
    Cool { object: String },
    Clean { object: String },
    Examine { object: String, light: String },
}

impl SubTask {
    pub fn object(&self) -> &str {
        match self {
            SubTask::Take { object }
            | SubTask::Place { object, .. }
            | SubTask::Heat { object }
            | SubTask::Cool { object }
            | SubTask::Clean { object }
            | SubTask::Examine { object, .. } => object,
        }
    }

    /// Canonical decomposition of a task.
    pub fn plan_for(task: &TaskSpec) -> Vec<SubTask> {
        let o = task.target_object.clone();
        let r = task.target_receptacle.clone();
        let take = SubTask::Take { object: o.clone() };
        let place = SubTask::Place { object: o.clone(), receptacle: r.clone() };
        match task.task_type {
            TaskType::PickAndPlace => vec![take, place],
            TaskType::PickTwoAndPlace => vec![take.clone(), place.clone(), take, place],
            TaskType::HeatAndPlace => vec![take, SubTask::Heat { object: o }, place],
            TaskType::CoolAndPlace => vec![take, SubTask::Cool { object: o }, place],
            TaskType::CleanAndPlace => vec![take, SubTask::Clean { object: o }, place],
            TaskType::ExamineInLight => vec![take, SubTask::Examine { object: o, light: r }],
        }
    }

    /// Reads a sub-task back from text, tolerating the synonyms of `lexicon`.
    pub fn parse(text: &str, catalog: &Catalog, lexicon: &Lexicon) -> Option<SubTask> {
        let words = canonical_words(text, lexicon);
        let first = words.first()?.as_str();
        let object = words.iter().find(|w| catalog.object(w).is_some())?.clone();
        let receptacle = words.iter().rev().find(|w| catalog.receptacle(w).is_some()).cloned();
        let verb = verb_canon(first, words.get(1).map(String::as_str), lexicon)?;
        Some(match verb {
            "take" => SubTask::Take { object },
            "heat" => SubTask::Heat { object },
            "cool" => SubTask::Cool { object },
            "clean" => SubTask::Clean { object },
            "examine" => SubTask::Examine { object, light: receptacle? },
            "place" => SubTask::Place { object, receptacle: receptacle? },
            _ => return None,
        })
    }
}

impl fmt::Display for SubTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SubTask::Take { object } => write!(f, "take {} {object}", article(object)),
            SubTask::Place { object, receptacle } => {
                write!(f, "place the {object} in/on {receptacle}")
            }
            SubTask::Heat { object } => write!(f, "heat the {object}"),
            SubTask::Cool { object } => write!(f, "cool the {object}"),
            SubTask::Clean { object } => write!(f, "clean the {object}"),
            SubTask::Examine { object, light } => write!(f, "examine the {object} with the {light}"),
        }
    }
}

/// Tokens with multi-word noun synonyms collapsed to canonical class names.
fn canonical_words(text: &str, lexicon: &Lexicon) -> Vec<String> {
    let tokens = tokenize(text);
    let aliases = lexicon.noun_aliases();
    let mut out = Vec::with_capacity(tokens.len());
    let mut i = 0;
    'outer: while i < tokens.len() {
        for (phrase, canon) in &aliases {
            let n = phrase.len();
            if i + n <= tokens.len() && tokens[i..i + n] == phrase[..] {
                out.push((*canon).to_string());
                i += n;
                continue 'outer;
            }
        }
        out.push(tokens[i].clone());
        i += 1;
    }
    out
}

/// Maps a leading verb (possibly two words, e.g. `pick up`) to its canonical
/// sub-task verb.
fn verb_canon(first: &str, second: Option<&str>, lexicon: &Lexicon) -> Option<&'static str> {
    const CANON: [&str; 6] = ["take", "place", "heat", "cool", "clean", "examine"];
    if let Some(c) = CANON.iter().find(|c| **c == first) {
        return Some(c);
    }
    let two = second.map(|s| format!("{first} {s}"));
    for c in CANON {
        if let Some(syns) = lexicon.verbs.get(c) {
            if syns.iter().any(|s| s == first || Some(s) == two.as_ref()) {
                return Some(c);
            }
        }
    }
    None
}

/// Catalog class names mentioned in `text`, synonyms resolved.
pub fn named_classes(text: &str, catalog: &Catalog, lexicon: &Lexicon) -> Vec<String> {
    let mut out: Vec<String> = canonical_words(text, lexicon)
        .into_iter()
        .filter(|w| catalog.object(w).is_some() || catalog.receptacle(w).is_some())
        .collect();
    out.dedup();
    out
}

const HEAT_CUES: [&str; 5] = ["heat", "hot", "warm", "heated", "warmed"];
const COOL_CUES: [&str; 6] = ["cool", "chill", "chilled", "cold", "refrigerate", "cooled"];
const CLEAN_CUES: [&str; 5] = ["clean", "rinse", "wash", "rinsed", "washed"];

/// Recovers (task type, object class, receptacle class) from a goal, templated
/// or paraphrased. Returns `None` when no object or receptacle class is named.
pub fn parse_goal(text: &str, catalog: &Catalog, lexicon: &Lexicon) -> Option<(TaskType, String, String)> {
    let words = canonical_words(text, lexicon);
    let object = words.iter().find(|w| catalog.object(w).is_some())?.clone();
    let light = words.iter().find(|w| {
        catalog
            .receptacle(w)
            .is_some_and(|r| r.affordances.contains(Affordances::LIGHT_SOURCE))
    });
    if let Some(light) = light {
        return Some((TaskType::ExamineInLight, object, light.clone()));
    }
    let receptacle = words.iter().rev().find(|w| catalog.receptacle(w).is_some())?.clone();
    let has = |cues: &[&str]| words.iter().any(|w| cues.contains(&w.as_str()));
    let task_type = if words.iter().any(|w| w == "two") {
        TaskType::PickTwoAndPlace
    } else if has(&HEAT_CUES) {
        TaskType::HeatAndPlace
    } else if has(&COOL_CUES) {
        TaskType::CoolAndPlace
    } else if has(&CLEAN_CUES) {
        TaskType::CleanAndPlace
    } else {
        TaskType::PickAndPlace
    };
    Some((task_type, object, receptacle))
}
