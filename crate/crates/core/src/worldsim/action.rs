//! Actions and the command parser.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::state::InstanceName;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verb {
    Goto,
    Open,
    Close,
    Take,
    Put,
    Heat,
    Cool,
    Clean,
    Use,
    Look,
}

/// A command the agent can issue.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Action {
    GoTo(InstanceName),
    Open(InstanceName),
    Close(InstanceName),
    Take { object: InstanceName, from: InstanceName },
    Put { object: InstanceName, into: InstanceName },
    Heat { object: InstanceName, with: InstanceName },
    Cool { object: InstanceName, with: InstanceName },
    Clean { object: InstanceName, with: InstanceName },
    Use(InstanceName),
    Look,
}

impl Action {
    pub fn verb(&self) -> Verb {
        match self {
            Action::GoTo(_) => Verb::Goto,
            Action::Open(_) => Verb::Open,
            Action::Close(_) => Verb::Close,
            Action::Take { .. } => Verb::Take,
            Action::Put { .. } => Verb::Put,
            Action::Heat { .. } => Verb::Heat,
            Action::Cool { .. } => Verb::Cool,
            Action::Clean { .. } => Verb::Clean,
            Action::Use(_) => Verb::Use,
            Action::Look => Verb::Look,
        }
    }

    /// Instance names the action refers to, object first.
    pub fn arguments(&self) -> Vec<&InstanceName> {
        match self {
            Action::GoTo(r) | Action::Open(r) | Action::Close(r) | Action::Use(r) => vec![r],
            Action::Take { object, from: r }
            | Action::Put { object, into: r }
            | Action::Heat { object, with: r }
            | Action::Cool { object, with: r }
            | Action::Clean { object, with: r } => vec![object, r],
            Action::Look => vec![],
        }
    }

    pub fn text(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::GoTo(r) => write!(f, "go to {r}"),
            Action::Open(r) => write!(f, "open {r}"),
            Action::Close(r) => write!(f, "close {r}"),
            Action::Take { object, from } => write!(f, "take {object} from {from}"),
            Action::Put { object, into } => write!(f, "put {object} in/on {into}"),
            Action::Heat { object, with } => write!(f, "heat {object} with {with}"),
            Action::Cool { object, with } => write!(f, "cool {object} with {with}"),
            Action::Clean { object, with } => write!(f, "clean {object} with {with}"),
            Action::Use(r) => write!(f, "use {r}"),
            Action::Look => f.write_str("look"),
        }
    }
}

impl From<Action> for String {
    fn from(a: Action) -> String {
        a.to_string()
    }
}

impl TryFrom<String> for Action {
    type Error = ParseError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        parse_command(&s)
    }
}

impl FromStr for Action {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_command(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("empty command")]
    Empty,
    #[error("unexpected token `{0}`")]
    Unexpected(String),
    #[error("command ends early, expected {0}")]
    Truncated(&'static str),
}

struct Tokens<'a> {
    items: Vec<&'a str>,
    pos: usize,
}

impl<'a> Tokens<'a> {
    fn next(&mut self) -> Option<&'a str> {
        let t = self.items.get(self.pos).copied();
        self.pos += 1;
        t
    }

    fn expect_word(&mut self, word: &str, what: &'static str) -> Result<(), ParseError> {
        match self.next() {
            Some(t) if t == word => Ok(()),
            Some(t) => Err(ParseError::Unexpected(t.to_string())),
            None => Err(ParseError::Truncated(what)),
        }
    }

    fn name(&mut self) -> Result<InstanceName, ParseError> {
        let class = self.next().ok_or(ParseError::Truncated("an instance name"))?;
        if !class.chars().all(|c| c.is_ascii_alphabetic()) {
            return Err(ParseError::Unexpected(class.to_string()));
        }
        let idx = self.next().ok_or(ParseError::Truncated("an instance index"))?;
        match idx.parse::<u32>() {
            Ok(i) if i >= 1 => Ok(InstanceName::new(class, i)),
            _ => Err(ParseError::Unexpected(idx.to_string())),
        }
    }

    fn finish(&mut self) -> Result<(), ParseError> {
        match self.next() {
            None => Ok(()),
            Some(t) => Err(ParseError::Unexpected(t.to_string())),
        }
    }
}

/// Parses a command such as `take soapbar 1 from countertop 1`.
///
/// Matching is case-insensitive; `put` accepts `in`, `on` or `in/on`, and
/// `goto X` is accepted alongside `go to X`.
pub fn parse_command(text: &str) -> Result<Action, ParseError> {
    let lowered = text.trim().trim_end_matches('.').to_ascii_lowercase();
    let mut t = Tokens { items: lowered.split_whitespace().collect(), pos: 0 };
    let verb = t.next().ok_or(ParseError::Empty)?;
    let action = match verb {
        "go" => {
            t.expect_word("to", "`to`")?;
            Action::GoTo(t.name()?)
        }
        "goto" => Action::GoTo(t.name()?),
        "open" => Action::Open(t.name()?),
        "close" => Action::Close(t.name()?),
        "use" => Action::Use(t.name()?),
        "look" => Action::Look,
        "take" => {
            let object = t.name()?;
            t.expect_word("from", "`from`")?;
            Action::Take { object, from: t.name()? }
        }
        "put" => {
            let object = t.name()?;
            match t.next() {
                Some("in" | "on" | "in/on" | "into" | "onto") => {}
                Some(other) => return Err(ParseError::Unexpected(other.to_string())),
                None => return Err(ParseError::Truncated("`in/on`")),
            }
            Action::Put { object, into: t.name()? }
        }
        "heat" | "cool" | "clean" => {
            let object = t.name()?;
            t.expect_word("with", "`with`")?;
            let with = t.name()?;
            match verb {
                "heat" => Action::Heat { object, with },
                "cool" => Action::Cool { object, with },
                _ => Action::Clean { object, with },
            }
        }
        other => return Err(ParseError::Unexpected(other.to_string())),
    };
    t.finish()?;
    Ok(action)
}
