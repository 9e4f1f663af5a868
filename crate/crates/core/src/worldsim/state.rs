//! Mutable simulation state.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::catalog::Affordances;
use super::WorldError;

/// Instance name such as `cabinet 3`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct InstanceName {
    pub class: String,
    pub index: u32,
}

impl InstanceName {
    pub fn new(class: impl Into<String>, index: u32) -> Self {
        Self { class: class.into(), index }
    }

    /// Ordering used for rendered lists: class ascending, index descending.
    pub fn display_cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.class.cmp(&other.class).then(other.index.cmp(&self.index))
    }
}

impl fmt::Display for InstanceName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.class, self.index)
    }
}

impl FromStr for InstanceName {
    type Err = WorldError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.split_whitespace();
        match (parts.next(), parts.next(), parts.next()) {
            (Some(class), Some(idx), None) => {
                let index = idx
                    .parse::<u32>()
                    .ok()
                    .filter(|i| *i >= 1)
                    .ok_or_else(|| WorldError::BadName(s.to_string()))?;
                Ok(InstanceName::new(class.to_ascii_lowercase(), index))
            }
            _ => Err(WorldError::BadName(s.to_string())),
        }
    }
}

impl From<InstanceName> for String {
    fn from(n: InstanceName) -> String {
        n.to_string()
    }
}

impl TryFrom<String> for InstanceName {
    type Error = WorldError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

pub type ReceptacleId = usize;
pub type ObjectId = usize;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Receptacle {
    pub name: InstanceName,
    pub affordances: Affordances,
    /// `Some(open?)` for openable receptacles.
    pub open: Option<bool>,
    /// Light sources only.
    #[serde(default)]
    pub lit: bool,
}

impl Receptacle {
    pub fn is_openable(&self) -> bool {
        self.affordances.contains(Affordances::OPENABLE)
    }

    /// Contents can be seen and reached.
    pub fn is_accessible(&self) -> bool {
        self.open.unwrap_or(true)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Location {
    In(ReceptacleId),
    Inventory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Condition {
    pub heated: bool,
    pub cooled: bool,
    pub cleaned: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Object {
    pub name: InstanceName,
    pub affordances: Affordances,
    pub location: Location,
    #[serde(default)]
    pub condition: Condition,
}

/// Full simulation state of one room.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldState {
    pub receptacles: Vec<Receptacle>,
    pub objects: Vec<Object>,
    /// `None` while the agent stands at its start position.
    pub agent_at: Option<ReceptacleId>,
    pub step_count: u32,
}

impl WorldState {
    pub fn receptacle_id(&self, name: &InstanceName) -> Option<ReceptacleId> {
        self.receptacles.iter().position(|r| &r.name == name)
    }

    pub fn object_id(&self, name: &InstanceName) -> Option<ObjectId> {
        self.objects.iter().position(|o| &o.name == name)
    }

    pub fn held(&self) -> Option<ObjectId> {
        self.objects.iter().position(|o| o.location == Location::Inventory)
    }

    /// Objects inside a receptacle, in rendering order.
    pub fn contents(&self, rid: ReceptacleId) -> Vec<ObjectId> {
        let mut ids: Vec<ObjectId> = (0..self.objects.len())
            .filter(|&i| self.objects[i].location == Location::In(rid))
            .collect();
        ids.sort_by(|&a, &b| self.objects[a].name.display_cmp(&self.objects[b].name));
        ids
    }

    /// Receptacle ids in rendering order.
    pub fn receptacles_in_display_order(&self) -> Vec<ReceptacleId> {
        let mut ids: Vec<ReceptacleId> = (0..self.receptacles.len()).collect();
        ids.sort_by(|&a, &b| self.receptacles[a].name.display_cmp(&self.receptacles[b].name));
        ids
    }

    pub fn is_receptacle_name(&self, name: &InstanceName) -> bool {
        self.receptacle_id(name).is_some()
    }

    /// Checks structural invariants; used by tests and after deserialization.
    pub fn validate(&self) -> Result<(), WorldError> {
        let mut names = std::collections::HashSet::new();
        for r in &self.receptacles {
            if !names.insert(r.name.clone()) {
                return Err(WorldError::Invariant(format!("duplicate name {}", r.name)));
            }
            if r.is_openable() != r.open.is_some() {
                return Err(WorldError::Invariant(format!("{} open state mismatch", r.name)));
            }
        }
        let mut held = 0;
        for o in &self.objects {
            if !names.insert(o.name.clone()) {
                return Err(WorldError::Invariant(format!("duplicate name {}", o.name)));
            }
            match o.location {
                Location::Inventory => held += 1,
                Location::In(rid) if rid >= self.receptacles.len() => {
                    return Err(WorldError::Invariant(format!("{} in unknown receptacle", o.name)))
                }
                Location::In(_) => {}
            }
        }
        if held > 1 {
            return Err(WorldError::Invariant("inventory holds more than one object".into()));
        }
        if matches!(self.agent_at, Some(a) if a >= self.receptacles.len()) {
            return Err(WorldError::Invariant("agent at unknown receptacle".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn instance_names_parse_and_print() {
        let n: InstanceName = "Cabinet 12".parse().unwrap();
        assert_eq!(n, InstanceName::new("cabinet", 12));
        assert_eq!(n.to_string(), "cabinet 12");
        assert!("cabinet".parse::<InstanceName>().is_err());
        assert!("cabinet 0".parse::<InstanceName>().is_err());
    }

    #[test]
    fn display_order_is_class_then_descending_index() {
        let mut v = vec![
            InstanceName::new("soapbar", 1),
            InstanceName::new("cloth", 1),
            InstanceName::new("soapbar", 2),
        ];
        v.sort_by(|a, b| a.display_cmp(b));
        let s: Vec<String> = v.iter().map(|n| n.to_string()).collect();
        assert_eq!(s, ["cloth 1", "soapbar 2", "soapbar 1"]);
    }
}
