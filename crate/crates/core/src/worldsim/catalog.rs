//! Receptacle and object class catalog.

use std::collections::BTreeMap;
use std::path::Path;

use bitflags::bitflags;
use serde::{Deserialize, Serialize};

use super::WorldError;

const BUILTIN_CATALOG: &str = include_str!("../../data/catalog.toml");

bitflags! {
    /// Capabilities attached to a receptacle or object class.
    #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
    #[serde(transparent)]
    pub struct Affordances: u16 {
        const OPENABLE = 1 << 0;
        const HEAT_SOURCE = 1 << 1;
        const COOL_SOURCE = 1 << 2;
        const CLEAN_SOURCE = 1 << 3;
        const LIGHT_SOURCE = 1 << 4;
        const PICKUPABLE = 1 << 5;
        const HEATABLE = 1 << 6;
        const COOLABLE = 1 << 7;
        const CLEANABLE = 1 << 8;
        const EXAMINABLE = 1 << 9;
    }
}

const RECEPTACLE_ONLY: Affordances = Affordances::OPENABLE
    .union(Affordances::HEAT_SOURCE)
    .union(Affordances::COOL_SOURCE)
    .union(Affordances::CLEAN_SOURCE)
    .union(Affordances::LIGHT_SOURCE);

const OBJECT_ONLY: Affordances = Affordances::PICKUPABLE
    .union(Affordances::HEATABLE)
    .union(Affordances::COOLABLE)
    .union(Affordances::CLEANABLE);

impl Affordances {
    fn from_key(name: &str) -> Option<Self> {
        Some(match name {
            "openable" => Self::OPENABLE,
            "heat_source" => Self::HEAT_SOURCE,
            "cool_source" => Self::COOL_SOURCE,
            "clean_source" => Self::CLEAN_SOURCE,
            "light_source" => Self::LIGHT_SOURCE,
            "pickupable" => Self::PICKUPABLE,
            "heatable" => Self::HEATABLE,
            "coolable" => Self::COOLABLE,
            "cleanable" => Self::CLEANABLE,
            "examinable" => Self::EXAMINABLE,
            _ => return None,
        })
    }
}

/// Room archetypes a scene can be drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoomKind {
    Kitchen,
    Bathroom,
    Bedroom,
    Livingroom,
}

impl RoomKind {
    pub const ALL: [RoomKind; 4] = [
        RoomKind::Kitchen,
        RoomKind::Bathroom,
        RoomKind::Bedroom,
        RoomKind::Livingroom,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReceptacleClass {
    pub name: String,
    pub affordances: Affordances,
    /// Instance count range per room kind.
    pub rooms: BTreeMap<RoomKind, (u32, u32)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectClass {
    pub name: String,
    pub affordances: Affordances,
    pub food: bool,
    /// Receptacle classes this object normally spawns in, most likely first.
    pub spawn: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Catalog {
    receptacles: Vec<ReceptacleClass>,
    objects: Vec<ObjectClass>,
}

#[derive(Deserialize)]
struct RawCatalog {
    #[serde(default)]
    receptacle: Vec<RawReceptacle>,
    #[serde(default)]
    object: Vec<RawObject>,
}

#[derive(Deserialize)]
struct RawReceptacle {
    name: String,
    #[serde(default)]
    affordances: Vec<String>,
    rooms: BTreeMap<RoomKind, (u32, u32)>,
}

#[derive(Deserialize)]
struct RawObject {
    name: String,
    #[serde(default)]
    affordances: Vec<String>,
    #[serde(default)]
    food: bool,
    spawn: Vec<String>,
}

fn parse_affordances(owner: &str, names: &[String]) -> Result<Affordances, WorldError> {
    names.iter().try_fold(Affordances::empty(), |acc, n| {
        Affordances::from_key(n)
            .map(|a| acc | a)
            .ok_or_else(|| WorldError::Catalog(format!("{owner}: unknown affordance `{n}`")))
    })
}

impl Catalog {
    /// The catalog shipped with the crate.
    pub fn builtin() -> &'static Catalog {
        static CATALOG: std::sync::OnceLock<Catalog> = std::sync::OnceLock::new();
        CATALOG.get_or_init(|| Catalog::from_toml(BUILTIN_CATALOG).expect("builtin catalog is valid"))
    }

    pub fn from_path(path: &Path) -> Result<Self, WorldError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| WorldError::Catalog(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, WorldError> {
        let raw: RawCatalog =
            toml::from_str(text).map_err(|e| WorldError::Catalog(e.to_string()))?;
        let mut receptacles = Vec::with_capacity(raw.receptacle.len());
        for r in raw.receptacle {
            let affordances = parse_affordances(&r.name, &r.affordances)?;
            receptacles.push(ReceptacleClass { name: r.name, affordances, rooms: r.rooms });
        }
        let mut objects = Vec::with_capacity(raw.object.len());
        for o in raw.object {
            let affordances = parse_affordances(&o.name, &o.affordances)?;
            objects.push(ObjectClass { name: o.name, affordances, food: o.food, spawn: o.spawn });
        }
        let catalog = Catalog { receptacles, objects };
        catalog.validate()?;
        Ok(catalog)
    }

    /// Adds the classes of `other`, replacing same-named entries.
    pub fn extend(&mut self, other: Catalog) -> Result<(), WorldError> {
        for r in other.receptacles {
            match self.receptacles.iter_mut().find(|x| x.name == r.name) {
                Some(slot) => *slot = r,
                None => self.receptacles.push(r),
            }
        }
        for o in other.objects {
            match self.objects.iter_mut().find(|x| x.name == o.name) {
                Some(slot) => *slot = o,
                None => self.objects.push(o),
            }
        }
        self.validate()
    }

    fn validate(&self) -> Result<(), WorldError> {
        let mut seen = std::collections::HashSet::new();
        for r in &self.receptacles {
            if !seen.insert(("r", r.name.as_str())) {
                return Err(WorldError::Catalog(format!("duplicate receptacle class `{}`", r.name)));
            }
            if r.affordances.intersects(OBJECT_ONLY) {
                return Err(WorldError::Catalog(format!(
                    "receptacle class `{}` carries object affordances",
                    r.name
                )));
            }
            if !is_class_token(&r.name) {
                return Err(WorldError::Catalog(format!("bad class name `{}`", r.name)));
            }
            for (lo, hi) in r.rooms.values() {
                if lo > hi {
                    return Err(WorldError::Catalog(format!("`{}`: empty count range", r.name)));
                }
            }
        }
        for o in &self.objects {
            if !seen.insert(("o", o.name.as_str())) {
                return Err(WorldError::Catalog(format!("duplicate object class `{}`", o.name)));
            }
            if o.affordances.intersects(RECEPTACLE_ONLY) {
                return Err(WorldError::Catalog(format!(
                    "object class `{}` carries receptacle affordances",
                    o.name
                )));
            }
            if !is_class_token(&o.name) {
                return Err(WorldError::Catalog(format!("bad class name `{}`", o.name)));
            }
            if self.receptacle(&o.name).is_some() {
                return Err(WorldError::Catalog(format!(
                    "`{}` is both a receptacle and an object class",
                    o.name
                )));
            }
            for s in &o.spawn {
                if self.receptacle(s).is_none() {
                    return Err(WorldError::Catalog(format!(
                        "`{}` spawns in unknown receptacle `{s}`",
                        o.name
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn receptacles(&self) -> &[ReceptacleClass] {
        &self.receptacles
    }

    pub fn objects(&self) -> &[ObjectClass] {
        &self.objects
    }

    pub fn receptacle(&self, name: &str) -> Option<&ReceptacleClass> {
        self.receptacles.iter().find(|r| r.name == name)
    }

    pub fn object(&self, name: &str) -> Option<&ObjectClass> {
        self.objects.iter().find(|o| o.name == name)
    }
}

fn is_class_token(name: &str) -> bool {
    !name.is_empty() && name.chars().all(|c| c.is_ascii_lowercase())
}
