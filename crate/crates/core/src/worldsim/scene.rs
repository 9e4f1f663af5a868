//! Seeded scene and task generation, plus a line-delimited scene format.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::catalog::{Affordances, Catalog, RoomKind};
use super::state::{InstanceName, Location, Object, Receptacle, WorldState};
use super::task::{TaskSpec, TaskType};
use super::WorldError;
use crate::expert::{solve_with_catalog, SearchPolicy, DEFAULT_STEP_BUDGET};

/// Rejection attempts before generation gives up on a seed.
pub const MAX_ATTEMPTS: u32 = 100;

const REFERENCE_BATHROOM: &str = include_str!("../../data/reference_bathroom.jsonl");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub min_receptacles: u32,
    pub max_receptacles: u32,
    pub min_objects: u32,
    /// Per receptacle.
    pub max_objects: u32,
    /// Chance that an object spawns outside its usual receptacle classes.
    pub anomaly_rate: f64,
    /// Fixes the room kind instead of drawing one.
    pub room: Option<RoomKind>,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            min_receptacles: 12,
            max_receptacles: 18,
            min_objects: 0,
            max_objects: 4,
            anomaly_rate: 0.05,
            room: None,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<(), WorldError> {
        let bad = |m: String| Err(WorldError::Config(m));
        if !(5..=30).contains(&self.min_receptacles)
            || !(5..=30).contains(&self.max_receptacles)
            || self.min_receptacles > self.max_receptacles
        {
            return bad(format!(
                "receptacle range {}..={} must lie within 5..=30",
                self.min_receptacles, self.max_receptacles
            ));
        }
        if self.max_objects > 15 || self.min_objects > self.max_objects {
            return bad(format!(
                "object range {}..={} must lie within 0..=15",
                self.min_objects, self.max_objects
            ));
        }
        if !(0.0..=1.0).contains(&self.anomaly_rate) {
            return bad(format!("anomaly_rate {} outside [0, 1]", self.anomaly_rate));
        }
        Ok(())
    }
}

/// A generated scene: initial state plus its task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub seed: u64,
    /// Rejection attempt that produced the layout.
    pub attempt: u32,
    pub room: RoomKind,
    pub state: WorldState,
    pub task: TaskSpec,
}

/// Receptacles and objects for `(seed, attempt)`, without a task.
pub fn generate_layout(
    seed: u64,
    attempt: u32,
    config: &SceneConfig,
    catalog: &Catalog,
) -> (RoomKind, WorldState) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::from(attempt));
    let room = config.room.unwrap_or_else(|| *RoomKind::ALL.choose(&mut rng).expect("non-empty"));

    let classes: Vec<_> = catalog
        .receptacles()
        .iter()
        .filter_map(|c| c.rooms.get(&room).map(|&(lo, hi)| (c, lo, hi)))
        .collect();
    let lo_total: u32 = classes.iter().map(|c| c.1).sum();
    let hi_total: u32 = classes.iter().map(|c| c.2).sum();
    let wanted = rng
        .gen_range(config.min_receptacles..=config.max_receptacles)
        .clamp(lo_total, hi_total.max(lo_total));
    let mut counts: Vec<u32> = classes.iter().map(|c| c.1).collect();
    let mut total = lo_total;
    while total < wanted {
        let open: Vec<usize> = (0..classes.len()).filter(|&i| counts[i] < classes[i].2).collect();
        let Some(&i) = open.choose(&mut rng) else { break };
        counts[i] += 1;
        total += 1;
    }

    let mut receptacles = Vec::new();
    for (c, n) in classes.iter().zip(&counts) {
        for index in 1..=*n {
            let class = c.0;
            receptacles.push(Receptacle {
                name: InstanceName::new(&class.name, index),
                affordances: class.affordances,
                open: class.affordances.contains(Affordances::OPENABLE).then_some(false),
                lit: false,
            });
        }
    }

    let mut objects = Vec::new();
    let mut next_index: BTreeMap<String, u32> = BTreeMap::new();
    for (rid, r) in receptacles.iter().enumerate() {
        if r.affordances.contains(Affordances::LIGHT_SOURCE) {
            continue;
        }
        let k = rng.gen_range(config.min_objects..=config.max_objects);
        for _ in 0..k {
            let anomalous = rng.gen_bool(config.anomaly_rate);
            let pool: Vec<_> = catalog
                .objects()
                .iter()
                .filter(|o| o.spawn.contains(&r.name.class) != anomalous)
                .collect();
            let Some(class) = pool.choose(&mut rng) else { continue };
            let idx = next_index.entry(class.name.clone()).or_insert(0);
            *idx += 1;
            objects.push(Object {
                name: InstanceName::new(&class.name, *idx),
                affordances: class.affordances,
                location: Location::In(rid),
                condition: Default::default(),
            });
        }
    }
    (room, WorldState { receptacles, objects, agent_at: None, step_count: 0 })
}

/// Every feasible (task type, object class, receptacle class) in `state`.
///
/// Combos where a target-class object already sits in a target-class
/// receptacle are left out.
pub fn task_combos(state: &WorldState, catalog: &Catalog) -> Vec<(TaskType, String, String)> {
    let mut obj_counts: BTreeMap<&str, usize> = BTreeMap::new();
    for o in &state.objects {
        *obj_counts.entry(o.name.class.as_str()).or_default() += 1;
    }
    let mut recep_classes: Vec<&str> = state.receptacles.iter().map(|r| r.name.class.as_str()).collect();
    recep_classes.dedup();
    let has_source =
        |a: Affordances| state.receptacles.iter().any(|r| r.affordances.contains(a));
    let already_there = |obj: &str, recep: &str| {
        state.objects.iter().any(|o| {
            o.name.class == obj
                && matches!(o.location, Location::In(rid) if state.receptacles[rid].name.class == recep)
        })
    };

    let mut out = Vec::new();
    for tt in TaskType::ALL {
        if tt.required_source().is_some_and(|s| !has_source(s)) {
            continue;
        }
        for (&obj, &count) in &obj_counts {
            let Some(oc) = catalog.object(obj) else { continue };
            let need = tt.required_object_affordance() | Affordances::PICKUPABLE;
            if !oc.affordances.contains(need) {
                continue;
            }
            if tt == TaskType::PickTwoAndPlace && count < 2 {
                continue;
            }
            for &recep in &recep_classes {
                let Some(rc) = catalog.receptacle(recep) else { continue };
                let light = rc.affordances.contains(Affordances::LIGHT_SOURCE);
                let fits = if tt == TaskType::ExamineInLight {
                    light
                } else {
                    !light && oc.spawn.iter().any(|s| s == recep)
                };
                if fits && !already_there(obj, recep) {
                    out.push((tt, obj.to_string(), recep.to_string()));
                }
            }
        }
    }
    out
}

/// Draws a task type uniformly among the feasible ones, then a combo and a
/// goal template. `allow` can veto combos.
pub fn sample_task(
    state: &WorldState,
    seed: u64,
    catalog: &Catalog,
    rng: &mut impl Rng,
    allow: impl Fn(TaskType, &str, &str) -> bool,
) -> Option<TaskSpec> {
    let combos: Vec<_> = task_combos(state, catalog)
        .into_iter()
        .filter(|(t, o, r)| allow(*t, o, r))
        .collect();
    let mut types: Vec<TaskType> = combos.iter().map(|c| c.0).collect();
    types.dedup();
    let tt = *types.choose(rng)?;
    let of_type: Vec<_> = combos.iter().filter(|c| c.0 == tt).collect();
    let (_, o, r) = of_type.choose(rng)?;
    let template = rng.gen_range(0..2);
    Some(TaskSpec::new(tt, o.clone(), r.clone(), template, seed))
}

/// Task-sampling generator for one attempt; separate from the layout stream.
pub(crate) fn task_rng(seed: u64, attempt: u32, salt: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    rng.set_stream((u64::from(attempt) << 16) | salt);
    rng
}

/// Generates a solvable scene; bit-identical for identical inputs.
pub fn generate_scene(seed: u64, config: &SceneConfig) -> Result<Scene, WorldError> {
    generate_scene_filtered(seed, config, Catalog::builtin(), |_, _, _| true)
}

/// [`generate_scene`] with a custom catalog and a combo filter.
pub fn generate_scene_filtered(
    seed: u64,
    config: &SceneConfig,
    catalog: &Catalog,
    allow: impl Fn(TaskType, &str, &str) -> bool,
) -> Result<Scene, WorldError> {
    config.validate()?;
    for attempt in 0..MAX_ATTEMPTS {
        let (room, state) = generate_layout(seed, attempt, config, catalog);
        let mut rng = task_rng(seed, attempt, 0);
        let Some(task) = sample_task(&state, seed, catalog, &mut rng, &allow) else { continue };
        if solve_with_catalog(&state, &task, SearchPolicy::default(), DEFAULT_STEP_BUDGET, catalog).is_ok() {
            return Ok(Scene { seed, attempt, room, state, task });
        }
    }
    Err(WorldError::Unsolvable { seed, attempts: MAX_ATTEMPTS })
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum SceneLine {
    Header { seed: u64, attempt: u32, room: RoomKind, task: TaskSpec },
    Receptacle {
        name: InstanceName,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        open: Option<bool>,
    },
    Object { name: InstanceName, location: InstanceName },
}

/// One header line, then one line per receptacle and per object.
pub fn scene_to_jsonl(scene: &Scene) -> String {
    let mut lines = vec![SceneLine::Header {
        seed: scene.seed,
        attempt: scene.attempt,
        room: scene.room,
        task: scene.task.clone(),
    }];
    for r in &scene.state.receptacles {
        lines.push(SceneLine::Receptacle { name: r.name.clone(), open: r.open });
    }
    for o in &scene.state.objects {
        // fixtures describe initial states; nothing is held
        if let Location::In(rid) = o.location {
            lines.push(SceneLine::Object {
                name: o.name.clone(),
                location: scene.state.receptacles[rid].name.clone(),
            });
        }
    }
    let mut out = String::new();
    for l in lines {
        out.push_str(&serde_json::to_string(&l).expect("scene lines serialize"));
        out.push('\n');
    }
    out
}

pub fn scene_from_jsonl(text: &str, catalog: &Catalog) -> Result<Scene, WorldError> {
    let err = |m: String| WorldError::SceneFile(m);
    let mut header = None;
    let mut state = WorldState { receptacles: vec![], objects: vec![], agent_at: None, step_count: 0 };
    for (no, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let parsed: SceneLine =
            serde_json::from_str(line).map_err(|e| err(format!("line {}: {e}", no + 1)))?;
        match parsed {
            SceneLine::Header { seed, attempt, room, task } => header = Some((seed, attempt, room, task)),
            SceneLine::Receptacle { name, open } => {
                let class = catalog
                    .receptacle(&name.class)
                    .ok_or_else(|| err(format!("line {}: unknown receptacle class `{}`", no + 1, name.class)))?;
                let openable = class.affordances.contains(Affordances::OPENABLE);
                state.receptacles.push(Receptacle {
                    name,
                    affordances: class.affordances,
                    open: if openable { Some(open.unwrap_or(false)) } else { None },
                    lit: false,
                });
            }
            SceneLine::Object { name, location } => {
                let class = catalog
                    .object(&name.class)
                    .ok_or_else(|| err(format!("line {}: unknown object class `{}`", no + 1, name.class)))?;
                let rid = state
                    .receptacle_id(&location)
                    .ok_or_else(|| err(format!("line {}: unknown receptacle `{location}`", no + 1)))?;
                state.objects.push(Object {
                    name,
                    affordances: class.affordances,
                    location: Location::In(rid),
                    condition: Default::default(),
                });
            }
        }
    }
    let (seed, attempt, room, task) = header.ok_or_else(|| err("missing header line".into()))?;
    state.validate()?;
    Ok(Scene { seed, attempt, room, state, task })
}

/// The two-soapbar bathroom used as a worked example throughout the tests.
pub fn reference_bathroom() -> Scene {
    scene_from_jsonl(REFERENCE_BATHROOM, Catalog::builtin()).expect("reference fixture is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid_and_bounds_enforced() {
        assert!(SceneConfig::default().validate().is_ok());
        let c = SceneConfig { max_receptacles: 31, ..Default::default() };
        assert!(c.validate().is_err());
        let c = SceneConfig { max_objects: 16, ..Default::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn jsonl_round_trip() {
        let s = generate_scene(3, &SceneConfig::default()).unwrap();
        let back = scene_from_jsonl(&scene_to_jsonl(&s), Catalog::builtin()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn reference_fixture_loads() {
        let s = reference_bathroom();
        assert_eq!(s.state.receptacles.len(), 12);
        assert_eq!(s.task.task_type, TaskType::PickTwoAndPlace);
    }
}
