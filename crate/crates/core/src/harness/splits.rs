use std::collections::BTreeSet;

use super::{HarnessConfig, HarnessError};
use crate::expert::{solve_with_catalog, SearchPolicy, DEFAULT_STEP_BUDGET};
use crate::worldsim::{generate_layout, task_rng, generate_scene, sample_task, Catalog, Scene, TaskType, WorldError};

/// Seen tasks draw fresh tasks on training layouts with these stream salts.
const SEEN_SALTS: std::ops::RangeInclusive<u64> = 1..=8;

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Vec<Scene>,
    /// Training layouts with (object, receptacle) pairs absent from training.
    pub seen: Vec<Scene>,
    /// Layouts from disjoint seeds.
    pub unseen: Vec<Scene>,
}

impl Splits {
    pub fn train_pairs(&self) -> BTreeSet<(String, String)> {
        pairs(&self.train)
    }

    pub fn train_combos(&self) -> BTreeSet<(TaskType, String, String)> {
        self.train
            .iter()
            .map(|s| (s.task.task_type, s.task.target_object.clone(), s.task.target_receptacle.clone()))
            .collect()
    }
}

fn pairs(scenes: &[Scene]) -> BTreeSet<(String, String)> {
    scenes.iter().map(|s| (s.task.target_object.clone(), s.task.target_receptacle.clone())).collect()
}

fn scenes_from(base: u64, count: usize, config: &HarnessConfig) -> Result<Vec<Scene>, HarnessError> {
    let mut out = Vec::with_capacity(count);
    let mut seed = base;
    while out.len() < count {
        match generate_scene(seed, &config.scenes) {
            Ok(s) => out.push(s),
            Err(WorldError::Unsolvable { .. }) => tracing::debug!(seed, "skipping unsolvable seed"),
            Err(e) => return Err(e.into()),
        }
        seed += 1;
    }
    Ok(out)
}

/// Train, seen and unseen scenes, deterministic in the config.
pub fn build_splits(config: &HarnessConfig) -> Result<Splits, HarnessError> {
    let sc = &config.splits;
    if sc.train == 0 {
        return Err(HarnessError::EmptySplit("train"));
    }
    let train = scenes_from(sc.train_seed_base, sc.train, config)?;
    let train_seeds: BTreeSet<u64> = train.iter().map(|s| s.seed).collect();
    let mut used = pairs(&train);
    let catalog = Catalog::builtin();

    let mut seen = Vec::with_capacity(sc.seen);
    'salts: for salt in SEEN_SALTS {
        for base in &train {
            if seen.len() == sc.seen {
                break 'salts;
            }
            let (room, state) = generate_layout(base.seed, base.attempt, &config.scenes, catalog);
            let mut rng = task_rng(base.seed, base.attempt, salt);
            let allow = |_: TaskType, o: &str, r: &str| !used.contains(&(o.to_string(), r.to_string()));
            let Some(task) = sample_task(&state, base.seed, catalog, &mut rng, allow) else { continue };
            if solve_with_catalog(&state, &task, SearchPolicy::default(), DEFAULT_STEP_BUDGET, catalog).is_err() {
                continue;
            }
            used.insert((task.target_object.clone(), task.target_receptacle.clone()));
            seen.push(Scene { seed: base.seed, attempt: base.attempt, room, state, task });
        }
    }
    if seen.len() < sc.seen {
        return Err(HarnessError::InsufficientCombos { split: "seen", have: seen.len(), need: sc.seen });
    }

    let last_train = *train_seeds.last().expect("train split is non-empty");
    if (sc.train_seed_base..=last_train).contains(&sc.unseen_seed_base) {
        return Err(HarnessError::Config(format!(
            "unseen_seed_base {} overlaps train seeds {}..={last_train}",
            sc.unseen_seed_base, sc.train_seed_base
        )));
    }
    let unseen = scenes_from(sc.unseen_seed_base, sc.unseen, config)?;
    if unseen.iter().any(|s| train_seeds.contains(&s.seed)) {
        return Err(HarnessError::Config("unseen seeds run into train seeds".into()));
    }
    let combos: BTreeSet<_> = train
        .iter()
        .map(|s| (s.task.task_type, s.task.target_object.clone(), s.task.target_receptacle.clone()))
        .collect();
    let novel = unseen
        .iter()
        .filter(|s| !combos.contains(&(s.task.task_type, s.task.target_object.clone(), s.task.target_receptacle.clone())))
        .count();
    if sc.unseen > 0 && novel == 0 {
        return Err(HarnessError::InsufficientCombos { split: "unseen", have: 0, need: 1 });
    }
    Ok(Splits { train, seen, unseen })
}
