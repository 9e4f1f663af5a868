use std::collections::BTreeSet;
use std::sync::Arc;

use pet_core::expert::*;
use pet_core::harness::*;
use pet_core::lexicon::{parse_goal, Lexicon};
use pet_core::lmbridge::*;
use pet_core::worldsim::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_config() -> HarnessConfig {
    let mut cfg = HarnessConfig::default();
    cfg.splits.train = 20;
    cfg.splits.seen = 8;
    cfg.splits.unseen = 8;
    cfg
}

fn setup<'a>(components: Components, bridge: Arc<dyn LanguageModel>, bank: Option<&'a pet_core::planner::ExampleBank>) -> EpisodeSetup<'a> {
    EpisodeSetup {
        components,
        bridge,
        bank,
        plan_examples: 5,
        eliminate: Default::default(),
        step_budget: 50,
        config_hash: "test".into(),
    }
}

fn demo_of(scene: &Scene) -> Demonstration {
    solve(&scene.state, &scene.task, SearchPolicy::default(), DEFAULT_STEP_BUDGET).unwrap()
}

fn script(demo: &Demonstration) -> Actor<'static> {
    Actor::Script { actions: demo.steps.iter().map(|s| s.action.clone()).collect(), next: 0 }
}

#[test]
fn default_split_sizes_and_disjoint_seeds() {
    let cfg = HarnessConfig::default();
    let splits = build_splits(&cfg).unwrap();
    assert_eq!((splits.train.len(), splits.seen.len(), splits.unseen.len()), (140, 40, 40));
    let train_seeds: BTreeSet<u64> = splits.train.iter().map(|s| s.seed).collect();
    assert!(splits.unseen.iter().all(|s| !train_seeds.contains(&s.seed)));
    assert!(splits.seen.iter().all(|s| train_seeds.contains(&s.seed)));
    let pairs = splits.train_pairs();
    for s in &splits.seen {
        assert!(!pairs.contains(&(s.task.target_object.clone(), s.task.target_receptacle.clone())));
    }
    let combos = splits.train_combos();
    assert!(splits
        .unseen
        .iter()
        .any(|s| !combos.contains(&(s.task.task_type, s.task.target_object.clone(), s.task.target_receptacle.clone()))));
    for s in splits.train.iter().chain(&splits.seen).chain(&splits.unseen) {
        let demo = demo_of(s);
        assert!(demo.steps.len() <= DEFAULT_STEP_BUDGET);
    }
    assert_eq!(build_splits(&cfg).unwrap(), splits);
}

#[test]
fn overlapping_unseen_base_is_rejected() {
    let mut cfg = small_config();
    cfg.splits.unseen_seed_base = 3;
    assert!(build_splits(&cfg).is_err());
}

#[test]
fn perturbation_is_seeded_and_keeps_the_task() {
    let lex = Lexicon::builtin();
    let cat = Catalog::builtin();
    let mut changed = 0;
    for seed in 0..60u64 {
        let scene = generate_scene(seed, &SceneConfig::default()).unwrap();
        let goal = &scene.task.goal_text;
        let a = perturb_goal(goal, seed, lex);
        assert_eq!(a, perturb_goal(goal, seed, lex));
        assert_eq!(perturb_goal(goal, seed, &Lexicon::default()), *goal);
        let parsed = parse_goal(&a, cat, lex).unwrap_or_else(|| panic!("{a:?} from {goal:?}"));
        assert_eq!(parsed.0, scene.task.task_type, "{a:?}");
        assert_eq!(parsed.1, scene.task.target_object, "{a:?}");
        assert_eq!(parsed.2, scene.task.target_receptacle, "{a:?}");
        changed += usize::from(a.trim_end_matches('.').to_lowercase() != *goal);
    }
    assert_eq!(changed, 60);
}

#[test]
fn scripted_full_pipeline_on_reference_bathroom() {
    let scene = reference_bathroom();
    let demo = demo_of(&scene);
    let provider = OracleProvider::new(OracleConfig::default());
    let bank_scenes: Vec<Scene> = (0..20).map(|s| generate_scene(s, &SceneConfig::default()).unwrap()).collect();
    let bank = training_bank(&bank_scenes, provider.shared().as_ref()).unwrap();
    let bridge = provider.for_episode(&scene, &scene.task.goal_text).unwrap();
    let traj = run_episode(&scene, &scene.task.goal_text, &setup(Components::ALL, bridge, Some(&bank)), &mut script(&demo)).unwrap();
    assert!(traj.end.done);
    assert_eq!(traj.end.steps, demo.steps.len());
    assert_eq!(traj.end.increments, 4);
    assert_eq!(traj.header.plan.as_ref(), Some(&demo.subtask_plan.subtasks));
    // every conditioning is the recorded sub-task of the expert
    for (rec, step) in traj.steps.iter().zip(&demo.steps) {
        assert_eq!(rec.conditioning, demo.subtask_plan.subtasks[step.subtask_index - 1]);
    }
    replay(&scene, &traj).unwrap();
}

#[test]
fn modules_off_leave_transitions_unchanged() {
    let provider = OracleProvider::new(OracleConfig::default());
    for seed in 0..20 {
        let scene = generate_scene(seed, &SceneConfig::default()).unwrap();
        let demo = demo_of(&scene);
        let bridge = provider.for_episode(&scene, &scene.task.goal_text).unwrap();
        let traj = run_episode(&scene, &scene.task.goal_text, &setup(Components::NONE, bridge, None), &mut script(&demo)).unwrap();
        assert!(traj.end.done);
        assert_eq!(traj.steps.len(), demo.steps.len());
        for (rec, step) in traj.steps.iter().zip(&demo.steps) {
            assert_eq!(rec.observation, step.observation.text);
            assert_eq!(rec.masked_observation, rec.observation);
            assert_eq!(rec.conditioning, scene.task.goal_text);
            assert!(rec.tracker.is_none() && rec.decisions.is_empty());
            assert_eq!(rec.permissible, step.permissible.iter().map(|a| a.to_string()).collect::<Vec<_>>());
        }
    }
}

#[test]
fn zero_budget_gives_an_empty_trajectory() {
    let scene = reference_bathroom();
    let provider = OracleProvider::new(OracleConfig::default());
    let mut s = setup(Components::NONE, provider.shared(), None);
    s.step_budget = 0;
    let traj = run_episode(&scene, &scene.task.goal_text, &s, &mut Actor::Random(ChaCha8Rng::seed_from_u64(0))).unwrap();
    assert!(traj.steps.is_empty());
    assert!(!traj.end.done);
    assert_eq!(traj.end.final_observation, Observation::initial(&scene.state).text);
    replay(&scene, &traj).unwrap();
}

#[test]
fn planning_without_a_bank_is_a_config_error() {
    let scene = reference_bathroom();
    let provider = OracleProvider::new(OracleConfig::default());
    let r = run_episode(&scene, &scene.task.goal_text, &setup(Components::ALL, provider.shared(), None), &mut script(&demo_of(&scene)));
    assert!(matches!(r, Err(HarnessError::Config(_))));
}

#[test]
fn random_actor_rarely_completes() {
    let provider = OracleProvider::new(OracleConfig::default());
    let mut trajs = Vec::new();
    for seed in 0..40 {
        let scene = generate_scene(seed, &SceneConfig::default()).unwrap();
        let mut actor = Actor::Random(ChaCha8Rng::seed_from_u64(seed));
        let traj = run_episode(&scene, &scene.task.goal_text, &setup(Components::NONE, provider.shared(), None), &mut actor).unwrap();
        replay(&scene, &traj).unwrap();
        trajs.push(traj);
    }
    let r = split_result(&trajs);
    assert_eq!(r.episodes, 40);
    assert!(r.completion_rate <= 0.2, "{r:?}");
}

#[test]
fn trajectory_files_round_trip_and_replay() {
    let provider = OracleProvider::new(OracleConfig::default());
    let bank_scenes: Vec<Scene> = (0..20).map(|s| generate_scene(s, &SceneConfig::default()).unwrap()).collect();
    let bank = training_bank(&bank_scenes, provider.shared().as_ref()).unwrap();
    let mut live = Vec::new();
    let mut loaded = Vec::new();
    for seed in 100..110 {
        let scene = generate_scene(seed, &SceneConfig::default()).unwrap();
        let bridge = provider.for_episode(&scene, &scene.task.goal_text).unwrap();
        let mut actor = Actor::Random(ChaCha8Rng::seed_from_u64(seed));
        let traj = run_episode(&scene, &scene.task.goal_text, &setup(Components::ALL, bridge, Some(&bank)), &mut actor).unwrap();
        let mut buf = Vec::new();
        write_trajectory(&traj, &mut buf).unwrap();
        let back = read_trajectory(buf.as_slice()).unwrap();
        assert_eq!(back, traj);
        let mut again = Vec::new();
        write_trajectory(&back, &mut again).unwrap();
        assert_eq!(again, buf);
        let rebuilt = scene_for_header(&back.header, &SceneConfig::default());
        replay(&rebuilt, &back).unwrap();
        live.push(traj);
        loaded.push(back);
    }
    assert_eq!(split_result(&live), split_result(&loaded));
}

#[test]
fn tampered_trajectory_fails_replay() {
    let scene = reference_bathroom();
    let provider = OracleProvider::new(OracleConfig::default());
    let demo = demo_of(&scene);
    let mut traj = run_episode(&scene, &scene.task.goal_text, &setup(Components::NONE, provider.shared(), None), &mut script(&demo)).unwrap();
    traj.steps[1].observation.push('!');
    assert!(matches!(replay(&scene, &traj), Err(HarnessError::ReplayMismatch { step: 1, .. })));
    let mut buf = Vec::new();
    write_trajectory(&traj, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let without_end: String = text.lines().take(text.lines().count() - 1).map(|l| format!("{l}\n")).collect();
    assert!(read_trajectory(without_end.as_bytes()).is_err());
}

#[test]
fn config_toml_round_trip_and_validation() {
    let cfg = HarnessConfig::default();
    let back = HarnessConfig::from_toml(&cfg.to_toml()).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(back.hash(), cfg.hash());
    let mut other = cfg.clone();
    other.episode.step_budget = 10;
    assert_ne!(other.hash(), cfg.hash());
    assert!(HarnessConfig::from_toml("[episode]\nstep_budget = 7\n").unwrap().episode.step_budget == 7);
    assert!(HarnessConfig::from_toml("[nonsense]\nx = 1\n").is_err());
    assert!(HarnessConfig::from_toml("[eval]\nseeds = []\n").is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn perturbed_goals_parse_to_the_same_task(seed in 0u64..5000, salt in 0u64..1000) {
        let scene = generate_scene(seed, &SceneConfig::default()).unwrap();
        let p = perturb_goal(&scene.task.goal_text, salt, Lexicon::builtin());
        let parsed = parse_goal(&p, Catalog::builtin(), Lexicon::builtin());
        prop_assert_eq!(
            parsed,
            Some((scene.task.task_type, scene.task.target_object.clone(), scene.task.target_receptacle.clone()))
        );
    }
}
