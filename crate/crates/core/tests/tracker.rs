use std::sync::Mutex;

use pet_core::expert::*;
use pet_core::lmbridge::*;
use pet_core::tracker::*;
use pet_core::worldsim::*;

/// Answers from a fixed script; records every prompt.
struct Scripted {
    answers: Mutex<Vec<Result<(f64, f64), LmError>>>,
    prompts: Mutex<Vec<String>>,
}

impl Scripted {
    fn new(answers: Vec<Result<(f64, f64), LmError>>) -> Self {
        Scripted { answers: Mutex::new(answers.into_iter().rev().collect()), prompts: Mutex::new(Vec::new()) }
    }
}

impl LanguageModel for Scripted {
    fn generate(&self, _: &str, _: usize, _: &[String]) -> Result<String, LmError> {
        Ok(String::new())
    }
    fn score_choice(&self, _: &str, _: &str) -> Result<f64, LmError> {
        Ok(1.0)
    }
    fn yes_no(&self, prompt: &str) -> Result<(f64, f64), LmError> {
        self.prompts.lock().unwrap().push(prompt.to_string());
        self.answers.lock().unwrap().pop().unwrap_or(Ok((0.0, 1.0)))
    }
    fn embed(&self, text: &str) -> Result<Vec<f64>, LmError> {
        Ok(hash_embed(text))
    }
}

fn plan(n: usize) -> SubTaskPlan {
    SubTaskPlan { subtasks: (1..=n).map(|i| format!("step {i}")).collect(), source: PlanSource::Generated }
}

#[test]
fn empty_plan_is_rejected() {
    assert_eq!(tracker_init(plan(0), "t").unwrap_err(), TrackError::EmptyPlan);
    let st = tracker_init(plan(2), "t").unwrap();
    assert_eq!((st.p, st.d, st.window.len(), st.fallback_active), (1, 1, 0, false));
}

#[test]
fn window_transition_table() {
    // (d before, decision) -> d after
    let table = [(1, false, 2), (2, false, 3), (3, false, 3), (1, true, 1), (2, true, 1), (3, true, 1)];
    for (d, inc, want) in table {
        assert_eq!(next_window(d, inc), want, "d={d} increment={inc}");
    }
}

#[test]
fn exhaustive_step_transitions() {
    // every window length reachable, crossed with every answer kind
    let answers: [(&str, Result<(f64, f64), LmError>, bool); 4] = [
        ("yes", Ok((0.9, 0.1)), true),
        ("no", Ok((0.1, 0.9)), false),
        ("tie", Ok((0.5, 0.5)), false),
        ("error", Err(LmError::Protocol("x".into())), false),
    ];
    for warmup in 0..4 {
        for (label, answer, increments) in answers.iter().cloned() {
            let mut script: Vec<Result<(f64, f64), LmError>> = vec![Ok((0.0, 1.0)); warmup];
            script.push(answer);
            let lm = Scripted::new(script);
            let mut st = tracker_init(plan(3), "whole task").unwrap();
            for i in 0..warmup {
                tracker_step(&mut st, &format!("obs {i}"), &lm);
            }
            let d_before = st.d;
            let decision = tracker_step(&mut st, "latest", &lm);
            assert_eq!(decision.incremented, increments, "{label} after {warmup}");
            let expected_d = next_window(d_before, false);
            if increments {
                assert_eq!((st.p, st.d, st.window.len()), (2, 1, 0), "{label}");
            } else {
                assert_eq!((st.p, st.d), (1, expected_d), "{label}");
                assert_eq!(st.window.back().map(String::as_str), Some("latest"));
            }
            // the prompt shows the latest min(d, 3) observations
            let prompt = lm.prompts.lock().unwrap().last().unwrap().clone();
            let shown = prompt.lines().count() - 1;
            assert_eq!(shown, expected_d.min(warmup + 1), "{label} after {warmup}: {prompt:?}");
            assert!(prompt.ends_with("Did you finish the task of step 1?"));
        }
    }
}

#[test]
fn prompt_lists_window_then_question() {
    let lm = Scripted::new(vec![]);
    let mut st = tracker_init(plan(1), "t").unwrap();
    for o in ["a", "b", "c", "d"] {
        tracker_step(&mut st, o, &lm);
    }
    let prompts = lm.prompts.lock().unwrap();
    assert_eq!(prompts[0], "a\nDid you finish the task of step 1?");
    assert_eq!(prompts[1], "a\nb\nDid you finish the task of step 1?");
    assert_eq!(prompts[3], "b\nc\nd\nDid you finish the task of step 1?");
}

#[test]
fn fallback_after_last_subtask() {
    let lm = Scripted::new(vec![Ok((1.0, 0.0)), Ok((1.0, 0.0))]);
    let mut st = tracker_init(plan(2), "the whole task").unwrap();
    assert_eq!(st.conditioning(), "step 1");
    tracker_step(&mut st, "x", &lm);
    assert_eq!(st.conditioning(), "step 2");
    tracker_step(&mut st, "y", &lm);
    assert!(st.fallback_active);
    assert_eq!(st.p, 3);
    assert_eq!(st.conditioning(), "the whole task");
    let asked = lm.prompts.lock().unwrap().len();
    let d = tracker_step(&mut st, "z", &lm);
    assert_eq!(lm.prompts.lock().unwrap().len(), asked);
    assert!(!d.incremented && d.p_yes.is_none());
}

#[test]
fn reference_episode_increments_once_per_subtask() {
    let scene = reference_bathroom();
    let demo = solve(&scene.state, &scene.task, SearchPolicy::default(), DEFAULT_STEP_BUDGET).unwrap();
    let lm = OracleBackend::new(OracleConfig::default());
    let mut st = tracker_init(demo.subtask_plan.clone(), &scene.task.goal_text).unwrap();
    let mut increments = Vec::new();
    for (t, obs) in demo.observations().enumerate() {
        if tracker_step(&mut st, &obs.text, &lm).incremented {
            increments.push(t);
        }
    }
    assert_eq!(increments.len(), 4);
    assert!(st.fallback_active);
}

fn demos(n: u64) -> Vec<Demonstration> {
    (0..n)
        .map(|s| {
            let scene = generate_scene(s, &SceneConfig::default()).unwrap();
            solve(&scene.state, &scene.task, SearchPolicy::default(), DEFAULT_STEP_BUDGET).unwrap()
        })
        .collect()
}

#[test]
fn noiseless_oracle_is_perfect() {
    let lm = OracleBackend::new(OracleConfig::default());
    let m = evaluate_tracker(&demos(100), &lm, 0).unwrap();
    assert_eq!((m.positives, m.negatives), (100, 100));
    assert_eq!(m.precision, 1.0);
    assert_eq!(m.recall, 1.0);
}

#[test]
fn noisy_oracle_recall_near_point_eight() {
    let lm = OracleBackend::new(OracleConfig { noise_epsilon: 0.2, rng_seed: 3, ..OracleConfig::default() });
    let m = evaluate_tracker(&demos(100), &lm, 0).unwrap();
    println!("precision {} recall {}", m.precision, m.recall);
    assert!((m.recall - 0.8).abs() <= 0.05, "recall {}", m.recall);
    assert_eq!(m.precision, 1.0);
    assert_eq!(evaluate_tracker(&[], &lm, 0).unwrap_err(), TrackError::NoDemos);
}
