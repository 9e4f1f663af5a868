use std::time::Instant;

use pet_core::agent::*;
use pet_core::expert::*;
use pet_core::lmbridge::{HashEmbedder, LanguageModel, OracleBackend, OracleConfig};
use pet_core::worldsim::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_input(rng: &mut ChaCha8Rng, dim: usize, n: usize) -> AgentInput {
    let mut v = || (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>();
    AgentInput {
        task_embedding: v(),
        history_embedding: v(),
        obs_embedding: v(),
        action_embeddings: (0..n).map(|_| v()).collect(),
        action_texts: (0..n).map(|i| format!("action {i}")).collect(),
    }
}

fn demos(seeds: std::ops::Range<u64>) -> Vec<Demonstration> {
    seeds
        .map(|seed| {
            let scene = generate_scene(seed, &SceneConfig::default()).unwrap();
            solve(&scene.state, &scene.task, SearchPolicy::LikelyFirst, DEFAULT_STEP_BUDGET).unwrap()
        })
        .collect()
}

fn task_examples(demos: &[Demonstration], bridge: &dyn LanguageModel, dim: usize) -> Vec<BcExample> {
    let mut out = Vec::new();
    for d in demos {
        let goal = d.task.goal_text.clone();
        out.extend(
            examples_from_demo(d, bridge, dim, &mut |_| goal.clone(), &mut |_, s, _| s.observation.text.clone())
                .unwrap(),
        );
    }
    out
}

#[test]
fn history_average_cases() {
    assert_eq!(history_average(&[], 3).unwrap(), vec![0.0; 3]);
    assert_eq!(history_average(&[vec![0.25, -1.0, 3.0]], 3).unwrap(), vec![0.25, -1.0, 3.0]);
    let m = history_average(&[vec![1.0, 0.0], vec![0.0, 1.0]], 2).unwrap();
    assert_eq!(m, vec![0.5, 0.5]);
    let norm = m.iter().map(|x| x * x).sum::<f64>().sqrt();
    assert!((norm - 1.0 / 2f64.sqrt()).abs() < 1e-15);
    assert_eq!(
        history_average(&[vec![1.0, 0.0], vec![1.0]], 2).unwrap_err(),
        AgentError::Dimension { expected: 2, got: 1 }
    );
}

#[test]
fn singleton_action_has_probability_one_and_zero_gradient() {
    let params = PolicyParams::init(AgentConfig::tiny(), 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let input = random_input(&mut rng, 8, 1);
    let cache = forward(&params, &input).unwrap();
    assert_eq!(cache.policy, vec![1.0]);
    let mut grads = PolicyParams::zeros(params.config);
    let loss = backward(&params, &cache, 0, &mut grads).unwrap();
    assert_eq!(loss, 0.0);
    assert!(grads.tensors().iter().all(|(_, _, v)| v.iter().all(|g| *g == 0.0)));
}

#[test]
fn input_errors() {
    let params = PolicyParams::init(AgentConfig::tiny(), 3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let empty = random_input(&mut rng, 8, 0);
    assert_eq!(forward(&params, &empty).unwrap_err(), AgentError::NoActions);
    let short = random_input(&mut rng, 7, 2);
    assert!(matches!(forward(&params, &short).unwrap_err(), AgentError::Dimension { expected: 8, got: 7 }));
    let ok = random_input(&mut rng, 8, 3);
    let cache = forward(&params, &ok).unwrap();
    let mut grads = PolicyParams::zeros(params.config);
    assert_eq!(
        backward(&params, &cache, 3, &mut grads).unwrap_err(),
        AgentError::BadIndex { index: 3, actions: 3 }
    );
    let mut bad = AgentConfig::tiny();
    bad.heads = 3;
    assert!(matches!(PolicyParams::init(bad, 0), Err(AgentError::Config(_))));
}

#[test]
fn gradients_match_central_differences_on_tiny_config() {
    let mut worst: f64 = 0.0;
    for seed in 0..5 {
        let params = PolicyParams::init(AgentConfig::tiny(), seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let input = random_input(&mut rng, 8, 3);
        let check = gradient_check(&params, &input, (seed % 3) as usize, 1e-4, 1e-6).unwrap();
        assert_eq!(check.checked, params.num_values());
        worst = worst.max(check.max_rel_error);
        assert!(check.max_rel_error <= 1e-4, "seed {seed}: {check:?}");
    }
    println!("max relative gradient error {worst:e}");
}

#[test]
fn gradients_match_on_multihead_two_layer_config() {
    let cfg = AgentConfig { layers: 2, heads: 2, hidden: 8, embed_dim: 6, ff_mult: 2, query_slot: 1 };
    let params = PolicyParams::init(cfg, 9).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let input = random_input(&mut rng, 6, 4);
    let check = gradient_check(&params, &input, 2, 1e-4, 1e-6).unwrap();
    assert!(check.max_rel_error <= 1e-4, "{check:?}");
}

#[test]
fn score_gradient_is_policy_minus_onehot() {
    // the key bias adds b.Q to every score; its gradient is Q * sum(pi - onehot) = 0
    let params = PolicyParams::init(AgentConfig::tiny(), 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let input = random_input(&mut rng, 8, 4);
    let cache = forward(&params, &input).unwrap();
    let mut grads = PolicyParams::zeros(params.config);
    backward(&params, &cache, 1, &mut grads).unwrap();
    assert!(grads.head_k_b.iter().all(|g| g.abs() < 1e-12));
}

#[test]
fn constant_score_shift_leaves_policy_unchanged() {
    let params = PolicyParams::init(AgentConfig::tiny(), 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let input = random_input(&mut rng, 8, 5);
    let base = forward(&params, &input).unwrap();
    let mut shifted = params.clone();
    shifted.head_k_b.iter_mut().for_each(|b| *b += 0.7);
    let other = forward(&shifted, &input).unwrap();
    let diff = base.scores[0] - other.scores[0];
    for (a, b) in base.scores.iter().zip(&other.scores) {
        assert!((a - b - diff).abs() < 1e-12);
    }
    for (a, b) in base.policy.iter().zip(&other.policy) {
        assert!((a - b).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn policy_is_normalized(seed in any::<u64>(), n in 1usize..12) {
        let params = PolicyParams::init(AgentConfig { layers: 2, heads: 2, hidden: 16, embed_dim: 8, ff_mult: 2, query_slot: 2 }, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let input = random_input(&mut rng, 8, n);
        let cache = forward(&params, &input).unwrap();
        let sum: f64 = cache.policy.iter().sum();
        prop_assert!((sum - 1.0).abs() <= 1e-9);
        prop_assert!(cache.policy.iter().all(|p| *p >= 0.0));
        let again = forward(&params, &input).unwrap();
        prop_assert_eq!(cache.policy, again.policy);
    }

    #[test]
    fn policy_is_permutation_equivariant(seed in any::<u64>(), n in 2usize..10, shuffle in any::<u64>()) {
        let params = PolicyParams::init(AgentConfig { layers: 2, heads: 2, hidden: 16, embed_dim: 8, ff_mult: 2, query_slot: 2 }, seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 2);
        let input = random_input(&mut rng, 8, n);
        let mut perm: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(&mut perm[..], &mut ChaCha8Rng::seed_from_u64(shuffle));
        let mut permuted = input.clone();
        permuted.action_embeddings = perm.iter().map(|&i| input.action_embeddings[i].clone()).collect();
        permuted.action_texts = perm.iter().map(|&i| input.action_texts[i].clone()).collect();
        let a = forward(&params, &input).unwrap().policy;
        let b = forward(&params, &permuted).unwrap().policy;
        for (j, &i) in perm.iter().enumerate() {
            prop_assert_eq!(b[j].to_bits(), a[i].to_bits());
        }
    }
}

#[test]
fn greedy_and_sampled_choice() {
    assert_eq!(choose(&[0.1, 0.7, 0.2], &mut ActMode::Greedy).unwrap(), 1);
    assert_eq!(choose(&[0.25; 4], &mut ActMode::Greedy).unwrap(), 0);
    assert_eq!(choose(&[], &mut ActMode::Greedy).unwrap_err(), AgentError::NoActions);
    let pi = [0.1, 0.7, 0.2];
    let mut mode = ActMode::Sample(ChaCha8Rng::seed_from_u64(42));
    let mut counts = [0usize; 3];
    for _ in 0..10_000 {
        counts[choose(&pi, &mut mode).unwrap()] += 1;
    }
    for (c, p) in counts.iter().zip(pi) {
        assert!((*c as f64 / 10_000.0 - p).abs() < 0.02, "{counts:?}");
    }
}

#[test]
fn act_embeds_through_the_bridge() {
    let params = PolicyParams::init(AgentConfig { embed_dim: 64, ..AgentConfig::tiny() }, 1).unwrap();
    let bridge = OracleBackend::new(OracleConfig::default());
    let actions = vec![Action::Look, Action::GoTo(InstanceName::new("cabinet", 1))];
    let c = act(&params, &bridge, "put some soapbar in cabinet", &[], "You are in the middle of a room.", &actions, &mut ActMode::Greedy)
        .unwrap();
    assert_eq!(c.policy.len(), 2);
    assert!(c.index < 2);
    assert_eq!(
        act(&params, &bridge, "x", &[], "y", &[], &mut ActMode::Greedy).unwrap_err(),
        AgentError::NoActions
    );
}

#[test]
fn checkpoint_round_trips_exactly() {
    let params = PolicyParams::init(AgentConfig { layers: 2, heads: 2, hidden: 8, embed_dim: 4, ff_mult: 3, query_slot: 0 }, 77).unwrap();
    let text = params.to_checkpoint();
    let back = PolicyParams::from_checkpoint(&text).unwrap();
    assert_eq!(back, params);
    assert!(PolicyParams::from_checkpoint("nonsense").is_err());
    let truncated: String = text.lines().take(6).collect::<Vec<_>>().join("\n");
    assert!(matches!(PolicyParams::from_checkpoint(&truncated), Err(AgentError::Checkpoint(_))));
    let corrupted = text.replacen("w_in 4 8", "w_in 8 4", 1);
    assert!(matches!(PolicyParams::from_checkpoint(&corrupted), Err(AgentError::Checkpoint(_))));
}

#[test]
fn zero_learning_rate_leaves_params_unchanged() {
    let embed = HashEmbedder::default();
    let bridge = OracleBackend::new(OracleConfig::default());
    let _ = embed;
    let ex = task_examples(&demos(0..2), &bridge, 64);
    let params = PolicyParams::init(AgentConfig { hidden: 16, heads: 2, embed_dim: 64, ..AgentConfig::tiny() }, 0).unwrap();
    let cfg = TrainConfig { epochs: 2, learning_rate: 0.0, ..TrainConfig::default() };
    let (after, report) = train_bc(&ex, params.clone(), &cfg).unwrap();
    assert_eq!(after, params);
    assert_eq!(report.epoch_losses.len(), 2);
    assert_eq!(train_bc(&[], params, &cfg).unwrap_err(), AgentError::NoExamples);
}

#[test]
fn bc_smoke_set_learns_and_is_deterministic() {
    let bridge = OracleBackend::new(OracleConfig::default());
    let ex = task_examples(&demos(0..4), &bridge, 64);
    let cfg = AgentConfig { layers: 2, heads: 4, hidden: 32, embed_dim: 64, ff_mult: 2, query_slot: 2 };
    let train = TrainConfig { epochs: 50, ..TrainConfig::default() };
    let (p1, r1) = train_bc(&ex, PolicyParams::init(cfg, 0).unwrap(), &train).unwrap();
    let (p2, r2) = train_bc(&ex, PolicyParams::init(cfg, 0).unwrap(), &train).unwrap();
    assert_eq!(r1, r2);
    assert_eq!(p1, p2);
    let l = &r1.epoch_losses;
    assert!(l[0] > l[1] && l[1] > l[2], "{l:?}");
    let acc = accuracy(&p1, &ex).unwrap();
    println!("4-demo smoke set: {} examples, accuracy {acc}", ex.len());
    assert!(acc >= 0.95, "accuracy {acc}");
}

#[test]
fn bc_on_32_demos_reaches_95_percent_training_accuracy() {
    let bridge = OracleBackend::new(OracleConfig::default());
    let ex = task_examples(&demos(100..132), &bridge, 64);
    let start = Instant::now();
    let (p, r) = train_bc(&ex, PolicyParams::init(AgentConfig::default(), 0).unwrap(), &TrainConfig { epochs: 60, ..TrainConfig::default() }).unwrap();
    let acc = accuracy(&p, &ex).unwrap();
    let secs = start.elapsed().as_secs_f64();
    println!("32 demos: {} examples, accuracy {acc}, {secs:.1}s, losses {:?}", ex.len(), r.epoch_losses);
    assert!(acc >= 0.95);
    assert!(secs < 600.0);
}
