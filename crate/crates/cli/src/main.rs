use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use pet_core::agent::PolicyParams;
use pet_core::eliminator::eliminate;
use pet_core::expert::{ground_truth_plan, solve, SearchPolicy, DEFAULT_STEP_BUDGET};
use pet_core::harness::*;
use pet_core::lexicon::Lexicon;
use pet_core::planner::generate_plan;
use pet_core::tracker::{tracker_init, tracker_step};
use pet_core::worldsim::{
    generate_scene, parse_command, reference_bathroom, render_observation, scene_to_jsonl, Env, Observation, Scene,
};

#[derive(Parser)]
#[command(name = "pet", about = "Plan, eliminate and track around a behavior-cloned text agent")]
struct Cli {
    /// TOML config; missing keys take defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for outputs and the resolved config.
    #[arg(long, global = true, default_value = "pet-out")]
    out: PathBuf,
    #[command(flatten)]
    hyper: Hyper,
    #[command(subcommand)]
    command: Command,
}

/// Overrides for the most used hyperparameters.
#[derive(Args, Default)]
struct Hyper {
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long, global = true)]
    learning_rate: Option<f64>,
    #[arg(long, global = true)]
    momentum: Option<f64>,
    #[arg(long, global = true)]
    batch_size: Option<usize>,
    #[arg(long, global = true)]
    clip_norm: Option<f64>,
    #[arg(long, global = true)]
    layers: Option<usize>,
    #[arg(long, global = true)]
    heads: Option<usize>,
    #[arg(long, global = true)]
    hidden: Option<usize>,
    #[arg(long, global = true)]
    ff_mult: Option<usize>,
    #[arg(long, global = true)]
    tau_o: Option<f64>,
    #[arg(long, global = true)]
    tau_r: Option<f64>,
    #[arg(long, global = true)]
    step_budget: Option<usize>,
    #[arg(long, global = true)]
    noise_epsilon: Option<f64>,
    /// Evaluation seeds, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
}

#[derive(Subcommand)]
enum Command {
    /// Writes the train, seen and unseen scenes, one JSONL file per scene.
    GenScenes,
    /// Solves one scene with the expert and prints the demonstration.
    Demo {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Use the fixed reference bathroom instead of a generated scene.
        #[arg(long)]
        reference: bool,
    },
    /// Trains one row's policy on the training split.
    Train {
        #[arg(long, value_enum, default_value = "pet")]
        row: RowArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Evaluates a checkpoint, or with --ablation trains and evaluates every row.
    Eval {
        #[arg(long, value_enum, default_value = "pet")]
        row: RowArg,
        #[arg(long, required_unless_present = "ablation")]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "seen")]
        split: SplitArg,
        #[arg(long)]
        ablation: bool,
    },
    /// Plan exact-match accuracy and similarity on the seen and unseen goals.
    EvalPlan,
    /// Relevance AUC per task type and ROC points.
    EvalEliminate,
    /// Tracker precision and recall over expert demos.
    EvalTrack {
        /// Also write per-episode tracker traces.
        #[arg(long)]
        traces: bool,
    },
    /// Interactive session on one scene.
    Play {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        reference: bool,
        #[arg(long)]
        plan: bool,
        #[arg(long)]
        eliminate: bool,
        #[arg(long)]
        track: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum RowArg {
    Base,
    Eliminate,
    PlanTrack,
    Pet,
}

impl From<RowArg> for Row {
    fn from(r: RowArg) -> Row {
        match r {
            RowArg::Base => Row::Base,
            RowArg::Eliminate => Row::Eliminate,
            RowArg::PlanTrack => Row::PlanTrack,
            RowArg::Pet => Row::Pet,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Seen,
    SeenPerturbed,
    Unseen,
}

fn resolve(cli: &Cli) -> Result<HarnessConfig> {
    let mut cfg = match &cli.config {
        Some(p) => HarnessConfig::from_toml(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
        None => HarnessConfig::default(),
    };
    let h = &cli.hyper;
    macro_rules! set {
        ($field:expr, $value:expr) => {
            if let Some(v) = $value.clone() {
                $field = v;
            }
        };
    }
    set!(cfg.train.epochs, h.epochs);
    set!(cfg.train.learning_rate, h.learning_rate);
    set!(cfg.train.momentum, h.momentum);
    set!(cfg.train.batch_size, h.batch_size);
    set!(cfg.train.clip_norm, h.clip_norm);
    set!(cfg.agent.layers, h.layers);
    set!(cfg.agent.heads, h.heads);
    set!(cfg.agent.hidden, h.hidden);
    set!(cfg.agent.ff_mult, h.ff_mult);
    set!(cfg.eliminate.tau_o, h.tau_o);
    set!(cfg.eliminate.tau_r, h.tau_r);
    set!(cfg.episode.step_budget, h.step_budget);
    set!(cfg.oracle.noise_epsilon, h.noise_epsilon);
    set!(cfg.eval.seeds, h.seeds);
    cfg.validate()?;
    fs::create_dir_all(&cli.out)?;
    fs::write(cli.out.join("config.toml"), cfg.to_toml())?;
    eprintln!("resolved config ({}) written to {}", cfg.hash(), cli.out.join("config.toml").display());
    Ok(cfg)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn scene_arg(seed: u64, reference: bool, cfg: &HarnessConfig) -> Result<Scene> {
    Ok(if reference { reference_bathroom() } else { generate_scene(seed, &cfg.scenes)? })
}

fn split_goals(splits: &Splits, split: SplitArg, cfg: &HarnessConfig) -> (Vec<Scene>, Vec<String>) {
    let scenes = match split {
        SplitArg::Unseen => splits.unseen.clone(),
        _ => splits.seen.clone(),
    };
    let goals = scenes
        .iter()
        .enumerate()
        .map(|(i, s)| match split {
            SplitArg::SeenPerturbed => {
                perturb_goal(&s.task.goal_text, cfg.eval.perturb_seed.wrapping_add(i as u64), Lexicon::builtin())
            }
            _ => s.task.goal_text.clone(),
        })
        .collect();
    (scenes, goals)
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()))
        .with_writer(io::stderr)
        .init();
    let cli = Cli::parse();
    let cfg = resolve(&cli)?;
    let out = &cli.out;
    match &cli.command {
        Command::GenScenes => {
            let splits = build_splits(&cfg)?;
            for (name, scenes) in [("train", &splits.train), ("seen", &splits.seen), ("unseen", &splits.unseen)] {
                for (i, s) in scenes.iter().enumerate() {
                    let mut w = create(&out.join("scenes").join(name).join(format!("{i:03}-{}.jsonl", s.seed)))?;
                    write!(w, "{}", scene_to_jsonl(s))?;
                }
                println!("{name}\t{}", scenes.len());
            }
        }
        Command::Demo { seed, reference } => {
            let scene = scene_arg(*seed, *reference, &cfg)?;
            let demo = solve(&scene.state, &scene.task, SearchPolicy::default(), DEFAULT_STEP_BUDGET)?;
            println!("task: {}", scene.task.goal_text);
            println!("plan: {}", demo.subtask_plan.render());
            for (t, s) in demo.steps.iter().enumerate() {
                println!("[{t}] {}", s.observation.text);
                println!("  ({}) > {}", s.subtask_index, s.action);
            }
            let actions = demo.steps.iter().map(|s| s.action.clone()).collect();
            let setup = EpisodeSetup {
                components: Components::NONE,
                bridge: cfg.provider()?.shared(),
                bank: None,
                plan_examples: cfg.plan.examples,
                eliminate: cfg.eliminate,
                step_budget: DEFAULT_STEP_BUDGET,
                config_hash: cfg.hash(),
            };
            let traj = run_episode(&scene, &scene.task.goal_text, &setup, &mut Actor::Script { actions, next: 0 })?;
            write_trajectory(&traj, create(&out.join("demo.jsonl"))?)?;
            println!("done: {} in {} steps", traj.end.done, traj.end.steps);
        }
        Command::Train { row, seed } => {
            let row = Row::from(*row);
            let splits = build_splits(&cfg)?;
            let provider = cfg.provider()?;
            let demos: Vec<_> = splits
                .train
                .iter()
                .map(|s| solve(&s.state, &s.task, SearchPolicy::default(), DEFAULT_STEP_BUDGET))
                .collect::<Result<_, _>>()?;
            let examples = training_examples(row, &splits.train, &demos, provider.as_ref(), &cfg)?;
            eprintln!("{} examples", examples.len());
            let (params, report) = train_row(&examples, &cfg, *seed)?;
            let stem = format!("{}-{seed}", cli_row_name(row));
            fs::write(out.join(format!("{stem}.ckpt")), params.to_checkpoint())?;
            let mut w = create(&out.join(format!("{stem}-loss.tsv")))?;
            writeln!(w, "epoch\tloss")?;
            for (e, l) in report.epoch_losses.iter().enumerate() {
                writeln!(w, "{}\t{l}", e + 1)?;
            }
            println!("final loss {:?}; checkpoint {}", report.epoch_losses.last(), out.join(format!("{stem}.ckpt")).display());
        }
        Command::Eval { row, checkpoint, split, ablation } => {
            let splits = build_splits(&cfg)?;
            let provider = cfg.provider()?;
            if *ablation {
                let table = run_ablation(&splits, &cfg, provider.as_ref(), &Row::ALL)?;
                fs::write(out.join("ablation.tsv"), table.render())?;
                fs::write(out.join("ablation.json"), serde_json::to_string_pretty(&table)?)?;
                print!("{}", table.render());
                return Ok(());
            }
            let row = Row::from(*row);
            let path = checkpoint.as_ref().context("--checkpoint is required")?;
            let params = PolicyParams::from_checkpoint(&fs::read_to_string(path)?)?;
            if params.config.embed_dim != cfg.agent.embed_dim {
                bail!("checkpoint embed_dim {} differs from config {}", params.config.embed_dim, cfg.agent.embed_dim);
            }
            let bank = training_bank(&splits.train, provider.shared().as_ref())?;
            let (scenes, goals) = split_goals(&splits, *split, &cfg);
            let trajs = run_split(&scenes, &goals, row, &params, provider.as_ref(), &bank, &cfg)?;
            let dir = out.join("trajectories").join(cli_row_name(row));
            for (i, t) in trajs.iter().enumerate() {
                write_trajectory(t, create(&dir.join(format!("{i:03}.jsonl")))?)?;
            }
            let result = split_result(&trajs);
            println!("{}", serde_json::to_string_pretty(&result)?);
        }
        Command::EvalPlan => {
            let splits = build_splits(&cfg)?;
            let provider = cfg.provider()?;
            let bridge = provider.shared();
            let bank = training_bank(&splits.train, bridge.as_ref())?;
            bank.write_jsonl(create(&out.join("bank.jsonl"))?)?;
            println!("split\texact_accuracy\tsimilarity");
            for split in [SplitArg::Seen, SplitArg::SeenPerturbed, SplitArg::Unseen] {
                let (scenes, goals) = split_goals(&splits, split, &cfg);
                let m = plan_report(bridge.as_ref(), &bank, &scenes, &goals, cfg.plan.examples)?;
                println!("{}\t{:.4}\t{:.4}", split_name(split), m.exact_accuracy, m.similarity);
            }
        }
        Command::EvalEliminate => {
            let splits = build_splits(&cfg)?;
            let provider = cfg.provider()?;
            let scenes: Vec<Scene> = splits.seen.iter().chain(&splits.unseen).cloned().collect();
            let report = eliminate_report(&scenes, provider.as_ref(), &cfg.eliminate)?;
            let fmt = |a: Option<f64>| a.map_or("-".to_string(), |v| format!("{v:.4}"));
            println!("task_type\treceptacle_auc\tobject_auc");
            for (tt, (r, o)) in &report.auc_by_task_type {
                println!("{tt}\t{}\t{}", fmt(*r), fmt(*o));
            }
            println!("all\t{}\t{}", fmt(report.receptacle_auc), fmt(report.object_auc));
            println!("mean reduction\t{:.4}", report.mean_reduction);
            let mut w = create(&out.join("roc_points.tsv"))?;
            writeln!(w, "kind\tscore\trelevant")?;
            for (kind, score, relevant) in &report.points {
                writeln!(w, "{kind}\t{score}\t{}", u8::from(*relevant))?;
            }
        }
        Command::EvalTrack { traces } => {
            let splits = build_splits(&cfg)?;
            let provider = cfg.provider()?;
            let scenes: Vec<Scene> = splits.seen.iter().chain(&splits.unseen).cloned().collect();
            let m = track_report(&scenes, provider.shared(), cfg.eval.perturb_seed)?;
            println!("precision\t{:.4}\nrecall\t{:.4}\npositives\t{}\nnegatives\t{}", m.precision, m.recall, m.positives, m.negatives);
            if *traces {
                let mut w = create(&out.join("tracker_traces.jsonl"))?;
                let bridge = provider.shared();
                for s in &scenes {
                    let demo = solve(&s.state, &s.task, SearchPolicy::default(), DEFAULT_STEP_BUDGET)?;
                    let mut st = tracker_init(demo.subtask_plan.clone(), &s.task.goal_text)?;
                    for (t, obs) in demo.observations().enumerate() {
                        let d = tracker_step(&mut st, &obs.text, bridge.as_ref());
                        let rec = serde_json::json!({
                            "scene_seed": s.seed, "t": t, "p": d.p, "p_yes": d.p_yes,
                            "incremented": d.incremented, "truth": demo.observation_subtask_indices().get(t),
                        });
                        writeln!(w, "{rec}")?;
                    }
                }
            }
        }
        Command::Play { seed, reference, plan, eliminate: mask, track } => {
            play(&cfg, scene_arg(*seed, *reference, &cfg)?, *plan, *mask, *track)?;
        }
    }
    Ok(())
}

fn cli_row_name(row: Row) -> &'static str {
    match row {
        Row::Base => "base",
        Row::Eliminate => "eliminate",
        Row::PlanTrack => "plan-track",
        Row::Pet => "pet",
    }
}

fn split_name(split: SplitArg) -> &'static str {
    match split {
        SplitArg::Seen => "seen",
        SplitArg::SeenPerturbed => "seen-perturbed",
        SplitArg::Unseen => "unseen",
    }
}

fn play(cfg: &HarnessConfig, scene: Scene, plan: bool, mask: bool, track: bool) -> Result<()> {
    let provider = cfg.provider()?;
    let goal = scene.task.goal_text.clone();
    let bridge = provider.for_episode(&scene, &goal)?;
    let subtasks = if plan {
        let splits = build_splits(cfg)?;
        let bank = training_bank(&splits.train, provider.shared().as_ref())?;
        generate_plan(bridge.as_ref(), &bank, &goal, cfg.plan.examples)?
    } else {
        ground_truth_plan(&scene.task)
    };
    let mut tracker = if track { Some(tracker_init(subtasks.clone(), &goal)?) } else { None };
    if plan || track {
        println!("plan: {}", subtasks.render());
    }
    println!("Your task is to: {goal}");
    let mut env = Env::new(scene.state.clone(), scene.task.clone());
    let mut obs = Observation::initial(&env.state);
    let stdin = io::stdin();
    let mut lines = BufReader::new(stdin.lock()).lines();
    for t in 0..cfg.episode.step_budget {
        if let Some(tr) = tracker.as_mut() {
            let d = tracker_step(tr, &obs.text, bridge.as_ref());
            if d.incremented {
                println!("(sub-task {} finished)", d.p - 1);
            }
        }
        let conditioning = tracker.as_ref().map_or(goal.as_str(), |tr| tr.conditioning()).to_string();
        let shown = if mask { eliminate(bridge.as_ref(), &conditioning, &obs, &cfg.eliminate).0 } else { obs.clone() };
        println!("\n{}", shown.text);
        if track {
            println!("[current: {conditioning}]");
        }
        let action = loop {
            print!("{t}> ");
            io::stdout().flush()?;
            let Some(line) = lines.next() else { return Ok(()) };
            let line = line?;
            match line.trim() {
                "quit" | "exit" => return Ok(()),
                "help" => env.permissible().iter().for_each(|a| println!("  {a}")),
                cmd => match parse_command(cmd) {
                    Ok(a) if env.permissible().contains(&a) => break a,
                    _ => println!("Nothing happens."),
                },
            }
        };
        let (feedback, done) = env.step(&action);
        obs = render_observation(&env.state, &feedback);
        if done {
            println!("\n{}\nTask complete in {} steps.", obs.text, t + 1);
            return Ok(());
        }
    }
    println!("Out of steps.");
    Ok(())
}
