//! Few-shot sub-task planning: nearest training examples, a question/answer
//! prompt, and parsing of the generated list.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

pub use crate::expert::{PlanSource, SubTaskPlan};
use crate::lmbridge::{cosine, LanguageModel, LmError};

pub const DEFAULT_EXAMPLES: usize = 5;
pub const MAX_SUBTASK_CHARS: usize = 128;
const QUESTION_LEAD: &str = "What are the middle steps required to ";
const MAX_PLAN_TOKENS: usize = 128;

#[derive(Debug, thiserror::Error)]
pub enum PlanError {
    #[error("example bank holds {have} entries, {need} requested")]
    BankTooSmall { have: usize, need: usize },
    #[error("{generated} generated plans but {truth} references")]
    LengthMismatch { generated: usize, truth: usize },
    #[error(transparent)]
    Lm(#[from] LmError),
    #[error("bank file: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankEntry {
    pub task_text: String,
    pub subtasks: Vec<String>,
    #[serde(skip)]
    pub embedding: Vec<f64>,
}

/// Training tasks with their plans, embedded for retrieval.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExampleBank {
    pub entries: Vec<BankEntry>,
}

impl ExampleBank {
    /// Embeds every task text with `bridge`.
    pub fn build(
        bridge: &dyn LanguageModel,
        examples: impl IntoIterator<Item = (String, Vec<String>)>,
    ) -> Result<Self, PlanError> {
        let mut entries = Vec::new();
        for (task_text, subtasks) in examples {
            let embedding = bridge.embed(&task_text)?;
            entries.push(BankEntry { task_text, subtasks, embedding });
        }
        Ok(ExampleBank { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// One `{task_text, subtasks}` record per line.
    pub fn write_jsonl(&self, mut out: impl Write) -> Result<(), PlanError> {
        for e in &self.entries {
            let line = serde_json::to_string(e).map_err(|e| PlanError::Io(e.to_string()))?;
            writeln!(out, "{line}").map_err(|e| PlanError::Io(e.to_string()))?;
        }
        Ok(())
    }

    /// Reads records and re-embeds them.
    pub fn read_jsonl(input: impl BufRead, bridge: &dyn LanguageModel) -> Result<Self, PlanError> {
        let mut pairs = Vec::new();
        for line in input.lines() {
            let line = line.map_err(|e| PlanError::Io(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let e: BankEntry = serde_json::from_str(&line).map_err(|e| PlanError::Io(e.to_string()))?;
            pairs.push((e.task_text, e.subtasks));
        }
        Self::build(bridge, pairs)
    }
}

/// The `k` entries most similar to `task_text`, best first; equal
/// similarities keep bank order.
pub fn retrieve_examples<'a>(
    bank: &'a ExampleBank,
    bridge: &dyn LanguageModel,
    task_text: &str,
    k: usize,
) -> Result<Vec<&'a BankEntry>, PlanError> {
    if bank.len() < k {
        return Err(PlanError::BankTooSmall { have: bank.len(), need: k });
    }
    let q = bridge.embed(task_text)?;
    let mut scored: Vec<(usize, f64)> =
        bank.entries.iter().enumerate().map(|(i, e)| (i, cosine(&q, &e.embedding))).collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(scored.into_iter().take(k).map(|(i, _)| &bank.entries[i]).collect())
}

fn question(task_text: &str) -> String {
    format!("{QUESTION_LEAD}{task_text}?")
}

/// Question/answer pairs for each example, then the open question.
pub fn build_prompt(examples: &[&BankEntry], task_text: &str) -> String {
    let mut p = String::new();
    for e in examples {
        p.push_str(&question(&e.task_text));
        p.push('\n');
        p.push_str(&e.subtasks.join(", "));
        p.push('\n');
    }
    p.push_str(&question(task_text));
    p
}

/// Inverse of [`build_prompt`]: `(task, answer)` pairs and the open task.
pub fn split_prompt(prompt: &str) -> (Vec<(String, String)>, Option<String>) {
    let lines: Vec<&str> = prompt.lines().collect();
    let task_of = |l: &str| l.strip_prefix(QUESTION_LEAD).and_then(|r| r.strip_suffix('?')).map(str::to_string);
    let mut pairs = Vec::new();
    let mut i = 0;
    while i + 1 < lines.len() {
        if let Some(t) = task_of(lines[i]) {
            pairs.push((t, lines[i + 1].to_string()));
        }
        i += 2;
    }
    let open = if lines.len() % 2 == 1 { lines.last().and_then(|l| task_of(l)) } else { None };
    (pairs, open)
}

/// Splits a generated answer into sub-tasks.
pub fn parse_plan(text: &str) -> Vec<String> {
    text.split([',', '\n'])
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.chars().take(MAX_SUBTASK_CHARS).collect())
        .collect()
}

/// Retrieves examples, prompts the bridge and parses the answer. An empty
/// answer falls back to the whole task as a single sub-task.
pub fn generate_plan(
    bridge: &dyn LanguageModel,
    bank: &ExampleBank,
    task_text: &str,
    k: usize,
) -> Result<SubTaskPlan, PlanError> {
    let examples = retrieve_examples(bank, bridge, task_text, k)?;
    let prompt = build_prompt(&examples, task_text);
    let text = bridge.generate(&prompt, MAX_PLAN_TOKENS, &["\n".to_string()])?;
    let mut subtasks = parse_plan(&text);
    if subtasks.is_empty() {
        tracing::warn!(task = task_text, "empty plan, using the task itself");
        subtasks = vec![task_text.chars().take(MAX_SUBTASK_CHARS).collect()];
    }
    Ok(SubTaskPlan { subtasks, source: PlanSource::Generated })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanMetrics {
    pub exact_accuracy: f64,
    pub similarity: f64,
}

fn normalized(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Exact-match rate and mean cosine of whole-plan embeddings.
pub fn evaluate_plans(
    bridge: &dyn LanguageModel,
    generated: &[SubTaskPlan],
    truth: &[SubTaskPlan],
) -> Result<PlanMetrics, PlanError> {
    if generated.len() != truth.len() {
        return Err(PlanError::LengthMismatch { generated: generated.len(), truth: truth.len() });
    }
    if generated.is_empty() {
        return Ok(PlanMetrics { exact_accuracy: 1.0, similarity: 1.0 });
    }
    let mut exact = 0usize;
    let mut sim = 0.0;
    for (g, t) in generated.iter().zip(truth) {
        let gn: Vec<String> = g.subtasks.iter().map(|s| normalized(s)).collect();
        let tn: Vec<String> = t.subtasks.iter().map(|s| normalized(s)).collect();
        if gn == tn {
            exact += 1;
        }
        sim += cosine(&bridge.embed(&g.render())?, &bridge.embed(&t.render())?);
    }
    let n = generated.len() as f64;
    Ok(PlanMetrics { exact_accuracy: exact as f64 / n, similarity: sim / n })
}
