use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::lexicon::Lexicon;
use crate::lmbridge::hashed_unit;

const SUBSTITUTE_PROB: f64 = 0.7;

/// Paraphrases a goal with seeded synonym swaps from `lexicon` and, for
/// two-clause goals, a clause swap. At least one swap is made whenever the
/// goal contains a word with synonyms.
pub fn perturb_goal(goal: &str, seed: u64, lexicon: &Lexicon) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (hashed_unit(seed, &[goal]) * u64::MAX as f64) as u64);
    let words: Vec<&str> = goal.split_whitespace().collect();
    // (start, length, synonyms)
    let mut spots: Vec<(usize, usize, &Vec<String>)> = Vec::new();
    let mut i = 0;
    while i < words.len() {
        let two = words.get(i + 1).map(|w| format!("{} {w}", words[i]));
        let hit = two
            .as_ref()
            .and_then(|t| lexicon.verbs.get(t).map(|s| (2, s)))
            .or_else(|| lexicon.verbs.get(words[i]).map(|s| (1, s)))
            .or_else(|| lexicon.nouns.get(words[i]).map(|s| (1, s)))
            .filter(|(_, s)| !s.is_empty());
        match hit {
            Some((len, syns)) => {
                spots.push((i, len, syns));
                i += len;
            }
            None => i += 1,
        }
    }
    if spots.is_empty() {
        return goal.to_string();
    }
    let mut chosen: Vec<bool> = spots.iter().map(|_| rng.gen_bool(SUBSTITUTE_PROB)).collect();
    if !chosen.iter().any(|c| *c) {
        let k = rng.gen_range(0..spots.len());
        chosen[k] = true;
    }
    let mut out: Vec<String> = Vec::with_capacity(words.len());
    let mut next = 0;
    for ((start, len, syns), pick) in spots.iter().zip(&chosen) {
        out.extend(words[next..*start].iter().map(|w| w.to_string()));
        if *pick {
            out.push(syns[rng.gen_range(0..syns.len())].clone());
        } else {
            out.extend(words[*start..start + len].iter().map(|w| w.to_string()));
        }
        next = start + len;
    }
    out.extend(words[next..].iter().map(|w| w.to_string()));
    let mut text = out.join(" ");
    if let Some((first, second)) = text.split_once(" and ") {
        if rng.gen_bool(0.5) {
            text = format!("{second} after you {first}");
        }
    }
    let mut chars = text.chars();
    match chars.next() {
        Some(c) => format!("{}{}.", c.to_uppercase(), chars.as_str()),
        None => text,
    }
}
