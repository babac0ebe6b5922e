use std::cmp::Ordering;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::llm::RequestTag;
use crate::metrics::MetricReport;
use crate::prompts::{paragraphs, NO_CONTEXT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Operator {
    Seed,
    Init,
    Crossover,
    Mutation,
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Operator::Seed => "seed",
            Operator::Init => "init",
            Operator::Crossover => "crossover",
            Operator::Mutation => "mutation",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuleCandidate {
    pub id: String,
    /// Creation order; smaller is older.
    pub seq: usize,
    pub code: String,
    pub context: String,
    /// `None` means INVALID.
    pub fitness: Option<f64>,
    pub metrics: Option<MetricReport>,
    pub parent_ids: Vec<String>,
    pub operator: Operator,
    pub generation: usize,
    pub request_tags: Vec<RequestTag>,
    pub error: Option<String>,
}

impl RuleCandidate {
    pub fn is_valid(&self) -> bool {
        self.fitness.is_some()
    }

    pub(crate) fn invalidate(&mut self, error: impl Into<String>) {
        self.fitness = None;
        self.metrics = None;
        self.error = Some(error.into());
    }
}

pub(crate) fn candidate_id(seq: usize) -> String {
    format!("c{seq:04}")
}

/// Best first: valid before INVALID, higher fitness first, older first.
pub fn rank(a: &RuleCandidate, b: &RuleCandidate) -> Ordering {
    match (a.fitness, b.fitness) {
        (Some(x), Some(y)) => y.total_cmp(&x).then(a.seq.cmp(&b.seq)),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => a.seq.cmp(&b.seq),
    }
}

/// Draws up to `count` (worse, better) pairs from the valid candidates.
/// Equal-fitness draws are discarded; at most `10 * count` draws are made.
pub fn select_pairs<R: Rng>(
    pop: &[RuleCandidate],
    rng: &mut R,
    count: usize,
) -> Vec<(RuleCandidate, RuleCandidate)> {
    let valid: Vec<&RuleCandidate> = pop.iter().filter(|c| c.is_valid()).collect();
    let mut out = Vec::new();
    if valid.len() < 2 {
        return out;
    }
    let mut draws = 0;
    while out.len() < count && draws < 10 * count {
        draws += 1;
        let picked = rand::seq::index::sample(rng, valid.len(), 2);
        let (a, b) = (valid[picked.index(0)], valid[picked.index(1)]);
        let (fa, fb) = (a.fitness.unwrap(), b.fitness.unwrap());
        if fa == fb {
            continue;
        }
        out.push(if fa < fb { (a.clone(), b.clone()) } else { (b.clone(), a.clone()) });
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reflection {
    pub comments: String,
    pub context: String,
    pub worse_id: String,
    pub better_id: String,
}

/// Splits a reflection response: the final paragraph is the refined
/// hypothesis, everything before it the hints.
pub fn split_reflection(text: &str) -> (String, String) {
    let mut paras = paragraphs(text);
    match paras.len() {
        0 => (String::new(), NO_CONTEXT.to_string()),
        1 => (paras.remove(0), NO_CONTEXT.to_string()),
        _ => {
            let context = paras.pop().unwrap();
            (paras.join("\n\n"), context)
        }
    }
}

pub const NO_REFLECTIONS: &str = "(no reflections yet)";

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// The most recent `k` reflections, oldest first, one `- ` line each.
pub fn long_term_reflection(history: &[Reflection], k: usize) -> String {
    if history.is_empty() || k == 0 {
        return NO_REFLECTIONS.to_string();
    }
    history[history.len().saturating_sub(k)..]
        .iter()
        .map(|r| format!("- {} {}", one_line(&r.comments), one_line(&r.context)))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Next population: the best `elite_count` of `pop`, plus all newcomers,
/// ranked and cut to `n`.
pub fn survivors(
    pop: &[RuleCandidate],
    newcomers: &[RuleCandidate],
    elite_count: usize,
    n: usize,
) -> Vec<RuleCandidate> {
    let mut elites: Vec<RuleCandidate> = pop.to_vec();
    elites.sort_by(rank);
    elites.truncate(elite_count);
    elites.extend_from_slice(newcomers);
    elites.sort_by(rank);
    elites.truncate(n);
    elites
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn cand(seq: usize, fitness: Option<f64>) -> RuleCandidate {
        RuleCandidate {
            id: candidate_id(seq),
            seq,
            code: format!("return $a > {seq}"),
            context: String::new(),
            fitness,
            metrics: None,
            parent_ids: vec![],
            operator: Operator::Init,
            generation: 0,
            request_tags: vec![],
            error: None,
        }
    }

    #[test]
    fn two_candidates_one_pair() {
        let pop = [cand(0, Some(0.8)), cand(1, Some(0.2))];
        let pairs = select_pairs(&pop, &mut ChaCha8Rng::seed_from_u64(0), 1);
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].0.fitness, Some(0.2));
        assert_eq!(pairs[0].1.fitness, Some(0.8));
    }

    #[test]
    fn ties_and_invalids_yield_nothing() {
        let pop = [cand(0, Some(0.5)), cand(1, Some(0.5)), cand(2, None)];
        assert!(select_pairs(&pop, &mut ChaCha8Rng::seed_from_u64(0), 3).is_empty());
        let lone = [cand(0, Some(0.5)), cand(1, None)];
        assert!(select_pairs(&lone, &mut ChaCha8Rng::seed_from_u64(0), 3).is_empty());
    }

    #[test]
    fn pairs_are_reproducible() {
        let pop: Vec<_> = (0..8).map(|i| cand(i, Some(i as f64 / 10.0))).collect();
        let a = select_pairs(&pop, &mut ChaCha8Rng::seed_from_u64(5), 4);
        let b = select_pairs(&pop, &mut ChaCha8Rng::seed_from_u64(5), 4);
        assert_eq!(a, b);
        assert_eq!(a.len(), 4);
    }

    #[test]
    fn reflection_split() {
        assert_eq!(
            split_reflection("Combine airflow with temp.\n\nAirflow lag explains drift."),
            ("Combine airflow with temp.".into(), "Airflow lag explains drift.".into())
        );
        assert_eq!(
            split_reflection("Only hints here."),
            ("Only hints here.".into(), NO_CONTEXT.into())
        );
        let (c, h) = split_reflection("a\n\nb\n\nc");
        assert_eq!((c.as_str(), h.as_str()), ("a\n\nb", "c"));
    }

    fn refl(i: usize) -> Reflection {
        Reflection {
            comments: format!("hint {i}"),
            context: format!("ctx {i}"),
            worse_id: String::new(),
            better_id: String::new(),
        }
    }

    #[test]
    fn long_term_window() {
        let h: Vec<_> = (1..=3).map(refl).collect();
        assert_eq!(long_term_reflection(&h, 2), "- hint 2 ctx 2\n- hint 3 ctx 3");
        assert_eq!(long_term_reflection(&h[..1], 5), "- hint 1 ctx 1");
        assert_eq!(long_term_reflection(&[], 5), NO_REFLECTIONS);
    }

    #[test]
    fn survivor_ranking() {
        let pop = [cand(0, Some(0.9)), cand(1, Some(0.1)), cand(2, Some(0.5))];
        let new = [cand(3, None), cand(4, Some(0.5)), cand(5, Some(0.95))];
        let next = survivors(&pop, &new, 2, 4);
        let ids: Vec<_> = next.iter().map(|c| c.seq).collect();
        // 0.5 tie goes to the older candidate
        assert_eq!(ids, [5, 0, 2, 4]);
    }

    proptest! {
        #[test]
        fn survivors_keep_the_best(
            old in proptest::collection::vec(proptest::option::of(0.0f64..1.0), 2..10),
            new in proptest::collection::vec(proptest::option::of(0.0f64..1.0), 0..10),
            elite in 1usize..3,
        ) {
            let n = old.len();
            let elite = elite.min(n - 1);
            let pop: Vec<_> = old.iter().enumerate().map(|(i, f)| cand(i, *f)).collect();
            let kids: Vec<_> = new.iter().enumerate().map(|(i, f)| cand(n + i, *f)).collect();
            let next = survivors(&pop, &kids, elite, n);
            prop_assert!(next.len() <= n);
            prop_assert!(next.len() >= elite);
            let best = |v: &[RuleCandidate]| v.iter().filter_map(|c| c.fitness).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(best(&next) >= best(&pop));
        }

        #[test]
        fn pairs_are_ordered(fits in proptest::collection::vec(0.0f64..1.0, 2..12), seed: u64) {
            let pop: Vec<_> = fits.iter().enumerate().map(|(i, f)| cand(i, Some(*f))).collect();
            for (w, b) in select_pairs(&pop, &mut ChaCha8Rng::seed_from_u64(seed), 5) {
                prop_assert!(w.fitness.unwrap() < b.fitness.unwrap());
                prop_assert_ne!(w.id, b.id);
            }
        }
    }
}
