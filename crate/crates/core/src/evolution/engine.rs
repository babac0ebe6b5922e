use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use log::{debug, info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::ops::{
    candidate_id, long_term_reflection, rank, select_pairs, split_reflection, survivors, Operator,
    Reflection, RuleCandidate,
};
use super::{EvolutionConfig, EvolutionError};
use crate::dsl;
use crate::llm::{CompletionRequest, Provider, RequestTag};
use crate::metrics::{self, MetricMode, MetricReport};
use crate::prompts::{
    code_block, context_block, feature_list_text, parse_response, seed_rule, task_description,
    PromptId, PromptSet, NO_CONTEXT, SEED_CONTEXT,
};
use crate::report::{code_hash, GenerationSummary, LogRecord, RequestEntry, RunLog};
use crate::timeseries::TimeSeriesTable;

pub const NO_REFLECTION: &str = "No reflection available.";

const REFLECTION_REQUEST: &str = "Compare the two rules above. Give your hints for a better \
rule first, then finish with one separate paragraph stating the better physical hypothesis.";

#[derive(Debug, Clone)]
pub struct RunResult {
    /// Best valid candidate seen at any point, or the seed if none was valid.
    pub best: RuleCandidate,
    pub population: Vec<RuleCandidate>,
    pub generations_completed: usize,
    pub aborted: bool,
    pub abort_reason: Option<String>,
    pub budget_exhausted: bool,
    pub llm_calls: usize,
}

#[derive(Debug, Clone, PartialEq)]
enum Stop {
    Abort(String),
    Budget,
    Halted,
}

#[derive(Debug, Clone)]
struct Pending {
    tag: RequestTag,
    provider_id: String,
    attempt: u32,
    latency_ms: u64,
    error: Option<String>,
}

/// Outcome of one rule-producing exchange, retries included.
#[derive(Debug, Default)]
struct Draft {
    code: String,
    context: String,
    error: Option<String>,
    tags: Vec<RequestTag>,
    trail: Vec<Pending>,
    stop: Option<Stop>,
    /// False when no response arrived at all.
    produced: bool,
}

#[derive(Debug, Default)]
struct PairOutcome {
    reflection: Option<Reflection>,
    child: Option<Draft>,
    trail: Vec<Pending>,
    stop: Option<Stop>,
}

struct Engine<'a> {
    cfg: &'a EvolutionConfig,
    train: &'a TimeSeriesTable,
    labels: &'a [u8],
    provider: &'a dyn Provider,
    prompts: &'a PromptSet,
    task: String,
    feature_text: String,
    generator_system: String,
    calls: AtomicUsize,
    halted: AtomicBool,
}

/// Runs `cfg.generations` rounds of reflection, crossover and elitist
/// mutation on `train`, logging every request and candidate to `log`.
///
/// Provider failures end the run early with `aborted` set; the log holds
/// everything up to that point.
pub fn run_evolution(
    cfg: &EvolutionConfig,
    train: &TimeSeriesTable,
    provider: &dyn Provider,
    prompts: &PromptSet,
    log: &mut RunLog,
) -> Result<RunResult, EvolutionError> {
    cfg.validate()?;
    let labels = train
        .labels()
        .ok_or_else(|| EvolutionError::Data("training table has no labels".into()))?;
    let task = task_description(cfg.threshold);
    let generator_system = prompts.render(
        PromptId::GeneratorSystem,
        &BTreeMap::from([("task_description", task.clone())]),
    )?;
    let engine = Engine {
        cfg,
        train,
        labels,
        provider,
        prompts,
        feature_text: feature_list_text(train.features()),
        task,
        generator_system,
        calls: AtomicUsize::new(0),
        halted: AtomicBool::new(false),
    };
    engine.run(log)
}

fn batch<T: Sync, R: Send>(cap: usize, items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    if cap <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    let (f, next_ref, slots_ref) = (&f, &next, &slots);
    std::thread::scope(|s| {
        for _ in 0..cap.min(items.len()) {
            s.spawn(move || loop {
                let i = next_ref.fetch_add(1, Ordering::SeqCst);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                *slots_ref[i].lock().expect("batch slot") = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("batch slot").expect("every item ran"))
        .collect()
}

struct State {
    next_seq: usize,
    history: Vec<Reflection>,
    cache: HashMap<String, Result<MetricReport, String>>,
    best: Option<RuleCandidate>,
    stop: Option<Stop>,
}

impl State {
    fn note_stop(&mut self, stop: Option<Stop>) {
        match (&self.stop, stop) {
            (_, None) | (_, Some(Stop::Halted)) => {}
            (None, s) | (Some(Stop::Budget), s @ Some(Stop::Abort(_))) => self.stop = s,
            _ => {}
        }
    }

    fn make(&mut self, draft: Draft, operator: Operator, parents: Vec<String>, gen: usize) -> RuleCandidate {
        let seq = self.next_seq;
        self.next_seq += 1;
        RuleCandidate {
            id: candidate_id(seq),
            seq,
            code: draft.code,
            context: draft.context,
            fitness: None,
            metrics: None,
            parent_ids: parents,
            operator,
            generation: gen,
            request_tags: draft.tags,
            error: draft.error,
        }
    }
}

impl<'a> Engine<'a> {
    fn request(
        &self,
        tag: RequestTag,
        system: &str,
        user: &str,
        temperature: f64,
        trail: &mut Vec<Pending>,
    ) -> Result<String, Stop> {
        if self.halted.load(Ordering::SeqCst) {
            return Err(Stop::Halted);
        }
        let budget = self.cfg.llm_call_budget;
        if self
            .calls
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |c| (c < budget).then_some(c + 1))
            .is_err()
        {
            return Err(Stop::Budget);
        }
        let req = CompletionRequest::new(tag, system, user)
            .temperature(temperature)
            .max_tokens(self.cfg.max_tokens);
        match self.provider.complete(&req) {
            Ok(r) => {
                trail.push(Pending {
                    tag,
                    provider_id: r.provider_id,
                    attempt: r.attempt,
                    latency_ms: r.latency_ms,
                    error: None,
                });
                Ok(r.text)
            }
            Err(e) => {
                trail.push(Pending {
                    tag,
                    provider_id: self.provider.id().to_string(),
                    attempt: 0,
                    latency_ms: 0,
                    error: Some(e.to_string()),
                });
                Err(Stop::Abort(format!("{tag} request failed: {e}")))
            }
        }
    }

    /// Asks for a rule up to `1 + retry_budget` times until one compiles.
    fn draft(&self, tag: RequestTag, user: &str, temperature: f64) -> Draft {
        let mut d = Draft::default();
        for _ in 0..=self.cfg.retry_budget {
            let text = match self.request(tag, &self.generator_system, user, temperature, &mut d.trail) {
                Ok(t) => t,
                Err(stop) => {
                    if matches!(stop, Stop::Abort(_)) {
                        self.halted.store(true, Ordering::SeqCst);
                    }
                    d.stop = Some(stop);
                    break;
                }
            };
            d.tags.push(tag);
            d.produced = true;
            let parsed = match parse_response(&text) {
                Ok(p) => p,
                Err(e) => {
                    d.error = Some(e.to_string());
                    continue;
                }
            };
            d.code = parsed.code;
            d.context = parsed.context;
            match dsl::compile(&d.code, self.train.feature_names()) {
                Ok(_) => {
                    d.error = None;
                    return d;
                }
                Err(e) => d.error = Some(format!("rule does not compile: {e}")),
            }
        }
        if d.produced && d.error.is_none() {
            d.error = Some("no valid rule produced".into());
        }
        d
    }

    fn bindings(&self) -> BTreeMap<&'static str, String> {
        BTreeMap::from([
            ("task_description", self.task.clone()),
            ("input_feature_list", self.feature_text.clone()),
        ])
    }

    fn init_draft(&self) -> Draft {
        let mut b = self.bindings();
        b.insert("seed_function", code_block(&seed_rule(self.train.features())));
        b.insert("context_template", context_block(SEED_CONTEXT));
        b.insert("func_name", "rule".into());
        let user = self.prompts.render(PromptId::Init, &b).expect("init bindings complete");
        self.draft(RequestTag::Init, &user, self.cfg.init_temperature)
    }

    fn pair_bindings(&self, worse: &RuleCandidate, better: &RuleCandidate) -> BTreeMap<&'static str, String> {
        let mut b = self.bindings();
        b.insert("worse_rules", code_block(&worse.code));
        b.insert("worse_rules_physical_context", worse.context.clone());
        b.insert("better_rules", code_block(&better.code));
        b.insert("better_rules_physical_context", better.context.clone());
        b
    }

    fn breed(&self, pair: &(RuleCandidate, RuleCandidate)) -> PairOutcome {
        let (worse, better) = pair;
        let mut out = PairOutcome::default();
        let mut reflection_tags = Vec::new();
        let (comments, context) = if self.cfg.enable_pir {
            let system = self
                .prompts
                .render(PromptId::ReflectionSystem, &self.pair_bindings(worse, better))
                .expect("reflection bindings complete");
            let temp = self.cfg.operator_temperature;
            match self.request(RequestTag::Reflection, &system, REFLECTION_REQUEST, temp, &mut out.trail) {
                Ok(text) => {
                    let (comments, context) = split_reflection(&text);
                    reflection_tags.push(RequestTag::Reflection);
                    out.reflection = Some(Reflection {
                        comments: comments.clone(),
                        context: context.clone(),
                        worse_id: worse.id.clone(),
                        better_id: better.id.clone(),
                    });
                    (comments, context)
                }
                Err(Stop::Abort(reason)) => {
                    warn!("dropping pair ({}, {}): {reason}", worse.id, better.id);
                    return out;
                }
                Err(stop) => {
                    out.stop = Some(stop);
                    return out;
                }
            }
        } else {
            (NO_REFLECTION.to_string(), String::new())
        };
        if !self.cfg.enable_pic {
            return out;
        }
        let mut b = self.pair_bindings(worse, better);
        b.insert("reflection_comments", comments);
        b.insert("reflection_context", context);
        b.insert("function_name", "rule".into());
        let user = self.prompts.render(PromptId::Crossover, &b).expect("crossover bindings complete");
        let mut child = self.draft(RequestTag::Crossover, &user, self.cfg.operator_temperature);
        reflection_tags.append(&mut child.tags);
        child.tags = reflection_tags;
        out.stop = child.stop.clone();
        out.child = Some(child);
        out
    }

    fn mutate(&self, elite: &RuleCandidate, lt: &str, lt_context: &str) -> Draft {
        let mut b = self.bindings();
        b.insert("reflection_comments", lt.to_string());
        b.insert("reflection_context", lt_context.to_string());
        b.insert("function_signature", format!("rule_v{}:", elite.generation + 1));
        b.insert("elitist_code", code_block(&elite.code));
        b.insert("function_name", "rule".into());
        let user = self
            .prompts
            .render(PromptId::ElitistMutation, &b)
            .expect("mutation bindings complete");
        self.draft(RequestTag::Mutation, &user, self.cfg.operator_temperature)
    }

    fn fitness_of(&self, code: &str) -> Result<MetricReport, String> {
        let rule = dsl::compile(code, self.train.feature_names()).map_err(|e| e.to_string())?;
        let scores = dsl::evaluate(&rule, self.train).map_err(|e| e.to_string())?;
        let flags = dsl::to_flags(&scores, self.cfg.threshold);
        metrics::score(&flags, self.labels, MetricMode::EventPa).map_err(|e| e.to_string())
    }

    fn evaluate(&self, state: &mut State, fresh: &mut [RuleCandidate]) {
        let todo: Vec<String> = {
            let mut codes: Vec<String> = fresh
                .iter()
                .filter(|c| c.error.is_none() && !state.cache.contains_key(&c.code))
                .map(|c| c.code.clone())
                .collect();
            codes.sort();
            codes.dedup();
            codes
        };
        let results: Vec<_> = todo.par_iter().map(|code| self.fitness_of(code)).collect();
        state.cache.extend(todo.into_iter().zip(results));
        for c in fresh.iter_mut().filter(|c| c.error.is_none()) {
            match &state.cache[&c.code] {
                Ok(m) => {
                    c.fitness = Some(m.f1);
                    c.metrics = Some(*m);
                }
                Err(e) => c.invalidate(e.clone()),
            }
        }
    }

    fn flush(
        &self,
        log: &mut RunLog,
        gen: usize,
        trail: Vec<Pending>,
        fresh: &[RuleCandidate],
    ) -> Result<(), EvolutionError> {
        for p in trail {
            log.append_request(RequestEntry {
                seq: log.requests().len(),
                generation: gen,
                tag: p.tag,
                provider_id: p.provider_id,
                attempt: p.attempt,
                latency_ms: p.latency_ms,
                ok: p.error.is_none(),
                error: p.error,
            })?;
        }
        for c in fresh {
            log.append_record(LogRecord {
                generation: c.generation,
                candidate_id: c.id.clone(),
                parent_ids: c.parent_ids.clone(),
                operator: c.operator.to_string(),
                code: c.code.clone(),
                context: c.context.clone(),
                code_hash: code_hash(&c.code),
                fitness: c.fitness,
                precision: c.metrics.map(|m| m.precision),
                recall: c.metrics.map(|m| m.recall),
                request_tags_used: c.request_tags.clone(),
                error: c.error.clone(),
            })?;
        }
        Ok(())
    }

    fn summarize(
        &self,
        log: &mut RunLog,
        state: &mut State,
        gen: usize,
        pop: &[RuleCandidate],
    ) -> Result<(), EvolutionError> {
        let gen_best = pop.iter().filter(|c| c.is_valid()).min_by(|a, b| rank(a, b));
        if let Some(b) = gen_best {
            if state.best.as_ref().is_none_or(|cur| rank(b, cur).is_lt()) {
                state.best = Some(b.clone());
            }
        }
        info!(
            "generation {gen}: best {:?}, best ever {:?}",
            gen_best.and_then(|c| c.fitness),
            state.best.as_ref().and_then(|c| c.fitness)
        );
        log.append_generation(GenerationSummary {
            generation: gen,
            population: pop.iter().map(|c| c.id.clone()).collect(),
            best_id: gen_best.map(|c| c.id.clone()),
            best_fitness: gen_best.and_then(|c| c.fitness),
            best_ever_id: state.best.as_ref().map(|c| c.id.clone()),
            best_ever_fitness: state.best.as_ref().and_then(|c| c.fitness),
        })?;
        Ok(())
    }

    fn run(&self, log: &mut RunLog) -> Result<RunResult, EvolutionError> {
        let cfg = self.cfg;
        let cap = self.provider.max_in_flight().max(1);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut state = State {
            next_seq: 0,
            history: Vec::new(),
            cache: HashMap::new(),
            best: None,
            stop: None,
        };

        let seed = Draft {
            code: seed_rule(self.train.features()),
            context: SEED_CONTEXT.to_string(),
            produced: true,
            ..Draft::default()
        };
        let mut fresh = vec![state.make(seed, Operator::Seed, vec![], 0)];
        let slots: Vec<()> = vec![(); cfg.population_size - 1];
        let mut trail = Vec::new();
        for draft in batch(cap, &slots, |_| self.init_draft()) {
            state.note_stop(draft.stop.clone());
            trail.extend(draft.trail.iter().cloned());
            if draft.produced {
                fresh.push(state.make(draft, Operator::Init, vec![], 0));
            }
        }
        self.evaluate(&mut state, &mut fresh);
        self.flush(log, 0, trail, &fresh)?;
        let mut pop = fresh;
        self.summarize(log, &mut state, 0, &pop)?;

        let mut completed = 0;
        for gen in 1..=cfg.generations {
            if state.stop.is_some() {
                break;
            }
            let pairs = select_pairs(&pop, &mut rng, cfg.pairs());
            debug!("generation {gen}: {} pair(s)", pairs.len());
            let mut trail = Vec::new();
            let mut fresh = Vec::new();
            for (pair, outcome) in pairs.iter().zip(batch(cap, &pairs, |p| self.breed(p))) {
                state.note_stop(outcome.stop.clone());
                trail.extend(outcome.trail);
                state.history.extend(outcome.reflection);
                if let Some(child) = outcome.child {
                    trail.extend(child.trail.iter().cloned());
                    if child.produced {
                        let parents = vec![pair.0.id.clone(), pair.1.id.clone()];
                        fresh.push(state.make(child, Operator::Crossover, parents, gen));
                    }
                }
            }

            let lt = long_term_reflection(&state.history, cfg.long_term_window);
            let lt_context = state
                .history
                .last()
                .map_or_else(|| NO_CONTEXT.to_string(), |r| r.context.clone());
            let mut elites: Vec<RuleCandidate> = pop.iter().filter(|c| c.is_valid()).cloned().collect();
            elites.sort_by(rank);
            elites.truncate(cfg.elite_count);
            let mut targets = elites.clone();
            if !cfg.enable_pic && !elites.is_empty() {
                targets.extend((0..pairs.len()).map(|i| elites[i % elites.len()].clone()));
            }
            if state.stop.is_none() {
                for (elite, draft) in targets.iter().zip(batch(cap, &targets, |e| self.mutate(e, &lt, &lt_context))) {
                    state.note_stop(draft.stop.clone());
                    trail.extend(draft.trail.iter().cloned());
                    if draft.produced {
                        fresh.push(state.make(draft, Operator::Mutation, vec![elite.id.clone()], gen));
                    }
                }
            }

            self.evaluate(&mut state, &mut fresh);
            self.flush(log, gen, trail, &fresh)?;
            pop = survivors(&pop, &fresh, cfg.elite_count, cfg.population_size);
            self.summarize(log, &mut state, gen, &pop)?;
            completed = gen;
        }

        let (aborted, abort_reason) = match &state.stop {
            Some(Stop::Abort(r)) => (true, Some(r.clone())),
            _ => (false, None),
        };
        if let Some(r) = &abort_reason {
            warn!("run aborted: {r}");
        }
        let best = state.best.clone().unwrap_or_else(|| pop[0].clone());
        Ok(RunResult {
            best,
            population: pop,
            generations_completed: completed,
            aborted,
            abort_reason,
            budget_exhausted: state.stop == Some(Stop::Budget),
            llm_calls: self.calls.load(Ordering::SeqCst),
        })
    }

}
