//! Acceptance suite. Runs without the libtest harness so every criterion
//! prints exactly one `criterion N: PASS|FAIL` line; the process exits
//! non-zero if any criterion fails.

mod common;

use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pillm::dsl;
use pillm::llm::{sample_rule, RequestTag, ScriptedProvider};
use pillm::metrics::{self, ConfusionCounts, MetricReport};
use pillm::prompts::{PromptId, PromptSet};
use pillm::report::{RunLog, REPORT_FILE};
use pillm::synth::{faulted_corpus, feature_meta, FaultKind, FaultSpec, SimConfig};
use pillm::timeseries::{FeatureMeta, FeatureRole, TimeSeriesTable};
use pillm::evolution::EvolutionConfig;
use pillm::workflow::evolve_to_dir;

const METRIC_PAIRS: usize = 20_000;
const METRIC_MAX_LEN: usize = 20;
const METRIC_TIME_LIMIT: Duration = Duration::from_secs(5);
const RATIO_TOL: f64 = 1e-12;
const F1_3_1_2: f64 = 0.666667;
const F1_3_1_2_TOL: f64 = 1e-6;
const ROUND_TRIP_RULES: u64 = 1_000;
const ROUND_TRIP_TIME_LIMIT: Duration = Duration::from_secs(10);
const WINDOW_SERIES: usize = 200;
const WINDOW_MAX_LEN: usize = 128;
const WINDOW_MAX_W: usize = 32;
const WINDOW_REL_TOL: f64 = 1e-9;
/// Measured Event-F1 PA of the zscore rule on the seed-42 corpus, pinned.
const SEPARABILITY_PINNED: f64 = 1.0;
const SEPARABILITY_FLOOR: f64 = 0.9;
const SEPARABILITY_TIME_LIMIT: Duration = Duration::from_secs(1);
const EVOLVE_TIME_LIMIT: Duration = Duration::from_secs(10);
const SCRIPTED_BEST: f64 = 1.0;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

// ---------- independent oracles ----------

/// Maximal runs of ones as inclusive (start, end) pairs.
fn oracle_incidents(labels: &[u8]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut t = 0;
    while t < labels.len() {
        if labels[t] == 1 {
            let start = t;
            while t + 1 < labels.len() && labels[t + 1] == 1 {
                t += 1;
            }
            out.push((start, t));
        }
        t += 1;
    }
    out
}

fn oracle_div(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

fn oracle_prf(tp: u64, fp: u64, fn_: u64) -> (f64, f64, f64) {
    let p = oracle_div(tp, tp + fp);
    let r = oracle_div(tp, tp + fn_);
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f)
}

fn oracle_confusion(flags: &[u8], labels: &[u8]) -> [u64; 4] {
    let mut c = [0u64; 4];
    for i in 0..flags.len() {
        let idx = match (flags[i], labels[i]) {
            (1, 1) => 0,
            (1, 0) => 1,
            (0, 1) => 2,
            _ => 3,
        };
        c[idx] += 1;
    }
    c
}

fn oracle_event(flags: &[u8], labels: &[u8]) -> (f64, f64, f64) {
    let incidents = oracle_incidents(labels);
    let tp = incidents.iter().filter(|&&(s, e)| (s..=e).any(|i| flags[i] == 1)).count() as u64;
    let fn_ = incidents.len() as u64 - tp;
    let fp = (0..flags.len()).filter(|&i| flags[i] == 1 && labels[i] == 0).count() as u64;
    oracle_prf(tp, fp, fn_)
}

fn close(report: &MetricReport, (p, r, f): (f64, f64, f64)) -> bool {
    (report.precision - p).abs() <= RATIO_TOL
        && (report.recall - r).abs() <= RATIO_TOL
        && (report.f1 - f).abs() <= RATIO_TOL
}

// ---------- criteria ----------

fn criterion_1() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for i in 0..METRIC_PAIRS {
        let len = rng.random_range(1..=METRIC_MAX_LEN);
        let density = rng.random_range(0.0..1.0);
        let labels: Vec<u8> = (0..len).map(|_| rng.random_bool(density) as u8).collect();
        let flags: Vec<u8> = (0..len).map(|_| rng.random_bool(0.5) as u8).collect();

        let c = metrics::confusion(&flags, &labels).map_err(|e| e.to_string())?;
        let [tp, fp, fn_, tn] = oracle_confusion(&flags, &labels);
        ensure(c == ConfusionCounts { tp, fp, fn_, tn }, format!("pair {i}: counts {c:?}"))?;
        ensure(close(&metrics::precision_recall_f1(&c), oracle_prf(tp, fp, fn_)), format!("pair {i}: pointwise"))?;
        let ev = metrics::event_f1_pa(&flags, &labels).map_err(|e| e.to_string())?;
        ensure(close(&ev, oracle_event(&flags, &labels)), format!("pair {i}: event {flags:?} {labels:?}"))?;
    }
    let elapsed = started.elapsed();
    ensure(elapsed < METRIC_TIME_LIMIT, format!("took {elapsed:?}"))?;
    Ok(format!("{METRIC_PAIRS} pairs (len <= {METRIC_MAX_LEN}) match the oracle in {elapsed:.2?}"))
}

fn criterion_2() -> Outcome {
    let r = metrics::precision_recall_f1(&ConfusionCounts { tp: 3, fp: 1, fn_: 2, tn: 0 });
    ensure((r.f1 - F1_3_1_2).abs() <= F1_3_1_2_TOL, format!("f1 = {}", r.f1))?;
    ensure(r.precision == 0.75 && r.recall == 0.6, format!("p={} r={}", r.precision, r.recall))?;

    let labels = [0, 1, 1, 0, 0, 1, 1, 0];
    let flags = [0, 0, 1, 0, 1, 0, 0, 0];
    let e = metrics::event_f1_pa(&flags, &labels).map_err(|e| e.to_string())?;
    ensure(e.precision == 0.5 && e.recall == 0.5 && e.f1 == 0.5, format!("{e:?}"))?;
    Ok(format!("(3,1,2) -> f1={:.6}; 8-point example -> p=r=f1={}", r.f1, e.f1))
}

fn criterion_3() -> Outcome {
    let started = Instant::now();
    let table = faulted_corpus(&SimConfig { length: 256, ..SimConfig::with_seed(3) }, &FaultSpec::new(FaultKind::SensorBias, 1.0, 100..150))
        .map_err(|e| e.to_string())?;
    let names: Vec<String> = table.feature_names().map(String::from).collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    for seed in 0..ROUND_TRIP_RULES {
        let src = sample_rule(seed, &refs, 3);
        let ast = dsl::parse(&src).map_err(|e| format!("seed {seed}: {e}\n{src}"))?;
        let again = dsl::parse(&dsl::format(&ast)).map_err(|e| format!("seed {seed}: reparse {e}"))?;
        ensure(again == ast, format!("seed {seed}: round trip changed\n{src}"))?;
        let typed = dsl::typecheck(&ast, refs.iter().copied()).map_err(|e| format!("seed {seed}: {e}"))?;
        let a = dsl::evaluate(&typed, &table).map_err(|e| e.to_string())?;
        let b = dsl::evaluate(&typed, &table).map_err(|e| e.to_string())?;
        let bits = |s: &dsl::ScoreSeries| s.iter().map(|v| v.map(f64::to_bits)).collect::<Vec<_>>();
        ensure(bits(&a) == bits(&b), format!("seed {seed}: evaluation not deterministic"))?;
    }
    let elapsed = started.elapsed();
    ensure(elapsed < ROUND_TRIP_TIME_LIMIT, format!("took {elapsed:?}"))?;
    Ok(format!("{ROUND_TRIP_RULES} sampled rules round-trip, typecheck and evaluate identically in {elapsed:.2?}"))
}

fn oracle_window(x: &[f64], w: usize, stat: &str) -> Vec<f64> {
    (0..x.len())
        .map(|t| {
            let lo = (t + 1).saturating_sub(w);
            let win = &x[lo..=t];
            let n = win.len() as f64;
            match stat {
                "mean" => win.iter().sum::<f64>() / n,
                "std" => {
                    let m = win.iter().sum::<f64>() / n;
                    (win.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt()
                }
                "rmin" => win.iter().copied().fold(f64::INFINITY, f64::min),
                _ => win.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect()
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let meta = vec![FeatureMeta::new("x", "1", "test signal", FeatureRole::Sensor)];
    let mut worst = 0.0f64;
    for i in 0..WINDOW_SERIES {
        let len = rng.random_range(1..=WINDOW_MAX_LEN);
        let scale = 10f64.powi(rng.random_range(-2..=3));
        let x: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0) * scale).collect();
        let table = TimeSeriesTable::new(meta.clone(), vec![x.clone()], (0..len as i64).collect(), None)
            .map_err(|e| e.to_string())?;
        let w = rng.random_range(1..=WINDOW_MAX_W);
        for stat in ["mean", "std", "rmin", "rmax"] {
            let rule = dsl::compile(&format!("return {stat}($x, {w})"), ["x"]).map_err(|e| e.to_string())?;
            let got = dsl::evaluate(&rule, &table).map_err(|e| e.to_string())?;
            for (t, want) in oracle_window(&x, w, stat).into_iter().enumerate() {
                let g = got.get(t).ok_or(format!("series {i}: {stat} row {t} MISSING"))?;
                // Relative to the larger of the value and the series scale, so
                // means that cancel to near zero are not held to 1e-9 of ~0.
                let rel = (g - want).abs() / want.abs().max(scale);
                worst = worst.max(rel);
                ensure(rel <= WINDOW_REL_TOL, format!("series {i}: {stat}(w={w}) row {t}: {g} vs {want}"))?;
            }
        }
    }
    Ok(format!("{WINDOW_SERIES} series x 4 window stats, worst relative error {worst:.2e}"))
}

fn criterion_5() -> Outcome {
    let started = Instant::now();
    let table = separability_corpus()?;
    let rule = dsl::compile("return zscore($zone_temp, 60) > 3", table.feature_names()).map_err(|e| e.to_string())?;
    let flags = dsl::to_flags(&dsl::evaluate(&rule, &table).map_err(|e| e.to_string())?, dsl::DEFAULT_THRESHOLD);
    let r = metrics::event_f1_pa(&flags, table.labels().unwrap()).map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    ensure(r.f1 >= SEPARABILITY_FLOOR, format!("f1 {}", r.f1))?;
    ensure(r.f1 == SEPARABILITY_PINNED, format!("f1 {} differs from pinned {SEPARABILITY_PINNED}", r.f1))?;
    ensure(elapsed < SEPARABILITY_TIME_LIMIT, format!("took {elapsed:?}"))?;
    Ok(format!("event f1 = {} (pinned {SEPARABILITY_PINNED}) in {elapsed:.2?}", r.f1))
}

fn separability_corpus() -> Result<TimeSeriesTable, String> {
    faulted_corpus(&SimConfig::with_seed(42), &FaultSpec::new(FaultKind::SensorBias, 1.0, 1000..1400)).map_err(|e| e.to_string())
}

struct CliRun {
    log: RunLog,
    elapsed: Duration,
}

/// Writes the seed-42 corpus and the seed-11 sampler config once.
fn offline_inputs(dir: &Path) -> Result<(PathBuf, PathBuf, PathBuf), String> {
    let data = dir.join("data.csv");
    let meta = dir.join("meta.json");
    let cfg = dir.join("sampler.toml");
    if !data.exists() {
        separability_corpus()?.save_csv(&data).map_err(|e| e.to_string())?;
        std::fs::write(&meta, pillm::timeseries::meta_to_json(&feature_meta())).map_err(|e| e.to_string())?;
        std::fs::write(&cfg, "population_size = 6\ngenerations = 3\nseed = 11\n").map_err(|e| e.to_string())?;
    }
    Ok((data, meta, cfg))
}

fn cli_evolve(dir: &Path, run_id: &str, extra: &[&str]) -> Result<CliRun, String> {
    let (data, meta, cfg) = offline_inputs(dir)?;
    let started = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_pillm"))
        .args(["evolve", "--provider", "sampler", "--run-id", run_id])
        .arg("--data")
        .arg(&data)
        .arg("--meta")
        .arg(&meta)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("runs"))
        .args(extra)
        .env_remove("PILLM_API_KEY")
        .output()
        .map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    ensure(out.status.success(), format!("{run_id}: exit {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr)))?;
    let log = RunLog::load(dir.join("runs").join(run_id)).map_err(|e| e.to_string())?;
    Ok(CliRun { log, elapsed })
}

fn best_code(log: &RunLog) -> String {
    pillm::workflow::best_record(log.records()).map(|r| r.code.clone()).unwrap_or_default()
}

fn criterion_6(dir: &Path) -> Outcome {
    let a = cli_evolve(dir, "offline-a", &[])?;
    ensure(a.elapsed < EVOLVE_TIME_LIMIT, format!("took {:?}", a.elapsed))?;
    ensure(a.log.requests().iter().all(|r| r.provider_id == "sampler"), "a request left the offline sampler")?;
    let gens = a.log.generations();
    ensure(gens.len() == 4, format!("{} generation summaries", gens.len()))?;
    let mut prev = f64::NEG_INFINITY;
    for g in gens {
        let f = g.best_ever_fitness.ok_or("generation without a valid candidate")?;
        ensure(f >= prev, format!("best-ever fell at generation {}", g.generation))?;
        prev = f;
    }
    let seed = a.log.records().iter().find(|r| r.operator == "seed").and_then(|r| r.fitness).ok_or("no seed record")?;
    ensure(prev >= seed, format!("best {prev} < seed {seed}"))?;
    let b = cli_evolve(dir, "offline-b", &[])?;
    ensure(best_code(&a.log) == best_code(&b.log), "second run picked different best code")?;
    Ok(format!(
        "{} candidates in {:.2?}, best-ever {prev:.6} >= seed {seed:.6}, rerun identical",
        a.log.records().len(),
        a.elapsed
    ))
}

fn count_tag(log: &RunLog, tag: RequestTag) -> usize {
    log.request_tags().filter(|&t| t == tag).count()
}

fn criterion_7(dir: &Path) -> Outcome {
    let full = cli_evolve(dir, "ablate-full", &[])?;
    let no_pir = cli_evolve(dir, "ablate-no-pir", &["--no-pir"])?;
    let no_pic = cli_evolve(dir, "ablate-no-pic", &["--no-pic"])?;
    let full_counts = (count_tag(&full.log, RequestTag::Reflection), count_tag(&full.log, RequestTag::Crossover));
    ensure(full_counts.0 > 0 && full_counts.1 > 0, format!("full run tags {full_counts:?}"))?;
    let r = count_tag(&no_pir.log, RequestTag::Reflection);
    let c = count_tag(&no_pic.log, RequestTag::Crossover);
    ensure(r == 0, format!("{r} reflection requests with --no-pir"))?;
    ensure(c == 0, format!("{c} crossover requests with --no-pic"))?;
    Ok(format!(
        "full run: {} reflection / {} crossover; --no-pir: 0 reflection; --no-pic: 0 crossover",
        full_counts.0, full_counts.1
    ))
}

fn criterion_8(dir: &Path) -> Outcome {
    let cfg = EvolutionConfig::load(common::fixture("scripted.toml")).map_err(|e| e.to_string())?;
    let provider = ScriptedProvider::from_file(common::fixture("perfect_in_gen2.jsonl")).map_err(|e| e.to_string())?;
    let table = common::two_incident_corpus();
    let out = evolve_to_dir(&cfg, &table, &provider, &PromptSet::builtin(), &dir.join("runs"), "scripted")
        .map_err(|e| e.to_string())?;
    let best = out.result.best.fitness.ok_or("best is invalid")?;
    ensure(best == SCRIPTED_BEST, format!("best fitness {best}"))?;
    ensure(out.result.best.generation == 2, format!("best born in generation {}", out.result.best.generation))?;
    let report = std::fs::read_to_string(out.run_dir.join(REPORT_FILE)).map_err(|e| e.to_string())?;
    for heading in ["## Identify the Fault", "## Provide Evidence", "## Assess Severity"] {
        ensure(report.contains(heading), format!("report lacks {heading}"))?;
    }
    let incidents = report.lines().filter(|l| l.starts_with("Incident ")).count();
    ensure(incidents >= 1, "report lists no incident")?;
    Ok(format!("best fitness {best} from generation-2 crossover; report has 3 headings and {incidents} incident(s)"))
}

const ANCHORS: [&str; 7] = [
    "You are an expert in the domain of building energy",
    "Be very creative",
    "[Worse Rules]",
    "[Better Rules]",
    "[Reflection]",
    "[Improved Code]",
    "[Prior Reflection]",
];

fn criterion_9() -> Outcome {
    let shipped: String = PromptId::ALL
        .iter()
        .map(|&id| {
            let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("prompts").join(format!("{}.txt", id.name()));
            std::fs::read_to_string(path).unwrap_or_default()
        })
        .collect();
    let builtin: String = PromptId::ALL.iter().map(|&id| PromptSet::builtin().get(id).body().to_string()).collect();
    for anchor in ANCHORS {
        ensure(shipped.contains(anchor), format!("shipped templates lack {anchor:?}"))?;
        ensure(builtin.contains(anchor), format!("embedded templates lack {anchor:?}"))?;
    }
    Ok(format!("{} anchors present in {} templates", ANCHORS.len(), PromptId::ALL.len()))
}

fn criterion_10() -> Outcome {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../README.md");
    let readme = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    for needle in ["0.968", "0.859", "0.926", "LBNL", "commercial LLM", "--provider http", "PILLM_API_KEY"] {
        ensure(readme.contains(needle), format!("README lacks {needle:?}"))?;
    }
    Ok("README states the headline numbers need the LBNL corpus and a commercial LLM, and documents the http path".into())
}

fn main() {
    let scratch = tempfile::tempdir().expect("temp dir");
    let dir = scratch.path();
    let criteria: Vec<(u32, Box<dyn Fn() -> Outcome + '_>)> = vec![
        (1, Box::new(criterion_1)),
        (2, Box::new(criterion_2)),
        (3, Box::new(criterion_3)),
        (4, Box::new(criterion_4)),
        (5, Box::new(criterion_5)),
        (6, Box::new(|| criterion_6(dir))),
        (7, Box::new(|| criterion_7(dir))),
        (8, Box::new(|| criterion_8(dir))),
        (9, Box::new(criterion_9)),
        (10, Box::new(criterion_10)),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (n, run) in &criteria {
        let outcome = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("criterion {n}: PASS {detail}"),
            Err(why) => {
                failed += 1;
                println!("criterion {n}: FAIL {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
