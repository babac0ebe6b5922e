//! Replays canned model responses so every prompt and operator can be
//! inspected deterministically. Pass `--no-pir` or `--no-pic` to ablate.

use pillm::evolution::{run_evolution, EvolutionConfig};
use pillm::llm::{RequestTag, ScriptedProvider};
use pillm::prompts::PromptSet;
use pillm::report::RunLog;
use pillm::synth::{faulted_corpus, FaultKind, FaultSpec, SimConfig, Simulator};
use pillm::timeseries::split;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().collect();
    let fixtures = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures");
    let mut cfg = EvolutionConfig::load(format!("{fixtures}/scripted.toml"))?;
    cfg.enable_pir = !args.iter().any(|a| a == "--no-pir");
    cfg.enable_pic = !args.iter().any(|a| a == "--no-pic");
    let provider = ScriptedProvider::from_file(format!("{fixtures}/perfect_in_gen2.jsonl"))?;

    let sim_cfg = SimConfig::with_seed(42);
    let once = faulted_corpus(&sim_cfg, &FaultSpec::new(FaultKind::SensorBias, 1.0, 600..900))?;
    let table = Simulator::new(sim_cfg)?.inject_fault(&once, &FaultSpec::new(FaultKind::SensorBias, 1.0, 2000..2300))?;
    let (train, _) = split(&table, cfg.train_fraction)?;

    let mut log = RunLog::in_memory("scripted-demo");
    let result = run_evolution(&cfg, &train, &provider, &PromptSet::builtin(), &mut log)?;

    for r in log.records() {
        let fitness = r.fitness.map_or("INVALID".to_string(), |f| format!("{f:.4}"));
        println!("g{} {} {:<9} {:>8} parents {:?}  {}", r.generation, r.candidate_id, r.operator, fitness, r.parent_ids, r.code);
    }
    for tag in [RequestTag::Init, RequestTag::Reflection, RequestTag::Crossover, RequestTag::Mutation] {
        println!("{tag}: {} request(s)", log.request_tags().filter(|&t| t == tag).count());
    }
    if result.aborted {
        println!("aborted: {}", result.abort_reason.unwrap_or_default());
    }
    println!("best {} = {:?}", result.best.id, result.best.fitness);
    Ok(())
}
