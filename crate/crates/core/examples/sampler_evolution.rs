//! Fully offline evolution with the seeded grammar sampler standing in for
//! a language model. Writes a run directory under the system temp dir.

use pillm::evolution::EvolutionConfig;
use pillm::llm::SamplerProvider;
use pillm::prompts::PromptSet;
use pillm::synth::{faulted_corpus, FaultKind, FaultSpec, SimConfig, Simulator};
use pillm::workflow::evolve_to_dir;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sim_cfg = SimConfig::with_seed(42);
    let once = faulted_corpus(&sim_cfg, &FaultSpec::new(FaultKind::SensorBias, 1.0, 600..900))?;
    let table = Simulator::new(sim_cfg)?.inject_fault(&once, &FaultSpec::new(FaultKind::SensorBias, 1.0, 2000..2300))?;
    let cfg = EvolutionConfig { seed: 11, ..EvolutionConfig::default() };
    let names: Vec<String> = table.feature_names().map(String::from).collect();
    let provider = SamplerProvider::new(cfg.seed, names);

    let out = tempfile::tempdir()?;
    let run = evolve_to_dir(&cfg, &table, &provider, &PromptSet::builtin(), out.path(), "sampler-demo")?;

    for g in run.log.generations() {
        println!(
            "generation {}: best {:?} ({:.4}), best ever {:?}",
            g.generation,
            g.best_id,
            g.best_fitness.unwrap_or(f64::NAN),
            g.best_ever_fitness
        );
    }
    let best = &run.result.best;
    println!("\nbest {} (fitness {:?}):\n{}\n", best.id, best.fitness, best.code);
    println!("{}", run.report);
    println!("{} LLM calls, files in {}", run.result.llm_calls, run.run_dir.display());
    Ok(())
}
