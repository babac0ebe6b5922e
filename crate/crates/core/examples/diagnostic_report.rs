//! Builds the three-part diagnostic report for a hand-written rule, then
//! passes it through a narrator (the scripted backend echoes it back).

use pillm::llm::ScriptedProvider;
use pillm::report::{generate_report, narrate};
use pillm::synth::{faulted_corpus, FaultKind, FaultSpec, SimConfig, Simulator};
use pillm::timeseries::split;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sim_cfg = SimConfig::with_seed(7);
    let first = faulted_corpus(&sim_cfg, &FaultSpec::new(FaultKind::SimultaneousHeatCool, 0.8, 500..620))?;
    let table = Simulator::new(sim_cfg)?.inject_fault(&first, &FaultSpec::new(FaultKind::SimultaneousHeatCool, 0.8, 2100..2200))?;
    let (train, test) = split(&table, 0.5)?;

    let code = "return $heat_cmd > 0.5 and $cool_cmd > 0.5";
    let context = "Heating and cooling running together means one valve or its command is faulty.";
    let report = generate_report(code, context, &train, &test, 0.5)?;
    println!("{}", report.render());

    let narrator = ScriptedProvider::new([]);
    let narrated = narrate(&report.render(), &narrator)?;
    println!("narrated text is {} bytes", narrated.len());
    Ok(())
}
