//! Simulate one zone, inject each fault type and show how a few columns move.

use pillm::synth::{FaultKind, FaultSpec, SimConfig, Simulator};

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sim = Simulator::new(SimConfig::with_seed(42))?;
    let clean = sim.simulate()?;
    let window = 1000..1400;
    println!("{} rows, columns: {}", clean.len(), clean.feature_names().collect::<Vec<_>>().join(", "));

    for kind in FaultKind::ALL {
        let faulty = sim.inject_fault(&clean, &FaultSpec::new(kind, 1.0, window.clone()))?;
        let labelled = faulty.labels().unwrap().iter().filter(|&&l| l == 1).count();
        print!("{:<24} labelled {labelled:>3}", kind.name());
        for col in ["zone_temp", "heat_cmd", "cool_cmd", "damper_pos"] {
            let before = mean(&clean.column(col).unwrap()[window.clone()]);
            let after = mean(&faulty.column(col).unwrap()[window.clone()]);
            print!("  {col} {before:+.2}->{after:+.2}");
        }
        println!();
    }

    let out = std::env::temp_dir().join("pillm-synth-example.csv");
    clean.save_csv(&out)?;
    println!("clean table written to {}", out.display());
    Ok(())
}
