//! Parse, typecheck, format and evaluate a rule on a tiny hand-made table.

use pillm::dsl;
use pillm::timeseries::{FeatureMeta, FeatureRole, TimeSeriesTable};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let metas = vec![
        FeatureMeta::new("zone_temp", "degC", "zone air temperature", FeatureRole::Sensor),
        FeatureMeta::new("fan_status", "bool", "supply fan on/off", FeatureRole::Status),
    ];
    let zone = vec![21.0, 21.2, 21.1, 24.5, 25.0, 21.3, 21.0, 20.9];
    let fan = vec![1.0; zone.len()];
    let table = TimeSeriesTable::new(metas, vec![zone, fan], (0..8).map(|t| t * 60).collect(), None)?;

    let src = "d = delta($zone_temp, 1)\nreturn abs(d) > 2 and $fan_status == 1";
    let ast = dsl::parse(src)?;
    println!("canonical form:\n{}\n", dsl::format(&ast));

    let rule = dsl::typecheck(&ast, table.feature_names())?;
    println!("{} nodes, result type {:?}", ast.node_count, rule.result_type());

    let scores = dsl::evaluate(&rule, &table)?;
    let flags = dsl::to_flags(&scores, dsl::DEFAULT_THRESHOLD);
    for (t, (s, f)) in scores.iter().zip(&flags).enumerate() {
        let shown = s.map_or("MISSING".to_string(), |v| v.to_string());
        println!("row {t}: score {shown:>7} flag {f}");
    }

    // Errors carry a line:column position.
    for bad in ["return $ghost > 1", "return mean($zone_temp, 0)", "return ($zone_temp > 1) + 2"] {
        match dsl::compile(bad, table.feature_names()) {
            Ok(_) => println!("{bad:?} unexpectedly compiled"),
            Err(e) => println!("{bad:?} -> {e}"),
        }
    }
    Ok(())
}
