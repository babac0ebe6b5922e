//! The three scoring modes side by side on a small example.

use pillm::metrics::{self, MetricMode};
use pillm::timeseries::incidents_from_labels;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let labels = [0, 1, 1, 0, 0, 1, 1, 0];
    let flags = [0, 0, 1, 0, 1, 0, 0, 0];

    let incidents = incidents_from_labels(&labels);
    println!("incidents: {:?}", incidents.iter().map(|i| (i.start, i.end)).collect::<Vec<_>>());
    println!("counts: {:?}", metrics::confusion(&flags, &labels)?);
    println!("event counts: {:?}", metrics::event_counts(&flags, &labels)?);
    println!("point adjusted flags: {:?}", metrics::point_adjust(&flags, &incidents)?);

    for mode in [MetricMode::Pointwise, MetricMode::PointAdjusted, MetricMode::EventPa] {
        println!("{}", metrics::score(&flags, &labels, mode)?.summary_line());
    }
    Ok(())
}
