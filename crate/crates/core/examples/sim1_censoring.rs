//! A reduced Simulation I: sensitivity of FIPTIW and FIPTICW to informative
//! censoring. Pass the replication count as the first argument.

use fiptiw::experiments::{run_sim1, GridConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let reps = std::env::args().nth(1).map_or(Ok(50), |a| a.parse())?;
    let grid: GridConfig =
        serde_json::from_str(r#"{"n": 100, "eta": [[0.4, 0.0, 0.0], [0.4, 0.5, 0.6]]}"#)?;
    let out = run_sim1(&grid, reps, 1, 1, false)?;
    println!(
        "{:<30} {:<11} {:>8} {:>8}",
        "scenario", "method", "bias", "MSE"
    );
    for row in &out.metrics.rows {
        if let Some(s) = row.summary {
            println!(
                "{:<30} {:<11} {:>8.4} {:>8.4}",
                row.scenario, row.method, s.bias, s.mse
            );
        }
    }
    Ok(())
}
