//! A reduced Simulation II: bias of the IIW estimator for every subset of
//! intensity covariates. Pass the replication count as the first argument.

use fiptiw::experiments::{run_sim2, GridConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let reps = std::env::args().nth(1).map_or(Ok(50), |a| a.parse())?;
    let grid: GridConfig = serde_json::from_str(r#"{"n": 100, "points": [[0.3, 2.0]]}"#)?;
    let out = run_sim2(&grid, reps, 1, 1, false)?;
    println!("{:<8} {:>8} {:>8} {:>8}", "subset", "bias", "var", "MSE");
    for row in &out.metrics.rows {
        if let Some(s) = row.summary {
            let var = s.variance.unwrap_or(f64::NAN);
            println!(
                "{:<8} {:>8.4} {:>8.4} {:>8.4}",
                row.method, s.bias, var, s.mse
            );
        }
    }
    Ok(())
}
