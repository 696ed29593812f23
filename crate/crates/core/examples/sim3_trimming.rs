//! A reduced Simulation III: weight extremity and the relative bias of
//! trimmed FIPTIW. Pass the replication count as the first argument.

use fiptiw::experiments::{run_sim3, GridConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let reps = std::env::args().nth(1).map_or(Ok(50), |a| a.parse())?;
    let grid: GridConfig = serde_json::from_str(
        r#"{"n": 100, "pairs": [["low", "low"], ["moderate", "moderate"]], "p_grid": [0.9, 0.95, 1.0]}"#,
    )?;
    let out = run_sim3(&grid, reps, 1, 1, false)?;
    println!("weight extremity");
    for e in &out.extremity {
        println!(
            "  {:<22} {:<7?} max {:>7.2}  %>5 {:>6.2}  %>10 {:>6.2}",
            e.scenario, e.kind, e.mean_max, e.mean_pct_over_5, e.mean_pct_over_10
        );
    }
    println!("relative bias");
    for row in &out.metrics.rows {
        if let Some(s) = row.summary {
            let stage = row.stage.map_or("-".to_string(), |st| format!("{st:?}"));
            let p = row
                .percentile
                .map_or("-".to_string(), |p| format!("{p:.2}"));
            println!(
                "  {:<22} {:<10} {stage:<6} {p:>4} {:>8.4}",
                row.scenario, row.method, s.relative_bias
            );
        }
    }
    Ok(())
}
