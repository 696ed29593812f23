//! Cubic B-spline basis at tertile knots, as used for the time trend of the
//! binary outcome model.

use fiptiw::gee::{spline_basis, tertile_knots};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let times: Vec<f64> = (0..=20).map(|k| 182.5 * k as f64 / 20.0).collect();
    let knots = tertile_knots(&times)?;
    println!("interior knots: {knots:.2?}");
    let basis = spline_basis(&times, &knots, (0.0, 182.5))?;
    for (t, row) in times.iter().zip(&basis).step_by(4) {
        let sum: f64 = row.iter().sum();
        println!("t = {t:>6.1}  {row:.3?}  sum {sum:.3}");
    }
    Ok(())
}
