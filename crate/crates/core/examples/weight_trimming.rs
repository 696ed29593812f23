//! Percentile trimming of FIPTIW weights, applied to each factor before
//! multiplying or to the product afterwards.

use fiptiw::prelude::*;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // Strongly informative treatment and observation processes produce
    // extreme weights.
    let spec = DgpSpec {
        n: 100,
        treatment: TreatmentSpec::Logistic {
            alpha0: 0.0,
            alpha1: 3.5,
        },
        gamma: [0.5, 0.3, -0.75],
        ..DgpSpec::default()
    };
    let sim = gen_panel(&spec, RngStream::new(5, 0, 0))?;
    let panel = &sim.panel;
    let iiw = iiw_weights(
        &fit_ph(panel, &PhSpec::intensity(&["D", "G", "Z"]))?,
        Some(&fit_ph(panel, &PhSpec::intensity(&["D"]))?),
        panel,
    )?;
    let iptw = iptw_weights(&fit_propensity(panel, "D", &["W"], true)?, panel)?;
    let raw = combine(&[&iiw, &iptw])?;
    let s = raw.summary();
    println!(
        "untrimmed: max {:.2}, {:.1}% > 5, {:.1}% > 10",
        s.max, s.pct_over_5, s.pct_over_10
    );

    let outcome = OutcomeSpec::gaussian(&["D"]).with_offset(Offset::Linear {
        intercept: 2.0,
        slope: -1.0,
    });
    println!(
        "{:>5} {:>8} {:>10} {:>8} {:>8}",
        "p", "stage", "threshold", "trimmed", "ATE"
    );
    for p in [1.0, 0.99, 0.95, 0.9] {
        for stage in [TrimStage::Before, TrimStage::After] {
            let w = combine_trimmed(&[&iiw, &iptw], p, stage)?;
            let ate = solve_gee(panel, &outcome, Some(&w))?.beta_hat[0];
            let (threshold, n) = match w.trim_record() {
                Some(r) => (format!("{:.3}", r.threshold), r.n_trimmed.to_string()),
                None => ("per factor".into(), "-".into()),
            };
            println!("{p:>5.2} {stage:>8?} {threshold:>10} {n:>8} {ate:>8.4}");
        }
    }
    Ok(())
}
