//! Logistic propensity model fitted by IRLS and the resulting inverse
//! probability of treatment weights.

use fiptiw::prelude::*;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = DgpSpec {
        n: 2000,
        treatment: TreatmentSpec::Logistic {
            alpha0: -1.0,
            alpha1: 1.0,
        },
        ..DgpSpec::default()
    };
    let sim = gen_panel(&spec, RngStream::new(11, 0, 0))?;
    let ps = fit_propensity(&sim.panel, "D", &["W"], true)?;
    println!("true alpha = (-1, 1)");
    for (term, a) in ps.terms.iter().zip(&ps.alpha_hat) {
        println!("  {term:>12}: {a:+.4}");
    }
    println!(
        "IRLS iterations: {}, deviance {:.3}",
        ps.iterations, ps.deviance
    );

    let w = iptw_weights(&ps, &sim.panel)?;
    let s = w.summary();
    println!(
        "IPTW over {} observations: max {:.3}, {:.2}% above 5",
        w.len(),
        s.max,
        s.pct_over_5
    );
    Ok(())
}
