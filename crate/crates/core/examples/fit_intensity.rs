//! Fits the Andersen–Gill intensity model of the observation process and the
//! Cox model of the censoring hazard on one simulated panel.

use fiptiw::prelude::*;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = DgpSpec {
        n: 200,
        ..DgpSpec::default()
    };
    let sim = gen_panel(&spec, RngStream::new(7, 0, 0))?;
    let panel = &sim.panel;
    println!(
        "{} subjects, {} observations",
        panel.len(),
        panel.n_observations()
    );

    let fit = fit_ph(panel, &PhSpec::intensity(&["D", "G", "Z"]))?;
    println!("intensity (true gamma = {:?})", spec.gamma);
    for (name, g) in fit.covariates.iter().zip(&fit.gamma_hat) {
        println!("  {name:>2}: {g:+.4}");
    }
    println!(
        "  Newton iterations: {}, log PL: {:.3}",
        fit.iterations, fit.log_partial_likelihood
    );

    let cens = fit_censoring(panel, &["D", "W", "Z"])?;
    println!("censoring hazard (uniform censoring, true eta = 0)");
    for (name, e) in cens.covariates().iter().zip(cens.eta_hat()) {
        println!("  {name:>2}: {e:+.4}");
    }
    Ok(())
}
