//! Flexible inverse probability of treatment and intensity weighting (FIPTIW)
//! for irregular longitudinal data.
//!
//! The crate fits the three weight models (observation intensity, treatment
//! propensity, censoring hazard), builds and trims the resulting weights,
//! solves the weighted independence GEE, and simulates the data-generating
//! mechanisms used to study these estimators.
//!
//! ```no_run
//! use fiptiw::prelude::*;
//!
//! let sim = gen_panel(&DgpSpec::default(), RngStream::new(1, 0, 0)).unwrap();
//! let panel = &sim.panel;
//! let denom = fit_ph(panel, &PhSpec::intensity(&["D", "G", "Z"])).unwrap();
//! let numer = fit_ph(panel, &PhSpec::intensity(&["D"])).unwrap();
//! let iiw = iiw_weights(&denom, Some(&numer), panel).unwrap();
//! let ps = fit_propensity(panel, "D", &["W"], true).unwrap();
//! let iptw = iptw_weights(&ps, panel).unwrap();
//! let w = combine(&[&iiw, &iptw]).unwrap();
//! let spec = OutcomeSpec::gaussian(&["D"]).with_offset(Offset::Linear { intercept: 2.0, slope: -1.0 });
//! let fit = solve_gee(panel, &spec, Some(&w)).unwrap();
//! println!("ATE = {}", fit.beta_hat[0]);
//! ```

pub mod cli;
pub mod error;
pub mod experiments;
pub mod gee;
pub mod panel;
pub mod simgen;
pub mod survival;
pub mod weights;

pub use error::{Error, Result};

pub mod prelude {
    pub use crate::gee::{solve_gee, Family, GeeFit, Offset, OutcomeSpec, SplineSpec};
    pub use crate::panel::{covariate_at, risk_table, EventSource, Panel, Subject};
    pub use crate::simgen::{gen_panel, CensoringSpec, DgpSpec, RngStream, TreatmentSpec};
    pub use crate::survival::{fit_censoring, fit_ph, PhSpec};
    pub use crate::weights::{
        combine, combine_trimmed, fit_propensity, iiw_weights, ipcw_weights, iptw_weights, trim,
        TrimStage, WeightKind, WeightSet,
    };
}
