//! Group-conditional calibration, counterfactual weights and the
//! two-censoring-time adaptation.

mod counterfactual;
mod mondrian;
mod two_censoring;

pub use counterfactual::{conformalize_counterfactual, counterfactual_weight, PropensitySpec, TreatmentRecord};
pub use mondrian::{conformalize_mondrian, mondrian_eta, GroupPartition, GroupRule, MondrianModel};
pub use two_censoring::{two_censoring_adapt, TwoCensoringRecord};
