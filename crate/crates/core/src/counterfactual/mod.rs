//! Abduction, action and prediction over fitted structural causal models.

mod effects;
mod engine;

pub use effects::{
    cate_by_group, cate_from_ite, effects_from_counterfactual, ensemble_ite, ensemble_run,
    estimate_ate, fairness_audit, flip_treatment, median, pehe, Aggregate, EffectEstimate,
    FairnessReport, GroupEffect, GroupGap,
};
pub use engine::{attribute_exogenous, counterfactual, counterfactual_row, Intervention};
