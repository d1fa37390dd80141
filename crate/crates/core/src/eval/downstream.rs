// SPDX-License-Identifier: Apache-2.0

use super::netlist::{gemm_metrics, DownstreamParams, GemmMetrics, Netlist};
use super::{Artifacts, CellClasses, EvalInput, Evaluator, EvaluatorConfig, DOWNSTREAM};
use crate::gemm::GemmProfile;
use crate::model::{EvaluatorResult, Outcome};

/// GEMM-friendliness analysis of the synthesized netlist.
pub struct DownstreamEvaluator {
    classes: CellClasses,
}

impl DownstreamEvaluator {
    pub fn new(config: &EvaluatorConfig) -> Self {
        Self {
            classes: config.cell_classes.clone(),
        }
    }
}

pub fn params_for(profile: Option<&str>) -> DownstreamParams {
    profile
        .and_then(GemmProfile::by_id)
        .map(|p| p.downstream_params())
        .unwrap_or_default()
}

pub fn metrics_into_result(m: &GemmMetrics) -> EvaluatorResult {
    let mut r = EvaluatorResult::new(DOWNSTREAM, Outcome::Passed)
        .with_metric("mul_cells", m.mul_cells as f64)
        .with_metric("add_cells", m.add_cells as f64)
        .with_metric("dff_cells", m.dff_cells as f64)
        .with_metric("mux_cells", m.mux_cells as f64)
        .with_metric("bitwidth_hits", m.bitwidth_hits as f64)
        .with_metric("pipeline_depth_proxy", m.pipeline_depth_proxy as f64)
        .with_metric("downstream_score", m.downstream_score);
    if let Some(adp) = m.adp_proxy {
        r.insert_metric("adp_proxy", adp);
    }
    r
}

impl Evaluator for DownstreamEvaluator {
    fn name(&self) -> &str {
        DOWNSTREAM
    }

    fn evaluate(&self, input: &EvalInput<'_>, artifacts: &mut Artifacts) -> EvaluatorResult {
        let Some(path) = artifacts.netlist.clone() else {
            return super::unmet_dependency(DOWNSTREAM, "a synthesized netlist");
        };
        let netlist = match Netlist::load(&path) {
            Ok(n) => n,
            Err(e) => {
                return EvaluatorResult::new(DOWNSTREAM, Outcome::UnknownFailure).with_feedback(e)
            }
        };
        let params = params_for(input.task.heldout_profile.as_deref());
        match gemm_metrics(
            &netlist,
            &self.classes,
            &params,
            artifacts.metrics.get("cell_count").copied(),
            artifacts.metrics.get("abc_delay_proxy").copied(),
        ) {
            Ok(m) => metrics_into_result(&m),
            Err(e) => EvaluatorResult::new(DOWNSTREAM, Outcome::UnknownFailure).with_feedback(e),
        }
    }
}
