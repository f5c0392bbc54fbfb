//! Experiment orchestration: counter-example verification, the property
//! suite, and the desk-scale fitting and generalization runs.

mod counterexamples;
mod experiments;
mod output;
mod suite;

pub use counterexamples::{
    enumerate_feasible, verify_counterexamples, verify_pair, CORPUS_DIGEST, GNN_DRAWS,
};
pub use experiments::{
    desk_fit_instances, desk_milcqp_instances, fixed_structure_split, label_instances, median,
    run_fit, run_generalization, small_milcqp_config, FitReport, FitRun, FitSpec,
    GeneralizationReport, GeneralizationRow, GeneralizationSpec, SplitManifest, Task,
};
pub use output::{write_rows, Format};
pub use suite::{
    degenerate_lcqp, gradient_check, averaging_triple, min_norm_perturbation, optimal_lcqps,
    run_property_suite, GradientCheck,
};

use serde::Serialize;

/// One named pass/fail entry.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Report {
    pub checks: Vec<Check>,
}

impl Report {
    pub fn push(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        });
    }

    pub fn extend(&mut self, other: Report) {
        self.checks.extend(other.checks);
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}
