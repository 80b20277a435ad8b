//! Estimators and statistical checks tying the simulation to the
//! analytic predictions: speed, the covariance identity, regeneration
//! gap structure, uniform moment bands, the rescaled-process pipeline,
//! and the distributional validation of the tree decomposition.

mod config;
mod processes;
mod scaling;
mod validate;
mod walks;

pub use config::{BaseLaw, ExperimentConfig, ScheduleEntry};
pub use processes::{build_rescaled_processes, RescaledProcesses, StepTrace};
pub use scaling::{kappa_convergence_table, scaling_limit_check, KappaRow, ScalingResult, ScalingRow};
pub use validate::{
    duality_check, escape_probability_check, level_statistics_check, trap_displacement_check,
    trap_time_check, DualityResult, EscapeResult, LevelStatsResult, TrapDisplacementResult,
    TrapTimeResult,
};
pub use walks::{
    estimate_covariance, estimate_speed, moment_bands, regen_stats, CovarianceResult,
    MomentBandResult, RegenStatsResult, SpeedResult,
};

use serde::Serialize;

/// One pass/fail line of an experiment.
#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    pub metric: String,
    pub estimate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub se: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<f64>,
    pub tolerance: String,
    pub pass: bool,
}

impl Verdict {
    pub fn within_3se(metric: impl Into<String>, estimate: f64, se: f64, reference: f64) -> Self {
        Self {
            metric: metric.into(),
            estimate,
            se: Some(se),
            reference: Some(reference),
            tolerance: "3 se".into(),
            pass: (estimate - reference).abs() <= 3.0 * se,
        }
    }

    pub fn within_relative(
        metric: impl Into<String>,
        estimate: f64,
        reference: f64,
        rel: f64,
    ) -> Self {
        Self {
            metric: metric.into(),
            estimate,
            se: None,
            reference: Some(reference),
            tolerance: format!("{:.0}% relative", rel * 100.0),
            pass: (estimate - reference).abs() <= rel * reference.abs(),
        }
    }

    pub fn boolean(metric: impl Into<String>, estimate: f64, pass: bool, tol: impl Into<String>) -> Self {
        Self {
            metric: metric.into(),
            estimate,
            se: None,
            reference: None,
            tolerance: tol.into(),
            pass,
        }
    }
}

pub fn all_pass(verdicts: &[Verdict]) -> bool {
    verdicts.iter().all(|v| v.pass)
}

/// Offsets replica ids per grid point so no two grid points share an
/// rng stream under one master seed.
pub(crate) fn replica_id(grid_index: usize, replica: usize) -> u64 {
    ((grid_index as u64) << 32) | replica as u64
}
