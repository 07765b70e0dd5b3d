//! Exact verification of the phase-error machinery.
//!
//! The oracle never goes through the closed-form pipeline in
//! [`crate::bounds`] for the quantities it checks: probabilities are computed
//! from explicit truncated Fock-space states and from the error operators
//! built here, then compared against the bound formulas.
//!
//! Coherent sources are pure, so the purifying systems of the virtual state
//! are trivial and omitted. Mixed sources would need explicit purification
//! registers, which this module does not model.

mod block;
mod channel;
mod operators;

pub use block::{
    block_joint_distribution, verify_weight_bounds, BlockJointDistribution, WeightBoundReport,
};
pub use channel::{
    channel_detection_stats, channel_detection_stats_for, exact_phase_error, exact_phase_error_for,
    ChannelSetup, DetectionStats, PatternOutcome, PhaseErrorResult,
};
pub use operators::{
    ab_index, build_error_operators, check_phase_bit_relation, random_density, ErrorOperatorSet,
    QubitPhotonState, RelationCheck, AB_DIM, A_DIM, B_DIM, DETECTION_WEIGHTS,
};

/// Absolute slack allowed when asserting an inequality between probabilities.
pub const SLACK_TOL: f64 = 1e-9;

/// One checked relation `lhs ≤ rhs`, passing when `lhs ≤ rhs + tolerance`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundCheck {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub tolerance: f64,
}

impl BoundCheck {
    pub fn new(name: impl Into<String>, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        BoundCheck {
            name: name.into(),
            lhs,
            rhs,
            tolerance,
        }
    }

    pub fn slack(&self) -> f64 {
        self.rhs - self.lhs
    }

    pub fn passed(&self) -> bool {
        self.lhs <= self.rhs + self.tolerance
    }

    /// `name lhs rhs slack PASS|FAIL`, whitespace separated.
    pub fn report_line(&self) -> String {
        format!(
            "{:<40} {:>24e} {:>24e} {:>24e} {}",
            self.name,
            self.lhs,
            self.rhs,
            self.slack(),
            if self.passed() { "PASS" } else { "FAIL" }
        )
    }
}
