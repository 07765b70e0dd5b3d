//! Exact detection statistics and virtual phase-error rate for coherent
//! pulses sent through a pure-loss channel into Bob's one-pulse-delay
//! interferometer.
//!
//! Each pulse is carried in its own three-mode register: the signal mode
//! that reaches a detected position, a loss environment and, for the outer
//! pulses, the discarded half pulse. The first half pulse ends up in slot 0
//! and the third pulse's delayed half in slot 3; both are traced out before
//! the one-photon projection. The interferometer phase offset `φ` enters as
//! a phase `(3 − i) φ` on the photon from pulse `i`, since each step in the
//! position basis differs by one pass through the delay arm.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::operators::{
    ab_index, build_error_operators, z_bit, QubitPhotonState, AB_DIM, A_DIM, B_DIM,
};
use crate::fock::{
    beam_splitter_modes, coherent_vector, cutoff_for_mean, tensor, FockOperator, FockVector,
    DEFAULT_CUTOFF,
};
use crate::source::CoherentSourceSpec;
use crate::{Error, Result};

const MAX_TAIL_MASS: f64 = super::block::MAX_TAIL_MASS;

/// Channel and source parameters for the exact model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelSetup {
    pub alpha0: Complex64,
    pub alpha1: Complex64,
    pub eta: f64,
    pub misalignment_phase: f64,
    pub cutoff: usize,
}

impl ChannelSetup {
    /// Nominal amplitudes of `spec`, with a cutoff of at least
    /// [`DEFAULT_CUTOFF`] and large enough for the nominal intensity.
    pub fn from_spec(spec: &CoherentSourceSpec, eta: f64, misalignment_phase: f64) -> Result<Self> {
        spec.validate()?;
        let (alpha0, alpha1) = spec.nominal_amplitudes();
        let cutoff = DEFAULT_CUTOFF.max(cutoff_for_mean(spec.mu));
        Self::new(alpha0, alpha1, eta, misalignment_phase, cutoff)
    }

    pub fn new(
        alpha0: Complex64,
        alpha1: Complex64,
        eta: f64,
        misalignment_phase: f64,
        cutoff: usize,
    ) -> Result<Self> {
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::domain("eta", eta, "(0, 1]"));
        }
        if !misalignment_phase.is_finite() {
            return Err(Error::domain(
                "misalignment_phase",
                misalignment_phase,
                "finite",
            ));
        }
        for alpha in [alpha0, alpha1] {
            let tail_mass = 1.0 - coherent_vector(alpha, cutoff).norm_sqr();
            if tail_mass > MAX_TAIL_MASS {
                return Err(Error::Truncation {
                    cutoff,
                    tail_mass,
                    limit: MAX_TAIL_MASS,
                });
            }
        }
        Ok(ChannelSetup {
            alpha0,
            alpha1,
            eta,
            misalignment_phase,
            cutoff,
        })
    }

    /// Pushes a single-mode pulse state into the three-mode register of
    /// pulse `i` (1-based) at Bob's detectors.
    fn propagate(&self, pulse: &FockVector, i: usize) -> Result<FockVector> {
        let vac = FockVector::vacuum(self.cutoff, 1);
        let joint = tensor(&[pulse.clone(), vac.clone(), vac])?;
        let mut joint = beam_splitter_modes(&joint, 0, 1, self.eta)?;
        if i != 2 {
            joint = beam_splitter_modes(&joint, 0, 2, 0.5)?;
        }
        joint.phase_shift(0, (3 - i) as f64 * self.misalignment_phase)
    }

    /// `Tr_env |u⟩⟨v|` on the signal mode of pulse `i`, restricted to
    /// photon numbers 0 and 1.
    fn signal_block(
        &self,
        u: &FockVector,
        v: &FockVector,
        i: usize,
    ) -> Result<[[Complex64; 2]; 2]> {
        let pu = self.propagate(u, i)?;
        let pv = if u == v {
            pu.clone()
        } else {
            self.propagate(v, i)?
        };
        let rho: FockOperator = pu.reduced_cross(&pv, &[0])?;
        Ok([
            [rho.entry(0, 0), rho.entry(0, 1)],
            [rho.entry(1, 0), rho.entry(1, 1)],
        ])
    }
}

/// Bob's outcome probabilities for one bit pattern of Alice.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PatternOutcome {
    /// `(b1, b2, b3)`.
    pub bits: [u8; 3],
    /// `Pr{(j, k_B)}` indexed `[j − 1][k_B]`.
    pub clicks: [[f64; 2]; 2],
}

impl PatternOutcome {
    /// Probability of a detected event.
    pub fn detection(&self) -> f64 {
        self.clicks.iter().flatten().sum()
    }

    /// Alice's raw bit `b_j ⊕ b_{j+1}` for slot `j`.
    pub fn alice_bit(&self, j: usize) -> u8 {
        self.bits[j - 1] ^ self.bits[j]
    }

    /// Probability of a detected event whose bit disagrees with Alice's.
    pub fn error(&self) -> f64 {
        (1..=2)
            .map(|j| self.clicks[j - 1][1 - self.alice_bit(j) as usize])
            .sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectionStats {
    pub q: f64,
    pub ebit: f64,
    /// Indexed by pattern `4 b1 + 2 b2 + b3`.
    pub per_pattern: [PatternOutcome; 8],
}

/// Density on `B` of the event "exactly one photon among the detected
/// positions", built from per-pulse `{0,1}`-photon blocks.
fn one_photon_entry(blocks: [&[[Complex64; 2]; 2]; 3], p: usize, q: usize) -> Complex64 {
    (1..=3)
        .map(|i| blocks[i - 1][(i == p) as usize][(i == q) as usize])
        .product()
}

/// Exact `(Q, e_bit)` with Alice's bits uniform over the eight patterns.
pub fn channel_detection_stats(
    spec: &CoherentSourceSpec,
    eta: f64,
    misalignment_phase: f64,
) -> Result<DetectionStats> {
    channel_detection_stats_for(&ChannelSetup::from_spec(spec, eta, misalignment_phase)?)
}

pub fn channel_detection_stats_for(setup: &ChannelSetup) -> Result<DetectionStats> {
    let ops = build_error_operators();
    let states = [
        coherent_vector(setup.alpha0, setup.cutoff),
        coherent_vector(setup.alpha1, setup.cutoff),
    ];
    // blocks[i - 1][b]
    let mut blocks = Vec::with_capacity(3);
    for i in 1..=3 {
        blocks.push([
            setup.signal_block(&states[0], &states[0], i)?,
            setup.signal_block(&states[1], &states[1], i)?,
        ]);
    }

    let per_pattern: [PatternOutcome; 8] = std::array::from_fn(|pattern| {
        let bits = [1, 2, 3].map(|i| z_bit(pattern, i) as u8);
        let chosen = [1, 2, 3].map(|i| &blocks[i - 1][bits[i - 1] as usize]);
        let m = DMatrix::from_fn(B_DIM, B_DIM, |r, c| one_photon_entry(chosen, r + 1, c + 1));
        let clicks = [1, 2].map(|j| {
            [0, 1].map(|k| {
                let v = ops.povm_vector(j, k);
                (v.adjoint() * &m * v)[(0, 0)].re
            })
        });
        PatternOutcome { bits, clicks }
    });

    let q = per_pattern
        .iter()
        .map(PatternOutcome::detection)
        .sum::<f64>()
        / 8.0;
    let errors = per_pattern.iter().map(PatternOutcome::error).sum::<f64>() / 8.0;
    let ebit = if q > 0.0 { errors / q } else { 0.0 };
    Ok(DetectionStats {
        q,
        ebit,
        per_pattern,
    })
}

#[derive(Clone, Debug)]
pub struct PhaseErrorResult {
    /// `tr(σ ê_ph)` for the normalized `σ`.
    pub eph: f64,
    /// The normalized post-detection state on `A ⊗ B`.
    pub sigma: QubitPhotonState,
    /// Trace of the unnormalized state, equal to the detection rate.
    pub q: f64,
    /// `tr(σ ê_bit)`, the bit error rate seen from the virtual protocol.
    pub ebit: f64,
}

/// Exact phase-error rate of the virtual protocol for the coherent model.
pub fn exact_phase_error(
    spec: &CoherentSourceSpec,
    eta: f64,
    misalignment_phase: f64,
    cutoff: usize,
) -> Result<PhaseErrorResult> {
    spec.validate()?;
    let (alpha0, alpha1) = spec.nominal_amplitudes();
    exact_phase_error_for(&ChannelSetup::new(
        alpha0,
        alpha1,
        eta,
        misalignment_phase,
        cutoff,
    )?)
}

pub fn exact_phase_error_for(setup: &ChannelSetup) -> Result<PhaseErrorResult> {
    let ops = build_error_operators();
    let u = coherent_vector(setup.alpha0, setup.cutoff);
    let v = coherent_vector(setup.alpha1, setup.cutoff);
    let half = Complex64::new(0.5, 0.0);
    // Z-basis branches (|α0⟩ ± |α1⟩) / 2 of each pulse.
    let branches = [
        u.add_scaled(&v, Complex64::new(1.0, 0.0))?.scaled(half),
        u.add_scaled(&v, Complex64::new(-1.0, 0.0))?.scaled(half),
    ];

    // blocks[i - 1][z][z']
    let mut blocks = Vec::with_capacity(3);
    for i in 1..=3 {
        let mut per = [[[[Complex64::new(0.0, 0.0); 2]; 2]; 2]; 2];
        for (z, bz) in branches.iter().enumerate() {
            for (zp, bzp) in branches.iter().enumerate() {
                per[z][zp] = setup.signal_block(bz, bzp, i)?;
            }
        }
        blocks.push(per);
    }

    let mut matrix = DMatrix::from_element(AB_DIM, AB_DIM, Complex64::new(0.0, 0.0));
    for z in 0..A_DIM {
        for zp in 0..A_DIM {
            let chosen = [1, 2, 3].map(|i| &blocks[i - 1][z_bit(z, i)][z_bit(zp, i)]);
            for p in 1..=B_DIM {
                for pp in 1..=B_DIM {
                    matrix[(ab_index(z, p), ab_index(zp, pp))] = one_photon_entry(chosen, p, pp);
                }
            }
        }
    }
    let q = matrix.trace().re;
    if q <= 0.0 {
        return Err(Error::NoDetections);
    }
    let sigma = QubitPhotonState::new(matrix / Complex64::new(q, 0.0), 1.0)?;
    Ok(PhaseErrorResult {
        eph: sigma.expect(ops.e_ph()),
        ebit: sigma.expect(ops.e_bit()),
        sigma,
        q,
    })
}
