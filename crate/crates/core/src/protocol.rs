//! Monte Carlo run of the protocol loop: emission, detection, sampling,
//! error estimation and key-length accounting.
//!
//! Per-block outcomes are drawn from the exact distribution of
//! [`crate::oracle::channel_detection_stats`]. Error correction and privacy
//! amplification are charged in bits and never executed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bounds::{binary_entropy, phase_error_bound, EcCost};
use crate::oracle::{channel_detection_stats, DetectionStats};
use crate::record::Record;
use crate::source::{coherent_pchar, CoherentSourceSpec};
use crate::{Error, Result};

pub const DEFAULT_SAMPLE_FRACTION: f64 = 0.05;

pub const TALLY_CSV_HEADER: &str =
    "n_blocks,eta,mu,a_percent,seed,Q_hat,ebit_hat,sifted,ec_bits,pa_bits,key_bits,rate_per_pulse";

const STREAM_PATTERN: u64 = 0;
const STREAM_DETECTION: u64 = 1;
const STREAM_SAMPLING: u64 = 2;

const DIST_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProtocolConfig {
    pub n_blocks: u64,
    pub source: CoherentSourceSpec,
    pub eta: f64,
    pub misalignment_phase: f64,
    pub sample_fraction: f64,
    pub seed: u64,
    /// Extra probability of flipping Bob's bit on each detection, on top of
    /// what the misalignment produces.
    pub ebit_override: Option<f64>,
    pub ec: EcCost,
}

impl ProtocolConfig {
    pub fn new(n_blocks: u64, source: CoherentSourceSpec, eta: f64, seed: u64) -> Self {
        ProtocolConfig {
            n_blocks,
            source,
            eta,
            misalignment_phase: 0.0,
            sample_fraction: DEFAULT_SAMPLE_FRACTION,
            seed,
            ebit_override: None,
            ec: EcCost::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_blocks == 0 {
            return Err(Error::Validation("n_blocks must be at least 1".into()));
        }
        self.source.validate()?;
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(Error::domain("eta", self.eta, "(0, 1]"));
        }
        if !self.misalignment_phase.is_finite() {
            return Err(Error::domain(
                "misalignment_phase",
                self.misalignment_phase,
                "finite",
            ));
        }
        if !(self.sample_fraction > 0.0 && self.sample_fraction < 1.0) {
            return Err(Error::domain(
                "sample_fraction",
                self.sample_fraction,
                "(0, 1)",
            ));
        }
        if let Some(e) = self.ebit_override {
            if !(0.0..=1.0).contains(&e) {
                return Err(Error::domain("ebit_override", e, "[0, 1]"));
            }
        }
        if !(self.ec.efficiency >= 1.0 && self.ec.efficiency.is_finite()) {
            return Err(Error::domain(
                "ec_efficiency",
                self.ec.efficiency,
                "[1, inf)",
            ));
        }
        Ok(())
    }
}

/// Bob's outcome distribution for each of Alice's eight bit patterns:
/// `clicks[pattern][j − 1][k_B]`, with the remainder meaning no detection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OutcomeDistribution {
    clicks: [[[f64; 2]; 2]; 8],
}

impl OutcomeDistribution {
    pub fn new(clicks: [[[f64; 2]; 2]; 8]) -> Result<Self> {
        for (pattern, c) in clicks.iter().enumerate() {
            let flat = c.iter().flatten();
            if flat.clone().any(|p| p.is_nan() || *p < 0.0) {
                return Err(Error::Validation(format!(
                    "pattern {pattern}: negative or NaN probability"
                )));
            }
            let total: f64 = flat.sum();
            if total > 1.0 + DIST_TOL {
                return Err(Error::Validation(format!(
                    "pattern {pattern}: probabilities sum to {total}"
                )));
            }
        }
        Ok(OutcomeDistribution { clicks })
    }

    pub fn from_stats(stats: &DetectionStats) -> Result<Self> {
        Self::new(std::array::from_fn(|p| stats.per_pattern[p].clicks))
    }

    pub fn clicks(&self, pattern: usize) -> &[[f64; 2]; 2] {
        &self.clicks[pattern]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Detection {
    /// Time slot, 1 or 2.
    pub slot: u8,
    pub bob_bit: u8,
    /// `b_j ⊕ b_{j+1}`.
    pub alice_bit: u8,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockOutcome {
    pub bits: [u8; 3],
    pub detection: Option<Detection>,
}

/// Draws Alice's pattern from `pattern_rng` and Bob's outcome from
/// `detect_rng`.
///
/// The slot is drawn first and the bit second, from the conditional error
/// probability, so runs that differ only in error probabilities share their
/// detection events.
pub fn sample_block<R: Rng + ?Sized>(
    dist: &OutcomeDistribution,
    pattern_rng: &mut R,
    detect_rng: &mut R,
) -> BlockOutcome {
    let pattern = pattern_rng.random_range(0..8usize);
    let bits = [2, 1, 0].map(|s| ((pattern >> s) & 1) as u8);
    let c = &dist.clicks[pattern];
    let slot_mass = [c[0][0] + c[0][1], c[1][0] + c[1][1]];
    let u: f64 = detect_rng.random();
    let slot = if u < slot_mass[0] {
        1
    } else if u < slot_mass[0] + slot_mass[1] {
        2
    } else {
        return BlockOutcome {
            bits,
            detection: None,
        };
    };
    let alice_bit = bits[slot - 1] ^ bits[slot];
    let mass = slot_mass[slot - 1];
    let p_err = if mass > 0.0 {
        c[slot - 1][1 - alice_bit as usize] / mass
    } else {
        0.0
    };
    let err: bool = detect_rng.random::<f64>() < p_err;
    BlockOutcome {
        bits,
        detection: Some(Detection {
            slot: slot as u8,
            bob_bit: alice_bit ^ err as u8,
            alice_bit,
        }),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolTally {
    pub n_emitted: u64,
    pub n_detected: u64,
    /// Detections per `(j, k_B)`, indexed `[j − 1][k_B]`.
    pub clicks: [[u64; 2]; 2],
    pub n_sampled: u64,
    pub n_sample_errors: u64,
    /// Errors left in the unsampled key; not visible to Alice and Bob.
    pub n_sifted_errors: u64,
    pub sifted_length: u64,
    pub q_hat: f64,
    /// Sampled error rate; 0.5 when nothing was sampled.
    pub ebit_hat: f64,
    pub eph_upper: f64,
    pub ec_cost_bits: f64,
    pub pa_removed_bits: f64,
    pub final_key_bits: f64,
    pub no_detections: bool,
}

impl ProtocolTally {
    pub fn rate_per_pulse(&self) -> f64 {
        self.final_key_bits / (3.0 * self.n_emitted as f64)
    }

    pub fn to_record(&self) -> Record {
        let mut r = Record::new();
        r.set("n_emitted", self.n_emitted);
        r.set("n_detected", self.n_detected);
        for j in 0..2 {
            for k in 0..2 {
                r.set(&format!("clicks_{}{}", j + 1, k), self.clicks[j][k]);
            }
        }
        r.set("n_sampled", self.n_sampled);
        r.set("n_sample_errors", self.n_sample_errors);
        r.set("n_sifted_errors", self.n_sifted_errors);
        r.set("sifted_length", self.sifted_length);
        r.set("Q_hat", self.q_hat);
        r.set("ebit_hat", self.ebit_hat);
        r.set("eph_upper", self.eph_upper);
        r.set("ec_cost_bits", self.ec_cost_bits);
        r.set("pa_removed_bits", self.pa_removed_bits);
        r.set("final_key_bits", self.final_key_bits);
        r.set("rate_per_pulse", self.rate_per_pulse());
        r.set("no_detections", self.no_detections);
        r
    }

    /// Row matching [`TALLY_CSV_HEADER`].
    pub fn csv_row(&self, config: &ProtocolConfig) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            config.n_blocks,
            config.eta,
            config.source.mu,
            config.source.a,
            config.seed,
            self.q_hat,
            self.ebit_hat,
            self.sifted_length,
            self.ec_cost_bits,
            self.pa_removed_bits,
            self.final_key_bits,
            self.rate_per_pulse()
        )
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

pub fn run_protocol(config: &ProtocolConfig) -> Result<ProtocolTally> {
    config.validate()?;
    let stats = channel_detection_stats(&config.source, config.eta, config.misalignment_phase)?;
    let dist = OutcomeDistribution::from_stats(&stats)?;
    run_with_distribution(config, &dist)
}

/// The protocol loop with a caller-supplied outcome distribution.
pub fn run_with_distribution(
    config: &ProtocolConfig,
    dist: &OutcomeDistribution,
) -> Result<ProtocolTally> {
    config.validate()?;
    let mut pattern_rng = stream(config.seed, STREAM_PATTERN);
    let mut detect_rng = stream(config.seed, STREAM_DETECTION);
    let mut sample_rng = stream(config.seed, STREAM_SAMPLING);
    let flip = config.ebit_override.unwrap_or(0.0);

    let mut clicks = [[0u64; 2]; 2];
    let (mut n_detected, mut n_sampled, mut n_sample_errors, mut n_sifted_errors) = (0, 0, 0, 0);
    for _ in 0..config.n_blocks {
        let Some(d) = sample_block(dist, &mut pattern_rng, &mut detect_rng).detection else {
            continue;
        };
        let mut bob_bit = d.bob_bit;
        if flip > 0.0 && detect_rng.random::<f64>() < flip {
            bob_bit ^= 1;
        }
        n_detected += 1;
        clicks[d.slot as usize - 1][bob_bit as usize] += 1;
        let error = (bob_bit != d.alice_bit) as u64;
        if sample_rng.random::<f64>() < config.sample_fraction {
            n_sampled += 1;
            n_sample_errors += error;
        } else {
            n_sifted_errors += error;
        }
    }

    let sifted_length = n_detected - n_sampled;
    let q_hat = n_detected as f64 / config.n_blocks as f64;
    let ebit_hat = if n_sampled > 0 {
        n_sample_errors as f64 / n_sampled as f64
    } else {
        0.5
    };
    let mut tally = ProtocolTally {
        n_emitted: config.n_blocks,
        n_detected,
        clicks,
        n_sampled,
        n_sample_errors,
        n_sifted_errors,
        sifted_length,
        q_hat,
        ebit_hat,
        eph_upper: 1.0,
        ec_cost_bits: 0.0,
        pa_removed_bits: 0.0,
        final_key_bits: 0.0,
        no_detections: n_detected == 0,
    };
    if n_detected == 0 {
        return Ok(tally);
    }
    let stats = coherent_pchar(&config.source)?;
    let bound = phase_error_bound(q_hat, ebit_hat, &stats)?;
    let sifted = sifted_length as f64;
    tally.eph_upper = bound.eph_upper;
    tally.ec_cost_bits = sifted * config.ec.f_ec(ebit_hat);
    tally.pa_removed_bits = sifted * binary_entropy(bound.eph_upper)?;
    tally.final_key_bits = (sifted - tally.ec_cost_bits - tally.pa_removed_bits).max(0.0);
    Ok(tally)
}
