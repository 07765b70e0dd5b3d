//! Light-source models and their characterized photon statistics.

use num_complex::Complex64;

use crate::fock::FockOperator;
use crate::record::Record;
use crate::{Error, Result};

/// Record keys, in serialization order.
pub const PHOTON_STATS_KEYS: [&str; 7] = ["pL0", "pU0", "pL1", "pU1", "q1", "q2", "q3"];

const ORDER_TOL: f64 = 1e-12;

/// The characterized source parameters: vacuum-emission bounds per bit value
/// and upper bounds on the tail of the total photon number in a block.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhotonStats {
    pub p_l0: f64,
    pub p_u0: f64,
    pub p_l1: f64,
    pub p_u1: f64,
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
}

impl PhotonStats {
    pub fn new(
        p_l0: f64,
        p_u0: f64,
        p_l1: f64,
        p_u1: f64,
        q1: f64,
        q2: f64,
        q3: f64,
    ) -> Result<Self> {
        let stats = PhotonStats {
            p_l0,
            p_u0,
            p_l1,
            p_u1,
            q1,
            q2,
            q3,
        };
        stats.validate()?;
        Ok(stats)
    }

    pub fn validate(&self) -> Result<()> {
        for (key, value) in PHOTON_STATS_KEYS.iter().zip(self.values()) {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::Validation(format!(
                    "{key} = {value} is not a probability"
                )));
            }
        }
        if self.p_l0 > self.p_u0 + ORDER_TOL || self.p_l1 > self.p_u1 + ORDER_TOL {
            return Err(Error::Validation(
                "vacuum lower bound exceeds the upper bound".into(),
            ));
        }
        if self.q2 > self.q1 + ORDER_TOL || self.q3 > self.q2 + ORDER_TOL {
            return Err(Error::Validation(format!(
                "tail bounds are not nested: q1={} q2={} q3={}",
                self.q1, self.q2, self.q3
            )));
        }
        Ok(())
    }

    pub fn values(&self) -> [f64; 7] {
        [
            self.p_l0, self.p_u0, self.p_l1, self.p_u1, self.q1, self.q2, self.q3,
        ]
    }

    /// Exchanges the roles of the two bit values.
    pub fn swapped(&self) -> Self {
        PhotonStats {
            p_l0: self.p_l1,
            p_u0: self.p_u1,
            p_l1: self.p_l0,
            p_u1: self.p_u0,
            ..*self
        }
    }

    pub fn to_record(&self) -> Record {
        let mut r = Record::new();
        for (key, value) in PHOTON_STATS_KEYS.iter().zip(self.values()) {
            r.set(key, value);
        }
        r
    }

    pub fn from_record(record: &Record) -> Result<Self> {
        let v: Vec<f64> = PHOTON_STATS_KEYS
            .iter()
            .map(|k| record.require(k))
            .collect::<Result<_>>()?;
        PhotonStats::new(v[0], v[1], v[2], v[3], v[4], v[5], v[6])
    }
}

/// Coherent pulses whose intensities may drift by `a` percent around `mu`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoherentSourceSpec {
    pub mu: f64,
    /// Fluctuation in percent.
    pub a: f64,
    /// Encode the bit in the sign of the amplitude, `(−1)^b √μ_b`, rather
    /// than using `+√μ_b` for both values.
    pub phase_encoded: bool,
}

impl CoherentSourceSpec {
    pub fn new(mu: f64, a: f64, phase_encoded: bool) -> Result<Self> {
        let spec = CoherentSourceSpec {
            mu,
            a,
            phase_encoded,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::domain("mu", self.mu, "(0, inf)"));
        }
        if !(self.a >= 0.0 && 1.0 - 0.01 * self.a > 0.0) {
            return Err(Error::domain("a", self.a, "[0, 100)"));
        }
        Ok(())
    }

    /// Smallest intensity compatible with the fluctuation range.
    pub fn mu_min(&self) -> f64 {
        (1.0 - 0.01 * self.a) * self.mu
    }

    /// Largest intensity compatible with the fluctuation range.
    pub fn mu_max(&self) -> f64 {
        (1.0 + 0.01 * self.a) * self.mu
    }

    /// Amplitudes `(α_0, α_1)` emitted at the nominal intensity.
    pub fn nominal_amplitudes(&self) -> (Complex64, Complex64) {
        self.amplitudes(self.mu, self.mu)
    }

    pub fn amplitudes(&self, mu0: f64, mu1: f64) -> (Complex64, Complex64) {
        let sign = if self.phase_encoded { -1.0 } else { 1.0 };
        (
            Complex64::new(mu0.sqrt(), 0.0),
            Complex64::new(sign * mu1.sqrt(), 0.0),
        )
    }
}

/// `P(N ≥ n)` for `N ~ Poisson(mean)`, summed from `n` upward until the
/// relative term drops below 1e-16.
pub fn poisson_upper_tail(mean: f64, n: u32) -> f64 {
    if mean <= 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    if n == 0 {
        return 1.0;
    }
    // log of the mass at n
    let log_pn = -mean + n as f64 * mean.ln() - ln_factorial(n);
    let mut term = log_pn.exp();
    let mut sum = term;
    let mut k = n;
    while term > 1e-16 * sum {
        k += 1;
        term *= mean / k as f64;
        sum += term;
    }
    sum.min(1.0)
}

fn ln_factorial(n: u32) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// Closed-form statistics for fluctuating coherent pulses.
pub fn coherent_pchar(spec: &CoherentSourceSpec) -> Result<PhotonStats> {
    spec.validate()?;
    let p_upper = (-spec.mu_min()).exp();
    let p_lower = (-spec.mu_max()).exp();
    let block_mean = 3.0 * spec.mu_max();
    PhotonStats::new(
        p_lower,
        p_upper,
        p_lower,
        p_upper,
        poisson_upper_tail(block_mean, 1),
        poisson_upper_tail(block_mean, 2),
        poisson_upper_tail(block_mean, 3),
    )
}

const TRACE_TOL: f64 = 1e-9;
const PSD_TOL: f64 = 1e-10;
const HERMITIAN_TOL: f64 = 1e-10;

fn validate_density(name: &str, rho: &FockOperator) -> Result<()> {
    if rho.modes() != 1 {
        return Err(Error::Shape(format!(
            "{name} must be a single-mode operator"
        )));
    }
    if !rho.is_hermitian(HERMITIAN_TOL) {
        return Err(Error::Validation(format!("{name} is not Hermitian")));
    }
    let trace = rho.trace();
    if (trace.re - 1.0).abs() > TRACE_TOL || trace.im.abs() > TRACE_TOL {
        return Err(Error::Validation(format!("{name} has trace {trace}")));
    }
    let min_ev = rho.hermitian_eigenvalues()[0];
    if min_ev < -PSD_TOL {
        return Err(Error::Validation(format!(
            "{name} has negative eigenvalue {min_ev:e}"
        )));
    }
    Ok(())
}

/// Exact statistics of a given pair of single-mode density operators.
///
/// Vacuum bounds collapse to point values. Each tail bound is the maximum
/// over all eight bit patterns of the block.
pub fn exact_pchar(rho0: &FockOperator, rho1: &FockOperator) -> Result<PhotonStats> {
    validate_density("rho0", rho0)?;
    validate_density("rho1", rho1)?;
    if rho0.cutoff() != rho1.cutoff() {
        return Err(Error::Shape("rho0 and rho1 use different cutoffs".into()));
    }
    let pops = [rho0.populations(), rho1.populations()];
    let mut q = [0.0f64; 3];
    for pattern in 0..8u8 {
        let dist = block_photon_distribution([
            &pops[(pattern >> 2 & 1) as usize],
            &pops[(pattern >> 1 & 1) as usize],
            &pops[(pattern & 1) as usize],
        ]);
        for (n, qn) in q.iter_mut().enumerate() {
            // Upper tail summed directly to avoid 1 − CDF cancellation.
            let tail: f64 = dist[n + 1..].iter().sum();
            *qn = qn.max(tail);
        }
    }
    let p0 = pops[0][0].clamp(0.0, 1.0);
    let p1 = pops[1][0].clamp(0.0, 1.0);
    PhotonStats::new(
        p0,
        p0,
        p1,
        p1,
        q[0].clamp(0.0, 1.0),
        q[1].clamp(0.0, 1.0),
        q[2].clamp(0.0, 1.0),
    )
}

/// Total photon-number distribution of three independent pulses.
pub(crate) fn block_photon_distribution(pulses: [&[f64]; 3]) -> Vec<f64> {
    let mut acc = vec![1.0];
    for pops in pulses {
        let mut next = vec![0.0; acc.len() + pops.len() - 1];
        for (i, a) in acc.iter().enumerate() {
            for (j, p) in pops.iter().enumerate() {
                next[i + j] += a * p.max(0.0);
            }
        }
        acc = next;
    }
    acc
}

/// `t = max{(√pU0 − √pL1)², (√pL0 − √pU1)²} / 4`.
pub fn t_param(stats: &PhotonStats) -> f64 {
    let a = (stats.p_u0.sqrt() - stats.p_l1.sqrt()).powi(2);
    let b = (stats.p_l0.sqrt() - stats.p_u1.sqrt()).powi(2);
    a.max(b) / 4.0
}
