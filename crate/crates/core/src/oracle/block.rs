//! Joint distribution of the block photon number and the Hamming weight of
//! Alice's Z string, and the chain of bounds derived from it.

use num_complex::Complex64;

use super::{BoundCheck, SLACK_TOL};
use crate::bounds::s_bounds_raw;
use crate::fock::{coherent_vector, FockOperator, FockVector};
use crate::source::{exact_pchar, t_param, PhotonStats};
use crate::{Error, Result};

/// Largest per-pulse probability mass allowed beyond the cutoff.
pub const MAX_TAIL_MASS: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct BlockJointDistribution {
    cutoff: usize,
    /// `Pr{n_j = n, z_j = z}` for one pulse, indexed `[z][n]`.
    per_pulse: [Vec<f64>; 2],
    /// `Pr{n_block = n, wt(z) = a}`, indexed `[n][a]`.
    table: Vec<[f64; 4]>,
}

impl BlockJointDistribution {
    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn table(&self) -> &[[f64; 4]] {
        &self.table
    }

    /// `Pr{n_block = n, wt(z) = a}`, zero beyond the table.
    pub fn joint(&self, n: usize, a: usize) -> f64 {
        self.table.get(n).map_or(0.0, |row| row[a])
    }

    /// `Pr{n_j = n, z_j = z}`.
    pub fn pulse(&self, n: usize, z: usize) -> f64 {
        self.per_pulse[z].get(n).copied().unwrap_or(0.0)
    }

    /// `Pr{z_j = 1}`.
    pub fn pulse_flip_probability(&self) -> f64 {
        self.per_pulse[1].iter().sum()
    }

    /// `Pr{wt(z) = a}`.
    pub fn weight_marginal(&self, a: usize) -> f64 {
        self.table.iter().map(|row| row[a]).sum()
    }

    /// `Pr{n_block = n}`.
    pub fn photon_marginal(&self, n: usize) -> f64 {
        self.table.get(n).map_or(0.0, |row| row.iter().sum())
    }

    pub fn total(&self) -> f64 {
        self.table.iter().flatten().sum()
    }
}

fn truncated(alpha: Complex64, cutoff: usize) -> Result<FockVector> {
    let v = coherent_vector(alpha, cutoff);
    let tail_mass = 1.0 - v.norm_sqr();
    if tail_mass > MAX_TAIL_MASS {
        return Err(Error::Truncation {
            cutoff,
            tail_mass,
            limit: MAX_TAIL_MASS,
        });
    }
    Ok(v)
}

/// Exact table for a block of three pulses carrying `|α0⟩` or `|α1⟩`.
///
/// Each pulse of the virtual state is `½ Σ_z |z⟩ (|α0⟩ + (−1)^z |α1⟩)`, so
/// `Pr{n_j = n, z_j = z} = |⟨n|α0⟩ + (−1)^z ⟨n|α1⟩|² / 4`.
pub fn block_joint_distribution(
    alpha0: Complex64,
    alpha1: Complex64,
    cutoff: usize,
) -> Result<BlockJointDistribution> {
    let u = truncated(alpha0, cutoff)?;
    let v = truncated(alpha1, cutoff)?;
    let per_pulse = [1.0, -1.0].map(|sign| {
        u.amplitudes()
            .iter()
            .zip(v.amplitudes())
            .map(|(a, b)| (a + b * sign).norm_sqr() / 4.0)
            .collect::<Vec<f64>>()
    });

    // (n, z) pairs of independent pulses convolve into (n_block, wt).
    let mut table = vec![[0.0f64; 4]; 1];
    table[0][0] = 1.0;
    for _ in 0..3 {
        let mut next = vec![[0.0f64; 4]; table.len() + cutoff];
        for (n, row) in table.iter().enumerate() {
            for (a, &p) in row.iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                for (m, (&p0, &p1)) in per_pulse[0].iter().zip(&per_pulse[1]).enumerate() {
                    next[n + m][a] += p * p0;
                    if a < 3 {
                        next[n + m][a + 1] += p * p1;
                    }
                }
            }
        }
        table = next;
    }

    Ok(BlockJointDistribution {
        cutoff,
        per_pulse,
        table,
    })
}

#[derive(Clone, Debug)]
pub struct WeightBoundReport {
    pub alpha0: Complex64,
    pub alpha1: Complex64,
    pub stats: PhotonStats,
    pub t: f64,
    pub checks: Vec<BoundCheck>,
}

impl WeightBoundReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(BoundCheck::passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &BoundCheck> {
        self.checks.iter().filter(|c| !c.passed())
    }
}

/// Evaluates every intermediate and final inequality of the weight bounds
/// against exact probabilities, with `t` and `q_n` taken from the exact
/// characterization of the pair.
pub fn verify_weight_bounds(
    alpha0: Complex64,
    alpha1: Complex64,
    cutoff: usize,
) -> Result<WeightBoundReport> {
    let joint = block_joint_distribution(alpha0, alpha1, cutoff)?;
    let rho0 = FockOperator::from_pure(&truncated(alpha0, cutoff)?);
    let rho1 = FockOperator::from_pure(&truncated(alpha1, cutoff)?);
    let stats = exact_pchar(&renormalized(rho0), &renormalized(rho1))?;
    let t = t_param(&stats);
    let s = s_bounds_raw(&stats);

    let wt_ge2 = |n: usize| joint.joint(n, 2) + joint.joint(n, 3);
    let lhs = [
        ("vac_flip_le_t", joint.pulse(0, 1), t),
        ("n0_wt3_le_t3", joint.joint(0, 3), t.powi(3)),
        ("n1_wt3_le_3t2", joint.joint(1, 3), 3.0 * t * t),
        ("n2_wt3_le_3t2_3t", joint.joint(2, 3), 3.0 * t * t + 3.0 * t),
        ("n0_wt1_le_3t", joint.joint(0, 1), 3.0 * t),
        ("n0_wtge2_le_3t2_t3", wt_ge2(0), 3.0 * t * t + t.powi(3)),
        ("n1_wtge2_le_6t_6t2", wt_ge2(1), 6.0 * t + 6.0 * t * t),
        ("wt3_le_sU3", joint.weight_marginal(3), s.s3),
        ("wt1_le_sU1", joint.weight_marginal(1), s.s1),
        (
            "wtge2_le_sUge2",
            joint.weight_marginal(2) + joint.weight_marginal(3),
            s.s_ge2,
        ),
    ];
    let checks = lhs
        .into_iter()
        .map(|(name, l, r)| BoundCheck::new(name, l, r, SLACK_TOL))
        .collect();
    Ok(WeightBoundReport {
        alpha0,
        alpha1,
        stats,
        t,
        checks,
    })
}

/// Scales out the (at most 1e-9) truncated tail so the density passes the
/// trace validation of the characterization.
fn renormalized(rho: FockOperator) -> FockOperator {
    let tr = rho.trace().re;
    FockOperator::new(
        rho.cutoff(),
        rho.modes(),
        rho.matrix() / Complex64::new(tr, 0.0),
    )
    .expect("same shape")
}

#[cfg(test)]
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn re(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    #[test]
    fn identical_states_never_flip() {
        let d = block_joint_distribution(re(0.1f64.sqrt()), re(0.1f64.sqrt()), 20).unwrap();
        assert_eq!(d.pulse_flip_probability(), 0.0);
        assert_abs_diff_eq!(d.weight_marginal(0), 1.0, epsilon = 1e-12);
        for a in 1..4 {
            assert_eq!(d.weight_marginal(a), 0.0);
        }
    }

    #[test]
    fn phase_encoded_weights() {
        let d = block_joint_distribution(re(0.1f64.sqrt()), re(-0.1f64.sqrt()), 20).unwrap();
        assert_abs_diff_eq!(
            d.pulse_flip_probability(),
            0.0906346234610090707,
            epsilon = 1e-13
        );
        assert_abs_diff_eq!(
            d.weight_marginal(3),
            7.44530347368236699e-4,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(d.total(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn odd_parity_forbids_few_photons_at_full_weight() {
        let d = block_joint_distribution(re(0.1f64.sqrt()), re(-0.1f64.sqrt()), 20).unwrap();
        for n in 0..=2 {
            assert_eq!(d.joint(n, 3), 0.0);
        }
        assert!(d.joint(3, 3) > 0.0);
    }

    #[test]
    fn small_cutoff_is_rejected() {
        let err = block_joint_distribution(re(0.7), re(-0.7), 3).unwrap_err();
        assert!(matches!(err, Error::Truncation { cutoff: 3, .. }));
    }

    #[test]
    fn degenerate_pair_bounds_are_trivial() {
        let r = verify_weight_bounds(re(0.1f64.sqrt()), re(0.1f64.sqrt()), 20).unwrap();
        assert_eq!(r.t, 0.0);
        for c in &r.checks[..7] {
            assert_eq!(c.lhs, 0.0, "{}", c.name);
            assert_eq!(c.rhs, 0.0, "{}", c.name);
        }
        assert!(r.all_passed());
    }

    #[test]
    fn asymmetric_pair_bounds() {
        let r = verify_weight_bounds(re(0.11f64.sqrt()), re(-0.09f64.sqrt()), 20).unwrap();
        assert_eq!(r.checks.len(), 10);
        for c in &r.checks {
            match c.name.as_str() {
                // Real positive vacuum amplitudes make these two exact.
                "vac_flip_le_t" | "n0_wt3_le_t3" => {
                    assert!(
                        c.slack().abs() <= 1e-15 * c.rhs.max(1e-300),
                        "{}",
                        c.report_line()
                    )
                }
                _ => assert!(c.slack() > 0.0, "{}", c.report_line()),
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn random_pairs_satisfy_every_bound(
            r0 in 0.0f64..0.5, r1 in 0.0f64..0.5,
            th0 in 0.0f64..std::f64::consts::TAU, th1 in 0.0f64..std::f64::consts::TAU,
        ) {
            let a0 = Complex64::from_polar(r0.sqrt(), th0);
            let a1 = Complex64::from_polar(r1.sqrt(), th1);
            let r = verify_weight_bounds(a0, a1, 20).unwrap();
            for c in &r.checks {
                prop_assert!(c.passed(), "{}", c.report_line());
            }
            let d = block_joint_distribution(a0, a1, 20).unwrap();
            prop_assert!((d.total() - 1.0).abs() < 1e-9);
        }
    }
}
