//! Bob's detection POVM on the one-photon subspace and the bit/phase error
//! operators on Alice's three auxiliary qubits `A` and the photon-position
//! space `B`.
//!
//! `A` uses the Z basis `|z1 z2 z3⟩` with `z1` as the most significant bit
//! (index `4 z1 + 2 z2 + z3`). `B` has basis `|1⟩, |2⟩, |3⟩` for the photon in
//! the first half pulse, the second pulse and the third half pulse. Joint
//! index is `3 · a_index + (position − 1)`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{BoundCheck, SLACK_TOL};
use crate::bounds::LAMBDA;
use crate::fock::{hermitian_eigenvalues, trace_product};
use crate::{Error, Result};

pub const A_DIM: usize = 8;
pub const B_DIM: usize = 3;
pub const AB_DIM: usize = A_DIM * B_DIM;

/// `(w1, w2, w3)`: the chance that a photon at each position is routed to a
/// neighbouring time slot.
pub const DETECTION_WEIGHTS: [f64; 3] = [1.0, 0.5, 1.0];

const EXACT_TOL: f64 = 1e-12;
const STATE_PSD_TOL: f64 = 1e-10;
const STATE_TRACE_TOL: f64 = 1e-9;

type CMatrix = DMatrix<Complex64>;

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// Joint index of `|z⟩_A |position⟩_B`, position in `1..=3`.
pub fn ab_index(z: usize, position: usize) -> usize {
    debug_assert!(z < A_DIM && (1..=B_DIM).contains(&position));
    z * B_DIM + position - 1
}

/// The `j`-th bit (1-based) of the Z string `z`.
pub(crate) fn z_bit(z: usize, j: usize) -> usize {
    (z >> (3 - j)) & 1
}

fn outer(v: &DVector<Complex64>) -> CMatrix {
    v * v.adjoint()
}

fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

fn qubit(v: [f64; 2]) -> DVector<Complex64> {
    DVector::from_vec(vec![c(v[0]), c(v[1])])
}

/// `P[|u⟩_{A_j} |v⟩_{A_{j+1}}]` on the 8-dimensional `A` register.
fn two_qubit_projector(j: usize, u: &DVector<Complex64>, v: &DVector<Complex64>) -> CMatrix {
    let id = CMatrix::identity(2, 2);
    let mut factors = [id.clone(), id.clone(), id];
    factors[j - 1] = outer(u);
    factors[j] = outer(v);
    kron(&kron(&factors[0], &factors[1]), &factors[2])
}

#[derive(Clone, Debug)]
pub struct ErrorOperatorSet {
    weights: [f64; 3],
    /// `|Π_{j,k}⟩` for `j ∈ {1, 2}`, `k ∈ {0, 1}`, indexed `[j − 1][k]`.
    povm_vectors: [[DVector<Complex64>; 2]; 2],
    bob_povm: [[CMatrix; 2]; 2],
    e_bit: CMatrix,
    e_ph: CMatrix,
    /// `P_a` on `A`.
    projectors: [CMatrix; 4],
}

/// Operators with the weights `w1 = w3 = 1`, `w2 = 1/2`.
pub fn build_error_operators() -> ErrorOperatorSet {
    ErrorOperatorSet::with_weights(DETECTION_WEIGHTS)
}

impl ErrorOperatorSet {
    /// Builds the operator set for arbitrary weights. Only the default weights
    /// describe the real interferometer; others exist to exercise the checks.
    pub fn with_weights(weights: [f64; 3]) -> Self {
        let w = |i: usize| weights[i - 1];
        let pos = |i: usize| {
            let mut v = DVector::from_element(B_DIM, c(0.0));
            v[i - 1] = c(1.0);
            v
        };
        let povm_vectors: [[DVector<Complex64>; 2]; 2] = [1usize, 2].map(|j| {
            [0usize, 1].map(|k| {
                let sign = if k == 0 { 1.0 } else { -1.0 };
                (pos(j) * c(w(j).sqrt()) + pos(j + 1) * c(sign * w(j + 1).sqrt()))
                    * c(std::f64::consts::FRAC_1_SQRT_2)
            })
        });
        let bob_povm = povm_vectors.clone().map(|row| row.map(|v| outer(&v)));

        let h = std::f64::consts::FRAC_1_SQRT_2;
        let plus = qubit([h, h]);
        let minus = qubit([h, -h]);
        let mut e_bit = CMatrix::zeros(AB_DIM, AB_DIM);
        for j in 1..=2 {
            let same =
                two_qubit_projector(j, &plus, &plus) + two_qubit_projector(j, &minus, &minus);
            let differ =
                two_qubit_projector(j, &plus, &minus) + two_qubit_projector(j, &minus, &plus);
            e_bit += kron(&same, &bob_povm[j - 1][1]) + kron(&differ, &bob_povm[j - 1][0]);
        }

        let mut e_ph = CMatrix::zeros(AB_DIM, AB_DIM);
        let mut projectors: [CMatrix; 4] = std::array::from_fn(|_| CMatrix::zeros(A_DIM, A_DIM));
        for z in 0..A_DIM {
            let weight: usize = (1..=3).map(|j| z_bit(z, j)).sum();
            projectors[weight][(z, z)] = c(1.0);
            for j in 1..=2 {
                if z_bit(z, j + 1) == 1 {
                    e_ph[(ab_index(z, j), ab_index(z, j))] += c(w(j));
                }
                if z_bit(z, j) == 1 {
                    e_ph[(ab_index(z, j + 1), ab_index(z, j + 1))] += c(w(j + 1));
                }
            }
        }

        ErrorOperatorSet {
            weights,
            povm_vectors,
            bob_povm,
            e_bit,
            e_ph,
            projectors,
        }
    }

    pub fn weights(&self) -> [f64; 3] {
        self.weights
    }

    /// `Π_{j,k}` on `B`, `j ∈ {1, 2}`, `k ∈ {0, 1}`.
    pub fn bob_povm(&self, j: usize, k: usize) -> &CMatrix {
        &self.bob_povm[j - 1][k]
    }

    pub fn povm_vector(&self, j: usize, k: usize) -> &DVector<Complex64> {
        &self.povm_vectors[j - 1][k]
    }

    pub fn e_bit(&self) -> &CMatrix {
        &self.e_bit
    }

    pub fn e_ph(&self) -> &CMatrix {
        &self.e_ph
    }

    /// `P_a` on `A`.
    pub fn projector(&self, a: usize) -> &CMatrix {
        &self.projectors[a]
    }

    /// `P_a ⊗ I_B`.
    pub fn projector_ab(&self, a: usize) -> CMatrix {
        kron(&self.projectors[a], &CMatrix::identity(B_DIM, B_DIM))
    }

    /// Completeness, positivity and spectral checks of the operator set.
    pub fn invariant_checks(&self) -> Vec<BoundCheck> {
        let mut checks = Vec::new();
        let dev = |m: CMatrix| m.iter().map(|z| z.norm()).fold(0.0, f64::max);

        let povm_sum = self
            .bob_povm
            .iter()
            .flatten()
            .fold(CMatrix::zeros(B_DIM, B_DIM), |acc, p| acc + p);
        checks.push(BoundCheck::new(
            "povm_completeness_max_dev",
            dev(povm_sum - CMatrix::identity(B_DIM, B_DIM)),
            EXACT_TOL,
            0.0,
        ));
        let proj_sum = self
            .projectors
            .iter()
            .fold(CMatrix::zeros(A_DIM, A_DIM), |acc, p| acc + p);
        checks.push(BoundCheck::new(
            "projector_completeness_max_dev",
            dev(proj_sum - CMatrix::identity(A_DIM, A_DIM)),
            EXACT_TOL,
            0.0,
        ));

        let mut named: Vec<(String, &CMatrix)> = Vec::new();
        for j in 1..=2 {
            for k in 0..=1 {
                named.push((format!("povm_{j}{k}"), self.bob_povm(j, k)));
            }
        }
        named.push(("e_bit".into(), &self.e_bit));
        named.push(("e_ph".into(), &self.e_ph));
        for a in 0..4 {
            named.push((format!("projector_{a}"), &self.projectors[a]));
        }
        for (name, m) in &named {
            checks.push(BoundCheck::new(
                format!("{name}_hermiticity_defect"),
                dev(*m - m.adjoint()),
                EXACT_TOL,
                0.0,
            ));
            let ev = hermitian_eigenvalues(m);
            checks.push(BoundCheck::new(
                format!("{name}_psd_neg_min_eigenvalue"),
                -ev[0],
                EXACT_TOL,
                0.0,
            ));
        }
        for (name, m) in [("e_bit", &self.e_bit), ("e_ph", &self.e_ph)] {
            let ev = hermitian_eigenvalues(m);
            checks.push(BoundCheck::new(
                format!("{name}_max_eigenvalue_le_1"),
                ev[ev.len() - 1],
                1.0 + EXACT_TOL,
                0.0,
            ));
        }
        checks.push(BoundCheck::new(
            "e_ph_trace_dev_from_12",
            (self.e_ph.trace().re - 12.0).abs(),
            EXACT_TOL,
            0.0,
        ));
        for (a, expected) in [1.0, 3.0, 3.0, 1.0].into_iter().enumerate() {
            checks.push(BoundCheck::new(
                format!("projector_{a}_rank_dev"),
                (self.projectors[a].trace().re - expected).abs(),
                EXACT_TOL,
                0.0,
            ));
        }
        checks
    }
}

/// A state on `A ⊗ B` conditioned on exactly one photon reaching Bob.
#[derive(Clone, Debug)]
pub struct QubitPhotonState {
    matrix: CMatrix,
}

impl QubitPhotonState {
    /// Validates Hermiticity, positivity and `trace = normalization`.
    pub fn new(matrix: CMatrix, normalization: f64) -> Result<Self> {
        if matrix.nrows() != AB_DIM || matrix.ncols() != AB_DIM {
            return Err(Error::Shape(format!(
                "expected a {AB_DIM}x{AB_DIM} matrix, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let defect = (&matrix - matrix.adjoint())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        if defect > STATE_PSD_TOL {
            return Err(Error::Validation(format!(
                "state is not Hermitian (defect {defect:e})"
            )));
        }
        let trace = matrix.trace();
        if (trace.re - normalization).abs() > STATE_TRACE_TOL || trace.im.abs() > STATE_TRACE_TOL {
            return Err(Error::Validation(format!(
                "trace {trace} differs from {normalization}"
            )));
        }
        let min_ev = hermitian_eigenvalues(&matrix)[0];
        if min_ev < -STATE_PSD_TOL {
            return Err(Error::Validation(format!("negative eigenvalue {min_ev:e}")));
        }
        Ok(QubitPhotonState { matrix })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    /// `tr(σ X)` for an operator on `A ⊗ B`.
    pub fn expect(&self, op: &CMatrix) -> f64 {
        trace_product(&self.matrix, op).re
    }

    /// `tr(σ (P_a ⊗ I_B))`, read off the diagonal.
    pub fn weight_probability(&self, a: usize) -> f64 {
        (0..A_DIM)
            .filter(|&z| (1..=3).map(|j| z_bit(z, j)).sum::<usize>() == a)
            .flat_map(|z| (1..=B_DIM).map(move |p| ab_index(z, p)))
            .map(|i| self.matrix[(i, i)].re)
            .sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RelationCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub ok: bool,
}

/// `tr(e_ph σ) ≤ λ (tr(e_bit σ) + √(tr(σ P_1) tr(σ P_3))) + tr(P_2 σ) + tr(P_3 σ)`.
pub fn check_phase_bit_relation(
    ops: &ErrorOperatorSet,
    sigma: &QubitPhotonState,
) -> Result<RelationCheck> {
    if (sigma.trace() - 1.0).abs() > STATE_TRACE_TOL {
        return Err(Error::Validation(format!(
            "relation needs a normalized state, trace is {}",
            sigma.trace()
        )));
    }
    let lhs = sigma.expect(ops.e_ph());
    let p: Vec<f64> = (0..4).map(|a| sigma.weight_probability(a)).collect();
    let rhs = LAMBDA * (sigma.expect(ops.e_bit()) + (p[1] * p[3]).max(0.0).sqrt()) + p[2] + p[3];
    Ok(RelationCheck {
        lhs,
        rhs,
        ok: lhs <= rhs + SLACK_TOL,
    })
}

/// Haar-random pure state mixed with white noise of weight `noise`.
pub fn random_density<R: Rng + ?Sized>(rng: &mut R, noise: f64) -> QubitPhotonState {
    let mut psi = DVector::from_fn(AB_DIM, |_, _| {
        Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    let norm = psi.norm();
    psi /= c(norm);
    let matrix =
        outer(&psi) * c(1.0 - noise) + CMatrix::identity(AB_DIM, AB_DIM) * c(noise / AB_DIM as f64);
    QubitPhotonState { matrix }
}

#[cfg(test)]
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn povm_vectors_match_definition() {
        let ops = build_error_operators();
        let v = ops.povm_vector(1, 1);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert_abs_diff_eq!(v[0].re, h, epsilon = 1e-15);
        assert_abs_diff_eq!(v[1].re, -0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(v[2].re, 0.0, epsilon = 1e-15);
        let v = ops.povm_vector(2, 0);
        assert_abs_diff_eq!(v[1].re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(v[2].re, h, epsilon = 1e-15);
    }

    #[test]
    fn all_invariants_hold() {
        let ops = build_error_operators();
        for check in ops.invariant_checks() {
            assert!(check.passed(), "{}", check.report_line());
        }
        assert_abs_diff_eq!(ops.e_ph().trace().re, 12.0, epsilon = 1e-12);
    }

    #[test]
    fn perturbed_weight_breaks_completeness() {
        let ops = ErrorOperatorSet::with_weights([1.0, 0.6, 1.0]);
        let failed: Vec<_> = ops
            .invariant_checks()
            .into_iter()
            .filter(|c| !c.passed())
            .collect();
        assert!(failed.iter().any(|c| c.name == "povm_completeness_max_dev"));
    }

    #[test]
    fn relation_on_all_zero_string() {
        let ops = build_error_operators();
        let mut m = CMatrix::zeros(AB_DIM, AB_DIM);
        m[(ab_index(0, 2), ab_index(0, 2))] = c(0.5);
        m[(ab_index(0, 1), ab_index(0, 1))] = c(0.5);
        let sigma = QubitPhotonState::new(m, 1.0).unwrap();
        let r = check_phase_bit_relation(&ops, &sigma).unwrap();
        assert_eq!(r.lhs, 0.0);
        assert!(r.ok);
    }

    #[test]
    fn relation_on_maximally_mixed_state() {
        let ops = build_error_operators();
        let sigma =
            QubitPhotonState::new(CMatrix::identity(AB_DIM, AB_DIM) * c(1.0 / 24.0), 1.0).unwrap();
        let r = check_phase_bit_relation(&ops, &sigma).unwrap();
        assert_abs_diff_eq!(r.lhs, 0.5, epsilon = 1e-14);
        let expected = LAMBDA * (0.5 + (0.375f64 * 0.125).sqrt()) + 0.5;
        assert_abs_diff_eq!(r.rhs, expected, epsilon = 1e-13);
        assert_abs_diff_eq!(r.rhs, 4.2516759598641, epsilon = 1e-12);
        assert!(r.ok);
    }

    #[test]
    fn weight_probability_matches_projector_trace() {
        let ops = build_error_operators();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sigma = random_density(&mut rng, 0.1);
        for a in 0..4 {
            assert_abs_diff_eq!(
                sigma.weight_probability(a),
                sigma.expect(&ops.projector_ab(a)),
                epsilon = 1e-14
            );
        }
    }

    #[test]
    fn random_states_are_valid_and_satisfy_relation() {
        let ops = build_error_operators();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let sigma = random_density(&mut rng, 0.1);
            let sigma = QubitPhotonState::new(sigma.matrix().clone(), 1.0).unwrap();
            assert!(check_phase_bit_relation(&ops, &sigma).unwrap().ok);
        }
    }

    #[test]
    fn invalid_states_are_rejected() {
        let not_normalized = CMatrix::identity(AB_DIM, AB_DIM) * c(0.5 / 24.0);
        assert!(QubitPhotonState::new(not_normalized.clone(), 1.0).is_err());
        assert!(QubitPhotonState::new(not_normalized, 0.5).is_ok());
        let mut negative = CMatrix::identity(AB_DIM, AB_DIM) * c(1.0 / 24.0);
        negative[(0, 0)] = c(-0.1);
        negative[(1, 1)] += c(0.1 + 1.0 / 24.0);
        assert!(matches!(
            QubitPhotonState::new(negative, 1.0),
            Err(Error::Validation(_))
        ));
        let mut skew = CMatrix::identity(AB_DIM, AB_DIM) * c(1.0 / 24.0);
        skew[(0, 1)] = c(0.01);
        assert!(QubitPhotonState::new(skew, 1.0).is_err());
    }
}
