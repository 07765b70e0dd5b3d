//! Truncated Fock-space linear algebra.
//!
//! Every state lives on `modes` optical modes, each truncated to photon
//! numbers `0..=cutoff`. Basis states are stored in a flat array where the
//! occupation of mode 0 is the fastest-varying digit:
//!
//! ```text
//! index(n_0, n_1, ..., n_{M-1}) = n_0 + n_1 (c+1) + n_2 (c+1)^2 + ...
//! ```
//!
//! Beam splitters follow the convention
//! `a† → √T a† + √(1−T) b†`, `b† → √T b† − √(1−T) a†`, so that
//! `|1,0⟩ → √T |1,0⟩ + √(1−T) |0,1⟩`. Components pushed above the cutoff are
//! dropped, which can only lose norm.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::{Error, Result};

/// Cutoff used when a caller has no better estimate.
pub const DEFAULT_CUTOFF: usize = 20;

/// Tail mass the cutoff rule aims to stay below.
pub const CUTOFF_TAIL_TARGET: f64 = 1e-12;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Smallest cutoff whose Poisson tail `P(N > cutoff)` at `mean` is below
/// [`CUTOFF_TAIL_TARGET`].
pub fn cutoff_for_mean(mean: f64) -> usize {
    let mean = mean.max(0.0);
    let mut term = (-mean).exp();
    let mut n = 0usize;
    while upper_tail_after(mean, n, term) >= CUTOFF_TAIL_TARGET {
        n += 1;
        term *= mean / n as f64;
    }
    n
}

// P(N > n) given the mass `term_n` at n, summed upward.
fn upper_tail_after(mean: f64, n: usize, term_n: f64) -> f64 {
    let mut term = term_n;
    let mut sum = 0.0;
    let mut k = n;
    loop {
        k += 1;
        term *= mean / k as f64;
        sum += term;
        if term <= sum * 1e-17 || term == 0.0 {
            return sum;
        }
    }
}

fn check_unit_interval(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::domain(name, value, "[0, 1]"))
    }
}

/// Dimension of a `modes`-mode space truncated at `cutoff`.
pub fn dimension(cutoff: usize, modes: usize) -> usize {
    (cutoff + 1).pow(modes as u32)
}

/// Occupation numbers of the basis state at `index`.
pub fn occupations(index: usize, cutoff: usize, modes: usize) -> Vec<usize> {
    let base = cutoff + 1;
    let mut rest = index;
    (0..modes)
        .map(|_| {
            let n = rest % base;
            rest /= base;
            n
        })
        .collect()
}

/// Flat index of the basis state with the given occupations.
pub fn basis_index(occupations: &[usize], cutoff: usize) -> usize {
    let base = cutoff + 1;
    occupations.iter().rev().fold(0, |acc, &n| acc * base + n)
}

/// A state vector in a truncated multimode Fock space.
#[derive(Clone, Debug, PartialEq)]
pub struct FockVector {
    cutoff: usize,
    modes: usize,
    amplitudes: Vec<Complex64>,
}

impl FockVector {
    pub fn new(cutoff: usize, modes: usize, amplitudes: Vec<Complex64>) -> Result<Self> {
        let dim = dimension(cutoff, modes);
        if modes == 0 {
            return Err(Error::Shape("a Fock vector needs at least one mode".into()));
        }
        if amplitudes.len() != dim {
            return Err(Error::Shape(format!(
                "expected {dim} amplitudes for {modes} modes at cutoff {cutoff}, got {}",
                amplitudes.len()
            )));
        }
        Ok(FockVector {
            cutoff,
            modes,
            amplitudes,
        })
    }

    pub fn vacuum(cutoff: usize, modes: usize) -> Self {
        Self::number_state(cutoff, &vec![0; modes.max(1)])
    }

    /// The product number state `|n_0, n_1, ...⟩`. Occupations above the
    /// cutoff give the zero vector.
    pub fn number_state(cutoff: usize, occupations: &[usize]) -> Self {
        let modes = occupations.len().max(1);
        let mut amplitudes = vec![ZERO; dimension(cutoff, modes)];
        if occupations.iter().all(|&n| n <= cutoff) {
            amplitudes[basis_index(occupations, cutoff)] = ONE;
        }
        FockVector {
            cutoff,
            modes,
            amplitudes,
        }
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn amplitude(&self, occupations: &[usize]) -> Complex64 {
        if occupations.len() != self.modes || occupations.iter().any(|&n| n > self.cutoff) {
            return ZERO;
        }
        self.amplitudes[basis_index(occupations, self.cutoff)]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        FockVector {
            amplitudes: self.amplitudes.iter().map(|a| a * factor).collect(),
            ..self.clone()
        }
    }

    /// `self + factor · other`.
    pub fn add_scaled(&self, other: &FockVector, factor: Complex64) -> Result<Self> {
        self.check_same_space(other)?;
        Ok(FockVector {
            amplitudes: self
                .amplitudes
                .iter()
                .zip(&other.amplitudes)
                .map(|(a, b)| a + factor * b)
                .collect(),
            ..self.clone()
        })
    }

    /// Probability mass of each total photon number `0..=modes·cutoff`.
    pub fn total_photon_distribution(&self) -> Vec<f64> {
        let mut dist = vec![0.0; self.modes * self.cutoff + 1];
        for (index, a) in self.amplitudes.iter().enumerate() {
            let total: usize = occupations(index, self.cutoff, self.modes).iter().sum();
            dist[total] += a.norm_sqr();
        }
        dist
    }

    /// `⟨ψ| P_n |ψ⟩` for the total-photon-number projector `P_n`.
    pub fn total_photon_probability(&self, n: usize) -> f64 {
        self.total_photon_distribution()
            .get(n)
            .copied()
            .unwrap_or(0.0)
    }

    /// Applies `exp(i θ a†a)` on one mode.
    pub fn phase_shift(&self, mode: usize, theta: f64) -> Result<Self> {
        self.check_mode(mode)?;
        let mut out = self.clone();
        let stride = (self.cutoff + 1).pow(mode as u32);
        for (index, a) in out.amplitudes.iter_mut().enumerate() {
            let n = (index / stride) % (self.cutoff + 1);
            if n > 0 {
                *a *= Complex64::from_polar(1.0, theta * n as f64);
            }
        }
        Ok(out)
    }

    /// Reduced operator `Tr_{others} |self⟩⟨other|` on the `keep` modes, in
    /// the order given.
    pub fn reduced_cross(&self, other: &FockVector, keep: &[usize]) -> Result<FockOperator> {
        self.check_same_space(other)?;
        for &m in keep {
            self.check_mode(m)?;
        }
        let mut seen = vec![false; self.modes];
        for &m in keep {
            if std::mem::replace(&mut seen[m], true) {
                return Err(Error::Usage(format!("mode {m} kept twice")));
            }
        }
        let traced: Vec<usize> = (0..self.modes).filter(|m| !seen[*m]).collect();
        let keep_dim = dimension(self.cutoff, keep.len());
        let env_dim = dimension(self.cutoff, traced.len());
        let mut left = DMatrix::from_element(keep_dim, env_dim, ZERO);
        let mut right = DMatrix::from_element(keep_dim, env_dim, ZERO);
        let mut keep_occ = vec![0; keep.len()];
        let mut env_occ = vec![0; traced.len()];
        for index in 0..self.dim() {
            let occ = occupations(index, self.cutoff, self.modes);
            for (slot, &m) in keep.iter().enumerate() {
                keep_occ[slot] = occ[m];
            }
            for (slot, &m) in traced.iter().enumerate() {
                env_occ[slot] = occ[m];
            }
            let row = basis_index(&keep_occ, self.cutoff);
            let col = basis_index(&env_occ, self.cutoff);
            left[(row, col)] = self.amplitudes[index];
            right[(row, col)] = other.amplitudes[index];
        }
        Ok(FockOperator {
            cutoff: self.cutoff,
            modes: keep.len(),
            matrix: &left * right.adjoint(),
        })
    }

    /// Reduced density operator on the `keep` modes.
    pub fn reduced_density(&self, keep: &[usize]) -> Result<FockOperator> {
        self.reduced_cross(self, keep)
    }

    fn check_mode(&self, mode: usize) -> Result<()> {
        if mode < self.modes {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "mode {mode} out of range for a {}-mode state",
                self.modes
            )))
        }
    }

    fn check_same_space(&self, other: &FockVector) -> Result<()> {
        if self.cutoff == other.cutoff && self.modes == other.modes {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "({} modes, cutoff {}) vs ({} modes, cutoff {})",
                self.modes, self.cutoff, other.modes, other.cutoff
            )))
        }
    }
}

/// The coherent state `|α⟩` truncated at `cutoff` (amplitudes are exact, the
/// tail beyond the cutoff is simply absent).
pub fn coherent_vector(alpha: Complex64, cutoff: usize) -> FockVector {
    let mut amplitudes = Vec::with_capacity(cutoff + 1);
    let mut amp = Complex64::new((-alpha.norm_sqr() / 2.0).exp(), 0.0);
    amplitudes.push(amp);
    for n in 1..=cutoff {
        amp *= alpha / (n as f64).sqrt();
        amplitudes.push(amp);
    }
    FockVector {
        cutoff,
        modes: 1,
        amplitudes,
    }
}

/// `⟨u|v⟩`, conjugate-linear in `u`.
pub fn overlap(u: &FockVector, v: &FockVector) -> Result<Complex64> {
    u.check_same_space(v)?;
    Ok(u.amplitudes
        .iter()
        .zip(&v.amplitudes)
        .map(|(a, b)| a.conj() * b)
        .sum())
}

/// Product state of the parts; part `k` occupies the modes after those of
/// parts `0..k`.
pub fn tensor(parts: &[FockVector]) -> Result<FockVector> {
    let (first, rest) = parts
        .split_first()
        .ok_or_else(|| Error::Usage("tensor product of an empty list".into()))?;
    rest.iter().try_fold(first.clone(), |acc, part| {
        if part.cutoff != acc.cutoff {
            return Err(Error::Shape(format!(
                "cutoff {} vs {}",
                acc.cutoff, part.cutoff
            )));
        }
        // Later parts hold the more significant digits.
        let mut amplitudes = Vec::with_capacity(acc.dim() * part.dim());
        for b in &part.amplitudes {
            amplitudes.extend(acc.amplitudes.iter().map(|a| a * b));
        }
        Ok(FockVector {
            cutoff: acc.cutoff,
            modes: acc.modes + part.modes,
            amplitudes,
        })
    })
}

struct Factorials {
    sqrt_fact: Vec<f64>,
    binom: Vec<Vec<f64>>,
}

impl Factorials {
    fn new(max: usize) -> Self {
        let mut sqrt_fact = vec![1.0; max + 1];
        for n in 1..=max {
            sqrt_fact[n] = sqrt_fact[n - 1] * (n as f64).sqrt();
        }
        let mut binom = vec![vec![1.0; 1]; max + 1];
        for n in 1..=max {
            let prev = &binom[n - 1];
            let mut row = vec![1.0; n + 1];
            for k in 1..n {
                row[k] = prev[k - 1] + prev[k];
            }
            binom[n] = row;
        }
        Factorials { sqrt_fact, binom }
    }
}

/// Two-mode beam splitter of power transmittance `transmittance`.
pub fn beam_splitter(state: &FockVector, transmittance: f64) -> Result<FockVector> {
    if state.modes != 2 {
        return Err(Error::Shape(format!(
            "beam_splitter expects a two-mode state, got {} modes",
            state.modes
        )));
    }
    beam_splitter_modes(state, 0, 1, transmittance)
}

/// Beam splitter acting on modes `a` and `b` of a multimode state. Mode `a`
/// plays the role of the first port in the module convention.
pub fn beam_splitter_modes(
    state: &FockVector,
    a: usize,
    b: usize,
    transmittance: f64,
) -> Result<FockVector> {
    check_unit_interval("transmittance", transmittance)?;
    state.check_mode(a)?;
    state.check_mode(b)?;
    if a == b {
        return Err(Error::Usage(
            "beam splitter needs two distinct modes".into(),
        ));
    }
    let cutoff = state.cutoff;
    let base = cutoff + 1;
    let stride_a = base.pow(a as u32);
    let stride_b = base.pow(b as u32);
    let ft = Factorials::new(2 * cutoff);
    let st = transmittance.sqrt();
    let sr = (1.0 - transmittance).sqrt();
    let st_pow: Vec<f64> = (0..=2 * cutoff).map(|k| st.powi(k as i32)).collect();
    let sr_pow: Vec<f64> = (0..=2 * cutoff).map(|k| sr.powi(k as i32)).collect();

    let mut out = vec![ZERO; state.dim()];
    for (index, &amp) in state.amplitudes.iter().enumerate() {
        if amp == ZERO {
            continue;
        }
        let n = (index / stride_a) % base;
        let m = (index / stride_b) % base;
        let rest = index - n * stride_a - m * stride_b;
        let norm = 1.0 / (ft.sqrt_fact[n] * ft.sqrt_fact[m]);
        for k in 0..=n {
            for l in 0..=m {
                let p = k + m - l;
                let q = n - k + l;
                if p > cutoff || q > cutoff {
                    continue;
                }
                let sign = if (m - l).is_multiple_of(2) { 1.0 } else { -1.0 };
                let coeff = sign
                    * ft.binom[n][k]
                    * ft.binom[m][l]
                    * st_pow[k + l]
                    * sr_pow[n - k + m - l]
                    * ft.sqrt_fact[p]
                    * ft.sqrt_fact[q]
                    * norm;
                out[rest + p * stride_a + q * stride_b] += amp * coeff;
            }
        }
    }
    Ok(FockVector {
        cutoff,
        modes: state.modes,
        amplitudes: out,
    })
}

/// Projector onto total photon number `n` across all `modes`.
pub fn total_photon_projector(modes: usize, n: usize, cutoff: usize) -> Result<FockOperator> {
    if modes == 0 {
        return Err(Error::Shape("projector needs at least one mode".into()));
    }
    if n > modes * cutoff {
        return Err(Error::Usage(format!(
            "photon number {n} exceeds the {modes}-mode capacity at cutoff {cutoff}"
        )));
    }
    let dim = dimension(cutoff, modes);
    let mut matrix = DMatrix::from_element(dim, dim, ZERO);
    for index in 0..dim {
        if occupations(index, cutoff, modes).iter().sum::<usize>() == n {
            matrix[(index, index)] = ONE;
        }
    }
    Ok(FockOperator {
        cutoff,
        modes,
        matrix,
    })
}

/// Pure-loss channel with the given survival probability applied to every
/// mode of `state`. Each mode is mixed with its own vacuum environment on a
/// beam splitter and the environments are traced out.
pub fn loss_channel(state: &FockVector, survival: f64) -> Result<FockOperator> {
    check_unit_interval("survival", survival)?;
    let modes = state.modes;
    let env = FockVector::vacuum(state.cutoff, modes);
    let mut joint = tensor(&[state.clone(), env])?;
    for m in 0..modes {
        joint = beam_splitter_modes(&joint, m, modes + m, survival)?;
    }
    let keep: Vec<usize> = (0..modes).collect();
    joint.reduced_density(&keep)
}

/// An operator on a truncated multimode Fock space.
#[derive(Clone, Debug, PartialEq)]
pub struct FockOperator {
    cutoff: usize,
    modes: usize,
    matrix: DMatrix<Complex64>,
}

impl FockOperator {
    pub fn new(cutoff: usize, modes: usize, matrix: DMatrix<Complex64>) -> Result<Self> {
        let dim = dimension(cutoff, modes);
        if modes == 0 || matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(Error::Shape(format!(
                "expected a {dim}x{dim} matrix for {modes} modes at cutoff {cutoff}, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(FockOperator {
            cutoff,
            modes,
            matrix,
        })
    }

    pub fn from_pure(state: &FockVector) -> Self {
        let v = nalgebra::DVector::from_column_slice(&state.amplitudes);
        FockOperator {
            cutoff: state.cutoff,
            modes: state.modes,
            matrix: &v * v.adjoint(),
        }
    }

    /// Density operator diagonal in the number basis (a photon-number mixture).
    pub fn number_mixture(cutoff: usize, probabilities: &[f64]) -> Result<Self> {
        if probabilities.len() > cutoff + 1 {
            return Err(Error::Shape(format!(
                "{} populations do not fit cutoff {cutoff}",
                probabilities.len()
            )));
        }
        let mut matrix = DMatrix::from_element(cutoff + 1, cutoff + 1, ZERO);
        for (n, &p) in probabilities.iter().enumerate() {
            matrix[(n, n)] = Complex64::new(p, 0.0);
        }
        Ok(FockOperator {
            cutoff,
            modes: 1,
            matrix,
        })
    }

    pub fn identity(cutoff: usize, modes: usize) -> Self {
        let dim = dimension(cutoff, modes);
        FockOperator {
            cutoff,
            modes,
            matrix: DMatrix::identity(dim, dim),
        }
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn trace(&self) -> Complex64 {
        self.matrix.trace()
    }

    /// Real parts of the diagonal, i.e. number-basis populations.
    pub fn populations(&self) -> Vec<f64> {
        self.matrix.diagonal().iter().map(|d| d.re).collect()
    }

    pub fn entry(&self, row: usize, col: usize) -> Complex64 {
        self.matrix[(row, col)]
    }

    /// Largest `|M − M†|` entry.
    pub fn hermiticity_defect(&self) -> f64 {
        let adj = self.matrix.adjoint();
        (&self.matrix - adj)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect() <= tol
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn hermitian_eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&self.matrix)
    }

    /// `⟨ψ|M|ψ⟩`.
    pub fn expectation(&self, state: &FockVector) -> Result<Complex64> {
        if state.cutoff != self.cutoff || state.modes != self.modes {
            return Err(Error::Shape(
                "operator and state live on different spaces".into(),
            ));
        }
        let v = nalgebra::DVector::from_column_slice(&state.amplitudes);
        Ok((v.adjoint() * &self.matrix * &v)[(0, 0)])
    }

    /// `Tr(self · other)`.
    pub fn trace_product(&self, other: &FockOperator) -> Result<Complex64> {
        if other.cutoff != self.cutoff || other.modes != self.modes {
            return Err(Error::Shape("operators live on different spaces".into()));
        }
        Ok(trace_product(&self.matrix, &other.matrix))
    }

    pub fn apply(&self, state: &FockVector) -> Result<FockVector> {
        if state.cutoff != self.cutoff || state.modes != self.modes {
            return Err(Error::Shape(
                "operator and state live on different spaces".into(),
            ));
        }
        let v = nalgebra::DVector::from_column_slice(&state.amplitudes);
        let out = &self.matrix * v;
        Ok(FockVector {
            cutoff: self.cutoff,
            modes: self.modes,
            amplitudes: out.iter().copied().collect(),
        })
    }

    pub fn matmul(&self, other: &FockOperator) -> Result<FockOperator> {
        if other.cutoff != self.cutoff || other.modes != self.modes {
            return Err(Error::Shape("operators live on different spaces".into()));
        }
        Ok(FockOperator {
            matrix: &self.matrix * &other.matrix,
            ..self.clone()
        })
    }
}

/// `Tr(A B)` without forming the product.
pub(crate) fn trace_product(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> Complex64 {
    let n = a.nrows();
    let mut acc = ZERO;
    for i in 0..n {
        for j in 0..n {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

pub(crate) fn hermitian_eigenvalues(m: &DMatrix<Complex64>) -> Vec<f64> {
    let sym = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let mut ev: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}
