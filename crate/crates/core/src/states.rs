//! State containers and the fidelity, infidelity and purity metrics.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{clamp_psd, eigh, reduced_from_statevector, sqrt_psd, ComplexMatrix, MAX_DENSE_QUBITS};
use crate::pauli::PauliString;

/// Normalisation tolerance for states and density operators.
pub const NORM_TOL: f64 = 1e-10;

/// Pure state on `n_qubits` qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct Statevector {
    n_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl Statevector {
    pub fn new(amplitudes: Vec<Complex64>) -> Result<Self> {
        let len = amplitudes.len();
        if !len.is_power_of_two() {
            return Err(Error::Parameter(format!("length {len} is not a power of two")));
        }
        let n_qubits = len.trailing_zeros() as usize;
        if n_qubits > MAX_DENSE_QUBITS {
            return Err(Error::Capacity {
                qubits: n_qubits,
                max: MAX_DENSE_QUBITS,
            });
        }
        let sv = Self {
            n_qubits,
            amplitudes,
        };
        let norm = sv.norm();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::Parameter(format!("state norm is {norm}, expected 1")));
        }
        Ok(sv)
    }

    /// Computational basis state `|index>`.
    pub fn basis(n_qubits: usize, index: usize) -> Result<Self> {
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n_qubits];
        *amps
            .get_mut(index)
            .ok_or_else(|| Error::Parameter(format!("basis index {index} out of range")))? =
            Complex64::new(1.0, 0.0);
        Self::new(amps)
    }

    /// Unit-norm state that may have drifted by round-off after many gates.
    pub(crate) fn from_evolved(n_qubits: usize, amplitudes: Vec<Complex64>) -> Self {
        debug_assert_eq!(amplitudes.len(), 1 << n_qubits);
        Self {
            n_qubits,
            amplitudes,
        }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn inner(&self, other: &Self) -> Complex64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// `P|ψ>`
    pub fn apply_pauli(&self, p: &PauliString) -> Result<Self> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.amplitudes.len()];
        p.apply_into(&self.amplitudes, &mut out)?;
        Ok(Self::from_evolved(self.n_qubits, out))
    }

    /// `e^{-iθP}|ψ>`
    pub fn apply_rotation(&self, p: &PauliString, theta: f64) -> Result<Self> {
        let mut out = self.clone();
        p.rotate_in_place(&mut out.amplitudes, theta)?;
        Ok(out)
    }

    /// Visible reduced state of this purification.
    pub fn reduced(&self, n_v: usize, n_h: usize) -> Result<DensityOperator> {
        if n_v + n_h != self.n_qubits {
            return Err(Error::DimensionMismatch {
                expected: self.n_qubits,
                got: n_v + n_h,
            });
        }
        let m = reduced_from_statevector(&self.amplitudes, n_v, n_h)?;
        Ok(DensityOperator::trusted(n_v, m))
    }
}

impl AsRef<[Complex64]> for Statevector {
    fn as_ref(&self) -> &[Complex64] {
        &self.amplitudes
    }
}

/// Hermitian, unit-trace, PSD operator.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator {
    n_qubits: usize,
    matrix: ComplexMatrix,
}

impl DensityOperator {
    /// Validates Hermiticity, unit trace and positivity (within the clamp).
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        let dim = matrix.dim();
        if !dim.is_power_of_two() {
            return Err(Error::Parameter(format!("dimension {dim} is not a power of two")));
        }
        if !matrix.is_hermitian(NORM_TOL) {
            return Err(Error::Parameter("density operator must be Hermitian".into()));
        }
        let tr = matrix.trace();
        if (tr.re - 1.0).abs() > NORM_TOL || tr.im.abs() > NORM_TOL {
            return Err(Error::Parameter(format!("density operator trace is {tr}")));
        }
        let eig = eigh(&matrix)?;
        for &l in &eig.eigenvalues {
            clamp_psd(l)?;
        }
        Ok(Self::trusted(dim.trailing_zeros() as usize, matrix.hermitian_part()))
    }

    pub fn pure(psi: &Statevector) -> Self {
        Self::trusted(psi.n_qubits(), ComplexMatrix::outer(psi.amplitudes()))
    }

    pub fn maximally_mixed(n_qubits: usize) -> Self {
        let dim = 1usize << n_qubits;
        Self::trusted(n_qubits, ComplexMatrix::identity(dim).scale(1.0 / dim as f64))
    }

    /// Wraps a matrix that is a density operator by construction.
    pub(crate) fn trusted(n_qubits: usize, matrix: ComplexMatrix) -> Self {
        debug_assert_eq!(matrix.dim(), 1 << n_qubits);
        Self { n_qubits, matrix }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }
}

fn check_dims(rho: &DensityOperator, sigma: &DensityOperator) -> Result<()> {
    if rho.dim() != sigma.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho.dim(),
            got: sigma.dim(),
        });
    }
    Ok(())
}

/// Uhlmann fidelity given a precomputed `√ρ`.
pub fn fidelity_with_sqrt(sqrt_rho: &ComplexMatrix, sigma: &ComplexMatrix) -> Result<f64> {
    let m = sqrt_rho.matmul(sigma).matmul(sqrt_rho).hermitian_part();
    let eig = eigh(&m)?;
    let mut f = 0.0;
    for &l in &eig.eigenvalues {
        f += clamp_psd(l)?.sqrt();
    }
    Ok(f.clamp(0.0, 1.0))
}

/// `F(ρ, σ) = Tr √(√ρ σ √ρ)`
pub fn fidelity(rho: &DensityOperator, sigma: &DensityOperator) -> Result<f64> {
    check_dims(rho, sigma)?;
    let sqrt_rho = sqrt_psd(rho.matrix())?;
    fidelity_with_sqrt(&sqrt_rho, sigma.matrix())
}

/// `1 - F(ρ, σ)²`
pub fn infidelity(rho: &DensityOperator, sigma: &DensityOperator) -> Result<f64> {
    let f = fidelity(rho, sigma)?;
    Ok(1.0 - f * f)
}

/// `Tr(σ²)`
pub fn purity(sigma: &DensityOperator) -> f64 {
    sigma.matrix().trace_product(sigma.matrix()).re
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_state(rng: &mut ChaCha8Rng, n: usize) -> Statevector {
        let v: Vec<Complex64> = (0..1 << n)
            .map(|_| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
            .collect();
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        Statevector::new(v.into_iter().map(|z| z / norm).collect()).unwrap()
    }

    pub(crate) fn random_density(rng: &mut ChaCha8Rng, n: usize) -> DensityOperator {
        let dim = 1 << n;
        let a = ComplexMatrix::from_fn(dim, |_, _| c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        let m = a.matmul(&a.adjoint());
        let tr = m.trace().re;
        DensityOperator::new(m.scale(1.0 / tr)).unwrap()
    }

    #[test]
    fn statevector_validation() {
        assert!(Statevector::new(vec![c(1., 0.), c(1., 0.)]).is_err());
        assert!(Statevector::new(vec![c(1., 0.), c(0., 0.), c(0., 0.)]).is_err());
        assert!(Statevector::basis(2, 4).is_err());
        assert_eq!(Statevector::basis(2, 3).unwrap().amplitudes()[3], c(1., 0.));
    }

    #[test]
    fn density_validation() {
        assert!(DensityOperator::new(ComplexMatrix::identity(2)).is_err());
        assert!(DensityOperator::new(ComplexMatrix::from_diagonal(&[1.5, -0.5])).is_err());
        assert!(DensityOperator::new(ComplexMatrix::from_diagonal(&[0.5, 0.5])).is_ok());
    }

    #[test]
    fn fidelity_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rho = random_density(&mut rng, 2);
        assert!((fidelity(&rho, &rho).unwrap() - 1.0).abs() < 1e-9);
        assert!(infidelity(&rho, &rho).unwrap().abs() < 1e-9);
        let zero = DensityOperator::pure(&Statevector::basis(1, 0).unwrap());
        let one = DensityOperator::pure(&Statevector::basis(1, 1).unwrap());
        assert!(fidelity(&zero, &one).unwrap() < 1e-9);
        assert!((infidelity(&zero, &one).unwrap() - 1.0).abs() < 1e-9);
        for _ in 0..10 {
            let psi = random_state(&mut rng, 2);
            let phi = random_state(&mut rng, 2);
            let f = fidelity(&DensityOperator::pure(&psi), &DensityOperator::pure(&phi)).unwrap();
            // pure states have rank-one M, whose clamped sqrt is sensitive at ~1e-5·√ε
            assert!((f - psi.inner(&phi).norm()).abs() < 1e-7);
        }
    }

    /// Independent route for the fidelity: `‖√ρ √σ‖_tr`.
    fn fidelity_trace_norm(rho: &DensityOperator, sigma: &DensityOperator) -> f64 {
        let a = sqrt_psd(rho.matrix()).unwrap().matmul(&sqrt_psd(sigma.matrix()).unwrap());
        let ata = a.adjoint().matmul(&a);
        eigh(&ata).unwrap().eigenvalues.iter().map(|l| l.max(0.0).sqrt()).sum()
    }

    #[test]
    fn mixed_infidelity_matches_trace_norm_route() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let rho = random_density(&mut rng, 2);
            let sigma = random_density(&mut rng, 2);
            let f = fidelity_trace_norm(&rho, &sigma);
            assert!((infidelity(&rho, &sigma).unwrap() - (1.0 - f * f)).abs() < 1e-10);
        }
    }

    #[test]
    fn fidelity_properties_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for i in 0..120 {
            let n = 1 + i % 3;
            let rho = random_density(&mut rng, n);
            let sigma = random_density(&mut rng, n);
            let f = fidelity(&rho, &sigma).unwrap();
            let g = fidelity(&sigma, &rho).unwrap();
            assert!((0.0..=1.0).contains(&f));
            assert!((f - g).abs() < 1e-9);
            // distinct random states are never near-identical
            assert!(rho.matrix().max_abs_diff(sigma.matrix()) > 1e-8);
            assert!(f < 1.0 - 1e-8);
            assert!((fidelity(&rho, &rho).unwrap() - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn purity_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let psi = random_state(&mut rng, 2);
        assert!((purity(&DensityOperator::pure(&psi)) - 1.0).abs() < 1e-14);
        assert!((purity(&DensityOperator::maximally_mixed(1)) - 0.5).abs() < 1e-15);
        let sigma = random_density(&mut rng, 2);
        let from_eigs: f64 = eigh(sigma.matrix()).unwrap().eigenvalues.iter().map(|l| l * l).sum();
        assert!((purity(&sigma) - from_eigs).abs() < 1e-14);
    }

    #[test]
    fn pauli_wrappers() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let psi = random_state(&mut rng, 3);
        let p = PauliString::parse("X0 Z2", 3).unwrap();
        let back = psi.apply_pauli(&p).unwrap().apply_pauli(&p).unwrap();
        assert!((back.inner(&psi).re - 1.0).abs() < 1e-14);
        let r = psi.apply_rotation(&p, 0.3).unwrap();
        assert!((r.norm() - 1.0).abs() < 1e-14);
    }
}
