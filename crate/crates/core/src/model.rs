//! Random problem instances: normalised two-local Hamiltonians, their exact and
//! Taylor-truncated thermal states, and partially entangled reference states.
//!
//! Randomness comes from `ChaCha8Rng::seed_from_u64` (the 64-bit seed is
//! expanded to a ChaCha key with rand_core's PCG32 stream). Each trial owns
//! its generator: the Hamiltonian uses `base_seed + trial`, the reference
//! angles `base_seed + 1_000_000 + trial`.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{eigh, ComplexMatrix};
use crate::pauli::{pool_klocal, PauliString};
use crate::states::{DensityOperator, Statevector};

pub const DEFAULT_BETA: f64 = 1.0;
pub const DEFAULT_TAYLOR_ORDER: usize = 5;
/// Negative spectral weight removed from a Taylor target beyond which a
/// truncation warning is raised.
pub const CLAMPED_MASS_WARN: f64 = 1e-6;
/// Offset between the Hamiltonian seed and the reference-angle seed.
pub const REFERENCE_SEED_OFFSET: u64 = 1_000_000;

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `H = Σ c_i P_i` over all one- and two-local Paulis on the visible register.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoLocalHamiltonian {
    n_v: usize,
    terms: Vec<(PauliString, f64)>,
}

impl TwoLocalHamiltonian {
    pub fn new(n_v: usize, terms: Vec<(PauliString, f64)>) -> Result<Self> {
        for (p, _) in &terms {
            if p.n_qubits() != n_v {
                return Err(Error::DimensionMismatch {
                    expected: n_v,
                    got: p.n_qubits(),
                });
            }
            if p.weight() > 2 {
                return Err(Error::Parameter(format!("term {p} is not two-local")));
            }
        }
        Ok(Self { n_v, terms })
    }

    pub fn n_v(&self) -> usize {
        self.n_v
    }

    pub fn terms(&self) -> &[(PauliString, f64)] {
        &self.terms
    }

    pub fn coefficient_norm(&self) -> f64 {
        self.terms.iter().map(|(_, c)| c * c).sum::<f64>().sqrt()
    }

    pub fn dense(&self) -> Result<ComplexMatrix> {
        let dim = 1usize << self.n_v;
        let mut m = ComplexMatrix::zeros(dim);
        for (p, c) in &self.terms {
            let pm = p.to_matrix()?;
            m = m.add(&pm.scale(*c));
        }
        Ok(m)
    }
}

/// Normal coefficients on every element of the visible two-local pool,
/// rescaled to unit Euclidean norm.
pub fn random_hamiltonian<R: Rng + ?Sized>(n_v: usize, rng: &mut R) -> Result<TwoLocalHamiltonian> {
    let pool = pool_klocal(n_v, 2)?;
    let mut coeffs: Vec<f64> = (0..pool.len()).map(|_| rng.sample(StandardNormal)).collect();
    let norm = coeffs.iter().map(|c| c * c).sum::<f64>().sqrt();
    for c in &mut coeffs {
        *c /= norm;
    }
    TwoLocalHamiltonian::new(n_v, pool.elements().iter().cloned().zip(coeffs).collect())
}

/// `e^{-βH} / Z`
pub fn gibbs_exact(h: &TwoLocalHamiltonian, beta: f64) -> Result<DensityOperator> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::Parameter(format!("beta must be finite and >= 0, got {beta}")));
    }
    let eig = eigh(&h.dense()?)?;
    // shifting by the ground energy cancels in Z and avoids overflow
    let e0 = eig.min_eigenvalue();
    let unnorm = eig.map(|x| (-beta * (x - e0)).exp())?;
    let z = unnorm.trace().re;
    Ok(DensityOperator::trusted(h.n_v(), unnorm.scale(1.0 / z)))
}

/// Thermal target built from a truncated Taylor series of `e^{-βH}`.
#[derive(Debug, Clone)]
pub struct TaylorGibbs {
    pub density: DensityOperator,
    /// Negative spectral weight removed by the PSD clamp, relative to the
    /// series trace.
    pub clamped_mass: f64,
}

impl TaylorGibbs {
    /// Clamped mass when it exceeds [`CLAMPED_MASS_WARN`].
    pub fn warning(&self) -> Option<f64> {
        (self.clamped_mass > CLAMPED_MASS_WARN).then_some(self.clamped_mass)
    }
}

/// `Σ_{k≤m} (-βH)^k / k!`, symmetrised, clamped to PSD and trace-normalised.
pub fn gibbs_taylor(h: &TwoLocalHamiltonian, beta: f64, order: usize) -> Result<TaylorGibbs> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::Parameter(format!("beta must be finite and >= 0, got {beta}")));
    }
    let dim = 1usize << h.n_v();
    let step = h.dense()?.scale(-beta);
    let mut term = ComplexMatrix::identity(dim);
    let mut sum = term.clone();
    for k in 1..=order {
        term = term.matmul(&step).scale(1.0 / k as f64);
        sum = sum.add(&term);
    }
    let series = sum.hermitian_part();
    let eig = eigh(&series)?;
    let total: f64 = eig.eigenvalues.iter().sum();
    if total <= 0.0 {
        return Err(Error::Numerical(format!(
            "Taylor series of order {order} has non-positive trace {total:e}"
        )));
    }
    let negative: f64 = eig.eigenvalues.iter().filter(|&&l| l < 0.0).map(|l| -l).sum();
    let clamped = eig.map(|l| l.max(0.0))?;
    let kept = clamped.trace().re;
    let clamped_mass = negative / total;
    if clamped_mass > CLAMPED_MASS_WARN {
        log::warn!(
            "Taylor order {order} at beta {beta}: clamped {clamped_mass:e} of negative spectral weight"
        );
    }
    Ok(TaylorGibbs {
        density: DensityOperator::trusted(h.n_v(), clamped.scale(1.0 / kept)),
        clamped_mass,
    })
}

/// Per-qubit `R_y` angles followed by `CNOT(hidden j -> visible j)`.
pub fn reference_from_angles(n_v: usize, n_h: usize, angles: &[f64]) -> Result<Statevector> {
    if n_h != n_v {
        return Err(Error::Unsupported(format!(
            "reference states pair each visible qubit with one hidden qubit (n_V = {n_v}, n_H = {n_h})"
        )));
    }
    let n = n_v + n_h;
    if angles.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: angles.len(),
        });
    }
    let halves: Vec<(f64, f64)> = angles.iter().map(|t| ((t / 2.0).cos(), (t / 2.0).sin())).collect();
    let dim = 1usize << n;
    let mut amps = vec![Complex64::new(0.0, 0.0); dim];
    for b in 0..dim {
        let amp: f64 = halves
            .iter()
            .enumerate()
            .map(|(q, &(c, s))| if b >> q & 1 == 1 { s } else { c })
            .product();
        let mut target = b;
        for j in 0..n_v {
            if b >> (n_v + j) & 1 == 1 {
                target ^= 1 << j;
            }
        }
        amps[target] = Complex64::new(amp, 0.0);
    }
    Statevector::new(amps)
}

/// Random partially entangled reference; returns the state and its angles.
pub fn random_reference<R: Rng + ?Sized>(n_v: usize, n_h: usize, rng: &mut R) -> Result<(Statevector, Vec<f64>)> {
    if n_h != n_v {
        return Err(Error::Unsupported(format!(
            "reference states require n_H = n_V (got {n_v}, {n_h})"
        )));
    }
    let angles: Vec<f64> = (0..n_v + n_h).map(|_| rng.random_range(-PI..PI)).collect();
    let state = reference_from_angles(n_v, n_h, &angles)?;
    Ok((state, angles))
}

/// A target thermal state together with the reference it is learned from.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub n_v: usize,
    pub n_h: usize,
    pub beta: f64,
    /// Seed of the Hamiltonian generator.
    pub seed: u64,
    /// Seed of the reference-angle generator.
    pub reference_seed: u64,
    pub hamiltonian: TwoLocalHamiltonian,
    pub reference_angles: Vec<f64>,
    pub reference: Statevector,
    pub target_exact: DensityOperator,
    pub target_taylor: DensityOperator,
    pub taylor_clamped_mass: f64,
}

impl ProblemInstance {
    /// Instance for `trial` of a suite seeded with `base_seed` (`n_H = n_V = n`).
    pub fn generate(n: usize, beta: f64, base_seed: u64, trial: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Parameter("need at least one visible qubit".into()));
        }
        let seed = base_seed.wrapping_add(trial);
        let reference_seed = base_seed.wrapping_add(REFERENCE_SEED_OFFSET).wrapping_add(trial);
        let hamiltonian = random_hamiltonian(n, &mut seeded_rng(seed))?;
        let (_, angles) = random_reference(n, n, &mut seeded_rng(reference_seed))?;
        Self::from_parts(n, n, beta, seed, reference_seed, hamiltonian, angles)
    }

    pub fn from_parts(
        n_v: usize,
        n_h: usize,
        beta: f64,
        seed: u64,
        reference_seed: u64,
        hamiltonian: TwoLocalHamiltonian,
        reference_angles: Vec<f64>,
    ) -> Result<Self> {
        if hamiltonian.n_v() != n_v {
            return Err(Error::DimensionMismatch {
                expected: n_v,
                got: hamiltonian.n_v(),
            });
        }
        let reference = reference_from_angles(n_v, n_h, &reference_angles)?;
        let target_exact = gibbs_exact(&hamiltonian, beta)?;
        let taylor = gibbs_taylor(&hamiltonian, beta, DEFAULT_TAYLOR_ORDER)?;
        Ok(Self {
            n_v,
            n_h,
            beta,
            seed,
            reference_seed,
            hamiltonian,
            reference_angles,
            reference,
            target_exact,
            target_taylor: taylor.density,
            taylor_clamped_mass: taylor.clamped_mass,
        })
    }

    pub fn n_total(&self) -> usize {
        self.n_v + self.n_h
    }

    /// Visible reduced state of the reference.
    pub fn reference_density(&self) -> Result<DensityOperator> {
        self.reference.reduced(self.n_v, self.n_h)
    }

    pub fn to_file_record(&self) -> InstanceFile {
        InstanceFile {
            n_v: self.n_v,
            n_h: self.n_h,
            beta: self.beta,
            seed: self.seed,
            reference_seed: self.reference_seed,
            coefficients: self
                .hamiltonian
                .terms()
                .iter()
                .map(|(p, c)| TermCoefficient {
                    term: p.to_string(),
                    coefficient: *c,
                })
                .collect(),
            ry_angles: self.reference_angles.clone(),
        }
    }

    pub fn from_file_record(rec: &InstanceFile) -> Result<Self> {
        let terms = rec
            .coefficients
            .iter()
            .map(|t| Ok((PauliString::parse(&t.term, rec.n_v)?, t.coefficient)))
            .collect::<Result<Vec<_>>>()?;
        let h = TwoLocalHamiltonian::new(rec.n_v, terms)?;
        Self::from_parts(rec.n_v, rec.n_h, rec.beta, rec.seed, rec.reference_seed, h, rec.ry_angles.clone())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.to_file_record())?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let rec: InstanceFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        Self::from_file_record(&rec)
    }
}

/// On-disk instance description. Dense matrices are regenerated on load;
/// floats are written in shortest round-trip form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub n_v: usize,
    pub n_h: usize,
    pub beta: f64,
    pub seed: u64,
    pub reference_seed: u64,
    pub coefficients: Vec<TermCoefficient>,
    pub ry_angles: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermCoefficient {
    pub term: String,
    pub coefficient: f64,
}
