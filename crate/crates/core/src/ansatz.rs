//! Product-of-Pauli-rotations ansatz on a visible+hidden register.
//!
//! `ψ(θ) = e^{-iθ_N A_N} ··· e^{-iθ_1 A_1} |ψ_ref>`, with `A_1` applied first,
//! and the trial state is `σ(θ) = Tr_H |ψ(θ)><ψ(θ)|`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{apply_visible, reduced_cross, ComplexMatrix};
use crate::pauli::PauliString;
use crate::states::{DensityOperator, Statevector};

#[derive(Debug, Clone, PartialEq)]
pub struct Ansatz {
    n_v: usize,
    n_h: usize,
    reference: Statevector,
    generators: Vec<PauliString>,
    params: Vec<f64>,
}

impl Ansatz {
    /// Empty ansatz on `reference`, which must span `n_v + n_h` qubits.
    pub fn new(reference: Statevector, n_v: usize, n_h: usize) -> Result<Self> {
        if reference.n_qubits() != n_v + n_h {
            return Err(Error::DimensionMismatch {
                expected: n_v + n_h,
                got: reference.n_qubits(),
            });
        }
        Ok(Self {
            n_v,
            n_h,
            reference,
            generators: Vec::new(),
            params: Vec::new(),
        })
    }

    pub fn with_generators(mut self, generators: Vec<PauliString>, params: Vec<f64>) -> Result<Self> {
        if generators.len() != params.len() {
            return Err(Error::DimensionMismatch {
                expected: generators.len(),
                got: params.len(),
            });
        }
        for g in &generators {
            self.check_generator(g)?;
        }
        self.generators = generators;
        self.params = params;
        Ok(self)
    }

    pub fn n_v(&self) -> usize {
        self.n_v
    }

    pub fn n_h(&self) -> usize {
        self.n_h
    }

    pub fn reference(&self) -> &Statevector {
        &self.reference
    }

    pub fn generators(&self) -> &[PauliString] {
        &self.generators
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        self.check_params(params)?;
        self.params.copy_from_slice(params);
        Ok(())
    }

    /// New ansatz with `g` appended at angle `theta0`; earlier angles unchanged.
    pub fn append(&self, g: PauliString, theta0: f64) -> Result<Self> {
        self.check_generator(&g)?;
        let mut next = self.clone();
        next.generators.push(g);
        next.params.push(theta0);
        Ok(next)
    }

    pub fn evaluate(&self) -> Statevector {
        self.evaluate_at(&self.params).expect("own parameters have the right length")
    }

    /// `ψ(θ)` for an arbitrary parameter vector of the right length.
    pub fn evaluate_at(&self, params: &[f64]) -> Result<Statevector> {
        self.check_params(params)?;
        let mut amps = self.reference.amplitudes().to_vec();
        for (g, &theta) in self.generators.iter().zip(params) {
            g.rotate_in_place(&mut amps, theta)?;
        }
        Ok(Statevector::from_evolved(self.n_v + self.n_h, amps))
    }

    pub fn trial_density(&self) -> DensityOperator {
        self.evaluate()
            .reduced(self.n_v, self.n_h)
            .expect("ansatz register matches its own split")
    }

    pub fn trial_density_at(&self, params: &[f64]) -> Result<DensityOperator> {
        self.evaluate_at(params)?.reduced(self.n_v, self.n_h)
    }

    /// `∂σ/∂θ_k` for every parameter.
    ///
    /// `|∂_kψ> = U_N···U_{k+1} (-iA_k) U_k···U_1 |ψ_ref>`, built from the cached
    /// prefix states; the derivative of `σ` is `Tr_H(|∂_kψ><ψ| + h.c.)`.
    pub fn density_derivatives(&self) -> Vec<ComplexMatrix> {
        let n = self.n_v + self.n_h;
        let mut prefix = self.reference.amplitudes().to_vec();
        let mut out = Vec::with_capacity(self.len());
        let psi = self.evaluate();
        let mut scratch = vec![Complex64::new(0.0, 0.0); prefix.len()];
        for k in 0..self.len() {
            self.generators[k]
                .rotate_in_place(&mut prefix, self.params[k])
                .expect("generator matches register");
            self.generators[k]
                .apply_into(&prefix, &mut scratch)
                .expect("generator matches register");
            let mut d: Vec<Complex64> = scratch.iter().map(|a| Complex64::new(a.im, -a.re)).collect();
            for (g, &theta) in self.generators[k + 1..].iter().zip(&self.params[k + 1..]) {
                g.rotate_in_place(&mut d, theta).expect("generator matches register");
            }
            let cross = reduced_cross(&d, psi.amplitudes(), self.n_v, self.n_h)
                .expect("register sizes agree");
            out.push(cross.add(&cross.adjoint()));
            debug_assert_eq!(d.len(), 1 << n);
        }
        out
    }

    /// `Tr(G ∂σ/∂θ_k)` for every `k` by one reverse sweep.
    ///
    /// With `λ = (G ⊗ I)ψ`, each entry is `2 Im <W_k† λ | A_k W_k† ψ>` where
    /// `W_k = U_N···U_{k+1}`; both vectors are unwound one gate at a time.
    pub fn contract_derivatives(&self, params: &[f64], g: &ComplexMatrix) -> Result<Vec<f64>> {
        let psi = self.evaluate_at(params)?;
        let mut lambda = apply_visible(g, psi.amplitudes(), self.n_v)?;
        let mut phi = psi.into_amplitudes();
        let mut scratch = vec![Complex64::new(0.0, 0.0); phi.len()];
        let mut grad = vec![0.0; params.len()];
        for k in (0..params.len()).rev() {
            let gen = &self.generators[k];
            gen.apply_into(&phi, &mut scratch)?;
            let overlap: Complex64 = lambda.iter().zip(&scratch).map(|(l, a)| l.conj() * a).sum();
            grad[k] = 2.0 * overlap.im;
            gen.rotate_in_place(&mut phi, -params[k])?;
            gen.rotate_in_place(&mut lambda, -params[k])?;
        }
        Ok(grad)
    }

    /// One `generator, θ` line per parameter, θ at 17 significant digits.
    pub fn to_lines(&self) -> String {
        let mut s = String::new();
        for (g, t) in self.generators.iter().zip(&self.params) {
            s.push_str(&format!("{g}, {t:.16e}\n"));
        }
        s
    }

    /// Inverse of [`Ansatz::to_lines`] on top of this ansatz's reference.
    pub fn parse_lines(&self, text: &str) -> Result<Self> {
        let n = self.n_v + self.n_h;
        let mut gens = Vec::new();
        let mut params = Vec::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (g, t) = line
                .rsplit_once(',')
                .ok_or_else(|| Error::Parse(format!("expected `generator, angle`: {line:?}")))?;
            gens.push(PauliString::parse(g, n)?);
            params.push(
                t.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("bad angle in {line:?}: {e}")))?,
            );
        }
        Self::new(self.reference.clone(), self.n_v, self.n_h)?.with_generators(gens, params)
    }

    fn check_generator(&self, g: &PauliString) -> Result<()> {
        if g.n_qubits() != self.n_v + self.n_h {
            return Err(Error::DimensionMismatch {
                expected: self.n_v + self.n_h,
                got: g.n_qubits(),
            });
        }
        Ok(())
    }

    fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.generators.len() {
            return Err(Error::DimensionMismatch {
                expected: self.generators.len(),
                got: params.len(),
            });
        }
        Ok(())
    }
}
