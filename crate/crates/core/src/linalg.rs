//! Dense complex Hermitian linear algebra.
//!
//! Every matrix function goes through one spectral decomposition. Register
//! layout: a full basis index is `v + 2^n_V · h` with `v` the visible part and
//! `h` the hidden part.

use std::ops::{Index, IndexMut};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Largest register handled with dense matrices.
pub const MAX_DENSE_QUBITS: usize = 12;
/// Largest dense matrix dimension.
pub const MAX_DIM: usize = 1 << MAX_DENSE_QUBITS;
/// Hermiticity tolerance for matrices handed to [`eigh`].
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Eigenvalues in `[-PSD_CLAMP, 0)` are round-off and clamp to zero.
pub const PSD_CLAMP: f64 = 1e-10;
/// Relative cutoff below which eigenvalues count as zero for pseudo-inverses.
pub const PINV_RCOND: f64 = 1e-12;

const EIGH_MAX_SWEEPS: usize = 100_000;

/// Square complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    inner: DMatrix<Complex64>,
}

impl ComplexMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            inner: DMatrix::zeros(dim, dim),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            inner: DMatrix::identity(dim, dim),
        }
    }

    /// Builds a matrix from row-major entries.
    pub fn from_row_slice(dim: usize, entries: &[Complex64]) -> Self {
        assert_eq!(entries.len(), dim * dim, "entry count must be dim²");
        Self {
            inner: DMatrix::from_row_slice(dim, dim, entries),
        }
    }

    pub fn from_fn(dim: usize, f: impl FnMut(usize, usize) -> Complex64) -> Self {
        Self {
            inner: DMatrix::from_fn(dim, dim, f),
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = Complex64::new(d, 0.0);
        }
        m
    }

    /// `|ψ><ψ|`
    pub fn outer(psi: &[Complex64]) -> Self {
        Self::from_fn(psi.len(), |r, c| psi[r] * psi[c].conj())
    }

    pub fn dim(&self) -> usize {
        self.inner.nrows()
    }

    pub fn as_nalgebra(&self) -> &DMatrix<Complex64> {
        &self.inner
    }

    pub fn matmul(&self, other: &Self) -> Self {
        Self {
            inner: &self.inner * &other.inner,
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            inner: &self.inner + &other.inner,
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            inner: &self.inner - &other.inner,
        }
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            inner: &self.inner * Complex64::new(factor, 0.0),
        }
    }

    pub fn adjoint(&self) -> Self {
        Self {
            inner: self.inner.adjoint(),
        }
    }

    /// `(M + M†) / 2`
    pub fn hermitian_part(&self) -> Self {
        Self {
            inner: (&self.inner + self.inner.adjoint()) * Complex64::new(0.5, 0.0),
        }
    }

    /// `A B + B A`
    pub fn anticommutator(&self, other: &Self) -> Self {
        self.matmul(other).add(&other.matmul(self))
    }

    pub fn commutator(&self, other: &Self) -> Self {
        self.matmul(other).sub(&other.matmul(self))
    }

    pub fn trace(&self) -> Complex64 {
        self.inner.trace()
    }

    /// `Tr(A B)` without forming the product.
    pub fn trace_product(&self, other: &Self) -> Complex64 {
        let n = self.dim();
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..n {
            for k in 0..n {
                acc += self.inner[(i, k)] * other.inner[(k, i)];
            }
        }
        acc
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.inner
            .iter()
            .zip(other.inner.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.inner.iter().map(|a| a.norm()).fold(0.0, f64::max)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        let n = self.dim();
        (0..n).all(|r| (r..n).all(|c| (self.inner[(r, c)] - self.inner[(c, r)].conj()).norm() < tol))
    }

    pub fn matvec(&self, v: &[Complex64]) -> Vec<Complex64> {
        let n = self.dim();
        assert_eq!(v.len(), n, "vector length must match matrix dimension");
        (0..n)
            .map(|r| (0..n).map(|c| self.inner[(r, c)] * v[c]).sum())
            .collect()
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;

    fn index(&self, idx: (usize, usize)) -> &Complex64 {
        &self.inner[idx]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, idx: (usize, usize)) -> &mut Complex64 {
        &mut self.inner[idx]
    }
}

/// Kronecker product `A ⊗ B` (B indexes the low bits).
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    ComplexMatrix {
        inner: a.inner.kronecker(&b.inner),
    }
}

/// Spectral decomposition `M = V diag(λ) V†`, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: ComplexMatrix,
}

impl EigenSystem {
    pub fn reconstruct(&self) -> ComplexMatrix {
        self.map_complex(|l| Complex64::new(l, 0.0))
    }

    /// `V diag(f(λ)) V†`, failing on the first non-finite value.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<ComplexMatrix> {
        let mut values = Vec::with_capacity(self.eigenvalues.len());
        for &lam in &self.eigenvalues {
            let v = f(lam);
            if !v.is_finite() {
                return Err(Error::Singularity { eigenvalue: lam });
            }
            values.push(Complex64::new(v, 0.0));
        }
        Ok(self.with_values(&values))
    }

    pub fn map_complex(&self, f: impl Fn(f64) -> Complex64) -> ComplexMatrix {
        let values: Vec<Complex64> = self.eigenvalues.iter().map(|&l| f(l)).collect();
        self.with_values(&values)
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues.last().copied().unwrap_or(0.0)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues.first().copied().unwrap_or(0.0)
    }

    fn with_values(&self, values: &[Complex64]) -> ComplexMatrix {
        let v = &self.eigenvectors.inner;
        let n = v.nrows();
        let mut scaled = v.clone();
        for (c, &d) in values.iter().enumerate() {
            for r in 0..n {
                scaled[(r, c)] *= d;
            }
        }
        ComplexMatrix {
            inner: scaled * v.adjoint(),
        }
    }
}

/// Full eigendecomposition of a Hermitian matrix.
pub fn eigh(m: &ComplexMatrix) -> Result<EigenSystem> {
    let dim = m.dim();
    if dim > MAX_DIM {
        return Err(Error::Capacity {
            qubits: dim.trailing_zeros() as usize,
            max: MAX_DENSE_QUBITS,
        });
    }
    if !m.is_hermitian(HERMITIAN_TOL) {
        return Err(Error::Parameter("eigh requires a Hermitian matrix".into()));
    }
    let sym = m.hermitian_part();
    let eig = sym
        .inner
        .try_symmetric_eigen(f64::EPSILON, EIGH_MAX_SWEEPS)
        .ok_or_else(|| {
            Error::Numerical(format!(
                "Hermitian eigensolver did not converge within {EIGH_MAX_SWEEPS} sweeps (dim {dim}, max |entry| {:e})",
                m.max_abs()
            ))
        })?;
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(dim, dim, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(EigenSystem {
        eigenvalues,
        eigenvectors: ComplexMatrix { inner: vectors },
    })
}

/// `f(M)` for Hermitian `M` and real `f`.
pub fn hermitian_fn(m: &ComplexMatrix, f: impl Fn(f64) -> f64) -> Result<ComplexMatrix> {
    eigh(m)?.map(f)
}

/// Applies the round-off clamp to a nominally non-negative eigenvalue.
pub fn clamp_psd(lambda: f64) -> Result<f64> {
    if lambda >= 0.0 {
        Ok(lambda)
    } else if lambda >= -PSD_CLAMP {
        Ok(0.0)
    } else {
        Err(Error::Singularity { eigenvalue: lambda })
    }
}

/// Principal square root of a PSD matrix.
pub fn sqrt_psd(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    let eig = eigh(m)?;
    for &l in &eig.eigenvalues {
        clamp_psd(l)?;
    }
    eig.map(|l| l.max(0.0).sqrt())
}

/// Inverse of a Hermitian matrix with no zero eigenvalue.
pub fn inverse_hermitian(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    let eig = eigh(m)?;
    if let Some(&l) = eig.eigenvalues.iter().find(|l| l.abs() <= f64::MIN_POSITIVE) {
        return Err(Error::Singularity { eigenvalue: l });
    }
    eig.map(|l| 1.0 / l)
}

/// Partial trace over the hidden register of a full-register operator.
pub fn partial_trace_hidden(full: &ComplexMatrix, n_v: usize, n_h: usize) -> Result<ComplexMatrix> {
    let dv = 1usize << n_v;
    let dh = 1usize << n_h;
    if full.dim() != dv * dh {
        return Err(Error::DimensionMismatch {
            expected: dv * dh,
            got: full.dim(),
        });
    }
    Ok(ComplexMatrix::from_fn(dv, |r, c| {
        (0..dh).map(|h| full[(r + dv * h, c + dv * h)]).sum()
    }))
}

/// `Tr_H |a><b|` on the visible register, never forming the outer product.
pub fn reduced_cross(a: &[Complex64], b: &[Complex64], n_v: usize, n_h: usize) -> Result<ComplexMatrix> {
    let dv = 1usize << n_v;
    let dh = 1usize << n_h;
    for len in [a.len(), b.len()] {
        if len != dv * dh {
            return Err(Error::DimensionMismatch {
                expected: dv * dh,
                got: len,
            });
        }
    }
    let mut out = ComplexMatrix::zeros(dv);
    for h in 0..dh {
        let a_blk = &a[dv * h..dv * (h + 1)];
        let b_blk = &b[dv * h..dv * (h + 1)];
        for (r, ar) in a_blk.iter().enumerate() {
            for (c, bc) in b_blk.iter().enumerate() {
                out[(r, c)] += ar * bc.conj();
            }
        }
    }
    Ok(out)
}

/// `Tr_H |ψ><ψ|`
pub fn reduced_from_statevector(psi: &[Complex64], n_v: usize, n_h: usize) -> Result<ComplexMatrix> {
    let mut out = reduced_cross(psi, psi, n_v, n_h)?;
    // exact Hermiticity; the two triangles are computed independently above
    out = out.hermitian_part();
    Ok(out)
}

/// `(G ⊗ I_H) ψ` for an operator `G` on the visible register.
pub fn apply_visible(g: &ComplexMatrix, psi: &[Complex64], n_v: usize) -> Result<Vec<Complex64>> {
    let dv = 1usize << n_v;
    if g.dim() != dv || !psi.len().is_multiple_of(dv) {
        return Err(Error::DimensionMismatch {
            expected: dv,
            got: g.dim(),
        });
    }
    let mut out = vec![Complex64::new(0.0, 0.0); psi.len()];
    for (blk_in, blk_out) in psi.chunks_exact(dv).zip(out.chunks_exact_mut(dv)) {
        for (r, o) in blk_out.iter_mut().enumerate() {
            *o = (0..dv).map(|c| g[(r, c)] * blk_in[c]).sum();
        }
    }
    Ok(out)
}
