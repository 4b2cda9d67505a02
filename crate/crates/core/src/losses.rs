//! The three training losses and their analytic gradients.
//!
//! Every gradient is a contraction `∂L/∂θ_k = Tr(G ∂σ/∂θ_k)` with a
//! loss-specific Hermitian operator `G = ∂L/∂σ` evaluated at the current
//! trial state:
//!
//! | loss    | value                   | `G`                                  |
//! |---------|-------------------------|--------------------------------------|
//! | overlap | `1 - F(ρ,σ)²`           | `-F √ρ M^{-1/2} √ρ`, `M = √ρ σ √ρ`   |
//! | Gibbs   | `-Tr(ρ_G σ) + Tr(σ²)/2` | `σ - ρ_G`                            |
//! | Rényi   | `ln Tr(σ² ρ^{-1})`      | `{σ, ρ^{-1}} / Tr(σ² ρ^{-1})`        |

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ansatz::Ansatz;
use crate::error::{Error, Result};
use crate::linalg::{apply_visible, eigh, inverse_hermitian, sqrt_psd, ComplexMatrix, PINV_RCOND};
use crate::model::ProblemInstance;
use crate::pauli::OperatorPool;
use crate::states::{fidelity_with_sqrt, DensityOperator, Statevector};

/// Smallest eigenvalue a Rényi target may have.
pub const RENYI_MIN_EIGENVALUE: f64 = 1e-12;
/// Central-difference step of the overlap fallback.
pub const FALLBACK_STEP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Overlap,
    Gibbs,
    Renyi,
}

impl LossKind {
    pub const ALL: [LossKind; 3] = [LossKind::Overlap, LossKind::Gibbs, LossKind::Renyi];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Overlap => "overlap",
            LossKind::Gibbs => "gibbs",
            LossKind::Renyi => "renyi",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "overlap" => Ok(LossKind::Overlap),
            "gibbs" => Ok(LossKind::Gibbs),
            "renyi" | "rényi" => Ok(LossKind::Renyi),
            other => Err(Error::Parse(format!("unknown loss {other:?}"))),
        }
    }
}

/// Gradient values plus whether the finite-difference fallback produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientEval {
    pub values: Vec<f64>,
    pub used_fallback: bool,
}

/// Target data and cached spectral functions for one loss.
#[derive(Debug, Clone)]
pub struct LossContext {
    kind: LossKind,
    target_exact: DensityOperator,
    target_for_loss: DensityOperator,
    sqrt_rho: Option<ComplexMatrix>,
    rho_inv: Option<ComplexMatrix>,
    scale: f64,
}

impl LossContext {
    /// `target_taylor` is used only by the Gibbs loss.
    pub fn new(kind: LossKind, target_exact: DensityOperator, target_taylor: DensityOperator) -> Result<Self> {
        if target_exact.dim() != target_taylor.dim() {
            return Err(Error::DimensionMismatch {
                expected: target_exact.dim(),
                got: target_taylor.dim(),
            });
        }
        let (target_for_loss, sqrt_rho, rho_inv) = match kind {
            LossKind::Overlap => {
                let s = sqrt_psd(target_exact.matrix())?;
                (target_exact.clone(), Some(s), None)
            }
            LossKind::Gibbs => (target_taylor, None, None),
            LossKind::Renyi => {
                let eig = eigh(target_exact.matrix())?;
                let min = eig.min_eigenvalue();
                if min <= RENYI_MIN_EIGENVALUE {
                    return Err(Error::Singularity { eigenvalue: min });
                }
                let inv = inverse_hermitian(target_exact.matrix())?;
                (target_exact.clone(), None, Some(inv))
            }
        };
        Ok(Self {
            kind,
            target_exact,
            target_for_loss,
            sqrt_rho,
            rho_inv,
            scale: 1.0,
        })
    }

    pub fn from_instance(kind: LossKind, inst: &ProblemInstance) -> Result<Self> {
        Self::new(kind, inst.target_exact.clone(), inst.target_taylor.clone())
    }

    /// Same loss multiplied by a positive constant.
    pub fn with_scale(mut self, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Parameter(format!("loss scale must be positive, got {scale}")));
        }
        self.scale = scale;
        Ok(self)
    }

    pub fn kind(&self) -> LossKind {
        self.kind
    }

    pub fn target_exact(&self) -> &DensityOperator {
        &self.target_exact
    }

    pub fn target_for_loss(&self) -> &DensityOperator {
        &self.target_for_loss
    }

    pub fn n_v(&self) -> usize {
        self.target_exact.n_qubits()
    }

    /// Loss at `σ = target_for_loss`: `-Tr(ρ_G²)/2` for Gibbs, zero otherwise.
    pub fn minimum_value(&self) -> f64 {
        match self.kind {
            LossKind::Gibbs => {
                let g = self.target_for_loss.matrix();
                -0.5 * g.trace_product(g).re * self.scale
            }
            _ => 0.0,
        }
    }

    pub fn value(&self, sigma: &DensityOperator) -> Result<f64> {
        self.check_dim(sigma)?;
        let s = sigma.matrix();
        let raw = match self.kind {
            LossKind::Overlap => {
                let f = fidelity_with_sqrt(self.sqrt_rho.as_ref().expect("overlap caches √ρ"), s)?;
                1.0 - f * f
            }
            LossKind::Gibbs => {
                let g = self.target_for_loss.matrix();
                -g.trace_product(s).re + 0.5 * s.trace_product(s).re
            }
            LossKind::Renyi => {
                let inv = self.rho_inv.as_ref().expect("renyi caches ρ^-1");
                let t = s.matmul(inv).trace_product(s).re;
                if t <= 0.0 {
                    return Err(Error::Numerical(format!("Tr(σ²ρ⁻¹) = {t:e} is not positive")));
                }
                t.ln()
            }
        };
        Ok(raw * self.scale)
    }

    /// `∂L/∂σ`, or `None` when the overlap operator `M` is rank-deficient.
    pub fn gradient_operator(&self, sigma: &DensityOperator) -> Result<Option<ComplexMatrix>> {
        self.check_dim(sigma)?;
        let s = sigma.matrix();
        let g = match self.kind {
            LossKind::Gibbs => s.sub(self.target_for_loss.matrix()),
            LossKind::Renyi => {
                let inv = self.rho_inv.as_ref().expect("renyi caches ρ^-1");
                let t = s.matmul(inv).trace_product(s).re;
                s.anticommutator(inv).scale(1.0 / t)
            }
            LossKind::Overlap => {
                let sqrt_rho = self.sqrt_rho.as_ref().expect("overlap caches √ρ");
                let m = sqrt_rho.matmul(s).matmul(sqrt_rho).hermitian_part();
                let eig = eigh(&m)?;
                let max = eig.max_eigenvalue();
                if max <= 0.0 || eig.min_eigenvalue() <= PINV_RCOND * max {
                    return Ok(None);
                }
                let f: f64 = eig.eigenvalues.iter().map(|l| l.sqrt()).sum();
                let inv_sqrt = eig.map(|l| 1.0 / l.sqrt())?;
                sqrt_rho.matmul(&inv_sqrt).matmul(sqrt_rho).hermitian_part().scale(-f)
            }
        };
        Ok(Some(g.scale(self.scale)))
    }

    fn check_dim(&self, sigma: &DensityOperator) -> Result<()> {
        if sigma.dim() != self.target_exact.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.target_exact.dim(),
                got: sigma.dim(),
            });
        }
        Ok(())
    }

    fn check_ansatz(&self, a: &Ansatz) -> Result<()> {
        if a.n_v() != self.n_v() {
            return Err(Error::DimensionMismatch {
                expected: self.n_v(),
                got: a.n_v(),
            });
        }
        Ok(())
    }
}

/// Loss of the ansatz's current trial state.
pub fn loss_value(ctx: &LossContext, sigma: &DensityOperator) -> Result<f64> {
    ctx.value(sigma)
}

/// Loss at arbitrary parameters of `a`.
pub fn loss_at(ctx: &LossContext, a: &Ansatz, params: &[f64]) -> Result<f64> {
    ctx.value(&a.trial_density_at(params)?)
}

/// `∂L/∂θ` at the ansatz's own parameters.
pub fn loss_gradient(ctx: &LossContext, a: &Ansatz) -> Result<GradientEval> {
    loss_gradient_at(ctx, a, a.params())
}

/// `∂L/∂θ` at `params` by a reverse sweep over the circuit.
pub fn loss_gradient_at(ctx: &LossContext, a: &Ansatz, params: &[f64]) -> Result<GradientEval> {
    loss_and_gradient_at(ctx, a, params).map(|(_, g)| g)
}

/// Loss and gradient sharing one evaluation of the trial state.
pub fn loss_and_gradient_at(ctx: &LossContext, a: &Ansatz, params: &[f64]) -> Result<(f64, GradientEval)> {
    ctx.check_ansatz(a)?;
    let sigma = a.trial_density_at(params)?;
    let value = ctx.value(&sigma)?;
    let grad = match ctx.gradient_operator(&sigma)? {
        Some(g) => GradientEval {
            values: a.contract_derivatives(params, &g)?,
            used_fallback: false,
        },
        None => {
            log::debug!("overlap gradient: rank-deficient M, using finite differences");
            let mut values = Vec::with_capacity(params.len());
            let mut x = params.to_vec();
            for k in 0..params.len() {
                x[k] = params[k] + FALLBACK_STEP;
                let fp = loss_at(ctx, a, &x)?;
                x[k] = params[k] - FALLBACK_STEP;
                let fm = loss_at(ctx, a, &x)?;
                x[k] = params[k];
                values.push((fp - fm) / (2.0 * FALLBACK_STEP));
            }
            GradientEval {
                values,
                used_fallback: true,
            }
        }
    };
    Ok((value, grad))
}

/// Chain rule through explicit `∂σ/∂θ_k` matrices. Slower route kept for
/// cross-checking [`loss_gradient`].
pub fn loss_gradient_from_derivatives(ctx: &LossContext, a: &Ansatz) -> Result<Option<Vec<f64>>> {
    ctx.check_ansatz(a)?;
    let sigma = a.trial_density();
    let Some(g) = ctx.gradient_operator(&sigma)? else {
        return Ok(None);
    };
    Ok(Some(
        a.density_derivatives()
            .iter()
            .map(|d| g.trace_product(d).re)
            .collect(),
    ))
}

/// Derivative of the loss for each pool candidate appended at angle zero.
///
/// Appending `A` at zero gives `∂ψ = -iAψ`, so the entry is
/// `2 Im <(G ⊗ I)ψ | A | ψ>`; results are ordered by pool index.
pub fn pool_gradients(ctx: &LossContext, a: &Ansatz, pool: &OperatorPool) -> Result<GradientEval> {
    ctx.check_ansatz(a)?;
    let n_total = a.n_v() + a.n_h();
    if pool.n_qubits() != n_total {
        return Err(Error::DimensionMismatch {
            expected: n_total,
            got: pool.n_qubits(),
        });
    }
    let psi = a.evaluate();
    let sigma = psi.reduced(a.n_v(), a.n_h())?;
    match ctx.gradient_operator(&sigma)? {
        Some(g) => {
            let lambda = apply_visible(&g, psi.amplitudes(), a.n_v())?;
            let values = pool
                .elements()
                .par_iter()
                .map(|p| Ok(2.0 * p.expectation_between(&lambda, psi.amplitudes())?.im))
                .collect::<Result<Vec<f64>>>()?;
            Ok(GradientEval {
                values,
                used_fallback: false,
            })
        }
        None => {
            log::debug!("overlap pool gradients: rank-deficient M, using finite differences");
            let values = pool
                .elements()
                .par_iter()
                .map(|p| {
                    let shifted = |t: f64| -> Result<f64> {
                        let moved: Statevector = psi.apply_rotation(p, t)?;
                        ctx.value(&moved.reduced(a.n_v(), a.n_h())?)
                    };
                    Ok((shifted(FALLBACK_STEP)? - shifted(-FALLBACK_STEP)?) / (2.0 * FALLBACK_STEP))
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(GradientEval {
                values,
                used_fallback: true,
            })
        }
    }
}

/// `max |g_i|`, zero for an empty vector.
pub fn grad_infinity_norm(g: &[f64]) -> f64 {
    g.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Index of the largest `|g_i|`, lowest index on ties.
pub fn argmax_abs(g: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, x) in g.iter().enumerate() {
        let v = x.abs();
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}
