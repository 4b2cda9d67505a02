//! BFGS with a strong-Wolfe line search (bracketing + cubic-interpolation zoom).

use crate::error::{Error, Result};

/// Objective with gradient. Methods take `&mut self` so callers can record
/// every evaluation.
pub trait Objective {
    fn value_and_gradient(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>)>;
}

/// Adapter for a pair of closures.
pub struct FnObjective<F, G> {
    pub f: F,
    pub grad: G,
}

impl<F, G> Objective for FnObjective<F, G>
where
    F: FnMut(&[f64]) -> f64,
    G: FnMut(&[f64]) -> Vec<f64>,
{
    fn value_and_gradient(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        Ok(((self.f)(x), (self.grad)(x)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimOptions {
    /// Stop when `‖∇f‖_∞` falls below this.
    pub g_tol: f64,
    pub max_iter: usize,
    /// Sufficient-decrease constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
    /// Function evaluations allowed per line search.
    pub max_line_search: usize,
}

impl Default for OptimOptions {
    fn default() -> Self {
        Self {
            g_tol: 1e-8,
            max_iter: 1000,
            c1: 1e-4,
            c2: 0.9,
            max_line_search: 40,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    GradTol,
    MaxIter,
    LineSearchFail,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimResult {
    pub x_final: Vec<f64>,
    pub f_final: f64,
    pub grad_final_norm: f64,
    pub iterations: usize,
    pub f_evals: usize,
    pub converged: bool,
    pub termination: Termination,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn axpy(x: &[f64], alpha: f64, p: &[f64]) -> Vec<f64> {
    x.iter().zip(p).map(|(a, b)| a + alpha * b).collect()
}

/// Dense inverse-Hessian approximation.
struct InverseHessian {
    n: usize,
    h: Vec<f64>,
    is_identity: bool,
}

impl InverseHessian {
    fn identity(n: usize) -> Self {
        let mut h = vec![0.0; n * n];
        for i in 0..n {
            h[i * n + i] = 1.0;
        }
        Self {
            n,
            h,
            is_identity: true,
        }
    }

    fn reset(&mut self) {
        *self = Self::identity(self.n);
    }

    fn direction(&self, g: &[f64]) -> Vec<f64> {
        let n = self.n;
        (0..n).map(|i| -dot(&self.h[i * n..(i + 1) * n], g)).collect()
    }

    /// `H ← (I - ρ s yᵀ) H (I - ρ y sᵀ) + ρ s sᵀ`, skipped without curvature.
    fn update(&mut self, s: &[f64], y: &[f64]) -> bool {
        let sy = dot(s, y);
        let ns = dot(s, s).sqrt();
        let ny = dot(y, y).sqrt();
        if sy <= 1e-12 * ns * ny || sy <= 0.0 {
            return false;
        }
        let n = self.n;
        let rho = 1.0 / sy;
        let hy: Vec<f64> = (0..n).map(|i| dot(&self.h[i * n..(i + 1) * n], y)).collect();
        let yhy = dot(y, &hy);
        let coef = (1.0 + rho * yhy) * rho;
        for i in 0..n {
            for j in 0..n {
                self.h[i * n + j] += coef * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
            }
        }
        self.is_identity = false;
        true
    }
}

struct Point {
    alpha: f64,
    f: f64,
    g: Vec<f64>,
    dphi: f64,
}

enum Search {
    Found(Point),
    /// No strong-Wolfe point; carries the lowest point seen, if it decreased f.
    Failed(Option<Point>),
}

struct LineSearch<'a, O: Objective> {
    obj: &'a mut O,
    x: &'a [f64],
    p: &'a [f64],
    f0: f64,
    dphi0: f64,
    opts: &'a OptimOptions,
    evals: usize,
    best: Option<Point>,
}

impl<O: Objective> LineSearch<'_, O> {
    fn eval(&mut self, alpha: f64) -> Result<Option<Point>> {
        if self.evals >= self.opts.max_line_search {
            return Ok(None);
        }
        self.evals += 1;
        let (f, g) = self.obj.value_and_gradient(&axpy(self.x, alpha, self.p))?;
        let dphi = dot(&g, self.p);
        let pt = Point { alpha, f, g, dphi };
        if f.is_finite() && f < self.f0 && self.best.as_ref().is_none_or(|b| f < b.f) {
            self.best = Some(Point {
                alpha,
                f,
                g: pt.g.clone(),
                dphi,
            });
        }
        Ok(Some(pt))
    }

    fn armijo_fails(&self, pt: &Point) -> bool {
        !pt.f.is_finite() || pt.f > self.f0 + self.opts.c1 * pt.alpha * self.dphi0
    }

    fn curvature_holds(&self, pt: &Point) -> bool {
        pt.dphi.abs() <= -self.opts.c2 * self.dphi0
    }

    fn run(&mut self, alpha_init: f64) -> Result<Search> {
        let mut prev = Point {
            alpha: 0.0,
            f: self.f0,
            g: Vec::new(),
            dphi: self.dphi0,
        };
        let mut alpha = alpha_init;
        let mut first = true;
        loop {
            let Some(cur) = self.eval(alpha)? else {
                return Ok(Search::Failed(self.best.take()));
            };
            if self.armijo_fails(&cur) || (!first && cur.f >= prev.f) {
                return self.zoom(prev, cur);
            }
            if self.curvature_holds(&cur) {
                return Ok(Search::Found(cur));
            }
            if cur.dphi >= 0.0 {
                return self.zoom(cur, prev);
            }
            alpha = cur.alpha * 2.0;
            prev = cur;
            first = false;
        }
    }

    fn zoom(&mut self, mut lo: Point, mut hi: Point) -> Result<Search> {
        loop {
            let width = (hi.alpha - lo.alpha).abs();
            if width <= f64::EPSILON * lo.alpha.abs().max(1.0) {
                return Ok(Search::Failed(self.best.take()));
            }
            let alpha = interpolate(&lo, &hi);
            let Some(cur) = self.eval(alpha)? else {
                return Ok(Search::Failed(self.best.take()));
            };
            if self.armijo_fails(&cur) || cur.f >= lo.f {
                hi = cur;
            } else {
                if self.curvature_holds(&cur) {
                    return Ok(Search::Found(cur));
                }
                if cur.dphi * (hi.alpha - lo.alpha) >= 0.0 {
                    hi = lo;
                }
                lo = cur;
            }
        }
    }
}

/// Cubic interpolation minimiser on `[lo, hi]`, kept 10% away from the
/// ends; bisection when the cubic has no usable minimum.
fn interpolate(lo: &Point, hi: &Point) -> f64 {
    let (a, b) = (lo.alpha, hi.alpha);
    let (left, right) = if a < b { (a, b) } else { (b, a) };
    let margin = 0.1 * (right - left);
    let d1 = lo.dphi + hi.dphi - 3.0 * (lo.f - hi.f) / (a - b);
    let disc = d1 * d1 - lo.dphi * hi.dphi;
    let mut t = f64::NAN;
    if disc >= 0.0 && hi.f.is_finite() && hi.dphi.is_finite() {
        let d2 = (b - a).signum() * disc.sqrt();
        let denom = hi.dphi - lo.dphi + 2.0 * d2;
        if denom != 0.0 {
            t = b - (b - a) * (hi.dphi + d2 - d1) / denom;
        }
    }
    if !t.is_finite() || t < left + margin || t > right - margin {
        0.5 * (a + b)
    } else {
        t
    }
}

/// Minimises `obj` from `x0`.
pub fn minimize<O: Objective>(obj: &mut O, x0: &[f64], opts: &OptimOptions) -> Result<OptimResult> {
    let n = x0.len();
    let mut x = x0.to_vec();
    let (mut f, mut g) = obj.value_and_gradient(&x)?;
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!("objective is not finite at the starting point (f = {f})")));
    }
    let mut f_evals = 1;
    let mut hess = InverseHessian::identity(n);
    let mut iterations = 0;
    let finish = |x: Vec<f64>, f: f64, g: &[f64], iterations, f_evals, termination| OptimResult {
        x_final: x,
        f_final: f,
        grad_final_norm: inf_norm(g),
        iterations,
        f_evals,
        converged: termination == Termination::GradTol,
        termination,
    };
    if n == 0 || inf_norm(&g) < opts.g_tol {
        return Ok(finish(x, f, &g, 0, f_evals, Termination::GradTol));
    }
    while iterations < opts.max_iter {
        let mut p = hess.direction(&g);
        let mut dphi0 = dot(&g, &p);
        if dphi0 >= 0.0 || !dphi0.is_finite() {
            hess.reset();
            p = hess.direction(&g);
            dphi0 = dot(&g, &p);
        }
        let mut search = LineSearch {
            obj: &mut *obj,
            x: &x,
            p: &p,
            f0: f,
            dphi0,
            opts,
            evals: 0,
            best: None,
        };
        let outcome = search.run(1.0)?;
        f_evals += search.evals;
        iterations += 1;
        let step = match outcome {
            Search::Found(pt) => pt,
            Search::Failed(best) => {
                let was_identity = hess.is_identity;
                hess.reset();
                match best {
                    Some(pt) => pt,
                    None if !was_identity => continue,
                    None => return Ok(finish(x, f, &g, iterations, f_evals, Termination::LineSearchFail)),
                }
            }
        };
        let s: Vec<f64> = p.iter().map(|v| step.alpha * v).collect();
        let y: Vec<f64> = step.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        hess.update(&s, &y);
        x = axpy(&x, step.alpha, &p);
        f = step.f;
        g = step.g;
        if inf_norm(&g) < opts.g_tol {
            return Ok(finish(x, f, &g, iterations, f_evals, Termination::GradTol));
        }
    }
    Ok(finish(x, f, &g, iterations, f_evals, Termination::MaxIter))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn quadratic(diag: Vec<f64>) -> impl Objective {
        let d2 = diag.clone();
        FnObjective {
            f: move |x: &[f64]| x.iter().zip(&diag).map(|(v, d)| 0.5 * d * v * v).sum(),
            grad: move |x: &[f64]| x.iter().zip(&d2).map(|(v, d)| d * v).collect(),
        }
    }

    fn rosenbrock(scale: f64) -> impl Objective {
        FnObjective {
            f: move |x: &[f64]| scale * ((1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)),
            grad: move |x: &[f64]| {
                vec![
                    scale * (-2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0])),
                    scale * 200.0 * (x[1] - x[0] * x[0]),
                ]
            },
        }
    }

    #[test]
    fn isotropic_quadratic_in_one_iteration() {
        let mut obj = quadratic(vec![2.0; 3]);
        let r = minimize(&mut obj, &[1.0, -2.0, 0.5], &OptimOptions::default()).unwrap();
        assert!(r.converged);
        assert!(r.iterations <= 3, "{}", r.iterations);
        assert!(inf_norm(&r.x_final) < 1e-10);
    }

    #[test]
    fn anisotropic_quadratic_converges() {
        let mut obj = quadratic(vec![1.0, 10.0]);
        let r = minimize(&mut obj, &[3.0, 1.0], &OptimOptions::default()).unwrap();
        assert_eq!(r.termination, Termination::GradTol);
        assert!(inf_norm(&r.x_final) < 1e-8);
    }

    #[test]
    fn rosenbrock_from_classic_start() {
        let mut obj = rosenbrock(1.0);
        let r = minimize(&mut obj, &[-1.2, 1.0], &OptimOptions::default()).unwrap();
        assert!(r.converged, "{:?}", r.termination);
        assert!((r.x_final[0] - 1.0).abs() < 1e-6);
        assert!((r.x_final[1] - 1.0).abs() < 1e-6);
        assert!(r.grad_final_norm < 1e-8);
    }

    #[test]
    fn scaled_objective_reaches_same_minimiser() {
        for scale in [1e-2, 1.0, 1e2] {
            let mut obj = rosenbrock(scale);
            let opts = OptimOptions {
                g_tol: 1e-8 * scale,
                ..OptimOptions::default()
            };
            let r = minimize(&mut obj, &[-1.2, 1.0], &opts).unwrap();
            assert!((r.x_final[0] - 1.0).abs() < 1e-5, "scale {scale}: {:?}", r.x_final);
            assert!((r.x_final[1] - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn zero_dimensional_problem() {
        let mut obj = FnObjective {
            f: |_: &[f64]| 3.0,
            grad: |_: &[f64]| Vec::new(),
        };
        let r = minimize(&mut obj, &[], &OptimOptions::default()).unwrap();
        assert_eq!(r.iterations, 0);
        assert_eq!(r.f_final, 3.0);
    }

    #[test]
    fn max_iter_reported() {
        let mut obj = rosenbrock(1.0);
        let opts = OptimOptions {
            max_iter: 2,
            ..OptimOptions::default()
        };
        let r = minimize(&mut obj, &[-1.2, 1.0], &opts).unwrap();
        assert_eq!(r.termination, Termination::MaxIter);
        assert!(!r.converged);
        assert_eq!(r.iterations, 2);
    }

    #[test]
    fn non_finite_start_is_error() {
        let mut obj = FnObjective {
            f: |_: &[f64]| f64::NAN,
            grad: |_: &[f64]| vec![0.0],
        };
        assert!(minimize(&mut obj, &[0.0], &OptimOptions::default()).is_err());
    }

    #[test]
    fn evaluation_count_matches_calls() {
        let mut calls = 0usize;
        struct Counting<'a>(&'a mut usize);
        impl Objective for Counting<'_> {
            fn value_and_gradient(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
                *self.0 += 1;
                Ok(((x[0] - 1.0).powi(4) + x[1] * x[1], vec![4.0 * (x[0] - 1.0).powi(3), 2.0 * x[1]]))
            }
        }
        let r = minimize(&mut Counting(&mut calls), &[0.0, 2.0], &OptimOptions::default()).unwrap();
        assert_eq!(r.f_evals, calls);
    }

    #[test]
    fn interpolation_of_quadratic_is_exact() {
        // φ(α) = (α - 0.3)², evaluated at 0 and 1
        let lo = Point { alpha: 0.0, f: 0.09, g: vec![], dphi: -0.6 };
        let hi = Point { alpha: 1.0, f: 0.49, g: vec![], dphi: 1.4 };
        assert!((interpolate(&lo, &hi) - 0.3).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn accepted_values_never_increase(x0 in proptest::collection::vec(-2.0f64..2.0, 2)) {
            let mut seen = Vec::new();
            struct Recording<'a>(&'a mut Vec<f64>);
            impl Objective for Recording<'_> {
                fn value_and_gradient(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
                    let f = (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
                    self.0.push(f);
                    Ok((f, vec![
                        -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]),
                        200.0 * (x[1] - x[0] * x[0]),
                    ]))
                }
            }
            let r = minimize(&mut Recording(&mut seen), &x0, &OptimOptions::default()).unwrap();
            prop_assert!(r.f_final <= seen[0]);
            // repeat run is bit-identical
            let mut again = Vec::new();
            let r2 = minimize(&mut Recording(&mut again), &x0, &OptimOptions::default()).unwrap();
            prop_assert_eq!(r, r2);
            prop_assert_eq!(seen, again);
        }
    }
}
