//! Exponential-decay fits `g(n) = a * b^(-n)` and rank statistics.

use crate::error::{Error, Result};
use crate::losses::LossKind;

pub const DEFAULT_FAILURE_THRESHOLD: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct DecayFit {
    pub loss_kind: Option<LossKind>,
    pub a: f64,
    pub b: f64,
    /// RMS of the residuals of `ln g`.
    pub residual: f64,
    pub threshold: f64,
    /// `None` when the fit does not decay.
    pub predicted_failure_n: Option<u64>,
    pub points: usize,
}

impl DecayFit {
    pub fn with_loss(mut self, kind: LossKind) -> Self {
        self.loss_kind = Some(kind);
        self
    }

    pub fn model(&self, n: f64) -> f64 {
        self.a * self.b.powf(-n)
    }
}

/// Size at which `a * b^(-n)` crosses `threshold`, rounded to the nearest
/// integer.
pub fn predicted_failure(a: f64, b: f64, threshold: f64) -> Option<u64> {
    if !(b > 1.0) || !(a > 0.0) || !(threshold > 0.0) {
        return None;
    }
    let n = (a / threshold).ln() / b.ln();
    Some(n.round().max(0.0) as u64)
}

/// Least squares on `(n, ln g)`.
pub fn fit_decay(points: &[(f64, f64)], threshold: f64) -> Result<DecayFit> {
    if points.len() < 3 {
        return Err(Error::Parameter(format!("decay fit needs at least 3 points, got {}", points.len())));
    }
    if let Some(&(n, g)) = points.iter().find(|(_, g)| !(*g > 0.0) || !g.is_finite()) {
        return Err(Error::Parameter(format!("decay fit needs positive values, got g({n}) = {g}")));
    }
    let m = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Parameter("decay fit needs at least two distinct n".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let a = intercept.exp();
    let b = (-slope).exp();
    Ok(DecayFit {
        loss_kind: None,
        a,
        b,
        residual: (rss / m).sqrt(),
        threshold,
        predicted_failure_n: predicted_failure(a, b, threshold),
        points: points.len(),
    })
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[k] } else { 0.5 * (v[k - 1] + v[k]) })
}

/// Ranks starting at 1, ties share their mean rank.
fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut out = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = r;
        }
        i = j + 1;
    }
    out
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let m = x.len() as f64;
    let mx = x.iter().sum::<f64>() / m;
    let my = y.iter().sum::<f64>() / m;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

/// Spearman rank correlation; `None` with fewer than two points or a
/// constant input.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    pearson(&ranks(x), &ranks(y))
}
