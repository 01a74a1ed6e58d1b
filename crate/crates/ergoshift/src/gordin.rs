//! Membership bound calculators.
//!
//! Pure series calculators over norm sequences: the conditional-tail
//! criterion and its norm bound, the two martingale-increment bounds, the
//! adapted-representation gate, the stopping-time bound and the
//! d-consecutive-coordinates LIL bound. Norm sequences come in analytic or
//! Monte Carlo provenance; Monte Carlo entries enter the verdicts as
//! `value + 2*stderr`.
//!
//! Infinite-sum claims from finite evidence follow one policy everywhere:
//! `satisfied` is reported only when a closed-form tail bound is supplied or
//! the observed terms decay fast enough (geometric ratio fit below 0.99 over
//! the trailing decade of indices, or a power-law fit with exponent below
//! -1.05); otherwise the verdict is undecided or divergent.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{ErgoError, Result};
use crate::product::{CoordAccess, CoordinateSequence, Observable, ShiftSystem};
use crate::scalar::Real;
use crate::stream::child_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Provenance {
    Analytic,
    MonteCarlo,
}

/// A sequence of non-negative norms indexed from 0.
#[derive(Debug, Clone, Serialize)]
pub struct NormSequence<T> {
    pub values: Vec<T>,
    pub provenance: Provenance,
    pub stderr: Option<Vec<T>>,
}

impl<T: Real> NormSequence<T> {
    pub fn analytic(values: Vec<T>) -> Result<Self> {
        Self::validated(values, Provenance::Analytic, None)
    }

    pub fn monte_carlo(values: Vec<T>, stderr: Vec<T>) -> Result<Self> {
        Self::validated(values, Provenance::MonteCarlo, Some(stderr))
    }

    fn validated(values: Vec<T>, provenance: Provenance, stderr: Option<Vec<T>>) -> Result<Self> {
        if values.iter().any(|v| *v < T::zero() || !v.is_finite()) {
            return Err(ErgoError::Domain(
                "norm sequence entries must be finite and >= 0".into(),
            ));
        }
        if let Some(se) = &stderr {
            if se.len() != values.len() {
                return Err(ErgoError::Domain("stderr length mismatch".into()));
            }
        }
        Ok(Self {
            values,
            provenance,
            stderr,
        })
    }

    pub fn from_fn(n: usize, f: impl Fn(usize) -> T) -> Result<Self> {
        Self::analytic((0..n).map(f).collect())
    }

    /// Entries as they enter verdicts: Monte Carlo values are inflated by
    /// two standard errors so sampling noise cannot certify convergence.
    pub fn effective(&self) -> Vec<T> {
        match (&self.provenance, &self.stderr) {
            (Provenance::MonteCarlo, Some(se)) => self
                .values
                .iter()
                .zip(se)
                .map(|(v, e)| *v + T::from_f(2.0) * *e)
                .collect(),
            _ => self.values.clone(),
        }
    }
}

/// Optional closed-form bound on the omitted tail of a series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Tail<T> {
    None,
    Bound(T),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Trend {
    Convergent,
    Divergent,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct DecayFit<T> {
    pub trend: Trend,
    /// Estimated remainder of the series beyond the observed terms, when the
    /// fit certifies convergence.
    pub tail_estimate: Option<T>,
}

/// Fits the trailing decay of a non-negative term sequence.
pub fn fit_decay<T: Real>(terms: &[T]) -> DecayFit<T> {
    let n = terms.len();
    let tiny = T::from_f(1e-300);
    // finitely supported sequences are exactly summable
    let last_nonzero = terms.iter().rposition(|t| *t > tiny);
    let last_nonzero = match last_nonzero {
        None => {
            return DecayFit {
                trend: Trend::Convergent,
                tail_estimate: Some(T::zero()),
            }
        }
        Some(i) => i,
    };
    if last_nonzero + 2 < n {
        return DecayFit {
            trend: Trend::Convergent,
            tail_estimate: Some(T::zero()),
        };
    }

    let window_lo = (n / 10).max(2);
    let pts: Vec<(f64, f64)> = (window_lo..n)
        .filter(|&i| terms[i] > tiny)
        .map(|i| (i as f64, terms[i].to_f().ln()))
        .collect();
    if pts.len() < 5 {
        return DecayFit {
            trend: Trend::Inconclusive,
            tail_estimate: None,
        };
    }

    let geo = least_squares(pts.iter().map(|&(i, y)| (i, y)));
    let pow = least_squares(pts.iter().map(|&(i, y)| ((i + 1.0).ln(), y)));
    let last = terms[last_nonzero].to_f();
    let m = last_nonzero as f64 + 1.0;

    // convergence is certified by either model; the better-fitting one
    // supplies the tail estimate
    let r = geo.slope.exp();
    let p = pow.slope;
    let geo_ok = r < 0.99;
    let pow_ok = p < -1.05;
    let (trend, tail) = if geo_ok && (geo.residual <= pow.residual || !pow_ok) {
        (Trend::Convergent, Some(last * r / (1.0 - r)))
    } else if pow_ok {
        // tail of sum c*i^p beyond m, integral comparison
        (Trend::Convergent, Some(last * m / (-p - 1.0)))
    } else if p > -1.0 - 1e-6 {
        (Trend::Divergent, None)
    } else {
        (Trend::Inconclusive, None)
    };
    DecayFit {
        trend,
        tail_estimate: tail.map(T::from_f),
    }
}

struct Fit {
    slope: f64,
    residual: f64,
}

fn least_squares(pts: impl Iterator<Item = (f64, f64)> + Clone) -> Fit {
    let n = pts.clone().count() as f64;
    let sx: f64 = pts.clone().map(|(x, _)| x).sum();
    let sy: f64 = pts.clone().map(|(_, y)| y).sum();
    let (mx, my) = (sx / n, sy / n);
    let sxx: f64 = pts.clone().map(|(x, _)| (x - mx) * (x - mx)).sum();
    let sxy: f64 = pts.clone().map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let residual: f64 = pts
        .map(|(x, y)| {
            let e = y - my - slope * (x - mx);
            e * e
        })
        .sum();
    Fit { slope, residual }
}

/// Verdict of a summability criterion with its evidence trace.
#[derive(Debug, Clone, Serialize)]
pub struct CriterionVerdict<T> {
    pub satisfied: bool,
    /// Finite bound on the martingale-increment norm; `None` when the
    /// criterion is not satisfied at this horizon.
    pub bound_on_g_tilde: Option<T>,
    pub partial_sums: Vec<T>,
    pub trend: Trend,
}

fn summed_verdict<T: Real>(terms: &[T], bound_terms: &[T], tail: Tail<T>) -> CriterionVerdict<T> {
    let mut acc = T::zero();
    let partial_sums: Vec<T> = terms
        .iter()
        .map(|t| {
            acc = acc + *t;
            acc
        })
        .collect();
    let fit = fit_decay(terms);
    let (satisfied, trend) = match tail {
        Tail::Bound(_) => (true, Trend::Convergent),
        Tail::None => (fit.trend == Trend::Convergent, fit.trend),
    };
    let bound = if satisfied {
        let head: T = bound_terms.iter().copied().sum();
        let extra = match tail {
            Tail::Bound(b) => b,
            Tail::None => {
                // extend with the fitted tail of the bound terms themselves
                fit_decay(bound_terms).tail_estimate.unwrap_or(T::zero())
            }
        };
        Some(head + extra)
    } else {
        None
    };
    CriterionVerdict {
        satisfied,
        bound_on_g_tilde: bound,
        partial_sums,
        trend,
    }
}

/// Conditional-tail criterion: summability of the norms
/// `|| E f - E(f | F_n^inf) ||` certifies membership, and their sum bounds
/// the martingale-increment norm.
pub fn prop4_bound<T: Real>(
    s: &NormSequence<T>,
    horizon: usize,
    tail: Tail<T>,
) -> CriterionVerdict<T> {
    let eff = s.effective();
    let terms: Vec<T> = eff.iter().copied().take(horizon + 1).collect();
    summed_verdict(&terms, &terms, tail)
}

/// The two martingale-increment-norm bounds: the tail-energy form
/// `sum_m sqrt(sum_{k>=m} ||f_k||^2)` and the weighted form
/// `sum_m sqrt(m) ||f_m||`. Each is a valid bound when finite.
pub fn prop5_bounds<T: Real>(f_norms: &NormSequence<T>) -> (T, T) {
    let v = f_norms.effective();
    let n = v.len();
    let mut suffix_sq = vec![T::zero(); n + 1];
    for m in (0..n).rev() {
        suffix_sq[m] = suffix_sq[m + 1] + v[m] * v[m];
    }
    let bound_b: T = (0..n).map(|m| suffix_sq[m].sqrt()).sum();
    let bound_c: T = (0..n).map(|m| T::from_f(m as f64).sqrt() * v[m]).sum();
    (bound_b, bound_c)
}

/// Adapted-representation criterion: for `f = sum_k f_k` with `f_k`
/// measurable in the first k+1 coordinates, the gate is summability of
/// `k * ||f_k - E f_k||` and the bound is `sum sqrt(k+1) ||f_k - E f_k||`.
pub fn prop6_bound<T: Real>(increment_norms: &NormSequence<T>, tail: Tail<T>) -> CriterionVerdict<T> {
    let v = increment_norms.effective();
    let gate: Vec<T> = v
        .iter()
        .enumerate()
        .map(|(k, x)| T::from_f(k as f64) * *x)
        .collect();
    let bound_terms: Vec<T> = v
        .iter()
        .enumerate()
        .map(|(k, x)| T::from_f(k as f64 + 1.0).sqrt() * *x)
        .collect();
    summed_verdict(&gate, &bound_terms, tail)
}

/// Stopping-time bound: `(sqrt(6)/pi) * || f (T+1)^{3/2} ||`. The moment
/// gate on `f^2 T^3 log^alpha T` is the caller's responsibility.
pub fn prop8_bound<T: Real>(weighted_norm: T) -> Result<T> {
    if weighted_norm < T::zero() {
        return Err(ErgoError::Domain("weighted norm must be >= 0".into()));
    }
    Ok(T::from_f(6.0f64.sqrt() / std::f64::consts::PI) * weighted_norm)
}

/// LIL bound for observables depending on d consecutive coordinates:
/// `sqrt(d) * || f - E f ||`.
pub fn lemma7_bound<T: Real>(d: usize, centered_norm: T) -> Result<T> {
    if d < 1 {
        return Err(ErgoError::Domain("d must be >= 1".into()));
    }
    Ok(T::from_f(d as f64).sqrt() * centered_norm)
}

/// Budget for nested Monte Carlo norm estimation.
#[derive(Debug, Clone, Copy)]
pub struct McParams {
    pub outer: usize,
    pub inner: usize,
    pub seed: u64,
    /// Cap on total observable evaluations; exceeding it truncates the
    /// returned sequence and clears `complete`.
    pub max_evals: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct ConditionalNorms {
    pub norms: NormSequence<f64>,
    pub complete: bool,
}

/// Access that reads coordinates with index >= split from one stream and
/// the re-sampled indices below the split from another.
struct SplicedView<'a> {
    split: i64,
    upper: &'a CoordinateSequence,
    lower: &'a CoordinateSequence,
}

impl CoordAccess for SplicedView<'_> {
    fn coord(&self, n: i64) -> std::sync::Arc<[f64]> {
        if n >= self.split {
            self.upper.coord(n)
        } else {
            self.lower.coord(n)
        }
    }

    fn dim(&self) -> usize {
        self.upper.dim()
    }
}

/// Estimates `|| E f - E(f | F_n^inf) ||` for n = 0..n_max by conditioning
/// on the coordinates with index >= n (outer sample) and re-sampling the
/// indices below n (inner sample). The inner-noise contribution to the
/// squared norm is subtracted out.
pub fn estimate_conditional_norms(
    system: &ShiftSystem,
    f: &Observable,
    n_max: usize,
    mc: &McParams,
) -> Result<ConditionalNorms> {
    let dim = system.sequence().dim();
    let law = system.sequence().law();
    if mc.outer < 2 || mc.inner < 1 {
        return Err(ErgoError::Domain("need outer >= 2 and inner >= 1".into()));
    }
    let per_level = (mc.outer as u64) * (mc.inner as u64);
    let mut norms = Vec::new();
    let mut stderrs = Vec::new();
    let mut complete = true;

    for n in 0..=n_max {
        if let Some(cap) = mc.max_evals {
            if (n as u64 + 1) * per_level > cap {
                complete = false;
                break;
            }
        }
        let level_seed = child_seed(mc.seed, n as u64);
        let rows: Vec<(f64, f64)> = (0..mc.outer)
            .into_par_iter()
            .map(|o| {
                let upper =
                    CoordinateSequence::with_law(child_seed(level_seed, o as u64), dim, law)
                        .expect("dim validated");
                let mut sum = 0.0;
                let mut sum2 = 0.0;
                for j in 0..mc.inner {
                    let lower = CoordinateSequence::with_law(
                        child_seed(level_seed, (1 + o) as u64 * 0x10000 + j as u64),
                        dim,
                        law,
                    )
                    .expect("dim validated");
                    let view = SplicedView {
                        split: n as i64,
                        upper: &upper,
                        lower: &lower,
                    };
                    let y = f.eval(&view);
                    sum += y;
                    sum2 += y * y;
                }
                let m = sum / mc.inner as f64;
                let v = if mc.inner > 1 {
                    (sum2 - sum * sum / mc.inner as f64) / (mc.inner - 1) as f64
                } else {
                    0.0
                };
                (m, v.max(0.0))
            })
            .collect();

        let grand_mean: f64 = rows.iter().map(|r| r.0).sum::<f64>() / mc.outer as f64;
        let inner_noise: f64 =
            rows.iter().map(|r| r.1).sum::<f64>() / mc.outer as f64 / mc.inner as f64;
        let terms: Vec<f64> = rows
            .iter()
            .map(|(m, _)| (m - grand_mean) * (m - grand_mean))
            .collect();
        let raw_var: f64 = terms.iter().sum::<f64>() / mc.outer as f64;
        let var = (raw_var - inner_noise).max(0.0);
        let norm = var.sqrt();
        let term_mean = raw_var;
        let term_var: f64 = terms
            .iter()
            .map(|t| (t - term_mean) * (t - term_mean))
            .sum::<f64>()
            / mc.outer as f64;
        let se_var = (term_var / mc.outer as f64).sqrt();
        let se = if norm > 1e-9 {
            se_var / (2.0 * norm)
        } else {
            se_var.sqrt()
        };
        norms.push(norm);
        stderrs.push(se);
    }

    Ok(ConditionalNorms {
        norms: NormSequence::monte_carlo(norms, stderrs)?,
        complete,
    })
}
