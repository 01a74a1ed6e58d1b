//! Wiener space as a product space.
//!
//! A Brownian path on (0, 1] is assembled from independent standard Wiener
//! pieces living on the dyadic intervals (2^{-k-1}, 2^{-k}]; the scaling
//! shift acts by pure piece reindexing, so B o tau = B_{2t}/sqrt(2) holds
//! exactly. The same module carries the Haar-primitive (Schauder) bridge
//! synthesis, coefficient extraction, the coefficient shift, and the
//! derivative-energy membership criterion.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use serde::Serialize;

use crate::error::{ErgoError, Result};
use crate::gordin::{fit_decay, CriterionVerdict, NormSequence, Tail, Trend};
use crate::product::{Shift, ShiftKind};
use crate::scalar::Real;
use crate::stream::gaussian_at;

const TAIL_INDEX: i64 = i64::MIN / 2;
const ENDPOINT_DRAW: u64 = 1;

struct StoreInner {
    seed: u64,
    d: usize,
    /// Dyadic refinement depth inside each piece; evaluation times are
    /// rounded to this grid.
    depth: u32,
    /// Raw pieces 0..=trunc are materialized; the rest of the endpoint
    /// series is one Gaussian with the exact tail variance.
    trunc: u32,
    memo: Mutex<HashMap<(i64, u32, u64, usize), f64>>,
}

/// Seeded Brownian path store over dyadic pieces. Cloning shares the piece
/// cache; [`Shift`] reindexes pieces without resampling anything.
#[derive(Clone)]
pub struct DyadicPathStore {
    inner: Arc<StoreInner>,
    offset: i64,
}

impl DyadicPathStore {
    pub fn new(seed: u64, d: usize, depth: u32, trunc: u32) -> Result<Self> {
        if d < 1 {
            return Err(ErgoError::Domain("path dimension must be >= 1".into()));
        }
        if depth > 50 || trunc > 60 {
            return Err(ErgoError::Domain("depth <= 50 and trunc <= 60".into()));
        }
        Ok(Self {
            inner: Arc::new(StoreInner {
                seed,
                d,
                depth,
                trunc,
                memo: Mutex::new(HashMap::new()),
            }),
            offset: 0,
        })
    }

    pub fn d(&self) -> usize {
        self.inner.d
    }

    pub fn seed(&self) -> u64 {
        self.inner.seed
    }

    fn memoized(&self, key: (i64, u32, u64, usize), compute: impl FnOnce() -> f64) -> f64 {
        if let Some(&v) = self.inner.memo.lock().unwrap().get(&key) {
            return v;
        }
        let v = compute();
        self.inner.memo.lock().unwrap().insert(key, v);
        v
    }

    /// Value of raw piece `r` (a standard Wiener path on [0,1]) at the
    /// dyadic time j/2^l, refined by Brownian-bridge midpoint insertion.
    /// Deterministic in (seed, r, l, j, component).
    fn piece_at(&self, r: i64, l: u32, j: u64, c: usize) -> f64 {
        if j == 0 {
            return 0.0;
        }
        if l == 0 {
            return self.memoized((r, 0, ENDPOINT_DRAW, c), || {
                gaussian_at(self.inner.seed, r, c as u64, ENDPOINT_DRAW)
            });
        }
        if j % 2 == 0 {
            return self.piece_at(r, l - 1, j / 2, c);
        }
        let left = self.piece_at(r, l - 1, (j - 1) / 2, c);
        let right = self.piece_at(r, l - 1, (j + 1) / 2, c);
        self.memoized((r, l, j, c), || {
            // bridge midpoint: neighbors are 2^{-(l-1)} apart, var 2^{-(l+1)}
            let std = 2f64.powf(-((l + 1) as f64) / 2.0);
            0.5 * (left + right)
                + std * gaussian_at(self.inner.seed, r, c as u64, (1u64 << l) + j)
        })
    }

    fn tail_z(&self, c: usize) -> f64 {
        self.memoized((TAIL_INDEX, 0, 0, c), || {
            gaussian_at(self.inner.seed, TAIL_INDEX, c as u64, 0)
        })
    }

    /// B_t for t in (0, 1]: the endpoint series over pieces finer than t,
    /// the in-piece value at the local dyadic time, and one Gaussian
    /// carrying the exact variance 2^{-(trunc+offset+1)} of the omitted
    /// endpoint tail.
    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        if !(t > 0.0 && t <= 1.0) {
            return Err(ErgoError::Domain(format!(
                "time {t} outside (0, 1]; B_0 = 0 is the boundary value"
            )));
        }
        let mut k = (-t.log2()).floor() as i64;
        while k > 0 && t > 0.5f64.powi(k as i32) {
            k -= 1;
        }
        while t <= 0.5f64.powi(k as i32 + 1) {
            k += 1;
        }
        // now 2^{-k-1} < t <= 2^{-k}
        debug_assert!(t <= 0.5f64.powi(k as i32) && t > 0.5f64.powi(k as i32 + 1));
        let top = self.inner.trunc as i64 + self.offset;
        if k > top {
            return Err(ErgoError::Domain(format!(
                "time {t} is below the truncation resolution 2^-{top}"
            )));
        }
        let x = t * 2f64.powi(k as i32 + 1) - 1.0;
        let j = (x * 2f64.powi(self.inner.depth as i32)).round() as u64;
        let mut out = Vec::with_capacity(self.inner.d);
        for c in 0..self.inner.d {
            let mut acc = 0.0;
            for n in (k + 1)..=top {
                acc += self.piece_at(n - self.offset, 0, 1, c)
                    * 2f64.powf(-((n + 1) as f64) / 2.0);
            }
            acc += self.tail_z(c) * 2f64.powf(-((top + 1) as f64) / 2.0);
            acc += self.piece_at(k - self.offset, self.inner.depth, j, c)
                * 2f64.powf(-((k + 1) as f64) / 2.0);
            out.push(acc);
        }
        Ok(out)
    }

    /// One application of the scaling shift: eval(shift(P), t) equals
    /// eval(P, 2t)/sqrt(2) for every t <= 1/2, as a reindexing identity.
    pub fn scaling_shift(&self) -> Self {
        self.shift_apply(1)
    }
}

impl Shift for DyadicPathStore {
    fn shift_apply(&self, k: i64) -> Self {
        Self {
            inner: Arc::clone(&self.inner),
            offset: self.offset + k,
        }
    }

    fn offset(&self) -> i64 {
        self.offset
    }

    fn kind(&self) -> ShiftKind {
        ShiftKind::WienerScaling
    }
}

/// Backing values for Schauder coefficients: an explicit finite flat array
/// (flat index n >= 1) or an endless iid standard Gaussian stream.
#[derive(Clone)]
pub enum CoeffSource {
    Explicit(Arc<Vec<f64>>),
    GaussianStream { seed: u64 },
}

/// Schauder (Haar-primitive) coefficients a_{m,k} with the flat bijection
/// flat(2^m + k) = (m, k), m >= 0, 0 <= k < 2^m. The simple shift on the
/// flat indices is carried as an offset, not by moving data.
#[derive(Clone)]
pub struct SchauderCoefficients {
    levels: u32,
    offset: i64,
    source: CoeffSource,
}

/// Splits a flat index n >= 1 into (level m, position k).
pub fn flat_to_level(n: u64) -> (u32, u64) {
    assert!(n >= 1, "flat Schauder indices start at 1");
    let m = 63 - n.leading_zeros();
    (m, n - (1u64 << m))
}

/// phi_{m,k}(t): the integral of the L2-normalized Haar wavelet at (m, k),
/// a triangular bump on [k/2^m, (k+1)/2^m] peaking at 2^{-m/2-1}.
pub fn schauder_phi(m: u32, k: u64, t: f64) -> f64 {
    let scale = 2f64.powi(m as i32);
    let u = t * scale - k as f64;
    if !(0.0..=1.0).contains(&u) {
        return 0.0;
    }
    2f64.powf(-(m as f64) / 2.0) * u.min(1.0 - u)
}

impl SchauderCoefficients {
    pub fn explicit(levels: u32, values: Vec<f64>) -> Result<Self> {
        if levels > 30 {
            return Err(ErgoError::Domain("levels <= 30".into()));
        }
        let need = (1usize << levels) - 1;
        if values.len() != need {
            return Err(ErgoError::Domain(format!(
                "need {need} flat values for {levels} levels, got {}",
                values.len()
            )));
        }
        Ok(Self {
            levels,
            offset: 0,
            source: CoeffSource::Explicit(Arc::new(values)),
        })
    }

    pub fn gaussian(levels: u32, seed: u64) -> Result<Self> {
        if levels > 30 {
            return Err(ErgoError::Domain("levels <= 30".into()));
        }
        Ok(Self {
            levels,
            offset: 0,
            source: CoeffSource::GaussianStream { seed },
        })
    }

    pub fn levels(&self) -> u32 {
        self.levels
    }

    /// Flat coefficient a_n, n >= 1, after the current shift offset.
    pub fn flat(&self, n: u64) -> f64 {
        let idx = n as i64 + self.offset;
        if idx < 1 {
            return 0.0;
        }
        match &self.source {
            CoeffSource::Explicit(v) => v.get(idx as usize - 1).copied().unwrap_or(0.0),
            CoeffSource::GaussianStream { seed } => gaussian_at(*seed, idx, 0, 0),
        }
    }

    pub fn level(&self, m: u32, k: u64) -> f64 {
        self.flat((1u64 << m) + k)
    }

    /// Bridge partial sum Z_t over the materialized levels; exactly one
    /// basis function per level is supported at any t.
    pub fn synthesize(&self, t: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&t) {
            return Err(ErgoError::Domain("t must lie in [0, 1]".into()));
        }
        let mut acc = 0.0;
        for m in 0..self.levels {
            let scale = 2f64.powi(m as i32);
            let k = ((t * scale).floor() as u64).min((1u64 << m) - 1);
            acc += schauder_phi(m, k, t) * self.level(m, k);
        }
        Ok(acc)
    }

    pub fn flat_view(&self) -> Vec<f64> {
        (1..(1u64 << self.levels)).map(|n| self.flat(n)).collect()
    }
}

impl Shift for SchauderCoefficients {
    /// One step reads flat index n as the old n + 1; this is the direction
    /// that leaves the iid product measure of the coefficients invariant.
    fn shift_apply(&self, k: i64) -> Self {
        Self {
            levels: self.levels,
            offset: self.offset + k,
            source: self.source.clone(),
        }
    }

    fn offset(&self) -> i64 {
        self.offset
    }

    fn kind(&self) -> ShiftKind {
        ShiftKind::SchauderCoefficient
    }
}

/// Second-difference coefficient extraction
/// a_{m,k} = [2 f(k/2^m + 2^{-m-1}) - f(k/2^m) - f((k+1)/2^m)] 2^{m/2}
/// for 0 <= m < levels. The function must vanish at 0 and 1.
pub fn schauder_coefficients(
    f: &dyn Fn(f64) -> f64,
    levels: u32,
) -> Result<SchauderCoefficients> {
    if f(0.0).abs() > 1e-12 || f(1.0).abs() > 1e-12 {
        return Err(ErgoError::Domain(
            "function must vanish at 0 and 1".into(),
        ));
    }
    let mut values = vec![0.0; (1usize << levels) - 1];
    for m in 0..levels {
        let h = 2f64.powi(-(m as i32));
        let w = 2f64.powf(m as f64 / 2.0);
        for k in 0..(1u64 << m) {
            let left = k as f64 * h;
            let a = (2.0 * f(left + 0.5 * h) - f(left) - f(left + h)) * w;
            values[((1u64 << m) + k - 1) as usize] = a;
        }
    }
    SchauderCoefficients::explicit(levels, values)
}

#[derive(Debug, Clone, Serialize)]
pub struct SchauderJson {
    pub levels: u32,
    pub flat: Vec<f64>,
}

impl SchauderCoefficients {
    pub fn to_json(&self) -> SchauderJson {
        SchauderJson {
            levels: self.levels,
            flat: self.flat_view(),
        }
    }
}

/// Membership criterion on derivative energies e_i = E[F_i'^2]:
/// convergence of sum_k sqrt(sum_{i>=k} e_i) certifies membership, and the
/// sum bounds the martingale-increment norm (conservatively, without the
/// 1/sqrt(2) improvement from the form-domain inequality).
pub fn dirichlet_criterion<T: Real>(e: &NormSequence<T>, tail: Tail<T>) -> CriterionVerdict<T> {
    let v = e.effective();
    let n = v.len();
    // the suffix sums must carry the unobserved energy tail, otherwise the
    // truncation makes every family look summable near the horizon
    let energy_tail = match tail {
        Tail::Bound(b) => b,
        Tail::None => {
            let fit_e = fit_decay(&v);
            match fit_e.trend {
                Trend::Convergent => fit_e.tail_estimate.unwrap_or(T::zero()),
                other => {
                    let mut acc = T::zero();
                    let partial_sums = v
                        .iter()
                        .map(|x| {
                            acc = acc + x.sqrt();
                            acc
                        })
                        .collect();
                    return CriterionVerdict {
                        satisfied: false,
                        bound_on_g_tilde: None,
                        partial_sums,
                        trend: other,
                    };
                }
            }
        }
    };
    let mut suffix = vec![T::zero(); n + 1];
    suffix[n] = energy_tail;
    for i in (0..n).rev() {
        suffix[i] = suffix[i + 1] + v[i];
    }
    let terms: Vec<T> = (0..n).map(|k| suffix[k].sqrt()).collect();
    let mut acc = T::zero();
    let partial_sums: Vec<T> = terms
        .iter()
        .map(|t| {
            acc = acc + *t;
            acc
        })
        .collect();
    let fit = fit_decay(&terms);
    let satisfied = fit.trend == Trend::Convergent;
    CriterionVerdict {
        satisfied,
        bound_on_g_tilde: if satisfied {
            Some(*partial_sums.last().unwrap_or(&T::zero()) + fit.tail_estimate.unwrap_or(T::zero()))
        } else {
            None
        },
        partial_sums,
        trend: fit.trend,
    }
}

/// Gate implying the [`dirichlet_criterion`] hypothesis: convergence of
/// sum_{i>=2} i^2 (ln i)^alpha e_i with alpha > 1.
pub fn corollary12_gate<T: Real>(e: &NormSequence<T>, alpha: f64) -> Result<bool> {
    if alpha <= 1.0 {
        return Err(ErgoError::Domain("alpha must exceed 1".into()));
    }
    let v = e.effective();
    let terms: Vec<T> = v
        .iter()
        .enumerate()
        .skip(2)
        .map(|(i, x)| {
            let i = i as f64;
            T::from_f(i * i * i.ln().powf(alpha)) * *x
        })
        .collect();
    Ok(fit_decay(&terms).trend == Trend::Convergent)
}
