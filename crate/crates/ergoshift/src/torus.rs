//! Transfer-operator calculus for the binary-digit shift on the s-torus.
//!
//! The operator halves frequencies on the Fourier side: the output
//! coefficient at q is the input coefficient at 2q. Membership is decided by
//! summing coefficients along dyadic frequency orbits {2^n q} rooted at a
//! frequency with an odd coordinate.

use std::collections::BTreeMap;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{ErgoError, Result};
use crate::report::{GordinReport, Verdict};
use crate::scalar::Real;

/// A geometric coefficient family along one dyadic orbit:
/// `a_{2^n root} = first * ratio^n` for n >= 0, |ratio| < 1. Used to carry
/// closed-form spectra whose orbit sums must be exact infinite sums.
#[derive(Debug, Clone)]
pub struct DyadicFamily<T> {
    pub root: Vec<i64>,
    pub first: Complex<T>,
    pub ratio: T,
}

/// Sparse complex spectrum on Z^s plus optional closed-form orbit families.
/// The zero frequency is carried separately as the mean.
#[derive(Debug, Clone)]
pub struct FourierObservable<T> {
    s: usize,
    mean: T,
    coeffs: BTreeMap<Vec<i64>, Complex<T>>,
    families: Vec<DyadicFamily<T>>,
}

impl<T: Real> FourierObservable<T> {
    pub fn new(s: usize, mean: T) -> Result<Self> {
        if s < 1 {
            return Err(ErgoError::Domain("s must be >= 1".into()));
        }
        Ok(Self {
            s,
            mean,
            coeffs: BTreeMap::new(),
            families: Vec::new(),
        })
    }

    pub fn s(&self) -> usize {
        self.s
    }

    pub fn mean(&self) -> T {
        self.mean
    }

    pub fn coeffs(&self) -> &BTreeMap<Vec<i64>, Complex<T>> {
        &self.coeffs
    }

    pub fn set_coeff(&mut self, m: Vec<i64>, a: Complex<T>) -> Result<()> {
        if m.len() != self.s {
            return Err(ErgoError::Domain("frequency dimension mismatch".into()));
        }
        if m.iter().all(|&c| c == 0) {
            return Err(ErgoError::Domain(
                "zero frequency is the mean, set it separately".into(),
            ));
        }
        if a.norm_sqr() == T::zero() {
            self.coeffs.remove(&m);
        } else {
            self.coeffs.insert(m, a);
        }
        Ok(())
    }

    /// Inserts a and its Hermitian partner conj(a) at -m, keeping the
    /// observable real-valued.
    pub fn set_real_mode(&mut self, m: Vec<i64>, a: Complex<T>) -> Result<()> {
        let neg: Vec<i64> = m.iter().map(|&c| -c).collect();
        self.set_coeff(m, a)?;
        self.set_coeff(neg, a.conj())
    }

    /// amplitude * cos(2 pi <m, y>): a_{+-m} = amplitude/2.
    pub fn cosine(s: usize, m: Vec<i64>, amplitude: T) -> Result<Self> {
        let mut f = Self::new(s, T::zero())?;
        let half = amplitude / T::from_f(2.0);
        f.set_real_mode(m, Complex::new(half, T::zero()))?;
        Ok(f)
    }

    pub fn add_family(&mut self, fam: DyadicFamily<T>) -> Result<()> {
        if fam.root.len() != self.s {
            return Err(ErgoError::Domain("family root dimension mismatch".into()));
        }
        if !fam.root.iter().any(|&c| c % 2 != 0) {
            return Err(ErgoError::Domain(
                "family root must have an odd coordinate".into(),
            ));
        }
        if fam.ratio.abs() >= T::one() {
            return Err(ErgoError::Domain("family ratio must satisfy |r| < 1".into()));
        }
        self.families.push(fam);
        Ok(())
    }

    pub fn is_hermitian(&self) -> bool {
        self.coeffs.iter().all(|(m, a)| {
            let neg: Vec<i64> = m.iter().map(|&c| -c).collect();
            match self.coeffs.get(&neg) {
                Some(b) => (*b - a.conj()).norm_sqr() <= T::from_f(1e-24),
                None => false,
            }
        })
    }

    /// L2 norm of the centered part (Parseval over the sparse support and
    /// the exact geometric family energies).
    pub fn centered_norm(&self) -> T {
        let sparse: T = self.coeffs.values().map(|a| a.norm_sqr()).sum();
        let fam: T = self
            .families
            .iter()
            .map(|f| f.first.norm_sqr() / (T::one() - f.ratio * f.ratio))
            .sum();
        (sparse + fam).sqrt()
    }

    /// Pointwise evaluation; family contributions are truncated once the
    /// geometric factor is below 1e-16.
    pub fn eval(&self, y: &[f64]) -> T {
        let tau = std::f64::consts::TAU;
        let mut acc = self.mean.to_f();
        for (m, a) in &self.coeffs {
            let phase: f64 = m.iter().zip(y).map(|(&mi, &yi)| mi as f64 * yi).sum();
            acc += a.re.to_f() * (tau * phase).cos() - a.im.to_f() * (tau * phase).sin();
        }
        for fam in &self.families {
            let mut weight = Complex::new(fam.first.re.to_f(), fam.first.im.to_f());
            let ratio = fam.ratio.to_f();
            let mut scale = 1.0f64;
            while weight.norm() > 1e-16 {
                let phase: f64 = fam
                    .root
                    .iter()
                    .zip(y)
                    .map(|(&mi, &yi)| mi as f64 * scale * yi)
                    .sum();
                acc += weight.re * (tau * phase).cos() - weight.im * (tau * phase).sin();
                weight *= ratio;
                scale *= 2.0;
            }
        }
        T::from_f(acc)
    }

    /// n-fold transfer operator on the spectrum: output coefficient at q is
    /// the input coefficient at 2^n q; the mean is preserved.
    pub fn pf_apply(&self, n: u32) -> Self {
        if n == 0 {
            return self.clone();
        }
        let div = 1i64 << n;
        let mut out = Self {
            s: self.s,
            mean: self.mean,
            coeffs: BTreeMap::new(),
            families: Vec::new(),
        };
        for (m, a) in &self.coeffs {
            if m.iter().all(|&c| c % div == 0) {
                out.coeffs.insert(m.iter().map(|&c| c / div).collect(), *a);
            }
        }
        for fam in &self.families {
            // surviving orbit terms are the ones with level >= n
            let mut first = fam.first;
            for _ in 0..n {
                first = first * fam.ratio;
            }
            out.families.push(DyadicFamily {
                root: fam.root.clone(),
                first,
                ratio: fam.ratio,
            });
        }
        out
    }

    /// Sobolev seminorm `(sum |a_p|^2 (sum_i p_i^2)^alpha)^{1/2}`; at
    /// alpha = 0 this is the centered L2 norm.
    pub fn sobolev_norm(&self, alpha: T) -> T {
        let sparse: T = self
            .coeffs
            .iter()
            .map(|(m, a)| {
                let w: T = T::from_f(m.iter().map(|&c| (c * c) as f64).sum());
                a.norm_sqr() * w.powf(alpha)
            })
            .sum();
        let fam: T = self
            .families
            .iter()
            .map(|f| {
                let base: f64 = f.root.iter().map(|&c| (c * c) as f64).sum();
                let mut acc = T::zero();
                let mut coeff = f.first.norm_sqr();
                let r2 = f.ratio * f.ratio;
                let mut scale = 1.0f64;
                while coeff * T::from_f(base * scale).powf(alpha) > T::from_f(1e-300) {
                    acc = acc + coeff * T::from_f(base * scale).powf(alpha);
                    coeff = coeff * r2;
                    scale *= 4.0;
                }
                acc
            })
            .sum();
        (sparse + fam).sqrt()
    }

    /// Domination bound: given c_n >= 0 with `|a_{2^n m}| <= c_n |a_m|`, the
    /// martingale-increment norm is bounded by `||f - E f|| * sum c_n`. The
    /// hypothesis is verified on the sparse support; the offending (n, m) is
    /// reported on failure.
    pub fn corollary10_bound(&self, c: &crate::gordin::NormSequence<T>) -> Result<T> {
        let cs = &c.values;
        let c_at = |n: usize| cs.get(n).copied().unwrap_or(T::zero());
        for (m, a) in &self.coeffs {
            for (n, doubled) in doublings(m).enumerate() {
                if let Some(b) = self.coeffs.get(&doubled) {
                    if b.norm() > c_at(n) * a.norm() + T::from_f(1e-12) {
                        return Err(ErgoError::Domination { n, m: m.clone() });
                    }
                } else if n > 0 {
                    break;
                }
            }
        }
        let total: T = cs.iter().copied().sum();
        Ok(self.centered_norm() * total)
    }
}

/// Frequencies m, 2m, 4m, ... while within i64 range.
fn doublings(m: &[i64]) -> impl Iterator<Item = Vec<i64>> + '_ {
    (0u32..32).map(move |n| m.iter().map(|&c| c << n).collect())
}

/// Root of the dyadic orbit of m: divide by 2 until a coordinate is odd.
/// Returns (root, level such that m = 2^level * root).
pub fn orbit_root(m: &[i64]) -> (Vec<i64>, u32) {
    assert!(m.iter().any(|&c| c != 0), "zero frequency has no orbit");
    let mut v: Vec<i64> = m.to_vec();
    let mut level = 0;
    while v.iter().all(|&c| c % 2 == 0) {
        v.iter_mut().for_each(|c| *c /= 2);
        level += 1;
    }
    (v, level)
}

/// Per-orbit evidence of the membership check.
#[derive(Debug, Clone, Serialize)]
pub struct OrbitEntry<T> {
    pub root: Vec<i64>,
    /// Running sums along the orbit at N = 0..=horizon.
    pub partial_sums: Vec<(T, T)>,
    /// Limit of the orbit sum (exact for sparse + geometric spectra).
    pub b: (T, T),
}

#[derive(Debug, Clone, Serialize)]
pub struct OrbitReport<T> {
    pub orbits: Vec<OrbitEntry<T>>,
    /// sum_q |S_N(q)|^2 for N = 0..=horizon.
    pub per_n_energy: Vec<T>,
    pub sup_over_n: T,
    /// sum_q |b_q|^2.
    pub total_b_sq: T,
}

/// Membership check via dyadic orbit sums. Sparse spectra and geometric
/// families make every orbit sum exact, so the verdict is never undecided.
pub fn gordin_check_fourier<T: Real>(
    f: &FourierObservable<T>,
    horizon: usize,
) -> Result<(GordinReport, OrbitReport<T>)> {
    let mut orbits: BTreeMap<Vec<i64>, (Vec<(u32, Complex<T>)>, Option<(Complex<T>, T)>)> =
        BTreeMap::new();
    for (m, a) in &f.coeffs {
        let (root, level) = orbit_root(m);
        orbits.entry(root).or_default().0.push((level, *a));
    }
    for fam in &f.families {
        let e = orbits.entry(fam.root.clone()).or_default();
        if e.1.is_some() {
            return Err(ErgoError::Domain(
                "at most one geometric family per orbit root".into(),
            ));
        }
        e.1 = Some((fam.first, fam.ratio));
    }

    let mut entries = Vec::new();
    let mut per_n = vec![T::zero(); horizon + 1];
    let mut total_b_sq = T::zero();
    for (root, (sparse, family)) in orbits {
        let mut partials = Vec::with_capacity(horizon + 1);
        let mut run = Complex::new(T::zero(), T::zero());
        let mut fam_pow = family.map(|(first, _)| first);
        for n in 0..=horizon {
            for (lev, a) in &sparse {
                if *lev as usize == n {
                    run = run + *a;
                }
            }
            if let (Some(w), Some((_, ratio))) = (fam_pow, family) {
                run = run + w;
                fam_pow = Some(w * ratio);
            }
            partials.push((run.re, run.im));
            per_n[n] = per_n[n] + run.norm_sqr();
        }
        let sparse_total = sparse
            .iter()
            .fold(Complex::new(T::zero(), T::zero()), |acc, (_, a)| acc + *a);
        let fam_total = family
            .map(|(first, ratio)| first / Complex::new(T::one() - ratio, T::zero()))
            .unwrap_or_else(|| Complex::new(T::zero(), T::zero()));
        let b = sparse_total + fam_total;
        total_b_sq = total_b_sq + b.norm_sqr();
        entries.push(OrbitEntry {
            root,
            partial_sums: partials,
            b: (b.re, b.im),
        });
    }

    let sup = per_n
        .iter()
        .copied()
        .fold(T::zero(), |a, b| if b > a { b } else { a });
    let report = GordinReport {
        verdict: Verdict::Member,
        g_tilde_bound: Some(total_b_sq.sqrt().to_f()),
        method: "exact dyadic orbit sums (sparse support + geometric families)".into(),
    };
    Ok((
        report,
        OrbitReport {
            orbits: entries,
            per_n_energy: per_n,
            sup_over_n: sup,
            total_b_sq,
        },
    ))
}

const GRID_EXP_CAP: u32 = 24;

/// Grid form of the n-fold transfer operator: the dyadic average
/// `2^{-ns} sum_k f(k/2^n + y/2^n)`, evaluated literally. Refuses grids
/// larger than 2^24 points.
pub fn pf_apply_grid(f: &dyn Fn(&[f64]) -> f64, s: usize, n: u32, y: &[f64]) -> Result<f64> {
    if y.len() != s {
        return Err(ErgoError::Domain("point dimension mismatch".into()));
    }
    let exp = n * s as u32;
    if exp > GRID_EXP_CAP {
        return Err(ErgoError::GridCap {
            requested: exp,
            cap: GRID_EXP_CAP,
        });
    }
    let side = 1u64 << n;
    let total = 1u64 << exp;
    let scale = 1.0 / side as f64;
    let mut point = vec![0.0; s];
    let mut acc = 0.0;
    for idx in 0..total {
        let mut rem = idx;
        for (i, p) in point.iter_mut().enumerate() {
            let k = rem % side;
            rem /= side;
            *p = k as f64 * scale + y[i] * scale;
        }
        acc += f(&point);
    }
    Ok(acc / total as f64)
}

/// Serialization schema for spectra:
/// `{"s": int, "mean": real, "coeffs": [{"m": [ints], "re": .., "im": ..}]}`
/// with an optional "families" array for closed-form orbit families.
#[derive(Serialize, Deserialize)]
pub struct SpectrumJson {
    pub s: usize,
    pub mean: f64,
    pub coeffs: Vec<CoeffJson>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub families: Vec<FamilyJson>,
}

#[derive(Serialize, Deserialize)]
pub struct CoeffJson {
    pub m: Vec<i64>,
    pub re: f64,
    pub im: f64,
}

#[derive(Serialize, Deserialize)]
pub struct FamilyJson {
    pub root: Vec<i64>,
    pub re: f64,
    pub im: f64,
    pub ratio: f64,
}

impl<T: Real> FourierObservable<T> {
    pub fn to_json(&self) -> SpectrumJson {
        SpectrumJson {
            s: self.s,
            mean: self.mean.to_f(),
            coeffs: self
                .coeffs
                .iter()
                .map(|(m, a)| CoeffJson {
                    m: m.clone(),
                    re: a.re.to_f(),
                    im: a.im.to_f(),
                })
                .collect(),
            families: self
                .families
                .iter()
                .map(|f| FamilyJson {
                    root: f.root.clone(),
                    re: f.first.re.to_f(),
                    im: f.first.im.to_f(),
                    ratio: f.ratio.to_f(),
                })
                .collect(),
        }
    }

    pub fn from_json(j: &SpectrumJson) -> Result<Self> {
        let mut f = Self::new(j.s, T::from_f(j.mean))?;
        for c in &j.coeffs {
            f.set_coeff(c.m.clone(), Complex::new(T::from_f(c.re), T::from_f(c.im)))?;
        }
        for fam in &j.families {
            f.add_family(DyadicFamily {
                root: fam.root.clone(),
                first: Complex::new(T::from_f(fam.re), T::from_f(fam.im)),
                ratio: T::from_f(fam.ratio),
            })?;
        }
        Ok(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cos4pi() -> FourierObservable<f64> {
        // cos(4 pi y): a_{+-2} = 1/2
        FourierObservable::cosine(1, vec![2], 1.0).unwrap()
    }

    fn cos2pi() -> FourierObservable<f64> {
        FourierObservable::cosine(1, vec![1], 1.0).unwrap()
    }

    #[test]
    fn pf_halves_frequencies() {
        let t = cos4pi().pf_apply(1);
        let expected = cos2pi();
        assert_eq!(t.coeffs(), expected.coeffs());
        // odd frequency annihilated
        let z = cos2pi().pf_apply(1);
        assert!(z.coeffs().is_empty());
        // identity at n = 0
        assert_eq!(cos4pi().pf_apply(0).coeffs(), cos4pi().coeffs());
    }

    #[test]
    fn pf_mean_preserved() {
        let mut f = cos4pi();
        f.mean = 0.7;
        for n in 0..4 {
            assert_eq!(f.pf_apply(n).mean(), 0.7);
        }
    }

    #[test]
    fn grid_constant_and_indicator() {
        let c = pf_apply_grid(&|_| 3.5, 1, 4, &[0.37]).unwrap();
        assert_relative_eq!(c, 3.5, epsilon = 1e-14);
        // indicator of [0, 1/2), one halving: every dyadic pair hits it once
        for &y in &[0.0, 0.3, 0.77, 0.999] {
            let v = pf_apply_grid(&|p| if p[0] < 0.5 { 1.0 } else { 0.0 }, 1, 1, &[y]).unwrap();
            assert_eq!(v, 0.5);
        }
    }

    #[test]
    fn grid_matches_spectral() {
        let f = cos4pi();
        let tf = f.pf_apply(1);
        for &y in &[0.0, 0.1, 0.25, 0.6, 0.9] {
            let grid = pf_apply_grid(
                &|p| (4.0 * std::f64::consts::PI * p[0]).cos(),
                1,
                1,
                &[y],
            )
            .unwrap();
            assert_relative_eq!(grid, tf.eval(&[y]), epsilon = 1e-12);
        }
        // value named in the frequency-halving example
        let at0 = pf_apply_grid(&|p| (4.0 * std::f64::consts::PI * p[0]).cos(), 1, 1, &[0.0])
            .unwrap();
        assert_relative_eq!(at0, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn grid_cap_enforced() {
        assert!(matches!(
            pf_apply_grid(&|_| 0.0, 2, 13, &[0.0, 0.0]),
            Err(ErgoError::GridCap { .. })
        ));
    }

    #[test]
    fn orbit_roots_partition() {
        let (r, l) = orbit_root(&[12, 4]);
        assert_eq!((r.as_slice(), l), ([3, 1].as_slice(), 2));
        let (r, l) = orbit_root(&[-2]);
        assert_eq!((r.as_slice(), l), ([-1].as_slice(), 1));
    }

    #[test]
    fn membership_single_pair() {
        // cos(4 pi y): orbit roots +-1, single term at level 1, b = 1/2
        let (rep, orb) = gordin_check_fourier(&cos4pi(), 8).unwrap();
        assert_eq!(rep.verdict, Verdict::Member);
        assert_relative_eq!(orb.total_b_sq, 0.5, epsilon = 1e-14);
        assert_relative_eq!(
            rep.g_tilde_bound.unwrap(),
            std::f64::consts::FRAC_1_SQRT_2,
            epsilon = 1e-14
        );
    }

    #[test]
    fn membership_geometric_family() {
        // sum_n 2^-n cos(2 pi 2^n y): orbits at +-1 with first 1/2, ratio 1/2
        let mut f = FourierObservable::<f64>::new(1, 0.0).unwrap();
        for root in [1i64, -1] {
            f.add_family(DyadicFamily {
                root: vec![root],
                first: Complex::new(0.5, 0.0),
                ratio: 0.5,
            })
            .unwrap();
        }
        let (rep, orb) = gordin_check_fourier(&f, 20).unwrap();
        assert_relative_eq!(orb.total_b_sq, 2.0, epsilon = 1e-12);
        assert_relative_eq!(rep.g_tilde_bound.unwrap(), 2.0f64.sqrt(), epsilon = 1e-12);

        // domination route: c_n = 2^-n gives 2 ||f - E f||; consistent with
        // (but weaker than) the orbit bound sqrt(2)
        let c = crate::gordin::NormSequence::from_fn(60, |n| 0.5f64.powi(n as i32)).unwrap();
        let dom = f.corollary10_bound(&c).unwrap();
        assert_relative_eq!(dom, 2.0 * f.centered_norm(), epsilon = 1e-12);
        assert!(rep.g_tilde_bound.unwrap() <= dom);
    }

    #[test]
    fn membership_disjoint_orbits_is_parseval() {
        let mut f = FourierObservable::<f64>::new(1, 0.0).unwrap();
        f.set_real_mode(vec![3], Complex::new(0.2, 0.1)).unwrap();
        f.set_real_mode(vec![5], Complex::new(-0.4, 0.0)).unwrap();
        let (rep, _) = gordin_check_fourier(&f, 10).unwrap();
        assert_relative_eq!(
            rep.g_tilde_bound.unwrap(),
            f.centered_norm(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn corollary10_simple_cases() {
        let f = cos4pi();
        let mut c0 = vec![0.0; 10];
        c0[0] = 1.0;
        let c = crate::gordin::NormSequence::analytic(c0).unwrap();
        assert_relative_eq!(
            f.corollary10_bound(&c).unwrap(),
            f.centered_norm(),
            epsilon = 1e-14
        );
        // violated domination is reported with the offending pair
        let mut g = FourierObservable::<f64>::new(1, 0.0).unwrap();
        g.set_real_mode(vec![1], Complex::new(0.1, 0.0)).unwrap();
        g.set_real_mode(vec![2], Complex::new(0.5, 0.0)).unwrap();
        let weak = crate::gordin::NormSequence::analytic(vec![1.0, 0.01]).unwrap();
        assert!(matches!(
            g.corollary10_bound(&weak),
            Err(ErgoError::Domination { n: 1, .. })
        ));
    }

    #[test]
    fn sobolev_values() {
        // cos(2 pi y), alpha = 1: sqrt(2 * 1/4) = 1/sqrt(2)
        assert_relative_eq!(
            cos2pi().sobolev_norm(1.0),
            std::f64::consts::FRAC_1_SQRT_2,
            epsilon = 1e-14
        );
        let zero = FourierObservable::<f64>::new(1, 0.0).unwrap();
        assert_eq!(zero.sobolev_norm(1.5), 0.0);
        // alpha = 0 degenerates to the centered norm
        let f = cos4pi();
        assert_relative_eq!(f.sobolev_norm(0.0), f.centered_norm(), epsilon = 1e-14);
    }

    #[test]
    fn hermitian_and_json_roundtrip() {
        let mut f = FourierObservable::<f64>::new(2, 0.25).unwrap();
        f.set_real_mode(vec![1, -2], Complex::new(0.3, 0.4)).unwrap();
        assert!(f.is_hermitian());
        let j = serde_json::to_string(&f.to_json()).unwrap();
        let back: SpectrumJson = serde_json::from_str(&j).unwrap();
        let g = FourierObservable::<f64>::from_json(&back).unwrap();
        assert_eq!(f.coeffs(), g.coeffs());
        assert_eq!(f.mean(), g.mean());
    }
}
