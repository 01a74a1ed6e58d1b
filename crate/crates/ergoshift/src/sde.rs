//! Lipschitz SDE functionals under the Wiener scaling shift: explicit
//! Euler-Maruyama trajectories, the semigroup route to T^n f for Hölder
//! functionals with its variance-decay diagnostic, and measure-weighted
//! functionals over finite atom lists.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{ErgoError, Result};
use crate::stream::{child_seed, gaussian_at};
use crate::wiener::DyadicPathStore;

type StateFn = Arc<dyn Fn(&[f64], f64) -> Vec<f64> + Send + Sync>;

/// dX = sigma(X, s) dB + b(X, s) ds with declared Lipschitz constant.
#[derive(Clone)]
pub struct SdeSpec {
    pub m: usize,
    pub d: usize,
    /// Row-major m x d diffusion matrix.
    pub sigma: StateFn,
    /// Drift m-vector.
    pub b: StateFn,
    pub lipschitz: f64,
    pub x0: Vec<f64>,
}

impl SdeSpec {
    pub fn new(
        m: usize,
        d: usize,
        sigma: impl Fn(&[f64], f64) -> Vec<f64> + Send + Sync + 'static,
        b: impl Fn(&[f64], f64) -> Vec<f64> + Send + Sync + 'static,
        lipschitz: f64,
        x0: Vec<f64>,
    ) -> Result<Self> {
        if m < 1 || d < 1 || x0.len() != m {
            return Err(ErgoError::Domain("bad SDE dimensions".into()));
        }
        Ok(Self {
            m,
            d,
            sigma: Arc::new(sigma),
            b: Arc::new(b),
            lipschitz,
            x0,
        })
    }

    /// Samples random state pairs and times and checks the declared
    /// Lipschitz constant (a sanity fuzz over a box, not a proof).
    pub fn lipschitz_fuzz(&self, trials: usize, seed: u64, box_radius: f64) -> Result<()> {
        for i in 0..trials {
            let mut x = vec![0.0; self.m];
            let mut y = vec![0.0; self.m];
            for c in 0..self.m {
                x[c] = (gaussian_at(seed, i as i64, c as u64, 0)).clamp(-3.0, 3.0) / 3.0
                    * box_radius;
                y[c] = (gaussian_at(seed, i as i64, c as u64, 1)).clamp(-3.0, 3.0) / 3.0
                    * box_radius;
            }
            let s = crate::stream::open_uniform_at(seed, i as i64, u64::MAX, 2);
            let dist: f64 = x
                .iter()
                .zip(&y)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if dist == 0.0 {
                continue;
            }
            let sx = (self.sigma)(&x, s);
            let sy = (self.sigma)(&y, s);
            let bx = (self.b)(&x, s);
            let by = (self.b)(&y, s);
            let dsig: f64 = sx
                .iter()
                .zip(&sy)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let db: f64 = bx
                .iter()
                .zip(&by)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if dsig + db > self.lipschitz * dist * (1.0 + 1e-9) {
                return Err(ErgoError::Domain(format!(
                    "Lipschitz bound {} violated: ratio {} at trial {i}",
                    self.lipschitz,
                    (dsig + db) / dist
                )));
            }
        }
        Ok(())
    }
}

/// Supplies Brownian increments along a uniform grid.
trait Driver {
    fn increment(&mut self, step: usize, t0: f64, t1: f64, out: &mut [f64]) -> Result<()>;
}

struct PathDriver<'a> {
    path: &'a DyadicPathStore,
    prev: Option<Vec<f64>>,
}

impl Driver for PathDriver<'_> {
    fn increment(&mut self, _step: usize, t0: f64, t1: f64, out: &mut [f64]) -> Result<()> {
        let b1 = self.path.eval(t1)?;
        let b0 = match &self.prev {
            Some(v) => v.clone(),
            None => {
                if t0 == 0.0 {
                    vec![0.0; b1.len()]
                } else {
                    self.path.eval(t0)?
                }
            }
        };
        for (o, (a, b)) in out.iter_mut().zip(b1.iter().zip(&b0)) {
            *o = a - b;
        }
        self.prev = Some(b1);
        Ok(())
    }
}

/// Synthetic iid Gaussian increments for inner resampling.
struct FreshDriver {
    seed: u64,
    replicate: u64,
}

impl Driver for FreshDriver {
    fn increment(&mut self, step: usize, t0: f64, t1: f64, out: &mut [f64]) -> Result<()> {
        let sd = (t1 - t0).sqrt();
        for (c, o) in out.iter_mut().enumerate() {
            *o = sd * gaussian_at(self.seed, step as i64, c as u64, self.replicate);
        }
        Ok(())
    }
}

fn euler_leg(
    sde: &SdeSpec,
    x_init: &[f64],
    s_start: f64,
    s_end: f64,
    steps: usize,
    driver: &mut dyn Driver,
) -> Result<Vec<(f64, Vec<f64>)>> {
    if steps < 1 {
        return Err(ErgoError::Domain("steps must be >= 1".into()));
    }
    let dt = (s_end - s_start) / steps as f64;
    let mut x = x_init.to_vec();
    let mut out = Vec::with_capacity(steps + 1);
    out.push((s_start, x.clone()));
    let mut db = vec![0.0; sde.d];
    for step in 0..steps {
        let t0 = s_start + dt * step as f64;
        let t1 = if step + 1 == steps {
            s_end
        } else {
            s_start + dt * (step + 1) as f64
        };
        driver.increment(step, t0, t1, &mut db)?;
        let sig = (sde.sigma)(&x, t0);
        let drift = (sde.b)(&x, t0);
        for i in 0..sde.m {
            let mut noise = 0.0;
            for j in 0..sde.d {
                noise += sig[i * sde.d + j] * db[j];
            }
            x[i] += drift[i] * dt + noise;
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(ErgoError::Eval {
                step: step as u64,
                msg: "non-finite state in Euler step".into(),
            });
        }
        out.push((t1, x.clone()));
    }
    Ok(out)
}

/// Explicit Euler-Maruyama trajectory on the uniform grid over [0, t_end],
/// driven by the dyadic path store. Deterministic in (path seed, steps).
pub fn euler_maruyama(
    sde: &SdeSpec,
    path: &DyadicPathStore,
    steps: usize,
    t_end: f64,
) -> Result<Vec<(f64, Vec<f64>)>> {
    if !(t_end > 0.0 && t_end <= 1.0) {
        return Err(ErgoError::Domain("t_end must lie in (0, 1]".into()));
    }
    if path.d() != sde.d {
        return Err(ErgoError::Domain("path/SDE driving dimension mismatch".into()));
    }
    let mut driver = PathDriver { path, prev: None };
    euler_leg(sde, &sde.x0, 0.0, t_end, steps, &mut driver)
}

/// Budget for the semigroup evaluation of T^n f.
#[derive(Debug, Clone, Copy)]
pub struct SemigroupMc {
    /// Euler steps per unit time (legs use at least one step).
    pub steps_per_unit: usize,
    /// Inner replications for the conditional expectation.
    pub inner: usize,
    pub seed: u64,
}

fn leg_steps(len: f64, per_unit: usize) -> usize {
    ((len * per_unit as f64).round() as usize).max(1)
}

/// One sample of T^n f for f = h(X_t), via the semigroup identity: run the
/// outer leg to time 2^{-n} on the supplied path, then estimate
/// P_{t - 2^{-n}} h there by resampling the driving noise beyond 2^{-n}.
/// Returns (sample, inner variance); at 2^{-n} = t there is no inner
/// expectation and the variance is 0.
pub fn tn_functional(
    sde: &SdeSpec,
    h: &(dyn Fn(&[f64]) -> f64 + Sync),
    t: f64,
    n: u32,
    path: &DyadicPathStore,
    mc: &SemigroupMc,
) -> Result<(f64, f64)> {
    let s0 = 0.5f64.powi(n as i32);
    if !(s0 <= t * (1.0 + 1e-12) && t <= 1.0) {
        return Err(ErgoError::Domain(format!(
            "need 2^-n <= t <= 1, got 2^-{n} and t = {t}"
        )));
    }
    let mut outer = PathDriver { path, prev: None };
    let leg = euler_leg(
        sde,
        &sde.x0,
        0.0,
        s0,
        leg_steps(s0, mc.steps_per_unit),
        &mut outer,
    )?;
    let x_mid = leg.last().unwrap().1.clone();
    if (t - s0).abs() <= 1e-12 {
        return Ok((h(&x_mid), 0.0));
    }
    if mc.inner < 1 {
        return Err(ErgoError::Domain("inner replications must be >= 1".into()));
    }
    let steps = leg_steps(t - s0, mc.steps_per_unit);
    let mut sum = 0.0;
    let mut sum2 = 0.0;
    for j in 0..mc.inner {
        let mut drv = FreshDriver {
            seed: mc.seed,
            replicate: j as u64,
        };
        let inner_leg = euler_leg(sde, &x_mid, s0, t, steps, &mut drv)?;
        let y = h(&inner_leg.last().unwrap().1);
        sum += y;
        sum2 += y * y;
    }
    let mean = sum / mc.inner as f64;
    let var = if mc.inner > 1 {
        ((sum2 - sum * sum / mc.inner as f64) / (mc.inner - 1) as f64).max(0.0)
    } else {
        0.0
    };
    Ok((mean, var))
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelVariance {
    pub n: u32,
    pub var: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayDiagnostic {
    pub levels: Vec<LevelVariance>,
    /// Fitted exponent in Var[T^n f] ~ c 2^{-n lambda}.
    pub lambda_hat: f64,
    pub lambda_stderr: f64,
    pub target_lambda: f64,
    /// Geometric-sum bound on sum_n ||T^n(f - E f)|| when the fitted decay
    /// is significantly positive; this certifies the conditional-tail route
    /// to membership.
    pub tail_norm_bound: Option<f64>,
}

/// Monte Carlo budget per decay level.
#[derive(Debug, Clone, Copy)]
pub struct DecayMcParams {
    pub outer: usize,
    pub inner: usize,
    pub steps_per_unit: usize,
    pub seed: u64,
}

/// Estimates Var[T^n f] for n = 0..=n_max and fits the geometric decay
/// exponent. The inner-noise contribution to the outer variance is
/// subtracted out before fitting.
pub fn holder_decay_diagnostic(
    sde: &SdeSpec,
    h: &(dyn Fn(&[f64]) -> f64 + Sync),
    lambda: f64,
    t: f64,
    n_max: u32,
    mc: &DecayMcParams,
) -> Result<DecayDiagnostic> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(ErgoError::Domain("lambda must lie in (0, 1]".into()));
    }
    if mc.outer < 2 {
        return Err(ErgoError::Domain("need outer >= 2".into()));
    }
    let mut levels = Vec::with_capacity(n_max as usize + 1);
    for n in 0..=n_max {
        let level_seed = child_seed(mc.seed, n as u64);
        let rows: Vec<(f64, f64)> = (0..mc.outer)
            .into_par_iter()
            .map(|o| {
                let path =
                    DyadicPathStore::new(child_seed(level_seed, o as u64), sde.d, 20, 40)?;
                let sub = SemigroupMc {
                    steps_per_unit: mc.steps_per_unit,
                    inner: mc.inner,
                    seed: child_seed(level_seed, 0x8000_0000 + o as u64),
                };
                tn_functional(sde, h, t, n, &path, &sub)
            })
            .collect::<Result<_>>()?;
        let mean: f64 = rows.iter().map(|r| r.0).sum::<f64>() / mc.outer as f64;
        let inner_noise: f64 =
            rows.iter().map(|r| r.1).sum::<f64>() / mc.outer as f64 / mc.inner.max(1) as f64;
        let devs: Vec<f64> = rows.iter().map(|r| (r.0 - mean) * (r.0 - mean)).collect();
        let raw: f64 = devs.iter().sum::<f64>() / (mc.outer - 1) as f64;
        let var = (raw - inner_noise).max(0.0);
        let dev_var: f64 = devs.iter().map(|d| (d - raw) * (d - raw)).sum::<f64>()
            / (mc.outer - 1) as f64;
        let stderr = (dev_var / mc.outer as f64).sqrt();
        levels.push(LevelVariance { n, var, stderr });
    }

    // log-linear regression ln var = ln c - n lambda ln 2; the n = 0 level
    // still carries the full-horizon prefactor and is excluded from the fit
    let pts: Vec<(f64, f64)> = levels
        .iter()
        .filter(|l| l.var > 0.0 && (l.n > 0 || n_max < 3))
        .map(|l| (l.n as f64, l.var.ln()))
        .collect();
    let (lambda_hat, lambda_stderr) = if pts.len() >= 3 {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let slope = sxy / sxx;
        let rss: f64 = pts
            .iter()
            .map(|p| {
                let e = p.1 - my - slope * (p.0 - mx);
                e * e
            })
            .sum();
        let se = (rss / (n - 2.0).max(1.0) / sxx).sqrt();
        (-slope / 2f64.ln(), se / 2f64.ln())
    } else {
        (0.0, f64::INFINITY)
    };

    let tail_norm_bound = if lambda_hat - 2.0 * lambda_stderr > 0.0 {
        let r = 2f64.powf(-lambda_hat / 2.0);
        let head: f64 = levels.iter().map(|l| l.var.sqrt()).sum();
        let last = levels.last().unwrap().var.sqrt();
        Some(head + last * r / (1.0 - r))
    } else {
        None
    };

    Ok(DecayDiagnostic {
        levels,
        lambda_hat,
        lambda_stderr,
        target_lambda: lambda,
        tail_norm_bound,
    })
}

/// f = sum_j w_j g(X^{x_j}_{s_j}) over a finite signed atom list, one
/// trajectory per distinct starting point, all driven by the same path.
pub fn measure_functional(
    sde: &SdeSpec,
    g: &dyn Fn(&[f64]) -> f64,
    atoms: &[(f64, Vec<f64>, f64)],
    path: &DyadicPathStore,
    steps_per_unit: usize,
) -> Result<f64> {
    let mut total = 0.0;
    for (s, x, w) in atoms {
        if !(*s > 0.0 && *s <= 1.0) {
            return Err(ErgoError::Domain(format!("atom time {s} outside (0, 1]")));
        }
        let spec = SdeSpec {
            x0: x.clone(),
            ..sde.clone()
        };
        let mut driver = PathDriver { path, prev: None };
        let leg = euler_leg(&spec, x, 0.0, *s, leg_steps(*s, steps_per_unit), &mut driver)?;
        total += w * g(&leg.last().unwrap().1);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ou() -> SdeSpec {
        SdeSpec::new(
            1,
            1,
            |_, _| vec![1.0],
            |x, _| vec![-x[0]],
            1.0 + 1e-6,
            vec![0.0],
        )
        .unwrap()
    }

    #[test]
    fn lipschitz_fuzz_accepts_and_rejects() {
        assert!(ou().lipschitz_fuzz(200, 1, 5.0).is_ok());
        let bad = SdeSpec::new(
            1,
            1,
            |x, _| vec![3.0 * x[0]],
            |_, _| vec![0.0],
            1.0,
            vec![0.0],
        )
        .unwrap();
        assert!(bad.lipschitz_fuzz(200, 1, 5.0).is_err());
    }

    #[test]
    fn zero_coefficients_constant_trajectory() {
        let sde = SdeSpec::new(1, 1, |_, _| vec![0.0], |_, _| vec![0.0], 0.1, vec![2.5]).unwrap();
        let path = DyadicPathStore::new(3, 1, 16, 30).unwrap();
        let traj = euler_maruyama(&sde, &path, 64, 1.0).unwrap();
        assert!(traj.iter().all(|(_, x)| x[0] == 2.5));
    }

    #[test]
    fn drift_only_ode_limit() {
        // dX = -X ds, X_0 = 1: X_1 -> 1/e, order-1 error
        let sde = SdeSpec::new(1, 1, |_, _| vec![0.0], |x, _| vec![-x[0]], 1.1, vec![1.0]).unwrap();
        let path = DyadicPathStore::new(3, 1, 16, 30).unwrap();
        let coarse = euler_maruyama(&sde, &path, 64, 1.0).unwrap().last().unwrap().1[0];
        let fine = euler_maruyama(&sde, &path, 128, 1.0).unwrap().last().unwrap().1[0];
        let target = (-1.0f64).exp();
        assert!((coarse - target).abs() < 2.0 / 64.0);
        assert!((fine - target).abs() < (coarse - target).abs());
    }

    #[test]
    fn identity_coupling() {
        // sigma = 1, b = 0: X_t = x0 + B_t at grid points
        let sde = SdeSpec::new(1, 1, |_, _| vec![1.0], |_, _| vec![0.0], 0.1, vec![0.3]).unwrap();
        let path = DyadicPathStore::new(77, 1, 20, 30).unwrap();
        let traj = euler_maruyama(&sde, &path, 32, 1.0).unwrap();
        for (t, x) in traj.iter().skip(1) {
            let b = path.eval(*t).unwrap()[0];
            assert_relative_eq!(x[0], 0.3 + b, epsilon = 1e-12);
        }
    }

    #[test]
    fn tn_boundary_no_inner_expectation() {
        let sde = ou();
        let path = DyadicPathStore::new(5, 1, 20, 30).unwrap();
        let mc = SemigroupMc {
            steps_per_unit: 256,
            inner: 1,
            seed: 9,
        };
        // t = 2^-2: T^n f is h(X_t) itself
        let (v, var) = tn_functional(&sde, &|x| x[0], 0.25, 2, &path, &mc).unwrap();
        let direct = euler_maruyama(&sde, &path, leg_steps(0.25, 256), 0.25)
            .unwrap()
            .last()
            .unwrap()
            .1[0];
        assert_relative_eq!(v, direct, epsilon = 1e-12);
        assert_eq!(var, 0.0);
    }

    #[test]
    fn tn_constant_h() {
        let sde = ou();
        let path = DyadicPathStore::new(5, 1, 20, 30).unwrap();
        let mc = SemigroupMc {
            steps_per_unit: 64,
            inner: 8,
            seed: 9,
        };
        let (v, var) = tn_functional(&sde, &|_| 4.25, 1.0, 3, &path, &mc).unwrap();
        assert_eq!(v, 4.25);
        assert_eq!(var, 0.0);
    }

    #[test]
    fn ou_level_variance_matches_oracle() {
        // Var[T^n f] = e^{-2(t - 2^-n)} (1 - e^{-2 * 2^-n}) / 2 for h(x) = x
        let sde = ou();
        let mc = DecayMcParams {
            outer: 1500,
            inner: 24,
            steps_per_unit: 256,
            seed: 21,
        };
        let diag = holder_decay_diagnostic(&sde, &|x| x[0], 1.0, 1.0, 4, &mc).unwrap();
        for l in &diag.levels {
            let s0 = 0.5f64.powi(l.n as i32);
            let oracle = (-2.0 * (1.0 - s0)).exp() * (1.0 - (-2.0 * s0).exp()) / 2.0;
            assert!(
                (l.var - oracle).abs() < 3.0 * l.stderr.max(0.02 * oracle),
                "n={} var={} oracle={oracle} se={}",
                l.n,
                l.var,
                l.stderr
            );
        }
        // the oracle put through the same regression (levels 1..=4)
        let pts: Vec<(f64, f64)> = (1..=4)
            .map(|n| {
                let s0 = 0.5f64.powi(n);
                let v = (-2.0 * (1.0 - s0)).exp() * (1.0 - (-2.0 * s0).exp()) / 2.0;
                (n as f64, v.ln())
            })
            .collect();
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / 4.0;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / 4.0;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let oracle_lambda = -(sxy / sxx) / 2f64.ln();
        assert!(
            (diag.lambda_hat - oracle_lambda).abs() < 0.15,
            "lambda_hat {} oracle {oracle_lambda}",
            diag.lambda_hat
        );
        assert!(diag.tail_norm_bound.is_some());
    }

    #[test]
    fn constant_h_degenerate_diagnostic() {
        let sde = ou();
        let mc = DecayMcParams {
            outer: 16,
            inner: 4,
            steps_per_unit: 32,
            seed: 2,
        };
        let diag = holder_decay_diagnostic(&sde, &|_| 1.0, 1.0, 1.0, 3, &mc).unwrap();
        assert!(diag.levels.iter().all(|l| l.var == 0.0));
        assert!(diag.tail_norm_bound.is_none());
    }

    #[test]
    fn measure_functional_atoms() {
        let sde = ou();
        let path = DyadicPathStore::new(11, 1, 20, 30).unwrap();
        // single atom reduces to g at time s
        let one = measure_functional(&sde, &|x| x[0], &[(0.5, vec![0.0], 1.0)], &path, 256)
            .unwrap();
        let spec = SdeSpec {
            x0: vec![0.0],
            ..sde.clone()
        };
        let direct = euler_maruyama(&spec, &path, leg_steps(0.5, 256), 0.5)
            .unwrap()
            .last()
            .unwrap()
            .1[0];
        assert_relative_eq!(one, direct, epsilon = 1e-12);
        // identical atoms with cancelling weights
        let zero = measure_functional(
            &sde,
            &|x| x[0],
            &[(0.5, vec![1.0], 2.0), (0.5, vec![1.0], -2.0)],
            &path,
            256,
        )
        .unwrap();
        assert_eq!(zero, 0.0);
        // bad atom time
        assert!(
            measure_functional(&sde, &|x| x[0], &[(1.5, vec![0.0], 1.0)], &path, 64).is_err()
        );
    }

    #[test]
    fn measure_functional_ou_mean_oracle() {
        // E X^x_s = x e^{-s}; average the two-atom functional across seeds
        let sde = ou();
        let atoms = [(0.4, vec![1.0], 0.7), (0.8, vec![-2.0], 0.5)];
        let n = 2000;
        let vals: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|seed| {
                let path = DyadicPathStore::new(child_seed(606, seed), 1, 16, 30).unwrap();
                measure_functional(&sde, &|x| x[0], &atoms, &path, 128).unwrap()
            })
            .collect();
        let mean: f64 = vals.iter().sum::<f64>() / n as f64;
        let var: f64 = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        let target = 0.7 * 1.0 * (-0.4f64).exp() + 0.5 * (-2.0) * (-0.8f64).exp();
        assert!(
            (mean - target).abs() < 3.0 * se + 0.01,
            "mean {mean} target {target} se {se}"
        );
    }
}
