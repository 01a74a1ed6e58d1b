//! Birkhoff-sum engine: ergodic averages along the shift orbit, the law of
//! the iterated logarithm statistic, L2 rate estimation across replications,
//! and the classical Monte Carlo baseline.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{ErgoError, Result};
use crate::product::{CoordinateLaw, CoordinateSequence, Observable, ShiftSystem};
use crate::stream::child_seed;

#[derive(Debug, Clone, Serialize)]
pub struct ErgodicRunStats {
    pub n: u64,
    /// S_N = sum_{k=0}^{N} (f - mean) evaluated along the orbit.
    pub sum: f64,
    /// sum / n.
    pub mean_estimate: f64,
    /// (N_j, |S_{N_j}| / sqrt(2 N_j ln ln N_j)) at geometric checkpoints.
    pub lil_trace: Vec<(u64, f64)>,
    pub wall_time: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RateEstimate {
    pub n: u64,
    pub replications: usize,
    /// Root-mean-square of S_N / sqrt(N) across replications.
    pub value: f64,
    pub stderr: f64,
}

/// |S_N| / sqrt(2 N ln ln N). Needs N >= 3 so the iterated logarithm is
/// positive.
pub fn lil_statistic(s_n: f64, n: u64) -> Result<f64> {
    if n < 3 {
        return Err(ErgoError::Domain("lil statistic needs N >= 3".into()));
    }
    let nf = n as f64;
    Ok(s_n.abs() / (2.0 * nf * nf.ln().ln()).sqrt())
}

/// Geometric checkpoint schedule N_j = ceil(10 * 1.25^j), deduplicated and
/// capped at n.
pub fn checkpoints(n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut x = 10.0f64;
    loop {
        let c = x.ceil() as u64;
        if c > n {
            break;
        }
        if out.last() != Some(&c) {
            out.push(c);
        }
        x *= 1.25;
    }
    if out.last() != Some(&n) && n >= 3 {
        out.push(n);
    }
    out
}

/// Streaming centered Birkhoff sum S_N = sum_{k=0}^{N} (f - mean) along
/// tau^k, with the LIL statistic recorded at the checkpoint schedule.
/// `mean` must be the true or separately estimated expectation of f.
pub fn birkhoff_sum(
    system: &ShiftSystem,
    f: &Observable,
    n: u64,
    mean: f64,
) -> Result<ErgodicRunStats> {
    if n < 1 {
        return Err(ErgoError::Domain("need N >= 1".into()));
    }
    let start = Instant::now();
    let marks = checkpoints(n);
    let mut trace = Vec::with_capacity(marks.len());
    let mut next_mark = 0usize;
    let mut sum = 0.0f64;
    for k in 0..=n {
        let y = f.eval(&system.view(k as i64));
        if !y.is_finite() {
            return Err(ErgoError::Eval {
                step: k,
                msg: format!("observable returned {y}"),
            });
        }
        sum += y - mean;
        while next_mark < marks.len() && marks[next_mark] == k {
            trace.push((k, lil_statistic(sum, k)?));
            next_mark += 1;
        }
    }
    Ok(ErgodicRunStats {
        n,
        sum,
        mean_estimate: sum / n as f64,
        lil_trace: trace,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// Running maximum of the LIL statistic over the checkpoint schedule up to
/// n_max.
pub fn lil_running_max(
    system: &ShiftSystem,
    f: &Observable,
    n_max: u64,
    mean: f64,
) -> Result<f64> {
    let stats = birkhoff_sum(system, f, n_max, mean)?;
    Ok(stats
        .lil_trace
        .iter()
        .map(|&(_, v)| v)
        .fold(0.0f64, f64::max))
}

/// Estimates ||S_N||_{L2} / sqrt(N) by root-mean-square over independent
/// replications; `make` builds the system for a given replication seed.
pub fn rate_estimate(
    make: &(dyn Fn(u64) -> ShiftSystem + Sync),
    f: &Observable,
    n: u64,
    reps: usize,
    seed: u64,
    mean: f64,
) -> Result<RateEstimate> {
    if reps < 2 {
        return Err(ErgoError::Domain("need reps >= 2".into()));
    }
    let sq: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let sys = make(child_seed(seed, r as u64));
            birkhoff_sum(&sys, f, n, mean).map(|st| st.sum * st.sum / n as f64)
        })
        .collect::<Result<_>>()?;
    let m: f64 = sq.iter().sum::<f64>() / reps as f64;
    let var: f64 = sq.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (reps - 1) as f64;
    let se_m = (var / reps as f64).sqrt();
    let value = m.sqrt();
    let stderr = if value > 1e-12 {
        se_m / (2.0 * value)
    } else {
        se_m.sqrt()
    };
    Ok(RateEstimate {
        n,
        replications: reps,
        value,
        stderr,
    })
}

/// Classical baseline: every draw re-samples the whole coordinate
/// configuration independently. Returns (mean, stderr).
pub fn classical_mc(
    f: &Observable,
    n: usize,
    seed: u64,
    dim: usize,
    law: CoordinateLaw,
) -> Result<(f64, f64)> {
    if n < 2 {
        return Err(ErgoError::Domain("need N >= 2".into()));
    }
    let vals: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let seq = CoordinateSequence::with_law(child_seed(seed, i as u64), dim, law)?;
            let sys = ShiftSystem::new(std::sync::Arc::new(seq));
            Ok(f.eval(&sys))
        })
        .collect::<Result<_>>()?;
    let m: f64 = vals.iter().sum::<f64>() / n as f64;
    let var: f64 = vals.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
    Ok((m, (var / n as f64).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::product::DependencyWindow;
    use approx::assert_relative_eq;
    use std::sync::Arc;

    fn uniform_system(seed: u64) -> ShiftSystem {
        ShiftSystem::new(Arc::new(CoordinateSequence::new(seed, 1).unwrap()))
    }

    #[test]
    fn constant_observable_sums_to_zero() {
        let sys = uniform_system(1);
        let f = Observable::constant(2.5);
        let st = birkhoff_sum(&sys, &f, 500, 2.5).unwrap();
        assert_eq!(st.sum, 0.0);
        assert_eq!(st.mean_estimate, 0.0);
    }

    #[test]
    fn mean_estimate_clt_band() {
        let sys = uniform_system(77);
        let f = Observable::coordinate(0, 0);
        let n = 100_000u64;
        let st = birkhoff_sum(&sys, &f, n, 0.5).unwrap();
        assert!(
            st.mean_estimate.abs() < 4.0 / (n as f64).sqrt(),
            "bias {}",
            st.mean_estimate
        );
        assert_eq!(st.mean_estimate, st.sum / n as f64);
    }

    #[test]
    fn telescoping_coboundary() {
        // f = h o tau^{-1} - h with h = X_0 X_1; S_N = h o tau^{-1} - h o tau^N
        let sys = uniform_system(5);
        let h = |s: &dyn crate::product::CoordAccess| s.coord(0)[0] * s.coord(1)[0];
        let f = Observable::new(DependencyWindow::Finite { lo: 0, hi: 2 }, move |s| {
            s.coord(1)[0] * s.coord(2)[0] - s.coord(0)[0] * s.coord(1)[0]
        });
        for n in [1u64, 7, 100, 1000] {
            let st = birkhoff_sum(&sys, &f, n, 0.0).unwrap();
            let expected = h(&sys.view(-1)) - h(&sys.view(n as i64));
            assert_relative_eq!(st.sum, expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn lil_statistic_values() {
        assert_eq!(lil_statistic(0.0, 100).unwrap(), 0.0);
        let s = (2.0 * 100.0 * 100.0f64.ln().ln()).sqrt();
        assert_relative_eq!(lil_statistic(s, 100).unwrap(), 1.0, epsilon = 1e-14);
        assert!(lil_statistic(1.0, 2).is_err());
    }

    #[test]
    fn checkpoints_strictly_increasing() {
        let c = checkpoints(1_000_000);
        assert!(c.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(*c.first().unwrap(), 10);
        assert_eq!(*c.last().unwrap(), 1_000_000);
    }

    #[test]
    fn lil_trace_deterministic() {
        let f = Observable::coordinate(0, 0);
        let a = birkhoff_sum(&uniform_system(9), &f, 5000, 0.5).unwrap();
        let b = birkhoff_sum(&uniform_system(9), &f, 5000, 0.5).unwrap();
        assert_eq!(a.lil_trace, b.lil_trace);
        assert_eq!(a.sum, b.sum);
    }

    #[test]
    fn eval_failure_reports_step() {
        let sys = uniform_system(2);
        let g = Observable::new(DependencyWindow::Finite { lo: 0, hi: 0 }, |s| {
            (s.coord(0)[0] - 2.0).ln()
        });
        assert!(matches!(
            birkhoff_sum(&sys, &g, 10, 0.0),
            Err(ErgoError::Eval { .. })
        ));
    }

    #[test]
    fn rate_estimate_iid_case() {
        // f = X_0 - 1/2: the increment part is f itself, rate = std = 1/sqrt(12)
        let f = Observable::new(DependencyWindow::Finite { lo: 0, hi: 0 }, |s| {
            s.coord(0)[0]
        });
        let r = rate_estimate(&uniform_system, &f, 10_000, 200, 31, 0.5).unwrap();
        let target = (1.0f64 / 12.0).sqrt();
        assert!(
            (r.value - target).abs() / target < 0.05,
            "rate {} vs {target}",
            r.value
        );
        assert!(r.stderr > 0.0);
    }

    #[test]
    fn rate_estimate_constant_is_zero() {
        let f = Observable::constant(3.0);
        let r = rate_estimate(&uniform_system, &f, 100, 10, 1, 3.0).unwrap();
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn classical_mc_calibration() {
        let f = Observable::coordinate(0, 0);
        let (m, se) = classical_mc(&f, 10_000, 4, 1, CoordinateLaw::Uniform01).unwrap();
        assert!((m - 0.5).abs() < 3.0 * se, "mean {m}, stderr {se}");
        let (c, se0) = classical_mc(&Observable::constant(1.5), 100, 4, 1, CoordinateLaw::Uniform01)
            .unwrap();
        assert_eq!((c, se0), (1.5, 0.0));
    }
}
