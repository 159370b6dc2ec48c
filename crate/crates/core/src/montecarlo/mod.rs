//! Seeded simulation of stationary trajectories and the Monte Carlo side of
//! the approximation theory: seminorm estimates, residual curves, maximal
//! inequalities and functional CLT statistics.
//!
//! Replica `r` always draws from the stream `(seed, r)`, and per-replica
//! statistics are reduced in replica order, so results are bit-identical for
//! any thread count.

mod fclt;
mod inequalities;
mod sampler;

pub use fclt::{fclt_statistics, ks_threshold, FcltReport, GroupStatistics, KS_REFERENCE_REPLICAS, KS_REFERENCE_THRESHOLD};
pub use inequalities::{
    verify_all, verify_dm, verify_lw, verify_dyadic, verify_rio, InequalityId, InequalityReport, SIGMA_CUSHION,
};
pub use sampler::{replica_rng, simulate, PathSampler, TrajectoryBatch};

use crate::chain::{FiniteMarkovChain, Observable, StateFunction};
use crate::error::{Error, Result};
use crate::martingale::{averaged_corrector, diff_distance, diff_kernel_m, limit_diff_kernel, DifferenceKernel};
use crate::stats::{spearman, Estimate};
use sampler::{check_sizes, map_replicas};

fn check_grid(name: &str, grid: &[usize]) -> Result<()> {
    if grid.is_empty() || grid[0] == 0 || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(format!(
            "{name} must be a non-empty, strictly increasing list of positive integers"
        )));
    }
    Ok(())
}

/// Column-wise estimates of per-replica sample vectors.
fn column_estimates(samples: &[Vec<f64>], columns: usize) -> Vec<Estimate> {
    (0..columns)
        .map(|c| {
            let col: Vec<f64> = samples.iter().map(|s| s[c]).collect();
            Estimate::from_samples(&col).expect("replicas >= 1")
        })
        .collect()
}

/// `n^{-1/2} || max_{k<=n} |Z_0 + ... + Z_{k-1}| ||_2` (or the no-max
/// variant `n^{-1/2} ||Z_0 + ... + Z_{n-1}||_2`) over an `n`-grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SeminormEstimate {
    pub n_grid: Vec<usize>,
    pub values: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub with_max: bool,
}

impl SeminormEstimate {
    /// The estimate at the largest `n`, the operational stand-in for the limsup.
    pub fn last(&self) -> Estimate {
        Estimate {
            value: *self.values.last().expect("non-empty grid"),
            stderr: *self.std_errors.last().expect("non-empty grid"),
        }
    }
}

/// Running `max_{1<=k<=n} (sum_{j<k} z(xi_j))^2 / n` (or the terminal square)
/// recorded at each grid point.
fn grid_sums(path: &[usize], z: &StateFunction, n_grid: &[usize], with_max: bool) -> Vec<f64> {
    let mut out = Vec::with_capacity(n_grid.len());
    let (mut sum, mut max_sq) = (0.0_f64, 0.0_f64);
    let mut next = 0;
    for k in 1..=*n_grid.last().expect("non-empty grid") {
        sum += z[path[k - 1]];
        max_sq = max_sq.max(sum * sum);
        if k == n_grid[next] {
            let v = if with_max { max_sq } else { sum * sum };
            out.push(v / k as f64);
            next += 1;
        }
    }
    out
}

pub fn estimate_seminorm(
    chain: &FiniteMarkovChain,
    z: &StateFunction,
    n_grid: &[usize],
    replicas: usize,
    seed: u64,
    with_max: bool,
) -> Result<SeminormEstimate> {
    chain.check_len(z)?;
    check_grid("n_grid", n_grid)?;
    let n_max = *n_grid.last().expect("checked");
    check_sizes(n_max, replicas)?;
    let samples = map_replicas(chain, n_max, replicas, seed, |p| grid_sums(p, z, n_grid, with_max));
    let est: Vec<Estimate> = column_estimates(&samples, n_grid.len())
        .into_iter()
        .map(Estimate::sqrt)
        .collect();
    Ok(SeminormEstimate {
        n_grid: n_grid.to_vec(),
        values: est.iter().map(|e| e.value).collect(),
        std_errors: est.iter().map(|e| e.stderr).collect(),
        with_max,
    })
}

/// Monte Carlo estimate of `E(max_{1<=i<=n} S_i^2)`.
pub fn max_partial_sum_sq(
    chain: &FiniteMarkovChain,
    f: &Observable,
    n: usize,
    replicas: usize,
    seed: u64,
) -> Result<Estimate> {
    chain.check_len(f)?;
    check_sizes(n, replicas)?;
    let samples: Vec<f64> = map_replicas(chain, n, replicas, seed, |p| grid_sums(p, f, &[n], true)[0] * n as f64);
    Ok(Estimate::from_samples(&samples).expect("replicas >= 1"))
}

/// `E(max_{1<=j<=n} (S_j - M_j)^2) / n` over an `n`-grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualCurve {
    pub n_grid: Vec<usize>,
    pub values: Vec<f64>,
    pub std_errors: Vec<f64>,
}

fn residual_grid(path: &[usize], f: &StateFunction, kernel: &DifferenceKernel, n_grid: &[usize]) -> Vec<f64> {
    let mut out = Vec::with_capacity(n_grid.len());
    let (mut r, mut max_sq) = (0.0_f64, 0.0_f64);
    let mut next = 0;
    for k in 1..=*n_grid.last().expect("non-empty grid") {
        let (x, y) = (path[k - 1], path[k]);
        r += f[x] - kernel.value(x, y);
        max_sq = max_sq.max(r * r);
        if k == n_grid[next] {
            out.push(max_sq / k as f64);
            next += 1;
        }
    }
    out
}

fn residual_estimates(
    chain: &FiniteMarkovChain,
    f: &Observable,
    kernel: &DifferenceKernel,
    n_grid: &[usize],
    replicas: usize,
    seed: u64,
) -> Result<ResidualCurve> {
    check_grid("n_grid", n_grid)?;
    let n_max = *n_grid.last().expect("checked");
    check_sizes(n_max, replicas)?;
    let samples = map_replicas(chain, n_max, replicas, seed, |p| residual_grid(p, f, kernel, n_grid));
    let est = column_estimates(&samples, n_grid.len());
    Ok(ResidualCurve {
        n_grid: n_grid.to_vec(),
        values: est.iter().map(|e| e.value).collect(),
        std_errors: est.iter().map(|e| e.stderr).collect(),
    })
}

/// Residual curve for the limit martingale built from the Poisson potential.
pub fn residual_decay_curve(
    chain: &FiniteMarkovChain,
    f: &Observable,
    n_grid: &[usize],
    replicas: usize,
    seed: u64,
) -> Result<ResidualCurve> {
    let kernel = limit_diff_kernel(chain, f)?;
    residual_estimates(chain, f, &kernel, n_grid, replicas, seed)
}

/// `||R_n^n||_2` against `3 max_{k<=n} ||E_0(S_k)||_2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NecessityCheck {
    pub n: usize,
    /// Monte Carlo `||S_n - M_n^n||_2` with the `m = n` martingale.
    pub lhs: Estimate,
    pub rhs: f64,
    /// `rhs - (lhs + 3 stderr)`.
    pub margin: f64,
}

pub fn necessity_check(
    chain: &FiniteMarkovChain,
    f: &Observable,
    n: usize,
    replicas: usize,
    seed: u64,
) -> Result<NecessityCheck> {
    chain.check_len(f)?;
    check_sizes(n, replicas)?;
    let kernel = diff_kernel_m(chain, f, n)?;
    let samples: Vec<f64> = map_replicas(chain, n, replicas, seed, |p| {
        let r: f64 = p.windows(2).map(|w| f[w[0]] - kernel.value(w[0], w[1])).sum();
        r * r
    });
    let lhs = Estimate::from_samples(&samples).expect("replicas >= 1").sqrt();
    let mut rhs = 0.0_f64;
    for k in 1..=n {
        rhs = rhs.max(chain.norm_pi(&chain.conditional_sum(f, k)?)?);
    }
    rhs *= 3.0;
    Ok(NecessityCheck {
        n,
        lhs,
        rhs,
        margin: rhs - (lhs.value + SIGMA_CUSHION * lhs.stderr),
    })
}

/// Co-movement of the three convergence diagnostics over an `m`-grid.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTrend {
    pub m_grid: Vec<usize>,
    pub n: usize,
    /// `||Y^m||_{M+}` estimated at `n`.
    pub seminorm: Vec<Estimate>,
    /// `diff_distance(D^m, D)`.
    pub distance: Vec<f64>,
    /// `E max_{j<=n} (S_j - M_j^m)^2 / n`.
    pub residual: Vec<Estimate>,
    pub spearman_seminorm_distance: Option<f64>,
    pub spearman_seminorm_residual: Option<f64>,
    pub spearman_distance_residual: Option<f64>,
}

impl JointTrend {
    /// Smallest of the three pairwise rank correlations (`None` if any is
    /// undefined).
    pub fn min_spearman(&self) -> Option<f64> {
        let all = [
            self.spearman_seminorm_distance?,
            self.spearman_seminorm_residual?,
            self.spearman_distance_residual?,
        ];
        Some(all.into_iter().fold(f64::INFINITY, f64::min))
    }
}

pub fn joint_trend(
    chain: &FiniteMarkovChain,
    f: &Observable,
    m_grid: &[usize],
    n: usize,
    replicas: usize,
    seed: u64,
) -> Result<JointTrend> {
    check_grid("m_grid", m_grid)?;
    check_sizes(n, replicas)?;
    let limit = limit_diff_kernel(chain, f)?;
    let mut ys = Vec::with_capacity(m_grid.len());
    let mut kernels = Vec::with_capacity(m_grid.len());
    let mut distance = Vec::with_capacity(m_grid.len());
    for &m in m_grid {
        let c = averaged_corrector(chain, f, m)?;
        let k = crate::martingale::kernel_from_corrector(chain, &c)?;
        distance.push(diff_distance(chain, &k, &limit)?);
        ys.push(c.y);
        kernels.push(k);
    }
    let samples: Vec<Vec<f64>> = map_replicas(chain, n, replicas, seed, |p| {
        let mut row = Vec::with_capacity(2 * m_grid.len());
        for (y, k) in ys.iter().zip(&kernels) {
            row.push(grid_sums(p, y, &[n], true)[0]);
            row.push(residual_grid(p, f, k, &[n])[0]);
        }
        row
    });
    let est = column_estimates(&samples, 2 * m_grid.len());
    let seminorm: Vec<Estimate> = est.iter().step_by(2).map(|e| e.sqrt()).collect();
    let residual: Vec<Estimate> = est.iter().skip(1).step_by(2).copied().collect();
    let sv: Vec<f64> = seminorm.iter().map(|e| e.value).collect();
    let rv: Vec<f64> = residual.iter().map(|e| e.value).collect();
    Ok(JointTrend {
        m_grid: m_grid.to_vec(),
        n,
        spearman_seminorm_distance: spearman(&sv, &distance),
        spearman_seminorm_residual: spearman(&sv, &rv),
        spearman_distance_residual: spearman(&distance, &rv),
        seminorm,
        distance,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::martingale::averaged_corrector;

    fn bench() -> (FiniteMarkovChain, Observable) {
        let c = FiniteMarkovChain::two_state(0.3, 0.1).unwrap();
        let f = Observable::new(&c, vec![3.0, -1.0]).unwrap();
        (c, f)
    }

    #[test]
    fn simulation_is_reproducible() {
        let (c, _) = bench();
        let a = simulate(&c, 10, 3, 7).unwrap();
        let b = simulate(&c, 10, 3, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.paths.len(), 3);
        assert!(a.paths.iter().all(|p| p.len() == 11));
        assert_ne!(a, simulate(&c, 10, 3, 8).unwrap());
        assert!(simulate(&c, 10, 0, 7).is_err());
        assert!(simulate(&c, 0, 3, 7).is_err());
    }

    #[test]
    fn iid_transition_frequencies() {
        let pi = [0.2, 0.5, 0.3];
        let c = FiniteMarkovChain::iid(&pi).unwrap();
        let batch = simulate(&c, 1000, 1000, 11).unwrap();
        let mut counts = [0usize; 3];
        let mut total = 0usize;
        for p in &batch.paths {
            for &x in &p[1..] {
                counts[x] += 1;
                total += 1;
            }
        }
        for (k, &p) in pi.iter().enumerate() {
            let freq = counts[k] as f64 / total as f64;
            let se = (p * (1.0 - p) / total as f64).sqrt();
            assert!((freq - p).abs() < 3.0 * se, "state {k}: {freq} vs {p}");
        }
    }

    #[test]
    fn null_transitions_never_sampled() {
        let c = FiniteMarkovChain::from_rows(&[vec![0.0, 1.0, 0.0], vec![0.5, 0.0, 0.5], vec![0.0, 1.0, 0.0]]).unwrap();
        let batch = simulate(&c, 200, 20, 3).unwrap();
        for p in &batch.paths {
            for w in p.windows(2) {
                assert!(c.transition(w[0], w[1]) > 0.0);
            }
        }
    }

    #[test]
    fn seminorm_of_zero_and_iid_drift() {
        let (c, _) = bench();
        let z = StateFunction::zeros(2);
        let e = estimate_seminorm(&c, &z, &[4, 16], 50, 1, true).unwrap();
        assert_eq!(e.values, vec![0.0, 0.0]);

        let iid = FiniteMarkovChain::iid(&[0.25, 0.75]).unwrap();
        let f = Observable::new(&iid, vec![3.0, -1.0]).unwrap();
        let y = averaged_corrector(&iid, &f, 4).unwrap().y;
        let e = estimate_seminorm(&iid, &y, &[8, 32], 50, 1, true).unwrap();
        assert!(e.values.iter().all(|v| *v < 1e-14));
        assert!(estimate_seminorm(&c, &z, &[4, 4], 5, 1, true).is_err());
    }

    #[test]
    fn seminorm_matches_variance_for_iid() {
        // No-max variant at fixed n: E S_n^2 / n = ||f||^2 exactly for iid.
        let c = FiniteMarkovChain::iid(&[0.5, 0.5]).unwrap();
        let f = StateFunction::new(vec![1.0, -1.0]);
        let e = estimate_seminorm(&c, &f, &[64], 4000, 5, false).unwrap();
        assert!((e.values[0] - 1.0).abs() < 4.0 * e.std_errors[0]);
    }

    #[test]
    fn seminorms_decrease_in_m() {
        let (c, f) = bench();
        let mut prev = f64::INFINITY;
        for m in [1, 4, 16, 64] {
            let y = averaged_corrector(&c, &f, m).unwrap().y;
            let e = estimate_seminorm(&c, &y, &[256], 1000, 9, true).unwrap();
            assert!(e.values[0] < prev);
            prev = e.values[0];
        }
    }

    #[test]
    fn residual_curve_decays() {
        let (c, f) = bench();
        let curve = residual_decay_curve(&c, &f, &[100, 1000], 500, 2).unwrap();
        assert!(curve.values[1] < curve.values[0]);

        let z = residual_decay_curve(&c, &Observable::zero(&c), &[10, 20], 20, 2).unwrap();
        assert!(z.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn residual_curve_iid_bound() {
        let c = FiniteMarkovChain::iid(&[0.25, 0.75]).unwrap();
        let f = Observable::new(&c, vec![3.0, -1.0]).unwrap();
        // R_j = X_0 - X_j, so max_j R_j^2 <= (max f - min f)^2 = 16.
        let curve = residual_decay_curve(&c, &f, &[10, 100], 200, 4).unwrap();
        for (n, v) in curve.n_grid.iter().zip(&curve.values) {
            assert!(*v <= 16.0 / *n as f64 + 1e-12);
        }
    }

    #[test]
    fn necessity_inequality_holds() {
        let (c, f) = bench();
        let r = necessity_check(&c, &f, 64, 2000, 3).unwrap();
        assert!(r.margin >= 0.0, "{r:?}");
    }

    #[test]
    fn joint_trend_is_monotone() {
        let (c, f) = bench();
        let t = joint_trend(&c, &f, &[1, 2, 4, 8, 16, 32, 64], 512, 1000, 5).unwrap();
        assert!(t.min_spearman().unwrap() > 0.9, "{t:?}");
    }
}
