//! Kolmogorov-Smirnov checks of the rescaled partial-sum process against
//! Brownian motion, unconditionally and conditionally on the initial state.

use crate::chain::{FiniteMarkovChain, Observable};
use crate::error::{Error, Result};
use crate::stats::{brownian_max_cdf, ks_distance, standard_normal_cdf};

use super::sampler::{check_sizes, map_replicas};

pub const KS_REFERENCE_THRESHOLD: f64 = 0.05;
pub const KS_REFERENCE_REPLICAS: usize = 2000;
const DEGENERATE_VARIANCE_TOL: f64 = 1e-12;

/// KS threshold for a sample of `count` replicas: `0.05` at 2000 replicas,
/// scaled as `count^{-1/2}` to keep the false-failure rate fixed.
pub fn ks_threshold(count: usize) -> f64 {
    KS_REFERENCE_THRESHOLD * (KS_REFERENCE_REPLICAS as f64 / count.max(1) as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupStatistics {
    pub state: usize,
    pub count: usize,
    pub terminal_ks: f64,
    pub max_ks: f64,
    pub threshold: f64,
}

impl GroupStatistics {
    pub fn passed(&self) -> bool {
        self.terminal_ks < self.threshold && self.max_ks < self.threshold
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FcltReport {
    pub n: usize,
    pub replicas: usize,
    pub sigma2: f64,
    /// KS distance of `S_n / sqrt(n sigma^2)` to the standard normal law.
    pub terminal_ks: f64,
    /// KS distance of `max_{k<=n} S_k / sqrt(n sigma^2)` to `2 Phi(a) - 1`.
    pub max_ks: f64,
    pub threshold: f64,
    /// Replicas grouped by `xi_0`; states never drawn are omitted.
    pub groups: Vec<GroupStatistics>,
}

impl FcltReport {
    pub fn passed(&self) -> bool {
        self.terminal_ks < self.threshold
            && self.max_ks < self.threshold
            && self.groups.iter().all(GroupStatistics::passed)
    }
}

pub fn fclt_statistics(
    chain: &FiniteMarkovChain,
    f: &Observable,
    n: usize,
    replicas: usize,
    seed: u64,
) -> Result<FcltReport> {
    chain.check_len(f)?;
    check_sizes(n, replicas)?;
    let sigma2 = chain.long_run_variance(f)?;
    if sigma2 <= DEGENERATE_VARIANCE_TOL * chain.norm_sq(f.as_vector()).max(1.0) {
        return Err(Error::DegenerateVariance { variance: sigma2 });
    }
    let scale = 1.0 / (n as f64 * sigma2).sqrt();
    let samples: Vec<(usize, f64, f64)> = map_replicas(chain, n, replicas, seed, |p| {
        let (mut s, mut max) = (0.0_f64, 0.0_f64);
        for &x in &p[..n] {
            s += f[x];
            max = max.max(s);
        }
        (p[0], s * scale, max * scale)
    });
    let terminal: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let maxima: Vec<f64> = samples.iter().map(|s| s.2).collect();

    let mut groups = Vec::new();
    for state in 0..chain.n_states() {
        let (t, m): (Vec<f64>, Vec<f64>) = samples
            .iter()
            .filter(|s| s.0 == state)
            .map(|s| (s.1, s.2))
            .unzip();
        if t.is_empty() {
            continue;
        }
        groups.push(GroupStatistics {
            state,
            count: t.len(),
            terminal_ks: ks_distance(&t, standard_normal_cdf),
            max_ks: ks_distance(&m, brownian_max_cdf),
            threshold: ks_threshold(t.len()),
        });
    }
    Ok(FcltReport {
        n,
        replicas,
        sigma2,
        terminal_ks: ks_distance(&terminal, standard_normal_cdf),
        max_ks: ks_distance(&maxima, brownian_max_cdf),
        threshold: ks_threshold(replicas),
        groups,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_scaling() {
        assert!((ks_threshold(2000) - 0.05).abs() < 1e-15);
        assert!((ks_threshold(500) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn coboundary_is_degenerate() {
        // g = (1, 1, 0) is constant on the successors of every state, so
        // f = g - Qg = (0, 1, -1) has zero long-run variance.
        let c = FiniteMarkovChain::from_rows(&[vec![0.5, 0.5, 0.0], vec![0.0, 0.0, 1.0], vec![0.5, 0.5, 0.0]]).unwrap();
        let f = Observable::new(&c, vec![0.0, 1.0, -1.0]).unwrap();
        assert!(c.long_run_variance(&f).unwrap() < 1e-12);
        assert!(matches!(
            fclt_statistics(&c, &f, 100, 10, 1),
            Err(Error::DegenerateVariance { .. })
        ));
        assert!(matches!(
            fclt_statistics(&c, &Observable::zero(&c), 100, 10, 1),
            Err(Error::DegenerateVariance { .. })
        ));
    }

    #[test]
    fn iid_small_run_is_close_to_gaussian() {
        let c = FiniteMarkovChain::iid(&[0.5, 0.5]).unwrap();
        let f = Observable::new(&c, vec![1.0, -1.0]).unwrap();
        let r = fclt_statistics(&c, &f, 1000, 2000, 21).unwrap();
        assert!((r.sigma2 - 1.0).abs() < 1e-12);
        assert_eq!(r.groups.iter().map(|g| g.count).sum::<usize>(), 2000);
        assert!(r.passed(), "{r:?}");
    }
}
