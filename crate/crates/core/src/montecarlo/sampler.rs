use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::chain::FiniteMarkovChain;
use crate::error::{Error, Result};

/// Independent stream for replica `r` under `seed`.
pub fn replica_rng(seed: u64, replica: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica as u64);
    rng
}

/// Inverse-CDF sampler for the stationary start and the kernel rows.
#[derive(Debug, Clone)]
pub struct PathSampler {
    initial: Vec<f64>,
    rows: Vec<Vec<f64>>,
}

/// Cumulative sums; entries from the last positive-probability state on are
/// pushed to infinity so rounding in the total can never select a null state.
fn cdf(probs: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out: Vec<f64> = Vec::new();
    let mut last_positive = 0;
    for (i, p) in probs.enumerate() {
        acc += p;
        out.push(acc);
        if p > 0.0 {
            last_positive = i;
        }
    }
    for c in &mut out[last_positive..] {
        *c = f64::INFINITY;
    }
    out
}

fn draw(cdf: &[f64], u: f64) -> usize {
    cdf.partition_point(|&c| c <= u)
}

impl PathSampler {
    pub fn new(chain: &FiniteMarkovChain) -> Self {
        let n = chain.n_states();
        let q = chain.kernel();
        Self {
            initial: cdf(chain.pi().iter().copied()),
            rows: (0..n).map(|x| cdf((0..n).map(|y| q[(x, y)]))).collect(),
        }
    }

    /// `xi_0, ..., xi_n` with `xi_0 ~ pi`.
    pub fn path<R: Rng>(&self, rng: &mut R, n: usize) -> Vec<usize> {
        let mut path = Vec::with_capacity(n + 1);
        let mut x = draw(&self.initial, rng.random::<f64>());
        path.push(x);
        for _ in 0..n {
            x = draw(&self.rows[x], rng.random::<f64>());
            path.push(x);
        }
        path
    }
}

pub(crate) fn check_sizes(n: usize, replicas: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidArgument("path length n must be >= 1".into()));
    }
    if replicas == 0 {
        return Err(Error::InvalidArgument("replicas must be >= 1".into()));
    }
    Ok(())
}

/// Evaluates `stat` on every replica path in parallel. The output is in
/// replica order, so any reduction over it is schedule independent.
pub(crate) fn map_replicas<T, F>(
    chain: &FiniteMarkovChain,
    n: usize,
    replicas: usize,
    seed: u64,
    stat: F,
) -> Vec<T>
where
    T: Send,
    F: Fn(&[usize]) -> T + Sync,
{
    let sampler = PathSampler::new(chain);
    (0..replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = replica_rng(seed, r);
            stat(&sampler.path(&mut rng, n))
        })
        .collect()
}

/// Simulated stationary trajectories.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrajectoryBatch {
    pub seed: u64,
    pub replicas: usize,
    pub length: usize,
    /// `replicas x (length + 1)` state indices.
    pub paths: Vec<Vec<usize>>,
}

pub fn simulate(chain: &FiniteMarkovChain, n: usize, replicas: usize, seed: u64) -> Result<TrajectoryBatch> {
    check_sizes(n, replicas)?;
    Ok(TrajectoryBatch {
        seed,
        replicas,
        length: n,
        paths: map_replicas(chain, n, replicas, seed, |p| p.to_vec()),
    })
}
