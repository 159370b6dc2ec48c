#![allow(dead_code)]

use martapprox::{FiniteMarkovChain, Observable};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn two_state_bench() -> (FiniteMarkovChain, Observable) {
    let c = FiniteMarkovChain::two_state(0.3, 0.1).unwrap();
    let f = Observable::new(&c, vec![3.0, -1.0]).unwrap();
    (c, f)
}

pub fn iid_bench() -> (FiniteMarkovChain, Observable) {
    let c = FiniteMarkovChain::iid(&[0.5, 0.5]).unwrap();
    let f = Observable::new(&c, vec![1.0, -1.0]).unwrap();
    (c, f)
}

pub fn three_cycle() -> FiniteMarkovChain {
    FiniteMarkovChain::from_rows(&[vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0]]).unwrap()
}

fn normalise_rows(w: DMatrix<f64>) -> DMatrix<f64> {
    let mut q = w;
    for mut row in q.row_iter_mut() {
        let s: f64 = row.sum();
        row /= s;
    }
    q
}

/// Random irreducible, aperiodic chain: a positive cycle `x -> x+1` and a
/// positive diagonal, plus roughly 70% of the remaining entries.
pub fn random_chain<R: Rng>(rng: &mut R, n: usize) -> FiniteMarkovChain {
    let w = DMatrix::from_fn(n, n, |x, y| {
        if y == (x + 1) % n || x == y || rng.random::<f64>() < 0.7 {
            0.05 + rng.random::<f64>()
        } else {
            0.0
        }
    });
    FiniteMarkovChain::new(normalise_rows(w)).unwrap()
}

/// Random reversible chain `Q = W / rowsum(W)` with symmetric `W`.
pub fn random_reversible<R: Rng>(rng: &mut R, n: usize) -> FiniteMarkovChain {
    let mut w = DMatrix::zeros(n, n);
    for x in 0..n {
        for y in x..n {
            let keep = y == x || y == x + 1 || rng.random::<f64>() < 0.6;
            if keep {
                let v = 0.05 + rng.random::<f64>();
                w[(x, y)] = v;
                w[(y, x)] = v;
            }
        }
    }
    FiniteMarkovChain::new(normalise_rows(w)).unwrap()
}

/// Random circulant chain: normal under the uniform law, generally not reversible.
pub fn random_circulant<R: Rng>(rng: &mut R, n: usize) -> FiniteMarkovChain {
    let mut c: Vec<f64> = (0..n).map(|_| 0.05 + rng.random::<f64>()).collect();
    let s: f64 = c.iter().sum();
    c.iter_mut().for_each(|v| *v /= s);
    FiniteMarkovChain::new(DMatrix::from_fn(n, n, |x, y| c[(y + n - x) % n])).unwrap()
}

pub fn random_observable<R: Rng>(rng: &mut R, chain: &FiniteMarkovChain) -> Observable {
    let values = (0..chain.n_states()).map(|_| rng.random_range(-5.0..5.0)).collect();
    Observable::centered(chain, values).unwrap().0
}
