//! Approximating martingales built from averaged correctors.
//!
//! For a fixed averaging parameter `m` the corrector is
//! `theta^m = (1/m) sum_{i=1}^m E_0(S_i)` and the martingale differences are
//! `D_k^m = theta^m(xi_{k+1}) - (Q theta^m)(xi_k)`. With
//! `Y^m = (1/m)(Qf + ... + Q^m f)` this gives, along every path,
//!
//! ```text
//! S_k = M_k^m + theta^m(xi_0) - theta^m(xi_k) + sum_{j<k} Y^m(xi_j)
//! ```
//!
//! The limit martingale is built from the Poisson potential `g` with
//! `(I - Q) g = f`, which is the `m -> infinity` limit of `theta^m`.

use nalgebra::DMatrix;

use crate::chain::{FiniteMarkovChain, Observable, StateFunction, RESIDUAL_TOL};
use crate::error::{Error, Result};
use crate::stats::Estimate;

/// Tolerance for identities accumulated along a simulated path.
pub const PATH_IDENTITY_TOL: f64 = 1e-9;

/// The averaged corrector `theta^m` and the averaged drift `Y^m`, both as
/// functions of the current state.
#[derive(Debug, Clone, PartialEq)]
pub struct AveragedCorrector {
    pub m: usize,
    pub theta: StateFunction,
    pub y: StateFunction,
}

pub fn averaged_corrector(
    chain: &FiniteMarkovChain,
    f: &Observable,
    m: usize,
) -> Result<AveragedCorrector> {
    if m == 0 {
        return Err(Error::InvalidArgument("averaging parameter m must be >= 1".into()));
    }
    let n = chain.n_states();
    if f.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: f.len(),
        });
    }
    let kernel = chain.kernel();
    let inv_m = 1.0 / m as f64;
    // theta = sum_{j<m} (1 - j/m) Q^j f,  y = (1/m) sum_{i=1..m} Q^i f
    let mut term = f.as_vector().clone();
    let mut theta = term.clone();
    let mut y = nalgebra::DVector::zeros(n);
    for j in 1..=m {
        term = kernel * term;
        y += &term * inv_m;
        if j < m {
            theta += &term * (1.0 - j as f64 * inv_m);
        }
    }
    let corrector = AveragedCorrector {
        m,
        theta: StateFunction::from_vector(theta),
        y: StateFunction::from_vector(y),
    };

    // X_k = D_k^m + theta_k - theta_{k+1} + Y_k reduces to f = theta - Q theta + y.
    let scale = f.max_abs().max(corrector.theta.max_abs()).max(1.0);
    let q_theta = chain.apply_operator(&corrector.theta, 1)?;
    let defect = corrector.theta.sub(&q_theta).add(&corrector.y).max_abs_diff(f);
    if defect > RESIDUAL_TOL * scale {
        return Err(Error::IdentityMismatch {
            what: "f = theta - Q theta + Y".into(),
            lhs: defect,
            rhs: 0.0,
        });
    }
    for (name, h) in [("theta", &corrector.theta), ("Y", &corrector.y)] {
        let mean = chain.expectation(h);
        if mean.abs() > RESIDUAL_TOL * scale {
            return Err(Error::IdentityMismatch {
                what: format!("centering of {name}"),
                lhs: mean,
                rhs: 0.0,
            });
        }
    }
    Ok(corrector)
}

/// A function of one transition `(x, y)`; row `x`, column `y`.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceKernel {
    d: DMatrix<f64>,
}

impl DifferenceKernel {
    pub fn from_matrix(d: DMatrix<f64>) -> Self {
        Self { d }
    }

    pub fn zero(n: usize) -> Self {
        Self {
            d: DMatrix::zeros(n, n),
        }
    }

    /// `d(x, y) = h(y) - (Q h)(x)`: the martingale difference generated by `h`.
    pub fn from_potential(chain: &FiniteMarkovChain, h: &StateFunction) -> Result<Self> {
        let qh = chain.apply_operator(h, 1)?;
        let n = chain.n_states();
        Ok(Self {
            d: DMatrix::from_fn(n, n, |x, y| h[y] - qh[x]),
        })
    }

    pub fn n_states(&self) -> usize {
        self.d.nrows()
    }

    pub fn value(&self, from: usize, to: usize) -> f64 {
        self.d[(from, to)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.d
    }

    /// `max_x |sum_y Q(x,y) d(x,y)|`; zero for a martingale difference.
    pub fn centering_residual(&self, chain: &FiniteMarkovChain) -> f64 {
        let q = chain.kernel();
        (0..self.n_states())
            .map(|x| {
                (0..self.n_states())
                    .map(|y| q[(x, y)] * self.d[(x, y)])
                    .sum::<f64>()
                    .abs()
            })
            .fold(0.0, f64::max)
    }

    /// `E D_0^2 = sum_{x,y} pi(x) Q(x,y) d(x,y)^2`.
    pub fn second_moment(&self, chain: &FiniteMarkovChain) -> f64 {
        transition_weighted_sq(chain, |x, y| self.d[(x, y)])
    }

    pub fn combine(&self, a: f64, other: &DifferenceKernel, b: f64) -> DifferenceKernel {
        DifferenceKernel {
            d: &self.d * a + &other.d * b,
        }
    }
}

fn transition_weighted_sq<F: Fn(usize, usize) -> f64>(chain: &FiniteMarkovChain, d: F) -> f64 {
    let q = chain.kernel();
    let pi = chain.pi();
    let n = chain.n_states();
    let mut acc = 0.0;
    for x in 0..n {
        for y in 0..n {
            let v = d(x, y);
            acc += pi[x] * q[(x, y)] * v * v;
        }
    }
    acc
}

fn check_centering(chain: &FiniteMarkovChain, kernel: &DifferenceKernel, scale: f64) -> Result<()> {
    let residual = kernel.centering_residual(chain);
    if residual > RESIDUAL_TOL * scale.max(1.0) {
        return Err(Error::IdentityMismatch {
            what: "martingale difference centering".into(),
            lhs: residual,
            rhs: 0.0,
        });
    }
    Ok(())
}

/// Martingale differences `D^m` of the `m`-averaged construction.
pub fn diff_kernel_m(chain: &FiniteMarkovChain, f: &Observable, m: usize) -> Result<DifferenceKernel> {
    let corrector = averaged_corrector(chain, f, m)?;
    kernel_from_corrector(chain, &corrector)
}

pub fn kernel_from_corrector(
    chain: &FiniteMarkovChain,
    corrector: &AveragedCorrector,
) -> Result<DifferenceKernel> {
    let kernel = DifferenceKernel::from_potential(chain, &corrector.theta)?;
    check_centering(chain, &kernel, corrector.theta.max_abs())?;
    Ok(kernel)
}

/// The limit martingale differences `D(x,y) = g(y) - (Qg)(x)` with `g` the
/// centred Poisson potential of `f`.
pub fn limit_diff_kernel(chain: &FiniteMarkovChain, f: &Observable) -> Result<DifferenceKernel> {
    let g = chain.poisson_solve(f)?;
    let kernel = DifferenceKernel::from_potential(chain, &g)?;
    check_centering(chain, &kernel, g.max_abs())?;
    Ok(kernel)
}

/// Richardson extrapolation `2 D^{2m} - D^m` of the `m`-kernels.
///
/// `theta^m - g = -(1/m) Q (I-Q)^{-2} f + O(m r^m)`, so the extrapolation
/// cancels the `1/m` term and converges geometrically.
pub fn extrapolated_limit_kernel(
    chain: &FiniteMarkovChain,
    f: &Observable,
    m: usize,
) -> Result<DifferenceKernel> {
    let coarse = diff_kernel_m(chain, f, m)?;
    let fine = diff_kernel_m(chain, f, 2 * m)?;
    Ok(fine.combine(2.0, &coarse, -1.0))
}

/// `||a(xi_0, xi_1) - b(xi_0, xi_1)||_2` under the stationary two-step law.
pub fn diff_distance(
    chain: &FiniteMarkovChain,
    a: &DifferenceKernel,
    b: &DifferenceKernel,
) -> Result<f64> {
    let n = chain.n_states();
    for k in [a, b] {
        if k.n_states() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: k.n_states(),
            });
        }
    }
    Ok(transition_weighted_sq(chain, |x, y| a.value(x, y) - b.value(x, y))
        .max(0.0)
        .sqrt())
}

/// Corrector-side terms of the `m`-decomposition along a path.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectorTrace {
    pub m: usize,
    /// `theta^m(xi_k)`, `k = 0..=n`.
    pub theta: Vec<f64>,
    /// `M_k^m`.
    pub martingale: Vec<f64>,
    /// `R-bar_k^m = sum_{j=1}^k (1/m) E_{j-1}(S_{j+m} - S_j)`.
    pub averaged_remainder: Vec<f64>,
    /// `max_k |S_k - (M_k^m + theta_0 - theta_k + R-bar_k^m)|`.
    pub decomposition_defect: f64,
    /// `max_k |R-bar_k^m - sum_{j<k} Y^m(xi_j)|`.
    pub remainder_defect: f64,
}

/// Exact decomposition of partial sums along one path `xi_0, ..., xi_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionTrace {
    pub states: Vec<usize>,
    /// `S_k = X_0 + ... + X_{k-1}`, `k = 0..=n`.
    pub partial_sums: Vec<f64>,
    /// `M_k = sum_{j<k} d(xi_j, xi_{j+1})` for the supplied kernel.
    pub martingale: Vec<f64>,
    /// `R_k = S_k - M_k`.
    pub residual: Vec<f64>,
    pub corrector: Option<CorrectorTrace>,
}

impl DecompositionTrace {
    /// Number of transitions `n`.
    pub fn horizon(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    /// `max_{1 <= j <= n} R_j^2`.
    pub fn max_residual_sq(&self, n: usize) -> f64 {
        self.residual
            .iter()
            .skip(1)
            .take(n)
            .fold(0.0_f64, |acc, r| acc.max(r * r))
    }
}

pub fn decompose_trajectory(
    chain: &FiniteMarkovChain,
    f: &Observable,
    path: &[usize],
    kernel: &DifferenceKernel,
    corrector: Option<&AveragedCorrector>,
) -> Result<DecompositionTrace> {
    let n_states = chain.n_states();
    if kernel.n_states() != n_states || f.len() != n_states {
        return Err(Error::DimensionMismatch {
            expected: n_states,
            found: if f.len() != n_states {
                f.len()
            } else {
                kernel.n_states()
            },
        });
    }
    if let Some((position, &state)) = path.iter().enumerate().find(|(_, &s)| s >= n_states) {
        return Err(Error::InvalidState {
            position,
            state,
            n_states,
        });
    }
    if path.is_empty() {
        return Ok(DecompositionTrace {
            states: Vec::new(),
            partial_sums: Vec::new(),
            martingale: Vec::new(),
            residual: Vec::new(),
            corrector: None,
        });
    }

    let len = path.len();
    let mut partial_sums = Vec::with_capacity(len);
    let mut martingale = Vec::with_capacity(len);
    let (mut s, mut mart) = (0.0, 0.0);
    partial_sums.push(0.0);
    martingale.push(0.0);
    for w in path.windows(2) {
        s += f[w[0]];
        mart += kernel.value(w[0], w[1]);
        partial_sums.push(s);
        martingale.push(mart);
    }
    let residual = partial_sums
        .iter()
        .zip(&martingale)
        .map(|(s, m)| s - m)
        .collect();

    let corrector = corrector
        .map(|c| corrector_trace(chain, f, path, &partial_sums, c))
        .transpose()?;

    Ok(DecompositionTrace {
        states: path.to_vec(),
        partial_sums,
        martingale,
        residual,
        corrector,
    })
}

fn corrector_trace(
    chain: &FiniteMarkovChain,
    f: &Observable,
    path: &[usize],
    partial_sums: &[f64],
    c: &AveragedCorrector,
) -> Result<CorrectorTrace> {
    if c.theta.len() != chain.n_states() {
        return Err(Error::DimensionMismatch {
            expected: chain.n_states(),
            found: c.theta.len(),
        });
    }
    let m_kernel = kernel_from_corrector(chain, c)?;
    // (1/m) E_{j-1}(S_{j+m} - S_j) via the conditional-sum route, independent of `c.y`.
    let drift = chain
        .conditional_sum(f, c.m + 1)?
        .sub(f)
        .scaled(1.0 / c.m as f64);

    let theta: Vec<f64> = path.iter().map(|&x| c.theta[x]).collect();
    let mut martingale = Vec::with_capacity(path.len());
    let mut averaged_remainder = Vec::with_capacity(path.len());
    let (mut mart, mut rbar, mut ysum) = (0.0, 0.0, 0.0);
    let mut remainder_defect = 0.0_f64;
    martingale.push(0.0);
    averaged_remainder.push(0.0);
    for w in path.windows(2) {
        mart += m_kernel.value(w[0], w[1]);
        rbar += drift[w[0]];
        ysum += c.y[w[0]];
        remainder_defect = remainder_defect.max((rbar - ysum).abs());
        martingale.push(mart);
        averaged_remainder.push(rbar);
    }
    let decomposition_defect = (0..path.len())
        .map(|k| {
            let rhs = martingale[k] + theta[0] - theta[k] + averaged_remainder[k];
            (partial_sums[k] - rhs).abs()
        })
        .fold(0.0, f64::max);

    let scale = (path.len() as f64).sqrt() * c.theta.max_abs().max(f.max_abs()).max(1.0);
    for (what, defect) in [
        ("S_k = M_k^m + theta_0 - theta_k + R-bar_k^m", decomposition_defect),
        ("R-bar_k^m = sum of Y_j^m", remainder_defect),
    ] {
        if defect > PATH_IDENTITY_TOL * scale {
            return Err(Error::IdentityMismatch {
                what: what.into(),
                lhs: defect,
                rhs: 0.0,
            });
        }
    }
    Ok(CorrectorTrace {
        m: c.m,
        theta,
        martingale,
        averaged_remainder,
        decomposition_defect,
        remainder_defect,
    })
}

/// Monte Carlo estimate of `E(max_{1<=j<=n} (S_j - M_j)^2) / n`.
pub fn residual_max_statistic(traces: &[DecompositionTrace], n: usize) -> Result<Estimate> {
    if traces.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if n == 0 {
        return Err(Error::InvalidArgument("horizon n must be >= 1".into()));
    }
    let mut samples = Vec::with_capacity(traces.len());
    for (index, t) in traces.iter().enumerate() {
        if t.horizon() < n {
            return Err(Error::TraceTooShort {
                index,
                len: t.horizon(),
                needed: n,
            });
        }
        samples.push(t.max_residual_sq(n) / n as f64);
    }
    Ok(Estimate::from_samples(&samples).expect("non-empty"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn bench() -> (FiniteMarkovChain, Observable) {
        let c = FiniteMarkovChain::two_state(0.3, 0.1).unwrap();
        let f = Observable::new(&c, vec![3.0, -1.0]).unwrap();
        (c, f)
    }

    fn iid() -> (FiniteMarkovChain, Observable) {
        let c = FiniteMarkovChain::iid(&[0.25, 0.75]).unwrap();
        let f = Observable::new(&c, vec![3.0, -1.0]).unwrap();
        (c, f)
    }

    #[test]
    fn correctors_on_iid_chain() {
        let (c, f) = iid();
        for m in [1, 3, 10] {
            let a = averaged_corrector(&c, &f, m).unwrap();
            assert!(a.y.max_abs() < 1e-15);
            assert!(a.theta.max_abs_diff(&f) < 1e-15);
        }
    }

    #[test]
    fn correctors_on_two_state_chain() {
        let (c, f) = bench();
        let a1 = averaged_corrector(&c, &f, 1).unwrap();
        assert!(a1.y.max_abs_diff(&f.scaled(0.6)) < 1e-14);
        assert!(a1.theta.max_abs_diff(&f) < 1e-14);
        let a2 = averaged_corrector(&c, &f, 2).unwrap();
        assert!(a2.y.max_abs_diff(&f.scaled(0.48)) < 1e-14);
        assert!(averaged_corrector(&c, &f, 0).is_err());
    }

    #[test]
    fn m_kernels() {
        let (c, f) = iid();
        let d = diff_kernel_m(&c, &f, 1).unwrap();
        for x in 0..2 {
            for y in 0..2 {
                assert_abs_diff_eq!(d.value(x, y), f[y], epsilon = 1e-15);
            }
        }
        let (c, f) = bench();
        let d = diff_kernel_m(&c, &f, 1).unwrap();
        for x in 0..2 {
            for y in 0..2 {
                assert_abs_diff_eq!(d.value(x, y), f[y] - 0.6 * f[x], epsilon = 1e-14);
            }
        }
        let zero = diff_kernel_m(&c, &Observable::zero(&c), 4).unwrap();
        assert_eq!(zero, DifferenceKernel::zero(2));
    }

    #[test]
    fn limit_kernel_on_two_state_chain() {
        let (c, f) = bench();
        let d = limit_diff_kernel(&c, &f).unwrap();
        for x in 0..2 {
            for y in 0..2 {
                assert_abs_diff_eq!(d.value(x, y), 2.5 * f[y] - 1.5 * f[x], epsilon = 1e-12);
            }
        }
        assert_abs_diff_eq!(d.second_moment(&c), 12.0, epsilon = 1e-10);
        assert!(d.centering_residual(&c) < 1e-12);
    }

    #[test]
    fn distance_between_first_and_limit_kernel() {
        // Oracle: explicit weighted sum over the four transitions.
        let (c, f) = bench();
        let pi = [0.25, 0.75];
        let q = [[0.7, 0.3], [0.1, 0.9]];
        let mut oracle = 0.0;
        for x in 0..2 {
            for y in 0..2 {
                let d1 = f[y] - 0.6 * f[x];
                let d = 2.5 * f[y] - 1.5 * f[x];
                oracle += pi[x] * q[x][y] * (d1 - d).powi(2);
            }
        }
        let oracle = oracle.sqrt();
        let a = diff_kernel_m(&c, &f, 1).unwrap();
        let b = limit_diff_kernel(&c, &f).unwrap();
        assert_abs_diff_eq!(diff_distance(&c, &a, &b).unwrap(), oracle, epsilon = 1e-12);
        assert_eq!(diff_distance(&c, &a, &a).unwrap(), 0.0);

        let (c, f) = iid();
        let lim = limit_diff_kernel(&c, &f).unwrap();
        for m in [1, 5, 50] {
            let dm = diff_kernel_m(&c, &f, m).unwrap();
            assert!(diff_distance(&c, &dm, &lim).unwrap() < 1e-13);
        }
    }

    #[test]
    fn extrapolated_kernel_matches_poisson_kernel() {
        let (c, f) = bench();
        let lim = limit_diff_kernel(&c, &f).unwrap();
        let ext = extrapolated_limit_kernel(&c, &f, 1 << 12).unwrap();
        assert!(diff_distance(&c, &ext, &lim).unwrap() < 1e-6);
    }

    #[test]
    fn empty_and_single_state_paths() {
        let (c, f) = bench();
        let k = limit_diff_kernel(&c, &f).unwrap();
        let t = decompose_trajectory(&c, &f, &[], &k, None).unwrap();
        assert!(t.partial_sums.is_empty() && t.residual.is_empty());
        let t = decompose_trajectory(&c, &f, &[1], &k, None).unwrap();
        assert_eq!(t.partial_sums, vec![0.0]);
        assert_eq!(t.horizon(), 0);
    }

    #[test]
    fn invalid_state_is_reported() {
        let (c, f) = bench();
        let k = limit_diff_kernel(&c, &f).unwrap();
        let err = decompose_trajectory(&c, &f, &[0, 1, 2], &k, None).unwrap_err();
        assert_eq!(
            err,
            Error::InvalidState {
                position: 2,
                state: 2,
                n_states: 2
            }
        );
    }

    #[test]
    fn iid_limit_residual_telescopes() {
        let (c, f) = iid();
        let k = limit_diff_kernel(&c, &f).unwrap();
        let path = [0, 1, 1, 0, 1, 0, 0, 1];
        let t = decompose_trajectory(&c, &f, &path, &k, None).unwrap();
        for (j, r) in t.residual.iter().enumerate() {
            assert_abs_diff_eq!(*r, f[path[0]] - f[path[j]], epsilon = 1e-12);
        }
    }

    #[test]
    fn four_term_identity_along_a_path() {
        let (c, f) = bench();
        let lim = limit_diff_kernel(&c, &f).unwrap();
        let corr = averaged_corrector(&c, &f, 3).unwrap();
        let path: Vec<usize> = (0..101).map(|i| ((i * 7 + i / 3) % 5 == 0) as usize).collect();
        let t = decompose_trajectory(&c, &f, &path, &lim, Some(&corr)).unwrap();
        let ct = t.corrector.unwrap();
        assert!(ct.decomposition_defect < 1e-9);
        assert!(ct.remainder_defect < 1e-9);
        assert_eq!(ct.martingale.len(), 101);
    }

    #[test]
    fn residual_statistic_edge_cases() {
        assert_eq!(residual_max_statistic(&[], 3), Err(Error::EmptyBatch));
        let (c, f) = bench();
        let k = limit_diff_kernel(&c, &f).unwrap();
        let t = decompose_trajectory(&c, &f, &[0, 1], &k, None).unwrap();
        assert!(matches!(
            residual_max_statistic(std::slice::from_ref(&t), 2),
            Err(Error::TraceTooShort { .. })
        ));
        // R_1 = g(xi_0) - g(xi_1) = 7.5 + 2.5
        let e = residual_max_statistic(&[t], 1).unwrap();
        assert_abs_diff_eq!(e.value, 100.0, epsilon = 1e-9);

        let zero = Observable::zero(&c);
        let kz = limit_diff_kernel(&c, &zero).unwrap();
        let tz = decompose_trajectory(&c, &zero, &[0, 1, 0, 0], &kz, None).unwrap();
        assert_eq!(residual_max_statistic(&[tz], 3).unwrap().value, 0.0);
    }
}
