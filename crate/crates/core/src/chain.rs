//! Finite-state stationary Markov chains and the L2(pi) geometry they carry.
//!
//! A chain is validated once at construction and is immutable afterwards, so
//! it can be shared freely between worker threads. The stationary law is
//! obtained from a direct linear solve of the fixed-point system
//! `pi (I - Q) = 0`, `sum(pi) = 1`.
//!
//! The Markov operator acts on functions of the state as
//! `(Q h)(x) = sum_y Q(x, y) h(y)`, i.e. `(Q^k h)(xi_0) = E(h(xi_k) | xi_0)`.

use std::collections::VecDeque;
use std::ops::{Deref, Index};
use std::sync::OnceLock;

use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Rows whose sum deviates from one by more than this are rejected.
pub const ROW_SUM_REJECT_TOL: f64 = 1e-9;
/// Stored kernels have rows summing to one within this tolerance.
pub const STOCHASTIC_TOL: f64 = 1e-12;
/// Centering tolerance for observables (relative to `max(1, max|f|)`).
pub const CENTERING_TOL: f64 = 1e-12;
/// Residual tolerance for linear solves.
pub const RESIDUAL_TOL: f64 = 1e-10;
/// Agreement tolerance between two independent computations of a quantity.
pub const CROSS_CHECK_TOL: f64 = 1e-8;
/// Stationary probabilities below this trigger a conditioning warning.
pub const SMALL_PI_WARN: f64 = 1e-6;

const MAX_SERIES_TERMS: usize = 1_000_000;
const DECAY_LADDER_MAX_LOG2: u32 = 20;

/// A real function on the state space, i.e. an element of L2(pi).
#[derive(Debug, Clone, PartialEq)]
pub struct StateFunction {
    values: DVector<f64>,
}

impl StateFunction {
    pub fn new(values: Vec<f64>) -> Self {
        Self {
            values: DVector::from_vec(values),
        }
    }

    pub fn from_vector(values: DVector<f64>) -> Self {
        Self { values }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            values: DVector::zeros(n),
        }
    }

    pub fn constant(n: usize, value: f64) -> Self {
        Self {
            values: DVector::from_element(n, value),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn as_slice(&self) -> &[f64] {
        self.values.as_slice()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.values.iter().copied().collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    /// Largest absolute coordinate difference.
    pub fn max_abs_diff(&self, other: &StateFunction) -> f64 {
        self.values
            .iter()
            .zip(other.values.iter())
            .fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs()))
    }

    pub fn scaled(&self, factor: f64) -> StateFunction {
        StateFunction::from_vector(&self.values * factor)
    }

    pub fn sub(&self, other: &StateFunction) -> StateFunction {
        StateFunction::from_vector(&self.values - &other.values)
    }

    pub fn add(&self, other: &StateFunction) -> StateFunction {
        StateFunction::from_vector(&self.values + &other.values)
    }
}

impl Index<usize> for StateFunction {
    type Output = f64;

    fn index(&self, index: usize) -> &f64 {
        &self.values[index]
    }
}

/// A centred observable `f` in L2_0(pi); `X_i = f(xi_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observable {
    function: StateFunction,
}

impl Observable {
    /// Wraps `values`, rejecting them unless `sum_x pi(x) f(x) = 0`.
    pub fn new(chain: &FiniteMarkovChain, values: Vec<f64>) -> Result<Self> {
        let function = StateFunction::new(values);
        chain.check_len(&function)?;
        let mean = chain.expectation(&function);
        if mean.abs() > CENTERING_TOL * function.max_abs().max(1.0) {
            return Err(Error::NotCentered { mean });
        }
        Ok(Self { function })
    }

    /// Centres `values` under `pi` when needed. Returns the observable and the
    /// mean that was subtracted (zero when the input was already centred).
    pub fn centered(chain: &FiniteMarkovChain, values: Vec<f64>) -> Result<(Self, f64)> {
        let function = StateFunction::new(values);
        chain.check_len(&function)?;
        let mean = chain.expectation(&function);
        if mean.abs() <= CENTERING_TOL * function.max_abs().max(1.0) {
            return Ok((Self { function }, 0.0));
        }
        let shifted = function.values.map(|v| v - mean);
        Ok((
            Self {
                function: StateFunction::from_vector(shifted),
            },
            mean,
        ))
    }

    pub fn zero(chain: &FiniteMarkovChain) -> Self {
        Self {
            function: StateFunction::zeros(chain.n_states()),
        }
    }

    pub fn as_function(&self) -> &StateFunction {
        &self.function
    }
}

impl Deref for Observable {
    type Target = StateFunction;

    fn deref(&self) -> &StateFunction {
        &self.function
    }
}

/// Certified decay of the Markov operator on the centred subspace:
/// `||Q^k h||_pi <= factor * rate^k * ||h||_pi` for every centred `h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometricDecay {
    pub factor: f64,
    pub rate: f64,
    /// Power at which the operator norm was measured.
    pub block: usize,
}

impl GeometricDecay {
    pub fn is_contracting(&self) -> bool {
        self.rate < 1.0
    }

    pub fn bound(&self, k: usize) -> f64 {
        (self.factor * self.rate.powi(k as i32)).min(1.0)
    }

    /// Upper bound for `sum_{k > last} factor * rate^k`.
    pub fn tail_after(&self, last: usize) -> f64 {
        if !self.is_contracting() {
            return f64::INFINITY;
        }
        self.factor * self.rate.powf(last as f64 + 1.0) / (1.0 - self.rate)
    }

    /// `sum_{k >= 0} bound(k)`.
    pub fn total_mass(&self) -> f64 {
        if !self.is_contracting() {
            return f64::INFINITY;
        }
        if self.rate == 0.0 {
            return 1.0;
        }
        // Terms are capped at one until factor * rate^k drops below one.
        let saturated = if self.factor > 1.0 {
            (-(self.factor.ln()) / self.rate.ln()).ceil() as usize
        } else {
            0
        };
        saturated as f64 + self.factor * self.rate.powf(saturated as f64) / (1.0 - self.rate)
    }

    /// Smallest `K` with `scale * tail_after(K) <= tol`, if within `max_terms`.
    pub fn terms_for(&self, scale: f64, tol: f64, max_terms: usize) -> Option<usize> {
        if scale == 0.0 || self.rate == 0.0 {
            return Some(1);
        }
        if !self.is_contracting() {
            return None;
        }
        // scale * factor * rate^(K+1) / (1 - rate) <= tol
        let needed = (tol * (1.0 - self.rate) / (scale * self.factor)).ln() / self.rate.ln() - 1.0;
        let k = needed.ceil().max(1.0);
        if k > max_terms as f64 {
            None
        } else {
            Some(k as usize)
        }
    }
}

#[derive(Debug, Clone)]
struct DecayProfile {
    /// `(p, ||Q^p restricted to L2_0||)` for dyadic `p`.
    ladder: Vec<(usize, f64)>,
    decay: GeometricDecay,
    radius_bound: f64,
}

/// A validated, irreducible finite Markov chain together with its stationary law.
#[derive(Debug, Clone)]
pub struct FiniteMarkovChain {
    kernel: DMatrix<f64>,
    pi: DVector<f64>,
    sqrt_pi: DVector<f64>,
    profile: OnceLock<DecayProfile>,
}

/// Validates `kernel` and computes its stationary law.
pub fn build_chain(kernel: DMatrix<f64>) -> Result<FiniteMarkovChain> {
    FiniteMarkovChain::new(kernel)
}

impl FiniteMarkovChain {
    pub fn new(mut kernel: DMatrix<f64>) -> Result<Self> {
        let (rows, cols) = kernel.shape();
        if rows != cols || rows == 0 {
            return Err(Error::NonSquare { rows, cols });
        }
        let n = rows;
        for r in 0..n {
            for c in 0..n {
                if !kernel[(r, c)].is_finite() {
                    return Err(Error::NonFinite { row: r, col: c });
                }
            }
        }
        for r in 0..n {
            let row = kernel.row(r);
            if let Some((c, v)) = row.iter().enumerate().find(|(_, v)| **v < 0.0) {
                return Err(Error::NonStochasticRow {
                    row: r,
                    reason: format!("negative entry {v} in column {c}"),
                });
            }
            let sum: f64 = row.iter().sum();
            let deviation = (sum - 1.0).abs();
            if deviation > ROW_SUM_REJECT_TOL {
                return Err(Error::NonStochasticRow {
                    row: r,
                    reason: format!("row sums to {sum}"),
                });
            }
            if deviation > STOCHASTIC_TOL {
                kernel.row_mut(r).scale_mut(1.0 / sum);
            }
        }
        if !strongly_connected(&kernel) {
            return Err(Error::ReducibleChain(
                "transition graph is not strongly connected".into(),
            ));
        }
        let pi = stationary_law(&kernel)?;
        let min_pi = pi.min();
        if min_pi <= 0.0 {
            return Err(Error::ReducibleChain(format!(
                "stationary law has non-positive mass {min_pi:e}"
            )));
        }
        if min_pi < SMALL_PI_WARN {
            warn!("stationary law has mass {min_pi:e} < {SMALL_PI_WARN:e}; conjugated operators are poorly conditioned");
        }
        let sqrt_pi = pi.map(f64::sqrt);
        Ok(Self {
            kernel,
            pi,
            sqrt_pi,
            profile: OnceLock::new(),
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::NonSquare {
                rows: n,
                cols: bad.len(),
            });
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::new(DMatrix::from_row_slice(n, n, &flat))
    }

    /// The chain whose rows all equal `pi`: an i.i.d. sequence.
    pub fn iid(pi: &[f64]) -> Result<Self> {
        let rows: Vec<Vec<f64>> = pi.iter().map(|_| pi.to_vec()).collect();
        Self::from_rows(&rows)
    }

    /// Two-state chain with `P(0 -> 1) = p` and `P(1 -> 0) = q`.
    pub fn two_state(p: f64, q: f64) -> Result<Self> {
        Self::from_rows(&[vec![1.0 - p, p], vec![q, 1.0 - q]])
    }

    pub fn n_states(&self) -> usize {
        self.kernel.nrows()
    }

    pub fn kernel(&self) -> &DMatrix<f64> {
        &self.kernel
    }

    pub fn transition(&self, from: usize, to: usize) -> f64 {
        self.kernel[(from, to)]
    }

    pub fn pi(&self) -> &DVector<f64> {
        &self.pi
    }

    pub fn sqrt_pi(&self) -> &DVector<f64> {
        &self.sqrt_pi
    }

    /// `max_x |sum_y Q(x,y) - 1|`.
    pub fn max_row_deviation(&self) -> f64 {
        self.kernel
            .row_iter()
            .map(|r| (r.sum() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// `max_y |(pi Q)(y) - pi(y)|`.
    pub fn stationarity_residual(&self) -> f64 {
        let pq = self.kernel.tr_mul(&self.pi);
        (pq - &self.pi).amax()
    }

    /// `S(x,y) = pi(x)^{1/2} Q(x,y) pi(y)^{-1/2}`: the Markov operator written
    /// in an orthonormal basis of L2(pi).
    pub fn conjugated_operator(&self) -> DMatrix<f64> {
        let n = self.n_states();
        DMatrix::from_fn(n, n, |x, y| {
            self.sqrt_pi[x] * self.kernel[(x, y)] / self.sqrt_pi[y]
        })
    }

    /// Conjugated operator restricted to the centred subspace:
    /// `S - sqrt(pi) sqrt(pi)^T`.
    pub fn centered_conjugated_operator(&self) -> DMatrix<f64> {
        self.conjugated_operator() - &self.sqrt_pi * self.sqrt_pi.transpose()
    }

    /// `Q^k` as a matrix.
    pub fn kernel_power(&self, k: usize) -> DMatrix<f64> {
        matrix_power(&self.kernel, k)
    }

    pub(crate) fn check_len(&self, h: &StateFunction) -> Result<()> {
        if h.len() != self.n_states() {
            return Err(Error::DimensionMismatch {
                expected: self.n_states(),
                found: h.len(),
            });
        }
        Ok(())
    }

    pub fn expectation(&self, h: &StateFunction) -> f64 {
        self.pi.dot(h.as_vector())
    }

    /// `Q^power h`; power 0 is the identity.
    pub fn apply_operator(&self, h: &StateFunction, power: usize) -> Result<StateFunction> {
        self.check_len(h)?;
        let mut v = h.as_vector().clone();
        for _ in 0..power {
            v = &self.kernel * v;
        }
        Ok(StateFunction::from_vector(v))
    }

    /// `[h, Qh, ..., Q^{count-1} h]`.
    pub fn operator_orbit(&self, h: &StateFunction, count: usize) -> Result<Vec<StateFunction>> {
        self.check_len(h)?;
        let mut out = Vec::with_capacity(count);
        let mut v = h.as_vector().clone();
        for j in 0..count {
            if j > 0 {
                v = &self.kernel * v;
            }
            out.push(StateFunction::from_vector(v.clone()));
        }
        Ok(out)
    }

    /// `E_0(S_k) = sum_{j<k} Q^j f` as a function of `xi_0`.
    pub fn conditional_sum(&self, f: &Observable, k: usize) -> Result<StateFunction> {
        if k == 0 {
            return Err(Error::InvalidArgument("conditional_sum needs k >= 1".into()));
        }
        self.check_len(f)?;
        let mut term = f.as_vector().clone();
        let mut acc = term.clone();
        for _ in 1..k {
            term = &self.kernel * term;
            acc += &term;
        }
        Ok(StateFunction::from_vector(acc))
    }

    /// `sum_x pi(x) g(x) h(x)`.
    pub fn inner_product_pi(&self, g: &StateFunction, h: &StateFunction) -> Result<f64> {
        self.check_len(g)?;
        self.check_len(h)?;
        Ok(self.weighted_dot(g.as_vector(), h.as_vector()))
    }

    pub fn norm_pi(&self, h: &StateFunction) -> Result<f64> {
        Ok(self.inner_product_pi(h, h)?.max(0.0).sqrt())
    }

    pub(crate) fn weighted_dot(&self, g: &DVector<f64>, h: &DVector<f64>) -> f64 {
        g.iter()
            .zip(h.iter())
            .zip(self.pi.iter())
            .map(|((a, b), p)| p * a * b)
            .sum()
    }

    pub(crate) fn norm_sq(&self, h: &DVector<f64>) -> f64 {
        self.weighted_dot(h, h)
    }

    /// Solves the Poisson equation `(I - Q) g = f` with `pi . g = 0`.
    pub fn poisson_solve(&self, f: &Observable) -> Result<StateFunction> {
        self.check_len(f)?;
        let n = self.n_states();
        if f.max_abs() == 0.0 {
            return Ok(StateFunction::zeros(n));
        }
        // (I - Q + 1 pi^T) g = f forces pi.g = pi.f = 0 and then (I - Q) g = f.
        let system = DMatrix::identity(n, n) - &self.kernel
            + DMatrix::from_fn(n, n, |_, y| self.pi[y]);
        let lu = system.clone().lu();
        let rhs = f.as_vector();
        let mut g = lu
            .solve(rhs)
            .ok_or_else(|| Error::SingularSystem("I - Q + 1 pi^T is singular".into()))?;
        let correction = lu
            .solve(&(rhs - &system * &g))
            .ok_or_else(|| Error::SingularSystem("refinement step failed".into()))?;
        g += correction;
        let mean = self.pi.dot(&g);
        let scale_f = self.norm_sq(rhs).sqrt().max(1.0);
        if !g.iter().all(|v| v.is_finite()) || mean.abs() > RESIDUAL_TOL * scale_f.max(g.amax()) {
            return Err(Error::SingularSystem(format!(
                "solution is not centred (mean {mean:e})"
            )));
        }
        g.add_scalar_mut(-mean);
        let residual = &g - &self.kernel * &g - rhs;
        let res_norm = self.norm_sq(&residual).sqrt();
        if res_norm > RESIDUAL_TOL * scale_f {
            return Err(Error::SingularSystem(format!(
                "Poisson residual {res_norm:e} exceeds tolerance"
            )));
        }
        Ok(StateFunction::from_vector(g))
    }

    /// `sigma^2 = lim var(S_n)/n`, computed as `||g||^2 - ||Qg||^2` from the
    /// Poisson potential and cross-checked against the covariance series
    /// `||f||^2 + 2 sum_k <f, Q^k f>`.
    pub fn long_run_variance(&self, f: &Observable) -> Result<f64> {
        self.check_len(f)?;
        if f.max_abs() == 0.0 {
            return Ok(0.0);
        }
        let norm_f_sq = self.norm_sq(f.as_vector());
        let decay = self.decay();
        let terms = decay
            .terms_for(2.0 * norm_f_sq, 1e-10, MAX_SERIES_TERMS)
            .ok_or(Error::SeriesNotConverged {
                terms: MAX_SERIES_TERMS,
            })?;
        let mut series = norm_f_sq;
        let mut v = f.as_vector().clone();
        for _ in 1..=terms {
            v = &self.kernel * v;
            series += 2.0 * self.weighted_dot(f.as_vector(), &v);
        }

        let g = self.poisson_solve(f)?;
        let qg = &self.kernel * g.as_vector();
        let via_poisson = self.norm_sq(g.as_vector()) - self.norm_sq(&qg);

        if (via_poisson - series).abs() > CROSS_CHECK_TOL * norm_f_sq.max(1.0) {
            return Err(Error::IdentityMismatch {
                what: "long-run variance (Poisson vs covariance series)".into(),
                lhs: via_poisson,
                rhs: series,
            });
        }
        Ok(via_poisson.max(0.0))
    }

    fn profile(&self) -> &DecayProfile {
        self.profile.get_or_init(|| decay_profile(self))
    }

    /// Certified geometric decay of `Q` on L2_0(pi).
    pub fn decay(&self) -> GeometricDecay {
        self.profile().decay
    }

    /// Gelfand upper bound `min_p ||Q^p|_{L2_0}||^{1/p}` on the spectral
    /// radius of `Q` restricted to centred functions.
    pub fn spectral_radius_bound(&self) -> f64 {
        self.profile().radius_bound
    }

    /// `(p, ||Q^p restricted to L2_0(pi)||)` for `p = 1, 2, 4, ...`.
    pub fn centered_norm_ladder(&self) -> &[(usize, f64)] {
        &self.profile().ladder
    }
}

pub(crate) fn matrix_power(m: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let n = m.nrows();
    let mut result = DMatrix::identity(n, n);
    let mut base = m.clone();
    let mut e = k;
    while e > 0 {
        if e & 1 == 1 {
            result = &result * &base;
        }
        e >>= 1;
        if e > 0 {
            base = &base * &base;
        }
    }
    result
}

fn strongly_connected(kernel: &DMatrix<f64>) -> bool {
    let n = kernel.nrows();
    let reach = |forward: bool| {
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(x) = queue.pop_front() {
            for y in 0..n {
                let w = if forward { kernel[(x, y)] } else { kernel[(y, x)] };
                if w > 0.0 && !seen[y] {
                    seen[y] = true;
                    queue.push_back(y);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    reach(true) && reach(false)
}

fn stationary_law(kernel: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = kernel.nrows();
    // (I - Q)^T pi = 0 with the last equation replaced by sum(pi) = 1.
    let mut system = (DMatrix::identity(n, n) - kernel).transpose();
    system.row_mut(n - 1).fill(1.0);
    let mut rhs = DVector::zeros(n);
    rhs[n - 1] = 1.0;
    let pi = system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::ReducibleChain("stationary system is singular".into()))?;
    let residual = (kernel.tr_mul(&pi) - &pi).amax();
    if residual > RESIDUAL_TOL || !pi.iter().all(|v| v.is_finite()) {
        return Err(Error::SingularSystem(format!(
            "stationary residual {residual:e} exceeds tolerance"
        )));
    }
    Ok(pi)
}

fn decay_profile(chain: &FiniteMarkovChain) -> DecayProfile {
    let mut power = chain.centered_conjugated_operator();
    let mut ladder = Vec::new();
    for e in 0..=DECAY_LADDER_MAX_LOG2 {
        let p = 1usize << e;
        let norm = power.singular_values().max();
        // Underflowed powers say nothing about the rate.
        if p > 1 && norm < 1e-200 {
            break;
        }
        ladder.push((p, norm));
        if norm == 0.0 {
            break;
        }
        power = &power * &power;
    }
    let radius_bound = ladder
        .iter()
        .map(|&(p, c)| c.powf(1.0 / p as f64))
        .fold(f64::INFINITY, f64::min)
        .min(1.0);

    let pick = ladder
        .iter()
        .find(|&&(_, c)| c <= 0.5)
        .or_else(|| {
            ladder
                .iter()
                .filter(|&&(_, c)| c < 1.0 - 1e-12)
                .min_by(|a, b| {
                    let ra = a.1.powf(1.0 / a.0 as f64);
                    let rb = b.1.powf(1.0 / b.0 as f64);
                    ra.total_cmp(&rb)
                })
        })
        .copied();
    let decay = match pick {
        Some((p, c)) => {
            let rate = c.powf(1.0 / p as f64);
            let factor = if rate > 0.0 {
                rate.powf(1.0 - p as f64)
            } else {
                1.0
            };
            GeometricDecay {
                factor,
                rate,
                block: p,
            }
        }
        None => GeometricDecay {
            factor: 1.0,
            rate: 1.0,
            block: 1,
        },
    };
    DecayProfile {
        ladder,
        decay,
        radius_bound,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn bench() -> FiniteMarkovChain {
        FiniteMarkovChain::two_state(0.3, 0.1).unwrap()
    }

    #[test]
    fn symmetric_kernel_has_uniform_law() {
        let c = FiniteMarkovChain::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        assert_abs_diff_eq!(c.pi()[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(c.pi()[1], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn two_state_law_matches_hand_solution() {
        // pi_0 * 0.3 = pi_1 * 0.1, pi_0 + pi_1 = 1.
        let c = bench();
        assert_abs_diff_eq!(c.pi()[0], 0.25, epsilon = 1e-14);
        assert_abs_diff_eq!(c.pi()[1], 0.75, epsilon = 1e-14);
        assert!(c.stationarity_residual() <= 1e-10);
        assert!(c.max_row_deviation() <= STOCHASTIC_TOL);
    }

    #[test]
    fn identity_kernel_is_reducible() {
        let err = FiniteMarkovChain::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap_err();
        assert!(matches!(err, Error::ReducibleChain(_)));
    }

    #[test]
    fn transient_state_is_reducible() {
        let err = FiniteMarkovChain::from_rows(&[vec![0.5, 0.5], vec![0.0, 1.0]]).unwrap_err();
        assert!(matches!(err, Error::ReducibleChain(_)));
    }

    #[test]
    fn rejects_bad_rows() {
        let short = FiniteMarkovChain::from_rows(&[vec![0.5, 0.4], vec![0.5, 0.5]]).unwrap_err();
        assert!(matches!(short, Error::NonStochasticRow { row: 0, .. }));
        let neg = FiniteMarkovChain::from_rows(&[vec![1.1, -0.1], vec![0.5, 0.5]]).unwrap_err();
        assert!(matches!(neg, Error::NonStochasticRow { row: 0, .. }));
        let nan = FiniteMarkovChain::from_rows(&[vec![f64::NAN, 1.0], vec![0.5, 0.5]]).unwrap_err();
        assert!(matches!(nan, Error::NonFinite { .. }));
        let rect = FiniteMarkovChain::new(DMatrix::from_element(2, 3, 1.0 / 3.0)).unwrap_err();
        assert!(matches!(rect, Error::NonSquare { .. }));
    }

    #[test]
    fn slightly_off_rows_are_renormalised() {
        let c = FiniteMarkovChain::from_rows(&[vec![0.5, 0.5 + 5e-10], vec![0.5, 0.5]]).unwrap();
        assert!(c.max_row_deviation() <= STOCHASTIC_TOL);
    }

    #[test]
    fn operator_on_iid_chain_kills_centred_functions() {
        let c = FiniteMarkovChain::iid(&[0.2, 0.3, 0.5]).unwrap();
        let f = Observable::new(&c, vec![1.0, 1.0, -1.0]).unwrap();
        let qf = c.apply_operator(&f, 1).unwrap();
        assert!(qf.max_abs() < 1e-15);
    }

    #[test]
    fn operator_on_two_state_scales_by_eigenvalue() {
        let c = bench();
        let f = StateFunction::new(vec![3.0, -1.0]);
        let qf = c.apply_operator(&f, 1).unwrap();
        assert_abs_diff_eq!(qf[0], 1.8, epsilon = 1e-14);
        assert_abs_diff_eq!(qf[1], -0.6, epsilon = 1e-14);
        assert_eq!(c.apply_operator(&f, 0).unwrap(), f);
        let bad = StateFunction::new(vec![1.0]);
        assert!(matches!(
            c.apply_operator(&bad, 1),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn conditional_sums() {
        let c = bench();
        let f = Observable::new(&c, vec![3.0, -1.0]).unwrap();
        let s2 = c.conditional_sum(&f, 2).unwrap();
        assert_abs_diff_eq!(s2[0], 4.8, epsilon = 1e-14);
        assert_abs_diff_eq!(s2[1], -1.6, epsilon = 1e-14);
        assert_eq!(c.conditional_sum(&f, 1).unwrap(), *f.as_function());
        assert!(c.conditional_sum(&f, 0).is_err());

        let iid = FiniteMarkovChain::iid(&[0.5, 0.5]).unwrap();
        let g = Observable::new(&iid, vec![1.0, -1.0]).unwrap();
        let s5 = iid.conditional_sum(&g, 5).unwrap();
        assert!(s5.max_abs_diff(&g) < 1e-15);
    }

    #[test]
    fn weighted_norms() {
        let c = bench();
        let f = StateFunction::new(vec![3.0, -1.0]);
        assert_abs_diff_eq!(c.norm_pi(&f).unwrap().powi(2), 3.0, epsilon = 1e-14);
        assert_eq!(c.norm_pi(&StateFunction::zeros(2)).unwrap(), 0.0);
        let one = StateFunction::constant(2, 1.0);
        assert_abs_diff_eq!(c.inner_product_pi(&one, &one).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn poisson_potentials() {
        let c = bench();
        let f = Observable::new(&c, vec![3.0, -1.0]).unwrap();
        let g = c.poisson_solve(&f).unwrap();
        assert_abs_diff_eq!(g[0], 7.5, epsilon = 1e-12);
        assert_abs_diff_eq!(g[1], -2.5, epsilon = 1e-12);

        let iid = FiniteMarkovChain::iid(&[0.25, 0.75]).unwrap();
        let h = Observable::new(&iid, vec![3.0, -1.0]).unwrap();
        let gh = iid.poisson_solve(&h).unwrap();
        assert!(gh.max_abs_diff(&h) < 1e-13);

        let zero = Observable::zero(&c);
        assert_eq!(c.poisson_solve(&zero).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn long_run_variances() {
        let iid = FiniteMarkovChain::iid(&[0.5, 0.5]).unwrap();
        let f = Observable::new(&iid, vec![1.0, -1.0]).unwrap();
        assert_abs_diff_eq!(iid.long_run_variance(&f).unwrap(), 1.0, epsilon = 1e-12);

        // ||f||^2 (1 + lambda) / (1 - lambda) = 3 * 1.6 / 0.4
        let c = bench();
        let f = Observable::new(&c, vec![3.0, -1.0]).unwrap();
        assert_abs_diff_eq!(c.long_run_variance(&f).unwrap(), 12.0, epsilon = 1e-10);
        assert_eq!(c.long_run_variance(&Observable::zero(&c)).unwrap(), 0.0);
    }

    #[test]
    fn periodic_chain_series_does_not_converge() {
        let cycle = FiniteMarkovChain::from_rows(&[
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
            vec![1.0, 0.0, 0.0],
        ])
        .unwrap();
        let f = Observable::new(&cycle, vec![1.0, -1.0, 0.0]).unwrap();
        assert!(!cycle.decay().is_contracting());
        assert!(matches!(
            cycle.long_run_variance(&f),
            Err(Error::SeriesNotConverged { .. })
        ));
        // The Poisson route still works on a periodic chain.
        let g = cycle.poisson_solve(&f).unwrap();
        let residual = g.sub(&cycle.apply_operator(&g, 1).unwrap()).sub(&f);
        assert!(residual.max_abs() < 1e-12);
    }

    #[test]
    fn uncentred_input_is_shifted() {
        let c = bench();
        assert!(matches!(
            Observable::new(&c, vec![4.0, 0.0]),
            Err(Error::NotCentered { .. })
        ));
        let (f, mean) = Observable::centered(&c, vec![4.0, 0.0]).unwrap();
        assert_abs_diff_eq!(mean, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(f[0], 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(f[1], -1.0, epsilon = 1e-15);
    }

    #[test]
    fn decay_of_two_state_chain() {
        let c = bench();
        let d = c.decay();
        assert!(d.is_contracting());
        assert_abs_diff_eq!(c.spectral_radius_bound(), 0.6, epsilon = 1e-9);
        for k in 0..30 {
            assert!(0.6f64.powi(k as i32) <= d.bound(k) + 1e-12);
        }
    }
}
