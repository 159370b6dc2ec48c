//! Four maximal inequalities for `E(max_{1<=i<=n} S_i^2)`: the right-hand
//! sides are exact, the left-hand side is estimated by simulation.

use std::fmt;

use crate::chain::{FiniteMarkovChain, Observable};
use crate::criteria::hannan_profile;
use crate::error::{Error, Result};
use crate::spectral::{checked_kv_integral, spectral_measure, structure_flags};
use crate::stats::Estimate;

use super::max_partial_sum_sq;

/// Standard errors added to the Monte Carlo side before comparing.
pub const SIGMA_CUSHION: f64 = 3.0;

const HANNAN_TAIL_TOL: f64 = 1e-12;
const HANNAN_MAX_TERMS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InequalityId {
    Rio,
    DyadicProjective,
    DedeckerMerlevede,
    Wu,
}

impl InequalityId {
    pub fn label(&self) -> &'static str {
        match self {
            InequalityId::Rio => "rio",
            InequalityId::DyadicProjective => "dyadic_projective",
            InequalityId::DedeckerMerlevede => "dedecker_merlevede",
            InequalityId::Wu => "wu",
        }
    }
}

impl fmt::Display for InequalityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InequalityReport {
    pub id: InequalityId,
    pub n: usize,
    pub lhs: f64,
    pub lhs_stderr: f64,
    pub rhs: f64,
    /// `rhs - (lhs + 3 stderr)`; negative values are violations.
    pub margin: f64,
}

impl InequalityReport {
    fn new(id: InequalityId, n: usize, lhs: Estimate, rhs: f64) -> Self {
        Self {
            id,
            n,
            lhs: lhs.value,
            lhs_stderr: lhs.stderr,
            rhs,
            margin: rhs - (lhs.value + SIGMA_CUSHION * lhs.stderr),
        }
    }

    pub fn holds(&self) -> bool {
        self.margin >= 0.0
    }
}

/// `8n E X_0^2 + 16 sum_{k=2}^n E|X_0 E_0(S_k - S_1)|`.
pub fn rio_rhs(chain: &FiniteMarkovChain, f: &Observable, n: usize) -> f64 {
    let pi = chain.pi();
    let mut term = f.as_vector().clone();
    let mut acc = nalgebra::DVector::zeros(f.len());
    let mut sum = 0.0;
    for _ in 2..=n {
        term = chain.kernel() * term;
        acc += &term;
        sum += (0..f.len()).map(|x| pi[x] * f[x].abs() * acc[x].abs()).sum::<f64>();
    }
    8.0 * n as f64 * chain.norm_sq(f.as_vector()) + 16.0 * sum
}

/// `n (2 ||X_0|| + 3 sum_{j<r} ||E_0(S_{2^j})|| / 2^{j/2})^2`, `2^{r-1} < n <= 2^r`.
pub fn dyadic_rhs(chain: &FiniteMarkovChain, f: &Observable, n: usize) -> Result<f64> {
    let r = n.next_power_of_two().trailing_zeros() as usize;
    let mut sum = 0.0;
    for j in 0..r {
        sum += chain.norm_pi(&chain.conditional_sum(f, 1 << j)?)? / 2f64.powf(j as f64 / 2.0);
    }
    let x0 = chain.norm_sq(f.as_vector()).sqrt();
    Ok(n as f64 * (2.0 * x0 + 3.0 * sum).powi(2))
}

/// `4n (sum_i ||E_{-i}(X_0) - E_{-i-1}(X_0)||)^2`.
pub fn dm_rhs(chain: &FiniteMarkovChain, f: &Observable, n: usize) -> Result<f64> {
    let norm = chain.norm_sq(f.as_vector()).sqrt();
    if norm == 0.0 {
        return Ok(0.0);
    }
    let terms = chain
        .decay()
        .terms_for(norm, HANNAN_TAIL_TOL * norm.max(1.0), HANNAN_MAX_TERMS)
        .ok_or(Error::NotRegular)?;
    let profile = hannan_profile(chain, f, terms)?;
    if !profile.regular {
        return Err(Error::NotRegular);
    }
    Ok(4.0 * n as f64 * profile.report.partial_sum().powi(2))
}

/// `(24n + 3) sum_{k>=0} E(X_0 X_k)`.
pub fn lw_rhs(chain: &FiniteMarkovChain, f: &Observable, n: usize) -> Result<f64> {
    if !structure_flags(chain).reversible {
        return Err(Error::NotReversible);
    }
    let measure = spectral_measure(chain, f)?;
    let kv = checked_kv_integral(chain, f, &measure)?;
    Ok((24.0 * n as f64 + 3.0) * kv)
}

fn check(chain: &FiniteMarkovChain, f: &Observable, n: usize) -> Result<()> {
    chain.check_len(f)?;
    if n == 0 {
        return Err(Error::InvalidArgument("n must be >= 1".into()));
    }
    Ok(())
}

pub fn verify_rio(chain: &FiniteMarkovChain, f: &Observable, n: usize, replicas: usize, seed: u64) -> Result<InequalityReport> {
    check(chain, f, n)?;
    let rhs = rio_rhs(chain, f, n);
    let lhs = max_partial_sum_sq(chain, f, n, replicas, seed)?;
    Ok(InequalityReport::new(InequalityId::Rio, n, lhs, rhs))
}

pub fn verify_dyadic(chain: &FiniteMarkovChain, f: &Observable, n: usize, replicas: usize, seed: u64) -> Result<InequalityReport> {
    check(chain, f, n)?;
    let rhs = dyadic_rhs(chain, f, n)?;
    let lhs = max_partial_sum_sq(chain, f, n, replicas, seed)?;
    Ok(InequalityReport::new(InequalityId::DyadicProjective, n, lhs, rhs))
}

pub fn verify_dm(chain: &FiniteMarkovChain, f: &Observable, n: usize, replicas: usize, seed: u64) -> Result<InequalityReport> {
    check(chain, f, n)?;
    let rhs = dm_rhs(chain, f, n)?;
    let lhs = max_partial_sum_sq(chain, f, n, replicas, seed)?;
    Ok(InequalityReport::new(InequalityId::DedeckerMerlevede, n, lhs, rhs))
}

pub fn verify_lw(chain: &FiniteMarkovChain, f: &Observable, n: usize, replicas: usize, seed: u64) -> Result<InequalityReport> {
    check(chain, f, n)?;
    let rhs = lw_rhs(chain, f, n)?;
    let lhs = max_partial_sum_sq(chain, f, n, replicas, seed)?;
    Ok(InequalityReport::new(InequalityId::Wu, n, lhs, rhs))
}

/// All applicable inequalities sharing one simulated left-hand side; the
/// result equals the individual verifiers called with the same seed.
/// The reversible-only inequality is skipped on non-reversible chains.
pub fn verify_all(
    chain: &FiniteMarkovChain,
    f: &Observable,
    n: usize,
    replicas: usize,
    seed: u64,
) -> Result<Vec<InequalityReport>> {
    check(chain, f, n)?;
    let lhs = max_partial_sum_sq(chain, f, n, replicas, seed)?;
    let mut out = vec![
        InequalityReport::new(InequalityId::Rio, n, lhs, rio_rhs(chain, f, n)),
        InequalityReport::new(InequalityId::DyadicProjective, n, lhs, dyadic_rhs(chain, f, n)?),
        InequalityReport::new(InequalityId::DedeckerMerlevede, n, lhs, dm_rhs(chain, f, n)?),
    ];
    if structure_flags(chain).reversible {
        out.push(InequalityReport::new(InequalityId::Wu, n, lhs, lw_rhs(chain, f, n)?));
    }
    Ok(out)
}
