//! Sufficient conditions for the maximal martingale approximation, evaluated
//! exactly on a finite chain.
//!
//! Every infinite series is reported as a partial sum up to a truncation `K`
//! together with a certified bound on the omitted tail. Tail bounds come from
//! the chain's [`GeometricDecay`](crate::chain::GeometricDecay) on centred
//! functions.
//!
//! Mixing coefficients use the pair of sigma-fields `(sigma(xi_0), sigma(xi_n))`,
//! which for a Markov chain is the natural computable stand-in for the
//! past/future pair.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::chain::{matrix_power, FiniteMarkovChain, Observable, StateFunction};
use crate::error::{Error, Result};

/// Exact subset enumeration is limited to this many states (2^20 subsets).
pub const ALPHA_EXACT_CAP: usize = 20;

const UNIT_SINGULAR_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    /// All omitted terms vanish; the partial sum is the exact value.
    Satisfied,
    /// Finite partial sum plus a finite certified tail.
    SatisfiedWithTailBound,
    /// No finite tail bound could be certified.
    Inconclusive,
}

impl Verdict {
    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Satisfied => "satisfied",
            Verdict::SatisfiedWithTailBound => "satisfied-with-tail-bound",
            Verdict::Inconclusive => "inconclusive",
        }
    }

    fn from_tail(tail: f64) -> Self {
        if tail == 0.0 {
            Verdict::Satisfied
        } else if tail.is_finite() {
            Verdict::SatisfiedWithTailBound
        } else {
            Verdict::Inconclusive
        }
    }
}

/// A truncated series with a certified tail.
#[derive(Debug, Clone, PartialEq)]
pub struct CriterionReport {
    pub name: String,
    /// Index of `terms[0]`.
    pub first_index: usize,
    pub terms: Vec<f64>,
    /// `partial_sums[i] = terms[0] + ... + terms[i]`.
    pub partial_sums: Vec<f64>,
    pub tail_bound: f64,
    pub verdict: Verdict,
    pub note: Option<String>,
}

impl CriterionReport {
    fn from_terms(name: &str, first_index: usize, terms: Vec<f64>, tail_bound: f64) -> Self {
        let partial_sums = terms
            .iter()
            .scan(0.0, |acc, t| {
                *acc += t;
                Some(*acc)
            })
            .collect();
        Self {
            name: name.to_string(),
            first_index,
            terms,
            partial_sums,
            tail_bound,
            verdict: Verdict::from_tail(tail_bound),
            note: None,
        }
    }

    fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    pub fn partial_sum(&self) -> f64 {
        self.partial_sums.last().copied().unwrap_or(0.0)
    }

    /// Partial sum plus tail bound.
    pub fn upper_bound(&self) -> f64 {
        self.partial_sum() + self.tail_bound
    }
}

fn require_positive(name: &str, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidArgument(format!("{name} must be >= 1")));
    }
    Ok(())
}

fn is_zero(f: &StateFunction) -> bool {
    f.max_abs() == 0.0
}

/// `||E_0(S_k)||_2` for `k = 1..=count`.
fn conditional_sum_norms(chain: &FiniteMarkovChain, f: &Observable, count: usize) -> Vec<f64> {
    let mut term = f.as_vector().clone();
    let mut acc = term.clone();
    let mut out = Vec::with_capacity(count);
    for k in 1..=count {
        if k > 1 {
            term = chain.kernel() * term;
            acc += &term;
        }
        out.push(chain.norm_sq(&acc).max(0.0).sqrt());
    }
    out
}

/// `||Q^n f||_pi` for `n = 0..=count`.
fn orbit_norms(chain: &FiniteMarkovChain, f: &Observable, count: usize) -> Vec<f64> {
    let mut v = f.as_vector().clone();
    let mut out = Vec::with_capacity(count + 1);
    out.push(chain.norm_sq(&v).max(0.0).sqrt());
    for _ in 0..count {
        v = chain.kernel() * v;
        out.push(chain.norm_sq(&v).max(0.0).sqrt());
    }
    out
}

/// Maxwell-Woodroofe series `sum_k ||E_0(S_k)||_2 / k^{3/2}`.
pub fn maxwell_woodroofe(chain: &FiniteMarkovChain, f: &Observable, k_max: usize) -> Result<CriterionReport> {
    require_positive("K", k_max)?;
    let norms = conditional_sum_norms(chain, f, k_max);
    let terms: Vec<f64> = norms
        .iter()
        .enumerate()
        .map(|(i, s)| s / ((i + 1) as f64).powf(1.5))
        .collect();
    let tail = if is_zero(f) {
        0.0
    } else {
        // ||E_0 S_k|| <= ||f|| sum_j bound(j); sum_{k>K} k^{-3/2} <= 2 / sqrt(K).
        let f_norm = chain.norm_sq(f.as_vector()).sqrt();
        f_norm * chain.decay().total_mass() * 2.0 / (k_max as f64).sqrt()
    };
    Ok(CriterionReport::from_terms("maxwell_woodroofe", 1, terms, tail))
}

/// `sum_n n^{-1/2} ||E_0(X_n)||_2`.
pub fn projective_series(chain: &FiniteMarkovChain, f: &Observable, k_max: usize) -> Result<CriterionReport> {
    require_positive("K", k_max)?;
    let norms = orbit_norms(chain, f, k_max);
    let terms: Vec<f64> = (1..=k_max).map(|n| norms[n] / (n as f64).sqrt()).collect();
    let tail = if is_zero(f) || terms.iter().all(|t| *t == 0.0) && chain.decay().rate == 0.0 {
        0.0
    } else {
        norms[0] * chain.decay().tail_after(k_max) / ((k_max + 1) as f64).sqrt()
    };
    Ok(CriterionReport::from_terms("projective_series", 1, terms, tail))
}

/// `Gamma_j = sum_{k >= j} ||X_j E_0(X_k)||_1` and its Cesaro averages.
#[derive(Debug, Clone, PartialEq)]
pub struct RioProfile {
    /// `Gamma_0, ..., Gamma_{j_max}` truncated at `k <= K`.
    pub gamma: Vec<f64>,
    /// Bound on the omitted `k > K` part of every `Gamma_j`.
    pub gamma_tail: f64,
    /// `(1/m) sum_{j<m} Gamma_j` for `m = 1..=j_max+1`.
    pub cesaro: Vec<f64>,
    /// Upper bound on `Gamma_j` for all `j > j_max`, certifying the Cesaro decay.
    pub gamma_beyond: f64,
    pub verdict: Verdict,
}

pub fn rio_gamma_profile(
    chain: &FiniteMarkovChain,
    f: &Observable,
    j_max: usize,
    k_max: usize,
) -> Result<RioProfile> {
    require_positive("j_max", j_max)?;
    require_positive("K", k_max)?;
    if k_max < j_max {
        return Err(Error::InvalidArgument("K must be >= j_max".into()));
    }
    let kernel = chain.kernel();
    let pi = chain.pi();
    let n = chain.n_states();
    // |Q^k f| for k = 0..=K.
    let mut abs_orbit: Vec<DVector<f64>> = Vec::with_capacity(k_max + 1);
    let mut v = f.as_vector().clone();
    abs_orbit.push(v.abs());
    for _ in 0..k_max {
        v = kernel * v;
        abs_orbit.push(v.abs());
    }
    // Q^j |f| for j = 0..=j_max.
    let mut lifted = f.as_vector().abs();
    let mut gamma = Vec::with_capacity(j_max + 1);
    for j in 0..=j_max {
        if j > 0 {
            lifted = kernel * lifted;
        }
        let g: f64 = (j..=k_max)
            .map(|k| (0..n).map(|x| pi[x] * abs_orbit[k][x] * lifted[x]).sum::<f64>())
            .sum();
        gamma.push(g);
    }
    let cesaro = gamma
        .iter()
        .scan(0.0, |acc, g| {
            *acc += g;
            Some(*acc)
        })
        .enumerate()
        .map(|(i, s)| s / (i + 1) as f64)
        .collect();

    let decay = chain.decay();
    let f_norm_sq = chain.norm_sq(f.as_vector());
    let (gamma_tail, gamma_beyond) = if is_zero(f) {
        (0.0, 0.0)
    } else {
        // ||X_j E_0 X_k||_1 <= ||f|| ||Q^k f||.
        (
            f_norm_sq * decay.tail_after(k_max),
            f_norm_sq * decay.tail_after(j_max),
        )
    };
    Ok(RioProfile {
        gamma,
        gamma_tail,
        cesaro,
        gamma_beyond,
        verdict: Verdict::from_tail(gamma_beyond),
    })
}

/// Martingale-difference projections `||E_{-i}(X_0) - E_{-i-1}(X_0)||_2`.
#[derive(Debug, Clone, PartialEq)]
pub struct HannanProfile {
    /// Terms indexed from `i = 0`.
    pub report: CriterionReport,
    /// `E(X_0 | F_-inf) = 0` certified by `Q^n f -> 0`.
    pub regular: bool,
}

pub fn hannan_profile(chain: &FiniteMarkovChain, f: &Observable, k_max: usize) -> Result<HannanProfile> {
    require_positive("K", k_max)?;
    let norms = orbit_norms(chain, f, k_max + 1);
    let scale = norms[0].powi(2).max(1e-300);
    let mut terms = Vec::with_capacity(k_max + 1);
    for i in 0..=k_max {
        let diff = norms[i].powi(2) - norms[i + 1].powi(2);
        if diff < -1e-10 * scale {
            return Err(Error::IdentityMismatch {
                what: "contraction ||Q^{i+1} f|| <= ||Q^i f||".into(),
                lhs: norms[i + 1],
                rhs: norms[i],
            });
        }
        terms.push(diff.max(0.0).sqrt());
    }
    let decay = chain.decay();
    let zero = is_zero(f);
    let tail = if zero { 0.0 } else { norms[0] * decay.tail_after(k_max) };
    Ok(HannanProfile {
        report: CriterionReport::from_terms("hannan", 0, terms, tail),
        regular: zero || decay.is_contracting(),
    })
}

/// Maximal correlation between `sigma(xi_0)` and `sigma(xi_n)`: the second
/// singular value of `pi^{1/2} Q^n pi^{-1/2}`.
pub fn rho_coefficient(chain: &FiniteMarkovChain, n: usize) -> Result<f64> {
    require_positive("n", n)?;
    let c = chain.centered_conjugated_operator();
    rho_from_centered_power(chain, &matrix_power(&c, n))
}

/// `S^n = u u^T + C^n` with `C = S - u u^T`; powering `C` keeps the rank-one
/// part exact, so the unit singular value check does not drift with `n`.
fn rho_from_centered_power(chain: &FiniteMarkovChain, c_n: &DMatrix<f64>) -> Result<f64> {
    let u = chain.sqrt_pi();
    let s_n = c_n + u * u.transpose();
    let top = s_n.singular_values().max();
    if (top - 1.0).abs() > UNIT_SINGULAR_TOL {
        return Err(Error::IdentityMismatch {
            what: "largest singular value of the conjugated kernel power".into(),
            lhs: top,
            rhs: 1.0,
        });
    }
    Ok(c_n.singular_values().max().clamp(0.0, 1.0))
}

/// `sum_{k=1}^K rho(2^k)`; the value does not depend on the observable.
pub fn rho_dyadic_series(chain: &FiniteMarkovChain, k_max: usize) -> Result<CriterionReport> {
    require_positive("K", k_max)?;
    if k_max > 40 {
        return Err(Error::InvalidArgument("K <= 40 for the dyadic rho series".into()));
    }
    let mut c = chain.centered_conjugated_operator();
    c = &c * &c;
    let mut terms = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        if k > 1 {
            c = &c * &c;
        }
        terms.push(rho_from_centered_power(chain, &c)?);
    }
    let decay = chain.decay();
    let tail = if !decay.is_contracting() {
        f64::INFINITY
    } else if decay.rate == 0.0 {
        0.0
    } else {
        // sum_{k>K} rate^{2^k} <= r / (1 - r) with r = rate^{2^{K+1}}.
        let r = decay.rate.powf(2f64.powi(k_max as i32 + 1));
        decay.factor * r / (1.0 - r)
    };
    Ok(CriterionReport::from_terms("rho_dyadic", 1, terms, tail)
        .with_note("rho(n) = rho(sigma(xi_0), sigma(xi_n))"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlphaMode {
    /// Exact enumeration; fails above [`ALPHA_EXACT_CAP`] states.
    Exact,
    /// Exact when possible, otherwise a total-variation upper bound.
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaValue {
    pub value: f64,
    /// `false` when `value` is only an upper bound.
    pub exact: bool,
}

/// Strong mixing coefficient `alpha(sigma(xi_0), sigma(xi_n))`.
///
/// For fixed `A` the optimal `B` collects the cells where
/// `c_A(y) = sum_{x in A} pi(x)(Q^n(x,y) - pi(y))` is positive, so
/// `alpha = max_A sum_y max(c_A(y), 0)`; subsets `A` are enumerated in Gray
/// code order.
pub fn alpha_coefficient(chain: &FiniteMarkovChain, n: usize, mode: AlphaMode) -> Result<AlphaValue> {
    require_positive("n", n)?;
    let states = chain.n_states();
    let deviation = deviation_matrix(chain, n);
    if states > ALPHA_EXACT_CAP {
        return match mode {
            AlphaMode::Exact => Err(Error::StateSpaceTooLarge {
                n_states: states,
                cap: ALPHA_EXACT_CAP,
            }),
            AlphaMode::Auto => {
                let tv: f64 = deviation.iter().map(|c| c.max(0.0)).sum();
                Ok(AlphaValue {
                    value: tv.min(0.25),
                    exact: false,
                })
            }
        };
    }
    Ok(AlphaValue {
        value: enumerate_alpha(&deviation),
        exact: true,
    })
}

/// `C(x, y) = pi(x) (Q^n(x, y) - pi(y))`.
fn deviation_matrix(chain: &FiniteMarkovChain, n: usize) -> DMatrix<f64> {
    let qn = chain.kernel_power(n);
    let pi = chain.pi();
    DMatrix::from_fn(qn.nrows(), qn.ncols(), |x, y| pi[x] * (qn[(x, y)] - pi[y]))
}

fn enumerate_alpha(c: &DMatrix<f64>) -> f64 {
    let n = c.nrows();
    let split = n.min(6);
    let low_bits = n - split;
    let rows: Vec<Vec<f64>> = (0..n).map(|x| c.row(x).iter().copied().collect()).collect();
    (0..1usize << split)
        .into_par_iter()
        .map(|high| {
            let mut acc = vec![0.0; n];
            for b in 0..split {
                if high >> b & 1 == 1 {
                    for (a, v) in acc.iter_mut().zip(&rows[low_bits + b]) {
                        *a += v;
                    }
                }
            }
            let positive = |acc: &[f64]| acc.iter().map(|v| v.max(0.0)).sum::<f64>();
            let mut best = positive(&acc);
            let mut gray = 0usize;
            for i in 1..1usize << low_bits {
                let next = i ^ (i >> 1);
                let bit = (gray ^ next).trailing_zeros() as usize;
                let sign = if next >> bit & 1 == 1 { 1.0 } else { -1.0 };
                for (a, v) in acc.iter_mut().zip(&rows[bit]) {
                    *a += sign * v;
                }
                gray = next;
                best = best.max(positive(&acc));
            }
            best
        })
        .reduce(|| 0.0, f64::max)
        .clamp(0.0, 0.25)
}

/// Right-continuous, non-increasing step function `u -> Q_{|X_0|}(u)`, the
/// cadlag inverse of `t -> P(|X_0| > t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileFunction {
    /// Distinct positive values `a_1 > a_2 > ... > a_k` of `|f|`.
    pub levels: Vec<f64>,
    /// `c_j = P(|X_0| >= a_j)`, increasing; `Q(u) = a_j` on `[c_{j-1}, c_j)`.
    pub breakpoints: Vec<f64>,
}

impl QuantileFunction {
    pub fn eval(&self, u: f64) -> f64 {
        self.breakpoints
            .iter()
            .position(|&c| u < c)
            .map_or(0.0, |j| self.levels[j])
    }

    /// `P(|X_0| > 0)`; the function vanishes from here on.
    pub fn support_mass(&self) -> f64 {
        self.breakpoints.last().copied().unwrap_or(0.0)
    }

    /// `int_0^a Q(u)^2 du`.
    pub fn integral_sq(&self, a: f64) -> f64 {
        let mut acc = 0.0;
        let mut lo = 0.0;
        for (&level, &hi) in self.levels.iter().zip(&self.breakpoints) {
            if a <= lo {
                break;
            }
            acc += level * level * (a.min(hi) - lo);
            lo = hi;
        }
        acc
    }
}

pub fn quantile_function(chain: &FiniteMarkovChain, f: &StateFunction) -> Result<QuantileFunction> {
    if f.len() != chain.n_states() {
        return Err(Error::DimensionMismatch {
            expected: chain.n_states(),
            found: f.len(),
        });
    }
    let mut atoms: Vec<(f64, f64)> = f
        .as_slice()
        .iter()
        .zip(chain.pi().iter())
        .map(|(v, p)| (v.abs(), *p))
        .filter(|(a, _)| *a > 0.0)
        .collect();
    atoms.sort_by(|a, b| b.0.total_cmp(&a.0));
    let tol = 1e-12 * f.max_abs().max(1.0);
    let mut levels: Vec<f64> = Vec::new();
    let mut breakpoints: Vec<f64> = Vec::new();
    let mut mass = 0.0;
    for (a, p) in atoms {
        mass += p;
        match levels.last() {
            Some(&last) if (last - a).abs() <= tol => {
                *breakpoints.last_mut().expect("paired") = mass;
            }
            _ => {
                levels.push(a);
                breakpoints.push(mass);
            }
        }
    }
    Ok(QuantileFunction { levels, breakpoints })
}

/// The mixing-quantile series, as written and in integral form.
#[derive(Debug, Clone, PartialEq)]
pub struct DmrReport {
    /// `sum_k E[X_0^2 I(|X_0| >= Q(2 alpha_k))]`.
    pub literal: CriterionReport,
    /// `sum_k int_0^{2 alpha_k} Q(u)^2 du`, the quantity the indicator form
    /// majorises.
    pub integral: CriterionReport,
    pub alphas: Vec<f64>,
    pub quantile: QuantileFunction,
}

pub fn dmr_series(chain: &FiniteMarkovChain, f: &Observable, k_max: usize) -> Result<DmrReport> {
    require_positive("K", k_max)?;
    let quantile = quantile_function(chain, f)?;
    let alphas = (1..=k_max)
        .map(|k| alpha_coefficient(chain, k, AlphaMode::Exact).map(|a| a.value))
        .collect::<Result<Vec<f64>>>()?;
    let pi = chain.pi();
    let literal_term = |alpha: f64| {
        let threshold = quantile.eval(2.0 * alpha);
        f.as_slice()
            .iter()
            .zip(pi.iter())
            .filter(|(v, _)| v.abs() >= threshold)
            .map(|(v, p)| p * v * v)
            .sum::<f64>()
    };
    let literal_terms: Vec<f64> = alphas.iter().map(|&a| literal_term(a)).collect();
    let integral_terms: Vec<f64> = alphas.iter().map(|&a| quantile.integral_sq(2.0 * a)).collect();

    let decay = chain.decay();
    let top = quantile.levels.first().copied().unwrap_or(0.0);
    let (literal, integral) = if is_zero(f) {
        (
            CriterionReport::from_terms("dmr_literal", 1, literal_terms, 0.0),
            CriterionReport::from_terms("dmr_integral", 1, integral_terms, 0.0),
        )
    } else {
        // alpha_k <= rho(k) / 4 <= bound(k) / 4.
        let integral_tail = top * top * decay.tail_after(k_max) / 2.0;
        let atom_term = literal_term(0.0);
        let literal = CriterionReport::from_terms("dmr_literal", 1, literal_terms, f64::INFINITY)
            .with_note(format!(
                "alpha_k -> 0 drives Q(2 alpha_k) to max|X_0|, so the summand tends to \
                 E[X_0^2 I(|X_0| = max|X_0|)] = {atom_term} > 0 and the series diverges \
                 for every non-zero observable on a finite state space"
            ));
        (
            literal,
            CriterionReport::from_terms("dmr_integral", 1, integral_terms, integral_tail),
        )
    };
    Ok(DmrReport {
        literal,
        integral,
        alphas,
        quantile,
    })
}

/// `sum_k ||E_0(S_k)||^2 / k^2` and `sum_k ||E_0(X_k)||^2`.
pub fn gap_and_cor2(
    chain: &FiniteMarkovChain,
    f: &Observable,
    k_max: usize,
) -> Result<(CriterionReport, CriterionReport)> {
    require_positive("K", k_max)?;
    let sums = conditional_sum_norms(chain, f, k_max);
    let gap_terms: Vec<f64> = sums
        .iter()
        .enumerate()
        .map(|(i, s)| s * s / ((i + 1) as f64).powi(2))
        .collect();
    let norms = orbit_norms(chain, f, k_max);
    let cor2_terms: Vec<f64> = (1..=k_max).map(|k| norms[k] * norms[k]).collect();
    let decay = chain.decay();
    let (gap_tail, cor2_tail) = if is_zero(f) {
        (0.0, 0.0)
    } else {
        let f_sq = norms[0] * norms[0];
        let bound = norms[0] * decay.total_mass();
        let cor2_tail = if !decay.is_contracting() {
            f64::INFINITY
        } else if decay.rate == 0.0 {
            0.0
        } else {
            let r2 = decay.rate * decay.rate;
            f_sq * decay.factor.powi(2) * r2.powf(k_max as f64 + 1.0) / (1.0 - r2)
        };
        (bound * bound / k_max as f64, cor2_tail)
    };
    Ok((
        CriterionReport::from_terms("gap", 1, gap_terms, gap_tail),
        CriterionReport::from_terms("cor2", 1, cor2_terms, cor2_tail),
    ))
}
