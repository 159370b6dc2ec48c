//! Spectral measures of reversible and normal chains.
//!
//! Writing `f~ = pi^{1/2} f`, the measure `rho_f` places weight
//! `|<f~, u_i>|^2` at each eigenvalue `z_i` of the conjugated operator
//! `S = pi^{1/2} Q pi^{-1/2}`, so that `<f, Q^k f>_pi = sum_i w_i z_i^k`.

use log::warn;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::chain::{FiniteMarkovChain, Observable, CROSS_CHECK_TOL};
use crate::error::{Error, Result};

pub const BALANCE_TOL: f64 = 1e-10;
pub const NORMALITY_TOL: f64 = 1e-10;
/// Eigenvalues further than this outside the unit disk are rejected.
pub const DISK_OVERSHOOT_TOL: f64 = 1e-12;
/// Points closer than this to `1` count as the invariant eigenvalue.
pub const UNIT_POINT_TOL: f64 = 1e-10;
/// Weight above this at the invariant eigenvalue is an error.
pub const UNIT_WEIGHT_TOL: f64 = 1e-10;
pub const MOMENT_TOL: f64 = 1e-9;
pub const MOMENT_CHECK_ORDER: usize = 10;
pub const WEIGHT_SUM_TOL: f64 = 1e-10;

const MERGE_TOL: f64 = 1e-10;
const REVERSIBLE_CONSTANT: f64 = 27.0;
const NORMAL_CONSTANT: f64 = 4.0;
const MAX_SERIES_TERMS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StructureFlags {
    pub reversible: bool,
    pub normal: bool,
}

/// Detailed balance and normality of `Q` on L2(pi).
pub fn structure_flags(chain: &FiniteMarkovChain) -> StructureFlags {
    let q = chain.kernel();
    let pi = chain.pi();
    let n = chain.n_states();
    let mut balance_defect = 0.0_f64;
    for x in 0..n {
        for y in (x + 1)..n {
            balance_defect = balance_defect.max((pi[x] * q[(x, y)] - pi[y] * q[(y, x)]).abs());
        }
    }
    let reversible = balance_defect <= BALANCE_TOL;
    let defect = normality_defect(chain);
    let normal = defect <= NORMALITY_TOL;
    if reversible && !normal {
        warn!("detailed balance holds but the normality defect is {defect:e}; treating the chain as normal");
    }
    StructureFlags {
        reversible,
        normal: normal || reversible,
    }
}

/// `||S S^T - S^T S||_F`.
pub fn normality_defect(chain: &FiniteMarkovChain) -> f64 {
    let s = chain.conjugated_operator();
    (&s * s.transpose() - s.transpose() * &s).norm()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectralKind {
    Reversible,
    Normal,
}

/// Finite atomic measure `sum_i w_i delta_{z_i}` on the closed unit disk.
///
/// The invariant eigenvalue `z = 1` carries no weight for a centred
/// observable and is left out.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralMeasure {
    pub kind: SpectralKind,
    pub points: Vec<Complex64>,
    pub weights: Vec<f64>,
}

impl SpectralMeasure {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `sum_i w_i z_i^k`.
    pub fn moment(&self, k: usize) -> Complex64 {
        self.atoms().map(|(z, w)| z.powu(k as u32) * w).sum()
    }

    pub fn atoms(&self) -> impl Iterator<Item = (Complex64, f64)> + '_ {
        self.points.iter().copied().zip(self.weights.iter().copied())
    }

    fn check_no_weight_at_one(&self) -> Result<()> {
        for (z, w) in self.atoms() {
            if (z - 1.0).norm() < UNIT_POINT_TOL && w > UNIT_WEIGHT_TOL {
                return Err(Error::WeightAtOne { weight: w });
            }
        }
        Ok(())
    }

    /// Atoms away from `z = 1` (null atoms at one are dropped).
    fn regular_atoms(&self) -> Result<impl Iterator<Item = (Complex64, f64)> + '_> {
        self.check_no_weight_at_one()?;
        Ok(self.atoms().filter(|(z, _)| (z - 1.0).norm() >= UNIT_POINT_TOL))
    }
}

/// Spectral measure of `f` for a normal (in particular reversible) chain.
pub fn spectral_measure(chain: &FiniteMarkovChain, f: &Observable) -> Result<SpectralMeasure> {
    chain.check_len(f)?;
    let flags = structure_flags(chain);
    if !flags.normal {
        return Err(Error::NotNormalOperator {
            defect: normality_defect(chain),
        });
    }
    let f_tilde: DVector<f64> = f.as_vector().component_mul(chain.sqrt_pi());
    let s = chain.conjugated_operator();
    let (kind, raw) = if flags.reversible {
        (SpectralKind::Reversible, reversible_atoms(&s, &f_tilde))
    } else {
        (SpectralKind::Normal, normal_atoms(&s, &f_tilde)?)
    };

    let mut points: Vec<Complex64> = Vec::with_capacity(raw.len());
    let mut weights: Vec<f64> = Vec::with_capacity(raw.len());
    for (mut z, w) in raw {
        let modulus = z.norm();
        if modulus > 1.0 + DISK_OVERSHOOT_TOL {
            return Err(Error::EigenvalueOutsideDisk { modulus });
        }
        if modulus > 1.0 {
            z /= modulus;
        }
        if (z - 1.0).norm() < UNIT_POINT_TOL {
            if w > UNIT_WEIGHT_TOL {
                return Err(Error::WeightAtOne { weight: w });
            }
            continue;
        }
        match points.iter().position(|p| (p - z).norm() <= MERGE_TOL) {
            Some(i) => weights[i] += w,
            None => {
                points.push(z);
                weights.push(w);
            }
        }
    }
    let measure = SpectralMeasure {
        kind,
        points,
        weights,
    };

    let norm_sq = chain.norm_sq(f.as_vector());
    let mass = measure.total_mass();
    if (mass - norm_sq).abs() > WEIGHT_SUM_TOL * norm_sq.max(1.0) {
        return Err(Error::IdentityMismatch {
            what: "spectral weights vs ||f||^2".into(),
            lhs: mass,
            rhs: norm_sq,
        });
    }
    let mut v = f.as_vector().clone();
    for k in 0..=MOMENT_CHECK_ORDER {
        if k > 0 {
            v = chain.kernel() * v;
        }
        let direct = chain.weighted_dot(f.as_vector(), &v);
        let spectral = measure.moment(k);
        let err = (spectral - direct).norm();
        if err > MOMENT_TOL * norm_sq.max(1.0) {
            return Err(Error::IdentityMismatch {
                what: format!("spectral moment of order {k}"),
                lhs: spectral.re,
                rhs: direct,
            });
        }
    }
    Ok(measure)
}

fn reversible_atoms(s: &DMatrix<f64>, f_tilde: &DVector<f64>) -> Vec<(Complex64, f64)> {
    let sym = (s + s.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    (0..eig.eigenvalues.len())
        .map(|i| {
            let w = eig.eigenvectors.column(i).dot(f_tilde).powi(2);
            (Complex64::new(eig.eigenvalues[i], 0.0), w)
        })
        .collect()
}

/// Unitary diagonalisation of a real normal matrix through the Hermitian
/// pencil `H + t i K`, `H` and `K` the symmetric and antisymmetric parts.
fn normal_atoms(s: &DMatrix<f64>, f_tilde: &DVector<f64>) -> Result<Vec<(Complex64, f64)>> {
    let n = s.nrows();
    let h = (s + s.transpose()) * 0.5;
    let k = (s - s.transpose()) * 0.5;
    let s_c = s.map(|v| Complex64::new(v, 0.0));
    let f_c = f_tilde.map(|v| Complex64::new(v, 0.0));
    let scale = s.norm().max(1.0);
    let mut last_residual = f64::INFINITY;
    for t in [std::f64::consts::SQRT_2, std::f64::consts::E, 0.618_033_988_749_895, 3.3166247903554] {
        let pencil = DMatrix::from_fn(n, n, |x, y| Complex64::new(h[(x, y)], t * k[(x, y)]));
        let eig = pencil.symmetric_eigen();
        let u = eig.eigenvectors;
        let mut atoms = Vec::with_capacity(n);
        let mut residual = 0.0_f64;
        for i in 0..n {
            let col = u.column(i).into_owned();
            let su = &s_c * &col;
            let z = col.dotc(&su);
            residual = residual.max((su - col.scale(1.0) * z).norm());
            let w = col.dotc(&f_c).norm_sqr();
            atoms.push((z, w));
        }
        if residual <= 1e-9 * scale {
            return Ok(atoms);
        }
        last_residual = residual;
    }
    Err(Error::NotNormalOperator {
        defect: last_residual,
    })
}

/// `sum_{n >= 0} <f, Q^n f>_pi`, summed directly until the certified tail
/// is below `1e-12 ||f||^2`.
pub fn covariance_series(chain: &FiniteMarkovChain, f: &Observable) -> Result<f64> {
    chain.check_len(f)?;
    let norm_sq = chain.norm_sq(f.as_vector());
    if norm_sq == 0.0 {
        return Ok(0.0);
    }
    let terms = chain
        .decay()
        .terms_for(norm_sq, 1e-12 * norm_sq.max(1.0), MAX_SERIES_TERMS)
        .ok_or(Error::SeriesNotConverged {
            terms: MAX_SERIES_TERMS,
        })?;
    let mut sum = norm_sq;
    let mut v = f.as_vector().clone();
    for _ in 0..terms {
        v = chain.kernel() * v;
        sum += chain.weighted_dot(f.as_vector(), &v);
    }
    Ok(sum)
}

/// `int (1 - t)^{-1} rho_f(dt)`.
pub fn kv_integral(measure: &SpectralMeasure) -> Result<f64> {
    if measure.kind != SpectralKind::Reversible {
        return Err(Error::NotReversible);
    }
    Ok(measure.regular_atoms()?.map(|(z, w)| w / (1.0 - z.re)).sum())
}

/// `1 + z + ... + z^{m-1}`.
fn geometric_sum(z: Complex64, m: usize) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    let mut power = Complex64::new(1.0, 0.0);
    for _ in 0..m {
        acc += power;
        power *= z;
    }
    acc
}

/// `27 sum_i w_i (1 + l_i + ... + l_i^{m-1})^2 / (m^2 (1 - l_i))`, a bound on
/// `||Y_0^m||^2_{M+}` for reversible chains.
pub fn reversible_seminorm_bound(measure: &SpectralMeasure, m: usize) -> Result<f64> {
    if measure.kind != SpectralKind::Reversible {
        return Err(Error::NotReversible);
    }
    if m == 0 {
        return Err(Error::InvalidArgument("m must be >= 1".into()));
    }
    let m2 = (m * m) as f64;
    Ok(REVERSIBLE_CONSTANT
        * measure
            .regular_atoms()?
            .map(|(z, w)| w * geometric_sum(z, m).re.powi(2) / (m2 * (1.0 - z.re)))
            .sum::<f64>())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalBounds {
    /// `int |1 - z|^{-1} rho_f(dz)`.
    pub normcond_integral: f64,
    /// `4 sum_i w_i |1 + z_i + ... + z_i^{m-1}|^2 / (m^2 |1 - z_i|)`.
    pub plus_bound: f64,
}

pub fn normal_integral_and_bound(measure: &SpectralMeasure, m: usize) -> Result<NormalBounds> {
    if m == 0 {
        return Err(Error::InvalidArgument("m must be >= 1".into()));
    }
    let m2 = (m * m) as f64;
    let mut integral = 0.0;
    let mut bound = 0.0;
    for (z, w) in measure.regular_atoms()? {
        let gap = (Complex64::new(1.0, 0.0) - z).norm();
        integral += w / gap;
        bound += w * geometric_sum(z, m).norm_sqr() / (m2 * gap);
    }
    Ok(NormalBounds {
        normcond_integral: integral,
        plus_bound: NORMAL_CONSTANT * bound,
    })
}

/// Spectral side of `||E_0(S_k)||^2 = sum_i w_i |1 + z_i + ... + z_i^{k-1}|^2`,
/// checked against the direct conditional sum.
pub fn conditional_norm_identity(
    chain: &FiniteMarkovChain,
    f: &Observable,
    measure: &SpectralMeasure,
    k: usize,
) -> Result<f64> {
    if !structure_flags(chain).normal {
        return Err(Error::NotNormalOperator {
            defect: normality_defect(chain),
        });
    }
    let spectral: f64 = measure.atoms().map(|(z, w)| w * geometric_sum(z, k).norm_sqr()).sum();
    let direct = chain.norm_pi(&chain.conditional_sum(f, k)?)?.powi(2);
    if (spectral - direct).abs() > MOMENT_TOL * direct.max(1.0) {
        return Err(Error::IdentityMismatch {
            what: format!("||E_0 S_{k}||^2 spectral vs direct"),
            lhs: spectral,
            rhs: direct,
        });
    }
    Ok(spectral)
}

/// `kv_integral` cross-checked against the covariance series.
pub fn checked_kv_integral(chain: &FiniteMarkovChain, f: &Observable, measure: &SpectralMeasure) -> Result<f64> {
    let kv = kv_integral(measure)?;
    let series = covariance_series(chain, f)?;
    if (kv - series).abs() > CROSS_CHECK_TOL * series.abs().max(1.0) {
        return Err(Error::IdentityMismatch {
            what: "kv integral vs covariance series".into(),
            lhs: kv,
            rhs: series,
        });
    }
    Ok(kv)
}
