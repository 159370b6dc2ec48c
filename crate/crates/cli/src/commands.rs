use std::fmt;
use std::str::FromStr;

use martapprox::chain::CROSS_CHECK_TOL;
use martapprox::criteria::{self, ALPHA_EXACT_CAP};
use martapprox::martingale::{diff_distance, extrapolated_limit_kernel, limit_diff_kernel};
use martapprox::montecarlo::{self, SIGMA_CUSHION};
use martapprox::spectral::{self, MOMENT_CHECK_ORDER, MOMENT_TOL, UNIT_POINT_TOL, WEIGHT_SUM_TOL};
use martapprox::{CriterionReport, Error, SpectralKind};

use crate::error::CliError;
use crate::report::{RunReport, Series};
use crate::spec_file::{inputs_digest, Model, RunOptions};

/// Truncation of the projective and variance series.
pub const CRITERIA_TERMS: usize = 256;
pub const RIO_LAGS: usize = 64;
pub const RHO_DYADIC_TERMS: usize = 30;
pub const DMR_TERMS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Inspect,
    Approx,
    Criteria,
    Spectral,
    Inequalities,
    Fclt,
    Report,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Command::Inspect,
        Command::Approx,
        Command::Criteria,
        Command::Spectral,
        Command::Inequalities,
        Command::Fclt,
        Command::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Inspect => "inspect",
            Command::Approx => "approx",
            Command::Criteria => "criteria",
            Command::Spectral => "spectral",
            Command::Inequalities => "inequalities",
            Command::Fclt => "fclt",
            Command::Report => "report",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        Command::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| CliError::UnknownCommand(s.to_string()))
    }
}

pub fn run(command: Command, model: &Model, options: &RunOptions) -> Result<RunReport, CliError> {
    let digest = inputs_digest(model, options);
    let mut report = RunReport::new(command.name(), digest);
    match command {
        Command::Inspect => inspect(model, &mut report)?,
        Command::Approx => approx(model, options, &mut report)?,
        Command::Criteria => criteria(model, &mut report)?,
        Command::Spectral => spectral(model, options, &mut report)?,
        Command::Inequalities => inequalities(model, options, &mut report)?,
        Command::Fclt => fclt(model, options, &mut report)?,
        Command::Report => {
            inspect(model, &mut report)?;
            approx(model, options, &mut report)?;
            criteria(model, &mut report)?;
            match spectral(model, options, &mut report) {
                Err(CliError::Module {
                    source: e @ Error::NotNormalOperator { .. },
                    ..
                }) => report.note(format!("spectral skipped: {e}")),
                other => other?,
            }
            inequalities(model, options, &mut report)?;
            match fclt(model, options, &mut report) {
                Err(CliError::Module {
                    source: e @ Error::DegenerateVariance { .. },
                    ..
                }) => report.note(format!("fclt skipped: {e}")),
                other => other?,
            }
        }
    }
    Ok(report)
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn largest(grid: &[usize]) -> usize {
    grid.iter().copied().max().expect("grids are non-empty")
}

fn inspect(model: &Model, report: &mut RunReport) -> Result<(), CliError> {
    let module = || CliError::module("inspect");
    let chain = &model.chain;
    let f = &model.observable;
    let residual = chain.stationarity_residual();
    let mut pi = Series::new("pi");
    for (i, p) in chain.pi().iter().enumerate() {
        pi.push(i, *p, residual);
    }
    report.add(pi);
    let mut obs = Series::new("observable");
    for (i, v) in f.as_slice().iter().enumerate() {
        obs.push(i, *v, 0.0);
    }
    report.add(obs);
    report.scalar("removed_mean", model.removed_mean, 0.0);
    let sigma2 = chain.long_run_variance(f).map_err(module())?;
    report.scalar("sigma2", sigma2, CROSS_CHECK_TOL * chain.norm_pi(f).map_err(module())?.powi(2).max(1.0));
    let flags = spectral::structure_flags(chain);
    report.scalar("reversible", flag(flags.reversible), spectral::BALANCE_TOL);
    report.scalar("normal", flag(flags.normal), spectral::NORMALITY_TOL);
    report.scalar("normality_defect", spectral::normality_defect(chain), 0.0);
    report.scalar("spectral_radius_bound", chain.spectral_radius_bound(), 0.0);
    if let Some(labels) = &model.labels {
        for (i, l) in labels.iter().enumerate() {
            report.note(format!("state {i} = {l}"));
        }
    }
    Ok(())
}

fn approx(model: &Model, options: &RunOptions, report: &mut RunReport) -> Result<(), CliError> {
    let module = || CliError::module("approx");
    let (chain, f) = (&model.chain, &model.observable);
    let n = largest(&options.n_grid);
    let trend =
        montecarlo::joint_trend(chain, f, &options.m_grid, n, options.replicas, options.seed).map_err(module())?;
    let limit = limit_diff_kernel(chain, f).map_err(module())?;

    let mut distance = Series::new("approx.diff_distance");
    let mut extrapolated = Series::new("approx.extrapolated_distance");
    let mut seminorm = Series::new("approx.seminorm");
    let mut residual_m = Series::new("approx.residual_m");
    for (i, &m) in trend.m_grid.iter().enumerate() {
        distance.push(m, trend.distance[i], 0.0);
        let richardson = extrapolated_limit_kernel(chain, f, m).map_err(module())?;
        let d = diff_distance(chain, &richardson, &limit).map_err(module())?;
        extrapolated.push(m, d, 0.0);
        seminorm.push(m, trend.seminorm[i].value, trend.seminorm[i].stderr);
        residual_m.push(m, trend.residual[i].value, trend.residual[i].stderr);
    }
    report.add(distance);
    report.add(extrapolated);
    report.add(seminorm);
    report.add(residual_m);

    let curve = montecarlo::residual_decay_curve(chain, f, &options.n_grid, options.replicas, options.seed)
        .map_err(module())?;
    let mut residual = Series::new("approx.residual");
    for (i, &k) in curve.n_grid.iter().enumerate() {
        residual.push(k, curve.values[i], curve.std_errors[i]);
    }
    report.add(residual);
    match trend.min_spearman() {
        Some(rho) => report.note(format!("approx: smallest pairwise Spearman correlation over the m-grid {rho}")),
        None => report.note("approx: Spearman correlations undefined (constant diagnostics)"),
    }
    Ok(())
}

fn add_criterion(report: &mut RunReport, c: &CriterionReport) {
    let mut terms = Series::new(format!("{}.term", c.name));
    for (i, t) in c.terms.iter().enumerate() {
        terms.push(c.first_index + i, *t, 0.0);
    }
    report.add(terms);
    report.scalar(format!("{}.sum", c.name), c.partial_sum(), c.tail_bound);
    report.verdict(c.name.clone(), c.verdict.label(), true);
    if let Some(note) = &c.note {
        report.note(format!("{}: {note}", c.name));
    }
}

fn criteria(model: &Model, report: &mut RunReport) -> Result<(), CliError> {
    let module = || CliError::module("criteria");
    let (chain, f) = (&model.chain, &model.observable);
    add_criterion(report, &criteria::maxwell_woodroofe(chain, f, CRITERIA_TERMS).map_err(module())?);
    add_criterion(report, &criteria::projective_series(chain, f, CRITERIA_TERMS).map_err(module())?);
    let hannan = criteria::hannan_profile(chain, f, CRITERIA_TERMS).map_err(module())?;
    add_criterion(report, &hannan.report);
    report.scalar("hannan.regular", flag(hannan.regular), 0.0);
    let (gap, cor2) = criteria::gap_and_cor2(chain, f, CRITERIA_TERMS).map_err(module())?;
    add_criterion(report, &gap);
    add_criterion(report, &cor2);

    let rio = criteria::rio_gamma_profile(chain, f, RIO_LAGS, CRITERIA_TERMS).map_err(module())?;
    let mut gamma = Series::new("rio_gamma.gamma");
    for (j, g) in rio.gamma.iter().enumerate() {
        gamma.push(j, *g, rio.gamma_tail);
    }
    report.add(gamma);
    let mut cesaro = Series::new("rio_gamma.cesaro");
    for (i, c) in rio.cesaro.iter().enumerate() {
        cesaro.push(i + 1, *c, rio.gamma_tail);
    }
    report.add(cesaro);
    report.scalar("rio_gamma.beyond", rio.gamma_beyond, 0.0);
    report.verdict("rio_gamma", rio.verdict.label(), true);

    add_criterion(report, &criteria::rho_dyadic_series(chain, RHO_DYADIC_TERMS).map_err(module())?);
    if chain.n_states() <= ALPHA_EXACT_CAP {
        let dmr = criteria::dmr_series(chain, f, DMR_TERMS).map_err(module())?;
        let mut alphas = Series::new("alpha");
        for (i, a) in dmr.alphas.iter().enumerate() {
            alphas.push(i + 1, *a, 0.0);
        }
        report.add(alphas);
        add_criterion(report, &dmr.literal);
        add_criterion(report, &dmr.integral);
    } else {
        report.note(format!(
            "dmr skipped: exact alpha enumeration supports at most {ALPHA_EXACT_CAP} states"
        ));
    }
    Ok(())
}

fn spectral(model: &Model, options: &RunOptions, report: &mut RunReport) -> Result<(), CliError> {
    let module = || CliError::module("spectral");
    let (chain, f) = (&model.chain, &model.observable);
    let measure = spectral::spectral_measure(chain, f).map_err(module())?;
    let (mut re, mut im, mut w) = (
        Series::new("spectral.point_re"),
        Series::new("spectral.point_im"),
        Series::new("spectral.weight"),
    );
    for (i, (z, weight)) in measure.atoms().enumerate() {
        re.push(i, z.re, UNIT_POINT_TOL);
        im.push(i, z.im, UNIT_POINT_TOL);
        w.push(i, weight, WEIGHT_SUM_TOL);
    }
    report.add(re);
    report.add(im);
    report.add(w);
    report.scalar("spectral.total_mass", measure.total_mass(), WEIGHT_SUM_TOL);

    let mut identity = Series::new("spectral.conditional_norm_sq");
    for k in 1..=MOMENT_CHECK_ORDER {
        let v = spectral::conditional_norm_identity(chain, f, &measure, k).map_err(module())?;
        identity.push(k, v, MOMENT_TOL * v.max(1.0));
    }
    report.add(identity);

    if measure.kind == SpectralKind::Reversible {
        let kv = spectral::checked_kv_integral(chain, f, &measure).map_err(module())?;
        report.scalar("spectral.kv_integral", kv, MOMENT_TOL * kv.abs().max(1.0));
        let mut bound = Series::new("spectral.reversible_bound");
        for &m in &options.m_grid {
            bound.push(m, spectral::reversible_seminorm_bound(&measure, m).map_err(module())?, 0.0);
        }
        report.add(bound);
    } else {
        report.note("spectral: chain is normal but not reversible; maximal-seminorm bound not applicable");
    }
    let (mut integral, mut plus) = (Series::new("spectral.normcond_integral"), Series::new("spectral.plus_bound"));
    for &m in &options.m_grid {
        let b = spectral::normal_integral_and_bound(&measure, m).map_err(module())?;
        integral.push(m, b.normcond_integral, 0.0);
        plus.push(m, b.plus_bound, 0.0);
    }
    report.add(integral);
    report.add(plus);
    Ok(())
}

fn inequalities(model: &Model, options: &RunOptions, report: &mut RunReport) -> Result<(), CliError> {
    let (chain, f) = (&model.chain, &model.observable);
    let mut rows: Vec<(String, Series, Series, Series, f64)> = Vec::new();
    for &n in &options.n_grid {
        let batch = montecarlo::verify_all(chain, f, n, options.replicas, options.seed)
            .map_err(CliError::module("inequalities"))?;
        for r in batch {
            let label = r.id.label().to_string();
            let idx = match rows.iter().position(|row| row.0 == label) {
                Some(i) => i,
                None => {
                    rows.push((
                        label.clone(),
                        Series::new(format!("{label}.lhs")),
                        Series::new(format!("{label}.rhs")),
                        Series::new(format!("{label}.margin")),
                        f64::INFINITY,
                    ));
                    rows.len() - 1
                }
            };
            let row = &mut rows[idx];
            row.1.push(n, r.lhs, r.lhs_stderr);
            row.2.push(n, r.rhs, 0.0);
            row.3.push(n, r.margin, SIGMA_CUSHION * r.lhs_stderr);
            row.4 = row.4.min(r.margin);
        }
    }
    for (label, lhs, rhs, margin, worst) in rows {
        report.add(lhs);
        report.add(rhs);
        report.add(margin);
        let passed = worst >= 0.0;
        let verdict = format!("{} (smallest margin {worst})", if passed { "holds" } else { "violated" });
        report.verdict(format!("inequality.{label}"), verdict, passed);
    }
    if !spectral::structure_flags(chain).reversible {
        report.note("inequalities: wu skipped, chain is not reversible");
    }
    Ok(())
}

fn fclt(model: &Model, options: &RunOptions, report: &mut RunReport) -> Result<(), CliError> {
    let n = largest(&options.n_grid);
    let r = montecarlo::fclt_statistics(&model.chain, &model.observable, n, options.replicas, options.seed)
        .map_err(CliError::module("fclt"))?;
    report.scalar("fclt.sigma2", r.sigma2, CROSS_CHECK_TOL);
    let mut terminal = Series::new("fclt.terminal_ks");
    terminal.push(r.n, r.terminal_ks, r.threshold);
    report.add(terminal);
    let mut max = Series::new("fclt.max_ks");
    max.push(r.n, r.max_ks, r.threshold);
    report.add(max);
    let (mut count, mut g_terminal, mut g_max) = (
        Series::new("fclt.group_count"),
        Series::new("fclt.group_terminal_ks"),
        Series::new("fclt.group_max_ks"),
    );
    for g in &r.groups {
        count.push(g.state, g.count as f64, 0.0);
        g_terminal.push(g.state, g.terminal_ks, g.threshold);
        g_max.push(g.state, g.max_ks, g.threshold);
    }
    report.add(count);
    report.add(g_terminal);
    report.add(g_max);
    let passed = r.passed();
    report.verdict("fclt", if passed { "ks within threshold" } else { "ks threshold exceeded" }, passed);
    Ok(())
}
