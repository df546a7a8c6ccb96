//! Single-run subcommands.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use pxp_core::dynamics::{
    cross_correlation, eigendecompose, nnn_correlator, return_probability, spread_complexity, up_density, Evolver,
    TimeEvolution, TimeSeries,
};
use pxp_core::hilbert::{count_sector, enumerate_basis};
use pxp_core::krylov::{fsa, lanczos, FSA_TOL};
use pxp_core::operators::{assemble, ladder_split};
use pxp_core::optimize::{optimize_vector, scan_1d, NelderMeadOptions, Objective, ObjectiveKind, OptimResult};
use pxp_core::{ConstrainedBasis, FsaData, KrylovData, ModelConfig, Scheme, SparseHamiltonian, StateVector, TermName};
use rayon::prelude::*;
use serde_json::json;

use crate::config::{ConfigError, Resolved, RunConfig};
use crate::output::{int, real, write_json, write_table, Table};

pub struct System {
    pub basis: ConstrainedBasis,
    pub h: SparseHamiltonian,
    pub psi0: StateVector,
}

impl System {
    pub fn new(model: &ModelConfig) -> Result<Self> {
        let basis = enumerate_basis(model.sites)?;
        let h = assemble(&basis, model)?;
        let psi0 = basis.special_state(model.initial)?;
        Ok(Self { basis, h, psi0 })
    }
}

pub fn fsa_data(model: &ModelConfig, scheme: Scheme) -> Result<FsaData> {
    let basis = enumerate_basis(model.sites)?;
    let ladder = ladder_split(&basis, model, scheme)?;
    Ok(fsa(&ladder, &ladder.reference_state(), FSA_TOL)?)
}

pub fn basis(res: &Resolved, out: Option<&Path>) -> Result<()> {
    let b = enumerate_basis(res.model.sites)?;
    let sectors: Vec<usize> = (0..=b.sites() / 2).map(|k| count_sector(&b, k)).collect();
    write_json(&json!({ "L": b.sites(), "dim": b.dim(), "sectors": sectors }), out)
}

pub fn spectrum(res: &Resolved, out: Option<&Path>) -> Result<()> {
    let sys = System::new(&res.model)?;
    let eig = eigendecompose(&sys.h)?;
    let mut t = Table::new(&["index", "energy"]);
    for (i, e) in eig.eigenvalues.iter().enumerate() {
        t.push(vec![int(i), real(*e)]);
    }
    write_table(&t, out)
}

/// Rows `n, α_n, β_n`; the last β is the residual that stopped the recursion.
pub fn lanczos_table(k: &KrylovData) -> Table {
    let mut t = Table::new(&["n", "alpha", "beta"]);
    for n in 1..=k.steps_run {
        t.push(vec![int(n), real(k.alphas[n - 1]), real(k.beta(n).unwrap_or(k.residual))]);
    }
    t
}

pub fn lanczos_cmd(res: &Resolved, steps: Option<usize>, out: Option<&Path>) -> Result<()> {
    let sys = System::new(&res.model)?;
    let steps = steps.unwrap_or(2 * (res.model.sites + 1));
    let k = lanczos(&sys.h, &sys.psi0, steps)?;
    write_table(&lanczos_table(&k), out)
}

/// Rows `n = 1 … closed_after`; `β` at the last row is the vanishing coefficient,
/// where the errors are undefined and left empty.
pub fn fsa_table(f: &FsaData) -> Table {
    let mut t = Table::new(&["n", "beta", "delta", "epsilon", "delta_av"]);
    for n in 1..=f.closed_after {
        let beta = f.beta(n).unwrap_or(f.residual);
        let (d, e) = match (f.delta(n), f.epsilon(n)) {
            (Some(d), Some(e)) => (real(d), real(e)),
            _ => (String::new(), String::new()),
        };
        t.push(vec![int(n), real(beta), d, e, real(f.delta_av)]);
    }
    t
}

pub fn fsa_cmd(res: &Resolved, out: Option<&Path>) -> Result<()> {
    let f = fsa_data(&res.model, res.scheme()?)?;
    write_table(&fsa_table(&f), out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Observable {
    ReturnProbability,
    Energy,
    UpDensity,
    NnnCorrelator,
}

impl Observable {
    fn name(self) -> &'static str {
        match self {
            Observable::ReturnProbability => "return_probability",
            Observable::Energy => "energy",
            Observable::UpDensity => "up_density",
            Observable::NnnCorrelator => "nnn_correlator",
        }
    }
}

const ALL_OBSERVABLES: [Observable; 4] =
    [Observable::ReturnProbability, Observable::Energy, Observable::UpDensity, Observable::NnnCorrelator];

/// Time series of several observables from one propagation.
pub fn observables(sys: &System, which: &[Observable], times: &[f64]) -> Result<Vec<TimeSeries>> {
    let evo = Evolver::auto(&sys.h)?;
    let (density, nnn) = (up_density(&sys.basis), nnn_correlator(&sys.basis));
    let mut cols = vec![Vec::with_capacity(times.len()); which.len()];
    evo.for_each_state(&sys.psi0, times, &mut |_, psi| {
        for (col, obs) in cols.iter_mut().zip(which) {
            col.push(match obs {
                Observable::ReturnProbability => sys.psi0.dot(psi).norm_sqr(),
                Observable::Energy => sys.h.expectation(psi)?,
                Observable::UpDensity => density.expectation(psi)?,
                Observable::NnnCorrelator => nnn.expectation(psi)?,
            });
        }
        Ok(())
    })?;
    cols.into_iter().map(|c| Ok(TimeSeries::new(times.to_vec(), c)?)).collect()
}

pub fn evolve(res: &Resolved, out: Option<&Path>) -> Result<()> {
    let sys = System::new(&res.model)?;
    let times = res.grid.times();
    let series = observables(&sys, &ALL_OBSERVABLES, &times)?;
    let mut header = vec!["t".to_string()];
    header.extend(ALL_OBSERVABLES.iter().map(|o| o.name().to_string()));
    let mut t = Table::with_header(header);
    for (i, time) in times.iter().enumerate() {
        let mut row = vec![real(*time)];
        row.extend(series.iter().map(|s| real(s.values[i])));
        t.push(row);
    }
    write_table(&t, out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KrylovChoice {
    Lanczos,
    Fsa,
    Both,
}

/// `t`, `R(t)` and the complexity/leakage pairs of the requested Krylov bases.
pub fn complexity_table(
    model: &ModelConfig,
    scheme: Option<Scheme>,
    which: KrylovChoice,
    lanczos_steps: usize,
    times: &[f64],
) -> Result<Table> {
    let sys = System::new(model)?;
    let evo = Evolver::auto(&sys.h)?;
    let mut header = vec!["t".to_string(), "return_probability".to_string()];
    let mut cols = vec![return_probability(&evo, &sys.psi0, times)?.values];
    if which != KrylovChoice::Fsa {
        let k = lanczos(&sys.h, &sys.psi0, lanczos_steps)?;
        let c = spread_complexity(&evo, &sys.psi0, &k.vectors, times)?;
        header.extend(["c_lanczos".into(), "leakage_lanczos".into()]);
        cols.extend([c.complexity.values, c.leakage.values]);
    }
    if which != KrylovChoice::Lanczos {
        let scheme = scheme.ok_or_else(|| ConfigError::Invalid("FSA complexity needs --scheme".into()))?;
        let ladder = ladder_split(&sys.basis, model, scheme)?;
        let f = fsa(&ladder, &ladder.reference_state(), FSA_TOL)?;
        let c = spread_complexity(&evo, &sys.psi0, &f.vectors, times)?;
        header.extend(["c_fsa".into(), "leakage_fsa".into()]);
        cols.extend([c.complexity.values, c.leakage.values]);
    }
    let mut t = Table::with_header(header);
    for (i, time) in times.iter().enumerate() {
        let mut row = vec![real(*time)];
        row.extend(cols.iter().map(|c| real(c[i])));
        t.push(row);
    }
    Ok(t)
}

pub fn default_lanczos_steps(model: &ModelConfig) -> usize {
    4 * (model.sites + 1)
}

pub fn complexity(res: &Resolved, which: KrylovChoice, steps: Option<usize>, out: Option<&Path>) -> Result<()> {
    let steps = steps.unwrap_or_else(|| default_lanczos_steps(&res.model));
    let t = complexity_table(&res.model, res.scheme, which, steps, &res.grid.times())?;
    write_table(&t, out)
}

/// Evenly spaced points on `[from, to]`.
pub fn linspace(from: f64, to: f64, points: usize) -> Result<Vec<f64>> {
    if points == 0 || !(from.is_finite() && to.is_finite()) {
        bail!(ConfigError::Invalid(format!("bad grid [{from}, {to}] with {points} points")));
    }
    if points == 1 {
        return Ok(vec![from]);
    }
    Ok((0..points).map(|i| from + (to - from) * i as f64 / (points - 1) as f64).collect())
}

/// Long-form error profiles `L, h, n, delta, epsilon` over sizes and strengths.
pub fn error_rows(base: &ModelConfig, scheme: Scheme, sizes: &[usize], vary: Option<(TermName, &[f64])>) -> Result<Table> {
    let strengths: Vec<Option<f64>> = match vary {
        Some((_, hs)) => hs.iter().map(|&h| Some(h)).collect(),
        None => vec![None],
    };
    let jobs: Vec<(usize, Option<f64>)> =
        sizes.iter().flat_map(|&l| strengths.iter().map(move |&h| (l, h))).collect();
    let results: Vec<(usize, Option<f64>, FsaData)> = jobs
        .par_iter()
        .map(|&(l, h)| {
            let mut model = ModelConfig { sites: l, ..base.clone() };
            if let (Some((name, _)), Some(h)) = (vary, h) {
                model.terms.insert(name, h);
            }
            model.validate()?;
            Ok((l, h, fsa_data(&model, scheme)?))
        })
        .collect::<Result<_>>()?;
    let mut t = Table::new(&["L", "h", "n", "delta", "epsilon"]);
    for (l, h, f) in results {
        let h = h.map(real).unwrap_or_default();
        for (i, (d, e)) in f.errors_norm.iter().zip(&f.errors_sq).enumerate() {
            t.push(vec![int(l), h.clone(), int(i + 1), real(*d), real(*e)]);
        }
    }
    Ok(t)
}

pub struct ErrorsArgs<'a> {
    pub vary: Option<TermName>,
    pub from: f64,
    pub to: f64,
    pub points: usize,
    pub sizes: &'a [usize],
}

pub fn errors(res: &Resolved, args: ErrorsArgs<'_>, out: Option<&Path>) -> Result<()> {
    let sizes = if args.sizes.is_empty() { vec![res.model.sites] } else { args.sizes.to_vec() };
    let hs = linspace(args.from, args.to, args.points)?;
    let vary = args.vary.map(|name| (name, hs.as_slice()));
    write_table(&error_rows(&res.model, res.scheme()?, &sizes, vary)?, out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CoefficientSource {
    Fsa,
    Lanczos,
}

pub fn qfit(res: &Resolved, source: CoefficientSource, steps: Option<usize>, out: Option<&Path>) -> Result<()> {
    let betas = match source {
        CoefficientSource::Fsa => fsa_data(&res.model, res.scheme()?)?.betas,
        CoefficientSource::Lanczos => {
            let sys = System::new(&res.model)?;
            let steps = steps.unwrap_or(res.model.sites + 1);
            lanczos(&sys.h, &sys.psi0, steps)?.betas
        }
    };
    let fit = pxp_core::analytic::fit_q(&betas)?;
    write_json(
        &json!({
            "q": fit.q,
            "alpha": fit.alpha,
            "j": fit.j,
            "residual": fit.residual,
            "source": format!("{source:?}").to_lowercase(),
            "coefficients": betas.len(),
        }),
        out,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ObjectiveArg {
    RevivalHeight,
    NegDeltaAv,
    NegError3Analytic,
    NegErrorNumeric,
}

pub struct OptimizeArgs {
    pub objective: ObjectiveArg,
    pub n: Option<usize>,
    pub free: Vec<TermName>,
    pub x0: Vec<f64>,
    pub radius: f64,
    pub scan: Option<(f64, f64, usize)>,
    pub max_evaluations: usize,
    pub trace: Option<PathBuf>,
}

pub fn optimize(cfg: &RunConfig, args: OptimizeArgs, out: Option<&Path>) -> Result<()> {
    let kind = match (args.objective, args.n) {
        (ObjectiveArg::RevivalHeight, _) => ObjectiveKind::RevivalHeight,
        (ObjectiveArg::NegDeltaAv, _) => ObjectiveKind::NegDeltaAv,
        (ObjectiveArg::NegError3Analytic, _) => ObjectiveKind::NegError3Analytic,
        (ObjectiveArg::NegErrorNumeric, Some(n)) => ObjectiveKind::NegErrorNumeric(n),
        (ObjectiveArg::NegErrorNumeric, None) => bail!(ConfigError::Invalid("neg-error-numeric needs --n".into())),
    };
    // the closed-form objective accepts sizes far beyond the enumerable range
    let (template, scheme, grid, seed) = if kind == ObjectiveKind::NegError3Analytic {
        let sites = cfg.sites.ok_or_else(|| ConfigError::Invalid("system size missing: pass --L".into()))?;
        let template = ModelConfig { sites, initial: pxp_core::StateTag::Vacuum, terms: cfg.terms.clone() };
        (template, Scheme::Vacuum, cfg.time.unwrap_or_default(), cfg.seed.unwrap_or(0))
    } else {
        let res = cfg.resolve(None)?;
        let scheme = match kind {
            ObjectiveKind::RevivalHeight => res.scheme.unwrap_or(Scheme::Z2),
            _ => res.scheme()?,
        };
        (res.model, scheme, res.grid, res.seed)
    };
    if args.free.is_empty() {
        bail!(ConfigError::Invalid("name the free strengths with --free".into()));
    }
    let objective = Objective::new(kind, template.clone(), args.free.clone(), scheme, grid)?;
    let result: OptimResult = match args.scan {
        Some((lo, hi, steps)) => {
            if args.free.len() != 1 {
                bail!(ConfigError::Invalid("--scan needs exactly one free strength".into()));
            }
            scan_1d(|x| objective.evaluate(&[x]), lo, hi, steps)?
        }
        None => {
            let x0 = if args.x0.is_empty() {
                args.free.iter().map(|&n| template.strength(n)).collect()
            } else {
                args.x0.clone()
            };
            let opts = NelderMeadOptions { max_evaluations: args.max_evaluations, seed, ..Default::default() };
            optimize_vector(|x| objective.evaluate(x), &x0, args.radius, opts)?
        }
    };
    let free: Vec<String> = args.free.iter().map(|n| n.to_string()).collect();
    write_json(
        &json!({
            "objective": format!("{:?}", args.objective),
            "free": free,
            "best": result.best,
            "value": result.value,
            "evaluations": result.evaluations,
            "budget_exhausted": result.budget_exhausted,
        }),
        out,
    )?;
    let trace_path = args.trace.or_else(|| out.map(|p| p.with_extension("trace.csv")));
    if let Some(path) = trace_path {
        let mut header = vec!["evaluation".to_string()];
        header.extend(free.iter().cloned());
        header.push("value".into());
        let mut t = Table::with_header(header);
        for (i, (x, v)) in result.trace.iter().enumerate() {
            let mut row = vec![int(i)];
            row.extend(x.iter().map(|v| real(*v)));
            row.push(real(*v));
            t.push(row);
        }
        write_table(&t, Some(&path)).with_context(|| format!("writing trace {}", path.display()))?;
    }
    Ok(())
}

pub fn xcorr(res: &Resolved, a: Observable, b: Observable, max_lag: Option<usize>, out: Option<&Path>) -> Result<()> {
    let sys = System::new(&res.model)?;
    let times = res.grid.times();
    let series = observables(&sys, &[a, b], &times)?;
    let max_lag = max_lag.unwrap_or(times.len() / 4).min(times.len().saturating_sub(1));
    let s = cross_correlation(&series[0], &series[1], max_lag)?;
    let mut t = Table::new(&["lag", "tau", "raw", "normalized"]);
    for ((lag, raw), norm) in s.lags.iter().zip(&s.raw).zip(&s.normalized) {
        t.push(vec![lag.to_string(), real(*lag as f64 * res.grid.dt), real(*raw), real(*norm)]);
    }
    write_table(&t, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linspace_endpoints() {
        let g = linspace(0.0, 1.0, 5).unwrap();
        assert_eq!(g, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(linspace(0.3, 0.9, 1).unwrap(), vec![0.3]);
        assert!(linspace(0.0, 1.0, 0).is_err());
    }

    #[test]
    fn fsa_table_ends_with_vanishing_beta() {
        let f = fsa_data(&ModelConfig::new(10, pxp_core::StateTag::Z2), Scheme::Z2).unwrap();
        let t = fsa_table(&f);
        assert_eq!(t.rows.len(), 11);
        assert!(t.rows.last().unwrap()[1].parse::<f64>().unwrap() < 1e-8);
        assert!(t.rows.last().unwrap()[3].is_empty());
    }

    #[test]
    fn error_rows_are_in_grid_order() {
        let base = ModelConfig::new(8, pxp_core::StateTag::Vacuum);
        let t = error_rows(&base, Scheme::Vacuum, &[8, 10], Some((TermName::Sigma(3), &[0.0, 0.5]))).unwrap();
        let keys: Vec<(String, String)> = t.rows.iter().map(|r| (r[0].clone(), r[1].clone())).collect();
        let mut sorted = keys.clone();
        sorted.sort_by_key(|k| k.0.parse::<usize>().unwrap());
        assert_eq!(keys, sorted);
        assert_eq!(t.rows[0][1], real(0.0));
    }
}
