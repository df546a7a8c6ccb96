//! Bundled runs, one directory of CSV/JSON files per target.

use anyhow::Result;
use clap::ValueEnum;
use pxp_core::analytic::{delta3_z2, error3_vacuum, fit_q};
use pxp_core::hilbert::enumerate_basis;
use pxp_core::krylov::lanczos;
use pxp_core::operators::{algebra_defect, ladder_split};
use pxp_core::optimize::golden_section;
use pxp_core::{ModelConfig, Scheme, StateTag, TermName};
use rayon::prelude::*;
use serde_json::json;

use crate::commands::{complexity_table, error_rows, fsa_data, fsa_table, linspace, KrylovChoice, System};
use crate::config::RunConfig;
use crate::output::{int, real, Bundle, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Target {
    Z2BetaCompare,
    Z2Complexity,
    Z3Summary,
    Z3Exact,
    VacuumComplexity,
    FsaErrorsZ2,
    FsaErrorsVacuum,
    Error3Scan,
    QScan,
}

impl Target {
    pub fn name(self) -> String {
        self.to_possible_value().expect("no skipped variants").get_name().to_string()
    }
}

const Z3_TUNED: [(TermName, f64); 3] =
    [(TermName::Z3Pert1, 0.18244), (TermName::Z3Pert2, -0.10390), (TermName::Z3Pert3, 0.05445)];
const LONG_RANGE: [f64; 6] = [0.31, 0.23, 0.2, 0.18, 0.19, 0.01];
const Z2_LAMBDA: f64 = 0.108;

/// The long-range set, restricted to the windows that fit on the ring.
fn long_range(sites: usize) -> ModelConfig {
    LONG_RANGE
        .iter()
        .enumerate()
        .map(|(k, &h)| (TermName::Sigma(3 + 2 * k as u8), h))
        .filter(|(name, _)| name.check_applicable(sites).is_ok())
        .fold(ModelConfig::new(sites, StateTag::Vacuum), |c, (name, h)| c.with_term(name, h))
}

/// Columns `n` plus one β column per labelled sequence, padded with empty cells.
fn beta_columns(columns: &[(&str, Vec<f64>)]) -> Table {
    let mut header = vec!["n".to_string()];
    header.extend(columns.iter().map(|c| format!("beta_{}", c.0)));
    let mut t = Table::with_header(header);
    let rows = columns.iter().map(|c| c.1.len()).max().unwrap_or(0);
    for i in 0..rows {
        let mut row = vec![int(i + 1)];
        row.extend(columns.iter().map(|c| c.1.get(i).map(|b| real(*b)).unwrap_or_default()));
        t.push(row);
    }
    t
}

/// FSA coefficients including the vanishing one that closes the recursion.
fn fsa_betas(model: &ModelConfig, scheme: Scheme) -> Result<Vec<f64>> {
    let f = fsa_data(model, scheme)?;
    let mut b = f.betas;
    b.push(f.residual);
    Ok(b)
}

fn lanczos_betas(model: &ModelConfig, steps: usize) -> Result<Vec<f64>> {
    let sys = System::new(model)?;
    let k = lanczos(&sys.h, &sys.psi0, steps)?;
    Ok((1..=k.steps_run).map(|n| k.beta(n).unwrap_or(k.residual)).collect())
}

pub fn run(target: Target, cfg: &RunConfig, lambda: Option<f64>, bundle: &mut Bundle) -> Result<()> {
    let times = cfg.time.unwrap_or_default().times();
    let lambda = lambda.or(cfg.terms.get(&TermName::Z2Pert).copied()).unwrap_or(Z2_LAMBDA);
    let z2 = |l: usize, lam: f64| ModelConfig::new(l, StateTag::Z2).with_term(TermName::Z2Pert, lam);
    match target {
        Target::Z2BetaCompare => {
            let l = cfg.sites.unwrap_or(18);
            let steps = 2 * (l + 1);
            let (bare, pert) = (z2(l, 0.0), z2(l, lambda));
            bundle.table(
                "lanczos.csv",
                &beta_columns(&[("bare", lanczos_betas(&bare, steps)?), ("lambda", lanczos_betas(&pert, steps)?)]),
            )?;
            bundle.table(
                "fsa.csv",
                &beta_columns(&[("bare", fsa_betas(&bare, Scheme::Z2)?), ("lambda", fsa_betas(&pert, Scheme::Z2)?)]),
            )?;
            bundle.json("parameters.json", &json!({ "L": l, "lambda": lambda }))?;
        }
        Target::Z2Complexity => {
            let l = cfg.sites.unwrap_or(18);
            for (name, lam) in [("bare", 0.0), ("lambda", lambda)] {
                let t = complexity_table(&z2(l, lam), Some(Scheme::Z2), KrylovChoice::Both, 4 * (l + 1), &times)?;
                bundle.table(&format!("complexity_{name}.csv"), &t)?;
            }
            bundle.json("parameters.json", &json!({ "L": l, "lambda": lambda }))?;
        }
        Target::Z3Summary => {
            let l = cfg.sites.unwrap_or(12);
            let bare = ModelConfig::new(l, StateTag::Z3);
            let tuned = Z3_TUNED.iter().fold(bare.clone(), |c, &(n, v)| c.with_term(n, v));
            let steps = 2 * l / 3 + 1;
            bundle.table(
                "betas.csv",
                &beta_columns(&[
                    ("lanczos_bare", lanczos_betas(&bare, steps)?),
                    ("fsa_bare", fsa_betas(&bare, Scheme::Z3)?),
                    ("lanczos_tuned", lanczos_betas(&tuned, steps)?),
                    ("fsa_tuned", fsa_betas(&tuned, Scheme::Z3)?),
                ]),
            )?;
            for (name, model) in [("bare", &bare), ("tuned", &tuned)] {
                let t = complexity_table(model, Some(Scheme::Z3), KrylovChoice::Both, 4 * (l + 1), &times)?;
                bundle.table(&format!("complexity_{name}.csv"), &t)?;
            }
        }
        Target::Z3Exact => {
            let l = cfg.sites.unwrap_or(12);
            let model = ModelConfig::z3exact(l);
            bundle.table("fsa.csv", &fsa_table(&fsa_data(&model, Scheme::Z3Exact)?))?;
            let t = complexity_table(&model, Some(Scheme::Z3Exact), KrylovChoice::Both, 4 * (l + 1), &times)?;
            bundle.table("complexity.csv", &t)?;
            let basis = enumerate_basis(l)?;
            let defect = algebra_defect(&ladder_split(&basis, &model, Scheme::Z3Exact)?)?;
            bundle.json("summary.json", &json!({ "L": l, "algebra_defect": defect }))?;
        }
        Target::VacuumComplexity => {
            let l = cfg.sites.unwrap_or(14);
            let tuned = if cfg.terms.is_empty() {
                long_range(l)
            } else {
                ModelConfig { sites: l, initial: StateTag::Vacuum, terms: cfg.terms.clone() }
            };
            let bare = ModelConfig::new(l, StateTag::Vacuum);
            for (name, model) in [("bare", &bare), ("tuned", &tuned)] {
                let t = complexity_table(model, Some(Scheme::Vacuum), KrylovChoice::Both, 4 * (l + 1), &times)?;
                bundle.table(&format!("complexity_{name}.csv"), &t)?;
            }
        }
        Target::FsaErrorsZ2 => {
            let sizes: Vec<usize> = (6..=cfg.sites.unwrap_or(18)).step_by(2).collect();
            bundle.table("errors.csv", &error_rows(&z2(6, 0.0), Scheme::Z2, &sizes, None)?)?;
            let mut t = Table::new(&["L", "epsilon3", "epsilon3_closed_form"]);
            let rows: Vec<(usize, f64)> = sizes
                .par_iter()
                .map(|&l| Ok((l, fsa_data(&z2(l, 0.0), Scheme::Z2)?.epsilon(3).unwrap_or(0.0))))
                .collect::<Result<_>>()?;
            for (l, e) in rows {
                t.push(vec![int(l), real(e), real(delta3_z2(l as u64)?)]);
            }
            bundle.table("epsilon3.csv", &t)?;
        }
        Target::FsaErrorsVacuum => {
            let l = cfg.sites.unwrap_or(14);
            let hs = linspace(0.0, 1.0, 101)?;
            let base = ModelConfig::new(l, StateTag::Vacuum);
            bundle.table("errors.csv", &error_rows(&base, Scheme::Vacuum, &[l], Some((TermName::Sigma(3), &hs)))?)?;
            let presets = [
                ("sigma3", base.clone().with_term(TermName::Sigma(3), 0.31)),
                ("sigma3_sigma5", base.clone().with_term(TermName::Sigma(3), 0.43).with_term(TermName::Sigma(5), 0.28)),
                ("long_range", long_range(l)),
            ];
            let mut t = Table::new(&["preset", "n", "epsilon", "ln_epsilon"]);
            for (name, model) in presets {
                let f = fsa_data(&model, Scheme::Vacuum)?;
                for (i, e) in f.errors_sq.iter().enumerate() {
                    t.push(vec![name.to_string(), int(i + 1), real(*e), real(e.ln())]);
                }
            }
            bundle.table("presets.csv", &t)?;
        }
        Target::Error3Scan => {
            let hs = linspace(0.0, 1.0, 201)?;
            let mut t = Table::new(&["L", "h", "epsilon3"]);
            let mut minima = Vec::new();
            for l in [10u64, 14, 18, 30, 100, 1000] {
                for &h in &hs {
                    t.push(vec![l.to_string(), real(h), real(error3_vacuum(h, l)?)]);
                }
                let (h, e, _) = golden_section(|h| -error3_vacuum(h, l).unwrap_or(f64::INFINITY), 0.0, 1.0, 1e-10);
                minima.push(json!({ "L": l, "h": h, "epsilon3": -e, "source": "closed_form" }));
            }
            bundle.table("closed_form.csv", &t)?;
            let mut t = Table::new(&["L", "h", "epsilon3"]);
            for l in [10usize, 14, 18] {
                let base = ModelConfig::new(l, StateTag::Vacuum);
                let rows = error_rows(&base, Scheme::Vacuum, &[l], Some((TermName::Sigma(3), &hs)))?;
                for r in rows.rows.iter().filter(|r| r[2] == "3") {
                    t.push(vec![r[0].clone(), r[1].clone(), r[4].clone()]);
                }
                let basis = enumerate_basis(l)?;
                let eps3 = |h: f64| -> f64 {
                    let model = base.clone().with_term(TermName::Sigma(3), h);
                    ladder_split(&basis, &model, Scheme::Vacuum)
                        .and_then(|lp| pxp_core::krylov::fsa(&lp, &lp.reference_state(), pxp_core::krylov::FSA_TOL))
                        .ok()
                        .and_then(|f| f.epsilon(3))
                        .unwrap_or(f64::INFINITY)
                };
                let (h, e, _) = golden_section(|h| -eps3(h), 0.0, 1.0, 1e-8);
                minima.push(json!({ "L": l, "h": h, "epsilon3": -e, "source": "numeric" }));
            }
            bundle.table("numeric.csv", &t)?;
            bundle.json("minima.json", &json!(minima))?;
        }
        Target::QScan => {
            let l = cfg.sites.unwrap_or(18);
            let lambdas = linspace(0.0, 0.2, 41)?;
            let fits: Vec<_> = lambdas
                .par_iter()
                .map(|&lam| {
                    let f = fsa_data(&z2(l, lam), Scheme::Z2)?;
                    Ok((lam, fit_q(&f.betas)?, f.delta_av))
                })
                .collect::<Result<_>>()?;
            let mut t = Table::new(&["lambda", "q", "alpha", "residual", "delta_av"]);
            for (lam, fit, dav) in fits {
                t.push(vec![real(lam), real(fit.q), real(fit.alpha), real(fit.residual), real(dav)]);
            }
            bundle.table("qscan.csv", &t)?;
        }
    }
    Ok(())
}
