//! Tuning perturbation strengths: 1-D scans with golden-section refinement,
//! Nelder–Mead for small vectors, and the objectives they maximize.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::error3_vacuum;
use crate::dynamics::{return_probability, Evolver, TimeGrid, TimeSeries};
use crate::error::{Error, Result};
use crate::hilbert::{enumerate_basis, ConstrainedBasis};
use crate::krylov::{fsa, FSA_TOL};
use crate::operators::{build_pxp, build_term, ladder_split, ModelConfig, Scheme, SparseHamiltonian, TermName};

const GOLDEN: f64 = 0.618_033_988_749_894_8;

/// Maximizes `f` on `[lo, hi]`; returns `(x, f(x), evaluations)`.
pub fn golden_section<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, xtol: f64) -> (f64, f64, usize) {
    let (mut a, mut b) = (lo, hi);
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    let mut evals = 2;
    while (b - a).abs() > xtol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = f(d);
        }
        evals += 1;
    }
    if fc >= fd {
        (c, fc, evals)
    } else {
        (d, fd, evals)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimResult {
    pub best: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub trace: Vec<(Vec<f64>, f64)>,
    /// True when the evaluation budget ran out before convergence.
    pub budget_exhausted: bool,
}

impl OptimResult {
    fn from_trace(trace: Vec<(Vec<f64>, f64)>, budget_exhausted: bool) -> Self {
        let (best, value) = trace
            .iter()
            .filter(|(_, v)| v.is_finite())
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .cloned()
            .unwrap_or((Vec::new(), f64::NEG_INFINITY));
        Self { best, value, evaluations: trace.len(), trace, budget_exhausted }
    }
}

/// Parameter tolerance of the golden-section refinement in [`scan_1d`].
pub const SCAN_XTOL: f64 = 1e-4;

/// Uniform grid of `steps` points on `[lo, hi]`, evaluated in parallel, then
/// golden-section refinement around the best grid point.
pub fn scan_1d<F>(objective: F, lo: f64, hi: f64, steps: usize) -> Result<OptimResult>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    if !(lo < hi) || steps < 3 {
        return Err(Error::Input(format!("scan needs lo < hi and steps ≥ 3, got [{lo}, {hi}] with {steps}")));
    }
    let h = (hi - lo) / (steps - 1) as f64;
    let grid: Vec<f64> = (0..steps).map(|i| lo + h * i as f64).collect();
    let values: Vec<f64> = grid.par_iter().map(|&x| objective(x)).collect::<Result<_>>()?;
    let mut trace: Vec<(Vec<f64>, f64)> = grid.iter().zip(&values).map(|(&x, &v)| (vec![x], v)).collect();
    let ibest = values.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i).unwrap();
    let (a, b) = ((grid[ibest] - h).max(lo), (grid[ibest] + h).min(hi));
    let mut failure = None;
    golden_section(
        |x| match objective(x) {
            Ok(v) => {
                trace.push((vec![x], v));
                v
            }
            Err(e) => {
                failure.get_or_insert(e);
                f64::NEG_INFINITY
            }
        },
        a,
        b,
        SCAN_XTOL,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(OptimResult::from_trace(trace, false))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NelderMeadOptions {
    pub max_evaluations: usize,
    pub restarts: usize,
    pub seed: u64,
    /// Converged when the simplex diameter falls below this.
    pub xtol: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self { max_evaluations: 400, restarts: 2, seed: 0, xtol: 1e-4 }
    }
}

pub const MAX_VECTOR_DIM: usize = 6;

/// Maximizes `objective` with restarted Nelder–Mead from `x0`; the initial
/// simplex has edge `radius` along seeded random signs of the unit axes.
pub fn optimize_vector<F>(objective: F, x0: &[f64], radius: f64, opts: NelderMeadOptions) -> Result<OptimResult>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let n = x0.len();
    if n == 0 || n > MAX_VECTOR_DIM {
        return Err(Error::Input(format!("vector dimension must be in 1..={MAX_VECTOR_DIM}, got {n}")));
    }
    if !(radius > 0.0) {
        return Err(Error::Input("simplex radius must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut trace: Vec<(Vec<f64>, f64)> = Vec::new();
    let eval = |x: &[f64], trace: &mut Vec<(Vec<f64>, f64)>| -> Result<f64> {
        let v = objective(x)?;
        trace.push((x.to_vec(), v));
        // minimize the negated objective; NaN counts as worst
        Ok(if v.is_nan() { f64::INFINITY } else { -v })
    };
    let mut start = x0.to_vec();
    let mut exhausted = false;
    for _restart in 0..=opts.restarts {
        let mut simplex = vec![start.clone()];
        for i in 0..n {
            let mut p = start.clone();
            p[i] += if rng.random_bool(0.5) { radius } else { -radius };
            simplex.push(p);
        }
        let mut fs = Vec::with_capacity(n + 1);
        for p in &simplex {
            fs.push(eval(p, &mut trace)?);
        }
        loop {
            let mut order: Vec<usize> = (0..=n).collect();
            order.sort_by(|&a, &b| fs[a].total_cmp(&fs[b]));
            simplex = order.iter().map(|&i| simplex[i].clone()).collect();
            fs = order.iter().map(|&i| fs[i]).collect();
            let diameter = simplex
                .iter()
                .flat_map(|p| simplex.iter().map(move |q| dist(p, q)))
                .fold(0.0f64, f64::max);
            if diameter < opts.xtol {
                break;
            }
            if trace.len() >= opts.max_evaluations {
                exhausted = true;
                break;
            }
            let centroid: Vec<f64> =
                (0..n).map(|k| simplex[..n].iter().map(|p| p[k]).sum::<f64>() / n as f64).collect();
            let along = |t: f64| -> Vec<f64> {
                centroid.iter().zip(&simplex[n]).map(|(c, w)| c + t * (c - w)).collect()
            };
            let xr = along(1.0);
            let fr = eval(&xr, &mut trace)?;
            if fr < fs[0] {
                let xe = along(2.0);
                let fe = eval(&xe, &mut trace)?;
                if fe < fr {
                    simplex[n] = xe;
                    fs[n] = fe;
                } else {
                    simplex[n] = xr;
                    fs[n] = fr;
                }
            } else if fr < fs[n - 1] {
                simplex[n] = xr;
                fs[n] = fr;
            } else {
                let (xc, fc) = if fr < fs[n] {
                    let xc = along(0.5);
                    let fc = eval(&xc, &mut trace)?;
                    (xc, fc)
                } else {
                    let xc = along(-0.5);
                    let fc = eval(&xc, &mut trace)?;
                    (xc, fc)
                };
                if fc < fs[n].min(fr) {
                    simplex[n] = xc;
                    fs[n] = fc;
                } else {
                    let best = simplex[0].clone();
                    for i in 1..=n {
                        simplex[i] = best.iter().zip(&simplex[i]).map(|(b, x)| b + 0.5 * (x - b)).collect();
                        fs[i] = eval(&simplex[i].clone(), &mut trace)?;
                    }
                }
            }
        }
        if exhausted {
            break;
        }
        start = OptimResult::from_trace(trace.clone(), false).best;
    }
    Ok(OptimResult::from_trace(trace, exhausted))
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Time and height of the revival peak (see [`revival_height`]).
pub fn revival_peak(r: &TimeSeries) -> Result<Option<(f64, f64)>> {
    if r.len() < 3 {
        return Err(Error::Input("revival series needs at least three samples".into()));
    }
    if (r.values[0] - 1.0).abs() > 1e-9 {
        return Err(Error::Input(format!("R(0) must be 1, got {}", r.values[0])));
    }
    let v = &r.values;
    let Some(first_min) = (1..v.len() - 1).find(|&i| v[i] < v[i - 1] && v[i] < v[i + 1]) else {
        return Ok(None);
    };
    let peak = (first_min + 1..v.len() - 1)
        .filter(|&i| v[i] > v[i - 1] && v[i] > v[i + 1])
        .map(|i| {
            let (a, b, c) = (v[i - 1], v[i], v[i + 1]);
            let den = a - 2.0 * b + c;
            let shift = if den != 0.0 { 0.5 * (a - c) / den } else { 0.0 };
            let dt = r.times[i + 1] - r.times[i];
            let height = if den != 0.0 { b - (a - c).powi(2) / (8.0 * den) } else { b };
            (r.times[i] + shift * dt, height)
        })
        .max_by(|x, y| x.1.total_cmp(&y.1));
    Ok(peak)
}

/// Height of the strongest revival: the largest strict local maximum of `R`
/// after its first strict local minimum, refined by a parabola through the
/// three grid points around it. Zero if there is no such maximum.
pub fn revival_height(r: &TimeSeries) -> Result<f64> {
    Ok(revival_peak(r)?.map_or(0.0, |p| p.1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    RevivalHeight,
    NegDeltaAv,
    NegError3Analytic,
    NegErrorNumeric(usize),
}

/// Model template plus the names of the free strengths; higher is better.
#[derive(Debug, Clone)]
pub struct Objective {
    pub kind: ObjectiveKind,
    pub template: ModelConfig,
    pub free: Vec<TermName>,
    pub scheme: Scheme,
    pub grid: TimeGrid,
    cache: Option<OperatorCache>,
}

#[derive(Debug, Clone)]
struct OperatorCache {
    basis: ConstrainedBasis,
    fixed: SparseHamiltonian,
    free: Vec<SparseHamiltonian>,
}

impl Objective {
    pub fn new(kind: ObjectiveKind, template: ModelConfig, free: Vec<TermName>, scheme: Scheme, grid: TimeGrid) -> Result<Self> {
        if free.is_empty() || free.len() > MAX_VECTOR_DIM {
            return Err(Error::Input(format!("need 1..={MAX_VECTOR_DIM} free strengths")));
        }
        grid.validate()?;
        let cache = match kind {
            ObjectiveKind::NegError3Analytic => {
                if free != [TermName::Sigma(3)] {
                    return Err(Error::Configuration("analytic error objective has the single free term sigma3".into()));
                }
                None
            }
            ObjectiveKind::RevivalHeight => {
                template.validate()?;
                let basis = enumerate_basis(template.sites)?;
                let mut fixed = template.clone();
                for name in &free {
                    fixed.terms.remove(name);
                }
                let fixed_h = crate::operators::assemble(&basis, &fixed)?;
                let free_h = free.iter().map(|&n| build_term(&basis, n)).collect::<Result<_>>()?;
                Some(OperatorCache { basis, fixed: fixed_h, free: free_h })
            }
            ObjectiveKind::NegDeltaAv | ObjectiveKind::NegErrorNumeric(_) => {
                template.validate()?;
                let basis = enumerate_basis(template.sites)?;
                Some(OperatorCache { fixed: build_pxp(&basis), basis, free: Vec::new() })
            }
        };
        Ok(Self { kind, template, free, scheme, grid, cache })
    }

    pub fn config_at(&self, x: &[f64]) -> ModelConfig {
        let mut cfg = self.template.clone();
        for (&name, &v) in self.free.iter().zip(x) {
            cfg.terms.insert(name, v);
        }
        cfg
    }

    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.free.len() {
            return Err(Error::DimensionMismatch { expected: self.free.len(), got: x.len() });
        }
        match self.kind {
            ObjectiveKind::NegError3Analytic => Ok(-error3_vacuum(x[0], self.template.sites as u64)?),
            ObjectiveKind::RevivalHeight => {
                let cache = self.cache.as_ref().expect("built in new");
                let mut h = cache.fixed.clone();
                for (term, &v) in cache.free.iter().zip(x) {
                    h = h.add_scaled(term, v)?;
                }
                let psi0 = cache.basis.special_state(self.template.initial)?;
                let evo = Evolver::auto(&h)?;
                let r = return_probability(&evo, &psi0, &self.grid.times())?;
                revival_height(&r)
            }
            ObjectiveKind::NegDeltaAv | ObjectiveKind::NegErrorNumeric(_) => {
                let cache = self.cache.as_ref().expect("built in new");
                let ladder = ladder_split(&cache.basis, &self.config_at(x), self.scheme)?;
                let data = fsa(&ladder, &ladder.reference_state(), FSA_TOL)?;
                match self.kind {
                    ObjectiveKind::NegDeltaAv => Ok(-data.delta_av),
                    ObjectiveKind::NegErrorNumeric(n) => data
                        .epsilon(n)
                        .map(|e| -e)
                        .ok_or_else(|| Error::Input(format!("FSA closed before step {n}"))),
                    _ => unreachable!(),
                }
            }
        }
    }
}
