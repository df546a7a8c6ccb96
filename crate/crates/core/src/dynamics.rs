//! Time evolution and the quantities built on it: return probability, spread
//! complexity, expectation values, diagonal ensembles and cross-correlations.
//!
//! Two propagators implement [`TimeEvolution`]. [`EigenSystem`] diagonalizes
//! the Hamiltonian once and is exact; it is limited to [`DENSE_LIMIT`] basis
//! states. [`KrylovPropagator`] advances the state with short Lanczos
//! expansions and a per-step error bound, which keeps L = 18 scans cheap.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{ConstrainedBasis, StateVector};
use crate::krylov::{lanczos_run, orthonormality_defect, TridiagonalHamiltonian};
use crate::operators::SparseHamiltonian;

/// Largest dimension accepted by the dense eigensolver.
pub const DENSE_LIMIT: usize = 16000;
/// [`Evolver::auto`] switches to the Krylov propagator above this dimension.
pub const AUTO_DENSE_MAX: usize = 1500;

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    pub dt: f64,
    pub t_max: f64,
}

impl Default for TimeGrid {
    fn default() -> Self {
        Self { dt: 0.02, t_max: 40.0 }
    }
}

impl TimeGrid {
    pub fn new(dt: f64, t_max: f64) -> Result<Self> {
        let grid = Self { dt, t_max };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite() && self.t_max >= 0.0 && self.t_max.is_finite()) {
            return Err(Error::Configuration(format!(
                "time grid needs dt > 0 and t_max ≥ 0, got dt={} t_max={}",
                self.dt, self.t_max
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        (self.t_max / self.dt).round() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|i| i as f64 * self.dt).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::DimensionMismatch { expected: times.len(), got: values.len() });
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Input("times must be strictly increasing".into()));
        }
        Ok(Self { times, values })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Largest `|a − b|` over a shared grid.
    pub fn max_abs_diff(&self, other: &TimeSeries) -> Result<f64> {
        if self.times != other.times {
            return Err(Error::Input("time grids differ".into()));
        }
        Ok(self.values.iter().zip(&other.values).fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::Input("empty time list".into()));
    }
    if times[0] < 0.0 || times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().any(|t| !t.is_finite()) {
        return Err(Error::Input("times must be finite, non-negative and strictly increasing".into()));
    }
    Ok(())
}

/// Anything that can produce `|ψ(t)⟩ = e^{−iHt}|ψ₀⟩` on a list of times.
pub trait TimeEvolution {
    fn dim(&self) -> usize;

    /// Calls `f(i, ψ(times[i]))` in time order.
    fn for_each_state(
        &self,
        psi0: &StateVector,
        times: &[f64],
        f: &mut dyn FnMut(usize, &StateVector) -> Result<()>,
    ) -> Result<()>;

    /// Overlaps `⟨target_j|ψ(t_i)⟩`, indexed `[i][j]`.
    fn overlaps(&self, psi0: &StateVector, targets: &[StateVector], times: &[f64]) -> Result<Vec<Vec<Complex64>>> {
        let mut out = Vec::with_capacity(times.len());
        self.for_each_state(psi0, times, &mut |_, psi| {
            out.push(targets.iter().map(|t| t.dot(psi)).collect());
            Ok(())
        })?;
        Ok(out)
    }

    fn check_state(&self, psi0: &StateVector) -> Result<()> {
        if psi0.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: psi0.len() });
        }
        if !psi0.is_finite() || !psi0.is_normalized() {
            return Err(Error::Input(format!("initial state must be normalized (norm {})", psi0.norm())));
        }
        Ok(())
    }
}

/// Full spectrum with ascending eigenvalues and orthonormal eigenvector columns.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: DMatrix<f64>,
}

pub fn eigendecompose(h: &SparseHamiltonian) -> Result<EigenSystem> {
    if h.dim() > DENSE_LIMIT {
        return Err(Error::Capacity { dim: h.dim(), limit: DENSE_LIMIT });
    }
    eigen_of_dense(h.to_dense())
}

fn eigen_of_dense(m: DMatrix<f64>) -> Result<EigenSystem> {
    let n = m.nrows();
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let eigenvectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(EigenSystem { eigenvalues, eigenvectors })
}

impl EigenSystem {
    pub fn from_tridiagonal(t: &TridiagonalHamiltonian) -> Result<Self> {
        eigen_of_dense(t.to_dense())
    }

    /// Components `⟨n|v⟩` in the eigenbasis.
    pub fn to_eigenbasis(&self, v: &StateVector) -> Vec<Complex64> {
        let re = DVector::from_iterator(v.len(), v.amplitudes().iter().map(|z| z.re));
        let im = DVector::from_iterator(v.len(), v.amplitudes().iter().map(|z| z.im));
        let (cr, ci) = (self.eigenvectors.tr_mul(&re), self.eigenvectors.tr_mul(&im));
        cr.iter().zip(ci.iter()).map(|(&a, &b)| Complex64::new(a, b)).collect()
    }

    pub fn from_eigenbasis(&self, c: &[Complex64]) -> StateVector {
        let re = DVector::from_iterator(c.len(), c.iter().map(|z| z.re));
        let im = DVector::from_iterator(c.len(), c.iter().map(|z| z.im));
        let (vr, vi) = (&self.eigenvectors * re, &self.eigenvectors * im);
        StateVector::from_amplitudes(vr.iter().zip(vi.iter()).map(|(&a, &b)| Complex64::new(a, b)).collect())
    }

    /// `max |H − VΛVᵀ|`.
    pub fn reconstruction_error(&self, h: &SparseHamiltonian) -> f64 {
        let lam = DMatrix::from_diagonal(&DVector::from_column_slice(&self.eigenvalues));
        let rebuilt = &self.eigenvectors * lam * self.eigenvectors.transpose();
        (h.to_dense() - rebuilt).abs().max()
    }

    fn phases(&self, t: f64, c: &[Complex64]) -> Vec<Complex64> {
        self.eigenvalues.iter().zip(c).map(|(&e, &ci)| (-I * e * t).exp() * ci).collect()
    }
}

impl TimeEvolution for EigenSystem {
    fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    fn for_each_state(
        &self,
        psi0: &StateVector,
        times: &[f64],
        f: &mut dyn FnMut(usize, &StateVector) -> Result<()>,
    ) -> Result<()> {
        self.check_state(psi0)?;
        check_times(times)?;
        let c = self.to_eigenbasis(psi0);
        for (i, &t) in times.iter().enumerate() {
            f(i, &self.from_eigenbasis(&self.phases(t, &c)))?;
        }
        Ok(())
    }

    fn overlaps(&self, psi0: &StateVector, targets: &[StateVector], times: &[f64]) -> Result<Vec<Vec<Complex64>>> {
        self.check_state(psi0)?;
        check_times(times)?;
        let c = self.to_eigenbasis(psi0);
        let tt: Vec<Vec<Complex64>> = targets.iter().map(|t| self.to_eigenbasis(t)).collect();
        Ok(times
            .iter()
            .map(|&t| {
                let phased = self.phases(t, &c);
                tt.iter().map(|tj| tj.iter().zip(&phased).map(|(a, b)| a.conj() * b).sum()).collect()
            })
            .collect())
    }
}

/// Restarted short-time Lanczos propagator.
///
/// Each restart builds `subspace` Krylov vectors from the current state and
/// reuses them for every output time whose a-posteriori error
/// `β_m |[e^{−iTs} e₁]_m|` stays below `tol`.
#[derive(Debug, Clone)]
pub struct KrylovPropagator {
    h: SparseHamiltonian,
    pub subspace: usize,
    pub tol: f64,
}

struct LocalExpansion {
    vectors: Vec<StateVector>,
    q: DMatrix<f64>,
    lambda: Vec<f64>,
    residual: f64,
    scale: f64,
}

impl LocalExpansion {
    fn build(h: &SparseHamiltonian, psi: &StateVector, subspace: usize) -> Result<Self> {
        let scale = psi.norm();
        let mut start = psi.clone();
        start.scale_real(1.0 / scale);
        let k = lanczos_run(h, &start, subspace.min(h.dim()))?;
        let t = TridiagonalHamiltonian { diagonal: k.alphas.clone(), offdiagonal: k.betas.clone() };
        let eig = EigenSystem::from_tridiagonal(&t)?;
        let residual = if k.steps_run == h.dim() { 0.0 } else { k.residual };
        Ok(Self { vectors: k.vectors, q: eig.eigenvectors, lambda: eig.eigenvalues, residual, scale })
    }

    /// Krylov coefficients of `e^{−iHs}ψ` and the error estimate.
    fn coefficients(&self, s: f64) -> (Vec<Complex64>, f64) {
        let m = self.lambda.len();
        let phased: Vec<Complex64> =
            (0..m).map(|k| (-I * self.lambda[k] * s).exp() * self.q[(0, k)] * self.scale).collect();
        let y: Vec<Complex64> = (0..m).map(|r| (0..m).map(|k| phased[k] * self.q[(r, k)]).sum()).collect();
        let err = self.residual * y[m - 1].norm();
        (y, err)
    }

    fn state(&self, y: &[Complex64]) -> StateVector {
        let mut out = StateVector::zeros(self.vectors[0].len());
        for (v, &c) in self.vectors.iter().zip(y) {
            out.axpy(c, v);
        }
        out
    }
}

/// Receives the expansion generation, the output index, the expansion and its coefficients.
type Emit<'a> = dyn FnMut(usize, usize, &LocalExpansion, &[Complex64]) -> Result<()> + 'a;

impl KrylovPropagator {
    pub fn new(h: &SparseHamiltonian) -> Self {
        Self { h: h.clone(), subspace: 40, tol: 1e-13 }
    }

    /// Drives the restarts; `emit` receives each accepted expansion and coefficient vector.
    fn drive(
        &self,
        psi0: &StateVector,
        times: &[f64],
        emit: &mut Emit<'_>,
    ) -> Result<()> {
        self.check_state(psi0)?;
        check_times(times)?;
        let mut psi = psi0.clone();
        let mut t_cur = 0.0;
        let mut idx = 0;
        let mut generation = 0;
        while idx < times.len() {
            let exp = LocalExpansion::build(&self.h, &psi, self.subspace)?;
            generation += 1;
            let mut last: Option<(f64, Vec<Complex64>)> = None;
            while idx < times.len() {
                let (y, err) = exp.coefficients(times[idx] - t_cur);
                if err > self.tol {
                    break;
                }
                emit(generation, idx, &exp, &y)?;
                last = Some((times[idx], y));
                idx += 1;
            }
            match last {
                Some((t, y)) => {
                    psi = exp.state(&y);
                    t_cur = t;
                }
                None => {
                    // the next output is out of reach: take the longest safe sub-step
                    let mut s = times[idx] - t_cur;
                    loop {
                        s *= 0.5;
                        let (y, err) = exp.coefficients(s);
                        if err <= self.tol {
                            psi = exp.state(&y);
                            t_cur += s;
                            break;
                        }
                        if s < 1e-12 {
                            return Err(Error::Input("Krylov propagator cannot make progress".into()));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

impl TimeEvolution for KrylovPropagator {
    fn dim(&self) -> usize {
        self.h.dim()
    }

    fn for_each_state(
        &self,
        psi0: &StateVector,
        times: &[f64],
        f: &mut dyn FnMut(usize, &StateVector) -> Result<()>,
    ) -> Result<()> {
        self.drive(psi0, times, &mut |_, i, exp, y| f(i, &exp.state(y)))
    }

    fn overlaps(&self, psi0: &StateVector, targets: &[StateVector], times: &[f64]) -> Result<Vec<Vec<Complex64>>> {
        let mut out = vec![Vec::new(); times.len()];
        let mut cache: Option<(usize, Vec<Vec<Complex64>>)> = None;
        self.drive(psi0, times, &mut |key, i, exp, y| {
            if cache.as_ref().map(|c| c.0) != Some(key) {
                let g = targets.iter().map(|t| exp.vectors.iter().map(|v| t.dot(v)).collect()).collect();
                cache = Some((key, g));
            }
            let g = &cache.as_ref().unwrap().1;
            out[i] = g.iter().map(|gj: &Vec<Complex64>| gj.iter().zip(y).map(|(a, b)| a * b).sum()).collect();
            Ok(())
        })?;
        Ok(out)
    }
}

/// Dense or Krylov propagation behind one type.
#[derive(Debug, Clone)]
pub enum Evolver {
    Dense(EigenSystem),
    Krylov(KrylovPropagator),
}

impl Evolver {
    /// Dense up to [`AUTO_DENSE_MAX`], Krylov above.
    pub fn auto(h: &SparseHamiltonian) -> Result<Self> {
        if h.dim() <= AUTO_DENSE_MAX {
            Ok(Evolver::Dense(eigendecompose(h)?))
        } else {
            Ok(Evolver::Krylov(KrylovPropagator::new(h)))
        }
    }

    fn inner(&self) -> &dyn TimeEvolution {
        match self {
            Evolver::Dense(e) => e,
            Evolver::Krylov(k) => k,
        }
    }
}

impl TimeEvolution for Evolver {
    fn dim(&self) -> usize {
        self.inner().dim()
    }

    fn for_each_state(
        &self,
        psi0: &StateVector,
        times: &[f64],
        f: &mut dyn FnMut(usize, &StateVector) -> Result<()>,
    ) -> Result<()> {
        self.inner().for_each_state(psi0, times, f)
    }

    fn overlaps(&self, psi0: &StateVector, targets: &[StateVector], times: &[f64]) -> Result<Vec<Vec<Complex64>>> {
        self.inner().overlaps(psi0, targets, times)
    }
}

/// `R(t) = |⟨ψ₀|e^{−iHt}|ψ₀⟩|²`.
pub fn return_probability(evo: &dyn TimeEvolution, psi0: &StateVector, times: &[f64]) -> Result<TimeSeries> {
    let ov = evo.overlaps(psi0, std::slice::from_ref(psi0), times)?;
    TimeSeries::new(times.to_vec(), ov.iter().map(|o| o[0].norm_sqr()).collect())
}

/// Spread complexity and the weight that has left the supplied basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexitySeries {
    pub complexity: TimeSeries,
    pub leakage: TimeSeries,
}

fn complexity_from_overlaps(times: &[f64], ov: &[Vec<Complex64>], keep: usize) -> Result<ComplexitySeries> {
    let mut c = Vec::with_capacity(times.len());
    let mut leak = Vec::with_capacity(times.len());
    for row in ov {
        let (mut ck, mut w) = (0.0, 0.0);
        for (k, z) in row.iter().take(keep).enumerate() {
            let p = z.norm_sqr();
            ck += k as f64 * p;
            w += p;
        }
        c.push(ck);
        leak.push(1.0 - w);
    }
    Ok(ComplexitySeries {
        complexity: TimeSeries::new(times.to_vec(), c)?,
        leakage: TimeSeries::new(times.to_vec(), leak)?,
    })
}

fn check_krylov_basis(psi0: &StateVector, basis: &[StateVector]) -> Result<()> {
    if basis.is_empty() {
        return Err(Error::Input("empty Krylov basis".into()));
    }
    let defect = orthonormality_defect(basis);
    if defect > 1e-10 {
        return Err(Error::Input(format!("Krylov basis is not orthonormal (defect {defect:e})")));
    }
    if basis[0].distance(psi0) > 1e-10 {
        return Err(Error::Input("first Krylov vector must equal the initial state".into()));
    }
    Ok(())
}

/// `C(t) = Σ_k k |⟨K_k|ψ(t)⟩|²` and leakage `1 − Σ_k |⟨K_k|ψ(t)⟩|²`.
pub fn spread_complexity(
    evo: &dyn TimeEvolution,
    psi0: &StateVector,
    krylov_vectors: &[StateVector],
    times: &[f64],
) -> Result<ComplexitySeries> {
    check_krylov_basis(psi0, krylov_vectors)?;
    let ov = evo.overlaps(psi0, krylov_vectors, times)?;
    complexity_from_overlaps(times, &ov, krylov_vectors.len())
}

/// Complexity of `e^{−iTt} e₁` on the chain defined by a tridiagonal matrix.
pub fn chain_complexity(t: &TridiagonalHamiltonian, times: &[f64]) -> Result<ComplexitySeries> {
    let eig = EigenSystem::from_tridiagonal(t)?;
    let e1 = StateVector::basis_state(t.dimension(), 0);
    let sites: Vec<StateVector> = (0..t.dimension()).map(|k| StateVector::basis_state(t.dimension(), k)).collect();
    let ov = eig.overlaps(&e1, &sites, times)?;
    complexity_from_overlaps(times, &ov, sites.len())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTable {
    pub basis_counts: Vec<usize>,
    pub times: Vec<f64>,
    /// `complexity[i][t]` uses the first `basis_counts[i]` Lanczos vectors.
    pub complexity: Vec<Vec<f64>>,
    /// `max_t |C_{N_{i+1}} − C_{N_i}|` for consecutive counts.
    pub successive_max_diff: Vec<f64>,
}

impl ConvergenceTable {
    /// Largest `|C_a − C_b|` over all pairs of counts `> threshold`.
    pub fn max_pair_diff_above(&self, threshold: usize) -> f64 {
        let rows: Vec<&Vec<f64>> = self
            .basis_counts
            .iter()
            .zip(&self.complexity)
            .filter(|(n, _)| **n > threshold)
            .map(|(_, c)| c)
            .collect();
        let mut worst = 0.0f64;
        for (i, a) in rows.iter().enumerate() {
            for b in &rows[i + 1..] {
                worst = a.iter().zip(b.iter()).fold(worst, |m, (x, y)| m.max((x - y).abs()));
            }
        }
        worst
    }
}

/// Spread complexity with growing Lanczos bases, all projected from one exact evolution.
pub fn complexity_convergence(
    evo: &dyn TimeEvolution,
    h: &SparseHamiltonian,
    psi0: &StateVector,
    basis_counts: &[usize],
    times: &[f64],
) -> Result<ConvergenceTable> {
    let max = *basis_counts.iter().max().ok_or_else(|| Error::Input("no basis counts".into()))?;
    if basis_counts.iter().any(|&n| n == 0 || n > h.dim()) {
        return Err(Error::Input(format!("basis counts must be in 1..={}", h.dim())));
    }
    let k = crate::krylov::lanczos(h, psi0, max)?;
    let ov = evo.overlaps(psi0, &k.vectors, times)?;
    let mut complexity = Vec::new();
    for &n in basis_counts {
        complexity.push(complexity_from_overlaps(times, &ov, n.min(k.steps_run))?.complexity.values);
    }
    let successive_max_diff = complexity
        .windows(2)
        .map(|w| w[0].iter().zip(&w[1]).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())))
        .collect();
    Ok(ConvergenceTable { basis_counts: basis_counts.to_vec(), times: times.to_vec(), complexity, successive_max_diff })
}

/// `⟨ψ(t)|O|ψ(t)⟩`.
pub fn expectation_series(
    evo: &dyn TimeEvolution,
    psi0: &StateVector,
    o: &SparseHamiltonian,
    times: &[f64],
) -> Result<TimeSeries> {
    if o.dim() != evo.dim() {
        return Err(Error::DimensionMismatch { expected: evo.dim(), got: o.dim() });
    }
    let mut values = Vec::with_capacity(times.len());
    evo.for_each_state(psi0, times, &mut |_, psi| {
        values.push(o.expectation(psi)?);
        Ok(())
    })?;
    TimeSeries::new(times.to_vec(), values)
}

/// Long-time average `Σ_blocks c_B† O_B c_B` over degenerate eigenspaces.
pub fn diagonal_ensemble(eig: &EigenSystem, psi0: &StateVector, o: &SparseHamiltonian) -> Result<f64> {
    eig.check_state(psi0)?;
    if o.dim() != eig.dim() {
        return Err(Error::DimensionMismatch { expected: eig.dim(), got: o.dim() });
    }
    let c = eig.to_eigenbasis(psi0);
    let n = eig.dim();
    let scale = eig.eigenvalues.iter().fold(1.0f64, |m, e| m.max(e.abs()));
    let mut total = 0.0;
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && eig.eigenvalues[end] - eig.eigenvalues[end - 1] < 1e-9 * scale {
            end += 1;
        }
        let cols: Vec<StateVector> = (start..end)
            .map(|k| StateVector::from_real(eig.eigenvectors.column(k).as_slice()))
            .collect();
        let ocols: Vec<StateVector> = cols.iter().map(|v| o.matvec(v)).collect::<Result<_>>()?;
        for (a, va) in cols.iter().enumerate() {
            for (b, ob) in ocols.iter().enumerate() {
                let oab = va.dot(ob).re;
                total += (c[start + a].conj() * c[start + b]).re * oab;
            }
        }
        start = end;
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossCorrelation {
    pub lags: Vec<i64>,
    /// `S(τ) = Σ_n A_{n+τ} B_n` with zero padding.
    pub raw: Vec<f64>,
    /// Mean-subtracted version divided by `√(Σ(A−Ā)² Σ(B−B̄)²)`.
    pub normalized: Vec<f64>,
}

pub fn cross_correlation(a: &TimeSeries, b: &TimeSeries, max_lag: usize) -> Result<CrossCorrelation> {
    if a.times != b.times {
        return Err(Error::Input("cross-correlation needs identical time grids".into()));
    }
    let n = a.len() as i64;
    let slide = |x: &[f64], y: &[f64], tau: i64| -> f64 {
        (0..n).filter(|&k| (0..n).contains(&(k + tau))).map(|k| x[(k + tau) as usize] * y[k as usize]).sum()
    };
    let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len().max(1) as f64;
    let (ma, mb) = (mean(&a.values), mean(&b.values));
    let ac: Vec<f64> = a.values.iter().map(|x| x - ma).collect();
    let bc: Vec<f64> = b.values.iter().map(|x| x - mb).collect();
    let norm = (ac.iter().map(|x| x * x).sum::<f64>() * bc.iter().map(|x| x * x).sum::<f64>()).sqrt();
    let lags: Vec<i64> = (-(max_lag as i64)..=max_lag as i64).collect();
    let raw = lags.iter().map(|&t| slide(&a.values, &b.values, t)).collect();
    let normalized =
        lags.iter().map(|&t| if norm > 0.0 { slide(&ac, &bc, t) / norm } else { 0.0 }).collect();
    Ok(CrossCorrelation { lags, raw, normalized })
}

/// `(1/L) Σ_j n_j` as a diagonal operator.
pub fn up_density(basis: &ConstrainedBasis) -> SparseHamiltonian {
    let l = basis.sites() as f64;
    SparseHamiltonian::diagonal(&basis.states().iter().map(|s| s.count_ones() as f64 / l).collect::<Vec<_>>())
}

/// `(1/L) Σ_j n_j n_{j+2}` as a diagonal operator.
pub fn nnn_correlator(basis: &ConstrainedBasis) -> SparseHamiltonian {
    let l = basis.sites();
    let values: Vec<f64> = basis
        .states()
        .iter()
        .map(|&s| (0..l).filter(|&j| s >> j & 1 == 1 && s >> ((j + 2) % l) & 1 == 1).count() as f64 / l as f64)
        .collect();
    SparseHamiltonian::diagonal(&values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{enumerate_basis, StateTag};
    use crate::krylov::{fsa, lanczos, tridiagonal, FSA_TOL};
    use crate::operators::{build_pxp, free_paramagnet, ladder_split, ModelConfig, Scheme, TermName};

    fn sigma_x() -> SparseHamiltonian {
        SparseHamiltonian::from_triplets(2, vec![(0, 1, 1.0), (1, 0, 1.0)]).unwrap()
    }

    fn grid(dt: f64, t_max: f64) -> Vec<f64> {
        TimeGrid::new(dt, t_max).unwrap().times()
    }

    #[test]
    fn two_level_analytics() {
        let eig = eigendecompose(&sigma_x()).unwrap();
        let psi0 = StateVector::basis_state(2, 0);
        let times = grid(0.01, 5.0);
        let r = return_probability(&eig, &psi0, &times).unwrap();
        let basis = [StateVector::basis_state(2, 0), StateVector::basis_state(2, 1)];
        let c = spread_complexity(&eig, &psi0, &basis, &times).unwrap();
        for (i, &t) in times.iter().enumerate() {
            assert!((r.values[i] - t.cos().powi(2)).abs() < 1e-10);
            assert!((c.complexity.values[i] - t.sin().powi(2)).abs() < 1e-10);
        }
    }

    #[test]
    fn pxp_spectrum_symmetry() {
        let b = enumerate_basis(4).unwrap();
        let h = build_pxp(&b);
        let eig = eigendecompose(&h).unwrap();
        let n = eig.eigenvalues.len();
        for k in 0..n {
            assert!((eig.eigenvalues[k] + eig.eigenvalues[n - 1 - k]).abs() < 1e-10);
        }
        assert!(eig.eigenvalues.iter().sum::<f64>().abs() < 1e-8);
        assert!(eig.reconstruction_error(&h) < 1e-8);
        let vtv = eig.eigenvectors.tr_mul(&eig.eigenvectors);
        assert!((vtv - DMatrix::<f64>::identity(n, n)).abs().max() < 1e-10);
    }

    #[test]
    fn paramagnet_chain_spectrum() {
        let t = TridiagonalHamiltonian::from_betas(&[2.0, 6f64.sqrt(), 6f64.sqrt(), 2.0]);
        let eig = EigenSystem::from_tridiagonal(&t).unwrap();
        for (e, w) in eig.eigenvalues.iter().zip([-4.0, -2.0, 0.0, 2.0, 4.0]) {
            assert!((e - w).abs() < 1e-10);
        }
    }

    #[test]
    fn capacity_guard() {
        let h = SparseHamiltonian::identity(DENSE_LIMIT + 1);
        assert!(matches!(eigendecompose(&h), Err(Error::Capacity { .. })));
    }

    #[test]
    fn energy_and_norm_conservation() {
        let b = enumerate_basis(10).unwrap();
        let h = build_pxp(&b);
        let eig = eigendecompose(&h).unwrap();
        let psi0 = b.special_state(StateTag::Z2).unwrap();
        let times = grid(0.5, 20.0);
        let e = expectation_series(&eig, &psi0, &h, &times).unwrap();
        let id = expectation_series(&eig, &psi0, &SparseHamiltonian::identity(b.dim()), &times).unwrap();
        for (x, y) in e.values.iter().zip(&id.values) {
            assert!(x.abs() < 1e-10);
            assert!((y - 1.0).abs() < 1e-10);
        }
        let dens = expectation_series(&eig, &b.special_state(StateTag::Vacuum).unwrap(), &up_density(&b), &[0.0])
            .unwrap();
        assert!(dens.values[0].abs() < 1e-14);
    }

    #[test]
    fn krylov_propagator_matches_dense() {
        let b = enumerate_basis(12).unwrap();
        let cfg = ModelConfig::new(12, StateTag::Z2).with_term(TermName::Z2Pert, 0.108);
        let h = crate::operators::assemble(&b, &cfg).unwrap();
        let psi0 = b.special_state(StateTag::Z2).unwrap();
        let times = grid(0.05, 15.0);
        let dense = eigendecompose(&h).unwrap();
        let kry = KrylovPropagator::new(&h);
        let rd = return_probability(&dense, &psi0, &times).unwrap();
        let rk = return_probability(&kry, &psi0, &times).unwrap();
        assert!(rd.max_abs_diff(&rk).unwrap() < 1e-10);
        let ed = expectation_series(&dense, &psi0, &nnn_correlator(&b), &times).unwrap();
        let ek = expectation_series(&kry, &psi0, &nnn_correlator(&b), &times).unwrap();
        assert!(ed.max_abs_diff(&ek).unwrap() < 1e-10);
    }

    #[test]
    fn free_paramagnet_has_no_leakage() {
        let lp = free_paramagnet(6).unwrap();
        let h = lp.full();
        let psi0 = lp.reference_state();
        let f = fsa(&lp, &psi0, FSA_TOL).unwrap();
        assert_eq!(f.closed_after, 7);
        let eig = eigendecompose(&h).unwrap();
        let c = spread_complexity(&eig, &psi0, &f.vectors, &grid(0.1, 10.0)).unwrap();
        assert!(c.leakage.values.iter().all(|l| l.abs() < 1e-10));
        assert!(c.complexity.values.iter().all(|&x| (-1e-12..=6.0 + 1e-12).contains(&x)));
        assert!(c.complexity.values[0].abs() < 1e-14);
    }

    #[test]
    fn chain_and_projection_agree_for_exact_closure() {
        let lp = free_paramagnet(5).unwrap();
        let psi0 = lp.reference_state();
        let f = fsa(&lp, &psi0, FSA_TOL).unwrap();
        let times = grid(0.1, 6.0);
        let eig = eigendecompose(&lp.full()).unwrap();
        let proj = spread_complexity(&eig, &psi0, &f.vectors, &times).unwrap();
        let chain = chain_complexity(&tridiagonal(&f), &times).unwrap();
        assert!(proj.complexity.max_abs_diff(&chain.complexity).unwrap() < 1e-10);
    }

    #[test]
    fn spread_complexity_rejects_bad_basis() {
        let eig = eigendecompose(&sigma_x()).unwrap();
        let psi0 = StateVector::basis_state(2, 0);
        let bad = [StateVector::basis_state(2, 0), StateVector::basis_state(2, 0)];
        assert!(spread_complexity(&eig, &psi0, &bad, &[0.0]).is_err());
        let wrong_start = [StateVector::basis_state(2, 1)];
        assert!(spread_complexity(&eig, &psi0, &wrong_start, &[0.0]).is_err());
    }

    #[test]
    fn convergence_is_exact_at_full_dimension() {
        let b = enumerate_basis(8).unwrap();
        let h = build_pxp(&b);
        let psi0 = b.special_state(StateTag::Z2).unwrap();
        let eig = eigendecompose(&h).unwrap();
        let times = grid(0.1, 10.0);
        let k = lanczos(&h, &psi0, b.dim()).unwrap();
        let n = k.steps_run;
        let table = complexity_convergence(&eig, &h, &psi0, &[5, n], &times).unwrap();
        let full = spread_complexity(&eig, &psi0, &k.vectors, &times).unwrap();
        assert!(full.leakage.values.iter().all(|l| l.abs() < 1e-10));
        for (a, b) in table.complexity[1].iter().zip(&full.complexity.values) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(table.successive_max_diff[0] > 1e-3);
    }

    #[test]
    fn diagonal_ensemble_basics() {
        let b = enumerate_basis(8).unwrap();
        let h = build_pxp(&b);
        let eig = eigendecompose(&h).unwrap();
        let psi0 = b.special_state(StateTag::Z2).unwrap();
        let id = SparseHamiltonian::identity(b.dim());
        assert!((diagonal_ensemble(&eig, &psi0, &id).unwrap() - 1.0).abs() < 1e-10);
        assert!((diagonal_ensemble(&eig, &psi0, &h).unwrap() - h.expectation(&psi0).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn diagonal_ensemble_matches_long_time_average() {
        // z2-perturbed L=10 from the vacuum has a generic spectrum
        let b = enumerate_basis(10).unwrap();
        let cfg = ModelConfig::new(10, StateTag::Vacuum).with_term(TermName::Z2Pert, 0.37);
        let h = crate::operators::assemble(&b, &cfg).unwrap();
        let eig = eigendecompose(&h).unwrap();
        let psi0 = b.special_state(StateTag::Vacuum).unwrap();
        let o = up_density(&b);
        let times: Vec<f64> = (0..=2000).map(|i| 100.0 + 0.05 * i as f64).collect();
        let series = expectation_series(&eig, &psi0, &o, &times).unwrap();
        let avg = series.values.iter().sum::<f64>() / series.len() as f64;
        let de = diagonal_ensemble(&eig, &psi0, &o).unwrap();
        assert!((avg - de).abs() < 1e-2, "{avg} vs {de}");
    }

    #[test]
    fn cross_correlation_identities() {
        let times: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let mut pulse = vec![0.0; 50];
        pulse[0] = 1.0;
        let a = TimeSeries::new(times.clone(), pulse).unwrap();
        let s = cross_correlation(&a, &a, 5).unwrap();
        for (&lag, &v) in s.lags.iter().zip(&s.raw) {
            assert_eq!(v, if lag == 0 { 1.0 } else { 0.0 });
        }
        let x = TimeSeries::new(times.clone(), times.iter().map(|t| (2.0 * t).sin()).collect()).unwrap();
        let y = TimeSeries::new(times.clone(), times.iter().map(|t| (t * t).cos()).collect()).unwrap();
        let (xy, yx) = (cross_correlation(&x, &y, 10).unwrap(), cross_correlation(&y, &x, 10).unwrap());
        for k in 0..xy.lags.len() {
            assert!((xy.raw[k] - yx.raw[xy.lags.len() - 1 - k]).abs() < 1e-12);
        }
        let auto = cross_correlation(&x, &x, 10).unwrap();
        let zero = auto.lags.iter().position(|&l| l == 0).unwrap();
        assert!(auto.raw.iter().all(|&v| v <= auto.raw[zero]));
        let other = TimeSeries::new(times.iter().map(|t| t + 1.0).collect(), x.values.clone()).unwrap();
        assert!(cross_correlation(&x, &other, 1).is_err());
    }

    #[test]
    fn z3exact_fsa_basis_has_no_leakage() {
        let b = enumerate_basis(12).unwrap();
        let lp = ladder_split(&b, &ModelConfig::z3exact(12), Scheme::Z3Exact).unwrap();
        let psi0 = lp.reference_state();
        let f = fsa(&lp, &psi0, FSA_TOL).unwrap();
        let eig = eigendecompose(&lp.full()).unwrap();
        let c = spread_complexity(&eig, &psi0, &f.vectors, &grid(0.1, 20.0)).unwrap();
        assert!(c.leakage.values.iter().all(|l| l.abs() < 1e-8));
    }
}
