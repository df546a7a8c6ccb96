//! Lanczos iteration and the forward-scattering recursion.
//!
//! Coefficient indexing follows the recursion `β_{n+1} v_{n+1} = H v_n − …`:
//! vectors are `v_0, v_1, …`, and `betas[n-1]` holds `β_n`, the coupling
//! between `v_{n-1}` and `v_n`. FSA errors use the same shift, so
//! `errors_norm[n-1]` is `δ_n`.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hilbert::StateVector;
use crate::operators::{LadderPair, Scheme, SparseHamiltonian};

/// Lanczos stops once the residual norm drops below this.
pub const LANCZOS_TOL: f64 = 1e-12;
/// Default FSA closure tolerance on β.
pub const FSA_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct KrylovData {
    pub alphas: Vec<f64>,
    /// `β_1 … β_{m-1}` between the `m` stored vectors.
    pub betas: Vec<f64>,
    pub vectors: Vec<StateVector>,
    pub steps_run: usize,
    /// Norm of the residual after the last stored vector, i.e. `β_m`.
    pub residual: f64,
}

impl KrylovData {
    /// `β_n` for `1 ≤ n ≤ steps_run`, with `β_m` taken from the final residual.
    pub fn beta(&self, n: usize) -> Option<f64> {
        match n {
            0 => None,
            n if n <= self.betas.len() => Some(self.betas[n - 1]),
            n if n == self.steps_run => Some(self.residual),
            _ => None,
        }
    }

    /// Largest `|⟨v_i|v_j⟩ − δ_ij|` over stored vectors.
    pub fn orthonormality_defect(&self) -> f64 {
        orthonormality_defect(&self.vectors)
    }
}

#[derive(Debug, Clone)]
pub struct FsaData {
    /// `β_1 … β_{N-1}` for the `N = closed_after` vectors.
    pub betas: Vec<f64>,
    pub vectors: Vec<StateVector>,
    /// `δ_n = ‖H⁻v_n − β_n v_{n−1}‖` for `n = 1 … N-1`.
    pub errors_norm: Vec<f64>,
    /// `ε_n = δ_n²`.
    pub errors_sq: Vec<f64>,
    pub delta_av: f64,
    pub closed_after: usize,
    /// `‖H⁺ v_{N-1}‖`, the first coefficient below tolerance.
    pub residual: f64,
}

impl FsaData {
    pub fn beta(&self, n: usize) -> Option<f64> {
        n.checked_sub(1).and_then(|i| self.betas.get(i)).copied()
    }

    pub fn delta(&self, n: usize) -> Option<f64> {
        n.checked_sub(1).and_then(|i| self.errors_norm.get(i)).copied()
    }

    pub fn epsilon(&self, n: usize) -> Option<f64> {
        n.checked_sub(1).and_then(|i| self.errors_sq.get(i)).copied()
    }
}

fn check_normalized(v: &StateVector, dim: usize) -> Result<()> {
    if v.len() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: v.len() });
    }
    if !v.is_finite() || !v.is_normalized() {
        return Err(Error::Input(format!("initial vector must be normalized (norm {})", v.norm())));
    }
    Ok(())
}

pub(crate) fn orthonormality_defect(vectors: &[StateVector]) -> f64 {
    let mut worst = 0.0f64;
    for (i, a) in vectors.iter().enumerate() {
        for (j, b) in vectors.iter().enumerate().skip(i) {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((a.dot(b) - target).norm());
        }
    }
    worst
}

/// Subtracts the projection of `w` onto `basis` (one classical Gram–Schmidt pass).
fn project_out(basis: &[StateVector], w: &mut StateVector) {
    let coeffs: Vec<Complex64> = if w.len() >= 4096 {
        basis.par_iter().map(|u| u.dot(w)).collect()
    } else {
        basis.iter().map(|u| u.dot(w)).collect()
    };
    for (u, c) in basis.iter().zip(coeffs) {
        w.axpy(-c, u);
    }
}

/// Lanczos with full two-pass reorthogonalization, building at most
/// `max_steps` Krylov vectors.
pub fn lanczos(h: &SparseHamiltonian, v0: &StateVector, max_steps: usize) -> Result<KrylovData> {
    check_normalized(v0, h.dim())?;
    if max_steps == 0 || max_steps > h.dim() {
        return Err(Error::Input(format!("max_steps must be in 1..={}, got {max_steps}", h.dim())));
    }
    lanczos_run(h, v0, max_steps)
}

/// Lanczos without input validation, for callers that control `v0`.
pub(crate) fn lanczos_run(h: &SparseHamiltonian, v0: &StateVector, max_steps: usize) -> Result<KrylovData> {
    let mut vectors = vec![v0.clone()];
    let mut alphas = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let residual = loop {
        let k = vectors.len() - 1;
        let mut w = h.matvec(&vectors[k])?;
        let alpha = vectors[k].dot(&w).re;
        alphas.push(alpha);
        w.axpy((-alpha).into(), &vectors[k]);
        if k > 0 {
            w.axpy((-betas[k - 1]).into(), &vectors[k - 1]);
        }
        project_out(&vectors, &mut w);
        project_out(&vectors, &mut w);
        let beta = w.norm();
        if vectors.len() == max_steps || beta < LANCZOS_TOL {
            break beta;
        }
        w.scale_real(1.0 / beta);
        betas.push(beta);
        vectors.push(w);
    };
    Ok(KrylovData { steps_run: vectors.len(), alphas, betas, vectors, residual })
}

/// Forward-scattering recursion `β_{n+1} v_{n+1} = H⁺ v_n`, run until the
/// next coefficient falls below `tol`.
pub fn fsa(ladder: &LadderPair, v0: &StateVector, tol: f64) -> Result<FsaData> {
    check_normalized(v0, ladder.dim())?;
    let backward = ladder.hminus.matvec(v0)?.norm();
    if backward >= tol {
        return Err(Error::SchemeMismatch(backward));
    }
    let mut vectors = vec![v0.clone()];
    let mut betas = Vec::new();
    let mut errors_norm = Vec::new();
    let residual = loop {
        let n = vectors.len() - 1;
        let mut w = ladder.hplus.matvec(&vectors[n])?;
        let beta = w.norm();
        if beta < tol || vectors.len() == ladder.dim() {
            break beta;
        }
        w.scale_real(1.0 / beta);
        let mut back = ladder.hminus.matvec(&w)?;
        back.axpy((-beta).into(), &vectors[n]);
        errors_norm.push(back.norm());
        betas.push(beta);
        vectors.push(w);
    };
    let errors_sq: Vec<f64> = errors_norm.iter().map(|d| d * d).collect();
    let sites = ladder.config.as_ref().map(|c| c.sites);
    let delta_av = average_error(&errors_norm, ladder.scheme, sites);
    Ok(FsaData { closed_after: vectors.len(), betas, vectors, errors_norm, errors_sq, delta_av, residual })
}

/// Number of steps entering the average error: `L−3` for Z2, `L/2−2` for the
/// vacuum and all interior steps otherwise.
pub fn average_window(scheme: Scheme, sites: Option<usize>, available: usize) -> usize {
    let full = available.saturating_sub(2);
    match (scheme, sites) {
        (Scheme::Z2, Some(l)) => l.saturating_sub(3).min(full),
        (Scheme::Vacuum, Some(l)) => (l / 2).saturating_sub(2).min(full),
        _ => full,
    }
}

/// `δ_av = (Σ_{k=3}^{n*+2} δ_k) / n*`.
fn average_error(errors_norm: &[f64], scheme: Scheme, sites: Option<usize>) -> f64 {
    let n_star = average_window(scheme, sites, errors_norm.len());
    if n_star == 0 {
        return 0.0;
    }
    errors_norm[2..2 + n_star].iter().sum::<f64>() / n_star as f64
}

/// Rows `(n, δ_n, ε_n)` for every FSA step.
pub fn fsa_error_profile(ladder: &LadderPair, v0: &StateVector) -> Result<Vec<(usize, f64, f64)>> {
    let data = fsa(ladder, v0, FSA_TOL)?;
    Ok(data.errors_norm.iter().zip(&data.errors_sq).enumerate().map(|(i, (&d, &e))| (i + 1, d, e)).collect())
}

/// Symmetric tridiagonal matrix with diagonal `α` and off-diagonal `β`.
#[derive(Debug, Clone, PartialEq)]
pub struct TridiagonalHamiltonian {
    pub diagonal: Vec<f64>,
    pub offdiagonal: Vec<f64>,
}

impl TridiagonalHamiltonian {
    pub fn new(diagonal: Vec<f64>, offdiagonal: Vec<f64>) -> Result<Self> {
        if diagonal.is_empty() || offdiagonal.len() + 1 != diagonal.len() {
            return Err(Error::Input(format!(
                "tridiagonal needs n ≥ 1 diagonal and n−1 off-diagonal entries, got {} and {}",
                diagonal.len(),
                offdiagonal.len()
            )));
        }
        Ok(Self { diagonal, offdiagonal })
    }

    /// Zero diagonal with the given couplings.
    pub fn from_betas(betas: &[f64]) -> Self {
        Self { diagonal: vec![0.0; betas.len() + 1], offdiagonal: betas.to_vec() }
    }

    pub fn dimension(&self) -> usize {
        self.diagonal.len()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dimension();
        let mut m = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&self.diagonal));
        for (i, &b) in self.offdiagonal.iter().enumerate().take(n - 1) {
            m[(i, i + 1)] = b;
            m[(i + 1, i)] = b;
        }
        m
    }

    pub fn eigen(&self) -> SymmetricEigen<f64, nalgebra::Dyn> {
        SymmetricEigen::new(self.to_dense())
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self.eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// The same chain as a sparse operator on `dimension()` sites.
    pub fn to_sparse(&self) -> SparseHamiltonian {
        let mut t: Vec<_> = self.diagonal.iter().enumerate().map(|(i, &a)| (i, i, a)).collect();
        for (i, &b) in self.offdiagonal.iter().enumerate() {
            t.push((i, i + 1, b));
            t.push((i + 1, i, b));
        }
        SparseHamiltonian::from_triplets(self.dimension(), t).expect("chain indices in range")
    }
}

/// Anything carrying Lanczos-type coefficients.
pub trait Coefficients {
    fn alphas(&self) -> Vec<f64>;
    fn betas(&self) -> &[f64];
}

impl Coefficients for KrylovData {
    fn alphas(&self) -> Vec<f64> {
        self.alphas.clone()
    }
    fn betas(&self) -> &[f64] {
        &self.betas
    }
}

impl Coefficients for FsaData {
    fn alphas(&self) -> Vec<f64> {
        vec![0.0; self.closed_after]
    }
    fn betas(&self) -> &[f64] {
        &self.betas
    }
}

/// Krylov-space Hamiltonian of dimension `steps_run` (Lanczos) or `closed_after` (FSA).
pub fn tridiagonal(data: &impl Coefficients) -> TridiagonalHamiltonian {
    TridiagonalHamiltonian { diagonal: data.alphas(), offdiagonal: data.betas().to_vec() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{enumerate_basis, StateTag};
    use crate::operators::{free_paramagnet, ladder_split, ModelConfig, TermName};

    #[test]
    fn free_paramagnet_lanczos() {
        let lp = free_paramagnet(4).unwrap();
        let k = lanczos(&lp.full(), &lp.reference_state(), 16).unwrap();
        let want = [2.0, 6f64.sqrt(), 6f64.sqrt(), 2.0];
        assert_eq!(k.steps_run, 5);
        for (b, w) in k.betas.iter().zip(want) {
            assert!((b - w).abs() < 1e-12);
        }
        assert!(k.residual < 1e-12);
        assert!(k.alphas.iter().all(|a| a.abs() < 1e-12));
        let ev = tridiagonal(&k).eigenvalues();
        for (e, w) in ev.iter().zip([-4.0, -2.0, 0.0, 2.0, 4.0]) {
            assert!((e - w).abs() < 1e-10);
        }
    }

    #[test]
    fn lanczos_rejects_bad_input() {
        let lp = free_paramagnet(3).unwrap();
        let mut v = lp.reference_state();
        v.scale_real(2.0);
        assert!(matches!(lanczos(&lp.full(), &v, 4), Err(Error::Input(_))));
        assert!(lanczos(&lp.full(), &lp.reference_state(), 100).is_err());
    }

    #[test]
    fn lanczos_orthonormal() {
        let b = enumerate_basis(12).unwrap();
        let cfg = ModelConfig::new(12, StateTag::Z2);
        let lp = ladder_split(&b, &cfg, Scheme::Z2).unwrap();
        let k = lanczos(&lp.full(), &lp.reference_state(), 60).unwrap();
        assert!(k.orthonormality_defect() < 1e-10);
        assert!(k.alphas.iter().all(|a| a.abs() < 1e-10));
    }

    #[test]
    fn fsa_vacuum_l14() {
        let b = enumerate_basis(14).unwrap();
        let lp = ladder_split(&b, &ModelConfig::new(14, StateTag::Vacuum), Scheme::Vacuum).unwrap();
        let f = fsa(&lp, &lp.reference_state(), FSA_TOL).unwrap();
        assert!((f.beta(1).unwrap() - 14f64.sqrt()).abs() < 1e-12);
        assert!((f.beta(2).unwrap() - 22f64.sqrt()).abs() < 1e-12);
        assert!((f.beta(3).unwrap() - (270.0f64 / 11.0).sqrt()).abs() < 1e-12);
        assert_eq!(f.closed_after, 8);
        assert!(f.residual < 1e-8);
        assert!((f.epsilon(3).unwrap() - 54.0 / 990.0).abs() < 1e-12);
        assert!(f.delta(1).unwrap() < 1e-12 && f.delta(2).unwrap() < 1e-12);
        assert!((f.epsilon(7).unwrap() - 5.0).abs() < 1e-9);
    }

    #[test]
    fn fsa_z2_closure_and_errors() {
        let b = enumerate_basis(6).unwrap();
        let lp = ladder_split(&b, &ModelConfig::new(6, StateTag::Z2), Scheme::Z2).unwrap();
        let prof = fsa_error_profile(&lp, &lp.reference_state()).unwrap();
        assert!(prof[2].1 < 1e-12);
        let b = enumerate_basis(10).unwrap();
        let lp = ladder_split(&b, &ModelConfig::new(10, StateTag::Z2), Scheme::Z2).unwrap();
        let f = fsa(&lp, &lp.reference_state(), FSA_TOL).unwrap();
        assert_eq!(f.closed_after, 11);
        assert!(f.delta(10).unwrap() < 1e-12);
        assert!((3..10).all(|n| f.delta(n).unwrap() > 1e-6));
        let avg: f64 = (3..=9).map(|n| f.delta(n).unwrap()).sum::<f64>() / 7.0;
        assert!((f.delta_av - avg).abs() < 1e-14);
        assert!(f.errors_sq.iter().zip(&f.errors_norm).all(|(e, d)| (e - d * d).abs() < 1e-12));
    }

    #[test]
    fn fsa_scheme_mismatch() {
        let b = enumerate_basis(8).unwrap();
        let lp = ladder_split(&b, &ModelConfig::new(8, StateTag::Z2), Scheme::Z2).unwrap();
        let z2p = b.special_state(StateTag::Z2Prime).unwrap();
        assert!(matches!(fsa(&lp, &z2p, FSA_TOL), Err(Error::SchemeMismatch(_))));
    }

    #[test]
    fn fsa_and_lanczos_agree_on_first_steps() {
        let b = enumerate_basis(12).unwrap();
        let cfg = ModelConfig::new(12, StateTag::Z2).with_term(TermName::Z2Pert, 0.108);
        let lp = ladder_split(&b, &cfg, Scheme::Z2).unwrap();
        let f = fsa(&lp, &lp.reference_state(), FSA_TOL).unwrap();
        let k = lanczos(&lp.full(), &lp.reference_state(), 13).unwrap();
        for n in 1..=3 {
            assert!((f.beta(n).unwrap() - k.beta(n).unwrap()).abs() < 1e-10);
        }
    }

    #[test]
    fn tridiagonal_shapes() {
        let t = TridiagonalHamiltonian::from_betas(&[2.0]);
        let d = t.to_dense();
        assert_eq!((d[(0, 0)], d[(0, 1)], d[(1, 0)], d[(1, 1)]), (0.0, 2.0, 2.0, 0.0));
        assert!(TridiagonalHamiltonian::new(vec![], vec![]).is_err());
        assert_eq!(t.to_sparse().to_dense(), d);
    }
}
