//! Closed-form coefficients and errors, q-numbers and su(2)_q fits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn even_at_least(sites: u64, min: u64) -> Result<f64> {
    if sites < min || !sites.is_multiple_of(2) {
        return Err(Error::Domain(format!("L must be even and at least {min}, got {sites}")));
    }
    Ok(sites as f64)
}

/// Bare vacuum-scheme FSA coefficients `β_1, β_2, β_3`.
pub fn beta_vacuum(n: usize, sites: u64) -> Result<f64> {
    let l = even_at_least(sites, 6)?;
    match n {
        1 => Ok(l.sqrt()),
        2 => Ok((2.0 * (l - 3.0)).sqrt()),
        3 => Ok((3.0 * (l - 4.0) * (l - 5.0) / (l - 3.0)).sqrt()),
        _ => Err(Error::Unsupported(format!("no closed form for vacuum β_{n}"))),
    }
}

/// Vacuum-scheme `β_2, β_3` with a width-3 window term of strength `h`.
pub fn beta_vacuum_perturbed(n: usize, sites: u64, h: f64) -> Result<f64> {
    let l = even_at_least(sites, 8)?;
    let b2sq = h * h + 4.0 * h + 2.0 * l - 6.0;
    if b2sq <= 0.0 {
        return Err(Error::Domain(format!("β₂² = {b2sq} is not positive")));
    }
    match n {
        2 => Ok(b2sq.sqrt()),
        3 => {
            let num = 9.0 * (l - 3.0) * h * h + 36.0 * (l - 5.0) * h + 6.0 * (l - 4.0) * (l - 5.0);
            if num < 0.0 {
                return Err(Error::Domain(format!("β₃ numerator {num} is negative")));
            }
            Ok(num.sqrt() / b2sq.sqrt())
        }
        _ => Err(Error::Unsupported(format!("no closed form for perturbed vacuum β_{n}"))),
    }
}

/// Squared third-step vacuum error `f(h, L) / g(h, L)`.
pub fn error3_vacuum(h: f64, sites: u64) -> Result<f64> {
    let l = even_at_least(sites, 8)?;
    let f = (6.0 * l + 6.0) * h.powi(6)
        + (72.0 * l - 168.0) * h.powi(5)
        + (300.0 * l - 1368.0) * h.powi(4)
        + (288.0 * l - 1608.0) * h.powi(3)
        + (30.0 * l - 438.0) * h.powi(2)
        + (-120.0 * l + 696.0) * h
        + (24.0 * l - 120.0);
    let g = (3.0 * l - 9.0) * h.powi(4)
        + (24.0 * l - 96.0) * h.powi(3)
        + (8.0 * l * l - 6.0 * l - 146.0) * h.powi(2)
        + (32.0 * l * l - 264.0 * l + 520.0) * h
        + 4.0 * l.powi(3)
        - 48.0 * l * l
        + 188.0 * l
        - 240.0;
    if !(g > 0.0) || !f.is_finite() {
        return Err(Error::Domain(format!("denominator g({h}, {sites}) = {g} is not positive")));
    }
    Ok(f / g)
}

/// Bare vacuum `ε_3 = 6(L−5)/(L³−12L²+47L−60)`.
pub fn error3_vacuum_bare(sites: u64) -> Result<f64> {
    let l = even_at_least(sites, 8)?;
    Ok(6.0 * (l - 5.0) / (l.powi(3) - 12.0 * l * l + 47.0 * l - 60.0))
}

/// Z2-scheme `ε_3 = 8(L−6)/((L−2)(3L²−18L+32))`.
pub fn delta3_z2(sites: u64) -> Result<f64> {
    let l = even_at_least(sites, 6)?;
    Ok(8.0 * (l - 6.0) / ((l - 2.0) * (3.0 * l * l - 18.0 * l + 32.0)))
}

/// Z2-scheme `β_3 = √(3(L−4)/2 + 4/(L−2))`.
pub fn beta3_z2(sites: u64) -> Result<f64> {
    let l = even_at_least(sites, 6)?;
    Ok((1.5 * (l - 4.0) + 4.0 / (l - 2.0)).sqrt())
}

/// Spin-`N/2` ladder norm `√(n(N−n+1))`.
pub fn su2_beta(n: usize, big_n: usize) -> Result<f64> {
    if n == 0 || n > big_n {
        return Err(Error::Domain(format!("need 1 ≤ n ≤ N, got n={n}, N={big_n}")));
    }
    Ok(((n * (big_n - n + 1)) as f64).sqrt())
}

/// `[x]_q = (qˣ − q⁻ˣ)/(q − q⁻¹)`, with the `q → 1` limit taken by series.
pub fn qnumber(x: f64, q: f64) -> f64 {
    if (q - 1.0).abs() < 1e-9 {
        let eta = q.ln();
        return x * (1.0 + (x * x - 1.0) * eta * eta / 6.0);
    }
    (q.powf(x) - q.powf(-x)) / (q - 1.0 / q)
}

/// Shape `√([n]_q [2j−n+1]_q)` for `n = 1 … 2j`.
pub fn q_ladder(two_j: usize, q: f64) -> Vec<f64> {
    (1..=two_j).map(|n| (qnumber(n as f64, q) * qnumber((two_j - n + 1) as f64, q)).sqrt()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QFit {
    pub q: f64,
    pub alpha: f64,
    /// Spin label with `2j` equal to the number of fitted coefficients.
    pub j: f64,
    /// Root-mean-square deviation of the fit.
    pub residual: f64,
}

pub const Q_RANGE: (f64, f64) = (0.3, 1.5);
const Q_GRID: usize = 1200;
const Q_XTOL: f64 = 1e-10;

/// Least-squares scale and summed squared residual at fixed `q`.
fn fit_at(betas: &[f64], q: f64) -> (f64, f64) {
    let shape = q_ladder(betas.len(), q);
    let mm: f64 = shape.iter().map(|m| m * m).sum();
    let bm: f64 = shape.iter().zip(betas).map(|(m, b)| m * b).sum();
    let alpha = bm / mm;
    let ss = shape.iter().zip(betas).map(|(m, b)| (b - alpha * m).powi(2)).sum();
    (alpha, ss)
}

/// Fits `β_n ≈ α √([n]_q [2j−n+1]_q)` over `q ∈ (0.3, 1.5]`.
///
/// `[x]_q` is invariant under `q → 1/q`, so the reported `q` is the one in `(0, 1]`.
pub fn fit_q(betas: &[f64]) -> Result<QFit> {
    if betas.iter().any(|b| !b.is_finite()) {
        return Err(Error::Input("non-finite coefficient".into()));
    }
    if betas.iter().filter(|b| **b != 0.0).count() < 3 {
        return Err(Error::Fit("need at least three nonzero coefficients".into()));
    }
    let (lo, hi) = Q_RANGE;
    let cost = |q: f64| fit_at(betas, q).1;
    let step = (hi - lo) / Q_GRID as f64;
    let grid: Vec<f64> = (1..=Q_GRID).map(|i| lo + step * i as f64).collect();
    let best = grid
        .iter()
        .copied()
        .min_by(|a, b| cost(*a).total_cmp(&cost(*b)))
        .expect("grid is nonempty");
    let q = crate::optimize::golden_section(|q| -cost(q), (best - step).max(lo), (best + step).min(hi), Q_XTOL).0;
    let (alpha, ss) = fit_at(betas, q);
    Ok(QFit {
        q: if q > 1.0 { 1.0 / q } else { q },
        alpha,
        j: betas.len() as f64 / 2.0,
        residual: (ss / betas.len() as f64).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vacuum_betas() {
        assert!((beta_vacuum(1, 14).unwrap() - 3.741657386773941).abs() < 1e-12);
        assert!((beta_vacuum(2, 14).unwrap() - 4.69041575982343).abs() < 1e-12);
        assert!((beta_vacuum(3, 14).unwrap() - (270.0f64 / 11.0).sqrt()).abs() < 1e-12);
        assert!(matches!(beta_vacuum(4, 14), Err(Error::Unsupported(_))));
        assert!(beta_vacuum(1, 7).is_err());
    }

    #[test]
    fn perturbed_betas_reduce_to_bare() {
        assert!((beta_vacuum_perturbed(2, 14, 0.0).unwrap() - 22f64.sqrt()).abs() < 1e-12);
        assert!((beta_vacuum_perturbed(3, 14, 0.0).unwrap() - (270.0f64 / 11.0).sqrt()).abs() < 1e-12);
        assert!((beta_vacuum_perturbed(2, 14, 0.31).unwrap() - 23.3361f64.sqrt()).abs() < 1e-12);
        assert!(matches!(beta_vacuum_perturbed(2, 9, 0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn error3_values() {
        assert!((error3_vacuum(0.0, 14).unwrap() - 54.0 / 990.0).abs() < 1e-14);
        for l in (8..=40).step_by(2) {
            let bare = error3_vacuum_bare(l).unwrap();
            assert!((error3_vacuum(0.0, l).unwrap() - bare).abs() < 1e-14 * bare.max(1.0));
        }
        assert!(error3_vacuum(0.3, 1_000_000).unwrap() < 1e-5);
    }

    #[test]
    fn error3_has_interior_minimum() {
        for l in (8..=30).step_by(2) {
            let vals: Vec<f64> = (0..=1000).map(|i| error3_vacuum(i as f64 / 1000.0, l).unwrap()).collect();
            let (imin, _) = vals.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap();
            assert!(imin > 0 && imin < 1000, "L={l}");
        }
    }

    #[test]
    fn z2_closed_forms() {
        assert_eq!(delta3_z2(6).unwrap(), 0.0);
        assert!((delta3_z2(8).unwrap() - 16.0 / 480.0).abs() < 1e-15);
        assert!((beta3_z2(8).unwrap() - (6.0f64 + 2.0 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(beta3_z2(6).unwrap(), 2.0);
        let big = 1_000_000u64;
        assert!((delta3_z2(big).unwrap() * (big as f64).powi(2) * 3.0 / 8.0 - 1.0).abs() < 1e-4);
    }

    #[test]
    fn su2_values() {
        assert_eq!(su2_beta(1, 4).unwrap(), 2.0);
        assert_eq!(su2_beta(2, 4).unwrap(), 6f64.sqrt());
        for n in 1..=9 {
            assert_eq!(su2_beta(n, 9).unwrap(), su2_beta(10 - n, 9).unwrap());
        }
        assert!(su2_beta(0, 4).is_err());
    }

    #[test]
    fn qnumbers() {
        assert!((qnumber(5.0, 1.0) - 5.0).abs() < 1e-15);
        assert!((qnumber(5.0, 1.0 + 1e-11) - 5.0).abs() < 1e-9);
        assert!((qnumber(2.0, 2.0) - 2.5).abs() < 1e-15);
        for q in [0.3, 0.8, 1.2] {
            assert!((qnumber(3.7, q) - qnumber(3.7, 1.0 / q)).abs() < 1e-12);
        }
        // continuity across the series switch
        assert!((qnumber(7.0, 1.0 + 2e-9) - qnumber(7.0, 1.0 + 5e-10)).abs() < 1e-6);
    }

    #[test]
    fn fit_recovers_su2() {
        let betas: Vec<f64> = (1..=10).map(|n| su2_beta(n, 10).unwrap()).collect();
        let fit = fit_q(&betas).unwrap();
        assert!((fit.q - 1.0).abs() < 1e-3, "{fit:?}");
        assert!(fit.residual < 1e-8);
        assert!((fit.alpha - 1.0).abs() < 1e-6);
        assert_eq!(fit.j, 5.0);
    }

    #[test]
    fn fit_recovers_generated_q() {
        for q in [0.5, 0.7, 0.85, 0.96, 1.0] {
            let betas: Vec<f64> = q_ladder(18, q).iter().map(|m| 1.3 * m).collect();
            let fit = fit_q(&betas).unwrap();
            assert!(fit.residual < 1e-8, "q={q} {fit:?}");
            assert!((fit.q - q).abs() < 1e-4, "q={q} {fit:?}");
        }
    }

    #[test]
    fn fit_rejects_degenerate_input() {
        assert!(matches!(fit_q(&[0.0; 6]), Err(Error::Fit(_))));
        assert!(fit_q(&[1.0, 2.0]).is_err());
    }
}
