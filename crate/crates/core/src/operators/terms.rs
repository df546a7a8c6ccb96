//! Matrix builders for the PXP Hamiltonian and its perturbations.
//!
//! Every term is a sum of blockade-legal spin flips weighted by diagonal
//! projector strings, so each builder only decides which flips occur and with
//! which coefficient.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::ConstrainedBasis;
use crate::operators::SparseHamiltonian;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum TermName {
    Pxp,
    Z2Pert,
    Z3Pert1,
    Z3Pert2,
    Z3Pert3,
    /// Alternating-window term over `2k+1` sites, stored as the window width.
    Sigma(u8),
}

impl TermName {
    pub const SIGMA_WIDTHS: [u8; 6] = [3, 5, 7, 9, 11, 13];

    pub fn sigma(width: usize) -> Result<Self> {
        match u8::try_from(width) {
            Ok(w) if Self::SIGMA_WIDTHS.contains(&w) => Ok(TermName::Sigma(w)),
            _ => Err(Error::Configuration(format!("sigma width must be odd in 3..=13, got {width}"))),
        }
    }

    /// Checks the term can be built on a chain of `sites` sites.
    pub fn check_applicable(self, sites: usize) -> Result<()> {
        match self {
            TermName::Z3Pert1 | TermName::Z3Pert2 | TermName::Z3Pert3 if !sites.is_multiple_of(3) || sites < 6 => {
                Err(Error::Configuration(format!("{self} needs L divisible by 3 and at least 6, got {sites}")))
            }
            TermName::Sigma(w) if sites < w as usize + 1 => {
                Err(Error::Configuration(format!("{self} needs L >= {}, got {sites}", w + 1)))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for TermName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TermName::Pxp => f.write_str("pxp"),
            TermName::Z2Pert => f.write_str("z2pert"),
            TermName::Z3Pert1 => f.write_str("z3pert1"),
            TermName::Z3Pert2 => f.write_str("z3pert2"),
            TermName::Z3Pert3 => f.write_str("z3pert3"),
            TermName::Sigma(w) => write!(f, "sigma{w}"),
        }
    }
}

impl FromStr for TermName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pxp" => Ok(TermName::Pxp),
            "z2pert" => Ok(TermName::Z2Pert),
            "z3pert1" => Ok(TermName::Z3Pert1),
            "z3pert2" => Ok(TermName::Z3Pert2),
            "z3pert3" => Ok(TermName::Z3Pert3),
            other => other
                .strip_prefix("sigma")
                .and_then(|w| w.parse::<usize>().ok())
                .map(TermName::sigma)
                .unwrap_or_else(|| Err(Error::Configuration(format!("unknown term `{other}`")))),
        }
    }
}

impl TryFrom<String> for TermName {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<TermName> for String {
    fn from(t: TermName) -> String {
        t.to_string()
    }
}

#[inline]
fn down(bits: u32, site: i64, sites: usize) -> bool {
    (bits >> site.rem_euclid(sites as i64)) & 1 == 0
}

/// Sum over sites of `coeff(state, j) · P_{j−1} σˣ_j P_{j+1}`.
///
/// `coeff` must not depend on site `j` itself so the result is symmetric.
pub(crate) fn flip_operator<F>(basis: &ConstrainedBasis, coeff: F) -> SparseHamiltonian
where
    F: Fn(u32, usize) -> f64,
{
    let l = basis.sites();
    let mut triplets = Vec::new();
    for (a, &s) in basis.states().iter().enumerate() {
        for j in 0..l {
            let ji = j as i64;
            if !(down(s, ji - 1, l) && down(s, ji + 1, l)) {
                continue;
            }
            let c = coeff(s, j);
            if c != 0.0 {
                let t = s ^ (1 << j);
                let b = basis.index_of(t).expect("legal flip stays in the constrained space");
                triplets.push((b, a, c));
            }
        }
    }
    finish(basis.dim(), triplets)
}

fn finish(dim: usize, triplets: Vec<(usize, usize, f64)>) -> SparseHamiltonian {
    SparseHamiltonian::from_triplets(dim, triplets)
        .expect("indices come from the basis")
        .into_symmetric()
        .expect("term builders produce symmetric operators")
}

pub fn build_pxp(basis: &ConstrainedBasis) -> SparseHamiltonian {
    flip_operator(basis, |_, _| 1.0)
}

/// Unit-strength operator for a named term.
pub fn build_term(basis: &ConstrainedBasis, name: TermName) -> Result<SparseHamiltonian> {
    let l = basis.sites();
    name.check_applicable(l)?;
    let d = move |s: u32, site: i64| if down(s, site, l) { 1.0 } else { 0.0 };
    Ok(match name {
        TermName::Pxp => build_pxp(basis),
        TermName::Z2Pert => flip_operator(basis, |s, j| {
            let j = j as i64;
            d(s, j - 2) + d(s, j + 2)
        }),
        TermName::Z3Pert1 => flip_operator(basis, |s, j| {
            let ji = j as i64;
            match j % 3 {
                0 => d(s, ji - 2) + d(s, ji + 2),
                1 => d(s, ji - 2),
                _ => d(s, ji + 2),
            }
        }),
        TermName::Z3Pert2 => flip_operator(basis, |s, j| {
            let ji = j as i64;
            match j % 3 {
                0 => 0.0,
                1 => d(s, ji + 2),
                _ => d(s, ji - 2),
            }
        }),
        TermName::Z3Pert3 => triple_flip(basis),
        TermName::Sigma(w) => {
            let r = sigma_lowering(basis, w as usize)?;
            r.add(&r.transpose())?.into_symmetric()?
        }
    })
}

/// `P σˣσˣσˣ P` on windows starting at sites `i ≡ 0, 1 (mod 3)`.
///
/// Inside the constrained space with both flanks down only `010 ↔ 101` survives.
fn triple_flip(basis: &ConstrainedBasis) -> SparseHamiltonian {
    let l = basis.sites();
    let windows: Vec<(usize, u32)> = (0..l)
        .filter(|i| i % 3 != 2)
        .map(|i| (i, (0..3).fold(0u32, |m, k| m | 1 << ((i + k) % l))))
        .collect();
    let mut triplets = Vec::new();
    for (a, &s) in basis.states().iter().enumerate() {
        for &(i, mask) in &windows {
            let ii = i as i64;
            if !(down(s, ii - 1, l) && down(s, ii + 3, l)) {
                continue;
            }
            if let Some(b) = basis.index_of(s ^ mask) {
                triplets.push((b, a, 1.0));
            }
        }
    }
    finish(basis.dim(), triplets)
}

/// Popcount-lowering map `R` of the width-`w` window term: an alternating
/// `1010…1` window with both flanks down is replaced by its complement.
/// At `L = w + 1` the two flanks are the same site.
pub fn sigma_lowering(basis: &ConstrainedBasis, width: usize) -> Result<SparseHamiltonian> {
    let name = TermName::sigma(width)?;
    let l = basis.sites();
    name.check_applicable(l)?;
    // (window mask, window+flank mask, required pattern on that support)
    let windows: Vec<(u32, u32, u32)> = (0..l)
        .map(|i| {
            let mut window = 0u32;
            let mut pattern = 0u32;
            for k in 0..width {
                let bit = 1u32 << ((i + k) % l);
                window |= bit;
                if k % 2 == 0 {
                    pattern |= bit;
                }
            }
            let flanks = 1u32 << ((i + l - 1) % l) | 1u32 << ((i + width) % l);
            (window, window | flanks, pattern)
        })
        .collect();
    let mut triplets = Vec::new();
    for (a, &s) in basis.states().iter().enumerate() {
        for &(window, support, pattern) in &windows {
            if s & support == pattern {
                let b = basis.index_of(s ^ window).expect("complementary window is constrained");
                triplets.push((b, a, 1.0));
            }
        }
    }
    SparseHamiltonian::from_triplets(basis.dim(), triplets)
}
