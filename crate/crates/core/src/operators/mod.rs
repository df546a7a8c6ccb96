//! PXP Hamiltonian, perturbation terms and ladder decompositions `H = H⁺ + H⁻`.
//!
//! Ladder splits grade every matrix element by the Hamming distance of its
//! configurations from the scheme's reference state. Entries that move away
//! from the reference form `H⁺`, the rest form `H⁻ = (H⁺)ᵀ`. Every supported
//! term changes that distance by an odd amount, so the split is unambiguous.

mod sparse;
mod terms;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use sparse::SparseHamiltonian;
pub use terms::{build_pxp, build_term, sigma_lowering, TermName};

use crate::error::{Error, Result};
use crate::hilbert::{enumerate_basis, ConstrainedBasis, StateTag, StateVector, MAX_SITES, MIN_SITES};

/// System size, initial state and perturbation strengths. The PXP term always
/// enters with unit strength.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(rename = "L")]
    pub sites: usize,
    pub initial: StateTag,
    #[serde(default)]
    pub terms: BTreeMap<TermName, f64>,
}

impl ModelConfig {
    pub fn new(sites: usize, initial: StateTag) -> Self {
        Self { sites, initial, terms: BTreeMap::new() }
    }

    pub fn with_term(mut self, name: TermName, strength: f64) -> Self {
        self.terms.insert(name, strength);
        self
    }

    /// `H_PXP − V₁` from the Z3 state.
    pub fn z3exact(sites: usize) -> Self {
        Self::new(sites, StateTag::Z3).with_term(TermName::Z3Pert1, -1.0)
    }

    pub fn strength(&self, name: TermName) -> f64 {
        match name {
            TermName::Pxp => 1.0,
            _ => self.terms.get(&name).copied().unwrap_or(0.0),
        }
    }

    /// Non-PXP terms with nonzero strength.
    pub fn active_terms(&self) -> impl Iterator<Item = (TermName, f64)> + '_ {
        self.terms.iter().filter(|(n, s)| **n != TermName::Pxp && **s != 0.0).map(|(n, s)| (*n, *s))
    }

    pub fn validate(&self) -> Result<()> {
        if !(MIN_SITES..=MAX_SITES).contains(&self.sites) {
            return Err(Error::Size(self.sites, MIN_SITES, MAX_SITES));
        }
        for (&name, &s) in &self.terms {
            if !s.is_finite() {
                return Err(Error::Configuration(format!("strength of {name} is not finite")));
            }
            if name == TermName::Pxp && s != 1.0 {
                return Err(Error::Configuration(format!("pxp strength is fixed to 1, got {s}")));
            }
            if s != 0.0 {
                name.check_applicable(self.sites)?;
            }
        }
        Ok(())
    }
}

/// `H = H_PXP + Σ_t λ_t · term_t`.
pub fn assemble(basis: &ConstrainedBasis, config: &ModelConfig) -> Result<SparseHamiltonian> {
    config.validate()?;
    check_sites(basis, config)?;
    let mut h = build_pxp(basis);
    for (name, strength) in config.active_terms() {
        h = h.add_scaled(&build_term(basis, name)?, strength)?;
    }
    Ok(h)
}

fn check_sites(basis: &ConstrainedBasis, config: &ModelConfig) -> Result<()> {
    if basis.sites() != config.sites {
        return Err(Error::Configuration(format!(
            "basis has L={} but config has L={}",
            basis.sites(),
            config.sites
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Z2,
    Z3,
    Vacuum,
    Z3Exact,
}

impl Scheme {
    /// State annihilated by `H⁻`.
    pub fn initial_tag(self) -> StateTag {
        match self {
            Scheme::Z2 => StateTag::Z2,
            Scheme::Z3 | Scheme::Z3Exact => StateTag::Z3,
            Scheme::Vacuum => StateTag::Vacuum,
        }
    }

    /// Natural scheme for an initial state.
    pub fn for_initial(tag: StateTag) -> Result<Self> {
        match tag {
            StateTag::Z2 => Ok(Scheme::Z2),
            StateTag::Z3 => Ok(Scheme::Z3),
            StateTag::Vacuum => Ok(Scheme::Vacuum),
            StateTag::Z2Prime => Err(Error::Configuration("no ladder scheme starts from z2prime".into())),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Z2 => "z2",
            Scheme::Z3 => "z3",
            Scheme::Vacuum => "vacuum",
            Scheme::Z3Exact => "z3exact",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "z2" => Ok(Scheme::Z2),
            "z3" => Ok(Scheme::Z3),
            "vacuum" => Ok(Scheme::Vacuum),
            "z3exact" => Ok(Scheme::Z3Exact),
            other => Err(Error::Configuration(format!("unknown scheme `{other}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LadderPair {
    pub hplus: SparseHamiltonian,
    pub hminus: SparseHamiltonian,
    pub scheme: Scheme,
    /// `None` for controls built outside the constrained space.
    pub config: Option<ModelConfig>,
    /// Basis ordinal of the reference state annihilated by `H⁻`.
    pub reference: usize,
}

impl LadderPair {
    pub fn dim(&self) -> usize {
        self.hplus.dim()
    }

    pub fn full(&self) -> SparseHamiltonian {
        self.hplus.add(&self.hminus).expect("ladder halves share a dimension").into_symmetric().expect("H⁺ + (H⁺)ᵀ")
    }

    pub fn reference_state(&self) -> StateVector {
        StateVector::basis_state(self.dim(), self.reference)
    }
}

/// Splits `h` by whether an entry raises the Hamming distance from `reference`.
fn graded_split(
    h: &SparseHamiltonian,
    states: &[u32],
    reference: u32,
    scheme: Scheme,
) -> Result<(SparseHamiltonian, SparseHamiltonian)> {
    let grade: Vec<u32> = states.iter().map(|s| (s ^ reference).count_ones()).collect();
    let mut up = Vec::new();
    for (r, c, v) in h.entries() {
        match grade[r].cmp(&grade[c]) {
            std::cmp::Ordering::Greater => up.push((r, c, v)),
            std::cmp::Ordering::Less => {}
            std::cmp::Ordering::Equal => {
                return Err(Error::UnsupportedSplit {
                    term: format!("entry ({r}, {c}) at constant distance"),
                    scheme: scheme.to_string(),
                })
            }
        }
    }
    let hplus = SparseHamiltonian::from_triplets(h.dim(), up)?;
    let hminus = hplus.transpose();
    Ok((hplus, hminus))
}

pub fn ladder_split(basis: &ConstrainedBasis, config: &ModelConfig, scheme: Scheme) -> Result<LadderPair> {
    config.validate()?;
    check_sites(basis, config)?;
    if config.initial != scheme.initial_tag() {
        return Err(Error::Configuration(format!(
            "{scheme} scheme starts from {}, config starts from {}",
            scheme.initial_tag(),
            config.initial
        )));
    }
    match scheme {
        Scheme::Vacuum => {
            if let Some((name, _)) = config.active_terms().find(|(n, _)| !matches!(n, TermName::Sigma(_))) {
                return Err(Error::UnsupportedSplit { term: name.to_string(), scheme: scheme.to_string() });
            }
        }
        Scheme::Z3Exact => {
            let terms: Vec<_> = config.active_terms().collect();
            if terms != [(TermName::Z3Pert1, -1.0)] {
                return Err(Error::Configuration(
                    "z3exact scheme requires exactly the term z3pert1 = -1".into(),
                ));
            }
        }
        Scheme::Z2 | Scheme::Z3 => {}
    }
    let reference = basis.special_config(scheme.initial_tag())?;
    let h = assemble(basis, config)?;
    let (hplus, hminus) = graded_split(&h, basis.states(), reference.bits(), scheme)?;
    Ok(LadderPair {
        hplus,
        hminus,
        scheme,
        config: Some(config.clone()),
        reference: basis.index(reference).expect("reference state is in the basis"),
    })
}

/// Largest entry of `[H_z, H^±] ∓ H^±` with `H_z = ½[H⁺, H⁻]`.
pub fn algebra_defect(ladder: &LadderPair) -> Result<f64> {
    let hz = ladder.hplus.commutator(&ladder.hminus)?.scale(0.5);
    let plus = hz.commutator(&ladder.hplus)?.sub(&ladder.hplus)?.max_abs();
    let minus = hz.commutator(&ladder.hminus)?.add(&ladder.hminus)?.max_abs();
    Ok(plus.max(minus))
}

/// Unconstrained `Σ σˣ` on all `2^L` configurations, split into `Σ σ⁺` and `Σ σ⁻`.
/// The reference state is all-down.
pub fn free_paramagnet(sites: usize) -> Result<LadderPair> {
    const MAX_FREE: usize = 20;
    if !(1..=MAX_FREE).contains(&sites) {
        return Err(Error::Size(sites, 1, MAX_FREE));
    }
    let dim = 1usize << sites;
    let up = (0..dim)
        .flat_map(|s| (0..sites).filter(move |j| s >> j & 1 == 0).map(move |j| (s | 1 << j, s, 1.0)))
        .collect();
    let hplus = SparseHamiltonian::from_triplets(dim, up)?;
    let hminus = hplus.transpose();
    Ok(LadderPair { hplus, hminus, scheme: Scheme::Vacuum, config: None, reference: 0 })
}

/// Raising operator for `H_PXP − V₁` exactly as displayed in the source:
/// `Σ_j [(𝕀 − P_{3j−2} − P_{3j+2}) σ̃⁻_{3j} + (𝕀 − P_{3j−1}) σ̃⁺_{3j+1} + (𝕀 − P_{3j−4}) σ̃⁺_{3j+2}]`.
///
/// Kept for comparison only: its last projector sits on the wrong side, so
/// `R + Rᵀ ≠ H_PXP − V₁`. [`ladder_split`] with [`Scheme::Z3Exact`] uses the
/// consistent form with `P_{3j+4}`.
pub fn z3exact_literal_raising(basis: &ConstrainedBasis) -> Result<SparseHamiltonian> {
    let l = basis.sites();
    TermName::Z3Pert1.check_applicable(l)?;
    let li = l as i64;
    let d = |s: u32, site: i64| if (s >> site.rem_euclid(li)) & 1 == 0 { 1.0 } else { 0.0 };
    let mut triplets = Vec::new();
    for (a, &s) in basis.states().iter().enumerate() {
        for j in 0..l {
            let ji = j as i64;
            if d(s, ji - 1) == 0.0 || d(s, ji + 1) == 0.0 {
                continue;
            }
            let raising = (s >> j) & 1 == 0;
            let c = match j % 3 {
                0 if !raising => 1.0 - d(s, ji - 2) - d(s, ji + 2),
                1 if raising => 1.0 - d(s, ji - 2),
                // site 3j−4 seen from the flipped site 3j+2
                2 if raising => 1.0 - d(s, ji - 6),
                _ => 0.0,
            };
            if c != 0.0 {
                let b = basis.index_of(s ^ (1 << j)).expect("legal flip stays in the constrained space");
                triplets.push((b, a, c));
            }
        }
    }
    SparseHamiltonian::from_triplets(basis.dim(), triplets)
}

/// Builds the basis, the ladder pair and the reference state in one go.
pub fn ladder_for(config: &ModelConfig, scheme: Scheme) -> Result<(ConstrainedBasis, LadderPair)> {
    let basis = enumerate_basis(config.sites)?;
    let ladder = ladder_split(&basis, config, scheme)?;
    Ok((basis, ladder))
}

#[cfg(test)]
mod tests;
