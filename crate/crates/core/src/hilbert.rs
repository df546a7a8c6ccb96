//! Blockade-constrained Hilbert space on a periodic chain.
//!
//! A configuration is stored as an integer with site 0 in the least-significant
//! bit; a set bit is an excited (up) spin. The constraint forbids two up spins
//! on neighbouring sites, including the pair (L-1, 0).

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_SITES: usize = 3;
pub const MAX_SITES: usize = 28;

/// Tolerance on `| ‖v‖ − 1 |` for vectors that must be normalized.
pub const NORM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SpinConfiguration {
    bits: u32,
    sites: u8,
}

impl SpinConfiguration {
    /// Builds a configuration, rejecting ones that violate the cyclic constraint.
    pub fn new(bits: u32, sites: usize) -> Result<Self> {
        if !(1..=MAX_SITES).contains(&sites) {
            return Err(Error::Size(sites, 1, MAX_SITES));
        }
        if bits >> sites != 0 {
            return Err(Error::Configuration(format!(
                "bit pattern {bits:#b} does not fit in {sites} sites"
            )));
        }
        if !is_valid(bits, sites) {
            return Err(Error::Configuration(format!(
                "bit pattern {bits:#b} has adjacent up spins on a ring of {sites}"
            )));
        }
        Ok(Self { bits, sites: sites as u8 })
    }

    pub(crate) fn from_raw(bits: u32, sites: usize) -> Self {
        debug_assert!(is_valid(bits, sites));
        Self { bits, sites: sites as u8 }
    }

    pub fn bits(self) -> u32 {
        self.bits
    }

    pub fn sites(self) -> usize {
        self.sites as usize
    }

    pub fn is_up(self, site: usize) -> bool {
        (self.bits >> (site % self.sites())) & 1 == 1
    }

    pub fn popcount(self) -> usize {
        self.bits.count_ones() as usize
    }
}

impl fmt::Display for SpinConfiguration {
    /// Most-significant site first, so `0101` is the integer 5.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for site in (0..self.sites()).rev() {
            f.write_str(if self.is_up(site) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

/// Cyclic no-adjacent-ones test.
pub fn is_valid(bits: u32, sites: usize) -> bool {
    let rotated = rotate(bits, sites, 1);
    bits & rotated == 0
}

/// Moves the spin on site `j` to site `j + shift (mod L)`.
pub(crate) fn rotate(bits: u32, sites: usize, shift: i64) -> u32 {
    let s = shift.rem_euclid(sites as i64) as u32;
    if s == 0 {
        return bits;
    }
    let mask = mask(sites);
    ((bits << s) | (bits >> (sites as u32 - s))) & mask
}

pub(crate) fn mask(sites: usize) -> u32 {
    if sites == 32 {
        u32::MAX
    } else {
        (1u32 << sites) - 1
    }
}

pub fn translate(config: SpinConfiguration, shift: i64) -> SpinConfiguration {
    SpinConfiguration::from_raw(rotate(config.bits, config.sites(), shift), config.sites())
}

pub fn hamming_from_vacuum(config: SpinConfiguration) -> usize {
    config.popcount()
}

/// Ordered list of all valid configurations for a given chain length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstrainedBasis {
    sites: usize,
    states: Vec<u32>,
}

impl ConstrainedBasis {
    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[u32] {
        &self.states
    }

    pub fn config(&self, index: usize) -> SpinConfiguration {
        SpinConfiguration::from_raw(self.states[index], self.sites)
    }

    /// Ordinal of a bit pattern, or `None` if it is not in the basis.
    pub fn index_of(&self, bits: u32) -> Option<usize> {
        self.states.binary_search(&bits).ok()
    }

    pub fn index(&self, config: SpinConfiguration) -> Option<usize> {
        if config.sites() != self.sites {
            return None;
        }
        self.index_of(config.bits)
    }

    pub fn count_sector(&self, ups: usize) -> usize {
        self.states.iter().filter(|s| s.count_ones() as usize == ups).count()
    }

    pub fn special_config(&self, tag: StateTag) -> Result<SpinConfiguration> {
        let l = self.sites;
        let bits = match tag {
            StateTag::Vacuum => 0,
            StateTag::Z2 | StateTag::Z2Prime => {
                if !l.is_multiple_of(2) {
                    return Err(Error::Configuration(format!("{tag} needs even L, got {l}")));
                }
                let z2 = (0..l).step_by(2).fold(0u32, |acc, j| acc | 1 << j);
                if tag == StateTag::Z2 {
                    z2
                } else {
                    rotate(z2, l, 1)
                }
            }
            StateTag::Z3 => {
                if !l.is_multiple_of(3) {
                    return Err(Error::Configuration(format!("z3 needs L divisible by 3, got {l}")));
                }
                (0..l).step_by(3).fold(0u32, |acc, j| acc | 1 << j)
            }
        };
        Ok(SpinConfiguration::from_raw(bits, l))
    }

    pub fn special_state(&self, tag: StateTag) -> Result<StateVector> {
        let config = self.special_config(tag)?;
        let index = self.index(config).expect("special configurations are always valid");
        Ok(StateVector::basis_state(self.dim(), index))
    }
}

/// Enumerates the constrained basis by filtering every L-bit string.
pub fn enumerate_basis(sites: usize) -> Result<ConstrainedBasis> {
    if !(MIN_SITES..=MAX_SITES).contains(&sites) {
        return Err(Error::Size(sites, MIN_SITES, MAX_SITES));
    }
    let states = (0..=mask(sites)).filter(|&b| is_valid(b, sites)).collect();
    Ok(ConstrainedBasis { sites, states })
}

pub fn count_sector(basis: &ConstrainedBasis, ups: usize) -> usize {
    basis.count_sector(ups)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StateTag {
    Vacuum,
    Z2,
    Z2Prime,
    Z3,
}

impl fmt::Display for StateTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StateTag::Vacuum => "vacuum",
            StateTag::Z2 => "z2",
            StateTag::Z2Prime => "z2prime",
            StateTag::Z3 => "z3",
        })
    }
}

impl FromStr for StateTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vacuum" => Ok(StateTag::Vacuum),
            "z2" => Ok(StateTag::Z2),
            "z2prime" => Ok(StateTag::Z2Prime),
            "z3" => Ok(StateTag::Z3),
            other => Err(Error::Configuration(format!("unknown initial state `{other}`"))),
        }
    }
}

/// Complex amplitudes over some basis of dimension `len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    pub fn zeros(dim: usize) -> Self {
        Self { amplitudes: vec![Complex64::new(0.0, 0.0); dim] }
    }

    pub fn basis_state(dim: usize, index: usize) -> Self {
        let mut v = Self::zeros(dim);
        v.amplitudes[index] = Complex64::new(1.0, 0.0);
        v
    }

    pub fn from_real(values: &[f64]) -> Self {
        Self { amplitudes: values.iter().map(|&x| Complex64::new(x, 0.0)).collect() }
    }

    pub fn from_amplitudes(amplitudes: Vec<Complex64>) -> Self {
        Self { amplitudes }
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amplitudes
    }

    pub fn is_finite(&self) -> bool {
        self.amplitudes.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// `⟨self|other⟩`, conjugate-linear in `self`.
    pub fn dot(&self, other: &StateVector) -> Complex64 {
        debug_assert_eq!(self.len(), other.len());
        self.amplitudes.iter().zip(&other.amplitudes).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm() - 1.0).abs() < NORM_TOL
    }

    pub fn scale(&mut self, factor: Complex64) {
        self.amplitudes.iter_mut().for_each(|z| *z *= factor);
    }

    pub fn scale_real(&mut self, factor: f64) {
        self.amplitudes.iter_mut().for_each(|z| *z *= factor);
    }

    /// `self += factor * other`
    pub fn axpy(&mut self, factor: Complex64, other: &StateVector) {
        debug_assert_eq!(self.len(), other.len());
        for (a, b) in self.amplitudes.iter_mut().zip(&other.amplitudes) {
            *a += factor * b;
        }
    }

    pub fn normalized(&self) -> Result<StateVector> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::Input("cannot normalize a zero or non-finite vector".into()));
        }
        let mut v = self.clone();
        v.scale_real(1.0 / n);
        Ok(v)
    }

    pub fn distance(&self, other: &StateVector) -> f64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }
}
