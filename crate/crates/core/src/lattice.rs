//! Spin configurations, lattices and the two neighbour moves used by the
//! samplers.
//!
//! A configuration is a packed integer encoding (bit `i` of the integer is
//! the occupation of site `i`) together with the system size. Spins follow
//! `s_i = 1 - 2 * bit_i`, so bit 0 is spin up.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest system size that fits the packed encoding.
pub const MAX_SITES: usize = 62;

/// Largest system size for which the state space may be enumerated.
pub const MAX_ENUMERABLE: usize = 14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SpinConfiguration {
    bits: u64,
    n: u8,
}

impl SpinConfiguration {
    pub fn new(bits: u64, n: usize) -> Result<Self> {
        if n == 0 || n > MAX_SITES {
            return Err(Error::InvalidLattice(format!("system size {n} outside 1..={MAX_SITES}")));
        }
        if bits >> n != 0 {
            return Err(Error::Domain(format!("encoding {bits} has bits beyond site {n}")));
        }
        Ok(Self { bits, n: n as u8 })
    }

    /// Builds a configuration from explicit 0/1 values, site 0 first.
    pub fn from_bits(values: &[u8]) -> Result<Self> {
        let mut bits = 0u64;
        for (i, &b) in values.iter().enumerate() {
            match b {
                0 => {}
                1 => bits |= 1 << i,
                _ => return Err(Error::Domain(format!("bit value {b} at site {i}"))),
            }
        }
        Self::new(bits, values.len())
    }

    pub(crate) fn from_raw(bits: u64, n: usize) -> Self {
        debug_assert!(n <= MAX_SITES && bits >> n == 0);
        Self { bits, n: n as u8 }
    }

    #[inline]
    pub fn encoding(self) -> u64 {
        self.bits
    }

    #[inline]
    pub fn len(self) -> usize {
        self.n as usize
    }

    #[inline]
    pub fn is_empty(self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn bit(self, i: usize) -> u8 {
        ((self.bits >> i) & 1) as u8
    }

    #[inline]
    pub fn spin(self, i: usize) -> f64 {
        1.0 - 2.0 * self.bit(i) as f64
    }

    pub fn bits(self) -> impl Iterator<Item = u8> {
        (0..self.len()).map(move |i| self.bit(i))
    }

    /// Number of set bits.
    pub fn hamming_weight(self) -> u32 {
        self.bits.count_ones()
    }

    /// Total magnetization `sum_i s_i`.
    pub fn magnetization(self) -> i64 {
        self.len() as i64 - 2 * self.hamming_weight() as i64
    }

    #[inline]
    pub(crate) fn flipped(self, i: usize) -> Self {
        Self { bits: self.bits ^ (1 << i), n: self.n }
    }

    #[inline]
    pub(crate) fn exchanged(self, i: usize, j: usize) -> Self {
        if self.bit(i) == self.bit(j) {
            self
        } else {
            Self { bits: self.bits ^ ((1 << i) | (1 << j)), n: self.n }
        }
    }
}

impl fmt::Display for SpinConfiguration {
    /// Site 0 is printed first.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.bits() {
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

/// All `2^n` configurations in ascending order of their integer encoding.
pub fn enumerate_states(n: usize) -> Result<Vec<SpinConfiguration>> {
    check_enumerable(n)?;
    Ok((0..1u64 << n).map(|bits| SpinConfiguration::from_raw(bits, n)).collect())
}

pub(crate) fn check_enumerable(n: usize) -> Result<()> {
    if n == 0 || n > MAX_ENUMERABLE {
        return Err(Error::EnumerationTooLarge { n, max: MAX_ENUMERABLE });
    }
    Ok(())
}

/// Flips the bit at site `i`.
pub fn flip_neighbor(x: SpinConfiguration, i: usize) -> Result<SpinConfiguration> {
    if i >= x.len() {
        return Err(Error::IndexOutOfRange { index: i, n: x.len() });
    }
    Ok(x.flipped(i))
}

/// Swaps the bits at sites `i` and `j`; the Hamming weight is preserved.
pub fn exchange_neighbor(x: SpinConfiguration, i: usize, j: usize) -> Result<SpinConfiguration> {
    for k in [i, j] {
        if k >= x.len() {
            return Err(Error::IndexOutOfRange { index: k, n: x.len() });
        }
    }
    if i == j {
        return Err(Error::InvalidExchange { i, j });
    }
    Ok(x.exchanged(i, j))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Open,
    Periodic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Geometry {
    Chain { length: usize },
    /// `side x side` grid, sites flattened row-major.
    Square { side: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeSpec {
    geometry: Geometry,
    boundary: Boundary,
    bonds: Vec<(usize, usize)>,
}

impl LatticeSpec {
    pub fn chain(length: usize, boundary: Boundary) -> Result<Self> {
        if length == 0 || length > MAX_SITES {
            return Err(Error::InvalidLattice(format!("chain length {length}")));
        }
        if boundary == Boundary::Periodic && length < 3 {
            return Err(Error::InvalidLattice("periodic chains need at least 3 sites".into()));
        }
        let mut bonds: Vec<_> = (0..length.saturating_sub(1)).map(|i| (i, i + 1)).collect();
        if boundary == Boundary::Periodic {
            bonds.push((0, length - 1));
        }
        Ok(Self::from_parts(Geometry::Chain { length }, boundary, bonds))
    }

    pub fn square(side: usize, boundary: Boundary) -> Result<Self> {
        if side == 0 || side * side > MAX_SITES {
            return Err(Error::InvalidLattice(format!("square side {side}")));
        }
        if boundary == Boundary::Periodic && side < 3 {
            return Err(Error::InvalidLattice("periodic squares need side at least 3".into()));
        }
        let site = |r: usize, c: usize| r * side + c;
        let mut bonds = Vec::new();
        for r in 0..side {
            for c in 0..side {
                if c + 1 < side {
                    bonds.push((site(r, c), site(r, c + 1)));
                } else if boundary == Boundary::Periodic {
                    bonds.push((site(r, 0), site(r, c)));
                }
                if r + 1 < side {
                    bonds.push((site(r, c), site(r + 1, c)));
                } else if boundary == Boundary::Periodic {
                    bonds.push((site(0, c), site(r, c)));
                }
            }
        }
        Ok(Self::from_parts(Geometry::Square { side }, boundary, bonds))
    }

    fn from_parts(geometry: Geometry, boundary: Boundary, mut bonds: Vec<(usize, usize)>) -> Self {
        bonds.sort_unstable();
        bonds.dedup();
        Self { geometry, boundary, bonds }
    }

    pub fn n_sites(&self) -> usize {
        match self.geometry {
            Geometry::Chain { length } => length,
            Geometry::Square { side } => side * side,
        }
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    /// Nearest-neighbour bonds `(i, j)` with `i < j`, sorted, without duplicates.
    pub fn bonds(&self) -> &[(usize, usize)] {
        &self.bonds
    }

    /// Two-colouring of the bond graph with site 0 on `false`, or `None` when
    /// an odd cycle makes the lattice non-bipartite.
    pub fn bipartition(&self) -> Option<Vec<bool>> {
        let n = self.n_sites();
        let mut colour: Vec<Option<bool>> = vec![None; n];
        for start in 0..n {
            if colour[start].is_some() {
                continue;
            }
            colour[start] = Some(false);
            let mut stack = vec![start];
            while let Some(i) = stack.pop() {
                let c = colour[i]?;
                for &(a, b) in &self.bonds {
                    let j = if a == i { b } else if b == i { a } else { continue };
                    match colour[j] {
                        Some(d) if d == c => return None,
                        Some(_) => {}
                        None => {
                            colour[j] = Some(!c);
                            stack.push(j);
                        }
                    }
                }
            }
        }
        colour.into_iter().collect()
    }
}
