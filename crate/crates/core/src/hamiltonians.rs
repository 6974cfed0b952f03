//! Transverse-field Ising and Heisenberg Hamiltonians in the computational
//! basis, written with Pauli matrices.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{check_enumerable, enumerate_states, LatticeSpec, SpinConfiguration};
use crate::rng::{hash2, unit_open};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum Model {
    /// `J sum_<ij> sz_i sz_j + h sum_i sx_i`.
    Tfim {
        lattice: LatticeSpec,
        #[serde(rename = "J")]
        coupling: f64,
        #[serde(rename = "h")]
        field: f64,
    },
    /// `J sum_<ij> (sx sx + sy sy + sz sz)`.
    Heisenberg {
        lattice: LatticeSpec,
        #[serde(rename = "J")]
        coupling: f64,
    },
}

/// One row of the Hamiltonian: the diagonal and the connected configurations.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseRow {
    pub diagonal: f64,
    pub offdiagonal: Vec<(SpinConfiguration, f64)>,
}

impl Model {
    pub fn tfim(lattice: LatticeSpec, coupling: f64, field: f64) -> Result<Self> {
        if !coupling.is_finite() || !field.is_finite() {
            return Err(Error::Domain("couplings must be finite".into()));
        }
        Ok(Model::Tfim { lattice, coupling, field })
    }

    pub fn heisenberg(lattice: LatticeSpec, coupling: f64) -> Result<Self> {
        if !coupling.is_finite() {
            return Err(Error::Domain("coupling must be finite".into()));
        }
        Ok(Model::Heisenberg { lattice, coupling })
    }

    pub fn lattice(&self) -> &LatticeSpec {
        match self {
            Model::Tfim { lattice, .. } | Model::Heisenberg { lattice, .. } => lattice,
        }
    }

    pub fn n_sites(&self) -> usize {
        self.lattice().n_sites()
    }

    pub fn name(&self) -> &'static str {
        match self {
            Model::Tfim { .. } => "tfim",
            Model::Heisenberg { .. } => "heisenberg",
        }
    }

    /// Largest number of off-diagonal entries in any row.
    pub fn max_connections(&self) -> usize {
        match self {
            Model::Tfim { lattice, .. } => lattice.n_sites(),
            Model::Heisenberg { lattice, .. } => lattice.bonds().len(),
        }
    }

    /// Sites whose spin-up bit contributes a factor -1 to the ground-state
    /// sign: every site for a positive transverse field, one sublattice for
    /// the antiferromagnetic Heisenberg model on a bipartite lattice. Empty
    /// when no such product rule removes the sign.
    pub fn sign_sites(&self) -> Vec<usize> {
        let n = self.n_sites();
        match self {
            Model::Tfim { field, .. } if *field > 0.0 => (0..n).collect(),
            Model::Heisenberg { lattice, coupling } if *coupling > 0.0 => lattice
                .bipartition()
                .map(|c| (0..n).filter(|&i| c[i]).collect())
                .unwrap_or_default(),
            _ => Vec::new(),
        }
    }

    pub(crate) fn diagonal(&self, x: SpinConfiguration) -> f64 {
        let (lattice, coupling) = match self {
            Model::Tfim { lattice, coupling, .. } | Model::Heisenberg { lattice, coupling } => {
                (lattice, *coupling)
            }
        };
        let aligned: i64 = lattice
            .bonds()
            .iter()
            .map(|&(i, j)| if x.bit(i) == x.bit(j) { 1 } else { -1 })
            .sum();
        coupling * aligned as f64
    }

    /// Calls `f(x', H(x, x'))` for every off-diagonal entry of row `x`.
    pub(crate) fn for_each_offdiagonal(&self, x: SpinConfiguration, mut f: impl FnMut(SpinConfiguration, f64)) {
        match self {
            Model::Tfim { lattice, field, .. } => {
                if *field != 0.0 {
                    for i in 0..lattice.n_sites() {
                        f(x.flipped(i), *field);
                    }
                }
            }
            Model::Heisenberg { lattice, coupling } => {
                for &(i, j) in lattice.bonds() {
                    if x.bit(i) != x.bit(j) {
                        f(x.exchanged(i, j), 2.0 * coupling);
                    }
                }
            }
        }
    }

    pub fn connected_elements(&self, x: SpinConfiguration) -> Result<SparseRow> {
        if x.len() != self.n_sites() {
            return Err(Error::SizeMismatch { expected: self.n_sites(), found: x.len() });
        }
        let mut row = SparseRow { diagonal: self.diagonal(x), offdiagonal: Vec::new() };
        self.for_each_offdiagonal(x, |y, h| row.offdiagonal.push((y, h)));
        Ok(row)
    }

    /// Dense matrix over [`enumerate_states`] order.
    pub fn dense_matrix(&self) -> Result<DMatrix<f64>> {
        let n = self.n_sites();
        let states = enumerate_states(n)?;
        let dim = states.len();
        let mut m = DMatrix::zeros(dim, dim);
        for x in states {
            let r = x.encoding() as usize;
            m[(r, r)] = self.diagonal(x);
            self.for_each_offdiagonal(x, |y, h| m[(r, y.encoding() as usize)] += h);
        }
        Ok(m)
    }

    pub fn exact_ground_state(&self) -> Result<GroundState> {
        check_enumerable(self.n_sites())?;
        let m = self.dense_matrix()?;
        let eig = SymmetricEigen::try_new(m, f64::EPSILON, 0).ok_or(Error::EigenNonConvergence)?;
        let (k, &energy) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .ok_or(Error::EigenNonConvergence)?;
        let mut vector: DVector<f64> = eig.eigenvectors.column(k).into_owned();
        vector /= vector.norm();
        let pivot = vector.iter().copied().max_by(|a, b| a.abs().total_cmp(&b.abs())).unwrap_or(1.0);
        if pivot < 0.0 {
            vector.neg_mut();
        }
        let mut spectrum: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        spectrum.sort_by(f64::total_cmp);
        Ok(GroundState { energy, vector, spectrum })
    }

    /// `y = H v` over [`enumerate_states`] order.
    pub fn apply(&self, v: &[f64], y: &mut [f64]) -> Result<()> {
        let states = enumerate_states(self.n_sites())?;
        if v.len() != states.len() || y.len() != states.len() {
            return Err(Error::SizeMismatch { expected: states.len(), found: v.len().min(y.len()) });
        }
        for x in states {
            let r = x.encoding() as usize;
            let mut acc = self.diagonal(x) * v[r];
            self.for_each_offdiagonal(x, |c, h| acc += h * v[c.encoding() as usize]);
            y[r] = acc;
        }
        Ok(())
    }

    /// Lowest eigenvalue by Lanczos with full reorthogonalization, converged
    /// to `1e-12` relative. Cheaper than [`Model::exact_ground_state`] beyond
    /// a few hundred states.
    pub fn ground_energy(&self) -> Result<f64> {
        check_enumerable(self.n_sites())?;
        let dim = 1usize << self.n_sites();
        if dim <= 256 {
            return Ok(self.exact_ground_state()?.energy);
        }
        let mut q: Vec<f64> = (0..dim as u64).map(|k| unit_open(hash2(0x6c61_6e63, k)) - 0.5).collect();
        let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        q.iter_mut().for_each(|v| *v /= norm);
        let mut basis: Vec<Vec<f64>> = Vec::new();
        let (mut alpha, mut beta) = (Vec::new(), Vec::new());
        let mut w = vec![0.0; dim];
        let mut previous = f64::INFINITY;
        for k in 0..dim.min(300) {
            self.apply(&q, &mut w)?;
            let a: f64 = w.iter().zip(&q).map(|(x, y)| x * y).sum();
            basis.push(q.clone());
            alpha.push(a);
            for b in &basis {
                let c: f64 = w.iter().zip(b).map(|(x, y)| x * y).sum();
                w.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
            }
            let t = DMatrix::from_fn(k + 1, k + 1, |i, j| match i.abs_diff(j) {
                0 => alpha[i],
                1 => beta[i.min(j)],
                _ => 0.0,
            });
            let lowest = t.symmetric_eigenvalues().min();
            let b = w.iter().map(|v| v * v).sum::<f64>().sqrt();
            if (lowest - previous).abs() <= 1e-12 * lowest.abs().max(1.0) || b <= 1e-12 * lowest.abs().max(1.0) {
                return Ok(lowest);
            }
            previous = lowest;
            beta.push(b);
            q.iter_mut().zip(&w).for_each(|(x, y)| *x = y / b);
        }
        Err(Error::EigenNonConvergence)
    }
}

#[derive(Clone, Debug)]
pub struct GroundState {
    pub energy: f64,
    /// Normalized, largest-magnitude entry positive.
    pub vector: DVector<f64>,
    /// All eigenvalues, ascending.
    pub spectrum: Vec<f64>,
}
