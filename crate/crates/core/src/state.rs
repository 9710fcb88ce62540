//! Complex amplitude vectors and the small dense-matrix helpers shared by the
//! lifting core, the ledger and the fork operator.

use std::fmt;
use std::ops::Index;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Dense complex matrix used throughout the crate.
pub type CMatrix = DMatrix<Complex64>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StateError {
    #[error("state vector must have at least one amplitude")]
    Empty,
    #[error("non-finite amplitude at index {0}")]
    NonFinite(usize),
}

/// A finite, non-empty vector of complex amplitudes.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Complex64>", into = "Vec<Complex64>")]
pub struct StateVector {
    amps: Vec<Complex64>,
}

impl StateVector {
    pub fn new(amps: Vec<Complex64>) -> Result<Self, StateError> {
        if amps.is_empty() {
            return Err(StateError::Empty);
        }
        if let Some(i) = amps.iter().position(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(StateError::NonFinite(i));
        }
        Ok(Self { amps })
    }

    /// Builds a vector from real amplitudes.
    pub fn from_real(values: &[f64]) -> Result<Self, StateError> {
        Self::new(values.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0, "zero-dimensional state vector");
        Self {
            amps: vec![Complex64::new(0.0, 0.0); dim],
        }
    }

    /// Canonical basis vector `e_index` (0-based).
    pub fn basis(dim: usize, index: usize) -> Self {
        let mut v = Self::zeros(dim);
        v.amps[index] = Complex64::new(1.0, 0.0);
        v
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amps(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn amps_mut(&mut self) -> &mut [Complex64] {
        &mut self.amps
    }

    pub fn into_amps(self) -> Vec<Complex64> {
        self.amps
    }

    /// Conjugate-linear in `self`: `<self, other> = sum conj(self_i) other_i`.
    pub fn inner(&self, other: &Self) -> Complex64 {
        debug_assert_eq!(self.dim(), other.dim());
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            amps: self.amps.iter().map(|a| a * s).collect(),
        }
    }

    /// Unit-norm copy. Panics on the zero vector.
    pub fn normalized(&self) -> Self {
        let n = self.norm();
        assert!(n > 0.0, "cannot normalize the zero vector");
        self.scaled(1.0 / n)
    }

    pub fn sub(&self, other: &Self) -> Self {
        debug_assert_eq!(self.dim(), other.dim());
        Self {
            amps: self.amps.iter().zip(&other.amps).map(|(a, b)| a - b).collect(),
        }
    }

    /// Euclidean distance.
    pub fn distance(&self, other: &Self) -> f64 {
        self.sub(other).norm()
    }

    /// Largest per-coordinate modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Coordinates `start..start + len`.
    pub fn slice(&self, start: usize, len: usize) -> Self {
        Self {
            amps: self.amps[start..start + len].to_vec(),
        }
    }

    pub fn concat(&self, tail: &Self) -> Self {
        let mut amps = self.amps.clone();
        amps.extend_from_slice(&tail.amps);
        Self { amps }
    }

    pub fn to_dvector(&self) -> DVector<Complex64> {
        DVector::from_column_slice(&self.amps)
    }

    pub fn from_dvector(v: &DVector<Complex64>) -> Self {
        Self {
            amps: v.iter().copied().collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.amps.iter().all(|a| a.re.is_finite() && a.im.is_finite())
    }

    /// SHA-256 over the exact bit patterns of the amplitudes.
    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        for a in &self.amps {
            h.update(a.re.to_bits().to_be_bytes());
            h.update(a.im.to_bits().to_be_bytes());
        }
        h.finalize().into()
    }
}

impl Index<usize> for StateVector {
    type Output = Complex64;

    fn index(&self, i: usize) -> &Complex64 {
        &self.amps[i]
    }
}

impl fmt::Debug for StateVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.amps.iter()).finish()
    }
}

impl TryFrom<Vec<Complex64>> for StateVector {
    type Error = StateError;

    fn try_from(amps: Vec<Complex64>) -> Result<Self, StateError> {
        Self::new(amps)
    }
}

impl From<StateVector> for Vec<Complex64> {
    fn from(v: StateVector) -> Self {
        v.amps
    }
}

/// Matrix whose columns are the given vectors. All vectors must share a dimension.
pub fn columns_to_matrix(cols: &[StateVector]) -> CMatrix {
    let rows = cols.first().map_or(0, StateVector::dim);
    CMatrix::from_fn(rows, cols.len(), |i, j| cols[j][i])
}

pub fn matrix_column(m: &CMatrix, j: usize) -> StateVector {
    StateVector {
        amps: m.column(j).iter().copied().collect(),
    }
}

pub fn mat_vec(m: &CMatrix, v: &StateVector) -> StateVector {
    StateVector::from_dvector(&(m * v.to_dvector()))
}

/// Frobenius norm of `U^H U - I`.
pub fn unitarity_residual(u: &CMatrix) -> f64 {
    let n = u.ncols();
    (u.adjoint() * u - CMatrix::identity(n, n)).norm()
}
