//! Gram-Schmidt orthogonalization with dimensional lifting.
//!
//! Vectors `v_1..v_m` in `C^n` that need not be linearly independent are
//! embedded into `C^(n + m_max)` by appending coordinates so that the lifted
//! vectors are pairwise orthogonal with common norm `r`. Dropping the appended
//! coordinates ([`project`]) returns each input unchanged.
//!
//! Two constructions are provided:
//!
//! * [`lift_batch`] builds the lifted part from the principal square root
//!   `B = (I - A^H A)^(1/2)` with `A = M / r`. Every output depends on every
//!   input.
//! * [`LiftingWorkspace::lift_append`] factors `r^2 I - G` (with `G` the Gram
//!   matrix of the inputs) as `R^H R` with `R` upper triangular, one column at
//!   a time. Block `j` only touches the first `j` lifted coordinates, so
//!   appending never alters earlier blocks.

use nalgebra::SymmetricEigen;
use num_complex::Complex64;
use thiserror::Error;

use crate::state::{columns_to_matrix, matrix_column, CMatrix, StateVector};

/// Cholesky pivots at or below this value are treated as breakdown.
pub const PIVOT_TOL: f64 = 1e-12;
/// Orthogonality and unitarity residual bound.
pub const ORTHO_TOL: f64 = 1e-9;
/// Eigenvalues in `[-PSD_CLAMP, 0)` are clamped to zero by [`sqrt_psd`].
pub const PSD_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LiftError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("empty input list")]
    EmptyInput,
    #[error("vector {index} is linearly dependent on its predecessors")]
    LinearDependence { index: usize },
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not Hermitian (deviation {deviation:e})")]
    NotHermitian { deviation: f64 },
    #[error("matrix is not positive semidefinite (eigenvalue {eigenvalue:e})")]
    NotPsd { eigenvalue: f64 },
    #[error("non-finite matrix entry")]
    NonFinite,
    #[error("lifting radius {radius} does not exceed spectral norm {spectral_norm}")]
    RadiusTooSmall { radius: f64, spectral_norm: f64 },
    #[error("chain capacity {capacity} exceeded")]
    CapacityExceeded { capacity: usize },
    #[error("Cholesky pivot {pivot:e} at column {index} below tolerance")]
    PivotFailure { index: usize, pivot: f64 },
    #[error("columns are not orthonormal (residual {residual:e})")]
    NotOrthonormal { residual: f64 },
    #[error("invalid lifting parameters: {0}")]
    InvalidParams(String),
}

pub type Result<T> = std::result::Result<T, LiftError>;

/// Base dimension, lifted capacity and radius of a lifting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LiftingParams {
    n: usize,
    m_max: usize,
    r: f64,
}

impl LiftingParams {
    /// Parameters with the chain radius `2 * sqrt(m_max)`, which exceeds the
    /// spectral norm of any `m_max` unit columns.
    pub fn new(n: usize, m_max: usize) -> Result<Self> {
        Self::with_radius(n, m_max, 2.0 * (m_max as f64).sqrt())
    }

    pub fn with_radius(n: usize, m_max: usize, r: f64) -> Result<Self> {
        if n == 0 {
            return Err(LiftError::InvalidParams("base dimension must be positive".into()));
        }
        if m_max < 2 || !m_max.is_power_of_two() {
            return Err(LiftError::InvalidParams(format!(
                "capacity {m_max} is not a power of two >= 2"
            )));
        }
        if !(r.is_finite() && r > 0.0) {
            return Err(LiftError::InvalidParams(format!("radius {r} must be positive")));
        }
        Ok(Self { n, m_max, r })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m_max(&self) -> usize {
        self.m_max
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    /// Dimension of lifted vectors, `n + m_max`.
    pub fn lifted_dim(&self) -> usize {
        self.n + self.m_max
    }
}

/// A lifted chain element together with its 1-based position.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthoBlock {
    pub full: StateVector,
    pub index: usize,
}

impl OrthoBlock {
    /// Appended coordinates `n..n + m_max`.
    pub fn lifted_part(&self, params: &LiftingParams) -> StateVector {
        self.full.slice(params.n(), params.m_max())
    }
}

fn check_dims(vs: &[StateVector], expected: usize) -> Result<()> {
    for v in vs {
        if v.dim() != expected {
            return Err(LiftError::DimensionMismatch {
                expected,
                found: v.dim(),
            });
        }
    }
    Ok(())
}

/// `v - sum_i <b_i, v> b_i` for an orthonormal `basis`.
fn project_out(basis: &[StateVector], v: &StateVector) -> StateVector {
    let mut u = v.amps().to_vec();
    for b in basis {
        let c = b.inner(v);
        for (ui, bi) in u.iter_mut().zip(b.amps()) {
            *ui -= c * bi;
        }
    }
    StateVector::new(u).expect("finite inputs give finite residuals")
}

/// Classic Gram-Schmidt: `w_(k+1)` is `v_(k+1)` minus its components along
/// `w_1..w_k`, normalized.
pub fn classic_gram_schmidt(vs: &[StateVector]) -> Result<Vec<StateVector>> {
    let first = vs.first().ok_or(LiftError::EmptyInput)?;
    check_dims(vs, first.dim())?;
    let mut out: Vec<StateVector> = Vec::with_capacity(vs.len());
    for (index, v) in vs.iter().enumerate() {
        let u = project_out(&out, v);
        let residual = u.norm();
        if residual <= PIVOT_TOL * v.norm() {
            return Err(LiftError::LinearDependence { index });
        }
        out.push(u.scaled(1.0 / residual));
    }
    Ok(out)
}

/// Hermitian matrix of pairwise inner products `<v_i, v_j>`.
pub fn gram_matrix(vs: &[StateVector]) -> Result<CMatrix> {
    if let Some(first) = vs.first() {
        check_dims(vs, first.dim())?;
    }
    let m = vs.len();
    let mut g = CMatrix::zeros(m, m);
    for i in 0..m {
        g[(i, i)] = Complex64::new(vs[i].norm_sqr(), 0.0);
        for j in (i + 1)..m {
            let ip = vs[i].inner(&vs[j]);
            g[(i, j)] = ip;
            g[(j, i)] = ip.conj();
        }
    }
    Ok(g)
}

fn check_finite(m: &CMatrix) -> Result<()> {
    if m.iter().all(|a| a.re.is_finite() && a.im.is_finite()) {
        Ok(())
    } else {
        Err(LiftError::NonFinite)
    }
}

/// Largest singular value.
pub fn spectral_norm(m: &CMatrix) -> Result<f64> {
    check_finite(m)?;
    if m.is_empty() {
        return Ok(0.0);
    }
    Ok(m.singular_values().max())
}

/// Principal square root of a Hermitian positive semidefinite matrix.
pub fn sqrt_psd(h: &CMatrix) -> Result<CMatrix> {
    check_finite(h)?;
    if !h.is_square() {
        return Err(LiftError::NotSquare {
            rows: h.nrows(),
            cols: h.ncols(),
        });
    }
    let deviation = (h - h.adjoint()).camax();
    if deviation > ORTHO_TOL * h.camax().max(1.0) {
        return Err(LiftError::NotHermitian { deviation });
    }
    let hermitian = (h + h.adjoint()).scale(0.5);
    let eig = SymmetricEigen::new(hermitian);
    if let Some(&lambda) = eig.eigenvalues.iter().find(|&&l| l < -PSD_CLAMP) {
        return Err(LiftError::NotPsd { eigenvalue: lambda });
    }
    let roots = eig
        .eigenvalues
        .map(|l| Complex64::new(l.max(0.0).sqrt(), 0.0));
    let v = &eig.eigenvectors;
    let s = v * CMatrix::from_diagonal(&roots) * v.adjoint();
    Ok((&s + s.adjoint()).scale(0.5))
}

/// Lifts all inputs at once through the principal square root.
///
/// Output `j` is `(v_j; r * B e_j; 0)`, so its first `n` coordinates are the
/// input verbatim and the unused lifted coordinates beyond `m` are zero.
pub fn lift_batch(vs: &[StateVector], params: &LiftingParams) -> Result<Vec<OrthoBlock>> {
    if vs.is_empty() {
        return Err(LiftError::EmptyInput);
    }
    check_dims(vs, params.n())?;
    let m = vs.len();
    if m > params.m_max() {
        return Err(LiftError::CapacityExceeded {
            capacity: params.m_max(),
        });
    }
    let big_m = columns_to_matrix(vs);
    let spectral = spectral_norm(&big_m)?;
    let r = params.r();
    if r <= spectral {
        return Err(LiftError::RadiusTooSmall {
            radius: r,
            spectral_norm: spectral,
        });
    }
    let a = big_m.unscale(r);
    let h = CMatrix::identity(m, m) - a.adjoint() * &a;
    let b = sqrt_psd(&h)?;
    let pad = StateVector::zeros(params.m_max());
    Ok(vs
        .iter()
        .enumerate()
        .map(|(j, v)| {
            let mut lifted = pad.clone();
            for (i, amp) in lifted.amps_mut().iter_mut().take(m).enumerate() {
                *amp = b[(i, j)] * r;
            }
            OrthoBlock {
                full: v.concat(&lifted),
                index: j + 1,
            }
        })
        .collect())
}

/// Incremental lifting state owned by one chain.
///
/// Holds the appended inputs, the upper triangle of their Gram matrix and the
/// columns of the triangular factor `R` with `R^H R = r^2 I - G`.
#[derive(Debug, Clone)]
pub struct LiftingWorkspace {
    params: LiftingParams,
    inputs: Vec<StateVector>,
    // gram[j][i] = <v_i, v_j> for i <= j
    gram: Vec<Vec<Complex64>>,
    // chol[j][i] = R[i][j] for i <= j; chol[j][j] is real and positive
    chol: Vec<Vec<Complex64>>,
}

impl LiftingWorkspace {
    pub fn new(params: LiftingParams) -> Self {
        Self {
            params,
            inputs: Vec::new(),
            gram: Vec::new(),
            chol: Vec::new(),
        }
    }

    pub fn params(&self) -> &LiftingParams {
        &self.params
    }

    pub fn count(&self) -> usize {
        self.inputs.len()
    }

    pub fn inputs(&self) -> &[StateVector] {
        &self.inputs
    }

    /// Full Hermitian Gram matrix of the appended inputs.
    pub fn gram(&self) -> CMatrix {
        let m = self.count();
        CMatrix::from_fn(m, m, |i, j| {
            if i <= j {
                self.gram[j][i]
            } else {
                self.gram[i][j].conj()
            }
        })
    }

    /// Upper-triangular factor `R` (count x count).
    pub fn chol(&self) -> CMatrix {
        let m = self.count();
        CMatrix::from_fn(m, m, |i, j| {
            if i <= j {
                self.chol[j][i]
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }

    /// Appends `v` and returns its lifted block `(v; R e_j; 0)`.
    ///
    /// Callers feeding a chain unit-normalize `v` first; under the default
    /// radius the pivot then never drops below `sqrt(3 m_max)`.
    pub fn lift_append(&mut self, v: &StateVector) -> Result<OrthoBlock> {
        let n = self.params.n();
        if v.dim() != n {
            return Err(LiftError::DimensionMismatch {
                expected: n,
                found: v.dim(),
            });
        }
        let j = self.count();
        if j >= self.params.m_max() {
            return Err(LiftError::CapacityExceeded {
                capacity: self.params.m_max(),
            });
        }
        let r2 = self.params.r() * self.params.r();

        let mut gram_col: Vec<Complex64> = self.inputs.iter().map(|u| u.inner(v)).collect();
        gram_col.push(Complex64::new(v.norm_sqr(), 0.0));

        let mut col = Vec::with_capacity(j + 1);
        for (i, g) in gram_col[..j].iter().enumerate() {
            // (R^H R)[i][j] = -G[i][j] off the diagonal
            let mut s = -g;
            for (rl, cl) in self.chol[i][..i].iter().zip(&col) {
                s -= rl.conj() * cl;
            }
            col.push(s / self.chol[i][i].re);
        }
        let tail: f64 = col.iter().map(|c: &Complex64| c.norm_sqr()).sum();
        let d = r2 - gram_col[j].re - tail;
        let pivot = if d > 0.0 { d.sqrt() } else { 0.0 };
        if pivot <= PIVOT_TOL {
            return Err(LiftError::PivotFailure { index: j + 1, pivot });
        }
        col.push(Complex64::new(pivot, 0.0));

        let mut lifted = StateVector::zeros(self.params.m_max());
        lifted.amps_mut()[..=j].copy_from_slice(&col);
        let block = OrthoBlock {
            full: v.concat(&lifted),
            index: j + 1,
        };
        self.inputs.push(v.clone());
        self.gram.push(gram_col);
        self.chol.push(col);
        Ok(block)
    }
}

/// Drops the lifted coordinates: the map `P` with `P w_j = v_j`.
pub fn project(w: &StateVector, params: &LiftingParams) -> Result<StateVector> {
    if w.dim() != params.lifted_dim() {
        return Err(LiftError::DimensionMismatch {
            expected: params.lifted_dim(),
            found: w.dim(),
        });
    }
    Ok(w.slice(0, params.n()))
}

/// Extends orthonormal columns to a unitary matrix.
///
/// Canonical basis vectors are tried in index order; a candidate whose
/// residual against the current basis is below [`ORTHO_TOL`] is skipped.
/// Residuals are orthogonalized twice to keep the completion orthogonal to
/// working precision even for small residuals.
pub fn complete_to_orthogonal(cols: &[StateVector]) -> Result<CMatrix> {
    let first = cols.first().ok_or(LiftError::EmptyInput)?;
    let k = first.dim();
    check_dims(cols, k)?;
    let g = gram_matrix(cols)?;
    let residual = (g - CMatrix::identity(cols.len(), cols.len())).camax();
    if residual > ORTHO_TOL || cols.len() > k {
        return Err(LiftError::NotOrthonormal { residual });
    }
    let mut basis = cols.to_vec();
    for idx in 0..k {
        if basis.len() == k {
            break;
        }
        let e = StateVector::basis(k, idx);
        let u = project_out(&basis, &project_out(&basis, &e));
        let norm = u.norm();
        if norm < ORTHO_TOL {
            continue;
        }
        basis.push(u.scaled(1.0 / norm));
    }
    debug_assert_eq!(basis.len(), k);
    Ok(columns_to_matrix(&basis))
}

/// Columns `count..` of [`complete_to_orthogonal`], i.e. the completion only.
pub(crate) fn completion_columns(cols: &[StateVector]) -> Result<Vec<StateVector>> {
    let full = complete_to_orthogonal(cols)?;
    Ok((cols.len()..full.ncols())
        .map(|j| matrix_column(&full, j))
        .collect())
}
