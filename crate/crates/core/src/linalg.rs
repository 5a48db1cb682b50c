//! Small dense linear-algebra helpers shared by the modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Scaled eigenvalue ratio below which an information matrix is treated as singular.
pub const SINGULAR_RCOND: f64 = 1e-13;

pub fn kron(a: &CVector, b: &CVector) -> CVector {
    let mut out = CVector::zeros(a.len() * b.len());
    for (i, ai) in a.iter().enumerate() {
        for (j, bj) in b.iter().enumerate() {
            out[i * b.len() + j] = ai * bj;
        }
    }
    out
}

/// Symmetric diagonal equilibration `S M S` with `S = diag(1/sqrt(m_ii))`.
fn equilibrate(m: &DMatrix<f64>) -> Option<(DMatrix<f64>, DVector<f64>)> {
    let n = m.nrows();
    let mut scale = DVector::zeros(n);
    for i in 0..n {
        let d = m[(i, i)];
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        scale[i] = 1.0 / d.sqrt();
    }
    let mut a = m.clone();
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] *= scale[i] * scale[j];
        }
    }
    // exact symmetry keeps Cholesky and the eigen-solver happy
    let a = (&a + a.transpose()) * 0.5;
    Some((a, scale))
}

fn unscale(inv: DMatrix<f64>, scale: &DVector<f64>) -> DMatrix<f64> {
    let n = inv.nrows();
    let mut out = inv;
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] *= scale[i] * scale[j];
        }
    }
    out
}

/// Smallest over largest eigenvalue of the equilibrated matrix.
pub fn scaled_rcond(m: &DMatrix<f64>) -> f64 {
    match equilibrate(m) {
        None => 0.0,
        Some((a, _)) => {
            let eig = SymmetricEigen::new(a).eigenvalues;
            let max = eig.max();
            let min = eig.min();
            if max <= 0.0 {
                0.0
            } else {
                min / max
            }
        }
    }
}

/// Inverse of a symmetric positive-definite matrix, refusing near-singular input.
pub fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (a, scale) = equilibrate(m).ok_or_else(|| Error::Unidentifiable("non-positive diagonal entry".into()))?;
    let rcond = {
        let eig = SymmetricEigen::new(a.clone()).eigenvalues;
        eig.min() / eig.max()
    };
    if !(rcond > SINGULAR_RCOND) {
        return Err(Error::Unidentifiable(format!(
            "scaled reciprocal condition {rcond:.3e}"
        )));
    }
    let chol = a
        .cholesky()
        .ok_or_else(|| Error::Unidentifiable("Cholesky factorisation failed".into()))?;
    Ok(unscale(chol.inverse(), &scale))
}

/// Inverse with a single jitter retry (`1e-12 * tr/dim` on the equilibrated matrix).
pub fn spd_inverse_regularized(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (a, scale) = equilibrate(m).ok_or_else(|| Error::Unidentifiable("non-positive diagonal entry".into()))?;
    if let Some(chol) = a.clone().cholesky() {
        return Ok(unscale(chol.inverse(), &scale));
    }
    let n = a.nrows();
    let jitter = 1e-12 * a.trace() / n as f64;
    let jittered = a + DMatrix::identity(n, n) * jitter;
    let chol = jittered
        .cholesky()
        .ok_or_else(|| Error::Unidentifiable("Cholesky failed after jitter".into()))?;
    Ok(unscale(chol.inverse(), &scale))
}

/// Eigen-decomposition of a Hermitian matrix with eigenvalues sorted descending.
pub fn hermitian_eigen_desc(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let herm = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(herm);
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMatrix::zeros(m.nrows(), n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Lower-triangular factor `L` with `L L^H = A A^H`, from a QR of `A^H`.
///
/// Working with `L` instead of `A A^H` keeps projection residuals at the
/// precision of `A` rather than of its square.
pub fn row_space_factor(a: &CMatrix) -> CMatrix {
    let rows = a.nrows();
    if a.ncols() < rows {
        // thin input: A itself already has few columns
        let mut padded = CMatrix::zeros(rows, rows);
        padded.columns_mut(0, a.ncols()).copy_from(a);
        return padded;
    }
    let r = a.adjoint().qr().r();
    r.adjoint()
}

/// Power iteration for the dominant eigenvector of a Hermitian PSD matrix.
pub fn dominant_eigenvector(m: &CMatrix, start: &CVector, tolerance: f64, max_iterations: usize) -> Result<CVector> {
    let norm = start.norm();
    if !(norm > 0.0) {
        return Err(Error::InvalidInput("zero start vector for power iteration".into()));
    }
    let mut v = start / Complex64::new(norm, 0.0);
    for _ in 0..max_iterations {
        let w = m * &v;
        let wn = w.norm();
        if !(wn > 0.0) {
            return Err(Error::InvalidInput("power iteration collapsed to zero".into()));
        }
        let mut next = w / Complex64::new(wn, 0.0);
        // fix the global phase so successive iterates are comparable
        let anchor = next.iter().copied().max_by(|a, b| a.norm().total_cmp(&b.norm()));
        if let Some(a) = anchor {
            if a.norm() > 0.0 {
                next *= a.conj() / Complex64::new(a.norm(), 0.0);
            }
        }
        let change = (&next - &v).norm();
        v = next;
        if change < tolerance {
            break;
        }
    }
    Ok(v)
}

/// Golden-section minimisation of a unimodal function on `[lo, hi]`.
pub fn golden_section_min<F: FnMut(f64) -> f64>(
    mut f: F,
    lo: f64,
    hi: f64,
    tolerance: f64,
    max_iterations: usize,
) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..max_iterations {
        if (b - a).abs() <= tolerance {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        c
    } else {
        d
    }
}
