//! Small dense symmetric matrix helpers with explicit singularity guards.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Condition guard for symmetric inversion; beyond this the matrix is
/// reported singular instead of silently regularized.
pub(crate) const CONDITION_LIMIT: f64 = 1e14;

/// Eigenvalue condition number of a symmetric matrix (|lambda|_max / |lambda|_min).
pub(crate) fn sym_condition(m: &DMatrix<f64>) -> f64 {
    let eig = m.clone().symmetric_eigen();
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for &l in eig.eigenvalues.iter() {
        lo = lo.min(l.abs());
        hi = hi.max(l.abs());
    }
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Inverse of a symmetric positive definite matrix via Cholesky, guarded by
/// the condition limit. `what` names the matrix in error reports.
pub(crate) fn spd_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let cond = sym_condition(m);
    if !cond.is_finite() || cond > CONDITION_LIMIT {
        return Err(Error::SingularMatrix {
            what: what.to_string(),
            cond,
        });
    }
    let chol = m.clone().cholesky().ok_or_else(|| Error::SingularMatrix {
        what: what.to_string(),
        cond,
    })?;
    Ok(chol.inverse())
}

/// Symmetric factor L with L Lᵀ = m, clamping tiny negative eigenvalues to
/// zero so nearly singular covariances can still be sampled from.
pub(crate) fn psd_factor(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let vals = eig.eigenvalues.map(|l| if l > 0.0 { l.sqrt() } else { 0.0 });
    &eig.eigenvectors * DMatrix::from_diagonal(&vals)
}

/// Moore-Penrose pseudoinverse with singular values below
/// `cutoff_rel * sigma_max` treated as zero. The flag reports whether any
/// singular value was truncated (i.e. the matrix was rank deficient).
pub(crate) fn pseudo_inverse(m: &DMatrix<f64>, cutoff_rel: f64) -> (DMatrix<f64>, bool) {
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let cutoff = cutoff_rel * smax.max(f64::MIN_POSITIVE);
    let truncated = svd.singular_values.iter().any(|&s| s <= cutoff);
    let pinv = svd
        .pseudo_inverse(cutoff)
        .unwrap_or_else(|_| DMatrix::zeros(m.ncols(), m.nrows()));
    (pinv, truncated)
}

/// Force exact symmetry on a numerically symmetric matrix.
pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Smallest eigenvalue of a symmetric matrix.
#[cfg_attr(not(test), allow(dead_code))]
pub(crate) fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let eig = m.clone().symmetric_eigen();
    eig.eigenvalues.min()
}
