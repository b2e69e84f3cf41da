//! Best linear unbiased estimation in the continuous-observation model.
//!
//! With the full trajectory observed on [a, b], a > 0, the information
//! matrix is
//!
//! ```text
//! M = int_a^b Fdot(t) Sigma^{-1} Fdot'(t) dt + F(a) Sigma^{-1} F'(a) / a
//! ```
//!
//! and the BLUE has covariance `M^{-1}`. The integral part `M0` doubles as
//! the unbiasedness target of the discrete estimator. Starting the interval
//! at a = 0 makes the initial observation deterministic; depending on the
//! rank of F(0) up to two parameters are then recovered exactly from Y(0)
//! and the rest are estimated in a reduced model that vanishes at 0.

use nalgebra::{DMatrix, DVector, Vector2};

use crate::error::{Error, Result};
use crate::kernel::GroupCovariance;
use crate::linalg::{spd_inverse, sym_condition, symmetrize};
use crate::model::{CompositeModel, Group};
use crate::quadrature::integrate_matrix_with_error;

/// Information matrix of the continuous model, split into its integral part
/// and the boundary term.
#[derive(Clone, Debug)]
pub struct InformationMatrix {
    /// M = M0 + boundary.
    pub m: DMatrix<f64>,
    /// Integral part int_a^b Fdot Sigma^{-1} Fdot' dt.
    pub m0: DMatrix<f64>,
    /// Boundary part F(a) Sigma^{-1} F'(a) / a.
    pub boundary: DMatrix<f64>,
    /// Largest per-entry change when the quadrature panel count is doubled.
    pub quadrature_error: f64,
}

/// Covariance of the continuous-observation BLUE, `M^{-1}`.
#[derive(Clone, Debug)]
pub struct BlueCovariance {
    pub cov: DMatrix<f64>,
}

/// Integral part `M0` alone (also used by models starting at zero).
pub(crate) fn integral_information(
    model: &CompositeModel,
    gc: &GroupCovariance,
) -> (DMatrix<f64>, f64) {
    let (a, b) = model.interval();
    let sinv = gc.inverse_dyn();
    let integrand = move |t: f64| {
        let fd = model.deriv(t);
        &fd * &sinv * fd.transpose()
    };
    let (m0, err) = integrate_matrix_with_error(&integrand, a, b);
    (symmetrize(&m0), err)
}

/// Information matrix for a model with a > 0.
pub fn info_matrix(model: &CompositeModel, gc: &GroupCovariance) -> Result<InformationMatrix> {
    let (a, _) = model.interval();
    if a == 0.0 {
        return Err(Error::ZeroStart);
    }
    let (m0, quadrature_error) = integral_information(model, gc);
    let fa = model.eval(a);
    let boundary = symmetrize(&(&fa * gc.inverse_dyn() * fa.transpose() / a));
    let m = &m0 + &boundary;
    // fail fast when M is unusable; the condition number goes in the report
    let cond = sym_condition(&m);
    if m.clone().cholesky().is_none() {
        return Err(Error::SingularMatrix {
            what: "information matrix M".into(),
            cond,
        });
    }
    Ok(InformationMatrix {
        m,
        m0,
        boundary,
        quadrature_error,
    })
}

/// Covariance of the BLUE: inverse of the information matrix.
pub fn blue_cov(model: &CompositeModel, gc: &GroupCovariance) -> Result<BlueCovariance> {
    let info = info_matrix(model, gc)?;
    let cov = spd_inverse(&info.m, "information matrix M")?;
    Ok(BlueCovariance {
        cov: symmetrize(&cov),
    })
}

/// Per-group information matrix `M_ll = int fdot fdot' dt + f(a) f'(a) / a`
/// of the single-group model (without the sigma factor).
fn group_information(model: &CompositeModel, group: Group) -> Result<DMatrix<f64>> {
    let basis = model.group_basis(group)?;
    let (a, b) = model.interval();
    let integrand = move |t: f64| {
        let d = basis.deriv(t);
        &d * d.transpose()
    };
    let (int, _) = integrate_matrix_with_error(&integrand, a, b);
    let basis = model.group_basis(group)?;
    let fa = basis.eval(a);
    Ok(symmetrize(&(int + &fa * fa.transpose() / a)))
}

/// Covariance of the marginal (single-group) BLUE:
/// `sigma_l^2 M_ll^{-1}`.
pub fn marginal_cov(
    model: &CompositeModel,
    gc: &GroupCovariance,
    group: Group,
) -> Result<DMatrix<f64>> {
    let (a, _) = model.interval();
    if a == 0.0 {
        return Err(Error::ZeroStart);
    }
    let mll = group_information(model, group)?;
    let inv = spd_inverse(&mll, "group information matrix")?;
    let s = gc.sigma(group);
    Ok(inv * (s * s))
}

/// Loewner gap `Cov(marginal) - Cov(simultaneous BLUE, group block)`.
///
/// Simultaneous estimation is never worse than per-group estimation, so the
/// gap is positive semidefinite; it vanishes when rho = 0 and when both
/// groups share the same regression functions.
pub fn loewner_gap(
    model: &CompositeModel,
    gc: &GroupCovariance,
    group: Group,
) -> Result<DMatrix<f64>> {
    let marginal = marginal_cov(model, gc, group)?;
    let full = blue_cov(model, gc)?.cov;
    let idx = model.group_indices(group)?;
    let block = DMatrix::from_fn(idx.len(), idx.len(), |r, c| full[(idx[r], idx[c])]);
    Ok(marginal - block)
}

/// BLUE covariance for models starting at a = 0, where Y(0) = F'(0) theta is
/// deterministic.
#[derive(Clone, Debug)]
pub struct ZeroStartBlue {
    /// Rank of F(0): number of parameters recovered exactly from Y(0).
    pub rank: usize,
    /// Parameter indices recovered deterministically (pivot order).
    pub fixed: Vec<usize>,
    /// Remaining parameter indices, in original order.
    pub free: Vec<usize>,
    /// Covariance of the estimator of the free parameters.
    pub reduced_cov: DMatrix<f64>,
    /// Recovery map: theta_fixed = recovery_obs * Y(0) + recovery_theta * theta_free.
    pub recovery_obs: DMatrix<f64>,
    pub recovery_theta: DMatrix<f64>,
    /// Covariance of the full p-vector estimator (rank p - rank(F(0))).
    pub full_cov: DMatrix<f64>,
    /// The reduced model over the free parameters; it vanishes at t = 0.
    pub reduced_model: Option<CompositeModel>,
}

const RANK_TOL: f64 = 1e-10;

/// BLUE covariance on [0, b] with the rank(F(0)) case split.
pub fn blue_cov_a0(model: &CompositeModel, gc: &GroupCovariance) -> Result<ZeroStartBlue> {
    let (a, b) = model.interval();
    if a != 0.0 {
        return Err(Error::NonZeroStart { a });
    }
    let p = model.p();
    let f0 = model.eval(0.0); // p x 2
    let svd = f0.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > RANK_TOL * smax.max(f64::MIN_POSITIVE))
        .count();

    match rank {
        0 => {
            let (m0, _) = integral_information(model, gc);
            let cov = symmetrize(&spd_inverse(&m0, "information matrix M0")?);
            Ok(ZeroStartBlue {
                rank: 0,
                fixed: vec![],
                free: (0..p).collect(),
                reduced_cov: cov.clone(),
                recovery_obs: DMatrix::zeros(0, 2),
                recovery_theta: DMatrix::zeros(0, p),
                full_cov: cov,
                reduced_model: None,
            })
        }
        1 => reduce_rank1(model, gc, &f0, b),
        _ => reduce_rank2(model, gc, &f0, b),
    }
}

/// One informative equation in Y(0): pivot on the largest entry of F'(0),
/// substitute that parameter out and estimate the rest in a model vanishing
/// at zero.
fn reduce_rank1(
    model: &CompositeModel,
    gc: &GroupCovariance,
    f0: &DMatrix<f64>,
    b: f64,
) -> Result<ZeroStartBlue> {
    let p = model.p();
    // pivot: row group i*, parameter column j* with the largest |F'(0)| entry
    let (mut pr, mut pj, mut best) = (0usize, 0usize, 0.0f64);
    for j in 0..p {
        for i in 0..2 {
            if f0[(j, i)].abs() > best {
                best = f0[(j, i)].abs();
                pr = i;
                pj = j;
            }
        }
    }
    let pivot = f0[(pj, pr)];
    let free: Vec<usize> = (0..p).filter(|&j| j != pj).collect();
    let nf = free.len();

    // F~[jj, i](t) = F[j, i](t) - F[pj, i](t) * F(0)[j, pr] / pivot
    let coeff: Vec<f64> = free.iter().map(|&j| f0[(j, pr)] / pivot).collect();
    let reduced = {
        let m = model.clone();
        let m2 = model.clone();
        let free_e = free.clone();
        let free_d = free.clone();
        let (ce, cd) = (coeff.clone(), coeff.clone());
        let pj_e = pj;
        let pj_d = pj;
        CompositeModel::general(
            nf,
            (0.0, b),
            move |t| {
                let f = m.eval(t);
                DMatrix::from_fn(nf, 2, |jj, i| f[(free_e[jj], i)] - ce[jj] * f[(pj_e, i)])
            },
            move |t| {
                let f = m2.deriv(t);
                DMatrix::from_fn(nf, 2, |jj, i| f[(free_d[jj], i)] - cd[jj] * f[(pj_d, i)])
            },
        )?
    };
    let (m0, _) = integral_information(&reduced, gc);
    let reduced_cov = symmetrize(&spd_inverse(&m0, "reduced information matrix M0")?);

    // theta_pj = (Y_pr(0) - sum_free F(0)[j, pr] theta_j) / pivot
    let mut recovery_obs = DMatrix::zeros(1, 2);
    recovery_obs[(0, pr)] = 1.0 / pivot;
    let recovery_theta = DMatrix::from_fn(1, nf, |_, jj| -f0[(free[jj], pr)] / pivot);

    let full_cov = assemble_full_cov(p, &[pj], &free, &recovery_theta, &reduced_cov);
    Ok(ZeroStartBlue {
        rank: 1,
        fixed: vec![pj],
        free,
        reduced_cov,
        recovery_obs,
        recovery_theta,
        full_cov,
        reduced_model: Some(reduced),
    })
}

/// Two informative equations in Y(0): pick two parameter columns whose 2 x 2
/// block A(0) of F'(0) is best conditioned, recover those two parameters
/// from Y(0) and estimate the rest in a model vanishing at zero.
fn reduce_rank2(
    model: &CompositeModel,
    gc: &GroupCovariance,
    f0: &DMatrix<f64>,
    b: f64,
) -> Result<ZeroStartBlue> {
    let p = model.p();
    // column pivoting on F'(0) (2 x p with columns indexed by parameters):
    // first the column with the largest norm, then the one maximizing |det|
    let col = |j: usize| Vector2::new(f0[(j, 0)], f0[(j, 1)]);
    let j1 = (0..p)
        .max_by(|&x, &y| col(x).norm().total_cmp(&col(y).norm()))
        .expect("p >= 1");
    let (j2, det) = (0..p)
        .filter(|&j| j != j1)
        .map(|j| {
            let d = col(j1).x * col(j).y - col(j1).y * col(j).x;
            (j, d)
        })
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .ok_or(Error::PivotNotFound)?;
    let scale = col(j1).norm() * col(j2).norm();
    if det.abs() <= RANK_TOL * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::PivotNotFound);
    }

    // A(t): rows = groups, columns = pivot parameters (j1, j2)
    let a_at = {
        let m = model.clone();
        move |t: f64| {
            let f = m.eval(t);
            nalgebra::Matrix2::new(f[(j1, 0)], f[(j2, 0)], f[(j1, 1)], f[(j2, 1)])
        }
    };
    let adot_at = {
        let m = model.clone();
        move |t: f64| {
            let f = m.deriv(t);
            nalgebra::Matrix2::new(f[(j1, 0)], f[(j2, 0)], f[(j1, 1)], f[(j2, 1)])
        }
    };
    let a0_inv = a_at(0.0).try_inverse().ok_or(Error::PivotNotFound)?;

    let free: Vec<usize> = (0..p).filter(|&j| j != j1 && j != j2).collect();
    let nf = free.len();
    let free_cols0: Vec<Vector2<f64>> = free.iter().map(|&j| col(j)).collect();

    // F~ columns (as 2-vectors over groups):
    // f~_j(t) = col_j(t) - A(t) A(0)^{-1} col_j(0)
    let reduced = if nf == 0 {
        None
    } else {
        let m = model.clone();
        let m2 = model.clone();
        let (fe, fd) = (free.clone(), free.clone());
        let (c0e, c0d) = (free_cols0.clone(), free_cols0.clone());
        let (ae, ad) = (a_at.clone(), adot_at);
        Some(CompositeModel::general(
            nf,
            (0.0, b),
            move |t| {
                let f = m.eval(t);
                let at = ae(t) * a0_inv;
                DMatrix::from_fn(nf, 2, |jj, i| {
                    let corr = at * c0e[jj];
                    f[(fe[jj], i)] - corr[i]
                })
            },
            move |t| {
                let f = m2.deriv(t);
                let at = ad(t) * a0_inv;
                DMatrix::from_fn(nf, 2, |jj, i| {
                    let corr = at * c0d[jj];
                    f[(fd[jj], i)] - corr[i]
                })
            },
        )?)
    };
    let reduced_cov = match &reduced {
        None => DMatrix::zeros(0, 0),
        Some(r) => {
            let (m0, _) = integral_information(r, gc);
            symmetrize(&spd_inverse(&m0, "reduced information matrix M0")?)
        }
    };

    // (theta_j1, theta_j2)' = A(0)^{-1} (Y(0) - sum_free col_j(0) theta_j)
    let recovery_obs = DMatrix::from_fn(2, 2, |r, c| a0_inv[(r, c)]);
    let recovery_theta = DMatrix::from_fn(2, nf, |r, jj| {
        let v = a0_inv * free_cols0[jj];
        -v[r]
    });

    let full_cov = assemble_full_cov(p, &[j1, j2], &free, &recovery_theta, &reduced_cov);
    Ok(ZeroStartBlue {
        rank: 2,
        fixed: vec![j1, j2],
        free,
        reduced_cov,
        recovery_obs,
        recovery_theta,
        full_cov,
        reduced_model: reduced,
    })
}

/// Covariance of the full estimator: fixed components are affine in the free
/// ones (Y(0) is deterministic), so `theta_hat = T theta_hat_free + const`.
fn assemble_full_cov(
    p: usize,
    fixed: &[usize],
    free: &[usize],
    recovery_theta: &DMatrix<f64>,
    reduced_cov: &DMatrix<f64>,
) -> DMatrix<f64> {
    let nf = free.len();
    let mut t = DMatrix::zeros(p, nf);
    for (jj, &j) in free.iter().enumerate() {
        t[(j, jj)] = 1.0;
    }
    for (r, &j) in fixed.iter().enumerate() {
        for jj in 0..nf {
            t[(j, jj)] = recovery_theta[(r, jj)];
        }
    }
    symmetrize(&(&t * reduced_cov * t.transpose()))
}

/// Left-point discretization of the continuous BLUE
/// `M^{-1} ( int Fdot Sigma^{-1} dY + F(a) Sigma^{-1} Y(a) / a )`
/// from a trajectory sampled on a fine grid. Validation-only: the grid must
/// have at least 1000 points with t_1 = a and t_N = b.
pub fn blue_estimate_path(
    model: &CompositeModel,
    gc: &GroupCovariance,
    times: &[f64],
    values: &[Vector2<f64>],
) -> Result<DVector<f64>> {
    const MIN_GRID: usize = 1000;
    let (a, b) = model.interval();
    if a == 0.0 {
        return Err(Error::ZeroStart);
    }
    if times.len() < MIN_GRID {
        return Err(Error::GridTooCoarse {
            n: times.len(),
            min: MIN_GRID,
        });
    }
    if values.len() != times.len() {
        return Err(Error::LengthMismatch {
            expected: times.len(),
            got: values.len(),
        });
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::UnsortedPoints);
    }
    let tol = 1e-9 * (b - a);
    if (times[0] - a).abs() > tol || (times[times.len() - 1] - b).abs() > tol {
        return Err(Error::EndpointMismatch {
            lo: times[0],
            hi: times[times.len() - 1],
            a,
            b,
        });
    }

    let info = info_matrix(model, gc)?;
    let minv = spd_inverse(&info.m, "information matrix M")?;
    let sinv = gc.inverse();
    let mut acc = DVector::zeros(model.p());
    for k in 0..times.len() - 1 {
        let fd = model.deriv(times[k]);
        let dy = sinv * (values[k + 1] - values[k]);
        acc += &fd * DVector::from_column_slice(&[dy.x, dy.y]);
    }
    let ya = sinv * values[0] / a;
    acc += model.eval(a) * DVector::from_column_slice(&[ya.x, ya.y]);
    Ok(minv * acc)
}
