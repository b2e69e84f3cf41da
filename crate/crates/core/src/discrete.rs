//! The n-point linear estimator and its optimal weight matrices.
//!
//! Observations at `a = t_1 < ... < t_n = b` enter through increments:
//!
//! ```text
//! theta_hat = M^{-1} { sum_i Phi_i Sigma^{-1} (Y(t_i) - Y(t_{i-1}))
//!                      + F(a) Sigma^{-1} Y(a) / a }
//! ```
//!
//! The estimator is unbiased iff `sum_i Phi_i Sigma^{-1} dF_i' = M0`, and
//! among unbiased choices the weights
//! `Phi_i* = M0 B^{-1} dF_i / (t_i - t_{i-1})` minimize the distance to the
//! continuous BLUE in the Loewner order, where
//! `B = sum_i dF_i Sigma^{-1} dF_i' / (t_i - t_{i-1})`. A singular B is
//! handled by its Moore-Penrose inverse and flagged.

use nalgebra::{DMatrix, DVector, Vector2};

use crate::blue::{info_matrix, InformationMatrix};
use crate::error::{Error, Result};
use crate::kernel::GroupCovariance;
use crate::linalg::{pseudo_inverse, spd_inverse, sym_condition, symmetrize, CONDITION_LIMIT};
use crate::model::CompositeModel;
use crate::quadrature::{integrate_matrix, GaussLegendre};

/// Singular-value cutoff (relative to the largest) for the pseudoinverse
/// branch when B is rank deficient.
const PINV_CUTOFF: f64 = 1e-12;

/// Ordered observation times with endpoints pinned to the model interval.
#[derive(Clone, Debug, PartialEq)]
pub struct Design {
    points: Vec<f64>,
}

impl Design {
    /// Validate strict monotonicity, n >= 2 and endpoint pinning.
    pub fn new(points: Vec<f64>, interval: (f64, f64)) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::TooFewPoints {
                n: points.len(),
                min: 2,
            });
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::UnsortedPoints);
        }
        let (a, b) = interval;
        let lo = points[0];
        let hi = *points.last().expect("n >= 2");
        let tol = 1e-12 * (b - a).abs().max(1.0);
        if (lo - a).abs() > tol || (hi - b).abs() > tol {
            return Err(Error::EndpointMismatch { lo, hi, a, b });
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.points[0], *self.points.last().expect("n >= 2"))
    }
}

/// Per-increment weight matrices `Phi_2, ..., Phi_n` (each p x 2).
#[derive(Clone, Debug)]
pub struct WeightMatrices {
    phis: Vec<DMatrix<f64>>,
    pseudo_inverse_used: bool,
}

impl WeightMatrices {
    pub fn new(phis: Vec<DMatrix<f64>>) -> Self {
        Self {
            phis,
            pseudo_inverse_used: false,
        }
    }

    /// One matrix per increment, ordered from (t_1, t_2] to (t_{n-1}, t_n].
    pub fn phis(&self) -> &[DMatrix<f64>] {
        &self.phis
    }

    /// Whether the optimal weights required the Moore-Penrose branch.
    pub fn pseudo_inverse_used(&self) -> bool {
        self.pseudo_inverse_used
    }
}

/// The increment information matrices of a design.
#[derive(Clone, Debug)]
pub struct BMatrices {
    /// `B_i = dF_i Sigma^{-1/2} / sqrt(dt_i)`, one per increment.
    pub per_increment: Vec<DMatrix<f64>>,
    /// `B = sum_i B_i B_i'`.
    pub total: DMatrix<f64>,
}

/// Discrete estimator summary: design, optimal weights, information and the
/// resulting covariance.
#[derive(Clone, Debug)]
pub struct DiscreteEstimatorSpec {
    pub design: Design,
    pub weights: WeightMatrices,
    pub info: InformationMatrix,
    pub cov: DMatrix<f64>,
}

/// Precomputed quantities of a (model, covariance) pair, reused across many
/// designs by the optimizer and the simulation module. Models clone cheaply
/// (shared closures), so the context owns its copies.
pub struct EstimatorContext {
    pub model: CompositeModel,
    pub gc: GroupCovariance,
    pub info: InformationMatrix,
    minv: DMatrix<f64>,
    sinv: DMatrix<f64>,
}

impl EstimatorContext {
    pub fn new(model: &CompositeModel, gc: &GroupCovariance) -> Result<Self> {
        let info = info_matrix(model, gc)?;
        let minv = symmetrize(&spd_inverse(&info.m, "information matrix M")?);
        Ok(Self {
            model: model.clone(),
            gc: *gc,
            info,
            minv,
            sinv: gc.inverse_dyn(),
        })
    }

    /// `M^{-1}`.
    pub fn minv(&self) -> &DMatrix<f64> {
        &self.minv
    }

    fn check_design(&self, design: &Design) -> Result<()> {
        let (a, b) = self.model.interval();
        let (lo, hi) = design.interval();
        let tol = 1e-12 * (b - a).max(1.0);
        if (lo - a).abs() > tol || (hi - b).abs() > tol {
            return Err(Error::EndpointMismatch { lo, hi, a, b });
        }
        Ok(())
    }

    /// Increment matrices `B_i` and their total `B`.
    pub fn b_matrices(&self, design: &Design) -> Result<BMatrices> {
        self.check_design(design)?;
        let pts = design.points();
        let p = self.model.p();
        let inv_sqrt = self.gc.inv_sqrt_dyn();
        let mut per = Vec::with_capacity(pts.len() - 1);
        let mut total = DMatrix::zeros(p, p);
        let mut prev = self.model.eval(pts[0]);
        for w in pts.windows(2) {
            let dt = w[1] - w[0];
            let cur = self.model.eval(w[1]);
            let df = &cur - &prev;
            let bi = &df * &inv_sqrt / dt.sqrt();
            total += &bi * bi.transpose();
            per.push(bi);
            prev = cur;
        }
        Ok(BMatrices {
            per_increment: per,
            total: symmetrize(&total),
        })
    }

    /// Optimal weights `Phi_i* = M0 B^{-1} dF_i / dt_i`, falling back to the
    /// Moore-Penrose inverse when B is singular.
    pub fn optimal_weights(&self, design: &Design) -> Result<WeightMatrices> {
        let (binv, pseudo) = self.b_inverse(design)?;
        let pts = design.points();
        let mut phis = Vec::with_capacity(pts.len() - 1);
        let mut prev = self.model.eval(pts[0]);
        for w in pts.windows(2) {
            let dt = w[1] - w[0];
            let cur = self.model.eval(w[1]);
            let df = &cur - &prev;
            phis.push(&self.info.m0 * &binv * df / dt);
            prev = cur;
        }
        Ok(WeightMatrices {
            phis,
            pseudo_inverse_used: pseudo,
        })
    }

    fn b_inverse(&self, design: &Design) -> Result<(DMatrix<f64>, bool)> {
        let b = self.b_matrices(design)?.total;
        let cond = sym_condition(&b);
        if cond.is_finite() && cond < CONDITION_LIMIT {
            if let Ok(inv) = spd_inverse(&b, "increment information B") {
                return Ok((inv, false));
            }
        }
        let (pinv, _) = pseudo_inverse(&b, PINV_CUTOFF);
        Ok((pinv, true))
    }

    /// Frobenius norm of the unbiasedness defect
    /// `M0 - sum_i Phi_i Sigma^{-1} dF_i'`.
    pub fn unbiasedness_residual(&self, design: &Design, weights: &WeightMatrices) -> Result<f64> {
        Ok(self.unbiasedness_defect(design, weights)?.norm())
    }

    fn unbiasedness_defect(
        &self,
        design: &Design,
        weights: &WeightMatrices,
    ) -> Result<DMatrix<f64>> {
        self.check_design(design)?;
        let pts = design.points();
        if weights.phis.len() != pts.len() - 1 {
            return Err(Error::LengthMismatch {
                expected: pts.len() - 1,
                got: weights.phis.len(),
            });
        }
        let mut acc = self.info.m0.clone();
        let mut prev = self.model.eval(pts[0]);
        for (w, phi) in pts.windows(2).zip(&weights.phis) {
            let cur = self.model.eval(w[1]);
            let df = &cur - &prev;
            acc -= phi * &self.sinv * df.transpose();
            prev = cur;
        }
        Ok(acc)
    }

    /// Covariance of the optimal-weight estimator:
    /// `M^{-1} { M0 B^{-1} M0 + F(a) Sigma^{-1} F'(a) / a } M^{-1}`.
    pub fn estimator_cov(&self, design: &Design) -> Result<DMatrix<f64>> {
        let (binv, _) = self.b_inverse(design)?;
        let mid = &self.info.m0 * binv * &self.info.m0 + &self.info.boundary;
        Ok(symmetrize(&(&self.minv * mid * &self.minv)))
    }

    /// Covariance of the estimator for arbitrary (not necessarily optimal)
    /// weights, from the linear form directly:
    /// `M^{-1} { sum_i dt_i Phi_i Sigma^{-1} Phi_i' + boundary } M^{-1}`.
    pub fn weighted_cov(&self, design: &Design, weights: &WeightMatrices) -> Result<DMatrix<f64>> {
        self.check_design(design)?;
        let pts = design.points();
        let mut mid = self.info.boundary.clone();
        for (w, phi) in pts.windows(2).zip(&weights.phis) {
            let dt = w[1] - w[0];
            mid += phi * &self.sinv * phi.transpose() * dt;
        }
        Ok(symmetrize(&(&self.minv * mid * &self.minv)))
    }

    /// Mean squared difference to the continuous BLUE,
    /// `E[(blue - theta_hat_n)(blue - theta_hat_n)']`, for arbitrary weights
    /// and a given parameter value. The bias part enters through
    /// `R theta theta' R'` with R the unbiasedness defect; it vanishes for
    /// unbiased weights.
    pub fn mse_vs_blue(
        &self,
        design: &Design,
        weights: &WeightMatrices,
        theta: &DVector<f64>,
    ) -> Result<DMatrix<f64>> {
        self.check_design(design)?;
        if theta.len() != self.model.p() {
            return Err(Error::LengthMismatch {
                expected: self.model.p(),
                got: theta.len(),
            });
        }
        let pts = design.points();
        if weights.phis.len() != pts.len() - 1 {
            return Err(Error::LengthMismatch {
                expected: pts.len() - 1,
                got: weights.phis.len(),
            });
        }
        let rule = GaussLegendre::new(32);
        let p = self.model.p();
        let mut q = DMatrix::<f64>::zeros(p, p);
        for (w, phi) in pts.windows(2).zip(&weights.phis) {
            let integrand = |s: f64| {
                let diff = self.model.deriv(s) - phi;
                &diff * &self.sinv * diff.transpose()
            };
            q += integrate_matrix(&integrand, w[0], w[1], 8, &rule);
        }
        let defect = self.unbiasedness_defect(design, weights)?;
        let bias = &defect * theta * theta.transpose() * defect.transpose();
        Ok(symmetrize(&(&self.minv * (q + bias) * &self.minv)))
    }

    /// Apply the estimator to observations at the design points.
    pub fn estimate(
        &self,
        design: &Design,
        weights: &WeightMatrices,
        observations: &[Vector2<f64>],
    ) -> Result<DVector<f64>> {
        self.check_design(design)?;
        let pts = design.points();
        if observations.len() != pts.len() {
            return Err(Error::LengthMismatch {
                expected: pts.len(),
                got: observations.len(),
            });
        }
        if weights.phis.len() != pts.len() - 1 {
            return Err(Error::LengthMismatch {
                expected: pts.len() - 1,
                got: weights.phis.len(),
            });
        }
        let sinv2 = self.gc.inverse();
        let mut acc: DVector<f64> = DVector::zeros(self.model.p());
        for (i, phi) in weights.phis.iter().enumerate() {
            let dy = sinv2 * (observations[i + 1] - observations[i]);
            acc += phi * DVector::from_column_slice(&[dy.x, dy.y]);
        }
        let a = pts[0];
        let ya = sinv2 * observations[0] / a;
        acc += self.model.eval(a) * DVector::from_column_slice(&[ya.x, ya.y]);
        Ok(&self.minv * acc)
    }

    /// Full summary with optimal weights.
    pub fn spec(&self, design: &Design) -> Result<DiscreteEstimatorSpec> {
        let weights = self.optimal_weights(design)?;
        let cov = self.estimator_cov(design)?;
        Ok(DiscreteEstimatorSpec {
            design: design.clone(),
            weights,
            info: self.info.clone(),
            cov,
        })
    }
}

/// See [`EstimatorContext::b_matrices`].
pub fn b_matrices(
    model: &CompositeModel,
    gc: &GroupCovariance,
    design: &Design,
) -> Result<BMatrices> {
    EstimatorContext::new(model, gc)?.b_matrices(design)
}

/// See [`EstimatorContext::optimal_weights`].
pub fn optimal_weights(
    model: &CompositeModel,
    gc: &GroupCovariance,
    design: &Design,
) -> Result<WeightMatrices> {
    EstimatorContext::new(model, gc)?.optimal_weights(design)
}

/// See [`EstimatorContext::unbiasedness_residual`].
pub fn unbiasedness_residual(
    model: &CompositeModel,
    gc: &GroupCovariance,
    design: &Design,
    weights: &WeightMatrices,
) -> Result<f64> {
    EstimatorContext::new(model, gc)?.unbiasedness_residual(design, weights)
}

/// See [`EstimatorContext::estimator_cov`].
pub fn estimator_cov(
    model: &CompositeModel,
    gc: &GroupCovariance,
    design: &Design,
) -> Result<DMatrix<f64>> {
    EstimatorContext::new(model, gc)?.estimator_cov(design)
}

/// See [`EstimatorContext::mse_vs_blue`].
pub fn mse_vs_blue(
    model: &CompositeModel,
    gc: &GroupCovariance,
    design: &Design,
    weights: &WeightMatrices,
    theta: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    EstimatorContext::new(model, gc)?.mse_vs_blue(design, weights, theta)
}

/// See [`EstimatorContext::estimate`].
pub fn estimate(
    model: &CompositeModel,
    gc: &GroupCovariance,
    design: &Design,
    weights: &WeightMatrices,
    observations: &[Vector2<f64>],
) -> Result<DVector<f64>> {
    EstimatorContext::new(model, gc)?.estimate(design, weights, observations)
}
