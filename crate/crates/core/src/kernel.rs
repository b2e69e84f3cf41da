//! Covariance structure: the 2 x 2 between-group matrix and the within-group
//! process kernels.
//!
//! The error model is `eta(t) = Sigma^{1/2} eps(t)` with `eps` a pair of
//! independent centered Gaussian Markov processes. The base case is Brownian
//! motion, `K(s, t) = min(s, t)`. Any Gaussian Markov process has a
//! triangular kernel `K(s, t) = u(min(s,t)) v(max(s,t))` with `q = u/v`
//! positive and strictly increasing, and the time change `t~ = q(t)`
//! together with the scaling `Y~ = Y/v` turns such a model into one with
//! Brownian errors, so all estimation theory is reused through
//! [`to_brownian`].

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, Matrix2, Vector2};

use crate::error::{Error, Result};
use crate::model::{CompositeModel, CurveBasis, ModelStructure};
use crate::quadrature::sample_grid;

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Between-group covariance `Sigma` with variances `sigma_i^2` and
/// correlation `rho` at equal times.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroupCovariance {
    sigma1: f64,
    sigma2: f64,
    rho: f64,
}

impl GroupCovariance {
    pub fn new(sigma1: f64, sigma2: f64, rho: f64) -> Result<Self> {
        for value in [sigma1, sigma2] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::InvalidSigma { value });
            }
        }
        if !(rho.abs() < 1.0) {
            return Err(Error::InvalidCorrelation { rho });
        }
        Ok(Self {
            sigma1,
            sigma2,
            rho,
        })
    }

    pub fn sigma1(&self) -> f64 {
        self.sigma1
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn sigma(&self, group: crate::model::Group) -> f64 {
        match group {
            crate::model::Group::One => self.sigma1,
            crate::model::Group::Two => self.sigma2,
        }
    }

    /// The matrix `Sigma`.
    pub fn matrix(&self) -> Matrix2<f64> {
        let c = self.sigma1 * self.sigma2 * self.rho;
        Matrix2::new(self.sigma1 * self.sigma1, c, c, self.sigma2 * self.sigma2)
    }

    /// Closed-form inverse of `Sigma`.
    pub fn inverse(&self) -> Matrix2<f64> {
        let det = (self.sigma1 * self.sigma2).powi(2) * (1.0 - self.rho * self.rho);
        let c = self.sigma1 * self.sigma2 * self.rho;
        Matrix2::new(self.sigma2 * self.sigma2, -c, -c, self.sigma1 * self.sigma1) / det
    }

    /// The unique symmetric positive definite square root of `Sigma`,
    /// computed by eigendecomposition. A canonical root keeps simulated
    /// paths reproducible; any other root gives identical covariances.
    pub fn sqrt(&self) -> Matrix2<f64> {
        let eig = self.matrix().symmetric_eigen();
        let vals = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
        let v = eig.eigenvectors;
        v * Matrix2::from_diagonal(&vals) * v.transpose()
    }

    /// Inverse of the symmetric square root.
    pub fn inv_sqrt(&self) -> Matrix2<f64> {
        let eig = self.matrix().symmetric_eigen();
        let vals = eig.eigenvalues.map(|l| 1.0 / l.max(f64::MIN_POSITIVE).sqrt());
        let v = eig.eigenvectors;
        v * Matrix2::from_diagonal(&vals) * v.transpose()
    }

    #[cfg_attr(not(test), allow(dead_code))]
    pub(crate) fn matrix_dyn(&self) -> DMatrix<f64> {
        to_dyn(&self.matrix())
    }

    pub(crate) fn inverse_dyn(&self) -> DMatrix<f64> {
        to_dyn(&self.inverse())
    }

    pub(crate) fn inv_sqrt_dyn(&self) -> DMatrix<f64> {
        to_dyn(&self.inv_sqrt())
    }
}

fn to_dyn(m: &Matrix2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(2, 2, |i, j| m[(i, j)])
}

/// Symmetric positive definite square root of `Sigma` (free-function form).
pub fn sigma_sqrt(gc: &GroupCovariance) -> Matrix2<f64> {
    gc.sqrt()
}

/// Correlation of `Y_1(t_j)` and `Y_2(t_k)` under Brownian errors:
/// `rho * sqrt(min(t_j, t_k) / max(t_j, t_k))`.
pub fn cross_correlation(gc: &GroupCovariance, tj: f64, tk: f64) -> Result<f64> {
    for t in [tj, tk] {
        if !(t > 0.0) {
            return Err(Error::NonPositiveTime { t });
        }
    }
    Ok(gc.rho() * (tj.min(tk) / tj.max(tk)).sqrt())
}

/// Gram matrix of Brownian motion at ordered times: entry (j, k) is
/// `min(t_j, t_k)`.
pub fn brownian_gram(points: &[f64]) -> Result<DMatrix<f64>> {
    if points.is_empty() {
        return Err(Error::TooFewPoints { n: 0, min: 1 });
    }
    if points[0] < 0.0 {
        return Err(Error::NonPositiveTime { t: points[0] });
    }
    if points.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::UnsortedPoints);
    }
    let n = points.len();
    Ok(DMatrix::from_fn(n, n, |j, k| points[j].min(points[k])))
}

/// A triangular (Gaussian Markov) covariance kernel
/// `K(s, t) = u(min(s,t)) v(max(s,t))` with `q = u/v` increasing.
#[derive(Clone)]
pub struct TriangularKernel {
    name: String,
    u: ScalarFn,
    udot: ScalarFn,
    v: ScalarFn,
    vdot: ScalarFn,
    /// Closed-form inverse of q when available; otherwise bisection is used.
    qinv: Option<ScalarFn>,
}

impl fmt::Debug for TriangularKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TriangularKernel")
            .field("name", &self.name)
            .finish()
    }
}

impl TriangularKernel {
    pub fn new(
        name: impl Into<String>,
        u: impl Fn(f64) -> f64 + Send + Sync + 'static,
        udot: impl Fn(f64) -> f64 + Send + Sync + 'static,
        v: impl Fn(f64) -> f64 + Send + Sync + 'static,
        vdot: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            u: Arc::new(u),
            udot: Arc::new(udot),
            v: Arc::new(v),
            vdot: Arc::new(vdot),
            qinv: None,
        }
    }

    pub fn with_q_inverse(mut self, qinv: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.qinv = Some(Arc::new(qinv));
        self
    }

    /// Brownian motion: u(t) = t, v(t) = 1.
    pub fn brownian() -> Self {
        Self::new("brownian", |t| t, |_| 1.0, |_| 1.0, |_| 0.0).with_q_inverse(|tt| tt)
    }

    /// Scaled Brownian motion: u(t) = c t, v(t) = 1, K(s,t) = c min(s,t).
    pub fn scaled_brownian(c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "scaled Brownian kernel needs c > 0, got {c}"
            )));
        }
        Ok(
            Self::new("scaled_brownian", move |t| c * t, move |_| c, |_| 1.0, |_| 0.0)
                .with_q_inverse(move |tt| tt / c),
        )
    }

    /// Exponential kernel `K(s, t) = exp(-lambda |t - s|)` (the stationary
    /// Ornstein-Uhlenbeck covariance): u(t) = e^{lambda t}, v(t) = e^{-lambda t}.
    pub fn ornstein_uhlenbeck(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "exponential kernel needs lambda > 0, got {lambda}"
            )));
        }
        Ok(Self::new(
            "ornstein_uhlenbeck",
            move |t| (lambda * t).exp(),
            move |t| lambda * (lambda * t).exp(),
            move |t| (-lambda * t).exp(),
            move |t| -lambda * (-lambda * t).exp(),
        )
        .with_q_inverse(move |tt| tt.ln() / (2.0 * lambda)))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn u(&self, t: f64) -> f64 {
        (self.u)(t)
    }

    pub fn udot(&self, t: f64) -> f64 {
        (self.udot)(t)
    }

    pub fn v(&self, t: f64) -> f64 {
        (self.v)(t)
    }

    pub fn vdot(&self, t: f64) -> f64 {
        (self.vdot)(t)
    }

    /// The shape function q = u / v.
    pub fn q(&self, t: f64) -> f64 {
        (self.u)(t) / (self.v)(t)
    }

    /// Kernel value K(s, t) = u(min) v(max).
    pub fn value(&self, s: f64, t: f64) -> f64 {
        (self.u)(s.min(t)) * (self.v)(s.max(t))
    }

    /// Invert q on [a, b]: closed form when known, bisection otherwise.
    pub fn q_inverse(&self, target: f64, interval: (f64, f64)) -> f64 {
        if let Some(qi) = &self.qinv {
            return qi(target);
        }
        let (mut lo, mut hi) = interval;
        if target <= self.q(lo) {
            return lo;
        }
        if target >= self.q(hi) {
            return hi;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.q(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= f64::EPSILON * mid.abs().max(1.0) {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    /// Check the kernel assumptions on the interval: v nonvanishing, q
    /// positive and strictly increasing (500-point grid).
    pub fn validate(&self, interval: (f64, f64)) -> Result<()> {
        let grid = sample_grid(interval.0, interval.1, 500);
        let mut prev = f64::NEG_INFINITY;
        for &t in &grid {
            if (self.v)(t).abs() < 1e-300 {
                return Err(Error::KernelScaleZero { t });
            }
            let q = self.q(t);
            if !(q > 0.0 && q.is_finite() && q > prev) {
                return Err(Error::KernelNotIncreasing { t });
            }
            prev = q;
        }
        Ok(())
    }
}

/// Result of transforming a triangular-kernel model to Brownian time.
///
/// The transformed model lives on `[q(a), q(b)]`, keeps the same parameter
/// vector, and has plain Brownian within-group errors. Observations map as
/// `Y~(q(t)) = Y(t) / v(t)`.
pub struct BrownianTransform {
    model: CompositeModel,
    kernel: TriangularKernel,
    original_interval: (f64, f64),
}

impl BrownianTransform {
    pub fn model(&self) -> &CompositeModel {
        &self.model
    }

    /// Forward time map t~ = q(t).
    pub fn map_time(&self, t: f64) -> f64 {
        self.kernel.q(t)
    }

    /// Inverse time map t = q^{-1}(t~).
    pub fn invert_time(&self, tt: f64) -> f64 {
        self.kernel.q_inverse(tt, self.original_interval)
    }

    /// Observation rescaling at original time t: `Y~ = Y / v(t)`.
    pub fn scale_observation(&self, t: f64, y: Vector2<f64>) -> Vector2<f64> {
        y / self.kernel.v(t)
    }
}

/// Transform a model with triangular-kernel errors into an equivalent model
/// with Brownian errors on `[q(a), q(b)]`:
/// `F~(t~) = F(q^{-1}(t~)) / v(q^{-1}(t~))`.
pub fn to_brownian(model: &CompositeModel, kernel: &TriangularKernel) -> Result<BrownianTransform> {
    let interval = model.interval();
    kernel.validate(interval)?;
    let new_interval = (kernel.q(interval.0), kernel.q(interval.1));

    let transformed = match model.structure() {
        ModelStructure::Separate { f1, f2 } => CompositeModel::separate(
            transform_basis(f1, kernel, interval),
            transform_basis(f2, kernel, interval),
            new_interval,
        )?,
        ModelStructure::Shared { f0, f1, f2 } => CompositeModel::shared(
            transform_basis(f0, kernel, interval),
            transform_basis(f1, kernel, interval),
            transform_basis(f2, kernel, interval),
            new_interval,
        )?,
        ModelStructure::General => {
            let k = kernel.clone();
            let m = model.clone();
            let k2 = kernel.clone();
            let m2 = model.clone();
            CompositeModel::general(
                model.p(),
                new_interval,
                move |tt| {
                    let s = k.q_inverse(tt, interval);
                    m.eval(s) / k.v(s)
                },
                move |tt| {
                    let s = k2.q_inverse(tt, interval);
                    transformed_deriv(&m2.eval(s), &m2.deriv(s), &k2, s)
                },
            )?
        }
    };

    Ok(BrownianTransform {
        model: transformed,
        kernel: kernel.clone(),
        original_interval: interval,
    })
}

/// d/dt~ of F(q^{-1}(t~)) / v(q^{-1}(t~)) at s = q^{-1}(t~):
/// `(Fdot v - F vdot) / (udot v - u vdot)` since v^2 qdot = udot v - u vdot.
fn transformed_deriv(
    f: &DMatrix<f64>,
    fdot: &DMatrix<f64>,
    k: &TriangularKernel,
    s: f64,
) -> DMatrix<f64> {
    let wronskian = k.udot(s) * k.v(s) - k.u(s) * k.vdot(s);
    (fdot * k.v(s) - f * k.vdot(s)) / wronskian
}

fn transform_basis(basis: &CurveBasis, kernel: &TriangularKernel, interval: (f64, f64)) -> CurveBasis {
    let (b1, b2) = (basis.clone(), basis.clone());
    let (k1, k2) = (kernel.clone(), kernel.clone());
    CurveBasis::new(
        format!("{}~", basis.name()),
        basis.dim(),
        move |tt| {
            let s = k1.q_inverse(tt, interval);
            b1.eval(s) / k1.v(s)
        },
        move |tt| {
            let s = k2.q_inverse(tt, interval);
            let wronskian = k2.udot(s) * k2.v(s) - k2.u(s) * k2.vdot(s);
            (b2.deriv(s) * k2.v(s) - b2.eval(s) * k2.vdot(s)) / wronskian
        },
    )
    .expect("transformed basis keeps its dimension")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand_chacha::{rand_core::SeedableRng, ChaCha8Rng};

    #[test]
    fn sigma_matrix_and_inverse() {
        let gc = GroupCovariance::new(2.0, 1.0, 0.3).unwrap();
        let s = gc.matrix();
        assert_eq!(s, Matrix2::new(4.0, 0.6, 0.6, 1.0));
        let id = s * gc.inverse();
        assert!((id - Matrix2::identity()).abs().max() < 1e-12);
    }

    #[test]
    fn sqrt_identity_case() {
        let gc = GroupCovariance::new(1.0, 1.0, 0.0).unwrap();
        assert!((gc.sqrt() - Matrix2::identity()).abs().max() < 1e-14);
    }

    #[test]
    fn sqrt_diagonal_case() {
        let gc = GroupCovariance::new(2.0, 1.0, 0.0).unwrap();
        assert!((gc.sqrt() - Matrix2::new(2.0, 0.0, 0.0, 1.0)).abs().max() < 1e-14);
    }

    #[test]
    fn sqrt_squares_back_and_is_symmetric_psd() {
        // independent closed-form oracle for the 2x2 symmetric root:
        // sqrt(A) = (A + sqrt(det) I) / sqrt(tr + 2 sqrt(det))
        let gc = GroupCovariance::new(1.0, 1.0, 0.5).unwrap();
        let s = gc.sqrt();
        assert!((s * s - gc.matrix()).abs().max() < 1e-12);
        assert!((s - s.transpose()).abs().max() < 1e-14);
        let a = gc.matrix();
        let sd = a.determinant().sqrt();
        let closed = (a + Matrix2::identity() * sd) / (a.trace() + 2.0 * sd).sqrt();
        assert!((s - closed).abs().max() < 1e-12);
        let eig = s.symmetric_eigen();
        assert!(eig.eigenvalues.min() >= 0.0);
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(GroupCovariance::new(0.0, 1.0, 0.0).is_err());
        assert!(GroupCovariance::new(1.0, 1.0, 1.0).is_err());
        assert!(GroupCovariance::new(1.0, 1.0, -1.2).is_err());
    }

    #[test]
    fn cross_correlation_closed_forms() {
        let gc = GroupCovariance::new(1.0, 1.0, 0.7).unwrap();
        assert_relative_eq!(cross_correlation(&gc, 5.0, 5.0).unwrap(), 0.7);
        let gc = GroupCovariance::new(1.0, 1.0, 0.5).unwrap();
        assert_relative_eq!(cross_correlation(&gc, 1.0, 4.0).unwrap(), 0.25);
        let gc = GroupCovariance::new(1.0, 1.0, 0.2).unwrap();
        assert_relative_eq!(
            cross_correlation(&gc, 2.0, 3.0).unwrap(),
            0.2 * (2.0f64 / 3.0).sqrt()
        );
        assert!(cross_correlation(&gc, 0.0, 1.0).is_err());
    }

    #[test]
    fn cross_correlation_bounded_by_rho() {
        let gc = GroupCovariance::new(1.5, 0.5, -0.6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let tj = rng.random_range(0.1..20.0);
            let tk = rng.random_range(0.1..20.0);
            let c = cross_correlation(&gc, tj, tk).unwrap();
            assert!(c.abs() <= gc.rho().abs() + 1e-15);
            if (tj - tk).abs() > 1e-9 {
                assert!(c.abs() < gc.rho().abs());
            }
        }
        assert_relative_eq!(cross_correlation(&gc, 3.0, 3.0).unwrap(), gc.rho());
    }

    #[test]
    fn brownian_gram_values() {
        let g = brownian_gram(&[1.0, 2.0]).unwrap();
        assert_eq!(g, DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 2.0]));
        let g = brownian_gram(&[1.0, 4.0, 9.0]).unwrap();
        assert_eq!(
            g,
            DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 1.0, 1.0, 4.0, 4.0, 1.0, 4.0, 9.0])
        );
        assert!(brownian_gram(&[2.0, 1.0]).is_err());
        assert!(brownian_gram(&[1.0, 1.0]).is_err());
    }

    #[test]
    fn brownian_gram_is_psd_randomized() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let n = rng.random_range(2..8usize);
            let mut pts: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..10.0)).collect();
            pts.sort_by(f64::total_cmp);
            pts.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
            let g = brownian_gram(&pts).unwrap();
            let min = g.symmetric_eigen().eigenvalues.min();
            assert!(min >= -1e-12, "negative eigenvalue {min}");
        }
    }

    #[test]
    fn triangular_identity_holds() {
        // K(s,t) = u(min)v(max) = v(s)v(t) min(q(s), q(t))
        let k = TriangularKernel::ornstein_uhlenbeck(1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..100 {
            let s: f64 = rng.random_range(1.0..10.0);
            let t: f64 = rng.random_range(1.0..10.0);
            let direct = (-(s - t).abs()).exp();
            let val = k.value(s, t);
            let via_q = k.v(s) * k.v(t) * k.q(s).min(k.q(t));
            assert_relative_eq!(val, direct, max_relative = 1e-10);
            assert_relative_eq!(via_q, direct, max_relative = 1e-10);
        }
    }

    #[test]
    fn kernel_validation_catches_bad_shapes() {
        // u/v decreasing: q not increasing
        let bad = TriangularKernel::new("bad", |t| -t, |_| -1.0, |_| 1.0, |_| 0.0);
        assert!(bad.validate((1.0, 2.0)).is_err());
        let zero_v = TriangularKernel::new("zv", |t| t, |_| 1.0, |t| t - 1.5, |_| 1.0);
        assert!(zero_v.validate((1.0, 2.0)).is_err());
    }

    #[test]
    fn q_inverse_bisection_matches_closed_form() {
        let closed = TriangularKernel::ornstein_uhlenbeck(1.0).unwrap();
        // same kernel without the closed-form inverse
        let open = TriangularKernel::new(
            "ou_open",
            |t| t.exp(),
            |t| t.exp(),
            |t| (-t).exp(),
            |t| -(-t).exp(),
        );
        let interval = (1.0, 10.0);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let t = rng.random_range(1.0..10.0);
            let target = closed.q(t);
            let a = closed.q_inverse(target, interval);
            let b = open.q_inverse(target, interval);
            assert_relative_eq!(a, t, max_relative = 1e-12);
            assert_relative_eq!(b, t, max_relative = 1e-10);
        }
    }

    #[test]
    fn brownian_transform_is_identity() {
        let model =
            CompositeModel::separate(catalog::basis_a(), catalog::basis_b(), (1.0, 10.0)).unwrap();
        let tr = to_brownian(&model, &TriangularKernel::brownian()).unwrap();
        assert_eq!(tr.model().interval(), (1.0, 10.0));
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for _ in 0..50 {
            let t = rng.random_range(1.0..10.0);
            assert!((tr.model().eval(t) - model.eval(t)).abs().max() < 1e-12);
            assert!((tr.model().deriv(t) - model.deriv(t)).abs().max() < 1e-12);
        }
    }

    #[test]
    fn ou_transform_interval_and_round_trip() {
        let model =
            CompositeModel::separate(catalog::basis_a(), catalog::basis_c(), (1.0, 10.0)).unwrap();
        let kernel = TriangularKernel::ornstein_uhlenbeck(1.0).unwrap();
        let tr = to_brownian(&model, &kernel).unwrap();
        let (ta, tb) = tr.model().interval();
        assert_relative_eq!(ta, (2.0f64).exp(), max_relative = 1e-12);
        assert_relative_eq!(tb, (20.0f64).exp(), max_relative = 1e-12);

        // composing with the inverse map reproduces F pointwise
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..100 {
            let t = rng.random_range(1.0..10.0);
            let tt = tr.map_time(t);
            let back = tr.invert_time(tt);
            assert_relative_eq!(back, t, max_relative = 1e-10);
            let scaled = tr.model().eval(tt) * kernel.v(t);
            assert!((scaled - model.eval(t)).abs().max() < 1e-10);
        }
    }

    #[test]
    fn transformed_deriv_matches_finite_difference() {
        let model =
            CompositeModel::separate(catalog::basis_a(), catalog::basis_b(), (1.0, 10.0)).unwrap();
        let kernel = TriangularKernel::ornstein_uhlenbeck(1.0).unwrap();
        let tr = to_brownian(&model, &kernel).unwrap();
        let m = tr.model();
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..20 {
            let t = rng.random_range(1.5..9.5);
            let tt = tr.map_time(t);
            let h = 1e-6 * tt;
            let fd = (m.eval(tt + h) - m.eval(tt - h)) / (2.0 * h);
            let an = m.deriv(tt);
            let scale = an.abs().max().max(1e-6);
            assert!(
                (fd - &an).abs().max() / scale < 1e-5,
                "derivative mismatch at t={t}"
            );
        }
    }
}
