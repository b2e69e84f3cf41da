//! Path sampling, critical values and simultaneous confidence bands.
//!
//! Observations are drawn from the model `Y(t) = F'(t) theta + Sigma^{1/2} eps(t)`
//! with independent Brownian coordinates in `eps`. The simultaneous band for
//! the difference of the two group curves is
//! `c(t)' theta_hat_n -+ D sqrt(h(t))` where D is the (1 - alpha)-quantile of
//! `sup_t |c(t)' (theta_hat_n - theta)| / sqrt(h(t))`. Because the estimator
//! is exactly Gaussian with known covariance, D is obtained by parametric
//! simulation from that law; no data-level resampling is involved.

use nalgebra::{DMatrix, DVector, Vector2};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::discrete::{Design, EstimatorContext, WeightMatrices};
use crate::error::{Error, Result};
use crate::kernel::{to_brownian, BrownianTransform, GroupCovariance, TriangularKernel};
use crate::linalg::psd_factor;
use crate::model::CompositeModel;
use crate::rng::{stream_rng, PURPOSE_CRITICAL, PURPOSE_OBSERVATION, PURPOSE_PATH};

/// Default number of Monte Carlo draws for the critical value.
pub const DEFAULT_MC_DRAWS: usize = 100_000;
/// Default number of grid points of a band.
pub const DEFAULT_BAND_GRID: usize = 500;

const MIN_MC_DRAWS: usize = 1000;
const CRITICAL_BATCH: usize = 4096;

/// Observations of both groups at the design points.
#[derive(Clone, Debug)]
pub struct PathSample {
    pub design: Design,
    /// Pairs (Y_1(t_j), Y_2(t_j)).
    pub y: Vec<Vector2<f64>>,
    pub seed: u64,
}

/// A simultaneous confidence band on a grid.
#[derive(Clone, Debug)]
pub struct BandResult {
    pub grid: Vec<f64>,
    pub h: Vec<f64>,
    /// Estimated difference c(t)' theta_hat_n.
    pub estimate: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub d: f64,
    pub alpha: f64,
}

/// Sample correlated Brownian-error observations on an arbitrary strictly
/// increasing time grid. Stream `seed` fixes the draw.
pub fn sample_path(
    model: &CompositeModel,
    gc: &GroupCovariance,
    theta: &DVector<f64>,
    times: &[f64],
    seed: u64,
) -> Result<Vec<Vector2<f64>>> {
    sample_path_with(model, gc, theta, times, &mut stream_rng(seed, PURPOSE_PATH, 0))
}

pub(crate) fn sample_path_with<R: Rng>(
    model: &CompositeModel,
    gc: &GroupCovariance,
    theta: &DVector<f64>,
    times: &[f64],
    rng: &mut R,
) -> Result<Vec<Vector2<f64>>> {
    if theta.len() != model.p() {
        return Err(Error::LengthMismatch {
            expected: model.p(),
            got: theta.len(),
        });
    }
    if times.is_empty() {
        return Err(Error::TooFewPoints { n: 0, min: 1 });
    }
    if times[0] < 0.0 {
        return Err(Error::NonPositiveTime { t: times[0] });
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::UnsortedPoints);
    }
    let sqrt = gc.sqrt();
    let mut eps = Vector2::zeros();
    let mut prev_t = 0.0;
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        let sd = (t - prev_t).sqrt();
        let g1: f64 = rng.sample(StandardNormal);
        let g2: f64 = rng.sample(StandardNormal);
        eps += Vector2::new(sd * g1, sd * g2);
        prev_t = t;
        let f = model.eval(t);
        let mean = Vector2::new(
            f.column(0).dot(&theta.column(0)),
            f.column(1).dot(&theta.column(0)),
        );
        out.push(mean + sqrt * eps);
    }
    Ok(out)
}

/// Sample one replicate of observations at the design points.
///
/// Replicate k of a Monte Carlo study should pass `seed + k` stream
/// addressing through [`sample_observations_replicate`] so that parallel
/// scheduling never changes the draws.
pub fn sample_observations(
    model: &CompositeModel,
    gc: &GroupCovariance,
    theta: &DVector<f64>,
    design: &Design,
    seed: u64,
) -> Result<PathSample> {
    sample_observations_replicate(model, gc, theta, design, seed, 0)
}

/// Replicate variant with an explicit replicate index.
pub fn sample_observations_replicate(
    model: &CompositeModel,
    gc: &GroupCovariance,
    theta: &DVector<f64>,
    design: &Design,
    seed: u64,
    replicate: u64,
) -> Result<PathSample> {
    let mut rng = stream_rng(seed, PURPOSE_OBSERVATION, replicate);
    let y = sample_path_with(model, gc, theta, design.points(), &mut rng)?;
    Ok(PathSample {
        design: design.clone(),
        y,
        seed,
    })
}

/// Sample observations whose within-group errors follow a triangular Markov
/// kernel: `eps(t) = v(t) eps~(q(t))` with `eps~` Brownian, so the noise is
/// drawn at the transformed times and scaled back.
pub fn sample_observations_kernel(
    model: &CompositeModel,
    gc: &GroupCovariance,
    kernel: Option<&TriangularKernel>,
    theta: &DVector<f64>,
    design: &Design,
    seed: u64,
    replicate: u64,
) -> Result<PathSample> {
    let kernel = match kernel {
        None => return sample_observations_replicate(model, gc, theta, design, seed, replicate),
        Some(k) => k,
    };
    if theta.len() != model.p() {
        return Err(Error::LengthMismatch {
            expected: model.p(),
            got: theta.len(),
        });
    }
    kernel.validate(model.interval())?;
    let mut rng = stream_rng(seed, PURPOSE_OBSERVATION, replicate);
    let sqrt = gc.sqrt();
    let mut eps = Vector2::zeros();
    let mut prev_q = 0.0;
    let mut out = Vec::with_capacity(design.n());
    for &t in design.points() {
        let q = kernel.q(t);
        let sd = (q - prev_q).sqrt();
        let g1: f64 = rng.sample(StandardNormal);
        let g2: f64 = rng.sample(StandardNormal);
        eps += Vector2::new(sd * g1, sd * g2);
        prev_q = q;
        let f = model.eval(t);
        let mean = Vector2::new(
            f.column(0).dot(&theta.column(0)),
            f.column(1).dot(&theta.column(0)),
        );
        out.push(mean + sqrt * (eps * kernel.v(t)));
    }
    Ok(PathSample {
        design: design.clone(),
        y: out,
        seed,
    })
}

/// Critical value D: the empirical (1 - alpha)-quantile of
/// `sup_grid |c(t)' Z| / sqrt(h(t))` over `mc_draws` draws of
/// `Z ~ N(0, Cov(theta_hat_n))`.
pub fn critical_value(
    model: &CompositeModel,
    gc: &GroupCovariance,
    design: &Design,
    alpha: f64,
    grid: &[f64],
    mc_draws: usize,
    seed: u64,
) -> Result<f64> {
    let ctx = EstimatorContext::new(model, gc)?;
    critical_value_with(&ctx, design, alpha, grid, mc_draws, seed)
}

pub(crate) fn critical_value_with(
    ctx: &EstimatorContext,
    design: &Design,
    alpha: f64,
    grid: &[f64],
    mc_draws: usize,
    seed: u64,
) -> Result<f64> {
    let cov = ctx.estimator_cov(design)?;
    let mut contrasts = Vec::with_capacity(grid.len());
    let mut h = Vec::with_capacity(grid.len());
    for &t in grid {
        let c = ctx.model.difference_contrast(t)?;
        let v = (c.transpose() * &cov * &c)[(0, 0)];
        if v <= 0.0 {
            return Err(Error::DegenerateContrast { t });
        }
        contrasts.push(c);
        h.push(v);
    }
    critical_value_from_parts(&cov, &contrasts, &h, alpha, mc_draws, seed)
}

/// Quantile of the sup statistic from its Gaussian parts: the estimator
/// covariance and the contrast/variance pairs on the grid.
fn critical_value_from_parts(
    cov: &DMatrix<f64>,
    contrasts: &[DVector<f64>],
    h: &[f64],
    alpha: f64,
    mc_draws: usize,
    seed: u64,
) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidAlpha { alpha });
    }
    if mc_draws < MIN_MC_DRAWS {
        return Err(Error::TooFewDraws {
            draws: mc_draws,
            min: MIN_MC_DRAWS,
        });
    }
    if contrasts.is_empty() {
        return Err(Error::TooFewPoints { n: 0, min: 1 });
    }
    let p = cov.nrows();
    // rows of W are c(t) / sqrt(h(t)); the statistic per draw g ~ N(0, I)
    // is max |W L g| with L L' = cov, so WL is precomputed.
    let mut w = DMatrix::<f64>::zeros(contrasts.len(), p);
    for (k, c) in contrasts.iter().enumerate() {
        let row = c / h[k].sqrt();
        w.row_mut(k).copy_from(&row.transpose());
    }
    let wl = &w * psd_factor(cov);

    let batches = mc_draws.div_ceil(CRITICAL_BATCH);
    let mut sups: Vec<f64> = (0..batches)
        .into_par_iter()
        .flat_map_iter(|batch| {
            let lo = batch * CRITICAL_BATCH;
            let hi = ((batch + 1) * CRITICAL_BATCH).min(mc_draws);
            let mut rng = stream_rng(seed, PURPOSE_CRITICAL, batch as u64);
            let wl = &wl;
            (lo..hi)
                .map(move |_| {
                    let g = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
                    let proj = wl * g;
                    proj.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
                })
                .collect::<Vec<_>>()
        })
        .collect();
    sups.sort_by(f64::total_cmp);
    let rank = ((1.0 - alpha) * mc_draws as f64).ceil() as usize;
    Ok(sups[rank.clamp(1, mc_draws) - 1])
}

/// Reusable band machinery for one (model, covariance, design, alpha, grid)
/// tuple: weights, h(t) on the grid and the critical value are computed once
/// and shared by every replicate.
pub struct BandContext {
    ctx: EstimatorContext,
    /// Design on the estimation model's time axis.
    working_design: Design,
    /// Kernel transform when estimation runs in Brownian time.
    transform: Option<(BrownianTransform, Vec<f64>)>,
    weights: WeightMatrices,
    grid: Vec<f64>,
    contrasts: Vec<DVector<f64>>,
    h: Vec<f64>,
    d: f64,
    alpha: f64,
}

impl BandContext {
    pub fn new(
        model: &CompositeModel,
        gc: &GroupCovariance,
        design: &Design,
        alpha: f64,
        grid: Vec<f64>,
        mc_draws: usize,
        seed: u64,
    ) -> Result<Self> {
        Self::with_kernel(model, gc, None, design, alpha, grid, mc_draws, seed)
    }

    /// Band machinery with estimation under a triangular Markov kernel. The
    /// design, grid and observations stay in original time; estimation runs
    /// on the Brownian-time transform with rescaled observations, and the
    /// band keeps its original-time meaning since only the parameter
    /// covariance enters h.
    #[allow(clippy::too_many_arguments)]
    pub fn with_kernel(
        model: &CompositeModel,
        gc: &GroupCovariance,
        kernel: Option<&TriangularKernel>,
        design: &Design,
        alpha: f64,
        grid: Vec<f64>,
        mc_draws: usize,
        seed: u64,
    ) -> Result<Self> {
        let (ctx, working_design, transform) = match kernel {
            None => (EstimatorContext::new(model, gc)?, design.clone(), None),
            Some(k) => {
                let tr = to_brownian(model, k)?;
                let pts: Vec<f64> = design.points().iter().map(|&t| tr.map_time(t)).collect();
                let wd = Design::new(pts, tr.model().interval())?;
                let ctx = EstimatorContext::new(tr.model(), gc)?;
                let original_pts = design.points().to_vec();
                (ctx, wd, Some((tr, original_pts)))
            }
        };
        let weights = ctx.optimal_weights(&working_design)?;
        let cov = ctx.estimator_cov(&working_design)?;
        let mut contrasts = Vec::with_capacity(grid.len());
        let mut h = Vec::with_capacity(grid.len());
        for &t in &grid {
            let c = model.difference_contrast(t)?;
            let v = (c.transpose() * &cov * &c)[(0, 0)];
            if v <= 0.0 {
                return Err(Error::DegenerateContrast { t });
            }
            contrasts.push(c);
            h.push(v);
        }
        let d = critical_value_from_parts(&cov, &contrasts, &h, alpha, mc_draws, seed)?;
        Ok(Self {
            ctx,
            working_design,
            transform,
            weights,
            grid,
            contrasts,
            h,
            d,
            alpha,
        })
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    pub fn h(&self) -> &[f64] {
        &self.h
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    /// The design on the estimation model's time axis (equal to the input
    /// design without a kernel transform).
    pub fn design(&self) -> &Design {
        &self.working_design
    }

    /// Maximal band width `2 D max_t sqrt(h(t))`.
    pub fn max_width(&self) -> f64 {
        let hmax = self.h.iter().fold(0.0f64, |m, &x| m.max(x));
        2.0 * self.d * hmax.sqrt()
    }

    /// Observations enter in original time; under a kernel transform they
    /// are rescaled by 1/v before estimation.
    fn estimate_theta(&self, observations: &[Vector2<f64>]) -> Result<DVector<f64>> {
        match &self.transform {
            None => self.ctx.estimate(&self.working_design, &self.weights, observations),
            Some((tr, original_pts)) => {
                if observations.len() != original_pts.len() {
                    return Err(Error::LengthMismatch {
                        expected: original_pts.len(),
                        got: observations.len(),
                    });
                }
                let scaled: Vec<Vector2<f64>> = original_pts
                    .iter()
                    .zip(observations)
                    .map(|(&t, y)| tr.scale_observation(t, *y))
                    .collect();
                self.ctx.estimate(&self.working_design, &self.weights, &scaled)
            }
        }
    }

    /// Estimate and band for one set of observations.
    pub fn band(&self, observations: &[Vector2<f64>]) -> Result<BandResult> {
        let theta_hat = self.estimate_theta(observations)?;
        let estimate: Vec<f64> = self.contrasts.iter().map(|c| c.dot(&theta_hat)).collect();
        let lower: Vec<f64> = estimate
            .iter()
            .zip(&self.h)
            .map(|(e, h)| e - self.d * h.sqrt())
            .collect();
        let upper: Vec<f64> = estimate
            .iter()
            .zip(&self.h)
            .map(|(e, h)| e + self.d * h.sqrt())
            .collect();
        Ok(BandResult {
            grid: self.grid.clone(),
            h: self.h.clone(),
            estimate,
            lower,
            upper,
            d: self.d,
            alpha: self.alpha,
        })
    }

    /// Whether the band from these observations covers the true difference
    /// curve everywhere on the grid.
    pub fn covers(&self, observations: &[Vector2<f64>], theta: &DVector<f64>) -> Result<bool> {
        let theta_hat = self.estimate_theta(observations)?;
        let diff = theta_hat - theta;
        let sup = self
            .contrasts
            .iter()
            .zip(&self.h)
            .map(|(c, h)| (c.dot(&diff)).abs() / h.sqrt())
            .fold(0.0f64, f64::max);
        Ok(sup <= self.d)
    }
}

/// Confidence band for the curve difference from one set of observations,
/// with the critical value computed at the default draw count and a seed
/// derived from the sample's seed.
pub fn confidence_band(
    model: &CompositeModel,
    gc: &GroupCovariance,
    design: &Design,
    observations: &PathSample,
    alpha: f64,
    grid: &[f64],
) -> Result<BandResult> {
    let ctx = BandContext::new(
        model,
        gc,
        design,
        alpha,
        grid.to_vec(),
        DEFAULT_MC_DRAWS,
        observations.seed,
    )?;
    ctx.band(&observations.y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::design::uniform_design;
    use approx::assert_relative_eq;

    fn lin() -> crate::model::CurveBasis {
        catalog::parse_basis("lin", &["t"]).unwrap()
    }

    fn band_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|k| a + (b - a) * k as f64 / (n - 1) as f64)
            .collect()
    }

    #[test]
    fn observation_variance_matches_brownian_law() {
        let model = CompositeModel::separate(lin(), lin(), (1.0, 10.0)).unwrap();
        let gc = GroupCovariance::new(1.0, 1.0, 0.0).unwrap();
        let design = uniform_design(1.0, 10.0, 4).unwrap();
        let theta = DVector::zeros(2);
        let n = 100_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for r in 0..n {
            let s =
                sample_observations_replicate(&model, &gc, &theta, &design, 99, r as u64).unwrap();
            sum += s.y[0].x;
            sumsq += s.y[0].x * s.y[0].x;
        }
        let var = sumsq / n as f64 - (sum / n as f64).powi(2);
        assert!((var - 1.0).abs() < 0.02, "Var(Y1(t1)) = {var}, want 1.0");
    }

    #[test]
    fn observation_cross_correlation_same_time() {
        let model = CompositeModel::separate(lin(), lin(), (1.0, 10.0)).unwrap();
        let gc = GroupCovariance::new(1.0, 1.0, 0.7).unwrap();
        let design = uniform_design(1.0, 10.0, 4).unwrap();
        let theta = DVector::zeros(2);
        let n = 100_000;
        let (mut s1, mut s2, mut s11, mut s22, mut s12) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for r in 0..n {
            let s =
                sample_observations_replicate(&model, &gc, &theta, &design, 7, r as u64).unwrap();
            let (y1, y2) = (s.y[2].x, s.y[2].y);
            s1 += y1;
            s2 += y2;
            s11 += y1 * y1;
            s22 += y2 * y2;
            s12 += y1 * y2;
        }
        let nf = n as f64;
        let c11 = s11 / nf - (s1 / nf).powi(2);
        let c22 = s22 / nf - (s2 / nf).powi(2);
        let c12 = s12 / nf - s1 * s2 / nf / nf;
        let corr = c12 / (c11 * c22).sqrt();
        assert!((corr - 0.7).abs() < 0.01, "corr {corr}, want 0.7");
    }

    #[test]
    fn observation_cross_correlation_lagged() {
        // Corr(Y1(1), Y2(4)) = rho sqrt(1/4) = 0.25 at rho = 0.5
        let model = CompositeModel::separate(lin(), lin(), (1.0, 10.0)).unwrap();
        let gc = GroupCovariance::new(1.0, 1.0, 0.5).unwrap();
        let design = Design::new(vec![1.0, 4.0, 10.0], (1.0, 10.0)).unwrap();
        let theta = DVector::zeros(2);
        let n = 100_000;
        let (mut s1, mut s2, mut s11, mut s22, mut s12) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for r in 0..n {
            let s =
                sample_observations_replicate(&model, &gc, &theta, &design, 21, r as u64).unwrap();
            let (y1, y2) = (s.y[0].x, s.y[1].y);
            s1 += y1;
            s2 += y2;
            s11 += y1 * y1;
            s22 += y2 * y2;
            s12 += y1 * y2;
        }
        let nf = n as f64;
        let c11 = s11 / nf - (s1 / nf).powi(2);
        let c22 = s22 / nf - (s2 / nf).powi(2);
        let c12 = s12 / nf - s1 * s2 / nf / nf;
        let corr = c12 / (c11 * c22).sqrt();
        assert!((corr - 0.25).abs() < 0.01, "corr {corr}, want 0.25");
    }

    #[test]
    fn single_point_critical_value_is_gaussian_quantile() {
        let model = CompositeModel::separate(lin(), lin(), (1.0, 10.0)).unwrap();
        let gc = GroupCovariance::new(1.0, 1.0, 0.0).unwrap();
        let design = uniform_design(1.0, 10.0, 4).unwrap();
        let d = critical_value(&model, &gc, &design, 0.05, &[5.0], 100_000, 1).unwrap();
        assert!((d - 1.960).abs() < 0.02, "D = {d}, want 1.960");
        let d50 = critical_value(&model, &gc, &design, 0.5, &[5.0], 100_000, 1).unwrap();
        assert!((d50 - 0.674).abs() < 0.01, "D = {d50}, want 0.674");
    }

    #[test]
    fn sup_dominates_single_point_with_shared_draws() {
        let model =
            CompositeModel::separate(catalog::basis_a(), catalog::basis_b(), (1.0, 10.0)).unwrap();
        let gc = GroupCovariance::new(1.0, 1.0, 0.5).unwrap();
        let design = uniform_design(1.0, 10.0, 4).unwrap();
        let grid = band_grid(1.0, 10.0, 200);
        let d_full = critical_value(&model, &gc, &design, 0.05, &grid, 20_000, 3).unwrap();
        let d_single = critical_value(&model, &gc, &design, 0.05, &grid[..1], 20_000, 3).unwrap();
        assert!(d_full >= d_single);
        assert!(d_full >= 1.96 - 0.03);
    }

    #[test]
    fn critical_value_monotone_in_alpha_and_grid() {
        let model =
            CompositeModel::separate(catalog::basis_a(), catalog::basis_c(), (1.0, 10.0)).unwrap();
        let gc = GroupCovariance::new(1.0, 1.0, 0.2).unwrap();
        let design = uniform_design(1.0, 10.0, 4).unwrap();
        let coarse = band_grid(1.0, 10.0, 100);
        let fine: Vec<f64> = {
            // refinement containing the coarse grid
            let mut f = coarse.clone();
            for w in coarse.windows(2) {
                f.push(0.5 * (w[0] + w[1]));
            }
            f.sort_by(f64::total_cmp);
            f
        };
        let d10 = critical_value(&model, &gc, &design, 0.10, &coarse, 20_000, 5).unwrap();
        let d05 = critical_value(&model, &gc, &design, 0.05, &coarse, 20_000, 5).unwrap();
        assert!(d05 >= d10);
        let d_fine = critical_value(&model, &gc, &design, 0.05, &fine, 20_000, 5).unwrap();
        assert!(d_fine >= d05);
    }

    #[test]
    fn critical_value_input_validation() {
        let model = CompositeModel::separate(lin(), lin(), (1.0, 10.0)).unwrap();
        let gc = GroupCovariance::new(1.0, 1.0, 0.0).unwrap();
        let design = uniform_design(1.0, 10.0, 4).unwrap();
        assert!(critical_value(&model, &gc, &design, 0.0, &[5.0], 10_000, 1).is_err());
        assert!(critical_value(&model, &gc, &design, 0.05, &[5.0], 10, 1).is_err());
    }

    #[test]
    fn band_width_identity_and_symmetry() {
        let model = CompositeModel::separate(lin(), lin(), (1.0, 10.0)).unwrap();
        let gc = GroupCovariance::new(1.0, 1.0, 0.0).unwrap();
        let design = Design::new(vec![1.0, 10.0], (1.0, 10.0)).unwrap();
        let theta = DVector::from_column_slice(&[1.0, 1.0]);
        // noise-free observations: exact mean values
        let obs: Vec<Vector2<f64>> = design
            .points()
            .iter()
            .map(|&t| Vector2::new(t, t))
            .collect();
        let sample = PathSample {
            design: design.clone(),
            y: obs,
            seed: 4,
        };
        let grid = band_grid(1.0, 10.0, 101);
        let band = confidence_band(&model, &gc, &design, &sample, 0.05, &grid).unwrap();
        for k in 0..grid.len() {
            // estimate is identically zero; band symmetric with half width
            // D sqrt(h), h(t) = 0.2 t^2
            assert!(band.estimate[k].abs() < 1e-10);
            let half = band.d * (0.2 * grid[k] * grid[k]).sqrt();
            assert_relative_eq!(band.upper[k] - band.lower[k], 2.0 * half, max_relative = 1e-10);
            assert_relative_eq!(
                band.upper[k] - band.estimate[k],
                half,
                max_relative = 1e-9
            );
            assert!(band.upper[k] >= band.lower[k]);
        }
        let _ = theta;
    }

    #[test]
    fn band_context_reproducible() {
        let model =
            CompositeModel::separate(catalog::basis_a(), catalog::basis_b(), (1.0, 10.0)).unwrap();
        let gc = GroupCovariance::new(1.0, 1.0, 0.2).unwrap();
        let design = uniform_design(1.0, 10.0, 4).unwrap();
        let grid = band_grid(1.0, 10.0, 50);
        let theta = DVector::from_element(6, 1.0);
        let mk = || {
            let ctx =
                BandContext::new(&model, &gc, &design, 0.05, grid.clone(), 5_000, 11).unwrap();
            let obs = sample_observations_replicate(&model, &gc, &theta, &design, 11, 0).unwrap();
            ctx.band(&obs.y).unwrap()
        };
        let b1 = mk();
        let b2 = mk();
        assert_eq!(b1.d.to_bits(), b2.d.to_bits());
        for (x, y) in b1.lower.iter().zip(&b2.lower) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}
