//! Poisson maximum-likelihood localization of a single emitter.
//!
//! The model for the expected count at pixel (i, j) is
//! `lambda = alpha * p(i, j) + beta`, where `p` is a symmetric 2D Gaussian
//! with variance `sigma2` integrated over the unit pixel square (an erf
//! product, exact and separable). Fitting minimizes the Poisson negative
//! log-likelihood `sum(lambda - y * ln lambda)` with a Nelder-Mead search
//! in a log-reparameterized space, and uncertainties come from the
//! Cramer-Rao lower bound: square roots of the diagonal of the inverse
//! Fisher information matrix, assembled from analytic derivatives.

use nalgebra::SMatrix;

use crate::error::{Error, Result};
use crate::image::{Image, PixelScale, Point2D, RegionOfInterest};
use crate::optim::{nelder_mead, NelderMeadOptions};

/// Parameter order used in every vector and matrix of this module.
pub const PARAM_NAMES: [&str; 5] = ["i0", "j0", "sigma2", "alpha", "beta"];

/// Floor applied to the Poisson rate inside logarithms and divisions,
/// guarding the beta -> 0 corner.
pub const LAMBDA_FLOOR: f64 = 1e-12;

/// Minimum pixel count for a fittable sub-ROI.
pub const MIN_SUBROI_PIXELS: usize = 25;

/// The 5-parameter PSF model theta = (i0, j0, sigma2, alpha, beta).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaVector {
    /// Emitter center, x direction (column), sub-pixel.
    pub i0: f64,
    /// Emitter center, y direction (row), sub-pixel.
    pub j0: f64,
    /// PSF variance in pixels squared.
    pub sigma2: f64,
    /// Total expected signal photons.
    pub alpha: f64,
    /// Expected background counts per pixel.
    pub beta: f64,
}

impl ThetaVector {
    pub fn new(i0: f64, j0: f64, sigma2: f64, alpha: f64, beta: f64) -> Result<Self> {
        let theta = Self {
            i0,
            j0,
            sigma2,
            alpha,
            beta,
        };
        theta.validate()?;
        Ok(theta)
    }

    pub fn validate(&self) -> Result<()> {
        let all_finite = [self.i0, self.j0, self.sigma2, self.alpha, self.beta]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite || self.sigma2 <= 0.0 || self.alpha < 0.0 || self.beta < 0.0 {
            return Err(Error::Parameter(format!("invalid theta {self:?}")));
        }
        Ok(())
    }

    pub fn as_array(&self) -> [f64; 5] {
        [self.i0, self.j0, self.sigma2, self.alpha, self.beta]
    }
}

/// Pixel lattice of a sub-ROI: pixel (col, row) of the count buffer has
/// model coordinates (origin_i + col, origin_j + row).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubRoiGeometry {
    pub width: usize,
    pub height: usize,
    pub origin_i: i64,
    pub origin_j: i64,
}

impl SubRoiGeometry {
    /// Geometry whose coordinate origin is the central pixel (odd sizes).
    pub fn centered(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            origin_i: -((width as i64 - 1) / 2),
            origin_j: -((height as i64 - 1) / 2),
        }
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Observed counts over a sub-ROI lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct SubRoiData {
    geometry: SubRoiGeometry,
    counts: Vec<f64>,
}

impl SubRoiData {
    pub fn new(geometry: SubRoiGeometry, counts: Vec<f64>) -> Result<Self> {
        if counts.len() != geometry.len() {
            return Err(Error::Parameter(format!(
                "count buffer length {} does not match {}x{} sub-ROI",
                counts.len(),
                geometry.width,
                geometry.height
            )));
        }
        if geometry.len() < MIN_SUBROI_PIXELS {
            return Err(Error::Parameter(format!(
                "sub-ROI has {} pixels; at least {MIN_SUBROI_PIXELS} required",
                geometry.len()
            )));
        }
        if counts.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::Parameter(
                "sub-ROI counts must be finite and non-negative".into(),
            ));
        }
        Ok(Self { geometry, counts })
    }

    /// Cut sub-ROI data out of an image; model coordinates equal the
    /// parent image's pixel coordinates.
    pub fn from_image(image: &Image, roi: &RegionOfInterest) -> Result<Self> {
        let sub = image.crop(roi)?;
        Self::new(
            SubRoiGeometry {
                width: roi.width,
                height: roi.height,
                origin_i: roi.x0 as i64,
                origin_j: roi.y0 as i64,
            },
            sub.counts().to_vec(),
        )
    }

    pub fn geometry(&self) -> &SubRoiGeometry {
        &self.geometry
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }
}

/// 5x5 Fisher information matrix in the (i0, j0, sigma2, alpha, beta) order.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherMatrix {
    pub m: [[f64; 5]; 5],
}

/// Result of one maximum-likelihood fit.
#[derive(Debug, Clone)]
pub struct LocalizationResult {
    pub theta_hat: ThetaVector,
    /// One-standard-deviation Cramer-Rao bounds per parameter.
    pub crlb_sigma: [f64; 5],
    pub converged: bool,
    pub nll_final: f64,
    pub iterations: usize,
    pub excess_noise_applied: bool,
}

impl LocalizationResult {
    /// The same result expressed on a lattice translated by integer
    /// (di, dj): centers shift, uncertainties are unchanged.
    pub fn translated(&self, di: i64, dj: i64) -> Self {
        let mut out = self.clone();
        out.theta_hat.i0 += di as f64;
        out.theta_hat.j0 += dj as f64;
        out
    }
}

/// Fit settings for [`fit_mle`].
#[derive(Debug, Clone, Copy)]
pub struct FitOptions {
    /// Relative NLL spread across the simplex at convergence.
    pub ftol: f64,
    /// Vertex coordinate spread at convergence.
    pub xtol: f64,
    pub max_iter: usize,
    /// Apply the EMCCD excess-noise sqrt(2) factor to reported bounds.
    pub em_gain_active: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            ftol: 1e-9,
            xtol: 1e-6,
            max_iter: 2000,
            em_gain_active: false,
        }
    }
}

/// Probability mass of a unit-variance-axis slice: integral of the 1D
/// Gaussian with variance `sigma2` over [delta - 0.5, delta + 0.5].
#[inline]
pub(crate) fn axis_mass(delta: f64, sigma2: f64) -> f64 {
    let inv = 1.0 / (2.0 * sigma2).sqrt();
    0.5 * (libm::erf((delta + 0.5) * inv) - libm::erf((delta - 0.5) * inv))
}

/// Derivatives of [`axis_mass`] with respect to the center coordinate and
/// to sigma2, returned as (mass, d/dcenter, d/dsigma2).
#[inline]
fn axis_mass_with_derivs(delta: f64, sigma2: f64) -> (f64, f64, f64) {
    let inv = 1.0 / (2.0 * sigma2).sqrt();
    let up = (delta + 0.5) * inv;
    let um = (delta - 0.5) * inv;
    let mass = 0.5 * (libm::erf(up) - libm::erf(um));
    let ep = (-up * up).exp();
    let em = (-um * um).exp();
    // d(mass)/d(center) where delta = pixel - center.
    let sigma = sigma2.sqrt();
    let d_center = (em - ep) / ((2.0 * std::f64::consts::PI).sqrt() * sigma);
    // d(mass)/d(sigma2).
    let d_sigma2 = (um * em - up * ep) / (2.0 * sigma2 * std::f64::consts::PI.sqrt());
    (mass, d_center, d_sigma2)
}

/// Probability mass of the pixel-integrated symmetric Gaussian PSF at the
/// unit pixel square centered on integer pixel (i, j).
pub fn psf_pixel_integral(i0: f64, j0: f64, sigma2: f64, i: i64, j: i64) -> f64 {
    assert!(sigma2 > 0.0, "sigma2 must be positive");
    axis_mass(i as f64 - i0, sigma2) * axis_mass(j as f64 - j0, sigma2)
}

/// Expected photon count at pixel (i, j): `alpha * p + beta`.
pub fn expected_counts(theta: &ThetaVector, i: i64, j: i64) -> f64 {
    theta.alpha * psf_pixel_integral(theta.i0, theta.j0, theta.sigma2, i, j) + theta.beta
}

/// Expected-count map over a whole sub-ROI lattice, row-major.
pub fn expected_counts_map(theta: &ThetaVector, geometry: &SubRoiGeometry) -> Vec<f64> {
    let ex = axis_table(theta.i0, theta.sigma2, geometry.origin_i, geometry.width);
    let ey = axis_table(theta.j0, theta.sigma2, geometry.origin_j, geometry.height);
    let mut out = Vec::with_capacity(geometry.len());
    for &eyv in &ey {
        for &exv in &ex {
            out.push(theta.alpha * exv * eyv + theta.beta);
        }
    }
    out
}

fn axis_table(center: f64, sigma2: f64, origin: i64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| axis_mass((origin + k as i64) as f64 - center, sigma2))
        .collect()
}

/// The Poisson negative log-likelihood with the `ln y!` constant dropped:
/// `sum_k lambda_k - y_k ln lambda_k`.
pub fn neg_log_likelihood(theta: &ThetaVector, data: &SubRoiData) -> Result<f64> {
    theta.validate()?;
    let nll = nll_value(theta, data);
    if !nll.is_finite() {
        return Err(Error::Numerical(format!(
            "non-finite negative log-likelihood at {theta:?}"
        )));
    }
    Ok(nll)
}

/// NLL evaluation used by optimizers: non-finite values come back as
/// `f64::INFINITY` so the simplex treats them as worst-possible.
pub(crate) fn nll_value(theta: &ThetaVector, data: &SubRoiData) -> f64 {
    let g = data.geometry();
    let ex = axis_table(theta.i0, theta.sigma2, g.origin_i, g.width);
    let ey = axis_table(theta.j0, theta.sigma2, g.origin_j, g.height);
    let mut acc = 0.0;
    for (row, &eyv) in ey.iter().enumerate() {
        let counts = &data.counts()[row * g.width..(row + 1) * g.width];
        for (col, &exv) in ex.iter().enumerate() {
            let lambda = theta.alpha * exv * eyv + theta.beta;
            let y = counts[col];
            acc += lambda;
            if y > 0.0 {
                acc -= y * lambda.max(LAMBDA_FLOOR).ln();
            }
        }
    }
    if acc.is_finite() {
        acc
    } else {
        f64::INFINITY
    }
}

/// Moment-based starting point for the fit: border-median background,
/// background-subtracted centroid and second moments.
pub fn initial_guess(data: &SubRoiData) -> Result<ThetaVector> {
    let g = data.geometry();
    let counts = data.counts();
    let first = counts[0];
    if counts.iter().all(|&c| c == first) {
        return Err(Error::DegenerateInput(
            "all sub-ROI pixels equal; no spot to localize".into(),
        ));
    }

    let mut border = Vec::with_capacity(2 * (g.width + g.height));
    for row in 0..g.height {
        for col in 0..g.width {
            if row == 0 || row == g.height - 1 || col == 0 || col == g.width - 1 {
                border.push(counts[row * g.width + col]);
            }
        }
    }
    border.sort_by(f64::total_cmp);
    let beta0 = median_of_sorted(&border);

    let mut weight_sum = 0.0;
    let mut ci = 0.0;
    let mut cj = 0.0;
    for row in 0..g.height {
        for col in 0..g.width {
            let w = (counts[row * g.width + col] - beta0).max(0.0);
            weight_sum += w;
            ci += w * (g.origin_i + col as i64) as f64;
            cj += w * (g.origin_j + row as i64) as f64;
        }
    }
    if weight_sum <= 0.0 {
        return Err(Error::DegenerateInput(
            "no counts above the background estimate".into(),
        ));
    }
    ci /= weight_sum;
    cj /= weight_sum;

    let mut m2i = 0.0;
    let mut m2j = 0.0;
    for row in 0..g.height {
        for col in 0..g.width {
            let w = (counts[row * g.width + col] - beta0).max(0.0);
            let di = (g.origin_i + col as i64) as f64 - ci;
            let dj = (g.origin_j + row as i64) as f64 - cj;
            m2i += w * di * di;
            m2j += w * dj * dj;
        }
    }
    let sigma2 = (0.5 * (m2i + m2j) / weight_sum).clamp(0.25, (g.width * g.width) as f64);
    let alpha = (counts.iter().sum::<f64>() - beta0 * g.len() as f64).max(1.0);

    ThetaVector::new(ci, cj, sigma2, alpha, beta0.max(0.0))
}

fn median_of_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Smallest starting beta in the log-reparameterized search.
const BETA_START_MIN: f64 = 1e-6;

/// Maximum-likelihood fit of the 5-parameter model by Nelder-Mead on
/// (i0, j0, ln sigma2, ln alpha, ln beta); positivity of sigma2, alpha
/// and beta is enforced by the reparameterization.
pub fn fit_mle(data: &SubRoiData, init: &ThetaVector, opts: &FitOptions) -> Result<LocalizationResult> {
    init.validate()?;
    let x0 = [
        init.i0,
        init.j0,
        init.sigma2.ln(),
        init.alpha.max(1e-3).ln(),
        init.beta.max(BETA_START_MIN).ln(),
    ];
    // 0.5 px steps in the centers, 20 % multiplicative in the rest.
    let log_step = 1.2f64.ln();
    let steps = [0.5, 0.5, log_step, log_step, log_step];

    let objective = |x: &[f64]| {
        let theta = theta_from_log_params(x);
        match theta {
            Some(t) => nll_value(&t, data),
            None => f64::INFINITY,
        }
    };
    let nm_opts = NelderMeadOptions {
        ftol: opts.ftol,
        xtol: opts.xtol,
        max_iter: opts.max_iter,
    };
    let nm = nelder_mead(objective, &x0, &steps, &nm_opts);

    let theta_hat = theta_from_log_params(&nm.x)
        .ok_or_else(|| Error::Numerical("optimizer returned non-finite parameters".into()))?;
    if !nm.fx.is_finite() {
        return Err(Error::Numerical(
            "negative log-likelihood non-finite at the optimizer result".into(),
        ));
    }

    let fisher = fisher_matrix(&theta_hat, data.geometry())?;
    let crlb_sigma = crlb_uncertainties(&fisher, opts.em_gain_active)?;
    Ok(LocalizationResult {
        theta_hat,
        crlb_sigma,
        converged: nm.converged,
        nll_final: nm.fx,
        iterations: nm.iterations,
        excess_noise_applied: opts.em_gain_active,
    })
}

fn theta_from_log_params(x: &[f64]) -> Option<ThetaVector> {
    let theta = ThetaVector {
        i0: x[0],
        j0: x[1],
        sigma2: x[2].exp(),
        alpha: x[3].exp(),
        beta: x[4].exp(),
    };
    theta.validate().ok().map(|_| theta)
}

/// Fisher information matrix assembled from the analytic derivatives of
/// the expected-count model: `M_rs = sum_k (dlambda/dr)(dlambda/ds)/lambda`.
pub fn fisher_matrix(theta: &ThetaVector, geometry: &SubRoiGeometry) -> Result<FisherMatrix> {
    theta.validate()?;
    let ex: Vec<(f64, f64, f64)> = (0..geometry.width)
        .map(|k| {
            axis_mass_with_derivs(
                (geometry.origin_i + k as i64) as f64 - theta.i0,
                theta.sigma2,
            )
        })
        .collect();
    let ey: Vec<(f64, f64, f64)> = (0..geometry.height)
        .map(|k| {
            axis_mass_with_derivs(
                (geometry.origin_j + k as i64) as f64 - theta.j0,
                theta.sigma2,
            )
        })
        .collect();

    let mut m = [[0.0f64; 5]; 5];
    for &(ey_m, ey_dc, ey_ds) in &ey {
        for &(ex_m, ex_dc, ex_ds) in &ex {
            let p = ex_m * ey_m;
            let lambda = (theta.alpha * p + theta.beta).max(LAMBDA_FLOOR);
            let grad = [
                theta.alpha * ex_dc * ey_m,
                theta.alpha * ex_m * ey_dc,
                theta.alpha * (ex_ds * ey_m + ex_m * ey_ds),
                p,
                1.0,
            ];
            let inv_lambda = 1.0 / lambda;
            for r in 0..5 {
                for s in r..5 {
                    m[r][s] += grad[r] * grad[s] * inv_lambda;
                }
            }
        }
    }
    for r in 0..5 {
        for s in 0..r {
            m[r][s] = m[s][r];
        }
    }
    if m.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(
            "non-finite Fisher information entry".into(),
        ));
    }
    Ok(FisherMatrix { m })
}

/// Condition-number ceiling above which the information matrix is treated
/// as singular.
const MAX_CONDITION: f64 = 1e12;

/// One-standard-deviation Cramer-Rao bounds: square roots of the diagonal
/// of the inverse information matrix, inflated by sqrt(2) when the EMCCD
/// electron-multiplication register is active.
pub fn crlb_uncertainties(fisher: &FisherMatrix, em_gain_active: bool) -> Result<[f64; 5]> {
    let m = SMatrix::<f64, 5, 5>::from_fn(|r, s| fisher.m[r][s]);
    let svd = m.svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 0.0) || smax / smin > MAX_CONDITION {
        return Err(Error::SingularInformation(format!(
            "condition number {:.3e} exceeds {MAX_CONDITION:.0e}",
            if smin > 0.0 { smax / smin } else { f64::INFINITY }
        )));
    }
    let inv = m
        .try_inverse()
        .ok_or_else(|| Error::SingularInformation("matrix inversion failed".into()))?;
    let mut out = [0.0f64; 5];
    for d in 0..5 {
        let var = inv[(d, d)];
        if var < 0.0 {
            return Err(Error::SingularInformation(format!(
                "negative variance {var:.3e} for parameter {}",
                PARAM_NAMES[d]
            )));
        }
        out[d] = var.sqrt();
        if em_gain_active {
            out[d] *= std::f64::consts::SQRT_2;
        }
    }
    Ok(out)
}

/// A localization converted to real units relative to a caller-supplied
/// origin (typically the write-field center), all in nanometers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RealUnitsPosition {
    pub x_nm: f64,
    pub y_nm: f64,
    pub dx_mle_nm: f64,
    pub dy_mle_nm: f64,
}

/// Convert a fit result to real units: positions relative to `origin`
/// (same pixel frame as the fit), uncertainties scaled per pixel.
pub fn to_real_units(
    result: &LocalizationResult,
    scale: &PixelScale,
    origin: &Point2D,
) -> RealUnitsPosition {
    let s = scale.nanometers_per_pixel();
    RealUnitsPosition {
        x_nm: (result.theta_hat.i0 - origin.x) * s,
        y_nm: (result.theta_hat.j0 - origin.y) * s,
        dx_mle_nm: result.crlb_sigma[0] * s,
        dy_mle_nm: result.crlb_sigma[1] * s,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data_from_theta(theta: &ThetaVector, geometry: SubRoiGeometry) -> SubRoiData {
        SubRoiData::new(geometry, expected_counts_map(theta, &geometry)).unwrap()
    }

    #[test]
    fn psf_center_pixel_matches_erf_product() {
        let p = psf_pixel_integral(0.0, 0.0, 1.0, 0, 0);
        let expected = libm::erf(0.5 / 2.0f64.sqrt()).powi(2);
        assert!((p - expected).abs() < 1e-15);
        assert!((p - 0.14663).abs() < 1e-5);
    }

    #[test]
    fn psf_underflows_far_away() {
        let p = psf_pixel_integral(0.0, 0.0, 1.0, 100, 0);
        assert!(p < 1e-300);
    }

    #[test]
    fn psf_normalizes_over_wide_extent() {
        let sigma2 = 2.3f64;
        let extent = (8.0 * sigma2.sqrt()).ceil() as i64;
        let mut total = 0.0;
        for i in -extent..=extent {
            for j in -extent..=extent {
                total += psf_pixel_integral(0.3, -0.6, sigma2, i, j);
            }
        }
        assert!((total - 1.0).abs() < 1e-9, "total = {total}");
    }

    #[test]
    fn expected_counts_background_only() {
        let theta = ThetaVector::new(0.0, 0.0, 1.0, 0.0, 2.5).unwrap();
        for i in -3..=3 {
            assert_eq!(expected_counts(&theta, i, -i), 2.5);
        }
    }

    #[test]
    fn expected_counts_example_value() {
        let theta = ThetaVector::new(0.0, 0.0, 1.0, 100.0, 2.0).unwrap();
        let p = psf_pixel_integral(0.0, 0.0, 1.0, 0, 0);
        let lambda = expected_counts(&theta, 0, 0);
        assert_eq!(lambda, 100.0 * p + 2.0);
        assert!((lambda - 16.663).abs() < 2e-3);
    }

    #[test]
    fn nll_uniform_background_closed_form() {
        let c = 7.0;
        let g = SubRoiGeometry::centered(5, 5);
        let data = SubRoiData::new(g, vec![c; 25]).unwrap();
        let theta = ThetaVector::new(0.0, 0.0, 1.0, 0.0, c).unwrap();
        let nll = neg_log_likelihood(&theta, &data).unwrap();
        let expected = 25.0 * (c - c * c.ln());
        assert!((nll - expected).abs() < 1e-9 * expected.abs());
    }

    #[test]
    fn nll_noiseless_truth_is_stationary() {
        let theta = ThetaVector::new(0.1, -0.2, 1.44, 1e4, 5.0).unwrap();
        let g = SubRoiGeometry::centered(11, 11);
        let data = data_from_theta(&theta, g);
        let f0 = neg_log_likelihood(&theta, &data).unwrap();
        let eps = 1e-4;
        for d in 0..5 {
            for sign in [-1.0, 1.0] {
                let mut arr = theta.as_array();
                arr[d] += sign * eps * arr[d].abs().max(1.0);
                let t = ThetaVector::new(arr[0], arr[1], arr[2], arr[3], arr[4]).unwrap();
                let f = neg_log_likelihood(&t, &data).unwrap();
                assert!(
                    f >= f0 - 1e-9 * f0.abs(),
                    "perturbing {} by {sign}*eps lowered the NLL",
                    PARAM_NAMES[d]
                );
            }
        }
    }

    #[test]
    fn initial_guess_recovers_rendered_spot() {
        let theta = ThetaVector::new(0.3, -0.2, 1.44, 1e4, 5.0).unwrap();
        let g = SubRoiGeometry::centered(11, 11);
        let guess = initial_guess(&data_from_theta(&theta, g)).unwrap();
        assert!((guess.i0 - theta.i0).abs() < 0.2);
        assert!((guess.j0 - theta.j0).abs() < 0.2);
        assert!((guess.sigma2 - theta.sigma2).abs() / theta.sigma2 < 0.3);
        assert!((guess.alpha - theta.alpha).abs() / theta.alpha < 0.3);
    }

    #[test]
    fn initial_guess_rejects_uniform_data() {
        let g = SubRoiGeometry::centered(5, 5);
        let data = SubRoiData::new(g, vec![3.0; 25]).unwrap();
        assert!(matches!(
            initial_guess(&data),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn initial_guess_centered_spot_is_exact() {
        let theta = ThetaVector::new(0.0, 0.0, 1.0, 1000.0, 2.0).unwrap();
        let g = SubRoiGeometry::centered(9, 9);
        let guess = initial_guess(&data_from_theta(&theta, g)).unwrap();
        assert!(guess.i0.abs() < 1e-12);
        assert!(guess.j0.abs() < 1e-12);
    }

    #[test]
    fn fit_recovers_noiseless_truth() {
        let theta = ThetaVector::new(0.17, -0.36, 1.44, 1e4, 5.0).unwrap();
        let g = SubRoiGeometry::centered(11, 11);
        let data = data_from_theta(&theta, g);
        let init = initial_guess(&data).unwrap();
        let fit = fit_mle(&data, &init, &FitOptions::default()).unwrap();
        assert!(fit.converged);
        assert!(
            (fit.theta_hat.i0 - theta.i0).abs() < 1e-4,
            "i0 = {}",
            fit.theta_hat.i0
        );
        assert!(
            (fit.theta_hat.j0 - theta.j0).abs() < 1e-4,
            "j0 = {}",
            fit.theta_hat.j0
        );
    }

    #[test]
    fn fisher_matrix_is_symmetric_psd() {
        let theta = ThetaVector::new(0.4, 0.1, 2.0, 5e3, 3.0).unwrap();
        let g = SubRoiGeometry::centered(9, 9);
        let fisher = fisher_matrix(&theta, &g).unwrap();
        for r in 0..5 {
            for s in 0..5 {
                assert_eq!(fisher.m[r][s], fisher.m[s][r]);
            }
        }
        let m = SMatrix::<f64, 5, 5>::from_fn(|r, s| fisher.m[r][s]);
        let eig = m.symmetric_eigen();
        let trace: f64 = (0..5).map(|d| fisher.m[d][d]).sum();
        for ev in eig.eigenvalues.iter() {
            assert!(*ev >= -1e-10 * trace, "eigenvalue {ev}");
        }
    }

    #[test]
    fn crlb_diagonal_information() {
        let mut m = [[0.0; 5]; 5];
        for (d, v) in [4.0, 4.0, 1.0, 1.0, 1.0].into_iter().enumerate() {
            m[d][d] = v;
        }
        let bounds = crlb_uncertainties(&FisherMatrix { m }, false).unwrap();
        assert_eq!(bounds, [0.5, 0.5, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn em_gain_scales_by_exactly_sqrt2() {
        let theta = ThetaVector::new(0.0, 0.0, 1.44, 1e4, 5.0).unwrap();
        let fisher = fisher_matrix(&theta, &SubRoiGeometry::centered(11, 11)).unwrap();
        let off = crlb_uncertainties(&fisher, false).unwrap();
        let on = crlb_uncertainties(&fisher, true).unwrap();
        for d in 0..5 {
            assert_eq!(on[d], off[d] * std::f64::consts::SQRT_2);
        }
    }

    #[test]
    fn crlb_near_point_detector_limit() {
        // Background-free, well-sampled: delta_i0 ~ sigma / sqrt(alpha).
        let sigma2 = 1.44;
        let alpha = 1e4;
        let theta = ThetaVector::new(0.0, 0.0, sigma2, alpha, 1e-9).unwrap();
        let fisher = fisher_matrix(&theta, &SubRoiGeometry::centered(25, 25)).unwrap();
        let bounds = crlb_uncertainties(&fisher, false).unwrap();
        let limit = sigma2.sqrt() / alpha.sqrt();
        assert!(
            (bounds[0] - limit).abs() / limit < 0.2,
            "delta_i0 = {}, limit = {limit}",
            bounds[0]
        );
    }

    #[test]
    fn crlb_grows_with_background() {
        let g = SubRoiGeometry::centered(11, 11);
        let low = ThetaVector::new(0.0, 0.0, 1.44, 1e4, 1.0).unwrap();
        let high = ThetaVector::new(0.0, 0.0, 1.44, 1e4, 100.0).unwrap();
        let b_low = crlb_uncertainties(&fisher_matrix(&low, &g).unwrap(), false).unwrap();
        let b_high = crlb_uncertainties(&fisher_matrix(&high, &g).unwrap(), false).unwrap();
        assert!(b_high[0] > b_low[0]);
    }

    #[test]
    fn singular_information_is_rejected() {
        // alpha = 0 makes the center rows/columns vanish.
        let theta = ThetaVector::new(0.0, 0.0, 1.0, 0.0, 5.0).unwrap();
        let fisher = fisher_matrix(&theta, &SubRoiGeometry::centered(7, 7)).unwrap();
        assert!(matches!(
            crlb_uncertainties(&fisher, false),
            Err(Error::SingularInformation(_))
        ));
    }

    #[test]
    fn real_units_conversion_is_linear() {
        let result = LocalizationResult {
            theta_hat: ThetaVector::new(10.0, 20.0, 1.44, 1e4, 5.0).unwrap(),
            crlb_sigma: [0.0121, 0.02, 0.1, 100.0, 0.5],
            converged: true,
            nll_final: 0.0,
            iterations: 100,
            excess_noise_applied: false,
        };
        let origin = Point2D::px(4.0, 8.0);
        let one = to_real_units(&result, &PixelScale::new(1.0).unwrap(), &origin);
        assert_eq!(one.x_nm, 6.0);
        assert_eq!(one.y_nm, 12.0);
        assert_eq!(one.dx_mle_nm, 0.0121);

        let scale = PixelScale::new(66.7).unwrap();
        let real = to_real_units(&result, &scale, &origin);
        assert!((real.dx_mle_nm - 0.81).abs() < 0.01);
        let double = to_real_units(&result, &PixelScale::new(133.4).unwrap(), &origin);
        assert!((double.x_nm - 2.0 * real.x_nm).abs() < 1e-9);
        assert!((double.dx_mle_nm - 2.0 * real.dx_mle_nm).abs() < 1e-12);
    }
}
