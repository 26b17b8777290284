//! Synthetic field rendering with known ground truth, plus a brute-force
//! grid-search minimizer of the same Poisson objective. Both serve as
//! independent oracles for the analysis pipeline.
//!
//! Rendering composes an expected-count field (uniform-level crosses with
//! a small Gaussian edge blur, pixel-integrated Gaussian emitters, uniform
//! background), applies the scene rotation with bilinear resampling, and
//! only then draws per-pixel Poisson counts from a counter-based generator
//! keyed by (seed, pixel index). Identical scene and seed give bit-identical
//! images regardless of evaluation order or thread count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::gaussian_blur;
use crate::image::{rotate_about_center, rotate_point_about_center, Image, Point2D};
use crate::mle::{
    initial_guess, nll_value, psf_pixel_integral, SubRoiData, ThetaVector,
};
use crate::rng::PixelRng;

/// Largest expected count representable in the 16-bit output container.
const MAX_EXPECTED: f64 = 65535.0;

/// An alignment cross in a synthetic scene.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarkSceneSpec {
    /// Cross center, sub-pixel, in the unrotated frame.
    pub center: Point2D,
    /// Arm length in pixels; the cross spans 2*arm_length + 1 pixels.
    pub arm_length: usize,
    /// Arm width in pixels (odd, matching the discrete template).
    pub arm_width: usize,
    /// Expected counts per fully covered pixel.
    pub level: f64,
}

/// A point emitter in a synthetic scene.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmitterSceneSpec {
    /// Emitter position, sub-pixel, in the unrotated frame.
    pub position: Point2D,
    /// PSF variance in pixels squared.
    pub sigma2: f64,
    /// Total expected signal photons.
    pub alpha: f64,
}

fn default_schema_version() -> u32 {
    1
}

fn default_edge_blur() -> f64 {
    0.8
}

/// Complete description of a synthetic field; serializable as JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneSpec {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    pub width: usize,
    pub height: usize,
    pub nanometers_per_pixel: f64,
    #[serde(default)]
    pub marks: Vec<MarkSceneSpec>,
    #[serde(default)]
    pub emitters: Vec<EmitterSceneSpec>,
    /// Uniform expected background counts per pixel.
    pub background: f64,
    /// Rotation applied to the expected field before noise.
    #[serde(default)]
    pub rotation_deg: f64,
    pub rng_seed: u64,
    /// Gaussian edge blur applied to the mark layer (0 disables).
    #[serde(default = "default_edge_blur")]
    pub mark_edge_blur_sigma: f64,
    /// Clamp expected counts at 65535 instead of failing.
    #[serde(default)]
    pub clamp_expected: bool,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Parameter("scene dimensions must be positive".into()));
        }
        if !self.background.is_finite() || self.background < 0.0 {
            return Err(Error::Parameter("background must be finite and >= 0".into()));
        }
        if !self.nanometers_per_pixel.is_finite() || self.nanometers_per_pixel <= 0.0 {
            return Err(Error::Parameter("pixel scale must be positive".into()));
        }
        if self.mark_edge_blur_sigma < 0.0 || !self.mark_edge_blur_sigma.is_finite() {
            return Err(Error::Parameter("edge blur sigma must be >= 0".into()));
        }
        let inside = |p: &Point2D| {
            p.x >= 0.0
                && p.y >= 0.0
                && p.x <= (self.width - 1) as f64
                && p.y <= (self.height - 1) as f64
        };
        for (k, mark) in self.marks.iter().enumerate() {
            if !inside(&mark.center) {
                return Err(Error::Parameter(format!("mark {k} outside scene bounds")));
            }
            if mark.arm_width % 2 == 0 || mark.arm_width > 2 * mark.arm_length + 1 {
                return Err(Error::Parameter(format!(
                    "mark {k}: arm width must be odd and no wider than the cross"
                )));
            }
            if !mark.level.is_finite() || mark.level < 0.0 {
                return Err(Error::Parameter(format!("mark {k}: invalid level")));
            }
        }
        for (k, em) in self.emitters.iter().enumerate() {
            if !inside(&em.position) {
                return Err(Error::Parameter(format!("emitter {k} outside scene bounds")));
            }
            if !em.sigma2.is_finite() || em.sigma2 <= 0.0 {
                return Err(Error::Parameter(format!("emitter {k}: sigma2 must be > 0")));
            }
            if !em.alpha.is_finite() || em.alpha < 0.0 {
                return Err(Error::Parameter(format!("emitter {k}: alpha must be >= 0")));
            }
        }
        Ok(())
    }

    /// Where a point of the unrotated scene lands in the rendered frame.
    pub fn final_frame_position(&self, p: &Point2D) -> Point2D {
        rotate_point_about_center(p, self.width, self.height, self.rotation_deg)
    }

    /// The noise-free expected-count image, after rotation.
    pub fn expected_field(&self) -> Result<Image> {
        self.validate()?;
        let w = self.width;
        let h = self.height;

        let mut marks = vec![0.0f64; w * h];
        for mark in &self.marks {
            stamp_cross(&mut marks, w, h, mark);
        }
        let marks = if self.mark_edge_blur_sigma > 0.0 && self.marks.iter().any(|m| m.level > 0.0)
        {
            gaussian_blur(
                &Image::from_counts(w, h, marks).expect("coverage is non-negative"),
                self.mark_edge_blur_sigma,
            )
            .counts()
            .to_vec()
        } else {
            marks
        };

        let mut expected = marks;
        for v in &mut expected {
            *v += self.background;
        }
        for em in &self.emitters {
            stamp_emitter(&mut expected, w, h, em);
        }

        for v in &mut expected {
            if *v > MAX_EXPECTED {
                if self.clamp_expected {
                    *v = MAX_EXPECTED;
                } else {
                    return Err(Error::Range(format!(
                        "expected count {v} exceeds 65535 and clamping is disabled"
                    )));
                }
            }
        }

        let field = Image::from_counts(w, h, expected)?;
        Ok(if self.rotation_deg != 0.0 {
            rotate_about_center(&field, self.rotation_deg)
        } else {
            field
        })
    }
}

/// Render the scene: expected field plus per-pixel Poisson noise.
pub fn render_field(scene: &SceneSpec) -> Result<Image> {
    let expected = scene.expected_field()?;
    let w = expected.width();
    let seed = scene.rng_seed;
    let mut counts = vec![0.0f64; w * expected.height()];
    counts
        .par_chunks_mut(w)
        .enumerate()
        .for_each(|(y, out_row)| {
            let src = expected.row(y);
            for (x, out) in out_row.iter_mut().enumerate() {
                let stream = (y * w + x) as u64;
                *out = PixelRng::new(seed, stream).poisson(src[x]) as f64;
            }
        });
    Image::from_counts(w, expected.height(), counts)
}

/// Exact pixel coverage of an axis-aligned cross (union of two rectangles),
/// accumulated into the layer at the mark's level.
fn stamp_cross(layer: &mut [f64], width: usize, height: usize, mark: &MarkSceneSpec) {
    let cx = mark.center.x;
    let cy = mark.center.y;
    let long = (2 * mark.arm_length + 1) as f64 / 2.0;
    let wide = mark.arm_width as f64 / 2.0;

    let x_lo = ((cx - long).floor() as isize - 1).max(0) as usize;
    let x_hi = ((cx + long).ceil() as isize + 1).min(width as isize - 1) as usize;
    let y_lo = ((cy - long).floor() as isize - 1).max(0) as usize;
    let y_hi = ((cy + long).ceil() as isize + 1).min(height as isize - 1) as usize;

    let overlap = |lo: f64, hi: f64, p: usize| -> f64 {
        (hi.min(p as f64 + 0.5) - lo.max(p as f64 - 0.5)).max(0.0)
    };

    for y in y_lo..=y_hi {
        let horiz_y = overlap(cy - wide, cy + wide, y);
        let vert_y = overlap(cy - long, cy + long, y);
        for x in x_lo..=x_hi {
            let horiz_x = overlap(cx - long, cx + long, x);
            let vert_x = overlap(cx - wide, cx + wide, x);
            let both_x = overlap(cx - wide, cx + wide, x);
            let both_y = overlap(cy - wide, cy + wide, y);
            let coverage = horiz_x * horiz_y + vert_x * vert_y - both_x * both_y;
            if coverage > 0.0 {
                layer[y * width + x] += mark.level * coverage;
            }
        }
    }
}

/// Add a pixel-integrated Gaussian emitter to the expected layer.
fn stamp_emitter(layer: &mut [f64], width: usize, height: usize, em: &EmitterSceneSpec) {
    let reach = (8.0 * em.sigma2.sqrt()).ceil() as isize + 1;
    let x_lo = (em.position.x.round() as isize - reach).max(0) as usize;
    let x_hi = (em.position.x.round() as isize + reach).min(width as isize - 1) as usize;
    let y_lo = (em.position.y.round() as isize - reach).max(0) as usize;
    let y_hi = (em.position.y.round() as isize + reach).min(height as isize - 1) as usize;
    for y in y_lo..=y_hi {
        for x in x_lo..=x_hi {
            let p = psf_pixel_integral(em.position.x, em.position.y, em.sigma2, x as i64, y as i64);
            layer[y * width + x] += em.alpha * p;
        }
    }
}

/// Evaluation budget guard for the brute-force search.
const MAX_GRID_EVALUATIONS: usize = 10_000_000;

/// Number of refinement levels in the coarse-to-fine search.
const GRID_LEVELS: usize = 3;

/// Grid points per nuisance dimension (sigma2, alpha, beta).
const NUISANCE_POINTS: usize = 5;

/// Outcome of [`grid_search_mle`], including per-level diagnostics.
#[derive(Debug, Clone)]
pub struct GridSearchOutcome {
    pub theta: ThetaVector,
    pub nll: f64,
    /// Best NLL after each refinement level (non-increasing).
    pub level_nll: Vec<f64>,
    pub evaluations: usize,
}

/// Brute-force minimization of the Poisson NLL on a coarse-to-fine 5-D
/// grid, independent of the simplex path. The center grid is anchored at
/// the rounded moment centroid; `center_window` is its half-width in
/// pixels, `steps` the points per center dimension (odd, >= 5).
pub fn grid_search_mle(
    data: &SubRoiData,
    center_window: f64,
    steps: usize,
) -> Result<ThetaVector> {
    let mut init = initial_guess(data)?;
    init.i0 = init.i0.round();
    init.j0 = init.j0.round();
    Ok(grid_search_mle_from(data, &init, center_window, steps)?.theta)
}

/// Same search around an explicit starting vector (kept on-grid at every
/// level, so an on-grid optimum is returned exactly).
pub fn grid_search_mle_from(
    data: &SubRoiData,
    center: &ThetaVector,
    center_window: f64,
    steps: usize,
) -> Result<GridSearchOutcome> {
    center.validate()?;
    if steps < 5 || steps % 2 == 0 {
        return Err(Error::Parameter(format!(
            "steps must be odd and at least 5, got {steps}"
        )));
    }
    if !(center_window > 0.0 && center_window.is_finite()) {
        return Err(Error::Parameter("center_window must be positive".into()));
    }
    let total = GRID_LEVELS * steps * steps * NUISANCE_POINTS.pow(3);
    if total > MAX_GRID_EVALUATIONS {
        return Err(Error::Parameter(format!(
            "grid of {total} evaluations exceeds the {MAX_GRID_EVALUATIONS} budget"
        )));
    }

    let mut best = *center;
    best.beta = best.beta.max(1e-6);
    let mut best_nll = nll_value(&best, data);
    let mut evaluations = 0usize;
    let mut level_nll = Vec::with_capacity(GRID_LEVELS);

    let mut center_halfwidth = center_window;
    // Multiplicative half-spans for sigma2, alpha, beta.
    let mut log_spans = [1.45f64.ln(), 1.4f64.ln(), 2.0f64.ln()];

    for _ in 0..GRID_LEVELS {
        let anchor = best;
        let center_step = 2.0 * center_halfwidth / (steps - 1) as f64;
        let i0_grid = linear_grid(anchor.i0, center_halfwidth, steps);
        let j0_grid = linear_grid(anchor.j0, center_halfwidth, steps);
        let s2_grid = log_grid(anchor.sigma2, log_spans[0], NUISANCE_POINTS);
        let a_grid = log_grid(anchor.alpha.max(1e-3), log_spans[1], NUISANCE_POINTS);
        let b_grid = log_grid(anchor.beta.max(1e-6), log_spans[2], NUISANCE_POINTS);

        for &sigma2 in &s2_grid {
            for &i0 in &i0_grid {
                for &j0 in &j0_grid {
                    for &alpha in &a_grid {
                        for &beta in &b_grid {
                            let theta = ThetaVector {
                                i0,
                                j0,
                                sigma2,
                                alpha,
                                beta,
                            };
                            let nll = nll_value(&theta, data);
                            evaluations += 1;
                            if nll < best_nll {
                                best_nll = nll;
                                best = theta;
                            }
                        }
                    }
                }
            }
        }

        level_nll.push(best_nll);
        center_halfwidth = center_step;
        for span in &mut log_spans {
            *span *= 2.0 / (NUISANCE_POINTS - 1) as f64;
        }
    }

    if !best_nll.is_finite() {
        return Err(Error::Numerical(
            "grid search found no finite objective value".into(),
        ));
    }
    Ok(GridSearchOutcome {
        theta: best,
        nll: best_nll,
        level_nll,
        evaluations,
    })
}

fn linear_grid(center: f64, halfwidth: f64, points: usize) -> Vec<f64> {
    let step = 2.0 * halfwidth / (points - 1) as f64;
    (0..points)
        .map(|k| center + (k as f64 - (points - 1) as f64 / 2.0) * step)
        .collect()
}

fn log_grid(center: f64, log_span: f64, points: usize) -> Vec<f64> {
    let step = 2.0 * log_span / (points - 1) as f64;
    (0..points)
        .map(|k| center * ((k as f64 - (points - 1) as f64 / 2.0) * step).exp())
        .collect()
}
