//! Nelder-Mead simplex minimization for small unconstrained problems.
//!
//! The objective may return `f64::INFINITY` to mark invalid regions; the
//! simplex contracts away from them.

/// Stopping parameters for [`nelder_mead`].
#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    /// Relative spread of objective values across the simplex below which
    /// the search stops.
    pub ftol: f64,
    /// Maximum coordinate spread of the simplex below which the search stops.
    pub xtol: f64,
    /// Iteration cap; the result is flagged unconverged when reached.
    pub max_iter: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            ftol: 1e-9,
            xtol: 1e-6,
            max_iter: 2000,
        }
    }
}

/// Outcome of a simplex minimization.
#[derive(Debug, Clone)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub fx: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Minimize `f` starting from `x0`, building the initial simplex by
/// stepping `steps[d]` along each coordinate `d`.
pub fn nelder_mead<F>(
    mut f: F,
    x0: &[f64],
    steps: &[f64],
    opts: &NelderMeadOptions,
) -> NelderMeadResult
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(x0.len(), steps.len());
    let n = x0.len();
    assert!(n >= 1);

    const ALPHA: f64 = 1.0; // reflection
    const GAMMA: f64 = 2.0; // expansion
    const RHO: f64 = 0.5; // contraction
    const SIGMA: f64 = 0.5; // shrink

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for d in 0..n {
        let mut v = x0.to_vec();
        v[d] += steps[d];
        simplex.push(v);
    }
    let mut fvals: Vec<f64> = simplex.iter().map(|v| f(v)).collect();

    let mut iterations = 0;
    let mut converged = false;

    while iterations < opts.max_iter {
        iterations += 1;

        // Order vertices best-first. NaN sorts worst.
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| fvals[a].total_cmp(&fvals[b]));
        let best = order[0];
        let worst = order[n];
        let second_worst = order[n - 1];

        let f_best = fvals[best];
        let f_worst = fvals[worst];

        // Convergence: relative objective spread and vertex spread both small.
        let f_spread = (f_worst - f_best).abs() / f_best.abs().max(1.0);
        let mut x_spread = 0.0f64;
        for v in &simplex {
            for d in 0..n {
                x_spread = x_spread.max((v[d] - simplex[best][d]).abs());
            }
        }
        if f_spread < opts.ftol && x_spread < opts.xtol {
            converged = true;
            break;
        }

        // Centroid of all vertices except the worst.
        let mut centroid = vec![0.0; n];
        for (i, v) in simplex.iter().enumerate() {
            if i == worst {
                continue;
            }
            for d in 0..n {
                centroid[d] += v[d];
            }
        }
        for c in &mut centroid {
            *c /= n as f64;
        }

        let point_along = |t: f64| -> Vec<f64> {
            (0..n)
                .map(|d| centroid[d] + t * (centroid[d] - simplex[worst][d]))
                .collect()
        };

        let reflected = point_along(ALPHA);
        let f_reflected = f(&reflected);

        if f_reflected < f_best {
            let expanded = point_along(GAMMA);
            let f_expanded = f(&expanded);
            if f_expanded < f_reflected {
                simplex[worst] = expanded;
                fvals[worst] = f_expanded;
            } else {
                simplex[worst] = reflected;
                fvals[worst] = f_reflected;
            }
        } else if f_reflected < fvals[second_worst] {
            simplex[worst] = reflected;
            fvals[worst] = f_reflected;
        } else {
            let contracted = if f_reflected < f_worst {
                point_along(RHO) // outside contraction
            } else {
                point_along(-RHO) // inside contraction
            };
            let f_contracted = f(&contracted);
            if f_contracted < f_worst.min(f_reflected) {
                simplex[worst] = contracted;
                fvals[worst] = f_contracted;
            } else {
                // Shrink toward the best vertex.
                for i in 0..=n {
                    if i == best {
                        continue;
                    }
                    for d in 0..n {
                        simplex[i][d] =
                            simplex[best][d] + SIGMA * (simplex[i][d] - simplex[best][d]);
                    }
                    fvals[i] = f(&simplex[i]);
                }
            }
        }
    }

    let best = (0..=n)
        .min_by(|&a, &b| fvals[a].total_cmp(&fvals[b]))
        .unwrap();
    NelderMeadResult {
        x: simplex[best].clone(),
        fx: fvals[best],
        iterations,
        converged,
    }
}
