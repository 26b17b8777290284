//! Counter-based deterministic random number generation.
//!
//! Every pixel of a rendered scene gets its own stream derived from
//! (seed, pixel index) through a splitmix64 mix, so draws are independent
//! of evaluation order and safe to parallelize. Output is stable across
//! platforms and thread counts.

/// Deterministic stream generator based on splitmix64.
#[derive(Debug, Clone)]
pub struct PixelRng {
    state: u64,
}

impl PixelRng {
    /// Stream keyed by a global seed and a stream index (e.g. pixel index).
    pub fn new(seed: u64, stream: u64) -> Self {
        // Two mixing rounds decorrelate (seed, stream) pairs.
        let mut state = seed ^ stream.wrapping_mul(0x9E3779B97F4A7C15);
        state = splitmix64(&mut state);
        Self { state }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        splitmix64(&mut self.state)
    }

    /// Uniform double in [0, 1) with 53 random bits.
    #[inline]
    pub fn uniform_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal deviate (Box-Muller).
    pub fn normal_f64(&mut self) -> f64 {
        let u1 = loop {
            let u = self.uniform_f64();
            if u > 0.0 {
                break u;
            }
        };
        let u2 = self.uniform_f64();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    /// Poisson deviate with the given mean.
    ///
    /// Uses Knuth's product-of-uniforms method for small means and the
    /// PTRS transformed-rejection method (Hormann 1993) otherwise.
    pub fn poisson(&mut self, lambda: f64) -> u64 {
        assert!(lambda >= 0.0 && lambda.is_finite());
        if lambda == 0.0 {
            0
        } else if lambda < 12.0 {
            self.poisson_knuth(lambda)
        } else {
            self.poisson_ptrs(lambda)
        }
    }

    fn poisson_knuth(&mut self, lambda: f64) -> u64 {
        let limit = (-lambda).exp();
        let mut k = 0u64;
        let mut product = 1.0;
        loop {
            product *= self.uniform_f64();
            if product <= limit {
                return k;
            }
            k += 1;
        }
    }

    fn poisson_ptrs(&mut self, lambda: f64) -> u64 {
        let b = 0.931 + 2.53 * lambda.sqrt();
        let a = -0.059 + 0.02483 * b;
        let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
        let v_r = 0.9277 - 3.6224 / (b - 2.0);
        let log_lambda = lambda.ln();
        loop {
            let u = self.uniform_f64() - 0.5;
            let v = self.uniform_f64();
            let us = 0.5 - u.abs();
            let k = ((2.0 * a / us + b) * u + lambda + 0.43).floor();
            if us >= 0.07 && v <= v_r {
                return k as u64;
            }
            if k < 0.0 || (us < 0.013 && v > us) {
                continue;
            }
            let accept = (v * inv_alpha / (a / (us * us) + b)).ln();
            if accept <= k * log_lambda - lambda - ln_factorial(k as u64) {
                return k as u64;
            }
        }
    }
}

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// ln(k!) via the Lanczos approximation of ln Gamma(k + 1).
fn ln_factorial(k: u64) -> f64 {
    ln_gamma(k as f64 + 1.0)
}

/// Lanczos approximation (g = 7, 9 coefficients), ~1e-13 relative error.
fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 8] = [
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    debug_assert!(x > 0.0);
    let z = x - 1.0;
    let mut acc = 0.99999999999980993;
    for (i, c) in COEFFS.iter().enumerate() {
        acc += c / (z + i as f64 + 1.0);
    }
    let t = z + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (z + 0.5) * t.ln() - t + acc.ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_deterministic_and_distinct() {
        let a: Vec<u64> = {
            let mut r = PixelRng::new(42, 7);
            (0..8).map(|_| r.next_u64()).collect()
        };
        let b: Vec<u64> = {
            let mut r = PixelRng::new(42, 7);
            (0..8).map(|_| r.next_u64()).collect()
        };
        let c: Vec<u64> = {
            let mut r = PixelRng::new(42, 8);
            (0..8).map(|_| r.next_u64()).collect()
        };
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn ln_gamma_matches_known_values() {
        // ln(0!) = 0, ln(1!) = 0, ln(5!) = ln 120, ln(170!) near f64 limits.
        assert!(ln_factorial(0).abs() < 1e-12);
        assert!(ln_factorial(1).abs() < 1e-12);
        assert!((ln_factorial(5) - 120.0f64.ln()).abs() < 1e-12);
        let mut exact = 0.0;
        for k in 2..=170u64 {
            exact += (k as f64).ln();
        }
        assert!((ln_factorial(170) - exact).abs() / exact < 1e-13);
    }

    #[test]
    fn poisson_small_mean_moments() {
        let lambda = 3.5;
        let n = 200_000u64;
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        for stream in 0..n {
            let k = PixelRng::new(1, stream).poisson(lambda) as f64;
            sum += k;
            sum2 += k * k;
        }
        let mean = sum / n as f64;
        let var = sum2 / n as f64 - mean * mean;
        assert!((mean - lambda).abs() < 0.03, "mean = {mean}");
        assert!((var - lambda).abs() < 0.08, "var = {var}");
    }

    #[test]
    fn poisson_large_mean_moments() {
        let lambda = 2500.0;
        let n = 50_000u64;
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        for stream in 0..n {
            let k = PixelRng::new(9, stream).poisson(lambda) as f64;
            sum += k;
            sum2 += k * k;
        }
        let mean = sum / n as f64;
        let var = sum2 / n as f64 - mean * mean;
        assert!((mean - lambda).abs() / lambda < 0.002, "mean = {mean}");
        assert!((var - lambda).abs() / lambda < 0.03, "var = {var}");
    }

    #[test]
    fn poisson_dispersion_near_unity() {
        // Index of dispersion within [0.9, 1.1] at lambda = 10.
        let lambda = 10.0;
        let n = 10_000u64;
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        for stream in 0..n {
            let k = PixelRng::new(1234, stream).poisson(lambda) as f64;
            sum += k;
            sum2 += k * k;
        }
        let mean = sum / n as f64;
        let var = sum2 / n as f64 - mean * mean;
        let dispersion = var / mean;
        assert!(
            (0.9..=1.1).contains(&dispersion),
            "dispersion = {dispersion}"
        );
    }

    #[test]
    fn normal_moments() {
        let n = 100_000u64;
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        for stream in 0..n {
            let z = PixelRng::new(5, stream).normal_f64();
            sum += z;
            sum2 += z * z;
        }
        let mean = sum / n as f64;
        let var = sum2 / n as f64 - mean * mean;
        assert!(mean.abs() < 0.02);
        assert!((var - 1.0).abs() < 0.03);
    }
}
