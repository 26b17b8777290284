//! Separable Gaussian filtering with reflective boundary handling.

use rayon::prelude::*;

use crate::image::Image;

/// Discrete Gaussian kernel truncated at `4*sigma`, normalized to unit sum.
///
/// Exposed so tests can evaluate the exact kernel the blur applies.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    assert!(sigma > 0.0 && sigma.is_finite());
    let radius = (4.0 * sigma).ceil().max(1.0) as usize;
    let inv_two_sigma2 = 1.0 / (2.0 * sigma * sigma);
    let mut weights: Vec<f64> = (-(radius as isize)..=radius as isize)
        .map(|k| (-((k * k) as f64) * inv_two_sigma2).exp())
        .collect();
    let sum: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= sum;
    }
    weights
}

/// Symmetric reflection of an out-of-range index (edge sample repeated):
/// -1 -> 0, -2 -> 1, n -> n-1, n+1 -> n-2.
#[inline]
fn reflect(mut i: isize, n: usize) -> usize {
    let n = n as isize;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i as usize;
        }
    }
}

/// Gaussian blur with standard deviation `sigma` in pixels, reflective
/// boundaries. `sigma == 0` returns the input unchanged.
pub fn gaussian_blur(image: &Image, sigma: f64) -> Image {
    if sigma == 0.0 {
        return image.clone();
    }
    let kernel = gaussian_kernel(sigma);
    let radius = kernel.len() / 2;
    let w = image.width();
    let h = image.height();

    // Horizontal pass, parallel over rows.
    let mut horiz = vec![0.0f64; w * h];
    horiz
        .par_chunks_mut(w)
        .enumerate()
        .for_each(|(y, out_row)| {
            let row = image.row(y);
            for (x, out) in out_row.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (k, &wk) in kernel.iter().enumerate() {
                    let xi = reflect(x as isize + k as isize - radius as isize, w);
                    acc += wk * row[xi];
                }
                *out = acc;
            }
        });

    // Vertical pass as weighted row sums, parallel over output rows.
    let mut counts = vec![0.0f64; w * h];
    counts
        .par_chunks_mut(w)
        .enumerate()
        .for_each(|(y, out_row)| {
            for (k, &wk) in kernel.iter().enumerate() {
                let yi = reflect(y as isize + k as isize - radius as isize, h);
                let src = &horiz[yi * w..(yi + 1) * w];
                for (out, &v) in out_row.iter_mut().zip(src) {
                    *out += wk * v;
                }
            }
        });

    // Negative round-off from non-negative inputs is clipped at zero so the
    // result remains a valid Image.
    for c in &mut counts {
        if *c < 0.0 {
            *c = 0.0;
        }
    }
    Image::from_counts(w, h, counts).expect("blur preserves image validity")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_is_normalized_and_symmetric() {
        let k = gaussian_kernel(2.3);
        let sum: f64 = k.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        for i in 0..k.len() / 2 {
            assert_eq!(k[i], k[k.len() - 1 - i]);
        }
    }

    #[test]
    fn blur_preserves_constant_image() {
        let img = Image::from_counts(16, 9, vec![7.5; 144]).unwrap();
        let out = gaussian_blur(&img, 2.0);
        for &c in out.counts() {
            assert!((c - 7.5).abs() < 1e-12);
        }
    }

    #[test]
    fn blur_preserves_total_mass_in_interior() {
        // An impulse far from borders keeps unit mass after blurring.
        let mut counts = vec![0.0; 41 * 41];
        counts[20 * 41 + 20] = 1.0;
        let img = Image::from_counts(41, 41, counts).unwrap();
        let out = gaussian_blur(&img, 1.5);
        let total: f64 = out.counts().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reflect_indexing() {
        assert_eq!(reflect(-1, 5), 0);
        assert_eq!(reflect(-2, 5), 1);
        assert_eq!(reflect(5, 5), 4);
        assert_eq!(reflect(6, 5), 3);
        assert_eq!(reflect(2, 5), 2);
    }
}
