//! Grid Fourier transforms on centered, uniformly spaced grids.
//!
//! A grid with `n` points per axis and spacing `dx` has nodes
//! `x_j = (j − n/2)·dx`. Transforms follow `F[f](ξ) = ∫ e^{−ix·ξ} f(x) dx`
//! with the inverse carrying `(2π)^{−d}`.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

/// Angular frequency of FFT bin `m` for `n` points of spacing `dx`.
pub fn freq(m: usize, n: usize, dx: f64) -> f64 {
    let mm = if m < n / 2 { m as isize } else { m as isize - n as isize };
    2.0 * std::f64::consts::PI * mm as f64 / (n as f64 * dx)
}

/// In-place multi-dimensional FFT of a row-major array (last axis fastest).
/// Unnormalized in both directions.
pub fn fft_nd(data: &mut [Complex64], dims: &[usize], inverse: bool) {
    let total: usize = dims.iter().product();
    assert_eq!(total, data.len(), "dims do not match data length");
    let mut planner = FftPlanner::new();
    for (ax, &n) in dims.iter().enumerate() {
        let plan = if inverse { planner.plan_fft_inverse(n) } else { planner.plan_fft_forward(n) };
        let stride: usize = dims[ax + 1..].iter().product();
        if stride == 1 {
            crate::par::for_each_chunk_mut(data, n, |_, line| plan.process(line));
            continue;
        }
        // Lines along a strided axis: gather, transform, scatter per outer block.
        let block = n * stride;
        crate::par::for_each_chunk_mut(data, block, |_, blk| {
            let mut line = vec![Complex64::new(0.0, 0.0); n];
            for off in 0..stride {
                for i in 0..n {
                    line[i] = blk[i * stride + off];
                }
                plan.process(&mut line);
                for i in 0..n {
                    blk[i * stride + off] = line[i];
                }
            }
        });
    }
}

/// Moves index `j` of a centered grid to FFT order and back.
fn shift_index(j: usize, n: usize) -> usize {
    (j + n / 2) % n
}

/// Reorders a centered 2-D array into FFT order (`inverse = false`) or back.
pub fn shift2(values: &[Complex64], n: usize, to_centered: bool) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for j in 0..n {
            let (a, b) = (shift_index(i, n), shift_index(j, n));
            if to_centered {
                out[i * n + j] = values[a * n + b];
            } else {
                out[a * n + b] = values[i * n + j];
            }
        }
    }
    out
}

/// Samples of `F⁻¹[spec](x)` on the centered `n × n` grid with spacing `dx`;
/// `spec(ξ₁, ξ₂)` is evaluated at FFT frequencies. Returns the real part and
/// the largest imaginary residue.
pub fn inverse_2d<F>(spec: F, n: usize, dx: f64) -> (Vec<f64>, f64)
where
    F: Fn(f64, f64) -> Complex64 + Sync + Send,
{
    let freqs: Vec<f64> = (0..n).map(|m| freq(m, n, dx)).collect();
    let mut data = crate::par::map_indices(n * n, |idx| spec(freqs[idx / n], freqs[idx % n]));
    fft_nd(&mut data, &[n, n], true);
    let norm = 1.0 / (n as f64 * dx).powi(2);
    let centered = shift2(&data, n, true);
    let mut imag: f64 = 0.0;
    let vals = centered
        .iter()
        .map(|c| {
            imag = imag.max((c.im * norm).abs());
            c.re * norm
        })
        .collect();
    (vals, imag)
}

/// Spectrum `F[f](ξ)` of centered grid samples, returned in FFT order.
pub fn forward_2d(values: &[f64], n: usize, dx: f64) -> Vec<Complex64> {
    let c: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let mut data = shift2(&c, n, false);
    fft_nd(&mut data, &[n, n], false);
    let a = dx * dx;
    data.iter_mut().for_each(|z| *z *= a);
    data
}
