//! Separable Gaussian smoothing on channel-interleaved grids.

use rayon::prelude::*;

use crate::volume::Dims;

/// Normalized 1D Gaussian truncated at 4 standard deviations.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let radius = (4.0 * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|w| *w /= sum);
    k
}

/// Half-sample symmetric reflection (`d c b a | a b c d | d c b a`).
#[inline]
fn reflect(mut i: i64, n: i64) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * n;
    i = i.rem_euclid(period);
    if i >= n {
        i = period - 1 - i;
    }
    i as usize
}

/// Convolves every channel of `data` (voxel-major, `channels` values per
/// voxel) with `kernel` along `axis`.
pub fn convolve_axis(data: &[f32], dims: Dims, channels: usize, axis: usize, kernel: &[f64]) -> Vec<f32> {
    if kernel.len() == 1 {
        return data.to_vec();
    }
    let radius = (kernel.len() / 2) as i64;
    let n = dims.0[axis] as i64;
    let stride = match axis {
        0 => 1,
        1 => dims.nx(),
        _ => dims.nx() * dims.ny(),
    } * channels;
    let plane = dims.nx() * dims.ny() * channels;
    let mut out = vec![0f32; data.len()];
    out.par_chunks_mut(plane).enumerate().for_each(|(z, chunk)| {
        for (j, o) in chunk.iter_mut().enumerate() {
            let flat = z * plane + j;
            let vox = flat / channels;
            let pos = match axis {
                0 => vox % dims.nx(),
                1 => (vox / dims.nx()) % dims.ny(),
                _ => z,
            } as i64;
            let base = flat - pos as usize * stride;
            let mut acc = 0f64;
            for (t, &w) in kernel.iter().enumerate() {
                let src = reflect(pos + t as i64 - radius, n);
                acc += w * data[base + src * stride] as f64;
            }
            *o = acc as f32;
        }
    });
    out
}

/// Gaussian smoothing along all three axes (std in voxels).
pub fn gaussian_smooth(data: &[f32], dims: Dims, channels: usize, sigma: f64) -> Vec<f32> {
    if sigma <= 0.0 {
        return data.to_vec();
    }
    let k = gaussian_kernel(sigma);
    let mut cur = data.to_vec();
    for axis in 0..3 {
        if dims.0[axis] > 1 {
            cur = convolve_axis(&cur, dims, channels, axis, &k);
        }
    }
    cur
}
