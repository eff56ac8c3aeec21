//! Smoothing and thresholding of greyscale voxel images.

use crate::material::VoxelGrid;
use crate::{Error, Result};

/// Normalized Gaussian weights for offsets `-r..=r`, `r = ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as i64;
    let w: Vec<f64> = (-r..=r)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Mirror index into `0..n` about the outer pixel faces, so `-1 -> 0` and
/// `n -> n - 1`.
pub fn reflect(i: i64, n: usize) -> usize {
    let n = n as i64;
    let period = 2 * n;
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - 1 - m;
    }
    m as usize
}

/// Separable Gaussian blur with reflected borders; the result is clamped
/// to `[0, 1]`.
pub fn gaussian_filter(grid: &VoxelGrid, sigma_px: f64) -> Result<VoxelGrid> {
    if !(sigma_px > 0.0 && sigma_px.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "Gaussian sigma must be positive, got {sigma_px}"
        )));
    }
    let k = gaussian_kernel(sigma_px);
    let r = (k.len() / 2) as i64;
    let (w, h) = (grid.width, grid.height);
    let mut tmp = vec![0.0; w * h];
    for j in 0..h {
        for i in 0..w {
            let mut s = 0.0;
            for (t, kv) in k.iter().enumerate() {
                s += kv * grid.values[j * w + reflect(i as i64 + t as i64 - r, w)];
            }
            tmp[j * w + i] = s;
        }
    }
    let mut out = vec![0.0; w * h];
    for j in 0..h {
        for i in 0..w {
            let mut s = 0.0;
            for (t, kv) in k.iter().enumerate() {
                s += kv * tmp[reflect(j as i64 + t as i64 - r, h) * w + i];
            }
            out[j * w + i] = s.clamp(0.0, 1.0);
        }
    }
    VoxelGrid::new(w, h, out, grid.pixel_size)
}

/// `1` where the value is at least `threshold`, `0` elsewhere.
pub fn binarize(grid: &VoxelGrid, threshold: f64) -> Result<VoxelGrid> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "threshold must lie in (0, 1), got {threshold}"
        )));
    }
    let values = grid
        .values
        .iter()
        .map(|&v| if v >= threshold { 1.0 } else { 0.0 })
        .collect();
    VoxelGrid::new(grid.width, grid.height, values, grid.pixel_size)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflection() {
        assert_eq!(reflect(-1, 5), 0);
        assert_eq!(reflect(-2, 5), 1);
        assert_eq!(reflect(5, 5), 4);
        assert_eq!(reflect(6, 5), 3);
        assert_eq!(reflect(-7, 3), 0);
        assert_eq!(reflect(2, 1), 0);
    }

    #[test]
    fn kernel_is_normalized() {
        let k = gaussian_kernel(1.0);
        assert_eq!(k.len(), 7);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn constant_image_is_preserved() {
        let g = VoxelGrid::new(5, 4, vec![0.37; 20], 1.0).unwrap();
        let f = gaussian_filter(&g, 1.3).unwrap();
        assert!(f.values.iter().all(|v| (v - 0.37).abs() < 1e-12));
        assert!(gaussian_filter(&g, 0.0).is_err());
    }

    #[test]
    fn thresholding() {
        let g = VoxelGrid::new(2, 2, vec![0.3, 0.7, 0.7, 0.3], 1.0).unwrap();
        assert_eq!(binarize(&g, 0.5).unwrap().values, vec![0.0, 1.0, 1.0, 0.0]);
        let low = VoxelGrid::new(2, 1, vec![0.4, 0.4], 1.0).unwrap();
        assert_eq!(binarize(&low, 0.5).unwrap().values, vec![0.0, 0.0]);
        assert!(binarize(&g, 1.0).is_err());
    }
}
