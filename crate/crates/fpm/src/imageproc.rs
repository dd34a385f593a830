//! Geometric and photometric normalization: raw 8-bit images are resized to
//! the working resolution and z-scored per image; the inverse map turns a
//! real-valued tensor back into a displayable image.

use serde::{Deserialize, Serialize};

use crate::dataset::RawImage;
use crate::{Error, Result};

/// Guard floor applied to standard deviations used for scaling.
pub const STD_EPS: f64 = 1e-8;

/// Real-valued image matrix, row-major, double precision.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ImageTensor {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!(
                "zero dimension in {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "data length {} does not match {width}x{height}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }
}

/// Mean and standard deviation recorded when an image was normalized.
/// `std` is stored unguarded; scaling always uses `max(std, STD_EPS)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormParams {
    pub mean: f64,
    pub std: f64,
}

fn src_coord(out_idx: usize, src_dim: usize, dst_dim: usize) -> f64 {
    if dst_dim == 1 {
        0.0
    } else {
        out_idx as f64 * (src_dim - 1) as f64 / (dst_dim - 1) as f64
    }
}

/// Align-corners bilinear resize. Output pixel `j` samples source
/// coordinate `j * (srcDim - 1) / (dstDim - 1)` per axis.
pub fn resize_bilinear(image: &RawImage, out_w: usize, out_h: usize) -> ImageTensor {
    assert!(out_w >= 1 && out_h >= 1, "output dimensions must be >= 1");
    let (w, h) = (image.width(), image.height());
    let mut data = Vec::with_capacity(out_w * out_h);
    for oy in 0..out_h {
        let sy = src_coord(oy, h, out_h);
        let y0 = (sy.floor() as usize).min(h - 1);
        let y1 = (y0 + 1).min(h - 1);
        let dy = sy - y0 as f64;
        for ox in 0..out_w {
            let sx = src_coord(ox, w, out_w);
            let x0 = (sx.floor() as usize).min(w - 1);
            let x1 = (x0 + 1).min(w - 1);
            let dx = sx - x0 as f64;
            let top = (1.0 - dx) * image.get(x0, y0) as f64 + dx * image.get(x1, y0) as f64;
            let bottom = (1.0 - dx) * image.get(x0, y1) as f64 + dx * image.get(x1, y1) as f64;
            data.push((1.0 - dy) * top + dy * bottom);
        }
    }
    ImageTensor::new(out_w, out_h, data).expect("requested dimensions are nonzero")
}

/// Per-image z-score over all pixels (population standard deviation).
/// Constant images map to all zeros via the `STD_EPS` guard.
pub fn normalize(image: &ImageTensor) -> (ImageTensor, NormParams) {
    let n = image.data.len() as f64;
    let mean = image.data.iter().sum::<f64>() / n;
    let var = image
        .data
        .iter()
        .map(|v| {
            let d = v - mean;
            d * d
        })
        .sum::<f64>()
        / n;
    let std = var.sqrt();
    let scale = std.max(STD_EPS);
    let data = image.data.iter().map(|v| (v - mean) / scale).collect();
    (
        ImageTensor::new(image.width, image.height, data).expect("same dimensions"),
        NormParams { mean, std },
    )
}

/// Invert [`normalize`]: scale back, round half away from zero, clamp to
/// the 8-bit range.
pub fn denormalize(tensor: &ImageTensor, params: &NormParams) -> RawImage {
    let scale = params.std.max(STD_EPS);
    let data = tensor
        .data
        .iter()
        .map(|v| (v * scale + params.mean).round().clamp(0.0, 255.0) as u8)
        .collect();
    RawImage::new(tensor.width, tensor.height, data).expect("tensor dimensions are valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> RawImage {
        RawImage::new(w, h, (0..w * h).map(|_| rng.gen()).collect()).unwrap()
    }

    #[test]
    fn resize_constant_stays_constant() {
        let img = RawImage::new(5, 5, vec![42; 25]).unwrap();
        for (w, h) in [(1, 1), (3, 7), (12, 4)] {
            let out = resize_bilinear(&img, w, h);
            assert!(out.data().iter().all(|&v| (v - 42.0).abs() < 1e-12));
        }
    }

    #[test]
    fn resize_ramp_2x2_to_3x3() {
        let img = RawImage::new(2, 2, vec![0, 1, 0, 1]).unwrap();
        let out = resize_bilinear(&img, 3, 3);
        let expected = [0.0, 0.5, 1.0, 0.0, 0.5, 1.0, 0.0, 0.5, 1.0];
        for (got, want) in out.data().iter().zip(expected) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn resize_same_size_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let img = random_image(&mut rng, 8, 8);
        let out = resize_bilinear(&img, 8, 8);
        for (got, want) in out.data().iter().zip(img.data()) {
            assert_eq!(*got, *want as f64);
        }
    }

    #[test]
    fn resize_preserves_min_max_envelope() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let w = rng.gen_range(2..16);
            let h = rng.gen_range(2..16);
            let img = random_image(&mut rng, w, h);
            let lo = *img.data().iter().min().unwrap() as f64;
            let hi = *img.data().iter().max().unwrap() as f64;
            let out = resize_bilinear(&img, rng.gen_range(1..24), rng.gen_range(1..24));
            for &v in out.data() {
                assert!(v >= lo - 1e-9 && v <= hi + 1e-9);
            }
        }
    }

    #[test]
    fn normalize_constant_hits_sigma_guard() {
        let img = ImageTensor::new(3, 3, vec![9.0; 9]).unwrap();
        let (out, params) = normalize(&img);
        assert!(out.data().iter().all(|&v| v == 0.0));
        assert_eq!(params.mean, 9.0);
        assert_eq!(params.std, 0.0);
    }

    #[test]
    fn normalize_two_point() {
        let img = ImageTensor::new(2, 1, vec![0.0, 2.0]).unwrap();
        let (out, params) = normalize(&img);
        assert_eq!(out.data(), &[-1.0, 1.0]);
        assert_eq!(params.mean, 1.0);
        assert_eq!(params.std, 1.0);
    }

    #[test]
    fn normalize_centers_and_scales_random_images() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let img = random_image(&mut rng, 16, 16);
            let real = resize_bilinear(&img, 16, 16);
            let (out, params) = normalize(&real);
            let n = out.data().len() as f64;
            let mean = out.data().iter().sum::<f64>() / n;
            let var = out.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            assert!(mean.abs() < 1e-12, "residual mean {mean}");
            if params.std > STD_EPS {
                assert!((var.sqrt() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn denormalize_round_trip_within_one_level() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let img = random_image(&mut rng, 12, 12);
            let real = resize_bilinear(&img, 12, 12);
            let (norm, params) = normalize(&real);
            let back = denormalize(&norm, &params);
            for (a, b) in back.data().iter().zip(img.data()) {
                assert!((*a as i32 - *b as i32).abs() <= 1);
            }
        }
    }

    #[test]
    fn denormalize_zero_tensor_gives_mean() {
        let t = ImageTensor::new(2, 2, vec![0.0; 4]).unwrap();
        let img = denormalize(&t, &NormParams { mean: 100.0, std: 5.0 });
        assert!(img.data().iter().all(|&v| v == 100));
    }

    #[test]
    fn denormalize_clamps() {
        let t = ImageTensor::new(1, 1, vec![1e6]).unwrap();
        let img = denormalize(&t, &NormParams { mean: 0.0, std: 1.0 });
        assert_eq!(img.data(), &[255]);
        let t = ImageTensor::new(1, 1, vec![-1e6]).unwrap();
        let img = denormalize(&t, &NormParams { mean: 0.0, std: 1.0 });
        assert_eq!(img.data(), &[0]);
    }
}
