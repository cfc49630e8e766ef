//! Bit-exact resampling: bilinear with half-pixel centers, evaluated in
//! integer arithmetic and rounded half up.

use rand::Rng;

use super::DataError;
use crate::image::Image;
use crate::rng::{self, Stream};

pub const VLA_SIZE: u32 = 224;
pub const VLA_CAM1_HEIGHT: u32 = 144;
pub const VLA_CAM2_HEIGHT: u32 = 80;
pub const DIFFUSION_WIDTH: u32 = 320;
pub const DIFFUSION_HEIGHT: u32 = 240;
pub const CROP_WIDTH: u32 = 288;
pub const CROP_HEIGHT: u32 = 216;

/// Source taps and weight numerator for one output coordinate; the weight
/// denominator is `2 * out`.
fn taps(dst: u32, out: u32, inp: u32) -> (u32, u32, u64) {
    // source coordinate = ((2 dst + 1) inp - out) / (2 out)
    let num = (2 * dst as i64 + 1) * inp as i64 - out as i64;
    if num <= 0 {
        return (0, 0, 0);
    }
    let num = num as u64;
    let den = 2 * out as u64;
    let i0 = (num / den) as u32;
    if i0 >= inp - 1 {
        return (inp - 1, inp - 1, 0);
    }
    (i0, i0 + 1, num % den)
}

/// Resizes to `width` x `height`. An empty source gives a black image.
pub fn resize_bilinear(src: &Image, width: u32, height: u32) -> Image {
    let (sw, sh) = src.dimensions();
    if sw == 0 || sh == 0 {
        return Image::new(width, height, [0, 0, 0]);
    }
    let dx = 2 * width as u64;
    let dy = 2 * height as u64;
    let d = dx * dy;
    let cols: Vec<_> = (0..width).map(|x| taps(x, width, sw)).collect();
    let mut out = Vec::with_capacity((width * height * 3) as usize);
    for y in 0..height {
        let (y0, y1, fy) = taps(y, height, sh);
        let (wy0, wy1) = (dy - fy, fy);
        for &(x0, x1, fx) in &cols {
            let (wx0, wx1) = (dx - fx, fx);
            let (p00, p10, p01, p11) = (src.get(x0, y0), src.get(x1, y0), src.get(x0, y1), src.get(x1, y1));
            for c in 0..3 {
                let s = p00[c] as u64 * wx0 * wy0
                    + p10[c] as u64 * wx1 * wy0
                    + p01[c] as u64 * wx0 * wy1
                    + p11[c] as u64 * wx1 * wy1;
                out.push(((2 * s + d) / (2 * d)) as u8);
            }
        }
    }
    Image::from_raw(width, height, out).expect("sized buffer")
}

/// Static view on top (224x144), wrist view below (224x80).
pub fn preprocess_vla_images(cam1: &Image, cam2: &Image) -> Image {
    resize_bilinear(cam1, VLA_SIZE, VLA_CAM1_HEIGHT).vconcat(&resize_bilinear(cam2, VLA_SIZE, VLA_CAM2_HEIGHT))
}

/// Model input size for the grasp set, before augmentation.
pub fn preprocess_diffusion_image(img: &Image) -> Image {
    resize_bilinear(img, DIFFUSION_WIDTH, DIFFUSION_HEIGHT)
}

/// Crop origin drawn uniformly from x in [0, 32], y in [0, 24].
pub fn crop_origin(seed: u64) -> (u32, u32) {
    let mut r = rng::stream(seed, Stream::Augment);
    let x = r.random_range(0..=DIFFUSION_WIDTH - CROP_WIDTH);
    let y = r.random_range(0..=DIFFUSION_HEIGHT - CROP_HEIGHT);
    (x, y)
}

pub fn augment_diffusion_image(img: &Image, seed: u64) -> Result<Image, DataError> {
    let (w, h) = img.dimensions();
    if (w, h) != (DIFFUSION_WIDTH, DIFFUSION_HEIGHT) {
        return Err(DataError::WrongInputSize { w, h, expected_w: DIFFUSION_WIDTH, expected_h: DIFFUSION_HEIGHT });
    }
    let (x, y) = crop_origin(seed);
    Ok(img.crop(x, y, CROP_WIDTH, CROP_HEIGHT))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_images_stay_constant() {
        let a = Image::new(37, 23, [200, 10, 99]);
        let b = Image::new(5, 90, [1, 2, 3]);
        let out = preprocess_vla_images(&a, &b);
        assert_eq!(out.dimensions(), (224, 224));
        for y in 0..224 {
            for x in 0..224 {
                assert_eq!(out.get(x, y), if y < 144 { [200, 10, 99] } else { [1, 2, 3] });
            }
        }
    }

    #[test]
    fn identity_and_halving() {
        let img = Image::from_fn(8, 6, |x, y| [(x * 30) as u8, (y * 40) as u8, ((x + y) * 10) as u8]);
        assert_eq!(resize_bilinear(&img, 8, 6), img);
        // halving averages 2x2 blocks: (0 + 30) / 2 = 15
        let half = resize_bilinear(&img, 4, 3);
        assert_eq!(half.get(0, 0), [15, 20, 10]);
    }

    #[test]
    fn half_rounds_up() {
        // two pixels 0 and 1 sampled midway give 0.5, which rounds to 1
        let img = Image::from_raw(2, 1, vec![0, 0, 0, 1, 1, 1]).unwrap();
        assert_eq!(resize_bilinear(&img, 1, 1).get(0, 0), [1, 1, 1]);
    }

    #[test]
    fn crop_requires_exact_size() {
        let img = Image::new(321, 240, [0; 3]);
        assert!(matches!(augment_diffusion_image(&img, 1), Err(DataError::WrongInputSize { .. })));
        let img = Image::new(320, 240, [0; 3]);
        assert_eq!(augment_diffusion_image(&img, 1).unwrap().dimensions(), (288, 216));
    }
}
