//! Image pyramid construction by 2x2 block averaging.

use super::{FeatureError, GrayImage, ImagePyramid, MIN_IMAGE_SIDE};

/// Builds a pyramid with `levels` levels. Level 0 is the input unchanged;
/// level k+1 pixels are the 2x2 block average of level k, rounded to the
/// nearest integer (half away from zero), with floor-halved dimensions.
pub fn build_pyramid(image: &GrayImage, levels: usize) -> Result<ImagePyramid, FeatureError> {
    image.check_min_size()?;
    if levels == 0 {
        return Err(FeatureError::TooManyLevels {
            width: image.width(),
            height: image.height(),
            levels,
        });
    }
    let (mut w, mut h) = (image.width(), image.height());
    for _ in 1..levels {
        w /= 2;
        h /= 2;
        if w < MIN_IMAGE_SIDE || h < MIN_IMAGE_SIDE {
            return Err(FeatureError::TooManyLevels {
                width: image.width(),
                height: image.height(),
                levels,
            });
        }
    }

    let mut out = Vec::with_capacity(levels);
    out.push(image.clone());
    for _ in 1..levels {
        let prev = out.last().unwrap();
        out.push(halve(prev));
    }
    Ok(ImagePyramid::from_levels(out))
}

fn halve(img: &GrayImage) -> GrayImage {
    let w2 = img.width() / 2;
    let h2 = img.height() / 2;
    let mut data = Vec::with_capacity(w2 * h2);
    for y in 0..h2 {
        for x in 0..w2 {
            let sum = img.get(2 * x, 2 * y) as u32
                + img.get(2 * x + 1, 2 * y) as u32
                + img.get(2 * x, 2 * y + 1) as u32
                + img.get(2 * x + 1, 2 * y + 1) as u32;
            data.push(((sum + 2) / 4) as u8);
        }
    }
    GrayImage::new(w2, h2, data).unwrap()
}
