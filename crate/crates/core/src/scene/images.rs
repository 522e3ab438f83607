//! 8-bit RGB PNG read/write. Decoding maps byte `v` to `v / 255`; encoding
//! maps channel `c` to `round(clamp(c, 0, 1) * 255)`.

use std::path::Path;

use image::{ImageFormat, ImageReader, RgbImage};

use super::ImageRgb;
use crate::error::Error;
use crate::Result;

pub fn read_image(path: impl AsRef<Path>) -> Result<ImageRgb> {
    let path = path.as_ref();
    let reader = ImageReader::open(path)?;
    let decoded = reader
        .decode()
        .map_err(|e| Error::Image(format!("{}: {e}", path.display())))?;
    let rgb: RgbImage = match decoded {
        image::DynamicImage::ImageRgb8(img) => img,
        other => {
            return Err(Error::Image(format!(
                "{}: unsupported format {:?} (need 8-bit RGB)",
                path.display(),
                other.color()
            )))
        }
    };
    let (width, height) = (rgb.width() as usize, rgb.height() as usize);
    let mut out = ImageRgb::new(width, height);
    for (dst, src) in out.data.iter_mut().zip(rgb.as_raw()) {
        *dst = *src as f64 / 255.0;
    }
    Ok(out)
}

pub fn write_image(img: &ImageRgb, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut rgb = RgbImage::new(img.width as u32, img.height as u32);
    for (dst, src) in rgb.as_mut().iter_mut().zip(&img.data) {
        *dst = (src.clamp(0.0, 1.0) * 255.0).round() as u8;
    }
    rgb.save_with_format(path, ImageFormat::Png)
        .map_err(|e| Error::Image(format!("{}: {e}", path.display())))?;
    Ok(())
}
