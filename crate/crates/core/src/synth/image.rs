//! Planar real-valued RGB image buffer and PNG interchange.
//!
//! Pixels live on the 0–255 intensity scale as `f64`, channel-planar
//! (`data[c*h*w + y*w + x]`), matching the tensor layout. Files are
//! exchanged as 8-bit RGB PNG; quantization to bytes rounds half away
//! from zero after clamping.

use std::path::Path;

use crate::error::{Error, Result};

pub const CHANNELS: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct ImageBuf {
    h: usize,
    w: usize,
    data: Vec<f64>,
}

impl ImageBuf {
    pub fn new(h: usize, w: usize) -> Self {
        ImageBuf {
            h,
            w,
            data: vec![0.0; CHANNELS * h * w],
        }
    }

    pub fn from_data(h: usize, w: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != CHANNELS * h * w {
            return Err(Error::Shape(format!(
                "image data length {} does not match 3x{h}x{w}",
                data.len()
            )));
        }
        Ok(ImageBuf { h, w, data })
    }

    pub fn constant(h: usize, w: usize, value: f64) -> Self {
        ImageBuf {
            h,
            w,
            data: vec![value; CHANNELS * h * w],
        }
    }

    pub fn height(&self) -> usize {
        self.h
    }

    pub fn width(&self) -> usize {
        self.w
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.data[c * self.h * self.w..(c + 1) * self.h * self.w]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.data[c * self.h * self.w..(c + 1) * self.h * self.w]
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.h + y) * self.w + x]
    }

    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        self.data[(c * self.h + y) * self.w + x] = v;
    }

    /// Clamp all intensities into `[0, 255]` in place.
    pub fn clamp(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 255.0);
        }
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Crop a `size × size` window with its top-left corner at `(oy, ox)`.
    pub fn crop(&self, oy: usize, ox: usize, size: usize) -> Result<ImageBuf> {
        if oy + size > self.h || ox + size > self.w {
            return Err(Error::Config(format!(
                "crop {size}x{size} at ({oy},{ox}) exceeds the {}x{} image",
                self.h, self.w
            )));
        }
        let mut out = ImageBuf::new(size, size);
        for c in 0..CHANNELS {
            for y in 0..size {
                let src = &self.channel(c)[(oy + y) * self.w + ox..][..size];
                out.channel_mut(c)[y * size..(y + 1) * size].copy_from_slice(src);
            }
        }
        Ok(out)
    }

    /// Quantize to interleaved 8-bit RGB.
    pub fn to_rgb8(&self) -> Vec<u8> {
        let hw = self.h * self.w;
        let mut out = vec![0u8; hw * CHANNELS];
        for p in 0..hw {
            for c in 0..CHANNELS {
                out[p * CHANNELS + c] = self.data[c * hw + p].clamp(0.0, 255.0).round() as u8;
            }
        }
        out
    }

    pub fn from_rgb8(h: usize, w: usize, rgb: &[u8]) -> Result<Self> {
        if rgb.len() != CHANNELS * h * w {
            return Err(Error::Shape(format!(
                "byte length {} does not match 3x{h}x{w}",
                rgb.len()
            )));
        }
        let hw = h * w;
        let mut data = vec![0.0; CHANNELS * hw];
        for p in 0..hw {
            for c in 0..CHANNELS {
                data[c * hw + p] = f64::from(rgb[p * CHANNELS + c]);
            }
        }
        Ok(ImageBuf { h, w, data })
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let img = image::RgbImage::from_raw(self.w as u32, self.h as u32, self.to_rgb8())
            .expect("buffer length matches dimensions");
        img.save_with_format(path, image::ImageFormat::Png)?;
        Ok(())
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path)?.to_rgb8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        Self::from_rgb8(h, w, img.as_raw())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rgb8_roundtrip_preserves_integer_images() {
        let mut img = ImageBuf::new(2, 3);
        for (i, v) in img.data_mut().iter_mut().enumerate() {
            *v = (i * 13 % 256) as f64;
        }
        let bytes = img.to_rgb8();
        let back = ImageBuf::from_rgb8(2, 3, &bytes).unwrap();
        assert_eq!(img, back);
    }

    #[test]
    fn png_roundtrip_is_exact_for_quantized_data() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.png");
        let mut img = ImageBuf::new(5, 4);
        for (i, v) in img.data_mut().iter_mut().enumerate() {
            *v = ((i * 7) % 256) as f64;
        }
        img.save_png(&path).unwrap();
        let back = ImageBuf::load_png(&path).unwrap();
        assert_eq!(img, back);
    }

    #[test]
    fn crop_extracts_the_right_window() {
        let mut img = ImageBuf::new(4, 4);
        for c in 0..3 {
            for y in 0..4 {
                for x in 0..4 {
                    img.set(c, y, x, (c * 100 + y * 10 + x) as f64);
                }
            }
        }
        let crop = img.crop(1, 2, 2).unwrap();
        assert_eq!(crop.get(0, 0, 0), 12.0);
        assert_eq!(crop.get(2, 1, 1), 223.0);
        assert!(img.crop(3, 3, 2).is_err());
    }
}
