use std::io::Cursor;
use std::path::Path;

use super::NetError;
use crate::nn::Tensor;

/// 8-bit RGB image, row-major, top-left origin, interleaved channels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImagePatch {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl ImagePatch {
    pub const CHANNELS: usize = 3;

    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self, NetError> {
        if data.len() != width * height * Self::CHANNELS {
            return Err(NetError::Image(format!(
                "{width}x{height} RGB image needs {} bytes, got {}",
                width * height * 3,
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Decode PNG or JPEG bytes to RGB.
    pub fn decode(bytes: &[u8]) -> Result<Self, NetError> {
        let img = image::load_from_memory(bytes).map_err(|e| NetError::Image(e.to_string()))?;
        let rgb = img.to_rgb8();
        let (w, h) = rgb.dimensions();
        Self::new(w as usize, h as usize, rgb.into_raw())
    }

    pub fn open(path: &Path) -> Result<Self, NetError> {
        let bytes = std::fs::read(path)
            .map_err(|e| NetError::Image(format!("{}: {e}", path.display())))?;
        Self::decode(&bytes).map_err(|e| NetError::Image(format!("{}: {e}", path.display())))
    }

    pub fn encode_png(&self) -> Result<Vec<u8>, NetError> {
        let mut out = Vec::new();
        image::write_buffer_with_format(
            &mut Cursor::new(&mut out),
            &self.data,
            self.width as u32,
            self.height as u32,
            image::ExtendedColorType::Rgb8,
            image::ImageFormat::Png,
        )
        .map_err(|e| NetError::Image(e.to_string()))?;
        Ok(out)
    }
}

/// Crop a `side x side` window whose offset is `floor((dim - side) / 2)` on
/// each axis.
pub fn center_crop(image: &ImagePatch, side: usize) -> Result<ImagePatch, NetError> {
    if image.width < side || image.height < side {
        return Err(NetError::Image(format!(
            "{}x{} image smaller than crop side {side}",
            image.width, image.height
        )));
    }
    let (x0, y0) = crop_offset(image.width, image.height, side);
    let mut data = Vec::with_capacity(side * side * 3);
    for y in y0..y0 + side {
        let row = (y * image.width + x0) * 3;
        data.extend_from_slice(&image.data[row..row + side * 3]);
    }
    ImagePatch::new(side, side, data)
}

pub fn crop_offset(width: usize, height: usize, side: usize) -> (usize, usize) {
    ((width - side) / 2, (height - side) / 2)
}

/// RGB bytes to a `3 x H x W` tensor in `[0, 1]`.
pub fn normalize(image: &ImagePatch) -> Tensor<f32> {
    let (w, h) = (image.width, image.height);
    let plane = w * h;
    let mut out = vec![0.0f32; 3 * plane];
    for (i, px) in image.data.chunks_exact(3).enumerate() {
        for c in 0..3 {
            out[c * plane + i] = px[c] as f32 / 255.0;
        }
    }
    Tensor::new(vec![3, h, w], out).expect("sized from the image")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crop_offsets() {
        assert_eq!(crop_offset(640, 640, 112), (264, 264));
        assert_eq!(crop_offset(113, 113, 112), (0, 0));
        let img = ImagePatch::from_fn(640, 640, |x, y| [(x % 256) as u8, (y % 256) as u8, 0]);
        let c = center_crop(&img, 112).unwrap();
        assert_eq!(c.pixel(0, 0), img.pixel(264, 264));
        assert_eq!(c.pixel(111, 111), img.pixel(375, 375));
    }

    #[test]
    fn crop_identity_and_too_small() {
        let img = ImagePatch::from_fn(112, 112, |x, y| [x as u8, y as u8, 7]);
        assert_eq!(center_crop(&img, 112).unwrap(), img);
        assert!(center_crop(&ImagePatch::from_fn(100, 200, |_, _| [0; 3]), 112).is_err());
    }

    #[test]
    fn normalize_values() {
        let img = ImagePatch::from_fn(2, 1, |x, _| if x == 0 { [0, 255, 128] } else { [255, 0, 0] });
        let t = normalize(&img);
        assert_eq!(t.shape(), &[3, 1, 2]);
        assert_eq!(t.data(), &[0.0, 1.0, 1.0, 0.0, 128.0 / 255.0, 0.0]);
    }

    #[test]
    fn png_round_trip() {
        let img = ImagePatch::from_fn(9, 5, |x, y| [(x * 20) as u8, (y * 40) as u8, 3]);
        let back = ImagePatch::decode(&img.encode_png().unwrap()).unwrap();
        assert_eq!(back, img);
        assert!(ImagePatch::decode(b"not an image").is_err());
        assert!(ImagePatch::new(2, 2, vec![0; 11]).is_err());
    }
}
