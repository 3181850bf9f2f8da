use super::PerceptionError;

pub const FRAME_WIDTH: usize = 320;
pub const FRAME_HEIGHT: usize = 240;

/// An 8-bit RGB image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[u8; 3]>,
    /// Captured with the IR LED on.
    pub ir: bool,
}

impl Frame {
    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        Self { width, height, pixels: vec![rgb; width * height], ir: false }
    }

    /// A camera-sized frame.
    pub fn camera(rgb: [u8; 3]) -> Self {
        Self::filled(FRAME_WIDTH, FRAME_HEIGHT, rgb)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        self.pixels[y * self.width + x] = rgb;
    }

    pub fn to_image(&self) -> image::RgbImage {
        let raw = self.pixels.iter().flatten().copied().collect();
        image::RgbImage::from_raw(self.width as u32, self.height as u32, raw).expect("pixel count matches dimensions")
    }

    pub fn from_image(img: &image::RgbImage) -> Self {
        Self {
            width: img.width() as usize,
            height: img.height() as usize,
            pixels: img.pixels().map(|p| p.0).collect(),
            ir: false,
        }
    }
}

/// Single-channel 8-bit image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayFrame {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl GrayFrame {
    pub fn threshold(&self, above: u8) -> Mask {
        Mask { width: self.width, height: self.height, data: self.data.iter().map(|&v| v > above).collect() }
    }
}

/// Binary image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![false; width * height] }
    }

    #[inline]
    pub fn get(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height && self.data[y as usize * self.width + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }
}

/// Per-pixel `||F1 - F2||` over RGB, scaled so the largest possible
/// difference maps to 255.
pub fn diff_frames(f1: &Frame, f2: &Frame) -> Result<GrayFrame, PerceptionError> {
    if f1.width != f2.width || f1.height != f2.height {
        return Err(PerceptionError::DimensionMismatch);
    }
    let scale = 255.0 / (3.0f64 * 255.0 * 255.0).sqrt();
    let data = f1
        .pixels
        .iter()
        .zip(&f2.pixels)
        .map(|(a, b)| {
            let sq: i32 = (0..3).map(|c| (a[c] as i32 - b[c] as i32).pow(2)).sum();
            ((sq as f64).sqrt() * scale).round() as u8
        })
        .collect();
    Ok(GrayFrame { width: f1.width, height: f1.height, data })
}
