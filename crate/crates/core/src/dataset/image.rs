use crate::error::{Error, Result};
use crate::fem::{DensityField, Grid};

/// Grayscale image, row-major from the top-left pixel.
///
/// Values are material densities: 1.0 is solid (drawn black), 0.0 is void.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput(format!("empty image {width}x{height}")));
        }
        if pixels.len() != width * height {
            return Err(Error::shape(format!("{} pixels", width * height), pixels.len()));
        }
        Ok(Self { width, height, pixels })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    pub fn mean(&self) -> f64 {
        self.pixels.iter().sum::<f64>() / self.pixels.len() as f64
    }

    /// Pixel `(x, y)` is element `(ex, ey)` of an `width × height` grid.
    pub fn from_density(rho: &DensityField) -> Self {
        let g = rho.grid();
        Self {
            width: g.nelx(),
            height: g.nely(),
            pixels: rho.values().to_vec(),
        }
    }

    /// Clamps pixels into `[0, 1]`.
    pub fn to_density(&self) -> Result<DensityField> {
        DensityField::clamped(Grid::new(self.width, self.height)?, self.pixels.clone())
    }
}

/// Conditioning image for volume fraction `vf`: `round(vf · W · H)` solid
/// pixels laid out row by row from the bottom row upward, left to right.
pub fn make_input_image(vf: f64, width: usize, height: usize) -> Result<Image> {
    if !(vf > 0.0 && vf < 1.0) {
        return Err(Error::InvalidInput(format!(
            "volume fraction must lie in (0, 1), got {vf}"
        )));
    }
    let n = width * height;
    let black = (vf * n as f64).round() as usize;
    let mut pixels = vec![0.0; n];
    for k in 0..black {
        let (y, x) = (height - 1 - k / width, k % width);
        pixels[y * width + x] = 1.0;
    }
    Image::new(width, height, pixels)
}
