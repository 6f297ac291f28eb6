use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// An `L`-channel image over a `W x H` grid, stored as an `L x N` matrix
/// whose pixel index is `n = row * W + col`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCube {
    width: usize,
    height: usize,
    data: Matrix,
    /// Optional channel centre wavelengths; not part of the HSC1 file format.
    pub wavelengths: Option<Vec<f64>>,
}

impl SpectralCube {
    pub fn new(width: usize, height: usize, data: Matrix) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("cube needs width and height >= 1"));
        }
        if data.cols() != width * height {
            return Err(Error::invalid(format!(
                "{} pixel columns do not match a {width}x{height} grid",
                data.cols()
            )));
        }
        if !data.is_finite() || !data.is_nonnegative() {
            return Err(Error::invalid("cube values must be finite and nonnegative"));
        }
        Ok(Self {
            width,
            height,
            data,
            wavelengths: None,
        })
    }

    pub fn channels(&self) -> usize {
        self.data.rows()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &Matrix {
        &self.data
    }

    pub fn into_data(self) -> Matrix {
        self.data
    }

    #[inline]
    pub fn pixel_index(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }
}
