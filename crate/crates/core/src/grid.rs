use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rectangular raster geometry shared by fields, the full-order model and the networks.
///
/// Cell `(i, j)` has its center at `((i + 0.5) * lx / nx, (j + 0.5) * ly / ny)`;
/// `j` runs along `y`, so row `j` of a raster is the horizontal line at that height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        let grid = Self { nx, ny, lx, ly };
        grid.validate()?;
        Ok(grid)
    }

    /// Unit square with `n x n` cells.
    pub fn unit_square(n: usize) -> Result<Self> {
        Self::new(n, n, 1.0, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx < 2 || self.ny < 2 {
            return Err(Error::InvalidInput(format!(
                "grid needs at least 2x2 cells, got {}x{}",
                self.nx, self.ny
            )));
        }
        if !(self.lx > 0.0 && self.ly > 0.0 && self.lx.is_finite() && self.ly.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "grid extent must be positive, got {} x {}",
                self.lx, self.ly
            )));
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn dx(&self) -> f64 {
        self.lx / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        self.ly / self.ny as f64
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn cell_center(&self, i: usize, j: usize) -> (f64, f64) {
        ((i as f64 + 0.5) * self.dx(), (j as f64 + 0.5) * self.dy())
    }
}

/// One physical quantity sampled at the cell centers of a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    pub grid: GridSpec,
    /// `ny x nx`, row-major.
    pub values: Vec<f64>,
    pub units: String,
}

impl ScalarField {
    pub fn new(grid: GridSpec, values: Vec<f64>, units: impl Into<String>) -> Result<Self> {
        grid.validate()?;
        if values.len() != grid.cells() {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {}x{} grid",
                values.len(),
                grid.nx,
                grid.ny
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite value {} at flat index {k}",
                values[k]
            )));
        }
        Ok(Self {
            grid,
            values,
            units: units.into(),
        })
    }

    pub fn constant(grid: GridSpec, value: f64, units: impl Into<String>) -> Result<Self> {
        Self::new(grid, vec![value; grid.cells()], units)
    }

    /// Evaluates `f(x, y)` at every cell center.
    pub fn from_fn(
        grid: GridSpec,
        units: impl Into<String>,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(grid.cells());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let (x, y) = grid.cell_center(i, j);
                values.push(f(x, y));
            }
        }
        Self::new(grid, values, units)
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Population standard deviation over all cells.
    pub fn std_dev(&self) -> f64 {
        let m = self.mean();
        let var = self.values.iter().map(|v| (v - m) * (v - m)).sum::<f64>()
            / self.values.len() as f64;
        var.sqrt()
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn map(&self, units: impl Into<String>, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.grid, self.values.iter().map(|&v| f(v)).collect(), units)
    }

    pub fn same_shape(&self, other: &ScalarField) -> bool {
        self.grid.nx == other.grid.nx && self.grid.ny == other.grid.ny
    }
}
