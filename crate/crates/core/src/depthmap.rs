//! Regular lateral depth grids — the dense-correspondence carrier.
//!
//! Once a face sits in the intrinsic frame, one grid cell addresses the same
//! facial location on every face, so cellwise operations (averaging, PCA)
//! become meaningful. Cells with no measurement are HOLE and stay that way;
//! nothing in this module ever inpaints.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::fmath;

/// Geometry of a depth grid: cell counts, origin of the covered rectangle
/// and millimeters per cell. Cell centers sit at
/// `origin + (index + 0.5) * spacing`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    pub origin_x: f64,
    pub origin_y: f64,
    pub spacing_x: f64,
    pub spacing_y: f64,
}

impl GridSpec {
    pub fn new(
        width: usize,
        height: usize,
        origin_x: f64,
        origin_y: f64,
        spacing_x: f64,
        spacing_y: f64,
    ) -> Result<GridSpec, DepthMapError> {
        if width == 0 || height == 0 || !(spacing_x > 0.0) || !(spacing_y > 0.0) {
            return Err(DepthMapError::InvalidGrid);
        }
        if !origin_x.is_finite() || !origin_y.is_finite() {
            return Err(DepthMapError::InvalidGrid);
        }
        Ok(GridSpec { width, height, origin_x, origin_y, spacing_x, spacing_y })
    }

    /// 120x120 cells at 1.5 mm: x in [-90, 90), y in [-70, 110) around the
    /// nose tip.
    pub fn default_face_grid() -> GridSpec {
        GridSpec {
            width: 120,
            height: 120,
            origin_x: -90.0,
            origin_y: -70.0,
            spacing_x: 1.5,
            spacing_y: 1.5,
        }
    }

    pub fn cell_count(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn x_of(&self, ix: usize) -> f64 {
        self.origin_x + (ix as f64 + 0.5) * self.spacing_x
    }

    #[inline]
    pub fn y_of(&self, iy: usize) -> f64 {
        self.origin_y + (iy as f64 + 0.5) * self.spacing_y
    }

    /// Cell containing lateral position `(x, y)`, if inside the grid.
    pub fn index_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let fx = fmath::floor((x - self.origin_x) / self.spacing_x);
        let fy = fmath::floor((y - self.origin_y) / self.spacing_y);
        if fx < 0.0 || fy < 0.0 || fx >= self.width as f64 || fy >= self.height as f64 {
            return None;
        }
        Some((fx as usize, fy as usize))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DepthMapError {
    InvalidGrid,
    CellCountMismatch,
    NonFiniteCell,
}

impl fmt::Display for DepthMapError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DepthMapError::InvalidGrid => write!(f, "grid must have positive size and spacing"),
            DepthMapError::CellCountMismatch => {
                write!(f, "cell buffer does not match grid dimensions")
            }
            DepthMapError::NonFiniteCell => write!(f, "non-HOLE cells must be finite"),
        }
    }
}

impl core::error::Error for DepthMapError {}

/// Depth values on a [`GridSpec`], row-major by rows of increasing y.
/// HOLE cells are stored as NaN internally and exposed as `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    grid: GridSpec,
    cells: Vec<f64>,
}

impl DepthMap {
    /// A map of the given geometry with every cell HOLE.
    pub fn new_empty(grid: GridSpec) -> DepthMap {
        DepthMap { grid, cells: vec![f64::NAN; grid.cell_count()] }
    }

    /// Builds a map from raw cells; NaN marks HOLE, everything else must be
    /// finite.
    pub fn from_cells(grid: GridSpec, cells: Vec<f64>) -> Result<DepthMap, DepthMapError> {
        if cells.len() != grid.cell_count() {
            return Err(DepthMapError::CellCountMismatch);
        }
        if cells.iter().any(|c| c.is_infinite()) {
            return Err(DepthMapError::NonFiniteCell);
        }
        Ok(DepthMap { grid, cells })
    }

    pub fn from_fn(grid: GridSpec, mut f: impl FnMut(f64, f64) -> Option<f64>) -> DepthMap {
        let mut cells = Vec::with_capacity(grid.cell_count());
        for iy in 0..grid.height {
            for ix in 0..grid.width {
                cells.push(f(grid.x_of(ix), grid.y_of(iy)).unwrap_or(f64::NAN));
            }
        }
        DepthMap { grid, cells }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    #[inline]
    pub fn cell_index(&self, ix: usize, iy: usize) -> usize {
        iy * self.grid.width + ix
    }

    #[inline]
    pub fn get(&self, ix: usize, iy: usize) -> Option<f64> {
        let v = self.cells[self.cell_index(ix, iy)];
        if v.is_nan() {
            None
        } else {
            Some(v)
        }
    }

    #[inline]
    pub fn get_flat(&self, i: usize) -> Option<f64> {
        let v = self.cells[i];
        if v.is_nan() {
            None
        } else {
            Some(v)
        }
    }

    pub(crate) fn set(&mut self, ix: usize, iy: usize, v: f64) {
        let i = self.cell_index(ix, iy);
        self.cells[i] = v;
    }

    /// Raw cell buffer; NaN is HOLE.
    pub fn cells(&self) -> &[f64] {
        &self.cells
    }

    pub fn valid_count(&self) -> usize {
        self.cells.iter().filter(|c| !c.is_nan()).count()
    }

    pub fn same_grid(&self, other: &DepthMap) -> bool {
        self.grid == other.grid
    }

    /// RMS of cellwise depth differences over jointly valid cells.
    /// `None` when no cell is valid in both maps.
    pub fn rms_difference(&self, other: &DepthMap) -> Option<f64> {
        debug_assert!(self.same_grid(other));
        let mut sum = 0.0;
        let mut n = 0usize;
        for (a, b) in self.cells.iter().zip(other.cells.iter()) {
            if !a.is_nan() && !b.is_nan() {
                let d = a - b;
                sum += d * d;
                n += 1;
            }
        }
        if n == 0 {
            None
        } else {
            Some(fmath::sqrt(sum / n as f64))
        }
    }

    /// Bitwise equality of grids and cells (HOLE == HOLE).
    pub fn bits_eq(&self, other: &DepthMap) -> bool {
        self.grid == other.grid
            && self.cells.len() == other.cells.len()
            && self
                .cells
                .iter()
                .zip(other.cells.iter())
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

// HOLE cells serialize as null so the JSON containers stay valid.
impl Serialize for DepthMap {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut s = serializer.serialize_struct("DepthMap", 2)?;
        s.serialize_field("grid", &self.grid)?;
        let cells: Vec<Option<f64>> = self
            .cells
            .iter()
            .map(|c| if c.is_nan() { None } else { Some(*c) })
            .collect();
        s.serialize_field("cells", &cells)?;
        s.end()
    }
}

impl<'de> Deserialize<'de> for DepthMap {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            grid: GridSpec,
            cells: Vec<Option<f64>>,
        }
        let raw = Raw::deserialize(deserializer)?;
        let cells: Vec<f64> = raw.cells.into_iter().map(|c| c.unwrap_or(f64::NAN)).collect();
        DepthMap::from_cells(raw.grid, cells).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing_roundtrips_through_coordinates() {
        let g = GridSpec::default_face_grid();
        for iy in [0usize, 1, 59, 119] {
            for ix in [0usize, 1, 60, 119] {
                let (x, y) = (g.x_of(ix), g.y_of(iy));
                assert_eq!(g.index_of(x, y), Some((ix, iy)));
            }
        }
        assert_eq!(g.index_of(-90.01, 0.0), None);
        assert_eq!(g.index_of(90.0, 0.0), None);
    }

    #[test]
    fn holes_read_back_as_none() {
        let g = GridSpec::new(4, 3, 0.0, 0.0, 1.0, 1.0).unwrap();
        let mut m = DepthMap::new_empty(g);
        assert_eq!(m.get(2, 1), None);
        m.set(2, 1, 5.25);
        assert_eq!(m.get(2, 1), Some(5.25));
        assert_eq!(m.valid_count(), 1);
    }

    #[test]
    fn infinite_cells_are_rejected() {
        let g = GridSpec::new(2, 1, 0.0, 0.0, 1.0, 1.0).unwrap();
        let err = DepthMap::from_cells(g, alloc::vec![1.0, f64::INFINITY]).unwrap_err();
        assert_eq!(err, DepthMapError::NonFiniteCell);
    }

    #[test]
    fn zero_spacing_is_rejected() {
        assert!(GridSpec::new(4, 4, 0.0, 0.0, 0.0, 1.0).is_err());
    }
}
