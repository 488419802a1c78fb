use serde::{Deserialize, Serialize};

use crate::geo::{Point, Projection, Rect};
use crate::{Error, Result};

/// Bounding box in degrees: `(lon_min, lat_min, lon_max, lat_max)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub lon_min: f64,
    pub lat_min: f64,
    pub lon_max: f64,
    pub lat_max: f64,
}

impl BBox {
    pub fn new(lon_min: f64, lat_min: f64, lon_max: f64, lat_max: f64) -> Self {
        BBox {
            lon_min,
            lat_min,
            lon_max,
            lat_max,
        }
    }

    pub fn contains(&self, lon: f64, lat: f64) -> bool {
        lon >= self.lon_min && lon <= self.lon_max && lat >= self.lat_min && lat <= self.lat_max
    }

    pub fn center(&self) -> (f64, f64) {
        (
            0.5 * (self.lon_min + self.lon_max),
            0.5 * (self.lat_min + self.lat_max),
        )
    }
}

/// A grid cell. Row 0 is the northern edge, column 0 the western edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub const fn new(row: usize, col: usize) -> Self {
        Cell { row, col }
    }
}

/// Regular lon/lat raster over a bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub bbox: BBox,
    pub rows: usize,
    pub cols: usize,
}

impl GridSpec {
    pub fn new(bbox: BBox, rows: usize, cols: usize) -> Result<Self> {
        let finite = [bbox.lon_min, bbox.lat_min, bbox.lon_max, bbox.lat_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite || !(bbox.lon_min < bbox.lon_max) || !(bbox.lat_min < bbox.lat_max) {
            return Err(Error::config(format!(
                "grid bounding box has zero area: {bbox:?}"
            )));
        }
        if bbox.lon_min < -180.0
            || bbox.lon_max > 180.0
            || bbox.lat_min < -90.0
            || bbox.lat_max > 90.0
        {
            return Err(Error::config(format!(
                "grid bounding box out of range: {bbox:?}"
            )));
        }
        if rows == 0 || cols == 0 {
            return Err(Error::config(format!(
                "grid must have at least one cell, got {rows}x{cols}"
            )));
        }
        Ok(GridSpec { bbox, rows, cols })
    }

    pub fn n_cells(&self) -> usize {
        self.rows * self.cols
    }

    pub fn index(&self, cell: Cell) -> usize {
        cell.row * self.cols + cell.col
    }

    pub fn cell_at(&self, index: usize) -> Cell {
        Cell::new(index / self.cols, index % self.cols)
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.n_cells()).map(|i| self.cell_at(i))
    }

    pub fn contains_cell(&self, cell: Cell) -> bool {
        cell.row < self.rows && cell.col < self.cols
    }

    pub fn projection(&self) -> Projection {
        let (lon_c, lat_c) = self.bbox.center();
        Projection::new(lon_c, lat_c)
    }

    /// The bounding box in planar coordinates.
    pub fn planar_rect(&self) -> Rect {
        let p = self.projection();
        Rect::new(
            p.forward(self.bbox.lon_min, self.bbox.lat_min),
            p.forward(self.bbox.lon_max, self.bbox.lat_max),
        )
    }

    /// Continuous cell coordinates `(u, v)`: `u` grows eastward in units of
    /// columns, `v` grows southward in units of rows. The projection is affine
    /// in lon/lat, so interpolation parameters agree with planar ones.
    pub fn cell_coords(&self, lon: f64, lat: f64) -> (f64, f64) {
        let b = &self.bbox;
        (
            (lon - b.lon_min) / (b.lon_max - b.lon_min) * self.cols as f64,
            (b.lat_max - lat) / (b.lat_max - b.lat_min) * self.rows as f64,
        )
    }

    /// Cell under continuous coordinates, clamping points on the far edges
    /// into the last row/column. `None` outside the grid.
    pub fn cell_of_coords(&self, u: f64, v: f64) -> Option<Cell> {
        if !(u >= 0.0 && v >= 0.0 && u <= self.cols as f64 && v <= self.rows as f64) {
            return None;
        }
        let col = (u.floor() as usize).min(self.cols - 1);
        let row = (v.floor() as usize).min(self.rows - 1);
        Some(Cell::new(row, col))
    }

    pub fn cell_of(&self, lon: f64, lat: f64) -> Option<Cell> {
        let (u, v) = self.cell_coords(lon, lat);
        self.cell_of_coords(u, v)
    }

    /// Geographic center of a cell.
    pub fn cell_center_lonlat(&self, cell: Cell) -> (f64, f64) {
        let b = &self.bbox;
        let dlon = (b.lon_max - b.lon_min) / self.cols as f64;
        let dlat = (b.lat_max - b.lat_min) / self.rows as f64;
        (
            b.lon_min + (cell.col as f64 + 0.5) * dlon,
            b.lat_max - (cell.row as f64 + 0.5) * dlat,
        )
    }

    pub fn cell_center(&self, cell: Cell) -> Point {
        let (lon, lat) = self.cell_center_lonlat(cell);
        self.projection().forward(lon, lat)
    }

    /// Cell extent in degrees: `(dlon, dlat)`.
    pub fn cell_size_deg(&self) -> (f64, f64) {
        let b = &self.bbox;
        (
            (b.lon_max - b.lon_min) / self.cols as f64,
            (b.lat_max - b.lat_min) / self.rows as f64,
        )
    }
}
