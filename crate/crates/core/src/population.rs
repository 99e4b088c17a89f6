//! Population density over the plane, used to weight face selection during
//! network generation.
//!
//! The raster text format is a small header followed by row-major values:
//!
//! ```text
//! ncols 4
//! nrows 2
//! xmin 0.0
//! ymin 0.0
//! cellsize 0.25
//! 0 0 1 1
//! 0 0 1 1
//! ```
//!
//! The first value row is the top of the grid (largest `y`), as in ESRI ASCII
//! grids. A face's mass is the sum of the cells whose centers fall inside it.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PopulationError {
    #[error("missing header field `{0}`")]
    MissingHeader(&'static str),
    #[error("invalid header line `{0}`")]
    BadHeader(String),
    #[error("expected {expected} values, found {found}")]
    WrongValueCount { expected: usize, found: usize },
    #[error("value `{0}` is not a number")]
    BadValue(String),
    #[error("cell values must be finite and non-negative (found {0})")]
    NegativeValue(f64),
    #[error("grid dimensions must be positive")]
    EmptyGrid,
}

/// A regular grid of non-negative densities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Raster {
    pub ncols: usize,
    pub nrows: usize,
    pub xmin: f64,
    pub ymin: f64,
    pub cellsize: f64,
    /// Row-major, top row first.
    pub values: Vec<f64>,
}

impl Raster {
    pub fn new(
        ncols: usize,
        nrows: usize,
        xmin: f64,
        ymin: f64,
        cellsize: f64,
        values: Vec<f64>,
    ) -> Result<Self, PopulationError> {
        if ncols == 0 || nrows == 0 || !(cellsize > 0.0) {
            return Err(PopulationError::EmptyGrid);
        }
        if values.len() != ncols * nrows {
            return Err(PopulationError::WrongValueCount {
                expected: ncols * nrows,
                found: values.len(),
            });
        }
        if let Some(&bad) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(PopulationError::NegativeValue(bad));
        }
        Ok(Self { ncols, nrows, xmin, ymin, cellsize, values })
    }

    /// Builds a raster by evaluating `density` at every cell center.
    pub fn from_fn(
        ncols: usize,
        nrows: usize,
        xmin: f64,
        ymin: f64,
        cellsize: f64,
        mut density: impl FnMut(Point) -> f64,
    ) -> Result<Self, PopulationError> {
        let mut values = Vec::with_capacity(ncols * nrows);
        for row in 0..nrows {
            for col in 0..ncols {
                values.push(density(Self::center_of(xmin, ymin, cellsize, nrows, row, col)));
            }
        }
        Self::new(ncols, nrows, xmin, ymin, cellsize, values)
    }

    fn center_of(xmin: f64, ymin: f64, cellsize: f64, nrows: usize, row: usize, col: usize) -> Point {
        Point::new(
            xmin + (col as f64 + 0.5) * cellsize,
            ymin + ((nrows - row) as f64 - 0.5) * cellsize,
        )
    }

    pub fn cell_center(&self, row: usize, col: usize) -> Point {
        Self::center_of(self.xmin, self.ymin, self.cellsize, self.nrows, row, col)
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Sum of cells whose centers lie inside (or on the boundary of) the triangle.
    pub fn triangle_mass(&self, tri: [Point; 3]) -> f64 {
        let xlo = tri.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
        let xhi = tri.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
        let ylo = tri.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
        let yhi = tri.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
        let cs = self.cellsize;
        let col_range = |lo: f64, hi: f64| {
            let a = ((lo - self.xmin) / cs - 0.5).ceil().max(0.0) as usize;
            let b = ((hi - self.xmin) / cs - 0.5).floor();
            (a, if b < 0.0 { None } else { Some((b as usize).min(self.ncols - 1)) })
        };
        let (c0, c1) = col_range(xlo, xhi);
        let Some(c1) = c1 else { return 0.0 };
        let ytop = self.ymin + self.nrows as f64 * cs;
        // rows count downward from the top edge
        let r0 = ((ytop - yhi) / cs - 0.5).ceil().max(0.0) as usize;
        let r1 = ((ytop - ylo) / cs - 0.5).floor();
        if r1 < 0.0 {
            return 0.0;
        }
        let r1 = (r1 as usize).min(self.nrows - 1);
        let mut mass = 0.0;
        for row in r0..=r1 {
            for col in c0..=c1 {
                let v = self.values[row * self.ncols + col];
                if v > 0.0 && point_in_triangle(self.cell_center(row, col), tri) {
                    mass += v;
                }
            }
        }
        mass
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "ncols {}", self.ncols);
        let _ = writeln!(out, "nrows {}", self.nrows);
        let _ = writeln!(out, "xmin {}", self.xmin);
        let _ = writeln!(out, "ymin {}", self.ymin);
        let _ = writeln!(out, "cellsize {}", self.cellsize);
        for row in self.values.chunks(self.ncols) {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
        out
    }
}

impl FromStr for Raster {
    type Err = PopulationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut ncols = None;
        let mut nrows = None;
        let mut xmin = None;
        let mut ymin = None;
        let mut cellsize = None;
        let mut values = Vec::new();
        for line in s.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let first = line.split_whitespace().next().unwrap_or_default();
            if first.chars().next().is_some_and(|c| c.is_ascii_alphabetic()) {
                let mut parts = line.split_whitespace();
                let key = parts.next().unwrap_or_default().to_ascii_lowercase();
                let val = parts.next().ok_or_else(|| PopulationError::BadHeader(line.to_string()))?;
                let num: f64 = val.parse().map_err(|_| PopulationError::BadHeader(line.to_string()))?;
                match key.as_str() {
                    "ncols" => ncols = Some(num as usize),
                    "nrows" => nrows = Some(num as usize),
                    "xmin" | "xllcorner" => xmin = Some(num),
                    "ymin" | "yllcorner" => ymin = Some(num),
                    "cellsize" => cellsize = Some(num),
                    _ => return Err(PopulationError::BadHeader(line.to_string())),
                }
            } else {
                for tok in line.split_whitespace() {
                    values.push(tok.parse::<f64>().map_err(|_| PopulationError::BadValue(tok.to_string()))?);
                }
            }
        }
        Raster::new(
            ncols.ok_or(PopulationError::MissingHeader("ncols"))?,
            nrows.ok_or(PopulationError::MissingHeader("nrows"))?,
            xmin.ok_or(PopulationError::MissingHeader("xmin"))?,
            ymin.ok_or(PopulationError::MissingHeader("ymin"))?,
            cellsize.ok_or(PopulationError::MissingHeader("cellsize"))?,
            values,
        )
    }
}

/// Density field used to weight face selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Population {
    /// Constant density; a face's mass is its area.
    Uniform,
    Raster(Raster),
}

impl Population {
    pub fn triangle_mass(&self, tri: [Point; 3]) -> f64 {
        match self {
            Population::Uniform => triangle_area(tri),
            Population::Raster(r) => r.triangle_mass(tri),
        }
    }
}

pub(crate) fn triangle_area(tri: [Point; 3]) -> f64 {
    0.5 * ((tri[1] - tri[0]).cross(tri[2] - tri[0])).abs()
}

pub(crate) fn point_in_triangle(p: Point, tri: [Point; 3]) -> bool {
    let scale = (tri[1] - tri[0]).norm().max((tri[2] - tri[0]).norm());
    let eps = 1e-12 * scale * scale;
    let d0 = (tri[1] - tri[0]).cross(p - tri[0]);
    let d1 = (tri[2] - tri[1]).cross(p - tri[1]);
    let d2 = (tri[0] - tri[2]).cross(p - tri[2]);
    let has_neg = d0 < -eps || d1 < -eps || d2 < -eps;
    let has_pos = d0 > eps || d1 > eps || d2 > eps;
    !(has_neg && has_pos)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_header_and_rows_top_first() {
        let text = "ncols 2\nnrows 2\nxmin 0\nymin 0\ncellsize 1\n1 2\n3 4\n";
        let r: Raster = text.parse().unwrap();
        assert_eq!(r.values, vec![1.0, 2.0, 3.0, 4.0]);
        // top-left cell sits at the highest row of the grid
        assert_eq!(r.cell_center(0, 0), Point::new(0.5, 1.5));
        assert_eq!(r.cell_center(1, 1), Point::new(1.5, 0.5));
        let again: Raster = r.to_text().parse().unwrap();
        assert_eq!(again, r);
    }

    #[test]
    fn rejects_negative_and_short_input() {
        let text = "ncols 2\nnrows 1\nxmin 0\nymin 0\ncellsize 1\n1 -2\n";
        assert!(matches!(text.parse::<Raster>(), Err(PopulationError::NegativeValue(_))));
        let text = "ncols 2\nnrows 2\nxmin 0\nymin 0\ncellsize 1\n1 2\n";
        assert!(matches!(text.parse::<Raster>(), Err(PopulationError::WrongValueCount { .. })));
        assert!(matches!("nrows 1\n".parse::<Raster>(), Err(PopulationError::MissingHeader(_))));
    }

    #[test]
    fn triangle_mass_counts_cell_centers() {
        let r = Raster::from_fn(10, 10, 0.0, 0.0, 0.1, |_| 1.0).unwrap();
        let tri = [Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(0.0, 1.0)];
        // centers (i+0.5, j+0.5)/10 with i + j + 1 <= 10 -> 55 cells
        assert_eq!(r.triangle_mass(tri), 55.0);
        let outside = [Point::new(5.0, 5.0), Point::new(6.0, 5.0), Point::new(5.5, 6.0)];
        assert_eq!(r.triangle_mass(outside), 0.0);
    }
}
