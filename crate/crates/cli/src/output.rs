//! Raster and CSV emission.

use affine_interior_core::geometry::{OccupancyGrid, PointCloud};
use anyhow::{bail, Result};

/// Binary PGM (P5), one byte per cell, row-major, maxval 255. Hit counts are
/// clamped at 255. Supported for 1-D (single row) and 2-D grids.
pub fn grid_to_pgm(grid: &OccupancyGrid) -> Result<Vec<u8>> {
    let (width, height) = match grid.dim() {
        1 => (grid.res(), 1),
        2 => (grid.res(), grid.res()),
        d => bail!("PGM export supports d <= 2, got d = {d}"),
    };
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.reserve(grid.cells().len());
    for &c in grid.cells() {
        out.push(c.min(255) as u8);
    }
    Ok(out)
}

/// Sparse CSV of occupied cells: one line per cell, `i[,j[,k]],count`.
pub fn grid_to_csv(grid: &OccupancyGrid) -> String {
    let mut out = String::from(match grid.dim() {
        1 => "i,count\n",
        2 => "i,j,count\n",
        _ => "i,j,k,count\n",
    });
    let n = grid.res();
    for (idx, &c) in grid.cells().iter().enumerate() {
        if c == 0 {
            continue;
        }
        let mut rem = idx;
        let mut coords = [0usize; 3];
        for axis in (0..grid.dim()).rev() {
            coords[axis] = rem % n;
            rem /= n;
        }
        for coord in coords.iter().take(grid.dim()) {
            out.push_str(&coord.to_string());
            out.push(',');
        }
        out.push_str(&c.to_string());
        out.push('\n');
    }
    out
}

/// Point cloud as CSV: `d` columns of 17-significant-digit decimals.
pub fn cloud_to_csv(cloud: &PointCloud) -> String {
    let mut out = String::new();
    for p in cloud.iter() {
        for (i, x) in p.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            out.push_str(&format!("{x:.16e}"));
        }
        out.push('\n');
    }
    out
}

/// Generic curve CSV with the given header, each row formatted to 17
/// significant digits.
pub fn curve_to_csv(header: &str, rows: &[Vec<f64>]) -> String {
    let mut out = String::from(header);
    out.push('\n');
    for row in rows {
        for (i, x) in row.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            out.push_str(&format!("{x:.16e}"));
        }
        out.push('\n');
    }
    out
}
