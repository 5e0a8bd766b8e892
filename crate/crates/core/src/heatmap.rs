//! Occupancy rasterization and file export for retained ensembles.
//!
//! Trajectories are exported as a long-form CSV with one row per fish-day
//! (a day shared by two chained segments is written once, owned by the
//! later segment). Heatmaps are plain occupancy counts over a square grid,
//! exported as long-form CSV or 16-bit PGM. All numeric output uses a fixed
//! nine-decimal format so identical inputs always produce identical bytes.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Read, Write};

use crate::bootstrap::RetainedDraw;
use crate::error::{Error, Result};
use crate::geo::{PlanarPoint, Projection};
use crate::model::TrajectoryDraw;

pub const TRAJECTORY_HEADER: &str = "draw_id,segment_k,t,x_m,y_m,lon,lat,loglik";
pub const HEATMAP_HEADER: &str = "row,col,count";

/// Upper bound on grid size. Wide-variance parameter draws can scatter a
/// retained ensemble over megameters; rather than allocate an absurd raster
/// the cell size is doubled (deterministically) until the grid fits.
pub const MAX_HEATMAP_CELLS: usize = 4_000_000;

/// Occupancy raster. `origin` is the lower-left (south-west) corner; counts
/// are row-major with row 0 at the south edge.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapGrid {
    pub origin: PlanarPoint,
    pub cell_m: f64,
    pub ncols: usize,
    pub nrows: usize,
    pub counts: Vec<u64>,
}

impl HeatmapGrid {
    pub fn count_at(&self, row: usize, col: usize) -> u64 {
        self.counts[row * self.ncols + col]
    }

    /// Total number of binned points.
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

fn bin_index(coord: f64, origin: f64, cell_m: f64, n: usize) -> usize {
    // floor() places a point sitting exactly on an interior boundary into
    // the higher-index cell; the top edge clamps back inside.
    let idx = ((coord - origin) / cell_m).floor();
    if idx < 0.0 {
        0
    } else {
        (idx as usize).min(n - 1)
    }
}

/// Rasterize a bag of points. The grid covers the points' bounding box
/// expanded by `padding_m`; every point lands in exactly one cell.
pub fn build_heatmap_from_points(
    points: &[PlanarPoint],
    cell_m: f64,
    padding_m: f64,
) -> Result<HeatmapGrid> {
    if points.is_empty() {
        return Err(Error::Invalid("cannot build a heatmap from zero points".into()));
    }
    if cell_m.is_nan() || cell_m <= 0.0 {
        return Err(Error::Invalid(format!("cell_m {cell_m} must be > 0")));
    }
    let (mut min_x, mut max_x) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut min_y, mut max_y) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in points {
        if !(p.x.is_finite() && p.y.is_finite()) {
            return Err(Error::Invalid("non-finite point in heatmap input".into()));
        }
        min_x = min_x.min(p.x);
        max_x = max_x.max(p.x);
        min_y = min_y.min(p.y);
        max_y = max_y.max(p.y);
    }
    let origin = PlanarPoint::new(min_x - padding_m, min_y - padding_m);
    let width = max_x + padding_m - origin.x;
    let height = max_y + padding_m - origin.y;

    let mut cell_m = cell_m;
    let dims = |cell: f64| -> (usize, usize) {
        (((width / cell).ceil() as usize).max(1), ((height / cell).ceil() as usize).max(1))
    };
    let (mut ncols, mut nrows) = dims(cell_m);
    if ncols.saturating_mul(nrows) > MAX_HEATMAP_CELLS {
        let requested = cell_m;
        while ncols.saturating_mul(nrows) > MAX_HEATMAP_CELLS {
            cell_m *= 2.0;
            (ncols, nrows) = dims(cell_m);
        }
        log::warn!(
            "heatmap spans {width:.3e} x {height:.3e} m; cell coarsened from {requested} to {cell_m} m \
             to stay under {MAX_HEATMAP_CELLS} cells"
        );
    }

    let mut counts = vec![0u64; ncols * nrows];
    for p in points {
        let col = bin_index(p.x, origin.x, cell_m, ncols);
        let row = bin_index(p.y, origin.y, cell_m, nrows);
        counts[row * ncols + col] += 1;
    }
    Ok(HeatmapGrid { origin, cell_m, ncols, nrows, counts })
}

fn draw_points(draws: &[TrajectoryDraw], include_endpoints: bool) -> Vec<PlanarPoint> {
    let mut points = Vec::new();
    for draw in draws {
        for seg in &draw.segments {
            if include_endpoints {
                points.extend_from_slice(&seg.positions);
            } else if seg.positions.len() > 2 {
                points.extend_from_slice(&seg.positions[1..seg.positions.len() - 1]);
            }
        }
    }
    points
}

/// Rasterize every stored position of every draw (or only the imputed
/// interior days when `include_endpoints` is false).
pub fn build_heatmap(
    draws: &[TrajectoryDraw],
    cell_m: f64,
    padding_m: f64,
    include_endpoints: bool,
) -> Result<HeatmapGrid> {
    if draws.is_empty() {
        return Err(Error::Invalid("cannot build a heatmap from zero draws".into()));
    }
    build_heatmap_from_points(&draw_points(draws, include_endpoints), cell_m, padding_m)
}

/// Fixed-width numeric formatting for all exports (nine fractional digits;
/// negative zero normalized away).
pub fn fmt9(v: f64) -> String {
    let v = if v == 0.0 { 0.0 } else { v };
    format!("{v:.9}")
}

/// One parsed row of a trajectories CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajRow {
    pub draw_id: u64,
    pub segment_k: usize,
    /// Global day index within the trajectory, starting at 1.
    pub t: i64,
    pub x_m: f64,
    pub y_m: f64,
    pub lon: f64,
    pub lat: f64,
    pub loglik: f64,
}

/// Write retained draws as long-form CSV, one row per fish-day.
///
/// Segment k contributes its days 1..T-1; the final segment also writes its
/// last day. The `t` column is the global day index of the trajectory.
/// Returns the number of data rows written.
pub fn export_trajectories<W: Write>(
    retained: &[RetainedDraw],
    projection: &Projection,
    mut writer: W,
) -> Result<usize> {
    writeln!(writer, "{TRAJECTORY_HEADER}")?;
    let mut rows = 0usize;
    for draw in retained {
        let loglik = fmt9(draw.traj.loglik);
        let mut seg_start_day = 1i64;
        let last_k = draw.traj.segments.len();
        for (i, seg) in draw.traj.segments.iter().enumerate() {
            let t_len = seg.spec.t_len;
            let local_last = if i + 1 == last_k { t_len } else { t_len - 1 };
            for local_t in 1..=local_last {
                let p = seg.position(local_t);
                let geo = projection.to_geo(p);
                writeln!(
                    writer,
                    "{},{},{},{},{},{},{},{}",
                    draw.iteration,
                    seg.spec.k,
                    seg_start_day + local_t as i64 - 1,
                    fmt9(p.x),
                    fmt9(p.y),
                    fmt9(geo.lon),
                    fmt9(geo.lat),
                    loglik
                )?;
                rows += 1;
            }
            seg_start_day += t_len as i64 - 1;
        }
    }
    writer.flush()?;
    Ok(rows)
}

/// Parse a trajectories CSV produced by [`export_trajectories`].
pub fn parse_trajectories<R: Read>(reader: R) -> Result<Vec<TrajRow>> {
    let mut lines = BufReader::new(reader).lines();
    match lines.next() {
        Some(Ok(header)) if header.trim() == TRAJECTORY_HEADER => {}
        Some(Ok(header)) => {
            return Err(Error::Parse {
                line: 1,
                msg: format!("expected header `{TRAJECTORY_HEADER}`, found `{header}`"),
            })
        }
        Some(Err(e)) => return Err(e.into()),
        None => return Err(Error::Parse { line: 1, msg: "empty trajectories file".into() }),
    }

    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i as u64 + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected 8 fields, found {}", fields.len()),
            });
        }
        fn num<T: std::str::FromStr>(raw: &str, name: &str, line: u64) -> Result<T>
        where
            T::Err: std::fmt::Display,
        {
            raw.trim().parse().map_err(|e| Error::Parse {
                line,
                msg: format!("bad `{name}` value `{raw}`: {e}"),
            })
        }
        rows.push(TrajRow {
            draw_id: num(fields[0], "draw_id", line_no)?,
            segment_k: num(fields[1], "segment_k", line_no)?,
            t: num(fields[2], "t", line_no)?,
            x_m: num(fields[3], "x_m", line_no)?,
            y_m: num(fields[4], "y_m", line_no)?,
            lon: num(fields[5], "lon", line_no)?,
            lat: num(fields[6], "lat", line_no)?,
            loglik: num(fields[7], "loglik", line_no)?,
        });
    }
    Ok(rows)
}

/// Classify each row as an endpoint (detection-day) position or an imputed
/// interior day. Detection days are the first day of every segment plus the
/// last day of each draw.
pub fn endpoint_flags(rows: &[TrajRow]) -> Vec<bool> {
    let mut seg_min: HashMap<(u64, usize), i64> = HashMap::new();
    let mut draw_max: HashMap<u64, i64> = HashMap::new();
    for r in rows {
        seg_min
            .entry((r.draw_id, r.segment_k))
            .and_modify(|m| *m = (*m).min(r.t))
            .or_insert(r.t);
        draw_max.entry(r.draw_id).and_modify(|m| *m = (*m).max(r.t)).or_insert(r.t);
    }
    rows.iter()
        .map(|r| seg_min[&(r.draw_id, r.segment_k)] == r.t || draw_max[&r.draw_id] == r.t)
        .collect()
}

/// Write a heatmap as long-form CSV (`row,col,count`), every cell, row-major
/// with row 0 at the south edge.
pub fn export_heatmap_csv<W: Write>(grid: &HeatmapGrid, mut writer: W) -> Result<()> {
    writeln!(writer, "{HEATMAP_HEADER}")?;
    for row in 0..grid.nrows {
        for col in 0..grid.ncols {
            writeln!(writer, "{row},{col},{}", grid.count_at(row, col))?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// Write a heatmap as a binary 16-bit PGM (P5, maxval 65535, big-endian
/// samples). Counts above 65535 clamp; row 0 of the image is the north
/// edge.
pub fn export_heatmap_pgm<W: Write>(grid: &HeatmapGrid, mut writer: W) -> Result<()> {
    write!(writer, "P5\n{} {}\n65535\n", grid.ncols, grid.nrows)?;
    for row in (0..grid.nrows).rev() {
        for col in 0..grid.ncols {
            let v = grid.count_at(row, col).min(65_535) as u16;
            writer.write_all(&v.to_be_bytes())?;
        }
    }
    writer.flush()?;
    Ok(())
}
