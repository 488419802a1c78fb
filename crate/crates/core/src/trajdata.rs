//! Trajectory ingestion and rasterization into in/out flow tensors.

use std::collections::BTreeMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::grid::{Cell, GridSpec};
use crate::predict::FlowFrame;
use crate::{Error, Result};

pub const DEFAULT_INTERVAL_SECONDS: u32 = 600;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpsPoint {
    pub t: i64,
    pub lon: f64,
    pub lat: f64,
}

/// One trip: the fixes sharing an order id, in strictly increasing time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub vehicle_id: String,
    pub order_id: String,
    pub points: Vec<GpsPoint>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrajectoryStore {
    /// Sorted by `order_id`.
    pub records: Vec<TrajectoryRecord>,
    /// `None` for an empty store.
    pub time_range: Option<(i64, i64)>,
}

impl TrajectoryStore {
    pub fn new(mut records: Vec<TrajectoryRecord>) -> Self {
        records.sort_by(|a, b| a.order_id.cmp(&b.order_id));
        let time_range = records
            .iter()
            .flat_map(|r| r.points.iter().map(|p| p.t))
            .fold(None, |acc: Option<(i64, i64)>, t| match acc {
                None => Some((t, t)),
                Some((lo, hi)) => Some((lo.min(t), hi.max(t))),
            });
        TrajectoryStore {
            records,
            time_range,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, order_id: &str) -> Option<&TrajectoryRecord> {
        self.records
            .binary_search_by(|r| r.order_id.as_str().cmp(order_id))
            .ok()
            .map(|i| &self.records[i])
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParseReport {
    pub data_lines: usize,
    pub malformed: usize,
    pub header_skipped: bool,
    /// Fixes dropped because another fix of the same trip had the same timestamp.
    pub duplicate_timestamps: usize,
    pub first_malformed: Option<String>,
}

fn parse_line(line: &str) -> Option<(&str, &str, i64, f64, f64)> {
    let mut it = line.split(',').map(str::trim);
    let driver = it.next()?;
    let order = it.next()?;
    let t = it.next()?.parse::<i64>().ok()?;
    let lon = it.next()?.parse::<f64>().ok()?;
    let lat = it.next()?.parse::<f64>().ok()?;
    if it.next().is_some() || order.is_empty() {
        return None;
    }
    if !(lon.is_finite() && lat.is_finite())
        || !(-180.0..=180.0).contains(&lon)
        || !(-90.0..=90.0).contains(&lat)
    {
        return None;
    }
    Some((driver, order, t, lon, lat))
}

/// Reads `driver_id,order_id,timestamp,lon,lat` lines.
///
/// Malformed lines are skipped and counted; if more than half of the data
/// lines are malformed the whole source is rejected.
pub fn parse_trajectories<R: BufRead>(source: R) -> Result<(TrajectoryStore, ParseReport)> {
    let mut report = ParseReport::default();
    let mut trips: BTreeMap<String, (String, Vec<GpsPoint>)> = BTreeMap::new();
    let mut first = true;
    for line in source.lines() {
        let line = line.map_err(|e| Error::input(format!("unreadable trajectory source: {e}")))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if first {
            first = false;
            let ts = trimmed.split(',').nth(2).map(str::trim);
            if ts.is_some_and(|ts| ts.parse::<f64>().is_err()) {
                report.header_skipped = true;
                continue;
            }
        }
        report.data_lines += 1;
        match parse_line(trimmed) {
            Some((driver, order, t, lon, lat)) => {
                let entry = trips
                    .entry(order.to_string())
                    .or_insert_with(|| (driver.to_string(), Vec::new()));
                if driver < entry.0.as_str() {
                    entry.0 = driver.to_string();
                }
                entry.1.push(GpsPoint { t, lon, lat });
            }
            None => {
                report.malformed += 1;
                if report.first_malformed.is_none() {
                    report.first_malformed = Some(trimmed.to_string());
                }
            }
        }
    }
    if report.data_lines > 0 && report.malformed * 2 > report.data_lines {
        return Err(Error::Format {
            message: format!(
                "{} of {} trajectory lines are malformed",
                report.malformed, report.data_lines
            ),
            sample: report.first_malformed.clone(),
        });
    }
    let records = trips
        .into_iter()
        .map(|(order_id, (vehicle_id, mut points))| {
            points.sort_by(|a, b| {
                a.t.cmp(&b.t)
                    .then(a.lon.total_cmp(&b.lon))
                    .then(a.lat.total_cmp(&b.lat))
            });
            let before = points.len();
            points.dedup_by_key(|p| p.t);
            report.duplicate_timestamps += before - points.len();
            TrajectoryRecord {
                vehicle_id,
                order_id,
                points,
            }
        })
        .collect();
    Ok((TrajectoryStore::new(records), report))
}

/// Time spent in one cell by one trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellVisit {
    pub cell: Cell,
    pub enter_t: f64,
    pub exit_t: f64,
    /// The visit began by crossing into the grid from outside.
    pub from_outside: bool,
    /// The visit ended by leaving the grid.
    pub to_outside: bool,
}

/// Ordered cell visits of a trajectory. Consecutive visits have distinct
/// cells unless separated by an excursion outside the grid.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CellSequence {
    pub visits: Vec<CellVisit>,
    /// Segments lying entirely outside the grid.
    pub out_of_box_segments: usize,
}

/// A border crossing. `None` on either side means outside the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossingEvent {
    pub t: f64,
    pub from: Option<Cell>,
    pub to: Option<Cell>,
}

/// Parameter range of the segment `a + s·d`, `s ∈ [0,1]`, inside
/// `[0,w]×[0,h]` (Liang-Barsky).
fn clip_segment(a: (f64, f64), d: (f64, f64), w: f64, h: f64) -> Option<(f64, f64)> {
    let mut s0 = 0.0f64;
    let mut s1 = 1.0f64;
    for (p, q) in [(-d.0, a.0), (d.0, w - a.0), (-d.1, a.1), (d.1, h - a.1)] {
        if p == 0.0 {
            if q < 0.0 {
                return None;
            }
        } else {
            let r = q / p;
            if p < 0.0 {
                s0 = s0.max(r);
            } else {
                s1 = s1.min(r);
            }
        }
    }
    (s0 <= s1).then_some((s0, s1))
}

/// Parameters in `(lo, hi)` where `start + s·delta` crosses an integer line.
fn line_crossings(start: f64, delta: f64, lo: f64, hi: f64, out: &mut Vec<f64>) {
    if delta == 0.0 {
        return;
    }
    let a = start + lo * delta;
    let b = start + hi * delta;
    let (mn, mx) = if a < b { (a, b) } else { (b, a) };
    let mut k = mn.floor() + 1.0;
    while k < mx {
        let s = (k - start) / delta;
        if s > lo && s < hi {
            out.push(s);
        }
        k += 1.0;
    }
}

struct Walker<'g> {
    grid: &'g GridSpec,
    visits: Vec<CellVisit>,
    current: Option<CellVisit>,
}

impl Walker<'_> {
    fn step_into(&mut self, cell: Cell, t: f64, from_outside: bool) {
        match &mut self.current {
            Some(v) if v.cell == cell => v.exit_t = v.exit_t.max(t),
            Some(v) => {
                v.exit_t = t;
                let done = *v;
                self.visits.push(done);
                self.current = Some(CellVisit {
                    cell,
                    enter_t: t,
                    exit_t: t,
                    from_outside: false,
                    to_outside: false,
                });
            }
            None => {
                self.current = Some(CellVisit {
                    cell,
                    enter_t: t,
                    exit_t: t,
                    from_outside,
                    to_outside: false,
                })
            }
        }
    }

    fn touch(&mut self, t: f64) {
        if let Some(v) = &mut self.current {
            v.exit_t = v.exit_t.max(t);
        }
    }

    fn leave(&mut self, t: f64) {
        if let Some(mut v) = self.current.take() {
            v.exit_t = t;
            v.to_outside = true;
            self.visits.push(v);
        }
    }

    fn finish(mut self) -> Vec<CellVisit> {
        if let Some(v) = self.current.take() {
            self.visits.push(v);
        }
        self.visits
    }

    fn cell(&self, u: f64, v: f64) -> Option<Cell> {
        self.grid.cell_of_coords(u, v)
    }
}

/// Walks a trajectory through the grid, splitting each straight segment at
/// grid lines. Crossing times are linearly interpolated between fixes.
pub fn cell_sequence(record: &TrajectoryRecord, grid: &GridSpec) -> CellSequence {
    let w = grid.cols as f64;
    let h = grid.rows as f64;
    let coords: Vec<(f64, f64)> = record
        .points
        .iter()
        .map(|p| grid.cell_coords(p.lon, p.lat))
        .collect();
    let mut walker = Walker {
        grid,
        visits: Vec::new(),
        current: None,
    };
    let mut out_of_box = 0;
    if let (Some(&(u, v)), Some(p)) = (coords.first(), record.points.first()) {
        if let Some(c) = walker.cell(u, v) {
            walker.step_into(c, p.t as f64, false);
        }
    }
    let mut cuts = Vec::new();
    for i in 1..coords.len() {
        let a = coords[i - 1];
        let b = coords[i];
        let ta = record.points[i - 1].t as f64;
        let tb = record.points[i].t as f64;
        let time = |s: f64| ta + s * (tb - ta);
        let d = (b.0 - a.0, b.1 - a.1);
        if d == (0.0, 0.0) {
            if walker.cell(a.0, a.1).is_some() {
                walker.touch(tb);
            } else {
                out_of_box += 1;
            }
            continue;
        }
        let Some((s_in, s_out)) = clip_segment(a, d, w, h).filter(|(s0, s1)| s1 > s0) else {
            out_of_box += 1;
            walker.leave(ta);
            continue;
        };
        let entering = walker.current.is_none();
        cuts.clear();
        cuts.push(s_in);
        line_crossings(a.0, d.0, s_in, s_out, &mut cuts);
        line_crossings(a.1, d.1, s_in, s_out, &mut cuts);
        cuts.push(s_out);
        cuts[1..].sort_by(f64::total_cmp);
        cuts.dedup_by(|x, y| (*x - *y).abs() <= 1e-12);
        if cuts.len() < 2 {
            cuts.push(s_out);
        }
        let mut first = true;
        for win in cuts.windows(2) {
            let (lo, hi) = (win[0], win[1]);
            if hi <= lo {
                continue;
            }
            let mid = 0.5 * (lo + hi);
            if let Some(c) = walker.cell(a.0 + mid * d.0, a.1 + mid * d.1) {
                walker.step_into(c, time(lo), entering && first);
                walker.touch(time(hi));
            }
            first = false;
        }
        if s_out < 1.0 {
            walker.leave(time(s_out));
        }
    }
    CellSequence {
        visits: walker.finish(),
        out_of_box_segments: out_of_box,
    }
}

/// Border crossings implied by a cell sequence, in time order.
pub fn crossing_events(seq: &CellSequence) -> Vec<CrossingEvent> {
    let mut events = Vec::new();
    for (i, v) in seq.visits.iter().enumerate() {
        if v.from_outside {
            events.push(CrossingEvent {
                t: v.enter_t,
                from: None,
                to: Some(v.cell),
            });
        } else if i > 0 && !seq.visits[i - 1].to_outside {
            events.push(CrossingEvent {
                t: v.enter_t,
                from: Some(seq.visits[i - 1].cell),
                to: Some(v.cell),
            });
        }
        if v.to_outside {
            events.push(CrossingEvent {
                t: v.exit_t,
                from: Some(v.cell),
                to: None,
            });
        }
    }
    events
}

pub fn trajectory_events(record: &TrajectoryRecord, grid: &GridSpec) -> Vec<CrossingEvent> {
    crossing_events(&cell_sequence(record, grid))
}

/// Time axis of a flow tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeAxis {
    pub t0: i64,
    pub interval_seconds: u32,
    pub n_intervals: usize,
}

impl TimeAxis {
    pub fn new(t0: i64, interval_seconds: u32, n_intervals: usize) -> Result<Self> {
        if interval_seconds == 0 {
            return Err(Error::config("interval_seconds must be positive"));
        }
        if n_intervals == 0 {
            return Err(Error::config("n_intervals must be at least 1"));
        }
        Ok(TimeAxis {
            t0,
            interval_seconds,
            n_intervals,
        })
    }

    /// Interval containing `t`, if within range. Intervals are half-open.
    pub fn interval_of(&self, t: f64) -> Option<usize> {
        let k = ((t - self.t0 as f64) / self.interval_seconds as f64).floor();
        (k >= 0.0 && k < self.n_intervals as f64).then_some(k as usize)
    }

    pub fn start_of(&self, interval: usize) -> i64 {
        self.t0 + interval as i64 * self.interval_seconds as i64
    }

    pub fn end_of(&self, interval: usize) -> i64 {
        self.start_of(interval + 1)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RasterStats {
    pub transitions: u64,
    pub entries_from_outside: u64,
    pub exits_to_outside: u64,
    pub dropped_out_of_range: u64,
    pub out_of_box_segments: u64,
}

impl RasterStats {
    #[cfg(feature = "parallel")]
    fn merge(mut self, o: RasterStats) -> Self {
        self.transitions += o.transitions;
        self.entries_from_outside += o.entries_from_outside;
        self.exits_to_outside += o.exits_to_outside;
        self.dropped_out_of_range += o.dropped_out_of_range;
        self.out_of_box_segments += o.out_of_box_segments;
        self
    }
}

/// In/out crossing counts per cell and interval, stored `[interval][row][col]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowTensor {
    pub grid: GridSpec,
    pub axis: TimeAxis,
    pub inflow: Vec<u32>,
    pub outflow: Vec<u32>,
}

impl FlowTensor {
    pub fn zeros(grid: GridSpec, axis: TimeAxis) -> Self {
        let n = axis.n_intervals * grid.n_cells();
        FlowTensor {
            grid,
            axis,
            inflow: vec![0; n],
            outflow: vec![0; n],
        }
    }

    pub fn n_intervals(&self) -> usize {
        self.axis.n_intervals
    }

    fn offset(&self, interval: usize, cell: Cell) -> usize {
        interval * self.grid.n_cells() + self.grid.index(cell)
    }

    pub fn inflow_at(&self, interval: usize, cell: Cell) -> u32 {
        self.inflow[self.offset(interval, cell)]
    }

    pub fn outflow_at(&self, interval: usize, cell: Cell) -> u32 {
        self.outflow[self.offset(interval, cell)]
    }

    /// One interval as a real-valued frame.
    pub fn frame(&self, interval: usize) -> FlowFrame {
        let n = self.grid.n_cells();
        let r = interval * n..(interval + 1) * n;
        FlowFrame {
            rows: self.grid.rows,
            cols: self.grid.cols,
            inflow: self.inflow[r.clone()].iter().map(|&v| v as f64).collect(),
            outflow: self.outflow[r].iter().map(|&v| v as f64).collect(),
        }
    }

    pub fn total_inflow(&self) -> u64 {
        self.inflow.iter().map(|&v| v as u64).sum()
    }

    pub fn total_outflow(&self) -> u64 {
        self.outflow.iter().map(|&v| v as u64).sum()
    }

    /// Adds the crossings of one trajectory. Returns how many fell outside the
    /// time axis.
    pub fn add_events(&mut self, events: &[CrossingEvent], stats: &mut RasterStats) {
        for e in events {
            let Some(k) = self.axis.interval_of(e.t) else {
                stats.dropped_out_of_range += 1;
                continue;
            };
            match (e.from, e.to) {
                (Some(_), Some(_)) => stats.transitions += 1,
                (None, Some(_)) => stats.entries_from_outside += 1,
                (Some(_), None) => stats.exits_to_outside += 1,
                (None, None) => {}
            }
            if let Some(c) = e.from {
                let o = self.offset(k, c);
                self.outflow[o] += 1;
            }
            if let Some(c) = e.to {
                let o = self.offset(k, c);
                self.inflow[o] += 1;
            }
        }
    }

    #[cfg(feature = "parallel")]
    fn merge(mut self, other: FlowTensor) -> Self {
        for (a, b) in self.inflow.iter_mut().zip(&other.inflow) {
            *a += b;
        }
        for (a, b) in self.outflow.iter_mut().zip(&other.outflow) {
            *a += b;
        }
        self
    }
}

fn rasterize_one(
    record: &TrajectoryRecord,
    grid: &GridSpec,
    acc: &mut FlowTensor,
    stats: &mut RasterStats,
) {
    let seq = cell_sequence(record, grid);
    stats.out_of_box_segments += seq.out_of_box_segments as u64;
    acc.add_events(&crossing_events(&seq), stats);
}

/// Counts every cell-border crossing of every trajectory into per-interval
/// in/out flows. Crossings to or from outside the grid count only on the
/// in-grid side; crossings outside the time axis are dropped and counted.
pub fn build_flow_tensor(
    store: &TrajectoryStore,
    grid: &GridSpec,
    interval_seconds: u32,
    t0: i64,
    n_intervals: usize,
) -> Result<(FlowTensor, RasterStats)> {
    let grid = GridSpec::new(grid.bbox, grid.rows, grid.cols)?;
    let axis = TimeAxis::new(t0, interval_seconds, n_intervals)?;

    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        let (tensor, stats) = store
            .records
            .par_iter()
            .fold(
                || (FlowTensor::zeros(grid, axis), RasterStats::default()),
                |(mut acc, mut stats), r| {
                    rasterize_one(r, &grid, &mut acc, &mut stats);
                    (acc, stats)
                },
            )
            .reduce(
                || (FlowTensor::zeros(grid, axis), RasterStats::default()),
                |(a, sa), (b, sb)| (a.merge(b), sa.merge(sb)),
            );
        Ok((tensor, stats))
    }
    #[cfg(not(feature = "parallel"))]
    {
        let mut acc = FlowTensor::zeros(grid, axis);
        let mut stats = RasterStats::default();
        for r in &store.records {
            rasterize_one(r, &grid, &mut acc, &mut stats);
        }
        Ok((acc, stats))
    }
}

const TENSOR_MAGIC: &[u8; 4] = b"TPFT";
const TENSOR_VERSION: u32 = 1;
const TENSOR_HEADER_LEN: usize = 4 + 4 * 5 + 8;

impl FlowTensor {
    /// Flat little-endian encoding: header then inflow then outflow as `u32`
    /// in `[interval][row][col]` order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(TENSOR_HEADER_LEN + 8 * self.inflow.len());
        out.extend_from_slice(TENSOR_MAGIC);
        for v in [
            TENSOR_VERSION,
            self.grid.rows as u32,
            self.grid.cols as u32,
            self.axis.n_intervals as u32,
            self.axis.interval_seconds,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&self.axis.t0.to_le_bytes());
        for v in self.inflow.iter().chain(&self.outflow) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Decodes a tensor written by [`FlowTensor::to_bytes`]. The grid is not
    /// part of the file, so its shape is checked against `grid`.
    pub fn from_bytes(bytes: &[u8], grid: &GridSpec) -> Result<Self> {
        if bytes.len() < TENSOR_HEADER_LEN || &bytes[..4] != TENSOR_MAGIC {
            return Err(Error::format("not a flow tensor file (bad magic)"));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap());
        if word(0) != TENSOR_VERSION {
            return Err(Error::format(format!(
                "unsupported flow tensor version {}",
                word(0)
            )));
        }
        let (rows, cols, n_intervals, interval_seconds) = (
            word(1) as usize,
            word(2) as usize,
            word(3) as usize,
            word(4),
        );
        if rows != grid.rows || cols != grid.cols {
            return Err(Error::format(format!(
                "flow tensor is {rows}x{cols} but the grid is {}x{}",
                grid.rows, grid.cols
            )));
        }
        let t0 = i64::from_le_bytes(bytes[24..32].try_into().unwrap());
        let n = rows * cols * n_intervals;
        if bytes.len() != TENSOR_HEADER_LEN + 8 * n {
            return Err(Error::format("flow tensor payload has the wrong length"));
        }
        let read = |start: usize| -> Vec<u32> {
            bytes[start..start + 4 * n]
                .chunks_exact(4)
                .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
                .collect()
        };
        Ok(FlowTensor {
            grid: *grid,
            axis: TimeAxis::new(t0, interval_seconds, n_intervals)?,
            inflow: read(TENSOR_HEADER_LEN),
            outflow: read(TENSOR_HEADER_LEN + 4 * n),
        })
    }
}
