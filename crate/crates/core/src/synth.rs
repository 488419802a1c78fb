//! Synthetic city: a jittered street lattice, random-walk trips, and planted
//! converging-flow events with recorded ground truth.

use std::fmt::Write as _;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::geo::Point;
use crate::grid::{BBox, Cell, GridSpec};
use crate::partition::Intersection;
use crate::predict::WINDOW_LEN;
use crate::seed;
use crate::trajdata::{GpsPoint, TimeAxis, TrajectoryRecord, DEFAULT_INTERVAL_SECONDS};
use crate::{Error, Result};

/// 2016-10-01 00:00:00 UTC.
pub const SYNTH_T0: i64 = 1_475_280_000;

pub const SYNTH_BBOX: BBox = BBox {
    lon_min: 104.00,
    lat_min: 30.62,
    lon_max: 104.12,
    lat_max: 30.72,
};

pub const FIX_SECONDS: i64 = 30;
pub const PLANTED_VEHICLES: usize = 5;
/// Entries into the event cell made by each planted vehicle.
pub const PLANTED_ENTRIES: u32 = 3;
pub const APPROACH_SECONDS: i64 = 1200;

const STREET_SPACING_M: f64 = 450.0;
const JITTER: f64 = 0.2;
const APPROACH_CELLS: f64 = 5.0;
const OSCILLATION_LEG_SECONDS: i64 = 90;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthParams {
    pub vehicles: usize,
    pub hours: u32,
    pub events: usize,
    pub seed: u64,
    pub grid_rows: usize,
    pub grid_cols: usize,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            vehicles: 300,
            hours: 4,
            events: 1,
            seed: 42,
            grid_rows: crate::partition::DEFAULT_GRID_ROWS,
            grid_cols: crate::partition::DEFAULT_GRID_COLS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedEvent {
    pub id: usize,
    pub cell: Cell,
    pub interval: usize,
    pub t_start: i64,
    pub t_end: i64,
    /// Inflow added to the event cell in the event interval.
    pub boost: u32,
    /// Order ids of the planted trajectories, ascending.
    pub contributing: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub vehicles: usize,
    pub hours: u32,
    pub t0: i64,
    pub interval_seconds: u32,
    pub n_intervals: usize,
    pub bbox: BBox,
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub intersections: usize,
    pub trajectories: usize,
    pub points: usize,
    pub events: Vec<PlantedEvent>,
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub intersections: Vec<Intersection>,
    /// Sorted by order id.
    pub records: Vec<TrajectoryRecord>,
    pub manifest: Manifest,
}

struct Lattice {
    nodes: Vec<Point>,
    adj: Vec<Vec<usize>>,
}

fn lattice(grid: &GridSpec, rng: &mut ChaCha8Rng) -> Lattice {
    let rect = grid.planar_rect();
    let nx = ((rect.width() / STREET_SPACING_M).round() as usize).max(2);
    let ny = ((rect.height() / STREET_SPACING_M).round() as usize).max(2);
    let (sx, sy) = (rect.width() / nx as f64, rect.height() / ny as f64);
    let mut nodes = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let jx = rng.random_range(-JITTER..JITTER);
            let jy = rng.random_range(-JITTER..JITTER);
            nodes.push(Point::new(
                rect.min.x + (i as f64 + 0.5 + jx) * sx,
                rect.min.y + (j as f64 + 0.5 + jy) * sy,
            ));
        }
    }
    let mut adj = vec![Vec::new(); nodes.len()];
    for j in 0..ny {
        for i in 0..nx {
            let id = j * nx + i;
            if i + 1 < nx {
                adj[id].push(id + 1);
                adj[id + 1].push(id);
            }
            if j + 1 < ny {
                adj[id].push(id + nx);
                adj[id + nx].push(id);
            }
        }
    }
    Lattice { nodes, adj }
}

fn to_gps(grid: &GridSpec, t: i64, p: Point) -> GpsPoint {
    let (lon, lat) = grid.projection().inverse(p);
    // the CSV keeps seven decimals; round here so records match their file
    let r = |v: f64| (v * 1e7).round() / 1e7;
    GpsPoint {
        t,
        lon: r(lon),
        lat: r(lat),
    }
}

/// Non-backtracking random walk from `start`, sampled every `FIX_SECONDS`
/// from `t_start` while `t <= t_stop`. Returns the fixes and the node the
/// walk was heading to.
fn walk(
    lat: &Lattice,
    grid: &GridSpec,
    rng: &mut ChaCha8Rng,
    start: usize,
    t_start: i64,
    t_stop: i64,
) -> (Vec<GpsPoint>, usize) {
    let speed = rng.random_range(6.0..11.0);
    let (mut prev, mut from) = (usize::MAX, start);
    let pick = |rng: &mut ChaCha8Rng, prev: usize, at: usize| -> usize {
        let options: Vec<usize> = lat.adj[at].iter().copied().filter(|&n| n != prev).collect();
        let options = if options.is_empty() {
            lat.adj[at].clone()
        } else {
            options
        };
        options[rng.random_range(0..options.len())]
    };
    let mut to = pick(rng, prev, from);
    let mut along = 0.0;
    let mut points = Vec::new();
    let mut t = t_start;
    while t <= t_stop {
        let (a, b) = (lat.nodes[from], lat.nodes[to]);
        points.push(to_gps(grid, t, a.lerp(b, along / a.dist(b))));
        let mut step = speed * FIX_SECONDS as f64;
        loop {
            let len = lat.nodes[from].dist(lat.nodes[to]);
            if along + step < len {
                along += step;
                break;
            }
            step -= len - along;
            along = 0.0;
            let next = pick(rng, prev, to);
            (prev, from, to) = (from, to, next);
        }
        t += FIX_SECONDS;
    }
    (points, to)
}

/// Fixes every `FIX_SECONDS` along the polyline through `stops`, reaching
/// stop `i` at `times[i]`. Times must be multiples of `FIX_SECONDS` apart.
fn timed_path(grid: &GridSpec, stops: &[Point], times: &[i64]) -> Vec<GpsPoint> {
    let mut points = vec![to_gps(grid, times[0], stops[0])];
    for w in 0..stops.len() - 1 {
        let (t0, t1) = (times[w], times[w + 1]);
        let mut t = t0 + FIX_SECONDS;
        while t <= t1 {
            let s = (t - t0) as f64 / (t1 - t0) as f64;
            points.push(to_gps(grid, t, stops[w].lerp(stops[w + 1], s)));
            t += FIX_SECONDS;
        }
    }
    points
}

/// Planar point at fractional grid coordinates (`u` columns east of the west
/// edge, `v` rows south of the north edge).
fn grid_point(grid: &GridSpec, u: f64, v: f64) -> Point {
    let rect = grid.planar_rect();
    Point::new(
        rect.min.x + u / grid.cols as f64 * rect.width(),
        rect.max.y - v / grid.rows as f64 * rect.height(),
    )
}

fn plant(
    grid: &GridSpec,
    axis: &TimeAxis,
    rng: &mut ChaCha8Rng,
    id: usize,
    interval: usize,
) -> (PlantedEvent, Vec<TrajectoryRecord>) {
    // keep the approach start points inside the grid
    let margin = APPROACH_CELLS.ceil() as usize + 1;
    let pick = |rng: &mut ChaCha8Rng, n: usize| {
        if n > 2 * margin {
            rng.random_range(margin..n - margin)
        } else {
            n / 2
        }
    };
    let cell = Cell {
        row: pick(rng, grid.rows),
        col: pick(rng, grid.cols),
    };
    let (cu, cv) = (cell.col as f64 + 0.5, cell.row as f64 + 0.5);
    let t_start = axis.start_of(interval);
    let offset = rng.random_range(0.0..std::f64::consts::TAU);
    let mut records = Vec::with_capacity(PLANTED_VEHICLES);
    for j in 0..PLANTED_VEHICLES {
        let a = offset + std::f64::consts::TAU * j as f64 / PLANTED_VEHICLES as f64;
        let (du, dv) = (a.sin(), -a.cos());
        let at = |d: f64| grid_point(grid, cu + du * d, cv + dv * d);
        let (far, near, center) = (at(APPROACH_CELLS), at(1.0), at(0.0));
        let t_near = t_start + FIX_SECONDS;
        let mut stops = vec![far, near];
        let mut times = vec![t_start - APPROACH_SECONDS, t_near];
        for leg in 0..(2 * PLANTED_ENTRIES - 1) as i64 {
            stops.push(if leg % 2 == 0 { center } else { near });
            times.push(t_near + (leg + 1) * OSCILLATION_LEG_SECONDS);
        }
        let order_id = format!("e{id:02}-{j:02}");
        records.push(TrajectoryRecord {
            vehicle_id: format!("v{order_id}"),
            order_id,
            points: timed_path(grid, &stops, &times),
        });
    }
    let event = PlantedEvent {
        id,
        cell,
        interval,
        t_start,
        t_end: axis.end_of(interval),
        boost: PLANTED_ENTRIES * PLANTED_VEHICLES as u32,
        contributing: records.iter().map(|r| r.order_id.clone()).collect(),
    };
    (event, records)
}

/// Generates a scenario. Identical parameters give identical output.
pub fn generate(params: &SynthParams) -> Result<SynthOutput> {
    let grid = GridSpec::new(SYNTH_BBOX, params.grid_rows, params.grid_cols)?;
    let interval = DEFAULT_INTERVAL_SECONDS;
    let n_intervals = (params.hours as usize * 3600 / interval as usize).max(1);
    let axis = TimeAxis::new(SYNTH_T0, interval, n_intervals)?;
    let t_end = axis.end_of(n_intervals - 1);
    // an event needs a full input window and the approach inside the range
    let first_event = WINDOW_LEN.max((APPROACH_SECONDS / interval as i64) as usize + 1);
    if params.events > 0 && n_intervals <= first_event {
        return Err(Error::config(format!(
            "planting events needs more than {} intervals; increase --hours",
            first_event
        )));
    }
    let mut rng = seed::rng(seed::derive(params.seed, &[seed::label("synth")]));
    let lat = lattice(&grid, &mut rng);
    let intersections: Vec<Intersection> = lat
        .nodes
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let (lon, lat) = grid.projection().inverse(p);
            Intersection {
                id: format!("n{i:04}"),
                lon,
                lat,
            }
        })
        .collect();

    let mut records = Vec::new();
    let mut trip = 0usize;
    for v in 0..params.vehicles {
        let driver = format!("d{v:05}");
        let mut node = rng.random_range(0..lat.nodes.len());
        let mut t = SYNTH_T0 + rng.random_range(0..1800);
        while t < t_end {
            let duration = rng.random_range(600..2400);
            let (points, last) = walk(
                &lat,
                &grid,
                &mut rng,
                node,
                t,
                (t + duration).min(t_end - 1),
            );
            if points.len() >= 2 {
                records.push(TrajectoryRecord {
                    vehicle_id: driver.clone(),
                    order_id: format!("t{trip:06}"),
                    points,
                });
                trip += 1;
            }
            node = last;
            t += duration + rng.random_range(60..900);
        }
    }

    let span = n_intervals - first_event;
    let mut events = Vec::with_capacity(params.events);
    for e in 0..params.events {
        let interval = first_event + (e + 1) * span / (params.events + 1);
        let (event, planted) = plant(&grid, &axis, &mut rng, e, interval.min(n_intervals - 1));
        events.push(event);
        records.extend(planted);
    }
    records.sort_by(|a, b| a.order_id.cmp(&b.order_id));

    let manifest = Manifest {
        seed: params.seed,
        vehicles: params.vehicles,
        hours: params.hours,
        t0: SYNTH_T0,
        interval_seconds: interval,
        n_intervals,
        bbox: SYNTH_BBOX,
        grid_rows: params.grid_rows,
        grid_cols: params.grid_cols,
        intersections: intersections.len(),
        trajectories: records.len(),
        points: records.iter().map(|r| r.points.len()).sum(),
        events,
    };
    Ok(SynthOutput {
        intersections,
        records,
        manifest,
    })
}

impl SynthOutput {
    pub fn trajectories_csv(&self) -> String {
        let mut s = String::from("driver_id,order_id,timestamp,lon,lat\n");
        for r in &self.records {
            for p in &r.points {
                let _ = writeln!(
                    s,
                    "{},{},{},{:.7},{:.7}",
                    r.vehicle_id, r.order_id, p.t, p.lon, p.lat
                );
            }
        }
        s
    }

    pub fn intersections_csv(&self) -> String {
        let mut s = String::from("node_id,lon,lat\n");
        for i in &self.intersections {
            let _ = writeln!(s, "{},{:.7},{:.7}", i.id, i.lon, i.lat);
        }
        s
    }

    /// Config pointing at the generated files by their fixed names.
    pub fn config(&self) -> Config {
        let m = &self.manifest;
        Config {
            trajectories: Some("trajectories.csv".into()),
            intersections: Some("intersections.csv".into()),
            bbox: Some(m.bbox),
            grid_rows: m.grid_rows,
            grid_cols: m.grid_cols,
            interval_seconds: m.interval_seconds,
            t0: Some(m.t0),
            n_intervals: Some(m.n_intervals),
            seed: m.seed,
            ..Config::default()
        }
    }
}
