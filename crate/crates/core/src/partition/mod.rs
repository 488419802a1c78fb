//! Spatial structure: k-means clusters of road intersections, their Voronoi
//! regions, the grid-to-cluster assignment and cluster adjacency.

mod kmeans;
mod regions;
mod voronoi;

use std::collections::BTreeSet;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::geo::{Point, Projection};
use crate::grid::{Cell, GridSpec};
use crate::{Error, Result};

pub use kmeans::{kmeans, KMeansResult};
pub use regions::{
    assign_grids, boundary_rings, cluster_adjacency, cluster_regions, ClusterRegion,
};
pub use voronoi::{voronoi_regions, VoronoiDiagram};

pub const DEFAULT_K: usize = 21;
pub const DEFAULT_GRID_ROWS: usize = 20;
pub const DEFAULT_GRID_COLS: usize = 20;
pub const DEFAULT_KMEANS_MAX_ITER: usize = 300;

/// Shared borders shorter than this (planar meters) do not make clusters
/// adjacent.
pub const ADJACENCY_MIN_LENGTH: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Intersection {
    pub id: String,
    pub lon: f64,
    pub lat: f64,
}

/// Reads `node_id,lon,lat` lines. A first line with a non-numeric longitude
/// is treated as a header.
pub fn parse_intersections<R: BufRead>(source: R) -> Result<Vec<Intersection>> {
    let mut out = Vec::new();
    let mut malformed = 0usize;
    let mut total = 0usize;
    let mut sample = None;
    for (n, line) in source.lines().enumerate() {
        let line =
            line.map_err(|e| Error::input(format!("unreadable intersection source: {e}")))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if n == 0 && f.get(1).is_some_and(|s| s.parse::<f64>().is_err()) {
            continue;
        }
        total += 1;
        let parsed = (f.len() == 3 && !f[0].is_empty())
            .then(|| Some((f[1].parse::<f64>().ok()?, f[2].parse::<f64>().ok()?)))
            .flatten()
            .filter(|(lon, lat)| (-180.0..=180.0).contains(lon) && (-90.0..=90.0).contains(lat));
        match parsed {
            Some((lon, lat)) => out.push(Intersection {
                id: f[0].to_string(),
                lon,
                lat,
            }),
            None => {
                malformed += 1;
                sample.get_or_insert_with(|| line.to_string());
            }
        }
    }
    if total > 0 && malformed * 2 > total {
        return Err(Error::Format {
            message: format!("{malformed} of {total} intersection lines are malformed"),
            sample,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Label {
    pub id: String,
    pub cluster: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionRings {
    pub cluster: usize,
    pub area: f64,
    /// Planar rings; outer rings counter-clockwise, holes clockwise.
    pub rings: Vec<Vec<[f64; 2]>>,
    /// The same rings in `[lon, lat]`.
    pub rings_lonlat: Vec<Vec<[f64; 2]>>,
}

/// The persisted spatial partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterPartition {
    pub k: usize,
    pub rows: usize,
    pub cols: usize,
    pub projection: Projection,
    pub inertia: f64,
    /// Sorted by intersection id.
    pub labels: Vec<Label>,
    /// Planar k-means centroids, indexed by cluster id.
    pub centroids: Vec<[f64; 2]>,
    pub centroids_lonlat: Vec<[f64; 2]>,
    pub regions: Vec<RegionRings>,
    /// `grid_assignment[row][col]` = cluster id.
    pub grid_assignment: Vec<Vec<usize>>,
    /// Sorted neighbor cluster ids per cluster.
    pub adjacency: Vec<Vec<usize>>,
}

impl ClusterPartition {
    pub fn cluster_of(&self, cell: Cell) -> usize {
        self.grid_assignment[cell.row][cell.col]
    }

    /// Row-major cell indices belonging to cluster `c`.
    pub fn cells_of(&self, c: usize) -> Vec<usize> {
        let mut v = Vec::new();
        for (r, row) in self.grid_assignment.iter().enumerate() {
            for (col, &id) in row.iter().enumerate() {
                if id == c {
                    v.push(r * self.cols + col);
                }
            }
        }
        v
    }

    pub fn neighbors(&self, c: usize) -> &[usize] {
        &self.adjacency[c]
    }

    pub fn centroid(&self, c: usize) -> Point {
        Point::new(self.centroids[c][0], self.centroids[c][1])
    }

    /// Ridge cell groups: each non-empty cluster's cells predicted from the
    /// cluster plus its adjacent clusters.
    pub fn cell_groups(&self) -> Vec<crate::predict::CellGroup> {
        (0..self.k)
            .filter_map(|c| {
                let outputs = self.cells_of(c);
                if outputs.is_empty() {
                    return None;
                }
                let mut inputs: BTreeSet<usize> = outputs.iter().copied().collect();
                for &nb in self.neighbors(c) {
                    inputs.extend(self.cells_of(nb));
                }
                Some(crate::predict::CellGroup {
                    inputs: inputs.into_iter().collect(),
                    outputs,
                })
            })
            .collect()
    }

    pub fn check_grid(&self, grid: &GridSpec) -> Result<()> {
        if self.rows != grid.rows || self.cols != grid.cols {
            return Err(Error::format(format!(
                "partition is for a {}x{} grid, expected {}x{}",
                self.rows, self.cols, grid.rows, grid.cols
            )));
        }
        Ok(())
    }
}

/// Runs the whole partition stage: filter intersections to the grid box,
/// cluster them, build Voronoi cluster regions, assign cells and derive
/// adjacency.
pub fn build_partition(
    grid: &GridSpec,
    intersections: &[Intersection],
    k: usize,
    seed: u64,
    max_iter: usize,
) -> Result<ClusterPartition> {
    let proj = grid.projection();
    let rect = grid.planar_rect();
    let mut inside: Vec<&Intersection> = intersections
        .iter()
        .filter(|i| grid.bbox.contains(i.lon, i.lat))
        .collect();
    let dropped = intersections.len() - inside.len();
    if dropped > 0 {
        log::warn!("{dropped} intersections outside the grid box ignored");
    }
    inside.sort_by(|a, b| {
        a.id.cmp(&b.id)
            .then(a.lon.total_cmp(&b.lon))
            .then(a.lat.total_cmp(&b.lat))
    });
    let sites: Vec<Point> = inside.iter().map(|i| proj.forward(i.lon, i.lat)).collect();
    let km = kmeans(&sites, k, seed, max_iter)?;
    let diagram = voronoi_regions(&sites, rect)?;
    let regions = cluster_regions(&km.labels, k, &sites, &diagram);
    let assignment = assign_grids(grid, &regions);
    let diag = rect.diagonal().max(1.0);
    let adjacency = cluster_adjacency(&regions, ADJACENCY_MIN_LENGTH, 1e-7 * diag);
    let ring_eps = 1e-9 * diag;
    let to_arr = |p: &Point| [p.x, p.y];
    let to_ll = |p: &Point| {
        let (lon, lat) = proj.inverse(*p);
        [lon, lat]
    };
    let region_docs = regions
        .iter()
        .enumerate()
        .map(|(c, r)| {
            let rings = boundary_rings(r, ring_eps);
            RegionRings {
                cluster: c,
                area: r.area(),
                rings: rings
                    .iter()
                    .map(|ring| ring.iter().map(to_arr).collect())
                    .collect(),
                rings_lonlat: rings
                    .iter()
                    .map(|ring| ring.iter().map(to_ll).collect())
                    .collect(),
            }
        })
        .collect();
    Ok(ClusterPartition {
        k,
        rows: grid.rows,
        cols: grid.cols,
        projection: proj,
        inertia: km.inertia,
        labels: inside
            .iter()
            .zip(&km.labels)
            .map(|(i, &cluster)| Label {
                id: i.id.clone(),
                cluster,
            })
            .collect(),
        centroids: km.centroids.iter().map(to_arr).collect(),
        centroids_lonlat: km.centroids.iter().map(to_ll).collect(),
        regions: region_docs,
        grid_assignment: assignment
            .chunks(grid.cols)
            .map(<[usize]>::to_vec)
            .collect(),
        adjacency: adjacency
            .into_iter()
            .map(|s| s.into_iter().collect())
            .collect(),
    })
}
