//! Browser demo: three interactive operations over the core engine, each
//! taking plain arguments and returning a JSON document.
//!
//! The `*_json` functions are the native entry points (used by tests); the
//! exported wrappers turn their errors into JavaScript exceptions.

use flowshap_core::explain::{
    sector_of, shapley_exact, shapley_mc, CoalitionGame, CountingGame, SECTOR_NAMES,
};
use flowshap_core::geo::{Point, Rect};
use flowshap_core::partition::{kmeans, voronoi_regions};
use flowshap_core::seed;
use rand::Rng;
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

/// Canvas-sized planar box used by the partition demo.
pub const DEMO_WIDTH: f64 = 960.0;
pub const DEMO_HEIGHT: f64 = 640.0;

/// Players above this are only sampled in the Shapley demo.
pub const DEMO_EXACT_LIMIT: usize = 16;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PartitionDemo {
    pub width: f64,
    pub height: f64,
    /// `[x, y, cluster]`; y grows downward like canvas coordinates.
    pub points: Vec<[f64; 3]>,
    pub centroids: Vec<[f64; 2]>,
    /// Voronoi cell of each centroid, counter-clockwise.
    pub cells: Vec<Vec<[f64; 2]>>,
    pub inertia_history: Vec<f64>,
}

/// Seeded random points clustered by k-means, with the Voronoi diagram of
/// the centroids clipped to the canvas.
pub fn partition_json(points: usize, k: usize, seed_value: u64) -> Result<String, String> {
    let mut rng = seed::rng(seed::derive(seed_value, &[seed::label("demo-points")]));
    // a few hot spots so clusters are visible
    let hubs: Vec<(f64, f64)> = (0..k.max(1))
        .map(|_| {
            (
                rng.random_range(0.1..0.9) * DEMO_WIDTH,
                rng.random_range(0.1..0.9) * DEMO_HEIGHT,
            )
        })
        .collect();
    let pts: Vec<Point> = (0..points)
        .map(|_| {
            let (hx, hy) = hubs[rng.random_range(0..hubs.len())];
            let r = rng.random_range(0.0..90.0f64);
            let a = rng.random_range(0.0..std::f64::consts::TAU);
            Point::new(
                (hx + r * a.cos()).clamp(0.0, DEMO_WIDTH),
                (hy + r * a.sin()).clamp(0.0, DEMO_HEIGHT),
            )
        })
        .collect();
    let km = kmeans(&pts, k, seed_value, 300).map_err(err)?;
    let rect = Rect::new(Point::new(0.0, 0.0), Point::new(DEMO_WIDTH, DEMO_HEIGHT));
    let v = voronoi_regions(&km.centroids, rect).map_err(err)?;
    let doc = PartitionDemo {
        width: DEMO_WIDTH,
        height: DEMO_HEIGHT,
        points: pts
            .iter()
            .zip(&km.labels)
            .map(|(p, &l)| [p.x, p.y, l as f64])
            .collect(),
        centroids: km.centroids.iter().map(|c| [c.x, c.y]).collect(),
        cells: v
            .cells
            .iter()
            .map(|poly| poly.vertices.iter().map(|p| [p.x, p.y]).collect())
            .collect(),
        inertia_history: km.inertia_history,
    };
    serde_json::to_string(&doc).map_err(err)
}

/// Weighted voting game: a coalition wins (payoff 1) once its weight reaches
/// the quota.
struct VotingGame {
    weights: Vec<f64>,
    quota: f64,
}

impl CoalitionGame for VotingGame {
    fn n_players(&self) -> usize {
        self.weights.len()
    }

    fn value(&self, members: &[bool]) -> f64 {
        let w: f64 = self
            .weights
            .iter()
            .zip(members)
            .filter(|(_, &m)| m)
            .map(|(w, _)| w)
            .sum();
        if w >= self.quota {
            1.0
        } else {
            0.0
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PlayerShare {
    pub weight: f64,
    /// `None` when the game is too large to enumerate.
    pub exact: Option<f64>,
    pub sampled: f64,
    pub stderr: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ShapleyDemo {
    pub quota: f64,
    pub players: Vec<PlayerShare>,
    pub exact_evaluations: u64,
    pub sampled_evaluations: u64,
}

/// Exact and sampled Shapley values of a weighted voting game.
/// `weights` is a comma-separated list.
pub fn shapley_json(
    weights: &str,
    quota: f64,
    permutations: usize,
    seed_value: u64,
) -> Result<String, String> {
    let weights: Vec<f64> = weights
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| format!("`{s}` is not a number"))
        })
        .collect::<Result<_, _>>()?;
    if weights.is_empty() {
        return Err("enter at least one weight".into());
    }
    let game = VotingGame { weights, quota };
    let (exact, exact_evaluations) = if game.n_players() <= DEMO_EXACT_LIMIT {
        let counted = CountingGame::new(&game);
        let phi = shapley_exact(&counted).map_err(err)?;
        (Some(phi), counted.value_evaluations())
    } else {
        (None, 0)
    };
    let counted = CountingGame::new(&game);
    let sampled = shapley_mc(&counted, permutations.max(1), seed_value).map_err(err)?;
    let players = sampled
        .iter()
        .enumerate()
        .map(|(i, s)| PlayerShare {
            weight: game.weights[i],
            exact: exact.as_ref().map(|e| e[i].phi),
            sampled: s.phi,
            stderr: s.stderr,
        })
        .collect();
    serde_json::to_string(&ShapleyDemo {
        quota,
        players,
        exact_evaluations,
        sampled_evaluations: counted.value_evaluations(),
    })
    .map_err(err)
}

#[derive(Debug, Deserialize)]
struct Neighbor {
    /// Offset east of the center.
    dx: f64,
    /// Offset north of the center.
    dy: f64,
    phi: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SectorDemo {
    pub dir: String,
    pub pos: f64,
    pub neg: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GlyphDemo {
    pub sectors: Vec<SectorDemo>,
    pub total_phi: f64,
    pub net: f64,
}

/// Radar glyph sectors for neighbors given as `[{dx, dy, phi}]`.
pub fn glyph_json(neighbors: &str) -> Result<String, String> {
    let list: Vec<Neighbor> = serde_json::from_str(neighbors).map_err(err)?;
    let mut sectors: Vec<SectorDemo> = SECTOR_NAMES
        .iter()
        .map(|d| SectorDemo {
            dir: d.to_string(),
            pos: 0.0,
            neg: 0.0,
        })
        .collect();
    let origin = Point::new(0.0, 0.0);
    for n in &list {
        let s = sector_of(origin, Point::new(n.dx, n.dy)).unwrap_or(0);
        if n.phi >= 0.0 {
            sectors[s].pos += n.phi;
        } else {
            sectors[s].neg -= n.phi;
        }
    }
    let net = sectors.iter().map(|s| s.pos - s.neg).sum();
    serde_json::to_string(&GlyphDemo {
        total_phi: list.iter().map(|n| n.phi).sum(),
        net,
        sectors,
    })
    .map_err(err)
}

#[wasm_bindgen]
pub fn partition_demo(points: u32, k: u32, seed: u32) -> Result<String, JsValue> {
    partition_json(points as usize, k as usize, seed as u64).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn shapley_demo(
    weights: &str,
    quota: f64,
    permutations: u32,
    seed: u32,
) -> Result<String, JsValue> {
    shapley_json(weights, quota, permutations as usize, seed as u64)
        .map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn glyph_demo(neighbors: &str) -> Result<String, JsValue> {
    glyph_json(neighbors).map_err(|e| JsValue::from_str(&e))
}
