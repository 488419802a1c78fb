//! The two attribution games: neighbor clusters explaining a cluster's
//! forecast, and trajectories explaining a cell's forecast.

use serde::{Deserialize, Serialize};

use crate::grid::Cell;
use crate::partition::ClusterPartition;
use crate::predict::{observed_window, FlowFrame, Predictor, WINDOW_LEN};
use crate::trajdata::{trajectory_events, FlowTensor, TrajectoryStore};
use crate::{Error, Result};

use super::masker::Masker;
use super::shapley::CoalitionGame;

/// Default cap on trajectory players per cell.
pub const DEFAULT_CANDIDATE_CAP: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowKind {
    #[default]
    Inflow,
    Outflow,
}

impl FlowKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "inflow" => Some(FlowKind::Inflow),
            "outflow" => Some(FlowKind::Outflow),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            FlowKind::Inflow => "inflow",
            FlowKind::Outflow => "outflow",
        }
    }

    fn pick<'f>(&self, f: &'f FlowFrame) -> &'f [f64] {
        match self {
            FlowKind::Inflow => &f.inflow,
            FlowKind::Outflow => &f.outflow,
        }
    }
}

/// Everything the games read. Nothing here is mutated; games work on copies
/// of the input window.
#[derive(Debug, Clone, Copy)]
pub struct ExplainContext<'a> {
    pub tensor: &'a FlowTensor,
    pub partition: &'a ClusterPartition,
    pub predictor: &'a Predictor,
}

fn check_horizon(h: usize) -> Result<()> {
    if h == 0 {
        return Err(Error::config("horizon must be at least 1"));
    }
    Ok(())
}

fn predicted_total(
    predictor: &Predictor,
    tensor: &FlowTensor,
    window: Vec<FlowFrame>,
    base: usize,
    horizon: usize,
    flow: FlowKind,
    cells: &[usize],
) -> Result<f64> {
    let frame = predictor.rollout_frame(window, tensor, base, horizon, cells)?;
    let values = flow.pick(&frame);
    Ok(cells.iter().map(|&c| values[c]).sum())
}

/// Players are the clusters adjacent to the target; `v(S)` is the target's
/// total predicted flow at the horizon when every neighbor outside `S` has
/// its input-window flows replaced by the masker baseline.
pub struct ClusterGame<'a> {
    pub cluster: usize,
    pub base: usize,
    pub horizon: usize,
    pub flow: FlowKind,
    /// Neighbor cluster ids, ascending.
    pub players: Vec<usize>,
    predictor: &'a Predictor,
    tensor: &'a FlowTensor,
    target_cells: Vec<usize>,
    player_cells: Vec<Vec<usize>>,
    window: Vec<FlowFrame>,
    // per player, [frame][member cell] baseline (in, out)
    masked: Vec<Vec<(f64, f64)>>,
}

pub fn cluster_game<'a>(
    ctx: ExplainContext<'a>,
    cluster: usize,
    base: usize,
    horizon: usize,
    masker: &dyn Masker,
    flow: FlowKind,
) -> Result<ClusterGame<'a>> {
    if cluster >= ctx.partition.k {
        return Err(Error::NotFound(format!("cluster {cluster} does not exist")));
    }
    check_horizon(horizon)?;
    let window = observed_window(ctx.tensor, base)?;
    let players = ctx.partition.neighbors(cluster).to_vec();
    if players.is_empty() {
        return Err(Error::Degenerate(format!(
            "cluster {cluster} has no neighboring clusters"
        )));
    }
    let player_cells: Vec<Vec<usize>> =
        players.iter().map(|&p| ctx.partition.cells_of(p)).collect();
    let first = base + 1 - WINDOW_LEN;
    let masked = player_cells
        .iter()
        .map(|cells| {
            (0..WINDOW_LEN)
                .flat_map(|f| cells.iter().map(move |&c| masker.baseline(first + f, c)))
                .collect()
        })
        .collect();
    let game = ClusterGame {
        cluster,
        base,
        horizon,
        flow,
        players,
        predictor: ctx.predictor,
        tensor: ctx.tensor,
        target_cells: ctx.partition.cells_of(cluster),
        player_cells,
        window,
        masked,
    };
    // surface predictor errors here rather than inside value()
    game.try_value(&vec![true; game.players.len()])?;
    Ok(game)
}

impl ClusterGame<'_> {
    fn try_value(&self, members: &[bool]) -> Result<f64> {
        let mut w = self.window.clone();
        for (p, present) in members.iter().enumerate() {
            if *present {
                continue;
            }
            let cells = &self.player_cells[p];
            for (f, frame) in w.iter_mut().enumerate() {
                for (k, &c) in cells.iter().enumerate() {
                    let (vi, vo) = self.masked[p][f * cells.len() + k];
                    frame.inflow[c] = vi;
                    frame.outflow[c] = vo;
                }
            }
        }
        predicted_total(
            self.predictor,
            self.tensor,
            w,
            self.base,
            self.horizon,
            self.flow,
            &self.target_cells,
        )
    }
}

impl CoalitionGame for ClusterGame<'_> {
    fn n_players(&self) -> usize {
        self.players.len()
    }

    fn player_id(&self, i: usize) -> String {
        self.players[i].to_string()
    }

    fn value(&self, members: &[bool]) -> f64 {
        self.try_value(members)
            .expect("validated when the game was built")
    }
}

/// A trajectory that can influence a cell's forecast.
#[derive(Debug, Clone, PartialEq)]
pub struct GridCandidate {
    pub id: String,
    /// Crossing events touching the prediction locality inside the window.
    pub events: usize,
    /// Time of the last such event.
    pub last_event_t: f64,
    // (window frame, cell, inflow delta, outflow delta)
    contrib: Vec<(usize, usize, f64, f64)>,
}

/// Players are the trajectories crossing the cell's input locality during
/// the input window (strongest first, capped); `v(S)` is the cell's predicted
/// flow when the window is re-rasterized with only the coalition's candidate
/// trajectories. Non-candidate trajectories always stay in.
pub struct GridGame<'a> {
    pub cell: Cell,
    pub base: usize,
    pub horizon: usize,
    pub flow: FlowKind,
    pub candidates: Vec<GridCandidate>,
    /// Candidates found before the cap was applied.
    pub uncapped: usize,
    predictor: &'a Predictor,
    tensor: &'a FlowTensor,
    cell_index: usize,
    window: Vec<FlowFrame>,
}

pub fn grid_game<'a>(
    ctx: ExplainContext<'a>,
    store: &TrajectoryStore,
    cell: Cell,
    base: usize,
    horizon: usize,
    cap: usize,
    flow: FlowKind,
) -> Result<GridGame<'a>> {
    let grid = &ctx.tensor.grid;
    if !grid.contains_cell(cell) {
        return Err(Error::NotFound(format!(
            "cell ({}, {}) is outside the grid",
            cell.row, cell.col
        )));
    }
    check_horizon(horizon)?;
    let window = observed_window(ctx.tensor, base)?;
    let cell_index = grid.index(cell);
    let mut in_locality = vec![false; grid.n_cells()];
    for c in ctx.predictor.input_locality(cell_index) {
        in_locality[c] = true;
    }
    let axis = ctx.tensor.axis;
    let first = base + 1 - WINDOW_LEN;
    let (t_lo, t_hi) = (axis.start_of(first), axis.end_of(base));

    let scan = |r: &crate::trajdata::TrajectoryRecord| -> Option<GridCandidate> {
        let (a, b) = (r.points.first()?.t, r.points.last()?.t);
        if b < t_lo || a >= t_hi {
            return None;
        }
        let mut events = 0;
        let mut last = f64::NEG_INFINITY;
        let mut contrib = Vec::new();
        for e in trajectory_events(r, grid) {
            let Some(k) = axis.interval_of(e.t).filter(|k| (first..=base).contains(k)) else {
                continue;
            };
            let f = k - first;
            let touches = [e.from, e.to]
                .iter()
                .flatten()
                .any(|c| in_locality[grid.index(*c)]);
            if touches {
                events += 1;
                last = last.max(e.t);
            }
            if let Some(c) = e.from {
                contrib.push((f, grid.index(c), 0.0, 1.0));
            }
            if let Some(c) = e.to {
                contrib.push((f, grid.index(c), 1.0, 0.0));
            }
        }
        (events > 0).then(|| GridCandidate {
            id: r.order_id.clone(),
            events,
            last_event_t: last,
            contrib,
        })
    };
    #[cfg(feature = "parallel")]
    let mut candidates: Vec<GridCandidate> = {
        use rayon::prelude::*;
        store.records.par_iter().filter_map(scan).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let mut candidates: Vec<GridCandidate> = store.records.iter().filter_map(scan).collect();

    candidates.sort_by(|a, b| b.events.cmp(&a.events).then(a.id.cmp(&b.id)));
    let uncapped = candidates.len();
    candidates.truncate(cap);
    let game = GridGame {
        cell,
        base,
        horizon,
        flow,
        candidates,
        uncapped,
        predictor: ctx.predictor,
        tensor: ctx.tensor,
        cell_index,
        window,
    };
    game.try_value(&vec![true; game.candidates.len()])?;
    Ok(game)
}

impl GridGame<'_> {
    fn try_value(&self, members: &[bool]) -> Result<f64> {
        let mut w = self.window.clone();
        for (cand, present) in self.candidates.iter().zip(members) {
            if *present {
                continue;
            }
            for &(f, c, din, dout) in &cand.contrib {
                w[f].inflow[c] -= din;
                w[f].outflow[c] -= dout;
            }
        }
        predicted_total(
            self.predictor,
            self.tensor,
            w,
            self.base,
            self.horizon,
            self.flow,
            &[self.cell_index],
        )
    }
}

impl CoalitionGame for GridGame<'_> {
    fn n_players(&self) -> usize {
        self.candidates.len()
    }

    fn player_id(&self, i: usize) -> String {
        self.candidates[i].id.clone()
    }

    fn value(&self, members: &[bool]) -> f64 {
        self.try_value(members)
            .expect("validated when the game was built")
    }
}
