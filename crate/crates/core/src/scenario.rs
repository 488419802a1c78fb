//! A loaded scenario and the JSON documents computed from it.
//!
//! The HTTP service and the command line tool both answer through
//! [`Scenario::answer`], so identical queries give byte-identical bodies.

use std::fs;
use std::io::BufReader;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{hex, Config};
use crate::explain::{
    cluster_game, grid_game, sector_summary, shapley_auto, time_channel_report,
    trajectory_attributions, Attribution, CoalitionGame, ExplainContext, FlowKind, GlyphSummary,
    HistoricalMeanMasker, Method, SectorMagnitude, TimeChannel, TrajectoryAttribution,
    GLYPH_POINTS,
};
use crate::grid::{BBox, Cell, GridSpec};
use crate::partition::{build_partition, parse_intersections, ClusterPartition, Intersection};
use crate::predict::{rolling_forecast, train, Predictor, WINDOW_LEN};
use crate::seed;
use crate::trajdata::{
    build_flow_tensor, parse_trajectories, FlowTensor, ParseReport, RasterStats, TrajectoryStore,
};
use crate::{Error, Result};

pub const FLOWS_FILE: &str = "flows.tpft";
pub const PARTITION_FILE: &str = "partition.json";
pub const MODEL_FILE: &str = "model.tprm";

fn open(path: Option<&Path>, what: &str, stage: &str) -> Result<BufReader<fs::File>> {
    let path = path.ok_or_else(|| Error::config(format!("no {what} file configured")))?;
    match fs::File::open(path) {
        Ok(f) => Ok(BufReader::new(f)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(Error::NotFound(format!(
            "{what} file {} is missing; run `{stage}` first",
            path.display()
        ))),
        Err(e) => Err(Error::input(format!("cannot read {}: {e}", path.display()))),
    }
}

pub fn load_trajectories(config: &Config) -> Result<(TrajectoryStore, ParseReport)> {
    let r = open(config.trajectories.as_deref(), "trajectory", "gen-synth")?;
    let (store, report) = parse_trajectories(r)?;
    if report.malformed > 0 {
        log::warn!("{} malformed trajectory lines skipped", report.malformed);
    }
    Ok((store, report))
}

pub fn load_intersections(config: &Config) -> Result<Vec<Intersection>> {
    parse_intersections(open(
        config.intersections.as_deref(),
        "intersection",
        "gen-synth",
    )?)
}

/// Grid from the configured box, or from the extent of the intersections.
pub fn resolve_grid(config: &Config, intersections: &[Intersection]) -> Result<GridSpec> {
    let bbox = match config.bbox {
        Some(b) => b,
        None => {
            let Some(first) = intersections.first() else {
                return Err(Error::config(
                    "bbox is not set and there are no intersections to derive it from",
                ));
            };
            intersections.iter().fold(
                BBox::new(first.lon, first.lat, first.lon, first.lat),
                |b, i| {
                    BBox::new(
                        b.lon_min.min(i.lon),
                        b.lat_min.min(i.lat),
                        b.lon_max.max(i.lon),
                        b.lat_max.max(i.lat),
                    )
                },
            )
        }
    };
    GridSpec::new(bbox, config.grid_rows, config.grid_cols)
}

/// `(t0, n_intervals)` from the config, filling gaps from the data.
pub fn resolve_axis(config: &Config, store: &TrajectoryStore) -> Result<(i64, usize)> {
    let step = config.interval_seconds as i64;
    let range = store.time_range;
    let t0 = match (config.t0, range) {
        (Some(t0), _) => t0,
        (None, Some((lo, _))) => lo - lo.rem_euclid(step),
        (None, None) => {
            return Err(Error::config(
                "t0 is not set and there are no trajectories to derive it from",
            ))
        }
    };
    let n = match (config.n_intervals, range) {
        (Some(n), _) => n,
        (None, Some((_, hi))) if hi >= t0 => ((hi - t0) / step + 1) as usize,
        _ => {
            return Err(Error::config(
                "n_intervals is not set and cannot be derived from the data",
            ))
        }
    };
    Ok((t0, n))
}

/// Reads a stage output; a missing file names the stage that writes it.
pub fn read_artifact(dir: &Path, name: &str, stage: &str) -> Result<Vec<u8>> {
    let p = dir.join(name);
    fs::read(&p).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => {
            Error::NotFound(format!("{} is missing; run `{stage}` first", p.display()))
        }
        _ => Error::input(format!("cannot read {}: {e}", p.display())),
    })
}

/// Grid from the configured box, or from the intersection extent.
pub fn config_grid(config: &Config) -> Result<GridSpec> {
    match config.bbox {
        Some(b) => GridSpec::new(b, config.grid_rows, config.grid_cols),
        None => resolve_grid(config, &load_intersections(config)?),
    }
}

/// Builds the partition stage from config alone.
pub fn partition_stage(config: &Config) -> Result<(GridSpec, ClusterPartition)> {
    let intersections = load_intersections(config)?;
    let grid = resolve_grid(config, &intersections)?;
    let p = build_partition(
        &grid,
        &intersections,
        config.k,
        config.seed,
        config.kmeans_max_iter,
    )?;
    Ok((grid, p))
}

fn train_range(config: &Config, tensor: &FlowTensor) -> std::ops::Range<usize> {
    config
        .train_range
        .clone()
        .unwrap_or(0..tensor.n_intervals())
}

pub fn train_stage(
    config: &Config,
    tensor: &FlowTensor,
    partition: &ClusterPartition,
) -> Result<Predictor> {
    train(
        &config.predictor,
        tensor,
        train_range(config, tensor),
        &partition.cell_groups(),
    )
}

/// A request answered with a JSON document.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Query {
    Meta,
    Flows {
        t: usize,
    },
    Trajectories {
        t: usize,
    },
    Forecast {
        base: usize,
    },
    Clusters,
    Glyphs {
        base: usize,
        h: Option<usize>,
    },
    ClusterAttribution {
        cluster: usize,
        base: usize,
        h: Option<usize>,
    },
    GridAttribution {
        row: usize,
        col: usize,
        base: usize,
        h: Option<usize>,
    },
}

impl Query {
    /// Stable cache key.
    pub fn key(&self) -> String {
        let h = |h: &Option<usize>| h.map(|v| v.to_string()).unwrap_or_else(|| "-".into());
        match self {
            Query::Meta => "meta".into(),
            Query::Flows { t } => format!("flows/{t}"),
            Query::Trajectories { t } => format!("trajectories/{t}"),
            Query::Forecast { base } => format!("forecast/{base}"),
            Query::Clusters => "clusters".into(),
            Query::Glyphs { base, h: hh } => format!("glyphs/{base}/{}", h(hh)),
            Query::ClusterAttribution {
                cluster,
                base,
                h: hh,
            } => format!("cluster/{cluster}/{base}/{}", h(hh)),
            Query::GridAttribution {
                row,
                col,
                base,
                h: hh,
            } => format!("grid/{row}/{col}/{base}/{}", h(hh)),
        }
    }

    /// Whether answering may take long enough to deserve a poll token.
    pub fn is_heavy(&self) -> bool {
        matches!(
            self,
            Query::Glyphs { .. } | Query::ClusterAttribution { .. } | Query::GridAttribution { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaDoc {
    pub rows: usize,
    pub cols: usize,
    pub bbox: BBox,
    pub t0: i64,
    pub interval_seconds: u32,
    pub n_intervals: usize,
    /// First and last fix time; `None` without trajectories.
    pub time_range: Option<[i64; 2]>,
    /// Smallest and largest valid forecast base.
    pub base_range: Option<[usize; 2]>,
    pub k: usize,
    pub horizons: usize,
    pub interpreted_horizon: usize,
    pub predictor: String,
    pub explain_flow: FlowKind,
    pub trajectories: usize,
    pub max_inflow: u32,
    pub max_outflow: u32,
    pub fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowsDoc {
    pub interval: usize,
    pub t_start: i64,
    pub t_end: i64,
    pub rows: usize,
    pub cols: usize,
    /// Row-major, row 0 north.
    pub inflow: Vec<u32>,
    pub outflow: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polyline {
    pub order_id: String,
    pub vehicle_id: String,
    /// `[t, lon, lat]`, ascending in time.
    pub points: Vec<(i64, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoriesDoc {
    pub interval: usize,
    pub t_start: i64,
    pub t_end: i64,
    /// Sorted by order id.
    pub trajectories: Vec<Polyline>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastFrameDoc {
    pub horizon: usize,
    pub t_start: i64,
    pub inflow: Vec<f64>,
    pub outflow: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastDoc {
    pub base: usize,
    pub rows: usize,
    pub cols: usize,
    pub clamped: usize,
    /// Horizons 1..=H.
    pub frames: Vec<ForecastFrameDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlyphsDoc {
    pub base: usize,
    pub highlighted: usize,
    /// By cluster id.
    pub glyphs: Vec<GlyphSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAttributionDoc {
    pub cluster: usize,
    pub base: usize,
    pub horizon: usize,
    pub flow: FlowKind,
    /// No neighbors: nothing to attribute.
    pub degenerate: bool,
    pub method: Method,
    /// Predicted total with every neighbor masked.
    pub baseline: f64,
    /// Predicted total from observed inputs.
    pub prediction: f64,
    /// By neighbor cluster id.
    pub attributions: Vec<Attribution>,
    pub sectors: Vec<SectorMagnitude>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryAttributionReport {
    pub cell: Cell,
    pub base: usize,
    pub horizon: usize,
    pub flow: FlowKind,
    pub method: Method,
    /// Trajectories found before capping.
    pub candidates: usize,
    pub baseline: f64,
    pub prediction: f64,
    /// At most five, by |phi| descending then player id.
    pub top: Vec<TrajectoryAttribution>,
    /// The top trajectories' fixes inside the input window, in `top` order.
    pub top_polylines: Vec<Polyline>,
    /// Lookback buckets 0-10, 10-20, ... 40-50 minutes before the window end.
    pub time_channels: Vec<TimeChannel>,
    /// Every player, by candidate rank.
    pub players: Vec<TrajectoryAttribution>,
}

/// Loaded data plus every derived stage, immutable once built.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: Config,
    pub grid: GridSpec,
    pub store: TrajectoryStore,
    pub tensor: FlowTensor,
    pub raster: Option<RasterStats>,
    pub partition: ClusterPartition,
    pub predictor: Predictor,
    pub masker: HistoricalMeanMasker,
    pub fingerprint: String,
}

impl Scenario {
    /// Runs every stage from the raw data files.
    pub fn build(config: Config) -> Result<Self> {
        let (store, _) = load_trajectories(&config)?;
        let (grid, partition) = partition_stage(&config)?;
        let (t0, n) = resolve_axis(&config, &store)?;
        let (tensor, raster) = build_flow_tensor(&store, &grid, config.interval_seconds, t0, n)?;
        let predictor = train_stage(&config, &tensor, &partition)?;
        Ok(Scenario::assemble(
            config,
            store,
            tensor,
            Some(raster),
            partition,
            predictor,
        ))
    }

    /// Loads stage outputs from `dir` instead of recomputing them. The
    /// trajectory file is still read for trajectory-level attribution.
    pub fn from_artifacts(config: Config, dir: &Path) -> Result<Self> {
        let read = |name: &str, stage: &str| read_artifact(dir, name, stage);
        let partition_bytes = read(PARTITION_FILE, "partition")?;
        let flows = read(FLOWS_FILE, "ingest")?;
        let model = read(MODEL_FILE, "train")?;
        let (store, _) = load_trajectories(&config)?;
        let partition: ClusterPartition = serde_json::from_slice(&partition_bytes)
            .map_err(|e| Error::format(format!("{PARTITION_FILE}: {e}")))?;
        let (lon_c, lat_c) = (partition.projection.lon_c, partition.projection.lat_c);
        let grid = config_grid(&config)?;
        let (gc_lon, gc_lat) = grid.bbox.center();
        if gc_lon != lon_c || gc_lat != lat_c {
            return Err(Error::format(format!(
                "{PARTITION_FILE} was built for a different bounding box"
            )));
        }
        partition.check_grid(&grid)?;
        let tensor = FlowTensor::from_bytes(&flows, &grid)?;
        let predictor = Predictor::from_bytes(&model)?;
        if predictor.spec.kind != config.predictor.kind {
            return Err(Error::config(format!(
                "{MODEL_FILE} holds a {} predictor but the config asks for {}; rerun `train`",
                predictor.spec.kind.as_str(),
                config.predictor.kind.as_str()
            )));
        }
        Ok(Scenario::assemble(
            config, store, tensor, None, partition, predictor,
        ))
    }

    fn assemble(
        config: Config,
        store: TrajectoryStore,
        tensor: FlowTensor,
        raster: Option<RasterStats>,
        partition: ClusterPartition,
        predictor: Predictor,
    ) -> Self {
        let masker = HistoricalMeanMasker::fit(&tensor, train_range(&config, &tensor));
        let mut h = Sha256::new();
        h.update(config.hash().as_bytes());
        h.update(tensor.to_bytes());
        h.update(predictor.to_bytes());
        h.update(serde_json::to_vec(&partition).unwrap_or_default());
        let fingerprint = hex(&h.finalize()[..8]);
        Scenario {
            config,
            grid: tensor.grid,
            store,
            tensor,
            raster,
            partition,
            predictor,
            masker,
            fingerprint,
        }
    }

    pub fn context(&self) -> ExplainContext<'_> {
        ExplainContext {
            tensor: &self.tensor,
            partition: &self.partition,
            predictor: &self.predictor,
        }
    }

    fn check_interval(&self, t: usize) -> Result<()> {
        if t >= self.tensor.n_intervals() {
            return Err(Error::NotFound(format!(
                "interval {t} is outside 0..{}",
                self.tensor.n_intervals()
            )));
        }
        Ok(())
    }

    fn check_base(&self, base: usize) -> Result<()> {
        self.check_interval(base)?;
        if base + 1 < WINDOW_LEN {
            return Err(Error::config(format!(
                "base must be at least {}",
                WINDOW_LEN - 1
            )));
        }
        Ok(())
    }

    fn horizon(&self, h: Option<usize>) -> Result<usize> {
        let h = h.unwrap_or(self.config.interpreted_horizon);
        if h == 0 || h > self.config.horizons {
            return Err(Error::config(format!(
                "horizon must be in 1..={}",
                self.config.horizons
            )));
        }
        Ok(h)
    }

    pub fn meta(&self) -> MetaDoc {
        let n = self.tensor.n_intervals();
        MetaDoc {
            rows: self.grid.rows,
            cols: self.grid.cols,
            bbox: self.grid.bbox,
            t0: self.tensor.axis.t0,
            interval_seconds: self.tensor.axis.interval_seconds,
            n_intervals: n,
            time_range: self.store.time_range.map(|(a, b)| [a, b]),
            base_range: (n >= WINDOW_LEN).then(|| [WINDOW_LEN - 1, n - 1]),
            k: self.partition.k,
            horizons: self.config.horizons,
            interpreted_horizon: self.config.interpreted_horizon,
            predictor: self.predictor.kind().as_str().to_string(),
            explain_flow: self.config.explain_flow,
            trajectories: self.store.len(),
            max_inflow: self.tensor.inflow.iter().copied().max().unwrap_or(0),
            max_outflow: self.tensor.outflow.iter().copied().max().unwrap_or(0),
            fingerprint: self.fingerprint.clone(),
        }
    }

    pub fn flows(&self, t: usize) -> Result<FlowsDoc> {
        self.check_interval(t)?;
        let n = self.grid.n_cells();
        let axis = self.tensor.axis;
        Ok(FlowsDoc {
            interval: t,
            t_start: axis.start_of(t),
            t_end: axis.end_of(t),
            rows: self.grid.rows,
            cols: self.grid.cols,
            inflow: self.tensor.inflow[t * n..(t + 1) * n].to_vec(),
            outflow: self.tensor.outflow[t * n..(t + 1) * n].to_vec(),
        })
    }

    fn polylines_between<'a>(
        &'a self,
        records: impl Iterator<Item = &'a crate::trajdata::TrajectoryRecord>,
        lo: i64,
        hi: i64,
    ) -> Vec<Polyline> {
        records
            .filter_map(|r| {
                let points: Vec<(i64, f64, f64)> = r
                    .points
                    .iter()
                    .filter(|p| p.t >= lo && p.t < hi)
                    .map(|p| (p.t, p.lon, p.lat))
                    .collect();
                (!points.is_empty()).then(|| Polyline {
                    order_id: r.order_id.clone(),
                    vehicle_id: r.vehicle_id.clone(),
                    points,
                })
            })
            .collect()
    }

    pub fn trajectories(&self, t: usize) -> Result<TrajectoriesDoc> {
        self.check_interval(t)?;
        let axis = self.tensor.axis;
        let (lo, hi) = (axis.start_of(t), axis.end_of(t));
        Ok(TrajectoriesDoc {
            interval: t,
            t_start: lo,
            t_end: hi,
            trajectories: self.polylines_between(self.store.records.iter(), lo, hi),
        })
    }

    pub fn forecast(&self, base: usize) -> Result<ForecastDoc> {
        self.check_base(base)?;
        let f = rolling_forecast(&self.predictor, &self.tensor, base, self.config.horizons)?;
        let axis = self.tensor.axis;
        Ok(ForecastDoc {
            base,
            rows: self.grid.rows,
            cols: self.grid.cols,
            clamped: f.clamped,
            frames: f
                .frames
                .into_iter()
                .enumerate()
                .map(|(i, fr)| ForecastFrameDoc {
                    horizon: i + 1,
                    t_start: axis.start_of(base + i + 1),
                    inflow: fr.inflow,
                    outflow: fr.outflow,
                })
                .collect(),
        })
    }

    /// Neighbor attributions of `cluster`, `None` when it has no neighbors.
    /// Returns `(attributions, v(∅), v(N))`.
    fn cluster_shapley(
        &self,
        cluster: usize,
        base: usize,
        h: usize,
    ) -> Result<Option<(Vec<Attribution>, f64, f64)>> {
        let game = match cluster_game(
            self.context(),
            cluster,
            base,
            h,
            &self.masker,
            self.config.explain_flow,
        ) {
            Ok(g) => g,
            Err(Error::Degenerate(_)) => return Ok(None),
            Err(e) => return Err(e),
        };
        let s = seed::derive(
            self.config.seed,
            &[
                seed::label("cluster"),
                cluster as u64,
                base as u64,
                h as u64,
            ],
        );
        let phi = shapley_auto(
            &game,
            self.config.exact_player_limit,
            self.config.mc_permutations,
            s,
        )?;
        let full = game.value(&vec![true; game.n_players()]);
        Ok(Some((phi, game.baseline(), full)))
    }

    fn pairs(&self, cluster: usize, phi: &[Attribution]) -> Vec<(usize, f64)> {
        self.partition
            .neighbors(cluster)
            .iter()
            .copied()
            .zip(phi.iter().map(|a| a.phi))
            .collect()
    }

    pub fn cluster_attribution(
        &self,
        cluster: usize,
        base: usize,
        h: Option<usize>,
    ) -> Result<ClusterAttributionDoc> {
        if cluster >= self.partition.k {
            return Err(Error::NotFound(format!("cluster {cluster} does not exist")));
        }
        self.check_base(base)?;
        let h = self.horizon(h)?;
        let flow = self.config.explain_flow;
        let doc = match self.cluster_shapley(cluster, base, h)? {
            Some((phi, baseline, prediction)) => ClusterAttributionDoc {
                cluster,
                base,
                horizon: h,
                flow,
                degenerate: false,
                method: phi.first().map_or(Method::Exact, |a| a.method),
                baseline,
                prediction,
                sectors: sector_summary(&self.partition, cluster, &self.pairs(cluster, &phi)),
                attributions: phi,
            },
            None => {
                let f = rolling_forecast(&self.predictor, &self.tensor, base, h)?;
                let frame = &f.frames[h - 1];
                let values = match flow {
                    FlowKind::Inflow => &frame.inflow,
                    FlowKind::Outflow => &frame.outflow,
                };
                let total = self
                    .partition
                    .cells_of(cluster)
                    .iter()
                    .map(|&c| values[c])
                    .sum();
                ClusterAttributionDoc {
                    cluster,
                    base,
                    horizon: h,
                    flow,
                    degenerate: true,
                    method: Method::Exact,
                    baseline: total,
                    prediction: total,
                    attributions: Vec::new(),
                    sectors: sector_summary(&self.partition, cluster, &[]),
                }
            }
        };
        Ok(doc)
    }

    pub fn glyphs(&self, base: usize, h: Option<usize>) -> Result<GlyphsDoc> {
        self.check_base(base)?;
        let h = self.horizon(h)?;
        if h > GLYPH_POINTS {
            return Err(Error::config(format!(
                "glyphs highlight horizons 1..={GLYPH_POINTS}"
            )));
        }
        let forecast = rolling_forecast(
            &self.predictor,
            &self.tensor,
            base,
            self.config.horizons.max(GLYPH_POINTS),
        )?;
        let one = |c: usize| -> Result<Option<Vec<(usize, f64)>>> {
            Ok(self
                .cluster_shapley(c, base, h)?
                .map(|(phi, _, _)| self.pairs(c, &phi)))
        };
        #[cfg(feature = "parallel")]
        let per_cluster: Result<Vec<_>> = {
            use rayon::prelude::*;
            (0..self.partition.k).into_par_iter().map(one).collect()
        };
        #[cfg(not(feature = "parallel"))]
        let per_cluster: Result<Vec<_>> = (0..self.partition.k).map(one).collect();
        Ok(GlyphsDoc {
            base,
            highlighted: h,
            glyphs: crate::explain::glyph_summaries(&self.partition, &forecast, &per_cluster?, h)?,
        })
    }

    pub fn grid_attribution(
        &self,
        row: usize,
        col: usize,
        base: usize,
        h: Option<usize>,
    ) -> Result<TrajectoryAttributionReport> {
        let cell = Cell { row, col };
        if !self.grid.contains_cell(cell) {
            return Err(Error::NotFound(format!(
                "cell ({row}, {col}) is outside the grid"
            )));
        }
        self.check_base(base)?;
        let h = self.horizon(h)?;
        let game = grid_game(
            self.context(),
            &self.store,
            cell,
            base,
            h,
            self.config.candidate_cap,
            FlowKind::Inflow,
        )?;
        let s = seed::derive(
            self.config.seed,
            &[
                seed::label("grid"),
                row as u64,
                col as u64,
                base as u64,
                h as u64,
            ],
        );
        let phi = shapley_auto(
            &game,
            self.config.exact_player_limit,
            self.config.mc_permutations,
            s,
        )?;
        let timed: Vec<(Attribution, usize, f64)> = phi
            .iter()
            .zip(&game.candidates)
            .map(|(a, c)| (a.clone(), c.events, c.last_event_t))
            .collect();
        let axis = self.tensor.axis;
        let window_end = axis.end_of(base);
        let report = time_channel_report(&timed, window_end as f64, axis.interval_seconds);
        let players = trajectory_attributions(&timed, window_end as f64, axis.interval_seconds);
        let window_start = axis.start_of(base + 1 - WINDOW_LEN);
        let top_polylines = report
            .top
            .iter()
            .filter_map(|t| self.store.get(&t.attribution.player))
            .collect::<Vec<_>>();
        Ok(TrajectoryAttributionReport {
            cell,
            base,
            horizon: h,
            flow: FlowKind::Inflow,
            method: phi.first().map_or(Method::Exact, |a| a.method),
            candidates: game.uncapped,
            baseline: game.baseline(),
            prediction: game.value(&vec![true; game.n_players()]),
            top_polylines: self.polylines_between(
                top_polylines.into_iter(),
                window_start,
                window_end,
            ),
            top: report.top,
            time_channels: report.time_channels,
            players,
        })
    }

    /// Serialized answer to `query`.
    pub fn answer(&self, query: &Query) -> Result<String> {
        match *query {
            Query::Meta => to_json(&self.meta()),
            Query::Flows { t } => to_json(&self.flows(t)?),
            Query::Trajectories { t } => to_json(&self.trajectories(t)?),
            Query::Forecast { base } => to_json(&self.forecast(base)?),
            Query::Clusters => to_json(&self.partition),
            Query::Glyphs { base, h } => to_json(&self.glyphs(base, h)?),
            Query::ClusterAttribution { cluster, base, h } => {
                to_json(&self.cluster_attribution(cluster, base, h)?)
            }
            Query::GridAttribution { row, col, base, h } => {
                to_json(&self.grid_attribution(row, col, base, h)?)
            }
        }
    }
}

/// Canonical compact JSON used for every served and written document.
pub fn to_json<T: Serialize>(doc: &T) -> Result<String> {
    serde_json::to_string(doc).map_err(|e| Error::format(format!("serialization failed: {e}")))
}
