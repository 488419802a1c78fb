//! Plain-text `key = value` configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Every key may be
//! overridden by an environment variable `FLOWSHAP_<KEY>` (upper case).
//! Relative paths are resolved against the directory of the config file.
//! All problems are collected and reported together.

use std::fmt::Write as _;
use std::ops::Range;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::explain::{
    FlowKind, DEFAULT_CANDIDATE_CAP, DEFAULT_MC_PERMUTATIONS, EXACT_PLAYER_LIMIT,
};
use crate::grid::BBox;
use crate::partition::{DEFAULT_GRID_COLS, DEFAULT_GRID_ROWS, DEFAULT_K, DEFAULT_KMEANS_MAX_ITER};
use crate::predict::{PredictorKind, PredictorSpec};
use crate::trajdata::DEFAULT_INTERVAL_SECONDS;
use crate::{Error, Result};

pub const ENV_PREFIX: &str = "FLOWSHAP_";

/// Default file name of the configuration written next to generated data.
pub const CONFIG_FILE_NAME: &str = "flowshap.conf";

/// Documented keys in rendering order.
pub const KEYS: &[(&str, &str)] = &[
    (
        "trajectories",
        "trajectory CSV `driver_id,order_id,timestamp,lon,lat`",
    ),
    ("intersections", "intersection CSV `node_id,lon,lat`"),
    (
        "artifacts",
        "directory holding flows.tpft, partition.json and model.tprm (optional)",
    ),
    (
        "bbox",
        "lon_min,lat_min,lon_max,lat_max (default: extent of the intersections)",
    ),
    ("grid_rows", "grid rows"),
    ("grid_cols", "grid columns"),
    ("k", "number of intersection clusters"),
    ("kmeans_max_iter", "Lloyd iteration cap"),
    ("interval_seconds", "flow interval length"),
    (
        "t0",
        "epoch seconds of interval 0 (default: first fix, floored to the interval)",
    ),
    (
        "n_intervals",
        "interval count (default: cover the last fix)",
    ),
    ("predictor", "persistence | historical_average | ridge"),
    ("ridge_lambda", "ridge regularization"),
    ("period_intervals", "historical-average period in intervals"),
    (
        "train_range",
        "first..end interval range used for training (default: all)",
    ),
    ("horizons", "forecast horizons served"),
    (
        "interpreted_horizon",
        "1-based horizon explained by default",
    ),
    ("mc_permutations", "permutations for sampled Shapley values"),
    ("exact_player_limit", "largest game solved by enumeration"),
    ("candidate_cap", "trajectory players per cell"),
    ("explain_flow", "inflow | outflow explained for clusters"),
    ("seed", "master seed"),
    ("bind", "listen address"),
    ("port", "listen port"),
    ("cors_origin", "allowed UI origin, or *"),
    (
        "long_request_ms",
        "requests slower than this answer 202 with a poll token",
    ),
    (
        "precompute_glyphs",
        "compute glyphs for every base at startup (true | false)",
    ),
];

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub trajectories: Option<PathBuf>,
    pub intersections: Option<PathBuf>,
    pub artifacts: Option<PathBuf>,
    pub bbox: Option<BBox>,
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub k: usize,
    pub kmeans_max_iter: usize,
    pub interval_seconds: u32,
    pub t0: Option<i64>,
    pub n_intervals: Option<usize>,
    pub predictor: PredictorSpec,
    pub train_range: Option<Range<usize>>,
    pub horizons: usize,
    pub interpreted_horizon: usize,
    pub mc_permutations: usize,
    pub exact_player_limit: usize,
    pub candidate_cap: usize,
    pub explain_flow: FlowKind,
    pub seed: u64,
    pub bind: String,
    pub port: u16,
    pub cors_origin: String,
    pub long_request_ms: u64,
    pub precompute_glyphs: bool,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            trajectories: None,
            intersections: None,
            artifacts: None,
            bbox: None,
            grid_rows: DEFAULT_GRID_ROWS,
            grid_cols: DEFAULT_GRID_COLS,
            k: DEFAULT_K,
            kmeans_max_iter: DEFAULT_KMEANS_MAX_ITER,
            interval_seconds: DEFAULT_INTERVAL_SECONDS,
            t0: None,
            n_intervals: None,
            predictor: PredictorSpec::new(PredictorKind::Ridge),
            train_range: None,
            horizons: 6,
            interpreted_horizon: 2,
            mc_permutations: DEFAULT_MC_PERMUTATIONS,
            exact_player_limit: EXACT_PLAYER_LIMIT,
            candidate_cap: DEFAULT_CANDIDATE_CAP,
            explain_flow: FlowKind::Inflow,
            seed: 42,
            bind: "127.0.0.1".into(),
            port: 8080,
            cors_origin: "*".into(),
            long_request_ms: 2000,
            precompute_glyphs: true,
        }
    }
}

fn num<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|_| format!("cannot parse {v:?}"))
}

fn parse_bool(v: &str) -> std::result::Result<bool, String> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(format!("expected true or false, got {v:?}")),
    }
}

fn parse_range(v: &str) -> std::result::Result<Range<usize>, String> {
    let (a, b) = v
        .split_once("..")
        .ok_or_else(|| format!("expected start..end, got {v:?}"))?;
    Ok(num(a.trim())?..num(b.trim())?)
}

fn parse_bbox(v: &str) -> std::result::Result<BBox, String> {
    let parts: Vec<f64> = v
        .split(',')
        .map(|p| num(p.trim()))
        .collect::<std::result::Result<_, _>>()?;
    match parts[..] {
        [a, b, c, d] => Ok(BBox::new(a, b, c, d)),
        _ => Err(format!("expected four comma-separated numbers, got {v:?}")),
    }
}

impl Config {
    /// Applies one `key = value` setting.
    pub fn set(
        &mut self,
        key: &str,
        value: &str,
        base_dir: Option<&Path>,
    ) -> std::result::Result<(), String> {
        let v = value.trim();
        let path = |v: &str| -> Option<PathBuf> {
            if v.is_empty() {
                return None;
            }
            let p = PathBuf::from(v);
            Some(match base_dir {
                Some(d) if p.is_relative() => d.join(p),
                _ => p,
            })
        };
        match key {
            "trajectories" => self.trajectories = path(v),
            "intersections" => self.intersections = path(v),
            "artifacts" => self.artifacts = path(v),
            "bbox" => {
                self.bbox = if v.is_empty() {
                    None
                } else {
                    Some(parse_bbox(v)?)
                }
            }
            "grid_rows" => self.grid_rows = num(v)?,
            "grid_cols" => self.grid_cols = num(v)?,
            "k" => self.k = num(v)?,
            "kmeans_max_iter" => self.kmeans_max_iter = num(v)?,
            "interval_seconds" => self.interval_seconds = num(v)?,
            "t0" => self.t0 = if v.is_empty() { None } else { Some(num(v)?) },
            "n_intervals" => self.n_intervals = if v.is_empty() { None } else { Some(num(v)?) },
            "predictor" => {
                self.predictor.kind =
                    PredictorKind::parse(v).ok_or_else(|| format!("unknown predictor {v:?}"))?
            }
            "ridge_lambda" => self.predictor.lambda = num(v)?,
            "period_intervals" => self.predictor.period_intervals = num(v)?,
            "train_range" => {
                self.train_range = if v.is_empty() {
                    None
                } else {
                    Some(parse_range(v)?)
                }
            }
            "horizons" => self.horizons = num(v)?,
            "interpreted_horizon" => self.interpreted_horizon = num(v)?,
            "mc_permutations" => self.mc_permutations = num(v)?,
            "exact_player_limit" => self.exact_player_limit = num(v)?,
            "candidate_cap" => self.candidate_cap = num(v)?,
            "explain_flow" => {
                self.explain_flow =
                    FlowKind::parse(v).ok_or_else(|| format!("unknown flow {v:?}"))?
            }
            "seed" => self.seed = num(v)?,
            "bind" => self.bind = v.to_string(),
            "port" => self.port = num(v)?,
            "cors_origin" => self.cors_origin = v.to_string(),
            "long_request_ms" => self.long_request_ms = num(v)?,
            "precompute_glyphs" => self.precompute_glyphs = parse_bool(v)?,
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    /// Parses config text on top of the defaults, then applies environment
    /// overrides, then validates.
    pub fn parse(
        text: &str,
        base_dir: Option<&Path>,
        env: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Self> {
        let mut cfg = Config::default();
        let mut problems = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                problems.push(format!("line {}: expected key = value", n + 1));
                continue;
            };
            let k = k.trim();
            if let Err(e) = cfg.set(k, v, base_dir) {
                problems.push(format!("line {} ({k}): {e}", n + 1));
            }
        }
        let mut overrides: Vec<(String, String)> = env
            .into_iter()
            .filter_map(|(k, v)| {
                k.strip_prefix(ENV_PREFIX)
                    .map(|s| (s.to_ascii_lowercase(), v))
            })
            .collect();
        overrides.sort();
        for (k, v) in overrides {
            // paths from the environment are taken as given
            if let Err(e) = cfg.set(&k, &v, None) {
                problems.push(format!("{ENV_PREFIX}{} : {e}", k.to_ascii_uppercase()));
            }
        }
        problems.extend(cfg.problems());
        if problems.is_empty() {
            Ok(cfg)
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    /// Reads `path` (or only the defaults when `None`) with overrides from
    /// the process environment.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let (text, dir) = match path {
            Some(p) => (
                std::fs::read_to_string(p).map_err(|e| {
                    Error::input(format!("cannot read config {}: {e}", p.display()))
                })?,
                p.parent().map(Path::to_path_buf),
            ),
            None => (String::new(), None),
        };
        Config::parse(&text, dir.as_deref(), std::env::vars())
    }

    fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        if let Some(b) = self.bbox {
            if !(b.lon_min < b.lon_max && b.lat_min < b.lat_max) {
                p.push("bbox must have lon_min < lon_max and lat_min < lat_max".into());
            }
        }
        if self.grid_rows == 0 || self.grid_cols == 0 {
            p.push("grid_rows and grid_cols must be positive".into());
        }
        if self.k == 0 {
            p.push("k must be positive".into());
        }
        if self.kmeans_max_iter == 0 {
            p.push("kmeans_max_iter must be positive".into());
        }
        if self.interval_seconds == 0 {
            p.push("interval_seconds must be positive".into());
        }
        if self.n_intervals == Some(0) {
            p.push("n_intervals must be positive".into());
        }
        if let Err(e) = self.predictor.validate() {
            p.push(e.to_string());
        }
        if let Some(r) = &self.train_range {
            if r.start >= r.end {
                p.push("train_range must be non-empty".into());
            }
        }
        if self.horizons == 0 {
            p.push("horizons must be at least 1".into());
        }
        if self.interpreted_horizon == 0 || self.interpreted_horizon > self.horizons {
            p.push(format!(
                "interpreted_horizon must be in 1..={}",
                self.horizons
            ));
        }
        if self.mc_permutations == 0 {
            p.push("mc_permutations must be at least 1".into());
        }
        if self.exact_player_limit > crate::explain::EXACT_MAX_PLAYERS {
            p.push(format!(
                "exact_player_limit must be at most {}",
                crate::explain::EXACT_MAX_PLAYERS
            ));
        }
        p
    }

    /// `(key, value)` pairs in documented order; paths rendered as given.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let path = |p: &Option<PathBuf>| {
            p.as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default()
        };
        let opt = |o: Option<String>| o.unwrap_or_default();
        vec![
            ("trajectories", path(&self.trajectories)),
            ("intersections", path(&self.intersections)),
            ("artifacts", path(&self.artifacts)),
            (
                "bbox",
                opt(self
                    .bbox
                    .map(|b| format!("{},{},{},{}", b.lon_min, b.lat_min, b.lon_max, b.lat_max))),
            ),
            ("grid_rows", self.grid_rows.to_string()),
            ("grid_cols", self.grid_cols.to_string()),
            ("k", self.k.to_string()),
            ("kmeans_max_iter", self.kmeans_max_iter.to_string()),
            ("interval_seconds", self.interval_seconds.to_string()),
            ("t0", opt(self.t0.map(|t| t.to_string()))),
            ("n_intervals", opt(self.n_intervals.map(|n| n.to_string()))),
            ("predictor", self.predictor.kind.as_str().to_string()),
            ("ridge_lambda", self.predictor.lambda.to_string()),
            (
                "period_intervals",
                self.predictor.period_intervals.to_string(),
            ),
            (
                "train_range",
                opt(self
                    .train_range
                    .as_ref()
                    .map(|r| format!("{}..{}", r.start, r.end))),
            ),
            ("horizons", self.horizons.to_string()),
            ("interpreted_horizon", self.interpreted_horizon.to_string()),
            ("mc_permutations", self.mc_permutations.to_string()),
            ("exact_player_limit", self.exact_player_limit.to_string()),
            ("candidate_cap", self.candidate_cap.to_string()),
            ("explain_flow", self.explain_flow.as_str().to_string()),
            ("seed", self.seed.to_string()),
            ("bind", self.bind.clone()),
            ("port", self.port.to_string()),
            ("cors_origin", self.cors_origin.clone()),
            ("long_request_ms", self.long_request_ms.to_string()),
            ("precompute_glyphs", self.precompute_glyphs.to_string()),
        ]
    }

    /// Renders a config file that parses back to `self`.
    pub fn render(&self) -> String {
        let mut s = String::new();
        for ((key, value), (_, doc)) in self.entries().into_iter().zip(KEYS) {
            let _ = writeln!(s, "# {doc}\n{key} = {value}");
        }
        s
    }

    /// Hex digest of the settings that affect computed results. Serving
    /// settings and data paths are excluded; the data itself is hashed by
    /// the scenario.
    pub fn hash(&self) -> String {
        const EXCLUDED: &[&str] = &[
            "trajectories",
            "intersections",
            "artifacts",
            "bind",
            "port",
            "cors_origin",
            "long_request_ms",
            "precompute_glyphs",
        ];
        let mut h = Sha256::new();
        for (k, v) in self.entries() {
            if !EXCLUDED.contains(&k) {
                h.update(k.as_bytes());
                h.update(b"=");
                h.update(v.as_bytes());
                h.update(b"\n");
            }
        }
        hex(&h.finalize()[..8])
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
