//! Display aggregates: radar glyph summaries and trajectory time channels.

use serde::{Deserialize, Serialize};

use crate::geo::Point;
use crate::partition::ClusterPartition;
use crate::predict::Forecast;
use crate::{Error, Result};

use super::shapley::Attribution;

pub const SECTOR_NAMES: [&str; 8] = ["N", "NE", "E", "SE", "S", "SW", "W", "NW"];

/// Forecast points on a glyph: +10 … +50 minutes.
pub const GLYPH_POINTS: usize = 5;

/// Horizon highlighted on the glyph, 1-based (+20 minutes).
pub const DEFAULT_HIGHLIGHTED_HORIZON: usize = 2;

pub const TOP_TRAJECTORIES: usize = 5;

/// Lookback buckets in the time-channel chart (0–10 … 40–50 minutes).
pub const TIME_CHANNELS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectorMagnitude {
    pub dir: String,
    pub pos: f64,
    pub neg: f64,
}

/// Compass sector of `to` seen from `from`: `round(bearing / 45°) mod 8`,
/// bearing clockwise from north. `None` for coincident points.
pub fn sector_of(from: Point, to: Point) -> Option<usize> {
    let d = to.sub(from);
    if d.x == 0.0 && d.y == 0.0 {
        return None;
    }
    let bearing = d.x.atan2(d.y).to_degrees().rem_euclid(360.0);
    Some(((bearing / 45.0).round() as usize) % 8)
}

/// Splits neighbor attributions into eight compass sectors around the
/// cluster centroid, keeping positive and negative parts apart.
pub fn sector_summary(
    partition: &ClusterPartition,
    cluster: usize,
    phis: &[(usize, f64)],
) -> Vec<SectorMagnitude> {
    let mut sectors: Vec<SectorMagnitude> = SECTOR_NAMES
        .iter()
        .map(|d| SectorMagnitude {
            dir: d.to_string(),
            pos: 0.0,
            neg: 0.0,
        })
        .collect();
    let origin = partition.centroid(cluster);
    for &(nb, phi) in phis {
        let s = sector_of(origin, partition.centroid(nb)).unwrap_or_else(|| {
            log::warn!(
                "cluster {nb} shares its centroid with cluster {cluster}; placed in sector N"
            );
            0
        });
        if phi >= 0.0 {
            sectors[s].pos += phi;
        } else {
            sectors[s].neg -= phi;
        }
    }
    sectors
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlyphSummary {
    pub cluster: usize,
    pub centroid_lonlat: [f64; 2],
    /// Total predicted inflow of the cluster at +10 … +50 minutes.
    pub forecast_points: Vec<f64>,
    /// 1-based horizon being interpreted; `forecast_points[highlighted - 1]`.
    pub highlighted: usize,
    /// The cluster has no neighbors, so there is nothing to attribute.
    pub degenerate: bool,
    pub sectors: Vec<SectorMagnitude>,
}

/// One glyph per cluster. `attributions[c]` holds `(neighbor, φ)` pairs for
/// cluster `c`, or `None` when the cluster has no neighbors.
pub fn glyph_summaries(
    partition: &ClusterPartition,
    forecast: &Forecast,
    attributions: &[Option<Vec<(usize, f64)>>],
    highlighted: usize,
) -> Result<Vec<GlyphSummary>> {
    if forecast.frames.len() < GLYPH_POINTS {
        return Err(Error::config(format!(
            "glyphs need a forecast of at least {GLYPH_POINTS} horizons, got {}",
            forecast.frames.len()
        )));
    }
    if highlighted == 0 || highlighted > GLYPH_POINTS {
        return Err(Error::config(format!(
            "highlighted horizon must be in 1..={GLYPH_POINTS}"
        )));
    }
    if attributions.len() != partition.k {
        return Err(Error::config(
            "one attribution entry is required per cluster",
        ));
    }
    Ok((0..partition.k)
        .map(|c| {
            let cells = partition.cells_of(c);
            let forecast_points = forecast.frames[..GLYPH_POINTS]
                .iter()
                .map(|f| cells.iter().map(|&i| f.inflow[i]).sum())
                .collect();
            let phis = attributions[c].as_deref().unwrap_or(&[]);
            GlyphSummary {
                cluster: c,
                centroid_lonlat: partition.centroids_lonlat[c],
                forecast_points,
                highlighted,
                degenerate: attributions[c].is_none(),
                sectors: sector_summary(partition, c, phis),
            }
        })
        .collect())
}

/// A trajectory attribution with the timing needed for the time channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryAttribution {
    #[serde(flatten)]
    pub attribution: Attribution,
    pub events: usize,
    pub last_event_t: f64,
    /// Lookback bucket of the last event.
    pub channel: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeChannel {
    pub channel: usize,
    pub from_minutes: u32,
    pub to_minutes: u32,
    pub positive: f64,
    pub negative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeChannelReport {
    /// At most five, by |φ| descending then player id.
    pub top: Vec<TrajectoryAttribution>,
    pub time_channels: Vec<TimeChannel>,
}

/// Tags each player with the lookback bucket of its last event, keeping the
/// input order.
pub fn trajectory_attributions(
    players: &[(Attribution, usize, f64)],
    window_end: f64,
    bucket_seconds: u32,
) -> Vec<TrajectoryAttribution> {
    let bucket = bucket_seconds.max(1) as f64;
    players
        .iter()
        .map(|(a, events, last)| {
            let lookback = (window_end - last).max(0.0);
            TrajectoryAttribution {
                attribution: a.clone(),
                events: *events,
                last_event_t: *last,
                channel: ((lookback / bucket).floor() as usize).min(TIME_CHANNELS - 1),
            }
        })
        .collect()
}

/// Buckets each trajectory by how long before `window_end` its last event
/// happened, summing positive and negative φ separately per bucket, and
/// picks the top five by |φ|.
pub fn time_channel_report(
    players: &[(Attribution, usize, f64)],
    window_end: f64,
    bucket_seconds: u32,
) -> TimeChannelReport {
    let mut entries = trajectory_attributions(players, window_end, bucket_seconds);
    let minutes = bucket_seconds.max(1) / 60;
    let mut time_channels: Vec<TimeChannel> = (0..TIME_CHANNELS)
        .map(|c| TimeChannel {
            channel: c,
            from_minutes: c as u32 * minutes,
            to_minutes: (c as u32 + 1) * minutes,
            positive: 0.0,
            negative: 0.0,
        })
        .collect();
    for e in &entries {
        let phi = e.attribution.phi;
        let ch = &mut time_channels[e.channel];
        if phi >= 0.0 {
            ch.positive += phi;
        } else {
            ch.negative -= phi;
        }
    }
    entries.sort_by(|a, b| {
        b.attribution
            .phi
            .abs()
            .total_cmp(&a.attribution.phi.abs())
            .then(a.attribution.player.cmp(&b.attribution.player))
    });
    entries.truncate(TOP_TRAJECTORIES);
    TimeChannelReport {
        top: entries,
        time_channels,
    }
}
