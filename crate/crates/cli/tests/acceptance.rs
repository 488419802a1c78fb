//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Every oracle here is independent of the code under test.

use std::collections::BTreeSet;
use std::fs;
use std::net::SocketAddr;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use flowshap_core::config::Config;
use flowshap_core::explain::{shapley_exact, shapley_mc, TableGame};
use flowshap_core::geo::{Containment, Point, Rect};
use flowshap_core::grid::{BBox, GridSpec};
use flowshap_core::partition::{build_partition, kmeans, voronoi_regions, DEFAULT_K};
use flowshap_core::predict::{
    rolling_forecast, train, CellGroup, PredictorKind, PredictorSpec, WINDOW_LEN,
};
use flowshap_core::scenario::Scenario;
use flowshap_core::seed;
use flowshap_core::synth::{generate, SynthParams};
use flowshap_core::trajdata::{
    build_flow_tensor, FlowTensor, GpsPoint, TimeAxis, TrajectoryRecord, TrajectoryStore,
};
use rand::Rng;
use serde_json::Value;
use tokio::io::{AsyncReadExt, AsyncWriteExt};

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_time(start: Instant, limit_s: f64) -> Result<f64, String> {
    let t = start.elapsed().as_secs_f64();
    ensure(t < limit_s, || format!("took {t:.1} s, limit {limit_s} s"))?;
    Ok(t)
}

// ---------------------------------------------------------------- Shapley

/// Subset-weight formula `Σ_S |S|!(n−|S|−1)!/n! · (v(S∪i) − v(S))`.
fn shapley_oracle(n: usize, v: &[f64]) -> Vec<f64> {
    let fact: Vec<f64> = (0..=n)
        .scan(1.0, |acc, k| {
            if k > 0 {
                *acc *= k as f64;
            }
            Some(*acc)
        })
        .collect();
    (0..n)
        .map(|i| {
            (0..1usize << n)
                .filter(|s| s & (1 << i) == 0)
                .map(|s| {
                    let k = s.count_ones() as usize;
                    fact[k] * fact[n - k - 1] / fact[n] * (v[s | 1 << i] - v[s])
                })
                .sum()
        })
        .collect()
}

fn random_table(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..1usize << n)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect()
}

fn phis(n: usize, v: &[f64]) -> Result<Vec<f64>, String> {
    let game = TableGame::new(n, v.to_vec()).map_err(|e| e.to_string())?;
    Ok(shapley_exact(&game)
        .map_err(|e| e.to_string())?
        .iter()
        .map(|a| a.phi)
        .collect())
}

fn swap_bits(s: usize, i: usize, j: usize) -> usize {
    let (bi, bj) = (s >> i & 1, s >> j & 1);
    let cleared = s & !(1 << i) & !(1 << j);
    cleared | bi << j | bj << i
}

fn shapley_axioms() -> Check {
    const TOL: f64 = 1e-9;
    let start = Instant::now();
    let mut rng = seed::rng(1001);
    let mut worst: f64 = 0.0;
    for g in 0..200 {
        let n = rng.random_range(2..=10);
        let v = random_table(&mut rng, n);
        let phi = phis(n, &v)?;
        for (a, b) in phi.iter().zip(shapley_oracle(n, &v)) {
            worst = worst.max((a - b).abs());
        }
        let full = (1 << n) - 1;
        let eff = (phi.iter().sum::<f64>() - (v[full] - v[0])).abs();
        ensure(eff <= TOL, || {
            format!("game {g}: efficiency off by {eff:e}")
        })?;

        let (i, j) = (rng.random_range(0..n), rng.random_range(0..n));
        if i != j {
            let sym: Vec<f64> = (0..1 << n)
                .map(|s| (v[s] + v[swap_bits(s, i, j)]) / 2.0)
                .collect();
            let p = phis(n, &sym)?;
            let d = (p[i] - p[j]).abs();
            ensure(d <= TOL, || {
                format!("game {g}: symmetric players differ by {d:e}")
            })?;
        }

        let k = rng.random_range(0..n);
        let null: Vec<f64> = (0..1usize << n).map(|s| v[s & !(1 << k)]).collect();
        let p = phis(n, &null)?;
        ensure(p[k].abs() <= TOL, || {
            format!("game {g}: null player got {:e}", p[k])
        })?;

        let w = random_table(&mut rng, n);
        let (a, b) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let mix: Vec<f64> = v.iter().zip(&w).map(|(x, y)| a * x + b * y).collect();
        let pm = phis(n, &mix)?;
        let pw = phis(n, &w)?;
        for q in 0..n {
            let d = (pm[q] - (a * phi[q] + b * pw[q])).abs();
            ensure(d <= TOL, || format!("game {g}: linearity off by {d:e}"))?;
        }
    }
    ensure(worst <= TOL, || {
        format!("exact differs from the subset formula by {worst:e}")
    })?;
    let t = within_time(start, 10.0)?;
    Ok(format!(
        "200 games, max |φ − oracle| = {worst:.1e}, {t:.2} s"
    ))
}

fn mc_vs_exact() -> Check {
    let start = Instant::now();
    let mut rng = seed::rng(2002);
    let (mut inside, mut total) = (0usize, 0usize);
    for g in 0..50u64 {
        let n = rng.random_range(5..=10);
        let v = random_table(&mut rng, n);
        let game = TableGame::new(n, v.clone()).map_err(|e| e.to_string())?;
        let exact = shapley_oracle(n, &v);
        let mc = shapley_mc(&game, 5000, seed::derive(2002, &[g])).map_err(|e| e.to_string())?;
        for (a, e) in mc.iter().zip(&exact) {
            total += 1;
            if (a.phi - e).abs() <= 4.0 * a.stderr {
                inside += 1;
            }
        }
    }
    let frac = inside as f64 / total as f64;
    ensure(frac >= 0.99, || {
        format!("only {inside}/{total} within 4·stderr")
    })?;
    let t = within_time(start, 60.0)?;
    Ok(format!(
        "{inside}/{total} player instances within 4·stderr, {t:.2} s"
    ))
}

fn additive_closed_form() -> Check {
    let mut rng = seed::rng(3003);
    let mut worst_exact: f64 = 0.0;
    let mut worst_general_mc: f64 = 0.0;
    for g in 0..50u64 {
        let n = rng.random_range(2..=10);
        // dyadic weights keep every partial sum exact, so each sampled
        // marginal is bit-identical to w_i
        let dyadic: Vec<f64> = (0..n)
            .map(|_| rng.random_range(-1024i32..=1024) as f64 / 1024.0)
            .collect();
        let general: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        for (w, must_be_exact) in [(&dyadic, true), (&general, false)] {
            let table: Vec<f64> = (0..1usize << n)
                .map(|s| (0..n).filter(|i| s >> i & 1 == 1).map(|i| w[i]).sum())
                .collect();
            let game = TableGame::new(n, table).map_err(|e| e.to_string())?;
            let ex = shapley_exact(&game).map_err(|e| e.to_string())?;
            let mc = shapley_mc(&game, 200, seed::derive(3003, &[g])).map_err(|e| e.to_string())?;
            for i in 0..n {
                worst_exact = worst_exact.max((ex[i].phi - w[i]).abs());
                if must_be_exact {
                    ensure(mc[i].phi == w[i], || {
                        format!("game {g}: MC gave {} for weight {}", mc[i].phi, w[i])
                    })?;
                } else {
                    worst_general_mc = worst_general_mc.max((mc[i].phi - w[i]).abs());
                }
            }
        }
    }
    ensure(worst_exact <= 1e-9, || {
        format!("exact off by {worst_exact:e}")
    })?;
    Ok(format!(
        "exact max err {worst_exact:.1e}; MC bit-exact on dyadic weights, {worst_general_mc:.1e} on arbitrary weights"
    ))
}

// ---------------------------------------------------------- rasterization

fn grid3() -> GridSpec {
    GridSpec::new(BBox::new(0.0, 0.0, 3.0, 3.0), 3, 3).unwrap()
}

fn record(id: &str, fixes: &[(i64, f64, f64)]) -> TrajectoryRecord {
    TrajectoryRecord {
        vehicle_id: "v".into(),
        order_id: id.into(),
        points: fixes
            .iter()
            .map(|&(t, lon, lat)| GpsPoint { t, lon, lat })
            .collect(),
    }
}

/// Center of cell `(row, col)` on the 3×3 unit-degree grid; row 0 is north.
fn c(row: usize, col: usize) -> (f64, f64) {
    (col as f64 + 0.5, 3.0 - (row as f64 + 0.5))
}

type Flow = (usize, usize, usize); // (interval, row, col)

struct Fixture {
    name: &'static str,
    fixes: Vec<(i64, f64, f64)>,
    inflow: Vec<Flow>,
    outflow: Vec<Flow>,
}

fn fx(t: i64, p: (f64, f64)) -> (i64, f64, f64) {
    (t, p.0, p.1)
}

fn fixtures() -> Vec<Fixture> {
    vec![
        Fixture {
            name: "stationary",
            fixes: vec![fx(0, c(1, 1)), fx(300, (1.2, 1.7))],
            inflow: vec![],
            outflow: vec![],
        },
        Fixture {
            // borders at lon 1 and 2 are crossed at t = 150 and 450
            name: "eastward",
            fixes: vec![fx(0, c(1, 0)), fx(600, c(1, 2))],
            inflow: vec![(0, 1, 1), (0, 1, 2)],
            outflow: vec![(0, 1, 0), (0, 1, 1)],
        },
        Fixture {
            // same path, crossings at t = 550 and 850 straddle an interval border
            name: "eastward-split",
            fixes: vec![fx(400, c(1, 0)), fx(1000, c(1, 2))],
            inflow: vec![(0, 1, 1), (1, 1, 2)],
            outflow: vec![(0, 1, 0), (1, 1, 1)],
        },
        Fixture {
            // lat 1 at t = 300, lat 2 at t = 900
            name: "northward",
            fixes: vec![fx(0, c(2, 1)), fx(1200, c(0, 1))],
            inflow: vec![(0, 1, 1), (1, 0, 1)],
            outflow: vec![(0, 2, 1), (1, 1, 1)],
        },
        Fixture {
            name: "entry-from-outside",
            fixes: vec![fx(0, (-0.5, 2.5)), fx(600, c(0, 0))],
            inflow: vec![(0, 0, 0)],
            outflow: vec![],
        },
        Fixture {
            // lon 3 at t = 1350
            name: "exit-to-outside",
            fixes: vec![fx(1200, c(2, 2)), fx(1500, (3.5, 0.5))],
            inflow: vec![],
            outflow: vec![(2, 2, 2)],
        },
        Fixture {
            // lat 2 at s = 0.385 (t ≈ 231), then lon 1 at s = 0.5 (t = 300)
            name: "diagonal",
            fixes: vec![fx(0, c(0, 0)), fx(600, (1.5, 1.2))],
            inflow: vec![(0, 1, 0), (0, 1, 1)],
            outflow: vec![(0, 0, 0), (0, 1, 0)],
        },
        Fixture {
            name: "round-trip",
            fixes: vec![fx(0, c(1, 1)), fx(600, c(1, 2)), fx(1200, c(1, 1))],
            inflow: vec![(0, 1, 2), (1, 1, 1)],
            outflow: vec![(0, 1, 1), (1, 1, 2)],
        },
        Fixture {
            // leaves at t = 300, comes back at t = 900
            name: "outside-excursion",
            fixes: vec![fx(0, c(0, 0)), fx(600, (-0.5, 2.5)), fx(1200, c(0, 0))],
            inflow: vec![(1, 0, 0)],
            outflow: vec![(0, 0, 0)],
        },
        Fixture {
            // lon 1, 2 at t = 150, 450; lat 1, 2 at t = 750, 1050
            name: "l-turn",
            fixes: vec![fx(0, c(2, 0)), fx(600, c(2, 2)), fx(1200, c(0, 2))],
            inflow: vec![(0, 2, 1), (0, 2, 2), (1, 1, 2), (1, 0, 2)],
            outflow: vec![(0, 2, 0), (0, 2, 1), (1, 2, 2), (1, 1, 2)],
        },
    ]
}

fn dense(list: &[Flow], n: usize) -> Vec<u32> {
    let mut v = vec![0u32; n * 9];
    for &(t, r, col) in list {
        v[t * 9 + r * 3 + col] += 1;
    }
    v
}

fn rasterization() -> Check {
    let grid = grid3();
    let n = 3;
    let fixtures = fixtures();
    for f in &fixtures {
        let store = TrajectoryStore::new(vec![record(f.name, &f.fixes)]);
        let (t, _) = build_flow_tensor(&store, &grid, 600, 0, n).map_err(|e| e.to_string())?;
        ensure(t.inflow == dense(&f.inflow, n), || {
            format!("{}: inflow {:?}", f.name, t.inflow)
        })?;
        ensure(t.outflow == dense(&f.outflow, n), || {
            format!("{}: outflow {:?}", f.name, t.outflow)
        })?;
    }

    // a path's net flow per cell telescopes to [ends here] − [starts here]
    let grid = GridSpec::new(BBox::new(104.0, 30.6, 104.1, 30.7), 10, 10).unwrap();
    let mut rng = seed::rng(4004);
    let mut crossings = 0u64;
    for k in 0..1000 {
        let len = rng.random_range(2..=20);
        let mut t = 0i64;
        let fixes: Vec<(i64, f64, f64)> = (0..len)
            .map(|_| {
                t += rng.random_range(1..=120);
                (
                    t,
                    rng.random_range(103.99..104.11),
                    rng.random_range(30.59..30.71),
                )
            })
            .collect();
        let r = record(&format!("r{k}"), &fixes);
        let n = (t / 600 + 1) as usize;
        let (tensor, stats) = build_flow_tensor(&TrajectoryStore::new(vec![r]), &grid, 600, 0, n)
            .map_err(|e| e.to_string())?;
        let mut net = vec![0i64; grid.n_cells()];
        for i in 0..n {
            for cell in 0..grid.n_cells() {
                let o = i * grid.n_cells() + cell;
                net[cell] += tensor.inflow[o] as i64 - tensor.outflow[o] as i64;
            }
        }
        let mut expect = vec![0i64; grid.n_cells()];
        let (first, last) = (fixes[0], fixes[len - 1]);
        if let Some(cell) = grid.cell_of(last.1, last.2) {
            expect[grid.index(cell)] += 1;
        }
        if let Some(cell) = grid.cell_of(first.1, first.2) {
            expect[grid.index(cell)] -= 1;
        }
        ensure(net == expect, || {
            format!("trajectory {k}: net flow mismatch")
        })?;
        let (tin, tout) = (tensor.total_inflow(), tensor.total_outflow());
        ensure(
            stats.dropped_out_of_range == 0
                && tin == stats.transitions + stats.entries_from_outside
                && tout == stats.transitions + stats.exits_to_outside,
            || format!("trajectory {k}: totals do not reconcile with {stats:?}"),
        )?;
        crossings += tin;
    }
    Ok(format!(
        "{} fixtures exact; conservation on 1000 random trajectories ({crossings} inflow events)",
        fixtures.len()
    ))
}

// -------------------------------------------------------------- partition

fn random_point(rng: &mut impl Rng, rect: &Rect) -> Point {
    Point::new(
        rng.random_range(rect.min.x..rect.max.x),
        rng.random_range(rect.min.y..rect.max.y),
    )
}

fn partition_properties() -> Check {
    let mut rng = seed::rng(5005);
    let rect = Rect::new(Point::new(-5000.0, -4000.0), Point::new(5000.0, 4000.0));
    let mut max_iter_seen = 0;
    for run in 0..20u64 {
        let pts: Vec<Point> = (0..400).map(|_| random_point(&mut rng, &rect)).collect();
        let r = kmeans(&pts, DEFAULT_K, run, 300).map_err(|e| e.to_string())?;
        max_iter_seen = max_iter_seen.max(r.inertia_history.len());
        for w in r.inertia_history.windows(2) {
            ensure(w[1] <= w[0], || {
                format!("run {run}: inertia rose {} -> {}", w[0], w[1])
            })?;
        }
    }

    let mut worst_area: f64 = 0.0;
    for _ in 0..20 {
        let sites: Vec<Point> = (0..DEFAULT_K)
            .map(|_| random_point(&mut rng, &rect))
            .collect();
        let d = voronoi_regions(&sites, rect).map_err(|e| e.to_string())?;
        worst_area = worst_area.max((d.total_area() - rect.area()).abs() / rect.area());
    }
    ensure(worst_area <= 1e-6, || {
        format!("area tiling off by {worst_area:e}")
    })?;

    let sites: Vec<Point> = (0..DEFAULT_K)
        .map(|_| random_point(&mut rng, &rect))
        .collect();
    let d = voronoi_regions(&sites, rect).map_err(|e| e.to_string())?;
    let (mut checked, mut mismatches) = (0, 0);
    for _ in 0..10_000 {
        let p = random_point(&mut rng, &rect);
        let mut dist: Vec<(f64, usize)> = sites
            .iter()
            .enumerate()
            .map(|(i, s)| (s.dist(p), i))
            .collect();
        dist.sort_by(|a, b| a.0.total_cmp(&b.0));
        if dist[1].0 - dist[0].0 < 1e-6 {
            continue; // on a bisector
        }
        checked += 1;
        let owner = dist[0].1;
        let inside: Vec<usize> = (0..sites.len())
            .filter(|&i| d.cells[i].classify_convex(p, 1e-9) != Containment::Outside)
            .collect();
        if inside != vec![owner] {
            mismatches += 1;
        }
    }
    ensure(mismatches == 0, || {
        format!("{mismatches} nearest-site mismatches")
    })?;

    let synth = generate(&SynthParams {
        vehicles: 0,
        events: 0,
        ..SynthParams::default()
    })
    .map_err(|e| e.to_string())?;
    let cfg = Config::default();
    let grid = GridSpec::new(synth.manifest.bbox, cfg.grid_rows, cfg.grid_cols)
        .map_err(|e| e.to_string())?;
    let p = build_partition(
        &grid,
        &synth.intersections,
        cfg.k,
        cfg.seed,
        cfg.kmeans_max_iter,
    )
    .map_err(|e| e.to_string())?;
    ensure(cfg.k == 21 && p.k == 21, || {
        format!("default k {} gave {} clusters", cfg.k, p.k)
    })?;
    let used: BTreeSet<usize> = p.grid_assignment.iter().flatten().copied().collect();
    Ok(format!(
        "inertia monotone on 20 runs (≤{max_iter_seen} steps); tiling err {worst_area:.1e}; {checked} off-boundary samples, 0 mismatches; k=21 ({} clusters own cells)",
        used.len()
    ))
}

// ------------------------------------------------------------- predictors

fn tensor_from(frames: &[Vec<u32>], rows: usize, cols: usize) -> FlowTensor {
    // each frame holds inflows then outflows of every cell
    let grid = GridSpec::new(BBox::new(0.0, 0.0, 1.0, 1.0), rows, cols).unwrap();
    let axis = TimeAxis::new(0, 600, frames.len()).unwrap();
    let mut t = FlowTensor::zeros(grid, axis);
    let n = rows * cols;
    for (i, f) in frames.iter().enumerate() {
        t.inflow[i * n..(i + 1) * n].copy_from_slice(&f[..n]);
        t.outflow[i * n..(i + 1) * n].copy_from_slice(&f[n..]);
    }
    t
}

fn predictor_contracts() -> Check {
    let mut rng = seed::rng(6006);
    let frames: Vec<Vec<u32>> = (0..30)
        .map(|_| (0..2 * 12).map(|_| rng.random_range(0..40)).collect())
        .collect();
    let tensor = tensor_from(&frames, 3, 4);
    let persistence = train(
        &PredictorSpec::new(PredictorKind::Persistence),
        &tensor,
        0..30,
        &[],
    )
    .map_err(|e| e.to_string())?;
    for base in WINDOW_LEN - 1..30 {
        let f = rolling_forecast(&persistence, &tensor, base, 12).map_err(|e| e.to_string())?;
        let last = tensor.frame(base);
        ensure(f.frames.iter().all(|fr| *fr == last), || {
            format!("persistence drifted from base {base}")
        })?;
    }

    // planted generator on a 1×2 grid, channels (in0, in1, out0, out1):
    // x[t+1][j] = x[t-4][(j+1) mod 4] + b[j]. The lag-5 channel rotation is a
    // single 20-cycle and Σb > 0, so windows span all 21 features.
    let b = [1u32, 2, 1, 3];
    let mut seq: Vec<Vec<u32>> = (0..WINDOW_LEN)
        .map(|_| (0..4).map(|_| rng.random_range(0..50)).collect())
        .collect();
    while seq.len() < 80 {
        let old = &seq[seq.len() - WINDOW_LEN];
        let next: Vec<u32> = (0..4).map(|j| old[(j + 1) % 4] + b[j]).collect();
        seq.push(next);
    }
    let tensor = tensor_from(&seq, 1, 2);
    let group = CellGroup {
        inputs: vec![0, 1],
        outputs: vec![0, 1],
    };
    let spec = PredictorSpec {
        lambda: 0.0,
        ..PredictorSpec::new(PredictorKind::Ridge)
    };
    let ridge = train(&spec, &tensor, 0..60, &[group]).map_err(|e| e.to_string())?;
    let w = &ridge.ridge.as_ref().ok_or("ridge model missing")?.weights[0];
    let nf = 2 * WINDOW_LEN * 2 + 1;
    let mut worst_w: f64 = 0.0;
    for j in 0..4 {
        for f in 0..nf {
            let planted = if f == (j + 1) % 4 {
                1.0
            } else if f == nf - 1 {
                b[j] as f64
            } else {
                0.0
            };
            worst_w = worst_w.max((w[j * nf + f] - planted).abs());
        }
    }
    ensure(worst_w <= 1e-6, || format!("weights off by {worst_w:e}"))?;
    let mut worst_roll: f64 = 0.0;
    for base in [60, 65, 70, 76] {
        let f = rolling_forecast(&ridge, &tensor, base, 3).map_err(|e| e.to_string())?;
        for h in 1..=3 {
            let truth = &seq[base + h];
            let fr = &f.frames[h - 1];
            for cell in 0..2 {
                worst_roll = worst_roll
                    .max((fr.inflow[cell] - truth[cell] as f64).abs())
                    .max((fr.outflow[cell] - truth[2 + cell] as f64).abs());
            }
        }
    }
    ensure(worst_roll <= 1e-5, || {
        format!("H=3 rollout off by {worst_roll:e}")
    })?;
    Ok(format!(
        "persistence fixed for H ≤ 12; ridge weights err {worst_w:.1e}, H=3 rollout err {worst_roll:.1e}"
    ))
}

// ------------------------------------------------------------ end to end

fn flowshap(dir: &Path, args: &[&str], env: &[(&str, &str)]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_flowshap"))
        .args(args)
        .current_dir(dir)
        .envs(env.iter().copied())
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "`flowshap {}` failed: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr).trim()
        ));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn planted_recovery(dir: &Path) -> Check {
    let start = Instant::now();
    let persist = [("FLOWSHAP_PREDICTOR", "persistence")];
    flowshap(dir, &["gen-synth", "--out", "."], &[])?;
    for stage in ["ingest", "partition", "train"] {
        flowshap(dir, &["--config", "flowshap.conf", stage], &persist)?;
    }
    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap())
            .map_err(|e| e.to_string())?;
    let ev = &manifest["events"][0];
    let cell = format!("{},{}", ev["cell"]["row"], ev["cell"]["col"]);
    let base = ev["interval"].to_string();
    flowshap(
        dir,
        &[
            "--config",
            "flowshap.conf",
            "explain",
            "--cell",
            &cell,
            "--base",
            &base,
        ],
        &persist,
    )?;
    let doc: Value =
        serde_json::from_str(&fs::read_to_string(dir.join("attribution.json")).unwrap())
            .map_err(|e| e.to_string())?;
    let top = doc["top"].as_array().ok_or("no top list")?;
    let got: BTreeSet<&str> = top.iter().filter_map(|t| t["player"].as_str()).collect();
    let planted: BTreeSet<&str> = ev["contributing"]
        .as_array()
        .ok_or("no contributing ids")?
        .iter()
        .filter_map(Value::as_str)
        .collect();
    ensure(doc["horizon"] == 2, || {
        format!("horizon {}", doc["horizon"])
    })?;
    ensure(got == planted, || {
        format!("top-5 {got:?} vs planted {planted:?}")
    })?;
    let min_phi = top
        .iter()
        .map(|t| t["phi"].as_f64().unwrap_or(f64::NAN))
        .fold(f64::INFINITY, f64::min);
    ensure(min_phi > 0.0, || format!("smallest top φ is {min_phi}"))?;
    let t = within_time(start, 120.0)?;
    Ok(format!(
        "cell ({cell}) base {base}: top-5 = planted {planted:?}, min φ {min_phi:.3}, {} candidates, {t:.1} s",
        doc["candidates"]
    ))
}

fn scenario_config(dir: &Path) -> Result<Config, String> {
    let text = fs::read_to_string(dir.join("flowshap.conf")).map_err(|e| e.to_string())?;
    Config::parse(&text, Some(dir), std::iter::empty()).map_err(|e| e.to_string())
}

fn sector_reconciliation(dir: &Path) -> Check {
    let start = Instant::now();
    let s = Scenario::build(scenario_config(dir)?).map_err(|e| e.to_string())?;
    let [lo, hi] = s.meta().base_range.ok_or("no valid base")?;
    let (mut glyphs, mut worst): (usize, f64) = (0, 0.0);
    for base in lo..=hi {
        let doc = s.glyphs(base, None).map_err(|e| e.to_string())?;
        for g in &doc.glyphs {
            let a = s
                .cluster_attribution(g.cluster, base, None)
                .map_err(|e| e.to_string())?;
            let phi: f64 = a.attributions.iter().map(|x| x.phi).sum();
            let net: f64 = g.sectors.iter().map(|x| x.pos - x.neg).sum();
            worst = worst.max((phi - net).abs());
            glyphs += 1;
        }
    }
    ensure(worst <= 1e-9, || format!("sector sum off by {worst:e}"))?;
    Ok(format!(
        "{glyphs} glyphs over bases {lo}..={hi} ({} predictor), max |Σsectors − Σφ| = {worst:.1e}, {:.1} s",
        s.predictor.kind().as_str(),
        start.elapsed().as_secs_f64()
    ))
}

async fn http_get(addr: SocketAddr, path: &str) -> std::io::Result<(u16, String)> {
    let mut stream = tokio::net::TcpStream::connect(addr).await?;
    let req = format!("GET {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n");
    stream.write_all(req.as_bytes()).await?;
    let mut raw = Vec::new();
    stream.read_to_end(&mut raw).await?;
    let text = String::from_utf8_lossy(&raw).into_owned();
    let status = text.get(9..12).and_then(|s| s.parse().ok()).unwrap_or(0);
    let body = text
        .split_once("\r\n\r\n")
        .map(|x| x.1)
        .unwrap_or("")
        .to_string();
    Ok((status, body))
}

/// Starts a fresh server, replays `requests` (following poll tokens) and
/// returns the final status and body of each.
fn server_run(config: Config, requests: &[String]) -> Result<Vec<(u16, String)>, String> {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| e.to_string())?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0")
            .await
            .map_err(|e| e.to_string())?;
        let addr = listener.local_addr().map_err(|e| e.to_string())?;
        tokio::spawn(flowshap_service::serve_on(listener, config));
        let deadline = Instant::now() + Duration::from_secs(120);
        loop {
            match http_get(addr, "/api/meta").await {
                Ok((200, _)) => break,
                Ok((503, _)) | Err(_) if Instant::now() < deadline => {
                    tokio::time::sleep(Duration::from_millis(50)).await
                }
                other => return Err(format!("server never became ready: {other:?}")),
            }
        }
        let mut out = Vec::new();
        for path in requests {
            let mut r = http_get(addr, path).await.map_err(|e| e.to_string())?;
            while r.0 == 202 {
                let v: Value = serde_json::from_str(&r.1).map_err(|e| e.to_string())?;
                let poll = v["poll"].as_str().ok_or("202 without poll")?.to_string();
                tokio::time::sleep(Duration::from_millis(100)).await;
                r = http_get(addr, &poll).await.map_err(|e| e.to_string())?;
            }
            out.push(r);
        }
        Ok(out)
    })
}

fn api_determinism(dir: &Path) -> Check {
    let start = Instant::now();
    let mut config = scenario_config(dir)?;
    config.precompute_glyphs = false;
    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap())
            .map_err(|e| e.to_string())?;
    let ev = &manifest["events"][0];
    let (r, c, t) = (&ev["cell"]["row"], &ev["cell"]["col"], &ev["interval"]);
    let requests: Vec<String> = vec![
        "/api/meta".into(),
        "/api/clusters".into(),
        format!("/api/flows?t={t}"),
        format!("/api/trajectories?t={t}"),
        format!("/api/forecast?base={t}"),
        format!("/api/glyphs?base={t}"),
        format!("/api/attributions/cluster/0?base={t}"),
        format!("/api/attributions/cluster/5?base={t}&h=3"),
        format!("/api/attributions/grid/{r}/{c}?base={t}"),
        "/api/forecast?base=1".into(),
        "/api/flows?t=99999".into(),
        "/api/attributions/cluster/9999?base=5".into(),
        "/api/nope".into(),
        "/api/meta".into(),
    ];
    let a = server_run(config.clone(), &requests)?;
    let b = server_run(config, &requests)?;
    for (i, (x, y)) in a.iter().zip(&b).enumerate() {
        ensure(x == y, || {
            format!("request {} differs between runs", requests[i])
        })?;
    }
    let ok = a.iter().filter(|x| x.0 == 200).count();
    let bytes: usize = a.iter().map(|x| x.1.len()).sum();
    Ok(format!(
        "{} requests ({ok} ok, {} errors, {bytes} bytes) byte-identical across two runs, {:.1} s",
        requests.len(),
        requests.len() - ok,
        start.elapsed().as_secs_f64()
    ))
}

// ------------------------------------------------------------------- main

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let path = dir.path();
    let criteria: Vec<(&str, Box<dyn Fn() -> Check + '_>)> = vec![
        ("shapley axioms", Box::new(shapley_axioms)),
        ("mc vs exact oracle", Box::new(mc_vs_exact)),
        ("additive closed form", Box::new(additive_closed_form)),
        ("rasterization oracle", Box::new(rasterization)),
        ("partition properties", Box::new(partition_properties)),
        ("predictor contracts", Box::new(predictor_contracts)),
        (
            "planted-cause recovery",
            Box::new(|| planted_recovery(path)),
        ),
        (
            "sector reconciliation",
            Box::new(|| sector_reconciliation(path)),
        ),
        ("api determinism", Box::new(|| api_determinism(path))),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        match check() {
            Ok(detail) => println!("PASS  {name:<24} {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name:<24} {why}");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
