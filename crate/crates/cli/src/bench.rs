//! Attribution throughput on synthetic games.

use std::time::Instant;

use clap::Args;
use flowshap_core::explain::{
    shapley_exact, shapley_mc, Attribution, CoalitionGame, CountingGame, EXACT_MAX_PLAYERS,
};
use flowshap_core::{seed, Result};
use serde::Serialize;

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 10)]
    pub games: usize,
    #[arg(long, default_value_t = 10)]
    pub players: usize,
    #[arg(long, default_value_t = 200)]
    pub permutations: usize,
}

/// `v(S) = Σ w_i + (Σ u_i)²`, seeded per game; cheap and non-additive.
struct QuadraticGame {
    w: Vec<f64>,
    u: Vec<f64>,
}

impl QuadraticGame {
    fn new(players: usize, game_seed: u64) -> Self {
        let draw = |tag: u64, i: usize| {
            let z = seed::derive(game_seed, &[tag, i as u64]);
            (z >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        };
        QuadraticGame {
            w: (0..players).map(|i| draw(1, i)).collect(),
            u: (0..players).map(|i| draw(2, i)).collect(),
        }
    }
}

impl CoalitionGame for QuadraticGame {
    fn n_players(&self) -> usize {
        self.w.len()
    }

    fn value(&self, members: &[bool]) -> f64 {
        let (mut a, mut b) = (0.0, 0.0);
        for (i, _) in members.iter().enumerate().filter(|(_, &m)| m) {
            a += self.w[i];
            b += self.u[i];
        }
        a + b * b
    }
}

#[derive(Debug, Serialize)]
pub struct ModeReport {
    pub wall_seconds: f64,
    /// `value` calls; empty-coalition baselines are counted apart.
    pub evaluations: u64,
    pub baseline_evaluations: u64,
    pub evaluations_per_second: f64,
    pub mean_stderr: f64,
    pub max_stderr: f64,
}

#[derive(Debug, Serialize)]
pub struct BenchReport {
    pub games: usize,
    pub players: usize,
    pub permutations: usize,
    /// `None` above the exact player limit.
    pub exact: Option<ModeReport>,
    pub mc: ModeReport,
}

fn time_mode(
    games: &[QuadraticGame],
    f: impl Fn(&CountingGame<&QuadraticGame>, usize) -> Result<Vec<Attribution>>,
) -> Result<ModeReport> {
    let start = Instant::now();
    let (mut evals, mut baselines) = (0, 0);
    let mut stderrs = Vec::new();
    for (g, game) in games.iter().enumerate() {
        let counted = CountingGame::new(game);
        let phi = f(&counted, g)?;
        evals += counted.value_evaluations();
        baselines += counted.baseline_evaluations();
        stderrs.extend(phi.iter().map(|a| a.stderr));
    }
    let wall = start.elapsed().as_secs_f64();
    Ok(ModeReport {
        wall_seconds: wall,
        evaluations: evals,
        baseline_evaluations: baselines,
        evaluations_per_second: if wall > 0.0 { evals as f64 / wall } else { 0.0 },
        mean_stderr: if stderrs.is_empty() {
            0.0
        } else {
            stderrs.iter().sum::<f64>() / stderrs.len() as f64
        },
        max_stderr: stderrs.iter().copied().fold(0.0, f64::max),
    })
}

pub fn run(args: &BenchArgs, base_seed: u64) -> Result<BenchReport> {
    let games: Vec<QuadraticGame> = (0..args.games)
        .map(|g| QuadraticGame::new(args.players, seed::derive(base_seed, &[g as u64])))
        .collect();
    let exact = if args.players <= EXACT_MAX_PLAYERS {
        Some(time_mode(&games, |g, _| shapley_exact(g))?)
    } else {
        log::warn!(
            "exact mode skipped: {} players exceed {EXACT_MAX_PLAYERS}",
            args.players
        );
        None
    };
    let mc = time_mode(&games, |g, i| {
        shapley_mc(
            g,
            args.permutations,
            seed::derive(base_seed, &[seed::label("bench"), i as u64]),
        )
    })?;
    Ok(BenchReport {
        games: args.games,
        players: args.players,
        permutations: args.permutations,
        exact,
        mc,
    })
}
