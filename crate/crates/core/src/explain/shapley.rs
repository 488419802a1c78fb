//! Exact and permutation-sampled Shapley values for coalition games.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::seed;
use crate::{Error, Result};

/// Largest player count accepted by [`shapley_exact`].
pub const EXACT_MAX_PLAYERS: usize = 20;

/// A cooperative game over `n_players` players.
///
/// `value` must be total over all subsets; `members[i]` tells whether player
/// `i` is in the coalition.
pub trait CoalitionGame: Sync {
    fn n_players(&self) -> usize;

    fn player_id(&self, i: usize) -> String {
        i.to_string()
    }

    fn value(&self, members: &[bool]) -> f64;

    /// Payoff of the empty coalition.
    fn baseline(&self) -> f64 {
        self.value(&vec![false; self.n_players()])
    }
}

impl<G: CoalitionGame + ?Sized> CoalitionGame for &G {
    fn n_players(&self) -> usize {
        (**self).n_players()
    }

    fn player_id(&self, i: usize) -> String {
        (**self).player_id(i)
    }

    fn value(&self, members: &[bool]) -> f64 {
        (**self).value(members)
    }

    fn baseline(&self) -> f64 {
        (**self).baseline()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub player: String,
    pub phi: f64,
    /// Standard error of `phi`; zero for exact values.
    pub stderr: f64,
    pub method: Method,
}

/// Game defined by a table of `2ⁿ` payoffs indexed by coalition bitmask.
#[derive(Debug, Clone)]
pub struct TableGame {
    pub n: usize,
    pub values: Vec<f64>,
}

impl TableGame {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if n > 63 || values.len() != 1usize << n {
            return Err(Error::config(format!(
                "a table game over {n} players needs 2^{n} values"
            )));
        }
        Ok(TableGame { n, values })
    }
}

pub fn mask_of(members: &[bool]) -> usize {
    members
        .iter()
        .enumerate()
        .fold(0usize, |m, (i, &b)| if b { m | (1 << i) } else { m })
}

impl CoalitionGame for TableGame {
    fn n_players(&self) -> usize {
        self.n
    }

    fn value(&self, members: &[bool]) -> f64 {
        self.values[mask_of(members)]
    }
}

/// Wraps a game and counts `value` calls. `baseline` calls are counted
/// separately.
pub struct CountingGame<G> {
    pub inner: G,
    values: AtomicU64,
    baselines: AtomicU64,
}

impl<G: CoalitionGame> CountingGame<G> {
    pub fn new(inner: G) -> Self {
        CountingGame {
            inner,
            values: AtomicU64::new(0),
            baselines: AtomicU64::new(0),
        }
    }

    pub fn value_evaluations(&self) -> u64 {
        self.values.load(Ordering::Relaxed)
    }

    pub fn baseline_evaluations(&self) -> u64 {
        self.baselines.load(Ordering::Relaxed)
    }
}

impl<G: CoalitionGame> CoalitionGame for CountingGame<G> {
    fn n_players(&self) -> usize {
        self.inner.n_players()
    }

    fn player_id(&self, i: usize) -> String {
        self.inner.player_id(i)
    }

    fn value(&self, members: &[bool]) -> f64 {
        self.values.fetch_add(1, Ordering::Relaxed);
        self.inner.value(members)
    }

    fn baseline(&self) -> f64 {
        self.baselines.fetch_add(1, Ordering::Relaxed);
        self.inner.baseline()
    }
}

fn members_of(mask: usize, n: usize) -> Vec<bool> {
    (0..n).map(|i| mask & (1 << i) != 0).collect()
}

/// Payoffs of all `2ⁿ` coalitions, indexed by bitmask.
fn all_values<G: CoalitionGame + ?Sized>(game: &G) -> Vec<f64> {
    let n = game.n_players();
    let eval = |mask: usize| game.value(&members_of(mask, n));
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..1usize << n).into_par_iter().map(eval).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..1usize << n).map(eval).collect()
    }
}

/// Exact Shapley values by enumerating every coalition:
/// `φᵢ = Σ_{S ⊆ N∖{i}} |S|!(n−|S|−1)!/n! · (v(S∪{i}) − v(S))`.
///
/// Evaluates the game exactly `2ⁿ` times.
pub fn shapley_exact<G: CoalitionGame + ?Sized>(game: &G) -> Result<Vec<Attribution>> {
    let n = game.n_players();
    if n > EXACT_MAX_PLAYERS {
        return Err(Error::Capacity(format!(
            "exact enumeration supports at most {EXACT_MAX_PLAYERS} players, got {n}; use the Monte Carlo estimator"
        )));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let values = all_values(game);
    // weight[s] = s!(n-s-1)!/n!
    let mut weight = vec![0.0; n];
    weight[0] = 1.0 / n as f64;
    for s in 1..n {
        weight[s] = weight[s - 1] * s as f64 / (n - s) as f64;
    }
    let phi_of = |i: usize| -> f64 {
        let bit = 1usize << i;
        let mut acc = 0.0;
        for mask in 0..values.len() {
            if mask & bit == 0 {
                let s = mask.count_ones() as usize;
                acc += weight[s] * (values[mask | bit] - values[mask]);
            }
        }
        acc
    };
    Ok((0..n)
        .map(|i| Attribution {
            player: game.player_id(i),
            phi: phi_of(i),
            stderr: 0.0,
            method: Method::Exact,
        })
        .collect())
}

/// Permutation-sampling estimate from `permutations` uniformly random join
/// orders. Each order costs exactly `n` `value` calls plus one shared
/// `baseline` call. Marginals telescope along every order, so the estimates
/// always sum to `v(N) − v(∅)`.
///
/// `stderr` is the sample standard deviation of a player's marginals divided
/// by `√M`; it is zero when `M = 1`.
pub fn shapley_mc<G: CoalitionGame + ?Sized>(
    game: &G,
    permutations: usize,
    seed: u64,
) -> Result<Vec<Attribution>> {
    if permutations == 0 {
        return Err(Error::config(
            "Monte Carlo Shapley needs at least one permutation",
        ));
    }
    let n = game.n_players();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut rng = seed::rng(seed);
    let orders: Vec<Vec<usize>> = (0..permutations)
        .map(|_| {
            let mut p: Vec<usize> = (0..n).collect();
            p.shuffle(&mut rng);
            p
        })
        .collect();
    let base = game.baseline();
    let walk = |order: &Vec<usize>| -> Vec<f64> {
        let mut members = vec![false; n];
        let mut marginals = vec![0.0; n];
        let mut prev = base;
        for &p in order {
            members[p] = true;
            let v = game.value(&members);
            marginals[p] = v - prev;
            prev = v;
        }
        marginals
    };
    #[cfg(feature = "parallel")]
    let samples: Vec<Vec<f64>> = {
        use rayon::prelude::*;
        orders.par_iter().map(walk).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let samples: Vec<Vec<f64>> = orders.iter().map(walk).collect();

    let m = permutations as f64;
    Ok((0..n)
        .map(|i| {
            let mean = samples.iter().map(|s| s[i]).sum::<f64>() / m;
            let stderr = if permutations > 1 {
                let ss: f64 = samples.iter().map(|s| (s[i] - mean).powi(2)).sum();
                (ss / (m - 1.0)).sqrt() / m.sqrt()
            } else {
                0.0
            };
            Attribution {
                player: game.player_id(i),
                phi: mean,
                stderr,
                method: Method::MonteCarlo,
            }
        })
        .collect())
}

/// Exact values up to `exact_limit` players, permutation sampling beyond.
pub fn shapley_auto<G: CoalitionGame + ?Sized>(
    game: &G,
    exact_limit: usize,
    permutations: usize,
    seed: u64,
) -> Result<Vec<Attribution>> {
    if game.n_players() <= exact_limit.min(EXACT_MAX_PLAYERS) {
        shapley_exact(game)
    } else {
        shapley_mc(game, permutations, seed)
    }
}
