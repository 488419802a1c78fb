use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geo::Point;
use crate::seed;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    pub centroids: Vec<Point>,
    /// Within-cluster sum of squared distances to the final centroids.
    pub inertia: f64,
    /// Inertia after every assignment step, ending with the final inertia.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
}

fn distinct_count(points: &[Point]) -> usize {
    let mut v: Vec<(f64, f64)> = points.iter().map(|p| (p.x, p.y)).collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    v.dedup();
    v.len()
}

fn nearest(p: Point, centroids: &[Point]) -> (usize, f64) {
    let mut best = (0, p.dist2(centroids[0]));
    for (j, c) in centroids.iter().enumerate().skip(1) {
        let d = p.dist2(*c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn seed_plus_plus(points: &[Point], k: usize, rng: &mut impl Rng) -> Vec<Point> {
    let mut centroids = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..points.len())]);
    let mut d2: Vec<f64> = points.iter().map(|p| p.dist2(centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let mut r = rng.random::<f64>() * total;
        let mut pick = None;
        for (i, &w) in d2.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            pick = Some(i);
            if r < w {
                break;
            }
            r -= w;
        }
        // pick is always Some: fewer than k distinct centers chosen so far
        let c = points[pick.expect("a point with positive distance remains")];
        centroids.push(c);
        for (w, p) in d2.iter_mut().zip(points) {
            *w = w.min(p.dist2(c));
        }
    }
    centroids
}

fn inertia(points: &[Point], labels: &[usize], centroids: &[Point]) -> f64 {
    points
        .iter()
        .zip(labels)
        .map(|(p, &l)| p.dist2(centroids[l]))
        .sum()
}

fn means(points: &[Point], labels: &[usize], k: usize) -> (Vec<Point>, Vec<usize>) {
    let mut sums = vec![(0.0, 0.0); k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        sums[l].0 += p.x;
        sums[l].1 += p.y;
        counts[l] += 1;
    }
    let cs = sums
        .iter()
        .zip(&counts)
        .map(|(s, &n)| {
            if n == 0 {
                Point::default()
            } else {
                Point::new(s.0 / n as f64, s.1 / n as f64)
            }
        })
        .collect();
    (cs, counts)
}

/// Moves the farthest point of the largest cluster into each empty cluster.
fn repair_empty(
    points: &[Point],
    labels: &mut [usize],
    centroids: &mut Vec<Point>,
    counts: &mut Vec<usize>,
) {
    let k = centroids.len();
    while let Some(empty) = counts.iter().position(|&n| n == 0) {
        let largest = (0..k)
            .max_by(|&a, &b| counts[a].cmp(&counts[b]).then(b.cmp(&a)))
            .unwrap();
        let far = (0..points.len())
            .filter(|&i| labels[i] == largest)
            .max_by(|&a, &b| {
                points[a]
                    .dist2(centroids[largest])
                    .total_cmp(&points[b].dist2(centroids[largest]))
                    .then(b.cmp(&a))
            })
            .unwrap();
        labels[far] = empty;
        let (cs, ns) = means(points, labels, k);
        *centroids = cs;
        *counts = ns;
    }
}

/// Lloyd's algorithm from a seeded k-means++ initialization. Stops when an
/// assignment step changes no label or after `max_iter` update steps.
pub fn kmeans(points: &[Point], k: usize, seed: u64, max_iter: usize) -> Result<KMeansResult> {
    if points.is_empty() {
        return Err(Error::config("k-means needs at least one point"));
    }
    if k == 0 {
        return Err(Error::config("k must be positive"));
    }
    let distinct = distinct_count(points);
    if k > distinct {
        return Err(Error::config(format!(
            "k = {k} exceeds the {distinct} distinct points available"
        )));
    }
    let mut rng = seed::rng(seed);
    let mut centroids = seed_plus_plus(points, k, &mut rng);
    let mut labels: Vec<usize> = points.iter().map(|p| nearest(*p, &centroids).0).collect();
    let mut history = vec![inertia(points, &labels, &centroids)];
    let mut iterations = 0;
    let max_iter = max_iter.max(1);
    while iterations < max_iter {
        iterations += 1;
        let (cs, mut counts) = means(points, &labels, k);
        centroids = cs;
        repair_empty(points, &mut labels, &mut centroids, &mut counts);
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let cur = labels[i];
            let (j, d) = nearest(*p, &centroids);
            // keep the current label on ties so assignments settle
            if j != cur && d < p.dist2(centroids[cur]) {
                labels[i] = j;
                changed = true;
            }
        }
        history.push(inertia(points, &labels, &centroids));
        if !changed {
            break;
        }
    }
    let (cs, mut counts) = means(points, &labels, k);
    centroids = cs;
    repair_empty(points, &mut labels, &mut centroids, &mut counts);
    let final_inertia = inertia(points, &labels, &centroids);
    history.push(final_inertia);
    Ok(KMeansResult {
        labels,
        centroids,
        inertia: final_inertia,
        inertia_history: history,
        iterations,
    })
}
