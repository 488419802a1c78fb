use std::collections::{BTreeSet, HashMap};

use crate::geo::{collinear_overlap, ring_signed_area, Containment, Point, Polygon};
use crate::grid::GridSpec;

use super::voronoi::VoronoiDiagram;

/// A cluster's territory: the union of its member sites' Voronoi cells.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClusterRegion {
    /// Convex pieces with disjoint interiors.
    pub pieces: Vec<Polygon>,
    /// Member sites, used to settle points on shared borders.
    pub members: Vec<Point>,
}

impl ClusterRegion {
    pub fn area(&self) -> f64 {
        self.pieces.iter().map(Polygon::area).sum()
    }

    fn classify(&self, p: Point, eps: f64) -> Containment {
        let mut best = Containment::Outside;
        for piece in &self.pieces {
            match piece.classify_convex(p, eps) {
                Containment::Inside => return Containment::Inside,
                Containment::Boundary => best = Containment::Boundary,
                Containment::Outside => {}
            }
        }
        best
    }

    fn nearest_member_d2(&self, p: Point) -> f64 {
        self.members
            .iter()
            .map(|m| m.dist2(p))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Groups Voronoi cells by cluster label.
pub fn cluster_regions(
    labels: &[usize],
    k: usize,
    sites: &[Point],
    diagram: &VoronoiDiagram,
) -> Vec<ClusterRegion> {
    let mut regions = vec![ClusterRegion::default(); k];
    for (i, &l) in labels.iter().enumerate() {
        regions[l].members.push(sites[i]);
        let cell = &diagram.cells[i];
        if !cell.is_empty() {
            regions[l].pieces.push(cell.clone());
        }
    }
    regions
}

/// Outline of a region as closed rings (counter-clockwise outer rings,
/// clockwise holes), found by cancelling edges shared between pieces.
pub fn boundary_rings(region: &ClusterRegion, eps: f64) -> Vec<Vec<Point>> {
    // merge vertices closer than eps
    let mut verts: Vec<Point> = Vec::new();
    let mut piece_ids: Vec<Vec<usize>> = Vec::new();
    let cell = eps.max(f64::MIN_POSITIVE) * 4.0;
    let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for piece in &region.pieces {
        let mut ids = Vec::with_capacity(piece.vertices.len());
        for &v in &piece.vertices {
            let key = ((v.x / cell).floor() as i64, (v.y / cell).floor() as i64);
            let mut found = None;
            'search: for dx in -1..=1 {
                for dy in -1..=1 {
                    if let Some(list) = buckets.get(&(key.0 + dx, key.1 + dy)) {
                        if let Some(&id) = list.iter().find(|&&id| verts[id].dist(v) <= eps) {
                            found = Some(id);
                            break 'search;
                        }
                    }
                }
            }
            let id = found.unwrap_or_else(|| {
                verts.push(v);
                buckets.entry(key).or_default().push(verts.len() - 1);
                verts.len() - 1
            });
            if ids.last() != Some(&id) {
                ids.push(id);
            }
        }
        while ids.len() > 1 && ids.first() == ids.last() {
            ids.pop();
        }
        piece_ids.push(ids);
    }
    let mut edges: HashMap<(usize, usize), usize> = HashMap::new();
    for ids in &piece_ids {
        if ids.len() < 3 {
            continue;
        }
        for i in 0..ids.len() {
            let e = (ids[i], ids[(i + 1) % ids.len()]);
            let rev = (e.1, e.0);
            match edges.get_mut(&rev) {
                Some(n) if *n > 0 => {
                    *n -= 1;
                }
                _ => *edges.entry(e).or_insert(0) += 1,
            }
        }
    }
    let mut next: HashMap<usize, Vec<usize>> = HashMap::new();
    let mut remaining: Vec<(usize, usize)> = edges
        .into_iter()
        .filter(|&(_, n)| n > 0)
        .flat_map(|(e, n)| std::iter::repeat_n(e, n))
        .collect();
    remaining.sort_unstable();
    for &(a, b) in &remaining {
        next.entry(a).or_default().push(b);
    }
    for list in next.values_mut() {
        list.reverse();
    }
    let mut rings = Vec::new();
    for &(start, _) in &remaining {
        while next.get(&start).is_some_and(|l| !l.is_empty()) {
            let mut ring = vec![start];
            let mut cur = next.get_mut(&start).unwrap().pop().unwrap();
            let mut guard = 0;
            while cur != start && guard <= remaining.len() {
                ring.push(cur);
                match next.get_mut(&cur).and_then(|l| l.pop()) {
                    Some(n) => cur = n,
                    None => break,
                }
                guard += 1;
            }
            let pts: Vec<Point> = ring.iter().map(|&i| verts[i]).collect();
            if pts.len() >= 3 && ring_signed_area(&pts).abs() > 0.0 {
                rings.push(simplify_ring(pts, eps));
            }
        }
    }
    rings
}

/// Drops vertices lying on the straight line through their neighbors.
fn simplify_ring(mut ring: Vec<Point>, eps: f64) -> Vec<Point> {
    let mut i = 0;
    while ring.len() > 3 && i < ring.len() {
        let n = ring.len();
        let a = ring[(i + n - 1) % n];
        let b = ring[i];
        let c = ring[(i + 1) % n];
        let ac = c.sub(a);
        let len = ac.dot(ac).sqrt();
        let off = if len > 0.0 {
            ac.cross(b.sub(a)).abs() / len
        } else {
            0.0
        };
        let between = b.sub(a).dot(ac) >= 0.0 && c.sub(b).dot(ac) >= 0.0;
        if off <= eps && between {
            ring.remove(i);
        } else {
            i += 1;
        }
    }
    ring
}

/// Assigns each grid cell to the cluster whose region contains the cell
/// center. A center on a shared border goes to the cluster with the nearest
/// member site, ties to the lower cluster id.
pub fn assign_grids(grid: &GridSpec, regions: &[ClusterRegion]) -> Vec<usize> {
    let eps = 1e-9 * grid.planar_rect().diagonal().max(1.0);
    grid.cells()
        .map(|cell| {
            let p = grid.cell_center(cell);
            let mut boundary = Vec::new();
            for (c, r) in regions.iter().enumerate() {
                match r.classify(p, eps) {
                    Containment::Inside => return c,
                    Containment::Boundary => boundary.push(c),
                    Containment::Outside => {}
                }
            }
            let candidates: Vec<usize> = if boundary.is_empty() {
                (0..regions.len()).collect()
            } else {
                boundary
            };
            candidates
                .into_iter()
                .min_by(|&a, &b| {
                    regions[a]
                        .nearest_member_d2(p)
                        .total_cmp(&regions[b].nearest_member_d2(p))
                        .then(a.cmp(&b))
                })
                .unwrap_or(0)
        })
        .collect()
}

/// Clusters whose regions share a border of positive length (> `min_len`).
/// `line_eps` is the collinearity tolerance for matching edges.
pub fn cluster_adjacency(
    regions: &[ClusterRegion],
    min_len: f64,
    line_eps: f64,
) -> Vec<BTreeSet<usize>> {
    struct Piece<'a> {
        cluster: usize,
        poly: &'a Polygon,
        min: Point,
        max: Point,
    }
    let mut pieces: Vec<Piece<'_>> = regions
        .iter()
        .enumerate()
        .flat_map(|(c, r)| r.pieces.iter().map(move |p| (c, p)))
        .filter_map(|(cluster, poly)| {
            let b = poly.bounds()?;
            Some(Piece {
                cluster,
                poly,
                min: b.min,
                max: b.max,
            })
        })
        .collect();
    pieces.sort_by(|a, b| a.min.x.total_cmp(&b.min.x));
    let mut adj = vec![BTreeSet::new(); regions.len()];
    for i in 0..pieces.len() {
        for j in i + 1..pieces.len() {
            let (a, b) = (&pieces[i], &pieces[j]);
            if b.min.x > a.max.x + line_eps {
                break;
            }
            if a.cluster == b.cluster
                || adj[a.cluster].contains(&b.cluster)
                || b.min.y > a.max.y + line_eps
                || a.min.y > b.max.y + line_eps
            {
                continue;
            }
            let shared: f64 = a
                .poly
                .edges()
                .flat_map(|(p, q)| {
                    b.poly
                        .edges()
                        .map(move |(r, s)| collinear_overlap(p, q, r, s, line_eps))
                })
                .sum();
            if shared > min_len {
                adj[a.cluster].insert(b.cluster);
                adj[b.cluster].insert(a.cluster);
            }
        }
    }
    adj
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::Rect;
    use crate::grid::BBox;
    use crate::partition::voronoi::voronoi_regions;

    fn square_regions(n: usize) -> (Vec<ClusterRegion>, Rect) {
        let rect = Rect::new(Point::new(0.0, 0.0), Point::new(n as f64, n as f64));
        let sites: Vec<Point> = (0..n * n)
            .map(|i| Point::new((i % n) as f64 + 0.5, (i / n) as f64 + 0.5))
            .collect();
        let d = voronoi_regions(&sites, rect).unwrap();
        let labels: Vec<usize> = (0..n * n).collect();
        (cluster_regions(&labels, n * n, &sites, &d), rect)
    }

    #[test]
    fn lattice_center_has_four_neighbors() {
        let (regions, _) = square_regions(3);
        let adj = cluster_adjacency(&regions, 1e-9, 1e-9);
        assert_eq!(adj[4], BTreeSet::from([1, 3, 5, 7]));
        assert_eq!(adj[0], BTreeSet::from([1, 3]));
        for (a, set) in adj.iter().enumerate() {
            assert!(!set.contains(&a));
            for b in set {
                assert!(adj[*b].contains(&a));
            }
        }
    }

    #[test]
    fn single_cluster_is_box_without_neighbors() {
        let (regions, rect) = square_regions(3);
        let merged = ClusterRegion {
            pieces: regions.iter().flat_map(|r| r.pieces.clone()).collect(),
            members: regions.iter().flat_map(|r| r.members.clone()).collect(),
        };
        let rings = boundary_rings(&merged, 1e-9);
        assert_eq!(rings.len(), 1);
        assert!((ring_signed_area(&rings[0]) - rect.area()).abs() < 1e-9);
        assert_eq!(rings[0].len(), 4);
        let adj = cluster_adjacency(&[merged], 1e-9, 1e-9);
        assert!(adj[0].is_empty());
    }

    #[test]
    fn ring_with_hole() {
        // all lattice squares except the center
        let (regions, _) = square_regions(3);
        let ring = ClusterRegion {
            pieces: regions
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != 4)
                .flat_map(|(_, r)| r.pieces.clone())
                .collect(),
            members: vec![],
        };
        let rings = boundary_rings(&ring, 1e-9);
        assert_eq!(rings.len(), 2);
        let total: f64 = rings.iter().map(|r| ring_signed_area(r)).sum();
        assert!((total - 8.0).abs() < 1e-9);
    }

    #[test]
    fn two_halves_assign_by_column() {
        let grid = GridSpec::new(BBox::new(104.0, 30.0, 104.02, 30.02), 2, 2).unwrap();
        let rect = grid.planar_rect();
        let cy = 0.5 * (rect.min.y + rect.max.y);
        let sites = vec![
            Point::new(rect.min.x + 0.25 * rect.width(), cy),
            Point::new(rect.min.x + 0.75 * rect.width(), cy),
        ];
        let d = voronoi_regions(&sites, rect).unwrap();
        let regions = cluster_regions(&[0, 1], 2, &sites, &d);
        assert_eq!(assign_grids(&grid, &regions), vec![0, 1, 0, 1]);
        let adj = cluster_adjacency(&regions, 1e-9, 1e-6);
        assert_eq!(adj[0], BTreeSet::from([1]));
    }

    #[test]
    fn border_centers_go_to_nearest_member() {
        // one column of cells whose centers sit exactly on the bisector x = 0
        let rect = Rect::new(Point::new(-1.0, -1.0), Point::new(1.0, 1.0));
        let sites = vec![
            Point::new(-0.5, 0.0),
            Point::new(0.5, 0.0),
            Point::new(0.5, 0.9),
        ];
        let d = voronoi_regions(&sites, rect).unwrap();
        let regions = cluster_regions(&[1, 0, 0], 2, &sites, &d);
        let p = Point::new(0.0, 0.0);
        assert_eq!(regions[0].classify(p, 1e-9), Containment::Boundary);
        assert_eq!(regions[1].classify(p, 1e-9), Containment::Boundary);
        // equidistant members: tie goes to the lower cluster id
        assert_eq!(
            regions[0].nearest_member_d2(p),
            regions[1].nearest_member_d2(p)
        );
    }
}
