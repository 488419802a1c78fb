use crate::geo::{Point, Polygon, Rect};
use crate::{Error, Result};

/// Voronoi cells of a site set clipped to a rectangle.
#[derive(Debug, Clone, PartialEq)]
pub struct VoronoiDiagram {
    /// Counter-clockwise cell per site. Duplicate sites get an empty polygon.
    pub cells: Vec<Polygon>,
    /// For a duplicate site, the index of the first site at the same location.
    pub duplicate_of: Vec<Option<usize>>,
}

impl VoronoiDiagram {
    pub fn total_area(&self) -> f64 {
        self.cells.iter().map(Polygon::area).sum()
    }
}

fn cell_for(i: usize, sites: &[Point], unique: &[usize], bbox: &Rect) -> Polygon {
    let s = sites[i];
    let mut others: Vec<(f64, usize)> = unique
        .iter()
        .filter(|&&j| j != i)
        .map(|&j| (s.dist2(sites[j]), j))
        .collect();
    others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut poly = bbox.to_polygon();
    let mut reach2 = poly.vertices.iter().map(|v| v.dist2(s)).fold(0.0, f64::max);
    for (d2, j) in others {
        // a bisector farther than twice the cell radius cannot cut the cell
        if d2 > 4.0 * reach2 {
            break;
        }
        let o = sites[j];
        let normal = o.sub(s);
        let mid = s.lerp(o, 0.5);
        poly = poly.clip_half_plane(normal, normal.dot(mid));
        if poly.is_empty() {
            break;
        }
        reach2 = poly.vertices.iter().map(|v| v.dist2(s)).fold(0.0, f64::max);
    }
    poly
}

/// Builds each site's cell by intersecting the box with the half-planes
/// closer to that site than to every other site.
pub fn voronoi_regions(sites: &[Point], bbox: Rect) -> Result<VoronoiDiagram> {
    if sites.is_empty() {
        return Err(Error::config("Voronoi partition needs at least one site"));
    }
    if !(bbox.width() > 0.0 && bbox.height() > 0.0) {
        return Err(Error::config("Voronoi bounding box has zero area"));
    }
    let mut order: Vec<usize> = (0..sites.len()).collect();
    order.sort_by(|&a, &b| {
        sites[a]
            .x
            .total_cmp(&sites[b].x)
            .then(sites[a].y.total_cmp(&sites[b].y))
            .then(a.cmp(&b))
    });
    let mut duplicate_of = vec![None; sites.len()];
    for w in order.windows(2) {
        if sites[w[0]] == sites[w[1]] {
            duplicate_of[w[1]] = Some(duplicate_of[w[0]].unwrap_or(w[0]));
        }
    }
    let dups = duplicate_of.iter().filter(|d| d.is_some()).count();
    if dups > 0 {
        log::warn!("{dups} duplicate Voronoi sites ignored");
    }
    let unique: Vec<usize> = (0..sites.len())
        .filter(|&i| duplicate_of[i].is_none())
        .collect();

    let build = |i: usize| -> Polygon {
        if duplicate_of[i].is_some() {
            Polygon::default()
        } else {
            cell_for(i, sites, &unique, &bbox)
        }
    };
    #[cfg(feature = "parallel")]
    let cells = {
        use rayon::prelude::*;
        (0..sites.len()).into_par_iter().map(build).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let cells = (0..sites.len()).map(build).collect();
    Ok(VoronoiDiagram {
        cells,
        duplicate_of,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect() -> Rect {
        Rect::new(Point::new(-2.0, -1.0), Point::new(2.0, 1.0))
    }

    #[test]
    fn one_site_is_the_box() {
        let d = voronoi_regions(&[Point::new(0.3, 0.2)], rect()).unwrap();
        assert!((d.cells[0].area() - 8.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_pair_splits_at_bisector() {
        let d = voronoi_regions(&[Point::new(-1.0, 0.0), Point::new(1.0, 0.0)], rect()).unwrap();
        for (c, sign) in d.cells.iter().zip([-1.0, 1.0]) {
            assert!((c.area() - 4.0).abs() < 1e-12);
            assert!(c.vertices.iter().all(|v| v.x * sign >= -1e-12));
        }
    }

    #[test]
    fn coincident_sites_collapse() {
        let p = Point::new(0.5, 0.5);
        let d = voronoi_regions(&[p, p, p], rect()).unwrap();
        assert!((d.cells[0].area() - 8.0).abs() < 1e-12);
        assert!(d.cells[1].is_empty() && d.cells[2].is_empty());
        assert_eq!(d.duplicate_of, vec![None, Some(0), Some(0)]);
    }

    #[test]
    fn empty_site_set_is_error() {
        assert!(voronoi_regions(&[], rect()).is_err());
    }
}
