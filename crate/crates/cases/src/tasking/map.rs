use std::collections::BTreeMap;

use masim_core::env::Rect;
use petgraph::algo::astar;
use petgraph::graph::{NodeIndex, UnGraph};
use serde::{Deserialize, Serialize};

use super::TaskingError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedRect {
    pub name: String,
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl NamedRect {
    pub fn rect(&self) -> Rect {
        Rect::new(self.min, self.max)
    }
}

/// Warehouse floor: outer bounds, wall boxes and named regions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WarehouseMap {
    pub bounds: NamedRect,
    pub walls: Vec<NamedRect>,
    pub regions: Vec<NamedRect>,
    /// Clearance kept from wall boxes by planned paths.
    #[serde(default = "default_clearance")]
    pub clearance: f64,
}

fn default_clearance() -> f64 {
    0.6
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Whether segment `a`-`b` passes through the open interior of `r`
/// (Liang-Barsky clipping).
fn segment_hits(a: [f64; 2], b: [f64; 2], r: &Rect) -> bool {
    let d = [b[0] - a[0], b[1] - a[1]];
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for axis in 0..2 {
        if d[axis].abs() < 1e-15 {
            if a[axis] <= r.min[axis] || a[axis] >= r.max[axis] {
                return false;
            }
            continue;
        }
        let (mut lo, mut hi) = ((r.min[axis] - a[axis]) / d[axis], (r.max[axis] - a[axis]) / d[axis]);
        if lo > hi {
            std::mem::swap(&mut lo, &mut hi);
        }
        t0 = t0.max(lo);
        t1 = t1.min(hi);
        if t0 >= t1 {
            return false;
        }
    }
    t1 - t0 > 1e-12
}

impl WarehouseMap {
    pub fn region(&self, name: &str) -> Result<Rect, TaskingError> {
        self.regions
            .iter()
            .find(|r| r.name == name)
            .map(NamedRect::rect)
            .ok_or_else(|| TaskingError::UnknownRegion(name.to_string()))
    }

    pub fn wall_rects(&self) -> Vec<Rect> {
        self.walls.iter().map(NamedRect::rect).collect()
    }

    /// Walls inflated by slightly less than the clearance, so that paths
    /// grazing the inflated corners stay legal.
    fn blockers(&self) -> Vec<Rect> {
        self.walls.iter().map(|w| w.rect().inflate(self.clearance * 0.999)).collect()
    }

    fn corners(&self) -> Vec<[f64; 2]> {
        let b = self.bounds.rect();
        self.walls
            .iter()
            .flat_map(|w| {
                let r = w.rect().inflate(self.clearance);
                [[r.min[0], r.min[1]], [r.max[0], r.min[1]], [r.min[0], r.max[1]], [r.max[0], r.max[1]]]
            })
            .filter(|p| b.contains(*p))
            .collect()
    }

    pub fn visible(&self, a: [f64; 2], b: [f64; 2]) -> bool {
        self.blockers().iter().all(|r| !segment_hits(a, b, r))
    }

    /// Shortest polyline from `from` to `to` over the visibility graph of
    /// inflated wall corners; `None` when `to` is unreachable.
    pub fn shortest_path(&self, from: [f64; 2], to: [f64; 2]) -> Option<Vec<[f64; 2]>> {
        let blockers = self.blockers();
        let clear = |a: [f64; 2], b: [f64; 2]| blockers.iter().all(|r| !segment_hits(a, b, r));
        if clear(from, to) {
            return Some(vec![from, to]);
        }
        let mut pts = vec![from, to];
        pts.extend(self.corners());
        let mut g = UnGraph::<[f64; 2], f64>::new_undirected();
        let nodes: Vec<NodeIndex> = pts.iter().map(|p| g.add_node(*p)).collect();
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                if clear(pts[i], pts[j]) {
                    g.add_edge(nodes[i], nodes[j], dist(pts[i], pts[j]));
                }
            }
        }
        let (_, route) = astar(&g, nodes[0], |n| n == nodes[1], |e| *e.weight(), |n| dist(g[n], to))?;
        Some(route.into_iter().map(|n| g[n]).collect())
    }

    pub fn validate(&self, path: &str) -> Vec<crate::Issue> {
        let mut issues = Vec::new();
        let b = self.bounds.rect();
        let mut seen = BTreeMap::new();
        for (k, r) in self.regions.iter().enumerate() {
            if seen.insert(r.name.clone(), k).is_some() {
                issues.push(crate::Issue::new(format!("{path}.regions[{k}].name"), format!("duplicate region '{}'", r.name)));
            }
            if !(r.min[0] < r.max[0] && r.min[1] < r.max[1]) || !b.contains(r.min) || !b.contains(r.max) {
                issues.push(crate::Issue::new(format!("{path}.regions[{k}]"), "region must be a proper box inside the bounds"));
            }
        }
        for (k, w) in self.walls.iter().enumerate() {
            if !(w.min[0] < w.max[0] && w.min[1] < w.max[1]) {
                issues.push(crate::Issue::new(format!("{path}.walls[{k}]"), "wall must be a proper box"));
            }
            for r in &self.regions {
                if w.rect().inflate(self.clearance).overlaps(&r.rect()) {
                    issues.push(crate::Issue::new(
                        format!("{path}.walls[{k}]"),
                        format!("wall '{}' is within clearance of region '{}'", w.name, r.name),
                    ));
                }
            }
        }
        if !(self.clearance > 0.0) {
            issues.push(crate::Issue::new(format!("{path}.clearance"), "clearance must be positive"));
        }
        issues
    }
}

/// Point at arc length `s` along a polyline, clamped to its end.
pub fn point_along(path: &[[f64; 2]], s: f64) -> [f64; 2] {
    let mut left = s.max(0.0);
    for w in path.windows(2) {
        let l = dist(w[0], w[1]);
        if left <= l && l > 0.0 {
            let f = left / l;
            return [w[0][0] + f * (w[1][0] - w[0][0]), w[0][1] + f * (w[1][1] - w[0][1])];
        }
        left -= l;
    }
    *path.last().expect("non-empty path")
}

pub fn path_length(path: &[[f64; 2]]) -> f64 {
    path.windows(2).map(|w| dist(w[0], w[1])).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map() -> WarehouseMap {
        WarehouseMap {
            bounds: NamedRect { name: "floor".into(), min: [0.0, 0.0], max: [10.0, 10.0] },
            walls: vec![NamedRect { name: "W".into(), min: [4.0, 2.0], max: [6.0, 8.0] }],
            regions: vec![],
            clearance: 0.5,
        }
    }

    #[test]
    fn straight_when_clear() {
        assert_eq!(map().shortest_path([1.0, 1.0], [9.0, 1.0]).unwrap().len(), 2);
    }

    #[test]
    fn detours_around_wall() {
        let m = map();
        let p = m.shortest_path([2.0, 5.0], [8.0, 5.0]).unwrap();
        assert_eq!(p.len(), 4);
        let expected = 2.0 * (1.5f64.hypot(3.5)) + 3.0;
        assert!((path_length(&p) - expected).abs() < 1e-9, "{p:?}");
        for w in p.windows(2) {
            assert!(!segment_hits(w[0], w[1], &Rect::new([4.0, 2.0], [6.0, 8.0])));
        }
    }

    #[test]
    fn point_along_clamps() {
        let p = [[0.0, 0.0], [3.0, 0.0], [3.0, 4.0]];
        assert_eq!(point_along(&p, 2.0), [2.0, 0.0]);
        assert_eq!(point_along(&p, 5.0), [3.0, 2.0]);
        assert_eq!(point_along(&p, 50.0), [3.0, 4.0]);
    }
}
