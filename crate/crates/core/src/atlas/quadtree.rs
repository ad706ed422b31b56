use crate::error::{Error, Result};
use crate::layout::{Bounds, Layout2D};

pub const DEFAULT_LEAF_CAPACITY: usize = 64;

/// Coincident points can never be separated; splitting stops here.
const MAX_DEPTH: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub bounds: Bounds,
    /// Quadrants in the order (low x, low y), (high x, low y), (low x, high y),
    /// (high x, high y).
    pub children: Option<[u32; 4]>,
    /// Point indices, only populated on leaves.
    pub points: Vec<u32>,
}

/// Region quadtree over layout coordinates. Splits happen at the midpoint
/// of each axis; a point on a split line belongs to the upper quadrant.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialIndex {
    pub leaf_capacity: usize,
    nodes: Vec<Node>,
    coords: Vec<[f64; 2]>,
}

fn quadrant(b: &Bounds, p: [f64; 2]) -> usize {
    let mx = (b.min_x + b.max_x) / 2.0;
    let my = (b.min_y + b.max_y) / 2.0;
    (p[0] >= mx) as usize + 2 * (p[1] >= my) as usize
}

fn split(b: &Bounds) -> [Bounds; 4] {
    let mx = (b.min_x + b.max_x) / 2.0;
    let my = (b.min_y + b.max_y) / 2.0;
    [
        Bounds { min_x: b.min_x, min_y: b.min_y, max_x: mx, max_y: my },
        Bounds { min_x: mx, min_y: b.min_y, max_x: b.max_x, max_y: my },
        Bounds { min_x: b.min_x, min_y: my, max_x: mx, max_y: b.max_y },
        Bounds { min_x: mx, min_y: my, max_x: b.max_x, max_y: b.max_y },
    ]
}

fn inside(r: &Bounds, p: [f64; 2]) -> bool {
    r.contains(p)
}

fn covers(outer: &Bounds, inner: &Bounds) -> bool {
    outer.min_x <= inner.min_x && outer.max_x >= inner.max_x && outer.min_y <= inner.min_y && outer.max_y >= inner.max_y
}

impl SpatialIndex {
    pub fn build(coords: &[[f64; 2]], leaf_capacity: usize) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::invalid("cannot index an empty layout"));
        }
        if leaf_capacity == 0 {
            return Err(Error::invalid("leaf capacity must be positive"));
        }
        let mut index = SpatialIndex {
            leaf_capacity,
            nodes: vec![Node {
                bounds: Bounds::of(coords),
                children: None,
                points: Vec::new(),
            }],
            coords: coords.to_vec(),
        };
        let all: Vec<u32> = (0..coords.len() as u32).collect();
        index.fill(0, all, 0);
        Ok(index)
    }

    fn fill(&mut self, node: usize, points: Vec<u32>, depth: usize) {
        if points.len() <= self.leaf_capacity || depth >= MAX_DEPTH {
            self.nodes[node].points = points;
            return;
        }
        let bounds = self.nodes[node].bounds;
        let mut parts: [Vec<u32>; 4] = Default::default();
        for p in points {
            parts[quadrant(&bounds, self.coords[p as usize])].push(p);
        }
        let first = self.nodes.len() as u32;
        for b in split(&bounds) {
            self.nodes.push(Node {
                bounds: b,
                children: None,
                points: Vec::new(),
            });
        }
        self.nodes[node].children = Some([first, first + 1, first + 2, first + 3]);
        for (q, part) in parts.into_iter().enumerate() {
            self.fill(first as usize + q, part, depth + 1);
        }
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn bounds(&self) -> Bounds {
        self.nodes[0].bounds
    }

    pub fn root(&self) -> &Node {
        &self.nodes[0]
    }

    pub fn node(&self, id: u32) -> &Node {
        &self.nodes[id as usize]
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    /// Leaves in depth-first order.
    pub fn leaves(&self) -> impl Iterator<Item = &Node> {
        self.nodes.iter().filter(|n| n.children.is_none())
    }

    /// Edges from the root to the deepest leaf.
    pub fn depth(&self) -> usize {
        fn walk(ix: &SpatialIndex, node: u32) -> usize {
            match ix.node(node).children {
                None => 0,
                Some(c) => 1 + c.iter().map(|&ch| walk(ix, ch)).max().unwrap_or(0),
            }
        }
        walk(self, 0)
    }

    /// Indices of all points inside `rect` (edges inclusive), ascending.
    pub fn query(&self, rect: &Bounds) -> Vec<u32> {
        let mut out = Vec::new();
        let mut stack = vec![0u32];
        while let Some(id) = stack.pop() {
            let node = &self.nodes[id as usize];
            if !node.bounds.intersects(rect) {
                continue;
            }
            match node.children {
                Some(children) => {
                    if covers(rect, &node.bounds) {
                        self.collect(id, &mut out);
                    } else {
                        stack.extend(children);
                    }
                }
                None => out.extend(node.points.iter().filter(|&&p| inside(rect, self.coords[p as usize]))),
            }
        }
        out.sort_unstable();
        out
    }

    fn collect(&self, id: u32, out: &mut Vec<u32>) {
        let node = &self.nodes[id as usize];
        match node.children {
            Some(children) => children.iter().for_each(|&c| self.collect(c, out)),
            None => out.extend_from_slice(&node.points),
        }
    }
}

pub fn build_index(layout: &Layout2D, leaf_capacity: usize) -> Result<SpatialIndex> {
    SpatialIndex::build(&layout.coords, leaf_capacity)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_single_leaf() {
        let ix = SpatialIndex::build(&[[1.0, 1.0]], 64).unwrap();
        assert_eq!(ix.node_count(), 1);
        assert_eq!(ix.root().points, vec![0]);
        assert_eq!(ix.depth(), 0);
    }

    #[test]
    fn corners_split_once() {
        let ix = SpatialIndex::build(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]], 1).unwrap();
        assert_eq!(ix.depth(), 1);
        let leaves: Vec<_> = ix.leaves().map(|l| l.points.clone()).collect();
        assert_eq!(leaves, vec![vec![0], vec![1], vec![2], vec![3]]);
    }

    #[test]
    fn coincident_points_stop_splitting() {
        let ix = SpatialIndex::build(&[[0.5, 0.5]; 10], 2).unwrap();
        assert_eq!(ix.leaves().map(|l| l.points.len()).sum::<usize>(), 10);
        assert!(ix.depth() <= MAX_DEPTH);
    }

    #[test]
    fn empty_rejected() {
        assert!(SpatialIndex::build(&[], 4).is_err());
    }
}
