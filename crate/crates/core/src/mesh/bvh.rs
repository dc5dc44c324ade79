//! Bounding-volume hierarchy over triangles for nearest-point queries.

use super::geometry::{closest_point_on_triangle, Vec3};

const LEAF_SIZE: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq)]
struct Aabb {
    min: Vec3,
    max: Vec3,
}

impl Aabb {
    fn empty() -> Self {
        Self {
            min: Vec3::repeat(f64::INFINITY),
            max: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    fn grow(&mut self, p: &Vec3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    fn merge(&mut self, o: &Aabb) {
        self.min = self.min.inf(&o.min);
        self.max = self.max.sup(&o.max);
    }

    fn distance_sq(&self, p: &Vec3) -> f64 {
        let mut d = 0.0;
        for i in 0..3 {
            let v = if p[i] < self.min[i] {
                self.min[i] - p[i]
            } else if p[i] > self.max[i] {
                p[i] - self.max[i]
            } else {
                0.0
            };
            d += v * v;
        }
        d
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Node {
    Leaf { bounds: Aabb, start: usize, end: usize },
    Inner { bounds: Aabb, left: usize, right: usize },
}

impl Node {
    fn bounds(&self) -> &Aabb {
        match self {
            Node::Leaf { bounds, .. } | Node::Inner { bounds, .. } => bounds,
        }
    }
}

/// Nearest-triangle result.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Nearest {
    pub face: usize,
    pub point: Vec3,
    pub lambdas: [f64; 3],
    pub distance_sq: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Bvh {
    nodes: Vec<Node>,
    order: Vec<usize>,
}

impl Bvh {
    pub fn build(vertices: &[Vec3], triangles: &[[usize; 3]]) -> Self {
        if triangles.is_empty() {
            return Self::default();
        }
        let boxes: Vec<Aabb> = triangles
            .iter()
            .map(|t| {
                let mut b = Aabb::empty();
                for &i in t {
                    b.grow(&vertices[i]);
                }
                b
            })
            .collect();
        let centers: Vec<Vec3> = boxes.iter().map(|b| (b.min + b.max) * 0.5).collect();
        let mut bvh = Self {
            nodes: Vec::with_capacity(2 * triangles.len() / LEAF_SIZE + 1),
            order: (0..triangles.len()).collect(),
        };
        bvh.split(&boxes, &centers, 0, triangles.len());
        bvh
    }

    fn split(&mut self, boxes: &[Aabb], centers: &[Vec3], start: usize, end: usize) -> usize {
        let mut bounds = Aabb::empty();
        for &i in &self.order[start..end] {
            bounds.merge(&boxes[i]);
        }
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { bounds, start, end });
            return id;
        }
        let mut cb = Aabb::empty();
        for &i in &self.order[start..end] {
            cb.grow(&centers[i]);
        }
        let ext = cb.max - cb.min;
        let axis = ext.imax();
        let mid = (start + end) / 2;
        self.order[start..end].sort_by(|&a, &b| {
            centers[a][axis]
                .total_cmp(&centers[b][axis])
                .then(a.cmp(&b))
        });
        // placeholder, patched once the children exist
        self.nodes.push(Node::Leaf { bounds, start, end });
        let left = self.split(boxes, centers, start, mid);
        let right = self.split(boxes, centers, mid, end);
        self.nodes[id] = Node::Inner {
            bounds,
            left,
            right,
        };
        id
    }

    /// Nearest accepted triangle to `p`, improving on `best` only strictly.
    pub fn nearest(
        &self,
        p: &Vec3,
        vertices: &[Vec3],
        triangles: &[[usize; 3]],
        accept: impl Fn(usize) -> bool,
        mut best: Option<Nearest>,
    ) -> Option<Nearest> {
        if self.nodes.is_empty() {
            return best;
        }
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            let bound = best.map_or(f64::INFINITY, |b| b.distance_sq);
            let node = &self.nodes[n];
            if node.bounds().distance_sq(p) >= bound {
                continue;
            }
            match node {
                Node::Leaf { start, end, .. } => {
                    for &f in &self.order[*start..*end] {
                        if !accept(f) {
                            continue;
                        }
                        let [a, b, c] = triangles[f];
                        let (q, l) =
                            closest_point_on_triangle(p, &vertices[a], &vertices[b], &vertices[c]);
                        let d = (q - p).norm_squared();
                        if best.is_none_or(|b| d < b.distance_sq) {
                            best = Some(Nearest {
                                face: f,
                                point: q,
                                lambdas: l,
                                distance_sq: d,
                            });
                        }
                    }
                }
                Node::Inner { left, right, .. } => {
                    let dl = self.nodes[*left].bounds().distance_sq(p);
                    let dr = self.nodes[*right].bounds().distance_sq(p);
                    // visit the nearer child first
                    if dl <= dr {
                        stack.push(*right);
                        stack.push(*left);
                    } else {
                        stack.push(*left);
                        stack.push(*right);
                    }
                }
            }
        }
        best
    }
}
