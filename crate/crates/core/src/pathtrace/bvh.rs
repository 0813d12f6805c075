//! Binary BVH over world-space triangles, median split on the longest axis.

use glam::Vec3;

use crate::geom::{Aabb, Ray, Triangle};

#[derive(Debug)]
struct Node {
    aabb: Aabb,
    /// Leaf when `count > 0`: triangles `tri_order[start..start+count]`.
    /// Interior otherwise: children at `start` and `start + 1`.
    start: u32,
    count: u32,
}

pub struct Bvh {
    nodes: Vec<Node>,
    tri_order: Vec<u32>,
}

#[derive(Debug, Clone, Copy)]
pub struct Hit {
    pub t: f32,
    pub triangle: u32,
    pub u: f32,
    pub v: f32,
}

const LEAF_SIZE: usize = 4;

impl Bvh {
    pub fn build(triangles: &[Triangle]) -> Self {
        let mut tri_order: Vec<u32> = (0..triangles.len() as u32).collect();
        let mut nodes = Vec::new();
        if triangles.is_empty() {
            nodes.push(Node {
                aabb: Aabb::empty(),
                start: 0,
                count: 0,
            });
            return Self { nodes, tri_order };
        }
        let centroids: Vec<Vec3> = triangles.iter().map(|t| t.aabb().centroid()).collect();
        nodes.push(Node {
            aabb: Aabb::empty(),
            start: 0,
            count: 0,
        });
        build_node(
            0,
            0,
            triangles.len(),
            triangles,
            &centroids,
            &mut tri_order,
            &mut nodes,
        );
        Self { nodes, tri_order }
    }

    /// Closest accepted hit. `filter` sees the triangle index and can reject
    /// candidates (e.g. transparent surfaces) without ending traversal.
    pub fn nearest_hit_filtered(
        &self,
        triangles: &[Triangle],
        ray: &Ray,
        t_min: f32,
        t_max: f32,
        mut filter: impl FnMut(u32) -> bool,
    ) -> Option<Hit> {
        let inv_dir = ray.dir.recip();
        let mut best: Option<Hit> = None;
        let mut limit = t_max;
        let mut stack = [0u32; 64];
        let mut sp = 0usize;
        stack[sp] = 0;
        sp += 1;
        while sp > 0 {
            sp -= 1;
            let node = &self.nodes[stack[sp] as usize];
            if node.aabb.is_empty() || !node.aabb.hit(ray.origin, inv_dir, t_min, limit) {
                continue;
            }
            if node.count > 0 {
                for &ti in &self.tri_order[node.start as usize..(node.start + node.count) as usize]
                {
                    if !filter(ti) {
                        continue;
                    }
                    if let Some((t, u, v)) = triangles[ti as usize].intersect(ray, t_min, limit) {
                        limit = t;
                        best = Some(Hit {
                            t,
                            triangle: ti,
                            u,
                            v,
                        });
                    }
                }
            } else {
                stack[sp] = node.start;
                stack[sp + 1] = node.start + 1;
                sp += 2;
            }
        }
        best
    }

    pub fn nearest_hit(
        &self,
        triangles: &[Triangle],
        ray: &Ray,
        t_min: f32,
        t_max: f32,
    ) -> Option<Hit> {
        self.nearest_hit_filtered(triangles, ray, t_min, t_max, |_| true)
    }

    /// Visit every hit in (t_min, t_max) in traversal order (not sorted).
    /// The callback returns false to stop early.
    pub fn for_each_hit(
        &self,
        triangles: &[Triangle],
        ray: &Ray,
        t_min: f32,
        t_max: f32,
        mut visit: impl FnMut(Hit) -> bool,
    ) {
        let inv_dir = ray.dir.recip();
        let mut stack = [0u32; 64];
        let mut sp = 0usize;
        stack[sp] = 0;
        sp += 1;
        while sp > 0 {
            sp -= 1;
            let node = &self.nodes[stack[sp] as usize];
            if node.aabb.is_empty() || !node.aabb.hit(ray.origin, inv_dir, t_min, t_max) {
                continue;
            }
            if node.count > 0 {
                for &ti in &self.tri_order[node.start as usize..(node.start + node.count) as usize]
                {
                    if let Some((t, u, v)) = triangles[ti as usize].intersect(ray, t_min, t_max) {
                        if !visit(Hit {
                            t,
                            triangle: ti,
                            u,
                            v,
                        }) {
                            return;
                        }
                    }
                }
            } else {
                stack[sp] = node.start;
                stack[sp + 1] = node.start + 1;
                sp += 2;
            }
        }
    }
}

fn build_node(
    node_idx: usize,
    start: usize,
    count: usize,
    triangles: &[Triangle],
    centroids: &[Vec3],
    tri_order: &mut [u32],
    nodes: &mut Vec<Node>,
) {
    let mut aabb = Aabb::empty();
    for &ti in &tri_order[start..start + count] {
        aabb.grow_box(&triangles[ti as usize].aabb());
    }

    if count <= LEAF_SIZE {
        nodes[node_idx] = Node {
            aabb,
            start: start as u32,
            count: count as u32,
        };
        return;
    }

    let mut cbox = Aabb::empty();
    for &ti in &tri_order[start..start + count] {
        cbox.grow_point(centroids[ti as usize]);
    }
    let extent = cbox.extent();
    let axis = if extent.x >= extent.y && extent.x >= extent.z {
        0
    } else if extent.y >= extent.z {
        1
    } else {
        2
    };

    let slice = &mut tri_order[start..start + count];
    // Sorting (rather than select_nth) keeps the build layout fully
    // deterministic regardless of the input order.
    slice.sort_by(|&a, &b| {
        centroids[a as usize][axis]
            .total_cmp(&centroids[b as usize][axis])
            .then(a.cmp(&b))
    });
    let mid = count / 2;

    let left = nodes.len();
    nodes.push(Node {
        aabb: Aabb::empty(),
        start: 0,
        count: 0,
    });
    nodes.push(Node {
        aabb: Aabb::empty(),
        start: 0,
        count: 0,
    });
    nodes[node_idx] = Node {
        aabb,
        start: left as u32,
        count: 0,
    };
    build_node(left, start, mid, triangles, centroids, tri_order, nodes);
    build_node(
        left + 1,
        start + mid,
        count - mid,
        triangles,
        centroids,
        tri_order,
        nodes,
    );
}
