//! Reference P1/P2 shape functions on triangles and per-element geometry.

/// Affine triangle data: area and barycentric gradients.
#[derive(Clone, Copy, Debug)]
pub struct TriangleGeom {
    pub verts: [[f64; 2]; 3],
    pub area: f64,
    pub grad_bary: [[f64; 2]; 3],
}

impl TriangleGeom {
    pub fn new(verts: [[f64; 2]; 3]) -> Self {
        let [p0, p1, p2] = verts;
        let det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
        let grad_bary = [
            [(p1[1] - p2[1]) / det, (p2[0] - p1[0]) / det],
            [(p2[1] - p0[1]) / det, (p0[0] - p2[0]) / det],
            [(p0[1] - p1[1]) / det, (p1[0] - p0[0]) / det],
        ];
        Self { verts, area: 0.5 * det.abs(), grad_bary }
    }

    pub fn point(&self, l: &[f64; 3]) -> [f64; 2] {
        let v = &self.verts;
        [
            l[0] * v[0][0] + l[1] * v[1][0] + l[2] * v[2][0],
            l[0] * v[0][1] + l[1] * v[1][1] + l[2] * v[2][1],
        ]
    }

    pub fn barycentric(&self, p: [f64; 2]) -> [f64; 3] {
        let g = &self.grad_bary;
        let v0 = self.verts[0];
        let l1 = g[1][0] * (p[0] - v0[0]) + g[1][1] * (p[1] - v0[1]);
        let l2 = g[2][0] * (p[0] - v0[0]) + g[2][1] * (p[1] - v0[1]);
        [1.0 - l1 - l2, l1, l2]
    }
}

/// P2 values: vertices `λi(2λi-1)`, then edges 01, 12, 20 as `4λiλj`.
pub fn p2_values(l: &[f64; 3]) -> [f64; 6] {
    [
        l[0] * (2.0 * l[0] - 1.0),
        l[1] * (2.0 * l[1] - 1.0),
        l[2] * (2.0 * l[2] - 1.0),
        4.0 * l[0] * l[1],
        4.0 * l[1] * l[2],
        4.0 * l[2] * l[0],
    ]
}

pub fn p2_gradients(l: &[f64; 3], g: &[[f64; 2]; 3]) -> [[f64; 2]; 6] {
    let lin = |a: f64, ga: [f64; 2], b: f64, gb: [f64; 2]| [4.0 * (a * gb[0] + b * ga[0]), 4.0 * (a * gb[1] + b * ga[1])];
    let vtx = |i: usize| [(4.0 * l[i] - 1.0) * g[i][0], (4.0 * l[i] - 1.0) * g[i][1]];
    [
        vtx(0),
        vtx(1),
        vtx(2),
        lin(l[0], g[0], l[1], g[1]),
        lin(l[1], g[1], l[2], g[2]),
        lin(l[2], g[2], l[0], g[0]),
    ]
}

/// Barycentric coordinates of the six P2 nodes in local order.
pub const P2_NODES: [[f64; 3]; 6] = [
    [1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0],
    [0.0, 0.0, 1.0],
    [0.5, 0.5, 0.0],
    [0.0, 0.5, 0.5],
    [0.5, 0.0, 0.5],
];
