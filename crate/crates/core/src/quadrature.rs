//! Fixed quadrature rules on the reference triangle and the unit interval.

/// Quadrature rule with barycentric points on a triangle or parameters on [0,1].
#[derive(Clone, Debug)]
pub struct QuadRule<const D: usize> {
    pub points: Vec<[f64; D]>,
    pub weights: Vec<f64>,
}

impl<const D: usize> QuadRule<D> {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64; D], f64)> {
        self.points.iter().zip(self.weights.iter().copied())
    }
}

pub type TriangleRule = QuadRule<3>;
pub type EdgeRule = QuadRule<1>;

/// Classical 7-point rule of degree 5 (centroid plus two symmetric orbits).
///
/// Weights sum to one; multiply by the triangle area when integrating.
pub fn triangle_rule_7pt() -> TriangleRule {
    let s15 = 15f64.sqrt();
    let a1 = (6.0 - s15) / 21.0;
    let a2 = (6.0 + s15) / 21.0;
    let w1 = (155.0 - s15) / 1200.0;
    let w2 = (155.0 + s15) / 1200.0;
    let third = 1.0 / 3.0;
    let mut points = vec![[third, third, third]];
    let mut weights = vec![9.0 / 40.0];
    for (a, w) in [(a1, w1), (a2, w2)] {
        let b = 1.0 - 2.0 * a;
        points.extend([[a, a, b], [a, b, a], [b, a, a]]);
        weights.extend([w, w, w]);
    }
    QuadRule { points, weights }
}

/// 3-point Gauss-Legendre rule on [0,1], exact through degree 5.
pub fn edge_rule_3pt() -> EdgeRule {
    let r = (0.6f64).sqrt() / 2.0;
    QuadRule {
        points: vec![[0.5 - r], [0.5], [0.5 + r]],
        weights: vec![5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0],
    }
}

/// Integrate `f` over the triangle with vertices `v`.
pub fn integrate_triangle(rule: &TriangleRule, v: &[[f64; 2]; 3], f: impl Fn([f64; 2]) -> f64) -> f64 {
    let area = 0.5
        * ((v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1])).abs();
    let mut s = 0.0;
    for (l, w) in rule.iter() {
        let x = l[0] * v[0][0] + l[1] * v[1][0] + l[2] * v[2][0];
        let y = l[0] * v[0][1] + l[1] * v[1][1] + l[2] * v[2][1];
        s += w * f([x, y]);
    }
    s * area
}

/// Integrate `f` over the segment [a, b].
pub fn integrate_segment(rule: &EdgeRule, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let len = b - a;
    rule.iter().map(|(t, w)| w * f(a + t[0] * len)).sum::<f64>() * len
}
