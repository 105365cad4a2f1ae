//! Scalar coefficient fields evaluated at arbitrary points.

use std::sync::Arc;

use crate::mesh::Rect;

pub trait ScalarField: Sync {
    fn value(&self, p: [f64; 2]) -> f64;
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConstantField(pub f64);

impl ScalarField for ConstantField {
    fn value(&self, _p: [f64; 2]) -> f64 {
        self.0
    }
}

/// Adapter for closures.
pub struct FnField<F>(pub F);

impl<F: Fn([f64; 2]) -> f64 + Sync> ScalarField for FnField<F> {
    fn value(&self, p: [f64; 2]) -> f64 {
        (self.0)(p)
    }
}

/// Structured vertex grid of a rectangle, triangulated like the FE mesh.
#[derive(Clone, Debug, PartialEq)]
pub struct P1Grid {
    pub rect: Rect,
    pub nx: usize,
    pub ny: usize,
}

impl P1Grid {
    pub fn new(rect: Rect, nx: usize, ny: usize) -> Self {
        Self { rect, nx, ny }
    }

    pub fn len(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn hx(&self) -> f64 {
        self.rect.width() / self.nx as f64
    }

    pub fn hy(&self) -> f64 {
        self.rect.height() / self.ny as f64
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * (self.nx + 1) + i
    }

    pub fn point(&self, k: usize) -> [f64; 2] {
        let (i, j) = (k % (self.nx + 1), k / (self.nx + 1));
        [self.rect.x0 + i as f64 * self.hx(), self.rect.y0 + j as f64 * self.hy()]
    }

    pub fn points(&self) -> Vec<[f64; 2]> {
        (0..self.len()).map(|k| self.point(k)).collect()
    }

    /// Lumped-mass quadrature weights (a third of each adjacent triangle's area).
    pub fn lumped_weights(&self) -> Vec<f64> {
        let mut w = vec![0.0; self.len()];
        let a = self.hx() * self.hy() / 2.0 / 3.0;
        for j in 0..self.ny {
            for i in 0..self.nx {
                let (v00, v10, v11, v01) =
                    (self.index(i, j), self.index(i + 1, j), self.index(i + 1, j + 1), self.index(i, j + 1));
                for v in [v00, v10, v11, v00, v11, v01] {
                    w[v] += a;
                }
            }
        }
        w
    }

    /// Grid node indices and barycentric weights of the triangle holding `p`.
    pub fn stencil(&self, p: [f64; 2]) -> ([usize; 3], [f64; 3]) {
        let u = (p[0] - self.rect.x0) / self.hx();
        let v = (p[1] - self.rect.y0) / self.hy();
        let i = (u.floor().max(0.0) as usize).min(self.nx - 1);
        let j = (v.floor().max(0.0) as usize).min(self.ny - 1);
        let (s, t) = (u - i as f64, v - j as f64);
        if t <= s {
            ([self.index(i, j), self.index(i + 1, j), self.index(i + 1, j + 1)], [1.0 - s, s - t, t])
        } else {
            ([self.index(i, j), self.index(i + 1, j + 1), self.index(i, j + 1)], [1.0 - t, s, t - s])
        }
    }
}

/// Piecewise-linear field given by nodal values on a [`P1Grid`].
#[derive(Clone, Debug)]
pub struct P1Field {
    pub grid: Arc<P1Grid>,
    pub values: Vec<f64>,
}

impl P1Field {
    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

impl ScalarField for P1Field {
    fn value(&self, p: [f64; 2]) -> f64 {
        let (idx, w) = self.grid.stencil(p);
        w[0] * self.values[idx[0]] + w[1] * self.values[idx[1]] + w[2] * self.values[idx[2]]
    }
}
