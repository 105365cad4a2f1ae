use nalgebra::DVector;

use crate::assembly::{Block, BlockLayout};
use crate::error::{Error, Result};
use crate::fem::{p2_gradients, p2_values, TriangleGeom};
use crate::mesh::{CoupledMesh, Subdomain};
use crate::quadrature::triangle_rule_7pt;
use crate::sparse::{CsrMatrix, TripletBuilder};

/// Gram matrices of the discrete X-norm.
#[derive(Clone, Debug)]
pub struct XNormWeights {
    pub layout: BlockLayout,
    /// H1 stiffness plus mass of P2 on the Darcy region.
    pub head: CsrMatrix,
    /// H1 stiffness plus mass of P2 on the Stokes region, used for each component.
    pub velocity: CsrMatrix,
    /// L2 mass of P1 on the Stokes region.
    pub pressure: CsrMatrix,
}

/// X-norm split into the Darcy (head) and Stokes (velocity and pressure) parts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct XNormParts {
    pub darcy: f64,
    pub stokes: f64,
}

impl XNormParts {
    pub fn total(&self) -> f64 {
        self.darcy.hypot(self.stokes)
    }
}

fn p2_h1(mesh: &CoupledMesh, sub: Subdomain, map: &[Option<usize>], n: usize) -> CsrMatrix {
    let rule = triangle_rule_7pt();
    let mut t = TripletBuilder::with_capacity(n, n, mesh.elements(sub).len() * 36);
    for (e, nodes) in mesh.elements(sub).iter().enumerate() {
        let geo = TriangleGeom::new(mesh.triangle_coords(sub, e));
        let d = nodes.map(|k| map[k].expect("element node has a DOF"));
        for (l, w) in rule.iter() {
            let wa = w * geo.area;
            let v = p2_values(l);
            let g = p2_gradients(l, &geo.grad_bary);
            for i in 0..6 {
                for j in 0..6 {
                    t.push(d[i], d[j], wa * (v[i] * v[j] + g[i][0] * g[j][0] + g[i][1] * g[j][1]));
                }
            }
        }
    }
    t.build()
}

fn p1_mass(mesh: &CoupledMesh) -> CsrMatrix {
    let rule = triangle_rule_7pt();
    let n = mesh.n_pres();
    let mut t = TripletBuilder::with_capacity(n, n, mesh.triangles_f.len() * 9);
    for (e, tri) in mesh.triangles_f.iter().enumerate() {
        let geo = TriangleGeom::new(mesh.triangle_coords(Subdomain::Stokes, e));
        let d = tri.map(|k| mesh.dof_pres[k].expect("Stokes vertex carries pressure"));
        for (l, w) in rule.iter() {
            for i in 0..3 {
                for j in 0..3 {
                    t.push(d[i], d[j], w * geo.area * l[i] * l[j]);
                }
            }
        }
    }
    t.build()
}

impl XNormWeights {
    pub fn new(mesh: &CoupledMesh) -> Self {
        Self {
            layout: BlockLayout::of(mesh),
            head: p2_h1(mesh, Subdomain::Darcy, &mesh.dof_head, mesh.n_head()),
            velocity: p2_h1(mesh, Subdomain::Stokes, &mesh.dof_vel, mesh.n_vel()),
            pressure: p1_mass(mesh),
        }
    }

    pub fn parts(&self, delta: &DVector<f64>) -> Result<XNormParts> {
        let l = &self.layout;
        if delta.len() != l.total() {
            return Err(Error::Dimension(format!("vector of length {} for X-norm of size {}", delta.len(), l.total())));
        }
        let s = delta.as_slice();
        let head = self.head.quad_form(&s[l.range(Block::Head)]);
        let vel = self.velocity.quad_form(&s[l.range(Block::U1)]) + self.velocity.quad_form(&s[l.range(Block::U2)]);
        let pres = self.pressure.quad_form(&s[l.range(Block::Pressure)]);
        Ok(XNormParts { darcy: head.max(0.0).sqrt(), stokes: (vel + pres).max(0.0).sqrt() })
    }

    pub fn norm(&self, delta: &DVector<f64>) -> Result<f64> {
        Ok(self.parts(delta)?.total())
    }
}

pub fn xnorm(delta: &DVector<f64>, weights: &XNormWeights) -> Result<f64> {
    weights.norm(delta)
}

/// Interpolation of coarse-mesh coefficients at the fine mesh's DOF locations.
pub fn prolongation(coarse: &CoupledMesh, fine: &CoupledMesh) -> Result<CsrMatrix> {
    if coarse.geometry != fine.geometry || fine.n != 2 * coarse.n {
        return Err(Error::Parameter(format!(
            "meshes are not nested: n={} and n={} on {} geometries",
            coarse.n,
            fine.n,
            if coarse.geometry == fine.geometry { "equal" } else { "different" }
        )));
    }
    let (lc, lf) = (BlockLayout::of(coarse), BlockLayout::of(fine));
    let mut t = TripletBuilder::with_capacity(lf.total(), lc.total(), lf.total() * 6);
    let p2 = |sub: Subdomain, map: &[Option<usize>], p: [f64; 2]| -> [(usize, f64); 6] {
        let (e, l) = coarse.locate(sub, p);
        let v = p2_values(&l);
        let nodes = coarse.elements(sub)[e];
        std::array::from_fn(|k| (map[nodes[k]].expect("coarse node has a DOF"), v[k]))
    };
    for (k, &node) in fine.head_nodes.iter().enumerate() {
        for (j, w) in p2(Subdomain::Darcy, &coarse.dof_head, fine.nodes[node]) {
            t.push(lf.offset(Block::Head) + k, lc.offset(Block::Head) + j, w);
        }
    }
    for (k, &node) in fine.vel_nodes.iter().enumerate() {
        for (j, w) in p2(Subdomain::Stokes, &coarse.dof_vel, fine.nodes[node]) {
            t.push(lf.offset(Block::U1) + k, lc.offset(Block::U1) + j, w);
            t.push(lf.offset(Block::U2) + k, lc.offset(Block::U2) + j, w);
        }
    }
    for (k, &node) in fine.pres_nodes.iter().enumerate() {
        let (e, l) = coarse.locate(Subdomain::Stokes, fine.nodes[node]);
        for (c, &v) in coarse.triangles_f[e].iter().enumerate() {
            let j = coarse.dof_pres[v].expect("coarse Stokes vertex carries pressure");
            t.push(lf.offset(Block::Pressure) + k, lc.offset(Block::Pressure) + j, l[c]);
        }
    }
    Ok(t.build())
}

/// X-norm of `P coarse - fine` measured on the fine mesh.
pub fn cross_mesh_error(
    coarse_mesh: &CoupledMesh,
    coarse: &DVector<f64>,
    fine_mesh: &CoupledMesh,
    fine: &DVector<f64>,
    fine_weights: &XNormWeights,
) -> Result<XNormParts> {
    let p = prolongation(coarse_mesh, fine_mesh)?;
    if coarse.len() != p.ncols() || fine.len() != p.nrows() {
        return Err(Error::Dimension("vectors do not match the meshes".into()));
    }
    fine_weights.parts(&(p.mul_vec(coarse) - fine))
}
