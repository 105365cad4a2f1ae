//! Block assembly of the coupled Darcy / Stokes system.
//!
//! Unknowns are ordered `[head; u1; u2; p]`. The global matrix is
//!
//! ```text
//! [ P           -I1          -I2          0  ]
//! [ I3+I9+I11   2F1+F2+I5    F3+I7        F5 ]
//! [ I4+I10+I12  F4+I8        F1+2F2+I6    F6 ]
//! [ 0           F5^T         F6^T         0  ]
//! ```
//!
//! Only `P` and `I9..I12` depend on the conductivity, so a sample matrix
//! splits exactly into a mean part and a perturbation supported in the head
//! columns. The Beavers-Joseph coefficient is evaluated with the mean
//! conductivity so that the splitting stays additive.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fem::{p2_gradients, p2_values, TriangleGeom};
use crate::field::ScalarField;
use crate::mesh::{BoundaryTag, CoupledMesh, Subdomain};
use crate::quadrature::{edge_rule_3pt, triangle_rule_7pt};
use crate::randfield::{KlExpansion, SampleSet};
use crate::sparse::{CsrMatrix, TripletBuilder};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhysicalParams {
    pub nu: f64,
    pub g: f64,
    pub alpha: f64,
    /// Elevation head on the interface.
    pub z: f64,
    pub dim: usize,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        Self { nu: 1.0, g: 1.0, alpha: 1.0, z: 0.0, dim: 2 }
    }
}

impl PhysicalParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0 && self.g > 0.0 && self.alpha > 0.0) {
            return Err(Error::Parameter("nu, g and alpha must be positive".into()));
        }
        if self.dim != 2 {
            return Err(Error::Unsupported(format!("dimension {}", self.dim)));
        }
        Ok(())
    }

    /// `alpha nu sqrt(d) / sqrt(tr Pi)` with `Pi = K nu / g` times the identity.
    pub fn bj_delta(&self, k: f64) -> f64 {
        let d = self.dim as f64;
        self.alpha * self.nu * d.sqrt() / (d * k * self.nu / self.g).sqrt()
    }
}

/// Constant volume sources in both regions.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Sources {
    pub darcy: f64,
    pub stokes: [f64; 2],
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Block {
    Head,
    U1,
    U2,
    Pressure,
}

impl Block {
    pub fn label(&self) -> &'static str {
        match self {
            Block::Head => "head",
            Block::U1 => "u1",
            Block::U2 => "u2",
            Block::Pressure => "p",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockLayout {
    pub n1: usize,
    pub n2: usize,
    pub n3: usize,
}

impl BlockLayout {
    pub fn of(mesh: &CoupledMesh) -> Self {
        Self { n1: mesh.n_head(), n2: mesh.n_vel(), n3: mesh.n_pres() }
    }

    pub fn total(&self) -> usize {
        self.n1 + 2 * self.n2 + self.n3
    }

    /// Dimension of the head and velocity blocks together.
    pub fn leading(&self) -> usize {
        self.n1 + 2 * self.n2
    }

    pub fn range(&self, b: Block) -> std::ops::Range<usize> {
        let (n1, n2) = (self.n1, self.n2);
        match b {
            Block::Head => 0..n1,
            Block::U1 => n1..n1 + n2,
            Block::U2 => n1 + n2..n1 + 2 * n2,
            Block::Pressure => n1 + 2 * n2..self.total(),
        }
    }

    pub fn offset(&self, b: Block) -> usize {
        self.range(b).start
    }

    /// Block and local index of a global DOF.
    pub fn locate(&self, dof: usize) -> (Block, usize) {
        for b in [Block::Head, Block::U1, Block::U2, Block::Pressure] {
            let r = self.range(b);
            if r.contains(&dof) {
                return (b, dof - r.start);
            }
        }
        panic!("DOF {dof} out of range {}", self.total());
    }
}

/// Conductivity-dependent blocks `P` and `I9..I12`.
#[derive(Clone, Debug)]
pub struct ConductivityBlocks {
    pub p: CsrMatrix,
    pub i9: CsrMatrix,
    pub i10: CsrMatrix,
    pub i11: CsrMatrix,
    pub i12: CsrMatrix,
}

/// Conductivity-independent blocks and the load vector.
#[derive(Clone, Debug)]
pub struct DeterministicBlocks {
    pub f: [CsrMatrix; 6],
    /// `I1..I8`, index 0 holding `I1`.
    pub i: [CsrMatrix; 8],
    pub b1: DVector<f64>,
    pub b2: DVector<f64>,
    pub b3: DVector<f64>,
}

/// P2 values and gradients at one interface quadrature point, seen from both sides.
struct EdgePoint {
    point: [f64; 2],
    weight: f64,
    head_dofs: [usize; 6],
    a: [f64; 6],
    grad_a: [[f64; 2]; 6],
    vel_dofs: [usize; 6],
    b: [f64; 6],
    normal: [f64; 2],
    tangent: [f64; 2],
}

fn dofs(map: &[Option<usize>], nodes: &[usize; 6], what: &str) -> [usize; 6] {
    nodes.map(|k| map[k].unwrap_or_else(|| panic!("node {k} has no {what} DOF")))
}

/// Barycentric coordinates on the edge `start -> end` of a triangle, set exactly.
fn edge_bary(tri: &[usize; 3], start: usize, end: usize, t: f64) -> [f64; 3] {
    let mut l = [0.0; 3];
    for (k, &v) in tri.iter().enumerate() {
        if v == start {
            l[k] = 1.0 - t;
        } else if v == end {
            l[k] = t;
        }
    }
    l
}

fn edge_points(mesh: &CoupledMesh) -> Vec<EdgePoint> {
    let rule = edge_rule_3pt();
    let frame = mesh.interface_frame();
    let mut out = Vec::with_capacity(mesh.interface_edges.len() * rule.len());
    for (e, edge) in mesh.interface_edges.iter().enumerate() {
        let (s, t_end) = (edge.nodes[0], edge.nodes[2]);
        let (ps, pe) = (mesh.nodes[s], mesh.nodes[t_end]);
        let len = ((pe[0] - ps[0]).powi(2) + (pe[1] - ps[1]).powi(2)).sqrt();
        let gp = TriangleGeom::new(mesh.triangle_coords(Subdomain::Darcy, edge.darcy_triangle));
        let head_dofs = dofs(&mesh.dof_head, &mesh.elements_p[edge.darcy_triangle], "head");
        let vel_dofs = dofs(&mesh.dof_vel, &mesh.elements_f[edge.stokes_triangle], "velocity");
        for (q, w) in rule.iter() {
            let t = q[0];
            let lp = edge_bary(&mesh.triangles_p[edge.darcy_triangle], s, t_end, t);
            let lf = edge_bary(&mesh.triangles_f[edge.stokes_triangle], s, t_end, t);
            out.push(EdgePoint {
                point: [ps[0] + t * (pe[0] - ps[0]), ps[1] + t * (pe[1] - ps[1])],
                weight: w * len,
                head_dofs,
                a: p2_values(&lp),
                grad_a: p2_gradients(&lp, &gp.grad_bary),
                vel_dofs,
                b: p2_values(&lf),
                normal: frame.normal[e],
                tangent: frame.tangent[e],
            });
        }
    }
    out
}

/// Assemble `P` and `I9..I12` for conductivity `k`; `k_delta` enters the BJ coefficient.
pub fn assemble_conductivity_blocks(
    mesh: &CoupledMesh,
    params: &PhysicalParams,
    k: &dyn ScalarField,
    k_delta: &dyn ScalarField,
) -> ConductivityBlocks {
    let (n1, n2) = (mesh.n_head(), mesh.n_vel());
    let rule = triangle_rule_7pt();
    let mut p = TripletBuilder::with_capacity(n1, n1, mesh.triangles_p.len() * 36);
    for (t, nodes) in mesh.elements_p.iter().enumerate() {
        let geo = TriangleGeom::new(mesh.triangle_coords(Subdomain::Darcy, t));
        let d = dofs(&mesh.dof_head, nodes, "head");
        let mut local = [[0.0; 6]; 6];
        for (l, w) in rule.iter() {
            let kw = k.value(geo.point(l)) * w * geo.area;
            let g = p2_gradients(l, &geo.grad_bary);
            for i in 0..6 {
                for j in 0..6 {
                    local[i][j] += kw * (g[j][0] * g[i][0] + g[j][1] * g[i][1]);
                }
            }
        }
        for i in 0..6 {
            for j in 0..6 {
                p.push(d[i], d[j], local[i][j]);
            }
        }
    }
    let cap = mesh.interface_edges.len() * 3 * 36;
    let mut iv: Vec<TripletBuilder> = (0..4).map(|_| TripletBuilder::with_capacity(n2, n1, cap)).collect();
    for ep in edge_points(mesh) {
        let delta = params.bj_delta(k_delta.value(ep.point));
        let kw = k.value(ep.point) * delta * ep.weight;
        let [t1, t2] = ep.tangent;
        let coef = [t1 * t1, t2 * t2, t1 * t2, t2 * t1];
        for i in 0..6 {
            for j in 0..6 {
                let base = kw * ep.grad_a[j][0] * ep.b[i];
                for (c, tb) in coef.iter().zip(iv.iter_mut()) {
                    tb.push(ep.vel_dofs[i], ep.head_dofs[j], c * base);
                }
            }
        }
    }
    let mut iv = iv.into_iter().map(TripletBuilder::build);
    ConductivityBlocks {
        p: p.build(),
        i9: iv.next().unwrap(),
        i10: iv.next().unwrap(),
        i11: iv.next().unwrap(),
        i12: iv.next().unwrap(),
    }
}

/// Assemble `F1..F6`, `I1..I8` and the load vector.
pub fn assemble_deterministic_blocks(
    mesh: &CoupledMesh,
    params: &PhysicalParams,
    sources: &Sources,
    k_delta: &dyn ScalarField,
) -> DeterministicBlocks {
    let (n1, n2, n3) = (mesh.n_head(), mesh.n_vel(), mesh.n_pres());
    let rule = triangle_rule_7pt();
    let nu = params.nu;
    let cap = mesh.triangles_f.len() * 36;
    let mut f: Vec<TripletBuilder> = (0..4).map(|_| TripletBuilder::with_capacity(n2, n2, cap)).collect();
    let mut f5 = TripletBuilder::with_capacity(n2, n3, mesh.triangles_f.len() * 18);
    let mut f6 = TripletBuilder::with_capacity(n2, n3, mesh.triangles_f.len() * 18);
    let mut b1 = DVector::zeros(n1);
    let mut b2 = DVector::zeros(n2);
    let mut b3 = DVector::zeros(n2);

    for (t, nodes) in mesh.elements_f.iter().enumerate() {
        let geo = TriangleGeom::new(mesh.triangle_coords(Subdomain::Stokes, t));
        let d = dofs(&mesh.dof_vel, nodes, "velocity");
        let dp = mesh.triangles_f[t].map(|v| mesh.dof_pres[v].expect("Stokes vertex carries pressure"));
        for (l, w) in rule.iter() {
            let wa = w * geo.area;
            let g = p2_gradients(l, &geo.grad_bary);
            let v = p2_values(l);
            for i in 0..6 {
                for j in 0..6 {
                    let (gi, gj) = (g[i], g[j]);
                    f[0].push(d[i], d[j], wa * nu * gj[0] * gi[0]);
                    f[1].push(d[i], d[j], wa * nu * gj[1] * gi[1]);
                    f[2].push(d[i], d[j], wa * nu * gj[0] * gi[1]);
                    f[3].push(d[i], d[j], wa * nu * gj[1] * gi[0]);
                }
                for (j, &pj) in dp.iter().enumerate() {
                    f5.push(d[i], pj, -wa * l[j] * g[i][0]);
                    f6.push(d[i], pj, -wa * l[j] * g[i][1]);
                }
                b2[d[i]] += wa * sources.stokes[0] * v[i];
                b3[d[i]] += wa * sources.stokes[1] * v[i];
            }
        }
    }
    if sources.darcy != 0.0 {
        for (t, nodes) in mesh.elements_p.iter().enumerate() {
            let geo = TriangleGeom::new(mesh.triangle_coords(Subdomain::Darcy, t));
            let d = dofs(&mesh.dof_head, nodes, "head");
            for (l, w) in rule.iter() {
                let v = p2_values(l);
                for i in 0..6 {
                    b1[d[i]] += w * geo.area * sources.darcy * v[i];
                }
            }
        }
    }

    let cap = mesh.interface_edges.len() * 3 * 36;
    let mut ihv: Vec<TripletBuilder> = (0..2).map(|_| TripletBuilder::with_capacity(n1, n2, cap)).collect();
    let mut ivh: Vec<TripletBuilder> = (0..2).map(|_| TripletBuilder::with_capacity(n2, n1, cap)).collect();
    let mut ivv: Vec<TripletBuilder> = (0..4).map(|_| TripletBuilder::with_capacity(n2, n2, cap)).collect();
    for ep in edge_points(mesh) {
        let delta = params.bj_delta(k_delta.value(ep.point));
        let ([n1c, n2c], [t1, t2]) = (ep.normal, ep.tangent);
        let w = ep.weight;
        for i in 0..6 {
            for j in 0..6 {
                // Head rows, velocity columns.
                ihv[0].push(ep.head_dofs[i], ep.vel_dofs[j], w * n1c * ep.b[j] * ep.a[i]);
                ihv[1].push(ep.head_dofs[i], ep.vel_dofs[j], w * n2c * ep.b[j] * ep.a[i]);
                // Velocity rows, head columns.
                ivh[0].push(ep.vel_dofs[i], ep.head_dofs[j], w * params.g * n1c * ep.a[j] * ep.b[i]);
                ivh[1].push(ep.vel_dofs[i], ep.head_dofs[j], w * params.g * n2c * ep.a[j] * ep.b[i]);
                let bb = w * delta * ep.b[j] * ep.b[i];
                for (c, tb) in [t1 * t1, t2 * t2, t1 * t2, t2 * t1].iter().zip(ivv.iter_mut()) {
                    tb.push(ep.vel_dofs[i], ep.vel_dofs[j], c * bb);
                }
            }
            let gz = w * params.g * params.z * ep.b[i];
            b2[ep.vel_dofs[i]] += gz * n1c;
            b3[ep.vel_dofs[i]] += gz * n2c;
        }
    }

    let mut fb = f.into_iter().map(TripletBuilder::build);
    let f = [fb.next().unwrap(), fb.next().unwrap(), fb.next().unwrap(), fb.next().unwrap(), f5.build(), f6.build()];
    let mut ib = ihv.into_iter().chain(ivh).chain(ivv).map(TripletBuilder::build);
    let i = std::array::from_fn(|_| ib.next().unwrap());
    DeterministicBlocks { f, i, b1, b2, b3 }
}

fn place_conductivity(layout: &BlockLayout, c: &ConductivityBlocks, t: &mut TripletBuilder) {
    let (h, u1, u2) = (layout.offset(Block::Head), layout.offset(Block::U1), layout.offset(Block::U2));
    t.push_block(&c.p, h, h, 1.0);
    t.push_block(&c.i9, u1, h, 1.0);
    t.push_block(&c.i11, u1, h, 1.0);
    t.push_block(&c.i10, u2, h, 1.0);
    t.push_block(&c.i12, u2, h, 1.0);
}

fn place_deterministic(layout: &BlockLayout, d: &DeterministicBlocks, t: &mut TripletBuilder) {
    let (h, u1, u2, p) =
        (layout.offset(Block::Head), layout.offset(Block::U1), layout.offset(Block::U2), layout.offset(Block::Pressure));
    let [f1, f2, f3, f4, f5, f6] = &d.f;
    let [i1, i2, i3, i4, i5, i6, i7, i8] = &d.i;
    t.push_block(i1, h, u1, -1.0);
    t.push_block(i2, h, u2, -1.0);

    t.push_block(i3, u1, h, 1.0);
    t.push_block(f1, u1, u1, 2.0);
    t.push_block(f2, u1, u1, 1.0);
    t.push_block(i5, u1, u1, 1.0);
    t.push_block(f3, u1, u2, 1.0);
    t.push_block(i7, u1, u2, 1.0);
    t.push_block(f5, u1, p, 1.0);

    t.push_block(i4, u2, h, 1.0);
    t.push_block(f4, u2, u1, 1.0);
    t.push_block(i8, u2, u1, 1.0);
    t.push_block(f1, u2, u2, 1.0);
    t.push_block(f2, u2, u2, 2.0);
    t.push_block(i6, u2, u2, 1.0);
    t.push_block(f6, u2, p, 1.0);

    t.push_block_transposed(f5, p, u1, 1.0);
    t.push_block_transposed(f6, p, u2, 1.0);
}

fn load_vector(layout: &BlockLayout, d: &DeterministicBlocks) -> DVector<f64> {
    let mut b = DVector::zeros(layout.total());
    b.rows_mut(layout.offset(Block::Head), layout.n1).copy_from(&d.b1);
    b.rows_mut(layout.offset(Block::U1), layout.n2).copy_from(&d.b2);
    b.rows_mut(layout.offset(Block::U2), layout.n2).copy_from(&d.b3);
    b
}

/// Mean matrix and load vector with conductivity `k_mean`.
pub fn assemble_mean(
    mesh: &CoupledMesh,
    params: &PhysicalParams,
    sources: &Sources,
    k_mean: &dyn ScalarField,
) -> (CsrMatrix, DVector<f64>) {
    assemble_full(mesh, params, sources, k_mean, k_mean)
}

/// Perturbation matrix for the zero-mean field `k_tilde`.
pub fn assemble_perturbation(
    mesh: &CoupledMesh,
    params: &PhysicalParams,
    k_mean: &dyn ScalarField,
    k_tilde: &dyn ScalarField,
) -> CsrMatrix {
    let layout = BlockLayout::of(mesh);
    let c = assemble_conductivity_blocks(mesh, params, k_tilde, k_mean);
    let mut t = TripletBuilder::new(layout.total(), layout.total());
    place_conductivity(&layout, &c, &mut t);
    t.build()
}

/// Complete sample matrix for the total conductivity `k` in one pass.
pub fn assemble_full(
    mesh: &CoupledMesh,
    params: &PhysicalParams,
    sources: &Sources,
    k_mean: &dyn ScalarField,
    k: &dyn ScalarField,
) -> (CsrMatrix, DVector<f64>) {
    let layout = BlockLayout::of(mesh);
    let c = assemble_conductivity_blocks(mesh, params, k, k_mean);
    let d = assemble_deterministic_blocks(mesh, params, sources, k_mean);
    let mut t = TripletBuilder::new(layout.total(), layout.total());
    place_conductivity(&layout, &c, &mut t);
    place_deterministic(&layout, &d, &mut t);
    (t.build(), load_vector(&layout, &d))
}

/// Prescribed values on the Dirichlet boundaries.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryData {
    pub head: f64,
    pub wall_velocity: [f64; 2],
    pub bottom_velocity: [f64; 2],
}

impl Default for BoundaryData {
    fn default() -> Self {
        Self { head: 0.0, wall_velocity: [1.0, 0.0], bottom_velocity: [0.0, 0.0] }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Constraint {
    pub dof: usize,
    pub value: f64,
}

/// Head DOFs on the Darcy boundary, velocity DOFs on the walls and the bottom.
pub fn dirichlet_constraints(mesh: &CoupledMesh, bc: &BoundaryData) -> Vec<Constraint> {
    let layout = BlockLayout::of(mesh);
    let mut out = Vec::new();
    for (k, &node) in mesh.head_nodes.iter().enumerate() {
        if mesh.tags[node] == BoundaryTag::DarcyBoundary {
            out.push(Constraint { dof: layout.offset(Block::Head) + k, value: bc.head });
        }
    }
    for (c, block) in [Block::U1, Block::U2].into_iter().enumerate() {
        for (k, &node) in mesh.vel_nodes.iter().enumerate() {
            let value = match mesh.tags[node] {
                BoundaryTag::StokesWall => bc.wall_velocity[c],
                BoundaryTag::StokesBottom => bc.bottom_velocity[c],
                _ => continue,
            };
            out.push(Constraint { dof: layout.offset(block) + k, value });
        }
    }
    out
}

/// Mean matrix, per-sample perturbations and load vector.
#[derive(Clone, Debug)]
pub struct SplitSystem {
    pub layout: BlockLayout,
    pub a_bar: CsrMatrix,
    pub a_tilde: Vec<CsrMatrix>,
    pub b: DVector<f64>,
    pub constraints: Vec<Constraint>,
}

impl SplitSystem {
    pub fn new(layout: BlockLayout, a_bar: CsrMatrix, a_tilde: Vec<CsrMatrix>, b: DVector<f64>) -> Result<Self> {
        let n = layout.total();
        if a_bar.nrows() != n || a_bar.ncols() != n || b.len() != n {
            return Err(Error::Dimension(format!("mean system must be {n}x{n}")));
        }
        if let Some(m) = a_tilde.iter().position(|a| a.nrows() != n || a.ncols() != n) {
            return Err(Error::Dimension(format!("perturbation {m} is not {n}x{n}")));
        }
        Ok(Self { layout, a_bar, a_tilde, b, constraints: Vec::new() })
    }

    pub fn len(&self) -> usize {
        self.a_tilde.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a_tilde.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.layout.total()
    }

    pub fn sample_matrix(&self, m: usize) -> CsrMatrix {
        self.a_bar.add(&self.a_tilde[m]).expect("shapes checked at construction")
    }

    /// Replace row and column of pressure DOF `local` by the identity with value 0.
    pub fn pin_pressure(&mut self, local: usize) {
        let dof = self.layout.offset(Block::Pressure) + local;
        self.eliminate(&[Constraint { dof, value: 0.0 }]);
    }

    fn eliminate(&mut self, constraints: &[Constraint]) {
        let n = self.dim();
        let mut mask = vec![false; n];
        let mut g = DVector::zeros(n);
        for c in constraints {
            mask[c.dof] = true;
            g[c.dof] = c.value;
        }
        self.b -= self.a_bar.mul_vec(&g);
        let mut t = TripletBuilder::with_capacity(n, n, self.a_bar.nnz());
        for (i, j, v) in self.a_bar.iter() {
            if !mask[i] && !mask[j] {
                t.push(i, j, v);
            }
        }
        for c in constraints {
            t.push(c.dof, c.dof, 1.0);
            self.b[c.dof] = c.value;
        }
        self.a_bar = t.build();
        self.a_tilde.par_iter_mut().for_each(|a| *a = a.without_rows_cols(&mask));
        self.constraints.extend_from_slice(constraints);
    }
}

/// Lift the prescribed values into `b` and eliminate the constrained rows and columns.
pub fn apply_dirichlet(mut system: SplitSystem, constraints: &[Constraint]) -> Result<SplitSystem> {
    let n = system.dim();
    let pres = system.layout.range(Block::Pressure);
    let head = system.layout.range(Block::Head);
    let mut seen = vec![false; n];
    for c in constraints {
        if c.dof >= n {
            return Err(Error::Constraint { dof: c.dof, reason: "index out of range".into() });
        }
        if pres.contains(&c.dof) {
            return Err(Error::Constraint { dof: c.dof, reason: "pressure DOFs cannot be prescribed".into() });
        }
        if seen[c.dof] {
            return Err(Error::Constraint { dof: c.dof, reason: "prescribed twice".into() });
        }
        seen[c.dof] = true;
        // The lifting uses the mean matrix only, which is exact when the
        // perturbations never see the prescribed value.
        if head.contains(&c.dof) && c.value != 0.0 && !system.a_tilde.is_empty() {
            return Err(Error::Constraint {
                dof: c.dof,
                reason: "nonzero head data would make the lifting sample dependent".into(),
            });
        }
    }
    system.eliminate(constraints);
    Ok(system)
}

/// Assemble the mean system and one perturbation per sample, then apply the boundary data.
pub fn assemble_split_system(
    mesh: &CoupledMesh,
    params: &PhysicalParams,
    sources: &Sources,
    kl: &KlExpansion,
    samples: &SampleSet,
    bc: &BoundaryData,
) -> Result<SplitSystem> {
    params.validate()?;
    let k_mean = crate::field::ConstantField(kl.mean);
    let (a_bar, b) = assemble_mean(mesh, params, sources, &k_mean);
    let a_tilde = (0..samples.len())
        .into_par_iter()
        .map(|m| {
            let r = kl.realize(&samples.row(m))?;
            Ok(assemble_perturbation(mesh, params, &k_mean, &r.perturbation))
        })
        .collect::<Result<Vec<_>>>()?;
    let system = SplitSystem::new(BlockLayout::of(mesh), a_bar, a_tilde, b)?;
    apply_dirichlet(system, &dirichlet_constraints(mesh, bc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::ConstantField;
    use crate::mesh::{build_mesh, Geometry};

    #[test]
    fn delta_at_unit_mean_is_one() {
        assert!((PhysicalParams::default().bj_delta(1.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_perturbation_is_zero() {
        let mesh = build_mesh(Geometry::default(), 4).unwrap();
        let a = assemble_perturbation(&mesh, &PhysicalParams::default(), &ConstantField(1.0), &ConstantField(0.0));
        assert_eq!(a.max_abs(), 0.0);
    }

    #[test]
    fn laplacian_rows_annihilate_constants() {
        let mesh = build_mesh(Geometry::default(), 4).unwrap();
        let d = assemble_deterministic_blocks(&mesh, &PhysicalParams::default(), &Sources::default(), &ConstantField(1.0));
        let lap = d.f[0].scaled(2.0).add(&d.f[1]).unwrap();
        for (k, &node) in mesh.vel_nodes.iter().enumerate() {
            if mesh.tags[node] == BoundaryTag::StokesInterior {
                let s: f64 = lap.row(k).map(|(_, v)| v).sum();
                assert!(s.abs() < 1e-12, "row {k} sums to {s}");
            }
        }
    }

    #[test]
    fn rejects_pressure_constraint() {
        let mesh = build_mesh(Geometry::default(), 2).unwrap();
        let (a, b) = assemble_mean(&mesh, &PhysicalParams::default(), &Sources::default(), &ConstantField(1.0));
        let layout = BlockLayout::of(&mesh);
        let sys = SplitSystem::new(layout, a, vec![], b).unwrap();
        let c = Constraint { dof: layout.offset(Block::Pressure), value: 0.0 };
        assert!(matches!(apply_dirichlet(sys, &[c]), Err(Error::Constraint { .. })));
    }
}
