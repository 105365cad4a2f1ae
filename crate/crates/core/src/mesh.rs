//! Structured coupled meshes of the Darcy and Stokes rectangles.
//!
//! Nodes live on the half-step lattice: every lattice point is a P2 node and
//! the even-even points are the triangulation vertices. Each cell is split
//! along its lower-left to upper-right diagonal.

use std::io::Write;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Self { x0, x1, y0, y1 }
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }
}

/// Darcy rectangle on top of the Stokes rectangle, sharing the horizontal edge `y = interface_y`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Geometry {
    pub darcy: Rect,
    pub stokes: Rect,
    pub interface_y: f64,
}

impl Default for Geometry {
    fn default() -> Self {
        Self { darcy: Rect::new(0.0, 1.0, 0.0, 0.5), stokes: Rect::new(0.0, 1.0, -0.5, 0.0), interface_y: 0.0 }
    }
}

impl Geometry {
    pub fn validate(&self) -> Result<()> {
        let (p, f) = (&self.darcy, &self.stokes);
        if !(p.width() > 0.0 && p.height() > 0.0 && f.width() > 0.0 && f.height() > 0.0) {
            return Err(Error::Geometry("rectangles must have positive area".into()));
        }
        if p.x0 != f.x0 || p.x1 != f.x1 {
            return Err(Error::Geometry("rectangles must share the full interface edge".into()));
        }
        if p.y0 != self.interface_y || f.y1 != self.interface_y {
            return Err(Error::Geometry(format!(
                "interface y={} must be the bottom of the Darcy and top of the Stokes rectangle",
                self.interface_y
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BoundaryTag {
    /// Dirichlet boundary of the porous region (sides and top).
    DarcyBoundary,
    /// Side walls of the free-flow region, interface corners included.
    StokesWall,
    /// Bottom of the free-flow region, bottom corners included.
    StokesBottom,
    Interface,
    DarcyInterior,
    StokesInterior,
}

impl BoundaryTag {
    pub fn label(&self) -> &'static str {
        match self {
            BoundaryTag::DarcyBoundary => "gamma_p",
            BoundaryTag::StokesWall => "gamma_f_wall",
            BoundaryTag::StokesBottom => "gamma_f_bottom",
            BoundaryTag::Interface => "gamma_i",
            BoundaryTag::DarcyInterior => "interior_p",
            BoundaryTag::StokesInterior => "interior_f",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Subdomain {
    Darcy,
    Stokes,
}

/// One interface edge with the two triangles that own it.
#[derive(Clone, Copy, Debug)]
pub struct InterfaceEdge {
    /// Start, midpoint and end node ids, ordered by increasing x.
    pub nodes: [usize; 3],
    pub stokes_triangle: usize,
    pub darcy_triangle: usize,
}

/// Unit normal (outward from the Stokes region) and tangent on every interface edge.
#[derive(Clone, Debug)]
pub struct InterfaceFrame {
    pub normal: Vec<[f64; 2]>,
    pub tangent: Vec<[f64; 2]>,
}

#[derive(Clone, Debug)]
pub struct CoupledMesh {
    pub geometry: Geometry,
    pub n: usize,
    pub h: f64,
    /// Cells across the width and in each subdomain's height.
    pub nx: usize,
    pub ny_stokes: usize,
    pub ny_darcy: usize,
    /// Coordinates of all P2 nodes (half-step lattice, row-major from the bottom).
    pub nodes: Vec<[f64; 2]>,
    /// Vertex ids (into `nodes`) of the triangulation vertices.
    pub vertices: Vec<usize>,
    pub triangles_p: Vec<[usize; 3]>,
    pub triangles_f: Vec<[usize; 3]>,
    /// Six P2 node ids per triangle: three vertices, then midpoints of edges 01, 12, 20.
    pub elements_p: Vec<[usize; 6]>,
    pub elements_f: Vec<[usize; 6]>,
    pub interface_edges: Vec<InterfaceEdge>,
    /// Node id to head DOF index.
    pub dof_head: Vec<Option<usize>>,
    /// Node id to velocity DOF index (shared by both components).
    pub dof_vel: Vec<Option<usize>>,
    /// Node id to pressure DOF index (Stokes vertices only).
    pub dof_pres: Vec<Option<usize>>,
    pub head_nodes: Vec<usize>,
    pub vel_nodes: Vec<usize>,
    pub pres_nodes: Vec<usize>,
    pub tags: Vec<BoundaryTag>,
}

fn cells(len: f64, n: usize, what: &str) -> Result<usize> {
    let c = len * n as f64;
    let r = c.round();
    if r < 1.0 || (c - r).abs() > 1e-9 * c.max(1.0) {
        return Err(Error::Resolution { n, reason: format!("{what} {len} is not a multiple of h=1/{n}") });
    }
    Ok(r as usize)
}

/// Build the coupled structured mesh with `h = 1/n`.
pub fn build_mesh(geometry: Geometry, n: usize) -> Result<CoupledMesh> {
    geometry.validate()?;
    if n < 2 || n % 2 != 0 {
        return Err(Error::Resolution { n, reason: "n must be even and at least 2".into() });
    }
    let h = 1.0 / n as f64;
    let nx = cells(geometry.darcy.width(), n, "width")?;
    let ny_stokes = cells(geometry.stokes.height(), n, "Stokes height")?;
    let ny_darcy = cells(geometry.darcy.height(), n, "Darcy height")?;
    let (ni, nj) = (2 * nx + 1, 2 * (ny_stokes + ny_darcy) + 1);
    let j_if = 2 * ny_stokes;
    let x0 = geometry.stokes.x0;
    let y0 = geometry.stokes.y0;
    let id = |i: usize, j: usize| j * ni + i;

    let mut nodes = Vec::with_capacity(ni * nj);
    let mut tags = Vec::with_capacity(ni * nj);
    for j in 0..nj {
        for i in 0..ni {
            let y = if j == j_if { geometry.interface_y } else { y0 + j as f64 * h / 2.0 };
            nodes.push([x0 + i as f64 * h / 2.0, y]);
            let side = i == 0 || i == ni - 1;
            let tag = if j == j_if {
                if side { BoundaryTag::StokesWall } else { BoundaryTag::Interface }
            } else if j > j_if {
                if side || j == nj - 1 { BoundaryTag::DarcyBoundary } else { BoundaryTag::DarcyInterior }
            } else if j == 0 {
                BoundaryTag::StokesBottom
            } else if side {
                BoundaryTag::StokesWall
            } else {
                BoundaryTag::StokesInterior
            };
            tags.push(tag);
        }
    }
    let mut vertices = Vec::new();
    for j in (0..nj).step_by(2) {
        for i in (0..ni).step_by(2) {
            vertices.push(id(i, j));
        }
    }

    let mut triangles_p = Vec::new();
    let mut triangles_f = Vec::new();
    let mut elements_p = Vec::new();
    let mut elements_f = Vec::new();
    for cj in 0..(ny_stokes + ny_darcy) {
        for ci in 0..nx {
            let (i, j) = (2 * ci, 2 * cj);
            let lower = [id(i, j), id(i + 2, j), id(i + 2, j + 2)];
            let lower6 = [lower[0], lower[1], lower[2], id(i + 1, j), id(i + 2, j + 1), id(i + 1, j + 1)];
            let upper = [id(i, j), id(i + 2, j + 2), id(i, j + 2)];
            let upper6 = [upper[0], upper[1], upper[2], id(i + 1, j + 1), id(i + 1, j + 2), id(i, j + 1)];
            if cj < ny_stokes {
                triangles_f.extend([lower, upper]);
                elements_f.extend([lower6, upper6]);
            } else {
                triangles_p.extend([lower, upper]);
                elements_p.extend([lower6, upper6]);
            }
        }
    }

    // Top Stokes row: upper triangle holds the top edge; bottom Darcy row: lower triangle.
    let interface_edges = (0..nx)
        .map(|ci| InterfaceEdge {
            nodes: [id(2 * ci, j_if), id(2 * ci + 1, j_if), id(2 * ci + 2, j_if)],
            stokes_triangle: 2 * ((ny_stokes - 1) * nx + ci) + 1,
            darcy_triangle: 2 * ci,
        })
        .collect();

    let mut dof_head = vec![None; nodes.len()];
    let mut dof_vel = vec![None; nodes.len()];
    let mut dof_pres = vec![None; nodes.len()];
    let (mut head_nodes, mut vel_nodes, mut pres_nodes) = (Vec::new(), Vec::new(), Vec::new());
    for j in 0..nj {
        for i in 0..ni {
            let k = id(i, j);
            if j >= j_if {
                dof_head[k] = Some(head_nodes.len());
                head_nodes.push(k);
            }
            if j <= j_if {
                dof_vel[k] = Some(vel_nodes.len());
                vel_nodes.push(k);
                if i % 2 == 0 && j % 2 == 0 {
                    dof_pres[k] = Some(pres_nodes.len());
                    pres_nodes.push(k);
                }
            }
        }
    }

    Ok(CoupledMesh {
        geometry,
        n,
        h,
        nx,
        ny_stokes,
        ny_darcy,
        nodes,
        vertices,
        triangles_p,
        triangles_f,
        elements_p,
        elements_f,
        interface_edges,
        dof_head,
        dof_vel,
        dof_pres,
        head_nodes,
        vel_nodes,
        pres_nodes,
        tags,
    })
}

impl CoupledMesh {
    pub fn n_head(&self) -> usize {
        self.head_nodes.len()
    }

    pub fn n_vel(&self) -> usize {
        self.vel_nodes.len()
    }

    pub fn n_pres(&self) -> usize {
        self.pres_nodes.len()
    }

    /// N = N1 + 2 N2 + N3.
    pub fn total_dofs(&self) -> usize {
        self.n_head() + 2 * self.n_vel() + self.n_pres()
    }

    pub fn triangles(&self, sub: Subdomain) -> &[[usize; 3]] {
        match sub {
            Subdomain::Darcy => &self.triangles_p,
            Subdomain::Stokes => &self.triangles_f,
        }
    }

    pub fn elements(&self, sub: Subdomain) -> &[[usize; 6]] {
        match sub {
            Subdomain::Darcy => &self.elements_p,
            Subdomain::Stokes => &self.elements_f,
        }
    }

    pub fn triangle_coords(&self, sub: Subdomain, t: usize) -> [[f64; 2]; 3] {
        self.triangles(sub)[t].map(|v| self.nodes[v])
    }

    pub fn rect(&self, sub: Subdomain) -> &Rect {
        match sub {
            Subdomain::Darcy => &self.geometry.darcy,
            Subdomain::Stokes => &self.geometry.stokes,
        }
    }

    /// Triangle containing `p` in the given subdomain plus its barycentric coordinates.
    ///
    /// Points outside the rectangle are clamped to the boundary cells.
    pub fn locate(&self, sub: Subdomain, p: [f64; 2]) -> (usize, [f64; 3]) {
        let r = self.rect(sub);
        let ny = match sub {
            Subdomain::Darcy => self.ny_darcy,
            Subdomain::Stokes => self.ny_stokes,
        };
        let (ci, s) = cell_coord(p[0], r.x0, self.h, self.nx);
        let (cj, t) = cell_coord(p[1], r.y0, self.h, ny);
        let cell = cj * self.nx + ci;
        if t <= s {
            (2 * cell, [1.0 - s, s - t, t])
        } else {
            (2 * cell + 1, [1.0 - t, s, t - s])
        }
    }

    pub fn interface_frame(&self) -> InterfaceFrame {
        let mut normal = Vec::with_capacity(self.interface_edges.len());
        let mut tangent = Vec::with_capacity(self.interface_edges.len());
        for e in &self.interface_edges {
            let a = self.nodes[e.nodes[0]];
            let b = self.nodes[e.nodes[2]];
            let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
            let t = [(b[0] - a[0]) / len, (b[1] - a[1]) / len];
            let mut nrm = [-t[1], t[0]];
            // Point away from the Stokes triangle's interior.
            let tri = self.triangles_f[e.stokes_triangle];
            let c = tri.iter().fold([0.0, 0.0], |acc, &v| [acc[0] + self.nodes[v][0] / 3.0, acc[1] + self.nodes[v][1] / 3.0]);
            if nrm[0] * (c[0] - a[0]) + nrm[1] * (c[1] - a[1]) > 0.0 {
                nrm = [-nrm[0], -nrm[1]];
            }
            normal.push(nrm);
            tangent.push(t);
        }
        InterfaceFrame { normal, tangent }
    }

    /// Plain-text dump: `v index x y tag` lines then `t subdomain a b c` lines (vertex node ids).
    pub fn write_dump<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for &v in &self.vertices {
            let [x, y] = self.nodes[v];
            writeln!(w, "v {v} {x:.17e} {y:.17e} {}", self.tags[v].label())?;
        }
        for t in &self.triangles_p {
            writeln!(w, "t darcy {} {} {}", t[0], t[1], t[2])?;
        }
        for t in &self.triangles_f {
            writeln!(w, "t stokes {} {} {}", t[0], t[1], t[2])?;
        }
        Ok(())
    }
}

fn cell_coord(x: f64, x0: f64, h: f64, ncell: usize) -> (usize, f64) {
    let u = (x - x0) / h;
    let c = (u.floor().max(0.0) as usize).min(ncell - 1);
    (c, u - c as f64)
}
