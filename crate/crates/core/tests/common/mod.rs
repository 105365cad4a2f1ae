//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use nalgebra::{DMatrix, Matrix3, Matrix6, Vector3, Vector6};
use sdlr::assembly::PhysicalParams;
use sdlr::field::ScalarField;
use sdlr::mesh::CoupledMesh;
use sdlr::quadrature::{edge_rule_3pt, triangle_rule_7pt};

fn mono(p: [f64; 2]) -> Vector6<f64> {
    let [x, y] = p;
    Vector6::new(1.0, x, y, x * x, x * y, y * y)
}

fn mono_grad(p: [f64; 2]) -> [Vector6<f64>; 2] {
    let [x, y] = p;
    [Vector6::new(0.0, 1.0, 0.0, 2.0 * x, y, 0.0), Vector6::new(0.0, 0.0, 1.0, 0.0, x, 2.0 * y)]
}

/// Quadratic Lagrange basis on six physical nodes, from a Vandermonde inverse.
struct Quadratic {
    coef: Matrix6<f64>,
}

impl Quadratic {
    fn new(nodes: &[[f64; 2]; 6]) -> Self {
        let mut v = Matrix6::zeros();
        for (k, p) in nodes.iter().enumerate() {
            v.set_row(k, &mono(*p).transpose());
        }
        Self { coef: v.try_inverse().expect("unisolvent nodes") }
    }

    fn values(&self, p: [f64; 2]) -> Vector6<f64> {
        self.coef.transpose() * mono(p)
    }

    fn grads(&self, p: [f64; 2]) -> [Vector6<f64>; 2] {
        let [gx, gy] = mono_grad(p);
        [self.coef.transpose() * gx, self.coef.transpose() * gy]
    }
}

struct Linear {
    coef: Matrix3<f64>,
}

impl Linear {
    fn new(v: &[[f64; 2]; 3]) -> Self {
        let m = Matrix3::from_fn(|k, c| [1.0, v[k][0], v[k][1]][c]);
        Self { coef: m.try_inverse().expect("non-degenerate triangle") }
    }

    fn values(&self, p: [f64; 2]) -> Vector3<f64> {
        self.coef.transpose() * Vector3::new(1.0, p[0], p[1])
    }
}

fn area(v: &[[f64; 2]; 3]) -> f64 {
    0.5 * ((v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1])).abs()
}

fn map(v: &[[f64; 2]; 3], l: &[f64; 3]) -> [f64; 2] {
    [l[0] * v[0][0] + l[1] * v[1][0] + l[2] * v[2][0], l[0] * v[0][1] + l[1] * v[1][1] + l[2] * v[2][1]]
}

/// Dense sample matrix built entry by entry from the Galerkin integrals.
pub fn oracle_matrix(mesh: &CoupledMesh, prm: &PhysicalParams, k_mean: f64, k: &dyn ScalarField) -> DMatrix<f64> {
    let (n1, n2, n3) = (mesh.n_head(), mesh.n_vel(), mesh.n_pres());
    let n = n1 + 2 * n2 + n3;
    let (oh, o1, o2, op) = (0, n1, n1 + n2, n1 + 2 * n2);
    let mut a = DMatrix::zeros(n, n);
    let tri = triangle_rule_7pt();
    let nu = prm.nu;

    for (t, el) in mesh.elements_p.iter().enumerate() {
        let v = mesh.triangles_p[t].map(|i| mesh.nodes[i]);
        let basis = Quadratic::new(&el.map(|i| mesh.nodes[i]));
        let d = el.map(|i| mesh.dof_head[i].unwrap());
        for (l, w) in tri.iter() {
            let p = map(&v, l);
            let g = basis.grads(p);
            let wk = w * area(&v) * k.value(p);
            for i in 0..6 {
                for j in 0..6 {
                    a[(oh + d[i], oh + d[j])] += wk * (g[0][j] * g[0][i] + g[1][j] * g[1][i]);
                }
            }
        }
    }

    for (t, el) in mesh.elements_f.iter().enumerate() {
        let v = mesh.triangles_f[t].map(|i| mesh.nodes[i]);
        let basis = Quadratic::new(&el.map(|i| mesh.nodes[i]));
        let lin = Linear::new(&v);
        let d = el.map(|i| mesh.dof_vel[i].unwrap());
        let dp = mesh.triangles_f[t].map(|i| mesh.dof_pres[i].unwrap());
        for (l, w) in tri.iter() {
            let p = map(&v, l);
            let g = basis.grads(p);
            let c = lin.values(p);
            let wa = w * area(&v);
            for i in 0..6 {
                for j in 0..6 {
                    let (bxi, byi, bxj, byj) = (g[0][i], g[1][i], g[0][j], g[1][j]);
                    a[(o1 + d[i], o1 + d[j])] += wa * nu * (2.0 * bxj * bxi + byj * byi);
                    a[(o1 + d[i], o2 + d[j])] += wa * nu * bxj * byi;
                    a[(o2 + d[i], o1 + d[j])] += wa * nu * byj * bxi;
                    a[(o2 + d[i], o2 + d[j])] += wa * nu * (bxj * bxi + 2.0 * byj * byi);
                }
                for j in 0..3 {
                    a[(o1 + d[i], op + dp[j])] -= wa * c[j] * g[0][i];
                    a[(o2 + d[i], op + dp[j])] -= wa * c[j] * g[1][i];
                    a[(op + dp[j], o1 + d[i])] -= wa * c[j] * g[0][i];
                    a[(op + dp[j], o2 + d[i])] -= wa * c[j] * g[1][i];
                }
            }
        }
    }

    // Interface edges found by searching both triangulations for shared vertex pairs on y = interface.
    let yi = mesh.geometry.interface_y;
    let edge = edge_rule_3pt();
    for (tf, vf) in mesh.triangles_f.iter().enumerate() {
        let on: Vec<usize> = vf.iter().copied().filter(|&i| mesh.nodes[i][1] == yi).collect();
        if on.len() != 2 {
            continue;
        }
        let tp = mesh
            .triangles_p
            .iter()
            .position(|vp| vp.contains(&on[0]) && vp.contains(&on[1]))
            .expect("interface edge has a Darcy neighbour");
        let (pa, pb) = (mesh.nodes[on[0]], mesh.nodes[on[1]]);
        let len = ((pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2)).sqrt();
        let third = vf.iter().copied().find(|i| !on.contains(i)).unwrap();
        let mut nrm = [-(pb[1] - pa[1]) / len, (pb[0] - pa[0]) / len];
        let pc = mesh.nodes[third];
        if nrm[0] * (pc[0] - pa[0]) + nrm[1] * (pc[1] - pa[1]) > 0.0 {
            nrm = [-nrm[0], -nrm[1]];
        }
        let tau = [nrm[1], -nrm[0]];
        let qf = Quadratic::new(&mesh.elements_f[tf].map(|i| mesh.nodes[i]));
        let qp = Quadratic::new(&mesh.elements_p[tp].map(|i| mesh.nodes[i]));
        let df = mesh.elements_f[tf].map(|i| mesh.dof_vel[i].unwrap());
        let dh = mesh.elements_p[tp].map(|i| mesh.dof_head[i].unwrap());
        let delta = prm.alpha * nu * 2f64.sqrt() / (2.0 * k_mean * nu / prm.g).sqrt();
        for (s, w) in edge.iter() {
            let p = [pa[0] + s[0] * (pb[0] - pa[0]), pa[1] + s[0] * (pb[1] - pa[1])];
            let wl = w * len;
            let b = qf.values(p);
            let av = qp.values(p);
            let ax = qp.grads(p)[0];
            let kv = k.value(p);
            for i in 0..6 {
                for j in 0..6 {
                    a[(oh + dh[i], o1 + df[j])] -= wl * nrm[0] * b[j] * av[i];
                    a[(oh + dh[i], o2 + df[j])] -= wl * nrm[1] * b[j] * av[i];
                    a[(o1 + df[i], oh + dh[j])] += wl * (prm.g * nrm[0] * av[j]
                        + delta * (tau[0] * tau[0] + tau[0] * tau[1]) * kv * ax[j])
                        * b[i];
                    a[(o2 + df[i], oh + dh[j])] += wl * (prm.g * nrm[1] * av[j]
                        + delta * (tau[1] * tau[1] + tau[1] * tau[0]) * kv * ax[j])
                        * b[i];
                    a[(o1 + df[i], o1 + df[j])] += wl * delta * tau[0] * tau[0] * b[j] * b[i];
                    a[(o1 + df[i], o2 + df[j])] += wl * delta * tau[0] * tau[1] * b[j] * b[i];
                    a[(o2 + df[i], o1 + df[j])] += wl * delta * tau[1] * tau[0] * b[j] * b[i];
                    a[(o2 + df[i], o2 + df[j])] += wl * delta * tau[1] * tau[1] * b[j] * b[i];
                }
            }
        }
    }
    a
}

/// `sum_m B_m B_m^T` by explicit triple loops.
pub fn naive_gram(mats: &[DMatrix<f64>]) -> DMatrix<f64> {
    let n = mats[0].nrows();
    let mut g = DMatrix::zeros(n, n);
    for b in mats {
        for i in 0..n {
            for j in 0..n {
                for l in 0..b.ncols() {
                    g[(i, j)] += b[(i, l)] * b[(j, l)];
                }
            }
        }
    }
    g
}

/// Objective `sum_m ||B_m - U U^T B_m||_F^2` for an orthonormal `U`.
pub fn projection_objective(mats: &[DMatrix<f64>], u: &DMatrix<f64>) -> f64 {
    mats.iter().map(|b| (b - u * (u.transpose() * b)).norm_squared()).sum()
}

/// `sum_{i>k} sigma_i^2` from an SVD.
pub fn svd_tail(b: &DMatrix<f64>, k: usize) -> f64 {
    let mut s: Vec<f64> = b.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s.iter().skip(k).map(|v| v * v).sum()
}

/// Compares the direct and closed-form RMSRE in squared form.
///
/// Relative tolerance `1e-8`, plus an absolute floor of `64 eps` times the mean
/// perturbation energy. The closed form subtracts two sums of that size, so
/// once every nonzero eigenvalue is kept both sides sit at roundoff.
pub fn rmsre_identity_gap(factors: &sdlr::glram::GlramFactors, a: &[sdlr::sparse::CsrMatrix]) -> (f64, f64, bool) {
    let direct = sdlr::glram::rmsre(factors, a);
    let formula = factors.rmsre_formula;
    let energy: f64 = a.iter().map(|m| m.frobenius_norm_sq()).sum::<f64>() / a.len() as f64;
    let (d2, f2) = (direct * direct, formula * formula);
    let ok = (d2 - f2).abs() <= 1e-8 * (d2 + f2) + 64.0 * f64::EPSILON * energy;
    (direct, formula, ok)
}

pub fn random_matrix(rng: &mut impl rand::Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal))
}

/// Haar-ish orthonormal `n x k` frame from the QR of a Gaussian matrix.
pub fn random_frame(rng: &mut impl rand::Rng, n: usize, k: usize) -> DMatrix<f64> {
    random_matrix(rng, n, k).qr().q().columns(0, k).into_owned()
}

fn fact(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

/// Coefficients `c[i][j]` of `s^i t^j` in a product of affine factors.
fn poly_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = a.len() + b.len() - 1;
    let mut c = vec![vec![0.0; d]; d];
    for (i, ra) in a.iter().enumerate() {
        for (j, &x) in ra.iter().enumerate() {
            for (k, rb) in b.iter().enumerate() {
                for (l, &y) in rb.iter().enumerate() {
                    c[i + k][j + l] += x * y;
                }
            }
        }
    }
    c
}

/// Exact integral of `x^p y^q` over a triangle, by expansion on the reference element.
pub fn exact_monomial_triangle(v: &[[f64; 2]; 3], p: usize, q: usize) -> f64 {
    let ax = vec![vec![v[0][0], v[2][0] - v[0][0]], vec![v[1][0] - v[0][0], 0.0]];
    let ay = vec![vec![v[0][1], v[2][1] - v[0][1]], vec![v[1][1] - v[0][1], 0.0]];
    let mut poly = vec![vec![1.0]];
    for _ in 0..p {
        poly = poly_mul(&poly, &ax);
    }
    for _ in 0..q {
        poly = poly_mul(&poly, &ay);
    }
    let det = ((v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1])).abs();
    let mut s = 0.0;
    for (i, row) in poly.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            s += c * fact(i) * fact(j) / fact(i + j + 2);
        }
    }
    det * s
}

/// Random triangle in `[0.5, 1.5]^2` with area at least `1e-3`.
pub fn random_triangle(rng: &mut impl rand::Rng) -> [[f64; 2]; 3] {
    loop {
        let v: [[f64; 2]; 3] = std::array::from_fn(|_| [rng.random_range(0.5..1.5), rng.random_range(0.5..1.5)]);
        if area(&v) > 1e-3 {
            return v;
        }
    }
}
