//! Mean-matrix factorization, Woodbury sample solves and the direct baseline.

use std::io::Write;

use faer::linalg::solvers::{PartialPivLu, Solve};
use faer::prelude::*;
use faer::sparse::linalg::solvers::Lu;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::assembly::SplitSystem;
use crate::error::{Error, Result};
use crate::glram::GlramFactors;
use crate::sparse::CsrMatrix;

/// Relative backward-error bound accepted for sparse solves.
pub const RESIDUAL_RTOL: f64 = 1e-10;
/// Capacitance matrices with a larger condition estimate are rejected.
pub const CAPACITANCE_COND_MAX: f64 = 1e12;

fn to_faer(m: &DMatrix<f64>) -> Mat<f64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn from_faer(m: MatRef<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn inf_norm(a: &CsrMatrix) -> f64 {
    (0..a.nrows()).map(|i| a.row(i).map(|(_, v)| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

fn vec_inf(v: impl Iterator<Item = f64>) -> f64 {
    v.fold(0.0, |m, x| m.max(x.abs()))
}

/// Sparse LU of a square matrix with backward-error checks on every solve.
pub struct SparseLu {
    lu: Lu<usize, f64>,
    matrix: CsrMatrix,
    norm: f64,
}

impl SparseLu {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(Error::Dimension(format!("matrix is {}x{}", a.nrows(), a.ncols())));
        }
        let lu = a.to_faer().sp_lu().map_err(|e| match e {
            faer::sparse::linalg::LuError::SymbolicSingular { index } => {
                Error::Singular { dof: index, detail: "structurally singular".into() }
            }
            other => Error::Singular { dof: 0, detail: format!("{other:?}") },
        })?;
        Ok(Self { lu, norm: inf_norm(a), matrix: a.clone() })
    }

    /// Solve for every column of `rhs`, checking `||A x - b|| <= tol (||A|| ||x|| + ||b||)`.
    pub fn solve(&self, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut x = to_faer(rhs);
        self.lu.solve_in_place(x.as_mut());
        let x = from_faer(x.as_ref());
        if let Some((i, _)) = x.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Singular { dof: i % x.nrows(), detail: "non-finite solution component".into() });
        }
        let r = self.matrix.mul_dense(&x) - rhs;
        for c in 0..x.ncols() {
            let res = vec_inf(r.column(c).iter().copied());
            let bound = RESIDUAL_RTOL * (self.norm * vec_inf(x.column(c).iter().copied()) + vec_inf(rhs.column(c).iter().copied()));
            if res > bound {
                let dof = r.column(c).iamax();
                return Err(Error::Singular { dof, detail: format!("residual {res:.3e} exceeds {bound:.3e}") });
            }
        }
        Ok(x)
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        let x = self.solve(&DMatrix::from_column_slice(b.len(), 1, b.as_slice()))?;
        Ok(x.column(0).into_owned())
    }
}

/// Factorization of the mean matrix and the unperturbed solution.
pub struct MeanFactorization {
    pub lu: SparseLu,
    pub x_bar: DVector<f64>,
}

impl MeanFactorization {
    pub fn factor(system: &SplitSystem) -> Result<Self> {
        // Samples are solved concurrently; keep the kernels single-threaded and reproducible.
        faer::set_global_parallelism(Par::Seq);
        let lu = SparseLu::new(&system.a_bar)?;
        let x_bar = lu.solve_vec(&system.b)?;
        Ok(Self { lu, x_bar })
    }

    pub fn dim(&self) -> usize {
        self.x_bar.len()
    }
}

pub fn factor_mean(system: &SplitSystem) -> Result<MeanFactorization> {
    MeanFactorization::factor(system)
}

#[derive(Clone, Debug)]
pub struct SampleSolution {
    pub sample: usize,
    pub x: DVector<f64>,
    /// 1-norm condition estimate of the capacitance matrix (1 on the direct path).
    pub capacitance_cond: f64,
}

/// Woodbury solver sharing `Z = A_bar^{-1} U` across samples.
pub struct LowRankSolver<'a> {
    pub mean: &'a MeanFactorization,
    pub factors: &'a GlramFactors,
    /// `Z` with all `N` rows.
    pub z: DMatrix<f64>,
}

impl<'a> LowRankSolver<'a> {
    pub fn new(mean: &'a MeanFactorization, factors: &'a GlramFactors) -> Result<Self> {
        if factors.dim != mean.dim() {
            return Err(Error::Dimension(format!("factors of size {} for a system of size {}", factors.dim, mean.dim())));
        }
        let z = mean.lu.solve(&factors.u_dense())?;
        Ok(Self { mean, factors, z })
    }

    /// `x = x_bar - Z (I + V_m^T Z)^{-1} V_m^T x_bar`.
    pub fn solve_sample(&self, m: usize) -> Result<SampleSolution> {
        let f = self.factors.v.get(m).ok_or_else(|| Error::Dimension(format!("no right factor for sample {m}")))?;
        let k = self.factors.k;
        let x_bar = &self.mean.x_bar;
        if k == 0 {
            return Ok(SampleSolution { sample: m, x: x_bar.clone(), capacitance_cond: 1.0 });
        }
        let z_rows = DMatrix::from_fn(f.rows.len(), k, |r, c| self.z[(f.rows[r], c)]);
        let cap = DMatrix::identity(k, k) + f.data.transpose() * z_rows;
        let w = f.data.transpose() * DVector::from_iterator(f.rows.len(), f.rows.iter().map(|&i| x_bar[i]));
        let lu = to_faer(&cap).partial_piv_lu();
        let cond = cond1_estimate(&cap, &lu);
        if !(cond <= CAPACITANCE_COND_MAX) {
            return Err(Error::Capacitance { sample: m, cond });
        }
        let mut y = to_faer(&DMatrix::from_column_slice(k, 1, w.as_slice()));
        lu.solve_in_place(y.as_mut());
        let y = DVector::from_fn(k, |i, _| y[(i, 0)]);
        let x = x_bar - &self.z * y;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::SampleSolve { sample: m, detail: "non-finite Woodbury solution".into() });
        }
        Ok(SampleSolution { sample: m, x, capacitance_cond: cond })
    }

    pub fn solve_all(&self) -> Result<Vec<SampleSolution>> {
        (0..self.factors.samples()).into_par_iter().map(|m| self.solve_sample(m)).collect()
    }
}

pub fn solve_sample_smw(solver: &LowRankSolver<'_>, m: usize) -> Result<SampleSolution> {
    solver.solve_sample(m)
}

/// Hager's estimate of `||C||_1 ||C^{-1}||_1`.
fn cond1_estimate(c: &DMatrix<f64>, lu: &PartialPivLu<f64>) -> f64 {
    let n = c.nrows();
    let norm1 = c.column_iter().map(|col| col.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let mut x = Mat::<f64>::from_fn(n, 1, |_, _| 1.0 / n as f64);
    let mut est = 0.0;
    for _ in 0..5 {
        let mut y = x.clone();
        lu.solve_in_place(y.as_mut());
        est = (0..n).map(|i| y[(i, 0)].abs()).sum::<f64>();
        if !est.is_finite() {
            return f64::INFINITY;
        }
        let mut z = Mat::<f64>::from_fn(n, 1, |i, _| if y[(i, 0)] >= 0.0 { 1.0 } else { -1.0 });
        lu.solve_transpose_in_place(z.as_mut());
        let (j, zmax) = (0..n).map(|i| (i, z[(i, 0)].abs())).fold((0, -1.0), |a, b| if b.1 > a.1 { b } else { a });
        let ztx: f64 = (0..n).map(|i| z[(i, 0)] * x[(i, 0)]).sum();
        if zmax <= ztx {
            break;
        }
        x = Mat::<f64>::from_fn(n, 1, |i, _| if i == j { 1.0 } else { 0.0 });
    }
    norm1 * est
}

/// Fresh sparse factorization of `A_bar + A_m`.
pub fn solve_sample_direct(system: &SplitSystem, m: usize) -> Result<SampleSolution> {
    let a = system.sample_matrix(m);
    let lu = SparseLu::new(&a).map_err(|e| Error::SampleSolve { sample: m, detail: e.to_string() })?;
    let x = lu.solve_vec(&system.b).map_err(|e| Error::SampleSolve { sample: m, detail: e.to_string() })?;
    Ok(SampleSolution { sample: m, x, capacitance_cond: 1.0 })
}

pub fn solve_all_direct(system: &SplitSystem) -> Result<Vec<SampleSolution>> {
    faer::set_global_parallelism(Par::Seq);
    (0..system.len()).into_par_iter().map(|m| solve_sample_direct(system, m)).collect()
}

/// CSV with one row per sample: index then the coefficient vector.
pub fn write_solutions_csv<W: Write>(solutions: &[SampleSolution], mut w: W) -> std::io::Result<()> {
    let n = solutions.first().map_or(0, |s| s.x.len());
    write!(w, "sample")?;
    for j in 0..n {
        write!(w, ",x{j}")?;
    }
    writeln!(w)?;
    for s in solutions {
        write!(w, "{}", s.sample)?;
        for v in s.x.iter() {
            write!(w, ",{v:.17e}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}
