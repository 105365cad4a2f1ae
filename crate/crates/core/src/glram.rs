//! Shared-left-factor low-rank approximation `A_m ~ U V_m^T`.
//!
//! `U` holds the leading eigenvectors of `N = sum_m A_m A_m^T` and
//! `V_m = A_m^T U`. Everything is stored on the row and column supports of
//! the perturbations, which for the coupled system are the free head and
//! interface velocity rows and the free head columns.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Eigenvalues at or below this fraction of the largest count as zero.
pub const RANK_RTOL: f64 = 1e-10;

/// Samples accumulated per parallel task; a fixed grouping keeps sums reproducible.
const CHUNK: usize = 16;

/// Gram matrix restricted to the union of the perturbations' nonzero rows.
#[derive(Clone, Debug)]
pub struct GramMatrix {
    /// Full system dimension.
    pub dim: usize,
    /// Size of the leading block that may hold nonzero rows.
    pub leading: usize,
    /// Global row indices of the compressed block, ascending.
    pub support: Vec<usize>,
    pub matrix: DMatrix<f64>,
    pub samples: usize,
    /// `sum_m ||A_m||_F^2`.
    pub total_energy: f64,
}

/// Accumulate `sum_m A_m A_m^T` over the row support inside the first `leading` rows.
pub fn build_gram(a_tildes: &[CsrMatrix], leading: usize) -> Result<GramMatrix> {
    let first = a_tildes.first().ok_or_else(|| Error::Dimension("no perturbation matrices".into()))?;
    let dim = first.nrows();
    if first.ncols() != dim || leading > dim {
        return Err(Error::Dimension(format!("perturbations must be square with leading block <= {dim}")));
    }
    if let Some(m) = a_tildes.iter().position(|a| a.nrows() != dim || a.ncols() != dim) {
        return Err(Error::Dimension(format!("perturbation {m} is not {dim}x{dim}")));
    }
    let mut in_support = vec![false; dim];
    for a in a_tildes {
        for i in a.nonzero_rows() {
            in_support[i] = true;
        }
    }
    if let Some(i) = (leading..dim).find(|&i| in_support[i]) {
        return Err(Error::Dimension(format!("perturbation has a nonzero row {i} outside the leading block")));
    }
    let support: Vec<usize> = (0..dim).filter(|&i| in_support[i]).collect();
    let mut pos = vec![usize::MAX; dim];
    for (k, &i) in support.iter().enumerate() {
        pos[i] = k;
    }
    let s = support.len();
    let partial: Vec<(DMatrix<f64>, f64)> = a_tildes
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut g = DMatrix::zeros(s, s);
            let mut energy = 0.0;
            for a in chunk {
                energy += a.frobenius_norm_sq();
                let at = a.transpose();
                for j in 0..at.nrows() {
                    let col: Vec<(usize, f64)> = at.row(j).filter(|e| e.1 != 0.0).map(|(i, v)| (pos[i], v)).collect();
                    for &(p, vp) in &col {
                        for &(q, vq) in &col {
                            g[(p, q)] += vp * vq;
                        }
                    }
                }
            }
            (g, energy)
        })
        .collect();
    let mut matrix = DMatrix::zeros(s, s);
    let mut total_energy = 0.0;
    for (g, e) in partial {
        matrix += g;
        total_energy += e;
    }
    let matrix = (&matrix + matrix.transpose()) * 0.5;
    Ok(GramMatrix { dim, leading, support, matrix, samples: a_tildes.len(), total_energy })
}

/// Eigendecomposition of a [`GramMatrix`], eigenvalues non-increasing.
#[derive(Clone, Debug)]
pub struct GramDecomposition {
    pub gram: GramMatrix,
    /// Eigenvalues on the support block followed by zeros up to `leading`.
    pub eigenvalues: Vec<f64>,
    /// Support-block eigenvectors as columns, same order as `eigenvalues`.
    pub eigenvectors: DMatrix<f64>,
    /// `max_i ||N v_i - lambda_i v_i||` relative to `lambda_1`.
    pub residual: f64,
}

impl GramMatrix {
    pub fn decompose(&self) -> Result<GramDecomposition> {
        let s = self.support.len();
        let eig = SymmetricEigen::new(self.matrix.clone());
        let mut order: Vec<usize> = (0..s).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let mut eigenvalues: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let vectors = DMatrix::from_fn(s, s, |i, j| eig.eigenvectors[(i, order[j])]);
        let lmax = eigenvalues.first().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
        let r = &self.matrix * &vectors - &vectors * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(eigenvalues.clone()));
        let residual = r.column_iter().map(|c| c.norm()).fold(0.0, f64::max) / lmax;
        if !residual.is_finite() || residual > 1e-8 {
            return Err(Error::Eigen(format!("eigenpair residual {residual:.3e} relative to lambda_1")));
        }
        eigenvalues.resize(self.leading, 0.0);
        Ok(GramDecomposition { gram: self.clone(), eigenvalues, eigenvectors: vectors, residual })
    }
}

/// `k = ceil(theta N)`, robust to `theta = k / N` roundoff.
pub fn reduced_dimension(theta: f64, n: usize) -> usize {
    let x = theta * n as f64;
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.max(1.0) { r as usize } else { x.ceil() as usize }
}

impl GramDecomposition {
    pub fn dim(&self) -> usize {
        self.gram.dim
    }

    pub fn zero_tolerance(&self) -> f64 {
        RANK_RTOL * self.eigenvalues.first().copied().unwrap_or(0.0).max(0.0)
    }

    /// Number of eigenvalues above `RANK_RTOL * lambda_1`.
    pub fn numerical_rank(&self) -> usize {
        let tol = self.zero_tolerance();
        self.eigenvalues.iter().take_while(|&&l| l > tol).count()
    }

    /// `k` for a compression ratio, capped at the leading block.
    pub fn k_for_theta(&self, theta: f64) -> usize {
        reduced_dimension(theta, self.dim()).min(self.gram.leading)
    }

    /// Cumulative energy of the first `k` eigenvalues, numerically zero ones dropped.
    pub fn energy_ratio_k(&self, k: usize) -> f64 {
        let r = self.numerical_rank();
        let total: f64 = self.eigenvalues[..r].iter().sum();
        if total <= 0.0 {
            return if k == 0 { 0.0 } else { 1.0 };
        }
        self.eigenvalues[..k.min(r)].iter().sum::<f64>() / total
    }

    pub fn energy_ratio(&self, theta: f64) -> f64 {
        self.energy_ratio_k(self.k_for_theta(theta))
    }

    /// Smallest `k` whose energy ratio reaches `target`, and `theta = k / N`.
    pub fn select_theta(&self, target: f64) -> Result<(f64, usize)> {
        if !(target > 0.0 && target <= 1.0) {
            return Err(Error::Parameter(format!("energy target must lie in (0,1], got {target}")));
        }
        let k = (0..=self.gram.leading).find(|&k| self.energy_ratio_k(k) >= target).unwrap_or(self.gram.leading);
        Ok((k as f64 / self.dim() as f64, k))
    }

    /// Closed-form RMSRE `sqrt((sum ||A_m||^2 - sum_{i<=l} lambda_i) / M)`, `l = min(k, rank)`.
    pub fn rmsre_formula(&self, k: usize) -> f64 {
        let l = k.min(self.numerical_rank());
        let kept: f64 = self.eigenvalues[..l].iter().sum();
        ((self.gram.total_energy - kept) / self.gram.samples as f64).max(0.0).sqrt()
    }
}

/// Right factor `V_m` stored on the nonzero columns of `A_m`.
#[derive(Clone, Debug)]
pub struct RightFactor {
    pub rows: Vec<usize>,
    pub data: DMatrix<f64>,
}

#[derive(Clone, Debug)]
pub struct GlramFactors {
    pub dim: usize,
    /// Global rows of the shared factor that may be nonzero.
    pub u_rows: Vec<usize>,
    /// Shared factor restricted to `u_rows`, `u_rows.len()` by `k`.
    pub u: DMatrix<f64>,
    pub v: Vec<RightFactor>,
    pub k: usize,
    pub theta: f64,
    pub eigenvalues: Vec<f64>,
    pub energy_ratio: f64,
    pub rmsre_formula: f64,
}

/// `theta (1 + 1/M)`: storage of `U` and all `V_m` relative to all `A_m` stored densely.
pub fn storage_reduction(theta: f64, m: usize) -> f64 {
    theta * (1.0 + 1.0 / m as f64)
}

/// Factor with `k = ceil(theta N)` capped at the leading block.
pub fn factorize(dec: &GramDecomposition, a_tildes: &[CsrMatrix], theta: f64) -> Result<GlramFactors> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::Parameter(format!("theta must lie in (0,1], got {theta}")));
    }
    factorize_k(dec, a_tildes, dec.k_for_theta(theta), theta)
}

/// Factor with an explicit `k`; `theta` is carried for reporting.
pub fn factorize_k(dec: &GramDecomposition, a_tildes: &[CsrMatrix], k: usize, theta: f64) -> Result<GlramFactors> {
    let gram = &dec.gram;
    if a_tildes.len() != gram.samples {
        return Err(Error::Dimension(format!("{} matrices for a Gram matrix of {}", a_tildes.len(), gram.samples)));
    }
    let k = k.min(gram.leading);
    let s = gram.support.len();
    let mut u_rows = gram.support.clone();
    let n_pad = k.saturating_sub(s);
    if n_pad > 0 {
        let mut in_support = vec![false; gram.dim];
        gram.support.iter().for_each(|&i| in_support[i] = true);
        u_rows.extend((0..gram.leading).filter(|&i| !in_support[i]).take(n_pad));
    }
    let mut u = DMatrix::zeros(u_rows.len(), k);
    let kv = k.min(s);
    u.view_mut((0, 0), (s, kv)).copy_from(&dec.eigenvectors.columns(0, kv));
    for p in 0..n_pad {
        u[(s + p, kv + p)] = 1.0;
    }
    let mut pos = vec![usize::MAX; gram.dim];
    for (r, &i) in u_rows.iter().enumerate() {
        pos[i] = r;
    }
    let v = a_tildes.par_iter().map(|a| right_factor(a, &u, &pos)).collect();
    Ok(GlramFactors {
        dim: gram.dim,
        u_rows,
        u,
        v,
        k,
        theta,
        eigenvalues: dec.eigenvalues[..k].to_vec(),
        energy_ratio: dec.energy_ratio_k(k),
        rmsre_formula: dec.rmsre_formula(k),
    })
}

fn right_factor(a: &CsrMatrix, u: &DMatrix<f64>, pos: &[usize]) -> RightFactor {
    let rows = a.nonzero_cols();
    let mut col_pos = vec![usize::MAX; a.ncols()];
    for (r, &j) in rows.iter().enumerate() {
        col_pos[j] = r;
    }
    let mut data = DMatrix::zeros(rows.len(), u.ncols());
    for (i, j, val) in a.iter() {
        if val == 0.0 {
            continue;
        }
        let (r, c) = (pos[i], col_pos[j]);
        for t in 0..u.ncols() {
            data[(c, t)] += val * u[(r, t)];
        }
    }
    RightFactor { rows, data }
}

impl GlramFactors {
    pub fn samples(&self) -> usize {
        self.v.len()
    }

    pub fn u_dense(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.dim, self.k);
        for (r, &i) in self.u_rows.iter().enumerate() {
            out.row_mut(i).copy_from(&self.u.row(r));
        }
        out
    }

    pub fn v_dense(&self, m: usize) -> DMatrix<f64> {
        let f = &self.v[m];
        let mut out = DMatrix::zeros(self.dim, self.k);
        for (r, &i) in f.rows.iter().enumerate() {
            out.row_mut(i).copy_from(&f.data.row(r));
        }
        out
    }

    pub fn storage_reduction(&self) -> f64 {
        storage_reduction(self.theta, self.samples())
    }

    /// `max |U^T U - I|`.
    pub fn orthonormality_defect(&self) -> f64 {
        let g = self.u.transpose() * &self.u;
        (g - DMatrix::identity(self.k, self.k)).abs().max()
    }

    /// `||A_m - U V_m^T||_F^2` evaluated directly.
    pub fn reconstruction_error_sq(&self, m: usize, a: &CsrMatrix) -> f64 {
        let f = &self.v[m];
        let mut row_pos = vec![usize::MAX; self.dim];
        for (r, &i) in self.u_rows.iter().enumerate() {
            row_pos[i] = r;
        }
        let mut col_pos = vec![usize::MAX; self.dim];
        for (c, &j) in f.rows.iter().enumerate() {
            col_pos[j] = c;
        }
        let mut d = -(&self.u * f.data.transpose());
        let mut outside = 0.0;
        for (i, j, val) in a.iter() {
            if row_pos[i] != usize::MAX && col_pos[j] != usize::MAX {
                d[(row_pos[i], col_pos[j])] += val;
            } else {
                outside += val * val;
            }
        }
        d.norm_squared() + outside
    }
}

/// `sqrt(mean_m ||A_m - U V_m^T||_F^2)` by direct evaluation.
pub fn rmsre(factors: &GlramFactors, a_tildes: &[CsrMatrix]) -> f64 {
    let parts: Vec<f64> =
        a_tildes.par_iter().enumerate().map(|(m, a)| factors.reconstruction_error_sq(m, a)).collect();
    (parts.iter().sum::<f64>() / a_tildes.len() as f64).sqrt()
}

/// Summary of one factorization.
#[derive(Clone, Debug)]
pub struct GlramReport {
    pub dim: usize,
    pub samples: usize,
    pub k: usize,
    pub theta: f64,
    pub rmsre_direct: f64,
    pub rmsre_formula: f64,
    pub energy_ratio: f64,
    pub storage_reduction: f64,
    pub numerical_rank: usize,
    pub selected_theta: f64,
    pub selected_k: usize,
}

impl GlramReport {
    pub fn new(dec: &GramDecomposition, factors: &GlramFactors, a_tildes: &[CsrMatrix], target: f64) -> Result<Self> {
        let (selected_theta, selected_k) = dec.select_theta(target)?;
        Ok(Self {
            dim: factors.dim,
            samples: factors.samples(),
            k: factors.k,
            theta: factors.theta,
            rmsre_direct: rmsre(factors, a_tildes),
            rmsre_formula: factors.rmsre_formula,
            energy_ratio: factors.energy_ratio,
            storage_reduction: factors.storage_reduction(),
            numerical_rank: dec.numerical_rank(),
            selected_theta,
            selected_k,
        })
    }

    pub fn write_kv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "dim = {}", self.dim)?;
        writeln!(w, "samples = {}", self.samples)?;
        writeln!(w, "k = {}", self.k)?;
        writeln!(w, "theta = {:.17e}", self.theta)?;
        writeln!(w, "rmsre_direct = {:.17e}", self.rmsre_direct)?;
        writeln!(w, "rmsre_formula = {:.17e}", self.rmsre_formula)?;
        writeln!(w, "energy_ratio = {:.17e}", self.energy_ratio)?;
        writeln!(w, "storage_reduction = {:.17e}", self.storage_reduction)?;
        writeln!(w, "numerical_rank = {}", self.numerical_rank)?;
        writeln!(w, "selected_theta = {:.17e}", self.selected_theta)?;
        writeln!(w, "selected_k = {}", self.selected_k)
    }
}

/// CSV of `index,eigenvalue,cumulative_energy` over the leading block.
pub fn write_spectrum_csv<W: Write>(dec: &GramDecomposition, mut w: W) -> std::io::Result<()> {
    writeln!(w, "index,eigenvalue,cumulative_energy")?;
    for (i, l) in dec.eigenvalues.iter().enumerate() {
        writeln!(w, "{},{:.17e},{:.17e}", i + 1, l, dec.energy_ratio_k(i + 1))?;
    }
    Ok(())
}
