//! Truncated Karhunen-Loeve expansion of the random conductivity.

use std::io::{BufRead, Write};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::field::{P1Field, P1Grid};
use crate::mesh::CoupledMesh;

/// Truncation bound for the standard-normal coefficients.
pub const COEFF_BOUND: f64 = 3.0;

pub trait Covariance: Sync {
    fn cov(&self, a: [f64; 2], b: [f64; 2]) -> f64;
}

/// `exp(-|x - y|^2 / length_sq)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SquaredExponential {
    pub length_sq: f64,
}

impl Default for SquaredExponential {
    fn default() -> Self {
        Self { length_sq: 0.2 }
    }
}

impl Covariance for SquaredExponential {
    fn cov(&self, a: [f64; 2], b: [f64; 2]) -> f64 {
        let d2 = (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);
        (-d2 / self.length_sq).exp()
    }
}

/// Eigenpairs of the weighted Nystrom problem, sorted by decreasing eigenvalue.
///
/// Returns `r` with `sum_k w_k r_s(x_k) r_t(x_k) = delta_st`.
pub fn nystrom_eigenpairs(
    points: &[[f64; 2]],
    weights: &[f64],
    kernel: &dyn Covariance,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = points.len();
    if weights.len() != n || n == 0 {
        return Err(Error::Dimension(format!("{} points but {} weights", n, weights.len())));
    }
    if weights.iter().any(|&w| w <= 0.0) {
        return Err(Error::Parameter("quadrature weights must be positive".into()));
    }
    let sw: Vec<f64> = weights.iter().map(|w| w.sqrt()).collect();
    let b = DMatrix::from_fn(n, n, |i, j| sw[i] * kernel.cov(points[i], points[j]) * sw[j]);
    let b = (&b + b.transpose()) * 0.5;
    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let r = DMatrix::from_fn(n, n, |i, t| eig.eigenvectors[(i, order[t])] / sw[i]);
    Ok((values, r))
}

#[derive(Clone, Debug)]
pub struct KlExpansion {
    pub mean: f64,
    pub grid: Arc<P1Grid>,
    pub weights: Vec<f64>,
    /// Full discrete spectrum, non-increasing.
    pub spectrum: Vec<f64>,
    /// Retained eigenfunctions as nodal columns (grid nodes by T).
    pub eigenfunctions: DMatrix<f64>,
    pub truncation: usize,
    pub energy_ratio: f64,
}

/// Energy ratio of the first `t` terms of a spectrum (negative roundoff clamped).
pub fn energy_ratio(spectrum: &[f64], t: usize) -> f64 {
    let total: f64 = spectrum.iter().map(|l| l.max(0.0)).sum();
    spectrum[..t].iter().map(|l| l.max(0.0)).sum::<f64>() / total
}

/// Build the expansion on the Darcy vertex grid of `mesh`.
pub fn build_kl(kernel: &dyn Covariance, mesh: &CoupledMesh, mean: f64, epsilon: f64) -> Result<KlExpansion> {
    let grid = P1Grid::new(mesh.geometry.darcy, mesh.nx, mesh.ny_darcy);
    build_kl_on_grid(kernel, grid, mean, epsilon)
}

pub fn build_kl_on_grid(kernel: &dyn Covariance, grid: P1Grid, mean: f64, epsilon: f64) -> Result<KlExpansion> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Parameter(format!("epsilon must lie in (0,1), got {epsilon}")));
    }
    let points = grid.points();
    let weights = grid.lumped_weights();
    let (spectrum, r) = nystrom_eigenpairs(&points, &weights, kernel)?;
    let total: f64 = spectrum.iter().map(|l| l.max(0.0)).sum();
    if total <= 0.0 {
        return Err(Error::TruncationUnreachable { achievable: 0.0 });
    }
    let mut acc = 0.0;
    let mut truncation = None;
    for (t, &l) in spectrum.iter().enumerate() {
        if l <= 0.0 {
            break;
        }
        acc += l;
        if acc / total >= 1.0 - epsilon {
            truncation = Some(t + 1);
            break;
        }
    }
    let truncation = truncation.ok_or(Error::TruncationUnreachable { achievable: acc / total })?;
    Ok(KlExpansion {
        mean,
        eigenfunctions: r.columns(0, truncation).into_owned(),
        energy_ratio: energy_ratio(&spectrum, truncation),
        spectrum,
        truncation,
        weights,
        grid: Arc::new(grid),
    })
}

impl KlExpansion {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.spectrum[..self.truncation]
    }

    /// Nodal values of `sum_t lambda_t r_t^2`, the truncated pointwise variance.
    pub fn truncated_variance(&self) -> Vec<f64> {
        (0..self.grid.len())
            .map(|i| (0..self.truncation).map(|t| self.spectrum[t] * self.eigenfunctions[(i, t)].powi(2)).sum())
            .collect()
    }

    /// `sqrt(lambda_t) r_t` as nodal columns.
    fn scaled_modes(&self) -> DMatrix<f64> {
        let mut m = self.eigenfunctions.clone();
        for (t, mut c) in m.column_iter_mut().enumerate() {
            c *= self.spectrum[t].sqrt();
        }
        m
    }

    pub fn realize(&self, coeffs: &[f64]) -> Result<Realization> {
        if coeffs.len() != self.truncation {
            return Err(Error::Dimension(format!("expected {} coefficients, got {}", self.truncation, coeffs.len())));
        }
        let pert = self.scaled_modes() * DVector::from_column_slice(coeffs);
        let perturbation = P1Field { grid: self.grid.clone(), values: pert.iter().copied().collect() };
        let total = P1Field { grid: self.grid.clone(), values: pert.iter().map(|v| v + self.mean).collect() };
        let min_value = total.min_value();
        Ok(Realization { total, perturbation, min_value })
    }
}

/// One conductivity sample and its zero-mean part.
#[derive(Clone, Debug)]
pub struct Realization {
    pub total: P1Field,
    pub perturbation: P1Field,
    /// Minimum over grid nodes, which is the global minimum of the P1 field.
    pub min_value: f64,
}

impl Realization {
    /// Strong ellipticity: the field is positive everywhere.
    pub fn is_admissible(&self) -> bool {
        self.min_value > 0.0
    }
}

pub fn realize_conductivity(kl: &KlExpansion, coeffs: &[f64]) -> Result<Realization> {
    kl.realize(coeffs)
}

/// Monte Carlo coefficient draws, one sample per row.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    pub coefficients: DMatrix<f64>,
    pub seed: u64,
    /// Draws discarded because the realization was not positive.
    pub rejected: usize,
}

fn truncated_normal(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let z: f64 = rng.sample(StandardNormal);
        if z.abs() <= COEFF_BOUND {
            return z;
        }
    }
}

/// i.i.d. standard normals conditioned on [-3, 3], drawn row by row.
pub fn draw_samples(kl: &KlExpansion, m: usize, seed: u64) -> SampleSet {
    let t = kl.truncation;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c = DMatrix::zeros(m, t);
    for i in 0..m {
        for j in 0..t {
            c[(i, j)] = truncated_normal(&mut rng);
        }
    }
    SampleSet { coefficients: c, seed, rejected: 0 }
}

/// Like [`draw_samples`] but redraws rows whose realization is not positive.
///
/// Because rows are drawn sequentially from one stream, the first `m` rows
/// of a larger set coincide with the set of size `m`.
pub fn draw_admissible_samples(kl: &KlExpansion, m: usize, seed: u64, max_attempts: usize) -> Result<SampleSet> {
    let t = kl.truncation;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c = DMatrix::zeros(m, t);
    let mut rejected = 0;
    let mut row = vec![0.0; t];
    for i in 0..m {
        let mut attempts = 0;
        loop {
            if attempts == max_attempts {
                return Err(Error::Inadmissible { sample: i, attempts });
            }
            attempts += 1;
            row.iter_mut().for_each(|y| *y = truncated_normal(&mut rng));
            if kl.realize(&row)?.is_admissible() {
                break;
            }
            rejected += 1;
        }
        for j in 0..t {
            c[(i, j)] = row[j];
        }
    }
    Ok(SampleSet { coefficients: c, seed, rejected })
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.coefficients.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, m: usize) -> Vec<f64> {
        self.coefficients.row(m).iter().copied().collect()
    }

    /// First `m` samples.
    pub fn head(&self, m: usize) -> SampleSet {
        SampleSet { coefficients: self.coefficients.rows(0, m).into_owned(), seed: self.seed, rejected: self.rejected }
    }

    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# seed={} rows={} cols={} rejected={}", self.seed, self.len(), self.coefficients.ncols(), self.rejected)?;
        for row in self.coefficients.row_iter() {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<SampleSet> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty sample file".into()))??;
        let (mut seed, mut rows, mut cols, mut rejected) = (0u64, 0usize, 0usize, 0usize);
        for tok in header.trim_start_matches('#').split_whitespace() {
            let (k, v) = tok.split_once('=').ok_or_else(|| Error::Parse(format!("bad header token {tok}")))?;
            let num = |v: &str| v.parse::<u64>().map_err(|_| Error::Parse(format!("bad header value {tok}")));
            match k {
                "seed" => seed = num(v)?,
                "rows" => rows = num(v)? as usize,
                "cols" => cols = num(v)? as usize,
                "rejected" => rejected = num(v)? as usize,
                _ => {}
            }
        }
        let mut data = Vec::with_capacity(rows * cols);
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let vals: std::result::Result<Vec<f64>, _> = line.split_whitespace().map(str::parse).collect();
            let vals = vals.map_err(|_| Error::Parse(format!("bad sample row {line:?}")))?;
            if vals.len() != cols {
                return Err(Error::Parse(format!("expected {cols} values, got {}", vals.len())));
            }
            data.extend(vals);
        }
        if data.len() != rows * cols {
            return Err(Error::Parse(format!("expected {rows} rows, got {}", data.len() / cols.max(1))));
        }
        Ok(SampleSet { coefficients: DMatrix::from_row_slice(rows, cols, &data), seed, rejected })
    }
}
