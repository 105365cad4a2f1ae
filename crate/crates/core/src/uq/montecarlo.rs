//! End-to-end Monte Carlo runs on one mesh: reference, low-rank and sweeps.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::DVector;

use crate::assembly::{assemble_split_system, BoundaryData, PhysicalParams, Sources, SplitSystem};
use crate::error::{Error, Result};
use crate::field::P1Grid;
use crate::glram::{factorize, factorize_k, rmsre, storage_reduction, GramDecomposition};
use crate::mesh::{build_mesh, CoupledMesh, Geometry};
use crate::randfield::{build_kl_on_grid, draw_admissible_samples, KlExpansion, SampleSet, SquaredExponential};
use crate::solver::{solve_all_direct, MeanFactorization, LowRankSolver, SampleSolution};
use crate::uq::moments::{estimate_moments, MomentEstimate};
use crate::uq::norms::{XNormParts, XNormWeights};

#[derive(Clone, Debug, PartialEq)]
pub struct ProblemSpec {
    pub geometry: Geometry,
    /// FE mesh subdivisions per unit length.
    pub n: usize,
    /// Subdivisions of the grid carrying the KL eigenfunctions.
    pub kl_n: usize,
    pub kernel: SquaredExponential,
    pub epsilon: f64,
    pub mean_conductivity: f64,
    pub params: PhysicalParams,
    pub sources: Sources,
    pub bc: BoundaryData,
    /// Draws allowed per sample before giving up on a positive field.
    pub max_attempts: usize,
    pub pin_pressure: bool,
}

impl Default for ProblemSpec {
    fn default() -> Self {
        Self {
            geometry: Geometry::default(),
            n: 8,
            kl_n: 16,
            kernel: SquaredExponential::default(),
            epsilon: 0.01,
            mean_conductivity: 1.0,
            params: PhysicalParams::default(),
            sources: Sources::default(),
            bc: BoundaryData::default(),
            max_attempts: 1000,
            pin_pressure: false,
        }
    }
}

impl ProblemSpec {
    pub fn kl_grid(&self) -> Result<P1Grid> {
        let m = build_mesh(self.geometry, self.kl_n)?;
        Ok(P1Grid::new(self.geometry.darcy, m.nx, m.ny_darcy))
    }

    pub fn build_kl(&self) -> Result<KlExpansion> {
        if !(self.mean_conductivity > 0.0) {
            return Err(Error::Parameter("mean conductivity must be positive".into()));
        }
        build_kl_on_grid(&self.kernel, self.kl_grid()?, self.mean_conductivity, self.epsilon)
    }

    pub fn draw(&self, kl: &KlExpansion, m: usize, seed: u64) -> Result<SampleSet> {
        draw_admissible_samples(kl, m, seed, self.max_attempts)
    }
}

/// Assembled split system for a fixed sample set.
pub struct Problem {
    pub spec: ProblemSpec,
    pub mesh: CoupledMesh,
    pub kl: Arc<KlExpansion>,
    pub samples: SampleSet,
    pub system: SplitSystem,
    pub weights: XNormWeights,
    pub assembly_seconds: f64,
}

impl Problem {
    pub fn new(spec: &ProblemSpec, kl: Arc<KlExpansion>, samples: SampleSet) -> Result<Self> {
        let t0 = Instant::now();
        let mesh = build_mesh(spec.geometry, spec.n)?;
        let mut system = assemble_split_system(&mesh, &spec.params, &spec.sources, &kl, &samples, &spec.bc)?;
        if spec.pin_pressure {
            system.pin_pressure(0);
        }
        let weights = XNormWeights::new(&mesh);
        Ok(Self { spec: spec.clone(), mesh, kl, samples, system, weights, assembly_seconds: t0.elapsed().as_secs_f64() })
    }

    pub fn len(&self) -> usize {
        self.system.len()
    }

    pub fn is_empty(&self) -> bool {
        self.system.is_empty()
    }

    pub fn factor_mean(&self) -> Result<MeanFactorization> {
        MeanFactorization::factor(&self.system)
    }

    pub fn direct_solutions(&self) -> Result<Vec<SampleSolution>> {
        solve_all_direct(&self.system)
    }

    /// Gram decomposition over the first `m` perturbations.
    pub fn gram(&self, m: usize) -> Result<GramDecomposition> {
        let m = self.check_prefix(m)?;
        crate::glram::build_gram(&self.system.a_tilde[..m], self.system.layout.leading())?.decompose()
    }

    fn check_prefix(&self, m: usize) -> Result<usize> {
        if m == 0 || m > self.len() {
            return Err(Error::Parameter(format!("sample prefix {m} outside 1..={}", self.len())));
        }
        Ok(m)
    }

    /// Low-rank solves of the first `m` samples with the given reduced dimension.
    pub fn lowrank(&self, mean: &MeanFactorization, dec: &GramDecomposition, m: usize, rank: RankChoice) -> Result<LowRankRun> {
        let m = self.check_prefix(m)?;
        let a = &self.system.a_tilde[..m];
        let t0 = Instant::now();
        let factors = match rank {
            RankChoice::Theta(theta) => factorize(dec, a, theta)?,
            RankChoice::K(k) => factorize_k(dec, a, k, k as f64 / dec.dim() as f64)?,
        };
        let glram_seconds = t0.elapsed().as_secs_f64();
        let t1 = Instant::now();
        let solver = LowRankSolver::new(mean, &factors)?;
        let solutions = solver.solve_all()?;
        let smw_seconds = t1.elapsed().as_secs_f64();
        Ok(LowRankRun {
            theta: factors.theta,
            k: factors.k,
            rmsre_direct: rmsre(&factors, a),
            rmsre_formula: factors.rmsre_formula,
            energy_ratio: factors.energy_ratio,
            storage_reduction: storage_reduction(factors.theta, m),
            max_capacitance_cond: solutions.iter().map(|s| s.capacitance_cond).fold(0.0, f64::max),
            solutions,
            glram_seconds,
            smw_seconds,
        })
    }

    pub fn moments(&self, solutions: &[SampleSolution], reference: Option<&DVector<f64>>, theta: f64) -> Result<MomentEstimate> {
        estimate_moments(solutions.iter().map(|s| &s.x), reference, theta)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RankChoice {
    Theta(f64),
    K(usize),
}

pub struct LowRankRun {
    pub theta: f64,
    pub k: usize,
    pub solutions: Vec<SampleSolution>,
    pub rmsre_direct: f64,
    pub rmsre_formula: f64,
    pub energy_ratio: f64,
    pub storage_reduction: f64,
    pub max_capacitance_cond: f64,
    pub glram_seconds: f64,
    pub smw_seconds: f64,
}

/// One compression ratio of a sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ThetaChoice {
    Fixed(f64),
    /// Ratio picked by the energy criterion.
    Selected,
}

#[derive(Clone, Debug)]
pub struct SweepEntry {
    pub requested: ThetaChoice,
    pub theta: f64,
    pub k: usize,
    pub error: XNormParts,
    pub rmsre_direct: f64,
    pub rmsre_formula: f64,
    pub energy_ratio: f64,
    pub storage_reduction: f64,
    pub max_capacitance_cond: f64,
    pub glram_seconds: f64,
    pub smw_seconds: f64,
}

pub struct SweepReport {
    pub samples: usize,
    pub reference_samples: usize,
    pub selected_theta: f64,
    pub selected_k: usize,
    pub numerical_rank: usize,
    pub entries: Vec<std::result::Result<SweepEntry, String>>,
    pub reference: MomentEstimate,
    pub assembly_seconds: f64,
    pub gram_seconds: f64,
    pub direct_seconds: f64,
    pub mean_seconds: f64,
}

/// Compare low-rank means over the first `m` samples with the direct mean over all samples.
///
/// A failing ratio is recorded in its entry and the sweep continues.
pub fn theta_sweep(problem: &Problem, m: usize, thetas: &[ThetaChoice], energy_target: f64) -> Result<SweepReport> {
    let t0 = Instant::now();
    let direct = problem.direct_solutions()?;
    let direct_seconds = t0.elapsed().as_secs_f64();
    let reference = problem.moments(&direct, None, 1.0)?;
    let t1 = Instant::now();
    let mean = problem.factor_mean()?;
    let mean_seconds = t1.elapsed().as_secs_f64();
    let t2 = Instant::now();
    let dec = problem.gram(m)?;
    let gram_seconds = t2.elapsed().as_secs_f64();
    let (selected_theta, selected_k) = dec.select_theta(energy_target)?;
    let entries = thetas
        .iter()
        .map(|&choice| {
            let rank = match choice {
                ThetaChoice::Fixed(t) => RankChoice::Theta(t),
                ThetaChoice::Selected => RankChoice::K(selected_k),
            };
            let run = problem.lowrank(&mean, &dec, m, rank).map_err(|e| e.to_string())?;
            let est = problem.moments(&run.solutions, Some(&reference.mean), run.theta).map_err(|e| e.to_string())?;
            let error = problem.weights.parts(&(&est.mean - &reference.mean)).map_err(|e| e.to_string())?;
            Ok(SweepEntry {
                requested: choice,
                theta: run.theta,
                k: run.k,
                error,
                rmsre_direct: run.rmsre_direct,
                rmsre_formula: run.rmsre_formula,
                energy_ratio: run.energy_ratio,
                storage_reduction: run.storage_reduction,
                max_capacitance_cond: run.max_capacitance_cond,
                glram_seconds: run.glram_seconds,
                smw_seconds: run.smw_seconds,
            })
        })
        .collect();
    Ok(SweepReport {
        samples: m,
        reference_samples: problem.len(),
        selected_theta,
        selected_k,
        numerical_rank: dec.numerical_rank(),
        entries,
        reference,
        assembly_seconds: problem.assembly_seconds,
        gram_seconds,
        direct_seconds,
        mean_seconds,
    })
}

#[derive(Clone, Debug)]
pub struct ConvergenceRow {
    pub m: usize,
    pub expectation_error: f64,
    pub variance_error: f64,
}

pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    pub expectation_slope: f64,
    pub variance_slope: f64,
    pub theta: f64,
    pub k: usize,
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Moment errors of nested low-rank estimates against a direct-path reference.
///
/// `problem` holds at least `max(m_list)` samples; the shared factor is
/// built from all of them so that every prefix uses the same `U`.
pub fn convergence(
    problem: &Problem,
    reference: &Problem,
    m_list: &[usize],
    energy_target: f64,
) -> Result<ConvergenceReport> {
    let m_max = *m_list.iter().max().ok_or_else(|| Error::Parameter("empty sample-size list".into()))?;
    let ref_solutions = reference.direct_solutions()?;
    let ref_est = reference.moments(&ref_solutions, None, 1.0)?;
    let mean = problem.factor_mean()?;
    let dec = problem.gram(m_max)?;
    let (theta, k) = dec.select_theta(energy_target)?;
    let run = problem.lowrank(&mean, &dec, m_max, RankChoice::K(k))?;
    let mut rows = Vec::with_capacity(m_list.len());
    for &m in m_list {
        let est = problem.moments(&run.solutions[..m], Some(&ref_est.mean), theta)?;
        rows.push(ConvergenceRow {
            m,
            expectation_error: problem.weights.norm(&(&est.mean - &ref_est.mean))?,
            variance_error: problem.weights.norm(&(&est.variance - &ref_est.variance_self))?,
        });
    }
    let ms: Vec<f64> = rows.iter().map(|r| r.m as f64).collect();
    let e: Vec<f64> = rows.iter().map(|r| r.expectation_error).collect();
    let v: Vec<f64> = rows.iter().map(|r| r.variance_error).collect();
    Ok(ConvergenceReport { expectation_slope: loglog_slope(&ms, &e), variance_slope: loglog_slope(&ms, &v), rows, theta, k })
}

/// Root-mean-square moment errors over independent repetitions.
pub struct ConvergenceStudy {
    pub rows: Vec<ConvergenceRow>,
    pub expectation_slope: f64,
    pub variance_slope: f64,
    pub reference_samples: usize,
    pub seed: u64,
    pub runs: Vec<ConvergenceReport>,
}

/// Repeat the nested convergence run `replicates` times and average errors in the mean-square sense.
///
/// Repetition `r` draws `m_ref` samples from seed `seed + r`; the direct
/// reference uses all of them and the low-rank estimates use prefixes.
pub fn convergence_study(
    spec: &ProblemSpec,
    kl: &Arc<KlExpansion>,
    m_list: &[usize],
    m_ref: usize,
    replicates: usize,
    seed: u64,
    energy_target: f64,
) -> Result<ConvergenceStudy> {
    let m_max = m_list.iter().copied().max().ok_or_else(|| Error::Parameter("empty sample-size list".into()))?;
    if m_list.contains(&0) || m_max > m_ref {
        return Err(Error::Parameter(format!("sample sizes must lie in 1..={m_ref}")));
    }
    if replicates == 0 {
        return Err(Error::Parameter("at least one repetition is required".into()));
    }
    let mut runs = Vec::with_capacity(replicates);
    for r in 0..replicates as u64 {
        let problem = Problem::new(spec, kl.clone(), spec.draw(kl, m_ref, seed.wrapping_add(r))?)?;
        runs.push(convergence(&problem, &problem, m_list, energy_target)?);
    }
    let rms = |f: fn(&ConvergenceRow) -> f64, i: usize| {
        (runs.iter().map(|c| f(&c.rows[i]).powi(2)).sum::<f64>() / replicates as f64).sqrt()
    };
    let rows: Vec<ConvergenceRow> = m_list
        .iter()
        .enumerate()
        .map(|(i, &m)| ConvergenceRow { m, expectation_error: rms(|r| r.expectation_error, i), variance_error: rms(|r| r.variance_error, i) })
        .collect();
    let ms: Vec<f64> = m_list.iter().map(|&m| m as f64).collect();
    let e: Vec<f64> = rows.iter().map(|r| r.expectation_error).collect();
    let v: Vec<f64> = rows.iter().map(|r| r.variance_error).collect();
    Ok(ConvergenceStudy {
        expectation_slope: loglog_slope(&ms, &e),
        variance_slope: loglog_slope(&ms, &v),
        rows,
        reference_samples: m_ref,
        seed,
        runs,
    })
}
