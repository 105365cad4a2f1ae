//! Subcommand bodies. Each writes its files into the output directory and fills a ledger record.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;
use serde_json::json;
use sdlr::glram::{factorize_k, write_spectrum_csv, GlramReport};
use sdlr::randfield::energy_ratio;
use sdlr::solver::write_solutions_csv;
use sdlr::uq::montecarlo::{convergence_study, theta_sweep, Problem, RankChoice, ThetaChoice};

use crate::config::{RunConfig, SolverPath};
use crate::ledger::Record;

/// Failure classes, mapped onto the process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CmdError {
    #[error("{0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o failure: {0}")]
    Io(String),
}

impl CmdError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CmdError::Config(_) => 1,
            CmdError::Numerical(_) => 2,
            CmdError::Io(_) => 3,
        }
    }
}

impl From<sdlr::Error> for CmdError {
    fn from(e: sdlr::Error) -> Self {
        use sdlr::Error as E;
        match e {
            E::Io(_) | E::Parse(_) => CmdError::Io(e.to_string()),
            E::Parameter(_) | E::Geometry(_) | E::Resolution { .. } | E::Constraint { .. } | E::Unsupported(_) => {
                CmdError::Config(e.to_string())
            }
            _ => CmdError::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CmdError {
    fn from(e: std::io::Error) -> Self {
        CmdError::Io(e.to_string())
    }
}

impl From<csv::Error> for CmdError {
    fn from(e: csv::Error) -> Self {
        CmdError::Io(e.to_string())
    }
}

type Result<T> = std::result::Result<T, CmdError>;

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_rows<T: Serialize>(dir: &Path, name: &str, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(dir.join(name))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn timed<T>(rec: &mut Record, stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let t0 = Instant::now();
    let out = f();
    rec.stage(stage, t0.elapsed().as_secs_f64());
    out
}

fn build_problem(cfg: &RunConfig, rec: &mut Record, m: usize) -> Result<Problem> {
    let spec = cfg.problem_spec();
    let kl = Arc::new(timed(rec, "kl", || Ok(spec.build_kl()?))?);
    let samples = timed(rec, "sampling", || Ok(spec.draw(&kl, m, cfg.seed)?))?;
    rec.metric("rejected_draws", samples.rejected);
    let p = timed(rec, "assembly", || Ok(Problem::new(&spec, kl, samples)?))?;
    rec.metric("dofs", p.system.dim());
    rec.metric("kl_terms", p.kl.truncation);
    Ok(p)
}

#[derive(Serialize)]
struct EigenRow {
    t: usize,
    lambda: f64,
    rho: f64,
}

#[derive(Serialize)]
struct NodalRow {
    node: usize,
    x: f64,
    y: f64,
    conductivity: f64,
}

pub fn kl_report(cfg: &RunConfig, rec: &mut Record) -> Result<()> {
    let spec = cfg.problem_spec();
    let kl = timed(rec, "kl", || Ok(spec.build_kl()?))?;
    let t_max = kl.truncation.max(15).min(kl.spectrum.len());
    let rows: Vec<EigenRow> =
        (1..=t_max).map(|t| EigenRow { t, lambda: kl.spectrum[t - 1], rho: energy_ratio(&kl.spectrum, t) }).collect();
    write_rows(&cfg.output_dir, "kl_eigen.csv", &rows)?;
    println!("T = {}, rho_T = {:.6}", kl.truncation, kl.energy_ratio);
    rec.metric("kl_terms", kl.truncation);
    rec.metric("energy_ratio", kl.energy_ratio);
    for &seed in &cfg.realization_seeds {
        let s = timed(rec, "sampling", || Ok(spec.draw(&kl, 1, seed)?))?;
        let r = kl.realize(&s.row(0))?;
        let rows: Vec<NodalRow> = kl
            .grid
            .points()
            .iter()
            .enumerate()
            .map(|(node, p)| NodalRow { node, x: p[0], y: p[1], conductivity: r.total.values[node] })
            .collect();
        write_rows(&cfg.output_dir, &format!("kl_realization_seed{seed}.csv"), &rows)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct SweepRow {
    theta: Option<f64>,
    k: Option<usize>,
    storage_reduction: Option<f64>,
    energy_ratio: Option<f64>,
    rmsre_direct: Option<f64>,
    rmsre_formula: Option<f64>,
    error_total: Option<f64>,
    error_darcy: Option<f64>,
    error_stokes: Option<f64>,
    max_capacitance_cond: Option<f64>,
    status: String,
    glram_seconds: Option<f64>,
    smw_seconds: Option<f64>,
}

pub fn theta_sweep_cmd(cfg: &RunConfig, rec: &mut Record) -> Result<()> {
    let p = build_problem(cfg, rec, cfg.m)?;
    let mut choices: Vec<ThetaChoice> = cfg.theta_list.iter().map(|&t| ThetaChoice::Fixed(t)).collect();
    if cfg.include_selected_theta {
        choices.push(ThetaChoice::Selected);
    }
    let r = theta_sweep(&p, cfg.m, &choices, cfg.energy_target)?;
    rec.stage("direct", r.direct_seconds);
    rec.stage("mean_factor", r.mean_seconds);
    rec.stage("gram_eigen", r.gram_seconds);
    let mut rows: Vec<(f64, SweepRow)> = r
        .entries
        .iter()
        .zip(&choices)
        .map(|(e, c)| match e {
            Ok(e) => (
                e.theta,
                SweepRow {
                    theta: Some(e.theta),
                    k: Some(e.k),
                    storage_reduction: Some(e.storage_reduction),
                    energy_ratio: Some(e.energy_ratio),
                    rmsre_direct: Some(e.rmsre_direct),
                    rmsre_formula: Some(e.rmsre_formula),
                    error_total: Some(e.error.total()),
                    error_darcy: Some(e.error.darcy),
                    error_stokes: Some(e.error.stokes),
                    max_capacitance_cond: Some(e.max_capacitance_cond),
                    status: if matches!(c, ThetaChoice::Selected) { "ok selected".into() } else { "ok".into() },
                    glram_seconds: Some(e.glram_seconds),
                    smw_seconds: Some(e.smw_seconds),
                },
            ),
            Err(msg) => {
                let theta = match c {
                    ThetaChoice::Fixed(t) => *t,
                    ThetaChoice::Selected => r.selected_theta,
                };
                (
                    theta,
                    SweepRow {
                        theta: Some(theta),
                        k: None,
                        storage_reduction: None,
                        energy_ratio: None,
                        rmsre_direct: None,
                        rmsre_formula: None,
                        error_total: None,
                        error_darcy: None,
                        error_stokes: None,
                        max_capacitance_cond: None,
                        status: format!("error: {msg}"),
                        glram_seconds: None,
                        smw_seconds: None,
                    },
                )
            }
        })
        .collect();
    rows.sort_by(|a, b| b.0.total_cmp(&a.0));
    let sorted: Vec<SweepRow> = rows.into_iter().map(|(_, r)| r).collect();
    write_rows(&cfg.output_dir, "theta_sweep.csv", &sorted)?;
    r.reference.write_csv(&p.system.layout, create(&cfg.output_dir, "reference_moments.csv")?)?;
    for row in &sorted {
        println!(
            "theta {:.4}  k {:>5}  error {:>11}  {}",
            row.theta.unwrap_or(f64::NAN),
            row.k.map(|k| k.to_string()).unwrap_or_default(),
            row.error_total.map(|e| format!("{e:.4e}")).unwrap_or_default(),
            row.status
        );
    }
    rec.metric("selected_theta", r.selected_theta);
    rec.metric("selected_k", r.selected_k);
    rec.metric("numerical_rank", r.numerical_rank);
    rec.metric(
        "runs",
        sorted
            .iter()
            .map(|s| {
                json!({
                    "theta": s.theta, "k": s.k, "rmsre": s.rmsre_direct, "energy_ratio": s.energy_ratio,
                    "error_total": s.error_total, "error_darcy": s.error_darcy, "error_stokes": s.error_stokes,
                    "storage_reduction": s.storage_reduction, "smw_seconds": s.smw_seconds, "status": s.status,
                })
            })
            .collect::<Vec<_>>(),
    );
    Ok(())
}

/// 1-based indices `i` with `lambda_{i+1} <= 1e-8 lambda_i`.
pub fn cliff_indices(eigenvalues: &[f64]) -> Vec<usize> {
    eigenvalues.windows(2).enumerate().filter(|(_, w)| w[0] > 0.0 && w[1] <= 1e-8 * w[0]).map(|(i, _)| i + 1).collect()
}

pub fn select_theta_cmd(cfg: &RunConfig, rec: &mut Record) -> Result<(f64, usize)> {
    let p = build_problem(cfg, rec, cfg.m)?;
    let dec = timed(rec, "gram_eigen", || Ok(p.gram(cfg.m)?))?;
    let (theta, k) = dec.select_theta(cfg.energy_target)?;
    let factors = timed(rec, "glram", || Ok(factorize_k(&dec, &p.system.a_tilde, k, theta)?))?;
    let report = GlramReport::new(&dec, &factors, &p.system.a_tilde, cfg.energy_target)?;
    write_spectrum_csv(&dec, create(&cfg.output_dir, "spectrum.csv")?)?;
    let mut w = create(&cfg.output_dir, "glram_report.txt")?;
    report.write_kv(&mut w)?;
    w.flush()?;
    let cliffs = cliff_indices(&dec.eigenvalues);
    println!("selected theta = {theta:.6}, k = {k}, numerical rank = {}", dec.numerical_rank());
    println!("cliff indices: {cliffs:?}");
    rec.metric("selected_theta", theta);
    rec.metric("selected_k", k);
    rec.metric("numerical_rank", dec.numerical_rank());
    rec.metric("cliff_indices", cliffs);
    rec.metric("rmsre", report.rmsre_direct);
    rec.metric("energy_ratio", report.energy_ratio);
    rec.metric("storage_reduction", report.storage_reduction);
    Ok((theta, k))
}

#[derive(Serialize)]
struct ConvRow {
    m: usize,
    expectation_error: f64,
    variance_error: f64,
}

#[derive(Serialize)]
struct ConvRunRow {
    replicate: usize,
    seed: u64,
    k: usize,
    m: usize,
    expectation_error: f64,
    variance_error: f64,
}

pub fn convergence_cmd(cfg: &RunConfig, rec: &mut Record) -> Result<()> {
    let m_max = cfg.m_list.iter().copied().max().unwrap_or(0);
    if cfg.m_ref <= m_max {
        return Err(CmdError::Config(format!("m_ref = {} must exceed max(m_list) = {m_max}", cfg.m_ref)));
    }
    let spec = cfg.problem_spec();
    let kl = Arc::new(timed(rec, "kl", || Ok(spec.build_kl()?))?);
    let s = timed(rec, "study", || {
        Ok(convergence_study(&spec, &kl, &cfg.m_list, cfg.m_ref, cfg.replicates, cfg.seed, cfg.energy_target)?)
    })?;
    let rows: Vec<ConvRow> = s
        .rows
        .iter()
        .map(|r| ConvRow { m: r.m, expectation_error: r.expectation_error, variance_error: r.variance_error })
        .collect();
    write_rows(&cfg.output_dir, "convergence.csv", &rows)?;
    let runs: Vec<ConvRunRow> = s
        .runs
        .iter()
        .enumerate()
        .flat_map(|(i, c)| {
            c.rows.iter().map(move |r| ConvRunRow {
                replicate: i,
                seed: cfg.seed.wrapping_add(i as u64),
                k: c.k,
                m: r.m,
                expectation_error: r.expectation_error,
                variance_error: r.variance_error,
            })
        })
        .collect();
    write_rows(&cfg.output_dir, "convergence_runs.csv", &runs)?;
    let mut w = create(&cfg.output_dir, "convergence_fit.txt")?;
    writeln!(w, "expectation_slope = {:.17e}", s.expectation_slope)?;
    writeln!(w, "variance_slope = {:.17e}", s.variance_slope)?;
    writeln!(w, "replicates = {}", cfg.replicates)?;
    writeln!(w, "m_ref = {}", cfg.m_ref)?;
    w.flush()?;
    for r in &rows {
        println!("M {:>6}  expectation {:.4e}  variance {:.4e}", r.m, r.expectation_error, r.variance_error);
    }
    println!("slope: expectation {:.3}, variance {:.3}", s.expectation_slope, s.variance_slope);
    rec.metric("expectation_slope", s.expectation_slope);
    rec.metric("variance_slope", s.variance_slope);
    rec.metric("rows", rows.iter().map(|r| json!({"m": r.m, "expectation": r.expectation_error, "variance": r.variance_error})).collect::<Vec<_>>());
    Ok(())
}

pub fn solve_once(cfg: &RunConfig, rec: &mut Record) -> Result<()> {
    let p = build_problem(cfg, rec, cfg.m)?;
    let (solutions, theta) = match cfg.solver {
        SolverPath::Direct => (timed(rec, "direct", || Ok(p.direct_solutions()?))?, 1.0),
        SolverPath::Lowrank => {
            let mean = timed(rec, "mean_factor", || Ok(p.factor_mean()?))?;
            let dec = timed(rec, "gram_eigen", || Ok(p.gram(cfg.m)?))?;
            let (theta, k) = dec.select_theta(cfg.energy_target)?;
            let run = p.lowrank(&mean, &dec, cfg.m, RankChoice::K(k))?;
            rec.stage("glram", run.glram_seconds);
            rec.stage("smw", run.smw_seconds);
            rec.metric("theta", run.theta);
            rec.metric("k", run.k);
            rec.metric("rmsre", run.rmsre_direct);
            rec.metric("energy_ratio", run.energy_ratio);
            rec.metric("storage_reduction", run.storage_reduction);
            (run.solutions, theta)
        }
    };
    let est = p.moments(&solutions, None, theta)?;
    est.write_csv(&p.system.layout, create(&cfg.output_dir, "moments.csv")?)?;
    write_solutions_csv(&solutions, create(&cfg.output_dir, "solutions.csv")?)?;
    p.mesh.write_dump(create(&cfg.output_dir, "mesh.txt")?)?;
    let norm = p.weights.parts(&est.mean)?;
    println!("{} samples, mean X-norm {:.6e} (Darcy {:.6e}, Stokes {:.6e})", solutions.len(), norm.total(), norm.darcy, norm.stokes);
    rec.metric("mean_xnorm", norm.total());
    Ok(())
}
