//! Run configuration: a flat TOML key-value file plus command-line overrides.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use sdlr::assembly::{BoundaryData, PhysicalParams, Sources};
use sdlr::mesh::{Geometry, Rect};
use sdlr::randfield::SquaredExponential;
use sdlr::uq::montecarlo::ProblemSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SolverPath {
    Direct,
    Lowrank,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// `[x0, x1, y0, y1]` of the porous region.
    pub darcy: [f64; 4],
    /// `[x0, x1, y0, y1]` of the free-flow region.
    pub stokes: [f64; 4],
    pub interface_y: f64,
    pub n: usize,
    pub kl_n: usize,
    pub kl_length_sq: f64,
    pub epsilon: f64,
    pub mean_conductivity: f64,
    pub m: usize,
    pub m_ref: usize,
    pub m_list: Vec<usize>,
    pub replicates: usize,
    pub seed: u64,
    pub realization_seeds: Vec<u64>,
    pub theta_list: Vec<f64>,
    pub include_selected_theta: bool,
    pub energy_target: f64,
    pub output_dir: PathBuf,
    pub solver: SolverPath,
    pub nu: f64,
    pub g: f64,
    pub alpha: f64,
    pub source_darcy: f64,
    pub source_stokes: [f64; 2],
    pub head_bc: f64,
    pub wall_velocity: [f64; 2],
    pub bottom_velocity: [f64; 2],
    pub max_attempts: usize,
    pub pin_pressure: bool,
    /// Worker threads for the inner parallel stages; 0 uses every core.
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let p = PhysicalParams::default();
        let bc = BoundaryData::default();
        Self {
            darcy: [0.0, 1.0, 0.0, 0.5],
            stokes: [0.0, 1.0, -0.5, 0.0],
            interface_y: 0.0,
            n: 8,
            kl_n: 16,
            kl_length_sq: SquaredExponential::default().length_sq,
            epsilon: 0.01,
            mean_conductivity: 1.0,
            m: 200,
            m_ref: 400,
            m_list: vec![25, 50, 100, 200],
            replicates: 8,
            seed: 1,
            realization_seeds: vec![1, 2, 3, 4],
            theta_list: vec![1.0, 0.7, 0.5, 0.1, 0.05],
            include_selected_theta: true,
            energy_target: 1.0 - 1e-9,
            output_dir: PathBuf::from("out"),
            solver: SolverPath::Lowrank,
            nu: p.nu,
            g: p.g,
            alpha: p.alpha,
            source_darcy: 0.0,
            source_stokes: [0.0, 0.0],
            head_bc: bc.head,
            wall_velocity: bc.wall_velocity,
            bottom_velocity: bc.bottom_velocity,
            max_attempts: 1000,
            pin_pressure: false,
            workers: 0,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("malformed config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn rect(a: [f64; 4]) -> Rect {
    Rect::new(a[0], a[1], a[2], a[3])
}

fn unit(name: &str, v: f64, lo_open: f64, hi: f64, hi_closed: bool) -> Result<(), ConfigError> {
    let ok = v > lo_open && if hi_closed { v <= hi } else { v < hi };
    if ok {
        Ok(())
    } else {
        Err(ConfigError::Invalid(format!("{name} = {v} outside ({lo_open}, {hi}{}", if hi_closed { "]" } else { ")" })))
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML form, hex encoded. Output location and worker
    /// count do not affect results and are left out.
    pub fn hash(&self) -> String {
        use sha2::Digest;
        let canonical = RunConfig { output_dir: PathBuf::new(), workers: 0, ..self.clone() };
        sha2::Sha256::digest(canonical.to_toml().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn geometry(&self) -> Geometry {
        Geometry { darcy: rect(self.darcy), stokes: rect(self.stokes), interface_y: self.interface_y }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        self.geometry().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        for (name, v) in [("n", self.n), ("kl_n", self.kl_n)] {
            if v == 0 || v % 2 != 0 {
                return bad(format!("{name} = {v} must be a positive even number"));
            }
        }
        unit("epsilon", self.epsilon, 0.0, 1.0, false)?;
        unit("energy_target", self.energy_target, 0.0, 1.0, true)?;
        for (name, v) in [
            ("kl_length_sq", self.kl_length_sq),
            ("mean_conductivity", self.mean_conductivity),
            ("nu", self.nu),
            ("g", self.g),
            ("alpha", self.alpha),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} = {v} must be positive"));
            }
        }
        for (name, v) in [("m", self.m), ("m_ref", self.m_ref), ("replicates", self.replicates), ("max_attempts", self.max_attempts)] {
            if v == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        if self.m_list.is_empty() || self.m_list.contains(&0) {
            return bad("m_list must hold positive sample sizes".into());
        }
        if self.realization_seeds.is_empty() {
            return bad("realization_seeds must not be empty".into());
        }
        if self.theta_list.is_empty() && !self.include_selected_theta {
            return bad("theta_list is empty and the selected theta is excluded".into());
        }
        for &t in &self.theta_list {
            unit("theta", t, 0.0, 1.0, true)?;
        }
        let finite = [self.source_darcy, self.head_bc]
            .into_iter()
            .chain(self.source_stokes)
            .chain(self.wall_velocity)
            .chain(self.bottom_velocity)
            .all(f64::is_finite);
        if !finite {
            return bad("sources and boundary values must be finite".into());
        }
        Ok(())
    }

    pub fn problem_spec(&self) -> ProblemSpec {
        ProblemSpec {
            geometry: self.geometry(),
            n: self.n,
            kl_n: self.kl_n,
            kernel: SquaredExponential { length_sq: self.kl_length_sq },
            epsilon: self.epsilon,
            mean_conductivity: self.mean_conductivity,
            params: PhysicalParams { nu: self.nu, g: self.g, alpha: self.alpha, ..PhysicalParams::default() },
            sources: Sources { darcy: self.source_darcy, stokes: self.source_stokes },
            bc: BoundaryData { head: self.head_bc, wall_velocity: self.wall_velocity, bottom_velocity: self.bottom_velocity },
            max_attempts: self.max_attempts,
            pin_pressure: self.pin_pressure,
        }
    }
}

/// Per-field overrides applied on top of the config file.
#[derive(Args, Debug, Default, Clone)]
pub struct Overrides {
    /// Grid subdivisions per unit length (even).
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// Nystrom grid subdivisions for the KL eigenproblem.
    #[arg(long, global = true)]
    pub kl_n: Option<usize>,
    /// Squared correlation length of the Gaussian kernel.
    #[arg(long, global = true)]
    pub kl_length_sq: Option<f64>,
    /// KL truncation tolerance on the discarded energy.
    #[arg(long, global = true)]
    pub epsilon: Option<f64>,
    #[arg(long, global = true)]
    pub mean_conductivity: Option<f64>,
    /// Monte Carlo sample count.
    #[arg(long, global = true)]
    pub m: Option<usize>,
    /// Reference sample count for `convergence`.
    #[arg(long, global = true)]
    pub m_ref: Option<usize>,
    /// Comma-separated sample sizes for `convergence`.
    #[arg(long, global = true, value_delimiter = ',')]
    pub m_list: Option<Vec<usize>>,
    /// Independent repetitions averaged by `convergence`.
    #[arg(long, global = true)]
    pub replicates: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Seeds of the fields dumped by `kl-report`.
    #[arg(long, global = true, value_delimiter = ',')]
    pub realization_seeds: Option<Vec<u64>>,
    /// Comma-separated compression ratios for `theta-sweep`.
    #[arg(long, global = true, value_delimiter = ',')]
    pub theta_list: Option<Vec<f64>>,
    #[arg(long, global = true)]
    pub include_selected_theta: Option<bool>,
    /// Cumulative energy the selected rank must retain.
    #[arg(long, global = true)]
    pub energy_target: Option<f64>,
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub solver: Option<SolverPath>,
    #[arg(long, global = true)]
    pub nu: Option<f64>,
    #[arg(long, global = true)]
    pub g: Option<f64>,
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// Draw attempts per sample before giving up on admissibility.
    #[arg(long, global = true)]
    pub max_attempts: Option<usize>,
    /// Pin pressure DOF 0 to zero.
    #[arg(long, global = true)]
    pub pin_pressure: Option<bool>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, c: &mut RunConfig) {
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = &self.$f { c.$f = v.clone(); } )* };
        }
        set!(n, kl_n, kl_length_sq, epsilon, mean_conductivity, m, m_ref, m_list, replicates, seed, realization_seeds,
             theta_list, include_selected_theta, energy_target, output_dir, solver, nu, g, alpha, max_attempts,
             pin_pressure, workers);
    }
}
