//! Run configuration, the `band` and `export` commands, and report files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::band::{k_grid, BandReport, BandSetup, GapEdges};
use crate::lattice::{DiophantineReport, Lattice};
use crate::operator::OperatorSpec;
use crate::potential::{fold, Generator};
use crate::scales::{ScaleSchedule, ScheduleConfig, ScheduleMode};

/// Environment variable that overrides the configured output directory.
pub const OUTPUT_DIR_ENV: &str = "HILLMSA_OUTPUT_DIR";

/// Audit names accepted in `audits`.
pub const AUDIT_NAMES: [&str; 11] = [
    "gap_bound",
    "gap_limits",
    "symmetry",
    "monotonicity",
    "monotonicity_k0_band",
    "monotonicity_k0_pair",
    "monotonicity_k0_scale",
    "decay",
    "scale_increments",
    "gap_resolvent",
    "below_spectrum_resolvent",
];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSection {
    /// Frequency components as `"p/q"` strings.
    pub omega: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingSection {
    pub epsilon: f64,
    /// Divide by `λ = 256γ`; requires `gamma`.
    #[serde(default)]
    pub normalized: bool,
    #[serde(default)]
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    pub mode: ScheduleMode,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub log_r1: Option<f64>,
    pub s_max: usize,
    #[serde(default)]
    pub epsilon0: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiophantineSection {
    pub a0: f64,
    pub b0: f64,
    pub rbar0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum KGrid {
    Range { min: f64, max: f64, step: f64 },
    List { values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub lattice: LatticeSection,
    pub potential: Generator,
    pub coupling: CouplingSection,
    pub schedule: ScheduleSection,
    #[serde(default)]
    pub diophantine: Option<DiophantineSection>,
    pub k_grid: KGrid,
    pub truncation_r: f64,
    #[serde(default = "default_pair_factor")]
    pub pair_factor: f64,
    /// Labels `m` whose gap edges `E±(k_m)` are computed.
    #[serde(default)]
    pub gaps: Vec<i64>,
    /// Audits that decide pass/fail; empty means all.
    #[serde(default)]
    pub audits: Vec<String>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_pair_factor() -> f64 {
    4.0
}

/// A parsed config together with its source text.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub text: String,
    pub config: RunConfig,
}

impl LoadedConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_text(text)
    }

    pub fn from_text(text: String) -> Result<Self, ConfigError> {
        let config: RunConfig = toml::from_str(&text)?;
        config.validate()?;
        Ok(Self { text, config })
    }

    /// Git-style blob hash of the config text.
    pub fn input_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(format!("blob {}\0", self.text.len()).as_bytes());
        h.update(self.text.as_bytes());
        hex::encode(h.finalize())
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if !self.coupling.epsilon.is_finite() {
            return bad("coupling.epsilon must be finite".into());
        }
        if self.coupling.normalized && self.coupling.gamma.is_none() {
            return bad("coupling.normalized needs coupling.gamma".into());
        }
        if !(self.truncation_r > 0.0 && self.truncation_r.is_finite()) {
            return bad("truncation_r must be positive".into());
        }
        if !(self.pair_factor > 0.0) {
            return bad("pair_factor must be positive".into());
        }
        match &self.k_grid {
            KGrid::Range { min, max, step } => {
                if !(step > &0.0 && min <= max) {
                    return bad("k_grid needs min ≤ max and step > 0".into());
                }
            }
            KGrid::List { values } => {
                if values.iter().any(|k| !k.is_finite()) {
                    return bad("k_grid values must be finite".into());
                }
            }
        }
        if let Some(a) = self.audits.iter().find(|a| !AUDIT_NAMES.contains(&a.as_str())) {
            return bad(format!("unknown audit {a:?}"));
        }
        self.setup().map(|_| ())
    }

    pub fn lattice(&self) -> Result<Lattice, ConfigError> {
        Lattice::from_strs(&self.lattice.omega).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn setup(&self) -> Result<BandSetup, ConfigError> {
        let inv = |e: String| ConfigError::Invalid(e);
        let lattice = self.lattice()?;
        let coeffs = self.potential.build().map_err(|e| inv(e.to_string()))?;
        if coeffs.nu != lattice.nu() {
            return Err(inv(format!("potential has ν = {}, lattice has ν = {}", coeffs.nu, lattice.nu())));
        }
        coeffs.validate().map_err(|e| inv(e.to_string()))?;
        let folded = fold(&coeffs, &lattice);
        let c = &self.coupling;
        let spec = if c.normalized {
            OperatorSpec::normalized(c.epsilon, 0.0, c.gamma.unwrap_or_default()).map_err(|e| inv(e.to_string()))?
        } else {
            OperatorSpec::raw(c.epsilon, 0.0)
        };
        let dio = self.diophantine.clone().unwrap_or(DiophantineSection {
            a0: 0.1,
            b0: 2.0,
            rbar0: 1.0,
        });
        let sc = ScheduleConfig {
            mode: self.schedule.mode,
            beta: self.schedule.beta,
            log_r1: self.schedule.log_r1,
            s_max: self.schedule.s_max,
            a0: dio.a0,
            b0: dio.b0,
            kappa0: coeffs.kappa0,
            alpha0: coeffs.alpha0,
            nu: lattice.nu(),
            epsilon0: self.schedule.epsilon0,
            window: None,
        };
        let schedule = ScaleSchedule::build(&sc).map_err(|e| inv(e.to_string()))?;
        Ok(BandSetup {
            lattice,
            folded,
            spec,
            schedule,
            truncation_r: self.truncation_r,
            kappa0: coeffs.kappa0,
            alpha0: coeffs.alpha0,
            pair_factor: self.pair_factor,
        })
    }

    pub fn ks(&self, setup: &BandSetup) -> Vec<f64> {
        match &self.k_grid {
            KGrid::Range { min, max, step } => k_grid(&setup.lattice, setup.truncation_r, *min, *max, *step),
            KGrid::List { values } => values.clone(),
        }
    }

    /// `output_dir` from the environment, then the config, then `out`.
    pub fn output_dir(&self) -> PathBuf {
        std::env::var_os(OUTPUT_DIR_ENV)
            .map(PathBuf::from)
            .or_else(|| self.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from("out"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config_text: String,
    pub config: RunConfig,
    pub input_hash: String,
    pub schedule: ScaleSchedule,
    pub diophantine: Option<DiophantineReport>,
    pub band: BandReport,
    pub passed: bool,
}

/// Computes the band report for a loaded config, keeping only the selected
/// audits.
pub fn compute(loaded: &LoadedConfig) -> Result<RunReport, ConfigError> {
    let cfg = &loaded.config;
    let setup = cfg.setup()?;
    let ks = cfg.ks(&setup);
    let mut band = setup.run(&ks, &cfg.gaps);
    if !cfg.audits.is_empty() {
        band.audits.retain(|a| cfg.audits.contains(&a.name));
    }
    let diophantine = cfg
        .diophantine
        .as_ref()
        .map(|d| setup.lattice.check_diophantine(d.a0, d.b0, d.rbar0));
    Ok(RunReport {
        config_text: loaded.text.clone(),
        config: cfg.clone(),
        input_hash: loaded.input_hash(),
        schedule: setup.schedule.clone(),
        diophantine,
        passed: band.passed(),
        band,
    })
}

pub fn write_band_csv(report: &BandReport, path: &Path) -> Result<(), RunError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["k", "E", "scale", "class"])?;
    for s in &report.k_samples {
        w.write_record([
            s.k.to_string(),
            s.e.to_string(),
            s.scale.to_string(),
            s.class.name().to_string(),
        ])?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

pub fn write_gaps_csv(gaps: &[GapEdges], path: &Path) -> Result<(), RunError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["m", "k_m", "E_minus", "E_plus", "width", "bound"])?;
    for g in gaps {
        w.write_record([
            g.m.to_string(),
            g.k_m.to_string(),
            g.e_minus.to_string(),
            g.e_plus.to_string(),
            g.width.to_string(),
            g.bound.to_string(),
        ])?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), RunError> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(io_err(path))
}

/// One line per sample and gap, recording how each `k` was routed.
pub fn routing_log(report: &RunReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "input {}", report.input_hash);
    for s in &report.band.k_samples {
        let _ = writeln!(
            out,
            "k={} class={} scale={} E={} resonances={:?}",
            s.k,
            match s.class {
                crate::band::SampleClass::Simple => "simple".to_string(),
                crate::band::SampleClass::Pair { partner } => format!("pair({partner})"),
            },
            s.scale,
            s.e,
            s.resonances
        );
    }
    for f in &report.band.failures {
        let _ = writeln!(out, "k={} failed: {}", f.k, f.error);
    }
    for g in &report.band.gaps {
        let _ = writeln!(out, "gap m={} k_m={} width={:e} bound={:e}", g.m, g.k_m, g.width, g.bound);
    }
    for a in &report.band.audits {
        let _ = writeln!(
            out,
            "audit {} {} checked={} {}",
            a.name,
            if a.passed { "pass" } else { "FAIL" },
            a.checked,
            a.detail
        );
    }
    out
}

/// Writes `band.csv`, `gaps.csv`, `report.json` and `run.log` into `dir`.
pub fn write_outputs(report: &RunReport, dir: &Path) -> Result<Vec<PathBuf>, RunError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let files = ["band.csv", "gaps.csv", "report.json", "run.log"].map(|f| dir.join(f));
    write_band_csv(&report.band, &files[0])?;
    write_gaps_csv(&report.band.gaps, &files[1])?;
    write_json(report, &files[2])?;
    fs::write(&files[3], routing_log(report)).map_err(io_err(&files[3]))?;
    Ok(files.to_vec())
}

/// `band <config>`: computes and writes all outputs.
pub fn run_band(config_path: &Path) -> Result<(RunReport, Vec<PathBuf>), RunError> {
    let loaded = LoadedConfig::from_path(config_path)?;
    let report = compute(&loaded)?;
    let files = write_outputs(&report, &loaded.config.output_dir())?;
    Ok((report, files))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Json,
}

impl std::str::FromStr for ExportFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            _ => Err(format!("unknown format {s:?}; expected csv or json")),
        }
    }
}

pub fn read_report(path: &Path) -> Result<RunReport, RunError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(serde_json::from_str(&text)?)
}

/// `export <report> --format F`: rewrites a stored report as CSV tables or
/// canonical JSON in `dir`.
pub fn export(report_path: &Path, format: ExportFormat, dir: &Path) -> Result<Vec<PathBuf>, RunError> {
    let report = read_report(report_path)?;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    match format {
        ExportFormat::Csv => {
            let (b, g) = (dir.join("band.csv"), dir.join("gaps.csv"));
            write_band_csv(&report.band, &b)?;
            write_gaps_csv(&report.band.gaps, &g)?;
            Ok(vec![b, g])
        }
        ExportFormat::Json => {
            let p = dir.join("report.json");
            write_json(&report, &p)?;
            Ok(vec![p])
        }
    }
}
