//! J-sweeps, plateau statistics and result files.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ChainSpec, FieldPoint};
use crate::pulsesim::simulate_protocol_trotter;
use crate::quench::{
    evolve_quench, evolve_quench_unchecked, extract_curvature, QuenchProtocol, DEFAULT_STEPS,
    DEFAULT_VELOCITY,
};
use crate::spectral::{chern_lattice, curvature_spectral, ground_gap, SphereGrid};

/// Jump threshold separating plateaus.
pub const PLATEAU_JUMP: f64 = 0.25;

pub const CSV_HEADER: [&str; 6] = [
    "j",
    "f_phitheta",
    "chern",
    "gap_at_pole",
    "method",
    "converged",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepMethod {
    /// Quench simulation with exact slice propagators.
    Dynamical,
    /// Sum over states at the equator.
    Spectral,
    /// Plaquette Chern number on a sphere grid.
    Lattice,
    /// Quench simulation with Trotter steps.
    Trotter,
}

impl SweepMethod {
    pub const ALL: [SweepMethod; 4] = [
        Self::Dynamical,
        Self::Spectral,
        Self::Lattice,
        Self::Trotter,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Dynamical => "dynamical",
            Self::Spectral => "spectral",
            Self::Lattice => "lattice",
            Self::Trotter => "trotter",
        }
    }

    fn uses_quench(self) -> bool {
        matches!(self, Self::Dynamical | Self::Trotter)
    }
}

impl fmt::Display for SweepMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SweepMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| {
                Error::InvalidInput(format!(
                    "unknown method '{s}' (dynamical, spectral, lattice, trotter)"
                ))
            })
    }
}

/// `[-2, 2]` in steps of 0.05.
pub fn default_j_grid() -> Vec<f64> {
    j_grid(-2.0, 2.0, 0.05)
}

/// Inclusive grid `lo, lo+step, …, hi`; points are computed as `lo + k·step`
/// and snapped to the nearest multiple of `1e-12` to keep decimal values clean.
pub fn j_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    if !(step > 0.0) || !(hi >= lo) {
        return Vec::new();
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    (0..count)
        .map(|k| ((lo + k as f64 * step) * 1e12).round() / 1e12)
        .collect()
}

fn default_velocities() -> Vec<f64> {
    vec![DEFAULT_VELOCITY]
}

fn default_steps() -> usize {
    DEFAULT_STEPS
}

fn default_magnitude() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

fn default_lattice_grid() -> SphereGrid {
    SphereGrid {
        n_theta: 24,
        n_phi: 24,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    /// Chain template; its coupling is replaced by each entry of `j_values`.
    pub spec: ChainSpec,
    #[serde(default = "default_j_grid")]
    pub j_values: Vec<f64>,
    #[serde(default = "default_velocities")]
    pub velocities: Vec<f64>,
    #[serde(default = "default_steps")]
    pub steps: usize,
    pub method: SweepMethod,
    #[serde(default)]
    pub output_path: Option<PathBuf>,
    #[serde(default = "default_magnitude")]
    pub magnitude: f64,
    /// Rerun each quench with doubled steps and flag rows whose force moves.
    #[serde(default = "default_true")]
    pub check_convergence: bool,
    #[serde(default = "default_lattice_grid")]
    pub lattice_grid: SphereGrid,
    #[serde(default)]
    pub seed: u64,
}

impl SweepConfig {
    pub fn new(n_spins: usize, method: SweepMethod) -> Result<Self> {
        Ok(Self {
            spec: ChainSpec::new(n_spins, 0.0)?,
            j_values: default_j_grid(),
            velocities: default_velocities(),
            steps: DEFAULT_STEPS,
            method,
            output_path: None,
            magnitude: 1.0,
            check_convergence: true,
            lattice_grid: default_lattice_grid(),
            seed: 0,
        })
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.j_values.is_empty() {
            return Err(Error::InvalidInput("j_values must not be empty".into()));
        }
        if self.j_values.iter().any(|j| !j.is_finite())
            || !(self.magnitude > 0.0 && self.magnitude.is_finite())
        {
            return Err(Error::NonFinite);
        }
        if self.method.uses_quench() {
            if self.velocities.is_empty() {
                return Err(Error::InvalidInput(format!(
                    "method {} needs at least one velocity",
                    self.method
                )));
            }
            if self.velocities.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(Error::InvalidInput("velocities must be positive".into()));
            }
            if self.steps == 0 {
                return Err(Error::InvalidInput("steps must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub j: f64,
    /// Equator curvature; NaN when the row did not converge.
    pub f_phitheta: f64,
    pub chern: f64,
    pub gap_at_pole: f64,
    pub method: SweepMethod,
    pub converged: bool,
}

impl SweepRow {
    fn failed(j: f64, gap_at_pole: f64, method: SweepMethod) -> Self {
        Self {
            j,
            f_phitheta: f64::NAN,
            chern: f64::NAN,
            gap_at_pole,
            method,
            converged: false,
        }
    }

    /// Bitwise equality, treating NaN payloads as values.
    pub fn bit_eq(&self, other: &Self) -> bool {
        self.j.to_bits() == other.j.to_bits()
            && self.f_phitheta.to_bits() == other.f_phitheta.to_bits()
            && self.chern.to_bits() == other.chern.to_bits()
            && self.gap_at_pole.to_bits() == other.gap_at_pole.to_bits()
            && self.method == other.method
            && self.converged == other.converged
    }
}

fn quench_curvature(cfg: &SweepConfig, spec: ChainSpec) -> Result<f64> {
    let points = cfg
        .velocities
        .iter()
        .map(|&v| {
            let proto = QuenchProtocol {
                magnitude: cfg.magnitude,
                ..QuenchProtocol::new(v, cfg.steps)?
            };
            let r = match (cfg.method, cfg.check_convergence) {
                (SweepMethod::Trotter, true) => simulate_protocol_trotter(spec, &proto)?,
                (SweepMethod::Trotter, false) => {
                    crate::pulsesim::simulate_protocol_trotter_unchecked(spec, &proto)?
                }
                (_, true) => evolve_quench(spec, &proto)?,
                (_, false) => evolve_quench_unchecked(spec, &proto)?,
            };
            Ok((v, r.m_phi))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(extract_curvature(&points)?.slope)
}

fn sweep_row(cfg: &SweepConfig, j: f64) -> Result<SweepRow> {
    let spec = cfg.spec.with_coupling(j);
    let gap_at_pole = ground_gap(spec, FieldPoint::north_pole(cfg.magnitude))?;
    let outcome = match cfg.method {
        SweepMethod::Spectral => curvature_spectral(spec, FieldPoint::equator(cfg.magnitude))
            .map(|s| (s.f_phitheta, 2.0 * s.f_phitheta)),
        SweepMethod::Lattice => {
            chern_lattice(spec, cfg.lattice_grid).map(|c| (c as f64 / 2.0, c as f64))
        }
        SweepMethod::Dynamical | SweepMethod::Trotter => {
            quench_curvature(cfg, spec).map(|f| (f, 2.0 * f))
        }
    };
    match outcome {
        Ok((f_phitheta, chern)) => Ok(SweepRow {
            j,
            f_phitheta,
            chern,
            gap_at_pole,
            method: cfg.method,
            converged: true,
        }),
        Err(e @ (Error::DegenerateGroundState { .. } | Error::StepCountTooSmall { .. })) => {
            log::info!("J = {j}: {e}; row marked non-converged");
            Ok(SweepRow::failed(j, gap_at_pole, cfg.method))
        }
        Err(e) => Err(e),
    }
}

/// One row per J value, sorted by J. Rows at ground-state degeneracies or
/// with unconverged time stepping are kept with `converged = false`.
pub fn run_sweep(cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let mut rows: Vec<SweepRow> = cfg
        .j_values
        .par_iter()
        .map(|&j| sweep_row(cfg, j))
        .collect::<Result<_>>()?;
    rows.sort_by(|a, b| a.j.total_cmp(&b.j));
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlateauStats {
    pub plateau_mean: f64,
    /// Population standard deviation.
    pub plateau_std: f64,
    pub j_range: (f64, f64),
    /// Nearest multiple of 1/2.
    pub nearest_theory: f64,
    pub members: usize,
}

/// Splits converged rows at jumps `|ΔF| > 0.25` and at non-converged rows and
/// summarizes each segment. Rows are taken in J order.
pub fn detect_plateaus(rows: &[SweepRow]) -> Result<Vec<PlateauStats>> {
    let converged = rows.iter().filter(|r| r.converged).count();
    if converged < 3 {
        return Err(Error::TooFewRows {
            needed: 3,
            got: converged,
        });
    }
    let mut sorted: Vec<&SweepRow> = rows.iter().collect();
    sorted.sort_by(|a, b| a.j.total_cmp(&b.j));

    let mut segments: Vec<Vec<&SweepRow>> = Vec::new();
    let mut current: Vec<&SweepRow> = Vec::new();
    for row in sorted {
        let jump = current
            .last()
            .is_some_and(|prev| (row.f_phitheta - prev.f_phitheta).abs() > PLATEAU_JUMP);
        if (!row.converged || jump) && !current.is_empty() {
            segments.push(std::mem::take(&mut current));
        }
        if row.converged {
            current.push(row);
        }
    }
    if !current.is_empty() {
        segments.push(current);
    }

    Ok(segments
        .into_iter()
        .map(|seg| {
            let n = seg.len() as f64;
            let mean = seg.iter().map(|r| r.f_phitheta).sum::<f64>() / n;
            let var = seg
                .iter()
                .map(|r| (r.f_phitheta - mean).powi(2))
                .sum::<f64>()
                / n;
            PlateauStats {
                plateau_mean: mean,
                plateau_std: var.sqrt(),
                j_range: (seg[0].j, seg[seg.len() - 1].j),
                nearest_theory: (2.0 * mean).round() / 2.0,
                members: seg.len(),
            }
        })
        .collect())
}

/// Midpoints between adjacent converged rows where F jumps by more than
/// [`PLATEAU_JUMP`], or the J of a non-converged row flanked by distinct plateaus.
pub fn sweep_jumps(rows: &[SweepRow]) -> Vec<f64> {
    let mut out = Vec::new();
    let mut last: Option<&SweepRow> = None;
    let mut gap_rows: Vec<f64> = Vec::new();
    for row in rows {
        if !row.converged {
            gap_rows.push(row.j);
            continue;
        }
        if let Some(prev) = last {
            if (row.f_phitheta - prev.f_phitheta).abs() > PLATEAU_JUMP {
                out.push(match gap_rows.as_slice() {
                    [single] => *single,
                    _ => (prev.j + row.j) / 2.0,
                });
            }
        }
        gap_rows.clear();
        last = Some(row);
    }
    out
}

/// `σ = sqrt(Σ (x_obs − x_th)² / M)`.
pub fn deviation_report(observed: &[f64], theory: &[f64]) -> Result<f64> {
    if observed.len() != theory.len() || observed.is_empty() {
        return Err(Error::LengthMismatch {
            observed: observed.len(),
            theory: theory.len(),
        });
    }
    let ss: f64 = observed
        .iter()
        .zip(theory)
        .map(|(o, t)| (o - t).powi(2))
        .sum();
    Ok((ss / observed.len() as f64).sqrt())
}

fn sci(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

#[derive(Serialize)]
struct Sidecar<'a> {
    tool: &'static str,
    version: &'static str,
    seed: u64,
    config: Option<&'a SweepConfig>,
    plateaus: &'a [PlateauStats],
    crossings: &'a [f64],
    rows: usize,
}

/// Sidecar path next to a CSV file: `results.csv` → `results.json`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// CSV with header [`CSV_HEADER`]; reals carry 17 significant digits.
pub fn write_rows_csv<W: Write>(rows: &[SweepRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            sci(r.j),
            sci(r.f_phitheta),
            sci(r.chern),
            sci(r.gap_at_pole),
            r.method.as_str().to_string(),
            r.converged.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes rows as CSV and a JSON sidecar carrying the
/// configuration, plateau statistics, crossings, tool version and seed.
pub fn export_results(
    rows: &[SweepRow],
    stats: &[PlateauStats],
    crossings: &[f64],
    config: Option<&SweepConfig>,
    path: &Path,
) -> Result<()> {
    write_rows_csv(rows, File::create(path)?)?;
    let sidecar = Sidecar {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        seed: config.map_or(0, |c| c.seed),
        config,
        plateaus: stats,
        crossings,
        rows: rows.len(),
    };
    let file = BufWriter::new(File::create(sidecar_path(path))?);
    serde_json::to_writer_pretty(file, &sidecar)?;
    Ok(())
}

/// Reads a CSV written by [`export_results`].
pub fn import_results(path: &Path) -> Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(Error::InvalidInput(format!(
            "unexpected CSV header {header:?}"
        )));
    }
    r.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}
