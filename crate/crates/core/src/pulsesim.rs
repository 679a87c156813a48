//! NMR realization of the quench protocol.
//!
//! Three layers:
//!
//! * the symmetric Trotter step
//!   `R_y(θ)·e^{−i(H_z+H_zz)τ/2}·e^{−i(H_xx+H_yy)τ}·e^{−i(H_z+H_zz)τ/2}·R_y(−θ)`
//!   and the quench it drives;
//! * explicit pulse programs (collective rotations and delays in a chosen
//!   rotating frame), including the per-step loop used for pulse-error
//!   robustness;
//! * a refocusing compiler turning a molecule's natural zz couplings into an
//!   isotropic nearest-neighbour zz interaction with π pulses.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{nmr_zz_diagonal, z_sign, ChainSpec, FieldPoint, HeisenbergChain, MoleculeSpec};
use crate::qcore::{expm_i, rotation, site_operator, Axis, ComplexMatrix, C64};
use crate::quench::{finish, ground_state_at, QuenchProtocol, QuenchResult, STEP_DRIFT_TOL};

// ---------------------------------------------------------------------------
// Trotter step

/// Exponentials of one Trotter step that do not depend on `θ`.
struct TrotterFactors {
    n: usize,
    half_diag: ComplexMatrix,
    transverse: ComplexMatrix,
}

impl TrotterFactors {
    fn new(chain: &HeisenbergChain, magnitude: f64, tau: f64) -> Result<Self> {
        let j = chain.spec().coupling_j;
        let h_z = chain.collective(Axis::Z).scale(-magnitude);
        let h_zz = chain.bond(Axis::Z).scale(-j);
        let h_xy = &chain.bond(Axis::X).scale(-j) + &chain.bond(Axis::Y).scale(-j);
        Ok(Self {
            n: chain.spec().n_spins,
            half_diag: expm_i(&(&h_z + &h_zz), tau / 2.0)?,
            transverse: expm_i(&h_xy, tau)?,
        })
    }

    fn step(&self, theta: f64) -> ComplexMatrix {
        let all: Vec<usize> = (0..self.n).collect();
        let r_plus = rotation(Axis::Y, theta, &all, self.n);
        let r_minus = rotation(Axis::Y, -theta, &all, self.n);
        let core = &(&self.half_diag * &self.transverse) * &self.half_diag;
        &(&r_plus * &core) * &r_minus
    }
}

/// One symmetric Trotter step of duration `tau` at a point on the `φ = 0` meridian.
pub fn trotter_step(spec: ChainSpec, p: FieldPoint, tau: f64) -> Result<ComplexMatrix> {
    if p.phi != 0.0 {
        return Err(Error::InvalidInput(format!(
            "Trotter step is defined on the phi = 0 meridian, got phi = {}",
            p.phi
        )));
    }
    if !(tau > 0.0) {
        return Err(Error::InvalidInput(format!(
            "Trotter step needs tau > 0, got {tau}"
        )));
    }
    let chain = HeisenbergChain::new(spec)?;
    Ok(TrotterFactors::new(&chain, p.magnitude, tau)?.step(p.theta))
}

/// Quench driven by Trotter steps instead of exact slice propagators; same
/// midpoint angle sampling as [`crate::quench::evolve_quench_unchecked`].
pub fn simulate_protocol_trotter_unchecked(
    spec: ChainSpec,
    proto: &QuenchProtocol,
) -> Result<QuenchResult> {
    let chain = HeisenbergChain::new(spec)?;
    let mut psi = ground_state_at(&chain, FieldPoint::north_pole(proto.magnitude))?;
    let factors = TrotterFactors::new(&chain, proto.magnitude, proto.step_duration())?;
    for theta in proto.slice_angles() {
        psi = factors.step(theta).apply(&psi);
    }
    finish(&chain, proto, psi)
}

/// Trotterized quench with the step-doubling convergence guard.
pub fn simulate_protocol_trotter(spec: ChainSpec, proto: &QuenchProtocol) -> Result<QuenchResult> {
    let coarse = simulate_protocol_trotter_unchecked(spec, proto)?;
    let fine = simulate_protocol_trotter_unchecked(spec, &proto.with_steps(2 * proto.steps))?;
    let drift = (fine.m_phi - coarse.m_phi).abs();
    if drift > STEP_DRIFT_TOL {
        return Err(Error::StepCountTooSmall {
            steps: proto.steps,
            drift,
        });
    }
    Ok(QuenchResult {
        step_drift: Some(drift),
        ..coarse
    })
}

// ---------------------------------------------------------------------------
// Pulse programs

/// One event of a pulse program. Serialized as
/// `{"type":"delay","t_s":…,"frame":[…]}` or
/// `{"type":"pulse","spins":[…],"axis":"x","angle_rad":…}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum PulseEvent {
    /// Free evolution; `frame[i]` is the rotating-frame offset ω_i of spin i,
    /// contributing `(ω_i/2)σ^z_i` to the active Hamiltonian.
    Delay { t_s: f64, frame: Vec<f64> },
    /// `Π_{j∈spins} e^{−i·angle·σ^axis_j/2}`, instantaneous.
    Pulse {
        spins: Vec<usize>,
        axis: Axis,
        angle_rad: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PulseProgram {
    pub events: Vec<PulseEvent>,
}

impl PulseProgram {
    pub fn new(events: Vec<PulseEvent>) -> Self {
        Self { events }
    }

    pub fn extend(&mut self, other: PulseProgram) {
        self.events.extend(other.events);
    }

    pub fn pulse_count(&self) -> usize {
        self.events
            .iter()
            .filter(|e| matches!(e, PulseEvent::Pulse { .. }))
            .count()
    }

    pub fn wall_time(&self) -> f64 {
        self.events
            .iter()
            .map(|e| match e {
                PulseEvent::Delay { t_s, .. } => *t_s,
                PulseEvent::Pulse { .. } => 0.0,
            })
            .sum()
    }

    pub fn validate(&self, n_spins: usize) -> Result<()> {
        for e in &self.events {
            match e {
                PulseEvent::Delay { t_s, frame } => {
                    if !(*t_s >= 0.0 && t_s.is_finite()) {
                        return Err(Error::InvalidInput(format!(
                            "negative or non-finite delay {t_s}"
                        )));
                    }
                    if frame.len() != n_spins || frame.iter().any(|w| !w.is_finite()) {
                        return Err(Error::InvalidInput(format!(
                            "delay frame must list {n_spins} finite offsets"
                        )));
                    }
                }
                PulseEvent::Pulse {
                    spins, angle_rad, ..
                } => {
                    if !angle_rad.is_finite() {
                        return Err(Error::NonFinite);
                    }
                    if let Some(bad) = spins.iter().find(|&&s| s >= n_spins) {
                        return Err(Error::InvalidInput(format!(
                            "spin index {bad} out of range for {n_spins} spins"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.events)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(Self {
            events: serde_json::from_str(s)?,
        })
    }
}

/// Evaluates pulse programs against a fixed drift Hamiltonian (the part
/// active during every delay, before frame offsets are added). Delay
/// propagators are cached by duration and frame.
pub struct ProgramSimulator {
    n: usize,
    drift: ComplexMatrix,
    delays: HashMap<Vec<u64>, ComplexMatrix>,
}

impl ProgramSimulator {
    pub fn new(n_spins: usize, drift: ComplexMatrix) -> Result<Self> {
        if drift.dim() != 1 << n_spins {
            return Err(Error::DimensionMismatch {
                expected: 1 << n_spins,
                got: drift.dim(),
            });
        }
        Ok(Self {
            n: n_spins,
            drift,
            delays: HashMap::new(),
        })
    }

    fn delay(&mut self, t: f64, frame: &[f64]) -> Result<ComplexMatrix> {
        let key: Vec<u64> = std::iter::once(t.to_bits())
            .chain(frame.iter().map(|w| w.to_bits()))
            .collect();
        if let Some(u) = self.delays.get(&key) {
            return Ok(u.clone());
        }
        let dim = 1 << self.n;
        let offsets: Vec<f64> = (0..dim)
            .map(|b| {
                (0..self.n)
                    .map(|i| frame[i] / 2.0 * z_sign(b, i, self.n))
                    .sum()
            })
            .collect();
        let u = if self.drift.is_diagonal(0.0) {
            let phases: Vec<C64> = self
                .drift
                .real_diagonal()
                .iter()
                .zip(&offsets)
                .map(|(e, o)| C64::from_polar(1.0, -(e + o) * t))
                .collect();
            ComplexMatrix::new(DMatrix::from_diagonal(&DVector::from_vec(phases)))?
        } else {
            let h = &self.drift + &ComplexMatrix::from_real_diagonal(&offsets);
            expm_i(&h, t)?
        };
        self.delays.insert(key, u.clone());
        Ok(u)
    }

    /// Propagator of a program; `noise()` is added to every single-spin
    /// rotation angle.
    pub fn propagator_with(
        &mut self,
        program: &PulseProgram,
        noise: &mut dyn FnMut() -> f64,
    ) -> Result<ComplexMatrix> {
        program.validate(self.n)?;
        let mut u = ComplexMatrix::identity(1 << self.n);
        for e in &program.events {
            let step = match e {
                PulseEvent::Delay { t_s, frame } => self.delay(*t_s, frame)?,
                PulseEvent::Pulse {
                    spins,
                    axis,
                    angle_rad,
                } => spins
                    .iter()
                    .fold(ComplexMatrix::identity(1 << self.n), |acc, &j| {
                        &rotation(*axis, angle_rad + noise(), &[j], self.n) * &acc
                    }),
            };
            u = &step * &u;
        }
        Ok(u)
    }

    pub fn propagator(&mut self, program: &PulseProgram) -> Result<ComplexMatrix> {
        self.propagator_with(program, &mut || 0.0)
    }
}

/// Gate fidelity `|Tr(U_eff† U_target)| / dim`.
pub fn gate_fidelity(u_eff: &ComplexMatrix, u_target: &ComplexMatrix) -> f64 {
    (&u_eff.dagger() * u_target).trace().norm() / u_eff.dim() as f64
}

fn collective(axis: Axis, angle: f64, n: usize) -> PulseEvent {
    PulseEvent::Pulse {
        spins: (0..n).collect(),
        axis,
        angle_rad: angle,
    }
}

fn free(t: f64, frame: f64, n: usize) -> PulseEvent {
    PulseEvent::Delay {
        t_s: t,
        frame: vec![frame; n],
    }
}

/// One loop period at polar angle `theta` with step `tau`.
///
/// The delays evolve under the isotropic zz interaction `−J Σ σ^z_j σ^z_{j+1}`.
/// The outer half-delays run with frame offsets `ω_i = −2|h|`, which switches
/// on `−|h| Σ σ^z_j`; the two on-resonance delays of length `τ` are rotated
/// by collective π/2 pulses into xx and yy couplings. The xx/yy split is exact
/// for two spins and first order in `τ` beyond.
pub fn loop_period(n: usize, theta: f64, tau: f64, magnitude: f64) -> PulseProgram {
    let rotated_zz = |axis: Axis, t: f64| {
        [
            collective(axis, FRAC_PI_2, n),
            free(t, 0.0, n),
            collective(axis, -FRAC_PI_2, n),
        ]
    };
    let mut events = vec![
        collective(Axis::Y, -theta, n),
        free(tau / 2.0, -2.0 * magnitude, n),
    ];
    events.extend(rotated_zz(Axis::Y, tau));
    events.extend(rotated_zz(Axis::X, tau));
    events.push(free(tau / 2.0, -2.0 * magnitude, n));
    events.push(collective(Axis::Y, theta, n));
    PulseProgram::new(events)
}

/// The whole quench as one pulse program, one [`loop_period`] per step.
pub fn loop_program(spec: ChainSpec, proto: &QuenchProtocol) -> PulseProgram {
    let tau = proto.step_duration();
    let mut program = PulseProgram::default();
    for theta in proto.slice_angles() {
        program.extend(loop_period(spec.n_spins, theta, tau, proto.magnitude));
    }
    program
}

/// Drift active during loop delays: `−J Σ σ^z_j σ^z_{j+1}`.
pub fn loop_drift(chain: &HeisenbergChain) -> ComplexMatrix {
    chain.bond(Axis::Z).scale(-chain.spec().coupling_j)
}

/// Outcome of a pulse-error Monte Carlo run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    /// Minimum over trials of the per-trial mean single-period fidelity.
    pub min_fidelity: f64,
    /// Mean over trials of the same quantity.
    pub mean_fidelity: f64,
    /// Minimum over trials of the end-of-loop state fidelity.
    pub full_loop_min: f64,
    pub trials: usize,
}

/// Pulse-error Monte Carlo on the loop program.
///
/// In each trial every single-spin rotation angle of every pulse in the loop
/// gets an independent error drawn uniformly from `±angle_error_deg`. For
/// each period the perturbed and ideal period propagators act on the ideal
/// state entering that period, giving a single-period fidelity
/// `|⟨U_k ψ_k|Ũ_k ψ_k⟩|²`; the trial fidelity is the mean over periods.
/// Trial `i` draws from a generator seeded with `seed + i`.
pub fn robustness_report(
    spec: ChainSpec,
    proto: &QuenchProtocol,
    angle_error_deg: f64,
    seed: u64,
    trials: usize,
) -> Result<RobustnessReport> {
    if !(angle_error_deg >= 0.0 && angle_error_deg.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "angle error must be non-negative, got {angle_error_deg}"
        )));
    }
    if trials == 0 {
        return Err(Error::InvalidInput("need at least one trial".into()));
    }
    let chain = HeisenbergChain::new(spec)?;
    let n = spec.n_spins;
    let tau = proto.step_duration();
    let periods: Vec<PulseProgram> = proto
        .slice_angles()
        .into_iter()
        .map(|th| loop_period(n, th, tau, proto.magnitude))
        .collect();

    let mut sim = ProgramSimulator::new(n, loop_drift(&chain))?;
    let ideal: Vec<ComplexMatrix> = periods
        .iter()
        .map(|p| sim.propagator(p))
        .collect::<Result<_>>()?;
    let mut entering = Vec::with_capacity(periods.len());
    let mut psi = ground_state_at(&chain, FieldPoint::north_pole(proto.magnitude))?;
    for u in &ideal {
        entering.push(psi.clone());
        psi = u.apply(&psi);
    }
    let ideal_final = psi;
    let bound = angle_error_deg.to_radians();

    let outcomes: Vec<(f64, f64)> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(trial as u64));
            let mut noise = || {
                if bound > 0.0 {
                    rng.random_range(-bound..=bound)
                } else {
                    0.0
                }
            };
            let mut sim = ProgramSimulator::new(n, loop_drift(&chain))?;
            let mut perturbed_state = entering[0].clone();
            let mut sum = 0.0;
            for (k, program) in periods.iter().enumerate() {
                let u = sim.propagator_with(program, &mut noise)?;
                sum += ideal[k].apply(&entering[k]).overlap(&u.apply(&entering[k]));
                perturbed_state = u.apply(&perturbed_state);
            }
            Ok((
                sum / periods.len() as f64,
                ideal_final.overlap(&perturbed_state),
            ))
        })
        .collect::<Result<_>>()?;

    let min_fidelity = outcomes.iter().map(|o| o.0).fold(f64::INFINITY, f64::min);
    let mean_fidelity = outcomes.iter().map(|o| o.0).sum::<f64>() / trials as f64;
    let full_loop_min = outcomes.iter().map(|o| o.1).fold(f64::INFINITY, f64::min);
    Ok(RobustnessReport {
        min_fidelity,
        mean_fidelity,
        full_loop_min,
        trials,
    })
}

/// Minimum over trials of the period-averaged fidelity; see [`robustness_report`].
pub fn perturbed_fidelity(
    spec: ChainSpec,
    proto: &QuenchProtocol,
    angle_error_deg: f64,
    seed: u64,
    trials: usize,
) -> Result<f64> {
    Ok(robustness_report(spec, proto, angle_error_deg, seed, trials)?.min_fidelity)
}

// ---------------------------------------------------------------------------
// Refocusing compiler

/// A stretch of free evolution in one toggling frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZzSegment {
    /// Spins receiving a π pulse right before this segment.
    pub flips_before: Vec<usize>,
    /// Fraction of the wall time.
    pub fraction: f64,
    /// Toggling-frame sign of each spin's σ^z during the segment.
    pub signs: Vec<i8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompiledZZ {
    pub segments: Vec<ZzSegment>,
    /// π pulses returning every spin to its original frame.
    pub final_flips: Vec<usize>,
    /// Total free-evolution time in seconds.
    pub wall_time_s: f64,
    /// Achieved coefficient of each nearest-neighbour `σ^z σ^z`, in rad/s.
    pub rate: f64,
    pub target_j: f64,
    pub tau: f64,
    pub base_couplings: MoleculeSpec,
    /// Closed-form timing fractions (τ₁, τ₂[, τ₃]) / τ for three and four spins.
    pub closed_form: Option<Vec<f64>>,
    pub diagnostics: Vec<String>,
}

impl CompiledZZ {
    pub fn n_spins(&self) -> usize {
        self.base_couplings.n_spins()
    }

    pub fn fractions(&self) -> Vec<f64> {
        self.segments.iter().map(|s| s.fraction).collect()
    }

    /// On-resonance pulse program with ideal x-axis π pulses.
    pub fn to_program(&self) -> PulseProgram {
        let n = self.n_spins();
        let flip = |spins: &[usize]| PulseEvent::Pulse {
            spins: spins.to_vec(),
            axis: Axis::X,
            angle_rad: PI,
        };
        let mut events = Vec::new();
        for seg in &self.segments {
            if !seg.flips_before.is_empty() {
                events.push(flip(&seg.flips_before));
            }
            events.push(PulseEvent::Delay {
                t_s: seg.fraction * self.wall_time_s,
                frame: vec![0.0; n],
            });
        }
        if !self.final_flips.is_empty() {
            events.push(flip(&self.final_flips));
        }
        PulseProgram::new(events)
    }

    /// Toggled-average coefficient of `σ^z_i σ^z_j` per unit wall time (rad/s), for all `i < j`.
    pub fn effective_couplings(&self) -> Vec<((usize, usize), f64)> {
        let n = self.n_spins();
        let mut out = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let avg: f64 = self
                    .segments
                    .iter()
                    .map(|s| s.fraction * f64::from(s.signs[i] * s.signs[j]))
                    .sum();
                out.push(((i, j), PI * self.base_couplings.coupling(i, j) / 2.0 * avg));
            }
        }
        out
    }
}

/// Closed-form segment timings, as fractions of τ, for the three-spin
/// (`τ₁ = J₁₂/[2(J₁₂−J₂₃)]`, `τ₂ = −J₂₃/[2(J₁₂−J₂₃)]`) and four-spin
/// (`τ₁ = J₂₃(J₁₂+J₃₄)/[4J₁₂(J₂₃−J₃₄)]`, `τ₂ = J₂₃(J₁₂−J₃₄)/[4J₁₂(J₂₃−J₃₄)]`,
/// `τ₃ = −J₃₄/[4(J₂₃−J₃₄)]`) sequences. `None` for two spins.
pub fn closed_form_timings(m: &MoleculeSpec) -> Result<Option<Vec<f64>>> {
    let j = |a: usize, b: usize| m.coupling(a, b);
    match m.n_spins() {
        2 => Ok(None),
        3 => {
            let (j12, j23) = (j(0, 1), j(1, 2));
            let den = 2.0 * (j12 - j23);
            if den == 0.0 {
                return Err(Error::DegenerateCouplings(format!(
                    "J12 = J23 = {j12} Hz makes J12 - J23 vanish"
                )));
            }
            Ok(Some(vec![j12 / den, -j23 / den]))
        }
        4 => {
            let (j12, j23, j34) = (j(0, 1), j(1, 2), j(2, 3));
            if j12 == 0.0 {
                return Err(Error::DegenerateCouplings("J12 = 0".into()));
            }
            if j23 == j34 {
                return Err(Error::DegenerateCouplings(format!(
                    "J23 = J34 = {j23} Hz makes J23 - J34 vanish"
                )));
            }
            let den = 4.0 * j12 * (j23 - j34);
            Ok(Some(vec![
                j23 * (j12 + j34) / den,
                j23 * (j12 - j34) / den,
                -j34 / (4.0 * (j23 - j34)),
            ]))
        }
        n => Err(Error::InvalidInput(format!(
            "refocusing compiler supports 2 to 4 spins, got {n}"
        ))),
    }
}

/// Sign patterns with spin 0 fixed to +1 (a global flip changes no coupling).
fn sign_patterns(n: usize) -> Vec<Vec<i8>> {
    (0..1usize << (n - 1))
        .map(|bits| {
            (0..n)
                .map(|i| {
                    if i > 0 && (bits >> (i - 1)) & 1 == 1 {
                        -1
                    } else {
                        1
                    }
                })
                .collect()
        })
        .collect()
}

/// Maximizes the isotropic rate `c` subject to
/// `Σ_p w_p s^p_i s^p_j (π J_ij/2) = c` on nearest-neighbour pairs,
/// `= 0` on other pairs with nonzero natural coupling, `Σ w_p = 1`, `w ≥ 0`,
/// by enumerating basic solutions. Returns `(weights, c)`.
fn solve_sign_patterns(m: &MoleculeSpec, patterns: &[Vec<i8>]) -> Option<(Vec<f64>, f64)> {
    let n = m.n_spins();
    let scale = (0..n)
        .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
        .map(|(i, j)| m.coupling(i, j).abs())
        .fold(0.0, f64::max);
    let mut rows: Vec<(Vec<f64>, f64, f64)> = Vec::new(); // (pattern coefficients, c coefficient, rhs)
    for i in 0..n {
        for j in (i + 1)..n {
            let jij = m.coupling(i, j) / scale;
            let adjacent = j == i + 1;
            if !adjacent && jij == 0.0 {
                continue;
            }
            let coeffs = patterns
                .iter()
                .map(|p| jij * f64::from(p[i] * p[j]))
                .collect();
            rows.push((coeffs, if adjacent { -1.0 } else { 0.0 }, 0.0));
        }
    }
    rows.push((vec![1.0; patterns.len()], 0.0, 1.0));

    let mut best: Option<(Vec<f64>, f64, usize)> = None;
    for subset in 1usize..(1 << patterns.len()) {
        let cols: Vec<usize> = (0..patterns.len())
            .filter(|k| (subset >> k) & 1 == 1)
            .collect();
        let unknowns = cols.len() + 1;
        if unknowns > rows.len() {
            continue;
        }
        let a = DMatrix::from_fn(rows.len(), unknowns, |r, c| {
            if c < cols.len() {
                rows[r].0[cols[c]]
            } else {
                rows[r].1
            }
        });
        let b = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.2));
        let svd = a.clone().svd(true, true);
        let smax = svd.singular_values.max();
        if svd.singular_values.min() <= 1e-10 * smax {
            continue;
        }
        let x = match svd.solve(&b, 0.0) {
            Ok(x) => x,
            Err(_) => continue,
        };
        if (&a * &x - &b).norm() > 1e-10 || x.iter().take(cols.len()).any(|&w| w < -1e-12) {
            continue;
        }
        let c = x[cols.len()];
        let better = match &best {
            None => true,
            Some((_, bc, bn)) => {
                c.abs() > bc.abs() * (1.0 + 1e-12)
                    || (c.abs() >= bc.abs() * (1.0 - 1e-12) && cols.len() < *bn)
            }
        };
        if better {
            let mut w = vec![0.0; patterns.len()];
            for (k, &col) in cols.iter().enumerate() {
                w[col] = x[k].max(0.0);
            }
            best = Some((w, c, cols.len()));
        }
    }
    best.map(|(w, c, _)| (w, c * scale * PI / 2.0))
}

/// Orders patterns so that consecutive frames differ by few flips, starting
/// from the one closest to the unflipped frame.
fn order_patterns(mut used: Vec<(Vec<i8>, f64)>) -> Vec<(Vec<i8>, f64)> {
    let distance = |a: &[i8], b: &[i8]| a.iter().zip(b).filter(|(x, y)| x != y).count();
    let mut current = vec![1i8; used.first().map_or(0, |u| u.0.len())];
    let mut ordered = Vec::with_capacity(used.len());
    while !used.is_empty() {
        let (idx, _) = used
            .iter()
            .enumerate()
            .min_by_key(|(_, (p, _))| distance(p, &current))
            .expect("non-empty");
        let next = used.remove(idx);
        current = next.0.clone();
        ordered.push(next);
    }
    ordered
}

/// Compiles an isotropic nearest-neighbour interaction `−target_j Σ σ^z_j σ^z_{j+1}`
/// acting for simulated time `tau` from the molecule's natural couplings.
///
/// Non-adjacent pairs with nonzero natural coupling are refocused to zero;
/// pairs whose natural coupling is exactly zero are left unconstrained.
/// The sign pattern maximizing the achievable rate is chosen, so the wall
/// time `|target_j|·tau / rate` is as short as the couplings allow.
pub fn compile_zz(m: &MoleculeSpec, target_j: f64, tau: f64) -> Result<CompiledZZ> {
    m.validate()?;
    let n = m.n_spins();
    if !(2..=4).contains(&n) {
        return Err(Error::InvalidInput(format!(
            "refocusing compiler supports 2 to 4 spins, got {n}"
        )));
    }
    if !(tau > 0.0 && tau.is_finite()) || !target_j.is_finite() {
        return Err(Error::InvalidInput(format!(
            "need finite target and tau > 0 (target {target_j}, tau {tau})"
        )));
    }
    if let Some(k) = (0..n - 1).find(|&k| m.coupling(k, k + 1) == 0.0) {
        return Err(Error::DegenerateCouplings(format!(
            "nearest-neighbour coupling J{}{} is zero",
            k + 1,
            k + 2
        )));
    }
    let closed_form = closed_form_timings(m)?;
    let mut diagnostics = Vec::new();
    if let Some(t) = &closed_form {
        if let Some((k, v)) = t.iter().enumerate().find(|(_, v)| **v < 0.0) {
            diagnostics.push(format!(
                "closed-form timing tau{} = {v:.6} tau is negative; using an alternative sign pattern",
                k + 1
            ));
        }
    }

    let patterns = sign_patterns(n);
    let (weights, mut rate) = solve_sign_patterns(m, &patterns)
        .filter(|(_, c)| c.abs() > 0.0)
        .ok_or_else(|| {
            Error::UnphysicalDurations("no sign pattern yields a nonzero isotropic coupling".into())
        })?;

    // the achieved coefficient must carry the sign of −target_j
    let flip_parity = target_j != 0.0 && rate.signum() != (-target_j).signum();
    if flip_parity {
        rate = -rate;
    }
    let used: Vec<(Vec<i8>, f64)> = patterns
        .into_iter()
        .zip(weights)
        .filter(|(_, w)| *w > 1e-14)
        .map(|(p, w)| {
            let p = if flip_parity {
                p.iter()
                    .enumerate()
                    .map(|(i, s)| if i % 2 == 1 { -s } else { *s })
                    .collect()
            } else {
                p
            };
            (p, w)
        })
        .collect();
    let total: f64 = used.iter().map(|u| u.1).sum();

    let mut frame = vec![1i8; n];
    let mut segments = Vec::new();
    for (signs, w) in order_patterns(used) {
        let flips_before = (0..n).filter(|&i| signs[i] != frame[i]).collect();
        frame = signs.clone();
        segments.push(ZzSegment {
            flips_before,
            fraction: w / total,
            signs,
        });
    }
    let final_flips = (0..n).filter(|&i| frame[i] != 1).collect();
    let wall_time_s = target_j.abs() * tau / rate.abs();

    Ok(CompiledZZ {
        segments,
        final_flips,
        wall_time_s,
        rate,
        target_j,
        tau,
        base_couplings: m.clone(),
        closed_form,
        diagnostics,
    })
}

/// Propagator-level check of a compiled or hand-edited sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceReport {
    pub effective_propagator: ComplexMatrix,
    pub target_propagator: ComplexMatrix,
    /// `|Tr(U_eff† U_target)| / dim`.
    pub fidelity: f64,
    /// Local error order `log₂(err(τ)/err(τ/2))` where a step size applies.
    pub trotter_order_estimate: Option<f64>,
}

/// `e^{−iτ·(−J Σ σ^z_j σ^z_{j+1})}`.
pub fn target_zz_propagator(n: usize, target_j: f64, tau: f64) -> ComplexMatrix {
    let dim = 1 << n;
    let phases: Vec<C64> = (0..dim)
        .map(|b| {
            let e: f64 = (0..n - 1)
                .map(|j| -target_j * z_sign(b, j, n) * z_sign(b, j + 1, n))
                .sum();
            C64::from_polar(1.0, -e * tau)
        })
        .collect();
    ComplexMatrix::new(DMatrix::from_diagonal(&DVector::from_vec(phases))).expect("finite phases")
}

/// Simulates `program` under the molecule's natural zz couplings (on
/// resonance) and compares with the target isotropic zz propagator.
pub fn verify_program(
    program: &PulseProgram,
    m: &MoleculeSpec,
    target_j: f64,
    tau: f64,
) -> Result<SequenceReport> {
    let n = m.n_spins();
    let drift = ComplexMatrix::from_real_diagonal(&nmr_zz_diagonal(m));
    let effective_propagator = ProgramSimulator::new(n, drift)?.propagator(program)?;
    let target_propagator = target_zz_propagator(n, target_j, tau);
    let fidelity = gate_fidelity(&effective_propagator, &target_propagator);
    Ok(SequenceReport {
        effective_propagator,
        target_propagator,
        fidelity,
        trotter_order_estimate: None,
    })
}

pub fn verify_sequence(c: &CompiledZZ, m: &MoleculeSpec) -> Result<SequenceReport> {
    verify_program(&c.to_program(), m, c.target_j, c.tau)
}

/// Compares one Trotter step with the exact propagator at `theta` and
/// estimates the local error order from a halved step.
pub fn verify_trotter_step(spec: ChainSpec, theta: f64, tau: f64) -> Result<SequenceReport> {
    let chain = HeisenbergChain::new(spec)?;
    let p = FieldPoint::meridian(theta, 1.0);
    let error = |t: f64| -> Result<(ComplexMatrix, ComplexMatrix, f64)> {
        let step = trotter_step(spec, p, t)?;
        let exact = expm_i(&chain.hamiltonian(p), t)?;
        let err = (&step - &exact).frobenius_norm();
        Ok((step, exact, err))
    };
    let (step, exact, e1) = error(tau)?;
    let (_, _, e2) = error(tau / 2.0)?;
    let trotter_order_estimate = (e1 > 1e-13 && e2 > 1e-13).then(|| (e1 / e2).log2());
    Ok(SequenceReport {
        fidelity: gate_fidelity(&step, &exact),
        effective_propagator: step,
        target_propagator: exact,
        trotter_order_estimate,
    })
}

/// Sum of `σ^z_i σ^z_j` over the listed pairs, for tests and diagnostics.
pub fn zz_operator(pairs: &[(usize, usize)], n: usize) -> ComplexMatrix {
    let z = ComplexMatrix::pauli(Axis::Z);
    let mut out = ComplexMatrix::zeros(1 << n);
    for &(i, j) in pairs {
        out = &out + &(&site_operator(&z, i, n) * &site_operator(&z, j, n));
    }
    out
}
