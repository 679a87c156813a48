//! Dynamical curvature measurement.
//!
//! The chain starts in its ground state with the field at the north pole and
//! the field is swept down the `φ = 0` meridian with `θ(t) = v²t²/2π` until it
//! reaches the equator at `t = π/v`. The generalized force
//! `M_φ = −⟨∂_φH⟩` read there responds linearly to the final angular velocity
//! `v`, and the slope is the Berry curvature `F_φθ`.
//!
//! Time is discretized into equal slices; each slice applies the exact
//! propagator of the Hamiltonian frozen at the slice midpoint.

use std::f64::consts::{FRAC_PI_2, PI};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ChainSpec, FieldPoint, HeisenbergChain, Param};
use crate::qcore::{eigh, expm_i, StateVector};
use crate::spectral::DEGENERACY_TOL;

pub const DEFAULT_VELOCITY: f64 = 0.1;
pub const DEFAULT_STEPS: usize = 300;
/// Velocity above which linear response is flagged as unreliable.
pub const LINEAR_ZONE_CAP: f64 = 1.53;
/// Largest accepted change of `m_phi` when the step count is doubled.
pub const STEP_DRIFT_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuenchProtocol {
    pub v_theta: f64,
    pub steps: usize,
    #[serde(default = "unit_magnitude")]
    pub magnitude: f64,
}

fn unit_magnitude() -> f64 {
    1.0
}

impl Default for QuenchProtocol {
    fn default() -> Self {
        Self {
            v_theta: DEFAULT_VELOCITY,
            steps: DEFAULT_STEPS,
            magnitude: 1.0,
        }
    }
}

impl QuenchProtocol {
    pub fn new(v_theta: f64, steps: usize) -> Result<Self> {
        if !(v_theta > 0.0 && v_theta.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "quench velocity must be positive, got {v_theta}"
            )));
        }
        if steps == 0 {
            return Err(Error::InvalidInput("quench needs at least one step".into()));
        }
        Ok(Self {
            v_theta,
            steps,
            magnitude: 1.0,
        })
    }

    pub fn with_steps(self, steps: usize) -> Self {
        Self { steps, ..self }
    }

    pub fn total_time(&self) -> f64 {
        PI / self.v_theta
    }

    pub fn step_duration(&self) -> f64 {
        self.total_time() / self.steps as f64
    }

    /// Midpoint time of slice `k`.
    pub fn slice_midpoint(&self, k: usize) -> f64 {
        (k as f64 + 0.5) * self.step_duration()
    }

    /// `θ(t) = v²t²/2π` on `[0, π/v]`.
    pub fn theta_of_t(&self, t: f64) -> Result<f64> {
        let end = self.total_time();
        if !(t >= 0.0 && t <= end * (1.0 + 1e-12)) {
            return Err(Error::OutOfRange {
                value: t,
                lo: 0.0,
                hi: end,
            });
        }
        if t >= end {
            return Ok(FRAC_PI_2);
        }
        Ok(self.v_theta * self.v_theta * t * t / (2.0 * PI))
    }

    /// Midpoint polar angles of all slices.
    pub fn slice_angles(&self) -> Vec<f64> {
        (0..self.steps)
            .map(|k| {
                self.theta_of_t(self.slice_midpoint(k))
                    .expect("midpoint inside protocol")
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct QuenchResult {
    pub final_state: StateVector,
    /// Generalized force `−⟨∂_φH⟩` at the equator.
    pub m_phi: f64,
    /// `m_phi / v_theta`.
    pub f_extracted: f64,
    pub v_theta: f64,
    pub steps: usize,
    /// `|⟨ground(θ=π/2)|final⟩|²`.
    pub adiabatic_overlap: f64,
    /// `|m_phi(2n) − m_phi(n)|` when the convergence guard ran.
    pub step_drift: Option<f64>,
}

/// `θ(t)` for a protocol.
pub fn theta_of_t(proto: &QuenchProtocol, t: f64) -> Result<f64> {
    proto.theta_of_t(t)
}

/// `M_φ = −⟨ψ|∂_φH|ψ⟩` at field point `p`.
pub fn generalized_force(state: &StateVector, spec: ChainSpec, p: FieldPoint) -> Result<f64> {
    let chain = HeisenbergChain::new(spec)?;
    force_with(&chain, state, p)
}

fn force_with(chain: &HeisenbergChain, state: &StateVector, p: FieldPoint) -> Result<f64> {
    if state.dim() != chain.dim() {
        return Err(Error::DimensionMismatch {
            expected: chain.dim(),
            got: state.dim(),
        });
    }
    Ok(-state.expectation(&chain.derivative(p, Param::Phi)))
}

/// Nondegenerate ground state at a field point.
pub(crate) fn ground_state_at(chain: &HeisenbergChain, p: FieldPoint) -> Result<StateVector> {
    let eig = eigh(&chain.hamiltonian(p))?;
    let gap = eig.gap();
    if gap <= DEGENERACY_TOL * p.magnitude {
        return Err(Error::DegenerateGroundState { gap });
    }
    Ok(eig.ground_state())
}

/// Packages a final state into a [`QuenchResult`].
pub(crate) fn finish(
    chain: &HeisenbergChain,
    proto: &QuenchProtocol,
    final_state: StateVector,
) -> Result<QuenchResult> {
    let equator = FieldPoint::equator(proto.magnitude);
    let m_phi = force_with(chain, &final_state, equator)?;
    let adiabatic_overlap = ground_state_at(chain, equator)?.overlap(&final_state);
    Ok(QuenchResult {
        final_state,
        m_phi,
        f_extracted: m_phi / proto.v_theta,
        v_theta: proto.v_theta,
        steps: proto.steps,
        adiabatic_overlap,
        step_drift: None,
    })
}

/// Runs the sweep once with `proto.steps` slices, no convergence guard.
pub fn evolve_quench_unchecked(spec: ChainSpec, proto: &QuenchProtocol) -> Result<QuenchResult> {
    let chain = HeisenbergChain::new(spec)?;
    let mut psi = ground_state_at(&chain, FieldPoint::north_pole(proto.magnitude))?;
    let dt = proto.step_duration();
    for theta in proto.slice_angles() {
        let u = expm_i(
            &chain.hamiltonian(FieldPoint::meridian(theta, proto.magnitude)),
            dt,
        )?;
        psi = u.apply(&psi);
    }
    finish(&chain, proto, psi)
}

/// Runs the sweep with `n` and `2n` slices and rejects the result when the
/// two disagree on `m_phi` by more than [`STEP_DRIFT_TOL`]. The returned
/// values are those of the `n`-slice run.
pub fn evolve_quench(spec: ChainSpec, proto: &QuenchProtocol) -> Result<QuenchResult> {
    let coarse = evolve_quench_unchecked(spec, proto)?;
    let fine = evolve_quench_unchecked(spec, &proto.with_steps(2 * proto.steps))?;
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

/// Linear fit `M = const + F·v` over quench runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvatureFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square fit residual.
    pub residual: f64,
    /// Some velocity exceeded the linear-zone cap.
    pub out_of_linear_zone: bool,
}

/// Curvature from `(v, M)` pairs.
///
/// One point gives `M/v` with zero offset: the initial ground state at the
/// pole is real, so the force vanishes without motion. Two or more points are
/// fitted by least squares with a free offset.
pub fn extract_curvature(points: &[(f64, f64)]) -> Result<CurvatureFit> {
    extract_curvature_capped(points, LINEAR_ZONE_CAP)
}

pub fn extract_curvature_capped(points: &[(f64, f64)], cap: f64) -> Result<CurvatureFit> {
    if points.is_empty() {
        return Err(Error::InvalidInput("no quench points to fit".into()));
    }
    if points.iter().any(|&(v, m)| !(v > 0.0) || !m.is_finite()) {
        return Err(Error::InvalidInput(
            "velocities must be positive and forces finite".into(),
        ));
    }
    let out_of_linear_zone = points.iter().any(|&(v, _)| v > cap);
    if out_of_linear_zone {
        log::warn!("velocity above linear-zone cap {cap}; curvature estimate may be biased");
    }
    if let [(v, m)] = points {
        return Ok(CurvatureFit {
            slope: m / v,
            intercept: 0.0,
            residual: 0.0,
            out_of_linear_zone,
        });
    }
    let n = points.len() as f64;
    let mean_v = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_m = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_v).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidInput(
            "fit needs at least two distinct velocities".into(),
        ));
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mean_v) * (p.1 - mean_m)).sum();
    let slope = sxy / sxx;
    let intercept = mean_m - slope * mean_v;
    let residual = (points
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(CurvatureFit {
        slope,
        intercept,
        residual,
        out_of_linear_zone,
    })
}

/// `(v, M_φ/v)` for each velocity, each run with `steps` slices.
pub fn linear_zone_scan(spec: ChainSpec, v_list: &[f64], steps: usize) -> Result<Vec<(f64, f64)>> {
    if v_list.is_empty() {
        return Err(Error::InvalidInput("empty velocity list".into()));
    }
    if v_list.iter().any(|&v| !(v > 0.0)) || v_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput(
            "velocities must be positive and ascending".into(),
        ));
    }
    v_list
        .par_iter()
        .map(|&v| {
            let r = evolve_quench_unchecked(spec, &QuenchProtocol::new(v, steps)?)?;
            Ok((v, r.m_phi / v))
        })
        .collect()
}
