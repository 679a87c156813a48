//! Hamiltonians of the field-driven Heisenberg chain and of the NMR register
//! that simulates it.
//!
//! The chain Hamiltonian is
//! `H = −Σ_j h·σ_j − J Σ_j σ_j·σ_{j+1}` (open boundary), with the field on the
//! sphere `h = |h|(sinθ cosφ, sinθ sinφ, cosθ)`. Units: ħ = 1, energies in
//! units of the field magnitude.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qcore::{collective_pauli, site_operator, Axis, ComplexMatrix, StateVector};

/// Default cap on the number of spins (Hilbert dimension 2^10).
pub const DEFAULT_MAX_SPINS: usize = 10;

/// Point on the field sphere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldPoint {
    pub theta: f64,
    pub phi: f64,
    pub magnitude: f64,
}

impl FieldPoint {
    pub fn new(theta: f64, phi: f64, magnitude: f64) -> Result<Self> {
        if !(0.0..=PI).contains(&theta) {
            return Err(Error::OutOfRange {
                value: theta,
                lo: 0.0,
                hi: PI,
            });
        }
        if !(0.0..2.0 * PI).contains(&phi) {
            return Err(Error::OutOfRange {
                value: phi,
                lo: 0.0,
                hi: 2.0 * PI,
            });
        }
        if !(magnitude > 0.0 && magnitude.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "field magnitude must be positive, got {magnitude}"
            )));
        }
        Ok(Self {
            theta,
            phi,
            magnitude,
        })
    }

    /// Unit-magnitude point; panics outside the valid ranges.
    pub fn unit(theta: f64, phi: f64) -> Self {
        Self::new(theta, phi, 1.0).expect("valid field point")
    }

    /// Point on the `φ = 0` meridian.
    pub fn meridian(theta: f64, magnitude: f64) -> Self {
        Self {
            theta,
            phi: 0.0,
            magnitude,
        }
    }

    pub fn north_pole(magnitude: f64) -> Self {
        Self::meridian(0.0, magnitude)
    }

    pub fn equator(magnitude: f64) -> Self {
        Self::meridian(PI / 2.0, magnitude)
    }
}

/// Field vector `|h|(sinθ cosφ, sinθ sinφ, cosθ)`.
pub fn field_cartesian(p: FieldPoint) -> [f64; 3] {
    let (st, ct) = p.theta.sin_cos();
    let (sp, cp) = p.phi.sin_cos();
    [
        p.magnitude * st * cp,
        p.magnitude * st * sp,
        p.magnitude * ct,
    ]
}

/// Open Heisenberg chain: spin count and isotropic coupling `J`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChainSpec {
    pub n_spins: usize,
    pub coupling_j: f64,
}

impl ChainSpec {
    pub fn new(n_spins: usize, coupling_j: f64) -> Result<Self> {
        if n_spins == 0 {
            return Err(Error::InvalidInput("chain needs at least one spin".into()));
        }
        if !coupling_j.is_finite() {
            return Err(Error::NonFinite);
        }
        Ok(Self {
            n_spins,
            coupling_j,
        })
    }

    pub fn with_coupling(self, coupling_j: f64) -> Self {
        Self { coupling_j, ..self }
    }

    pub fn dim(&self) -> usize {
        1 << self.n_spins
    }
}

/// Parameter with respect to which the Hamiltonian is differentiated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Param {
    Theta,
    Phi,
}

/// Precomputed operators of one chain: collective Paulis and the bond sum.
///
/// Building a Hamiltonian from these is a handful of matrix additions, which
/// matters inside time-stepping loops.
#[derive(Debug, Clone)]
pub struct HeisenbergChain {
    spec: ChainSpec,
    collective: [ComplexMatrix; 3],
    bonds: [ComplexMatrix; 3],
}

impl HeisenbergChain {
    pub fn new(spec: ChainSpec) -> Result<Self> {
        Self::with_cap(spec, DEFAULT_MAX_SPINS)
    }

    pub fn with_cap(spec: ChainSpec, max_spins: usize) -> Result<Self> {
        let n = spec.n_spins;
        if n == 0 {
            return Err(Error::InvalidInput("chain needs at least one spin".into()));
        }
        if n > max_spins {
            return Err(Error::DimensionCap {
                n_spins: n,
                cap: max_spins,
            });
        }
        let collective = Axis::ALL.map(|a| collective_pauli(a, n));
        let bonds = Axis::ALL.map(|a| bond_sum(a, n));
        Ok(Self {
            spec,
            collective,
            bonds,
        })
    }

    pub fn spec(&self) -> ChainSpec {
        self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    /// `Σ_j σ^axis_j`.
    pub fn collective(&self, axis: Axis) -> &ComplexMatrix {
        &self.collective[axis as usize]
    }

    /// `Σ_j σ^axis_j σ^axis_{j+1}`.
    pub fn bond(&self, axis: Axis) -> &ComplexMatrix {
        &self.bonds[axis as usize]
    }

    /// `−Σ_j v·σ_j` for an arbitrary 3-vector.
    pub fn field_term(&self, v: [f64; 3]) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(self.dim());
        for (k, c) in v.iter().enumerate() {
            if *c != 0.0 {
                out = &out - &self.collective[k].scale(*c);
            }
        }
        out
    }

    /// `−J Σ_j σ_j·σ_{j+1}`.
    pub fn interaction(&self) -> ComplexMatrix {
        let j = self.spec.coupling_j;
        let mut out = ComplexMatrix::zeros(self.dim());
        if j != 0.0 {
            for b in &self.bonds {
                out = &out - &b.scale(j);
            }
        }
        out
    }

    pub fn hamiltonian(&self, p: FieldPoint) -> ComplexMatrix {
        &self.field_term(field_cartesian(p)) + &self.interaction()
    }

    /// Analytic `∂H/∂θ` or `∂H/∂φ`; only the field term depends on the angles.
    pub fn derivative(&self, p: FieldPoint, which: Param) -> ComplexMatrix {
        let (st, ct) = p.theta.sin_cos();
        let (sp, cp) = p.phi.sin_cos();
        let m = p.magnitude;
        let dh = match which {
            Param::Theta => [m * ct * cp, m * ct * sp, -m * st],
            Param::Phi => [-m * st * sp, m * st * cp, 0.0],
        };
        self.field_term(dh)
    }

    /// Derivatives along the unit tangent vectors `ê_θ` and `ê_φ` (scaled by
    /// `|h|`), well defined at the poles.
    pub fn frame_derivatives(&self, p: FieldPoint) -> (ComplexMatrix, ComplexMatrix) {
        let (st, ct) = p.theta.sin_cos();
        let (sp, cp) = p.phi.sin_cos();
        let m = p.magnitude;
        let e_theta = [m * ct * cp, m * ct * sp, -m * st];
        let e_phi = [-m * sp, m * cp, 0.0];
        (self.field_term(e_theta), self.field_term(e_phi))
    }
}

fn bond_sum(axis: Axis, n: usize) -> ComplexMatrix {
    let p = ComplexMatrix::pauli(axis);
    let mut out = ComplexMatrix::zeros(1 << n);
    for j in 0..n.saturating_sub(1) {
        let term = &site_operator(&p, j, n) * &site_operator(&p, j + 1, n);
        out = &out + &term;
    }
    out
}

/// Chain Hamiltonian at a field point.
pub fn build_heisenberg(spec: ChainSpec, p: FieldPoint) -> Result<ComplexMatrix> {
    Ok(HeisenbergChain::new(spec)?.hamiltonian(p))
}

/// `∂H/∂θ` or `∂H/∂φ` at a field point.
pub fn param_derivative(spec: ChainSpec, p: FieldPoint, which: Param) -> Result<ComplexMatrix> {
    Ok(HeisenbergChain::new(spec)?.derivative(p, which))
}

/// Number of qubits for a state of dimension `2^N`.
pub fn qubit_count(dim: usize) -> Result<usize> {
    if dim == 0 || !dim.is_power_of_two() {
        return Err(Error::InvalidInput(format!(
            "dimension {dim} is not a power of two"
        )));
    }
    Ok(dim.trailing_zeros() as usize)
}

/// `Σ_j ⟨ψ|σ^axis_j|ψ⟩`.
pub fn total_magnetization(psi: &StateVector, axis: Axis) -> Result<f64> {
    let n = qubit_count(psi.dim())?;
    Ok(psi.expectation(&collective_pauli(axis, n)))
}

/// NMR register: per-spin chemical shifts and a symmetric scalar-coupling
/// table, in the JSON layout `labels` / `shifts_hz` / `couplings_hz` /
/// optional `t2_s` (accepted, unused).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoleculeSpec {
    pub labels: Vec<String>,
    pub shifts_hz: Vec<f64>,
    pub couplings_hz: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t2_s: Option<Vec<f64>>,
}

impl MoleculeSpec {
    pub fn new(
        labels: Vec<String>,
        shifts_hz: Vec<f64>,
        couplings_hz: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let m = Self {
            labels,
            shifts_hz,
            couplings_hz,
            t2_s: None,
        };
        m.validate()?;
        Ok(m)
    }

    /// Unlabelled register with the given nearest-neighbour couplings and all
    /// other couplings zero.
    pub fn chain(shifts_hz: Vec<f64>, nearest_hz: &[f64]) -> Result<Self> {
        let n = shifts_hz.len();
        if nearest_hz.len() + 1 != n {
            return Err(Error::LengthMismatch {
                observed: nearest_hz.len(),
                theory: n.saturating_sub(1),
            });
        }
        let mut couplings = vec![vec![0.0; n]; n];
        for (i, &j) in nearest_hz.iter().enumerate() {
            couplings[i][i + 1] = j;
            couplings[i + 1][i] = j;
        }
        let labels = (1..=n).map(|k| format!("S{k}")).collect();
        Self::new(labels, shifts_hz, couplings)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn n_spins(&self) -> usize {
        self.shifts_hz.len()
    }

    pub fn coupling(&self, i: usize, j: usize) -> f64 {
        self.couplings_hz[i][j]
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.shifts_hz.len();
        if n < 2 {
            return Err(Error::InvalidInput(
                "molecule needs at least two spins".into(),
            ));
        }
        if self.labels.len() != n {
            return Err(Error::LengthMismatch {
                observed: self.labels.len(),
                theory: n,
            });
        }
        if self.couplings_hz.len() != n || self.couplings_hz.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidInput(format!(
                "coupling table must be {n}x{n}"
            )));
        }
        if self
            .shifts_hz
            .iter()
            .chain(self.couplings_hz.iter().flatten())
            .any(|x| !x.is_finite())
        {
            return Err(Error::NonFinite);
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let (a, b) = (self.couplings_hz[i][j], self.couplings_hz[j][i]);
                if (a - b).abs() > 1e-12 * a.abs().max(b.abs()).max(1.0) {
                    return Err(Error::InvalidInput(format!(
                        "coupling table not symmetric at ({i},{j}): {a} vs {b}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// `±1` eigenvalue of `σ^z_site` on computational basis state `index`.
pub(crate) fn z_sign(index: usize, site: usize, n: usize) -> f64 {
    if (index >> (n - 1 - site)) & 1 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Diagonal of the zz part `Σ_{i<j} (π J_ij / 2) σ^z_i σ^z_j`.
pub(crate) fn nmr_zz_diagonal(m: &MoleculeSpec) -> Vec<f64> {
    let n = m.n_spins();
    (0..1usize << n)
        .map(|b| {
            let mut e = 0.0;
            for i in 0..n {
                for j in (i + 1)..n {
                    e += PI * m.coupling(i, j) / 2.0 * z_sign(b, i, n) * z_sign(b, j, n);
                }
            }
            e
        })
        .collect()
}

/// `Σ_i (ω_i/2) σ^z_i + Σ_{i<j} (π J_ij/2) σ^z_i σ^z_j`; diagonal in the computational basis.
pub fn build_nmr_hamiltonian(m: &MoleculeSpec) -> Result<ComplexMatrix> {
    m.validate()?;
    let n = m.n_spins();
    let zz = nmr_zz_diagonal(m);
    let diag: Vec<f64> = zz
        .iter()
        .enumerate()
        .map(|(b, e)| {
            e + (0..n)
                .map(|i| m.shifts_hz[i] / 2.0 * z_sign(b, i, n))
                .sum::<f64>()
        })
        .collect();
    Ok(ComplexMatrix::from_real_diagonal(&diag))
}
