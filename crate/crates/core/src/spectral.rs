//! Static ground-state topology: spectra, level crossings, sum-over-states
//! Berry curvature and three routes to the first Chern number.
//!
//! Curvature is reported as the `(φ, θ)` component, `F_φθ`. With that
//! orientation a single free spin has `F_φθ = ½ sinθ` and Chern number `+1`.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ChainSpec, FieldPoint, HeisenbergChain, Param};
use crate::qcore::{eigh, Axis, ComplexMatrix, EigenSystem, StateVector};

/// Ground-state degeneracy threshold, relative to `|h|`.
pub const DEGENERACY_TOL: f64 = 1e-9;

/// Berry curvature at one field point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvatureSample {
    pub point: FieldPoint,
    pub f_phitheta: f64,
    pub gap: f64,
}

/// Chern number computed three ways.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChernResult {
    /// Surface integral of the curvature over the sphere, divided by 2π.
    pub integral_value: f64,
    /// Plaquette-phase winding count.
    pub lattice_integer: i64,
    /// `2·F_φθ` at the equator.
    pub reduced_value: f64,
}

/// Angular grid on the field sphere: `n_theta` latitude nodes (poles included)
/// and `n_phi` longitude nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SphereGrid {
    pub n_theta: usize,
    pub n_phi: usize,
}

impl SphereGrid {
    pub fn new(n_theta: usize, n_phi: usize) -> Result<Self> {
        if n_theta < 2 || n_phi < 2 {
            return Err(Error::InvalidInput(format!(
                "sphere grid {n_theta}x{n_phi} too small"
            )));
        }
        Ok(Self { n_theta, n_phi })
    }

    pub fn refined(self) -> Self {
        Self {
            n_theta: 2 * self.n_theta,
            n_phi: 2 * self.n_phi,
        }
    }
}

fn degeneracy_check(eig: &EigenSystem, magnitude: f64) -> Result<f64> {
    let gap = eig.gap();
    if gap <= DEGENERACY_TOL * magnitude {
        return Err(Error::DegenerateGroundState { gap });
    }
    Ok(gap)
}

/// Sum-over-states curvature of the ground state,
/// `i Σ_{n≠0} [⟨0|∂_μH|n⟩⟨n|∂_νH|0⟩ − (μ↔ν)] / (ε_n − ε_0)²`.
///
/// The caller guarantees a nondegenerate ground state.
pub fn sum_over_states(eig: &EigenSystem, d_mu: &ComplexMatrix, d_nu: &ComplexMatrix) -> f64 {
    let ground = eig.ground_state();
    let mu_psi = d_mu.apply(&ground);
    let nu_psi = d_nu.apply(&ground);
    let e0 = eig.values[0];
    (1..eig.dim())
        .map(|n| {
            let excited = eig.vector(n);
            // ⟨0|∂_μH|n⟩ = conj(⟨n|∂_μH|0⟩)
            let a = excited.inner(&mu_psi).conj();
            let b = excited.inner(&nu_psi);
            let de = eig.values[n] - e0;
            -2.0 * (a * b).im / (de * de)
        })
        .sum()
}

/// `ε₁ − ε₀` at a field point.
pub fn ground_gap(spec: ChainSpec, p: FieldPoint) -> Result<f64> {
    let chain = HeisenbergChain::new(spec)?;
    Ok(eigh(&chain.hamiltonian(p))?.gap())
}

/// Full ascending spectrum at a field point.
pub fn energy_levels(spec: ChainSpec, p: FieldPoint) -> Result<Vec<f64>> {
    let chain = HeisenbergChain::new(spec)?;
    Ok(eigh(&chain.hamiltonian(p))?.values)
}

/// Ground-state `F_φθ` from the sum-over-states formula with coordinate
/// derivatives `∂_φH`, `∂_θH`.
pub fn curvature_spectral(spec: ChainSpec, p: FieldPoint) -> Result<CurvatureSample> {
    let chain = HeisenbergChain::new(spec)?;
    curvature_with(&chain, p)
}

pub(crate) fn curvature_with(chain: &HeisenbergChain, p: FieldPoint) -> Result<CurvatureSample> {
    let eig = eigh(&chain.hamiltonian(p))?;
    let gap = degeneracy_check(&eig, p.magnitude)?;
    let d_phi = chain.derivative(p, Param::Phi);
    let d_theta = chain.derivative(p, Param::Theta);
    Ok(CurvatureSample {
        point: p,
        f_phitheta: sum_over_states(&eig, &d_phi, &d_theta),
        gap,
    })
}

/// Curvature per unit solid angle, `F_φθ / sinθ`, evaluated with unit-tangent
/// derivatives so it stays finite at the poles.
pub fn curvature_area_density(chain: &HeisenbergChain, p: FieldPoint) -> Result<f64> {
    let eig = eigh(&chain.hamiltonian(p))?;
    degeneracy_check(&eig, p.magnitude)?;
    let (d_theta, d_phi) = chain.frame_derivatives(p);
    Ok(sum_over_states(&eig, &d_phi, &d_theta))
}

/// Curvature samples along the `φ = 0` meridian.
pub fn curvature_profile(spec: ChainSpec, thetas: &[f64]) -> Result<Vec<CurvatureSample>> {
    let chain = HeisenbergChain::new(spec)?;
    thetas
        .iter()
        .map(|&theta| curvature_with(&chain, FieldPoint::meridian(theta, 1.0)))
        .collect()
}

fn trapezoid_weights(n: usize, h: f64) -> impl Iterator<Item = f64> {
    (0..n).map(move |k| if k == 0 || k == n - 1 { h / 2.0 } else { h })
}

/// `(1/2π) ∮ F` over the unit-field sphere on a full 2D grid.
///
/// The surface element is written as `F_φθ dθ dφ = Ω d(cosθ) dφ` with `Ω` the
/// area density, and integrated by the composite trapezoid rule in
/// `(cosθ, φ)`: `n_theta` equally spaced `cosθ` nodes including both poles,
/// and `n_phi` periodic `φ` nodes.
pub fn chern_integral(spec: ChainSpec, grid: SphereGrid) -> Result<f64> {
    chern_integral_on(spec, 1.0, grid)
}

pub fn chern_integral_on(spec: ChainSpec, magnitude: f64, grid: SphereGrid) -> Result<f64> {
    let chain = HeisenbergChain::new(spec)?;
    let du = 2.0 / (grid.n_theta - 1) as f64;
    let dphi = 2.0 * PI / grid.n_phi as f64;
    let nodes: Vec<(usize, usize)> = (0..grid.n_theta)
        .flat_map(|i| (0..grid.n_phi).map(move |k| (i, k)))
        .collect();
    let density: Vec<f64> = nodes
        .par_iter()
        .map(|&(i, k)| {
            let u = (1.0 - i as f64 * du).clamp(-1.0, 1.0);
            let p = FieldPoint {
                theta: u.acos(),
                phi: k as f64 * dphi,
                magnitude,
            };
            curvature_area_density(&chain, p)
        })
        .collect::<Result<_>>()?;
    let total: f64 = trapezoid_weights(grid.n_theta, du)
        .enumerate()
        .map(|(i, w)| {
            w * dphi
                * density[i * grid.n_phi..(i + 1) * grid.n_phi]
                    .iter()
                    .sum::<f64>()
        })
        .sum();
    Ok(total / (2.0 * PI))
}

/// Rotational-invariance shortcut: integrate one meridian and multiply by the
/// full azimuth, `Ch = ∫ Ω(cosθ, φ=0) d(cosθ)`. Valid for the isotropic chain.
pub fn chern_meridian(spec: ChainSpec, n_theta: usize) -> Result<f64> {
    if n_theta < 2 {
        return Err(Error::InvalidInput(
            "meridian needs at least two nodes".into(),
        ));
    }
    let chain = HeisenbergChain::new(spec)?;
    let du = 2.0 / (n_theta - 1) as f64;
    trapezoid_weights(n_theta, du)
        .enumerate()
        .map(|(i, w)| {
            let u = (1.0 - i as f64 * du).clamp(-1.0, 1.0);
            Ok(w * curvature_area_density(&chain, FieldPoint::meridian(u.acos(), 1.0))?)
        })
        .sum()
}

/// `2·F_φθ` at the equator.
pub fn chern_reduced(spec: ChainSpec) -> Result<f64> {
    Ok(2.0 * curvature_spectral(spec, FieldPoint::equator(1.0))?.f_phitheta)
}

/// Gauge-invariant plaquette Chern number on a `(θ, φ)` lattice with
/// `n_theta` latitude intervals and `n_phi` longitudes.
///
/// Each plaquette contributes the phase of the product of normalized
/// ground-state overlaps around it; the sum is `2π` times an integer. Both
/// poles use a single ground state shared by all longitudes.
pub fn chern_lattice(spec: ChainSpec, grid: SphereGrid) -> Result<i64> {
    let chain = HeisenbergChain::new(spec)?;
    let (nt, np) = (grid.n_theta, grid.n_phi);
    let ground = |theta: f64, phi: f64| -> Result<StateVector> {
        let p = FieldPoint {
            theta,
            phi,
            magnitude: 1.0,
        };
        let eig = eigh(&chain.hamiltonian(p))?;
        degeneracy_check(&eig, 1.0)?;
        Ok(eig.ground_state())
    };
    let north = ground(0.0, 0.0)?;
    let south = ground(PI, 0.0)?;
    let interior: Vec<Vec<StateVector>> = (1..nt)
        .into_par_iter()
        .map(|i| {
            let theta = i as f64 * PI / nt as f64;
            (0..np)
                .map(|k| ground(theta, 2.0 * PI * k as f64 / np as f64))
                .collect()
        })
        .collect::<Result<_>>()?;
    let state = |i: usize, k: usize| -> &StateVector {
        if i == 0 {
            &north
        } else if i == nt {
            &south
        } else {
            &interior[i - 1][k % np]
        }
    };
    let link = |a: &StateVector, b: &StateVector| {
        let z = a.inner(b);
        z / z.norm()
    };
    let mut total = 0.0;
    for i in 0..nt {
        for k in 0..np {
            let (u00, u10, u11, u01) = (
                state(i, k),
                state(i + 1, k),
                state(i + 1, k + 1),
                state(i, k + 1),
            );
            let loop_product = link(u00, u10) * link(u10, u11) * link(u11, u01) * link(u01, u00);
            total += loop_product.arg();
        }
    }
    Ok((total / (2.0 * PI)).round() as i64)
}

/// All three Chern routes on one grid.
pub fn chern_all(spec: ChainSpec, grid: SphereGrid) -> Result<ChernResult> {
    Ok(ChernResult {
        integral_value: chern_integral(spec, grid)?,
        lattice_integer: chern_lattice(spec, grid)?,
        reduced_value: chern_reduced(spec)?,
    })
}

/// Ground-state level crossings in `J` at the north-pole field point.
///
/// At `θ = 0` the Hamiltonian conserves total `S_z` and the ground state sits
/// in a single sector, so each crossing shows up as a jump of the ground
/// state's total magnetization. A coarse scan brackets every jump and
/// bisection narrows it to 1e-12 in `J`.
pub fn find_crossings(spec: ChainSpec, j_interval: (f64, f64)) -> Result<Vec<f64>> {
    let (lo, hi) = j_interval;
    if !(lo < hi) {
        return Err(Error::InvalidInput(format!(
            "empty J interval [{lo}, {hi}]"
        )));
    }
    let chain = HeisenbergChain::new(spec)?;
    let label = |j: f64| -> Result<i64> {
        let c = HeisenbergChain::new(chain.spec().with_coupling(j))?;
        let eig = eigh(&c.hamiltonian(FieldPoint::north_pole(1.0)))?;
        Ok(eig
            .ground_state()
            .expectation(c.collective(Axis::Z))
            .round() as i64)
    };

    const COARSE: usize = 800;
    let js: Vec<f64> = (0..=COARSE)
        .map(|k| lo + (hi - lo) * k as f64 / COARSE as f64)
        .collect();
    let labels: Vec<i64> = js.par_iter().map(|&j| label(j)).collect::<Result<_>>()?;

    let mut crossings = Vec::new();
    for w in 0..COARSE {
        if labels[w] == labels[w + 1] {
            continue;
        }
        let (mut a, mut b) = (js[w], js[w + 1]);
        let la = labels[w];
        while b - a > 1e-12 {
            let mid = 0.5 * (a + b);
            if label(mid)? == la {
                a = mid;
            } else {
                b = mid;
            }
        }
        crossings.push(0.5 * (a + b));
    }
    Ok(crossings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn spec(n: usize, j: f64) -> ChainSpec {
        ChainSpec::new(n, j).unwrap()
    }

    #[test]
    fn gap_examples() {
        assert!(
            (ground_gap(spec(1, 0.0), FieldPoint::unit(0.0, 0.0)).unwrap() - 2.0).abs() < 1e-12
        );
        assert!(ground_gap(spec(2, -0.5), FieldPoint::unit(0.0, 0.0)).unwrap() < 1e-12);
        assert!(
            (ground_gap(spec(2, 0.0), FieldPoint::unit(0.0, 0.0)).unwrap() - 2.0).abs() < 1e-12
        );
    }

    #[test]
    fn single_spin_equator_curvature() {
        let s = curvature_spectral(spec(1, 0.0), FieldPoint::equator(1.0)).unwrap();
        assert!((s.f_phitheta - 0.5).abs() < 1e-12);
        assert!((s.gap - 2.0).abs() < 1e-12);
    }

    #[test]
    fn two_spin_plateau_values() {
        let f = |j| {
            curvature_spectral(spec(2, j), FieldPoint::equator(1.0))
                .unwrap()
                .f_phitheta
        };
        assert!((f(1.0) - 1.0).abs() < 1e-10);
        assert!(f(-1.0).abs() < 1e-10);
    }

    #[test]
    fn degenerate_ground_state_is_reported() {
        let err = curvature_spectral(spec(2, -0.5), FieldPoint::equator(1.0)).unwrap_err();
        assert!(matches!(err, Error::DegenerateGroundState { .. }));
    }

    #[test]
    fn profile_follows_sine() {
        let thetas = [0.0, 0.3, 0.7, 1.2, FRAC_PI_2, 2.5];
        for s in curvature_profile(spec(1, 0.0), &thetas).unwrap() {
            assert!((s.f_phitheta - 0.5 * s.point.theta.sin()).abs() < 1e-12);
        }
        let prof = curvature_profile(spec(2, 1.0), &[0.3, 0.7, 1.2]).unwrap();
        let ratios: Vec<f64> = prof
            .iter()
            .map(|s| s.f_phitheta / s.point.theta.sin())
            .collect();
        assert!(
            ratios.iter().all(|r| (r - ratios[0]).abs() < 1e-10),
            "{ratios:?}"
        );
        for n in 1..=4 {
            let s = curvature_profile(spec(n, 1.0), &[0.0]).unwrap();
            assert_eq!(s[0].f_phitheta, 0.0);
        }
    }

    #[test]
    fn chern_integral_examples() {
        let g = SphereGrid::new(64, 16).unwrap();
        assert!((chern_integral(spec(1, 0.0), g).unwrap() - 1.0).abs() < 1e-6);
        assert!((chern_integral(spec(2, 1.0), g).unwrap() - 2.0).abs() < 1e-4);
        assert!((chern_integral(spec(3, 1.0), g).unwrap() - 3.0).abs() < 1e-4);
    }

    #[test]
    fn chern_meridian_matches_full_grid() {
        for (n, j) in [(1, 0.0), (2, -1.0), (3, -1.0), (4, 1.0)] {
            let full = chern_integral(spec(n, j), SphereGrid::new(24, 8).unwrap()).unwrap();
            let merid = chern_meridian(spec(n, j), 24).unwrap();
            assert!(
                (full - merid).abs() < 1e-10,
                "N={n} J={j}: {full} vs {merid}"
            );
        }
    }

    #[test]
    fn chern_lattice_examples() {
        let g = SphereGrid::new(24, 12).unwrap();
        assert_eq!(chern_lattice(spec(1, 0.0), g).unwrap(), 1);
        assert_eq!(chern_lattice(spec(2, -1.0), g).unwrap(), 0);
        assert_eq!(chern_lattice(spec(4, 1.5), g).unwrap(), 4);
    }

    #[test]
    fn chern_lattice_rejects_crossing() {
        let g = SphereGrid::new(8, 4).unwrap();
        assert!(matches!(
            chern_lattice(spec(2, -0.5), g),
            Err(Error::DegenerateGroundState { .. })
        ));
        assert!(matches!(
            chern_integral(spec(2, -0.5), g),
            Err(Error::DegenerateGroundState { .. })
        ));
    }

    #[test]
    fn crossings_n2() {
        let c = find_crossings(spec(2, 0.0), (-2.0, 2.0)).unwrap();
        assert_eq!(c.len(), 1);
        assert!((c[0] + 0.5).abs() < 1e-9, "{c:?}");
    }

    #[test]
    fn crossings_single_spin_none() {
        assert!(find_crossings(spec(1, 0.0), (-2.0, 2.0))
            .unwrap()
            .is_empty());
    }

    #[test]
    fn crossings_n4_two_with_closed_gap() {
        let c = find_crossings(spec(4, 0.0), (-2.0, 2.0)).unwrap();
        assert_eq!(c.len(), 2, "{c:?}");
        for j in c {
            assert!(ground_gap(spec(4, j), FieldPoint::unit(0.0, 0.0)).unwrap() < 1e-8);
        }
    }

    #[test]
    fn crossings_n3_at_minus_third() {
        let c = find_crossings(spec(3, 0.0), (-2.0, 2.0)).unwrap();
        assert_eq!(c.len(), 1);
        assert!((c[0] + 1.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn crossing_interval_validated() {
        assert!(find_crossings(spec(2, 0.0), (1.0, 1.0)).is_err());
    }
}
