//! Topological transitions of Heisenberg spin chains: Berry curvature from
//! quasiadiabatic dynamics, Chern numbers, and the NMR pulse-sequence
//! realization of the protocol.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod lab;
pub mod model;
pub mod pulsesim;
pub mod qcore;
pub mod quench;
pub mod spectral;

pub use error::{Error, Result};
pub use lab::{
    detect_plateaus, deviation_report, export_results, import_results, run_sweep, PlateauStats,
    SweepConfig, SweepMethod, SweepRow,
};
pub use model::{
    build_heisenberg, build_nmr_hamiltonian, field_cartesian, param_derivative,
    total_magnetization, ChainSpec, FieldPoint, HeisenbergChain, MoleculeSpec, Param,
};
pub use pulsesim::{
    compile_zz, perturbed_fidelity, robustness_report, simulate_protocol_trotter, trotter_step,
    verify_program, verify_sequence, CompiledZZ, PulseEvent, PulseProgram, RobustnessReport,
    SequenceReport,
};
pub use qcore::{eigh, expm_i, kron, Axis, ComplexMatrix, EigenSystem, StateVector};
pub use quench::{
    evolve_quench, extract_curvature, generalized_force, linear_zone_scan, CurvatureFit,
    QuenchProtocol, QuenchResult,
};
pub use spectral::{
    chern_integral, chern_lattice, chern_meridian, curvature_profile, curvature_spectral,
    find_crossings, ground_gap, ChernResult, CurvatureSample, SphereGrid,
};
