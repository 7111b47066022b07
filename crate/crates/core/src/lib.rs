//! Open quantum dynamics of a hydrogenic Coulomb system coupled to three
//! independent Drude baths along x, y and z, solved with hierarchical
//! equations of motion, plus linear absorption spectra computed from the
//! hierarchy and from the golden-rule reference.
//!
//! Atomic units throughout (`hbar = m_e = e = 4 pi eps_0 = k_B = 1`).

pub mod basis;
pub mod bath;
pub mod checkpoint;
pub mod error;
pub mod hierarchy;
pub mod propagator;
pub mod quadrature;
pub mod spectroscopy;
mod sparse;

pub use basis::{
    coupling_operators, dipole_operators, eigenenergy, hamiltonian_matrix, position_operator_matrix,
    radial_integral, radial_wavefunction, real_spherical_harmonic, Axis, BasisSet, OperatorLabel,
    OperatorMatrix, QuantumNumbers, RadialMode,
};
pub use bath::{drude_sdf, pade_decomposition, theta_coefficients, BathSpec, PadeScheme, ThetaCoefficients};
pub use error::{Error, Result};
pub use hierarchy::{damping_rate, AdoIndex, Direction, HierarchyIndexSpace, Truncation, DEFAULT_INDEX_BUDGET};
pub use propagator::{
    boltzmann_initial, diagnostics, equilibrate, heom_rhs, relax, rk4_step, Diagnostics, HierarchyState, Integrator,
    ModelContext, PropagatorConfig, Relaxation, TerminatorMode,
};
pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointHeader};
pub use spectroscopy::{
    apply_dipole_commutator, compute_response, convolve_sticks, default_apodization_rate, golden_rule_spectrum,
    rydberg_frequency, series_label, spectrum_from_response, ResponseTrace, Spectrum, StickLine, StickSpectrum,
};

/// Complex scalar used for hierarchy matrices.
pub type C64 = num_complex::Complex64;
