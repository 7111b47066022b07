//! Shared fixtures for the benchmarks.

use std::sync::Arc;

use aoheom_core::*;

/// Isotropic Drude model at `n_max` with K = 1 and depth 2.
pub fn model(n_max: u32, eta: f64, beta: f64) -> ModelContext {
    let basis = Arc::new(BasisSet::enumerate(n_max).expect("basis"));
    let bath = BathSpec::isotropic(eta, 1.0, beta).expect("bath");
    let s = pade_decomposition(1).expect("pade");
    let space = Arc::new(
        HierarchyIndexSpace::enumerate([1, 1, 1], 2, Truncation::Global, DEFAULT_INDEX_BUDGET).expect("index space"),
    );
    ModelContext::new(&basis, &bath, &[s.clone(), s.clone(), s], space, TerminatorMode::Eq8).expect("model")
}

/// Boltzmann start with every ADO filled, so no block is trivially zero.
pub fn busy_state(model: &ModelContext, beta: f64) -> HierarchyState {
    let mut s = boltzmann_initial(model, beta).expect("initial state");
    let rho = s.matrices[0].clone();
    for (k, m) in s.matrices.iter_mut().enumerate().skip(1) {
        *m = &rho * C64::new(1e-3 / k as f64, 0.0);
    }
    s
}
