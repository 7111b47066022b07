//! Right-hand side of the hierarchical equations of motion, fourth-order
//! Runge–Kutta time stepping, and relaxation to the correlated
//! system–bath equilibrium.
//!
//! For an auxiliary operator `rho_n` the right-hand side is
//!
//! ```text
//! d/dt rho_n = -(i H^x + sum n_k^a nu_k^a) rho_n
//!              - i sum_{a,k} n_k^a Theta_k^a rho_{n - e_k^a}
//!              - i sum_{a,k} V_a^x rho_{n + e_k^a}
//! ```
//!
//! with `Theta_0^a = c0_fluct V_a^x + c0_diss ([H, V_a])^o` and
//! `Theta_k^a = ck V_a^x`. Upward neighbours beyond the truncation are
//! either dropped ([`TerminatorMode::Zero`]) or reconstructed from the
//! stationary deep-tier relation
//! `(sum m nu) rho_m = -i sum m_k Theta_k rho_{m - e_k}`
//! ([`TerminatorMode::Eq8`]).

use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{coupling_operators, hamiltonian_matrix, Axis, BasisSet, OperatorMatrix};
use crate::bath::{theta_coefficients, BathSpec, PadeScheme, ThetaCoefficients};
use crate::error::{Error, Result};
use crate::hierarchy::{damping_rate, Direction, HierarchyIndexSpace};
use crate::sparse::SparseReal;
use crate::C64;

const I: C64 = C64::new(0.0, 1.0);
const ZERO: C64 = C64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TerminatorMode {
    Eq8,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagatorConfig {
    pub dt: f64,
    pub n_steps: usize,
    pub equilibration_tolerance: f64,
    pub max_equilibration_steps: usize,
}

impl Default for PropagatorConfig {
    fn default() -> Self {
        PropagatorConfig { dt: 0.1, n_steps: 3000, equilibration_tolerance: 1e-9, max_equilibration_steps: 200_000 }
    }
}

impl PropagatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.equilibration_tolerance > 0.0) {
            return Err(Error::invalid("equilibration tolerance must be positive"));
        }
        Ok(())
    }
}

/// One auxiliary operator per hierarchy index, in index-space order.
#[derive(Debug, Clone)]
pub struct HierarchyState {
    pub space: Arc<HierarchyIndexSpace>,
    pub matrices: Vec<DMatrix<C64>>,
    pub time: f64,
}

impl HierarchyState {
    pub fn zeros(space: Arc<HierarchyIndexSpace>, dimension: usize) -> Self {
        let matrices = vec![DMatrix::zeros(dimension, dimension); space.len()];
        HierarchyState { space, matrices, time: 0.0 }
    }

    pub fn dimension(&self) -> usize {
        self.matrices.first().map_or(0, |m| m.nrows())
    }

    /// The reduced density operator.
    pub fn rho(&self) -> &DMatrix<C64> {
        &self.matrices[0]
    }

    /// Max-entry norm over all auxiliary operators.
    pub fn max_norm(&self) -> f64 {
        self.matrices.iter().map(max_abs).fold(0.0, f64::max)
    }

    /// `a * self + b * other`, entrywise.
    pub fn combine(&self, a: C64, other: &HierarchyState, b: C64) -> HierarchyState {
        let matrices = self
            .matrices
            .iter()
            .zip(&other.matrices)
            .map(|(x, y)| x.map(|v| v * a) + y.map(|v| v * b))
            .collect();
        HierarchyState { space: Arc::clone(&self.space), matrices, time: self.time }
    }
}

fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

#[derive(Debug, Clone)]
struct DownTerm {
    axis: usize,
    source: usize,
    v_weight: f64,
    w_weight: f64,
}

#[derive(Debug, Clone)]
struct TerminatorTerm {
    beta: usize,
    alpha: usize,
    source: usize,
    y_weight: f64,
    z_weight: f64,
}

#[derive(Debug, Clone, Default)]
struct AdoPlan {
    damping: f64,
    down: Vec<DownTerm>,
    up: Vec<(usize, usize)>,
    terminator: Vec<TerminatorTerm>,
}

/// Everything the right-hand side needs: system operators, bath
/// coefficients and the index space.
#[derive(Debug, Clone)]
pub struct ModelContext {
    pub h: OperatorMatrix,
    pub v: [OperatorMatrix; 3],
    pub theta: [ThetaCoefficients; 3],
    /// `nu[a][0] = gamma_a`, `nu[a][k] = xi_k / beta` for `k >= 1`.
    pub nu: [Vec<f64>; 3],
    pub space: Arc<HierarchyIndexSpace>,
    pub terminator: TerminatorMode,
    energies: Vec<f64>,
    v_sparse: [SparseReal; 3],
    w_sparse: [SparseReal; 3],
    plans: Vec<AdoPlan>,
}

impl ModelContext {
    /// Hydrogenic model: diagonal Hamiltonian and `V_a = (x, y, z)` on `basis`.
    pub fn new(
        basis: &Arc<BasisSet>,
        bath: &BathSpec,
        schemes: &[PadeScheme; 3],
        space: Arc<HierarchyIndexSpace>,
        terminator: TerminatorMode,
    ) -> Result<Self> {
        let h = hamiltonian_matrix(basis);
        let v = coupling_operators(basis)?;
        ModelContext::from_operators(h, v, bath, schemes, space, terminator)
    }

    /// Model from explicit operators. `h` must be diagonal.
    pub fn from_operators(
        h: OperatorMatrix,
        v: [OperatorMatrix; 3],
        bath: &BathSpec,
        schemes: &[PadeScheme; 3],
        space: Arc<HierarchyIndexSpace>,
        terminator: TerminatorMode,
    ) -> Result<Self> {
        let d = h.dimension();
        if v.iter().any(|m| m.dimension() != d) {
            return Err(Error::invalid("system operators have mismatched dimensions"));
        }
        for i in 0..d {
            for j in 0..d {
                if i != j && h.entries[(i, j)] != 0.0 {
                    return Err(Error::invalid("system Hamiltonian must be diagonal in the basis"));
                }
            }
        }
        for a in Axis::ALL {
            if space.per_axis_k()[a.index()] != schemes[a.index()].order {
                return Err(Error::invalid(format!(
                    "axis {a}: index space has K = {}, Padé scheme has K = {}",
                    space.per_axis_k()[a.index()],
                    schemes[a.index()].order
                )));
            }
        }
        let theta = [
            theta_coefficients(bath, &schemes[0], Axis::X)?,
            theta_coefficients(bath, &schemes[1], Axis::Y)?,
            theta_coefficients(bath, &schemes[2], Axis::Z)?,
        ];
        let nu = Axis::ALL.map(|a| {
            let mut f = vec![bath.gamma[a.index()]];
            f.extend(schemes[a.index()].frequencies(bath.beta));
            f
        });
        let energies: Vec<f64> = h.entries.diagonal().iter().copied().collect();
        let v_sparse = [0, 1, 2].map(|a| SparseReal::from_dense(&v[a].entries));
        let w_sparse = [0, 1, 2].map(|a| {
            let w = DMatrix::from_fn(d, d, |i, j| (energies[i] - energies[j]) * v[a].entries[(i, j)]);
            SparseReal::from_dense(&w)
        });
        let plans = build_plans(&space, &theta, &nu, terminator);
        Ok(ModelContext { h, v, theta, nu, space, terminator, energies, v_sparse, w_sparse, plans })
    }

    pub fn dimension(&self) -> usize {
        self.energies.len()
    }

    /// Largest damping rate over the hierarchy.
    pub fn max_damping(&self) -> f64 {
        self.plans.iter().map(|p| p.damping).fold(0.0, f64::max)
    }

    /// Rough upper bound on the magnitude of the hierarchy generator, used
    /// for the RK4 stability warning.
    pub fn spectral_bound(&self) -> f64 {
        let e_span = self.energies.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            - self.energies.iter().copied().fold(f64::INFINITY, f64::min);
        let depth = self.space.depth() as f64;
        let coupling_sq: f64 = (0..3)
            .map(|a| {
                let vnorm = self.v[a].entries.clone().symmetric_eigenvalues().amax();
                let th = self.theta[a].c0_fluct.abs()
                    + self.theta[a].c0_diss.abs() * e_span
                    + self.theta[a].ck.iter().map(|c| c.abs()).sum::<f64>();
                (depth + 1.0) * th * vnorm * vnorm
            })
            .sum();
        self.max_damping().hypot(e_span + 2.0 * coupling_sq.sqrt())
    }

    fn check_state(&self, state: &HierarchyState) -> Result<()> {
        if !Arc::ptr_eq(&state.space, &self.space) && state.space.indices() != self.space.indices() {
            return Err(Error::invalid("state and model use different hierarchy index spaces"));
        }
        if state.matrices.len() != self.space.len() {
            return Err(Error::invalid("state has the wrong number of auxiliary operators"));
        }
        let d = self.dimension();
        if state.matrices.iter().any(|m| m.nrows() != d || m.ncols() != d) {
            return Err(Error::invalid(format!("state matrices must be {d}x{d}")));
        }
        Ok(())
    }

    fn rhs_one(&self, pos: usize, input: &[DMatrix<C64>], out: &mut DMatrix<C64>) {
        let d = self.dimension();
        let plan = &self.plans[pos];
        let rho = input[pos].as_slice();
        let o = out.as_mut_slice();

        // drift
        for c in 0..d {
            for r in 0..d {
                let rate = C64::new(-plan.damping, -(self.energies[r] - self.energies[c]));
                o[c * d + r] = rate * rho[c * d + r];
            }
        }

        // per-axis accumulators for V^x and (H^x V)^o
        let mut commute: [Option<Vec<C64>>; 3] = [None, None, None];
        let mut anti: [Option<Vec<C64>>; 3] = [None, None, None];
        let axpy = |slot: &mut Option<Vec<C64>>, w: f64, src: &[C64]| {
            let buf = slot.get_or_insert_with(|| vec![ZERO; d * d]);
            for (b, s) in buf.iter_mut().zip(src) {
                *b += s * w;
            }
        };

        for t in &plan.down {
            let src = input[t.source].as_slice();
            if t.v_weight != 0.0 {
                axpy(&mut commute[t.axis], t.v_weight, src);
            }
            if t.w_weight != 0.0 {
                axpy(&mut anti[t.axis], t.w_weight, src);
            }
        }
        for &(axis, src) in &plan.up {
            axpy(&mut commute[axis], 1.0, input[src].as_slice());
        }

        if !plan.terminator.is_empty() {
            for beta in 0..3 {
                let mut y: [Option<Vec<C64>>; 3] = [None, None, None];
                let mut z: [Option<Vec<C64>>; 3] = [None, None, None];
                for t in plan.terminator.iter().filter(|t| t.beta == beta) {
                    let src = input[t.source].as_slice();
                    if t.y_weight != 0.0 {
                        axpy(&mut y[t.alpha], t.y_weight, src);
                    }
                    if t.z_weight != 0.0 {
                        axpy(&mut z[t.alpha], t.z_weight, src);
                    }
                }
                if y.iter().chain(&z).all(Option::is_none) {
                    continue;
                }
                // estimated missing neighbours: -i sum_a (V_a^x Y_a + (H^x V_a)^o Z_a)
                let target = commute[beta].get_or_insert_with(|| vec![ZERO; d * d]);
                for alpha in 0..3 {
                    if let Some(ya) = &y[alpha] {
                        self.v_sparse[alpha].bracket_add(ya, -I, -1.0, target);
                    }
                    if let Some(za) = &z[alpha] {
                        self.w_sparse[alpha].bracket_add(za, -I, 1.0, target);
                    }
                }
            }
        }

        for a in 0..3 {
            if let Some(buf) = &commute[a] {
                self.v_sparse[a].bracket_add(buf, -I, -1.0, o);
            }
            if let Some(buf) = &anti[a] {
                self.w_sparse[a].bracket_add(buf, -I, 1.0, o);
            }
        }
    }

    /// Evaluates the right-hand side into `out`, one auxiliary operator per
    /// task. Each output depends only on `input`, so the result does not
    /// depend on the number of worker threads.
    fn rhs_into(&self, input: &[DMatrix<C64>], out: &mut [DMatrix<C64>]) {
        out.par_iter_mut().enumerate().for_each(|(pos, o)| self.rhs_one(pos, input, o));
    }
}

fn build_plans(
    space: &HierarchyIndexSpace,
    theta: &[ThetaCoefficients; 3],
    nu: &[Vec<f64>; 3],
    terminator: TerminatorMode,
) -> Vec<AdoPlan> {
    let coeff = |a: usize, k: usize| if k == 0 { theta[a].c0_fluct } else { theta[a].ck[k - 1] };
    let modes = space.modes();
    (0..space.len())
        .map(|pos| {
            let idx = space.index(pos);
            let counts = idx.counts();
            let damping = damping_rate(space, idx, nu);
            let mut plan = AdoPlan { damping, ..Default::default() };
            for slot in 0..modes {
                let (axis, k) = space.slot_mode(slot);
                let a = axis.index();
                let n = counts[slot] as f64;
                if let Some(src) = space.neighbor_slot(pos, slot, Direction::Down) {
                    let w_weight = if k == 0 { n * theta[a].c0_diss } else { 0.0 };
                    plan.down.push(DownTerm { axis: a, source: src, v_weight: n * coeff(a, k), w_weight });
                }
                match space.neighbor_slot(pos, slot, Direction::Up) {
                    Some(src) => plan.up.push((a, src)),
                    None if terminator == TerminatorMode::Eq8 => {
                        // m = n + e_slot lies beyond the truncation
                        let mut m = counts.to_vec();
                        m[slot] += 1;
                        let gamma_m = damping + nu[a][k];
                        for (s2, &mc) in m.iter().enumerate() {
                            if mc == 0 {
                                continue;
                            }
                            let (ax2, k2) = space.slot_mode(s2);
                            let a2 = ax2.index();
                            let mut src_counts = m.clone();
                            src_counts[s2] -= 1;
                            let Some(source) = space.position_of(&src_counts) else {
                                continue;
                            };
                            let w = mc as f64 / gamma_m;
                            plan.terminator.push(TerminatorTerm {
                                beta: a,
                                alpha: a2,
                                source,
                                y_weight: w * coeff(a2, k2),
                                z_weight: if k2 == 0 { w * theta[a2].c0_diss } else { 0.0 },
                            });
                        }
                    }
                    None => {}
                }
            }
            plan
        })
        .collect()
}

/// Time derivative of every auxiliary operator.
pub fn heom_rhs(state: &HierarchyState, model: &ModelContext) -> Result<HierarchyState> {
    model.check_state(state)?;
    let mut out = HierarchyState::zeros(Arc::clone(&state.space), model.dimension());
    out.time = state.time;
    model.rhs_into(&state.matrices, &mut out.matrices);
    Ok(out)
}

/// Reusable RK4 integrator holding stage buffers.
pub struct Integrator<'m> {
    model: &'m ModelContext,
    k: [Vec<DMatrix<C64>>; 4],
    scratch: Vec<DMatrix<C64>>,
    steps_taken: usize,
}

impl<'m> Integrator<'m> {
    pub fn new(model: &'m ModelContext, dt: f64) -> Self {
        let bound = dt * model.spectral_bound();
        if bound >= 2.8 {
            log::warn!("dt = {dt} with generator bound {:.3} exceeds the RK4 stability heuristic (dt * bound = {bound:.2})", model.spectral_bound());
        }
        let zeros = vec![DMatrix::zeros(model.dimension(), model.dimension()); model.space.len()];
        Integrator {
            model,
            k: [zeros.clone(), zeros.clone(), zeros.clone(), zeros.clone()],
            scratch: zeros,
            steps_taken: 0,
        }
    }

    /// Advances `state` by `dt` in place. Returns the max-entry norm of the
    /// right-hand side at the start of the step.
    pub fn step(&mut self, state: &mut HierarchyState, dt: f64) -> Result<f64> {
        self.advance(state, dt, None).map(|(r, _)| r)
    }

    /// Like [`Integrator::step`], but leaves `state` untouched and returns
    /// `(residual, true)` when the residual is already below `tolerance`.
    pub fn step_unless_converged(&mut self, state: &mut HierarchyState, dt: f64, tolerance: f64) -> Result<(f64, bool)> {
        self.advance(state, dt, Some(tolerance))
    }

    fn advance(&mut self, state: &mut HierarchyState, dt: f64, tolerance: Option<f64>) -> Result<(f64, bool)> {
        self.model.check_state(state)?;
        let model = self.model;
        let [k1, k2, k3, k4] = &mut self.k;
        let scratch = &mut self.scratch;
        let y = &state.matrices;

        model.rhs_into(y, k1);
        let residual = k1.par_iter().map(max_abs).reduce(|| 0.0, f64::max);
        if tolerance.is_some_and(|tol| residual < tol) {
            return Ok((residual, true));
        }
        stage(scratch, y, k1, 0.5 * dt);
        model.rhs_into(scratch, k2);
        stage(scratch, y, k2, 0.5 * dt);
        model.rhs_into(scratch, k3);
        stage(scratch, y, k3, dt);
        model.rhs_into(scratch, k4);

        let w = dt / 6.0;
        let step = self.steps_taken;
        let bad = state
            .matrices
            .par_iter_mut()
            .enumerate()
            .map(|(pos, m)| {
                let s = m.as_mut_slice();
                let (a, b, c, e) = (k1[pos].as_slice(), k2[pos].as_slice(), k3[pos].as_slice(), k4[pos].as_slice());
                let mut finite = true;
                for i in 0..s.len() {
                    s[i] += (a[i] + (b[i] + c[i]) * 2.0 + e[i]) * w;
                    finite &= s[i].re.is_finite() && s[i].im.is_finite();
                }
                if finite {
                    usize::MAX
                } else {
                    pos
                }
            })
            .min()
            .unwrap_or(usize::MAX);
        self.steps_taken += 1;
        state.time += dt;
        if bad != usize::MAX {
            return Err(Error::Divergence { step, ado: bad });
        }
        Ok((residual, false))
    }

    pub fn steps_taken(&self) -> usize {
        self.steps_taken
    }
}

fn stage(out: &mut [DMatrix<C64>], y: &[DMatrix<C64>], k: &[DMatrix<C64>], h: f64) {
    out.par_iter_mut().zip(y.par_iter().zip(k.par_iter())).for_each(|(o, (y, k))| {
        for ((o, y), k) in o.as_mut_slice().iter_mut().zip(y.as_slice()).zip(k.as_slice()) {
            *o = y + k * h;
        }
    });
}

/// One classical RK4 step.
pub fn rk4_step(state: &HierarchyState, model: &ModelContext, dt: f64) -> Result<HierarchyState> {
    let mut next = state.clone();
    Integrator::new(model, dt).step(&mut next, dt)?;
    Ok(next)
}

/// Thermal state of the isolated system in the zeroth operator, all other
/// auxiliary operators zero.
pub fn boltzmann_initial(model: &ModelContext, beta: f64) -> Result<HierarchyState> {
    if !(beta > 0.0) {
        return Err(Error::invalid(format!("beta must be positive, got {beta}")));
    }
    let e_min = model.energies.iter().copied().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = model.energies.iter().map(|e| (-beta * (e - e_min)).exp()).collect();
    let z: f64 = w.iter().sum();
    let mut state = HierarchyState::zeros(Arc::clone(&model.space), model.dimension());
    for (i, wi) in w.iter().enumerate() {
        state.matrices[0][(i, i)] = C64::new(wi / z, 0.0);
    }
    Ok(state)
}

/// Outcome of time-marching towards equilibrium.
#[derive(Debug, Clone)]
pub struct Relaxation {
    pub state: HierarchyState,
    pub residual: f64,
    pub steps: usize,
    pub converged: bool,
}

/// Propagates until the max-entry norm of the right-hand side over all
/// auxiliary operators drops below the tolerance, or the step budget runs
/// out. Never fails on non-convergence; see [`equilibrate`].
pub fn relax(state0: &HierarchyState, model: &ModelContext, config: &PropagatorConfig) -> Result<Relaxation> {
    config.validate()?;
    let mut state = state0.clone();
    let mut integrator = Integrator::new(model, config.dt);
    for steps in 0..config.max_equilibration_steps {
        let (residual, converged) =
            integrator.step_unless_converged(&mut state, config.dt, config.equilibration_tolerance)?;
        if converged {
            return Ok(Relaxation { state, residual, steps, converged });
        }
    }
    let residual = heom_rhs(&state, model)?.max_norm();
    let converged = residual < config.equilibration_tolerance;
    Ok(Relaxation { state, residual, steps: config.max_equilibration_steps, converged })
}

/// Correlated equilibrium hierarchy by time-marching from `state0`.
pub fn equilibrate(state0: &HierarchyState, model: &ModelContext, config: &PropagatorConfig) -> Result<HierarchyState> {
    let r = relax(state0, model, config)?;
    if r.converged {
        Ok(r.state)
    } else {
        Err(Error::Convergence { steps: r.steps, residual: r.residual })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub trace: (f64, f64),
    /// Max entry of `|rho - rho^dagger|` for the zeroth operator.
    pub hermiticity_defect: f64,
    /// Same, maximised over every auxiliary operator.
    pub max_ado_hermiticity_defect: f64,
    pub populations: Vec<f64>,
}

fn hermiticity_defect(m: &DMatrix<C64>) -> f64 {
    let d = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..d {
        for j in i..d {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn diagnostics(state: &HierarchyState) -> Diagnostics {
    let rho = state.rho();
    let trace = rho.trace();
    Diagnostics {
        trace: (trace.re, trace.im),
        hermiticity_defect: hermiticity_defect(rho),
        max_ado_hermiticity_defect: state.matrices.iter().map(hermiticity_defect).fold(0.0, f64::max),
        populations: rho.diagonal().iter().map(|p| p.re).collect(),
    }
}
