//! Hydrogenic eigenbasis and the dense operator matrices built on it.
//!
//! States are `|n, l, m>` with real spherical harmonics: `m > 0` carries
//! `cos(|m| phi)`, `m < 0` carries `sin(|m| phi)`. Associated Legendre
//! functions are used without the Condon–Shortley phase, so `Y_{1,1}` is
//! proportional to `x / r`, `Y_{1,-1}` to `y / r` and `Y_{1,0}` to `z / r`.
//! All quantities are in atomic units with nuclear charge 1.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{gauss_legendre, integrate_adaptive};

/// Cartesian direction of a bath coupling or a dipole component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_char(c: char) -> Option<Axis> {
        match c {
            'x' | 'X' => Some(Axis::X),
            'y' | 'Y' => Some(Axis::Y),
            'z' | 'Z' => Some(Axis::Z),
            _ => None,
        }
    }

    /// Direction cosine `x/r`, `y/r` or `z/r` at polar angle `theta` and
    /// azimuth `phi`.
    pub fn direction_cosine(self, theta: f64, phi: f64) -> f64 {
        match self {
            Axis::X => theta.sin() * phi.cos(),
            Axis::Y => theta.sin() * phi.sin(),
            Axis::Z => theta.cos(),
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        };
        f.write_str(c)
    }
}

/// Radial factor of a position-like operator: `r` times the direction
/// cosine (`Linear`) or the bare direction cosine (`Unit`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RadialMode {
    Linear,
    Unit,
}

impl RadialMode {
    fn power(self) -> u32 {
        match self {
            RadialMode::Linear => 1,
            RadialMode::Unit => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct QuantumNumbers {
    pub n: u32,
    pub l: u32,
    pub m: i32,
}

impl QuantumNumbers {
    pub fn new(n: u32, l: u32, m: i32) -> Result<Self> {
        if n < 1 || l >= n || m.unsigned_abs() > l {
            return Err(Error::invalid(format!("invalid quantum numbers (n={n}, l={l}, m={m})")));
        }
        Ok(QuantumNumbers { n, l, m })
    }

    /// Label used in matrix dumps, e.g. `2.1.-1`.
    pub fn label(&self) -> String {
        format!("{}.{}.{}", self.n, self.l, self.m)
    }
}

impl fmt::Display for QuantumNumbers {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.n, self.l, self.m)
    }
}

/// All hydrogenic states with `n <= n_max`, in lexicographic `(n, l, m)`
/// order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BasisSet {
    n_max: u32,
    states: Vec<QuantumNumbers>,
}

pub const PRACTICAL_N_MAX: u32 = 10;

impl BasisSet {
    pub fn enumerate(n_max: u32) -> Result<Self> {
        if n_max < 1 {
            return Err(Error::invalid("n_max must be at least 1"));
        }
        if n_max > PRACTICAL_N_MAX {
            log::warn!("n_max = {n_max} exceeds the practical cap of {PRACTICAL_N_MAX}");
        }
        let mut states = Vec::new();
        for n in 1..=n_max {
            for l in 0..n {
                for m in -(l as i32)..=(l as i32) {
                    states.push(QuantumNumbers { n, l, m });
                }
            }
        }
        Ok(BasisSet { n_max, states })
    }

    /// Basis built from an explicit state list, e.g. a two-level subspace.
    /// The list is sorted into the canonical order.
    pub fn from_states(mut states: Vec<QuantumNumbers>) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::invalid("basis must contain at least one state"));
        }
        for s in &states {
            QuantumNumbers::new(s.n, s.l, s.m)?;
        }
        states.sort();
        states.dedup();
        let n_max = states.iter().map(|s| s.n).max().unwrap_or(1);
        Ok(BasisSet { n_max, states })
    }

    pub fn n_max(&self) -> u32 {
        self.n_max
    }

    pub fn states(&self) -> &[QuantumNumbers] {
        &self.states
    }

    pub fn dimension(&self) -> usize {
        self.states.len()
    }

    pub fn position(&self, q: &QuantumNumbers) -> Option<usize> {
        self.states.binary_search(q).ok()
    }

    pub fn l_max(&self) -> u32 {
        self.states.iter().map(|s| s.l).max().unwrap_or(0)
    }
}

/// Which physical operator a matrix represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OperatorLabel {
    Hamiltonian,
    Coupling(Axis),
    Dipole(Axis),
}

impl fmt::Display for OperatorLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OperatorLabel::Hamiltonian => write!(f, "H_S"),
            OperatorLabel::Coupling(a) => write!(f, "V_{a}"),
            OperatorLabel::Dipole(a) => write!(f, "mu_{a}"),
        }
    }
}

/// Dense real symmetric matrix of a system operator in a [`BasisSet`].
#[derive(Debug, Clone)]
pub struct OperatorMatrix {
    pub label: OperatorLabel,
    pub basis: Arc<BasisSet>,
    pub entries: DMatrix<f64>,
}

impl OperatorMatrix {
    pub fn new(label: OperatorLabel, basis: Arc<BasisSet>, entries: DMatrix<f64>) -> Result<Self> {
        let d = basis.dimension();
        if entries.nrows() != d || entries.ncols() != d {
            return Err(Error::invalid(format!(
                "operator {label} is {}x{}, basis dimension is {d}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        let mut op = OperatorMatrix { label, basis, entries };
        op.symmetrize();
        Ok(op)
    }

    fn symmetrize(&mut self) {
        let d = self.entries.nrows();
        for i in 0..d {
            for j in (i + 1)..d {
                let v = 0.5 * (self.entries[(i, j)] + self.entries[(j, i)]);
                self.entries[(i, j)] = v;
                self.entries[(j, i)] = v;
            }
        }
    }

    pub fn dimension(&self) -> usize {
        self.entries.nrows()
    }

    pub fn scaled(&self, factor: f64) -> OperatorMatrix {
        OperatorMatrix {
            label: self.label,
            basis: Arc::clone(&self.basis),
            entries: &self.entries * factor,
        }
    }

    /// Writes the matrix as CSV: a header row of state labels, then one row
    /// per state prefixed by its label.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let labels: Vec<String> = self.basis.states().iter().map(|s| s.label()).collect();
        writeln!(out, "state,{}", labels.join(","))?;
        for (i, label) in labels.iter().enumerate() {
            write!(out, "{label}")?;
            for j in 0..self.dimension() {
                write!(out, ",{:e}", self.entries[(i, j)])?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Bound-state energy `-1 / (2 n^2)`.
pub fn eigenenergy(n: u32) -> Result<f64> {
    if n < 1 {
        return Err(Error::invalid("principal quantum number must be at least 1"));
    }
    let n = n as f64;
    Ok(-0.5 / (n * n))
}

fn ln_factorial(k: u32) -> f64 {
    (2..=k).map(|i| (i as f64).ln()).sum()
}

/// Generalized Laguerre polynomial `L_k^{(alpha)}(x)` by upward recurrence.
pub fn laguerre(k: u32, alpha: f64, x: f64) -> f64 {
    let mut prev = 1.0;
    if k == 0 {
        return prev;
    }
    let mut cur = 1.0 + alpha - x;
    for j in 1..k {
        let j = j as f64;
        let next = ((2.0 * j + 1.0 + alpha - x) * cur - (j + alpha) * prev) / (j + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// Associated Legendre function `P_l^m(x)` for `m >= 0`, without the
/// Condon–Shortley phase.
pub fn associated_legendre(l: u32, m: u32, x: f64) -> f64 {
    if m > l {
        return 0.0;
    }
    let s = (1.0 - x * x).max(0.0).sqrt();
    let mut pmm = 1.0;
    for i in 1..=m {
        pmm *= (2 * i - 1) as f64 * s;
    }
    if l == m {
        return pmm;
    }
    let mut pm1 = x * (2 * m + 1) as f64 * pmm;
    if l == m + 1 {
        return pm1;
    }
    let mut pm0 = pmm;
    for ll in (m + 2)..=l {
        let next = ((2 * ll - 1) as f64 * x * pm1 - (ll + m - 1) as f64 * pm0) / (ll - m) as f64;
        pm0 = pm1;
        pm1 = next;
    }
    pm1
}

/// Radial wavefunction `R_{nl}(r)`, normalized so that
/// `int_0^inf R^2 r^2 dr = 1`.
pub fn radial_wavefunction(n: u32, l: u32, r: f64) -> Result<f64> {
    QuantumNumbers::new(n, l, 0)?;
    if r < 0.0 {
        return Err(Error::invalid(format!("radius must be non-negative, got {r}")));
    }
    Ok(radial_unchecked(n, l, r))
}

fn radial_norm(n: u32, l: u32) -> f64 {
    let nf = n as f64;
    let ln = 3.0 * (2.0 / nf).ln() + ln_factorial(n - l - 1) - (2.0 * nf).ln() - ln_factorial(n + l);
    (0.5 * ln).exp()
}

fn radial_unchecked(n: u32, l: u32, r: f64) -> f64 {
    let rho = 2.0 * r / n as f64;
    radial_norm(n, l) * (-rho / 2.0).exp() * rho.powi(l as i32) * laguerre(n - l - 1, (2 * l + 1) as f64, rho)
}

fn harmonic_norm(l: u32, m: u32) -> f64 {
    let ln = ((2 * l + 1) as f64 / (4.0 * PI)).ln() + ln_factorial(l - m) - ln_factorial(l + m);
    (0.5 * ln).exp()
}

/// Real spherical harmonic `Y_{lm}(theta, phi)`.
pub fn real_spherical_harmonic(l: u32, m: i32, theta: f64, phi: f64) -> Result<f64> {
    if m.unsigned_abs() > l {
        return Err(Error::invalid(format!("|m| = {} exceeds l = {l}", m.unsigned_abs())));
    }
    Ok(real_harmonic_unchecked(l, m, theta.cos(), phi))
}

fn real_harmonic_unchecked(l: u32, m: i32, cos_theta: f64, phi: f64) -> f64 {
    let am = m.unsigned_abs();
    let base = harmonic_norm(l, am) * associated_legendre(l, am, cos_theta);
    match m.signum() {
        0 => base,
        1 => std::f64::consts::SQRT_2 * base * (am as f64 * phi).cos(),
        _ => std::f64::consts::SQRT_2 * base * (am as f64 * phi).sin(),
    }
}

/// `int_0^inf R_{n'l'}(r) r^power R_{nl}(r) r^2 dr` by adaptive Gauss–Kronrod
/// quadrature on `[0, 40 max(n, n')^2]`.
pub fn radial_integral(n: u32, l: u32, n_prime: u32, l_prime: u32, power: u32) -> Result<f64> {
    QuantumNumbers::new(n, l, 0)?;
    QuantumNumbers::new(n_prime, l_prime, 0)?;
    if power > 1 {
        return Err(Error::invalid(format!("radial power must be 0 or 1, got {power}")));
    }
    let nm = n.max(n_prime) as f64;
    let r_cut = 40.0 * nm * nm;
    let q = integrate_adaptive(
        |r| radial_unchecked(n, l, r) * radial_unchecked(n_prime, l_prime, r) * r.powi(2 + power as i32),
        0.0,
        r_cut,
        1e-14,
        1e-10,
        4000,
    )?;
    Ok(q.value)
}

/// Angular integrals `<l m| c_axis |l' m'>` of products of two real
/// harmonics with a direction cosine, by product Gauss–Legendre (in
/// `cos theta`) times trapezoid (in `phi`) quadrature.
pub struct AngularTable {
    l_max: u32,
    values: HashMap<(Axis, u32, i32, u32, i32), f64>,
}

impl AngularTable {
    pub fn new(l_max: u32) -> Self {
        let order = (2 * l_max + 2) as usize;
        let (xs, ws) = gauss_legendre(order);
        let phis: Vec<f64> = (0..order).map(|j| 2.0 * PI * j as f64 / order as f64).collect();
        let dphi = 2.0 * PI / order as f64;
        let lm: Vec<(u32, i32)> = (0..=l_max)
            .flat_map(|l| (-(l as i32)..=(l as i32)).map(move |m| (l, m)))
            .collect();

        let mut values = HashMap::new();
        for axis in Axis::ALL {
            for &(l, m) in &lm {
                for &(lp, mp) in &lm {
                    if l.abs_diff(lp) != 1 {
                        continue;
                    }
                    let mut acc = 0.0;
                    for (x, w) in xs.iter().zip(&ws) {
                        let theta = x.acos();
                        for &phi in &phis {
                            acc += w
                                * dphi
                                * real_harmonic_unchecked(l, m, *x, phi)
                                * real_harmonic_unchecked(lp, mp, *x, phi)
                                * axis.direction_cosine(theta, phi);
                        }
                    }
                    values.insert((axis, l, m, lp, mp), acc);
                }
            }
        }
        AngularTable { l_max, values }
    }

    /// Zero unless `|l - l'| = 1`.
    pub fn get(&self, axis: Axis, l: u32, m: i32, lp: u32, mp: i32) -> f64 {
        debug_assert!(l <= self.l_max && lp <= self.l_max);
        self.values.get(&(axis, l, m, lp, mp)).copied().unwrap_or(0.0)
    }
}

const SELECTION_EPS: f64 = 1e-13;

/// Matrix of `r^p * (direction cosine along axis)` with `p = 1` for
/// [`RadialMode::Linear`] and `p = 0` for [`RadialMode::Unit`].
pub fn position_operator_matrix(
    basis: &Arc<BasisSet>,
    axis: Axis,
    radial_mode: RadialMode,
) -> Result<OperatorMatrix> {
    let angular = AngularTable::new(basis.l_max());
    position_operator_with_table(basis, axis, radial_mode, &angular, &mut HashMap::new())
}

type RadialCache = HashMap<(u32, u32, u32, u32, u32), f64>;

fn position_operator_with_table(
    basis: &Arc<BasisSet>,
    axis: Axis,
    radial_mode: RadialMode,
    angular: &AngularTable,
    radial_cache: &mut RadialCache,
) -> Result<OperatorMatrix> {
    let d = basis.dimension();
    let power = radial_mode.power();
    let mut entries = DMatrix::zeros(d, d);
    let states = basis.states();
    for (i, a) in states.iter().enumerate() {
        for (j, b) in states.iter().enumerate().skip(i) {
            let ang = angular.get(axis, a.l, a.m, b.l, b.m);
            if ang.abs() < SELECTION_EPS {
                continue;
            }
            let (lo, hi) = ((a.n, a.l).min((b.n, b.l)), (a.n, a.l).max((b.n, b.l)));
            let key = (lo.0, lo.1, hi.0, hi.1, power);
            let rad = match radial_cache.get(&key) {
                Some(v) => *v,
                None => {
                    let v = radial_integral(key.0, key.1, key.2, key.3, power)?;
                    radial_cache.insert(key, v);
                    v
                }
            };
            entries[(i, j)] = rad * ang;
            entries[(j, i)] = rad * ang;
        }
    }
    let label = OperatorLabel::Coupling(axis);
    OperatorMatrix::new(label, Arc::clone(basis), entries)
}

/// Bath coupling operators `(V_x, V_y, V_z) = (x, y, z)`.
pub fn coupling_operators(basis: &Arc<BasisSet>) -> Result<[OperatorMatrix; 3]> {
    operator_triplet(basis, RadialMode::Linear, OperatorLabel::Coupling, 1.0)
}

/// Dipole operators `mu_0 * r^p * (direction cosine)`.
pub fn dipole_operators(basis: &Arc<BasisSet>, radial_mode: RadialMode, mu0: f64) -> Result<[OperatorMatrix; 3]> {
    operator_triplet(basis, radial_mode, OperatorLabel::Dipole, mu0)
}

fn operator_triplet(
    basis: &Arc<BasisSet>,
    mode: RadialMode,
    label: fn(Axis) -> OperatorLabel,
    scale: f64,
) -> Result<[OperatorMatrix; 3]> {
    let angular = AngularTable::new(basis.l_max());
    let mut cache = RadialCache::new();
    let mut build = |axis| -> Result<OperatorMatrix> {
        let mut op = position_operator_with_table(basis, axis, mode, &angular, &mut cache)?.scaled(scale);
        op.label = label(axis);
        Ok(op)
    };
    Ok([build(Axis::X)?, build(Axis::Y)?, build(Axis::Z)?])
}

/// Diagonal system Hamiltonian.
pub fn hamiltonian_matrix(basis: &Arc<BasisSet>) -> OperatorMatrix {
    let diag: Vec<f64> = basis
        .states()
        .iter()
        .map(|s| eigenenergy(s.n).expect("basis states are valid"))
        .collect();
    OperatorMatrix {
        label: OperatorLabel::Hamiltonian,
        basis: Arc::clone(basis),
        entries: DMatrix::from_diagonal(&nalgebra::DVector::from_vec(diag)),
    }
}
