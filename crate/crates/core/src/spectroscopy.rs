//! Linear absorption: dipole response of the hierarchy, its one-sided
//! Fourier transform, and the golden-rule stick reference.

use std::io::Write;
use std::sync::Arc;

use nalgebra::DMatrix;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::basis::{eigenenergy, Axis, OperatorMatrix};
use crate::error::{Error, Result};
use crate::propagator::{HierarchyState, Integrator, ModelContext, PropagatorConfig};
use crate::sparse::SparseReal;
use crate::C64;

/// `(1/2)(1/n^2 - 1/n'^2)` for absorption from `n` up to `n'`.
pub fn rydberg_frequency(n: u32, n_prime: u32) -> Result<f64> {
    if n < 1 || n_prime <= n {
        return Err(Error::invalid(format!("need n' > n >= 1, got n = {n}, n' = {n_prime}")));
    }
    Ok(eigenenergy(n_prime)? - eigenenergy(n)?)
}

/// Spectroscopic series name for lines starting at principal number `n`.
pub fn series_label(n: u32) -> String {
    match n {
        1 => "Lyman".into(),
        2 => "Balmer".into(),
        3 => "Paschen".into(),
        4 => "Brackett".into(),
        5 => "Pfund".into(),
        6 => "Humphreys".into(),
        _ => format!("n={n}"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StickLine {
    pub omega: f64,
    pub weight: f64,
    /// Lower principal quantum number.
    pub n: u32,
    /// Upper principal quantum number.
    pub n_prime: u32,
    pub series: String,
}

/// Golden-rule lines with degenerate sublevels merged per `(n, n')`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StickSpectrum {
    pub lines: Vec<StickLine>,
    /// Partition function, relative to the ground-state Boltzmann factor:
    /// `sum_i exp(-beta (E_i - E_min))`.
    pub partition: f64,
}

const STICK_DROP: f64 = 1e-14;

/// Absorption sticks `mu_out(l,u) mu_in(u,l) (p_l - p_u)` at
/// `omega = E_u - E_l` for every pair of states with `E_u > E_l`.
pub fn golden_rule_spectrum(mu_out: &OperatorMatrix, mu_in: &OperatorMatrix, beta: f64) -> Result<StickSpectrum> {
    if !(beta > 0.0) {
        return Err(Error::invalid(format!("beta must be positive, got {beta}")));
    }
    if mu_out.dimension() != mu_in.dimension() {
        return Err(Error::invalid("dipole matrices have different dimensions"));
    }
    let states = mu_in.basis.states();
    let energies: Vec<f64> = states.iter().map(|s| eigenenergy(s.n)).collect::<Result<_>>()?;
    let e_min = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let boltz: Vec<f64> = energies.iter().map(|e| (-beta * (e - e_min)).exp()).collect();
    let z: f64 = boltz.iter().sum();

    let n_max = mu_in.basis.n_max() as usize;
    let mut sums = vec![vec![0.0; n_max + 1]; n_max + 1];
    for (l, sl) in states.iter().enumerate() {
        for (u, su) in states.iter().enumerate() {
            if su.n <= sl.n {
                continue;
            }
            let w = mu_out.entries[(l, u)] * mu_in.entries[(u, l)] * (boltz[l] - boltz[u]) / z;
            sums[sl.n as usize][su.n as usize] += w;
        }
    }
    let mut lines = Vec::new();
    for n in 1..=n_max {
        for np in (n + 1)..=n_max {
            let w = sums[n][np];
            if w.abs() > STICK_DROP {
                lines.push(StickLine {
                    omega: rydberg_frequency(n as u32, np as u32)?,
                    weight: w,
                    n: n as u32,
                    n_prime: np as u32,
                    series: series_label(n as u32),
                });
            }
        }
    }
    Ok(StickSpectrum { lines, partition: z })
}

impl StickSpectrum {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "omega,weight,n,n_prime,series")?;
        for l in &self.lines {
            writeln!(out, "{:.17e},{:.17e},{},{},{}", l.omega, l.weight, l.n, l.n_prime, l.series)?;
        }
        Ok(())
    }
}

/// Replaces every auxiliary operator `rho` by `mu rho - rho mu`.
pub fn apply_dipole_commutator(state: &HierarchyState, mu: &OperatorMatrix) -> Result<HierarchyState> {
    let d = mu.dimension();
    if state.dimension() != d {
        return Err(Error::invalid(format!(
            "dipole is {d}x{d}, state matrices are {0}x{0}",
            state.dimension()
        )));
    }
    let sparse = SparseReal::from_dense(&mu.entries);
    let matrices = state
        .matrices
        .iter()
        .map(|rho| {
            let mut out = DMatrix::zeros(d, d);
            sparse.bracket_add(rho.as_slice(), C64::new(1.0, 0.0), -1.0, out.as_mut_slice());
            out
        })
        .collect();
    Ok(HierarchyState { space: Arc::clone(&state.space), matrices, time: state.time })
}

/// `C(t) = Tr{mu_out G(t) mu_in^x rho_eq}` sampled at `t = j dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseTrace {
    pub dt: f64,
    pub values: Vec<C64>,
    /// `(alpha', alpha)`: detected and excited dipole components.
    pub component: (Axis, Axis),
    /// Largest `|Tr rho_0(t)|` seen while propagating; the perturbed
    /// zeroth operator starts traceless.
    pub trace_drift: f64,
}

impl ResponseTrace {
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.values.len()).map(move |j| j as f64 * self.dt)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,re,im")?;
        for (t, v) in self.times().zip(&self.values) {
            writeln!(out, "{:.17e},{:.17e},{:.17e}", t, v.re, v.im)?;
        }
        Ok(())
    }
}

fn trace_product(mu: &DMatrix<f64>, rho: &DMatrix<C64>) -> C64 {
    let d = mu.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..d {
        for j in 0..d {
            let m = mu[(i, j)];
            if m != 0.0 {
                acc += rho[(j, i)] * m;
            }
        }
    }
    acc
}

/// Perturbs the equilibrium hierarchy with `mu_in^x`, propagates
/// `config.n_steps` RK4 steps and records `Tr{mu_out rho_0(t)}` at every
/// step, `n_steps + 1` samples including `t = 0`.
pub fn compute_response(
    eq_state: &HierarchyState,
    model: &ModelContext,
    mu_in: &OperatorMatrix,
    mu_out: &OperatorMatrix,
    config: &PropagatorConfig,
) -> Result<ResponseTrace> {
    config.validate()?;
    let component = match (mu_out.label, mu_in.label) {
        (crate::basis::OperatorLabel::Dipole(a), crate::basis::OperatorLabel::Dipole(b)) => (a, b),
        _ => (Axis::Z, Axis::Z),
    };
    let mut state = apply_dipole_commutator(eq_state, mu_in)?;
    state.time = 0.0;
    let mut values = Vec::with_capacity(config.n_steps + 1);
    values.push(trace_product(&mu_out.entries, state.rho()));
    let mut trace_drift = state.rho().trace().norm();
    let mut integrator = Integrator::new(model, config.dt);
    for _ in 0..config.n_steps {
        integrator.step(&mut state, config.dt)?;
        values.push(trace_product(&mu_out.entries, state.rho()));
        trace_drift = trace_drift.max(state.rho().trace().norm());
    }
    Ok(ResponseTrace { dt: config.dt, values, component, trace_drift })
}

/// Absorption intensity on a uniform grid `omega_j = j * grid_spacing`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub frequencies: Vec<f64>,
    pub intensities: Vec<f64>,
    /// Spacing of the output grid.
    pub grid_spacing: f64,
    /// Unpadded resolution `2 pi / T` of the underlying trace.
    pub bin_width: f64,
    /// Exponential window rate applied to the trace; adds this much to
    /// every Lorentzian half-width.
    pub apodization_rate: f64,
    pub padding: usize,
}

pub const DEFAULT_PADDING: usize = 4;

/// Window rate `5 / (n_steps dt)`, i.e. time constant one fifth of the
/// trace length.
pub fn default_apodization_rate(n_steps: usize, dt: f64) -> f64 {
    5.0 / (n_steps as f64 * dt)
}

/// Unnormalized `X_j = sum_n x_n exp(+2 pi i j n / L)`.
pub fn dft_positive_exponent(x: &[C64]) -> Vec<C64> {
    let mut buf = x.to_vec();
    let mut planner = FftPlanner::new();
    planner.plan_fft_inverse(buf.len()).process(&mut buf);
    buf
}

/// `I(omega) = Im[i * int_0^T dt e^{i omega t} e^{-a t} C(t)]` on the
/// non-negative frequency grid, zero-padded by [`DEFAULT_PADDING`].
pub fn spectrum_from_response(trace: &ResponseTrace, apodization_rate: f64) -> Spectrum {
    spectrum_from_response_padded(trace, apodization_rate, DEFAULT_PADDING)
}

pub fn spectrum_from_response_padded(trace: &ResponseTrace, apodization_rate: f64, padding: usize) -> Spectrum {
    let intervals = trace.values.len().saturating_sub(1).max(1);
    let padding = padding.max(1);
    let len = padding * intervals;
    let dt = trace.dt;
    let mut x = vec![C64::new(0.0, 0.0); len];
    for (j, (slot, v)) in x.iter_mut().zip(&trace.values).enumerate() {
        let t = j as f64 * dt;
        let w = if j == 0 { 0.5 } else { 1.0 };
        *slot = v * (w * (-apodization_rate * t).exp());
    }
    let transformed = dft_positive_exponent(&x);
    let grid_spacing = 2.0 * std::f64::consts::PI / (len as f64 * dt);
    let half = len / 2;
    let frequencies = (0..=half).map(|j| j as f64 * grid_spacing).collect();
    // Im(i z) = Re(z)
    let intensities = transformed[..=half].iter().map(|z| z.re * dt).collect();
    Spectrum {
        frequencies,
        intensities,
        grid_spacing,
        bin_width: 2.0 * std::f64::consts::PI / (intervals as f64 * dt),
        apodization_rate,
        padding,
    }
}

/// Sum of unit-area Lorentzians of half-width `width` at each stick,
/// weighted by the stick weight and multiplied by `scale`.
pub fn convolve_sticks(sticks: &StickSpectrum, width: f64, grid: &[f64], scale: f64) -> Result<Spectrum> {
    if !(width > 0.0) {
        return Err(Error::invalid(format!("Lorentzian width must be positive, got {width}")));
    }
    let intensities = grid
        .iter()
        .map(|&w| {
            scale
                * sticks
                    .lines
                    .iter()
                    .map(|l| l.weight * width / (std::f64::consts::PI * ((w - l.omega).powi(2) + width * width)))
                    .sum::<f64>()
        })
        .collect();
    let spacing = if grid.len() > 1 { grid[1] - grid[0] } else { 0.0 };
    Ok(Spectrum {
        frequencies: grid.to_vec(),
        intensities,
        grid_spacing: spacing,
        bin_width: spacing,
        apodization_rate: 0.0,
        padding: 1,
    })
}

impl Spectrum {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "omega,intensity")?;
        for (w, i) in self.frequencies.iter().zip(&self.intensities) {
            writeln!(out, "{:.17e},{:.17e}", w, i)?;
        }
        Ok(())
    }

    pub fn max_intensity(&self) -> f64 {
        self.intensities.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Copy scaled so that the maximum intensity is 1.
    pub fn normalized(&self) -> Spectrum {
        let m = self.max_intensity();
        let mut s = self.clone();
        if m > 0.0 {
            s.intensities.iter_mut().for_each(|v| *v /= m);
        }
        s
    }

    /// Local maxima above `fraction` of the global maximum, as
    /// `(omega, intensity)`.
    pub fn peaks(&self, fraction: f64) -> Vec<(f64, f64)> {
        let floor = fraction * self.max_intensity();
        let y = &self.intensities;
        (1..y.len().saturating_sub(1))
            .filter(|&j| y[j] > y[j - 1] && y[j] >= y[j + 1] && y[j] > floor)
            .map(|j| (self.frequencies[j], y[j]))
            .collect()
    }

    /// [`Spectrum::peaks`] with each position and height refined by the
    /// parabola through the maximum and its two neighbours.
    pub fn refined_peaks(&self, fraction: f64) -> Vec<(f64, f64)> {
        let floor = fraction * self.max_intensity();
        let y = &self.intensities;
        (1..y.len().saturating_sub(1))
            .filter(|&j| y[j] > y[j - 1] && y[j] >= y[j + 1] && y[j] > floor)
            .map(|j| {
                let (a, b, c) = (y[j - 1], y[j], y[j + 1]);
                let curvature = a - 2.0 * b + c;
                let offset = if curvature < 0.0 { 0.5 * (a - c) / curvature } else { 0.0 };
                let h = self.frequencies[j + 1] - self.frequencies[j];
                (self.frequencies[j] + offset * h, b - 0.25 * (a - c) * offset)
            })
            .collect()
    }

    /// Largest sample within `[lo, hi]`, as `(omega, intensity)`.
    pub fn max_in(&self, lo: f64, hi: f64) -> Option<(f64, f64)> {
        self.frequencies
            .iter()
            .zip(&self.intensities)
            .filter(|(w, _)| **w >= lo && **w <= hi)
            .map(|(w, i)| (*w, *i))
            .max_by(|a, b| a.1.total_cmp(&b.1))
    }

    /// Half-width at half-maximum of the peak at the largest sample in
    /// `[lo, hi]`, with linear interpolation at the crossings.
    pub fn half_width(&self, lo: f64, hi: f64) -> Option<f64> {
        let j = self
            .frequencies
            .iter()
            .enumerate()
            .filter(|(_, w)| **w >= lo && **w <= hi)
            .max_by(|a, b| self.intensities[a.0].total_cmp(&self.intensities[b.0]))?
            .0;
        let y = &self.intensities;
        let half = 0.5 * y[j];
        let cross = |range: &mut dyn Iterator<Item = usize>, step: isize| -> Option<f64> {
            for k in range {
                let prev = (k as isize - step) as usize;
                if y[k] <= half {
                    let (w0, w1) = (self.frequencies[prev], self.frequencies[k]);
                    let f = (y[prev] - half) / (y[prev] - y[k]);
                    return Some(w0 + f * (w1 - w0));
                }
            }
            None
        };
        let right = cross(&mut ((j + 1)..y.len()), 1)?;
        let left = cross(&mut (0..j).rev(), -1)?;
        Some(0.5 * (right - left))
    }

    /// Trapezoid integral of the intensity over `[lo, hi]`.
    pub fn integrate(&self, lo: f64, hi: f64) -> f64 {
        let w = &self.frequencies;
        let y = &self.intensities;
        (1..w.len())
            .filter(|&j| w[j - 1] >= lo && w[j] <= hi)
            .map(|j| 0.5 * (y[j] + y[j - 1]) * (w[j] - w[j - 1]))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{dipole_operators, BasisSet, RadialMode};

    #[test]
    fn rydberg_examples() {
        assert_eq!(rydberg_frequency(1, 2).unwrap(), 0.375);
        assert!((rydberg_frequency(2, 3).unwrap() - 0.06944).abs() < 5e-6);
        assert!((rydberg_frequency(4, 5).unwrap() - 0.01125).abs() < 1e-15);
        assert!(rydberg_frequency(2, 2).is_err());
        assert!(rydberg_frequency(0, 2).is_err());
    }

    #[test]
    fn golden_rule_two_level() {
        let basis = Arc::new(BasisSet::enumerate(2).unwrap());
        let mu = dipole_operators(&basis, RadialMode::Unit, 1.0).unwrap();
        let s = golden_rule_spectrum(&mu[2], &mu[2], 1.0).unwrap();
        assert_eq!(s.lines.len(), 1);
        assert_eq!(s.lines[0].omega, 0.375);
        assert_eq!(s.lines[0].series, "Lyman");
        // |<1s|cos theta|2p_z>|^2 = 1/3 radial overlap^2
        let r = crate::basis::radial_integral(1, 0, 2, 1, 0).unwrap();
        let z = 1.0 + 4.0 * (-0.375f64).exp();
        let expect = r * r / 3.0 * (1.0 - (-0.375f64).exp()) / z;
        assert!((s.lines[0].weight - expect).abs() < 1e-12);
    }

    #[test]
    fn golden_rule_cold_limit_keeps_only_lyman() {
        let basis = Arc::new(BasisSet::enumerate(4).unwrap());
        let mu = dipole_operators(&basis, RadialMode::Unit, 1.0).unwrap();
        let s = golden_rule_spectrum(&mu[2], &mu[2], 1e4).unwrap();
        assert!(!s.lines.is_empty());
        assert!(s.lines.iter().all(|l| l.n == 1));
    }

    #[test]
    fn commutator_with_identity_vanishes() {
        use crate::hierarchy::{HierarchyIndexSpace, Truncation};
        let basis = Arc::new(BasisSet::enumerate(2).unwrap());
        let id = OperatorMatrix::new(crate::basis::OperatorLabel::Dipole(Axis::Z), Arc::clone(&basis), DMatrix::identity(5, 5)).unwrap();
        let space = Arc::new(HierarchyIndexSpace::enumerate([1, 1, 1], 1, Truncation::Global, 100).unwrap());
        let mut s = HierarchyState::zeros(space, 5);
        for (k, m) in s.matrices.iter_mut().enumerate() {
            *m = DMatrix::from_fn(5, 5, |i, j| C64::new((i + k) as f64, j as f64));
        }
        assert_eq!(apply_dipole_commutator(&s, &id).unwrap().max_norm(), 0.0);

        let mu = dipole_operators(&basis, RadialMode::Unit, 1.0).unwrap();
        let mut diag = HierarchyState::zeros(Arc::clone(&s.space), 5);
        for i in 0..5 {
            diag.matrices[0][(i, i)] = C64::new(0.1 * (i + 1) as f64, 0.0);
        }
        let out = apply_dipole_commutator(&diag, &mu[2]).unwrap();
        assert!(out.rho().trace().norm() < 1e-15);
        for i in 0..5 {
            assert_eq!(out.rho()[(i, i)], C64::new(0.0, 0.0));
        }
        let wrong = HierarchyState::zeros(Arc::clone(&s.space), 4);
        assert!(apply_dipole_commutator(&wrong, &mu[2]).is_err());
    }

    fn synthetic(omega0: f64, kappa: f64, dt: f64, n: usize) -> ResponseTrace {
        let values = (0..=n)
            .map(|j| {
                let t = j as f64 * dt;
                C64::from_polar((-kappa * t).exp(), -omega0 * t)
            })
            .collect();
        ResponseTrace { dt, values, component: (Axis::Z, Axis::Z), trace_drift: 0.0 }
    }

    #[test]
    fn zero_trace_gives_zero_spectrum() {
        let t = ResponseTrace { dt: 0.1, values: vec![C64::new(0.0, 0.0); 101], component: (Axis::Z, Axis::Z), trace_drift: 0.0 };
        let s = spectrum_from_response(&t, 0.01);
        assert!(s.intensities.iter().all(|&v| v == 0.0));
        assert_eq!(s.frequencies.len(), 4 * 100 / 2 + 1);
    }

    #[test]
    fn damped_exponential_gives_lorentzian() {
        let (omega0, kappa, dt, n) = (0.375, 0.005, 0.1, 3000);
        let trace = synthetic(omega0, kappa, dt, n);
        let apod = default_apodization_rate(n, dt);
        let s = spectrum_from_response(&trace, apod);
        assert!((s.grid_spacing - 2.0 * std::f64::consts::PI / (4.0 * 300.0)).abs() < 1e-15);
        assert!((s.bin_width - 2.0 * std::f64::consts::PI / 300.0).abs() < 1e-15);
        let (peak, height) = s.max_in(0.0, 1.0).unwrap();
        assert!((peak - omega0).abs() <= s.grid_spacing, "{peak}");
        let g = kappa + apod;
        assert!((height - 1.0 / g).abs() / (1.0 / g) < 0.02, "{height} vs {}", 1.0 / g);
        let hw = s.half_width(0.3, 0.45).unwrap();
        assert!((hw - g).abs() / g < 0.05, "{hw} vs {g}");
    }

    #[test]
    fn refined_peak_lands_between_samples() {
        let t = synthetic(0.3771, 0.002, 0.1, 3000);
        let s = spectrum_from_response(&t, 0.0);
        let raw = s.peaks(0.5);
        let refined = s.refined_peaks(0.5);
        assert_eq!(raw.len(), 1);
        assert_eq!(refined.len(), 1);
        assert!((refined[0].0 - 0.3771).abs() < 0.1 * s.grid_spacing, "{refined:?}");
        assert!(refined[0].1 >= raw[0].1);
    }

    #[test]
    fn parseval() {
        let trace = synthetic(0.4, 0.01, 0.1, 511);
        let x: Vec<C64> = trace.values[..512].to_vec();
        let big = dft_positive_exponent(&x);
        let e_time: f64 = x.iter().map(|v| v.norm_sqr()).sum();
        let e_freq: f64 = big.iter().map(|v| v.norm_sqr()).sum::<f64>() / x.len() as f64;
        assert!((e_time - e_freq).abs() / e_time < 1e-8);
    }

    #[test]
    fn stick_convolution() {
        let grid: Vec<f64> = (0..=1000).map(|j| j as f64 * 0.001).collect();
        let empty = StickSpectrum { lines: vec![], partition: 1.0 };
        assert!(convolve_sticks(&empty, 0.01, &grid, 1.0).unwrap().intensities.iter().all(|&v| v == 0.0));
        let one = StickSpectrum {
            lines: vec![StickLine { omega: 0.375, weight: 1.0, n: 1, n_prime: 2, series: "Lyman".into() }],
            partition: 1.0,
        };
        let s = convolve_sticks(&one, 0.01, &grid, 1.0).unwrap();
        let at = s.intensities[375];
        assert!((at - 1.0 / (std::f64::consts::PI * 0.01)).abs() < 1e-9);
        let s15 = convolve_sticks(&one, 0.01, &grid, 15.0).unwrap();
        for (a, b) in s.intensities.iter().zip(&s15.intensities) {
            assert!((15.0 * a - b).abs() <= 1e-12 * b.abs());
        }
        assert!(convolve_sticks(&one, 0.0, &grid, 1.0).is_err());
    }

    #[test]
    fn csv_headers() {
        let one = StickSpectrum {
            lines: vec![StickLine { omega: 0.375, weight: 0.5, n: 1, n_prime: 2, series: "Lyman".into() }],
            partition: 1.0,
        };
        let mut buf = Vec::new();
        one.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("omega,weight,n,n_prime,series\n"));
        assert!(text.trim_end().ends_with(",1,2,Lyman"));
    }
}
