//! Drude baths: spectral density, Padé decomposition of the Bose function,
//! and the scalar coefficients of the hierarchy coupling operators.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::basis::Axis;
use crate::error::{Error, Result};

/// Per-axis Drude parameters and the common inverse temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BathSpec {
    pub eta: [f64; 3],
    pub gamma: [f64; 3],
    pub beta: f64,
}

impl BathSpec {
    pub fn new(eta: [f64; 3], gamma: [f64; 3], beta: f64) -> Result<Self> {
        for a in Axis::ALL {
            let i = a.index();
            if !(eta[i] >= 0.0 && eta[i].is_finite()) {
                return Err(Error::invalid(format!("eta_{a} must be finite and >= 0, got {}", eta[i])));
            }
            if !(gamma[i] > 0.0 && gamma[i].is_finite()) {
                return Err(Error::invalid(format!("gamma_{a} must be finite and > 0, got {}", gamma[i])));
            }
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::invalid(format!("beta must be finite and > 0, got {beta}")));
        }
        Ok(BathSpec { eta, gamma, beta })
    }

    pub fn isotropic(eta: f64, gamma: f64, beta: f64) -> Result<Self> {
        BathSpec::new([eta; 3], [gamma; 3], beta)
    }
}

/// Drude spectral density `(eta / pi) gamma^2 omega / (gamma^2 + omega^2)`.
pub fn drude_sdf(omega: f64, eta: f64, gamma: f64) -> f64 {
    eta / std::f64::consts::PI * gamma * gamma * omega / (gamma * gamma + omega * omega)
}

/// `[K-1/K]` Padé decomposition of the Bose function:
/// `1 / (1 - e^{-x}) ~ 1/x + 1/2 + sum_k 2 kappa_k x / (x^2 + xi_k^2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PadeScheme {
    pub order: usize,
    /// Dimensionless poles, ascending.
    pub xi: Vec<f64>,
    /// Dimensionless residue weights.
    pub kappa: Vec<f64>,
}

pub const MAX_PADE_ORDER: usize = 20;

fn positive_reciprocal_eigs(diag_off: &[f64]) -> Result<Vec<f64>> {
    let n = diag_off.len() + 1;
    let mut m = DMatrix::<f64>::zeros(n, n);
    for (i, &v) in diag_off.iter().enumerate() {
        m[(i, i + 1)] = v;
        m[(i + 1, i)] = v;
    }
    let eig = SymmetricEigen::try_new(m, 1e-15, 10_000).ok_or_else(|| Error::NumericalFailure {
        what: format!("tridiagonal eigenproblem of size {n} did not converge"),
        estimate: f64::NAN,
    })?;
    // eigenvalues come in +/- pairs (plus a zero for odd sizes)
    let scale = eig.eigenvalues.amax();
    let mut poles: Vec<f64> = eig
        .eigenvalues
        .iter()
        .filter(|&&e| e > 1e-10 * scale.max(1e-300))
        .map(|&e| 2.0 / e)
        .collect();
    poles.sort_by(f64::total_cmp);
    Ok(poles)
}

/// Poles and weights from the two symmetric tridiagonal eigenproblems of
/// the Padé spectrum decomposition for Bose statistics.
pub fn pade_decomposition(order: usize) -> Result<PadeScheme> {
    if order > MAX_PADE_ORDER {
        return Err(Error::invalid(format!("Padé order {order} exceeds {MAX_PADE_ORDER}")));
    }
    if order == 0 {
        return Ok(PadeScheme { order, xi: vec![], kappa: vec![] });
    }
    let b = |m: usize| (2 * m + 1) as f64;
    let big: Vec<f64> = (1..2 * order).map(|m| 1.0 / (b(m) * b(m + 1)).sqrt()).collect();
    let small: Vec<f64> = (1..2 * order - 1).map(|m| 1.0 / (b(m + 1) * b(m + 2)).sqrt()).collect();
    let xi = positive_reciprocal_eigs(&big)?;
    let zeta = if small.is_empty() { vec![] } else { positive_reciprocal_eigs(&small)? };
    if xi.len() != order || zeta.len() != order - 1 {
        return Err(Error::NumericalFailure {
            what: format!("Padé order {order}: found {} poles and {} zeros", xi.len(), zeta.len()),
            estimate: f64::NAN,
        });
    }
    let kappa = (0..order)
        .map(|j| {
            let x2 = xi[j] * xi[j];
            let num: f64 = zeta.iter().map(|z| z * z - x2).product();
            let den: f64 = xi.iter().enumerate().filter(|&(k, _)| k != j).map(|(_, x)| x * x - x2).product();
            0.5 * order as f64 * b(order + 1) * num / den
        })
        .collect();
    Ok(PadeScheme { order, xi, kappa })
}

impl PadeScheme {
    /// The approximant `f_K(x)`.
    pub fn bose(&self, x: f64) -> f64 {
        1.0 / x
            + 0.5
            + self
                .xi
                .iter()
                .zip(&self.kappa)
                .map(|(xi, k)| 2.0 * k * x / (x * x + xi * xi))
                .sum::<f64>()
    }

    /// Decay frequencies `nu_k = xi_k / beta`, `k = 1..K`.
    pub fn frequencies(&self, beta: f64) -> Vec<f64> {
        self.xi.iter().map(|xi| xi / beta).collect()
    }
}

/// Coefficients of `Theta_0 = c0_fluct V^x + c0_diss (H^x V)^o` and
/// `Theta_k = ck[k-1] V^x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaCoefficients {
    pub c0_fluct: f64,
    pub c0_diss: f64,
    pub ck: Vec<f64>,
}

pub fn theta_coefficients(bath: &BathSpec, scheme: &PadeScheme, axis: Axis) -> Result<ThetaCoefficients> {
    let eta = bath.eta[axis.index()];
    let gamma = bath.gamma[axis.index()];
    let beta = bath.beta;
    let g2 = gamma * gamma;
    let nu = scheme.frequencies(beta);
    for (k, n) in nu.iter().enumerate() {
        if (g2 - n * n).abs() < 1e-12 * g2 {
            return Err(Error::DegeneratePole { axis: axis.index(), k: k + 1, gamma_sq: g2, nu_sq: n * n });
        }
    }
    let sum: f64 = nu
        .iter()
        .zip(&scheme.kappa)
        .map(|(n, kap)| 2.0 * kap * g2 / (g2 - n * n))
        .sum();
    let ck = nu
        .iter()
        .zip(&scheme.kappa)
        .map(|(n, kap)| -(eta * g2 / beta) * 2.0 * kap * n / (g2 - n * n))
        .collect();
    Ok(ThetaCoefficients {
        c0_fluct: eta * gamma / beta * (1.0 + sum),
        c0_diss: -eta * gamma / 2.0,
        ck,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn bose_exact(x: f64) -> f64 {
        1.0 / (1.0 - (-x).exp())
    }

    #[test]
    fn sdf_values() {
        assert_eq!(drude_sdf(0.0, 0.3, 1.2), 0.0);
        let (eta, gamma) = (0.7, 1.3);
        assert_relative_eq!(drude_sdf(gamma, eta, gamma), eta * gamma / (2.0 * std::f64::consts::PI), max_relative = 1e-15);
        let w = 1e6;
        assert_relative_eq!(drude_sdf(w, eta, gamma), eta * gamma * gamma / (std::f64::consts::PI * w), max_relative = 1e-11);
        assert_eq!(drude_sdf(-0.4, eta, gamma), -drude_sdf(0.4, eta, gamma));
    }

    #[test]
    fn order_zero_and_one() {
        let s0 = pade_decomposition(0).unwrap();
        assert!(s0.xi.is_empty() && s0.kappa.is_empty());
        let s1 = pade_decomposition(1).unwrap();
        // the 2x2 problem has eigenvalues +-1/sqrt(15)
        assert_relative_eq!(s1.xi[0], 2.0 * 15.0f64.sqrt(), max_relative = 1e-13);
        assert_relative_eq!(s1.kappa[0], 2.5, max_relative = 1e-13);
        assert!(pade_decomposition(21).is_err());
    }

    #[test]
    fn order_one_beats_one_matsubara_term() {
        let s1 = pade_decomposition(1).unwrap();
        let w = 2.0 * std::f64::consts::PI;
        for i in 1..=600 {
            let x = 0.01 * i as f64;
            let pade = (s1.bose(x) - bose_exact(x)).abs();
            let mats = (1.0 / x + 0.5 + 2.0 * x / (x * x + w * w) - bose_exact(x)).abs();
            assert!(pade < mats, "x={x}: {pade} vs {mats}");
        }
    }

    #[test]
    fn order_five_accuracy_and_structure() {
        let s = pade_decomposition(5).unwrap();
        let rel = (s.bose(1.0) - bose_exact(1.0)).abs() / bose_exact(1.0);
        assert!(rel < 1e-10, "{rel}");
        for k in 1..=20 {
            let s = pade_decomposition(k).unwrap();
            assert!(s.xi.windows(2).all(|w| w[0] < w[1]));
            assert!(s.xi.iter().all(|&x| x > 0.0));
            assert!(s.kappa.iter().all(|&k| k > 0.0), "order {k}: {:?}", s.kappa);
        }
    }

    #[test]
    fn theta_coefficients_closed_forms() {
        let s0 = pade_decomposition(0).unwrap();
        let bath = BathSpec::isotropic(1.0, 1.0, 1.0).unwrap();
        let t = theta_coefficients(&bath, &s0, Axis::Z).unwrap();
        assert_eq!(t.c0_fluct, 1.0);
        assert_eq!(t.c0_diss, -0.5);
        assert!(t.ck.is_empty());

        let zero = BathSpec::isotropic(0.0, 1.0, 1.0).unwrap();
        let t = theta_coefficients(&zero, &pade_decomposition(3).unwrap(), Axis::X).unwrap();
        assert_eq!(t.c0_fluct, 0.0);
        assert_eq!(t.c0_diss, 0.0);
        assert!(t.ck.iter().all(|&c| c == 0.0));

        // K = 1: xi = 2 sqrt(15), kappa = 5/2, hand-substituted
        let bath = BathSpec::isotropic(0.001, 1.0, 5.0).unwrap();
        let t = theta_coefficients(&bath, &pade_decomposition(1).unwrap(), Axis::Z).unwrap();
        let nu = 2.0 * 15.0f64.sqrt() / 5.0; // 60/25 = 2.4 = nu^2
        let fluct = 0.001 / 5.0 * (1.0 + 5.0 / (1.0 - 2.4));
        let ck = -(0.001 / 5.0) * 5.0 * nu / (1.0 - 2.4);
        assert_relative_eq!(t.c0_fluct, fluct, max_relative = 1e-12);
        assert_relative_eq!(t.c0_diss, -0.0005, max_relative = 1e-15);
        assert_relative_eq!(t.ck[0], ck, max_relative = 1e-12);
    }

    #[test]
    fn resonance_is_rejected() {
        let s1 = pade_decomposition(1).unwrap();
        let beta = 3.0;
        let gamma = s1.xi[0] / beta;
        let bath = BathSpec::isotropic(0.01, gamma, beta).unwrap();
        assert!(matches!(theta_coefficients(&bath, &s1, Axis::Y), Err(Error::DegeneratePole { .. })));
        let bath = BathSpec::isotropic(0.01, gamma * (1.0 + 1e-6), beta).unwrap();
        assert!(theta_coefficients(&bath, &s1, Axis::Y).is_ok());
    }

    #[test]
    fn spec_validation() {
        assert!(BathSpec::isotropic(-1.0, 1.0, 1.0).is_err());
        assert!(BathSpec::isotropic(0.0, 0.0, 1.0).is_err());
        assert!(BathSpec::isotropic(0.0, 1.0, 0.0).is_err());
        assert!(BathSpec::isotropic(0.0, 1.0, f64::NAN).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn frequencies_scale_inversely_with_beta(k in 1usize..8, beta in 0.05f64..50.0, f in 0.1f64..10.0) {
                let s = pade_decomposition(k).unwrap();
                for (a, b) in s.frequencies(beta).iter().zip(s.frequencies(beta * f)) {
                    prop_assert!((a / b - f).abs() <= 1e-13 * f);
                }
            }

            #[test]
            fn ck_sign_follows_denominator(k in 1usize..6, eta in 1e-4f64..1.0, gamma in 0.05f64..30.0, beta in 0.1f64..10.0) {
                let s = pade_decomposition(k).unwrap();
                let bath = BathSpec::isotropic(eta, gamma, beta).unwrap();
                if let Ok(t) = theta_coefficients(&bath, &s, Axis::Z) {
                    for (c, nu) in t.ck.iter().zip(s.frequencies(beta)) {
                        prop_assert!(c.is_finite());
                        if gamma > nu { prop_assert!(*c < 0.0); } else { prop_assert!(*c > 0.0); }
                    }
                    prop_assert!(t.c0_fluct.is_finite() && t.c0_diss.is_finite());
                }
            }
        }
    }
}
