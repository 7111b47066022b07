//! Dense hierarchy generator assembled from Kronecker products, used as an
//! oracle for the sparse right-hand side. Vectorization is column-major:
//! `vec(A X B) = (B^T kron A) vec(X)`.

#![allow(dead_code)]

use std::collections::HashMap;

use aoheom_core::{BathSpec, PadeScheme, C64};
use nalgebra::{DMatrix, DVector};

pub struct DenseHierarchy {
    pub generator: DMatrix<C64>,
    /// Flat counts per block, axis-major with `K_a + 1` slots per axis.
    pub indices: Vec<Vec<u32>>,
    pub dimension: usize,
}

fn cplx(m: &DMatrix<f64>) -> DMatrix<C64> {
    m.map(|v| C64::new(v, 0.0))
}

fn commutator(a: &DMatrix<f64>) -> DMatrix<C64> {
    let d = a.nrows();
    let id = DMatrix::<f64>::identity(d, d);
    cplx(&(id.kronecker(a) - a.transpose().kronecker(&id)))
}

fn anticommutator(a: &DMatrix<f64>) -> DMatrix<C64> {
    let d = a.nrows();
    let id = DMatrix::<f64>::identity(d, d);
    cplx(&(id.kronecker(a) + a.transpose().kronecker(&id)))
}

fn all_indices(modes: usize, depth: u32) -> Vec<Vec<u32>> {
    let mut out = vec![vec![]];
    for _ in 0..modes {
        let mut next = Vec::new();
        for prefix in &out {
            let used: u32 = prefix.iter().sum();
            for c in 0..=(depth - used) {
                let mut v = prefix.clone();
                v.push(c);
                next.push(v);
            }
        }
        out = next;
    }
    out
}

/// `h` must be diagonal; `v[a]` are the coupling operators.
pub fn build(
    h: &DMatrix<f64>,
    v: [&DMatrix<f64>; 3],
    bath: &BathSpec,
    schemes: &[PadeScheme; 3],
    depth: u32,
    terminator: bool,
) -> DenseHierarchy {
    let d = h.nrows();
    let dd = d * d;
    let i = C64::new(0.0, 1.0);

    // (axis, k, nu, Theta superoperator)
    let mut modes: Vec<(usize, usize, f64, DMatrix<C64>)> = Vec::new();
    for a in 0..3 {
        let (eta, gamma, beta) = (bath.eta[a], bath.gamma[a], bath.beta);
        let scheme = &schemes[a];
        let nus: Vec<f64> = scheme.xi.iter().map(|x| x / beta).collect();
        let mut fluct = 1.0;
        for (kappa, nu) in scheme.kappa.iter().zip(&nus) {
            fluct += 2.0 * kappa * gamma * gamma / (gamma * gamma - nu * nu);
        }
        let c0_fluct = eta * gamma / beta * fluct;
        let c0_diss = -eta * gamma / 2.0;
        let w = h * v[a] - v[a] * h;
        let theta0 = commutator(v[a]) * C64::new(c0_fluct, 0.0) + anticommutator(&w) * C64::new(c0_diss, 0.0);
        modes.push((a, 0, gamma, theta0));
        for (k, (kappa, nu)) in scheme.kappa.iter().zip(&nus).enumerate() {
            let ck = -(eta * gamma * gamma / beta) * 2.0 * kappa * nu / (gamma * gamma - nu * nu);
            modes.push((a, k + 1, *nu, commutator(v[a]) * C64::new(ck, 0.0)));
        }
    }
    let m = modes.len();
    let indices = all_indices(m, depth);
    let pos: HashMap<Vec<u32>, usize> = indices.iter().enumerate().map(|(p, c)| (c.clone(), p)).collect();
    let n = indices.len();
    let mut gen = DMatrix::<C64>::zeros(n * dd, n * dd);
    let lh = commutator(h);
    let lv: Vec<DMatrix<C64>> = (0..3).map(|a| commutator(v[a])).collect();
    let damping = |c: &[u32]| -> f64 { c.iter().zip(&modes).map(|(&c, md)| c as f64 * md.2).sum() };
    let add = |gen: &mut DMatrix<C64>, row: usize, col: usize, block: &DMatrix<C64>| {
        let mut view = gen.view_mut((row * dd, col * dd), (dd, dd));
        view += block;
    };

    for (p, c) in indices.iter().enumerate() {
        let diag = &lh * (-i) - DMatrix::<C64>::identity(dd, dd) * C64::new(damping(c), 0.0);
        add(&mut gen, p, p, &diag);
        for s in 0..m {
            if c[s] > 0 {
                let mut lower = c.clone();
                lower[s] -= 1;
                let block = &modes[s].3 * (-i * c[s] as f64);
                add(&mut gen, p, pos[&lower], &block);
            }
            let mut upper = c.clone();
            upper[s] += 1;
            let axis = modes[s].0;
            let up_block = &lv[axis] * (-i);
            match pos.get(&upper) {
                Some(&q) => add(&mut gen, p, q, &up_block),
                None if terminator => {
                    // rho_upper ~ -(i / Gamma_upper) sum_j upper_j Theta_j rho_{upper - e_j}
                    let g = damping(&upper);
                    for j in 0..m {
                        if upper[j] == 0 {
                            continue;
                        }
                        let mut src = upper.clone();
                        src[j] -= 1;
                        let est = &modes[j].3 * (-i * upper[j] as f64 / g);
                        add(&mut gen, p, pos[&src], &(&up_block * est));
                    }
                }
                None => {}
            }
        }
    }
    DenseHierarchy { generator: gen, indices, dimension: d }
}

impl DenseHierarchy {
    /// Flattens `matrices[position_of(counts)]` in this oracle's block order.
    pub fn flatten(&self, matrices: &[DMatrix<C64>], position_of: impl Fn(&[u32]) -> usize) -> DVector<C64> {
        let dd = self.dimension * self.dimension;
        let mut out = DVector::zeros(self.indices.len() * dd);
        for (p, c) in self.indices.iter().enumerate() {
            out.rows_mut(p * dd, dd).copy_from_slice(matrices[position_of(c)].as_slice());
        }
        out
    }
}

pub fn rel_linf(a: &DVector<C64>, b: &DVector<C64>) -> f64 {
    let scale = b.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max) / scale
}
