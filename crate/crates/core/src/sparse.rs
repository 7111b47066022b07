//! Compressed-row real matrices applied to dense complex column-major
//! matrices. The coupling operators obey dipole selection rules and are
//! mostly zeros, so commutators are formed without dense products.

use nalgebra::DMatrix;

use crate::C64;

#[derive(Debug, Clone)]
pub(crate) struct SparseReal {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    // transpose, for right multiplication
    t_row_ptr: Vec<usize>,
    t_cols: Vec<usize>,
    t_vals: Vec<f64>,
}

fn compress(m: &DMatrix<f64>, transpose: bool) -> (Vec<usize>, Vec<usize>, Vec<f64>) {
    let d = m.nrows();
    let mut row_ptr = vec![0];
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    for r in 0..d {
        for c in 0..d {
            let v = if transpose { m[(c, r)] } else { m[(r, c)] };
            if v != 0.0 {
                cols.push(c);
                vals.push(v);
            }
        }
        row_ptr.push(cols.len());
    }
    (row_ptr, cols, vals)
}

impl SparseReal {
    pub(crate) fn from_dense(m: &DMatrix<f64>) -> Self {
        assert_eq!(m.nrows(), m.ncols());
        let (row_ptr, cols, vals) = compress(m, false);
        let (t_row_ptr, t_cols, t_vals) = compress(m, true);
        SparseReal { dim: m.nrows(), row_ptr, cols, vals, t_row_ptr, t_cols, t_vals }
    }

    /// `out += coeff * (A X + sign * X A)`; `sign = -1` gives the
    /// commutator, `+1` the anticommutator.
    pub(crate) fn bracket_add(&self, x: &[C64], coeff: C64, sign: f64, out: &mut [C64]) {
        let d = self.dim;
        debug_assert_eq!(x.len(), d * d);
        debug_assert_eq!(out.len(), d * d);
        let right = coeff * sign;
        for c in 0..d {
            let xc = &x[c * d..(c + 1) * d];
            let oc = &mut out[c * d..(c + 1) * d];
            // (A X)[:, c]
            for (r, o) in oc.iter_mut().enumerate() {
                let mut acc = C64::new(0.0, 0.0);
                for p in self.row_ptr[r]..self.row_ptr[r + 1] {
                    acc += xc[self.cols[p]] * self.vals[p];
                }
                *o += coeff * acc;
            }
            // (X A)[:, c] = sum_k A[k, c] X[:, k]
            for p in self.t_row_ptr[c]..self.t_row_ptr[c + 1] {
                let k = self.t_cols[p];
                let w = right * self.t_vals[p];
                let xk = &x[k * d..(k + 1) * d];
                for (o, v) in oc.iter_mut().zip(xk) {
                    *o += w * v;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_dense_brackets() {
        let d = 5;
        let a = DMatrix::from_fn(d, d, |r, c| if (r + 2 * c) % 3 == 0 { (r as f64) - 0.5 * c as f64 } else { 0.0 });
        let x = DMatrix::from_fn(d, d, |r, c| C64::new(r as f64 * 0.3 + c as f64, (r * c) as f64 - 1.0));
        let ac = a.map(|v| C64::new(v, 0.0));
        let s = SparseReal::from_dense(&a);
        let coeff = C64::new(0.7, -1.3);
        for sign in [-1.0, 1.0] {
            let mut out = DMatrix::from_element(d, d, C64::new(1.0, 1.0));
            s.bracket_add(x.as_slice(), coeff, sign, out.as_mut_slice());
            let expect = DMatrix::from_element(d, d, C64::new(1.0, 1.0))
                + (&ac * &x + (&x * &ac) * C64::new(sign, 0.0)) * coeff;
            assert!((out - expect).camax() < 1e-12);
        }
    }
}
