//! Dense complex kernels. Matrices live as nalgebra types everywhere;
//! the multiply and Hermitian eigensolve below run on zero-copy views
//! through a tuned backend, which is an order of magnitude faster than
//! the naive paths at the window dimensions the descent works at.

use crate::{CMatrix, C64};
use faer::linalg::matmul::matmul;
use faer::{Accum, MatMut, MatRef, Par, Side};

/// Dimension below which the view/dispatch overhead is not worth it.
const SMALL_DIM: usize = 32;

fn view(m: &CMatrix) -> MatRef<'_, faer::c64> {
    MatRef::from_column_major_slice(m.as_slice(), m.nrows(), m.ncols())
}

fn view_mut(m: &mut CMatrix) -> MatMut<'_, faer::c64> {
    let (r, c) = (m.nrows(), m.ncols());
    MatMut::from_column_major_slice_mut(m.as_mut_slice(), r, c)
}

/// `a * b`.
pub(crate) fn gemm(a: &CMatrix, b: &CMatrix) -> CMatrix {
    if a.nrows().min(b.ncols()).min(a.ncols()) < SMALL_DIM {
        return a * b;
    }
    let mut out = CMatrix::zeros(a.nrows(), b.ncols());
    matmul(view_mut(&mut out), Accum::Replace, view(a), view(b), faer::c64::ONE, Par::Seq);
    out
}

/// `a^H * b` without materializing the adjoint.
pub(crate) fn gemm_ah_b(a: &CMatrix, b: &CMatrix) -> CMatrix {
    if a.ncols().min(b.ncols()).min(a.nrows()) < SMALL_DIM {
        return a.adjoint() * b;
    }
    let mut out = CMatrix::zeros(a.ncols(), b.ncols());
    matmul(view_mut(&mut out), Accum::Replace, view(a).adjoint(), view(b), faer::c64::ONE, Par::Seq);
    out
}

/// `a * b^H` without materializing the adjoint.
pub(crate) fn gemm_a_bh(a: &CMatrix, b: &CMatrix) -> CMatrix {
    if a.nrows().min(b.nrows()).min(a.ncols()) < SMALL_DIM {
        return a * b.adjoint();
    }
    let mut out = CMatrix::zeros(a.nrows(), b.nrows());
    matmul(view_mut(&mut out), Accum::Replace, view(a), view(b).adjoint(), faer::c64::ONE, Par::Seq);
    out
}

/// Hermitian eigensolve: eigenvalues ascending with matching eigenvector
/// columns. Only the Hermitian part of the input is read.
pub(crate) fn eigh(h: &CMatrix) -> Option<(Vec<f64>, CMatrix)> {
    let n = h.nrows();
    let dec = view(h).self_adjoint_eigen(Side::Lower).ok()?;
    let vals: Vec<f64> = (0..n).map(|i| dec.S()[i].re).collect();
    let mut vecs = CMatrix::zeros(n, n);
    let u = dec.U();
    for j in 0..n {
        for i in 0..n {
            vecs[(i, j)] = C64::new(u[(i, j)].re, u[(i, j)].im);
        }
    }
    Some((vals, vecs))
}
