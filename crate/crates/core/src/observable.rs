//! Observables on a lattice window: a dense matrix on a small support,
//! plus an optional low-rank global tail.
//!
//! The dense part is `A ⊗ 1` for a matrix `A` on the listed support sites.
//! The tail is a sum `Σ c_i |k_i⟩⟨b_i|` of rank-one operators on the full
//! Hilbert space. These arise from state-preserving projections of local
//! operators (the projector onto a ground state is rank one, so the
//! correction is rank two) and from spectral transport generators. Keeping
//! them factored instead of densified is what keeps 10-to-16-site windows
//! inside time and memory budgets: every algebra operation below closes on
//! this representation using only matrix-vector work on the full space.
//!
//! Index convention: a support is a sorted list of site indices; the first
//! (smallest) site is the most significant digit of the row/column index.
//! The same convention with all sites present indexes the full space.

use crate::error::{CoreError, Result};
use crate::lattice::{Lattice, Region};
use crate::{C64, CMatrix, CVector};
use num_complex::Complex64;
use rand::Rng;
use std::sync::Arc;

/// Largest dense matrix dimension an operation may materialize.
pub const MAX_LOCAL_DIM: usize = 4096;

/// Hard cap on the number of tail terms after compression.
pub const MAX_TAIL_RANK: usize = 160;

/// Tail count beyond which sums trigger automatic recompression.
const TAIL_AUTOCOMPRESS: usize = 64;

/// Relative singular-value cutoff for tail recompression.
const TAIL_COMPRESS_TOL: f64 = 1e-13;

/// One rank-one global term `coeff * |ket⟩⟨bra|`.
#[derive(Clone, Debug)]
pub struct TailTerm {
    pub coeff: C64,
    pub ket: CVector,
    pub bra: CVector,
}

/// An operator on the lattice window.
#[derive(Clone, Debug)]
pub struct Observable {
    lattice: Arc<Lattice>,
    support: Vec<u32>,
    local: Option<CMatrix>,
    tail: Vec<TailTerm>,
}

fn c(re: f64, im: f64) -> C64 {
    Complex64::new(re, im)
}

/// Mixed-radix digit weights: position 0 is the most significant digit.
fn weights(len: usize, d: usize) -> Vec<usize> {
    let mut w = vec![1usize; len];
    for k in (0..len.saturating_sub(1)).rev() {
        w[k] = w[k + 1] * d;
    }
    w
}

/// For each index of the small space, its offset in the big space when the
/// small digits sit at `positions` (indices into a `big_len`-digit word).
fn digit_offsets(small_len: usize, positions: &[usize], big_weights: &[usize], d: usize) -> Vec<usize> {
    let dim_s = d.pow(small_len as u32);
    let mut off = vec![0usize; dim_s];
    for (i, slot) in off.iter_mut().enumerate() {
        let mut rem = i;
        let mut o = 0usize;
        for k in (0..small_len).rev() {
            o += (rem % d) * big_weights[positions[k]];
            rem /= d;
        }
        *slot = o;
    }
    off
}

/// Iterate base offsets contributed by free digit positions.
fn for_each_base(free_positions: &[usize], big_weights: &[usize], d: usize, mut f: impl FnMut(usize)) {
    let m = free_positions.len();
    let count = d.pow(m as u32);
    let mut digits = vec![0usize; m];
    let mut base = 0usize;
    for _ in 0..count {
        f(base);
        for k in (0..m).rev() {
            digits[k] += 1;
            base += big_weights[free_positions[k]];
            if digits[k] < d {
                break;
            }
            base -= d * big_weights[free_positions[k]];
            digits[k] = 0;
        }
    }
}

/// Embed a matrix on `from` into the larger support `to` (tensoring with
/// identity on the extra sites). `from` must be a subset of `to`.
pub(crate) fn embed_matrix(a: &CMatrix, from: &[u32], to: &[u32], d: usize) -> CMatrix {
    let s = from.len();
    let t = to.len();
    debug_assert!(from.iter().all(|site| to.binary_search(site).is_ok()));
    let dim_s = d.pow(s as u32);
    let dim_t = d.pow(t as u32);
    let pos: Vec<usize> = from.iter().map(|site| to.binary_search(site).unwrap()).collect();
    let w_t = weights(t, d);
    let off = digit_offsets(s, &pos, &w_t, d);
    let rest: Vec<usize> = (0..t).filter(|p| !pos.contains(p)).collect();
    let mut out = CMatrix::zeros(dim_t, dim_t);
    for_each_base(&rest, &w_t, d, |base| {
        for i in 0..dim_s {
            for j in 0..dim_s {
                let v = a[(i, j)];
                if v != C64::ZERO {
                    out[(base + off[i], base + off[j])] += v;
                }
            }
        }
    });
    out
}

/// `embed(a) * v` on the full window without materializing the embedded
/// matrix: the local block contracts each column of `v` in place, one
/// mixed-radix base offset at a time. `from` holds sorted site indices.
pub(crate) fn embed_mul_dense(a: &CMatrix, from: &[u32], num_sites: usize, d: usize, v: &CMatrix) -> CMatrix {
    let s = from.len();
    let dim_s = d.pow(s as u32);
    let w = weights(num_sites, d);
    let pos: Vec<usize> = from.iter().map(|&site| site as usize).collect();
    let off = digit_offsets(s, &pos, &w, d);
    let rest: Vec<usize> = (0..num_sites).filter(|p| !pos.contains(p)).collect();
    let mut nz: Vec<(usize, usize, C64)> = Vec::new();
    for i in 0..dim_s {
        for j in 0..dim_s {
            let val = a[(i, j)];
            if val != C64::ZERO {
                nz.push((off[i], off[j], val));
            }
        }
    }
    let mut out = CMatrix::zeros(v.nrows(), v.ncols());
    for cidx in 0..v.ncols() {
        let vcol = v.column(cidx);
        let mut ocol = out.column_mut(cidx);
        for_each_base(&rest, &w, d, |base| {
            for &(oi, oj, val) in &nz {
                ocol[base + oi] += val * vcol[base + oj];
            }
        });
    }
    out
}

/// Normalized partial trace over the support positions where `keep` is
/// false. Returns the reduced matrix on the kept positions, in order.
pub(crate) fn partial_trace_normalized(a: &CMatrix, support_len: usize, keep: &[bool], d: usize) -> CMatrix {
    debug_assert_eq!(keep.len(), support_len);
    let w = weights(support_len, d);
    let keep_pos: Vec<usize> = (0..support_len).filter(|&p| keep[p]).collect();
    let tr_pos: Vec<usize> = (0..support_len).filter(|&p| !keep[p]).collect();
    let dim_k = d.pow(keep_pos.len() as u32);
    let off_k = digit_offsets(keep_pos.len(), &keep_pos, &w, d);
    let norm = 1.0 / d.pow(tr_pos.len() as u32) as f64;
    let mut out = CMatrix::zeros(dim_k, dim_k);
    for_each_base(&tr_pos, &w, d, |base| {
        for i in 0..dim_k {
            for j in 0..dim_k {
                out[(i, j)] += a[(base + off_k[i], base + off_k[j])];
            }
        }
    });
    out * c(norm, 0.0)
}

impl Observable {
    pub fn zero(lattice: Arc<Lattice>) -> Self {
        Self { lattice, support: Vec::new(), local: None, tail: Vec::new() }
    }

    /// Scalar multiple of the identity (empty support, 1x1 block).
    pub fn scalar(lattice: Arc<Lattice>, value: C64) -> Self {
        let m = CMatrix::from_element(1, 1, value);
        Self { lattice, support: Vec::new(), local: Some(m), tail: Vec::new() }
    }

    /// Dense matrix on the given (sorted, distinct) support sites.
    pub fn from_local(lattice: Arc<Lattice>, support: Vec<u32>, local: CMatrix) -> Result<Self> {
        if support.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CoreError::Config("support must be sorted and distinct".into()));
        }
        if support.iter().any(|&s| (s as usize) >= lattice.num_sites()) {
            return Err(CoreError::Config("support site outside lattice".into()));
        }
        let dim = lattice.site_dim().pow(support.len() as u32);
        if dim > MAX_LOCAL_DIM {
            return Err(CoreError::SupportTooLarge(format!(
                "local dimension {dim} exceeds cap {MAX_LOCAL_DIM}"
            )));
        }
        if local.nrows() != dim || local.ncols() != dim {
            return Err(CoreError::Config(format!(
                "matrix is {}x{}, support requires {dim}x{dim}",
                local.nrows(),
                local.ncols()
            )));
        }
        Ok(Self { lattice, support, local: Some(local), tail: Vec::new() })
    }

    /// Pure global tail.
    pub fn from_tail(lattice: Arc<Lattice>, tail: Vec<TailTerm>) -> Result<Self> {
        let dim = lattice.hilbert_dim_checked()?;
        for t in &tail {
            if t.ket.len() != dim || t.bra.len() != dim {
                return Err(CoreError::Config("tail vector dimension mismatch".into()));
            }
        }
        Ok(Self { lattice, support: Vec::new(), local: None, tail })
    }

    /// Product of single-site matrices, one per listed site.
    pub fn kron_sites(lattice: Arc<Lattice>, factors: &[(u32, CMatrix)]) -> Result<Self> {
        let d = lattice.site_dim();
        let mut pairs: Vec<(u32, &CMatrix)> = factors.iter().map(|(s, m)| (*s, m)).collect();
        pairs.sort_by_key(|(s, _)| *s);
        for (s, m) in &pairs {
            if m.nrows() != d || m.ncols() != d {
                return Err(CoreError::Config("single-site factor dimension mismatch".into()));
            }
            if (*s as usize) >= lattice.num_sites() {
                return Err(CoreError::Config("site outside lattice".into()));
            }
        }
        if pairs.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(CoreError::Config("repeated site in product".into()));
        }
        let mut acc = CMatrix::identity(1, 1);
        let mut support = Vec::with_capacity(pairs.len());
        for (s, m) in pairs {
            acc = acc.kronecker(m);
            support.push(s);
        }
        Self::from_local(lattice, support, acc)
    }

    pub fn one_site(lattice: Arc<Lattice>, site: u32, m: CMatrix) -> Result<Self> {
        Self::from_local(lattice, vec![site], m)
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    pub fn support(&self) -> &[u32] {
        &self.support
    }

    pub fn local(&self) -> Option<&CMatrix> {
        self.local.as_ref()
    }

    pub fn tail(&self) -> &[TailTerm] {
        &self.tail
    }

    pub fn has_tail(&self) -> bool {
        !self.tail.is_empty()
    }

    fn site_dim(&self) -> usize {
        self.lattice.site_dim()
    }

    /// Apply a dense matrix living on `support` to a full-space vector.
    pub(crate) fn apply_local_matrix(
        lattice: &Lattice,
        a: &CMatrix,
        support: &[u32],
        v: &CVector,
        out: &mut CVector,
    ) {
        let d = lattice.site_dim();
        let n = lattice.num_sites();
        let s = support.len();
        let dim_s = d.pow(s as u32);
        let w_full = weights(n, d);
        let pos: Vec<usize> = support.iter().map(|&site| site as usize).collect();
        let off = digit_offsets(s, &pos, &w_full, d);
        let rest: Vec<usize> = (0..n).filter(|p| !pos.contains(p)).collect();
        for_each_base(&rest, &w_full, d, |base| {
            for i in 0..dim_s {
                let mut acc = C64::ZERO;
                for j in 0..dim_s {
                    let aij = a[(i, j)];
                    if aij != C64::ZERO {
                        acc += aij * v[base + off[j]];
                    }
                }
                if acc != C64::ZERO {
                    out[base + off[i]] += acc;
                }
            }
        });
    }

    /// Apply to a full-space vector: `out = A v`.
    pub fn apply(&self, v: &CVector) -> Result<CVector> {
        let dim = self.lattice.hilbert_dim_checked()?;
        if v.len() != dim {
            return Err(CoreError::Config("vector dimension mismatch".into()));
        }
        let mut out = CVector::zeros(dim);
        if let Some(a) = &self.local {
            Self::apply_local_matrix(&self.lattice, a, &self.support, v, &mut out);
        }
        for t in &self.tail {
            let amp = t.coeff * t.bra.dotc(v);
            if amp != C64::ZERO {
                out.axpy(amp, &t.ket, C64::ONE);
            }
        }
        Ok(out)
    }

    /// Expectation `⟨ψ|A|ψ⟩` in a normalized full-space state.
    pub fn expect(&self, psi: &CVector) -> Result<C64> {
        Ok(psi.dotc(&self.apply(psi)?))
    }

    pub fn scale(&self, factor: C64) -> Self {
        let local = self.local.as_ref().map(|a| a * factor);
        let tail = self
            .tail
            .iter()
            .map(|t| TailTerm { coeff: t.coeff * factor, ket: t.ket.clone(), bra: t.bra.clone() })
            .collect();
        Self { lattice: self.lattice.clone(), support: self.support.clone(), local, tail }
    }

    pub fn neg(&self) -> Self {
        self.scale(c(-1.0, 0.0))
    }

    pub fn adjoint(&self) -> Self {
        let local = self.local.as_ref().map(|a| a.adjoint());
        let tail = self
            .tail
            .iter()
            .map(|t| TailTerm { coeff: t.coeff.conj(), ket: t.bra.clone(), bra: t.ket.clone() })
            .collect();
        Self { lattice: self.lattice.clone(), support: self.support.clone(), local, tail }
    }

    pub fn add(&self, other: &Observable) -> Result<Observable> {
        let mut out = match (&self.local, &other.local) {
            (None, None) => Observable {
                lattice: self.lattice.clone(),
                support: Vec::new(),
                local: None,
                tail: Vec::new(),
            },
            (Some(a), None) => Observable {
                lattice: self.lattice.clone(),
                support: self.support.clone(),
                local: Some(a.clone()),
                tail: Vec::new(),
            },
            (None, Some(b)) => Observable {
                lattice: self.lattice.clone(),
                support: other.support.clone(),
                local: Some(b.clone()),
                tail: Vec::new(),
            },
            (Some(a), Some(b)) => {
                if self.support == other.support {
                    Observable {
                        lattice: self.lattice.clone(),
                        support: self.support.clone(),
                        local: Some(a + b),
                        tail: Vec::new(),
                    }
                } else {
                    let union = union_support(&self.support, &other.support);
                    let dim = self.site_dim().pow(union.len() as u32);
                    if dim > MAX_LOCAL_DIM {
                        return Err(CoreError::SupportTooLarge(format!(
                            "sum support dimension {dim} exceeds cap"
                        )));
                    }
                    let ea = embed_matrix(a, &self.support, &union, self.site_dim());
                    let eb = embed_matrix(b, &other.support, &union, self.site_dim());
                    Observable {
                        lattice: self.lattice.clone(),
                        support: union,
                        local: Some(ea + eb),
                        tail: Vec::new(),
                    }
                }
            }
        };
        out.tail.extend(self.tail.iter().cloned());
        out.tail.extend(other.tail.iter().cloned());
        if out.tail.len() > TAIL_AUTOCOMPRESS {
            out.compress_tails(TAIL_COMPRESS_TOL)?;
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Observable) -> Result<Observable> {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &Observable) -> Result<Observable> {
        let d = self.site_dim();
        let mut local = None;
        let mut support = Vec::new();
        if let (Some(a), Some(b)) = (&self.local, &other.local) {
            let union = union_support(&self.support, &other.support);
            let dim = d.pow(union.len() as u32);
            if dim > MAX_LOCAL_DIM {
                return Err(CoreError::SupportTooLarge(format!(
                    "product support dimension {dim} exceeds cap"
                )));
            }
            let ea = embed_matrix(a, &self.support, &union, d);
            let eb = embed_matrix(b, &other.support, &union, d);
            local = Some(ea * eb);
            support = union;
        }
        let mut tail: Vec<TailTerm> = Vec::new();
        if !self.tail.is_empty() || !other.tail.is_empty() {
            let dim = self.lattice.hilbert_dim_checked()?;
            // local * tail
            if let Some(a) = &self.local {
                for t in &other.tail {
                    let mut ket = CVector::zeros(dim);
                    Self::apply_local_matrix(&self.lattice, a, &self.support, &t.ket, &mut ket);
                    tail.push(TailTerm { coeff: t.coeff, ket, bra: t.bra.clone() });
                }
            }
            // tail * local: ⟨bra| B has bra' = B† bra
            if let Some(b) = &other.local {
                let b_adj = b.adjoint();
                for t in &self.tail {
                    let mut bra = CVector::zeros(dim);
                    Self::apply_local_matrix(&self.lattice, &b_adj, &other.support, &t.bra, &mut bra);
                    tail.push(TailTerm { coeff: t.coeff, ket: t.ket.clone(), bra });
                }
            }
            // tail * tail
            for ta in &self.tail {
                for tb in &other.tail {
                    let overlap = ta.bra.dotc(&tb.ket);
                    let coeff = ta.coeff * tb.coeff * overlap;
                    if coeff != C64::ZERO {
                        tail.push(TailTerm { coeff, ket: ta.ket.clone(), bra: tb.bra.clone() });
                    }
                }
            }
        }
        let mut out = Observable { lattice: self.lattice.clone(), support, local, tail };
        if out.tail.len() > TAIL_AUTOCOMPRESS {
            out.compress_tails(TAIL_COMPRESS_TOL)?;
        }
        Ok(out)
    }

    pub fn commutator(&self, other: &Observable) -> Result<Observable> {
        self.mul(other)?.sub(&other.mul(self)?)
    }

    /// Normalized trace.
    pub fn normalized_trace(&self) -> C64 {
        let mut tr = C64::ZERO;
        if let Some(a) = &self.local {
            let dim_s = a.nrows() as f64;
            tr += a.trace() / c(dim_s, 0.0);
        }
        if !self.tail.is_empty() {
            let dim = self.lattice.hilbert_dim() as f64;
            for t in &self.tail {
                tr += t.coeff * t.bra.dotc(&t.ket) / c(dim, 0.0);
            }
        }
        tr
    }

    /// Normalized Hilbert-Schmidt inner product `tr̄(A† B)`.
    pub fn hs_inner(&self, other: &Observable) -> Result<C64> {
        let d = self.site_dim();
        let mut acc = C64::ZERO;
        if let (Some(a), Some(b)) = (&self.local, &other.local) {
            let union = union_support(&self.support, &other.support);
            let dim = d.pow(union.len() as u32);
            if dim > MAX_LOCAL_DIM {
                return Err(CoreError::SupportTooLarge("inner-product support exceeds cap".into()));
            }
            let ea = embed_matrix(a, &self.support, &union, d);
            let eb = embed_matrix(b, &other.support, &union, d);
            acc += (ea.adjoint() * eb).trace() / c(dim as f64, 0.0);
        }
        if !self.tail.is_empty() || !other.tail.is_empty() {
            let dim = self.lattice.hilbert_dim_checked()? as f64;
            // tr(A† Σ c|k⟩⟨b|) = Σ c ⟨b| A† |k⟩
            if self.local.is_some() {
                for t in &other.tail {
                    let ak = {
                        let mut out = CVector::zeros(dim as usize);
                        Self::apply_local_matrix(
                            &self.lattice,
                            &self.local.as_ref().unwrap().adjoint(),
                            &self.support,
                            &t.ket,
                            &mut out,
                        );
                        out
                    };
                    acc += t.coeff * t.bra.dotc(&ak) / c(dim, 0.0);
                }
            }
            // tr((c|k⟩⟨b|)† B) = conj(c) ⟨k| B |b⟩
            if other.local.is_some() {
                for t in &self.tail {
                    let bb = {
                        let mut out = CVector::zeros(dim as usize);
                        Self::apply_local_matrix(
                            &self.lattice,
                            other.local.as_ref().unwrap(),
                            &other.support,
                            &t.bra,
                            &mut out,
                        );
                        out
                    };
                    acc += t.coeff.conj() * t.ket.dotc(&bb) / c(dim, 0.0);
                }
            }
            for ta in &self.tail {
                for tb in &other.tail {
                    acc += ta.coeff.conj() * tb.coeff * ta.ket.dotc(&tb.ket) * tb.bra.dotc(&ta.bra)
                        / c(dim, 0.0);
                }
            }
        }
        Ok(acc)
    }

    /// Normalized Hilbert-Schmidt norm. Tail terms are orthogonalized
    /// first: cancellations between near-opposite rank-one terms must
    /// happen at the vector level, or the Gram sum's rounding noise puts
    /// a `sqrt(eps)` floor under the result.
    pub fn hs_norm(&self) -> f64 {
        if self.tail.len() > 1 {
            let mut c = self.clone();
            if c.compress_tails(1e-17).is_ok() {
                return c.hs_inner(&c).map(|v| v.re.max(0.0).sqrt()).unwrap_or(f64::NAN);
            }
        }
        self.hs_inner(self).map(|v| v.re.max(0.0).sqrt()).unwrap_or(f64::NAN)
    }

    /// Operator 2-norm. Exact dense eigensolve for small pure-local parts,
    /// power iteration on `A†A` otherwise (relative tolerance 1e-11).
    pub fn op_norm(&self) -> Result<f64> {
        if self.tail.is_empty() {
            let a = match &self.local {
                None => return Ok(0.0),
                Some(a) => a,
            };
            if a.nrows() <= 64 {
                let ata = a.adjoint() * a;
                let eig = ata.symmetric_eigen();
                return Ok(eig.eigenvalues.iter().fold(0.0f64, |m, &v| m.max(v.max(0.0))).sqrt());
            }
            return power_norm(a.nrows(), |v| a * v, |v| a.adjoint() * v);
        }
        let dim = self.lattice.hilbert_dim_checked()?;
        let adj = self.adjoint();
        power_norm(
            dim,
            |v| self.apply(v).expect("dimensions validated"),
            |v| adj.apply(v).expect("dimensions validated"),
        )
    }

    /// Deviation from skew-adjointness, in HS norm.
    pub fn skew_defect(&self) -> f64 {
        self.add(&self.adjoint()).map(|s| s.hs_norm()).unwrap_or(f64::NAN)
    }

    /// Conditional expectation onto the subalgebra of a region: normalized
    /// partial trace over everything outside it. Tail parts materialize on
    /// the region, so the region must fit the dense cap when tails exist.
    pub fn conditional_expectation(&self, x: &Region) -> Result<Observable> {
        let d = self.site_dim();
        let mut out = Observable::zero(self.lattice.clone());
        if let Some(a) = &self.local {
            let keep: Vec<bool> = self.support.iter().map(|s| x.contains(*s)).collect();
            let kept: Vec<u32> = self
                .support
                .iter()
                .zip(&keep)
                .filter_map(|(s, k)| k.then_some(*s))
                .collect();
            let reduced = partial_trace_normalized(a, self.support.len(), &keep, d);
            out.support = kept;
            out.local = Some(reduced);
        }
        if !self.tail.is_empty() {
            let dimx = d.pow(x.len() as u32);
            if dimx > MAX_LOCAL_DIM {
                return Err(CoreError::SupportTooLarge(
                    "conditional expectation of a tail onto a large region".into(),
                ));
            }
            let n = self.lattice.num_sites();
            let w_full = weights(n, d);
            let pos: Vec<usize> = x.sites().iter().map(|&s| s as usize).collect();
            let off = digit_offsets(x.len(), &pos, &w_full, d);
            let rest: Vec<usize> = (0..n).filter(|p| !pos.contains(p)).collect();
            let norm = 1.0 / d.pow(rest.len() as u32) as f64;
            let mut m = CMatrix::zeros(dimx, dimx);
            for t in &self.tail {
                for_each_base(&rest, &w_full, d, |base| {
                    for i in 0..dimx {
                        let ki = t.ket[base + off[i]];
                        if ki == C64::ZERO {
                            continue;
                        }
                        for j in 0..dimx {
                            m[(i, j)] += t.coeff * ki * t.bra[base + off[j]].conj();
                        }
                    }
                });
            }
            m *= c(norm, 0.0);
            let tail_part = Observable::from_local(self.lattice.clone(), x.sites().to_vec(), m)?;
            out = out.add(&tail_part)?;
        }
        Ok(out)
    }

    /// Merge tail terms into a minimal-rank representation, dropping
    /// singular values below `tol` times the largest.
    pub fn compress_tails(&mut self, tol: f64) -> Result<()> {
        let r = self.tail.len();
        if r <= 1 {
            return Ok(());
        }
        let dim = self.tail[0].ket.len();
        let mut kmat = CMatrix::zeros(dim, r);
        let mut bmat = CMatrix::zeros(dim, r);
        for (idx, t) in self.tail.iter().enumerate() {
            kmat.set_column(idx, &(&t.ket * t.coeff));
            bmat.set_column(idx, &t.bra);
        }
        let qr_k = kmat.qr();
        let qr_b = bmat.qr();
        let (qk, rk) = (qr_k.q(), qr_k.r());
        let (qb, rb) = (qr_b.q(), qr_b.r());
        let m = rk * rb.adjoint();
        let svd = m.svd(true, true);
        let u = svd.u.ok_or_else(|| CoreError::Solver("tail SVD failed".into()))?;
        let vt = svd.v_t.ok_or_else(|| CoreError::Solver("tail SVD failed".into()))?;
        let smax = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
        let mut new_tail = Vec::new();
        for (i, &s) in svd.singular_values.iter().enumerate() {
            if s > tol * smax && s > 1e-300 {
                let ket = &qk * u.column(i).into_owned();
                let bra = &qb * vt.row(i).adjoint();
                new_tail.push(TailTerm { coeff: c(s, 0.0), ket, bra });
            }
        }
        if new_tail.len() > MAX_TAIL_RANK {
            return Err(CoreError::SupportTooLarge(format!(
                "tail rank {} exceeds cap {MAX_TAIL_RANK}",
                new_tail.len()
            )));
        }
        self.tail = new_tail;
        Ok(())
    }

    /// Deterministic JSON form: sorted object keys, matrices as nested
    /// real/imaginary arrays, tail terms as coefficient/ket/bra triples.
    pub fn to_json_value(&self) -> serde_json::Value {
        use serde_json::{json, Map, Value};
        let mut obj = Map::new();
        obj.insert("support".into(), json!(self.support));
        if let Some(a) = &self.local {
            let re: Vec<Vec<f64>> =
                (0..a.nrows()).map(|i| (0..a.ncols()).map(|j| a[(i, j)].re).collect()).collect();
            let im: Vec<Vec<f64>> =
                (0..a.nrows()).map(|i| (0..a.ncols()).map(|j| a[(i, j)].im).collect()).collect();
            obj.insert("re".into(), json!(re));
            obj.insert("im".into(), json!(im));
        }
        if !self.tail.is_empty() {
            let tails: Vec<Value> = self
                .tail
                .iter()
                .map(|t| {
                    json!({
                        "coeff": [t.coeff.re, t.coeff.im],
                        "ket": {
                            "re": t.ket.iter().map(|z| z.re).collect::<Vec<_>>(),
                            "im": t.ket.iter().map(|z| z.im).collect::<Vec<_>>(),
                        },
                        "bra": {
                            "re": t.bra.iter().map(|z| z.re).collect::<Vec<_>>(),
                            "im": t.bra.iter().map(|z| z.im).collect::<Vec<_>>(),
                        },
                    })
                })
                .collect();
            obj.insert("tail".into(), json!(tails));
        }
        Value::Object(obj)
    }

    pub fn from_json_value(lattice: Arc<Lattice>, v: &serde_json::Value) -> Result<Self> {
        let bad = |m: &str| CoreError::Serialization(m.into());
        let obj = v.as_object().ok_or_else(|| bad("observable must be an object"))?;
        let support: Vec<u32> = obj
            .get("support")
            .and_then(|s| s.as_array())
            .ok_or_else(|| bad("missing support"))?
            .iter()
            .map(|x| x.as_u64().map(|u| u as u32).ok_or_else(|| bad("bad support site")))
            .collect::<Result<_>>()?;
        let mut out = Observable::zero(lattice.clone());
        if let (Some(re), Some(im)) = (obj.get("re"), obj.get("im")) {
            let re = parse_rows(re).ok_or_else(|| bad("bad re matrix"))?;
            let im = parse_rows(im).ok_or_else(|| bad("bad im matrix"))?;
            if re.len() != im.len() || re.iter().zip(&im).any(|(a, b)| a.len() != b.len()) {
                return Err(bad("re/im shape mismatch"));
            }
            let n = re.len();
            let m = CMatrix::from_fn(n, n, |i, j| c(re[i][j], im[i][j]));
            out = Observable::from_local(lattice.clone(), support, m)?;
        } else if !support.is_empty() {
            out.support = support;
        }
        if let Some(tails) = obj.get("tail").and_then(|t| t.as_array()) {
            let dim = lattice.hilbert_dim_checked()?;
            for t in tails {
                let coeff = t
                    .get("coeff")
                    .and_then(|x| x.as_array())
                    .filter(|a| a.len() == 2)
                    .and_then(|a| Some(c(a[0].as_f64()?, a[1].as_f64()?)))
                    .ok_or_else(|| bad("bad tail coeff"))?;
                let ket = parse_cvec(t.get("ket"), dim).ok_or_else(|| bad("bad tail ket"))?;
                let bra = parse_cvec(t.get("bra"), dim).ok_or_else(|| bad("bad tail bra"))?;
                out.tail.push(TailTerm { coeff, ket, bra });
            }
        }
        Ok(out)
    }

    /// Dense matrix on the full lattice space. Test and small-system path.
    pub fn densify(&self) -> Result<CMatrix> {
        let dim = self.lattice.hilbert_dim_checked()?;
        if dim > MAX_LOCAL_DIM {
            return Err(CoreError::SupportTooLarge(format!(
                "densify to dimension {dim} exceeds cap"
            )));
        }
        let all: Vec<u32> = self.lattice.all_sites();
        let mut out = match &self.local {
            Some(a) => embed_matrix(a, &self.support, &all, self.site_dim()),
            None => CMatrix::zeros(dim, dim),
        };
        for t in &self.tail {
            for i in 0..dim {
                let ki = t.ket[i];
                if ki == C64::ZERO {
                    continue;
                }
                for j in 0..dim {
                    out[(i, j)] += t.coeff * ki * t.bra[j].conj();
                }
            }
        }
        Ok(out)
    }
}

fn parse_rows(v: &serde_json::Value) -> Option<Vec<Vec<f64>>> {
    v.as_array()?
        .iter()
        .map(|row| row.as_array()?.iter().map(|x| x.as_f64()).collect())
        .collect()
}

fn parse_cvec(v: Option<&serde_json::Value>, dim: usize) -> Option<CVector> {
    let obj = v?.as_object()?;
    let re: Vec<f64> = obj.get("re")?.as_array()?.iter().map(|x| x.as_f64()).collect::<Option<_>>()?;
    let im: Vec<f64> = obj.get("im")?.as_array()?.iter().map(|x| x.as_f64()).collect::<Option<_>>()?;
    if re.len() != dim || im.len() != dim {
        return None;
    }
    Some(CVector::from_fn(dim, |i, _| c(re[i], im[i])))
}

fn union_support(a: &[u32], b: &[u32]) -> Vec<u32> {
    let mut out = a.to_vec();
    out.extend_from_slice(b);
    out.sort_unstable();
    out.dedup();
    out
}

/// Largest singular value by power iteration on `A†A` with a fixed
/// deterministic start vector.
fn power_norm(
    dim: usize,
    apply: impl Fn(&CVector) -> CVector,
    apply_adj: impl Fn(&CVector) -> CVector,
) -> Result<f64> {
    let mut v = CVector::from_fn(dim, |i, _| {
        c(1.0 + 0.37 * ((i + 1) as f64 * 0.7).sin(), 0.11 * ((i + 1) as f64 * 1.3).cos())
    });
    let nv = v.norm();
    if nv == 0.0 {
        return Ok(0.0);
    }
    v /= c(nv, 0.0);
    let mut sigma = 0.0f64;
    for _ in 0..500 {
        let w = apply(&v);
        let nw = w.norm();
        if nw == 0.0 {
            return Ok(0.0);
        }
        let u = apply_adj(&w);
        let nu = u.norm();
        if nu == 0.0 {
            return Ok(nw);
        }
        let new_sigma = (v.dotc(&u).re.max(0.0)).sqrt();
        v = u / c(nu, 0.0);
        if (new_sigma - sigma).abs() <= 1e-11 * new_sigma.max(1e-300) {
            return Ok(new_sigma);
        }
        sigma = new_sigma;
    }
    Ok(sigma)
}

/// Pauli matrices and friends for building models and tests.
pub mod mats {
    use super::{c, CMatrix};

    pub fn pauli_x() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)])
    }

    pub fn pauli_y() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)])
    }

    pub fn pauli_z() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)])
    }

    pub fn s_plus() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(0., 0.), c(0., 0.)])
    }

    pub fn s_minus() -> CMatrix {
        CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(0., 0.), c(1., 0.), c(0., 0.)])
    }

    /// Occupation relative to half filling: diag(1/2, -1/2) in the
    /// (up, down) basis, i.e. z/2.
    pub fn charge_qubit() -> CMatrix {
        pauli_z().scale(0.5)
    }
}

/// Random dense matrix helpers used by property tests and self tests.
pub mod random {
    use super::*;

    /// Gaussian complex matrix.
    pub fn gaussian_matrix<R: Rng>(rng: &mut R, dim: usize) -> CMatrix {
        use rand::distributions::Distribution;
        let normal = rand::distributions::Uniform::new(-1.0f64, 1.0);
        CMatrix::from_fn(dim, dim, |_, _| c(normal.sample(rng), normal.sample(rng)))
    }

    /// Random traceless skew-adjoint observable on the given support.
    pub fn skew_local<R: Rng>(rng: &mut R, lattice: &Arc<Lattice>, support: Vec<u32>) -> Result<Observable> {
        let dim = lattice.site_dim().pow(support.len() as u32);
        let g = gaussian_matrix(rng, dim);
        let mut skew = (&g - g.adjoint()) * c(0.5, 0.0);
        let tr = skew.trace() / c(dim as f64, 0.0);
        for i in 0..dim {
            skew[(i, i)] -= tr;
        }
        Observable::from_local(lattice.clone(), support, skew)
    }

    /// Random Hermitian observable on the given support.
    pub fn hermitian_local<R: Rng>(
        rng: &mut R,
        lattice: &Arc<Lattice>,
        support: Vec<u32>,
    ) -> Result<Observable> {
        let dim = lattice.site_dim().pow(support.len() as u32);
        let g = gaussian_matrix(rng, dim);
        let herm = (&g + g.adjoint()) * c(0.5, 0.0);
        Observable::from_local(lattice.clone(), support, herm)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Boundary;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn lat(n: usize) -> Arc<Lattice> {
        Lattice::chain_1d(n, Boundary::Open, 2, 0).unwrap()
    }

    #[test]
    fn embed_matches_kronecker() {
        let l = lat(3);
        let x = Observable::one_site(l.clone(), 1, mats::pauli_x()).unwrap();
        let dense = x.densify().unwrap();
        let id = CMatrix::identity(2, 2);
        let expect = id.kronecker(&mats::pauli_x()).kronecker(&id);
        assert!((dense - expect).norm() < 1e-14);
    }

    #[test]
    fn product_matches_dense_product() {
        let l = lat(4);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random::skew_local(&mut rng, &l, vec![0, 2]).unwrap();
        let b = random::hermitian_local(&mut rng, &l, vec![1, 2]).unwrap();
        let ab = a.mul(&b).unwrap();
        let dense = (a.densify().unwrap()) * (b.densify().unwrap());
        assert!((ab.densify().unwrap() - dense).norm() < 1e-12);
    }

    #[test]
    fn tail_product_matches_dense() {
        let l = lat(3);
        let dim = l.hilbert_dim_checked().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random::hermitian_local(&mut rng, &l, vec![0, 1]).unwrap();
        let ket = CVector::from_fn(dim, |i, _| c((i as f64 * 0.3).sin(), (i as f64 * 0.8).cos()));
        let bra = CVector::from_fn(dim, |i, _| c((i as f64 * 0.9).cos(), (i as f64 * 0.2).sin()));
        let t = Observable::from_tail(
            l.clone(),
            vec![TailTerm { coeff: c(0.7, 0.3), ket, bra }],
        )
        .unwrap();
        let sum = a.add(&t).unwrap();
        let prod = sum.mul(&sum).unwrap();
        let dense = {
            let m = sum.densify().unwrap();
            &m * &m
        };
        assert!((prod.densify().unwrap() - dense).norm() < 1e-10);
    }

    #[test]
    fn normalized_trace_and_inner() {
        let l = lat(3);
        let z = Observable::one_site(l.clone(), 0, mats::pauli_z()).unwrap();
        assert!(z.normalized_trace().norm() < 1e-15);
        // tr̄(Z† Z) = 1 for a single Pauli
        assert!((z.hs_inner(&z).unwrap().re - 1.0).abs() < 1e-14);
        let s = Observable::scalar(l.clone(), c(2.5, 0.0));
        assert!((s.normalized_trace().re - 2.5).abs() < 1e-15);
    }

    #[test]
    fn conditional_expectation_projects() {
        let l = lat(3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random::hermitian_local(&mut rng, &l, vec![0, 1]).unwrap();
        let x = Region::new(vec![0]);
        let e = a.conditional_expectation(&x).unwrap();
        // idempotent and trace preserving
        let ee = e.conditional_expectation(&x).unwrap();
        assert!((e.densify().unwrap() - ee.densify().unwrap()).norm() < 1e-13);
        assert!((a.normalized_trace() - e.normalized_trace()).norm() < 1e-14);
        // expectation onto the full region is the identity map
        let full = a.conditional_expectation(&l.full_region()).unwrap();
        assert!((full.densify().unwrap() - a.densify().unwrap()).norm() < 1e-13);
    }

    #[test]
    fn tail_conditional_expectation_matches_dense() {
        let l = lat(3);
        let dim = l.hilbert_dim_checked().unwrap();
        let ket = CVector::from_fn(dim, |i, _| c((i as f64 + 0.4).sin(), (2.0 * i as f64).cos()));
        let bra = CVector::from_fn(dim, |i, _| c((1.3 * i as f64).cos(), (0.5 * i as f64).sin()));
        let t = Observable::from_tail(l.clone(), vec![TailTerm { coeff: c(1.0, -0.5), ket, bra }])
            .unwrap();
        let x = Region::new(vec![0, 2]);
        let e = t.conditional_expectation(&x).unwrap();
        // dense reference: project then partial trace
        let dense = t.densify().unwrap();
        let all = l.all_sites();
        let keep: Vec<bool> = all.iter().map(|s| x.contains(*s)).collect();
        let reduced = partial_trace_normalized(&dense, all.len(), &keep, 2);
        let expect = embed_matrix(&reduced, x.sites(), &all, 2);
        assert!((e.densify().unwrap() - expect).norm() < 1e-12);
    }

    #[test]
    fn compression_preserves_action() {
        let l = lat(3);
        let dim = l.hilbert_dim_checked().unwrap();
        let mut terms = Vec::new();
        // many terms spanning a rank-2 space
        let u1 = CVector::from_fn(dim, |i, _| c((i as f64).sin(), 0.2));
        let u2 = CVector::from_fn(dim, |i, _| c(0.1, (i as f64).cos()));
        for k in 0..20 {
            let a = c(0.3 + 0.1 * k as f64, -0.2);
            let b = c(0.5, 0.07 * k as f64);
            terms.push(TailTerm { coeff: c(1.0, 0.0), ket: &u1 * a + &u2 * b, bra: u1.clone() });
        }
        let mut t = Observable::from_tail(l.clone(), terms).unwrap();
        let before = t.densify().unwrap();
        t.compress_tails(1e-13).unwrap();
        assert!(t.tail().len() <= 2);
        assert!((t.densify().unwrap() - &before).norm() < 1e-9 * before.norm().max(1.0));
    }

    #[test]
    fn op_norm_pauli_and_tail() {
        let l = lat(2);
        let z = Observable::one_site(l.clone(), 0, mats::pauli_z()).unwrap();
        assert!((z.op_norm().unwrap() - 1.0).abs() < 1e-9);
        let dim = l.hilbert_dim_checked().unwrap();
        let mut ket = CVector::zeros(dim);
        ket[0] = c(2.0, 0.0);
        let mut bra = CVector::zeros(dim);
        bra[1] = c(1.0, 0.0);
        let t = Observable::from_tail(l.clone(), vec![TailTerm { coeff: c(1.5, 0.0), ket, bra }])
            .unwrap();
        assert!((t.op_norm().unwrap() - 3.0).abs() < 1e-8);
    }

    #[test]
    fn symmetric_eigen_handles_hermitian_complex() {
        // sanity check on the dense eigensolver used throughout
        let m = CMatrix::from_row_slice(
            2,
            2,
            &[c(1.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(-1.0, 0.0)],
        );
        let eig = m.clone().symmetric_eigen();
        let mut vals: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let s2 = 2.0f64.sqrt();
        assert!((vals[0] + s2).abs() < 1e-12 && (vals[1] - s2).abs() < 1e-12);
        // eigenvectors reconstruct the matrix
        let recon = &eig.eigenvectors
            * CMatrix::from_diagonal(&eig.eigenvalues.map(|v| c(v, 0.0)))
            * eig.eigenvectors.adjoint();
        assert!((recon - m).norm() < 1e-12);
    }
}
