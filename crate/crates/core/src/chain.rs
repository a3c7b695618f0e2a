//! Graded chains over a lattice window and their Lie calculus.
//!
//! An `n`-chain assigns an observable to every strictly increasing
//! `n`-tuple of sites; a 0-chain is a [`Derivation`], a formal sum of
//! local terms acting by commutator. Chains carry:
//!
//! - the differential [`Chain::boundary`], which contracts the first
//!   index (summing it over the lattice);
//! - an associative graded product: entries multiply and index tuples
//!   shuffle with the sign of the interleaving permutation;
//! - the graded bracket `{f,g} = f·g - (-1)^{mn} g·f`, which reduces to
//!   a signed sum of entry commutators over disjoint tuple pairs, so
//!   locality of entries is preserved;
//! - the anchored homotopy [`Chain::anchored_raise`], wedging with the
//!   basis vector of the origin site. It satisfies `∂ε + ε∂ = 1`
//!   exactly, which is what the level-by-level solves rely on.
//!
//! Because the bracket is a commutator in an associative graded algebra,
//! graded antisymmetry, the Jacobi identity, and the Leibniz rule for
//! `∂` hold to machine precision, not merely up to discretization error.
//! The tests at the bottom pin all of these.

use crate::error::{CoreError, Result};
use crate::lattice::{Lattice, Region};
use crate::observable::Observable;
use crate::{C64, CVector};
use num_complex::Complex64;
use std::collections::BTreeMap;
use std::sync::Arc;

/// A formal sum of observables acting by commutator. Degree-0 element of
/// the chain calculus. Terms are kept as a list and never merged, so a
/// sum of small-support terms stays cheap to bracket against.
#[derive(Clone, Debug)]
pub struct Derivation {
    lattice: Arc<Lattice>,
    terms: Vec<Observable>,
}

impl Derivation {
    pub fn new(lattice: Arc<Lattice>, terms: Vec<Observable>) -> Self {
        Self { lattice, terms }
    }

    pub fn zero(lattice: Arc<Lattice>) -> Self {
        Self { lattice, terms: Vec::new() }
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    pub fn terms(&self) -> &[Observable] {
        &self.terms
    }

    pub fn push(&mut self, term: Observable) {
        self.terms.push(term);
    }

    pub fn add(&self, other: &Derivation) -> Derivation {
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Derivation { lattice: self.lattice.clone(), terms }
    }

    pub fn scale(&self, factor: C64) -> Derivation {
        Derivation {
            lattice: self.lattice.clone(),
            terms: self.terms.iter().map(|t| t.scale(factor)).collect(),
        }
    }

    pub fn neg(&self) -> Derivation {
        self.scale(Complex64::new(-1.0, 0.0))
    }

    /// Action on an observable: sum of commutators. Terms whose local
    /// parts cannot touch `a` are skipped.
    pub fn act(&self, a: &Observable) -> Result<Observable> {
        let mut out = Observable::zero(self.lattice.clone());
        for t in self.terms.iter().filter(|t| overlaps(t, a)) {
            out = out.add(&t.commutator(a)?)?;
        }
        Ok(out)
    }

    /// Apply `Σ [t, ·]` termwise to a full-space vector: `Σ t v` minus
    /// nothing; the derivation acts on vectors as the plain sum of terms.
    pub fn apply_sum(&self, v: &CVector) -> Result<CVector> {
        let dim = self.lattice.hilbert_dim_checked()?;
        let mut out = CVector::zeros(dim);
        for t in &self.terms {
            out += t.apply(v)?;
        }
        Ok(out)
    }

    /// Merge all terms into one observable. Guarded by the dense support
    /// cap; intended for small windows and tests.
    pub fn as_observable(&self) -> Result<Observable> {
        let mut out = Observable::zero(self.lattice.clone());
        for t in &self.terms {
            out = out.add(t)?;
        }
        Ok(out)
    }

    /// `ψ(F) - tr̄(F)`, evaluated termwise so supports never merge.
    pub fn state_value(&self, psi: &CVector) -> Result<C64> {
        let mut acc = C64::ZERO;
        for t in &self.terms {
            acc += t.expect(psi)? - t.normalized_trace();
        }
        Ok(acc)
    }

    /// Termwise normalized-trace sum.
    pub fn trace_value(&self) -> C64 {
        self.terms.iter().map(|t| t.normalized_trace()).sum()
    }

    /// Pairwise commutators with another derivation.
    pub fn bracket(&self, other: &Derivation) -> Result<Derivation> {
        let mut terms = Vec::new();
        for a in &self.terms {
            for b in other.terms.iter().filter(|b| overlaps(a, b)) {
                let c = a.commutator(b)?;
                if c.local().is_some() || c.has_tail() {
                    terms.push(c);
                }
            }
        }
        Ok(Derivation { lattice: self.lattice.clone(), terms })
    }

    /// Max termwise HS norm, a cheap size proxy.
    pub fn max_term_norm(&self) -> f64 {
        self.terms.iter().map(|t| t.hs_norm()).fold(0.0, f64::max)
    }
}

fn overlaps(a: &Observable, b: &Observable) -> bool {
    if a.has_tail() || b.has_tail() {
        return true;
    }
    if a.local().is_none() || b.local().is_none() {
        return false;
    }
    if a.support().is_empty() || b.support().is_empty() {
        // scalars commute with everything
        return false;
    }
    a.support().iter().any(|s| b.support().binary_search(s).is_ok())
}

/// An `n`-chain, `n >= 1`: observables indexed by strictly increasing
/// site tuples. Values at other tuples follow by antisymmetry.
#[derive(Clone, Debug)]
pub struct Chain {
    lattice: Arc<Lattice>,
    degree: usize,
    entries: BTreeMap<Vec<u32>, Observable>,
}

impl Chain {
    pub fn zero(lattice: Arc<Lattice>, degree: usize) -> Self {
        debug_assert!(degree >= 1);
        Self { lattice, degree, entries: BTreeMap::new() }
    }

    pub fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn entries(&self) -> impl Iterator<Item = (&Vec<u32>, &Observable)> {
        self.entries.iter()
    }

    pub fn num_entries(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, tuple: &[u32]) -> Option<&Observable> {
        self.entries.get(tuple)
    }

    /// Add `value` to the entry at a strictly increasing tuple.
    pub fn accumulate(&mut self, tuple: Vec<u32>, value: Observable) -> Result<()> {
        if tuple.len() != self.degree {
            return Err(CoreError::Config("tuple length must equal chain degree".into()));
        }
        if tuple.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CoreError::Config("tuple must be strictly increasing".into()));
        }
        match self.entries.remove(&tuple) {
            None => {
                self.entries.insert(tuple, value);
            }
            Some(old) => {
                self.entries.insert(tuple, old.add(&value)?);
            }
        }
        Ok(())
    }

    /// Add `sign * value` at an arbitrary distinct tuple, sorting it and
    /// picking up the permutation sign.
    pub fn accumulate_signed(&mut self, tuple: &[u32], value: Observable) -> Result<()> {
        let (sorted, sign) = sort_with_sign(tuple)
            .ok_or_else(|| CoreError::Config("tuple has repeated sites".into()))?;
        let v = if sign < 0 { value.neg() } else { value };
        self.accumulate(sorted, v)
    }

    pub fn add(&self, other: &Chain) -> Result<Chain> {
        if self.degree != other.degree {
            return Err(CoreError::Config("chain degree mismatch in add".into()));
        }
        let mut out = self.clone();
        for (t, v) in &other.entries {
            out.accumulate(t.clone(), v.clone())?;
        }
        Ok(out)
    }

    pub fn scale(&self, factor: C64) -> Chain {
        let entries = self.entries.iter().map(|(t, v)| (t.clone(), v.scale(factor))).collect();
        Chain { lattice: self.lattice.clone(), degree: self.degree, entries }
    }

    pub fn neg(&self) -> Chain {
        self.scale(Complex64::new(-1.0, 0.0))
    }

    pub fn sub(&self, other: &Chain) -> Result<Chain> {
        self.add(&other.neg())
    }

    /// Drop entries that are structurally zero or below `tol` in HS norm.
    pub fn prune(&mut self, tol: f64) {
        self.entries.retain(|_, v| (v.local().is_some() || v.has_tail()) && v.hs_norm() > tol);
    }

    /// Max entry HS norm.
    pub fn max_entry_norm(&self) -> f64 {
        self.entries.values().map(|v| v.hs_norm()).fold(0.0, f64::max)
    }

    /// Contract the first index against the all-ones vector. Degree drops
    /// by one; a 1-chain contracts to the derivation of its entries.
    pub fn boundary(&self) -> ChainElem {
        if self.degree == 1 {
            let terms = self.entries.values().cloned().collect();
            return ChainElem::Zero(Derivation::new(self.lattice.clone(), terms));
        }
        let mut out = Chain::zero(self.lattice.clone(), self.degree - 1);
        for (t, v) in &self.entries {
            // moving index alpha to the front costs (-1)^alpha
            for alpha in 0..t.len() {
                let mut rest: Vec<u32> = t.clone();
                rest.remove(alpha);
                let signed = if alpha % 2 == 1 { v.neg() } else { v.clone() };
                out.accumulate(rest, signed).expect("sub-tuple stays increasing");
            }
        }
        ChainElem::Pos(out)
    }

    /// Wedge with the origin site's basis vector: degree rises by one and
    /// `∂ε + ε∂ = 1` holds exactly.
    pub fn anchored_raise(&self) -> Result<Chain> {
        let o = self.lattice.origin_site();
        let mut out = Chain::zero(self.lattice.clone(), self.degree + 1);
        for (t, v) in &self.entries {
            if t.binary_search(&o).is_ok() {
                continue;
            }
            let pos = t.partition_point(|&s| s < o);
            let mut tuple = t.clone();
            tuple.insert(pos, o);
            let signed = if pos % 2 == 1 { v.neg() } else { v.clone() };
            out.accumulate(tuple, signed)?;
        }
        Ok(out)
    }

    /// Keep entries whose tuples lie entirely inside the region.
    pub fn restrict(&self, x: &Region) -> Chain {
        let entries = self
            .entries
            .iter()
            .filter(|(t, _)| t.iter().all(|s| x.contains(*s)))
            .map(|(t, v)| (t.clone(), v.clone()))
            .collect();
        Chain { lattice: self.lattice.clone(), degree: self.degree, entries }
    }

    /// `[∂, res_X] f = ∂(res_X f) - res_X(∂ f)` for degree >= 2. For
    /// degree 1 both sides agree termwise and the commutator vanishes.
    pub fn boundary_commutator(&self, x: &Region) -> Result<ChainElem> {
        if self.degree == 1 {
            return Ok(ChainElem::Zero(Derivation::zero(self.lattice.clone())));
        }
        let lhs = match self.restrict(x).boundary() {
            ChainElem::Pos(c) => c,
            ChainElem::Zero(d) => {
                return Ok(ChainElem::Zero(d));
            }
        };
        let rhs = match self.boundary() {
            ChainElem::Pos(c) => c.restrict(x),
            ChainElem::Zero(_) => unreachable!("degree >= 2"),
        };
        Ok(ChainElem::Pos(lhs.sub(&rhs)?))
    }

    /// Sum a 1-chain over its site index, as a term list.
    pub fn sum_first(&self) -> Result<Derivation> {
        if self.degree != 1 {
            return Err(CoreError::Config("sum_first requires a 1-chain".into()));
        }
        Ok(Derivation::new(self.lattice.clone(), self.entries.values().cloned().collect()))
    }

    /// Largest entry norm at each distance shell from a region. Distance
    /// of a tuple is the max over its sites of the site-to-region
    /// distance; norms are normalized HS norms.
    pub fn confinement_profile(&self, x: &Region) -> Vec<(i64, f64)> {
        let mut shells: BTreeMap<i64, f64> = BTreeMap::new();
        for (t, v) in &self.entries {
            let r = t
                .iter()
                .map(|&s| self.lattice.dist_to_region(s, x))
                .max()
                .unwrap_or(0);
            let n = v.hs_norm();
            let slot = shells.entry(r).or_insert(0.0);
            if n > *slot {
                *slot = n;
            }
        }
        shells.into_iter().collect()
    }
}

/// A chain of any degree. `Zero` holds degree 0, `Pos` degree >= 1.
#[derive(Clone, Debug)]
pub enum ChainElem {
    Zero(Derivation),
    Pos(Chain),
}

impl ChainElem {
    pub fn lattice(&self) -> &Arc<Lattice> {
        match self {
            ChainElem::Zero(d) => d.lattice(),
            ChainElem::Pos(c) => c.lattice(),
        }
    }

    pub fn degree(&self) -> usize {
        match self {
            ChainElem::Zero(_) => 0,
            ChainElem::Pos(c) => c.degree(),
        }
    }

    pub fn zero_of_degree(lattice: Arc<Lattice>, degree: usize) -> Self {
        if degree == 0 {
            ChainElem::Zero(Derivation::zero(lattice))
        } else {
            ChainElem::Pos(Chain::zero(lattice, degree))
        }
    }

    pub fn as_chain(&self) -> Result<&Chain> {
        match self {
            ChainElem::Pos(c) => Ok(c),
            ChainElem::Zero(_) => Err(CoreError::Config("expected a positive-degree chain".into())),
        }
    }

    pub fn as_derivation(&self) -> Result<&Derivation> {
        match self {
            ChainElem::Zero(d) => Ok(d),
            ChainElem::Pos(_) => Err(CoreError::Config("expected a degree-0 chain".into())),
        }
    }

    pub fn add(&self, other: &ChainElem) -> Result<ChainElem> {
        match (self, other) {
            (ChainElem::Zero(a), ChainElem::Zero(b)) => Ok(ChainElem::Zero(a.add(b))),
            (ChainElem::Pos(a), ChainElem::Pos(b)) => Ok(ChainElem::Pos(a.add(b)?)),
            _ => Err(CoreError::Config("chain degree mismatch in add".into())),
        }
    }

    pub fn scale(&self, factor: C64) -> ChainElem {
        match self {
            ChainElem::Zero(d) => ChainElem::Zero(d.scale(factor)),
            ChainElem::Pos(c) => ChainElem::Pos(c.scale(factor)),
        }
    }

    pub fn neg(&self) -> ChainElem {
        self.scale(Complex64::new(-1.0, 0.0))
    }

    pub fn sub(&self, other: &ChainElem) -> Result<ChainElem> {
        self.add(&other.neg())
    }

    /// Differential. Errors at degree 0.
    pub fn boundary(&self) -> Result<ChainElem> {
        match self {
            ChainElem::Zero(_) => Err(CoreError::Config("boundary of a degree-0 chain".into())),
            ChainElem::Pos(c) => Ok(c.boundary()),
        }
    }

    /// Anchored homotopy. At degree 0 all terms merge into a single entry
    /// at the origin, so this is guarded by the dense support cap; the
    /// locality-aware solves avoid this path for spread-out derivations.
    pub fn anchored_raise(&self) -> Result<ChainElem> {
        match self {
            ChainElem::Zero(d) => {
                let o = d.lattice().origin_site();
                let mut c = Chain::zero(d.lattice().clone(), 1);
                c.accumulate(vec![o], d.as_observable()?)?;
                Ok(ChainElem::Pos(c))
            }
            ChainElem::Pos(c) => Ok(ChainElem::Pos(c.anchored_raise()?)),
        }
    }

    /// Graded bracket `{f,g} = f·g - (-1)^{mn} g·f`. Computed as a signed
    /// sum of entry commutators over disjoint tuple pairs, which equals
    /// the commutator of shuffle products identically.
    pub fn bracket(&self, other: &ChainElem) -> Result<ChainElem> {
        let lattice = self.lattice().clone();
        match (self, other) {
            (ChainElem::Zero(a), ChainElem::Zero(b)) => Ok(ChainElem::Zero(a.bracket(b)?)),
            (ChainElem::Zero(a), ChainElem::Pos(g)) => {
                let mut out = Chain::zero(lattice, g.degree());
                for (t, v) in g.entries() {
                    let acted = a.act(v)?;
                    if acted.local().is_some() || acted.has_tail() {
                        out.accumulate(t.clone(), acted)?;
                    }
                }
                Ok(ChainElem::Pos(out))
            }
            (ChainElem::Pos(_), ChainElem::Zero(b)) => {
                // {f, b} = -(-1)^{m·0} {b, f} = -{b, f}
                let flipped = ChainElem::Zero(b.clone()).bracket(self)?;
                Ok(flipped.neg())
            }
            (ChainElem::Pos(f), ChainElem::Pos(g)) => {
                let mut out = Chain::zero(lattice, f.degree() + g.degree());
                for (s, a) in f.entries() {
                    for (t, b) in g.entries() {
                        if let Some((merged, sign)) = merge_disjoint(s, t) {
                            if !overlaps(a, b) {
                                continue;
                            }
                            let comm = a.commutator(b)?;
                            if comm.local().is_none() && !comm.has_tail() {
                                continue;
                            }
                            let signed = if sign < 0 { comm.neg() } else { comm };
                            out.accumulate(merged, signed)?;
                        }
                    }
                }
                Ok(ChainElem::Pos(out))
            }
        }
    }

    /// Graded product: entries multiply, tuples shuffle with sign. The
    /// degree-0 side multiplies entrywise (its terms merge), so this is
    /// mainly for positive degrees and axiom tests.
    pub fn product(&self, other: &ChainElem) -> Result<ChainElem> {
        let lattice = self.lattice().clone();
        match (self, other) {
            (ChainElem::Zero(a), ChainElem::Zero(b)) => {
                let oa = a.as_observable()?;
                let ob = b.as_observable()?;
                Ok(ChainElem::Zero(Derivation::new(lattice, vec![oa.mul(&ob)?])))
            }
            (ChainElem::Zero(a), ChainElem::Pos(g)) => {
                let oa = a.as_observable()?;
                let mut out = Chain::zero(lattice, g.degree());
                for (t, v) in g.entries() {
                    out.accumulate(t.clone(), oa.mul(v)?)?;
                }
                Ok(ChainElem::Pos(out))
            }
            (ChainElem::Pos(f), ChainElem::Zero(b)) => {
                let ob = b.as_observable()?;
                let mut out = Chain::zero(lattice, f.degree());
                for (t, v) in f.entries() {
                    out.accumulate(t.clone(), v.mul(&ob)?)?;
                }
                Ok(ChainElem::Pos(out))
            }
            (ChainElem::Pos(f), ChainElem::Pos(g)) => {
                let mut out = Chain::zero(lattice, f.degree() + g.degree());
                for (s, a) in f.entries() {
                    for (t, b) in g.entries() {
                        if let Some((merged, sign)) = merge_disjoint(s, t) {
                            let prod = a.mul(b)?;
                            if prod.local().is_none() && !prod.has_tail() {
                                continue;
                            }
                            let signed = if sign < 0 { prod.neg() } else { prod };
                            out.accumulate(merged, signed)?;
                        }
                    }
                }
                Ok(ChainElem::Pos(out))
            }
        }
    }

    /// Max entry or term HS norm.
    pub fn max_norm(&self) -> f64 {
        match self {
            ChainElem::Zero(d) => d.max_term_norm(),
            ChainElem::Pos(c) => c.max_entry_norm(),
        }
    }

    pub fn prune(&mut self, tol: f64) {
        if let ChainElem::Pos(c) = self {
            c.prune(tol);
        }
    }
}

impl ChainElem {
    /// Deterministic JSON: degree plus either a tuple-keyed entry map
    /// ("j1,j2" keys) or, at degree 0, a term list.
    pub fn to_json_value(&self) -> serde_json::Value {
        use serde_json::{json, Map, Value};
        let mut obj = Map::new();
        match self {
            ChainElem::Zero(d) => {
                obj.insert("degree".into(), json!(0));
                let terms: Vec<Value> = d.terms().iter().map(|t| t.to_json_value()).collect();
                obj.insert("terms".into(), Value::Array(terms));
            }
            ChainElem::Pos(c) => {
                obj.insert("degree".into(), json!(c.degree()));
                let mut entries = Map::new();
                for (tuple, v) in c.entries() {
                    let key = tuple
                        .iter()
                        .map(|s| s.to_string())
                        .collect::<Vec<_>>()
                        .join(",");
                    entries.insert(key, v.to_json_value());
                }
                obj.insert("entries".into(), Value::Object(entries));
            }
        }
        Value::Object(obj)
    }

    pub fn from_json_value(lattice: Arc<Lattice>, v: &serde_json::Value) -> Result<Self> {
        let bad = |m: &str| CoreError::Serialization(m.into());
        let obj = v.as_object().ok_or_else(|| bad("chain must be an object"))?;
        let degree = obj
            .get("degree")
            .and_then(|d| d.as_u64())
            .ok_or_else(|| bad("missing degree"))? as usize;
        if degree == 0 {
            let terms = obj
                .get("terms")
                .and_then(|t| t.as_array())
                .ok_or_else(|| bad("degree-0 chain needs terms"))?;
            let parsed: Result<Vec<Observable>> = terms
                .iter()
                .map(|t| Observable::from_json_value(lattice.clone(), t))
                .collect();
            return Ok(ChainElem::Zero(Derivation::new(lattice, parsed?)));
        }
        let entries = obj
            .get("entries")
            .and_then(|e| e.as_object())
            .ok_or_else(|| bad("chain needs entries"))?;
        let mut chain = Chain::zero(lattice.clone(), degree);
        for (key, val) in entries {
            let tuple: Vec<u32> = key
                .split(',')
                .map(|s| s.trim().parse::<u32>().map_err(|_| bad("bad tuple key")))
                .collect::<Result<_>>()?;
            let obs = Observable::from_json_value(lattice.clone(), val)?;
            chain.accumulate(tuple, obs)?;
        }
        Ok(ChainElem::Pos(chain))
    }
}

/// Hyperplane pairing of a 2-chain: sum the site index of
/// `[∂, res_H] h`, where `H` is the half space of the given axis.
pub fn pair_hyperplane(h: &Chain, axis: usize) -> Result<Derivation> {
    if h.degree() != 2 {
        return Err(CoreError::Config("hyperplane pairing requires a 2-chain".into()));
    }
    let half = h.lattice().half_space(axis);
    match h.boundary_commutator(&half)? {
        ChainElem::Pos(c) => c.sum_first(),
        ChainElem::Zero(d) => Ok(d),
    }
}

/// Point pairing of a `(d+1)`-chain on a rank-`d` lattice: apply the
/// half-space cut commutator for each axis in order, then sum the
/// remaining index.
pub fn pair_point(h: &Chain) -> Result<Derivation> {
    let rank = h.lattice().rank();
    if h.degree() != rank + 1 {
        return Err(CoreError::Config(format!(
            "point pairing requires degree {} on a rank-{rank} lattice",
            rank + 1
        )));
    }
    let mut cur = h.clone();
    for axis in 0..rank {
        let half = cur.lattice().half_space(axis);
        cur = match cur.boundary_commutator(&half)? {
            ChainElem::Pos(c) => c,
            ChainElem::Zero(d) => return Ok(d),
        };
    }
    cur.sum_first()
}

/// Sort a tuple, returning the sorted copy and the permutation sign;
/// `None` if any site repeats.
pub fn sort_with_sign(tuple: &[u32]) -> Option<(Vec<u32>, i32)> {
    let mut v: Vec<u32> = tuple.to_vec();
    let mut sign = 1i32;
    // insertion sort, counting swaps
    for i in 1..v.len() {
        let mut j = i;
        while j > 0 && v[j - 1] > v[j] {
            v.swap(j - 1, j);
            sign = -sign;
            j -= 1;
        }
    }
    if v.windows(2).any(|w| w[0] == w[1]) {
        return None;
    }
    Some((v, sign))
}

/// Merge two strictly increasing disjoint tuples, with the sign of the
/// permutation that sorts their concatenation. `None` on overlap.
pub fn merge_disjoint(s: &[u32], t: &[u32]) -> Option<(Vec<u32>, i32)> {
    let mut out = Vec::with_capacity(s.len() + t.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut inversions = 0usize;
    while i < s.len() && j < t.len() {
        if s[i] == t[j] {
            return None;
        }
        if s[i] < t[j] {
            out.push(s[i]);
            i += 1;
        } else {
            // t[j] jumps over the remaining s-block
            inversions += s.len() - i;
            out.push(t[j]);
            j += 1;
        }
    }
    out.extend_from_slice(&s[i..]);
    out.extend_from_slice(&t[j..]);
    let sign = if inversions % 2 == 1 { -1 } else { 1 };
    Some((out, sign))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Boundary;
    use crate::observable::random;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lat(n: usize) -> Arc<Lattice> {
        Lattice::chain_1d(n, Boundary::Open, 2, 0).unwrap()
    }

    fn random_chain(rng: &mut ChaCha8Rng, lattice: &Arc<Lattice>, degree: usize, entries: usize) -> Chain {
        let n = lattice.num_sites() as u32;
        let mut c = Chain::zero(lattice.clone(), degree);
        for _ in 0..entries {
            let mut sites: Vec<u32> = (0..n).collect();
            sites.shuffle(rng);
            let mut tuple: Vec<u32> = sites[..degree].to_vec();
            tuple.sort_unstable();
            if tuple.windows(2).any(|w| w[0] == w[1]) {
                continue;
            }
            // small random support, possibly unrelated to the tuple
            let mut supp: Vec<u32> = (0..n).collect();
            supp.shuffle(rng);
            let k = rng.gen_range(1..=2);
            let mut support = supp[..k].to_vec();
            support.sort_unstable();
            let v = random::skew_local(rng, lattice, support).unwrap();
            c.accumulate(tuple, v).unwrap();
        }
        c
    }

    fn elems_equal(a: &ChainElem, b: &ChainElem, tol: f64) -> bool {
        let diff = a.sub(b).unwrap();
        diff.max_norm() <= tol
    }

    fn re(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    #[test]
    fn boundary_squares_to_zero() {
        let l = lat(6);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let c = random_chain(&mut rng, &l, 3, 8);
            let d1 = ChainElem::Pos(c).boundary().unwrap();
            let d2 = d1.boundary().unwrap();
            assert!(d2.max_norm() < 1e-13);
        }
    }

    #[test]
    fn bracket_is_product_commutator() {
        let l = lat(5);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..5 {
            let f = ChainElem::Pos(random_chain(&mut rng, &l, 1, 4));
            let g = ChainElem::Pos(random_chain(&mut rng, &l, 2, 4));
            let fg = f.product(&g).unwrap();
            let gf = g.product(&f).unwrap();
            // m*n = 2, so the graded commutator is f·g - g·f
            let comm = fg.sub(&gf).unwrap();
            let br = f.bracket(&g).unwrap();
            assert!(elems_equal(&comm, &br, 1e-12));
        }
    }

    #[test]
    fn graded_antisymmetry_exact() {
        let l = lat(6);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for (m, n) in [(1usize, 1usize), (1, 2), (2, 2)] {
            let f = ChainElem::Pos(random_chain(&mut rng, &l, m, 5));
            let g = ChainElem::Pos(random_chain(&mut rng, &l, n, 5));
            let lhs = f.bracket(&g).unwrap();
            let sign = if (m * n) % 2 == 0 { 1.0 } else { -1.0 };
            let rhs = g.bracket(&f).unwrap().scale(Complex64::new(-sign, 0.0));
            assert!(elems_equal(&lhs, &rhs, 1e-12), "antisymmetry failed at ({m},{n})");
        }
    }

    #[test]
    fn leibniz_rule_exact() {
        let l = lat(6);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for (m, n) in [(1usize, 1usize), (2, 1), (1, 2)] {
            let f = ChainElem::Pos(random_chain(&mut rng, &l, m, 5));
            let g = ChainElem::Pos(random_chain(&mut rng, &l, n, 5));
            let lhs = f.bracket(&g).unwrap().boundary().unwrap();
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            let rhs = f
                .boundary()
                .unwrap()
                .bracket(&g)
                .unwrap()
                .add(&f.bracket(&g.boundary().unwrap()).unwrap().scale(re(sign)))
                .unwrap();
            assert!(elems_equal(&lhs, &rhs, 1e-12), "Leibniz failed at ({m},{n})");
        }
    }

    #[test]
    fn jacobi_identity_exact() {
        let l = lat(6);
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        // {f,{g,h}} = {{f,g},h} + (-1)^{mn} {g,{f,h}}
        for (m, n, p) in [(1usize, 1usize, 1usize), (1, 1, 2), (2, 1, 1)] {
            let f = ChainElem::Pos(random_chain(&mut rng, &l, m, 4));
            let g = ChainElem::Pos(random_chain(&mut rng, &l, n, 4));
            let h = ChainElem::Pos(random_chain(&mut rng, &l, p, 4));
            let lhs = f.bracket(&g.bracket(&h).unwrap()).unwrap();
            let sign = if (m * n) % 2 == 0 { 1.0 } else { -1.0 };
            let rhs = f
                .bracket(&g)
                .unwrap()
                .bracket(&h)
                .unwrap()
                .add(&g.bracket(&f.bracket(&h).unwrap()).unwrap().scale(re(sign)))
                .unwrap();
            assert!(elems_equal(&lhs, &rhs, 1e-11), "Jacobi failed at ({m},{n},{p})");
        }
    }

    #[test]
    fn homotopy_identity_exact() {
        let l = lat(6);
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for degree in [1usize, 2, 3] {
            let f = ChainElem::Pos(random_chain(&mut rng, &l, degree, 6));
            let raised = f.anchored_raise().unwrap();
            let a = raised.boundary().unwrap();
            let b = f.boundary().unwrap().anchored_raise().unwrap();
            let total = a.add(&b).unwrap();
            assert!(elems_equal(&total, &f, 1e-12), "homotopy identity failed at degree {degree}");
        }
    }

    #[test]
    fn pairing_vanishes_on_boundaries() {
        let l = lat(6);
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        // ⟨∂x, cut⟩ evaluates to zero in any state
        let x = random_chain(&mut rng, &l, 3, 8);
        let dx = match ChainElem::Pos(x).boundary().unwrap() {
            ChainElem::Pos(c) => c,
            _ => unreachable!(),
        };
        let paired = pair_hyperplane(&dx, 0).unwrap();
        let dim = l.hilbert_dim_checked().unwrap();
        let mut psi = CVector::from_fn(dim, |i, _| {
            Complex64::new((0.3 * i as f64).sin(), (0.7 * i as f64).cos())
        });
        let norm = psi.norm();
        psi /= Complex64::new(norm, 0.0);
        let val = paired.state_value(&psi).unwrap();
        assert!(val.norm() < 1e-11);
        assert!(paired.trace_value().norm() < 1e-13);
    }

    #[test]
    fn restriction_and_cut_commutator() {
        let l = lat(6);
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let h = random_chain(&mut rng, &l, 2, 10);
        let half = l.half_space(0);
        let cut = h.boundary_commutator(&half).unwrap();
        // entries of the cut commutator straddle the boundary: each
        // surviving term's tuple had one site inside and one outside
        if let ChainElem::Pos(c) = &cut {
            for (t, _) in c.entries() {
                assert_eq!(t.len(), 1);
            }
        }
        // restriction is idempotent
        let r = h.restrict(&half);
        let rr = r.restrict(&half);
        assert!(elems_equal(&ChainElem::Pos(r), &ChainElem::Pos(rr), 0.0));
    }

    #[test]
    fn json_roundtrip_preserves_chain() {
        let l = lat(4);
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let mut c = random_chain(&mut rng, &l, 2, 5);
        // give one entry a tail part
        let dim = l.hilbert_dim_checked().unwrap();
        let ket = CVector::from_fn(dim, |i, _| Complex64::new((i as f64).sin(), 0.1));
        let bra = CVector::from_fn(dim, |i, _| Complex64::new(0.4, (i as f64).cos()));
        let t = crate::observable::TailTerm { coeff: Complex64::new(0.3, -0.2), ket, bra };
        let tail_obs = crate::observable::Observable::from_tail(l.clone(), vec![t]).unwrap();
        c.accumulate(vec![0, 3], tail_obs).unwrap();
        let elem = ChainElem::Pos(c);
        let json = elem.to_json_value();
        let text = serde_json::to_string(&json).unwrap();
        let parsed: serde_json::Value = serde_json::from_str(&text).unwrap();
        let back = ChainElem::from_json_value(l.clone(), &parsed).unwrap();
        assert!(elems_equal(&elem, &back, 1e-12));
        // key order deterministic: serializing twice gives identical text
        let text2 = serde_json::to_string(&back.to_json_value()).unwrap();
        let text1 = serde_json::to_string(&elem.to_json_value()).unwrap();
        assert_eq!(text1, text2);
    }

    #[test]
    fn merge_sign_matches_sort() {
        let s = [1u32, 4, 6];
        let t = [2u32, 3, 7];
        let (merged, sign) = merge_disjoint(&s, &t).unwrap();
        assert_eq!(merged, vec![1, 2, 3, 4, 6, 7]);
        let concat: Vec<u32> = s.iter().chain(t.iter()).copied().collect();
        let (_, sort_sign) = sort_with_sign(&concat).unwrap();
        assert_eq!(sign, sort_sign);
        assert!(merge_disjoint(&[1, 2], &[2, 5]).is_none());
    }
}
