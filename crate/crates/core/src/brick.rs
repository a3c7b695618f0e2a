//! Brick decomposition and locality seminorms.
//!
//! Every observable on a finite window splits as a sum of components
//! labeled by bricks (axis-aligned boxes): project each support site
//! either onto its normalized-trace part or its traceless part, and
//! group the fully traceless components by the bounding box of the
//! sites where they act nontrivially. The map is a complete family of
//! commuting projections, so the pieces sum back to the original
//! observable exactly (minus its scalar part).
//!
//! The decomposition feeds two things: the weighted seminorm
//! [`ual_seminorm`], which grades interactions by how fast their brick
//! components decay with brick size, and [`chain_from_derivation`],
//! which spreads each brick component uniformly over the sites of its
//! brick to produce a 1-chain whose boundary is the derivation again.

use crate::chain::{Chain, Derivation};
use crate::error::Result;
use crate::lattice::Brick;
use crate::observable::{embed_matrix, partial_trace_normalized, Observable, TailTerm};
use crate::{C64, CMatrix};
use num_complex::Complex64;
use std::collections::BTreeMap;

/// Supports larger than this use a single-brick fallback instead of the
/// exact subset decomposition (which scans all site subsets).
const MAX_EXACT_SUPPORT: usize = 8;

/// Components below this relative norm are dropped.
const PIECE_TOL: f64 = 1e-14;

/// One component of a decomposition: an observable confined to a brick.
#[derive(Clone, Debug)]
pub struct BrickPiece {
    pub brick: Brick,
    pub part: Observable,
}

/// Split an observable into brick components plus its scalar part.
///
/// The local part decomposes exactly when the support has at most
/// [`MAX_EXACT_SUPPORT`] sites; larger supports are kept whole under
/// their bounding box, which is still a valid (coarser) decomposition.
/// Tail terms are global and always count as one full-window piece.
pub fn decompose_observable(obs: &Observable) -> Result<(Vec<BrickPiece>, C64)> {
    let lattice = obs.lattice().clone();
    let d = lattice.site_dim();
    let mut pieces: Vec<BrickPiece> = Vec::new();
    let mut scalar = C64::ZERO;
    if let Some(a) = obs.local() {
        let support = obs.support().to_vec();
        let t = support.len();
        if t == 0 {
            scalar += a[(0, 0)];
        } else if t > MAX_EXACT_SUPPORT {
            pieces.push(BrickPiece {
                brick: Brick::bounding(&lattice, &support),
                part: Observable::from_local(lattice.clone(), support, a.clone())?,
            });
        } else {
            let scale = a.norm().max(1e-300);
            // peel one site at a time: trace part shrinks the support,
            // traceless part marks the site as active
            let mut frontier: Vec<(CMatrix, Vec<u32>, Vec<u32>)> = vec![(a.clone(), support, vec![])];
            for _ in 0..t {
                let mut next = Vec::with_capacity(frontier.len() * 2);
                for (m, supp, active) in frontier {
                    // sites are classified in ascending order and active
                    // ones are never traced out, so the first
                    // unclassified position is the number of active sites
                    let pos = active.len();
                    debug_assert!(pos < supp.len());
                    let site = supp[pos];
                    let keep: Vec<bool> = (0..supp.len()).map(|p| p != pos).collect();
                    let reduced = partial_trace_normalized(&m, supp.len(), &keep, d);
                    let mut shrunk = supp.clone();
                    shrunk.remove(pos);
                    let re_embedded = embed_matrix(&reduced, &shrunk, &supp, d);
                    let traceless_part = &m - re_embedded;
                    if traceless_part.norm() > PIECE_TOL * scale {
                        let mut act = active.clone();
                        act.push(site);
                        next.push((traceless_part, supp.clone(), act));
                    }
                    if reduced.norm() > PIECE_TOL * scale || shrunk.is_empty() {
                        next.push((reduced, shrunk, active));
                    }
                }
                frontier = next;
            }
            for (m, supp, active) in frontier {
                if active.is_empty() {
                    debug_assert!(supp.is_empty());
                    scalar += m[(0, 0)];
                    continue;
                }
                debug_assert_eq!(supp, active_sorted(&active));
                if m.norm() <= PIECE_TOL * scale {
                    continue;
                }
                pieces.push(BrickPiece {
                    brick: Brick::bounding(&lattice, &active),
                    part: Observable::from_local(lattice.clone(), supp, m)?,
                });
            }
        }
    }
    if obs.has_tail() {
        let all = lattice.all_sites();
        let tail: Vec<TailTerm> = obs.tail().to_vec();
        pieces.push(BrickPiece {
            brick: Brick::bounding(&lattice, &all),
            part: Observable::from_tail(lattice.clone(), tail)?,
        });
    }
    Ok((pieces, scalar))
}

fn active_sorted(active: &[u32]) -> Vec<u32> {
    let mut v = active.to_vec();
    v.sort_unstable();
    v
}

/// Decompose a derivation, merging components that land on the same brick.
pub fn decompose_derivation(der: &Derivation) -> Result<Vec<BrickPiece>> {
    let mut by_brick: BTreeMap<Brick, Observable> = BTreeMap::new();
    for term in der.terms() {
        let (pieces, _scalar) = decompose_observable(term)?;
        for p in pieces {
            match by_brick.remove(&p.brick) {
                None => {
                    by_brick.insert(p.brick, p.part);
                }
                Some(existing) => {
                    by_brick.insert(p.brick, existing.add(&p.part)?);
                }
            }
        }
    }
    Ok(by_brick
        .into_iter()
        .map(|(brick, part)| BrickPiece { brick, part })
        .collect())
}

/// Weighted locality seminorm of a derivation:
/// `sup over bricks of (1 + diam)^alpha * opnorm(component)`,
/// with diameter counted in sites (a single site has diameter 1).
pub fn ual_seminorm(der: &Derivation, alpha: f64) -> Result<f64> {
    let pieces = decompose_derivation(der)?;
    let mut sup: f64 = 0.0;
    for p in pieces {
        let w = (1.0 + p.brick.diam() as f64).powf(alpha);
        sup = sup.max(w * p.part.op_norm()?);
    }
    Ok(sup)
}

/// Chain variant: sup over entries, with each component's brick enlarged
/// by the entry's index tuple, so the weight measures how far an entry
/// reaches from the sites it is indexed by.
pub fn ual_seminorm_chain(chain: &Chain, alpha: f64) -> Result<f64> {
    let lattice = chain.lattice().clone();
    let mut sup: f64 = 0.0;
    for (tuple, v) in chain.entries() {
        let (pieces, _) = decompose_observable(v)?;
        for p in pieces {
            let mut sites: Vec<u32> = p.brick.sites(&lattice);
            sites.extend_from_slice(tuple);
            let brick = Brick::bounding(&lattice, &sites);
            let w = (1.0 + brick.diam() as f64).powf(alpha);
            sup = sup.max(w * p.part.op_norm()?);
        }
    }
    Ok(sup)
}

/// Canonical 1-chain with boundary equal to the derivation: each brick
/// component is spread uniformly over the sites of its brick. Global
/// tail components have no brick to spread over and sit at the origin.
/// Scalar parts of terms act trivially as commutators and are dropped.
pub fn chain_from_derivation(der: &Derivation) -> Result<Chain> {
    let lattice = der.lattice().clone();
    let mut out = Chain::zero(lattice.clone(), 1);
    let pieces = decompose_derivation(der)?;
    for p in pieces {
        if p.part.has_tail() && p.part.local().is_none() {
            out.accumulate(vec![lattice.origin_site()], p.part)?;
            continue;
        }
        let sites = p.brick.sites(&lattice);
        let w = Complex64::new(1.0 / sites.len() as f64, 0.0);
        let spread = p.part.scale(w);
        for j in sites {
            out.accumulate(vec![j], spread.clone())?;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::ChainElem;
    use crate::lattice::{Boundary, Lattice};
    use crate::observable::{mats, random};
    use crate::CVector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn lat(n: usize) -> Arc<Lattice> {
        Lattice::chain_1d(n, Boundary::Open, 2, 0).unwrap()
    }

    #[test]
    fn pieces_reconstruct_observable() {
        let l = lat(5);
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let a = random::hermitian_local(&mut rng, &l, vec![0, 2, 3]).unwrap();
        let (pieces, scalar) = decompose_observable(&a).unwrap();
        let mut sum = Observable::scalar(l.clone(), scalar);
        for p in &pieces {
            sum = sum.add(&p.part).unwrap();
        }
        assert!((sum.densify().unwrap() - a.densify().unwrap()).norm() < 1e-11);
        // every piece is traceless at each of its active sites, hence traceless
        for p in &pieces {
            assert!(p.part.normalized_trace().norm() < 1e-12);
        }
    }

    #[test]
    fn single_site_piece_has_diam_one() {
        let l = lat(4);
        let z = Observable::one_site(l.clone(), 2, mats::pauli_z()).unwrap();
        let (pieces, scalar) = decompose_observable(&z).unwrap();
        assert!(scalar.norm() < 1e-15);
        assert_eq!(pieces.len(), 1);
        assert_eq!(pieces[0].brick.diam(), 1);
        let alpha = 2.0;
        let der = Derivation::new(l, vec![z]);
        let s = ual_seminorm(&der, alpha).unwrap();
        // (1 + 1)^2 * 1
        assert!((s - 4.0).abs() < 1e-9);
    }

    #[test]
    fn two_site_product_lands_on_its_box() {
        let l = lat(6);
        let zz = Observable::kron_sites(l.clone(), &[(1, mats::pauli_z()), (4, mats::pauli_z())])
            .unwrap();
        let (pieces, _) = decompose_observable(&zz).unwrap();
        assert_eq!(pieces.len(), 1);
        assert_eq!(pieces[0].brick.diam(), 4);
        assert_eq!(pieces[0].brick.num_sites(), 4);
    }

    #[test]
    fn derivation_roundtrip_through_chain() {
        let l = lat(6);
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let mut terms = Vec::new();
        for j in 0..5u32 {
            terms.push(random::hermitian_local(&mut rng, &l, vec![j, j + 1]).unwrap());
        }
        // make terms traceless so the scalar part is empty
        let der = Derivation::new(l.clone(), terms);
        let chain = chain_from_derivation(&der).unwrap();
        let back = match ChainElem::Pos(chain).boundary().unwrap() {
            ChainElem::Zero(d) => d,
            _ => unreachable!(),
        };
        // compare as operators via a state evaluation and dense merge
        let dim = l.hilbert_dim_checked().unwrap();
        let psi = {
            let mut v = CVector::from_fn(dim, |i, _| {
                Complex64::new((0.13 * i as f64).sin(), (0.41 * i as f64).cos())
            });
            let n = v.norm();
            v /= Complex64::new(n, 0.0);
            v
        };
        let lhs = der.as_observable().unwrap();
        let rhs = back.as_observable().unwrap();
        let diff = lhs.sub(&rhs).unwrap();
        // the scalar parts may differ; compare after removing them
        let resid = diff
            .sub(&Observable::scalar(l.clone(), diff.normalized_trace()))
            .unwrap();
        assert!(resid.hs_norm() < 1e-11);
        let _ = psi;
    }

    #[test]
    fn tail_pieces_anchor_at_origin() {
        let l = lat(3);
        let dim = l.hilbert_dim_checked().unwrap();
        let ket = CVector::from_fn(dim, |i, _| Complex64::new((i as f64).sin(), 0.3));
        let bra = CVector::from_fn(dim, |i, _| Complex64::new(0.2, (i as f64).cos()));
        let t = Observable::from_tail(
            l.clone(),
            vec![TailTerm { coeff: Complex64::new(1.0, 0.0), ket, bra }],
        )
        .unwrap();
        let der = Derivation::new(l.clone(), vec![t]);
        let chain = chain_from_derivation(&der).unwrap();
        assert_eq!(chain.num_entries(), 1);
        let (tuple, _) = chain.entries().next().unwrap();
        assert_eq!(tuple, &vec![l.origin_site()]);
    }
}
