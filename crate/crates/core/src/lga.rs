//! Integrated automorphisms: evolution under time-dependent skew
//! generators.
//!
//! Automorphisms generated by paths of skew-adjoint operators are kept
//! as paths, never as dense unitaries: states are transported by
//! integrating `dv/dt = K(t) v` and observables, when a conjugation is
//! genuinely needed, by `dA/dt = [K(t), A]`. Every scalar extracted
//! downstream (overlaps, cocycle phases, expectation values) reduces to
//! state transports, so the operator path is reserved for small-system
//! diagnostics.
//!
//! The integrator is classical RK4 with two generator evaluations per
//! step (endpoint values are shared between neighboring steps). State
//! norms are renormalized after each step; the drift per step is
//! `O(h^5)` and the renormalization keeps long paths well conditioned.

use crate::error::Result;
use crate::observable::Observable;
use crate::{C64, CVector};
use num_complex::Complex64;

/// Transport a state along `dv/dt = K(t) v`, `t` from 0 to 1.
pub fn integrate_state(
    k_of_t: impl Fn(f64) -> Result<Observable>,
    v0: &CVector,
    n_steps: usize,
) -> Result<CVector> {
    let h = 1.0 / n_steps as f64;
    let mut v = v0.clone();
    let mut k_start = k_of_t(0.0)?;
    for step in 0..n_steps {
        let t0 = step as f64 * h;
        let k_mid = k_of_t(t0 + 0.5 * h)?;
        let k_end = k_of_t(t0 + h)?;
        let k1 = k_start.apply(&v)?;
        let k2 = k_mid.apply(&(&v + &k1 * Complex64::new(0.5 * h, 0.0)))?;
        let k3 = k_mid.apply(&(&v + &k2 * Complex64::new(0.5 * h, 0.0)))?;
        let k4 = k_end.apply(&(&v + &k3 * Complex64::new(h, 0.0)))?;
        v += (k1 + k2 * Complex64::new(2.0, 0.0) + k3 * Complex64::new(2.0, 0.0) + k4)
            * Complex64::new(h / 6.0, 0.0);
        let n = v.norm();
        if n > 0.0 {
            v /= Complex64::new(n, 0.0);
        }
        k_start = k_end;
    }
    Ok(v)
}

/// Transport backwards: the inverse automorphism applied to a state,
/// i.e. integrate with the reversed, negated generator path.
pub fn integrate_state_inverse(
    k_of_t: impl Fn(f64) -> Result<Observable>,
    v0: &CVector,
    n_steps: usize,
) -> Result<CVector> {
    integrate_state(|t| Ok(k_of_t(1.0 - t)?.neg()), v0, n_steps)
}

/// Conjugate an observable along the path: `dA/dt = [K(t), A]`. Tails are
/// recompressed after every step. Small systems and diagnostics only;
/// production extractions use state transports instead.
pub fn conjugate_observable(
    k_of_t: impl Fn(f64) -> Result<Observable>,
    a0: &Observable,
    n_steps: usize,
) -> Result<Observable> {
    let h = 1.0 / n_steps as f64;
    let ch = |x: f64| Complex64::new(x, 0.0);
    let mut a = a0.clone();
    let mut k_start = k_of_t(0.0)?;
    for step in 0..n_steps {
        let t0 = step as f64 * h;
        let k_mid = k_of_t(t0 + 0.5 * h)?;
        let k_end = k_of_t(t0 + h)?;
        let k1 = k_start.commutator(&a)?;
        let k2 = k_mid.commutator(&a.add(&k1.scale(ch(0.5 * h)))?)?;
        let k3 = k_mid.commutator(&a.add(&k2.scale(ch(0.5 * h)))?)?;
        let k4 = k_end.commutator(&a.add(&k3.scale(ch(h)))?)?;
        let incr = k1
            .add(&k2.scale(ch(2.0)))?
            .add(&k3.scale(ch(2.0)))?
            .add(&k4)?
            .scale(ch(h / 6.0));
        a = a.add(&incr)?;
        a.compress_tails(1e-13)?;
        k_start = k_end;
    }
    Ok(a)
}

/// `⟨w, U v⟩` for the automorphism `U` of a generator path: one state
/// transport plus an inner product.
pub fn transported_overlap(
    k_of_t: impl Fn(f64) -> Result<Observable>,
    w: &CVector,
    v: &CVector,
    n_steps: usize,
) -> Result<C64> {
    let uv = integrate_state(k_of_t, v, n_steps)?;
    Ok(w.dotc(&uv))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{Boundary, Lattice};
    use crate::observable::random;
    use crate::CMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn lat(n: usize) -> Arc<Lattice> {
        Lattice::chain_1d(n, Boundary::Open, 2, 0).unwrap()
    }

    fn expm_skew(k: &CMatrix) -> CMatrix {
        // k skew-adjoint: -i k is Hermitian
        let herm = k * Complex64::new(0.0, -1.0);
        let eig = herm.symmetric_eigen();
        let d = CMatrix::from_diagonal(&eig.eigenvalues.map(|x| {
            Complex64::new(0.0, x).exp()
        }));
        &eig.eigenvectors * d * eig.eigenvectors.adjoint()
    }

    #[test]
    fn constant_generator_matches_exponential() {
        let l = lat(3);
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        let raw = random::skew_local(&mut rng, &l, vec![0, 1]).unwrap();
        let scale = raw.op_norm().unwrap();
        let k = raw.scale(Complex64::new(1.0 / scale, 0.0));
        let kd = k.densify().unwrap();
        let u = expm_skew(&kd);
        let dim = l.hilbert_dim_checked().unwrap();
        let mut v0 = CVector::from_fn(dim, |i, _| {
            Complex64::new((0.5 * i as f64).cos(), (0.9 * i as f64).sin())
        });
        let n = v0.norm();
        v0 /= Complex64::new(n, 0.0);
        let v1 = integrate_state(|_| Ok(k.clone()), &v0, 60).unwrap();
        let expect = &u * &v0;
        assert!((v1 - expect).norm() < 1e-9);
    }

    #[test]
    fn inverse_transport_roundtrips() {
        let l = lat(3);
        let mut rng = ChaCha8Rng::seed_from_u64(73);
        let k0 = random::skew_local(&mut rng, &l, vec![0, 1]).unwrap();
        let k1 = random::skew_local(&mut rng, &l, vec![1, 2]).unwrap();
        let path = move |t: f64| {
            Ok(k0
                .scale(Complex64::new(1.0 - t, 0.0))
                .add(&k1.scale(Complex64::new(t, 0.0)))?)
        };
        let dim = l.hilbert_dim_checked().unwrap();
        let mut v0 = CVector::from_fn(dim, |i, _| {
            Complex64::new((1.1 * i as f64).sin(), (0.3 * i as f64).cos())
        });
        let n = v0.norm();
        v0 /= Complex64::new(n, 0.0);
        let fwd = integrate_state(&path, &v0, 80).unwrap();
        let back = integrate_state_inverse(&path, &fwd, 80).unwrap();
        assert!((back - &v0).norm() < 1e-8);
    }

    #[test]
    fn conjugation_matches_dense() {
        let l = lat(2);
        let mut rng = ChaCha8Rng::seed_from_u64(79);
        let raw = random::skew_local(&mut rng, &l, vec![0, 1]).unwrap();
        let scale = raw.op_norm().unwrap();
        let k = raw.scale(Complex64::new(1.0 / scale, 0.0));
        let a = random::hermitian_local(&mut rng, &l, vec![0]).unwrap();
        let conj = conjugate_observable(|_| Ok(k.clone()), &a, 80).unwrap();
        let u = expm_skew(&k.densify().unwrap());
        let expect = &u * a.densify().unwrap() * u.adjoint();
        assert!((conj.densify().unwrap() - expect).norm() < 1e-8);
    }
}
