//! Catalog of gapped lattice families with closed-form data and
//! independently computable reference invariants.
//!
//! Every family provides its Hamiltonian and its exact parameter
//! derivative as sums of local terms, so transport generators never
//! rely on finite differences. The catalog is built from conjugations
//! of fixed gapped Hamiltonians by explicit product unitaries, which
//! keeps gaps constant and makes the pumped quantities computable in
//! closed form for use as oracles.

use crate::chain::{Chain, Derivation};
use crate::error::{CoreError, Result};
use crate::lattice::{Boundary, Lattice};
use crate::mesh::Mesh;
use crate::observable::{mats, Observable};
use crate::{C64, CMatrix};
use num_complex::Complex64;
use std::sync::Arc;

/// A smooth family of gapped local Hamiltonians over a closed parameter
/// manifold. Points and tangents are given in the mesh's embedding
/// coordinates.
pub trait Family: Send + Sync {
    fn name(&self) -> &str;
    fn lattice(&self) -> &Arc<Lattice>;
    fn mesh(&self) -> &Arc<Mesh>;
    fn hamiltonian(&self, x: &[f64]) -> Result<Derivation>;
    /// Derivative of the Hamiltonian along a path through `x` with
    /// velocity `v`, as a sum of local terms.
    fn dh(&self, x: &[f64], v: &[f64]) -> Result<Derivation>;
    /// On-site charge chain when the family conserves a U(1) charge.
    fn charge(&self) -> Option<Chain> {
        None
    }
    /// Independently known invariant values, keyed by invariant name.
    fn oracle(&self, _invariant: &str) -> Option<f64> {
        None
    }
}

fn c(re: f64, im: f64) -> C64 {
    Complex64::new(re, im)
}

/// On-site charge chain: each site carries `2*pi*i*(n_j - 1/2)`, i.e.
/// `-pi*i*Z_j`. Its boundary is the total-charge derivation.
pub fn charge_chain(lattice: &Arc<Lattice>) -> Result<Chain> {
    let mut q = Chain::zero(lattice.clone(), 1);
    for j in lattice.all_sites() {
        let term = Observable::one_site(lattice.clone(), j, mats::pauli_z())?
            .scale(c(0.0, -std::f64::consts::PI));
        q.accumulate(vec![j], term)?;
    }
    Ok(q)
}

/// Signed solid angle of the spherical triangle (a, b, c), positive for
/// counterclockwise orientation seen from outside.
pub fn signed_solid_angle(a: &[f64], b: &[f64], c3: &[f64]) -> f64 {
    let det = a[0] * (b[1] * c3[2] - b[2] * c3[1]) - a[1] * (b[0] * c3[2] - b[2] * c3[0])
        + a[2] * (b[0] * c3[1] - b[1] * c3[0]);
    let dot = |x: &[f64], y: &[f64]| x[0] * y[0] + x[1] * y[1] + x[2] * y[2];
    let denom = 1.0 + dot(a, b) + dot(b, c3) + dot(a, c3);
    2.0 * det.atan2(denom)
}

/// Angle of a point on the unit circle, in [0, 2*pi).
fn angle_of(xy: &[f64]) -> f64 {
    let t = xy[1].atan2(xy[0]);
    if t < 0.0 {
        t + 2.0 * std::f64::consts::PI
    } else {
        t
    }
}

/// Angular velocity on the unit circle for a tangent vector.
fn angle_rate(xy: &[f64], v: &[f64]) -> f64 {
    xy[0] * v[1] - xy[1] * v[0]
}

/// C-infinity step: 0 for u <= 0, 1 for u >= 1, with all derivatives
/// vanishing at both ends. Returns the value and its u-derivative.
fn smooth_step(u: f64) -> (f64, f64) {
    if u <= 0.0 {
        return (0.0, 0.0);
    }
    if u >= 1.0 {
        return (1.0, 0.0);
    }
    let f = |x: f64| (-1.0 / x).exp();
    let fp = |x: f64| (-1.0 / x).exp() / (x * x);
    let g = f(u) + f(1.0 - u);
    let gp = fp(u) - fp(1.0 - u);
    let s = f(u) / g;
    let ds = (fp(u) * g - f(u) * gp) / (g * g);
    (s, ds)
}

fn pauli_vec(n: &[f64]) -> CMatrix {
    mats::pauli_x().scale(n[0])
        + mats::pauli_y().scale(n[1])
        + mats::pauli_z().scale(n[2])
}

/// Embed a two-site matrix written in (i, j) factor order, i as the
/// most significant digit, as an observable on the sorted support.
fn two_site(lattice: &Arc<Lattice>, i: u32, j: u32, m: &CMatrix) -> Result<Observable> {
    if i == j {
        return Err(CoreError::Config("two_site needs distinct sites".into()));
    }
    if i < j {
        Observable::from_local(lattice.clone(), vec![i, j], m.clone())
    } else {
        let mut swapped = CMatrix::zeros(4, 4);
        for a in 0..4usize {
            for b in 0..4usize {
                let ar = (a / 2, a % 2);
                let br = (b / 2, b % 2);
                swapped[(ar.1 * 2 + ar.0, br.1 * 2 + br.0)] = m[(a, b)];
            }
        }
        Observable::from_local(lattice.clone(), vec![j, i], swapped)
    }
}

fn kron2(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let mut out = CMatrix::zeros(4, 4);
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    out[(i * 2 + k, j * 2 + l)] = a[(i, j)] * b[(k, l)];
                }
            }
        }
    }
    out
}

fn swap_gate() -> CMatrix {
    let mut m = CMatrix::zeros(4, 4);
    m[(0, 0)] = c(1.0, 0.0);
    m[(3, 3)] = c(1.0, 0.0);
    m[(1, 2)] = c(1.0, 0.0);
    m[(2, 1)] = c(1.0, 0.0);
    m
}

/// The two dimerization phases of a pump cycle on a block of sites:
/// partner pairs together with the conjugation parameter s(theta) and
/// its rate. Phase A (theta in [0, pi]) pairs (2k, 2k+1); phase B pairs
/// (2k+1, 2k+2) with wraparound inside the block.
pub(crate) struct PumpPhase {
    pub(crate) pairs: Vec<(u32, u32)>,
    pub(crate) s: f64,
    pub(crate) ds: f64,
}

pub(crate) fn pump_phase(offset: u32, block: u32, theta: f64, plateau: f64) -> PumpPhase {
    let pi = std::f64::consts::PI;
    let th = theta.rem_euclid(2.0 * pi);
    let (phase_a, local) = if th < pi { (true, th / pi) } else { (false, th / pi - 1.0) };
    let (s, ds_du) = smooth_step((local - plateau) / (1.0 - 2.0 * plateau));
    let ds = ds_du / ((1.0 - 2.0 * plateau) * pi);
    let m = block / 2;
    let pairs = (0..m)
        .map(|k| {
            if phase_a {
                (offset + 2 * k, offset + 2 * k + 1)
            } else {
                (offset + 2 * k + 1, offset + (2 * k + 2) % block)
            }
        })
        .collect();
    PumpPhase { pairs, s, ds }
}

/// Constant gapped product family: `H = -sum Z_j` at every parameter
/// point. Every invariant vanishes.
pub struct ConstantField {
    lattice: Arc<Lattice>,
    mesh: Arc<Mesh>,
}

impl ConstantField {
    pub fn new(lattice: Arc<Lattice>, mesh: Arc<Mesh>) -> Self {
        ConstantField { lattice, mesh }
    }
}

impl Family for ConstantField {
    fn name(&self) -> &str {
        "constant-field"
    }

    fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    fn hamiltonian(&self, _x: &[f64]) -> Result<Derivation> {
        let mut h = Derivation::zero(self.lattice.clone());
        for j in self.lattice.all_sites() {
            h.push(Observable::one_site(self.lattice.clone(), j, mats::pauli_z())?
                .scale(c(-1.0, 0.0)));
        }
        Ok(h)
    }

    fn dh(&self, _x: &[f64], _v: &[f64]) -> Result<Derivation> {
        Ok(Derivation::zero(self.lattice.clone()))
    }

    fn charge(&self) -> Option<Chain> {
        charge_chain(&self.lattice).ok()
    }

    fn oracle(&self, invariant: &str) -> Option<f64> {
        match invariant {
            "berry_chern" | "higher_berry" | "thouless_1d" | "thouless_2d" | "hall" => Some(0.0),
            _ => None,
        }
    }
}

/// A single spin tracking the unit vector of a sphere-valued parameter,
/// next to one pinned spectator site: `H = -(n.sigma)_0 - Z_1`. The
/// ground line over the sphere has first Chern number -1, with the
/// exact curvature given by solid angles.
pub struct SingleSpinBerry {
    lattice: Arc<Lattice>,
    mesh: Arc<Mesh>,
}

impl SingleSpinBerry {
    pub fn new(mesh: Arc<Mesh>) -> Result<Self> {
        if mesh.dim() != 2 {
            return Err(CoreError::Config("single-spin family needs a 2d mesh".into()));
        }
        let lattice = Lattice::chain_1d(2, Boundary::Open, 2, 0)?;
        Ok(SingleSpinBerry { lattice, mesh })
    }
}

impl Family for SingleSpinBerry {
    fn name(&self) -> &str {
        "single-spin-berry"
    }

    fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    fn hamiltonian(&self, x: &[f64]) -> Result<Derivation> {
        let spin = Observable::one_site(self.lattice.clone(), 0, pauli_vec(x))?.scale(c(-1.0, 0.0));
        let pin = Observable::one_site(self.lattice.clone(), 1, mats::pauli_z())?.scale(c(-1.0, 0.0));
        Ok(Derivation::new(self.lattice.clone(), vec![spin, pin]))
    }

    fn dh(&self, _x: &[f64], v: &[f64]) -> Result<Derivation> {
        let term = Observable::one_site(self.lattice.clone(), 0, pauli_vec(v))?.scale(c(-1.0, 0.0));
        Ok(Derivation::new(self.lattice.clone(), vec![term]))
    }

    fn oracle(&self, invariant: &str) -> Option<f64> {
        match invariant {
            "berry_chern" => Some(-1.0),
            _ => None,
        }
    }
}

/// Rotating-dimer charge pump on a periodic chain: partner pairs carry
/// `V(s) (Z_L - Z_R) V(s)^+` with V a charge-conserving rotation that
/// hands the particle from L to R, and the pairing alternates between
/// the two dimerizations over one cycle. Each cycle moves one unit of
/// charge across every cut; the gap is exactly 2 throughout.
pub struct DimerPump {
    lattice: Arc<Lattice>,
    mesh: Arc<Mesh>,
    blocks: Vec<(u32, u32)>,
    plateau: f64,
}

impl DimerPump {
    pub fn new(sites: usize, mesh: Arc<Mesh>, origin: i64) -> Result<Self> {
        if sites % 2 != 0 || sites < 4 {
            return Err(CoreError::Config(format!(
                "pump needs an even number >= 4 of sites, got {sites}"
            )));
        }
        if mesh.dim() != 1 {
            return Err(CoreError::Config("dimer pump needs a circle mesh".into()));
        }
        let lattice = Lattice::chain_1d(sites, Boundary::Periodic, 2, origin)?;
        let blocks = vec![(0, sites as u32)];
        Ok(DimerPump { lattice, mesh, blocks, plateau: 0.15 })
    }

    /// Pair term `V(s)(Z_L - Z_R)V(s)^+` in (L, R) factor order, and its
    /// s-derivative: `cos(pi s)(Z_L - Z_R) - 2 sin(pi s)(hop)`.
    fn pair_matrices(s: f64) -> (CMatrix, CMatrix) {
        let pi = std::f64::consts::PI;
        let zz = kron2(&mats::pauli_z(), &CMatrix::identity(2, 2))
            - kron2(&CMatrix::identity(2, 2), &mats::pauli_z());
        let hop = kron2(&mats::s_plus(), &mats::s_minus())
            + kron2(&mats::s_minus(), &mats::s_plus());
        let h = zz.scale((pi * s).cos()) - hop.scale(2.0 * (pi * s).sin());
        let dh_ds = zz.scale(-pi * (pi * s).sin())
            - hop.scale(2.0 * pi * (pi * s).cos());
        (h, dh_ds)
    }
}

impl Family for DimerPump {
    fn name(&self) -> &str {
        "dimer-pump"
    }

    fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    fn hamiltonian(&self, x: &[f64]) -> Result<Derivation> {
        let theta = angle_of(x);
        let mut out = Derivation::zero(self.lattice.clone());
        for &(off, len) in &self.blocks {
            let ph = pump_phase(off, len, theta, self.plateau);
            let (h, _) = Self::pair_matrices(ph.s);
            for &(l, r) in &ph.pairs {
                out.push(two_site(&self.lattice, l, r, &h)?);
            }
        }
        Ok(out)
    }

    fn dh(&self, x: &[f64], v: &[f64]) -> Result<Derivation> {
        let theta = angle_of(x);
        let rate = angle_rate(x, v);
        let mut out = Derivation::zero(self.lattice.clone());
        for &(off, len) in &self.blocks {
            let ph = pump_phase(off, len, theta, self.plateau);
            if ph.ds == 0.0 {
                continue;
            }
            let (_, dh_ds) = Self::pair_matrices(ph.s);
            let scaled = dh_ds.scale(ph.ds * rate);
            for &(l, r) in &ph.pairs {
                out.push(two_site(&self.lattice, l, r, &scaled)?);
            }
        }
        Ok(out)
    }

    fn charge(&self) -> Option<Chain> {
        charge_chain(&self.lattice).ok()
    }

    fn oracle(&self, invariant: &str) -> Option<f64> {
        match invariant {
            "thouless_1d" => Some(1.0),
            "berry_chern" => Some(0.0),
            _ => None,
        }
    }
}

/// Chern pump on a periodic chain of dimers over (sphere x circle): the
/// sphere-tracking spin state is handed around the chain by swap
/// conjugation, one site per half cycle. Each cycle transports one
/// sphere-tracking state across every cut.
pub struct DimerChernPump {
    lattice: Arc<Lattice>,
    mesh: Arc<Mesh>,
    blocks: Vec<(u32, u32)>,
    plateau: f64,
}

impl DimerChernPump {
    pub fn new(sites: usize, mesh: Arc<Mesh>, origin: i64) -> Result<Self> {
        if sites % 2 != 0 || sites < 4 {
            return Err(CoreError::Config(format!(
                "pump needs an even number >= 4 of sites, got {sites}"
            )));
        }
        if mesh.dim() != 3 || mesh.product_info().is_none() {
            return Err(CoreError::Config(
                "Chern pump needs a (sphere x circle) product mesh".into(),
            ));
        }
        let lattice = Lattice::chain_1d(sites, Boundary::Periodic, 2, origin)?;
        let blocks = vec![(0, sites as u32)];
        Ok(DimerChernPump { lattice, mesh, blocks, plateau: 0.15 })
    }

    /// `V(s) = cos(a) + i sin(a) SWAP`, `a = s*pi/2`, up to global phase.
    fn v_gate(s: f64) -> CMatrix {
        let a = 0.5 * std::f64::consts::PI * s;
        CMatrix::identity(4, 4).scale(a.cos()) + swap_gate() * c(0.0, a.sin())
    }

    /// Pair term and its partial derivatives: conjugated spin-tracking
    /// Hamiltonian, its s-derivative via the swap generator, and the
    /// sphere-tangent derivative.
    fn pair_matrices(n: &[f64], vn: &[f64], s: f64) -> (CMatrix, CMatrix, CMatrix) {
        let h0 = kron2(&pauli_vec(n), &CMatrix::identity(2, 2)).scale(-1.0)
            - kron2(&CMatrix::identity(2, 2), &mats::pauli_z());
        let v = Self::v_gate(s);
        let h = &v * &h0 * v.adjoint();
        let sw = swap_gate();
        let comm = &sw * &h - &h * &sw;
        let dh_ds = comm * c(0.0, 0.5 * std::f64::consts::PI);
        let dn = kron2(&pauli_vec(vn), &CMatrix::identity(2, 2)).scale(-1.0);
        let dh_dn = &v * &dn * v.adjoint();
        (h, dh_ds, dh_dn)
    }
}

impl Family for DimerChernPump {
    fn name(&self) -> &str {
        "dimer-chern-pump"
    }

    fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    fn hamiltonian(&self, x: &[f64]) -> Result<Derivation> {
        let n = &x[..3];
        let theta = angle_of(&x[3..]);
        let mut out = Derivation::zero(self.lattice.clone());
        for &(off, len) in &self.blocks {
            let ph = pump_phase(off, len, theta, self.plateau);
            let (h, _, _) = Self::pair_matrices(n, &[0.0; 3], ph.s);
            for &(l, r) in &ph.pairs {
                out.push(two_site(&self.lattice, l, r, &h)?);
            }
        }
        Ok(out)
    }

    fn dh(&self, x: &[f64], v: &[f64]) -> Result<Derivation> {
        let n = &x[..3];
        let vn = &v[..3];
        let theta = angle_of(&x[3..]);
        let rate = angle_rate(&x[3..], &v[3..]);
        let mut out = Derivation::zero(self.lattice.clone());
        for &(off, len) in &self.blocks {
            let ph = pump_phase(off, len, theta, self.plateau);
            let (_, dh_ds, dh_dn) = Self::pair_matrices(n, vn, ph.s);
            let total = dh_ds.scale(ph.ds * rate) + dh_dn;
            for &(l, r) in &ph.pairs {
                out.push(two_site(&self.lattice, l, r, &total)?);
            }
        }
        Ok(out)
    }

    fn oracle(&self, invariant: &str) -> Option<f64> {
        match invariant {
            "higher_berry" => Some(-1.0),
            _ => None,
        }
    }
}

/// Two-dimensional U(1) toy: a product Hamiltonian dressed by a fixed
/// two-layer circuit of charge-conserving two-site rotations whose
/// angles depend linearly on the sphere parameter. Finite-depth
/// dressing of a product state, so every transport invariant vanishes,
/// while the family itself is genuinely parameter-dependent.
pub struct TwoDimToy {
    lattice: Arc<Lattice>,
    mesh: Arc<Mesh>,
    gates1: Vec<(u32, u32, [f64; 3])>,
    gates2: Vec<(u32, u32, [f64; 3])>,
}

impl TwoDimToy {
    pub fn new(rows: usize, cols: usize, mesh: Arc<Mesh>, origin: Vec<i64>) -> Result<Self> {
        if mesh.dim() != 2 {
            return Err(CoreError::Config("2d toy needs a 2d mesh".into()));
        }
        if cols % 2 != 0 || rows < 2 {
            return Err(CoreError::Config(
                "2d toy needs an even number of columns and >= 2 rows".into(),
            ));
        }
        let lattice = Lattice::new(vec![rows, cols], Boundary::Open, 2, origin)?;
        let site = |r: usize, col: usize| (r * cols + col) as u32;
        let coeff = |g: usize| {
            let mut a = [0.0; 3];
            for (k, slot) in a.iter_mut().enumerate() {
                *slot = 0.3 * (1.0 + 0.7 * g as f64 + 1.3 * k as f64).sin();
            }
            a
        };
        let mut gates1 = Vec::new();
        for r in 0..rows {
            for p in 0..cols / 2 {
                gates1.push((site(r, 2 * p), site(r, 2 * p + 1), coeff(gates1.len())));
            }
        }
        let mut gates2 = Vec::new();
        for col in 0..cols {
            gates2.push((site(0, col), site(1, col), coeff(100 + gates2.len())));
        }
        Ok(TwoDimToy { lattice, mesh, gates1, gates2 })
    }

    /// Charge-conserving rotation generator in (L, R) factor order.
    fn xy_generator() -> CMatrix {
        kron2(&mats::s_plus(), &mats::s_minus()) - kron2(&mats::s_minus(), &mats::s_plus())
    }

    fn gate_obs(&self, l: u32, r: u32, angle: f64) -> Result<Observable> {
        let g = Self::xy_generator().scale(angle);
        // exp of the rotation generator: closed form on the hopping block.
        let mut w = CMatrix::identity(4, 4);
        let (cth, sth) = (angle.cos(), angle.sin());
        w[(1, 1)] = c(cth, 0.0);
        w[(2, 2)] = c(cth, 0.0);
        w[(1, 2)] = c(sth, 0.0);
        w[(2, 1)] = c(-sth, 0.0);
        debug_assert!((&w * &g - &g * &w).norm() < 1e-12);
        two_site(&self.lattice, l, r, &w)
    }

    fn dot(a: &[f64; 3], x: &[f64]) -> f64 {
        a[0] * x[0] + a[1] * x[1] + a[2] * x[2]
    }

    /// Conjugate an observable through every overlapping gate of a layer.
    fn conj_layer(
        &self,
        layer: &[(u32, u32, [f64; 3])],
        x: &[f64],
        mut obs: Observable,
    ) -> Result<Observable> {
        for &(l, r, a) in layer {
            let sup = obs.support().to_vec();
            if !sup.contains(&l) && !sup.contains(&r) {
                continue;
            }
            let w = self.gate_obs(l, r, Self::dot(&a, x))?;
            obs = w.mul(&obs)?.mul(&w.adjoint())?;
        }
        Ok(obs)
    }
}

impl Family for TwoDimToy {
    fn name(&self) -> &str {
        "two-dim-toy"
    }

    fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    fn hamiltonian(&self, x: &[f64]) -> Result<Derivation> {
        let mut out = Derivation::zero(self.lattice.clone());
        for j in self.lattice.all_sites() {
            let z = Observable::one_site(self.lattice.clone(), j, mats::pauli_z())?
                .scale(c(-1.0, 0.0));
            let dressed = self.conj_layer(&self.gates2, x, self.conj_layer(&self.gates1, x, z)?)?;
            out.push(dressed);
        }
        Ok(out)
    }

    fn dh(&self, x: &[f64], v: &[f64]) -> Result<Derivation> {
        // dU U^+ = sum over layer-2 generators plus layer-1 generators
        // conjugated through layer 2, each weighted by the angle rate.
        let mut gen = Derivation::zero(self.lattice.clone());
        for &(l, r, a) in &self.gates2 {
            let rate = Self::dot(&a, v);
            if rate != 0.0 {
                let g = Self::xy_generator().scale(rate);
                gen.push(two_site(&self.lattice, l, r, &g)?);
            }
        }
        for &(l, r, a) in &self.gates1 {
            let rate = Self::dot(&a, v);
            if rate != 0.0 {
                let g = Self::xy_generator().scale(rate);
                let raw = two_site(&self.lattice, l, r, &g)?;
                gen.push(self.conj_layer(&self.gates2, x, raw)?);
            }
        }
        gen.bracket(&self.hamiltonian(x)?)
    }

    fn charge(&self) -> Option<Chain> {
        charge_chain(&self.lattice).ok()
    }

    fn oracle(&self, invariant: &str) -> Option<f64> {
        match invariant {
            "berry_chern" | "thouless_2d" | "hall" => Some(0.0),
            _ => None,
        }
    }
}

/// Wrapper applying a parameter-dependent product of on-site charge
/// phases: `H -> W H W^+` with `W(x) = prod_j exp(i c_j(x) n_j)` and
/// linear angle functions. Leaves every invariant unchanged.
pub struct GaugeTransformed<F: Family> {
    inner: F,
    site_coeffs: Vec<Vec<f64>>,
}

impl<F: Family> GaugeTransformed<F> {
    pub fn new(inner: F) -> Self {
        let dim = inner.mesh().vertex(0).len();
        let n = inner.lattice().num_sites();
        let site_coeffs = (0..n)
            .map(|j| {
                (0..dim)
                    .map(|k| 0.2 * (0.9 + 0.53 * j as f64 + 1.1 * k as f64).sin())
                    .collect()
            })
            .collect();
        GaugeTransformed { inner, site_coeffs }
    }

    fn phase_gate(&self, j: u32, angle: f64) -> Result<Observable> {
        // exp(i*angle*n_j) with n = (1 - Z)/2: diagonal (1, e^{i angle}).
        let mut m = CMatrix::identity(2, 2);
        m[(1, 1)] = c(angle.cos(), angle.sin());
        Observable::one_site(self.inner.lattice().clone(), j, m)
    }

    fn conj_all(&self, x: &[f64], mut obs: Observable) -> Result<Observable> {
        for j in obs.support().to_vec() {
            let angle: f64 = self.site_coeffs[j as usize]
                .iter()
                .zip(x)
                .map(|(a, b)| a * b)
                .sum();
            let w = self.phase_gate(j, angle)?;
            obs = w.mul(&obs)?.mul(&w.adjoint())?;
        }
        Ok(obs)
    }
}

impl<F: Family> Family for GaugeTransformed<F> {
    fn name(&self) -> &str {
        "gauge-transformed"
    }

    fn lattice(&self) -> &Arc<Lattice> {
        self.inner.lattice()
    }

    fn mesh(&self) -> &Arc<Mesh> {
        self.inner.mesh()
    }

    fn hamiltonian(&self, x: &[f64]) -> Result<Derivation> {
        let mut out = Derivation::zero(self.inner.lattice().clone());
        for t in self.inner.hamiltonian(x)?.terms() {
            out.push(self.conj_all(x, t.clone())?);
        }
        Ok(out)
    }

    fn dh(&self, x: &[f64], v: &[f64]) -> Result<Derivation> {
        let lattice = self.inner.lattice().clone();
        let mut out = Derivation::zero(lattice.clone());
        for t in self.inner.dh(x, v)?.terms() {
            out.push(self.conj_all(x, t.clone())?);
        }
        // dW W^+ = sum_j i (c_j . v) n_j commuted against the dressed
        // Hamiltonian.
        let mut gen = Derivation::zero(lattice.clone());
        for j in lattice.all_sites() {
            let rate: f64 = self.site_coeffs[j as usize]
                .iter()
                .zip(v)
                .map(|(a, b)| a * b)
                .sum();
            if rate != 0.0 {
                let n = (CMatrix::identity(2, 2) - mats::pauli_z()).scale(0.5);
                gen.push(Observable::one_site(lattice.clone(), j, n)?.scale(c(0.0, rate)));
            }
        }
        let dressed = self.hamiltonian(x)?;
        let comm = gen.bracket(&dressed)?;
        for t in comm.terms() {
            out.push(t.clone());
        }
        Ok(out)
    }

    fn charge(&self) -> Option<Chain> {
        self.inner.charge()
    }

    fn oracle(&self, invariant: &str) -> Option<f64> {
        self.inner.oracle(invariant)
    }
}

/// Embed a strictly local observable of one tensor factor into a
/// stacked lattice whose per-site dimension is the product of the two
/// factor dimensions, first factor major within each site.
fn embed_factor(
    obs: &Observable,
    target: &Arc<Lattice>,
    dim_a: usize,
    dim_b: usize,
    first: bool,
) -> Result<Observable> {
    if obs.has_tail() {
        return Err(CoreError::Config("only strictly local terms can be stacked".into()));
    }
    let Some(m) = obs.local() else {
        return Err(CoreError::Config("empty term cannot be stacked".into()));
    };
    let support = obs.support().to_vec();
    let ns = support.len() as u32;
    let own = if first { dim_a } else { dim_b };
    let other = if first { dim_b } else { dim_a };
    let own_total = own.pow(ns);
    let other_total = other.pow(ns);
    let stacked_total = (own * other).pow(ns);
    let digits = |mut v: usize, base: usize| -> Vec<usize> {
        let mut d = vec![0usize; ns as usize];
        for slot in d.iter_mut().rev() {
            *slot = v % base;
            v /= base;
        }
        d
    };
    let combine = |own_digits: &[usize], other_digits: &[usize]| -> usize {
        let mut x = 0usize;
        for s in 0..ns as usize {
            let (da, db) = if first {
                (own_digits[s], other_digits[s])
            } else {
                (other_digits[s], own_digits[s])
            };
            x = x * (dim_a * dim_b) + da * dim_b + db;
        }
        x
    };
    let mut out = CMatrix::zeros(stacked_total, stacked_total);
    for a in 0..own_total {
        let da = digits(a, own);
        for b in 0..own_total {
            let entry = m[(a, b)];
            if entry == c(0.0, 0.0) {
                continue;
            }
            let db = digits(b, own);
            for e in 0..other_total {
                let de = digits(e, other);
                out[(combine(&da, &de), combine(&db, &de))] = entry;
            }
        }
    }
    Observable::from_local(target.clone(), support, out)
}

/// Tensor-product stack of two families over the same mesh and site
/// geometry: per-site dimensions multiply, the Hamiltonian acts as
/// `H_a` on the first factor plus `H_b` on the second, and charges
/// add. Every invariant is additive under this composition.
pub struct Stacked<A: Family, B: Family> {
    a: A,
    b: B,
    lattice: Arc<Lattice>,
    name: String,
}

impl<A: Family, B: Family> Stacked<A, B> {
    pub fn new(a: A, b: B) -> Result<Self> {
        if !Arc::ptr_eq(a.mesh(), b.mesh()) {
            return Err(CoreError::Config("stacked families must share a mesh".into()));
        }
        let (la, lb) = (a.lattice(), b.lattice());
        if la.dims() != lb.dims() || la.boundary() != lb.boundary() || la.origin() != lb.origin()
        {
            return Err(CoreError::Config(
                "stacked families must share the site geometry".into(),
            ));
        }
        let lattice = Lattice::new(
            la.dims().to_vec(),
            la.boundary(),
            la.site_dim() * lb.site_dim(),
            la.origin().to_vec(),
        )?;
        let name = format!("stacked({}+{})", a.name(), b.name());
        Ok(Stacked { a, b, lattice, name })
    }

    fn embed(&self, d: &Derivation, first: bool) -> Result<Derivation> {
        let (da, db) = (self.a.lattice().site_dim(), self.b.lattice().site_dim());
        let mut out = Derivation::zero(self.lattice.clone());
        for t in d.terms() {
            out.push(embed_factor(t, &self.lattice, da, db, first)?);
        }
        Ok(out)
    }
}

impl<A: Family, B: Family> Family for Stacked<A, B> {
    fn name(&self) -> &str {
        &self.name
    }

    fn lattice(&self) -> &Arc<Lattice> {
        &self.lattice
    }

    fn mesh(&self) -> &Arc<Mesh> {
        self.a.mesh()
    }

    fn hamiltonian(&self, x: &[f64]) -> Result<Derivation> {
        let mut out = self.embed(&self.a.hamiltonian(x)?, true)?;
        for t in self.embed(&self.b.hamiltonian(x)?, false)?.terms() {
            out.push(t.clone());
        }
        Ok(out)
    }

    fn dh(&self, x: &[f64], v: &[f64]) -> Result<Derivation> {
        let mut out = self.embed(&self.a.dh(x, v)?, true)?;
        for t in self.embed(&self.b.dh(x, v)?, false)?.terms() {
            out.push(t.clone());
        }
        Ok(out)
    }

    fn charge(&self) -> Option<Chain> {
        let qa = self.a.charge()?;
        let qb = self.b.charge()?;
        let (da, db) = (self.a.lattice().site_dim(), self.b.lattice().site_dim());
        let mut q = Chain::zero(self.lattice.clone(), 1);
        for (t, v) in qa.entries() {
            let e = embed_factor(v, &self.lattice, da, db, true).ok()?;
            q.accumulate(t.clone(), e).ok()?;
        }
        for (t, v) in qb.entries() {
            let e = embed_factor(v, &self.lattice, da, db, false).ok()?;
            q.accumulate(t.clone(), e).ok()?;
        }
        Some(q)
    }

    fn oracle(&self, invariant: &str) -> Option<f64> {
        Some(self.a.oracle(invariant)? + self.b.oracle(invariant)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::ground_data;
    use crate::CVector;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fd_check(fam: &dyn Family, x: &[f64], v: &[f64], tol: f64) {
        // Derivative check by applying to random vectors; avoids
        // materializing full-space matrices.
        let lat = fam.lattice();
        let dim = lat.hilbert_dim_checked().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(97);
        let vec = CVector::from_fn(dim, |_, _| {
            Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        });
        let eps = 1e-5;
        let shift = |sgn: f64| -> Vec<f64> {
            x.iter().zip(v).map(|(a, b)| a + sgn * eps * b).collect()
        };
        let hp = fam.hamiltonian(&shift(1.0)).unwrap().apply_sum(&vec).unwrap();
        let hm = fam.hamiltonian(&shift(-1.0)).unwrap().apply_sum(&vec).unwrap();
        let fd = (hp - hm) / Complex64::new(2.0 * eps, 0.0);
        let an = fam.dh(x, v).unwrap().apply_sum(&vec).unwrap();
        let scale = vec.norm();
        assert!((fd - an).norm() / scale < tol, "derivative mismatch");
    }

    fn charge_commutes(fam: &dyn Family, x: &[f64]) {
        let q = fam.charge().unwrap();
        let n_total = q.boundary();
        let h = fam.hamiltonian(x).unwrap();
        let hd = h.as_observable().unwrap();
        let comm = n_total.as_derivation().unwrap().act(&hd).unwrap();
        assert!(comm.op_norm().unwrap() < 1e-12);
    }

    #[test]
    fn solid_angles_tile_the_sphere() {
        let m = Mesh::sphere(10, 6).unwrap();
        let mut total = 0.0;
        for (i, tri) in m.simplices(2).iter().enumerate() {
            let a = m.vertex(tri[0]);
            let b = m.vertex(tri[1]);
            let c3 = m.vertex(tri[2]);
            total += m.orientation(i) * signed_solid_angle(a, b, c3);
        }
        assert!((total - 4.0 * std::f64::consts::PI).abs() < 1e-10);
    }

    #[test]
    fn dimer_pump_is_smooth_gapped_and_charged() {
        let mesh = Mesh::circle(12).unwrap();
        let fam = DimerPump::new(6, mesh, 2).unwrap();
        // Junctions: the two phase expressions agree where they meet.
        for theta in [0.0, std::f64::consts::PI] {
            let before = fam
                .hamiltonian(&[(theta - 1e-3).cos(), (theta - 1e-3).sin()])
                .unwrap();
            let after = fam
                .hamiltonian(&[(theta + 1e-3).cos(), (theta + 1e-3).sin()])
                .unwrap();
            let diff = before.as_observable().unwrap().sub(&after.as_observable().unwrap()).unwrap();
            assert!(diff.op_norm().unwrap() < 1e-12, "junction at {theta}");
        }
        for k in 0..7 {
            let theta = 0.31 + k as f64 * 0.9;
            let x = [theta.cos(), theta.sin()];
            let g = ground_data(&fam.hamiltonian(&x).unwrap()).unwrap();
            assert!((g.gap - 2.0).abs() < 1e-10, "gap at {theta}");
            charge_commutes(&fam, &x);
        }
        let x = [0.4f64.cos(), 0.4f64.sin()];
        fd_check(&fam, &x, &[-x[1], x[0]], 1e-6);
    }

    #[test]
    fn chern_pump_is_periodic_and_gapped() {
        let mesh = Mesh::product(&Mesh::sphere(6, 3).unwrap(), &Mesh::circle(8).unwrap()).unwrap();
        let fam = DimerChernPump::new(4, mesh, 1).unwrap();
        let n = [0.48, -0.6, 0.64];
        for theta in [0.0, std::f64::consts::PI] {
            let mk = |t: f64| {
                let x = [n[0], n[1], n[2], t.cos(), t.sin()];
                fam.hamiltonian(&x).unwrap().as_observable().unwrap()
            };
            let diff = mk(theta - 1e-3).sub(&mk(theta + 1e-3)).unwrap();
            assert!(diff.op_norm().unwrap() < 1e-12, "junction at {theta}");
        }
        for k in 0..5 {
            let theta = 0.2 + 1.1 * k as f64;
            let x = [n[0], n[1], n[2], theta.cos(), theta.sin()];
            let g = ground_data(&fam.hamiltonian(&x).unwrap()).unwrap();
            assert!((g.gap - 2.0).abs() < 1e-10);
        }
        let x = [n[0], n[1], n[2], 0.7f64.cos(), 0.7f64.sin()];
        // Tangent mixing a sphere rotation with circle motion.
        let v = [-n[1] * 0.3, n[0] * 0.3, 0.0, -x[4] * 0.8, x[3] * 0.8];
        fd_check(&fam, &x, &v, 1e-6);
    }

    #[test]
    fn toy_family_is_gapped_charge_conserving_with_exact_derivative() {
        let mesh = Mesh::sphere(6, 3).unwrap();
        let fam = TwoDimToy::new(2, 4, mesh, vec![0, 1]).unwrap();
        let x = [0.6, 0.64, 0.48];
        let g = ground_data(&fam.hamiltonian(&x).unwrap()).unwrap();
        assert!((g.gap - 2.0).abs() < 1e-9);
        assert!((g.energy + 8.0).abs() < 1e-9);
        charge_commutes(&fam, &x);
        fd_check(&fam, &x, &[-0.64, 0.6, 0.0], 2e-6);
    }

    #[test]
    fn gauge_wrapper_preserves_spectrum_and_derivative() {
        let mesh = Mesh::circle(12).unwrap();
        let fam = GaugeTransformed::new(DimerPump::new(4, mesh, 1).unwrap());
        let x = [0.9f64.cos(), 0.9f64.sin()];
        let g = ground_data(&fam.hamiltonian(&x).unwrap()).unwrap();
        assert!((g.gap - 2.0).abs() < 1e-10);
        charge_commutes(&fam, &x);
        fd_check(&fam, &x, &[-x[1], x[0]], 1e-6);
    }

    #[test]
    fn stacked_pumps_add_energies_and_oracles() {
        let mesh = Mesh::circle(12).unwrap();
        let a = DimerPump::new(4, mesh.clone(), 1).unwrap();
        let b = DimerPump::new(4, mesh, 1).unwrap();
        let fam = Stacked::new(a, b).unwrap();
        assert_eq!(fam.lattice().site_dim(), 4);
        assert_eq!(fam.oracle("thouless_1d"), Some(2.0));
        let x = [0.9f64.cos(), 0.9f64.sin()];
        let g = ground_data(&fam.hamiltonian(&x).unwrap()).unwrap();
        // Energies add; the gap is still one dimer excitation.
        assert!((g.energy + 8.0).abs() < 1e-9);
        assert!((g.gap - 2.0).abs() < 1e-9);
        charge_commutes(&fam, &x);
        fd_check(&fam, &x, &[-x[1], x[0]], 1e-6);
    }
}
