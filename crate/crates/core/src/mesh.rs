//! Simplicial parameter meshes and discrete differential forms.
//!
//! Closed parameter manifolds are oriented simplicial complexes with
//! vertices embedded on products of unit spheres. Differential forms
//! are simplicial cochains: the exterior derivative is the alternating
//! face sum, the product uses the front-face/back-face rule, and
//! integration pairs a top-degree cochain with the oriented fundamental
//! cycle. These operations are exact (d^2 = 0, Stokes, Leibniz hold to
//! machine precision), so all discretization error lives in the cochain
//! values, never in the calculus.
//!
//! Orientations of the curved meshes are fixed by the sign of the
//! vertex-coordinate determinant; the 2-sphere uses the inward class
//! (the sign convention for curvature periods is pinned in
//! docs/signs.md). Product meshes use staircase
//! triangulations of prisms; each product top simplex records its base
//! cell, so integration along the fiber is a signed sum with prism
//! provenance.

use crate::error::{CoreError, Result};
use crate::C64;
use num_complex::Complex64;
use std::collections::HashMap;
use std::sync::Arc;

/// A complex-valued simplicial cochain of fixed degree. Values are
/// indexed by the owning mesh's simplex order at that degree; the value
/// on a simplex refers to its vertex-sorted ordering.
#[derive(Debug, Clone)]
pub struct Cochain {
    pub degree: usize,
    pub values: Vec<C64>,
}

impl Cochain {
    pub fn scale(&self, c: C64) -> Cochain {
        Cochain {
            degree: self.degree,
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    pub fn add(&self, other: &Cochain) -> Cochain {
        assert_eq!(self.degree, other.degree);
        assert_eq!(self.values.len(), other.values.len());
        Cochain {
            degree: self.degree,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn sub(&self, other: &Cochain) -> Cochain {
        self.add(&other.scale(Complex64::new(-1.0, 0.0)))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

/// Projection data for a product mesh: which factor vertex each product
/// vertex came from, and which base cell each top simplex stands over.
pub struct ProductInfo {
    pub base: Arc<Mesh>,
    pub fiber: Arc<Mesh>,
    pub base_vertex: Vec<usize>,
    pub fiber_vertex: Vec<usize>,
    pub top_base: Vec<usize>,
}

/// An oriented simplicial complex embedded in Euclidean space, with
/// simplices of every degree enumerated and indexed.
pub struct Mesh {
    name: String,
    dim: usize,
    coords: Vec<Vec<f64>>,
    unit_blocks: Vec<(usize, usize)>,
    simplices: Vec<Vec<Vec<usize>>>,
    index: Vec<HashMap<Vec<usize>, usize>>,
    faces: Vec<Vec<Vec<(usize, f64)>>>,
    orientation: Vec<f64>,
    product: Option<ProductInfo>,
}

impl Mesh {
    /// A regular n-gon triangulating the circle, vertices at angles
    /// `2*pi*j/n` in the plane, oriented counterclockwise.
    pub fn circle(n: usize) -> Result<Arc<Mesh>> {
        if n < 3 {
            return Err(CoreError::Mesh(format!("circle needs >= 3 vertices, got {n}")));
        }
        let coords: Vec<Vec<f64>> = (0..n)
            .map(|j| {
                let t = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
                vec![t.cos(), t.sin()]
            })
            .collect();
        let mut tops = Vec::with_capacity(n);
        for j in 0..n {
            let mut tup = vec![j, (j + 1) % n];
            tup.sort_unstable();
            let a = &coords[tup[0]];
            let b = &coords[tup[1]];
            let det = a[0] * b[1] - a[1] * b[0];
            tops.push((tup, det.signum()));
        }
        Self::assemble(format!("circle-{n}"), 1, coords, vec![(0, 2)], tops, None)
    }

    /// A polar-capped triangulated sphere: `n_bands` latitude bands,
    /// interior rings of `n_phi` vertices. The fundamental class is
    /// oriented inward; this pins the sign of curvature periods (see
    /// docs/signs.md) so the spin ground-state berry period is -1.
    pub fn sphere(n_phi: usize, n_bands: usize) -> Result<Arc<Mesh>> {
        if n_phi < 3 || n_bands < 2 {
            return Err(CoreError::Mesh(format!(
                "sphere needs n_phi >= 3 and n_bands >= 2, got {n_phi}x{n_bands}"
            )));
        }
        let mut coords: Vec<Vec<f64>> = vec![vec![0.0, 0.0, 1.0]];
        for r in 1..n_bands {
            let theta = std::f64::consts::PI * r as f64 / n_bands as f64;
            for j in 0..n_phi {
                let phi = 2.0 * std::f64::consts::PI * j as f64 / n_phi as f64;
                coords.push(vec![
                    theta.sin() * phi.cos(),
                    theta.sin() * phi.sin(),
                    theta.cos(),
                ]);
            }
        }
        let south = coords.len();
        coords.push(vec![0.0, 0.0, -1.0]);
        let ring = |r: usize, j: usize| 1 + (r - 1) * n_phi + j % n_phi;

        let mut raw: Vec<Vec<usize>> = Vec::new();
        for j in 0..n_phi {
            raw.push(vec![0, ring(1, j), ring(1, j + 1)]);
            raw.push(vec![south, ring(n_bands - 1, j), ring(n_bands - 1, j + 1)]);
        }
        for r in 1..n_bands - 1 {
            for j in 0..n_phi {
                let (a, b) = (ring(r, j), ring(r, j + 1));
                let (c, d) = (ring(r + 1, j), ring(r + 1, j + 1));
                raw.push(vec![a, b, d]);
                raw.push(vec![a, d, c]);
            }
        }
        let tops = raw
            .into_iter()
            .map(|mut tup| {
                tup.sort_unstable();
                let s = -det3(&coords[tup[0]], &coords[tup[1]], &coords[tup[2]]).signum();
                (tup, s)
            })
            .collect();
        Self::assemble(
            format!("sphere-{n_phi}x{n_bands}"),
            2,
            coords,
            vec![(0, 3)],
            tops,
            None,
        )
    }

    /// The 3-sphere as the join of two circles: vertices on two linked
    /// great circles in R^4, one tetrahedron per pair of edges. Oriented
    /// by the sign of the 4x4 vertex determinant.
    pub fn sphere3(n1: usize, n2: usize) -> Result<Arc<Mesh>> {
        if n1 < 3 || n2 < 3 {
            return Err(CoreError::Mesh(format!(
                "sphere3 needs >= 3 vertices per circle, got {n1}x{n2}"
            )));
        }
        let mut coords: Vec<Vec<f64>> = Vec::with_capacity(n1 + n2);
        for j in 0..n1 {
            let t = 2.0 * std::f64::consts::PI * j as f64 / n1 as f64;
            coords.push(vec![t.cos(), t.sin(), 0.0, 0.0]);
        }
        for j in 0..n2 {
            let t = 2.0 * std::f64::consts::PI * j as f64 / n2 as f64;
            coords.push(vec![0.0, 0.0, t.cos(), t.sin()]);
        }
        let mut tops = Vec::with_capacity(n1 * n2);
        for i in 0..n1 {
            for j in 0..n2 {
                let mut tup = vec![i, (i + 1) % n1, n1 + j, n1 + (j + 1) % n2];
                tup.sort_unstable();
                let s = det4(
                    &coords[tup[0]],
                    &coords[tup[1]],
                    &coords[tup[2]],
                    &coords[tup[3]],
                )
                .signum();
                tops.push((tup, s));
            }
        }
        Self::assemble(
            format!("sphere3-{n1}x{n2}"),
            3,
            coords,
            vec![(0, 4)],
            tops,
            None,
        )
    }

    /// The staircase-triangulated product of two meshes. Vertices are
    /// pairs in base-major order; each prism (base cell x fiber cell) is
    /// split along monotone lattice paths with the shuffle sign, which
    /// makes the product fundamental cycle closed and integration
    /// factorize exactly.
    pub fn product(base: &Arc<Mesh>, fiber: &Arc<Mesh>) -> Result<Arc<Mesh>> {
        let nb = base.coords.len();
        let nf = fiber.coords.len();
        let vid = |b: usize, f: usize| b * nf + f;
        let mut coords = Vec::with_capacity(nb * nf);
        for b in 0..nb {
            for f in 0..nf {
                let mut c = base.coords[b].clone();
                c.extend_from_slice(&fiber.coords[f]);
                coords.push(c);
            }
        }
        let base_len = base.coords[0].len();
        let mut unit_blocks = base.unit_blocks.clone();
        unit_blocks.extend(fiber.unit_blocks.iter().map(|&(o, l)| (o + base_len, l)));
        let base_vertex: Vec<usize> = (0..nb * nf).map(|v| v / nf).collect();
        let fiber_vertex: Vec<usize> = (0..nb * nf).map(|v| v % nf).collect();

        let p = base.dim;
        let q = fiber.dim;
        let paths = lattice_paths(p, q);
        let mut tops = Vec::new();
        let mut top_base = Vec::new();
        for (si, sigma) in base.simplices[p].iter().enumerate() {
            for (ti, tau) in fiber.simplices[q].iter().enumerate() {
                let or_cell = base.orientation[si] * fiber.orientation[ti];
                for (moves, sign) in &paths {
                    let mut bi = 0usize;
                    let mut fi = 0usize;
                    let mut tup = vec![vid(sigma[0], tau[0])];
                    for mv in moves {
                        if *mv {
                            fi += 1;
                        } else {
                            bi += 1;
                        }
                        tup.push(vid(sigma[bi], tau[fi]));
                    }
                    tops.push((tup, or_cell * sign));
                    top_base.push(si);
                }
            }
        }
        let name = format!("product({},{})", base.name, fiber.name);
        Self::assemble(
            name,
            p + q,
            coords,
            unit_blocks,
            tops,
            Some(ProductInfo {
                base: base.clone(),
                fiber: fiber.clone(),
                base_vertex,
                fiber_vertex,
                top_base,
            }),
        )
    }

    pub fn torus(n1: usize, n2: usize) -> Result<Arc<Mesh>> {
        Self::product(&Self::circle(n1)?, &Self::circle(n2)?)
    }

    fn assemble(
        name: String,
        dim: usize,
        coords: Vec<Vec<f64>>,
        unit_blocks: Vec<(usize, usize)>,
        tops: Vec<(Vec<usize>, f64)>,
        product: Option<ProductInfo>,
    ) -> Result<Arc<Mesh>> {
        for (tup, s) in &tops {
            if tup.windows(2).any(|w| w[0] >= w[1]) {
                return Err(CoreError::Mesh(format!("degenerate top simplex {tup:?}")));
            }
            if s.abs() != 1.0 {
                return Err(CoreError::Mesh(format!("unoriented top simplex {tup:?}")));
            }
        }
        let mut simplices: Vec<Vec<Vec<usize>>> = vec![Vec::new(); dim + 1];
        let orientation: Vec<f64> = tops.iter().map(|(_, s)| *s).collect();
        simplices[dim] = tops.into_iter().map(|(t, _)| t).collect();

        // Enumerate every face degree by peeling one vertex at a time.
        for p in (1..=dim).rev() {
            let mut seen: HashMap<Vec<usize>, ()> = HashMap::new();
            let mut level: Vec<Vec<usize>> = Vec::new();
            for tup in &simplices[p] {
                for k in 0..=p {
                    let mut face: Vec<usize> = Vec::with_capacity(p);
                    face.extend(tup.iter().take(k));
                    face.extend(tup.iter().skip(k + 1));
                    if seen.insert(face.clone(), ()).is_none() {
                        level.push(face);
                    }
                }
            }
            level.sort_unstable();
            simplices[p - 1] = level;
        }

        let index: Vec<HashMap<Vec<usize>, usize>> = simplices
            .iter()
            .map(|lvl| {
                lvl.iter()
                    .enumerate()
                    .map(|(i, t)| (t.clone(), i))
                    .collect()
            })
            .collect();

        let mut faces: Vec<Vec<Vec<(usize, f64)>>> = vec![Vec::new(); dim + 1];
        for p in 1..=dim {
            let mut lvl = Vec::with_capacity(simplices[p].len());
            for tup in &simplices[p] {
                let mut row = Vec::with_capacity(p + 1);
                for k in 0..=p {
                    let mut face: Vec<usize> = Vec::with_capacity(p);
                    face.extend(tup.iter().take(k));
                    face.extend(tup.iter().skip(k + 1));
                    let fi = index[p - 1][&face];
                    row.push((fi, if k % 2 == 0 { 1.0 } else { -1.0 }));
                }
                lvl.push(row);
            }
            faces[p] = lvl;
        }

        Ok(Arc::new(Mesh {
            name,
            dim,
            coords,
            unit_blocks,
            simplices,
            index,
            faces,
            orientation,
            product,
        }))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_vertices(&self) -> usize {
        self.coords.len()
    }

    pub fn num_simplices(&self, p: usize) -> usize {
        self.simplices[p].len()
    }

    pub fn simplices(&self, p: usize) -> &[Vec<usize>] {
        &self.simplices[p]
    }

    pub fn simplex_index(&self, p: usize, tuple: &[usize]) -> Option<usize> {
        self.index[p].get(tuple).copied()
    }

    /// Faces of the `i`-th `p`-simplex with alternating signs, in the
    /// order used by the boundary sum.
    pub fn face_terms(&self, p: usize, i: usize) -> &[(usize, f64)] {
        &self.faces[p][i]
    }

    pub fn vertex(&self, v: usize) -> &[f64] {
        &self.coords[v]
    }

    pub fn orientation(&self, top: usize) -> f64 {
        self.orientation[top]
    }

    pub fn product_info(&self) -> Option<&ProductInfo> {
        self.product.as_ref()
    }

    /// Point at parameter `t` on the edge from vertex `a` to vertex `b`,
    /// with the velocity of the parametrization. Linear interpolation
    /// followed by renormalization of each unit-sphere coordinate block.
    pub fn edge_point(&self, a: usize, b: usize, t: f64) -> (Vec<f64>, Vec<f64>) {
        let ca = &self.coords[a];
        let cb = &self.coords[b];
        let mut point: Vec<f64> = ca
            .iter()
            .zip(cb)
            .map(|(x, y)| (1.0 - t) * x + t * y)
            .collect();
        let mut vel: Vec<f64> = ca.iter().zip(cb).map(|(x, y)| y - x).collect();
        for &(off, len) in &self.unit_blocks {
            let u = &point[off..off + len];
            let du = &vel[off..off + len];
            let r2: f64 = u.iter().map(|x| x * x).sum();
            let r = r2.sqrt();
            let udu: f64 = u.iter().zip(du).map(|(x, y)| x * y).sum();
            let proj: Vec<f64> = u
                .iter()
                .zip(du)
                .map(|(x, y)| y / r - x * udu / (r2 * r))
                .collect();
            for k in 0..len {
                point[off + k] /= r;
                vel[off + k] = proj[k];
            }
        }
        (point, vel)
    }

    pub fn midpoint(&self, a: usize, b: usize) -> Vec<f64> {
        self.edge_point(a, b, 0.5).0
    }

    pub fn zero_cochain(&self, degree: usize) -> Cochain {
        Cochain {
            degree,
            values: vec![Complex64::new(0.0, 0.0); self.simplices[degree].len()],
        }
    }

    /// Exterior derivative: alternating sum over faces.
    pub fn d(&self, omega: &Cochain) -> Cochain {
        let p = omega.degree;
        assert!(p < self.dim, "cannot differentiate top-degree forms");
        let mut out = self.zero_cochain(p + 1);
        for (i, row) in self.faces[p + 1].iter().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for &(fi, s) in row {
                acc += omega.values[fi] * s;
            }
            out.values[i] = acc;
        }
        out
    }

    /// Front-face/back-face product of cochains.
    pub fn cup(&self, a: &Cochain, b: &Cochain) -> Cochain {
        let p = a.degree;
        let q = b.degree;
        assert!(p + q <= self.dim);
        let mut out = self.zero_cochain(p + q);
        for (i, tup) in self.simplices[p + q].iter().enumerate() {
            let front = self.index[p][&tup[..=p]];
            let back = self.index[q][&tup[p..]];
            out.values[i] = a.values[front] * b.values[back];
        }
        out
    }

    /// Pair a top-degree cochain with the oriented fundamental cycle.
    pub fn integrate(&self, omega: &Cochain) -> C64 {
        assert_eq!(omega.degree, self.dim);
        omega
            .values
            .iter()
            .zip(&self.orientation)
            .map(|(v, s)| v * *s)
            .sum()
    }

    /// Integrate a top-degree cochain over the fiber of a product mesh,
    /// producing a base-top-degree cochain on the base mesh: the signed
    /// sum over the product cells standing over each base cell.
    pub fn integrate_fiber(&self, omega: &Cochain) -> Result<Cochain> {
        let info = self
            .product
            .as_ref()
            .ok_or_else(|| CoreError::Mesh("fiber integration needs a product mesh".into()))?;
        assert_eq!(omega.degree, self.dim);
        let mut out = info.base.zero_cochain(info.base.dim);
        for (t, &bi) in info.top_base.iter().enumerate() {
            out.values[bi] += omega.values[t] * self.orientation[t];
        }
        for (bi, v) in out.values.iter_mut().enumerate() {
            *v *= info.base.orientation[bi];
        }
        Ok(out)
    }

    /// Pull a cochain on the base factor back along the projection.
    /// Simplices that project degenerately carry zero.
    pub fn pullback_base(&self, alpha: &Cochain) -> Result<Cochain> {
        self.pullback_factor(alpha, true)
    }

    /// Pull a cochain on the fiber factor back along the projection.
    pub fn pullback_fiber(&self, alpha: &Cochain) -> Result<Cochain> {
        self.pullback_factor(alpha, false)
    }

    fn pullback_factor(&self, alpha: &Cochain, base_side: bool) -> Result<Cochain> {
        let info = self
            .product
            .as_ref()
            .ok_or_else(|| CoreError::Mesh("pullback needs a product mesh".into()))?;
        let (factor, map) = if base_side {
            (&info.base, &info.base_vertex)
        } else {
            (&info.fiber, &info.fiber_vertex)
        };
        let p = alpha.degree;
        let mut out = self.zero_cochain(p);
        for (i, tup) in self.simplices[p].iter().enumerate() {
            let proj: Vec<usize> = tup.iter().map(|&v| map[v]).collect();
            if proj.windows(2).all(|w| w[0] < w[1]) {
                let fi = factor.index[p][&proj];
                out.values[i] = alpha.values[fi];
            }
        }
        Ok(out)
    }

    /// The angular 1-form of a circle mesh: each edge carries the
    /// principal angle advance between its endpoints. Integrates to
    /// `2*pi` around the fundamental cycle and is closed but not exact.
    pub fn circle_dtheta(&self) -> Result<Cochain> {
        if self.dim != 1 || self.coords[0].len() != 2 {
            return Err(CoreError::Mesh(format!(
                "{} is not a circle mesh",
                self.name
            )));
        }
        let mut out = self.zero_cochain(1);
        for (i, tup) in self.simplices[1].iter().enumerate() {
            let a = &self.coords[tup[0]];
            let b = &self.coords[tup[1]];
            let mut dt = b[1].atan2(b[0]) - a[1].atan2(a[0]);
            while dt > std::f64::consts::PI {
                dt -= 2.0 * std::f64::consts::PI;
            }
            while dt <= -std::f64::consts::PI {
                dt += 2.0 * std::f64::consts::PI;
            }
            out.values[i] = Complex64::new(dt, 0.0);
        }
        Ok(out)
    }

    /// Defect of the fundamental cycle under the boundary map; zero for
    /// a correctly oriented closed mesh.
    pub fn boundary_defect(&self) -> f64 {
        if self.dim == 0 {
            return 0.0;
        }
        let mut acc: HashMap<usize, f64> = HashMap::new();
        for (i, row) in self.faces[self.dim].iter().enumerate() {
            for &(fi, s) in row {
                *acc.entry(fi).or_insert(0.0) += s * self.orientation[i];
            }
        }
        acc.values().map(|v| v.abs()).fold(0.0, f64::max)
    }
}

fn det3(a: &[f64], b: &[f64], c: &[f64]) -> f64 {
    a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0])
        + a[2] * (b[0] * c[1] - b[1] * c[0])
}

fn det4(a: &[f64], b: &[f64], c: &[f64], d: &[f64]) -> f64 {
    let minor = |col: usize| {
        let pick = |row: &[f64]| {
            let mut out = [0.0; 3];
            let mut k = 0;
            for (j, &x) in row.iter().enumerate() {
                if j != col {
                    out[k] = x;
                    k += 1;
                }
            }
            out
        };
        det3(&pick(b), &pick(c), &pick(d))
    };
    let mut acc = 0.0;
    let mut sign = 1.0;
    for col in 0..4 {
        acc += sign * a[col] * minor(col);
        sign = -sign;
    }
    acc
}

/// Monotone lattice paths through a (p+1) x (q+1) grid, as move lists
/// (false = base step, true = fiber step) with the shuffle sign.
fn lattice_paths(p: usize, q: usize) -> Vec<(Vec<bool>, f64)> {
    let mut out = Vec::new();
    let mut moves = Vec::with_capacity(p + q);
    fn rec(
        bp: usize,
        fq: usize,
        p: usize,
        q: usize,
        inv: usize,
        moves: &mut Vec<bool>,
        out: &mut Vec<(Vec<bool>, f64)>,
    ) {
        if bp == p && fq == q {
            let sign = if inv % 2 == 0 { 1.0 } else { -1.0 };
            out.push((moves.clone(), sign));
            return;
        }
        if bp < p {
            // A base step is inverted against every fiber step already taken.
            moves.push(false);
            rec(bp + 1, fq, p, q, inv + fq, moves, out);
            moves.pop();
        }
        if fq < q {
            moves.push(true);
            rec(bp, fq + 1, p, q, inv, moves, out);
            moves.pop();
        }
    }
    rec(0, 0, p, q, 0, &mut moves, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_cochain(mesh: &Mesh, degree: usize, seed: u64) -> Cochain {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = mesh.zero_cochain(degree);
        for v in out.values.iter_mut() {
            *v = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
        out
    }

    #[test]
    fn fundamental_cycles_are_closed() {
        let meshes = vec![
            Mesh::circle(7).unwrap(),
            Mesh::sphere(8, 5).unwrap(),
            Mesh::sphere3(5, 4).unwrap(),
            Mesh::torus(5, 4).unwrap(),
            Mesh::product(&Mesh::sphere(6, 3).unwrap(), &Mesh::circle(4).unwrap()).unwrap(),
        ];
        for m in meshes {
            assert_eq!(m.boundary_defect(), 0.0, "mesh {}", m.name());
        }
    }

    #[test]
    fn d_squared_vanishes_and_stokes_holds() {
        let meshes = vec![
            Mesh::sphere(8, 5).unwrap(),
            Mesh::sphere3(5, 4).unwrap(),
            Mesh::product(&Mesh::sphere(6, 3).unwrap(), &Mesh::circle(4).unwrap()).unwrap(),
        ];
        for m in meshes {
            for p in 0..m.dim() - 1 {
                let omega = random_cochain(&m, p, 11 + p as u64);
                let dd = m.d(&m.d(&omega));
                assert!(dd.max_abs() < 1e-13, "d^2 on {} degree {p}", m.name());
            }
            let omega = random_cochain(&m, m.dim() - 1, 23);
            let total = m.integrate(&m.d(&omega));
            assert!(total.norm() < 1e-10, "Stokes on {}", m.name());
        }
    }

    #[test]
    fn circle_angular_form_integrates_to_two_pi() {
        let m = Mesh::circle(9).unwrap();
        let dtheta = m.circle_dtheta().unwrap();
        let total = m.integrate(&dtheta);
        assert!((total.re - 2.0 * std::f64::consts::PI).abs() < 1e-12);
        assert!(total.im.abs() < 1e-15);
    }

    #[test]
    fn cup_product_is_associative_and_leibniz() {
        let m = Mesh::sphere3(5, 4).unwrap();
        let a = random_cochain(&m, 1, 31);
        let b = random_cochain(&m, 1, 32);
        let c = random_cochain(&m, 1, 33);
        let left = m.cup(&m.cup(&a, &b), &c);
        let right = m.cup(&a, &m.cup(&b, &c));
        assert!(left.sub(&right).max_abs() < 1e-13);

        let da_b = m.cup(&m.d(&a), &b);
        let a_db = m.cup(&a, &m.d(&b)).scale(Complex64::new(-1.0, 0.0));
        let d_ab = m.d(&m.cup(&a, &b));
        assert!(d_ab.sub(&da_b.add(&a_db)).max_abs() < 1e-13);
    }

    #[test]
    fn torus_angular_forms_pair_to_four_pi_squared() {
        let m = Mesh::torus(6, 5).unwrap();
        let info = m.product_info().unwrap();
        let d1 = info.base.circle_dtheta().unwrap();
        let d2 = info.fiber.circle_dtheta().unwrap();
        let a = m.pullback_base(&d1).unwrap();
        let b = m.pullback_fiber(&d2).unwrap();
        let four_pi2 = 4.0 * std::f64::consts::PI * std::f64::consts::PI;
        let ab = m.integrate(&m.cup(&a, &b));
        assert!((ab.re - four_pi2).abs() < 1e-10, "got {ab}");
        let ba = m.integrate(&m.cup(&b, &a));
        assert!((ba.re + four_pi2).abs() < 1e-10, "got {ba}");
    }

    #[test]
    fn fiber_integration_factorizes() {
        let sphere = Mesh::sphere(6, 4).unwrap();
        let circle = Mesh::circle(5).unwrap();
        let m = Mesh::product(&sphere, &circle).unwrap();
        let alpha = random_cochain(&sphere, 2, 41);
        let dtheta = circle.circle_dtheta().unwrap();
        let omega = m.cup(
            &m.pullback_base(&alpha).unwrap(),
            &m.pullback_fiber(&dtheta).unwrap(),
        );
        let reduced = m.integrate_fiber(&omega).unwrap();
        let two_pi = Complex64::new(2.0 * std::f64::consts::PI, 0.0);
        for (i, v) in reduced.values.iter().enumerate() {
            assert!((v - alpha.values[i] * two_pi).norm() < 1e-12, "cell {i}");
        }
        let total = m.integrate(&omega);
        let expect = sphere.integrate(&alpha) * two_pi;
        assert!((total - expect).norm() < 1e-10);
    }

    #[test]
    fn edge_points_stay_on_sphere_with_consistent_velocity() {
        let m = Mesh::sphere(8, 5).unwrap();
        let (p, _) = m.edge_point(1, 2, 0.3);
        let r: f64 = p.iter().map(|x| x * x).sum();
        assert!((r - 1.0).abs() < 1e-14);
        let h = 1e-6;
        let (pp, _) = m.edge_point(1, 2, 0.3 + h);
        let (pm, _) = m.edge_point(1, 2, 0.3 - h);
        let (_, vel) = m.edge_point(1, 2, 0.3);
        for k in 0..3 {
            let fd = (pp[k] - pm[k]) / (2.0 * h);
            assert!((fd - vel[k]).abs() < 1e-8);
        }
    }
}
