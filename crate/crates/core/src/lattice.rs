//! Finite lattice windows, regions, and the locality metric.
//!
//! A [`Lattice`] is a finite window of Z^d (d = 1 or 2) with open or
//! periodic boundary, a uniform on-site dimension, and a marked origin.
//! Sites are addressed by a flat index in lexicographic coordinate order.
//! Regions are sorted site sets; [`Brick`] is an axis-aligned box used by
//! the brick decomposition of observables.

use crate::error::{CoreError, Result};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Boundary condition of the window.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum Boundary {
    Open,
    Periodic,
}

/// A finite lattice window of Z^d with uniform on-site dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    dims: Vec<usize>,
    boundary: Boundary,
    site_dim: usize,
    origin: Vec<i64>,
}

impl Lattice {
    /// New window. `dims` has length 1 or 2; `origin` is a coordinate
    /// inside the window, the reference point for half-space cuts and
    /// anchored homotopies.
    pub fn new(
        dims: Vec<usize>,
        boundary: Boundary,
        site_dim: usize,
        origin: Vec<i64>,
    ) -> Result<Arc<Self>> {
        if dims.is_empty() || dims.len() > 2 {
            return Err(CoreError::Config(format!(
                "lattice dimension must be 1 or 2, got {}",
                dims.len()
            )));
        }
        if dims.iter().any(|&n| n == 0) {
            return Err(CoreError::Config("lattice extents must be positive".into()));
        }
        if site_dim < 2 {
            return Err(CoreError::Config("site dimension must be at least 2".into()));
        }
        if origin.len() != dims.len() {
            return Err(CoreError::Config("origin rank must match lattice rank".into()));
        }
        for (axis, (&o, &n)) in origin.iter().zip(dims.iter()).enumerate() {
            if o < 0 || o >= n as i64 {
                return Err(CoreError::Config(format!(
                    "origin coordinate {o} outside window on axis {axis}"
                )));
            }
        }
        Ok(Arc::new(Self { dims, boundary, site_dim, origin }))
    }

    /// 1d chain with origin at site `origin`.
    pub fn chain_1d(n: usize, boundary: Boundary, site_dim: usize, origin: i64) -> Result<Arc<Self>> {
        Self::new(vec![n], boundary, site_dim, vec![origin])
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn site_dim(&self) -> usize {
        self.site_dim
    }

    pub fn num_sites(&self) -> usize {
        self.dims.iter().product()
    }

    /// Total Hilbert-space dimension `site_dim ^ num_sites` as u128.
    pub fn hilbert_dim(&self) -> u128 {
        (self.site_dim as u128).pow(self.num_sites() as u32)
    }

    /// Hilbert dimension if it fits in usize, else an error. Full-space
    /// vector pipelines require this.
    pub fn hilbert_dim_checked(&self) -> Result<usize> {
        let d = self.hilbert_dim();
        if d > (1u128 << 26) {
            return Err(CoreError::SupportTooLarge(format!(
                "full Hilbert dimension {d} exceeds the vector-pipeline cap"
            )));
        }
        Ok(d as usize)
    }

    pub fn origin(&self) -> &[i64] {
        &self.origin
    }

    /// Flat index of the origin site.
    pub fn origin_site(&self) -> u32 {
        let coords: Vec<i64> = self.origin.clone();
        self.site_index(&coords).expect("origin validated at construction")
    }

    /// Coordinates of flat site index (lexicographic, last axis fastest).
    pub fn site_coords(&self, site: u32) -> Vec<i64> {
        let mut rem = site as usize;
        let mut coords = vec![0i64; self.dims.len()];
        for axis in (0..self.dims.len()).rev() {
            coords[axis] = (rem % self.dims[axis]) as i64;
            rem /= self.dims[axis];
        }
        coords
    }

    /// Flat index of in-window coordinates.
    pub fn site_index(&self, coords: &[i64]) -> Result<u32> {
        if coords.len() != self.dims.len() {
            return Err(CoreError::Config("coordinate rank mismatch".into()));
        }
        let mut idx = 0usize;
        for (axis, &c) in coords.iter().enumerate() {
            if c < 0 || c >= self.dims[axis] as i64 {
                return Err(CoreError::Config(format!(
                    "coordinate {c} outside window on axis {axis}"
                )));
            }
            idx = idx * self.dims[axis] + c as usize;
        }
        Ok(idx as u32)
    }

    /// All sites in flat order.
    pub fn all_sites(&self) -> Vec<u32> {
        (0..self.num_sites() as u32).collect()
    }

    /// Per-axis separation honoring periodic wrap.
    fn axis_dist(&self, axis: usize, a: i64, b: i64) -> i64 {
        let raw = (a - b).abs();
        match self.boundary {
            Boundary::Open => raw,
            Boundary::Periodic => raw.min(self.dims[axis] as i64 - raw),
        }
    }

    /// L-infinity distance between sites.
    pub fn dist(&self, a: u32, b: u32) -> i64 {
        let ca = self.site_coords(a);
        let cb = self.site_coords(b);
        (0..self.dims.len())
            .map(|axis| self.axis_dist(axis, ca[axis], cb[axis]))
            .max()
            .unwrap_or(0)
    }

    /// Distance from a site to a region (min over region sites).
    pub fn dist_to_region(&self, site: u32, region: &Region) -> i64 {
        region
            .sites()
            .iter()
            .map(|&r| self.dist(site, r))
            .min()
            .unwrap_or(i64::MAX / 2)
    }

    /// Half space `{ x_axis <= 0 }` in coordinates relative to the origin.
    pub fn half_space(&self, axis: usize) -> Region {
        let sites = (0..self.num_sites() as u32)
            .filter(|&s| self.site_coords(s)[axis] <= self.origin[axis])
            .collect();
        Region::from_sorted(sites)
    }

    /// Region of all sites.
    pub fn full_region(&self) -> Region {
        Region::from_sorted(self.all_sites())
    }
}

/// A set of sites, stored sorted and deduplicated.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    sites: Vec<u32>,
}

impl Region {
    pub fn new(mut sites: Vec<u32>) -> Self {
        sites.sort_unstable();
        sites.dedup();
        Self { sites }
    }

    /// From already sorted, deduplicated input.
    pub fn from_sorted(sites: Vec<u32>) -> Self {
        debug_assert!(sites.windows(2).all(|w| w[0] < w[1]));
        Self { sites }
    }

    pub fn empty() -> Self {
        Self { sites: Vec::new() }
    }

    pub fn sites(&self) -> &[u32] {
        &self.sites
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn contains(&self, site: u32) -> bool {
        self.sites.binary_search(&site).is_ok()
    }

    pub fn union(&self, other: &Region) -> Region {
        let mut out = self.sites.clone();
        out.extend_from_slice(&other.sites);
        Region::new(out)
    }

    pub fn intersect(&self, other: &Region) -> Region {
        let sites = self.sites.iter().copied().filter(|&s| other.contains(s)).collect();
        Region::from_sorted(sites)
    }

    pub fn is_subset_of(&self, other: &Region) -> bool {
        self.sites.iter().all(|&s| other.contains(s))
    }

    pub fn complement(&self, lattice: &Lattice) -> Region {
        let sites = (0..lattice.num_sites() as u32).filter(|s| !self.contains(*s)).collect();
        Region::from_sorted(sites)
    }

    /// All sites within distance `r` of the region.
    pub fn fatten(&self, lattice: &Lattice, r: i64) -> Region {
        if r <= 0 {
            return self.clone();
        }
        let sites = (0..lattice.num_sites() as u32)
            .filter(|&s| lattice.dist_to_region(s, self) <= r)
            .collect();
        Region::from_sorted(sites)
    }
}

/// Check that fattened intersections stay controlled: for every radius
/// `r <= r_max`, `X(r) ∩ X'(r) ⊆ Y(ceil(c r))`.
pub fn is_stable_intersection(
    lattice: &Lattice,
    x: &Region,
    xp: &Region,
    y: &Region,
    c: f64,
    r_max: i64,
) -> bool {
    for r in 0..=r_max {
        let lhs = x.fatten(lattice, r).intersect(&xp.fatten(lattice, r));
        let rhs = y.fatten(lattice, (c * r as f64).ceil() as i64);
        if !lhs.is_subset_of(&rhs) {
            return false;
        }
    }
    true
}

/// Axis-aligned box of sites, inclusive on both ends, in absolute
/// coordinates. The brick decomposition labels components by these.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Brick {
    lo: Vec<i64>,
    hi: Vec<i64>,
}

impl Brick {
    pub fn new(lo: Vec<i64>, hi: Vec<i64>) -> Self {
        debug_assert_eq!(lo.len(), hi.len());
        debug_assert!(lo.iter().zip(&hi).all(|(a, b)| a <= b));
        Self { lo, hi }
    }

    /// Bounding box of a nonempty site set.
    pub fn bounding(lattice: &Lattice, sites: &[u32]) -> Self {
        let rank = lattice.rank();
        let mut lo = vec![i64::MAX; rank];
        let mut hi = vec![i64::MIN; rank];
        for &s in sites {
            let c = lattice.site_coords(s);
            for axis in 0..rank {
                lo[axis] = lo[axis].min(c[axis]);
                hi[axis] = hi[axis].max(c[axis]);
            }
        }
        Self { lo, hi }
    }

    /// Diameter: the largest per-axis extent, counting sites. A single
    /// site has diameter 1.
    pub fn diam(&self) -> i64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| b - a + 1)
            .max()
            .unwrap_or(1)
    }

    /// All lattice sites inside the box.
    pub fn sites(&self, lattice: &Lattice) -> Vec<u32> {
        let mut out = Vec::new();
        match self.lo.len() {
            1 => {
                for x in self.lo[0]..=self.hi[0] {
                    if let Ok(s) = lattice.site_index(&[x]) {
                        out.push(s);
                    }
                }
            }
            2 => {
                for x in self.lo[0]..=self.hi[0] {
                    for y in self.lo[1]..=self.hi[1] {
                        if let Ok(s) = lattice.site_index(&[x, y]) {
                            out.push(s);
                        }
                    }
                }
            }
            _ => unreachable!("lattice rank is 1 or 2"),
        }
        out.sort_unstable();
        out
    }

    pub fn num_sites(&self) -> i64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a + 1).product()
    }

    pub fn contains_site(&self, lattice: &Lattice, site: u32) -> bool {
        let c = lattice.site_coords(site);
        c.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(x, (a, b))| a <= x && x <= b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_roundtrip_2d() {
        let lat = Lattice::new(vec![3, 4], Boundary::Open, 2, vec![1, 1]).unwrap();
        for s in 0..lat.num_sites() as u32 {
            let c = lat.site_coords(s);
            assert_eq!(lat.site_index(&c).unwrap(), s);
        }
        assert_eq!(lat.num_sites(), 12);
        assert_eq!(lat.site_index(&[0, 0]).unwrap(), 0);
        assert_eq!(lat.site_index(&[0, 1]).unwrap(), 1);
        assert_eq!(lat.site_index(&[1, 0]).unwrap(), 4);
    }

    #[test]
    fn periodic_distance_wraps() {
        let lat = Lattice::chain_1d(8, Boundary::Periodic, 2, 0).unwrap();
        assert_eq!(lat.dist(0, 7), 1);
        assert_eq!(lat.dist(0, 4), 4);
        let open = Lattice::chain_1d(8, Boundary::Open, 2, 0).unwrap();
        assert_eq!(open.dist(0, 7), 7);
    }

    #[test]
    fn half_space_uses_origin() {
        let lat = Lattice::chain_1d(6, Boundary::Open, 2, 2).unwrap();
        let h = lat.half_space(0);
        assert_eq!(h.sites(), &[0, 1, 2]);
    }

    #[test]
    fn fatten_and_stability() {
        let lat = Lattice::chain_1d(10, Boundary::Open, 2, 0).unwrap();
        let x = Region::new(vec![0, 1, 2, 3, 4, 5]);
        let xp = Region::new(vec![4, 5, 6, 7, 8, 9]);
        let y = x.intersect(&xp);
        assert_eq!(y.sites(), &[4, 5]);
        assert_eq!(y.fatten(&lat, 2).sites(), &[2, 3, 4, 5, 6, 7]);
        assert!(is_stable_intersection(&lat, &x, &xp, &y, 2.0, 4));
    }

    #[test]
    fn brick_diam_counts_sites() {
        let lat = Lattice::new(vec![4, 4], Boundary::Open, 2, vec![0, 0]).unwrap();
        let b = Brick::bounding(&lat, &[0]);
        assert_eq!(b.diam(), 1);
        let b2 = Brick::bounding(&lat, &[lat.site_index(&[1, 1]).unwrap(), lat.site_index(&[2, 3]).unwrap()]);
        assert_eq!(b2.diam(), 3);
        assert_eq!(b2.num_sites(), 6);
    }
}
