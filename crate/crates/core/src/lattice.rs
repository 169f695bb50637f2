//! Product lattice `[0, n_t) × Z_{n_x}` with unit-speed causal structure.

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::ops::{FiberPairing, Section};
use crate::C64;

/// Time interval times spatial circle, signature (−,+).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpacetime {
    pub n_t: usize,
    pub n_x: usize,
    pub dt: f64,
    pub dx: f64,
}

impl LatticeSpacetime {
    pub fn new(n_t: usize, n_x: usize, dt: f64, dx: f64) -> Result<Self> {
        if n_t < 8 || n_x < 4 {
            return domain(format!("lattice {n_t}x{n_x} too small (need n_t >= 8, n_x >= 4)"));
        }
        if !(dt > 0.0 && dx > 0.0 && dt.is_finite() && dx.is_finite()) {
            return domain("spacings must be positive and finite");
        }
        Ok(Self { n_t, n_x, dt, dx })
    }

    pub fn n_points(&self) -> usize {
        self.n_t * self.n_x
    }

    /// Measure of one lattice cell, `dt·dx`.
    pub fn volume_weight(&self) -> f64 {
        self.dt * self.dx
    }

    /// Measure of one slice site, `dx`.
    pub fn area_weight(&self) -> f64 {
        self.dx
    }

    pub fn cfl(&self) -> f64 {
        self.dt / self.dx
    }

    pub fn index(&self, p: Point) -> usize {
        p.t * self.n_x + p.x
    }

    pub fn point(&self, idx: usize) -> Point {
        Point { t: idx / self.n_x, x: idx % self.n_x }
    }

    pub fn check(&self, p: Point) -> Result<()> {
        if p.t >= self.n_t || p.x >= self.n_x {
            return domain(format!("point ({}, {}) outside {}x{} lattice", p.t, p.x, self.n_t, self.n_x));
        }
        Ok(())
    }

    pub fn wrap_x(&self, x: i64) -> usize {
        x.rem_euclid(self.n_x as i64) as usize
    }

    pub fn circ_dist(&self, a: usize, b: usize) -> usize {
        circ_dist(self.n_x, a, b)
    }

    pub fn slice(&self, t: usize) -> BTreeSet<Point> {
        (0..self.n_x).map(|x| Point { t, x }).collect()
    }

    pub fn all_points(&self) -> BTreeSet<Point> {
        (0..self.n_points()).map(|i| self.point(i)).collect()
    }

    /// Whether `p` lies in the future cone of `q`.
    pub fn in_future_cone(&self, q: Point, p: Point) -> bool {
        p.t >= q.t && self.circ_dist(p.x, q.x) <= p.t - q.t
    }
}

pub fn circ_dist(n: usize, a: usize, b: usize) -> usize {
    let d = if a > b { a - b } else { b - a };
    d.min(n - d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Point {
    pub t: usize,
    pub x: usize,
}

impl Point {
    pub fn new(t: usize, x: usize) -> Self {
        Self { t, x }
    }
}

impl From<[usize; 2]> for Point {
    fn from(p: [usize; 2]) -> Self {
        Point { t: p[0], x: p[1] }
    }
}

impl From<Point> for [usize; 2] {
    fn from(p: Point) -> Self {
        [p.t, p.x]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Future,
    Past,
}

impl Direction {
    pub fn reverse(self) -> Self {
        match self {
            Direction::Future => Direction::Past,
            Direction::Past => Direction::Future,
        }
    }
}

/// Unit-speed cone over a boolean grid of `n_t × n_x` cells on a circle.
///
/// Used both on the index lattice and on the doubled grid that places cochain
/// components at half-integer positions.
pub fn sweep_cone(n_t: usize, n_x: usize, seeds: &[bool], dir: Direction) -> Vec<bool> {
    let mut out = seeds.to_vec();
    let step = |out: &mut Vec<bool>, from: usize, to: usize| {
        for x in 0..n_x {
            if out[from * n_x + x] {
                out[to * n_x + x] = true;
                out[to * n_x + (x + 1) % n_x] = true;
                out[to * n_x + (x + n_x - 1) % n_x] = true;
            }
        }
    };
    match dir {
        Direction::Future => {
            for t in 1..n_t {
                step(&mut out, t - 1, t);
            }
        }
        Direction::Past => {
            for t in (0..n_t.saturating_sub(1)).rev() {
                step(&mut out, t + 1, t);
            }
        }
    }
    out
}

fn mask(l: &LatticeSpacetime, a: &BTreeSet<Point>) -> Result<Vec<bool>> {
    let mut m = vec![false; l.n_points()];
    for &p in a {
        l.check(p)?;
        m[l.index(p)] = true;
    }
    Ok(m)
}

fn unmask(l: &LatticeSpacetime, m: &[bool]) -> BTreeSet<Point> {
    m.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| l.point(i)).collect()
}

pub fn causal_cone_set(l: &LatticeSpacetime, a: &BTreeSet<Point>, dir: Direction) -> Result<BTreeSet<Point>> {
    if a.is_empty() {
        return domain("causal cone of an empty set");
    }
    let m = mask(l, a)?;
    Ok(unmask(l, &sweep_cone(l.n_t, l.n_x, &m, dir)))
}

/// `J₊(a)`: union of the future cones of the members of `a`.
pub fn causal_future(l: &LatticeSpacetime, a: &BTreeSet<Point>) -> Result<BTreeSet<Point>> {
    causal_cone_set(l, a, Direction::Future)
}

pub fn causal_past(l: &LatticeSpacetime, a: &BTreeSet<Point>) -> Result<BTreeSet<Point>> {
    causal_cone_set(l, a, Direction::Past)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CausalCone {
    pub apex: Point,
    pub direction: Direction,
    pub speed: usize,
    pub members: BTreeSet<Point>,
}

impl CausalCone {
    pub fn new(l: &LatticeSpacetime, apex: Point, direction: Direction) -> Result<Self> {
        let members = causal_cone_set(l, &BTreeSet::from([apex]), direction)?;
        Ok(Self { apex, direction, speed: 1, members })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    #[serde(rename = "points")]
    members: BTreeSet<Point>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub is_causally_compatible: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contains_cauchy_slice: Option<bool>,
}

impl Region {
    pub fn new(members: BTreeSet<Point>) -> Result<Self> {
        if members.is_empty() {
            return domain("region must be nonempty");
        }
        Ok(Self { members, is_causally_compatible: None, contains_cauchy_slice: None })
    }

    /// Full time band `[t1, t2] × circle`.
    pub fn band(l: &LatticeSpacetime, t1: usize, t2: usize) -> Result<Self> {
        if t1 > t2 || t2 >= l.n_t {
            return domain(format!("band [{t1}, {t2}] outside [0, {})", l.n_t));
        }
        let members = (t1..=t2).flat_map(|t| l.slice(t)).collect();
        let mut r = Self::new(members)?;
        r.is_causally_compatible = Some(true);
        r.contains_cauchy_slice = Some(true);
        Ok(r)
    }

    /// Causal diamond `J₊(p) ∩ J₋(q)`.
    pub fn diamond(l: &LatticeSpacetime, p: Point, q: Point) -> Result<Self> {
        l.check(p)?;
        l.check(q)?;
        if !l.in_future_cone(p, q) {
            return domain("diamond tip is not in the future cone of its base");
        }
        let fut = causal_future(l, &BTreeSet::from([p]))?;
        let past = causal_past(l, &BTreeSet::from([q]))?;
        Self::new(fut.intersection(&past).copied().collect())
    }

    /// Diamond of half-height `h` centred at `c`.
    pub fn diamond_centered(l: &LatticeSpacetime, c: Point, h: usize) -> Result<Self> {
        if c.t < h || c.t + h >= l.n_t {
            return domain("diamond does not fit in the time interval");
        }
        Self::diamond(l, Point::new(c.t - h, c.x), Point::new(c.t + h, c.x))
    }

    pub fn from_pairs(pairs: &[[usize; 2]]) -> Result<Self> {
        Self::new(pairs.iter().map(|&p| Point::from(p)).collect())
    }

    pub fn to_pairs(&self) -> Vec<[usize; 2]> {
        self.members.iter().map(|&p| p.into()).collect()
    }

    pub fn members(&self) -> &BTreeSet<Point> {
        &self.members
    }

    pub fn contains(&self, p: Point) -> bool {
        self.members.contains(&p)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Fills both cached flags from recomputation.
    pub fn with_flags(mut self, l: &LatticeSpacetime) -> Result<Self> {
        self.is_causally_compatible = Some(is_causally_compatible(l, &self)?);
        self.contains_cauchy_slice = Some(is_cauchy_slice_region(l, &self)?);
        Ok(self)
    }

    pub fn time_range(&self) -> (usize, usize) {
        let lo = self.members.iter().map(|p| p.t).min().unwrap_or(0);
        let hi = self.members.iter().map(|p| p.t).max().unwrap_or(0);
        (lo, hi)
    }
}

/// Cone of `start` reached by unit causal steps that never leave `r`.
pub fn region_cone(l: &LatticeSpacetime, r: &Region, start: Point, dir: Direction) -> BTreeSet<Point> {
    let mut seen = BTreeSet::from([start]);
    let mut queue = VecDeque::from([start]);
    while let Some(p) = queue.pop_front() {
        let nt = match dir {
            Direction::Future if p.t + 1 < l.n_t => p.t + 1,
            Direction::Past if p.t > 0 => p.t - 1,
            _ => continue,
        };
        for dx in [-1i64, 0, 1] {
            let q = Point::new(nt, l.wrap_x(p.x as i64 + dx));
            if r.contains(q) && seen.insert(q) {
                queue.push_back(q);
            }
        }
    }
    seen
}

pub fn is_causally_compatible(l: &LatticeSpacetime, r: &Region) -> Result<bool> {
    if r.is_empty() {
        return domain("empty region");
    }
    let m = mask(l, r.members())?;
    for &p in r.members() {
        for dir in [Direction::Future, Direction::Past] {
            let inner = region_cone(l, r, p, dir);
            let mut seed = vec![false; l.n_points()];
            seed[l.index(p)] = true;
            let ambient = sweep_cone(l.n_t, l.n_x, &seed, dir);
            let count = ambient.iter().zip(&m).filter(|(a, b)| **a && **b).count();
            if count != inner.len() {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

pub fn is_cauchy_slice_region(l: &LatticeSpacetime, r: &Region) -> Result<bool> {
    if r.is_empty() {
        return domain("empty region");
    }
    let mut per_t = vec![0usize; l.n_t];
    for &p in r.members() {
        l.check(p)?;
        per_t[p.t] += 1;
    }
    Ok(per_t.iter().any(|&c| c == l.n_x))
}

/// `(J₊(r1) ∪ J₋(r1)) ∩ r2 = ∅`.
pub fn causally_disjoint(l: &LatticeSpacetime, r1: &Region, r2: &Region) -> Result<bool> {
    let f = causal_future(l, r1.members())?;
    let p = causal_past(l, r1.members())?;
    for q in r2.members() {
        l.check(*q)?;
        if f.contains(q) || p.contains(q) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// `Σ ⟨φ(t,x), ψ(t,x)⟩ dt·dx`, linear in `φ` and conjugate-linear in `ψ`.
pub fn spacetime_pairing(l: &LatticeSpacetime, pairing: &FiberPairing, phi: &Section, psi: &Section) -> Result<C64> {
    phi.check_compatible(psi)?;
    if phi.lattice() != l || phi.fiber_dim() != pairing.dim() {
        return crate::error::shape("section does not match lattice or pairing");
    }
    let k = phi.fiber_dim();
    let mut acc = C64::new(0.0, 0.0);
    for (u, v) in phi.values().chunks(k).zip(psi.values().chunks(k)) {
        acc += pairing.eval(u, v);
    }
    Ok(acc * l.volume_weight())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lat(n_t: usize, n_x: usize) -> LatticeSpacetime {
        LatticeSpacetime::new(n_t, n_x, 0.1, 0.1).unwrap()
    }

    #[test]
    fn rejects_small_lattices() {
        assert!(LatticeSpacetime::new(7, 8, 0.1, 0.1).is_err());
        assert!(LatticeSpacetime::new(8, 3, 0.1, 0.1).is_err());
        assert!(LatticeSpacetime::new(8, 4, 0.0, 0.1).is_err());
    }

    #[test]
    fn point_cone_matches_definition() {
        let l = lat(12, 8);
        let apex = Point::new(3, 0);
        let cone = causal_future(&l, &BTreeSet::from([apex])).unwrap();
        for p in l.all_points() {
            let expect = p.t >= 3 && l.circ_dist(p.x, 0) <= p.t - 3;
            assert_eq!(cone.contains(&p), expect, "{p:?}");
        }
    }

    #[test]
    fn full_slice_future_is_upper_band() {
        let l = lat(12, 8);
        let cone = causal_future(&l, &l.slice(5)).unwrap();
        assert_eq!(cone, (5..12).flat_map(|t| l.slice(t)).collect());
    }

    #[test]
    fn small_circle_saturates_at_distance_two() {
        let l = lat(8, 4);
        let cone = causal_future(&l, &BTreeSet::from([Point::new(0, 0)])).unwrap();
        assert_eq!(cone.iter().filter(|p| p.t == 1).count(), 3);
        assert_eq!(cone.iter().filter(|p| p.t == 2).count(), 4);
    }

    #[test]
    fn invalid_point_is_domain_error() {
        let l = lat(8, 8);
        assert!(causal_future(&l, &BTreeSet::from([Point::new(8, 0)])).is_err());
    }

    #[test]
    fn bands_and_diamonds_are_compatible() {
        let l = lat(12, 8);
        let band = Region::band(&l, 3, 7).unwrap();
        assert!(is_causally_compatible(&l, &band).unwrap());
        let d = Region::diamond(&l, Point::new(2, 3), Point::new(8, 3)).unwrap();
        assert!(is_causally_compatible(&l, &d).unwrap());
    }

    #[test]
    fn gapped_pair_is_not_compatible() {
        let l = lat(8, 8);
        let r = Region::from_pairs(&[[2, 3], [5, 4]]).unwrap();
        assert!(!is_causally_compatible(&l, &r).unwrap());
        // Spacelike separated points impose no condition.
        let r = Region::from_pairs(&[[2, 1], [2, 5]]).unwrap();
        assert!(is_causally_compatible(&l, &r).unwrap());
    }

    #[test]
    fn cauchy_slice_detection() {
        let l = lat(12, 16);
        assert!(is_cauchy_slice_region(&l, &Region::band(&l, 4, 6).unwrap()).unwrap());
        assert!(is_cauchy_slice_region(&l, &Region::new(l.slice(5)).unwrap()).unwrap());
        let d = Region::diamond_centered(&l, Point::new(5, 8), 2).unwrap();
        assert!(!is_cauchy_slice_region(&l, &d).unwrap());
    }

    #[test]
    fn disjointness_examples() {
        let l = lat(16, 16);
        let a = Region::diamond_centered(&l, Point::new(8, 2), 2).unwrap();
        let b = Region::diamond_centered(&l, Point::new(8, 10), 2).unwrap();
        assert!(causally_disjoint(&l, &a, &b).unwrap());
        assert!(causally_disjoint(&l, &b, &a).unwrap());
        let c = Region::diamond_centered(&l, Point::new(8, 4), 2).unwrap();
        assert!(!causally_disjoint(&l, &a, &c).unwrap());
        let later = Region::from_pairs(&[[13, 2]]).unwrap();
        assert!(!causally_disjoint(&l, &a, &later).unwrap());
    }

    #[test]
    fn region_serialises_as_pairs() {
        let r = Region::from_pairs(&[[3, 1], [1, 2]]).unwrap();
        let s = serde_json::to_string(&r.to_pairs()).unwrap();
        assert_eq!(s, "[[1,2],[3,1]]");
    }
}
