//! Flat periodic lattices in dimension 2 and 3 with discrete exterior calculus.
//!
//! Forward differences build the exterior derivative, backward differences the
//! codifferential, so `<d a, b> = <a, d* b>` holds at machine precision and
//! `d o d = 0` exactly by stencil telescoping. The Hodge star is a pointwise
//! component permutation with flat-metric signs. Linear solves go through
//! conjugate gradients; the Helmholtz-type operators here are SPD by the exact
//! adjointness.

use crate::algebra::{Su2, Su2C};
use crate::error::{Error, Result};

/// Flat periodic lattice: `n` sites per side, period `len`, spacing `len/n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    dim: usize,
    n: usize,
    len: f64,
}

impl Grid {
    pub fn new(dim: usize, n: usize, len: f64) -> Result<Grid> {
        if !(dim == 2 || dim == 3) {
            return Err(Error::InvalidGrid(format!("dim must be 2 or 3, got {dim}")));
        }
        if n < 4 {
            return Err(Error::InvalidGrid(format!("n must be >= 4, got {n}")));
        }
        if !(len > 0.0) {
            return Err(Error::InvalidGrid(format!("period must be positive, got {len}")));
        }
        Ok(Grid { dim, n, len })
    }

    pub fn dim(self) -> usize {
        self.dim
    }

    pub fn n(self) -> usize {
        self.n
    }

    pub fn len(self) -> f64 {
        self.len
    }

    pub fn spacing(self) -> f64 {
        self.len / self.n as f64
    }

    pub fn nsites(self) -> usize {
        self.n.pow(self.dim as u32)
    }

    /// Decode a site index into lattice coordinates (unused axes are 0).
    pub fn coords(self, idx: usize) -> [usize; 3] {
        let n = self.n;
        match self.dim {
            2 => [idx / n, idx % n, 0],
            _ => [idx / (n * n), (idx / n) % n, idx % n],
        }
    }

    pub fn index(self, c: [usize; 3]) -> usize {
        let n = self.n;
        match self.dim {
            2 => c[0] * n + c[1],
            _ => (c[0] * n + c[1]) * n + c[2],
        }
    }

    /// Site index shifted by `step` (+1/-1) along `axis`, wrapping.
    pub fn neighbor(self, idx: usize, axis: usize, step: isize) -> usize {
        let mut c = self.coords(idx);
        let n = self.n as isize;
        let v = (c[axis] as isize + step).rem_euclid(n);
        c[axis] = v as usize;
        self.index(c)
    }

    /// Physical position of a site (components beyond `dim` are 0).
    pub fn position(self, idx: usize) -> [f64; 3] {
        let c = self.coords(idx);
        let h = self.spacing();
        [c[0] as f64 * h, c[1] as f64 * h, c[2] as f64 * h]
    }

    /// Minimum-image displacement from `from` to `to`.
    pub fn min_image(self, from: [f64; 3], to: [f64; 3]) -> [f64; 3] {
        let mut d = [0.0; 3];
        for (a, dv) in d.iter_mut().enumerate().take(self.dim) {
            let mut x = to[a] - from[a];
            x -= (x / self.len).round() * self.len;
            *dv = x;
        }
        d
    }

    pub fn distance(self, a: [f64; 3], b: [f64; 3]) -> f64 {
        let d = self.min_image(a, b);
        (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
    }
}

/// Scalar-like values a form can carry.
pub trait Value: Copy + Default + PartialEq + std::fmt::Debug {
    fn zero() -> Self;
    fn add(self, o: Self) -> Self;
    fn sub(self, o: Self) -> Self;
    fn scale(self, s: f64) -> Self;
    /// Real pairing used for L2 norms and adjointness.
    fn dot(self, o: Self) -> f64;
    /// Flatten to f64 components (for serialization).
    fn flat(self) -> Vec<f64>;
    fn flat_len() -> usize;
    fn from_flat(v: &[f64]) -> Self;
}

impl Value for f64 {
    fn zero() -> f64 {
        0.0
    }
    fn add(self, o: f64) -> f64 {
        self + o
    }
    fn sub(self, o: f64) -> f64 {
        self - o
    }
    fn scale(self, s: f64) -> f64 {
        self * s
    }
    fn dot(self, o: f64) -> f64 {
        self * o
    }
    fn flat(self) -> Vec<f64> {
        vec![self]
    }
    fn flat_len() -> usize {
        1
    }
    fn from_flat(v: &[f64]) -> f64 {
        v[0]
    }
}

impl Value for Su2 {
    fn zero() -> Su2 {
        Su2::ZERO
    }
    fn add(self, o: Su2) -> Su2 {
        self + o
    }
    fn sub(self, o: Su2) -> Su2 {
        self - o
    }
    fn scale(self, s: f64) -> Su2 {
        Su2::scale(self, s)
    }
    fn dot(self, o: Su2) -> f64 {
        crate::algebra::inner(self, o)
    }
    fn flat(self) -> Vec<f64> {
        vec![self.c1, self.c2, self.c3]
    }
    fn flat_len() -> usize {
        3
    }
    fn from_flat(v: &[f64]) -> Su2 {
        Su2::new(v[0], v[1], v[2])
    }
}

impl Value for Su2C {
    fn zero() -> Su2C {
        Su2C::ZERO
    }
    fn add(self, o: Su2C) -> Su2C {
        self + o
    }
    fn sub(self, o: Su2C) -> Su2C {
        self - o
    }
    fn scale(self, s: f64) -> Su2C {
        Su2C::new(self.re.scale(s), self.im.scale(s))
    }
    fn dot(self, o: Su2C) -> f64 {
        crate::algebra::inner(self.re, o.re) + crate::algebra::inner(self.im, o.im)
    }
    fn flat(self) -> Vec<f64> {
        vec![self.re.c1, self.re.c2, self.re.c3, self.im.c1, self.im.c2, self.im.c3]
    }
    fn flat_len() -> usize {
        6
    }
    fn from_flat(v: &[f64]) -> Su2C {
        Su2C::new(Su2::new(v[0], v[1], v[2]), Su2::new(v[3], v[4], v[5]))
    }
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let mut r = 1usize;
    for i in 0..k {
        r = r * (n - i) / (i + 1);
    }
    r
}

/// Sorted axis subsets indexing the components of a degree-p form.
pub fn comp_sets(dim: usize, degree: usize) -> Vec<Vec<usize>> {
    match (dim, degree) {
        (_, 0) => vec![vec![]],
        (2, 1) => vec![vec![0], vec![1]],
        (2, 2) => vec![vec![0, 1]],
        (3, 1) => vec![vec![0], vec![1], vec![2]],
        (3, 2) => vec![vec![0, 1], vec![0, 2], vec![1, 2]],
        (3, 3) => vec![vec![0, 1, 2]],
        _ => vec![],
    }
}

fn set_position(sets: &[Vec<usize>], s: &[usize]) -> usize {
    sets.iter().position(|t| t == s).expect("component set")
}

/// A p-cochain on a flat periodic lattice. Components per site follow the
/// lexicographic order of `comp_sets`; storage is site-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteForm<V: Value> {
    grid: Grid,
    degree: usize,
    ncomp: usize,
    comps: Vec<V>,
}

impl<V: Value> DiscreteForm<V> {
    pub fn zero(grid: Grid, degree: usize) -> DiscreteForm<V> {
        assert!(degree <= grid.dim(), "degree {} > dim {}", degree, grid.dim());
        let ncomp = binomial(grid.dim(), degree);
        DiscreteForm { grid, degree, ncomp, comps: vec![V::zero(); grid.nsites() * ncomp] }
    }

    /// Build from a per-site closure returning all components.
    pub fn from_fn(grid: Grid, degree: usize, mut f: impl FnMut(usize) -> Vec<V>) -> DiscreteForm<V> {
        let mut out = DiscreteForm::zero(grid, degree);
        for s in 0..grid.nsites() {
            let vals = f(s);
            debug_assert_eq!(vals.len(), out.ncomp);
            for (c, v) in vals.into_iter().enumerate() {
                out.set(s, c, v);
            }
        }
        out
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn ncomp(&self) -> usize {
        self.ncomp
    }

    pub fn get(&self, site: usize, comp: usize) -> V {
        self.comps[site * self.ncomp + comp]
    }

    pub fn set(&mut self, site: usize, comp: usize, v: V) {
        self.comps[site * self.ncomp + comp] = v;
    }

    pub fn raw(&self) -> &[V] {
        &self.comps
    }

    pub fn raw_mut(&mut self) -> &mut [V] {
        &mut self.comps
    }

    pub fn map(&self, f: impl Fn(V) -> V) -> DiscreteForm<V> {
        let mut out = self.clone();
        for v in out.comps.iter_mut() {
            *v = f(*v);
        }
        out
    }

    pub fn add(&self, o: &DiscreteForm<V>) -> DiscreteForm<V> {
        self.zip(o, |a, b| a.add(b))
    }

    pub fn sub(&self, o: &DiscreteForm<V>) -> DiscreteForm<V> {
        self.zip(o, |a, b| a.sub(b))
    }

    pub fn scale(&self, s: f64) -> DiscreteForm<V> {
        self.map(|v| v.scale(s))
    }

    pub fn axpy(&mut self, s: f64, o: &DiscreteForm<V>) {
        for (a, b) in self.comps.iter_mut().zip(o.comps.iter()) {
            *a = a.add(b.scale(s));
        }
    }

    fn zip(&self, o: &DiscreteForm<V>, f: impl Fn(V, V) -> V) -> DiscreteForm<V> {
        assert_eq!(self.degree, o.degree);
        assert_eq!(self.grid, o.grid);
        let mut out = self.clone();
        for (a, b) in out.comps.iter_mut().zip(o.comps.iter()) {
            *a = f(*a, *b);
        }
        out
    }

    /// L2 pairing `h^dim sum dot`.
    pub fn l2_inner(&self, o: &DiscreteForm<V>) -> f64 {
        assert_eq!(self.grid, o.grid);
        assert_eq!(self.degree, o.degree);
        let w = self.grid.spacing().powi(self.grid.dim() as i32);
        let mut acc = 0.0;
        for (a, b) in self.comps.iter().zip(o.comps.iter()) {
            acc += a.dot(*b);
        }
        acc * w
    }

    pub fn l2_norm_sq(&self) -> f64 {
        self.l2_inner(self)
    }

    pub fn l2_norm(&self) -> f64 {
        self.l2_norm_sq().sqrt()
    }

    /// Pointwise squared norm as a scalar field.
    pub fn norm_sq_field(&self) -> DiscreteForm<f64> {
        let mut out = DiscreteForm::<f64>::zero(self.grid, 0);
        for s in 0..self.grid.nsites() {
            let mut acc = 0.0;
            for c in 0..self.ncomp {
                let v = self.get(s, c);
                acc += v.dot(v);
            }
            out.set(s, 0, acc);
        }
        out
    }
}

/// Forward-difference exterior derivative; `extder(extder(w)) = 0` exactly.
pub fn extder<V: Value>(w: &DiscreteForm<V>) -> Result<DiscreteForm<V>> {
    let grid = w.grid();
    let (dim, p) = (grid.dim(), w.degree());
    if p >= dim {
        return Err(Error::Degree { op: "extder", degree: p, dim });
    }
    let src_sets = comp_sets(dim, p);
    let dst_sets = comp_sets(dim, p + 1);
    let h = grid.spacing();
    let mut out = DiscreteForm::zero(grid, p + 1);
    for site in 0..grid.nsites() {
        for (ci, set) in dst_sets.iter().enumerate() {
            let mut acc = V::zero();
            for (j, &axis) in set.iter().enumerate() {
                let rest: Vec<usize> = set.iter().copied().filter(|&a| a != axis).collect();
                let src = set_position(&src_sets, &rest);
                let fwd = w.get(grid.neighbor(site, axis, 1), src);
                let here = w.get(site, src);
                let diff = fwd.sub(here).scale(1.0 / h);
                let signed = if j % 2 == 0 { diff } else { diff.scale(-1.0) };
                acc = acc.add(signed);
            }
            out.set(site, ci, acc);
        }
    }
    Ok(out)
}

/// Backward-difference codifferential, the exact discrete adjoint of [`extder`]
/// for the `l2_inner` pairing.
pub fn coder<V: Value>(w: &DiscreteForm<V>) -> Result<DiscreteForm<V>> {
    let grid = w.grid();
    let (dim, p) = (grid.dim(), w.degree());
    if p == 0 {
        return Err(Error::Degree { op: "coder", degree: p, dim });
    }
    let src_sets = comp_sets(dim, p);
    let dst_sets = comp_sets(dim, p - 1);
    let h = grid.spacing();
    let mut out = DiscreteForm::zero(grid, p - 1);
    for site in 0..grid.nsites() {
        for (ci, set) in dst_sets.iter().enumerate() {
            let mut acc = V::zero();
            for axis in 0..dim {
                if set.contains(&axis) {
                    continue;
                }
                let mut sup: Vec<usize> = set.clone();
                let pos = sup.iter().position(|&a| a > axis).unwrap_or(sup.len());
                sup.insert(pos, axis);
                let src = set_position(&src_sets, &sup);
                let here = w.get(site, src);
                let back = w.get(grid.neighbor(site, axis, -1), src);
                // Adjoint of the forward difference is minus the backward one.
                let diff = here.sub(back).scale(-1.0 / h);
                let signed = if pos % 2 == 0 { diff } else { diff.scale(-1.0) };
                acc = acc.add(signed);
            }
            out.set(site, ci, acc);
        }
    }
    Ok(out)
}

/// Sign of the permutation sending `[set, complement]` to `0..dim`.
fn hodge_sign(dim: usize, set: &[usize]) -> f64 {
    let mut perm: Vec<usize> = set.to_vec();
    for a in 0..dim {
        if !set.contains(&a) {
            perm.push(a);
        }
    }
    let mut sign = 1.0;
    let mut p = perm.clone();
    for i in 0..p.len() {
        while p[i] != i {
            let j = p[i];
            p.swap(i, j);
            sign = -sign;
        }
    }
    sign
}

/// Flat-metric Hodge star: pointwise component permutation with signs;
/// `hodge(hodge(w)) = (-1)^{p(dim-p)} w`.
pub fn hodge<V: Value>(w: &DiscreteForm<V>) -> DiscreteForm<V> {
    let grid = w.grid();
    let (dim, p) = (grid.dim(), w.degree());
    let src_sets = comp_sets(dim, p);
    let dst_sets = comp_sets(dim, dim - p);
    let mut out = DiscreteForm::zero(grid, dim - p);
    for (si, set) in src_sets.iter().enumerate() {
        let comp: Vec<usize> = (0..dim).filter(|a| !set.contains(a)).collect();
        let di = set_position(&dst_sets, &comp);
        let sign = hodge_sign(dim, set);
        for site in 0..grid.nsites() {
            out.set(site, di, w.get(site, si).scale(sign));
        }
    }
    out
}

/// `h^dim` times the site sum; defined for degree 0 and top degree.
pub fn integrate<V: Value>(w: &DiscreteForm<V>) -> V {
    let grid = w.grid();
    debug_assert!(w.degree() == 0 || w.degree() == grid.dim());
    let mut acc = V::zero();
    for v in w.raw() {
        acc = acc.add(*v);
    }
    acc.scale(grid.spacing().powi(grid.dim() as i32))
}

/// Ball embedded in the fundamental domain (`r <= L/4`, no wrapping).
#[derive(Debug, Clone, Copy)]
pub struct BallRegion {
    pub center: [f64; 3],
    pub radius: f64,
}

impl BallRegion {
    pub fn new(grid: Grid, center: [f64; 3], radius: f64) -> Result<BallRegion> {
        if !(radius > 0.0 && radius <= grid.len() / 4.0) {
            return Err(Error::InvalidParam(format!(
                "ball radius {radius} outside (0, L/4] with L = {}",
                grid.len()
            )));
        }
        Ok(BallRegion { center, radius })
    }
}

/// `h^dim` weighted sum over sites with `|x - center| <= r`.
pub fn ball_integral(f: &DiscreteForm<f64>, ball: BallRegion) -> f64 {
    let grid = f.grid();
    debug_assert_eq!(f.degree(), 0);
    let w = grid.spacing().powi(grid.dim() as i32);
    let mut acc = 0.0;
    for s in 0..grid.nsites() {
        if grid.distance(grid.position(s), ball.center) <= ball.radius {
            acc += f.get(s, 0);
        }
    }
    acc * w
}

/// Boundary-integral estimate: sites with `r - t/2 < |x - center| <= r + t/2`,
/// weight `h^dim / t`. Default thickness is `2h`.
pub fn shell_integral(
    f: &DiscreteForm<f64>,
    center: [f64; 3],
    r: f64,
    thickness: Option<f64>,
) -> Result<f64> {
    let grid = f.grid();
    debug_assert_eq!(f.degree(), 0);
    let t = thickness.unwrap_or(2.0 * grid.spacing());
    let w = grid.spacing().powi(grid.dim() as i32) / t;
    let mut acc = 0.0;
    let mut count = 0usize;
    for s in 0..grid.nsites() {
        let d = grid.distance(grid.position(s), center);
        if d > r - 0.5 * t && d <= r + 0.5 * t {
            acc += f.get(s, 0);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::EmptyShell { r, thickness: t });
    }
    Ok(acc * w)
}

/// Conjugate gradients for an SPD operator in the `l2_inner` pairing.
pub fn cg_solve<V: Value>(
    op: impl Fn(&DiscreteForm<V>) -> DiscreteForm<V>,
    b: &DiscreteForm<V>,
    rel_tol: f64,
    max_iter: usize,
) -> Result<DiscreteForm<V>> {
    let mut x = DiscreteForm::<V>::zero(b.grid(), b.degree());
    let mut r = b.clone();
    let b_norm = b.l2_norm();
    if b_norm == 0.0 {
        return Ok(x);
    }
    let mut p = r.clone();
    let mut rs = r.l2_norm_sq();
    for _ in 0..max_iter {
        if rs.sqrt() <= rel_tol * b_norm {
            return Ok(x);
        }
        let ap = op(&p);
        let alpha = rs / p.l2_inner(&ap);
        x.axpy(alpha, &p);
        r.axpy(-alpha, &ap);
        let rs_new = r.l2_norm_sq();
        let beta = rs_new / rs;
        rs = rs_new;
        let mut p_new = r.clone();
        p_new.axpy(beta, &p);
        p = p_new;
    }
    if rs.sqrt() <= rel_tol * b_norm {
        Ok(x)
    } else {
        Err(Error::NonConvergence { iters: max_iter, residual: rs.sqrt() / b_norm })
    }
}

/// Solve `(d*d + dd* + m^2) u = f` to relative residual 1e-10.
///
/// Terms whose degree would overflow or underflow are absent. On the torus all
/// constants are harmonic, so `m > 0` is required.
pub fn solve_helmholtz<V: Value>(f: &DiscreteForm<V>, m: f64) -> Result<DiscreteForm<V>> {
    if !(m > 0.0) {
        return Err(Error::InvalidParam(format!(
            "helmholtz mass must be positive on the torus, got {m}"
        )));
    }
    let grid = f.grid();
    let degree = f.degree();
    let m2 = m * m;
    let op = move |u: &DiscreteForm<V>| -> DiscreteForm<V> {
        let mut out = u.scale(m2);
        if degree < grid.dim() {
            out = out.add(&coder(&extder(u).expect("degree checked")).expect("degree checked"));
        }
        if degree > 0 {
            out = out.add(&extder(&coder(u).expect("degree checked")).expect("degree checked"));
        }
        out
    };
    let max_iter = 10 * grid.nsites();
    cg_solve(op, f, 1e-10, max_iter)
}

/// Normalized indicator of the discrete radius-eps ball at `p`; integrates to 1
/// exactly by construction.
pub fn delta_bump(grid: Grid, p: [f64; 3], eps: f64) -> Result<DiscreteForm<f64>> {
    let mut sites = Vec::new();
    for s in 0..grid.nsites() {
        if grid.distance(grid.position(s), p) <= eps {
            sites.push(s);
        }
    }
    if sites.is_empty() {
        return Err(Error::InvalidParam(format!("no sites within eps = {eps} of the pole")));
    }
    let vol = grid.spacing().powi(grid.dim() as i32) * sites.len() as f64;
    let mut out = DiscreteForm::<f64>::zero(grid, 0);
    for s in sites {
        out.set(s, 0, 1.0 / vol);
    }
    Ok(out)
}

/// Regularized Green's function: solve `(d*d + 1) f = delta_{p,eps}` on a
/// 3-dimensional torus. Near the pole the profile matches
/// `1/(4 pi |x-p|) - z_p` up to the fitted constant.
pub fn greens_regularized(grid: Grid, p: [f64; 3], eps: f64) -> Result<DiscreteForm<f64>> {
    if grid.dim() != 3 {
        return Err(Error::InvalidParam("greens_regularized needs dim = 3".into()));
    }
    let h = grid.spacing();
    if !(eps > h && eps < grid.len() / 8.0) {
        return Err(Error::InvalidParam(format!(
            "eps = {eps} outside (h, L/8) = ({h}, {})",
            grid.len() / 8.0
        )));
    }
    let rhs = delta_bump(grid, p, eps)?;
    solve_helmholtz(&rhs, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::Su2;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn rand_form<V: Value>(
        grid: Grid,
        degree: usize,
        rng: &mut ChaCha8Rng,
        mk: impl Fn(&mut ChaCha8Rng) -> V,
    ) -> DiscreteForm<V> {
        let mut f = DiscreteForm::<V>::zero(grid, degree);
        for s in 0..grid.nsites() {
            for c in 0..f.ncomp() {
                let v = mk(rng);
                f.set(s, c, v);
            }
        }
        f
    }

    fn rand_su2(rng: &mut ChaCha8Rng) -> Su2 {
        Su2::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        )
    }

    #[test]
    fn d_squared_vanishes() {
        // Stencil telescoping: identically zero in exact arithmetic, so the
        // composed f64 result sits at the rounding floor of the first pass.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for dim in [2usize, 3] {
            let grid = Grid::new(dim, 8, 2.0).unwrap();
            let h = grid.spacing();
            let f = rand_form(grid, 0, &mut rng, rand_su2);
            let ddf = extder(&extder(&f).unwrap()).unwrap();
            let floor = 1e-14 * f.l2_norm() / (h * h);
            assert!(ddf.l2_norm() <= floor, "d^2 in dim {dim}: {}", ddf.l2_norm());
            if dim == 3 {
                let a = rand_form(grid, 1, &mut rng, rand_su2);
                let dda = extder(&extder(&a).unwrap()).unwrap();
                assert!(dda.l2_norm() <= 1e-14 * a.l2_norm() / (h * h));
            }
        }
    }

    #[test]
    fn coder_squared_vanishes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let grid = Grid::new(3, 8, 2.0).unwrap();
        let h = grid.spacing();
        let w = rand_form(grid, 3, &mut rng, rand_su2);
        let ccw = coder(&coder(&w).unwrap()).unwrap();
        assert!(ccw.l2_norm() <= 1e-14 * w.l2_norm() / (h * h));
    }

    #[test]
    fn extder_of_constant_vanishes() {
        let grid = Grid::new(2, 8, 1.0).unwrap();
        let f = DiscreteForm::from_fn(grid, 0, |_| vec![3.25f64]);
        assert_eq!(extder(&f).unwrap().l2_norm_sq(), 0.0);
        let a = DiscreteForm::from_fn(grid, 1, |_| vec![1.0f64, -2.0]);
        assert_eq!(coder(&a).unwrap().l2_norm_sq(), 0.0);
    }

    #[test]
    fn extder_matches_stencil_on_sine() {
        let grid = Grid::new(2, 16, 2.0).unwrap();
        let l = grid.len();
        let h = grid.spacing();
        let f = DiscreteForm::from_fn(grid, 0, |s| {
            let x = grid.position(s)[0];
            vec![(2.0 * PI * x / l).sin()]
        });
        let df = extder(&f).unwrap();
        for s in 0..grid.nsites() {
            let x = grid.position(s)[0];
            let want = ((2.0 * PI * (x + h) / l).sin() - (2.0 * PI * x / l).sin()) / h;
            assert!((df.get(s, 0) - want).abs() < 1e-13);
            assert_eq!(df.get(s, 1), 0.0);
        }
    }

    #[test]
    fn adjointness_all_degrees() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for dim in [2usize, 3] {
            let grid = Grid::new(dim, 6, 1.7).unwrap();
            for p in 0..dim {
                let a = rand_form(grid, p, &mut rng, rand_su2);
                let b = rand_form(grid, p + 1, &mut rng, rand_su2);
                let lhs = extder(&a).unwrap().l2_inner(&b);
                let rhs = a.l2_inner(&coder(&b).unwrap());
                let scale = a.l2_norm() * b.l2_norm();
                assert!(
                    (lhs - rhs).abs() <= 1e-12 * scale.max(1.0),
                    "adjointness dim {dim} deg {p}: {lhs} vs {rhs}"
                );
            }
        }
    }

    #[test]
    fn fourier_symbol_of_zero_form_laplacian() {
        // coder(extder f) on f = cos(2 pi x / L) equals lambda_h f with
        // lambda_h = (2/h sin(pi h / L))^2.
        let grid = Grid::new(2, 24, 3.0).unwrap();
        let l = grid.len();
        let h = grid.spacing();
        let f = DiscreteForm::from_fn(grid, 0, |s| {
            let x = grid.position(s)[0];
            vec![(2.0 * PI * x / l).cos()]
        });
        let lap = coder(&extder(&f).unwrap()).unwrap();
        let lam = (2.0 / h * (PI * h / l).sin()).powi(2);
        for s in 0..grid.nsites() {
            assert!((lap.get(s, 0) - lam * f.get(s, 0)).abs() < 1e-12);
        }
    }

    #[test]
    fn hodge_signs_and_involution() {
        let grid = Grid::new(3, 4, 1.0).unwrap();
        // dx -> dy^dz: component 0 of degree 1 to component (1,2) of degree 2.
        let mut a = DiscreteForm::<f64>::zero(grid, 1);
        for s in 0..grid.nsites() {
            a.set(s, 0, 1.0);
        }
        let sa = hodge(&a);
        for s in 0..grid.nsites() {
            assert_eq!(sa.get(s, 0), 0.0); // dx^dy
            assert_eq!(sa.get(s, 1), 0.0); // dx^dz
            assert_eq!(sa.get(s, 2), 1.0); // dy^dz
        }
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for dim in [2usize, 3] {
            let grid = Grid::new(dim, 4, 1.0).unwrap();
            for p in 0..=dim {
                let w = rand_form(grid, p, &mut rng, rand_su2);
                let ss = hodge(&hodge(&w));
                let sign = if (p * (dim - p)) % 2 == 0 { 1.0 } else { -1.0 };
                let diff = ss.sub(&w.scale(sign));
                assert_eq!(diff.l2_norm_sq(), 0.0, "dim {dim} deg {p}");
            }
        }
    }

    #[test]
    fn hodge_of_one_is_volume() {
        let grid = Grid::new(3, 4, 2.0).unwrap();
        let one = DiscreteForm::from_fn(grid, 0, |_| vec![1.0f64]);
        let vol = hodge(&one);
        assert_eq!(vol.degree(), 3);
        for s in 0..grid.nsites() {
            assert_eq!(vol.get(s, 0), 1.0);
        }
    }

    #[test]
    fn integrate_basics() {
        for dim in [2usize, 3] {
            let grid = Grid::new(dim, 12, 1.5).unwrap();
            let one = DiscreteForm::from_fn(grid, 0, |_| vec![1.0f64]);
            let total = integrate(&one);
            assert!((total - grid.len().powi(dim as i32)).abs() < 1e-12);
            let l = grid.len();
            let s1 = DiscreteForm::from_fn(grid, 0, |s| {
                let x = grid.position(s)[0];
                vec![(2.0 * PI * x / l).sin()]
            });
            assert!(integrate(&s1).abs() < 1e-12);
        }
        // Periodic trapezoid is exact on sin^2: integral = L^2 / 2 in dim 2.
        let grid = Grid::new(2, 16, 2.0).unwrap();
        let l = grid.len();
        let s2 = DiscreteForm::from_fn(grid, 0, |s| {
            let x = grid.position(s)[0];
            vec![(2.0 * PI * x / l).sin().powi(2)]
        });
        assert!((integrate(&s2) - l * l / 2.0).abs() < 1e-12);
    }

    #[test]
    fn refinement_rate_of_extder_is_first_order() {
        // For a smooth trig field the relative error of d against the analytic
        // derivative halves (ratio in [1.7, 2.3]) when n doubles.
        let mut errs = Vec::new();
        for n in [16usize, 32] {
            let grid = Grid::new(2, n, 2.0).unwrap();
            let l = grid.len();
            let f = DiscreteForm::from_fn(grid, 0, |s| {
                let p = grid.position(s);
                vec![(2.0 * PI * p[0] / l).sin() * (4.0 * PI * p[1] / l).cos()]
            });
            let df = extder(&f).unwrap();
            let exact = DiscreteForm::from_fn(grid, 1, |s| {
                let p = grid.position(s);
                let gx = 2.0 * PI / l * (2.0 * PI * p[0] / l).cos() * (4.0 * PI * p[1] / l).cos();
                let gy = -4.0 * PI / l * (2.0 * PI * p[0] / l).sin() * (4.0 * PI * p[1] / l).sin();
                vec![gx, gy]
            });
            errs.push(df.sub(&exact).l2_norm() / exact.l2_norm());
        }
        let ratio = errs[0] / errs[1];
        assert!((1.7..=2.3).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn ball_and_shell_against_analytic_values() {
        let grid = Grid::new(3, 48, 4.0).unwrap();
        let one = DiscreteForm::from_fn(grid, 0, |_| vec![1.0f64]);
        let h = grid.spacing();
        let c = [2.0 + 0.5 * h, 2.0 + 0.5 * h, 2.0 + 0.5 * h];
        let r = 9.0 * h;
        let ball = BallRegion::new(grid, c, r).unwrap();
        let vol = ball_integral(&one, ball);
        let want = 4.0 / 3.0 * PI * r.powi(3);
        assert!((vol - want).abs() / want < 0.05, "ball volume {vol} vs {want}");
        let area = shell_integral(&one, c, r, None).unwrap();
        let want_area = 4.0 * PI * r * r;
        assert!((area - want_area).abs() / want_area < 0.05, "shell {area} vs {want_area}");
        let zero = DiscreteForm::<f64>::zero(grid, 0);
        assert_eq!(ball_integral(&zero, ball), 0.0);
    }

    #[test]
    fn shell_rejects_empty() {
        let grid = Grid::new(2, 16, 1.0).unwrap();
        let one = DiscreteForm::from_fn(grid, 0, |_| vec![1.0f64]);
        let err = shell_integral(&one, [0.5, 0.5, 0.0], 0.2, Some(1e-6));
        assert!(matches!(err, Err(Error::EmptyShell { .. })));
    }

    #[test]
    fn helmholtz_constant_and_mode() {
        let grid = Grid::new(2, 16, 2.0).unwrap();
        let c = DiscreteForm::from_fn(grid, 0, |_| vec![2.5f64]);
        let u = solve_helmholtz(&c, 1.0).unwrap();
        for s in 0..grid.nsites() {
            assert!((u.get(s, 0) - 2.5).abs() < 1e-8);
        }
        let l = grid.len();
        let h = grid.spacing();
        let f = DiscreteForm::from_fn(grid, 0, |s| {
            let x = grid.position(s)[0];
            vec![(2.0 * PI * x / l).sin()]
        });
        let u = solve_helmholtz(&f, 1.0).unwrap();
        let lam = (2.0 / h * (PI * h / l).sin()).powi(2);
        let expect = f.scale(1.0 / (lam + 1.0));
        assert!(u.sub(&expect).l2_norm() / expect.l2_norm() < 1e-8);
        let z = DiscreteForm::<f64>::zero(grid, 0);
        assert_eq!(solve_helmholtz(&z, 1.0).unwrap().l2_norm_sq(), 0.0);
    }

    #[test]
    fn delta_bump_normalized() {
        let grid = Grid::new(3, 16, 4.0).unwrap();
        let d = delta_bump(grid, [2.0, 2.0, 2.0], 0.5).unwrap();
        assert!((integrate(&d) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn greens_regularized_profile() {
        // Profile vs the near-pole expansion 1/(4 pi rho) - z with the constant
        // fitted; the expansion needs rho well below the screening length, so
        // eps = 2h and probes live in [eps, 2 eps]. Decay far from the pole.
        let grid = Grid::new(3, 64, 8.0).unwrap();
        let p = [4.0, 4.0, 4.0];
        let eps = 0.25;
        let f = greens_regularized(grid, p, eps).unwrap();
        // Sample mean of f - 1/(4 pi rho) over probe shell radii in [eps, 2 eps]
        // fits the constant.
        let probes = [1.0 * eps, 1.5 * eps, 2.0 * eps];
        let mut fitted = Vec::new();
        for &r in &probes {
            let mut num = 0.0;
            let mut den = 0usize;
            for s in 0..grid.nsites() {
                let d = grid.distance(grid.position(s), p);
                if (d - r).abs() <= 0.5 * grid.spacing() {
                    num += f.get(s, 0) - 1.0 / (4.0 * PI * d);
                    den += 1;
                }
            }
            assert!(den > 0);
            fitted.push(num / den as f64);
        }
        let z = fitted.iter().sum::<f64>() / fitted.len() as f64;
        // Value check at rho = 2 eps.
        let r = 2.0 * eps;
        let mut got = 0.0;
        let mut cnt = 0usize;
        for s in 0..grid.nsites() {
            let d = grid.distance(grid.position(s), p);
            if (d - r).abs() <= 0.5 * grid.spacing() {
                got += f.get(s, 0);
                cnt += 1;
            }
        }
        got /= cnt as f64;
        let want = 1.0 / (4.0 * PI * r) + z;
        assert!(
            (got - want).abs() / want.abs() < 0.1,
            "profile at 2 eps: {got} vs {want} (z = {z})"
        );
        // Far field decays below 1e-3 of the peak.
        let peak = f.raw().iter().cloned().fold(f64::MIN, f64::max);
        let mut far_max: f64 = 0.0;
        for s in 0..grid.nsites() {
            if grid.distance(grid.position(s), p) > 5.0 {
                far_max = far_max.max(f.get(s, 0).abs());
            }
        }
        assert!(far_max < 1e-3 * peak, "far field {far_max} vs peak {peak}");
    }

    #[test]
    fn greens_rejects_bad_eps() {
        let grid = Grid::new(3, 16, 4.0).unwrap();
        assert!(greens_regularized(grid, [2.0; 3], 0.1).is_err());
        assert!(greens_regularized(grid, [2.0; 3], 1.0).is_err());
    }
}
