//! Z/2-harmonic 1-forms in branch-cut representation.
//!
//! A field valued in a real line bundle with -1 holonomy around odd-order
//! zeros is stored as an ordinary field plus cut descriptors; stencils and
//! interpolation flip the sign of values fetched across a cut. The norm and
//! the holonomy are exact in this representation. Closed-form models
//! `nu = Re(c z^{k/2} dz)` (t-invariant in dimension 3) supply fields whose
//! norm is exactly `c rho^{k/2}` at distance rho from the zero set, and the
//! quadratic-differential pipeline realizes `nu = e + conj(e)` with
//! `e = mu^{1/2}`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::{coder, comp_sets, extder, DiscreteForm, Grid};

/// One cut: a ray (dim 2) or half-plane (dim 3) anchored on a zero component.
///
/// In dimension 3 the zero set is the line through `anchor` along coordinate
/// axis `axis`, and the cut is the half-plane at polar angle `angle` in the
/// transverse plane. In dimension 2 `axis` is `None` and the zero is the
/// anchor point itself.
#[derive(Debug, Clone, Copy)]
pub struct Cut {
    pub anchor: [f64; 3],
    pub axis: Option<usize>,
    pub angle: f64,
}

impl Cut {
    /// Transverse-plane coordinate axes, right-handed around `axis`.
    fn plane_axes(&self) -> (usize, usize) {
        match self.axis {
            None => (0, 1),
            Some(a) => ((a + 1) % 3, (a + 2) % 3),
        }
    }

    fn to_plane(&self, x: [f64; 3]) -> [f64; 2] {
        let (e1, e2) = self.plane_axes();
        [x[e1] - self.anchor[e1], x[e2] - self.anchor[e2]]
    }

    /// Signed side of the cut line (0 counts as positive; ties are broken
    /// consistently so the crossing parity is a well-defined cocycle).
    fn side(&self, p: [f64; 2]) -> bool {
        let (dx, dy) = (self.angle.cos(), self.angle.sin());
        dx * p[1] - dy * p[0] >= 0.0
    }

    /// Whether the straight segment a -> b crosses this cut.
    pub fn crosses(&self, a: [f64; 3], b: [f64; 3]) -> bool {
        let pa = self.to_plane(a);
        let pb = self.to_plane(b);
        if self.side(pa) == self.side(pb) {
            return false;
        }
        // Intersection with the cut line; crossing only on the ray side.
        let (dx, dy) = (self.angle.cos(), self.angle.sin());
        let fa = dx * pa[1] - dy * pa[0];
        let fb = dx * pb[1] - dy * pb[0];
        let t = fa / (fa - fb);
        let q = [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])];
        q[0] * dx + q[1] * dy >= 0.0
    }

    /// Distance to the zero-set component this cut is anchored on.
    pub fn zero_distance(&self, x: [f64; 3], dim: usize) -> f64 {
        let p = self.to_plane(x);
        let mut d2 = p[0] * p[0] + p[1] * p[1];
        if dim == 2 {
            // anchor is a point; include any third-coordinate offset (none).
        }
        if self.axis.is_none() && dim == 3 {
            let dz = x[2] - self.anchor[2];
            d2 += dz * dz;
        }
        d2.sqrt()
    }
}

/// Sign picked up by fetching a value along the straight segment a -> b.
pub fn segment_sign(cuts: &[Cut], a: [f64; 3], b: [f64; 3]) -> f64 {
    let mut s = 1.0;
    for c in cuts {
        if c.crosses(a, b) {
            s = -s;
        }
    }
    s
}

/// Real-valued 1-form in branch-cut representation: the stored components are
/// one branch; stencils crossing a cut flip the fetched sign.
#[derive(Debug, Clone)]
pub struct CutBundleField {
    pub form: DiscreteForm<f64>,
    pub cuts: Vec<Cut>,
}

impl CutBundleField {
    pub fn grid(&self) -> Grid {
        self.form.grid()
    }

    /// Minimum distance from `x` to the zero set.
    pub fn zero_distance(&self, x: [f64; 3]) -> f64 {
        let dim = self.grid().dim();
        self.cuts
            .iter()
            .map(|c| c.zero_distance(x, dim))
            .fold(f64::INFINITY, f64::min)
    }

    fn fetch(&self, from_site: usize, to_site: usize, comp: usize) -> f64 {
        let grid = self.grid();
        let a = grid.position(from_site);
        let b = grid.position(to_site);
        segment_sign(&self.cuts, a, b) * self.form.get(to_site, comp)
    }

    /// Cut-aware forward-difference exterior derivative.
    pub fn extder(&self) -> DiscreteForm<f64> {
        let grid = self.grid();
        let dim = grid.dim();
        let h = grid.spacing();
        let src_sets = comp_sets(dim, 1);
        let dst_sets = comp_sets(dim, 2);
        let mut out = DiscreteForm::zero(grid, 2);
        for site in 0..grid.nsites() {
            for (ci, set) in dst_sets.iter().enumerate() {
                let mut acc = 0.0;
                for (j, &axis) in set.iter().enumerate() {
                    let rest: Vec<usize> = set.iter().copied().filter(|&a| a != axis).collect();
                    let src = src_sets.iter().position(|t| *t == rest).unwrap();
                    let nb = grid.neighbor(site, axis, 1);
                    let diff = (self.fetch(site, nb, src) - self.form.get(site, src)) / h;
                    acc += if j % 2 == 0 { diff } else { -diff };
                }
                out.set(site, ci, acc);
            }
        }
        out
    }

    /// Cut-aware backward-difference codifferential (0-form output).
    pub fn coder(&self) -> DiscreteForm<f64> {
        let grid = self.grid();
        let h = grid.spacing();
        let mut out = DiscreteForm::zero(grid, 0);
        for site in 0..grid.nsites() {
            let mut acc = 0.0;
            for axis in 0..grid.dim() {
                let nb = grid.neighbor(site, axis, -1);
                acc -= (self.form.get(site, axis) - self.fetch(site, nb, axis)) / h;
            }
            out.set(site, 0, acc);
        }
        out
    }

    /// Pointwise `|grad nu|^2` by cut-aware forward differences.
    pub fn grad_norm_sq_field(&self) -> DiscreteForm<f64> {
        let grid = self.grid();
        let h = grid.spacing();
        DiscreteForm::from_fn(grid, 0, |site| {
            let mut acc = 0.0;
            for mu in 0..grid.dim() {
                let nb = grid.neighbor(site, mu, 1);
                for c in 0..grid.dim() {
                    let d = (self.fetch(site, nb, c) - self.form.get(site, c)) / h;
                    acc += d * d;
                }
            }
            vec![acc]
        })
    }

    /// Cut-aware bilinear interpolation of the 1-form components at `x`,
    /// returned in the branch continuous at `x` (values transported to the
    /// side of the cuts `x` lies on).
    pub fn interp(&self, x: [f64; 3]) -> Vec<f64> {
        let grid = self.grid();
        let dim = grid.dim();
        let h = grid.spacing();
        let n = grid.n();
        let mut base = [0usize; 3];
        let mut frac = [0.0f64; 3];
        for a in 0..dim {
            let u = x[a] / h;
            let f = u.floor();
            base[a] = ((f as isize).rem_euclid(n as isize)) as usize;
            frac[a] = u - f;
        }
        let corners = 1usize << dim;
        let mut out = vec![0.0; dim];
        for mask in 0..corners {
            let mut c = base;
            let mut w = 1.0;
            for a in 0..dim {
                if mask & (1 << a) != 0 {
                    c[a] = (c[a] + 1) % n;
                    w *= frac[a];
                } else {
                    w *= 1.0 - frac[a];
                }
            }
            let site = grid.index(c);
            let sign = segment_sign(&self.cuts, x, grid.position(site));
            for (comp, o) in out.iter_mut().enumerate() {
                *o += w * sign * self.form.get(site, comp);
            }
        }
        out
    }
}

/// Closed-form model: `nu = Re(c z^{k/2} dz)` about `center`, extended
/// invariantly along `axis` in dimension 3. `|nu| = c rho^{k/2}` exactly.
#[derive(Debug, Clone, Copy)]
pub struct ModelZForm {
    pub k: u32,
    pub c: f64,
    pub center: [f64; 3],
    pub dim: usize,
    /// Invariant direction in dimension 3 (ignored in dimension 2).
    pub axis: usize,
    /// Polar angle of the branch cut in the transverse plane.
    pub cut_angle: f64,
}

impl ModelZForm {
    pub fn new(k: u32, c: f64, center: [f64; 3], dim: usize) -> Result<ModelZForm> {
        if k == 0 {
            return Err(Error::InvalidParam("model order k must be positive".into()));
        }
        if c < 0.0 {
            return Err(Error::InvalidParam("model amplitude must be nonnegative".into()));
        }
        if !(dim == 2 || dim == 3) {
            return Err(Error::InvalidParam("model dimension must be 2 or 3".into()));
        }
        Ok(ModelZForm { k, c, center, dim, axis: 2, cut_angle: std::f64::consts::PI })
    }

    pub fn with_cut_angle(mut self, angle: f64) -> ModelZForm {
        self.cut_angle = angle;
        self
    }

    pub fn with_axis(mut self, axis: usize) -> ModelZForm {
        self.axis = axis;
        self
    }

    pub fn half_order(&self) -> f64 {
        self.k as f64 / 2.0
    }

    pub fn cut(&self) -> Cut {
        Cut {
            anchor: self.center,
            axis: if self.dim == 3 { Some(self.axis) } else { None },
            angle: self.cut_angle,
        }
    }

    fn plane_axes(&self) -> (usize, usize) {
        if self.dim == 2 {
            (0, 1)
        } else {
            ((self.axis + 1) % 3, (self.axis + 2) % 3)
        }
    }

    fn plane_coords(&self, x: [f64; 3]) -> (f64, f64) {
        let (e1, e2) = self.plane_axes();
        (x[e1] - self.center[e1], x[e2] - self.center[e2])
    }

    /// Branch argument continuous off the cut ray, in `(angle-2pi, angle]`.
    fn branch_arg(&self, px: f64, py: f64) -> f64 {
        let raw = py.atan2(px);
        let mut rel = raw - self.cut_angle;
        while rel > 0.0 {
            rel -= std::f64::consts::TAU;
        }
        while rel <= -std::f64::consts::TAU {
            rel += std::f64::consts::TAU;
        }
        rel + self.cut_angle
    }

    /// Branch value of `f = c z^{k/2}` at `x`.
    pub fn f_value(&self, x: [f64; 3]) -> Complex64 {
        let (px, py) = self.plane_coords(x);
        let rho = (px * px + py * py).sqrt();
        let half = self.half_order();
        let arg = self.branch_arg(px, py);
        Complex64::from_polar(self.c * rho.powf(half), half * arg)
    }

    /// Distance to the zero set.
    pub fn rho(&self, x: [f64; 3]) -> f64 {
        let (px, py) = self.plane_coords(x);
        (px * px + py * py).sqrt()
    }

    /// `|nu|(x) = c rho^{k/2}`, exact everywhere including the zero set.
    pub fn norm(&self, x: [f64; 3]) -> f64 {
        self.c * self.rho(x).powf(self.half_order())
    }

    /// `|grad nu|^2 = 2 c^2 (k/2)^2 rho^{k-2}`, exact off the zero set.
    pub fn grad_norm_sq(&self, x: [f64; 3]) -> f64 {
        let n0 = self.half_order();
        2.0 * (self.c * n0).powi(2) * self.rho(x).powf(2.0 * n0 - 2.0)
    }

    /// Branch components of the 1-form at `x`; error on the zero set.
    pub fn eval(&self, x: [f64; 3]) -> Result<Vec<f64>> {
        if self.rho(x) == 0.0 {
            return Err(Error::InvalidParam("model form is undefined on the zero set".into()));
        }
        let f = self.f_value(x);
        let (e1, e2) = self.plane_axes();
        let mut out = vec![0.0; self.dim];
        out[e1] = f.re;
        out[e2] = -f.im;
        Ok(out)
    }

    /// Radial component `nu(d/dr)` with respect to `center` (dimension 3).
    pub fn radial_component(&self, x: [f64; 3]) -> f64 {
        let v = self.eval(x).expect("off the zero set");
        let mut dir = [0.0; 3];
        let mut r = 0.0;
        for a in 0..self.dim {
            dir[a] = x[a] - self.center[a];
            r += dir[a] * dir[a];
        }
        let r = r.sqrt();
        let mut acc = 0.0;
        for a in 0..self.dim {
            acc += v[a] * dir[a] / r;
        }
        acc
    }

    /// `|grad_r nu|^2 = (k/2)^2 |nu|^2 / r^2` for the exactly conical model.
    pub fn radial_grad_norm_sq(&self, x: [f64; 3]) -> f64 {
        let mut r2 = 0.0;
        for a in 0..self.dim {
            let d = x[a] - self.center[a];
            r2 += d * d;
        }
        let n0 = self.half_order();
        n0 * n0 * self.norm(x).powi(2) / r2
    }

    /// Sample the branch values on a grid.
    pub fn sample(&self, grid: Grid) -> Result<CutBundleField> {
        if grid.dim() != self.dim {
            return Err(Error::Mismatch("model/grid dimension".into()));
        }
        let mut form = DiscreteForm::zero(grid, 1);
        for s in 0..grid.nsites() {
            let x = grid.position(s);
            if self.rho(x) == 0.0 {
                continue; // leave zero at the singular site
            }
            let v = self.eval(x)?;
            for (c, val) in v.into_iter().enumerate() {
                form.set(s, c, val);
            }
        }
        Ok(CutBundleField { form, cuts: vec![self.cut()] })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct HarmonicityReport {
    /// L2 norm of the cut-aware exterior derivative over the exclusion region.
    pub d_norm: f64,
    /// L2 norm of the cut-aware codifferential over the exclusion region.
    pub dstar_norm: f64,
    /// Integrated Bochner residual `1/2 d*d|nu|^2 + |grad nu|^2` relative to
    /// the integral of `|grad nu|^2` over the same region.
    pub bochner_rel: f64,
}

/// Harmonicity residuals of a cut field away from its zero set.
pub fn harmonicity_residual(v: &CutBundleField, exclusion: f64) -> Result<HarmonicityReport> {
    let grid = v.grid();
    let h = grid.spacing();
    if exclusion < 4.0 * h {
        return Err(Error::InvalidParam(format!(
            "exclusion {exclusion} below 4h = {}",
            4.0 * h
        )));
    }
    let keep: Vec<bool> = (0..grid.nsites())
        .map(|s| v.zero_distance(grid.position(s)) > exclusion)
        .collect();
    let w = h.powi(grid.dim() as i32);

    let d = v.extder();
    let ds = v.coder();
    let mut d_sq = 0.0;
    let mut ds_sq = 0.0;
    for s in 0..grid.nsites() {
        if !keep[s] {
            continue;
        }
        for c in 0..d.ncomp() {
            d_sq += d.get(s, c) * d.get(s, c);
        }
        ds_sq += ds.get(s, 0) * ds.get(s, 0);
    }

    // (8.1)-type residual: |nu|^2 is single-valued, so the flat Laplacian
    // applies; |grad nu|^2 uses the cut-aware stencil.
    let norm_sq = DiscreteForm::from_fn(grid, 0, |s| {
        let mut acc = 0.0;
        for c in 0..grid.dim() {
            acc += v.form.get(s, c) * v.form.get(s, c);
        }
        vec![acc]
    });
    let lap = coder(&extder(&norm_sq).expect("degree")).expect("degree");
    let grad_sq = v.grad_norm_sq_field();
    let mut res = 0.0;
    let mut scale = 0.0;
    for s in 0..grid.nsites() {
        if !keep[s] {
            continue;
        }
        res += (0.5 * lap.get(s, 0) + grad_sq.get(s, 0)).abs();
        scale += grad_sq.get(s, 0);
    }

    Ok(HarmonicityReport {
        d_norm: (d_sq * w).sqrt(),
        dstar_norm: (ds_sq * w).sqrt(),
        bochner_rel: if scale > 0.0 { res / scale } else { 0.0 },
    })
}

/// Holonomy of the cut structure around a closed lattice loop: the product of
/// cut-crossing signs, exactly +1 or -1.
pub fn holonomy(v: &CutBundleField, loop_sites: &[usize]) -> Result<i32> {
    let grid = v.grid();
    let h = grid.spacing();
    if loop_sites.len() < 3 {
        return Err(Error::InvalidParam("loop needs at least 3 sites".into()));
    }
    let mut sign = 1.0;
    for i in 0..loop_sites.len() {
        let a = loop_sites[i];
        let b = loop_sites[(i + 1) % loop_sites.len()];
        let pa = grid.position(a);
        let pb = grid.position(b);
        let step: f64 = (0..grid.dim()).map(|c| (pb[c] - pa[c]).abs()).sum();
        if step > 1.5 * h {
            return Err(Error::InvalidParam(format!(
                "loop sites {a} and {b} are not lattice neighbors"
            )));
        }
        if v.zero_distance(pa) < 2.0 * h {
            return Err(Error::InvalidParam(format!(
                "loop passes within 2h of the zero set at site {a}"
            )));
        }
        sign *= segment_sign(&v.cuts, pa, pb);
    }
    Ok(if sign > 0.0 { 1 } else { -1 })
}

/// Holomorphic quadratic differential on a supported domain.
#[derive(Debug, Clone, Copy)]
pub enum QuadDiff {
    /// `mu = c dz^2` on the square torus (no zeros; 4G-4 = 0 for G = 1).
    TorusConstant { c: Complex64 },
    /// `mu = z^k dz^2` on the disk of radius `radius` about the grid center.
    DiskMonomial { k: u32, radius: f64 },
}

#[derive(Debug, Clone)]
pub struct QdOutput {
    /// Branch values of `e = mu^{1/2}` (a complex multiple of dz per site).
    pub e_values: Vec<Complex64>,
    /// `nu = e + conj(e)`, realized as a cut field.
    pub nu: CutBundleField,
    /// Zeros with multiplicities (empty on the torus).
    pub zeros: Vec<([f64; 3], u32)>,
    /// Relative Cauchy-Riemann residual of `e` off the cut and zero set.
    pub cr_residual: f64,
    /// Max of `|e^2 - mu|` over sampled sites (square-root recomposition).
    pub recompose_max_err: f64,
}

/// Realize the square root of a quadratic differential as a Z/2 one-form.
pub fn qd_pipeline(q: QuadDiff, grid: Grid) -> Result<QdOutput> {
    if grid.dim() != 2 {
        return Err(Error::InvalidParam("quadratic differentials live on surfaces".into()));
    }
    let center = [grid.len() / 2.0, grid.len() / 2.0, 0.0];
    let h = grid.spacing();

    let (f_of, mu_of, cuts, zeros): (
        Box<dyn Fn([f64; 3]) -> Complex64>,
        Box<dyn Fn([f64; 3]) -> Complex64>,
        Vec<Cut>,
        Vec<([f64; 3], u32)>,
    ) = match q {
        QuadDiff::TorusConstant { c } => {
            let root = c.sqrt();
            (
                Box::new(move |_| root),
                Box::new(move |_| c),
                Vec::new(),
                Vec::new(),
            )
        }
        QuadDiff::DiskMonomial { k, .. } => {
            let model = ModelZForm::new(k, 1.0, center, 2)?;
            (
                Box::new(move |x| model.f_value(x)),
                Box::new(move |x| {
                    let z = Complex64::new(x[0] - center[0], x[1] - center[1]);
                    z.powu(k)
                }),
                vec![model.cut()],
                vec![(center, k)],
            )
        }
    };

    let mut e_values = Vec::with_capacity(grid.nsites());
    let mut form = DiscreteForm::zero(grid, 1);
    let mut recompose_max_err: f64 = 0.0;
    for s in 0..grid.nsites() {
        let x = grid.position(s);
        let f = f_of(x);
        e_values.push(f);
        // nu = e + conj(e) = 2 Re(f dz) -> components (2 Re f, -2 Im f).
        form.set(s, 0, 2.0 * f.re);
        form.set(s, 1, -2.0 * f.im);
        recompose_max_err = recompose_max_err.max((f * f - mu_of(x)).norm());
    }
    let nu = CutBundleField { form, cuts: cuts.clone() };

    // Verify the claimed zero multiplicities by the argument principle: the
    // winding of mu around a small circle is exact for these families.
    let mut verified = Vec::new();
    for (p, mult) in &zeros {
        let r = grid.len() / 8.0;
        let samples = 256;
        let mut winding = 0.0;
        let mut prev = (mu_of([p[0] + r, p[1], 0.0])).arg();
        for i in 1..=samples {
            let th = i as f64 / samples as f64 * std::f64::consts::TAU;
            let x = [p[0] + r * th.cos(), p[1] + r * th.sin(), 0.0];
            let arg = mu_of(x).arg();
            let mut d = arg - prev;
            while d > std::f64::consts::PI {
                d -= std::f64::consts::TAU;
            }
            while d < -std::f64::consts::PI {
                d += std::f64::consts::TAU;
            }
            winding += d;
            prev = arg;
        }
        let counted = (winding / std::f64::consts::TAU).round() as i64;
        if counted != *mult as i64 {
            return Err(Error::InvalidParam(format!(
                "argument-principle count {counted} disagrees with multiplicity {mult}"
            )));
        }
        verified.push((*p, *mult));
    }

    // Cauchy-Riemann residual of e: dbar f = (d/dx + i d/dy) f / 2 by
    // cut-aware forward differences, relative to |grad f|.
    let sign = |a: [f64; 3], b: [f64; 3]| segment_sign(&cuts, a, b);
    let exclusion = 4.0 * h;
    let mut res_sq = 0.0;
    let mut scale_sq = 0.0;
    for s in 0..grid.nsites() {
        let x = grid.position(s);
        let far_enough = zeros
            .iter()
            .all(|(p, _)| ((x[0] - p[0]).powi(2) + (x[1] - p[1]).powi(2)).sqrt() > exclusion);
        if !far_enough {
            continue;
        }
        let xp = grid.position(grid.neighbor(s, 0, 1));
        let yp = grid.position(grid.neighbor(s, 1, 1));
        let fx = (sign(x, xp) * e_values[grid.neighbor(s, 0, 1)] - e_values[s]) / h;
        let fy = (sign(x, yp) * e_values[grid.neighbor(s, 1, 1)] - e_values[s]) / h;
        let dbar = 0.5 * (fx + Complex64::i() * fy);
        res_sq += dbar.norm_sqr();
        scale_sq += fx.norm_sqr() + fy.norm_sqr();
    }
    let cr_residual = if scale_sq > 0.0 { (res_sq / scale_sq).sqrt() } else { 0.0 };

    Ok(QdOutput { e_values, nu, zeros: verified, cr_residual, recompose_max_err })
}

#[derive(Debug, Clone)]
pub struct FoliationOutput {
    /// Traced leaves as polylines.
    pub leaves: Vec<Vec<[f64; 2]>>,
    /// Transverse measures of the declared transversal paths.
    pub measures: Vec<f64>,
}

/// Direction annihilated by the 1-form `(a, b)`: `(-b, a)` normalized.
fn kernel_dir(a: f64, b: f64) -> Option<[f64; 2]> {
    let n = (a * a + b * b).sqrt();
    if n < 1e-300 {
        return None;
    }
    Some([-b / n, a / n])
}

/// Trace leaves of `ker nu` from the seeds by midpoint (RK2) line-field
/// integration with per-step sign alignment, tracing both directions from
/// each seed. Leaves stop at `max_len`, at the chart margin, or within 2h of
/// a zero. Transverse measures integrate `|nu(unit tangent)|` along the
/// declared transversal polylines.
pub fn foliation_trace(
    v: &CutBundleField,
    seeds: &[[f64; 2]],
    step: f64,
    max_len: f64,
    transversals: &[Vec<[f64; 2]>],
) -> Result<FoliationOutput> {
    let grid = v.grid();
    if grid.dim() != 2 {
        return Err(Error::InvalidParam("foliation tracing is 2-dimensional".into()));
    }
    let h = grid.spacing();
    let lo = h;
    let hi = grid.len() - h;
    let inside = |p: [f64; 2]| p[0] > lo && p[0] < hi && p[1] > lo && p[1] < hi;

    let dir_at = |p: [f64; 2], align: Option<[f64; 2]>| -> Option<[f64; 2]> {
        let val = v.interp([p[0], p[1], 0.0]);
        let mut d = kernel_dir(val[0], val[1])?;
        if let Some(prev) = align {
            if d[0] * prev[0] + d[1] * prev[1] < 0.0 {
                d = [-d[0], -d[1]];
            }
        }
        Some(d)
    };

    let mut leaves = Vec::new();
    for seed in seeds {
        if v.zero_distance([seed[0], seed[1], 0.0]) < 2.0 * h {
            return Err(Error::InvalidParam(format!("seed {seed:?} on the zero set")));
        }
        let mut leaf: Vec<[f64; 2]> = Vec::new();
        for orientation in [1.0f64, -1.0] {
            let mut branch: Vec<[f64; 2]> = vec![*seed];
            let mut x = *seed;
            let mut prev = match dir_at(x, None) {
                Some(d) => [orientation * d[0], orientation * d[1]],
                None => continue,
            };
            let mut len = 0.0;
            while len < max_len {
                let d1 = match dir_at(x, Some(prev)) {
                    Some(d) => d,
                    None => break,
                };
                let mid = [x[0] + 0.5 * step * d1[0], x[1] + 0.5 * step * d1[1]];
                if !inside(mid) {
                    break;
                }
                let d2 = match dir_at(mid, Some(d1)) {
                    Some(d) => d,
                    None => break,
                };
                let next = [x[0] + step * d2[0], x[1] + step * d2[1]];
                if !inside(next) {
                    break;
                }
                x = next;
                prev = d2;
                len += step;
                branch.push(x);
                if v.zero_distance([x[0], x[1], 0.0]) < 2.0 * h {
                    break;
                }
            }
            if orientation > 0.0 {
                leaf = branch;
            } else {
                branch.reverse();
                branch.pop(); // seed already present
                let mut joined = branch;
                joined.extend(leaf.iter().copied());
                leaf = joined;
            }
        }
        leaves.push(leaf);
    }

    let mut measures = Vec::new();
    for path in transversals {
        measures.push(transverse_measure(v, path));
    }

    Ok(FoliationOutput { leaves, measures })
}

/// Integral of `|nu(unit tangent)|` along a polyline path.
pub fn transverse_measure(v: &CutBundleField, path: &[[f64; 2]]) -> f64 {
    let mut acc = 0.0;
    for w in path.windows(2) {
        let (a, b) = (w[0], w[1]);
        let dx = b[0] - a[0];
        let dy = b[1] - a[1];
        let len = (dx * dx + dy * dy).sqrt();
        if len == 0.0 {
            continue;
        }
        let mid = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0, 0.0];
        let val = v.interp(mid);
        acc += (val[0] * dx / len + val[1] * dy / len).abs() * len;
    }
    acc
}

#[derive(Debug, Clone, Copy)]
pub struct SphereEqReport {
    /// Residual of `d v_r = N0 v_perp` (the printed constant).
    pub printed_residual: f64,
    /// Least-squares coefficient in `d v_r = C v_perp` on the sample.
    pub fitted_coeff: f64,
    /// Residual at the fitted coefficient.
    pub fitted_residual: f64,
}

/// Restrict a 3-dimensional model to the unit sphere about its center, split
/// into radial and tangential parts, and compare `d_sphere v_r` against
/// multiples of `v_perp` on a latitude-longitude mesh (cut-aware in the
/// azimuthal direction). Residuals are relative to `|v_perp|`.
pub fn sphere_equation_residual(m: &ModelZForm, n_theta: usize) -> Result<SphereEqReport> {
    if m.dim != 3 {
        return Err(Error::InvalidParam("sphere restriction needs a 3-dimensional model".into()));
    }
    if n_theta < 8 {
        return Err(Error::InvalidParam("mesh too coarse".into()));
    }
    if m.c == 0.0 {
        return Ok(SphereEqReport { printed_residual: 0.0, fitted_coeff: 0.0, fitted_residual: 0.0 });
    }
    let n_phi = 2 * n_theta;
    let d_theta = std::f64::consts::PI / n_theta as f64;
    let d_phi = std::f64::consts::TAU / n_phi as f64;
    // Pole caps sit on the zero set; exclude a fixed angular margin.
    let margin = 0.3f64;

    // Orthonormal frame adapted to the model axis: the sphere poles on the
    // zero line, phi measured from the cut so crossings are explicit.
    let (e1, e2) = m.plane_axes();
    let axis = m.axis;

    let point = |theta: f64, phi: f64| -> [f64; 3] {
        let mut x = m.center;
        let ang = phi + m.cut_angle;
        x[e1] += theta.sin() * ang.cos();
        x[e2] += theta.sin() * ang.sin();
        x[axis] += theta.cos();
        x
    };

    // v_r sampled with a branch cut at phi = 0 (the cut meridian): values for
    // phi in (0, 2pi), sign flips when wrapping for odd k.
    let vr = |ti: usize, pj: usize| -> f64 {
        let theta = (ti as f64 + 0.5) * d_theta;
        let phi = (pj as f64 + 0.5) * d_phi;
        m.radial_component(point(theta, phi))
    };
    let wrap_sign = if m.k % 2 == 1 { -1.0 } else { 1.0 };

    let mut den = 0.0;
    let mut cross = 0.0;
    // (dvr_theta, dvr_phi, vperp_theta, vperp_phi, sin^2 theta, weight)
    let mut rows: Vec<(f64, f64, f64, f64, f64, f64)> = Vec::new();
    for ti in 1..(n_theta - 1) {
        let theta = (ti as f64 + 0.5) * d_theta;
        if theta < margin || theta > std::f64::consts::PI - margin {
            continue;
        }
        for pj in 0..n_phi {
            let phi = (pj as f64 + 0.5) * d_phi;
            // Central differences; the phi direction wraps through the cut.
            let dvr_t = (vr(ti + 1, pj) - vr(ti - 1, pj)) / (2.0 * d_theta);
            let pj_p = (pj + 1) % n_phi;
            let pj_m = (pj + n_phi - 1) % n_phi;
            let vp_plus = if pj + 1 == n_phi { wrap_sign * vr(ti, pj_p) } else { vr(ti, pj_p) };
            let vp_minus = if pj == 0 { wrap_sign * vr(ti, pj_m) } else { vr(ti, pj_m) };
            let dvr_p = (vp_plus - vp_minus) / (2.0 * d_phi);

            // Tangential part of the model form in the (theta, phi) basis.
            let x = point(theta, phi);
            let val = m.eval(x)?;
            let ang = phi + m.cut_angle;
            let dt = {
                // d point / d theta
                let mut v = [0.0; 3];
                v[e1] = theta.cos() * ang.cos();
                v[e2] = theta.cos() * ang.sin();
                v[axis] = -theta.sin();
                v
            };
            let dp = {
                let mut v = [0.0; 3];
                v[e1] = -theta.sin() * ang.sin();
                v[e2] = theta.sin() * ang.cos();
                v
            };
            let vp_t: f64 = (0..3).map(|a| val[a] * dt[a]).sum();
            let vp_p: f64 = (0..3).map(|a| val[a] * dp[a]).sum();

            let weight = theta.sin() * d_theta * d_phi;
            // Round-metric pairing: g^{theta theta} = 1, g^{phi phi} = 1/sin^2.
            let s2 = theta.sin() * theta.sin();
            den += (vp_t * vp_t + vp_p * vp_p / s2) * weight;
            cross += (dvr_t * vp_t + dvr_p * vp_p / s2) * weight;
            rows.push((dvr_t, dvr_p, vp_t, vp_p, s2, weight));
        }
    }
    if den == 0.0 {
        return Ok(SphereEqReport { printed_residual: 0.0, fitted_coeff: 0.0, fitted_residual: 0.0 });
    }
    let fitted = cross / den;
    let resid_at = |coeff: f64| -> f64 {
        let mut acc = 0.0;
        for (dvr_t, dvr_p, vp_t, vp_p, s2, weight) in &rows {
            let wt = dvr_t - coeff * vp_t;
            let wp = dvr_p - coeff * vp_p;
            acc += (wt * wt + wp * wp / s2) * weight;
        }
        (acc / den).sqrt()
    };
    let n0 = m.half_order();
    Ok(SphereEqReport {
        printed_residual: resid_at(n0),
        fitted_coeff: fitted,
        fitted_residual: resid_at(fitted),
    })
}
