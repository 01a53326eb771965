//! Exact su(2) and sl(2,C) coefficient arithmetic.
//!
//! Elements are stored as coefficient vectors in the basis `tau_i = -(i/2) sigma_i`
//! (`sigma_i` the Pauli matrices), so that
//!
//! * `[tau_i, tau_j] = eps_{ijk} tau_k`  (bracket = cross product of coefficients),
//! * `<tau_i, tau_j> = -tr(tau_i tau_j) = delta_ij / 2`.
//!
//! The trace form is kept literal rather than rescaled to an orthonormal basis;
//! every identity checked downstream is covariant under that normalization.
//! The 2x2 matrix realization exists only in the test oracle.

use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use num_complex::Complex64;

/// Element of su(2): coefficients in the tau basis.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Su2 {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl Su2 {
    pub const ZERO: Su2 = Su2 { c1: 0.0, c2: 0.0, c3: 0.0 };

    pub fn new(c1: f64, c2: f64, c3: f64) -> Self {
        Su2 { c1, c2, c3 }
    }

    /// Basis element `tau_i`, `i` in 0..3.
    pub fn tau(i: usize) -> Self {
        match i {
            0 => Su2::new(1.0, 0.0, 0.0),
            1 => Su2::new(0.0, 1.0, 0.0),
            2 => Su2::new(0.0, 0.0, 1.0),
            _ => panic!("tau index out of range: {i}"),
        }
    }

    pub fn scale(self, s: f64) -> Self {
        Su2::new(self.c1 * s, self.c2 * s, self.c3 * s)
    }

    pub fn norm_sq(self) -> f64 {
        inner(self, self)
    }

    pub fn coeffs(self) -> [f64; 3] {
        [self.c1, self.c2, self.c3]
    }
}

impl Add for Su2 {
    type Output = Su2;
    fn add(self, o: Su2) -> Su2 {
        Su2::new(self.c1 + o.c1, self.c2 + o.c2, self.c3 + o.c3)
    }
}

impl AddAssign for Su2 {
    fn add_assign(&mut self, o: Su2) {
        *self = *self + o;
    }
}

impl Sub for Su2 {
    type Output = Su2;
    fn sub(self, o: Su2) -> Su2 {
        Su2::new(self.c1 - o.c1, self.c2 - o.c2, self.c3 - o.c3)
    }
}

impl SubAssign for Su2 {
    fn sub_assign(&mut self, o: Su2) {
        *self = *self - o;
    }
}

impl Neg for Su2 {
    type Output = Su2;
    fn neg(self) -> Su2 {
        self.scale(-1.0)
    }
}

impl Mul<f64> for Su2 {
    type Output = Su2;
    fn mul(self, s: f64) -> Su2 {
        self.scale(s)
    }
}

/// Lie bracket; the cross product of coefficient vectors.
pub fn bracket(u: Su2, v: Su2) -> Su2 {
    Su2::new(
        u.c2 * v.c3 - u.c3 * v.c2,
        u.c3 * v.c1 - u.c1 * v.c3,
        u.c1 * v.c2 - u.c2 * v.c1,
    )
}

/// Trace pairing `<u, v> = -tr(uv)`; positive definite, `<tau_i, tau_j> = delta_ij/2`.
pub fn inner(u: Su2, v: Su2) -> f64 {
    0.5 * (u.c1 * v.c1 + u.c2 * v.c2 + u.c3 * v.c3)
}

/// Element of sl(2,C) = su(2) + i su(2).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Su2C {
    pub re: Su2,
    pub im: Su2,
}

impl Su2C {
    pub const ZERO: Su2C = Su2C { re: Su2::ZERO, im: Su2::ZERO };

    pub fn new(re: Su2, im: Su2) -> Self {
        Su2C { re, im }
    }

    pub fn from_real(re: Su2) -> Self {
        Su2C { re, im: Su2::ZERO }
    }

    /// Complex coefficient of `tau_i`.
    pub fn coeff(self, i: usize) -> Complex64 {
        let r = self.re.coeffs()[i];
        let m = self.im.coeffs()[i];
        Complex64::new(r, m)
    }

    pub fn scale(self, s: Complex64) -> Self {
        let mut out = Su2C::ZERO;
        let rr = self.re.scale(s.re) - self.im.scale(s.im);
        let ii = self.re.scale(s.im) + self.im.scale(s.re);
        out.re = rr;
        out.im = ii;
        out
    }

    /// Hermitian square norm: `|re|^2 + |im|^2` in the trace pairing.
    pub fn norm_sq(self) -> f64 {
        inner(self.re, self.re) + inner(self.im, self.im)
    }
}

impl Add for Su2C {
    type Output = Su2C;
    fn add(self, o: Su2C) -> Su2C {
        Su2C::new(self.re + o.re, self.im + o.im)
    }
}

impl Sub for Su2C {
    type Output = Su2C;
    fn sub(self, o: Su2C) -> Su2C {
        Su2C::new(self.re - o.re, self.im - o.im)
    }
}

impl Neg for Su2C {
    type Output = Su2C;
    fn neg(self) -> Su2C {
        Su2C::new(-self.re, -self.im)
    }
}

/// Complex-bilinear bracket on sl(2,C); the cross product of complex coefficients.
pub fn bracket_c(u: Su2C, v: Su2C) -> Su2C {
    let a = [u.coeff(0), u.coeff(1), u.coeff(2)];
    let b = [v.coeff(0), v.coeff(1), v.coeff(2)];
    let c = [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ];
    Su2C::new(
        Su2::new(c[0].re, c[1].re, c[2].re),
        Su2::new(c[0].im, c[1].im, c[2].im),
    )
}

/// Complex-bilinear trace pairing `tr(uv)` on sl(2,C).
///
/// Restricted to real elements this is `-inner(u, v)`, i.e. `tr(tau_i tau_j) =
/// -delta_ij/2`. This is the pairing integrated by the Chern-Simons functional;
/// the flows module pairs with its negative (the bilinear extension of `inner`)
/// so that descent directions carry no stray sign.
pub fn complex_trace_pair(u: Su2C, v: Su2C) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..3 {
        acc += u.coeff(i) * v.coeff(i);
    }
    -0.5 * acc
}

/// Trace of a triple product, `tr(u v w) = -tr(u [v,w]) / ... `; concretely
/// `tr(uvw) = -(1/4) det[c(u); c(v); c(w)]` extended complex-bilinearly.
pub fn complex_trace_triple(u: Su2C, v: Su2C, w: Su2C) -> Complex64 {
    // tr(uvw) = (1/2) tr(u [v,w]) since the anticommutator of sl(2) elements
    // is a multiple of the identity.
    0.5 * complex_trace_pair(u, bracket_c(v, w))
}

/// Unit quaternion representing an SU(2) group element.
///
/// The adjoint action on su(2) coefficients is the quaternion rotation; the
/// +/-1 lift ambiguity is invisible there. `exp(sum c_i tau_i)` corresponds to
/// the quaternion `(cos(|c|/2), sin(|c|/2) c/|c|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuTwo {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl SuTwo {
    pub const IDENTITY: SuTwo = SuTwo { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };

    pub fn norm(self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn normalized(self) -> SuTwo {
        let n = self.norm();
        SuTwo { w: self.w / n, x: self.x / n, y: self.y / n, z: self.z / n }
    }

    pub fn inverse(self) -> SuTwo {
        SuTwo { w: self.w, x: -self.x, y: -self.y, z: -self.z }
    }

    pub fn mul(self, o: SuTwo) -> SuTwo {
        SuTwo {
            w: self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            x: self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            y: self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            z: self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        }
    }

    /// Group exponential of an su(2) element.
    pub fn exp(u: Su2) -> SuTwo {
        let c = u.coeffs();
        let t = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
        if t < 1e-300 {
            return SuTwo::IDENTITY;
        }
        let half = 0.5 * t;
        let s = half.sin() / t;
        SuTwo { w: half.cos(), x: s * c[0], y: s * c[1], z: s * c[2] }.normalized()
    }

    /// Group logarithm back to su(2); the branch nearest the identity.
    pub fn log(self) -> Su2 {
        let v = (self.x * self.x + self.y * self.y + self.z * self.z).sqrt();
        if v < 1e-300 {
            return Su2::ZERO;
        }
        let half = v.atan2(self.w);
        let s = 2.0 * half / v;
        Su2::new(s * self.x, s * self.y, s * self.z)
    }

    /// Adjoint action on su(2): rotate the coefficient vector.
    pub fn rotate(self, u: Su2) -> Su2 {
        // q (0,v) q^-1 as quaternion product, expanded.
        let q = self;
        let (vx, vy, vz) = (u.c1, u.c2, u.c3);
        let tx = 2.0 * (q.y * vz - q.z * vy);
        let ty = 2.0 * (q.z * vx - q.x * vz);
        let tz = 2.0 * (q.x * vy - q.y * vx);
        Su2::new(
            vx + q.w * tx + (q.y * tz - q.z * ty),
            vy + q.w * ty + (q.z * tx - q.x * tz),
            vz + q.w * tz + (q.x * ty - q.y * tx),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64 as C;
    use proptest::prelude::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    /// 2x2 complex matrix oracle. All algebra identities are checked against
    /// literal Pauli-matrix arithmetic.
    #[derive(Clone, Copy, Debug)]
    struct Mat2([[C; 2]; 2]);

    impl Mat2 {
        fn zero() -> Self {
            Mat2([[C::new(0.0, 0.0); 2]; 2])
        }

        fn sigma(i: usize) -> Self {
            let o = C::new(0.0, 0.0);
            let l = C::new(1.0, 0.0);
            let mi = C::new(0.0, -1.0);
            let pi = C::new(0.0, 1.0);
            match i {
                0 => Mat2([[o, l], [l, o]]),
                1 => Mat2([[o, mi], [pi, o]]),
                2 => Mat2([[l, o], [o, -l]]),
                _ => unreachable!(),
            }
        }

        /// tau_i = -(i/2) sigma_i.
        fn tau(i: usize) -> Self {
            Mat2::sigma(i).scale(C::new(0.0, -0.5))
        }

        fn scale(self, s: C) -> Self {
            let mut m = Mat2::zero();
            for r in 0..2 {
                for c in 0..2 {
                    m.0[r][c] = self.0[r][c] * s;
                }
            }
            m
        }

        fn add(self, o: Mat2) -> Self {
            let mut m = Mat2::zero();
            for r in 0..2 {
                for c in 0..2 {
                    m.0[r][c] = self.0[r][c] + o.0[r][c];
                }
            }
            m
        }

        fn mul(self, o: Mat2) -> Self {
            let mut m = Mat2::zero();
            for r in 0..2 {
                for c in 0..2 {
                    for k in 0..2 {
                        m.0[r][c] += self.0[r][k] * o.0[k][c];
                    }
                }
            }
            m
        }

        fn trace(self) -> C {
            self.0[0][0] + self.0[1][1]
        }

        fn comm(self, o: Mat2) -> Self {
            self.mul(o).add(o.mul(self).scale(C::new(-1.0, 0.0)))
        }
    }

    fn to_mat(u: Su2) -> Mat2 {
        let c = u.coeffs();
        let mut m = Mat2::zero();
        for i in 0..3 {
            m = m.add(Mat2::tau(i).scale(C::new(c[i], 0.0)));
        }
        m
    }

    fn to_mat_c(u: Su2C) -> Mat2 {
        to_mat(u.re).add(to_mat(u.im).scale(C::new(0.0, 1.0)))
    }

    fn from_mat(m: Mat2) -> Su2 {
        // Invert the tau expansion: coefficients are -2 Re tr(m tau_i^dag)-ish;
        // since the tau are an orthogonal basis for -tr, c_i = -2 tr(m tau_i).
        let mut c = [0.0; 3];
        for (i, ci) in c.iter_mut().enumerate() {
            let t = m.mul(Mat2::tau(i)).trace();
            *ci = -2.0 * t.re;
        }
        Su2::new(c[0], c[1], c[2])
    }

    fn rand_su2(rng: &mut ChaCha8Rng) -> Su2 {
        Su2::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        )
    }

    #[test]
    fn bracket_structure_constants() {
        let b = bracket(Su2::tau(0), Su2::tau(1));
        assert_eq!(b, Su2::tau(2));
        // Matrix route agrees.
        let m = Mat2::tau(0).comm(Mat2::tau(1));
        let back = from_mat(m);
        assert!((back - Su2::tau(2)).norm_sq() < 1e-28);
    }

    #[test]
    fn bracket_antisymmetry_on_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let u = rand_su2(&mut rng);
            assert_eq!(bracket(u, u), Su2::ZERO);
        }
    }

    #[test]
    fn ad_invariance_random_triples() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let (u, v, w) = (rand_su2(&mut rng), rand_su2(&mut rng), rand_su2(&mut rng));
            let lhs = inner(bracket(w, u), v) + inner(u, bracket(w, v));
            assert!(lhs.abs() < 1e-14, "ad-invariance violated: {lhs}");
        }
    }

    #[test]
    fn inner_matches_matrix_trace() {
        // inner(tau1, tau1) = -tr(tau1^2) = 0.5 by the matrix oracle.
        let m = Mat2::tau(0).mul(Mat2::tau(0)).trace();
        assert!((inner(Su2::tau(0), Su2::tau(0)) - (-m.re)).abs() < 1e-15);
        assert!((inner(Su2::tau(0), Su2::tau(0)) - 0.5).abs() < 1e-15);
        assert_eq!(inner(Su2::tau(0), Su2::tau(1)), 0.0);
        assert_eq!(inner(Su2::ZERO, Su2::tau(2)), 0.0);
    }

    #[test]
    fn complex_trace_pair_matrix_oracle() {
        // tr(tau1 tau1) = -0.5 ; tr(i tau1 tau1) = -0.5 i ; tr(0 v) = 0.
        let t1 = Su2C::from_real(Su2::tau(0));
        let it1 = Su2C::new(Su2::ZERO, Su2::tau(0));
        let p = complex_trace_pair(t1, t1);
        assert!((p - C::new(-0.5, 0.0)).norm() < 1e-15);
        let q = complex_trace_pair(it1, t1);
        assert!((q - C::new(0.0, -0.5)).norm() < 1e-15);
        assert_eq!(complex_trace_pair(Su2C::ZERO, it1), C::new(0.0, 0.0));

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let u = Su2C::new(rand_su2(&mut rng), rand_su2(&mut rng));
            let v = Su2C::new(rand_su2(&mut rng), rand_su2(&mut rng));
            let got = complex_trace_pair(u, v);
            let want = to_mat_c(u).mul(to_mat_c(v)).trace();
            assert!((got - want).norm() < 1e-13);
            // Symmetric and bilinear over C: check symmetry here.
            let sym = complex_trace_pair(v, u);
            assert!((got - sym).norm() < 1e-13);
        }
    }

    #[test]
    fn complex_trace_triple_matrix_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let u = Su2C::new(rand_su2(&mut rng), rand_su2(&mut rng));
            let v = Su2C::new(rand_su2(&mut rng), rand_su2(&mut rng));
            let w = Su2C::new(rand_su2(&mut rng), rand_su2(&mut rng));
            let got = complex_trace_triple(u, v, w);
            let want = to_mat_c(u).mul(to_mat_c(v)).mul(to_mat_c(w)).trace();
            assert!((got - want).norm() < 1e-13, "{got} vs {want}");
        }
    }

    #[test]
    fn quaternion_exp_log_rotate() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..50 {
            let u = rand_su2(&mut rng);
            let g = SuTwo::exp(u);
            assert!((g.norm() - 1.0).abs() < 1e-12);
            let back = g.log();
            assert!((back - u).norm_sq() < 1e-20);
            // Adjoint action preserves inner.
            let v = rand_su2(&mut rng);
            let gv = g.rotate(v);
            assert!((gv.norm_sq() - v.norm_sq()).abs() < 1e-13);
            // Ad(exp u) u = u.
            let gu = g.rotate(u);
            assert!((gu - u).norm_sq() < 1e-24);
        }
    }

    proptest! {
        #[test]
        fn jacobi_identity(
            a in proptest::array::uniform3(-10.0f64..10.0),
            b in proptest::array::uniform3(-10.0f64..10.0),
            c in proptest::array::uniform3(-10.0f64..10.0),
        ) {
            let u = Su2::new(a[0], a[1], a[2]);
            let v = Su2::new(b[0], b[1], b[2]);
            let w = Su2::new(c[0], c[1], c[2]);
            let j = bracket(u, bracket(v, w)) + bracket(v, bracket(w, u)) + bracket(w, bracket(u, v));
            let scale = 1.0 + u.norm_sq() * v.norm_sq() + w.norm_sq();
            prop_assert!(j.norm_sq().sqrt() <= 1e-11 * scale);
        }

        #[test]
        fn inner_positive_definite(a in proptest::array::uniform3(-10.0f64..10.0)) {
            let u = Su2::new(a[0], a[1], a[2]);
            prop_assert!(inner(u, u) >= 0.0);
            if inner(u, u) == 0.0 {
                prop_assert_eq!(u, Su2::ZERO);
            }
        }
    }
}
