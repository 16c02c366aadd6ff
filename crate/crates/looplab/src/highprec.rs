//! 256-bit reference evaluations of the closed-form residuals.
//!
//! Every function here mirrors a formula from [`crate::weights`] but carries
//! out the arithmetic in 256-bit floating point, rounding only the final
//! result to `f64`. The double-precision implementations are tested against
//! these, and the command line can switch to them for residual evaluation.

use astro_float::{BigFloat, Consts, RoundingMode, Sign};
use num_complex::Complex64;

const PREC: usize = 256;
const RM: RoundingMode = RoundingMode::ToEven;

/// Rounds a `BigFloat` to the nearest `f64` via its top 128 mantissa bits.
fn to_f64(x: &BigFloat) -> f64 {
    if x.is_zero() {
        return 0.0;
    }
    if x.is_nan() {
        return f64::NAN;
    }
    if x.is_inf_pos() {
        return f64::INFINITY;
    }
    if x.is_inf_neg() {
        return f64::NEG_INFINITY;
    }
    let (words, _, sign, exponent, _) = x.as_raw_parts().expect("finite number has raw parts");
    // mantissa words are little endian; the value is fraction * 2^exponent
    // with the fraction in [1/2, 1)
    let len = words.len();
    let hi = words[len - 1] as u128;
    let lo = if len >= 2 { words[len - 2] as u128 } else { 0 };
    let top = (hi << 64) | lo;
    let v = (top as f64) * (exponent as f64 - 128.0).exp2();
    if sign == Sign::Neg {
        -v
    } else {
        v
    }
}

/// Complex number with 256-bit components.
#[derive(Clone)]
struct C {
    re: BigFloat,
    im: BigFloat,
}

impl C {
    fn real(x: BigFloat) -> Self {
        Self {
            re: x,
            im: BigFloat::from_f64(0.0, PREC),
        }
    }

    fn add(&self, o: &Self) -> Self {
        Self {
            re: self.re.add(&o.re, PREC, RM),
            im: self.im.add(&o.im, PREC, RM),
        }
    }

    fn sub(&self, o: &Self) -> Self {
        Self {
            re: self.re.sub(&o.re, PREC, RM),
            im: self.im.sub(&o.im, PREC, RM),
        }
    }

    fn scale(&self, x: &BigFloat) -> Self {
        Self {
            re: self.re.mul(x, PREC, RM),
            im: self.im.mul(x, PREC, RM),
        }
    }

    fn rounded(&self) -> Complex64 {
        Complex64::new(to_f64(&self.re), to_f64(&self.im))
    }
}

/// Evaluation context holding the constants cache.
pub struct HighPrecision {
    cc: Consts,
}

impl Default for HighPrecision {
    fn default() -> Self {
        Self::new()
    }
}

impl HighPrecision {
    pub fn new() -> Self {
        Self {
            cc: Consts::new().expect("constants cache allocation"),
        }
    }

    fn f(&self, x: f64) -> BigFloat {
        BigFloat::from_f64(x, PREC)
    }

    fn pi(&mut self) -> BigFloat {
        self.cc.pi(PREC, RM)
    }

    fn sin(&mut self, x: &BigFloat) -> BigFloat {
        x.sin(PREC, RM, &mut self.cc)
    }

    fn cos(&mut self, x: &BigFloat) -> BigFloat {
        x.cos(PREC, RM, &mut self.cc)
    }

    /// `exp(i s theta)` as a 256-bit complex value.
    fn phase(&mut self, s: &BigFloat, theta: &BigFloat) -> C {
        let arg = s.mul(theta, PREC, RM);
        C {
            re: self.cos(&arg),
            im: self.sin(&arg),
        }
    }

    /// Dense weights `(a, b, n, s)` at `alpha` for family `ell`.
    fn dense_weights(&mut self, alpha: f64, lambda: f64, ell: i32) -> [BigFloat; 4] {
        let pi = self.pi();
        let lam = self.f(lambda);
        let al = self.f(alpha);
        let ellf = self.f(ell as f64);
        let k = lam.div(&pi, PREC, RM).sub(&ellf, PREC, RM);
        let sign = self.f(if ell % 2 == 0 { 1.0 } else { -1.0 });
        let a = self.sin(&k.mul(&al, PREC, RM)).mul(&sign, PREC, RM);
        let b_arg = k.mul(&pi.sub(&al, PREC, RM), PREC, RM);
        let b = self.sin(&b_arg);
        let n = self.cos(&lam).mul(&self.f(2.0), PREC, RM);
        let two = self.f(2.0);
        let s = two.mul(&k, PREC, RM);
        [a, b, n, s]
    }

    /// Dilute weights `(t, u1, u2, v, a, b, n, s)` at `alpha`.
    fn dilute_weights(&mut self, alpha: f64, eta: f64) -> [BigFloat; 8] {
        let pi = self.pi();
        let et = self.f(eta);
        let al = self.f(alpha);
        let three_eta = et.mul(&self.f(3.0), PREC, RM);
        let u = three_eta.mul(&al, PREC, RM).div(&pi, PREC, RM);
        let ub = three_eta.sub(&u, PREC, RM);
        let su = self.sin(&u);
        let sub_ = self.sin(&ub);
        let s2 = self.sin(&et.mul(&self.f(2.0), PREC, RM));
        let s3 = self.sin(&three_eta);
        let t = su.mul(&sub_, PREC, RM).add(&s2.mul(&s3, PREC, RM), PREC, RM);
        let u1 = su.mul(&s2, PREC, RM);
        let u2 = sub_.mul(&s2, PREC, RM);
        let v = su.mul(&sub_, PREC, RM);
        let a = su.mul(&self.sin(&u.sub(&et, PREC, RM)), PREC, RM);
        let b = sub_.mul(&self.sin(&ub.sub(&et, PREC, RM)), PREC, RM);
        let four_eta = et.mul(&self.f(4.0), PREC, RM);
        let n = self.cos(&four_eta).mul(&self.f(-2.0), PREC, RM);
        let s = three_eta.div(&pi, PREC, RM);
        [t, u1, u2, v, a, b, n, s]
    }

    /// Dense single-rhombus residuals, both external connectivities.
    pub fn dense_single_residuals(
        &mut self,
        alpha: f64,
        lambda: f64,
        ell: i32,
    ) -> (Complex64, Complex64) {
        let pi = self.pi();
        let [a, b, n, s] = self.dense_weights(alpha, lambda, ell);
        let al = self.f(alpha);
        let one = C::real(self.f(1.0));
        let p_am = self.phase(&s, &al.sub(&pi, PREC, RM));
        let p_a = self.phase(&s, &al);
        let p_mpi = self.phase(&s, &pi.neg());
        let p_pi = self.phase(&s, &pi);
        let r1 = one
            .sub(&p_am)
            .scale(&n)
            .scale(&a)
            .add(&one.sub(&p_am).add(&p_mpi).sub(&p_a).scale(&b));
        let r2 = one
            .sub(&p_am)
            .add(&p_pi)
            .sub(&p_a)
            .scale(&a)
            .add(&one.sub(&p_a).scale(&n).scale(&b));
        (r1.rounded(), r2.rounded())
    }

    /// Dilute single-rhombus residuals: the four entry groupings followed by
    /// their conjugate-phase counterparts.
    pub fn dilute_single_residuals(&mut self, alpha: f64, eta: f64) -> [Complex64; 8] {
        let [t, u1, u2, v, a, b, n, s] = self.dilute_weights(alpha, eta);
        let mut out = [Complex64::new(0.0, 0.0); 8];
        for (half, flip) in [(0usize, 1.0f64), (4, -1.0)] {
            let pi = self.pi();
            let sgn = s.mul(&self.f(flip), PREC, RM);
            let al = self.f(alpha);
            let two_pi = pi.mul(&self.f(2.0), PREC, RM);
            let p = |ctx: &mut Self, theta: &BigFloat| ctx.phase(&sgn, theta);
            let p_am = p(self, &al.sub(&pi, PREC, RM));
            let p_a = p(self, &al);
            let p_pi = p(self, &pi);
            let p_mpi = p(self, &pi.neg());
            let p_am2 = p(self, &al.sub(&two_pi, PREC, RM));
            let p_ap = p(self, &al.add(&pi, PREC, RM));
            let p_2pi = p(self, &two_pi);
            let p_m2pi = p(self, &two_pi.neg());
            let cr = |x: &BigFloat| C::real(x.clone());
            let r1 = cr(&t)
                .sub(&p_am.scale(&u1))
                .sub(&p_a.scale(&u2))
                .sub(&cr(&v));
            let r2 = p_pi
                .scale(&u1)
                .add(&cr(&u2).scale(&n))
                .add(&p_am2.scale(&v))
                .sub(&p_a.scale(&a))
                .sub(&p_a.scale(&n).scale(&b));
            let r3 = p_ap
                .scale(&u1)
                .add(&p_am2.scale(&u2))
                .add(&cr(&v).scale(&n))
                .sub(&p_2pi.scale(&a))
                .sub(&p_m2pi.scale(&b));
            let r4 = cr(&u1)
                .scale(&n)
                .add(&p_mpi.scale(&u2))
                .add(&p_ap.scale(&v))
                .sub(&p_am.scale(&n).scale(&a))
                .sub(&p_am.scale(&b));
            out[half] = r1.rounded();
            out[half + 1] = r2.rounded();
            out[half + 2] = r3.rounded();
            out[half + 3] = r4.rounded();
        }
        out
    }

    /// Dense Yang-Baxter residual with `gamma = 2 pi - alpha - beta`.
    pub fn dense_yb(&mut self, alpha: f64, beta: f64, lambda: f64, ell: i32) -> f64 {
        let pi = self.pi();
        let two_pi = pi.mul(&self.f(2.0), PREC, RM);
        let gamma = two_pi.sub(&self.f(alpha), PREC, RM).sub(&self.f(beta), PREC, RM);
        let [a1, b1, n, _] = self.dense_weights(alpha, lambda, ell);
        let [a2, b2, _, _] = self.dense_weights(beta, lambda, ell);
        let g = to_f64(&gamma);
        let [a3, b3, _, _] = self.dense_weights(g, lambda, ell);
        let m3 = |x: &BigFloat, y: &BigFloat, z: &BigFloat| {
            x.mul(y, PREC, RM).mul(z, PREC, RM)
        };
        let r = m3(&b1, &b2, &a3)
            .add(&m3(&b1, &a2, &b3), PREC, RM)
            .add(&m3(&a1, &b2, &b3), PREC, RM)
            .add(&m3(&b1, &b2, &b3).mul(&n, PREC, RM), PREC, RM)
            .sub(&m3(&a1, &a2, &a3), PREC, RM);
        to_f64(&r)
    }

    /// Dense inversion residual at `alpha`.
    pub fn dense_inversion(&mut self, alpha: f64, lambda: f64, ell: i32) -> f64 {
        let [a1, b1, n, _] = self.dense_weights(alpha, lambda, ell);
        let [a2, b2, _, _] = self.dense_weights(-alpha, lambda, ell);
        let r = a1
            .mul(&b2, PREC, RM)
            .add(&b1.mul(&a2, PREC, RM), PREC, RM)
            .add(&a1.mul(&a2, PREC, RM).mul(&n, PREC, RM), PREC, RM);
        to_f64(&r)
    }

    /// The six dilute Yang-Baxter residuals with `gamma = 2 pi - alpha - beta`.
    pub fn dilute_yb(&mut self, alpha: f64, beta: f64, eta: f64) -> [f64; 6] {
        let pi = self.pi();
        let two_pi = pi.mul(&self.f(2.0), PREC, RM);
        let gamma = two_pi.sub(&self.f(alpha), PREC, RM).sub(&self.f(beta), PREC, RM);
        let g = to_f64(&gamma);
        let w1 = self.dilute_weights(alpha, eta);
        let w2 = self.dilute_weights(beta, eta);
        let w3 = self.dilute_weights(g, eta);
        let n = w1[6].clone();
        // index map: t=0, u1=1, u2=2, v=3, a=4, b=5
        let m = |x: &BigFloat, y: &BigFloat, z: &BigFloat| x.mul(y, PREC, RM).mul(z, PREC, RM);
        let yb1 = m(&w1[2], &w2[2], &w3[4])
            .add(&m(&w1[2], &w2[2], &w3[5]).mul(&n, PREC, RM), PREC, RM)
            .add(&m(&w1[0], &w2[0], &w3[2]), PREC, RM)
            .sub(&m(&w1[1], &w2[1], &w3[0]), PREC, RM)
            .sub(&m(&w1[3], &w2[3], &w3[2]), PREC, RM);
        let yb2 = m(&w1[0], &w2[1], &w3[3])
            .add(&m(&w1[2], &w2[3], &w3[1]), PREC, RM)
            .sub(&m(&w3[0], &w2[1], &w1[3]), PREC, RM)
            .sub(&m(&w1[1], &w2[3], &w3[2]), PREC, RM);
        let yb3 = m(&w1[2], &w2[5], &w3[4])
            .add(&m(&w1[2], &w2[4], &w3[5]), PREC, RM)
            .add(&m(&w1[2], &w2[5], &w3[5]).mul(&n, PREC, RM), PREC, RM)
            .add(&m(&w1[0], &w2[2], &w3[2]), PREC, RM)
            .sub(&m(&w1[4], &w2[1], &w3[1]), PREC, RM);
        let yb4 = m(&w1[3], &w2[1], &w3[5])
            .add(&m(&w1[1], &w2[3], &w3[2]), PREC, RM)
            .sub(&m(&w1[4], &w2[1], &w3[3]), PREC, RM);
        let yb5 = m(&w1[1], &w2[5], &w3[1])
            .add(&m(&w1[3], &w2[2], &w3[3]), PREC, RM)
            .sub(&m(&w1[4], &w2[2], &w3[4]), PREC, RM);
        let yb6 = m(&w1[5], &w2[5], &w3[4])
            .add(&m(&w1[5], &w2[4], &w3[5]), PREC, RM)
            .add(&m(&w1[4], &w2[5], &w3[5]), PREC, RM)
            .add(&m(&w1[5], &w2[5], &w3[5]).mul(&n, PREC, RM), PREC, RM)
            .add(&m(&w1[2], &w2[2], &w3[2]), PREC, RM)
            .sub(&m(&w1[4], &w2[4], &w3[4]), PREC, RM);
        [yb1, yb2, yb3, yb4, yb5, yb6].map(|x| to_f64(&x))
    }

    /// Dense fugacity/spin constraint deviation `|n^2 - 2 - 2 cos(s pi)|`.
    pub fn spin_consistency_dense(&mut self, lambda: f64, ell: i32) -> f64 {
        let [_, _, n, s] = self.dense_weights(1.0, lambda, ell);
        let pi = self.pi();
        let c = self.cos(&s.mul(&pi, PREC, RM));
        let r = n
            .mul(&n, PREC, RM)
            .sub(&self.f(2.0), PREC, RM)
            .sub(&c.mul(&self.f(2.0), PREC, RM), PREC, RM);
        to_f64(&r).abs()
    }

    /// Dilute fugacity/spin constraint deviation `|3n - n^3 - 2 cos(4 s pi)|`.
    pub fn spin_consistency_dilute(&mut self, eta: f64) -> f64 {
        let w = self.dilute_weights(1.0, eta);
        let (n, s) = (&w[6], &w[7]);
        let pi = self.pi();
        let arg = s.mul(&pi, PREC, RM).mul(&self.f(4.0), PREC, RM);
        let c = self.cos(&arg);
        let n3 = n.mul(n, PREC, RM).mul(n, PREC, RM);
        let r = n
            .mul(&self.f(3.0), PREC, RM)
            .sub(&n3, PREC, RM)
            .sub(&c.mul(&self.f(2.0), PREC, RM), PREC, RM);
        to_f64(&r).abs()
    }
}
