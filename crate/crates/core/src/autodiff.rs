//! Second-order forward-mode automatic differentiation.
//!
//! [`Dual2`] carries a value, a gradient and a symmetric Hessian with respect
//! to at most three seeded coordinates.  Pushing a [`Dual2`] vector through
//! an expression therefore yields exact first and second partial derivatives
//! of metric components, connection coefficients and vector-field components
//! in a single evaluation.  Second order is sufficient for everything in this
//! crate: curvature and the symmetry condition need second derivatives of the
//! metric and nothing needs third derivatives.
//!
//! The Hessian is stored as the packed lower triangle of a 3x3 symmetric
//! matrix, so symmetry holds exactly by construction.

use std::ops::{Add, Div, Mul, Neg, Sub};

use thiserror::Error;

use crate::expr::{ExprError, ParamEnv, Scalar, ScalarExpr};

/// Maximum number of seeded coordinates.
pub const MAX_DIM: usize = 3;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum AdError {
    #[error("seed dimension {0} outside 1..=3")]
    Dimension(usize),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

/// Packed index of the (i, j) entry of a symmetric 3x3 matrix, i >= j.
#[inline]
fn pack(i: usize, j: usize) -> usize {
    let (i, j) = if i >= j { (i, j) } else { (j, i) };
    i * (i + 1) / 2 + j
}

/// Second-order dual scalar: value, gradient, packed symmetric Hessian.
///
/// All slots beyond the seeded dimension stay zero, so a fixed-size layout
/// serves every dimension from 1 to 3.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual2 {
    pub val: f64,
    pub grad: [f64; 3],
    pub hess: [f64; 6],
}

impl Dual2 {
    /// A constant: zero gradient and Hessian.
    pub fn constant(c: f64) -> Self {
        Dual2 {
            val: c,
            grad: [0.0; 3],
            hess: [0.0; 6],
        }
    }

    /// Seed coordinate `i`: unit gradient slot, zero Hessian.
    pub fn seed_coord(value: f64, i: usize) -> Self {
        let mut d = Dual2::constant(value);
        d.grad[i] = 1.0;
        d
    }

    /// Hessian entry (i, j).
    #[inline]
    pub fn hess_at(&self, i: usize, j: usize) -> f64 {
        self.hess[pack(i, j)]
    }

    /// Apply a univariate function with given value and first two
    /// derivatives at `self.val` (chain rule through second order).
    fn lift(self, f: f64, df: f64, d2f: f64) -> Self {
        let mut out = Dual2 {
            val: f,
            grad: [0.0; 3],
            hess: [0.0; 6],
        };
        for i in 0..3 {
            out.grad[i] = df * self.grad[i];
        }
        for i in 0..3 {
            for j in 0..=i {
                out.hess[pack(i, j)] =
                    df * self.hess[pack(i, j)] + d2f * self.grad[i] * self.grad[j];
            }
        }
        out
    }
}

impl Add for Dual2 {
    type Output = Dual2;
    fn add(self, o: Dual2) -> Dual2 {
        let mut r = self;
        r.val += o.val;
        for i in 0..3 {
            r.grad[i] += o.grad[i];
        }
        for i in 0..6 {
            r.hess[i] += o.hess[i];
        }
        r
    }
}

impl Sub for Dual2 {
    type Output = Dual2;
    fn sub(self, o: Dual2) -> Dual2 {
        let mut r = self;
        r.val -= o.val;
        for i in 0..3 {
            r.grad[i] -= o.grad[i];
        }
        for i in 0..6 {
            r.hess[i] -= o.hess[i];
        }
        r
    }
}

impl Neg for Dual2 {
    type Output = Dual2;
    fn neg(self) -> Dual2 {
        let mut r = self;
        r.val = -r.val;
        for i in 0..3 {
            r.grad[i] = -r.grad[i];
        }
        for i in 0..6 {
            r.hess[i] = -r.hess[i];
        }
        r
    }
}

impl Mul for Dual2 {
    type Output = Dual2;
    fn mul(self, o: Dual2) -> Dual2 {
        let mut r = Dual2::constant(self.val * o.val);
        for i in 0..3 {
            r.grad[i] = self.grad[i] * o.val + self.val * o.grad[i];
        }
        for i in 0..3 {
            for j in 0..=i {
                r.hess[pack(i, j)] = self.hess[pack(i, j)] * o.val
                    + self.grad[i] * o.grad[j]
                    + self.grad[j] * o.grad[i]
                    + self.val * o.hess[pack(i, j)];
            }
        }
        r
    }
}

impl Div for Dual2 {
    type Output = Dual2;
    fn div(self, o: Dual2) -> Dual2 {
        // q = a/b: differentiate a = q*b and solve for q's derivatives.
        let q = self.val / o.val;
        let mut r = Dual2::constant(q);
        for i in 0..3 {
            r.grad[i] = (self.grad[i] - q * o.grad[i]) / o.val;
        }
        for i in 0..3 {
            for j in 0..=i {
                r.hess[pack(i, j)] = (self.hess[pack(i, j)]
                    - r.grad[i] * o.grad[j]
                    - r.grad[j] * o.grad[i]
                    - q * o.hess[pack(i, j)])
                    / o.val;
            }
        }
        r
    }
}

impl Scalar for Dual2 {
    fn from_f64(c: f64) -> Self {
        Dual2::constant(c)
    }
    fn re(&self) -> f64 {
        self.val
    }
    fn s_sin(self) -> Self {
        self.lift(self.val.sin(), self.val.cos(), -self.val.sin())
    }
    fn s_cos(self) -> Self {
        self.lift(self.val.cos(), -self.val.sin(), -self.val.cos())
    }
    fn s_tan(self) -> Self {
        // tan' = 1 + tan^2, tan'' = 2 tan (1 + tan^2)
        let t = self.val.tan();
        let sec2 = 1.0 + t * t;
        self.lift(t, sec2, 2.0 * t * sec2)
    }
    fn s_sinh(self) -> Self {
        self.lift(self.val.sinh(), self.val.cosh(), self.val.sinh())
    }
    fn s_cosh(self) -> Self {
        self.lift(self.val.cosh(), self.val.sinh(), self.val.cosh())
    }
    fn s_tanh(self) -> Self {
        // tanh' = 1 - tanh^2, tanh'' = -2 tanh (1 - tanh^2)
        let t = self.val.tanh();
        let sech2 = 1.0 - t * t;
        self.lift(t, sech2, -2.0 * t * sech2)
    }
    fn s_exp(self) -> Self {
        let e = self.val.exp();
        self.lift(e, e, e)
    }
    fn s_ln(self) -> Self {
        let x = self.val;
        self.lift(x.ln(), 1.0 / x, -1.0 / (x * x))
    }
    fn s_abs(self) -> Self {
        // |x| is smooth away from 0; the evaluator's guards keep samples off
        // the kink, where the derivative is sign(x) and curvature zero.
        let s = if self.val >= 0.0 { 1.0 } else { -1.0 };
        self.lift(self.val.abs(), s, 0.0)
    }
    fn s_sqrt(self) -> Self {
        let r = self.val.sqrt();
        self.lift(r, 0.5 / r, -0.25 / (r * r * r))
    }
    fn s_powi(self, n: i32) -> Self {
        let x = self.val;
        let nf = n as f64;
        let f = x.powi(n);
        let df = nf * x.powi(n - 1);
        let d2f = nf * (nf - 1.0) * x.powi(n - 2);
        self.lift(f, df, d2f)
    }
}

/// Seed a coordinate vector: component `i` carries value `coords[i]`, unit
/// gradient slot `i` and zero Hessian.
pub fn seed(coords: &[f64]) -> Result<Vec<Dual2>, AdError> {
    let d = coords.len();
    if !(1..=MAX_DIM).contains(&d) {
        return Err(AdError::Dimension(d));
    }
    Ok(coords
        .iter()
        .enumerate()
        .map(|(i, &v)| Dual2::seed_coord(v, i))
        .collect())
}

/// Value, gradient and dense symmetric Hessian of an expression at a point.
pub fn partials(
    e: &ScalarExpr,
    p: &[f64],
    params: &ParamEnv,
) -> Result<(f64, Vec<f64>, Vec<Vec<f64>>), AdError> {
    let d = p.len();
    let seeded = seed(p)?;
    let out = e.evaluate(&seeded, params)?;
    let grad = out.grad[..d].to_vec();
    let hess = (0..d)
        .map(|i| (0..d).map(|j| out.hess_at(i, j)).collect())
        .collect();
    Ok((out.val, grad, hess))
}

/// Evaluate an expression as a [`Dual2`] at a point (all coordinates seeded).
pub fn eval_dual(e: &ScalarExpr, p: &[f64], params: &ParamEnv) -> Result<Dual2, AdError> {
    let seeded = seed(p)?;
    Ok(e.evaluate(&seeded, params)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(src: &str, coords: &[&str], params: &[&str]) -> ScalarExpr {
        ScalarExpr::parse(src, coords, params).unwrap()
    }

    #[test]
    fn seed_single_coordinate() {
        let s = seed(&[2.0]).unwrap();
        assert_eq!(s[0].val, 2.0);
        assert_eq!(s[0].grad, [1.0, 0.0, 0.0]);
        assert_eq!(s[0].hess, [0.0; 6]);
    }

    #[test]
    fn seed_rejects_zero_and_four_dims() {
        assert!(matches!(seed(&[]), Err(AdError::Dimension(0))));
        assert!(matches!(
            seed(&[0.0, 0.0, 0.0, 0.0]),
            Err(AdError::Dimension(4))
        ));
    }

    #[test]
    fn bilinear_product() {
        let e = parse("x*y", &["x", "y"], &[]);
        let (v, g, h) = partials(&e, &[3.0, 5.0], &ParamEnv::new()).unwrap();
        assert_eq!(v, 15.0);
        assert_eq!(g, vec![5.0, 3.0]);
        assert_eq!(h[0][1], 1.0);
        assert_eq!(h[1][0], 1.0);
        assert_eq!(h[0][0], 0.0);
        assert_eq!(h[1][1], 0.0);
    }

    #[test]
    fn sine_at_origin() {
        let e = parse("sin(x)", &["x"], &[]);
        let (v, g, h) = partials(&e, &[0.0], &ParamEnv::new()).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(g[0], 1.0);
        assert_eq!(h[0][0], 0.0);
    }

    #[test]
    fn quadratic_in_three_coords() {
        let e = parse("x^2+y^2+z^2", &["x", "y", "z"], &[]);
        let (v, g, h) = partials(&e, &[1.0, 2.0, 3.0], &ParamEnv::new()).unwrap();
        assert_eq!(v, 14.0);
        assert_eq!(g, vec![2.0, 4.0, 6.0]);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(h[i][j], if i == j { 2.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn tanh_at_zero_is_odd() {
        let e = parse("tanh(z)", &["z"], &[]);
        let (_, g, h) = partials(&e, &[0.0], &ParamEnv::new()).unwrap();
        assert_eq!(g[0], 1.0);
        assert_eq!(h[0][0], 0.0);
    }

    #[test]
    fn exponential_with_parameter() {
        let e = parse("exp(2*x/beta)", &["x"], &["beta"]);
        let params = ParamEnv::from_pairs(&[("beta", 2.0)]);
        let (v, g, h) = partials(&e, &[1.0], &params).unwrap();
        let ee = std::f64::consts::E;
        assert!((v - ee).abs() < 1e-14);
        assert!((g[0] - ee).abs() < 1e-14);
        assert!((h[0][0] - ee).abs() < 1e-14);
    }

    /// Central finite-difference oracle for gradients and Hessians.
    fn fd_check(src: &str, p: &[f64], params: &ParamEnv) {
        let coords: Vec<&str> = ["x", "y", "z"][..p.len()].to_vec();
        let e = parse(src, &coords, &params.names().iter().map(|s| s.as_str()).collect::<Vec<_>>());
        let (_, g, h) = partials(&e, p, params).unwrap();
        let f = |q: &[f64]| e.eval_f64(q, params).unwrap();
        let d = p.len();
        let hg = 1e-5;
        for i in 0..d {
            let mut pp = p.to_vec();
            let mut pm = p.to_vec();
            pp[i] += hg;
            pm[i] -= hg;
            let fd = (f(&pp) - f(&pm)) / (2.0 * hg);
            assert!(
                (g[i] - fd).abs() <= 1e-6 * (1.0 + g[i].abs()),
                "grad mismatch for {src} at {p:?}: ad={} fd={fd}",
                g[i]
            );
        }
        let hh = 1e-4;
        for i in 0..d {
            for j in 0..d {
                let mut a = p.to_vec();
                let mut b = p.to_vec();
                let mut c = p.to_vec();
                let mut dd = p.to_vec();
                a[i] += hh;
                a[j] += hh;
                b[i] += hh;
                b[j] -= hh;
                c[i] -= hh;
                c[j] += hh;
                dd[i] -= hh;
                dd[j] -= hh;
                let fd = (f(&a) - f(&b) - f(&c) + f(&dd)) / (4.0 * hh * hh);
                assert!(
                    (h[i][j] - fd).abs() <= 1e-4 * (1.0 + h[i][j].abs()),
                    "hess mismatch for {src} at {p:?}: ad={} fd={fd}",
                    h[i][j]
                );
            }
        }
    }

    #[test]
    fn finite_difference_agreement_on_representative_expressions() {
        let no_params = ParamEnv::new();
        fd_check("tanh(x)*tan(y)+sqrt(z)", &[0.3, 0.4, 2.0], &no_params);
        fd_check("ln(x)/cosh(y)-sinh(z)", &[1.5, 0.2, 0.7], &no_params);
        fd_check("abs(x)^2.5", &[1.2], &no_params);
        fd_check("x^-3", &[0.8], &no_params);
        fd_check("exp(x*y)*cos(z)", &[0.4, 0.6, 1.1], &no_params);
        fd_check("1/(x^2+y^2)", &[0.9, 1.3], &no_params);
    }

    #[test]
    fn dual_value_slot_matches_plain_evaluation() {
        let params = ParamEnv::from_pairs(&[("beta", 1.7)]);
        let e = parse("exp(2*x/beta)*(tanh(y)-tanh(z))", &["x", "y", "z"], &["beta"]);
        let p = [0.3, 0.5, 1.1];
        let plain = e.eval_f64(&p, &params).unwrap();
        let dual = eval_dual(&e, &p, &params).unwrap();
        assert!((dual.val - plain).abs() <= 1e-15 * plain.abs().max(1.0));
    }
}
