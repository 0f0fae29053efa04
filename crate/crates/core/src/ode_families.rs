//! Closed-form evaluators and numerical integrators for the ODE families
//! underlying the classification: the separable-profile Riccati systems with
//! their explicit solution branches, the alpha/zeta first-order system of
//! the warped [2-1] construction, the second-order zeta ODE obtained by
//! eliminating alpha, and the psi ODE `(psi - z) psi'' = 2 psi' (psi' - k)`
//! together with its special closed-form solutions.

use thiserror::Error;

use crate::autodiff::{partials, AdError};
use crate::expr::{ExprError, ParamEnv, ScalarExpr};
use crate::metrisability::ActionMatrix;
use crate::projective::{rk45, ProjError};

#[derive(Debug, Error)]
pub enum OdeError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Ad(#[from] AdError),
    #[error(transparent)]
    Integration(#[from] ProjError),
    #[error("invalid constants for branch: {0}")]
    InvalidConstants(String),
    #[error("zeta vanishes at the evaluation point ({0:.3e})")]
    SingularZeta(f64),
    #[error("denominator vanishes at the evaluation point ({0:.3e})")]
    SingularDenominator(f64),
    #[error("partner undefined: f_{0} + ell = 0")]
    DegeneratePartner(usize),
}

/// Derived Riccati data of an action matrix with `b != 0`.
#[derive(Debug, Clone, Copy)]
pub struct Riccati111Params {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    /// `alpha1 = -(a+d)/b`, defined only when b != 0.
    pub alpha1: Option<f64>,
    /// `alpha0 = (ad - cb)/b^2`, defined only when b != 0.
    pub alpha0: Option<f64>,
}

impl Riccati111Params {
    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        let (alpha1, alpha0) = if b != 0.0 {
            (Some(-(a + d) / b), Some((a * d - c * b) / (b * b)))
        } else {
            (None, None)
        };
        Riccati111Params {
            a,
            b,
            c,
            d,
            alpha1,
            alpha0,
        }
    }
}

/// Per-axis residuals of the separable symmetry ODE system:
/// `|v^i X_i' - (-b X_i^2 + (d-a) X_i + c)|` and `|(v^i)' + (a+d)|`.
/// Each profile and field component is univariate; component i is evaluated
/// at `p[i]`.
pub fn ode111_residual(
    x: &[ScalarExpr],
    v: &[ScalarExpr],
    a: &ActionMatrix,
    p: &[f64],
) -> Result<Vec<(f64, f64)>, OdeError> {
    let env = ParamEnv::new();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let (xv, xg, _) = partials(&x[i], &[p[i]], &env)?;
        let (vv, vg, _) = partials(&v[i], &[p[i]], &env)?;
        let rhs = -a.b * xv * xv + (a.d - a.a) * xv + a.c;
        out.push(((vv * xg[0] - rhs).abs(), (vg[0] + a.a + a.d).abs()));
    }
    Ok(out)
}

/// The explicit solution branches of the two closed-form lemmas: essential
/// branches solve `w f' = f^2 + alpha1 f + alpha0`, `w' = -alpha1`;
/// homothetic branches solve `v X' = (d-a) X + c`, `v' = -(a+d)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchId {
    /// alpha1 != 0, alpha1^2 - 4 alpha0 > 0: tanh of log.
    EssTanhLog,
    /// alpha1 != 0, alpha1^2 = 4 alpha0: reciprocal log.
    EssLogReciprocal,
    /// alpha1 != 0, alpha1^2 - 4 alpha0 < 0: tan of log.
    EssTanLog,
    /// alpha1 = 0, alpha0 > 0: tangent profile.
    EssTan,
    /// alpha1 = 0, alpha0 = 0: reciprocal profile.
    EssReciprocal,
    /// alpha1 = 0, alpha0 < 0: tanh profile.
    EssTanh,
    /// alpha1 = 0, alpha0 < 0, frozen field: constant profile.
    EssConst,
    /// a+d != 0, a != d: power profile.
    HomPower,
    /// a+d != 0, a = d != 0: logarithmic profile.
    HomLog,
    /// a+d = 0, a != 0, frozen field: constant profile.
    HomFrozenConst,
    /// a+d = 0, a != 0: exponential profile.
    HomExp,
    /// a = d = c = 0, frozen field: arbitrary profile.
    HomFrozenFree,
    /// a = d = c = 0: translation with constant profile.
    HomConst,
    /// a = d = 0, c != 0: linear profile.
    HomLinear,
}

/// Free constants of a branch; unused entries are ignored.
#[derive(Debug, Clone, Copy)]
pub struct BranchConstants {
    pub alpha1: f64,
    pub alpha0: f64,
    pub a: f64,
    pub c: f64,
    pub d: f64,
    /// Per-axis constant c_i of the essential branches.
    pub ci: f64,
    /// Per-axis constant k_i of the homothetic branches.
    pub ki: f64,
    /// Per-axis constant h_i (or a sign for the constant branches).
    pub hi: f64,
}

impl Default for BranchConstants {
    fn default() -> Self {
        BranchConstants {
            alpha1: 1.0,
            alpha0: 0.0,
            a: 1.0,
            c: 1.0,
            d: 0.0,
            ci: 1.0,
            ki: 1.0,
            hi: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ClosedFormBranch {
    pub id: BranchId,
    /// Field component (w or v), univariate in `x`.
    pub field: ScalarExpr,
    /// Profile (f or X), univariate in `x`.
    pub profile: ScalarExpr,
    /// Implied action matrix: essential branches use the normalized form
    /// (a, b, c, d) = (0, -1, alpha0, alpha1); homothetic branches carry
    /// their (a, 0, c, d) directly.
    pub action: ActionMatrix,
    /// Validity interval of the coordinate.
    pub domain: [f64; 2],
}

fn parse1(src: &str) -> Result<ScalarExpr, OdeError> {
    Ok(ScalarExpr::parse(src, &["x"], &[])?)
}

fn lit(v: f64) -> String {
    format!("({v:?})")
}

/// Build the expression pair of a closed-form branch.
pub fn closed_form_branch(
    id: BranchId,
    k: &BranchConstants,
) -> Result<ClosedFormBranch, OdeError> {
    let bad = |msg: &str| Err(OdeError::InvalidConstants(msg.to_string()));
    let ess_action = |alpha1: f64, alpha0: f64| ActionMatrix {
        a: 0.0,
        b: -1.0,
        c: alpha0,
        d: alpha1,
        fit_residual: 0.0,
    };
    let hom_action = |a: f64, c: f64, d: f64| ActionMatrix {
        a,
        b: 0.0,
        c,
        d,
        fit_residual: 0.0,
    };
    let (field, profile, action, domain) = match id {
        BranchId::EssTanhLog => {
            let disc = k.alpha1 * k.alpha1 - 4.0 * k.alpha0;
            if k.alpha1 == 0.0 || disc <= 0.0 || k.ci <= 0.0 {
                return bad("requires alpha1 != 0, alpha1^2 - 4 alpha0 > 0, c_i > 0");
            }
            let s = disc.sqrt();
            let f = format!(
                "{}/2*tanh(ln({}*abs(x))*{}/(2*{})) - {}/2",
                lit(s),
                lit(k.ci),
                lit(s),
                lit(k.alpha1),
                lit(k.alpha1)
            );
            let w = format!("-{}*x", lit(k.alpha1));
            (w, f, ess_action(k.alpha1, k.alpha0), [0.2, 3.0])
        }
        BranchId::EssLogReciprocal => {
            if k.alpha1 == 0.0 || k.ci <= 0.0 {
                return bad("requires alpha1 != 0 and c_i > 0");
            }
            let alpha0 = k.alpha1 * k.alpha1 / 4.0;
            let f = format!(
                "{}*(1/ln({}*abs(x)) - 1/2)",
                lit(k.alpha1),
                lit(k.ci)
            );
            let w = format!("-{}*x", lit(k.alpha1));
            (
                w,
                f,
                ess_action(k.alpha1, alpha0),
                [1.25 / k.ci, 4.0 / k.ci],
            )
        }
        BranchId::EssTanLog => {
            let disc = 4.0 * k.alpha0 - k.alpha1 * k.alpha1;
            if k.alpha1 == 0.0 || disc <= 0.0 || k.ci <= 0.0 {
                return bad("requires alpha1 != 0, 4 alpha0 - alpha1^2 > 0, c_i > 0");
            }
            let s = disc.sqrt();
            let f = format!(
                "-{}/2*tan(ln({}*abs(x))*{}/(2*{})) - {}/2",
                lit(s),
                lit(k.ci),
                lit(s),
                lit(k.alpha1),
                lit(k.alpha1)
            );
            let w = format!("-{}*x", lit(k.alpha1));
            let m = (1.4 * 2.0 * k.alpha1.abs() / s).min(2.5);
            (
                w,
                f,
                ess_action(k.alpha1, k.alpha0),
                [(-m).exp() / k.ci, m.exp() / k.ci],
            )
        }
        BranchId::EssTan => {
            if k.alpha0 <= 0.0 || k.ci == 0.0 {
                return bad("requires alpha0 > 0 and c_i != 0");
            }
            let s = k.alpha0.sqrt();
            let f = format!("{}*tan({}*x/{})", lit(s), lit(s), lit(k.ci));
            let w = lit(k.ci);
            let bound = 1.4 * k.ci.abs() / s;
            (w, f, ess_action(0.0, k.alpha0), [-bound, bound])
        }
        BranchId::EssReciprocal => {
            let f = format!("-{}/x", lit(k.ci));
            (lit(k.ci), f, ess_action(0.0, 0.0), [0.3, 3.0])
        }
        BranchId::EssTanh => {
            if k.alpha0 >= 0.0 || k.ci == 0.0 {
                return bad("requires alpha0 < 0 and c_i != 0");
            }
            let s = (-k.alpha0).sqrt();
            let f = format!("-{}*tanh({}*x/{})", lit(s), lit(s), lit(k.ci));
            (lit(k.ci), f, ess_action(0.0, k.alpha0), [-2.0, 2.0])
        }
        BranchId::EssConst => {
            if k.alpha0 >= 0.0 {
                return bad("requires alpha0 < 0");
            }
            let s = (-k.alpha0).sqrt() * k.hi.signum();
            (
                "0".to_string(),
                lit(s),
                ess_action(0.0, k.alpha0),
                [-2.0, 2.0],
            )
        }
        BranchId::HomPower => {
            if k.a + k.d == 0.0 || k.a == k.d {
                return bad("requires a + d != 0 and a != d");
            }
            let p = (k.a - k.d) / (k.a + k.d);
            let x = format!(
                "{}/({}-{}) + {}*abs(x)^{}",
                lit(k.c),
                lit(k.a),
                lit(k.d),
                lit(k.ki),
                lit(p)
            );
            let v = format!("-{}*x", lit(k.a + k.d));
            (v, x, hom_action(k.a, k.c, k.d), [0.3, 3.0])
        }
        BranchId::HomLog => {
            if k.a == 0.0 {
                return bad("requires a != 0");
            }
            let x = format!("-{}*ln(abs(x))/(2*{}) + {}", lit(k.c), lit(k.a), lit(k.ki));
            let v = format!("-2*{}*x", lit(k.a));
            (v, x, hom_action(k.a, k.c, k.a), [0.3, 3.0])
        }
        BranchId::HomFrozenConst => {
            if k.a == 0.0 {
                return bad("requires a != 0");
            }
            let x = format!("{}/(2*{})", lit(k.c), lit(k.a));
            ("0".to_string(), x, hom_action(k.a, k.c, -k.a), [-2.0, 2.0])
        }
        BranchId::HomExp => {
            if k.a == 0.0 || k.ki == 0.0 {
                return bad("requires a != 0 and k_i != 0");
            }
            let x = format!(
                "{}/(2*{}) + {}*exp(-2*{}*x/{})",
                lit(k.c),
                lit(k.a),
                lit(k.hi),
                lit(k.a),
                lit(k.ki)
            );
            let bound = (3.0 * (k.ki / (2.0 * k.a)).abs()).min(2.0);
            (
                lit(k.ki),
                x,
                hom_action(k.a, k.c, -k.a),
                [-bound, bound],
            )
        }
        BranchId::HomFrozenFree => (
            "0".to_string(),
            "sin(x)+2".to_string(),
            hom_action(0.0, 0.0, 0.0),
            [-2.0, 2.0],
        ),
        BranchId::HomConst => {
            if k.ki == 0.0 {
                return bad("requires k_i != 0");
            }
            (
                lit(k.ki),
                lit(k.hi),
                hom_action(0.0, 0.0, 0.0),
                [-2.0, 2.0],
            )
        }
        BranchId::HomLinear => {
            if k.ki == 0.0 || k.c == 0.0 {
                return bad("requires k_i != 0 and c != 0");
            }
            let x = format!("{}*x/{}", lit(k.c), lit(k.ki));
            (lit(k.ki), x, hom_action(0.0, k.c, 0.0), [-2.0, 2.0])
        }
    };
    Ok(ClosedFormBranch {
        id,
        field: parse1(&field)?,
        profile: parse1(&profile)?,
        action,
        domain,
    })
}

pub const ALL_BRANCHES: [BranchId; 14] = [
    BranchId::EssTanhLog,
    BranchId::EssLogReciprocal,
    BranchId::EssTanLog,
    BranchId::EssTan,
    BranchId::EssReciprocal,
    BranchId::EssTanh,
    BranchId::EssConst,
    BranchId::HomPower,
    BranchId::HomLog,
    BranchId::HomFrozenConst,
    BranchId::HomExp,
    BranchId::HomFrozenFree,
    BranchId::HomConst,
    BranchId::HomLinear,
];

/// Diagonal partner metric from three profile functions with an affine
/// shift: entry i is
/// `mu * prod_{j != i} (f_i - f_j) / ((f_i + ell) * prod_j (f_j + ell))`.
pub fn partner_from_f(
    f: &[ScalarExpr],
    ell: f64,
    mu: f64,
    p: &[f64],
) -> Result<[[f64; 3]; 3], OdeError> {
    let env = ParamEnv::new();
    let mut fv = [0.0; 3];
    for i in 0..3 {
        fv[i] = f[i].eval_f64(&[p[i]], &env)?;
        if (fv[i] + ell).abs() < 1e-10 {
            return Err(OdeError::DegeneratePartner(i));
        }
    }
    let prod = (fv[0] + ell) * (fv[1] + ell) * (fv[2] + ell);
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        let mut num = mu;
        for j in 0..3 {
            if j != i {
                num *= fv[i] - fv[j];
            }
        }
        out[i][i] = num / ((fv[i] + ell) * prod);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Warped [2-1] ODE system
// ---------------------------------------------------------------------------

/// Residuals of the first-order system
/// `-2 alpha' = C + b zeta` and `alpha zeta' = -b zeta^2 + (2B - C) zeta`.
pub fn alpha_zeta_residuals(
    alpha: &ScalarExpr,
    zeta: &ScalarExpr,
    b: f64,
    big_b: f64,
    big_c: f64,
    z: f64,
) -> Result<(f64, f64), OdeError> {
    let env = ParamEnv::new();
    let (zv, zg, _) = partials(zeta, &[z], &env)?;
    if zv.abs() < 1e-12 {
        return Err(OdeError::SingularZeta(zv));
    }
    let (av, ag, _) = partials(alpha, &[z], &env)?;
    let r1 = (-2.0 * ag[0] - (big_c + b * zv)).abs();
    let r2 = (av * zg[0] - (-b * zv * zv + (2.0 * big_b - big_c) * zv)).abs();
    Ok((r1, r2))
}

/// Residuals of the second-order compatibility system
/// `zeta (alpha zeta'' - alpha' zeta' - C zeta') - alpha zeta'^2` and
/// `zeta (-2 alpha'' zeta + alpha zeta'' + alpha' zeta') - alpha zeta'^2`.
pub fn gluing_residuals(
    alpha: &ScalarExpr,
    zeta: &ScalarExpr,
    big_c: f64,
    z: f64,
) -> Result<(f64, f64), OdeError> {
    let env = ParamEnv::new();
    let (zv, zg, zh) = partials(zeta, &[z], &env)?;
    if zv.abs() < 1e-12 {
        return Err(OdeError::SingularZeta(zv));
    }
    let (av, ag, ah) = partials(alpha, &[z], &env)?;
    let (zp, zpp) = (zg[0], zh[0][0]);
    let (ap, app) = (ag[0], ah[0][0]);
    let r1 = zv * (av * zpp - ap * zp - big_c * zp) - av * zp * zp;
    let r2 = zv * (-2.0 * app * zv + av * zpp + ap * zp) - av * zp * zp;
    Ok((r1.abs(), r2.abs()))
}

/// Residual of the second-order ODE obtained by eliminating alpha:
/// `zeta'' = (3 b zeta + C - 4B) zeta'^2 / (2 zeta (b zeta + C - 2B))`.
pub fn zeta_ode_residual(
    zeta: &ScalarExpr,
    b: f64,
    big_b: f64,
    big_c: f64,
    z: f64,
) -> Result<f64, OdeError> {
    let env = ParamEnv::new();
    let (zv, zg, zh) = partials(zeta, &[z], &env)?;
    let denom = 2.0 * zv * (b * zv + big_c - 2.0 * big_b);
    if denom.abs() < 1e-12 {
        return Err(OdeError::SingularDenominator(denom));
    }
    let rhs = (3.0 * b * zv + big_c - 4.0 * big_b) * zg[0] * zg[0] / denom;
    Ok((zh[0][0] - rhs).abs())
}

// ---------------------------------------------------------------------------
// Psi ODE
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct PsiSolution {
    pub k: f64,
    pub zs: Vec<f64>,
    pub psi: Vec<f64>,
    pub psi_prime: Vec<f64>,
    /// Order of the local interpolation used by the residual check.
    pub interpolation_order: usize,
}

/// Integrate `(psi - z) psi'' = 2 psi' (psi' - k)` from `init` over the
/// range.  `k = -1` is excluded (it degenerates to a different family).
pub fn solve_psi(
    k: f64,
    zrange: [f64; 2],
    init: (f64, f64),
    tol: f64,
) -> Result<PsiSolution, OdeError> {
    if k == -1.0 {
        return Err(OdeError::InvalidConstants("k = -1 is excluded".to_string()));
    }
    if (init.0 - zrange[0]).abs() < 1e-12 {
        return Err(OdeError::InvalidConstants(
            "psi(z0) = z0 makes the equation singular".to_string(),
        ));
    }
    let rhs = |z: f64, s: &[f64], out: &mut [f64]| -> Result<(), ProjError> {
        let denom = s[0] - z;
        if denom.abs() < 1e-12 * (1.0 + z.abs()) {
            return Err(ProjError::StepFailure(format!(
                "psi(z) collided with z at z = {z}"
            )));
        }
        out[0] = s[1];
        out[1] = 2.0 * s[1] * (s[1] - k) / denom;
        Ok(())
    };
    let mut store = Vec::new();
    let hmax = (zrange[1] - zrange[0]).abs() / 512.0;
    rk45(rhs, zrange[0], &[init.0, init.1], zrange[1], tol, hmax, &mut store)?;
    Ok(PsiSolution {
        k,
        zs: store.iter().map(|(z, _)| *z).collect(),
        psi: store.iter().map(|(_, s)| s[0]).collect(),
        psi_prime: store.iter().map(|(_, s)| s[1]).collect(),
        interpolation_order: 4,
    })
}

impl PsiSolution {
    /// Independent defect check: differentiate the stored psi' samples by
    /// quartic Lagrange interpolation and evaluate the defining equation.
    pub fn max_residual(&self) -> f64 {
        if self.zs.len() < 5 {
            return f64::INFINITY;
        }
        self.residuals().into_iter().fold(0.0, f64::max)
    }

    /// Per-node defining-equation residuals (zero at the two nodes on each
    /// end, where the interpolation stencil does not fit).
    pub fn residuals(&self) -> Vec<f64> {
        let n = self.zs.len();
        let mut out = vec![0.0; n];
        if n < 5 {
            return out;
        }
        for i in 2..n - 2 {
            // Five-point non-uniform first derivative of psi' at node i via
            // a local quartic fit.
            let z0 = self.zs[i];
            let mut dpp = 0.0;
            for a in i - 2..=i + 2 {
                let mut term = self.psi_prime[a];
                let mut dla = 0.0;
                // Derivative of the Lagrange basis l_a at z0.
                for m in i - 2..=i + 2 {
                    if m == a {
                        continue;
                    }
                    let mut prod = 1.0;
                    for j in i - 2..=i + 2 {
                        if j == a || j == m {
                            continue;
                        }
                        prod *= (z0 - self.zs[j]) / (self.zs[a] - self.zs[j]);
                    }
                    dla += prod / (self.zs[a] - self.zs[m]);
                }
                term *= dla;
                dpp += term;
            }
            let r = (self.psi[i] - z0) * dpp
                - 2.0 * self.psi_prime[i] * (self.psi_prime[i] - self.k);
            out[i] = r.abs();
        }
        out
    }
}

/// Error function by Maclaurin series (accurate for the |x| <= 1.5 range
/// needed here).
fn erf(x: f64) -> f64 {
    let mut term = x;
    let mut sum = x;
    for n in 1..60 {
        term *= -x * x / n as f64;
        sum += term / (2.0 * n as f64 + 1.0);
        if term.abs() < 1e-18 {
            break;
        }
    }
    sum * 2.0 / std::f64::consts::PI.sqrt()
}

/// Inverse error function on |t| <= 0.9 by Newton refinement, accurate to
/// 1e-12.
pub fn inverf(t: f64) -> Result<f64, OdeError> {
    if t.abs() > 0.9 {
        return Err(OdeError::InvalidConstants(format!(
            "inverf supported on |t| <= 0.9, got {t}"
        )));
    }
    // Crude seed, then Newton on erf(x) - t.
    let mut x = t * std::f64::consts::PI.sqrt() / 2.0; // exact near 0
    for _ in 0..60 {
        let f = erf(x) - t;
        let df = 2.0 / std::f64::consts::PI.sqrt() * (-x * x).exp();
        let step = f / df;
        x -= step;
        if step.abs() < 1e-15 {
            break;
        }
    }
    Ok(x)
}

/// Five representative constant sets used to exercise every closed-form
/// branch; combine with [`coerce_constants`] to satisfy per-branch
/// preconditions.
pub fn reference_constant_sets() -> Vec<BranchConstants> {
    vec![
        BranchConstants::default(),
        BranchConstants {
            alpha1: 2.0,
            alpha0: 0.5,
            a: 2.0,
            c: -1.0,
            d: 0.5,
            ci: 1.5,
            ki: -0.7,
            hi: -1.0,
        },
        BranchConstants {
            alpha1: -1.5,
            alpha0: 0.25,
            a: -1.0,
            c: 0.3,
            d: 0.4,
            ci: 0.8,
            ki: 2.0,
            hi: 1.0,
        },
        BranchConstants {
            alpha1: 0.5,
            alpha0: -1.0,
            a: 0.7,
            c: 2.0,
            d: -0.2,
            ci: 2.5,
            ki: 0.5,
            hi: 0.0,
        },
        BranchConstants {
            alpha1: 3.0,
            alpha0: 1.0,
            a: 1.3,
            c: 0.0,
            d: 2.1,
            ci: 1.0,
            ki: 1.0,
            hi: 1.0,
        },
    ]
}

/// Minimally adjust a constant set so it satisfies the preconditions of
/// the given branch without changing its flavour.
pub fn coerce_constants(id: BranchId, k: &BranchConstants) -> BranchConstants {
    // Adjust each constant set to satisfy the branch preconditions
    // without changing its flavour.
    let mut k = *k;
    match id {
        BranchId::EssTanhLog => {
            if k.alpha1 == 0.0 {
                k.alpha1 = 1.0;
            }
            if k.alpha1 * k.alpha1 - 4.0 * k.alpha0 <= 0.0 {
                k.alpha0 = k.alpha1 * k.alpha1 / 4.0 - 1.0;
            }
            k.ci = k.ci.abs().max(0.5);
        }
        BranchId::EssLogReciprocal => {
            if k.alpha1 == 0.0 {
                k.alpha1 = 1.0;
            }
            k.ci = k.ci.abs().max(0.5);
        }
        BranchId::EssTanLog => {
            if k.alpha1 == 0.0 {
                k.alpha1 = 1.0;
            }
            if 4.0 * k.alpha0 - k.alpha1 * k.alpha1 <= 0.0 {
                k.alpha0 = k.alpha1 * k.alpha1 / 4.0 + 1.0;
            }
            k.ci = k.ci.abs().max(0.5);
        }
        BranchId::EssTan => {
            k.alpha0 = k.alpha0.abs().max(0.5);
            if k.ci == 0.0 {
                k.ci = 1.0;
            }
        }
        BranchId::EssTanh | BranchId::EssConst => {
            k.alpha0 = -k.alpha0.abs().max(0.5);
            if k.ci == 0.0 {
                k.ci = 1.0;
            }
        }
        BranchId::HomPower => {
            if k.a + k.d == 0.0 {
                k.d += 0.5;
            }
            if k.a == k.d {
                k.d += 0.7;
            }
        }
        BranchId::HomLog | BranchId::HomFrozenConst | BranchId::HomExp => {
            if k.a == 0.0 {
                k.a = 1.0;
            }
            if k.ki == 0.0 {
                k.ki = 1.0;
            }
        }
        BranchId::HomConst | BranchId::HomLinear => {
            if k.ki == 0.0 {
                k.ki = 1.0;
            }
            if k.c == 0.0 {
                k.c = 1.0;
            }
        }
        BranchId::HomFrozenFree | BranchId::EssReciprocal => {}
    }
    k
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(domain: [f64; 2], n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| {
                let t = (i as f64 + 0.5) / n as f64;
                domain[0] + t * (domain[1] - domain[0])
            })
            .collect()
    }


    #[test]
    fn every_branch_solves_its_system() {
        for id in ALL_BRANCHES {
            for base in reference_constant_sets() {
                let k = coerce_constants(id, &base);
                let br = closed_form_branch(id, &k).unwrap();
                for x in sample(br.domain, 20) {
                    let res = ode111_residual(
                        std::slice::from_ref(&br.profile),
                        std::slice::from_ref(&br.field),
                        &br.action,
                        &[x],
                    )
                    .unwrap();
                    let (r1, r2) = res[0];
                    assert!(
                        r1 <= 1e-10 && r2 <= 1e-10,
                        "{id:?} at x={x}: residuals ({r1:.2e}, {r2:.2e})"
                    );
                }
            }
        }
    }

    #[test]
    fn reciprocal_branch_hand_check() {
        let k = BranchConstants {
            ci: 1.0,
            ..Default::default()
        };
        let br = closed_form_branch(BranchId::EssReciprocal, &k).unwrap();
        let res = ode111_residual(
            std::slice::from_ref(&br.profile),
            std::slice::from_ref(&br.field),
            &br.action,
            &[2.0],
        )
        .unwrap();
        assert!(res[0].0 <= 1e-12 && res[0].1 <= 1e-12);
    }

    #[test]
    fn log_reciprocal_branch_at_e() {
        // alpha1 = 1, c_i = 1: at x = e the profile is 1/2 and both sides of
        // the Riccati equation equal 1.
        let k = BranchConstants {
            alpha1: 1.0,
            ci: 1.0,
            ..Default::default()
        };
        let br = closed_form_branch(BranchId::EssLogReciprocal, &k).unwrap();
        let env = ParamEnv::new();
        let x = std::f64::consts::E;
        let f = br.profile.eval_f64(&[x], &env).unwrap();
        assert!((f - 0.5).abs() < 1e-12);
        let w = br.field.eval_f64(&[x], &env).unwrap();
        assert!((w + x).abs() < 1e-12);
        let (_, fg, _) = partials(&br.profile, &[x], &env).unwrap();
        let lhs = w * fg[0];
        let rhs = f * f + 1.0 * f + 0.25;
        assert!((lhs - 1.0).abs() < 1e-12 && (rhs - 1.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_constants_are_rejected() {
        let k = BranchConstants {
            alpha1: 0.0,
            ..Default::default()
        };
        assert!(matches!(
            closed_form_branch(BranchId::EssTanhLog, &k),
            Err(OdeError::InvalidConstants(_))
        ));
        let k = BranchConstants {
            alpha0: 1.0,
            ..Default::default()
        };
        assert!(matches!(
            closed_form_branch(BranchId::EssTanh, &k),
            Err(OdeError::InvalidConstants(_))
        ));
    }

    #[test]
    fn partner_from_constant_profiles_is_constant_diagonal() {
        let f: Vec<ScalarExpr> = ["1", "2", "4"]
            .iter()
            .map(|s| ScalarExpr::parse(s, &["x"], &[]).unwrap())
            .collect();
        let g1 = partner_from_f(&f, 1.0, 1.0, &[0.1, 0.2, 0.3]).unwrap();
        let g2 = partner_from_f(&f, 1.0, 1.0, &[-1.0, 0.5, 2.0]).unwrap();
        for i in 0..3 {
            assert!((g1[i][i] - g2[i][i]).abs() < 1e-14);
            for j in 0..3 {
                if i != j {
                    assert_eq!(g1[i][j], 0.0);
                }
            }
        }
        // Shift collision is reported.
        assert!(matches!(
            partner_from_f(&f, -1.0, 1.0, &[0.0, 0.0, 0.0]),
            Err(OdeError::DegeneratePartner(0))
        ));
    }

    #[test]
    fn alpha_zeta_known_solutions() {
        let coords = ["x"];
        // Linear pair: zeta = C z, alpha = -C z / 2 with b = 0, B = C/4.
        let big_c = 2.0;
        let zeta = ScalarExpr::parse("2*x", &coords, &[]).unwrap();
        let alpha = ScalarExpr::parse("-x", &coords, &[]).unwrap();
        let (r1, r2) = alpha_zeta_residuals(&alpha, &zeta, 0.0, big_c / 4.0, big_c, 0.7).unwrap();
        assert!(r1 < 1e-12 && r2 < 1e-12);
        // Inverse-square pair: zeta = 1/z^2, alpha = 1/z with b = 2, B = 0,
        // C = 0.
        let zeta = ScalarExpr::parse("1/x^2", &coords, &[]).unwrap();
        let alpha = ScalarExpr::parse("1/x", &coords, &[]).unwrap();
        for z in sample([0.5, 2.0], 8) {
            let (r1, r2) = alpha_zeta_residuals(&alpha, &zeta, 2.0, 0.0, 0.0, z).unwrap();
            assert!(r1 < 1e-12 && r2 < 1e-12, "z={z}: ({r1:.2e},{r2:.2e})");
        }
        // Constant zeta with affine alpha.
        let zeta = ScalarExpr::parse("1", &coords, &[]).unwrap();
        let alpha = ScalarExpr::parse("-x+3", &coords, &[]).unwrap();
        let (r1, r2) = alpha_zeta_residuals(&alpha, &zeta, 1.0, 1.0, 1.0, 0.3).unwrap();
        assert!(r1 < 1e-12 && r2 < 1e-12);
    }

    #[test]
    fn gluing_holds_for_inverse_square_branch() {
        let coords = ["x"];
        let zeta = ScalarExpr::parse("3/x^2", &coords, &[]).unwrap();
        let alpha = ScalarExpr::parse("0.5/x", &coords, &[]).unwrap();
        for z in sample([0.5, 2.0], 10) {
            let (r1, r2) = gluing_residuals(&alpha, &zeta, 0.0, z).unwrap();
            assert!(r1 < 1e-10 && r2 < 1e-10, "z={z}: ({r1:.2e},{r2:.2e})");
        }
        // Constant zeta with quadratic alpha violates the system.
        let zeta = ScalarExpr::parse("2", &coords, &[]).unwrap();
        let alpha = ScalarExpr::parse("x^2", &coords, &[]).unwrap();
        // zeta' = 0 makes the first equation trivial; use the second.
        let (_, r2) = gluing_residuals(&alpha, &zeta, 0.0, 0.8).unwrap();
        assert!(r2 > 1e-2);
    }

    #[test]
    fn first_order_system_implies_gluing() {
        // Any (alpha, zeta) solving the first-order system with constants
        // (b, B, C) must satisfy the second-order system with the same C,
        // where b can be recovered as b = -(2 alpha' + C)/zeta.
        let coords = ["x"];
        let zeta = ScalarExpr::parse("1/x^2", &coords, &[]).unwrap();
        let alpha = ScalarExpr::parse("1/x", &coords, &[]).unwrap();
        let env = ParamEnv::new();
        for z in sample([0.4, 2.2], 50) {
            let (r1, r2) = alpha_zeta_residuals(&alpha, &zeta, 2.0, 0.0, 0.0, z).unwrap();
            assert!(r1 < 1e-11 && r2 < 1e-11);
            let (g1, g2) = gluing_residuals(&alpha, &zeta, 0.0, z).unwrap();
            assert!(g1 < 1e-10 && g2 < 1e-10);
            let (_, ag, _) = partials(&alpha, &[z], &env).unwrap();
            let zv = zeta.eval_f64(&[z], &env).unwrap();
            let b = -(2.0 * ag[0] + 0.0) / zv;
            assert!((b - 2.0).abs() < 1e-10);
        }
    }

    #[test]
    fn zeta_ode_known_solutions() {
        let coords = ["x"];
        let zeta = ScalarExpr::parse("1/x^2", &coords, &[]).unwrap();
        for z in sample([0.5, 2.0], 8) {
            let r = zeta_ode_residual(&zeta, 2.0, 0.0, 0.0, z).unwrap();
            assert!(r < 1e-10, "z={z}: {r:.2e}");
        }
        let zeta = ScalarExpr::parse("exp(0.7*x)", &coords, &[]).unwrap();
        for z in sample([-1.0, 1.0], 8) {
            let r = zeta_ode_residual(&zeta, 0.0, 1.0, 0.0, z).unwrap();
            assert!(r < 1e-10, "z={z}: {r:.2e}");
        }
        // Linear zeta is not a solution for generic constants.
        let zeta = ScalarExpr::parse("x+2", &coords, &[]).unwrap();
        let r = zeta_ode_residual(&zeta, 1.0, 0.0, 1.0, 0.5).unwrap();
        assert!(r > 1e-3);
    }

    #[test]
    fn psi_with_k_one_matches_closed_form() {
        // psi = z - tanh(z) (k0 = 0, k1 = 1) solves the equation with k = 1.
        let z0: f64 = 0.5;
        let init = (z0 - z0.tanh(), z0.tanh() * z0.tanh());
        let sol = solve_psi(1.0, [z0, 2.0], init, 1e-11).unwrap();
        for (i, &z) in sol.zs.iter().enumerate() {
            let want = z - z.tanh();
            assert!(
                (sol.psi[i] - want).abs() < 1e-8,
                "z={z}: psi {} want {want}",
                sol.psi[i]
            );
            let wantp = z.tanh() * z.tanh();
            assert!((sol.psi_prime[i] - wantp).abs() < 1e-8);
        }
        assert!(sol.max_residual() < 1e-8, "defect {}", sol.max_residual());
        // The conformal factor psi' keeps one sign.
        assert!(sol.psi_prime.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn psi_with_k_zero_matches_inverse_error_function() {
        // For k = 0 the conformal factor is psi' = -1/(2 inverf(z)^2), with
        // psi = z + 1/(sqrt(pi) w e^{w^2}) where w = inverf(z).
        let z0: f64 = 0.5;
        let w0 = inverf(z0).unwrap();
        let sp = std::f64::consts::PI.sqrt();
        let psi0 = z0 + 1.0 / (sp * w0 * (w0 * w0).exp());
        let sol = solve_psi(0.0, [z0, 0.85], (psi0, -0.5 / (w0 * w0)), 1e-11).unwrap();
        for (i, &z) in sol.zs.iter().enumerate() {
            let w = inverf(z).unwrap();
            let want = -0.5 / (w * w);
            assert!(
                (sol.psi_prime[i] - want).abs() < 1e-6,
                "z={z}: psi' {} want {want}",
                sol.psi_prime[i]
            );
        }
        assert!(sol.max_residual() < 1e-6);
    }

    #[test]
    fn psi_rejects_excluded_k() {
        assert!(matches!(
            solve_psi(-1.0, [0.0, 1.0], (1.0, 1.0), 1e-10),
            Err(OdeError::InvalidConstants(_))
        ));
    }

    #[test]
    fn inverf_inverts_erf() {
        for i in 0..=18 {
            let t = -0.9 + i as f64 * 0.1;
            let x = inverf(t).unwrap();
            assert!((erf(x) - t).abs() < 1e-12, "t={t}");
        }
        assert!(matches!(inverf(0.95), Err(OdeError::InvalidConstants(_))));
    }

    #[test]
    fn riccati_params_derived_quantities() {
        let r = Riccati111Params::new(0.0, -1.0, 0.25, 1.0);
        assert!((r.alpha1.unwrap() - 1.0).abs() < 1e-15);
        assert!((r.alpha0.unwrap() - 0.25).abs() < 1e-15);
        let r = Riccati111Params::new(1.0, 0.0, 0.25, 1.0);
        assert!(r.alpha1.is_none() && r.alpha0.is_none());
    }
}
