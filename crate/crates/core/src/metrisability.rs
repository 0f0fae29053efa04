//! The correspondence between metrics and weighted contravariant tensors,
//! the linear metrisability system, projective pencils, Benenti tensors with
//! their eigenstructure, the induced 2x2 Lie-action matrix on a metrisation
//! pencil, and the quadratic-polynomial identities that action satisfies.
//!
//! A metric g enters the linear theory through the weighted tensor
//! `sigma^{ij} = |det g|^{1/(n+1)} g^{ij}`; two metrics are projectively
//! equivalent iff their sigmas solve the same linear first-order system.
//! For a pair (g, gbar) the Benenti tensor
//! `L = |det gbar / det g|^{1/(n+1)} gbar^{-1} g` (equivalently
//! `sigmabar sigma^{-1}`) carries the joint eigenstructure, and the Lie
//! derivative along a projective field acts on span{sigma, sigmabar} by a
//! 2x2 matrix A = (a b; c d) whose associated quadratic
//! `S_A(t) = -b t^2 + (d - a) t + c` governs the eigenvalue dynamics.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::autodiff::{partials, AdError};
use crate::expr::{Ast, ExprError, Func, ParamEnv, ScalarExpr};
use crate::geometry::{
    det, eval_metric, eval_vector, invert, lie_derivative_from_evals, GeomError, MetricEval,
    MetricSpec, VectorFieldSpec,
};

#[derive(Debug, Error)]
pub enum MetriError {
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Ad(#[from] AdError),
    #[error("weighted tensor is degenerate (|det| = {0:.3e})")]
    DegenerateSigma(f64),
    #[error("pencil combination is singular (|det| = {0:.3e})")]
    DegeneratePencil(f64),
    #[error("sigma and sigmabar are proportional at all samples (sv = {0:.3e})")]
    DependentBasis(f64),
    #[error("component count mismatch: expected {expected}, got {got}")]
    ComponentCount { expected: usize, got: usize },
}

/// Weighted contravariant tensor at a point.
#[derive(Debug, Clone)]
pub struct WeightedTensor {
    pub dim: usize,
    pub sigma: [[f64; 3]; 3],
    pub full_rank: bool,
}

fn rank_flag(sigma: &[[f64; 3]; 3], dim: usize) -> bool {
    let mut norm: f64 = 0.0;
    for row in sigma.iter().take(dim) {
        for &v in row.iter().take(dim) {
            norm = norm.max(v.abs());
        }
    }
    det(sigma, dim).abs() > 1e-10 * (1.0 + norm).powi(dim as i32)
}

/// `sigma^{ij} = |det g|^{1/(n+1)} g^{ij}` at a point.
pub fn sigma_of_g(m: &MetricSpec, p: &[f64]) -> Result<WeightedTensor, MetriError> {
    let me = eval_metric(m, p)?;
    Ok(sigma_from_eval(&me))
}

pub(crate) fn sigma_from_eval(me: &MetricEval) -> WeightedTensor {
    let n = me.dim;
    let alpha = me.det.abs().powf(1.0 / (n as f64 + 1.0));
    let mut sigma = [[0.0; 3]; 3];
    for i in 0..n {
        for j in 0..n {
            sigma[i][j] = alpha * me.ginv[i][j];
        }
    }
    let full_rank = rank_flag(&sigma, n);
    WeightedTensor {
        dim: n,
        sigma,
        full_rank,
    }
}

/// Inverse transformation: recover the covariant metric from its weighted
/// tensor via `g^{ij} = |det sigma| sigma^{ij}`.
pub fn g_of_sigma(s: &WeightedTensor) -> Result<[[f64; 3]; 3], MetriError> {
    let d = det(&s.sigma, s.dim);
    if !rank_flag(&s.sigma, s.dim) {
        return Err(MetriError::DegenerateSigma(d.abs()));
    }
    let mut ginv = [[0.0; 3]; 3];
    for i in 0..s.dim {
        for j in 0..s.dim {
            ginv[i][j] = d.abs() * s.sigma[i][j];
        }
    }
    invert(&ginv, s.dim).ok_or(MetriError::DegenerateSigma(d.abs()))
}

// ---------------------------------------------------------------------------
// Sigma as a differentiable field
// ---------------------------------------------------------------------------

/// Weighted tensor given as a field of expressions, so the linear system can
/// be evaluated with exact derivatives.
#[derive(Debug, Clone)]
pub struct SigmaField {
    pub dim: usize,
    pub coords: Vec<String>,
    /// Full symmetric matrix of component expressions.
    pub entries: Vec<Vec<ScalarExpr>>,
    pub params: ParamEnv,
}

fn b(a: Ast) -> Box<Ast> {
    Box::new(a)
}

fn ast_det(g: &[Vec<&Ast>], dim: usize) -> Ast {
    let m = |i: usize, j: usize| g[i][j].clone();
    let mul = |a: Ast, c: Ast| Ast::Mul(b(a), b(c));
    if dim == 2 {
        Ast::Sub(b(mul(m(0, 0), m(1, 1))), b(mul(m(0, 1), m(1, 0))))
    } else {
        let minor = |i0: usize, i1: usize, j0: usize, j1: usize| {
            Ast::Sub(b(mul(m(i0, j0), m(i1, j1))), b(mul(m(i0, j1), m(i1, j0))))
        };
        let t0 = mul(m(0, 0), minor(1, 2, 1, 2));
        let t1 = mul(m(0, 1), minor(1, 2, 0, 2));
        let t2 = mul(m(0, 2), minor(1, 2, 0, 1));
        Ast::Add(b(Ast::Sub(b(t0), b(t1))), b(t2))
    }
}

/// Cofactor (adjugate transposed) entry so that `inv = adj / det`.
fn ast_inverse_entry(g: &[Vec<&Ast>], dim: usize, i: usize, j: usize, detast: &Ast) -> Ast {
    let m = |r: usize, c: usize| g[r][c].clone();
    let mul = |a: Ast, c: Ast| Ast::Mul(b(a), b(c));
    let cof = if dim == 2 {
        // inv = (1/det) [[g11, -g01], [-g10, g00]]
        match (i, j) {
            (0, 0) => m(1, 1),
            (0, 1) => Ast::Neg(b(m(0, 1))),
            (1, 0) => Ast::Neg(b(m(1, 0))),
            _ => m(0, 0),
        }
    } else {
        // inv_{ij} = cofactor_{ji} / det
        let rows: Vec<usize> = (0..3).filter(|&r| r != j).collect();
        let cols: Vec<usize> = (0..3).filter(|&c| c != i).collect();
        let minor = Ast::Sub(
            b(mul(m(rows[0], cols[0]), m(rows[1], cols[1]))),
            b(mul(m(rows[0], cols[1]), m(rows[1], cols[0]))),
        );
        if (i + j).is_multiple_of(2) {
            minor
        } else {
            Ast::Neg(b(minor))
        }
    };
    Ast::Div(b(cof), b(detast.clone()))
}

impl SigmaField {
    /// Parse component expressions (upper triangle, row-major).
    pub fn new(
        coords: &[&str],
        upper: &[&str],
        params: ParamEnv,
    ) -> Result<Self, MetriError> {
        let dim = coords.len();
        let expected = dim * (dim + 1) / 2;
        if upper.len() != expected {
            return Err(MetriError::ComponentCount {
                expected,
                got: upper.len(),
            });
        }
        let names: Vec<&str> = params.0.keys().map(|s| s.as_str()).collect();
        let mut entries = vec![vec![ScalarExpr::constant(0.0, coords); dim]; dim];
        let mut k = 0;
        for i in 0..dim {
            for j in i..dim {
                let e = ScalarExpr::parse(upper[k], coords, &names)?;
                entries[i][j] = e.clone();
                entries[j][i] = e;
                k += 1;
            }
        }
        Ok(SigmaField {
            dim,
            coords: coords.iter().map(|s| s.to_string()).collect(),
            entries,
            params,
        })
    }

    /// The weighted tensor of a metric, built symbolically so it can be
    /// differentiated exactly: `sigma^{ij} = (adj_{ji}/det) |det|^{1/(n+1)}`.
    pub fn of_metric(m: &MetricSpec) -> Self {
        let dim = m.dim;
        let coords: Vec<&str> = m.coords.iter().map(|s| s.as_str()).collect();
        let asts: Vec<Vec<&Ast>> = m.g.iter().map(|row| row.iter().map(|e| e.ast()).collect()).collect();
        let detast = ast_det(&asts, dim);
        let weight = Ast::Pow(
            b(Ast::Apply(Func::Abs, b(detast.clone()))),
            b(Ast::Const(1.0 / (dim as f64 + 1.0))),
        );
        let mut entries = vec![vec![ScalarExpr::constant(0.0, &coords); dim]; dim];
        for i in 0..dim {
            for j in 0..dim {
                let inv = ast_inverse_entry(&asts, dim, i, j, &detast);
                let e = Ast::Mul(b(inv), b(weight.clone()));
                entries[i][j] = ScalarExpr::from_ast(e, &coords);
            }
        }
        SigmaField {
            dim,
            coords: m.coords.clone(),
            entries,
            params: m.params.clone(),
        }
    }

    /// Pointwise linear combination `t1 self + t2 other` as a field.
    pub fn linear_combination(&self, t1: f64, other: &SigmaField, t2: f64) -> SigmaField {
        let coords: Vec<&str> = self.coords.iter().map(|s| s.as_str()).collect();
        let mut entries = vec![vec![ScalarExpr::constant(0.0, &coords); self.dim]; self.dim];
        for i in 0..self.dim {
            for j in 0..self.dim {
                let a = Ast::Mul(b(Ast::Const(t1)), b(self.entries[i][j].ast().clone()));
                let c = Ast::Mul(b(Ast::Const(t2)), b(other.entries[i][j].ast().clone()));
                entries[i][j] = ScalarExpr::from_ast(Ast::Add(Box::new(a), Box::new(c)), &coords);
            }
        }
        let mut params = self.params.clone();
        for (k, v) in other.params.0.iter() {
            params.0.entry(k.clone()).or_insert(*v);
        }
        SigmaField {
            dim: self.dim,
            coords: self.coords.clone(),
            entries,
            params,
        }
    }

    /// Values and first derivatives of all components at a point.
    #[allow(clippy::type_complexity)]
    pub fn eval(&self, p: &[f64]) -> Result<([[f64; 3]; 3], [[[f64; 3]; 3]; 3]), MetriError> {
        let mut sigma = [[0.0; 3]; 3];
        let mut dsigma = [[[0.0; 3]; 3]; 3];
        for i in 0..self.dim {
            for j in i..self.dim {
                let (val, grad, _) = partials(&self.entries[i][j], p, &self.params)?;
                sigma[i][j] = val;
                sigma[j][i] = val;
                for a in 0..self.dim {
                    dsigma[a][i][j] = grad[a];
                    dsigma[a][j][i] = grad[a];
                }
            }
        }
        Ok((sigma, dsigma))
    }
}

/// Max-norm of the trace-free part of the covariant derivative of a weighted
/// tensor field, taken in the connection of `m` and normalized by the field
/// magnitude.  Zero (to tolerance) iff the field solves the metrisability
/// system of `m`.
pub fn metrisability_residual(
    m: &MetricSpec,
    sfield: &SigmaField,
    p: &[f64],
) -> Result<f64, MetriError> {
    let n = m.dim;
    let gamma = crate::geometry::christoffel(m, p)?;
    let (sigma, dsigma) = sfield.eval(p)?;
    let w = 1.0 / (n as f64 + 1.0);
    // nabla_a sigma^{bc} with the pencil weight term.
    let mut nabla = [[[0.0; 3]; 3]; 3];
    for a in 0..n {
        let mut trgamma = 0.0;
        for d in 0..n {
            trgamma += gamma[d][d][a];
        }
        for bb in 0..n {
            for c in 0..n {
                let mut s = dsigma[a][bb][c];
                for d in 0..n {
                    s += gamma[bb][a][d] * sigma[d][c] + gamma[c][a][d] * sigma[d][bb];
                }
                s -= 2.0 * w * trgamma * sigma[bb][c];
                nabla[a][bb][c] = s;
            }
        }
    }
    // Contraction nabla_i sigma^{ib}.
    let mut trace = [0.0; 3];
    for bb in 0..n {
        for i in 0..n {
            trace[bb] += nabla[i][i][bb];
        }
    }
    let mut scale: f64 = 1.0;
    for i in 0..n {
        for j in 0..n {
            scale = scale.max(sigma[i][j].abs());
        }
    }
    let mut worst: f64 = 0.0;
    for a in 0..n {
        for bb in 0..n {
            for c in 0..n {
                let da_c = if a == c { 1.0 } else { 0.0 };
                let da_b = if a == bb { 1.0 } else { 0.0 };
                let r = nabla[a][bb][c] - w * (da_c * trace[bb] + da_b * trace[c]);
                worst = worst.max(r.abs());
            }
        }
    }
    Ok(worst / scale)
}

/// Metric of the pencil combination `t1 sigma + t2 sigmabar` at a point.
pub fn pencil_metric(
    g: &MetricSpec,
    gbar: &MetricSpec,
    t1: f64,
    t2: f64,
    p: &[f64],
) -> Result<[[f64; 3]; 3], MetriError> {
    let s1 = sigma_of_g(g, p)?;
    let s2 = sigma_of_g(gbar, p)?;
    let mut sigma = [[0.0; 3]; 3];
    for i in 0..g.dim {
        for j in 0..g.dim {
            sigma[i][j] = t1 * s1.sigma[i][j] + t2 * s2.sigma[i][j];
        }
    }
    let full_rank = rank_flag(&sigma, g.dim);
    let wt = WeightedTensor {
        dim: g.dim,
        sigma,
        full_rank,
    };
    g_of_sigma(&wt).map_err(|e| match e {
        MetriError::DegenerateSigma(d) => MetriError::DegeneratePencil(d),
        other => other,
    })
}

// ---------------------------------------------------------------------------
// Benenti tensor
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct BenentiTensor {
    pub dim: usize,
    pub l: [[f64; 3]; 3],
    /// (re, im) pairs sorted by real part; closed under conjugation.
    pub eigenvalues: Vec<(f64, f64)>,
    pub eigvec_basis: Vec<Vec<f64>>,
    pub diagonalizable: bool,
    /// Multiplicities of clustered real parts, in eigenvalue order.
    pub multiplicities: Vec<usize>,
}

fn mat_mul(a: &[[f64; 3]; 3], c: &[[f64; 3]; 3], n: usize) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                out[i][j] += a[i][k] * c[k][j];
            }
        }
    }
    out
}

/// Real roots (with possible complex pair) of `x^3 + p x^2 + q x + r`.
fn cubic_roots(p: f64, q: f64, r: f64) -> Vec<(f64, f64)> {
    // Depressed cubic t^3 + at + b with x = t - p/3.
    let a = q - p * p / 3.0;
    let bb = 2.0 * p * p * p / 27.0 - p * q / 3.0 + r;
    let shift = -p / 3.0;
    let disc = -4.0 * a * a * a - 27.0 * bb * bb;
    let mut roots = if disc >= 0.0 {
        // Three real roots: trigonometric form.
        if a.abs() < 1e-300 {
            let t = -bb.cbrt() * (-1.0f64).cbrt().abs();
            let _ = t;
            vec![
                ((-bb).cbrt() + shift, 0.0),
                ((-bb).cbrt() + shift, 0.0),
                ((-bb).cbrt() + shift, 0.0),
            ]
        } else {
            let m = 2.0 * (-a / 3.0).sqrt();
            let arg = (3.0 * bb / (a * m)).clamp(-1.0, 1.0);
            let theta = arg.acos() / 3.0;
            (0..3)
                .map(|k| {
                    (
                        m * (theta - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos() + shift,
                        0.0,
                    )
                })
                .collect()
        }
    } else {
        // One real root (Cardano) plus a complex pair.
        let d = (bb * bb / 4.0 + a * a * a / 27.0).sqrt();
        let u = (-bb / 2.0 + d).cbrt();
        let v = (-bb / 2.0 - d).cbrt();
        let t1 = u + v;
        let re = -t1 / 2.0;
        let im = (u - v) * 3.0f64.sqrt() / 2.0;
        vec![
            (t1 + shift, 0.0),
            (re + shift, im),
            (re + shift, -im),
        ]
    };
    // Newton polish for the real roots.
    for root in roots.iter_mut() {
        if root.1 == 0.0 {
            let mut x = root.0;
            for _ in 0..3 {
                let f = x * x * x + p * x * x + q * x + r;
                let df = 3.0 * x * x + 2.0 * p * x + q;
                if df.abs() > 1e-10 {
                    x -= f / df;
                }
            }
            root.0 = x;
        }
    }
    roots
}

fn matrix_rank(m: &DMatrix<f64>, tol: f64) -> usize {
    let svd = m.clone().svd(false, false);
    svd.singular_values.iter().filter(|&&s| s > tol).count()
}

/// Null-space vector of (L - lambda I), via the right singular vector of the
/// smallest singular value.
fn null_vector(l: &[[f64; 3]; 3], lambda: f64, n: usize) -> Vec<f64> {
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = l[i][j] - if i == j { lambda } else { 0.0 };
        }
    }
    let svd = m.svd(false, true);
    let vt = svd.v_t.unwrap();
    (0..n).map(|j| vt[(n - 1, j)]).collect()
}

fn is_positive_definite(g: &[[f64; 3]; 3], n: usize) -> bool {
    if g[0][0] <= 0.0 {
        return false;
    }
    let m2 = g[0][0] * g[1][1] - g[0][1] * g[1][0];
    if m2 <= 0.0 {
        return false;
    }
    n == 2 || det(g, 3) > 0.0
}

/// Benenti tensor of the ordered pair (g, gbar) at a point, with full
/// eigenstructure.
pub fn benenti(g: &MetricSpec, gbar: &MetricSpec, p: &[f64]) -> Result<BenentiTensor, MetriError> {
    let n = g.dim;
    let me = eval_metric(g, p)?;
    let mebar = eval_metric(gbar, p)?;
    let phi = (mebar.det / me.det).abs().powf(1.0 / (n as f64 + 1.0));
    let mut l = mat_mul(&mebar.ginv, &me.g, n);
    for row in l.iter_mut().take(n) {
        for v in row.iter_mut().take(n) {
            *v *= phi;
        }
    }
    let mut lnorm: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            lnorm = lnorm.max(l[i][j].abs());
        }
    }

    let mut eigenvalues: Vec<(f64, f64)>;
    let mut eigvecs: Vec<Vec<f64>> = Vec::new();
    let mut diagonalizable;
    if is_positive_definite(&me.g, n) {
        // gL is symmetric; solve the symmetric-definite generalized problem
        // (gL) u = lambda g u through the Cholesky congruence of g.
        let gl = mat_mul(&me.g, &l, n);
        let gd = DMatrix::from_fn(n, n, |i, j| me.g[i][j]);
        let chol = nalgebra::linalg::Cholesky::new(gd).expect("positive definite");
        let cinv = chol.l().try_inverse().expect("triangular inverse");
        let gld = DMatrix::from_fn(n, n, |i, j| 0.5 * (gl[i][j] + gl[j][i]));
        let bsym = &cinv * gld * cinv.transpose();
        let se = nalgebra::linalg::SymmetricEigen::new(bsym);
        let mut pairs: Vec<(f64, DVector<f64>)> = (0..n)
            .map(|k| {
                let u = se.eigenvectors.column(k).into_owned();
                let v = cinv.transpose() * u;
                (se.eigenvalues[k], v)
            })
            .collect();
        pairs.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
        eigenvalues = pairs.iter().map(|(lam, _)| (*lam, 0.0)).collect();
        eigvecs = pairs
            .iter()
            .map(|(_, v)| v.iter().copied().collect())
            .collect();
        diagonalizable = true;
    } else {
        // General real eigenproblem from the characteristic polynomial.
        let tr = (0..n).map(|i| l[i][i]).sum::<f64>();
        eigenvalues = if n == 2 {
            let dd = det(&l, 2);
            let disc = tr * tr - 4.0 * dd;
            if disc >= 0.0 {
                let s = disc.sqrt();
                vec![((tr - s) / 2.0, 0.0), ((tr + s) / 2.0, 0.0)]
            } else {
                let s = (-disc).sqrt() / 2.0;
                vec![(tr / 2.0, s), (tr / 2.0, -s)]
            }
        } else {
            // char(L): lambda^3 - tr lambda^2 + m2 lambda - det.
            let mut m2 = 0.0;
            for i in 0..3 {
                for j in (i + 1)..3 {
                    m2 += l[i][i] * l[j][j] - l[i][j] * l[j][i];
                }
            }
            cubic_roots(-tr, m2, -det(&l, 3))
        };
        eigenvalues.sort_by(|x, y| (x.0, x.1).partial_cmp(&(y.0, y.1)).unwrap());
        // Geometric multiplicities of the real eigenvalues decide
        // diagonalizability; complex pairs are simple here.
        let rank_tol = 1e-8 * (1.0 + lnorm);
        let ld = DMatrix::from_fn(n, n, |i, j| l[i][j]);
        let mut geom_total = 0usize;
        let mut seen: Vec<f64> = Vec::new();
        let cluster_tol = cluster_tolerance(&eigenvalues);
        for &(re, im) in &eigenvalues {
            if im != 0.0 {
                geom_total += 1;
                continue;
            }
            if seen.iter().any(|&s| (s - re).abs() <= cluster_tol) {
                continue;
            }
            seen.push(re);
            let mut shifted = ld.clone();
            for i in 0..n {
                shifted[(i, i)] -= re;
            }
            let geo = n - matrix_rank(&shifted, rank_tol);
            geom_total += geo.max(1);
            eigvecs.push(null_vector(&l, re, n));
        }
        diagonalizable = geom_total >= n;
        // With all-simple eigenvalues the matrix is always diagonalizable.
        let distinct = count_clusters(&eigenvalues);
        if distinct == n {
            diagonalizable = true;
        }
    }

    let multiplicities = cluster_multiplicities(&eigenvalues);
    Ok(BenentiTensor {
        dim: n,
        l,
        eigenvalues,
        eigvec_basis: eigvecs,
        diagonalizable,
        multiplicities,
    })
}

fn cluster_tolerance(eigs: &[(f64, f64)]) -> f64 {
    let mx = eigs.iter().fold(0.0f64, |a, e| a.max(e.0.abs().max(e.1.abs())));
    1e-7 * (1.0 + mx)
}

/// Multiplicity of the cluster each eigenvalue belongs to, in order.
fn cluster_multiplicities(eigs: &[(f64, f64)]) -> Vec<usize> {
    let tol = cluster_tolerance(eigs);
    eigs.iter()
        .map(|&(re, im)| {
            eigs.iter()
                .filter(|&&(r2, i2)| (r2 - re).abs() <= tol && (i2 - im).abs() <= tol)
                .count()
        })
        .collect()
}

fn count_clusters(eigs: &[(f64, f64)]) -> usize {
    let tol = cluster_tolerance(eigs);
    let mut reps: Vec<(f64, f64)> = Vec::new();
    for &(re, im) in eigs {
        if !reps
            .iter()
            .any(|&(r, i)| (r - re).abs() <= tol && (i - im).abs() <= tol)
        {
            reps.push((re, im));
        }
    }
    reps.len()
}

/// Symmetry defects of gL and gL^2 (relative max-norm); both vanish for a
/// genuine pair.
pub fn gl_symmetry_defects(
    g: &MetricSpec,
    gbar: &MetricSpec,
    p: &[f64],
) -> Result<(f64, f64), MetriError> {
    let n = g.dim;
    let me = eval_metric(g, p)?;
    let bt = benenti(g, gbar, p)?;
    let gl = mat_mul(&me.g, &bt.l, n);
    let gl2 = mat_mul(&gl, &bt.l, n);
    let defect = |m: &[[f64; 3]; 3]| {
        let mut scale: f64 = 1.0;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                scale = scale.max(m[i][j].abs());
                worst = worst.max((m[i][j] - m[j][i]).abs());
            }
        }
        worst / scale
    };
    Ok((defect(&gl), defect(&gl2)))
}

// ---------------------------------------------------------------------------
// Lie action on the pencil
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct ActionMatrix {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub fit_residual: f64,
}

/// Lie derivative of the weighted tensor of a metric along v, computed from
/// the Lie derivative of the metric:
/// `L_v sigma^{ij} = |det g|^{1/(n+1)} ((1/(n+1)) tr(g^{-1} L_vg) g^{ij} + (L_v g^{-1})^{ij})`
/// with `(L_v g^{-1})^{ij} = -(g^{-1} (L_vg) g^{-1})^{ij}`.
pub(crate) fn lie_sigma_from_evals(me: &MetricEval, lie_g: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let n = me.dim;
    let w = 1.0 / (n as f64 + 1.0);
    let alpha = me.det.abs().powf(w);
    let mut tr = 0.0;
    for i in 0..n {
        for j in 0..n {
            tr += me.ginv[i][j] * lie_g[j][i];
        }
    }
    let glg = mat_mul(&mat_mul(&me.ginv, lie_g, n), &me.ginv, n);
    let mut out = [[0.0; 3]; 3];
    for i in 0..n {
        for j in 0..n {
            out[i][j] = alpha * (w * tr * me.ginv[i][j] - glg[i][j]);
        }
    }
    out
}

fn vec_upper(m: &[[f64; 3]; 3], n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for j in i..n {
            out.push(m[i][j]);
        }
    }
    out
}

/// Fit the 2x2 action matrix A with `L_v sigma = a sigma + b sigmabar` and
/// `L_v sigmabar = c sigma + d sigmabar`, jointly over the samples.
pub fn lie_action_matrix(
    v: &VectorFieldSpec,
    g: &MetricSpec,
    gbar: &MetricSpec,
    samples: &[Vec<f64>],
) -> Result<ActionMatrix, MetriError> {
    let n = g.dim;
    let ncomp = n * (n + 1) / 2;
    let mut rows_a: Vec<[f64; 2]> = Vec::new();
    let mut rhs_s: Vec<f64> = Vec::new();
    let mut rhs_sbar: Vec<f64> = Vec::new();
    let mut scale: f64 = 1.0;
    let mut worst_sv: f64 = 0.0;
    for p in samples {
        let me = eval_metric(g, p)?;
        let mebar = eval_metric(gbar, p)?;
        let veg = eval_vector(v, &g.params, p)?;
        let lie_g = lie_derivative_from_evals(&me, &veg);
        let lie_gbar = lie_derivative_from_evals(&mebar, &veg);
        let s = sigma_from_eval(&me);
        let sbar = sigma_from_eval(&mebar);
        let ls = lie_sigma_from_evals(&me, &lie_g);
        let lsbar = lie_sigma_from_evals(&mebar, &lie_gbar);
        let vs = vec_upper(&s.sigma, n);
        let vsbar = vec_upper(&sbar.sigma, n);
        // Independence filter: discard samples where sigma, sigmabar are
        // numerically proportional.
        let stacked = DMatrix::from_fn(ncomp, 2, |i, j| if j == 0 { vs[i] } else { vsbar[i] });
        let sv = stacked.svd(false, false).singular_values;
        let smin = sv.min();
        let smax = sv.max();
        worst_sv = worst_sv.max(smin);
        if smin < 1e-6 * (1.0 + smax) {
            continue;
        }
        let vls = vec_upper(&ls, n);
        let vlsbar = vec_upper(&lsbar, n);
        for k in 0..ncomp {
            rows_a.push([vs[k], vsbar[k]]);
            rhs_s.push(vls[k]);
            rhs_sbar.push(vlsbar[k]);
            scale = scale.max(vs[k].abs()).max(vsbar[k].abs());
        }
    }
    if rows_a.len() < 2 * ncomp {
        return Err(MetriError::DependentBasis(worst_sv));
    }
    let m = DMatrix::from_fn(rows_a.len(), 2, |i, j| rows_a[i][j]);
    let svd = m.clone().svd(true, true);
    let sol1 = svd
        .solve(&DVector::from_vec(rhs_s.clone()), 1e-12)
        .expect("svd solve");
    let sol2 = svd
        .solve(&DVector::from_vec(rhs_sbar.clone()), 1e-12)
        .expect("svd solve");
    let r1 = (&m * &sol1 - DVector::from_vec(rhs_s)).abs().max();
    let r2 = (&m * &sol2 - DVector::from_vec(rhs_sbar)).abs().max();
    Ok(ActionMatrix {
        a: sol1[0],
        b: sol1[1],
        c: sol2[0],
        d: sol2[1],
        fit_residual: r1.max(r2) / scale,
    })
}

/// `S_A(t) = -b t^2 + (d - a) t + c`.
pub fn solodovnikov_poly(a: &ActionMatrix, t: f64) -> f64 {
    -a.b * t * t + (a.d - a.a) * t + a.c
}

/// Residual of the eigenvalue transport identity `S_A(lambda) = v(lambda)`
/// for an eigenvalue field given as an expression.
pub fn check_eigenvalue_identity(
    a: &ActionMatrix,
    lambda: &ScalarExpr,
    v: &VectorFieldSpec,
    params: &ParamEnv,
    p: &[f64],
) -> Result<f64, MetriError> {
    let (val, grad, _) = partials(lambda, p, params)?;
    let ve = eval_vector(v, params, p).map_err(MetriError::Geom)?;
    let mut directional = 0.0;
    for i in 0..grad.len() {
        directional += ve.v[i] * grad[i];
    }
    Ok((solodovnikov_poly(a, val) - directional).abs())
}

/// Residuals of the Benenti-tensor transport identity
/// `L_v L = -b L^2 + (d-a) L + c Id`, and the symmetry defect of
/// `(L_vg) L`.  Both vanish for a projective v with fitted A.
pub fn check_lvl(
    v: &VectorFieldSpec,
    g: &MetricSpec,
    gbar: &MetricSpec,
    a: &ActionMatrix,
    p: &[f64],
) -> Result<(f64, f64), MetriError> {
    let n = g.dim;
    let me = eval_metric(g, p)?;
    let mebar = eval_metric(gbar, p)?;
    let ve = eval_vector(v, &g.params, p)?;
    let w = 1.0 / (n as f64 + 1.0);
    let phi = (mebar.det / me.det).abs().powf(w);
    let k = mat_mul(&mebar.ginv, &me.g, n);
    let mut l = k;
    for row in l.iter_mut().take(n) {
        for e in row.iter_mut().take(n) {
            *e *= phi;
        }
    }
    // dL/dx^a by the product rule through phi, gbar^{-1}, g.
    let dginvbar = mebar.dginv();
    let mut dl = [[[0.0; 3]; 3]; 3];
    for aa in 0..n {
        let mut trbar = 0.0;
        let mut trg = 0.0;
        for i in 0..n {
            for j in 0..n {
                trbar += mebar.ginv[i][j] * mebar.dg[aa][j][i];
                trg += me.ginv[i][j] * me.dg[aa][j][i];
            }
        }
        let dphi = phi * w * (trbar - trg);
        for i in 0..n {
            for j in 0..n {
                let mut dk = 0.0;
                for t in 0..n {
                    dk += dginvbar[aa][i][t] * me.g[t][j] + mebar.ginv[i][t] * me.dg[aa][t][j];
                }
                dl[aa][i][j] = dphi * k[i][j] + phi * dk;
            }
        }
    }
    // (L_v L)^i_j = v^a dL^i_j/dx^a - L^a_j dv^i/dx^a + L^i_a dv^a/dx^j.
    let mut lvl = [[0.0; 3]; 3];
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for aa in 0..n {
                s += ve.v[aa] * dl[aa][i][j];
                s -= l[aa][j] * ve.dv[i][aa];
                s += l[i][aa] * ve.dv[aa][j];
            }
            lvl[i][j] = s;
        }
    }
    let l2 = mat_mul(&l, &l, n);
    let mut lnorm: f64 = 1.0;
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            lnorm = lnorm.max(l[i][j].abs());
            let idm = if i == j { 1.0 } else { 0.0 };
            let rhs = -a.b * l2[i][j] + (a.d - a.a) * l[i][j] + a.c * idm;
            worst = worst.max((lvl[i][j] - rhs).abs());
        }
    }
    // Symmetry of (L_vg) L.
    let lie_g = lie_derivative_from_evals(&me, &ve);
    let s = mat_mul(&lie_g, &l, n);
    let mut sscale: f64 = 1.0;
    let mut sym: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            sscale = sscale.max(s[i][j].abs());
            sym = sym.max((s[i][j] - s[j][i]).abs());
        }
    }
    Ok((worst / lnorm, sym / sscale))
}

/// Consistency of the two directions of the sigma/metric correspondence
/// under Lie differentiation: push `L_v sigma` through the linearized
/// inverse transformation and compare with the direct `L_v g`.
pub fn check_lie_transform_consistency(
    g: &MetricSpec,
    v: &VectorFieldSpec,
    p: &[f64],
) -> Result<f64, MetriError> {
    let n = g.dim;
    let me = eval_metric(g, p)?;
    let ve = eval_vector(v, &g.params, p)?;
    let lie_g = lie_derivative_from_evals(&me, &ve);
    let s = sigma_from_eval(&me);
    let ls = lie_sigma_from_evals(&me, &lie_g);
    // g^{-1} = sigma |det sigma|; linearize in delta sigma = L_v sigma:
    // delta(g^{-1}) = delta sigma |det sigma|
    //               + sigma |det sigma| tr(sigma^{-1} delta sigma),
    // then delta g = -g delta(g^{-1}) g.
    let dets = det(&s.sigma, n);
    let sinv = invert(&s.sigma, n).ok_or(MetriError::DegenerateSigma(dets.abs()))?;
    let mut tr = 0.0;
    for i in 0..n {
        for j in 0..n {
            tr += sinv[i][j] * ls[j][i];
        }
    }
    let mut dginv = [[0.0; 3]; 3];
    for i in 0..n {
        for j in 0..n {
            dginv[i][j] = dets.abs() * (ls[i][j] + s.sigma[i][j] * tr);
        }
    }
    let dg = mat_mul(&mat_mul(&me.g, &dginv, n), &me.g, n);
    let mut scale: f64 = 1.0;
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            scale = scale.max(lie_g[i][j].abs());
            worst = worst.max((lie_g[i][j] + dg[i][j]).abs());
        }
    }
    Ok(worst / scale)
}
