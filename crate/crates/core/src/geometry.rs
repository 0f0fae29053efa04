//! Metric evaluation and classical tensor calculus: Christoffel symbols,
//! Riemann/scalar/sectional curvature, Lie derivatives of the metric,
//! Killing/homothety classification, and the scalar-curvature decomposition
//! for conformally stretched product metrics g = zeta(z) (h + dz^2).
//!
//! All derivatives come from [`crate::autodiff`]; every operation is pure in
//! (spec, point) and batch evaluations may run concurrently.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{eval_dual, AdError, Dual2};
use crate::expr::{ExprError, ParamEnv, ScalarExpr};

/// Guard expressions (and |det g|) must exceed this at admissible points.
pub const GUARD_THRESHOLD: f64 = 1e-3;

#[derive(Debug, Clone, Error)]
pub enum GeomError {
    #[error("metric is singular or below the guard threshold (|det| = {0:.3e})")]
    SingularMetric(f64),
    #[error("could not draw enough admissible samples ({got} of {want})")]
    InsufficientSamples { want: usize, got: usize },
    #[error("dimension must be 2 or 3, got {0}")]
    BadDimension(usize),
    #[error("component list has wrong length: expected {expected}, got {got}")]
    ComponentCount { expected: usize, got: usize },
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Ad(#[from] AdError),
    #[error("invalid metric JSON: {0}")]
    Json(String),
}

// ---------------------------------------------------------------------------
// Specs
// ---------------------------------------------------------------------------

/// A symmetric metric given by component expressions, with parameter
/// bindings, per-coordinate sampling boxes and singular-locus guards.
#[derive(Debug, Clone)]
pub struct MetricSpec {
    pub dim: usize,
    pub coords: Vec<String>,
    /// Full symmetric `dim x dim` matrix of expressions.
    pub g: Vec<Vec<ScalarExpr>>,
    pub params: ParamEnv,
    pub domain: Vec<[f64; 2]>,
    /// Expressions whose absolute value must exceed [`GUARD_THRESHOLD`] at
    /// admissible sample points (distance from singular loci).
    pub guards: Vec<ScalarExpr>,
}

/// JSON form: `g` holds the upper triangle (row `i` lists entries `j >= i`)
/// or, equivalently, full rows; the lower triangle is mirrored.
#[derive(Debug, Serialize, Deserialize)]
struct MetricSpecJson {
    dim: usize,
    coords: Vec<String>,
    g: Vec<Vec<String>>,
    #[serde(default)]
    params: BTreeMap<String, f64>,
    domain: Vec<[f64; 2]>,
    #[serde(default)]
    guards: Vec<String>,
}

impl MetricSpec {
    /// Build from upper-triangle component sources in row-major order
    /// (`[g11, g12, g13, g22, g23, g33]` for dim 3).
    pub fn new(
        coords: &[&str],
        upper: &[&str],
        params: ParamEnv,
        domain: &[[f64; 2]],
        guards: &[&str],
    ) -> Result<Self, GeomError> {
        let dim = coords.len();
        if !(2..=3).contains(&dim) {
            return Err(GeomError::BadDimension(dim));
        }
        let expected = dim * (dim + 1) / 2;
        if upper.len() != expected {
            return Err(GeomError::ComponentCount {
                expected,
                got: upper.len(),
            });
        }
        if domain.len() != dim {
            return Err(GeomError::ComponentCount {
                expected: dim,
                got: domain.len(),
            });
        }
        let param_names: Vec<&str> = params.0.keys().map(|s| s.as_str()).collect();
        let mut g = vec![vec![ScalarExpr::constant(0.0, coords); dim]; dim];
        let mut k = 0;
        for i in 0..dim {
            for j in i..dim {
                let e = ScalarExpr::parse(upper[k], coords, &param_names)?;
                g[i][j] = e.clone();
                g[j][i] = e;
                k += 1;
            }
        }
        let guards = guards
            .iter()
            .map(|s| ScalarExpr::parse(s, coords, &param_names))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(MetricSpec {
            dim,
            coords: coords.iter().map(|s| s.to_string()).collect(),
            g,
            params,
            domain: domain.to_vec(),
            guards,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, GeomError> {
        let j: MetricSpecJson =
            serde_json::from_str(text).map_err(|e| GeomError::Json(e.to_string()))?;
        if j.coords.len() != j.dim {
            return Err(GeomError::Json(format!(
                "coords length {} does not match dim {}",
                j.coords.len(),
                j.dim
            )));
        }
        let mut upper: Vec<String> = Vec::new();
        if j.g.len() != j.dim {
            return Err(GeomError::Json(format!(
                "g must have {} rows, got {}",
                j.dim,
                j.g.len()
            )));
        }
        for (i, row) in j.g.iter().enumerate() {
            if row.len() == j.dim - i {
                upper.extend(row.iter().cloned());
            } else if row.len() == j.dim {
                upper.extend(row[i..].iter().cloned());
            } else {
                return Err(GeomError::Json(format!(
                    "row {i} of g must have {} or {} entries, got {}",
                    j.dim - i,
                    j.dim,
                    row.len()
                )));
            }
        }
        let coords: Vec<&str> = j.coords.iter().map(|s| s.as_str()).collect();
        let upper_refs: Vec<&str> = upper.iter().map(|s| s.as_str()).collect();
        let guards: Vec<&str> = j.guards.iter().map(|s| s.as_str()).collect();
        MetricSpec::new(
            &coords,
            &upper_refs,
            ParamEnv(j.params),
            &j.domain,
            &guards,
        )
    }

    pub fn to_json(&self) -> String {
        let upper: Vec<Vec<String>> = (0..self.dim)
            .map(|i| (i..self.dim).map(|j| self.g[i][j].to_string()).collect())
            .collect();
        let j = MetricSpecJson {
            dim: self.dim,
            coords: self.coords.clone(),
            g: upper,
            params: self.params.0.clone(),
            domain: self.domain.clone(),
            guards: self.guards.iter().map(|g| g.to_string()).collect(),
        };
        serde_json::to_string_pretty(&j).expect("metric spec serializes")
    }

    /// True when all guards and |det g| clear the threshold at `p`.
    pub fn admissible(&self, p: &[f64]) -> bool {
        for guard in &self.guards {
            match guard.eval_f64(p, &self.params) {
                Ok(v) if v.abs() > GUARD_THRESHOLD => {}
                _ => return false,
            }
        }
        match self.eval_g(p) {
            Ok(g) => det(&g, self.dim).abs() > GUARD_THRESHOLD,
            Err(_) => false,
        }
    }

    /// Plain values of the metric components at `p`.
    pub fn eval_g(&self, p: &[f64]) -> Result<[[f64; 3]; 3], GeomError> {
        let mut out = [[0.0; 3]; 3];
        for i in 0..self.dim {
            for j in i..self.dim {
                let v = self.g[i][j].eval_f64(p, &self.params)?;
                out[i][j] = v;
                out[j][i] = v;
            }
        }
        Ok(out)
    }
}

/// A vector field given by one component expression per coordinate.
#[derive(Debug, Clone)]
pub struct VectorFieldSpec {
    pub components: Vec<ScalarExpr>,
}

#[derive(Debug, Serialize, Deserialize)]
struct VectorFieldJson {
    components: Vec<String>,
}

impl VectorFieldSpec {
    pub fn new(components: &[&str], m: &MetricSpec) -> Result<Self, GeomError> {
        if components.len() != m.dim {
            return Err(GeomError::ComponentCount {
                expected: m.dim,
                got: components.len(),
            });
        }
        let coords: Vec<&str> = m.coords.iter().map(|s| s.as_str()).collect();
        let param_names: Vec<&str> = m.params.0.keys().map(|s| s.as_str()).collect();
        let components = components
            .iter()
            .map(|s| ScalarExpr::parse(s, &coords, &param_names))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(VectorFieldSpec { components })
    }

    pub fn from_json(text: &str, m: &MetricSpec) -> Result<Self, GeomError> {
        let j: VectorFieldJson =
            serde_json::from_str(text).map_err(|e| GeomError::Json(e.to_string()))?;
        let refs: Vec<&str> = j.components.iter().map(|s| s.as_str()).collect();
        VectorFieldSpec::new(&refs, m)
    }

    pub fn to_strings(&self) -> Vec<String> {
        self.components.iter().map(|c| c.to_string()).collect()
    }
}

/// A sampled point with its admissibility flag.
#[derive(Debug, Clone)]
pub struct PointSample {
    pub coords: Vec<f64>,
    pub admissible: bool,
}

// ---------------------------------------------------------------------------
// Deterministic sampling
// ---------------------------------------------------------------------------

/// Element `index` of the van der Corput sequence in the given base.
pub fn halton(mut index: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while index > 0 {
        f /= base as f64;
        r += f * (index % base) as f64;
        index /= base;
    }
    r
}

pub const HALTON_BASES: [u64; 5] = [2, 3, 5, 7, 11];

/// Draw `n` admissible points from the metric's domain boxes using a
/// seed-offset Halton sequence with rejection against the guards.
pub fn sample_points(m: &MetricSpec, n: usize, seed: u64) -> Result<Vec<Vec<f64>>, GeomError> {
    let start = 13 + (seed % 1_000_003) * 7;
    let mut out = Vec::with_capacity(n);
    let mut idx = start;
    let max_tries = 200 * n as u64 + 1000;
    let mut tries = 0;
    while out.len() < n && tries < max_tries {
        let p: Vec<f64> = (0..m.dim)
            .map(|c| {
                let u = halton(idx, HALTON_BASES[c]);
                m.domain[c][0] + u * (m.domain[c][1] - m.domain[c][0])
            })
            .collect();
        if m.admissible(&p) {
            out.push(p);
        }
        idx += 1;
        tries += 1;
    }
    if out.len() < n {
        return Err(GeomError::InsufficientSamples {
            want: n,
            got: out.len(),
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Metric and vector-field evaluations with derivatives
// ---------------------------------------------------------------------------

pub(crate) fn det(g: &[[f64; 3]; 3], dim: usize) -> f64 {
    match dim {
        2 => g[0][0] * g[1][1] - g[0][1] * g[1][0],
        3 => {
            g[0][0] * (g[1][1] * g[2][2] - g[1][2] * g[2][1])
                - g[0][1] * (g[1][0] * g[2][2] - g[1][2] * g[2][0])
                + g[0][2] * (g[1][0] * g[2][1] - g[1][1] * g[2][0])
        }
        _ => unreachable!(),
    }
}

pub(crate) fn invert(g: &[[f64; 3]; 3], dim: usize) -> Option<[[f64; 3]; 3]> {
    let d = det(g, dim);
    if d == 0.0 {
        return None;
    }
    let mut inv = [[0.0; 3]; 3];
    match dim {
        2 => {
            inv[0][0] = g[1][1] / d;
            inv[1][1] = g[0][0] / d;
            inv[0][1] = -g[0][1] / d;
            inv[1][0] = -g[1][0] / d;
        }
        3 => {
            for i in 0..3 {
                for j in 0..3 {
                    // adjugate entry (j,i): cofactor of (i,j), transposed
                    let (a, b) = ((i + 1) % 3, (i + 2) % 3);
                    let (c, e) = ((j + 1) % 3, (j + 2) % 3);
                    inv[j][i] = (g[a][c] * g[b][e] - g[a][e] * g[b][c]) / d;
                }
            }
        }
        _ => unreachable!(),
    }
    Some(inv)
}

/// Metric values and first/second coordinate derivatives at a point.
#[derive(Debug, Clone)]
pub struct MetricEval {
    pub dim: usize,
    pub g: [[f64; 3]; 3],
    /// `dg[k][i][j]` = d g_ij / d x^k
    pub dg: [[[f64; 3]; 3]; 3],
    /// `d2g[k][l][i][j]` = d^2 g_ij / (d x^k d x^l)
    pub d2g: [[[[f64; 3]; 3]; 3]; 3],
    pub ginv: [[f64; 3]; 3],
    pub det: f64,
}

pub fn eval_metric(m: &MetricSpec, p: &[f64]) -> Result<MetricEval, GeomError> {
    let dim = m.dim;
    let mut g = [[0.0; 3]; 3];
    let mut dg = [[[0.0; 3]; 3]; 3];
    let mut d2g = [[[[0.0; 3]; 3]; 3]; 3];
    for i in 0..dim {
        for j in i..dim {
            let d: Dual2 = eval_dual(&m.g[i][j], p, &m.params)?;
            g[i][j] = d.val;
            g[j][i] = d.val;
            for k in 0..dim {
                dg[k][i][j] = d.grad[k];
                dg[k][j][i] = d.grad[k];
                for l in 0..dim {
                    d2g[k][l][i][j] = d.hess_at(k, l);
                    d2g[k][l][j][i] = d.hess_at(k, l);
                }
            }
        }
    }
    let dt = det(&g, dim);
    // Relative near-singularity test: distance from declared singular loci
    // is the job of the guard expressions, not of the determinant size.
    let mut gmax: f64 = 0.0;
    for row in g.iter().take(dim) {
        for &v in row.iter().take(dim) {
            gmax = gmax.max(v.abs());
        }
    }
    if dt.abs() <= 1e-12 * (1.0 + gmax).powi(dim as i32) {
        return Err(GeomError::SingularMetric(dt));
    }
    let ginv = invert(&g, dim).ok_or(GeomError::SingularMetric(dt))?;
    Ok(MetricEval {
        dim,
        g,
        dg,
        d2g,
        ginv,
        det: dt,
    })
}

impl MetricEval {
    /// d g^{kh} / d x^m = -g^{ka} (d g_ab / d x^m) g^{bh}
    pub fn dginv(&self) -> [[[f64; 3]; 3]; 3] {
        let mut out = [[[0.0; 3]; 3]; 3];
        for m in 0..self.dim {
            for k in 0..self.dim {
                for h in 0..self.dim {
                    let mut s = 0.0;
                    for a in 0..self.dim {
                        for b in 0..self.dim {
                            s -= self.ginv[k][a] * self.dg[m][a][b] * self.ginv[b][h];
                        }
                    }
                    out[m][k][h] = s;
                }
            }
        }
        out
    }

    /// Scale used to normalize residuals at this point.
    pub fn scale(&self) -> f64 {
        let mut mx: f64 = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                mx = mx.max(self.g[i][j].abs());
            }
        }
        1.0 + mx
    }
}

/// Christoffel symbols of the Levi-Civita connection:
/// Gamma^k_ij = 1/2 g^{kh} (g_jh,i + g_ih,j - g_ij,h).
pub fn christoffel(m: &MetricSpec, p: &[f64]) -> Result<[[[f64; 3]; 3]; 3], GeomError> {
    let me = eval_metric(m, p)?;
    Ok(christoffel_from_eval(&me).0)
}

/// Christoffels together with their first coordinate derivatives
/// `dGamma[m][k][i][j]` = d Gamma^k_ij / d x^m.
pub fn christoffel_with_grad(
    m: &MetricSpec,
    p: &[f64],
) -> Result<([[[f64; 3]; 3]; 3], [[[[f64; 3]; 3]; 3]; 3]), GeomError> {
    let me = eval_metric(m, p)?;
    Ok(christoffel_from_eval(&me))
}

pub fn christoffel_from_eval(
    me: &MetricEval,
) -> ([[[f64; 3]; 3]; 3], [[[[f64; 3]; 3]; 3]; 3]) {
    let dim = me.dim;
    // Lower-index symbols Gamma_hij = 1/2 (g_jh,i + g_ih,j - g_ij,h)
    let mut low = [[[0.0; 3]; 3]; 3];
    let mut dlow = [[[[0.0; 3]; 3]; 3]; 3];
    for h in 0..dim {
        for i in 0..dim {
            for j in 0..dim {
                low[h][i][j] = 0.5 * (me.dg[i][j][h] + me.dg[j][i][h] - me.dg[h][i][j]);
                for mm in 0..dim {
                    dlow[mm][h][i][j] = 0.5
                        * (me.d2g[mm][i][j][h] + me.d2g[mm][j][i][h] - me.d2g[mm][h][i][j]);
                }
            }
        }
    }
    let dginv = me.dginv();
    let mut gamma = [[[0.0; 3]; 3]; 3];
    let mut dgamma = [[[[0.0; 3]; 3]; 3]; 3];
    for k in 0..dim {
        for i in 0..dim {
            for j in 0..dim {
                let mut s = 0.0;
                for h in 0..dim {
                    s += me.ginv[k][h] * low[h][i][j];
                }
                gamma[k][i][j] = s;
                for mm in 0..dim {
                    let mut t = 0.0;
                    for h in 0..dim {
                        t += dginv[mm][k][h] * low[h][i][j] + me.ginv[k][h] * dlow[mm][h][i][j];
                    }
                    dgamma[mm][k][i][j] = t;
                }
            }
        }
    }
    (gamma, dgamma)
}

/// Curvature data at a point.
#[derive(Debug, Clone)]
pub struct CurvatureData {
    /// `riemann[l][k][i][j]` = R^l_{k i j}
    pub riemann: [[[[f64; 3]; 3]; 3]; 3],
    pub ricci: [[f64; 3]; 3],
    pub scalar: f64,
    /// Sectional curvatures of the coordinate 2-planes, in order
    /// (0,1), (0,2), (1,2) for dim 3, or the single plane for dim 2.
    pub sectional: Vec<f64>,
    /// Max absolute first-Bianchi defect of the computed tensor.
    pub bianchi_defect: f64,
}

/// Riemann tensor, Ricci, scalar curvature and coordinate-plane sectional
/// curvatures.  Convention:
/// `R^l_{kij} = d_i Gamma^l_{jk} - d_j Gamma^l_{ik} + Gamma^l_{is} Gamma^s_{jk} - Gamma^l_{js} Gamma^s_{ik}`,
/// which makes the unit round sphere have sectional curvature +1 and scalar
/// curvature +2.
pub fn riemann_scalar_sectional(m: &MetricSpec, p: &[f64]) -> Result<CurvatureData, GeomError> {
    let me = eval_metric(m, p)?;
    let (gamma, dgamma) = christoffel_from_eval(&me);
    let dim = me.dim;
    let mut riem = [[[[0.0; 3]; 3]; 3]; 3];
    for l in 0..dim {
        for k in 0..dim {
            for i in 0..dim {
                for j in 0..dim {
                    let mut s = dgamma[i][l][j][k] - dgamma[j][l][i][k];
                    for t in 0..dim {
                        s += gamma[l][i][t] * gamma[t][j][k] - gamma[l][j][t] * gamma[t][i][k];
                    }
                    riem[l][k][i][j] = s;
                }
            }
        }
    }
    let mut ricci = [[0.0; 3]; 3];
    for k in 0..dim {
        for j in 0..dim {
            let mut s = 0.0;
            for l in 0..dim {
                s += riem[l][k][l][j];
            }
            ricci[k][j] = s;
        }
    }
    let mut scalar = 0.0;
    for k in 0..dim {
        for j in 0..dim {
            scalar += me.ginv[k][j] * ricci[k][j];
        }
    }
    let planes: Vec<(usize, usize)> = if dim == 2 {
        vec![(0, 1)]
    } else {
        vec![(0, 1), (0, 2), (1, 2)]
    };
    let mut sectional = Vec::new();
    for (i, j) in planes {
        // <R(e_i, e_j) e_j, e_i> / (g_ii g_jj - g_ij^2)
        let mut num = 0.0;
        for l in 0..dim {
            num += me.g[i][l] * riem[l][j][i][j];
        }
        let den = me.g[i][i] * me.g[j][j] - me.g[i][j] * me.g[i][j];
        sectional.push(num / den);
    }
    let mut bianchi: f64 = 0.0;
    for l in 0..dim {
        for k in 0..dim {
            for i in 0..dim {
                for j in 0..dim {
                    let cyc = riem[l][k][i][j] + riem[l][i][j][k] + riem[l][j][k][i];
                    bianchi = bianchi.max(cyc.abs());
                }
            }
        }
    }
    Ok(CurvatureData {
        riemann: riem,
        ricci,
        scalar,
        sectional,
        bianchi_defect: bianchi,
    })
}

/// Vector-field values with first and second derivatives at a point.
#[derive(Debug, Clone)]
pub struct VectorEval {
    pub dim: usize,
    pub v: [f64; 3],
    /// `dv[i][j]` = d v^i / d x^j
    pub dv: [[f64; 3]; 3],
    /// `d2v[i][j][k]` = d^2 v^i / (d x^j d x^k)
    pub d2v: [[[f64; 3]; 3]; 3],
}

pub fn eval_vector(
    v: &VectorFieldSpec,
    params: &ParamEnv,
    p: &[f64],
) -> Result<VectorEval, GeomError> {
    let dim = v.components.len();
    let mut out = VectorEval {
        dim,
        v: [0.0; 3],
        dv: [[0.0; 3]; 3],
        d2v: [[[0.0; 3]; 3]; 3],
    };
    for i in 0..dim {
        let d: Dual2 = eval_dual(&v.components[i], p, params)?;
        out.v[i] = d.val;
        for j in 0..dim {
            out.dv[i][j] = d.grad[j];
            for k in 0..dim {
                out.d2v[i][j][k] = d.hess_at(j, k);
            }
        }
    }
    Ok(out)
}

/// (L_v g)_{ij} = v^k g_{ij,k} + v^k_{,i} g_{kj} + v^k_{,j} g_{ik}
pub fn lie_derivative_metric(
    m: &MetricSpec,
    v: &VectorFieldSpec,
    p: &[f64],
) -> Result<[[f64; 3]; 3], GeomError> {
    let me = eval_metric(m, p)?;
    let ve = eval_vector(v, &m.params, p)?;
    Ok(lie_derivative_from_evals(&me, &ve))
}

pub fn lie_derivative_from_evals(me: &MetricEval, ve: &VectorEval) -> [[f64; 3]; 3] {
    let dim = me.dim;
    let mut out = [[0.0; 3]; 3];
    for i in 0..dim {
        for j in 0..dim {
            let mut s = 0.0;
            for k in 0..dim {
                s += ve.v[k] * me.dg[k][i][j] + ve.dv[k][i] * me.g[k][j] + ve.dv[k][j] * me.g[i][k];
            }
            out[i][j] = s;
        }
    }
    out
}

/// Result of [`classify_homothety`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HomothetyClass {
    Killing,
    Homothetic(f64),
    NotHomothetic,
}

/// Classify v as Killing (L_v g = 0), homothetic (L_v g = lambda g with one
/// constant lambda across samples) or neither, using normalized residuals.
pub fn classify_homothety(
    m: &MetricSpec,
    v: &VectorFieldSpec,
    samples: &[Vec<f64>],
    tol: f64,
) -> Result<HomothetyClass, GeomError> {
    if samples.len() < 10 {
        return Err(GeomError::InsufficientSamples {
            want: 10,
            got: samples.len(),
        });
    }
    let dim = m.dim;
    let mut killing_defect: f64 = 0.0;
    let mut lambdas = Vec::with_capacity(samples.len());
    let mut evals = Vec::with_capacity(samples.len());
    for p in samples {
        let me = eval_metric(m, p)?;
        let ve = eval_vector(v, &m.params, p)?;
        let lie = lie_derivative_from_evals(&me, &ve);
        let scale = me.scale();
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..dim {
            for j in 0..dim {
                killing_defect = killing_defect.max(lie[i][j].abs() / scale);
                num += lie[i][j] * me.g[i][j];
                den += me.g[i][j] * me.g[i][j];
            }
        }
        lambdas.push(num / den);
        evals.push((me, lie));
    }
    if killing_defect <= tol {
        return Ok(HomothetyClass::Killing);
    }
    let lambda = lambdas.iter().sum::<f64>() / lambdas.len() as f64;
    let mut hom_defect: f64 = 0.0;
    for (me, lie) in &evals {
        let scale = me.scale();
        for i in 0..dim {
            for j in 0..dim {
                hom_defect = hom_defect.max((lie[i][j] - lambda * me.g[i][j]).abs() / scale);
            }
        }
    }
    if hom_defect <= tol {
        Ok(HomothetyClass::Homothetic(lambda))
    } else {
        Ok(HomothetyClass::NotHomothetic)
    }
}

// ---------------------------------------------------------------------------
// Conformally stretched products g = zeta(z) (h + dz^2)
// ---------------------------------------------------------------------------

/// Build the 3-metric `zeta(z) * (h + dz^2)` from a 2-metric `h(x,y)` and a
/// conformal factor `zeta(z)` by textual composition (printing round-trips,
/// so this is exact).
pub fn stretched_product_metric(
    h: &MetricSpec,
    zeta_src: &str,
    domain_z: [f64; 2],
    extra_guards: &[&str],
) -> Result<MetricSpec, GeomError> {
    assert_eq!(h.dim, 2, "h must be 2-dimensional");
    let zeta_guard = format!("({zeta_src})");
    let g11 = format!("({zeta_src})*({})", h.g[0][0]);
    let g12 = format!("({zeta_src})*({})", h.g[0][1]);
    let g13 = "0".to_string();
    let g22 = format!("({zeta_src})*({})", h.g[1][1]);
    let g23 = "0".to_string();
    let g33 = format!("({zeta_src})");
    let coords: Vec<&str> = vec!["x", "y", "z"];
    let mut guards: Vec<String> = h.guards.iter().map(|g| g.to_string()).collect();
    guards.push(zeta_guard);
    guards.extend(extra_guards.iter().map(|s| s.to_string()));
    let guard_refs: Vec<&str> = guards.iter().map(|s| s.as_str()).collect();
    MetricSpec::new(
        &coords,
        &[&g11, &g12, &g13, &g22, &g23, &g33],
        h.params.clone(),
        &[h.domain[0], h.domain[1], domain_z],
        &guard_refs,
    )
}

/// Residual of the scalar-curvature decomposition for g = zeta(z)(h + dz^2):
/// R_g - [ R_h / zeta + (3 zeta'^2 - 4 zeta zeta'') / (2 zeta^3) ].
pub fn check_rg_decomposition(
    h: &MetricSpec,
    zeta: &ScalarExpr,
    params: &ParamEnv,
    p3: &[f64],
) -> Result<f64, GeomError> {
    let zeta_src = zeta.to_string();
    // Sample z-box is irrelevant for a pointwise check; reuse the point.
    let g = stretched_product_metric(h, &zeta_src, [p3[2] - 1.0, p3[2] + 1.0], &[])?;
    let mut g = g;
    g.params = merge_params(&h.params, params);
    let rg = riemann_scalar_sectional(&g, p3)?.scalar;
    let rh = riemann_scalar_sectional(h, &p3[..2])?.scalar;
    let zd: Dual2 = eval_dual(zeta, &p3[2..3], params)?;
    let (z, dz, d2z) = (zd.val, zd.grad[0], zd.hess_at(0, 0));
    if z == 0.0 {
        return Err(GeomError::SingularMetric(0.0));
    }
    let rhs = rh / z + (3.0 * dz * dz - 4.0 * z * d2z) / (2.0 * z * z * z);
    Ok(rg - rhs)
}

pub fn merge_params(a: &ParamEnv, b: &ParamEnv) -> ParamEnv {
    let mut out = a.clone();
    for (k, v) in &b.0 {
        out.0.insert(k.clone(), *v);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn euclidean3() -> MetricSpec {
        MetricSpec::new(
            &["x", "y", "z"],
            &["1", "0", "0", "1", "0", "1"],
            ParamEnv::new(),
            &[[-1.0, 1.0], [-1.0, 1.0], [-1.0, 1.0]],
            &[],
        )
        .unwrap()
    }

    fn sphere2() -> MetricSpec {
        MetricSpec::new(
            &["x", "y"],
            &["1", "0", "sin(x)^2"],
            ParamEnv::new(),
            &[[0.4, 1.2], [-1.0, 1.0]],
            &["sin(x)"],
        )
        .unwrap()
    }

    #[test]
    fn euclidean_christoffels_vanish() {
        let g = euclidean3();
        let gamma = christoffel(&g, &[0.3, -0.2, 0.9]).unwrap();
        for k in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    assert_eq!(gamma[k][i][j], 0.0);
                }
            }
        }
    }

    #[test]
    fn sphere_christoffels_closed_form() {
        let g = sphere2();
        let x = std::f64::consts::FRAC_PI_4;
        let gamma = christoffel(&g, &[x, 0.3]).unwrap();
        // Gamma^1_22 = -sin x cos x, Gamma^2_12 = cot x
        assert!((gamma[0][1][1] + x.sin() * x.cos()).abs() < 1e-12);
        assert!((gamma[1][0][1] - x.cos() / x.sin()).abs() < 1e-12);
        // symmetry in lower indices
        assert_eq!(gamma[1][0][1], gamma[1][1][0]);
    }

    #[test]
    fn christoffels_match_finite_differences() {
        let m = MetricSpec::new(
            &["x", "y", "z"],
            &[
                "exp(x)*(2+sin(y))",
                "x*z",
                "0",
                "1+z^2",
                "cos(x)",
                "3+tanh(y)",
            ],
            ParamEnv::new(),
            &[[0.1, 0.8], [0.1, 0.8], [0.1, 0.8]],
            &[],
        )
        .unwrap();
        let p = [0.4, 0.5, 0.6];
        let gamma = christoffel(&m, &p).unwrap();
        // FD oracle: differentiate g numerically, substitute into the
        // defining formula.
        let step = 1e-6;
        let me = eval_metric(&m, &p).unwrap();
        let mut dg = [[[0.0; 3]; 3]; 3];
        for k in 0..3 {
            let mut pp = p;
            let mut pm = p;
            pp[k] += step;
            pm[k] -= step;
            let gp = m.eval_g(&pp).unwrap();
            let gm = m.eval_g(&pm).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    dg[k][i][j] = (gp[i][j] - gm[i][j]) / (2.0 * step);
                }
            }
        }
        for k in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    let mut s = 0.0;
                    for h in 0..3 {
                        s += 0.5
                            * me.ginv[k][h]
                            * (dg[i][j][h] + dg[j][i][h] - dg[h][i][j]);
                    }
                    assert!(
                        (gamma[k][i][j] - s).abs() < 1e-8,
                        "Gamma^{k}_{i}{j}: ad={} fd={s}",
                        gamma[k][i][j]
                    );
                }
            }
        }
    }

    #[test]
    fn flat_metric_curvature_vanishes() {
        let g = euclidean3();
        let c = riemann_scalar_sectional(&g, &[0.1, 0.2, 0.3]).unwrap();
        assert_eq!(c.scalar, 0.0);
        for s in &c.sectional {
            assert_eq!(*s, 0.0);
        }
    }

    #[test]
    fn sphere_curvature_is_one() {
        let g = sphere2();
        for p in sample_points(&g, 10, 1).unwrap() {
            let c = riemann_scalar_sectional(&g, &p).unwrap();
            assert!((c.sectional[0] - 1.0).abs() < 1e-10, "K={}", c.sectional[0]);
            assert!((c.scalar - 2.0).abs() < 1e-10);
            assert!(c.bianchi_defect < 1e-12);
        }
    }

    #[test]
    fn hyperbolic_space_scalar_curvature() {
        // g = (1/z^2) * Euclidean on the upper half space: R = -6.
        let g = MetricSpec::new(
            &["x", "y", "z"],
            &["1/z^2", "0", "0", "1/z^2", "0", "1/z^2"],
            ParamEnv::new(),
            &[[-1.0, 1.0], [-1.0, 1.0], [0.5, 2.0]],
            &["z"],
        )
        .unwrap();
        let c = riemann_scalar_sectional(&g, &[0.2, -0.3, 1.1]).unwrap();
        assert!((c.scalar + 6.0).abs() < 1e-9);
        for s in &c.sectional {
            assert!((s + 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn translation_is_killing_for_flat_metric() {
        let g = euclidean3();
        let v = VectorFieldSpec::new(&["1", "0", "0"], &g).unwrap();
        let lie = lie_derivative_metric(&g, &v, &[0.3, 0.1, -0.2]).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(lie[i][j], 0.0);
            }
        }
        let samples = sample_points(&g, 12, 3).unwrap();
        assert_eq!(
            classify_homothety(&g, &v, &samples, 1e-9).unwrap(),
            HomothetyClass::Killing
        );
    }

    #[test]
    fn dilation_is_homothety_of_flat_metric() {
        let g = euclidean3();
        let v = VectorFieldSpec::new(&["x", "y", "z"], &g).unwrap();
        let samples = sample_points(&g, 12, 3).unwrap();
        match classify_homothety(&g, &v, &samples, 1e-9).unwrap() {
            HomothetyClass::Homothetic(l) => assert!((l - 2.0).abs() < 1e-12),
            other => panic!("expected homothety, got {other:?}"),
        }
    }

    #[test]
    fn exponential_stretch_scales_metric() {
        // g = e^{lambda x} h(y,z); the x-translation satisfies L_v g = lambda g.
        let lam = 0.7;
        let mut params = ParamEnv::new();
        params.set("lam", lam);
        let g = MetricSpec::new(
            &["x", "y", "z"],
            &[
                "exp(lam*x)",
                "0",
                "0",
                "exp(lam*x)*(2+sin(y))",
                "0",
                "exp(lam*x)*(2+cos(z))",
            ],
            params,
            &[[-0.5, 0.5], [-0.5, 0.5], [-0.5, 0.5]],
            &[],
        )
        .unwrap();
        let v = VectorFieldSpec::new(&["1", "0", "0"], &g).unwrap();
        let samples = sample_points(&g, 12, 9).unwrap();
        match classify_homothety(&g, &v, &samples, 1e-9).unwrap() {
            HomothetyClass::Homothetic(l) => assert!((l - lam).abs() < 1e-10),
            other => panic!("expected homothety, got {other:?}"),
        }
    }

    #[test]
    fn quadratic_field_is_not_homothetic() {
        let g = euclidean3();
        let v = VectorFieldSpec::new(&["0", "x^2", "0"], &g).unwrap();
        let samples = sample_points(&g, 12, 3).unwrap();
        assert_eq!(
            classify_homothety(&g, &v, &samples, 1e-9).unwrap(),
            HomothetyClass::NotHomothetic
        );
    }

    #[test]
    fn rg_decomposition_flat_product() {
        let h = MetricSpec::new(
            &["x", "y"],
            &["1", "0", "1"],
            ParamEnv::new(),
            &[[-1.0, 1.0], [-1.0, 1.0]],
            &[],
        )
        .unwrap();
        let zeta = ScalarExpr::parse("1", &["z"], &[]).unwrap();
        let r = check_rg_decomposition(&h, &zeta, &ParamEnv::new(), &[0.2, 0.4, 0.9]).unwrap();
        assert!(r.abs() < 1e-12);
    }

    #[test]
    fn rg_decomposition_inverse_square_factor() {
        let h = MetricSpec::new(
            &["x", "y"],
            &["1", "0", "1"],
            ParamEnv::new(),
            &[[-1.0, 1.0], [-1.0, 1.0]],
            &[],
        )
        .unwrap();
        let zeta = ScalarExpr::parse("1/z^2", &["z"], &[]).unwrap();
        for z in [0.5, 0.9, 1.4, 2.0] {
            let r = check_rg_decomposition(&h, &zeta, &ParamEnv::new(), &[0.1, -0.3, z]).unwrap();
            assert!(r.abs() < 1e-9, "residual {r} at z={z}");
        }
    }

    #[test]
    fn rg_decomposition_exponential_factor_on_sphere() {
        let h = sphere2();
        let zeta = ScalarExpr::parse("exp(z)", &["z"], &[]).unwrap();
        for z in [-0.5, 0.0, 0.7] {
            let r = check_rg_decomposition(&h, &zeta, &ParamEnv::new(), &[0.8, 0.2, z]).unwrap();
            assert!(r.abs() < 1e-9, "residual {r} at z={z}");
        }
    }

    #[test]
    fn sampler_is_deterministic_and_respects_guards() {
        let g = MetricSpec::new(
            &["x", "y"],
            &["1", "0", "1"],
            ParamEnv::new(),
            &[[-1.0, 1.0], [-1.0, 1.0]],
            &["x-y"],
        )
        .unwrap();
        let a = sample_points(&g, 25, 42).unwrap();
        let b = sample_points(&g, 25, 42).unwrap();
        assert_eq!(a, b);
        for p in &a {
            assert!((p[0] - p[1]).abs() > GUARD_THRESHOLD);
        }
        let c = sample_points(&g, 25, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn metric_spec_json_round_trip() {
        let g = MetricSpec::from_json(
            r#"{
                "dim": 3,
                "coords": ["x", "y", "z"],
                "g": [["beta/z^2", "0", "0"], ["beta/z^2", "0"], ["beta/z^2"]],
                "params": {"beta": 2.0},
                "domain": [[-1, 1], [-1, 1], [0.5, 1.5]],
                "guards": ["z"]
            }"#,
        )
        .unwrap();
        assert_eq!(g.dim, 3);
        let text = g.to_json();
        let g2 = MetricSpec::from_json(&text).unwrap();
        assert_eq!(g2.g[0][0].to_string(), g.g[0][0].to_string());
        let v = g.eval_g(&[0.0, 0.0, 1.0]).unwrap();
        assert_eq!(v[0][0], 2.0);
    }
}
