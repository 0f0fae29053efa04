//! The projective connection, its geodesics, the jet-prolongation symmetry
//! test, and the flow-based geodesic-preservation (transport) test.
//!
//! In dimension three the unparametrised geodesics of a metric are the
//! solutions of
//!
//! ```text
//! y_xx = F^2(x,y,z,y_x,z_x),   z_xx = F^3(x,y,z,y_x,z_x)
//! ```
//!
//! where each `F^k` is a cubic polynomial in the slopes `s = (y_x, z_x)`
//! whose coefficients are combinations of Christoffel symbols:
//!
//! ```text
//! F^k = f^k_11 + sum_i f^k_1i s_i + sum_ij f^k_ij s_i s_j
//!       + (sum_ij f_ij s_i s_j) s_k,        i, j, k in {2, 3}.
//! ```
//!
//! A vector field v is projective iff its second jet prolongation
//! annihilates `y_xx - F^2` and `z_xx - F^3` on the solution manifold; the
//! resulting residuals `R^2, R^3` are polynomials in the slopes of total
//! degree three (the quartic terms cancel identically), and the
//! coefficients of `s_3^3` in `R^2` and of `s_2^3` in `R^3` also vanish
//! structurally.  That leaves 18 independent coefficient functions of the
//! base point, which vanish identically iff v is projective; this fixes the
//! convention used by [`symmetry_coefficients`].

use nalgebra::DMatrix;
use thiserror::Error;

use crate::geometry::{
    christoffel_with_grad, eval_metric, eval_vector, GeomError, MetricSpec, VectorFieldSpec,
};

#[derive(Debug, Error)]
pub enum ProjError {
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error("integration step underflow: {0}")]
    StepFailure(String),
    #[error("trajectory left the sampling domain")]
    LeftDomain,
    #[error("slope-grid interpolation ill-conditioned (cond = {0:.3e})")]
    IllConditionedInterpolation(f64),
    #[error("operation requires dimension {expected}, metric has {got}")]
    WrongDimension { expected: usize, got: usize },
    #[error("too few curve points ({0}) for stencil differentiation")]
    TooFewPoints(usize),
}

/// A point of the jet space: base point plus first-order slopes.
#[derive(Debug, Clone, Copy)]
pub struct JetPoint {
    pub base: [f64; 3],
    pub slopes: [f64; 2],
}

/// Coefficients of the projective connection.
#[derive(Debug, Clone)]
pub enum ProjConnCoeffs {
    /// `y_xx = a0 + a1 y_x + a2 y_x^2 + a3 y_x^3`
    Dim2 { a: [f64; 4] },
    /// Index 0 stands for coordinate 2 (y), index 1 for coordinate 3 (z).
    Dim3 {
        f_k11: [f64; 2],
        f_k1i: [[f64; 2]; 2],
        f_kij: [[[f64; 2]; 2]; 2],
        f_low: [[f64; 2]; 2],
    },
}

fn coeffs_from_gamma(gamma: &[[[f64; 3]; 3]; 3], dim: usize) -> ProjConnCoeffs {
    if dim == 2 {
        ProjConnCoeffs::Dim2 {
            a: [
                -gamma[1][0][0],
                gamma[0][0][0] - 2.0 * gamma[1][0][1],
                2.0 * gamma[0][0][1] - gamma[1][1][1],
                gamma[0][1][1],
            ],
        }
    } else {
        let mut f_k11 = [0.0; 2];
        let mut f_k1i = [[0.0; 2]; 2];
        let mut f_kij = [[[0.0; 2]; 2]; 2];
        let mut f_low = [[0.0; 2]; 2];
        for k in 0..2 {
            let kk = k + 1; // coordinate index of y (1) or z (2)
            f_k11[k] = -gamma[kk][0][0];
            for i in 0..2 {
                let ii = i + 1;
                let delta_ki = if kk == ii { 1.0 } else { 0.0 };
                f_k1i[k][i] = -(2.0 * gamma[kk][0][ii] - delta_ki * gamma[0][0][0]);
                for j in 0..2 {
                    let jj = j + 1;
                    let delta_kj = if kk == jj { 1.0 } else { 0.0 };
                    f_kij[k][i][j] = -(gamma[kk][ii][jj]
                        - delta_ki * gamma[0][0][jj]
                        - delta_kj * gamma[0][0][ii]);
                }
            }
        }
        for i in 0..2 {
            for j in 0..2 {
                f_low[i][j] = gamma[0][i + 1][j + 1];
            }
        }
        ProjConnCoeffs::Dim3 {
            f_k11,
            f_k1i,
            f_kij,
            f_low,
        }
    }
}

/// Projective-connection coefficients at a point.
pub fn build_connection(m: &MetricSpec, p: &[f64]) -> Result<ProjConnCoeffs, ProjError> {
    let (gamma, _) = christoffel_with_grad(m, p)?;
    Ok(coeffs_from_gamma(&gamma, m.dim))
}

impl ProjConnCoeffs {
    /// Evaluate (F^2, F^3) at slopes `s` (for dim 2: (F, 0) with `s[0]` the
    /// single slope).
    pub fn rhs(&self, s: [f64; 2]) -> [f64; 2] {
        match self {
            ProjConnCoeffs::Dim2 { a } => {
                let t = s[0];
                [a[0] + a[1] * t + a[2] * t * t + a[3] * t * t * t, 0.0]
            }
            ProjConnCoeffs::Dim3 {
                f_k11,
                f_k1i,
                f_kij,
                f_low,
            } => {
                let mut cubic = 0.0;
                for i in 0..2 {
                    for j in 0..2 {
                        cubic += f_low[i][j] * s[i] * s[j];
                    }
                }
                let mut out = [0.0; 2];
                for k in 0..2 {
                    let mut v = f_k11[k];
                    for i in 0..2 {
                        v += f_k1i[k][i] * s[i];
                        for j in 0..2 {
                            v += f_kij[k][i][j] * s[i] * s[j];
                        }
                    }
                    out[k] = v + cubic * s[k];
                }
                out
            }
        }
    }

    /// Slope gradient dF^k/ds_i (dim 3 only).
    fn rhs_slope_grad(&self, s: [f64; 2]) -> [[f64; 2]; 2] {
        match self {
            ProjConnCoeffs::Dim2 { .. } => unreachable!("dim 3 only"),
            ProjConnCoeffs::Dim3 {
                f_k1i,
                f_kij,
                f_low,
                ..
            } => {
                let mut cubic = 0.0;
                let mut dcubic = [0.0; 2];
                for i in 0..2 {
                    for j in 0..2 {
                        cubic += f_low[i][j] * s[i] * s[j];
                        dcubic[i] += 2.0 * f_low[i][j] * s[j];
                    }
                }
                let mut out = [[0.0; 2]; 2];
                for k in 0..2 {
                    for i in 0..2 {
                        let mut v = f_k1i[k][i];
                        for j in 0..2 {
                            v += 2.0 * f_kij[k][i][j] * s[j];
                        }
                        v += dcubic[i] * s[k];
                        if i == k {
                            v += cubic;
                        }
                        out[k][i] = v;
                    }
                }
                out
            }
        }
    }
}

/// Geodesic right-hand side (F^2, F^3) at a jet point.
pub fn geodesic_rhs(m: &MetricSpec, j: &JetPoint) -> Result<[f64; 2], ProjError> {
    let p = &j.base[..m.dim];
    let conn = build_connection(m, p)?;
    Ok(conn.rhs(j.slopes))
}

// ---------------------------------------------------------------------------
// Jet symmetry residual
// ---------------------------------------------------------------------------

/// Raw residuals (R^2, R^3) of the symmetry condition at a jet point: the
/// second prolongation of v applied to `y_xx - F^k`, restricted to the
/// solution manifold.  Both vanish for every jet iff v is projective.
pub fn symmetry_residual(
    m: &MetricSpec,
    v: &VectorFieldSpec,
    j: &JetPoint,
) -> Result<[f64; 2], ProjError> {
    if m.dim != 3 {
        return Err(ProjError::WrongDimension {
            expected: 3,
            got: m.dim,
        });
    }
    let p = &j.base[..3];
    let (gamma, dgamma) = christoffel_with_grad(m, p)?;
    let conn = coeffs_from_gamma(&gamma, 3);
    // Coefficient gradients with respect to the base coordinates.
    let dconn: Vec<ProjConnCoeffs> = (0..3)
        .map(|mm| coeffs_from_gamma(&dgamma[mm], 3))
        .collect();
    let ve = eval_vector(v, &m.params, p)?;
    let s = j.slopes;
    let f = conn.rhs(s);
    let dfds = conn.rhs_slope_grad(s);
    // dF^k/dx^m at frozen slopes: the coefficient map is linear in Gamma.
    let dfdx: Vec<[f64; 2]> = dconn.iter().map(|c| c.rhs(s)).collect();

    // Total derivative along the solution manifold, applied to v^i.
    let dv_tot = |i: usize| ve.dv[i][0] + s[0] * ve.dv[i][1] + s[1] * ve.dv[i][2];
    let d2v_tot = |i: usize| {
        ve.d2v[i][0][0]
            + 2.0 * s[0] * ve.d2v[i][0][1]
            + 2.0 * s[1] * ve.d2v[i][0][2]
            + s[0] * s[0] * ve.d2v[i][1][1]
            + 2.0 * s[0] * s[1] * ve.d2v[i][1][2]
            + s[1] * s[1] * ve.d2v[i][2][2]
            + f[0] * ve.dv[i][1]
            + f[1] * ve.dv[i][2]
    };
    let dv1 = dv_tot(0);
    // First-prolongation slope components: phi^k = D(v^k) - s_k D(v^1).
    let phi = [dv_tot(1) - s[0] * dv1, dv_tot(2) - s[1] * dv1];
    let mut out = [0.0; 2];
    for k in 0..2 {
        let psi = d2v_tot(k + 1) - s[k] * d2v_tot(0) - 2.0 * f[k] * dv1;
        let transport = ve.v[0] * dfdx[0][k]
            + ve.v[1] * dfdx[1][k]
            + ve.v[2] * dfdx[2][k]
            + phi[0] * dfds[k][0]
            + phi[1] * dfds[k][1];
        out[k] = psi - transport;
    }
    Ok(out)
}

/// Symmetry residual normalized by the metric scale at the base point.
pub fn normalized_symmetry_residual(
    m: &MetricSpec,
    v: &VectorFieldSpec,
    j: &JetPoint,
) -> Result<f64, ProjError> {
    let r = symmetry_residual(m, v, j)?;
    let scale = eval_metric(m, &j.base[..3])?.scale();
    Ok(r[0].abs().max(r[1].abs()) / scale)
}

/// Monomial exponents (in the two slopes) of total degree <= 5, in the fixed
/// order used by the coefficient fit.
fn monomials_deg5() -> Vec<(u32, u32)> {
    let mut m = Vec::new();
    for total in 0..=5u32 {
        for a in (0..=total).rev() {
            m.push((a, total - a));
        }
    }
    m
}

/// Index set of the 18 structurally nonzero residual-polynomial
/// coefficients: for R^2 all monomials of degree <= 3 except s3^3, for R^3
/// all except s2^3.
fn coefficient_slots() -> Vec<(usize, (u32, u32))> {
    let degree3: Vec<(u32, u32)> = monomials_deg5()
        .into_iter()
        .filter(|(a, b)| a + b <= 3)
        .collect();
    let mut slots = Vec::new();
    for &(a, b) in degree3.iter().filter(|&&(a, b)| !(a == 0 && b == 3)) {
        slots.push((0, (a, b)));
    }
    for &(a, b) in degree3.iter().filter(|&&(a, b)| !(a == 3 && b == 0)) {
        slots.push((1, (a, b)));
    }
    slots
}

/// The 18 coefficients of the symmetry-condition PDE system at a base point,
/// normalized by the metric scale.  Extracted by least-squares monomial
/// interpolation of (R^2, R^3) on a 6x6 slope grid; the fit residual and the
/// structurally vanishing coefficients are asserted to be at interpolation
/// noise level.
pub fn symmetry_coefficients(
    m: &MetricSpec,
    v: &VectorFieldSpec,
    p: &[f64],
) -> Result<Vec<f64>, ProjError> {
    const GRID: [f64; 6] = [-1.9, -1.1, -0.4, 0.4, 1.1, 1.9];
    let monos = monomials_deg5();
    let mut a = DMatrix::zeros(36, monos.len());
    let mut r2 = DMatrix::zeros(36, 1);
    let mut r3 = DMatrix::zeros(36, 1);
    let mut row = 0;
    let mut max_r: f64 = 0.0;
    for &s2 in &GRID {
        for &s3 in &GRID {
            let jet = JetPoint {
                base: [p[0], p[1], p[2]],
                slopes: [s2, s3],
            };
            let r = symmetry_residual(m, v, &jet)?;
            for (c, &(ea, eb)) in monos.iter().enumerate() {
                a[(row, c)] = s2.powi(ea as i32) * s3.powi(eb as i32);
            }
            r2[(row, 0)] = r[0];
            r3[(row, 0)] = r[1];
            max_r = max_r.max(r[0].abs()).max(r[1].abs());
            row += 1;
        }
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let cond = smax / smin;
    if cond > 1e8 {
        return Err(ProjError::IllConditionedInterpolation(cond));
    }
    let c2 = svd.solve(&r2, 0.0).expect("svd solve");
    let c3 = svd.solve(&r3, 0.0).expect("svd solve");
    // Sanity: the degree-5 fit must reproduce the sampled residuals exactly
    // (the residuals are cubic polynomials in the slopes).
    let fit_tol = 1e-12 * (1.0 + max_r) * cond.max(1.0).sqrt();
    let res2 = (&a * &c2 - &r2).abs().max();
    let res3 = (&a * &c3 - &r3).abs().max();
    debug_assert!(
        res2 <= fit_tol && res3 <= fit_tol,
        "slope-polynomial fit residual too large: {res2:.3e}, {res3:.3e}"
    );
    let scale = eval_metric(m, &p[..3])?.scale();
    let coeffs: Vec<f64> = coefficient_slots()
        .iter()
        .map(|&(which, mono)| {
            let idx = monos.iter().position(|&mm| mm == mono).unwrap();
            let c = if which == 0 { c2[(idx, 0)] } else { c3[(idx, 0)] };
            c / scale
        })
        .collect();
    Ok(coeffs)
}

// ---------------------------------------------------------------------------
// Adaptive Runge-Kutta 5(4) (Dormand-Prince)
// ---------------------------------------------------------------------------

/// Integrate dy/dt = f(t, y) from t0 to t1, storing every accepted step.
/// Returns `Ok(true)` if t1 was reached, `Ok(false)` if the right-hand side
/// signalled domain exit (trajectory truncated).  `hmax` caps the step size
/// (pass `f64::INFINITY` when only the endpoint matters); a finite cap keeps
/// the stored nodes dense enough for accurate Hermite resampling.
pub fn rk45<F>(
    mut f: F,
    t0: f64,
    y0: &[f64],
    t1: f64,
    tol: f64,
    hmax: f64,
    store: &mut Vec<(f64, Vec<f64>)>,
) -> Result<bool, ProjError>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<(), ProjError>,
{
    const A: [[f64; 6]; 6] = [
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [
            19372.0 / 6561.0,
            -25360.0 / 2187.0,
            64448.0 / 6561.0,
            -212.0 / 729.0,
            0.0,
            0.0,
        ],
        [
            9017.0 / 3168.0,
            -355.0 / 33.0,
            46732.0 / 5247.0,
            49.0 / 176.0,
            -5103.0 / 18656.0,
            0.0,
        ],
        [
            35.0 / 384.0,
            0.0,
            500.0 / 1113.0,
            125.0 / 192.0,
            -2187.0 / 6784.0,
            11.0 / 84.0,
        ],
    ];
    const C: [f64; 6] = [0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
    const B5: [f64; 7] = [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
        0.0,
    ];
    const B4: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];
    let n = y0.len();
    let dir = if t1 >= t0 { 1.0 } else { -1.0 };
    let span = (t1 - t0).abs();
    if span == 0.0 {
        store.push((t0, y0.to_vec()));
        return Ok(true);
    }
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut h = dir * (span / 100.0).min(1e-2).min(hmax).max(1e-10);
    let hmin = span * 1e-13;
    store.push((t, y.clone()));
    let mut k = vec![vec![0.0; n]; 7];
    // First derivative evaluation; domain exit at the initial point is fatal.
    f(t, &y, &mut k[0])?;
    let mut steps = 0usize;
    while (t1 - t) * dir > 0.0 {
        steps += 1;
        if steps > 1_000_000 {
            return Err(ProjError::StepFailure("step count exceeded".to_string()));
        }
        if (t + h - t1) * dir > 0.0 {
            h = t1 - t;
        }
        let mut failed_domain = false;
        let mut ytmp = vec![0.0; n];
        for stage in 1..7 {
            for i in 0..n {
                let mut acc = 0.0;
                for (j, kj) in k.iter().enumerate().take(stage) {
                    acc += A[stage - 1][j] * kj[i];
                }
                ytmp[i] = y[i] + h * acc;
            }
            let (kprev, krest) = k.split_at_mut(stage);
            let _ = kprev;
            if f(t + C[stage - 1] * h, &ytmp, &mut krest[0]).is_err() {
                failed_domain = true;
                break;
            }
        }
        if failed_domain {
            // Shrink toward the boundary; below minimum step, stop truncated.
            h *= 0.5;
            if h.abs() < hmin {
                return Ok(false);
            }
            continue;
        }
        let mut y5 = vec![0.0; n];
        let mut errv = vec![0.0; n];
        for i in 0..n {
            let mut a5 = 0.0;
            let mut a4 = 0.0;
            for j in 0..7 {
                a5 += B5[j] * k[j][i];
                a4 += B4[j] * k[j][i];
            }
            y5[i] = y[i] + h * a5;
            errv[i] = h * (a5 - a4);
        }
        let mut err: f64 = 0.0;
        for i in 0..n {
            let sc = tol * (1.0 + y[i].abs().max(y5[i].abs()));
            err += (errv[i] / sc) * (errv[i] / sc);
        }
        err = (err / n as f64).sqrt();
        if err <= 1.0 {
            t += h;
            y = y5;
            store.push((t, y.clone()));
            // FSAL: last stage derivative is the first of the next step.
            let last = k[6].clone();
            match f(t, &y, &mut k[0]) {
                Ok(()) => {}
                Err(_) => return Ok(false),
            }
            let _ = last;
        }
        let fac = (0.9 * err.powf(-0.2)).clamp(0.2, 5.0);
        h *= fac;
        if h.abs() > hmax {
            h = dir * hmax;
        }
        if (t1 - t) * dir <= 0.0 {
            break;
        }
        if h.abs() < hmin {
            return Err(ProjError::StepFailure(format!(
                "minimum step size underflow at t = {t}"
            )));
        }
    }
    Ok(true)
}

/// One sampled point of a geodesic.
#[derive(Debug, Clone, Copy)]
pub struct GeodesicPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub yx: f64,
    pub zx: f64,
}

#[derive(Debug, Clone)]
pub struct GeodesicCurve {
    pub points: Vec<GeodesicPoint>,
    /// True when integration stopped early at the domain boundary.
    pub truncated: bool,
}

fn in_domain(m: &MetricSpec, p: &[f64]) -> bool {
    p.iter()
        .zip(m.domain.iter())
        .all(|(x, [lo, hi])| *x >= *lo && *x <= *hi)
}

/// Integrate the unparametrised geodesic equation with x as the parameter.
pub fn integrate_geodesic(
    m: &MetricSpec,
    j0: &JetPoint,
    xspan: [f64; 2],
    tol: f64,
) -> Result<GeodesicCurve, ProjError> {
    let dim = m.dim;
    let state0: Vec<f64> = if dim == 3 {
        vec![j0.base[1], j0.base[2], j0.slopes[0], j0.slopes[1]]
    } else {
        vec![j0.base[1], j0.slopes[0]]
    };
    let rhs = |x: f64, s: &[f64], out: &mut [f64]| -> Result<(), ProjError> {
        let p: Vec<f64> = if dim == 3 {
            vec![x, s[0], s[1]]
        } else {
            vec![x, s[0]]
        };
        if !in_domain(m, &p) || !m.admissible(&p) {
            return Err(ProjError::LeftDomain);
        }
        let conn = build_connection(m, &p)?;
        if dim == 3 {
            let f = conn.rhs([s[2], s[3]]);
            out[0] = s[2];
            out[1] = s[3];
            out[2] = f[0];
            out[3] = f[1];
        } else {
            let f = conn.rhs([s[1], 0.0]);
            out[0] = s[1];
            out[1] = f[0];
        }
        Ok(())
    };
    let mut store = Vec::new();
    // Cap the step so stored nodes stay dense enough for cubic Hermite
    // resampling at full accuracy.
    let hmax = (xspan[1] - xspan[0]).abs() / 1024.0;
    let complete = rk45(rhs, j0.base[0], &state0, xspan[1], tol, hmax, &mut store)?;
    let points = store
        .into_iter()
        .map(|(x, s)| {
            if dim == 3 {
                GeodesicPoint {
                    x,
                    y: s[0],
                    z: s[1],
                    yx: s[2],
                    zx: s[3],
                }
            } else {
                GeodesicPoint {
                    x,
                    y: s[0],
                    z: 0.0,
                    yx: s[1],
                    zx: 0.0,
                }
            }
        })
        .collect();
    Ok(GeodesicCurve {
        points,
        truncated: !complete,
    })
}

/// Flow a point along v for time t with the same RK 5(4) integrator.
pub fn flow_point(
    m: &MetricSpec,
    v: &VectorFieldSpec,
    p0: &[f64],
    t: f64,
    tol: f64,
) -> Result<Vec<f64>, ProjError> {
    let rhs = |_t: f64, s: &[f64], out: &mut [f64]| -> Result<(), ProjError> {
        for (i, c) in v.components.iter().enumerate() {
            out[i] = c.eval_f64(s, &m.params).map_err(GeomError::from)?;
        }
        Ok(())
    };
    let mut store = Vec::new();
    let complete = rk45(rhs, 0.0, p0, t, tol, f64::INFINITY, &mut store)?;
    if !complete {
        return Err(ProjError::LeftDomain);
    }
    Ok(store.last().expect("nonempty store").1.clone())
}

// ---------------------------------------------------------------------------
// Curve resampling and stencil differentiation
// ---------------------------------------------------------------------------

/// Cubic Hermite interpolation of (y, z) at `x` from a geodesic curve whose
/// nodes carry slopes.
fn hermite_eval(points: &[GeodesicPoint], x: f64) -> (f64, f64) {
    let n = points.len();
    let mut i = match points.binary_search_by(|p| p.x.partial_cmp(&x).unwrap()) {
        Ok(i) => i.min(n - 2),
        Err(i) => i.saturating_sub(1).min(n - 2),
    };
    if points[i + 1].x <= points[i].x {
        i = i.saturating_sub(1);
    }
    let (p0, p1) = (&points[i], &points[i + 1]);
    let h = p1.x - p0.x;
    let u = (x - p0.x) / h;
    let h00 = (1.0 + 2.0 * u) * (1.0 - u) * (1.0 - u);
    let h10 = u * (1.0 - u) * (1.0 - u);
    let h01 = u * u * (3.0 - 2.0 * u);
    let h11 = u * u * (u - 1.0);
    let y = h00 * p0.y + h10 * h * p0.yx + h01 * p1.y + h11 * h * p1.yx;
    let z = h00 * p0.z + h10 * h * p0.zx + h01 * p1.z + h11 * h * p1.zx;
    (y, z)
}

/// Local quintic Lagrange interpolation through scattered (x, f) data,
/// assumed sorted and strictly increasing in x.  Degree five keeps the
/// interpolation error negligible after two stencil differentiations.
fn lagrange_eval(xs: &[f64], fs: &[f64], x: f64) -> f64 {
    const K: usize = 6;
    let n = xs.len();
    let idx = match xs.binary_search_by(|p| p.partial_cmp(&x).unwrap()) {
        Ok(i) | Err(i) => i,
    };
    let start = idx.saturating_sub(K / 2).min(n.saturating_sub(K));
    let xw = &xs[start..start + K];
    let fw = &fs[start..start + K];
    let mut acc = 0.0;
    for i in 0..K {
        let mut li = 1.0;
        for j in 0..K {
            if j != i {
                li *= (x - xw[j]) / (xw[i] - xw[j]);
            }
        }
        acc += li * fw[i];
    }
    acc
}

/// 5-point central first and second derivatives on a uniform grid.  Entries
/// 0, 1 and n-2, n-1 are not filled (returned vectors are for indices
/// 2..n-2).
fn stencil_derivs(f: &[f64], h: f64) -> (Vec<f64>, Vec<f64>) {
    let n = f.len();
    let mut d1 = Vec::with_capacity(n - 4);
    let mut d2 = Vec::with_capacity(n - 4);
    for i in 2..n - 2 {
        d1.push((-f[i + 2] + 8.0 * f[i + 1] - 8.0 * f[i - 1] + f[i - 2]) / (12.0 * h));
        d2.push(
            (-f[i + 2] + 16.0 * f[i + 1] - 30.0 * f[i] + 16.0 * f[i - 1] - f[i - 2])
                / (12.0 * h * h),
        );
    }
    (d1, d2)
}

/// Flow-based geodesic-preservation defect: integrate a geodesic, flow each
/// sampled point along v for time t, and measure how far the transported
/// curve is from being an unparametrised geodesic.  The defect at a grid
/// point is
///
/// ```text
/// |acc x gdot| / (|gdot| |acc| + eps)
/// ```
///
/// with `gdot = (1, y', z')`, `acc_k = y''_k + Gamma^k_ab gdot^a gdot^b`, and
/// `eps` a curvature-scale regularizer that keeps stencil noise from
/// registering as a defect on numerically straight segments.
pub fn geodesic_transport_defect(
    m: &MetricSpec,
    v: &VectorFieldSpec,
    j0: &JetPoint,
    t: f64,
) -> Result<f64, ProjError> {
    if m.dim != 3 {
        return Err(ProjError::WrongDimension {
            expected: 3,
            got: m.dim,
        });
    }
    let rk_tol = 1e-10;
    // Integrate forward from j0 across a fraction of the x-box.
    let width = m.domain[0][1] - m.domain[0][0];
    let x_end = (j0.base[0] + 0.45 * width).min(m.domain[0][1] - 1e-9);
    let curve = integrate_geodesic(m, j0, [j0.base[0], x_end], rk_tol)?;
    let pts = &curve.points;
    if pts.len() < 3 {
        return Err(ProjError::TooFewPoints(pts.len()));
    }
    let x_lo = pts.first().unwrap().x;
    let x_hi = pts.last().unwrap().x;
    if x_hi - x_lo < 1e-3 {
        return Err(ProjError::TooFewPoints(pts.len()));
    }
    // Resample the geodesic on a uniform grid (cubic Hermite, slopes known).
    const M: usize = 41;
    let h0 = (x_hi - x_lo) / (M as f64 - 1.0);
    let mut flowed: Vec<[f64; 3]> = Vec::with_capacity(M);
    for i in 0..M {
        let x = x_lo + i as f64 * h0;
        let (y, z) = hermite_eval(pts, x);
        let q = flow_point(m, v, &[x, y, z], t, rk_tol)?;
        flowed.push([q[0], q[1], q[2]]);
    }
    // Transported points, re-sorted by x and resampled to a uniform grid.
    flowed.sort_by(|a, b| a[0].partial_cmp(&b[0]).unwrap());
    let xs: Vec<f64> = flowed.iter().map(|p| p[0]).collect();
    let ys: Vec<f64> = flowed.iter().map(|p| p[1]).collect();
    let zs: Vec<f64> = flowed.iter().map(|p| p[2]).collect();
    for w in xs.windows(2) {
        if w[1] <= w[0] {
            return Err(ProjError::StepFailure(
                "transported curve is not a graph over x".to_string(),
            ));
        }
    }
    // Shrink 2% per side to keep the Lagrange stencils interior.
    let lo = xs[0] + 0.02 * (xs[M - 1] - xs[0]);
    let hi = xs[M - 1] - 0.02 * (xs[M - 1] - xs[0]);
    let h = (hi - lo) / (M as f64 - 1.0);
    let grid: Vec<f64> = (0..M).map(|i| lo + i as f64 * h).collect();
    let yg: Vec<f64> = grid.iter().map(|&x| lagrange_eval(&xs, &ys, x)).collect();
    let zg: Vec<f64> = grid.iter().map(|&x| lagrange_eval(&xs, &zs, x)).collect();
    let (dy, d2y) = stencil_derivs(&yg, h);
    let (dz, d2z) = stencil_derivs(&zg, h);
    let mut defect: f64 = 0.0;
    for (idx, i) in (2..M - 2).enumerate() {
        let p = [grid[i], yg[i], zg[i]];
        if !in_domain(m, &p) || !m.admissible(&p) {
            continue;
        }
        let (gamma, _) = christoffel_with_grad(m, &p)?;
        let gdot = [1.0, dy[idx], dz[idx]];
        let gddot = [0.0, d2y[idx], d2z[idx]];
        let mut acc = [0.0; 3];
        for k in 0..3 {
            let mut s = gddot[k];
            for a in 0..3 {
                for b in 0..3 {
                    s += gamma[k][a][b] * gdot[a] * gdot[b];
                }
            }
            acc[k] = s;
        }
        let cross = [
            acc[1] * gdot[2] - acc[2] * gdot[1],
            acc[2] * gdot[0] - acc[0] * gdot[2],
            acc[0] * gdot[1] - acc[1] * gdot[0],
        ];
        let ncross = (cross[0] * cross[0] + cross[1] * cross[1] + cross[2] * cross[2]).sqrt();
        let ngdot = (gdot[0] * gdot[0] + gdot[1] * gdot[1] + gdot[2] * gdot[2]).sqrt();
        let nacc = (acc[0] * acc[0] + acc[1] * acc[1] + acc[2] * acc[2]).sqrt();
        let eps = 0.05 * ngdot * ngdot * ngdot / (hi - lo);
        defect = defect.max(ncross / (ngdot * nacc + eps));
    }
    Ok(defect)
}
