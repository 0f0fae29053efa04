//! End-to-end acceptance gate: one test per top-level acceptance criterion,
//! with the pinned tolerances spelled out at the assertion sites.
//!
//! The catalog-wide checks share a single cached verification run (200 jet
//! samples, seed 7) so the whole file stays within the desk-scale runtime
//! budget.

use std::sync::OnceLock;
use std::time::Instant;

use projsym::catalog::{self, EntryReport, SuiteReport};
use projsym::expr::{Ast, Func, ParamEnv, ScalarExpr};
use projsym::geometry::{sample_points, MetricSpec, VectorFieldSpec};
use projsym::metrisability::{benenti, metrisability_residual, SigmaField};
use projsym::ode_families::{
    closed_form_branch, coerce_constants, inverf, ode111_residual, reference_constant_sets,
    solve_psi, ALL_BRANCHES,
};
use projsym::projective::{geodesic_transport_defect, JetPoint};

const SEED: u64 = 7;

fn suite() -> &'static SuiteReport {
    static SUITE: OnceLock<SuiteReport> = OnceLock::new();
    SUITE.get_or_init(|| catalog::verify_all(200, SEED, 1e-8, true))
}

fn checks_named<'a>(
    rep: &'a EntryReport,
    prefix: &'a str,
) -> impl Iterator<Item = &'a projsym::catalog::CheckResult> {
    rep.checks.iter().filter(move |c| {
        c.name == prefix || (c.name.starts_with(prefix) && c.name[prefix.len()..].starts_with('['))
    })
}

fn assert_checks_pass(rep: &EntryReport, prefix: &str, tol: f64) -> usize {
    let mut count = 0;
    for c in checks_named(rep, prefix) {
        count += 1;
        assert!(
            c.tol <= tol,
            "{}: {} is checked against {:.1e}, looser than the pinned {:.1e}",
            rep.id,
            c.name,
            c.tol,
            tol
        );
        assert!(
            c.pass,
            "{}: {} = {:.3e} exceeds {:.1e}",
            rep.id, c.name, c.max_residual, c.tol
        );
    }
    count
}

fn flat_metric() -> MetricSpec {
    MetricSpec::new(
        &["x", "y", "z"],
        &["1", "0", "0", "1", "0", "1"],
        ParamEnv::new(),
        &[[-1.0, 1.0], [-1.0, 1.0], [-1.0, 1.0]],
        &[],
    )
    .unwrap()
}

// ---------------------------------------------------------------------------
// 1. Catalog symmetry suite
// ---------------------------------------------------------------------------

#[test]
fn catalog_symmetry_suite() {
    let rep = suite();
    assert!(rep.entries.len() >= 40, "only {} entries", rep.entries.len());
    let mut generators = 0;
    let mut controls = 0;
    for e in &rep.entries {
        generators += assert_checks_pass(e, "symmetry", 1e-8);
        assert_checks_pass(e, "coefficients", 1e-8);
        for c in checks_named(e, "control") {
            controls += 1;
            assert!(
                c.pass && c.max_residual > 1e-3,
                "{}: negative control {} only reached {:.3e}",
                e.id,
                c.name,
                c.max_residual
            );
        }
        assert_checks_pass(e, "class", 0.5);
        assert_checks_pass(e, "bracket-closure", 1e-7);
    }
    assert!(generators >= 40, "only {generators} generator symmetry checks");
    assert!(controls >= 40, "only {controls} negative controls");
}

#[test]
fn catalog_symmetry_suite_runtime() {
    // Serial timing of the symmetry-only workload (200 jets per generator
    // plus coefficient extraction at 20 base points for each entry).
    let reg = catalog::registry();
    let start = Instant::now();
    for e in &reg {
        if e.dim != 3 {
            continue;
        }
        let base = sample_points(&e.metric, 20, SEED).unwrap();
        for g in &e.generators {
            for (bi, p) in base.iter().enumerate() {
                for s in 0..10 {
                    let u = projsym::geometry::halton((29 + bi * 10 + s) as u64, 2);
                    let w = projsym::geometry::halton((29 + bi * 10 + s) as u64, 3);
                    let j = JetPoint {
                        base: [p[0], p[1], p[2]],
                        slopes: [1.8 * u - 0.9, 1.8 * w - 0.9],
                    };
                    let r = projsym::projective::normalized_symmetry_residual(
                        &e.metric, &g.field, &j,
                    )
                    .unwrap();
                    assert!(r <= 1e-8, "{}: {:.3e}", e.id, r);
                }
            }
            for p in &base {
                let coeffs =
                    projsym::projective::symmetry_coefficients(&e.metric, &g.field, p).unwrap();
                assert!(coeffs.iter().all(|c| c.abs() <= 1e-8), "{}", e.id);
            }
        }
    }
    let elapsed = start.elapsed();
    eprintln!("symmetry suite serial runtime: {elapsed:.2?}");
    assert!(
        elapsed.as_secs_f64() <= 60.0,
        "symmetry suite took {elapsed:.2?}, budget is 60 s"
    );
}

// ---------------------------------------------------------------------------
// 2. Benenti suite
// ---------------------------------------------------------------------------

#[test]
fn benenti_suite() {
    let rep = suite();
    let mut separable = 0;
    for e in &rep.entries {
        if assert_checks_pass(e, "benenti-eigenvalues", 1e-8) > 0 {
            assert_checks_pass(e, "gl-symmetry", 1e-9);
            assert_checks_pass(e, "gl2-symmetry", 1e-9);
            assert_checks_pass(e, "pencil-multiplicity", 0.5);
        }
        if e.id.starts_with("111-") || e.id.starts_with("main-111-") {
            separable += 1;
        }
    }
    assert!(separable >= 15, "only {separable} separable entries");
}

#[test]
fn lorentz_pair_has_nondiagonalizable_tensor_with_eigenvalue_minus_y() {
    let e = catalog::entry("lorentz2d-nondiag").unwrap();
    let gbar = e.partner.as_ref().unwrap();
    let pts = sample_points(&e.metric, 20, SEED).unwrap();
    for p in &pts {
        let bt = benenti(&e.metric, gbar, p).unwrap();
        assert!(!bt.diagonalizable, "diagonalizable at {p:?}");
        // The double eigenvalue of the Jordan block is -y; the numerically
        // robust invariant is the trace.
        let mean = 0.5 * (bt.eigenvalues[0].0 + bt.eigenvalues[1].0);
        assert!(
            (mean + p[1]).abs() <= 1e-9,
            "eigenvalue defect {:.3e} at {p:?}",
            (mean + p[1]).abs()
        );
    }
}

// ---------------------------------------------------------------------------
// 3. Metrisability suite
// ---------------------------------------------------------------------------

#[test]
fn metrisability_suite() {
    let rep = suite();
    let mut with_partner = 0;
    for e in &rep.entries {
        let n = assert_checks_pass(e, "metrisability-sigma", 1e-9)
            + assert_checks_pass(e, "metrisability-sigmabar", 1e-9);
        if n > 0 {
            assert_eq!(n, 2, "{}", e.id);
            with_partner += 1;
        }
    }
    assert!(with_partner >= 30, "only {with_partner} entries with partner");
}

#[test]
fn quartic_sigma_is_rejected_on_flat_space() {
    let m = flat_metric();
    let sigma = SigmaField::new(
        &["x", "y", "z"],
        &["1+x^4", "0", "0", "1", "0", "1"],
        ParamEnv::new(),
    )
    .unwrap();
    let pts = sample_points(&m, 20, SEED).unwrap();
    let worst = pts
        .iter()
        .map(|p| metrisability_residual(&m, &sigma, p).unwrap())
        .fold(0.0f64, f64::max);
    assert!(worst > 1e-2, "quartic control only reached {worst:.3e}");
}

// ---------------------------------------------------------------------------
// 4. Action / eigenvalue-transport suite
// ---------------------------------------------------------------------------

#[test]
fn action_suite() {
    let rep = suite();
    let mut trichotomy = 0;
    let mut descent1 = 0;
    let mut descent2 = 0;
    for e in &rep.entries {
        assert_checks_pass(e, "action-fit", 1e-8);
        trichotomy += assert_checks_pass(e, "trichotomy", 0.5);
        assert_checks_pass(e, "solodovnikov", 1e-8);
        assert_checks_pass(e, "lvl", 1e-8);
        assert_checks_pass(e, "lvg-l-symmetry", 1e-9);
        assert_checks_pass(e, "pencil-root", 1e-8);
        assert_checks_pass(e, "z-transport", 1e-8);
        descent2 += assert_checks_pass(e, "descent-2d", 1e-7);
        descent1 += assert_checks_pass(e, "descent-1d", 1e-8);
    }
    assert!(trichotomy >= 40, "only {trichotomy} fitted generators");
    assert!(descent1 >= 15, "only {descent1} one-dimensional descent checks");
    assert!(descent2 >= 30, "only {descent2} two-dimensional descent checks");
}

// ---------------------------------------------------------------------------
// 5. ODE suite
// ---------------------------------------------------------------------------

#[test]
fn every_closed_form_branch_satisfies_its_ode() {
    for id in ALL_BRANCHES {
        for base in reference_constant_sets() {
            let k = coerce_constants(id, &base);
            let br = closed_form_branch(id, &k).unwrap();
            for i in 0..20 {
                let t = (i as f64 + 0.5) / 20.0;
                let x = br.domain[0] + t * (br.domain[1] - br.domain[0]);
                let res = ode111_residual(
                    std::slice::from_ref(&br.profile),
                    std::slice::from_ref(&br.field),
                    &br.action,
                    &[x],
                )
                .unwrap();
                assert!(
                    res[0].0 <= 1e-10 && res[0].1 <= 1e-10,
                    "{id:?}: residuals ({:.2e}, {:.2e}) at x = {x}",
                    res[0].0,
                    res[0].1
                );
            }
        }
    }
}

#[test]
fn psi_solver_matches_tanh_closed_form_for_k_one() {
    // psi(z) = z - tanh(z), psi'(z) = tanh(z)^2 solves the k = 1 equation.
    let z0: f64 = 0.5;
    let sol = solve_psi(1.0, [z0, 2.0], (z0 - z0.tanh(), z0.tanh().powi(2)), 1e-10).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..sol.zs.len() {
        let z = sol.zs[i];
        worst = worst.max((sol.psi[i] - (z - z.tanh())).abs());
        worst = worst.max((sol.psi_prime[i] - z.tanh().powi(2)).abs());
    }
    assert!(worst <= 1e-8, "k = 1 defect {worst:.3e}");
    assert!(sol.max_residual() <= 1e-8);
}

#[test]
fn psi_solver_matches_inverse_error_function_for_k_zero() {
    // With w = inverf(z): psi'(z) = -1/(2 w^2) and
    // psi(z) = z + 1/(sqrt(pi) w exp(w^2)) solve the k = 0 equation.
    let sqrt_pi = std::f64::consts::PI.sqrt();
    let z0 = 0.5;
    let w0 = inverf(z0).unwrap();
    let psi0 = z0 + 1.0 / (sqrt_pi * w0 * (w0 * w0).exp());
    let sol = solve_psi(0.0, [z0, 0.85], (psi0, -0.5 / (w0 * w0)), 1e-12).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..sol.zs.len() {
        let w = inverf(sol.zs[i]).unwrap();
        worst = worst.max((sol.psi_prime[i] + 0.5 / (w * w)).abs());
    }
    assert!(worst <= 1e-6, "k = 0 defect {worst:.3e}");
}

// ---------------------------------------------------------------------------
// 6. Curvature suite
// ---------------------------------------------------------------------------

#[test]
fn curvature_suite() {
    let rep = suite();
    let mut cc = 0;
    let mut rg = 0;
    for e in &rep.entries {
        cc += assert_checks_pass(e, "sectional-constancy", 1e-8);
        rg += assert_checks_pass(e, "rg-decomposition", 1e-9);
        assert!(
            assert_checks_pass(e, "bianchi", 1e-9) == 1,
            "{}: missing Bianchi check",
            e.id
        );
    }
    assert!(cc >= 13, "only {cc} constant-curvature entries");
    assert!(rg >= 10, "only {rg} curvature-decomposition pairs");
}

// ---------------------------------------------------------------------------
// 7. Transport suite
// ---------------------------------------------------------------------------

#[test]
fn transport_suite() {
    // One representative per family class, three generators each.
    let ids = [
        "111-one-const-inv",
        "21-c1-invz2",
        "21-cc-flat-1a",
        "sphere-h-exp",
        "submaximal-sphere-line",
    ];
    for id in ids {
        let e = catalog::entry(id).unwrap();
        assert!(e.generators.len() >= 3, "{id} has too few generators");
        let base = sample_points(&e.metric, 5, SEED).unwrap();
        let j0 = JetPoint {
            base: [base[0][0], base[0][1], base[0][2]],
            slopes: [0.1, -0.08],
        };
        for g in e.generators.iter().take(3) {
            let defect = geodesic_transport_defect(&e.metric, &g.field, &j0, 0.1).unwrap();
            assert!(
                defect <= 1e-5,
                "{id}: generator {:?} transport defect {defect:.3e}",
                g.sources
            );
        }
    }
}

#[test]
fn transport_rejects_flat_space_control() {
    let m = flat_metric();
    let v = VectorFieldSpec::new(&["0", "x^2", "0"], &m).unwrap();
    let j0 = JetPoint {
        base: [-0.3, 0.1, 0.0],
        slopes: [0.2, 0.15],
    };
    let defect = geodesic_transport_defect(&m, &v, &j0, 0.1).unwrap();
    assert!(defect > 1e-2, "control defect only {defect:.3e}");
}

// ---------------------------------------------------------------------------
// 8. Infrastructure
// ---------------------------------------------------------------------------

mod ast_round_trip {
    use super::*;
    use proptest::prelude::*;

    fn arb_ast() -> impl Strategy<Value = Ast> {
        let leaf = prop_oneof![
            (-1.0e3..1.0e3f64).prop_map(Ast::Const),
            (0usize..3).prop_map(Ast::Coord),
            Just(Ast::Param("mu".to_string())),
        ];
        leaf.prop_recursive(5, 64, 3, |inner| {
            let func = prop_oneof![
                Just(Func::Sin),
                Just(Func::Cos),
                Just(Func::Tan),
                Just(Func::Sinh),
                Just(Func::Cosh),
                Just(Func::Tanh),
                Just(Func::Exp),
                Just(Func::Ln),
                Just(Func::Abs),
                Just(Func::Sqrt),
            ];
            prop_oneof![
                inner.clone().prop_map(|a| Ast::Neg(Box::new(a))),
                (inner.clone(), inner.clone())
                    .prop_map(|(a, b)| Ast::Add(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone())
                    .prop_map(|(a, b)| Ast::Sub(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone())
                    .prop_map(|(a, b)| Ast::Mul(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone())
                    .prop_map(|(a, b)| Ast::Div(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone())
                    .prop_map(|(a, b)| Ast::Pow(Box::new(a), Box::new(b))),
                (func, inner).prop_map(|(f, a)| Ast::Apply(f, Box::new(a))),
            ]
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn print_parse_round_trip(ast in arb_ast()) {
            let coords = ["x", "y", "z"];
            let expr = ScalarExpr::from_ast(ast, &coords);
            let printed = expr.to_string();
            let reparsed = ScalarExpr::parse(&printed, &coords, &["mu"]).unwrap();
            prop_assert_eq!(&reparsed, &expr, "printed form: {}", printed);
        }
    }
}

#[test]
fn autodiff_matches_finite_differences() {
    let coords = ["x", "y", "z"];
    let params = ParamEnv::from_pairs(&[("mu", 0.7)]);
    let sources = [
        "sin(x)*exp(y) + mu*z^3",
        "tanh(x*y) / (2 + cos(z))",
        "ln(2 + x^2) * sqrt(1 + y^2) - mu/(1 + z^2)",
    ];
    let p = [0.4, -0.3, 0.8];
    for src in sources {
        let e = ScalarExpr::parse(src, &coords, &["mu"]).unwrap();
        let (_, grad, hess) = projsym::autodiff::partials(&e, &p, &params).unwrap();
        let h = 1e-5;
        for i in 0..3 {
            let mut pp = p;
            let mut pm = p;
            pp[i] += h;
            pm[i] -= h;
            let fp = e.eval_f64(&pp, &params).unwrap();
            let fm = e.eval_f64(&pm, &params).unwrap();
            let fd = (fp - fm) / (2.0 * h);
            assert!(
                (grad[i] - fd).abs() <= 1e-7 * (1.0 + fd.abs()),
                "{src}: d/d{} AD {} vs FD {}",
                coords[i],
                grad[i],
                fd
            );
            for j in 0..3 {
                let mut ppp = p;
                let mut ppm = p;
                let mut pmp = p;
                let mut pmm = p;
                ppp[i] += h;
                ppp[j] += h;
                ppm[i] += h;
                ppm[j] -= h;
                pmp[i] -= h;
                pmp[j] += h;
                pmm[i] -= h;
                pmm[j] -= h;
                let fd2 = (e.eval_f64(&ppp, &params).unwrap()
                    - e.eval_f64(&ppm, &params).unwrap()
                    - e.eval_f64(&pmp, &params).unwrap()
                    + e.eval_f64(&pmm, &params).unwrap())
                    / (4.0 * h * h);
                assert!(
                    (hess[i][j] - fd2).abs() <= 1e-4 * (1.0 + fd2.abs()),
                    "{src}: d2/d{}d{} AD {} vs FD {}",
                    coords[i],
                    coords[j],
                    hess[i][j],
                    fd2
                );
            }
        }
    }
}

#[test]
fn seeded_reports_are_byte_identical() {
    let dir = std::env::temp_dir();
    let p1 = dir.join("projsym-acc-report-1.json");
    let p2 = dir.join("projsym-acc-report-2.json");
    for p in [&p1, &p2] {
        let code = projsym::cli::run([
            "projsym",
            "verify",
            "--entry",
            "main-111-tan",
            "--samples",
            "60",
            "--seed",
            "11",
            "--report",
            p.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
    }
    let b1 = std::fs::read(&p1).unwrap();
    let b2 = std::fs::read(&p2).unwrap();
    assert_eq!(b1, b2, "seeded reports differ");
    let _ = std::fs::remove_file(&p1);
    let _ = std::fs::remove_file(&p2);
}

#[test]
fn exit_code_contract() {
    use projsym::cli::run;
    // 2: usage / parse errors.
    assert_eq!(run(["projsym", "verify", "--entry", "nonexistent"]), 2);
    assert_eq!(run(["projsym", "frobnicate"]), 2);
    assert_eq!(run(["projsym", "solve-psi", "--k", "-1", "--range", "0,1", "--init", "1,1"]), 2);
    // 0 / 1: the check command on a dilation vs a non-projective field.
    let dir = std::env::temp_dir();
    let mpath = dir.join("projsym-acc-flat.json");
    let vgood = dir.join("projsym-acc-dilation.json");
    let vbad = dir.join("projsym-acc-control.json");
    std::fs::write(&mpath, flat_metric().to_json()).unwrap();
    std::fs::write(&vgood, r#"{"components": ["x", "y", "z"]}"#).unwrap();
    std::fs::write(&vbad, r#"{"components": ["0", "x^2", "0"]}"#).unwrap();
    assert_eq!(
        run([
            "projsym",
            "check",
            "--metric",
            mpath.to_str().unwrap(),
            "--vf",
            vgood.to_str().unwrap(),
        ]),
        0
    );
    assert_eq!(
        run([
            "projsym",
            "check",
            "--metric",
            mpath.to_str().unwrap(),
            "--vf",
            vbad.to_str().unwrap(),
        ]),
        1
    );
    assert_eq!(
        run([
            "projsym",
            "check",
            "--metric",
            "/nonexistent/path.json",
            "--vf",
            vgood.to_str().unwrap(),
        ]),
        2
    );
    for p in [&mpath, &vgood, &vbad] {
        let _ = std::fs::remove_file(p);
    }
}
