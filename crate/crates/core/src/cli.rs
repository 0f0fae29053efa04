//! Command-line front end: catalog listing and verification, ad-hoc
//! metric/vector-field checking, Benenti field dumps, geodesic and transport
//! runs, and the implicit second-order ODE solver.
//!
//! Exit codes: 0 all checks pass, 1 check failures, 2 usage or parse errors.

use std::fs;
use std::io::Write as _;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::catalog;
use crate::geometry::{
    classify_homothety, sample_points, HomothetyClass, MetricSpec, VectorFieldSpec,
};
use crate::metrisability::benenti;
use crate::ode_families::solve_psi;
use crate::projective::{
    geodesic_transport_defect, integrate_geodesic, normalized_symmetry_residual, JetPoint,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

fn default_seed() -> u64 {
    std::env::var("PROJSYM_SEED")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(7)
}

/// Format a float with 17 significant digits and '.' decimal separator.
fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Parser, Debug)]
#[command(
    name = "projsym",
    version,
    about = "Numerical verification of projective symmetries of metrics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct CommonOpts {
    /// Number of jet samples for symmetry checks.
    #[arg(long, default_value_t = 200)]
    samples: usize,
    /// Deterministic sampling seed (env PROJSYM_SEED overrides the default).
    #[arg(long, default_value_t = default_seed())]
    seed: u64,
    /// Residual tolerance for exact (AD-backed) checks.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// List catalog entries with their construction descriptions.
    List,
    /// Verify one entry or the whole catalog; optionally write a JSON report.
    Verify {
        #[command(flatten)]
        common: CommonOpts,
        /// Verify only this entry id.
        #[arg(long)]
        entry: Option<String>,
        /// Write the JSON report to this path.
        #[arg(long)]
        report: Option<String>,
        /// Verify entries concurrently (output is deterministic regardless).
        #[arg(long)]
        parallel: bool,
    },
    /// Check whether a vector field is projective for a metric, and classify it.
    Check {
        #[command(flatten)]
        common: CommonOpts,
        /// Path to a metric JSON file.
        #[arg(long)]
        metric: String,
        /// Path to a vector field JSON file.
        #[arg(long)]
        vf: String,
    },
    /// Dump the Benenti eigenvalue fields of an entry over a coordinate grid.
    Benenti {
        /// Catalog entry id (must have a partner metric).
        #[arg(long)]
        entry: String,
        /// Grid subdivisions per coordinate.
        #[arg(long, default_value_t = 5)]
        grid: usize,
        /// Output CSV path (stdout when omitted).
        #[arg(long)]
        out: Option<String>,
    },
    /// Integrate an unparametrised geodesic and emit it as CSV.
    Geodesic {
        /// Path to a metric JSON file (alternative to --entry).
        #[arg(long)]
        metric: Option<String>,
        /// Catalog entry id supplying the metric.
        #[arg(long)]
        entry: Option<String>,
        /// Initial jet "x0,y0,z0,yx0,zx0".
        #[arg(long)]
        init: String,
        /// Integration range "x0,x1".
        #[arg(long)]
        range: String,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long)]
        out: Option<String>,
    },
    /// Measure the geodesic-transport defect of each generator of an entry.
    Transport {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long)]
        entry: String,
        #[arg(long)]
        out: Option<String>,
    },
    /// Solve the implicit second-order equation (psi - z) psi'' = 2 psi'(psi' - k).
    SolvePsi {
        #[arg(long)]
        k: f64,
        /// Integration range "z0,z1".
        #[arg(long)]
        range: String,
        /// Initial values "psi0,psi_prime0".
        #[arg(long)]
        init: String,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long)]
        out: Option<String>,
    },
}

fn parse_pair(s: &str, what: &str) -> Result<[f64; 2], String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(format!("{what}: expected two comma-separated numbers, got {s:?}"));
    }
    let a = parts[0].trim().parse().map_err(|e| format!("{what}: {e}"))?;
    let b = parts[1].trim().parse().map_err(|e| format!("{what}: {e}"))?;
    Ok([a, b])
}

fn parse_jet(s: &str) -> Result<JetPoint, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| format!("--init: {e}"))?;
    if parts.len() != 5 {
        return Err(format!("--init: expected 5 numbers, got {}", parts.len()));
    }
    Ok(JetPoint {
        base: [parts[0], parts[1], parts[2]],
        slopes: [parts[3], parts[4]],
    })
}

fn write_output(out: &Option<String>, content: &str) -> Result<(), String> {
    match out {
        Some(path) => fs::write(path, content).map_err(|e| format!("{path}: {e}")),
        None => {
            print!("{content}");
            std::io::stdout().flush().map_err(|e| e.to_string())
        }
    }
}

// ---------------------------------------------------------------------------
// Subcommand implementations
// ---------------------------------------------------------------------------

fn cmd_list() -> i32 {
    let reg = catalog::registry();
    for e in &reg {
        println!("{:<26} {}", e.id, e.reference);
    }
    println!("{} entries", reg.len());
    EXIT_OK
}

#[derive(Serialize)]
struct VerifyConfigEcho {
    entry: Option<String>,
    samples: usize,
    seed: u64,
    tol: f64,
    parallel: bool,
}

#[derive(Serialize)]
struct VerifyReport {
    version: String,
    config: VerifyConfigEcho,
    passed: usize,
    failed: usize,
    entries: Vec<catalog::EntryReport>,
}

fn cmd_verify(
    common: &CommonOpts,
    entry: Option<&str>,
    report: Option<&str>,
    parallel: bool,
) -> i32 {
    let entries = match entry {
        Some(id) => match catalog::verify_entry_by_id(id, common.samples, common.seed, common.tol) {
            Ok(r) => vec![r],
            Err(catalog::CatalogError::UnknownEntry(id)) => {
                eprintln!("error: unknown catalog entry {id:?}");
                return EXIT_USAGE;
            }
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_CHECK_FAILED;
            }
        },
        None => {
            catalog::verify_all(common.samples, common.seed, common.tol, parallel).entries
        }
    };
    let passed = entries.iter().filter(|e| e.pass).count();
    let failed = entries.len() - passed;
    for e in &entries {
        let status = if e.pass { "pass" } else { "FAIL" };
        println!("{status}  {}", e.id);
        if !e.pass {
            for c in e.checks.iter().filter(|c| !c.pass) {
                println!("      {}: {:.3e} (tol {:.1e})", c.name, c.max_residual, c.tol);
            }
        }
    }
    println!("{passed} passed, {failed} failed");
    let rep = VerifyReport {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: VerifyConfigEcho {
            entry: entry.map(str::to_string),
            samples: common.samples,
            seed: common.seed,
            tol: common.tol,
            parallel,
        },
        passed,
        failed,
        entries,
    };
    if let Some(path) = report {
        let mut text = serde_json::to_string_pretty(&rep).expect("report serializes");
        text.push('\n');
        if let Err(e) = fs::write(path, text) {
            eprintln!("error: {path}: {e}");
            return EXIT_USAGE;
        }
    }
    if failed == 0 {
        EXIT_OK
    } else {
        EXIT_CHECK_FAILED
    }
}

fn cmd_check(common: &CommonOpts, metric_path: &str, vf_path: &str) -> i32 {
    let mtext = match fs::read_to_string(metric_path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {metric_path}: {e}");
            return EXIT_USAGE;
        }
    };
    let m = match MetricSpec::from_json(&mtext) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("error: {metric_path}: {e}");
            return EXIT_USAGE;
        }
    };
    let vtext = match fs::read_to_string(vf_path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {vf_path}: {e}");
            return EXIT_USAGE;
        }
    };
    let v = match VectorFieldSpec::from_json(&vtext, &m) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {vf_path}: {e}");
            return EXIT_USAGE;
        }
    };
    let base = match sample_points(&m, 20, common.seed) {
        Ok(b) => b,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let per_base = common.samples.div_ceil(base.len()).max(1);
    let mut worst: f64 = 0.0;
    for (bi, p) in base.iter().enumerate() {
        for s in 0..per_base {
            let u = crate::geometry::halton(97 + (bi * per_base + s) as u64, 2);
            let w = crate::geometry::halton(97 + (bi * per_base + s) as u64, 3);
            let j = JetPoint {
                base: [p[0], p[1], p[2]],
                slopes: [1.8 * u - 0.9, 1.8 * w - 0.9],
            };
            match normalized_symmetry_residual(&m, &v, &j) {
                Ok(r) => worst = worst.max(r),
                Err(e) => {
                    eprintln!("error: {e}");
                    return EXIT_USAGE;
                }
            }
        }
    }
    let projective = worst <= common.tol;
    println!("max_symmetry_residual: {}", fmt17(worst));
    println!("projective: {projective}");
    if projective {
        match classify_homothety(&m, &v, &base, 1e-7) {
            Ok(HomothetyClass::Killing) => println!("class: killing"),
            Ok(HomothetyClass::Homothetic(l)) => {
                println!("class: homothetic");
                println!("lambda: {}", fmt17(l));
            }
            Ok(HomothetyClass::NotHomothetic) => println!("class: essential"),
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_USAGE;
            }
        }
        EXIT_OK
    } else {
        EXIT_CHECK_FAILED
    }
}

fn cmd_benenti(entry_id: &str, grid: usize, out: &Option<String>) -> i32 {
    let e = match catalog::entry(entry_id) {
        Ok(e) => e,
        Err(err) => {
            eprintln!("error: {err}");
            return EXIT_USAGE;
        }
    };
    let Some(gbar) = &e.partner else {
        eprintln!("error: entry {entry_id:?} has no partner metric");
        return EXIT_USAGE;
    };
    if grid < 2 {
        eprintln!("error: --grid must be at least 2");
        return EXIT_USAGE;
    }
    let n = e.dim;
    let mut csv = String::new();
    for c in &e.metric.coords {
        csv.push_str(c);
        csv.push(',');
    }
    for i in 0..n {
        csv.push_str(&format!("lambda{},", i + 1));
    }
    csv.push_str("diagonalizable\n");
    // Shrink the lattice slightly into the interior to stay clear of guard
    // loci on the boundary.
    let coord = |d: usize, i: usize| {
        let [lo, hi] = e.metric.domain[d];
        let t = (i as f64 + 0.5) / grid as f64;
        lo + (hi - lo) * t
    };
    let total = grid.pow(n as u32);
    for flat in 0..total {
        let mut idx = flat;
        let mut p = vec![0.0; n];
        for d in 0..n {
            p[d] = coord(d, idx % grid);
            idx /= grid;
        }
        if !e.metric.admissible(&p) {
            continue;
        }
        match benenti(&e.metric, gbar, &p) {
            Ok(bt) => {
                for x in &p {
                    csv.push_str(&fmt17(*x));
                    csv.push(',');
                }
                for (re, _) in &bt.eigenvalues {
                    csv.push_str(&fmt17(*re));
                    csv.push(',');
                }
                csv.push_str(if bt.diagonalizable { "true" } else { "false" });
                csv.push('\n');
            }
            Err(err) => {
                eprintln!("error: at {p:?}: {err}");
                return EXIT_CHECK_FAILED;
            }
        }
    }
    match write_output(out, &csv) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_geodesic(
    metric_path: &Option<String>,
    entry_id: &Option<String>,
    init: &str,
    range: &str,
    tol: f64,
    out: &Option<String>,
) -> i32 {
    let m = match (metric_path, entry_id) {
        (Some(path), None) => {
            let text = match fs::read_to_string(path) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: {path}: {e}");
                    return EXIT_USAGE;
                }
            };
            match MetricSpec::from_json(&text) {
                Ok(m) => m,
                Err(e) => {
                    eprintln!("error: {path}: {e}");
                    return EXIT_USAGE;
                }
            }
        }
        (None, Some(id)) => match catalog::entry(id) {
            Ok(e) => e.metric,
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_USAGE;
            }
        },
        _ => {
            eprintln!("error: provide exactly one of --metric or --entry");
            return EXIT_USAGE;
        }
    };
    let j0 = match parse_jet(init) {
        Ok(j) => j,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let xspan = match parse_pair(range, "--range") {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let curve = match integrate_geodesic(&m, &j0, xspan, tol) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CHECK_FAILED;
        }
    };
    let mut csv = String::from("x,y,z,y_x,z_x\n");
    for p in &curve.points {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt17(p.x),
            fmt17(p.y),
            fmt17(p.z),
            fmt17(p.yx),
            fmt17(p.zx)
        ));
    }
    if curve.truncated {
        eprintln!("note: integration stopped at the domain boundary");
    }
    match write_output(out, &csv) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}

fn cmd_transport(common: &CommonOpts, entry_id: &str, out: &Option<String>) -> i32 {
    let e = match catalog::entry(entry_id) {
        Ok(e) => e,
        Err(err) => {
            eprintln!("error: {err}");
            return EXIT_USAGE;
        }
    };
    if e.dim != 3 {
        eprintln!("error: transport requires a 3-dimensional entry");
        return EXIT_USAGE;
    }
    let base = match sample_points(&e.metric, 5, common.seed) {
        Ok(b) => b,
        Err(err) => {
            eprintln!("error: {err}");
            return EXIT_USAGE;
        }
    };
    // Start from an interior point with mild slopes; flow for a short time.
    let j0 = JetPoint {
        base: [base[0][0], base[0][1], base[0][2]],
        slopes: [0.1, -0.08],
    };
    let tol = 1e-5;
    let mut csv = String::from("generator,defect,tol,pass\n");
    let mut all_ok = true;
    for g in &e.generators {
        let defect = match geodesic_transport_defect(&e.metric, &g.field, &j0, 0.1) {
            Ok(d) => d,
            Err(err) => {
                eprintln!("error: generator {:?}: {err}", g.sources);
                return EXIT_CHECK_FAILED;
            }
        };
        let ok = defect <= tol;
        all_ok &= ok;
        csv.push_str(&format!(
            "\"{}\",{},{},{}\n",
            g.sources.join(";"),
            fmt17(defect),
            fmt17(tol),
            ok
        ));
    }
    if let Err(err) = write_output(out, &csv) {
        eprintln!("error: {err}");
        return EXIT_USAGE;
    }
    if all_ok {
        EXIT_OK
    } else {
        EXIT_CHECK_FAILED
    }
}

fn cmd_solve_psi(k: f64, range: &str, init: &str, tol: f64, out: &Option<String>) -> i32 {
    let zrange = match parse_pair(range, "--range") {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let init = match parse_pair(init, "--init") {
        Ok(r) => (r[0], r[1]),
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let sol = match solve_psi(k, zrange, init, tol) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let res = sol.residuals();
    let mut csv = String::from("z,psi,psi_prime,residual\n");
    for i in 0..sol.zs.len() {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            fmt17(sol.zs[i]),
            fmt17(sol.psi[i]),
            fmt17(sol.psi_prime[i]),
            fmt17(res[i])
        ));
    }
    match write_output(out, &csv) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}

/// Entry point: parse `args` (including the program name) and run.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            // clap handles --help/--version as "errors" with success status.
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match &cli.command {
        Command::List => cmd_list(),
        Command::Verify {
            common,
            entry,
            report,
            parallel,
        } => cmd_verify(common, entry.as_deref(), report.as_deref(), *parallel),
        Command::Check { common, metric, vf } => cmd_check(common, metric, vf),
        Command::Benenti { entry, grid, out } => cmd_benenti(entry, *grid, out),
        Command::Geodesic {
            metric,
            entry,
            init,
            range,
            tol,
            out,
        } => cmd_geodesic(metric, entry, init, range, *tol, out),
        Command::Transport { common, entry, out } => cmd_transport(common, entry, out),
        Command::SolvePsi {
            k,
            range,
            init,
            tol,
            out,
        } => cmd_solve_psi(*k, range, init, *tol, out),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_and_jet_parsing() {
        assert_eq!(parse_pair("1, 2", "--range").unwrap(), [1.0, 2.0]);
        assert!(parse_pair("1", "--range").is_err());
        let j = parse_jet("0,1,2,0.1,0.2").unwrap();
        assert_eq!(j.base, [0.0, 1.0, 2.0]);
        assert_eq!(j.slopes, [0.1, 0.2]);
        assert!(parse_jet("0,1,2").is_err());
    }

    #[test]
    fn seventeen_digit_formatting_round_trips() {
        for v in [1.0 / 3.0, 2.0_f64.sqrt(), -1.2345e-8, 0.0] {
            let s = fmt17(v);
            assert!(s.contains('.') || v == 0.0);
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
        }
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(run(["projsym", "bogus-subcommand"]), EXIT_USAGE);
        assert_eq!(
            run(["projsym", "verify", "--entry", "does-not-exist"]),
            EXIT_USAGE
        );
        assert_eq!(run(["projsym", "solve-psi", "--k", "x", "--range", "0,1", "--init", "0,1"]), EXIT_USAGE);
    }

    #[test]
    fn help_exits_zero() {
        assert_eq!(run(["projsym", "--help"]), EXIT_OK);
    }
}
