//! The `stopset` command-line driver.
//!
//! Every CSV starts with a `# provenance: {...}` line and every JSON document
//! carries a `provenance` object, so outputs can be traced back to the exact
//! configuration that produced them. No timestamps are written: identical
//! inputs give byte-identical outputs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use rand::Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::brute_force::{closure_support_pairs, exhaustive_ensemble_ssef, max_stopping_set_within, pair_counts};
use crate::codec_sim::{bec_transmit, iterative_decode, monte_carlo, rng_stream, CodeInstance};
use crate::enumerators::{
    ensemble_ssef, iossef_hcc, iossef_rma, siosef_accumulator, siosef_feedforward, Constituent, EnsembleSpec, Frac,
};
use crate::exit_analysis::{compound_outer_exit, inner_exit, threshold};
use crate::finite_bounds::{bound_sweep, SweepOptions};
use crate::numerics::ln_rational;
use crate::spectral::{extract_rho0, rho_grid, Rho0, Rho0Options, SolveOptions, Solver, SpectralCurve};
use crate::{Error, Family};

/// Environment variable naming the directory relative output paths go to.
pub const OUT_DIR_ENV: &str = "STOPSET_OUT_DIR";

#[derive(Parser, Debug)]
#[command(name = "stopset", version, about = "Stopping-set analysis of RMA and HCC ensembles on the BEC")]
struct Cli {
    /// worker threads (default: all cores)
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Ensemble-average stopping set size enumerator at block length N
    Enumerate {
        #[arg(long)]
        spec: String,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        /// also write exact numerators/denominators to a JSON sidecar
        #[arg(long)]
        exact: bool,
    },
    /// Probabilistic lower bound on the stopping distance
    HminBound {
        #[arg(long)]
        spec: String,
        #[arg(long, value_delimiter = ',')]
        n_list: Vec<usize>,
        #[arg(long, default_value_t = 0.5)]
        epsilon: f64,
        /// largest N evaluated with exact rationals (RMA only)
        #[arg(long, default_value_t = 512)]
        exact_max: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Asymptotic spectral shape on a grid
    Spectral {
        #[arg(long)]
        spec: String,
        /// puncturing fraction `p/q`, overriding the spec
        #[arg(long)]
        lambda: Option<String>,
        #[arg(long, default_value_t = 0.001)]
        rho_min: f64,
        #[arg(long, default_value_t = 0.5)]
        rho_max: f64,
        #[arg(long, default_value_t = 0.005)]
        drho: f64,
        #[arg(long, default_value_t = 64)]
        starts: usize,
        #[arg(long, default_value_t = 0x5eed)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Growth-rate coefficient of the stopping distance
    Rho0 {
        #[arg(long)]
        spec: String,
        #[arg(long)]
        lambda: Option<String>,
        #[arg(long, default_value_t = 64)]
        starts: usize,
        #[arg(long, default_value_t = 0x5eed)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Iterative decoding threshold from EXIT analysis
    Threshold {
        #[arg(long)]
        spec: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Outer and inner EXIT curves for a chart at one channel erasure rate
    ExitCurves {
        #[arg(long)]
        spec: String,
        #[arg(long)]
        p_ch: f64,
        #[arg(long, default_value_t = 101)]
        points: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo frame erasure rate of iterative decoding
    Simulate {
        #[arg(long)]
        spec: String,
        #[arg(long)]
        n: usize,
        #[arg(long, value_delimiter = ',')]
        p_grid: Vec<f64>,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// newline-separated 0-based permutations
        #[arg(long)]
        fixed_interleavers: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cross-check a fast path against an exhaustive oracle
    OracleCheck {
        #[arg(long, value_enum)]
        what: OracleKind,
        #[arg(long, default_value = "rma:q=3,L=2")]
        spec: String,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// erasure patterns per channel value (decoder check)
        #[arg(long, default_value_t = 1000)]
        trials: usize,
    },
    /// Regenerate the tables and figure data in one batch
    Tables {
        #[arg(long, value_delimiter = ',', default_value = "all")]
        which: Vec<String>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OracleKind {
    Siosef,
    Decoder,
    Ssef,
}

#[derive(Serialize)]
struct Provenance {
    tool: &'static str,
    version: &'static str,
    command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    spec: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    tolerances: Value,
}

impl Provenance {
    fn new(command: &str, spec: Option<&EnsembleSpec>, seed: Option<u64>, tolerances: Value) -> Provenance {
        Provenance {
            tool: "stopset",
            version: env!("CARGO_PKG_VERSION"),
            command: command.into(),
            spec: spec.map(|s| s.to_string()),
            seed,
            tolerances,
        }
    }

    fn csv_line(&self) -> String {
        format!("# provenance: {}\n", serde_json::to_string(self).expect("serialisable"))
    }
}

fn json_doc(prov: &Provenance, body: Value) -> String {
    let mut v = body;
    v["provenance"] = serde_json::to_value(prov).expect("serialisable");
    serde_json::to_string_pretty(&v).expect("serialisable") + "\n"
}

fn resolve(path: &Path) -> PathBuf {
    match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) if path.is_relative() => Path::new(&dir).join(path),
        _ => path.to_path_buf(),
    }
}

/// Writes to `out`, or stdout when absent.
fn emit(out: Option<&Path>, text: &str) -> crate::Result<()> {
    match out {
        Some(p) => {
            let p = resolve(p);
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            std::fs::write(p, text)?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn sidecar(out: &Path) -> PathBuf {
    let mut p = out.as_os_str().to_owned();
    p.push(".json");
    PathBuf::from(p)
}

/// Decimal rendering with 15 significant digits, exact up to the last digit
/// (rounded half away from zero).
pub fn sig15(r: &BigRational) -> String {
    if r.is_zero() {
        return "0".into();
    }
    let neg = r.is_negative();
    let a = r.abs();
    let mut e = (ln_rational(&a) / std::f64::consts::LN_10).floor() as i64;
    loop {
        // digits = round(a * 10^(14 - e)) must have exactly 15 digits
        let shift = 14 - e;
        let scaled = if shift >= 0 {
            &a * BigRational::from_integer(BigInt::from(10).pow(shift as u32))
        } else {
            &a / BigRational::from_integer(BigInt::from(10).pow((-shift) as u32))
        };
        let (q, rem) = scaled.numer().div_rem(scaled.denom());
        let digits = if rem * 2 >= *scaled.denom() { q + 1 } else { q };
        let s = digits.to_string();
        // a rounding carry or an off-by-one log estimate: shift and retry
        if s.len() > 15 {
            e += 1;
            continue;
        }
        if s.len() < 15 {
            e -= 1;
            continue;
        }
        return format!("{}{}.{}e{}", if neg { "-" } else { "" }, &s[..1], &s[1..], e);
    }
}

fn parse_lambda(s: &str) -> crate::Result<Frac> {
    s.parse()
}

fn with_lambda(spec: &EnsembleSpec, lambda: Option<&String>) -> crate::Result<EnsembleSpec> {
    let mut spec = spec.clone();
    if let Some(l) = lambda {
        spec.lambda = parse_lambda(l)?;
        spec.validate()?;
    }
    Ok(spec)
}

fn rho0_tolerances(o: &Rho0Options) -> Value {
    json!({ "step": o.step, "width": o.width, "tol_zero": o.tol_zero, "tol_pos": o.tol_pos, "agree": 1e-6 })
}

/// Growth-rate coefficient of any ensemble, plain or punctured.
pub fn rho0_of(spec: &EnsembleSpec, opts: SolveOptions) -> crate::Result<Rho0> {
    let solver = Solver::new(spec, opts)?;
    Ok(extract_rho0(|r| solver.eval(r), &Rho0Options::default()))
}

fn rho0_json(r: &Rho0) -> Value {
    let worst = r
        .evaluations
        .iter()
        .filter_map(|e| Some((e.method_a? - e.method_b?).abs()))
        .fold(0.0f64, f64::max);
    json!({
        "rho0": r.rho0.map_or(Value::String("none".into()), |x| json!(x)),
        "display": r.display(),
        "never_positive": r.never_positive,
        "evaluations": r.evaluations.len(),
        "disagreements": r.disagreements(),
        "max_method_gap": worst,
    })
}

fn argmax_labels(spec: &EnsembleSpec) -> Vec<String> {
    match spec.family {
        Family::Rma => (0..=spec.l).map(|i| format!("beta{i}")).chain((1..=spec.l).map(|i| format!("gamma{i}"))).collect(),
        Family::Hcc => std::iter::once("alpha".to_string()).chain((1..=spec.q).map(|i| format!("beta{i}"))).collect(),
    }
}

fn spectral_csv(spec: &EnsembleSpec, curve: &SpectralCurve) -> String {
    let mut s = String::new();
    let labels = argmax_labels(spec);
    writeln!(s, "rho,r_s,{}", labels.join(",")).unwrap();
    for p in &curve.points {
        write!(s, "{:.6},{:.10e}", p.rho, p.value).unwrap();
        for i in 0..labels.len() {
            match p.argmax.get(i) {
                Some(x) => write!(s, ",{x:.8e}").unwrap(),
                None => s.push(','),
            }
        }
        s.push('\n');
    }
    s
}

fn read_permutations(path: &Path) -> crate::Result<Vec<Vec<usize>>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.split(|c: char| c == ',' || c.is_whitespace())
                .filter(|t| !t.is_empty())
                .map(|t| t.parse::<usize>().map_err(|e| Error::InvalidSpec(format!("bad interleaver entry '{t}': {e}"))))
                .collect()
        })
        .collect()
}

/// Outcome of one subcommand: `Ok(true)` for success, `Ok(false)` for a failed check.
fn dispatch(cmd: Cmd) -> crate::Result<bool> {
    match cmd {
        Cmd::Enumerate { spec, n, out, exact } => {
            let spec = EnsembleSpec::load(&spec)?;
            let e = ensemble_ssef(&spec, n)?;
            let prov = Provenance::new("enumerate", Some(&spec), None, json!({ "arithmetic": "exact" }));
            let mut csv = prov.csv_line();
            csv.push_str("h,s_h\n");
            for (h, x) in e.ssef.iter().enumerate() {
                writeln!(csv, "{h},{}", sig15(x)).unwrap();
            }
            emit(out.as_deref(), &csv)?;
            if let Some(out) = out.as_deref() {
                let mut body = json!({ "spec": spec.to_string(), "N": n, "transmitted": e.n });
                if exact {
                    body["exact"] = e
                        .ssef
                        .iter()
                        .map(|x| json!({ "num": x.numer().to_string(), "den": x.denom().to_string() }))
                        .collect();
                }
                emit(Some(&sidecar(out)), &json_doc(&prov, body))?;
            }
            Ok(true)
        }
        Cmd::HminBound { spec, n_list, epsilon, exact_max, out } => {
            let spec = EnsembleSpec::load(&spec)?;
            if n_list.is_empty() {
                return Err(Error::InvalidSpec("--n-list is empty".into()));
            }
            let pts = bound_sweep(&spec, &n_list, SweepOptions { epsilon, exact_max })?;
            let prov = Provenance::new("hmin-bound", Some(&spec), None, json!({ "epsilon": epsilon, "exact_max": exact_max }));
            let mut csv = prov.csv_line();
            csv.push_str("N,hBar,tail\n");
            for p in &pts {
                writeln!(csv, "{},{},{:.10e}", p.n, p.h_bar, p.tail).unwrap();
            }
            emit(out.as_deref(), &csv)?;
            if let Some(out) = out.as_deref() {
                emit(Some(&sidecar(out)), &json_doc(&prov, json!({ "points": pts })))?;
            }
            Ok(true)
        }
        Cmd::Spectral { spec, lambda, rho_min, rho_max, drho, starts, seed, out } => {
            let spec = with_lambda(&EnsembleSpec::load(&spec)?, lambda.as_ref())?;
            if !(rho_min > 0.0 && rho_max < 1.0 && rho_min <= rho_max && drho > 0.0) {
                return Err(Error::Domain("need 0 < rho-min <= rho-max < 1 and drho > 0".into()));
            }
            let opts = SolveOptions { starts, seed, ..Default::default() };
            let curve = SpectralCurve::compute(&spec, spec.lambda.value(), &rho_grid(rho_min, rho_max, drho), opts.clone())?;
            let prov = Provenance::new("spectral", Some(&spec), Some(seed), json!({ "agree": opts.agree_tol, "starts": starts }));
            emit(out.as_deref(), &(prov.csv_line() + &spectral_csv(&spec, &curve)))?;
            Ok(true)
        }
        Cmd::Rho0 { spec, lambda, starts, seed, out } => {
            let spec = with_lambda(&EnsembleSpec::load(&spec)?, lambda.as_ref())?;
            let opts = SolveOptions { starts, seed, ..Default::default() };
            let r = rho0_of(&spec, opts)?;
            let prov = Provenance::new("rho0", Some(&spec), Some(seed), rho0_tolerances(&Rho0Options::default()));
            emit(out.as_deref(), &json_doc(&prov, rho0_json(&r)))?;
            Ok(true)
        }
        Cmd::Threshold { spec, out } => {
            let spec = EnsembleSpec::load(&spec)?;
            let t = threshold(&spec)?;
            let prov = Provenance::new("threshold", Some(&spec), None, json!({ "width": t.tolerance, "success": 1e-6 }));
            let body = json!({ "pStar": t.p_star, "iterations": t.iterations, "bisections": t.bisections, "tolerance": t.tolerance });
            emit(out.as_deref(), &json_doc(&prov, body))?;
            Ok(true)
        }
        Cmd::ExitCurves { spec, p_ch, points, out } => {
            let spec = EnsembleSpec::load(&spec)?;
            if !(0.0..=1.0).contains(&p_ch) || points < 2 {
                return Err(Error::Domain("need p-ch in [0,1] and at least two points".into()));
            }
            let grid: Vec<f64> = (0..points).map(|i| i as f64 / (points - 1) as f64).collect();
            let outer = compound_outer_exit(&spec, p_ch, &grid)?;
            let inner = inner_exit(p_ch, &grid);
            let prov = Provenance::new("exit-curves", Some(&spec), None, json!({ "p_ch": p_ch, "fixed_point": 1e-12 }));
            let mut csv = prov.csv_line();
            csv.push_str("i_a,outer_i_e,inner_i_e\n");
            for i in 0..grid.len() {
                writeln!(csv, "{:.6},{:.12},{:.12}", grid[i], outer.values[i], inner.values[i]).unwrap();
            }
            emit(out.as_deref(), &csv)?;
            Ok(outer.converged)
        }
        Cmd::Simulate { spec, n, p_grid, trials, seed, fixed_interleavers, out } => {
            let spec = EnsembleSpec::load(&spec)?;
            if p_grid.is_empty() || p_grid.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::Domain("--p-grid needs values in [0,1]".into()));
            }
            let fixed = match &fixed_interleavers {
                Some(path) => {
                    if n % spec.q != 0 {
                        return Err(Error::InvalidSpec(format!("q = {} does not divide N = {n}", spec.q)));
                    }
                    Some(CodeInstance::new(&spec, n / spec.q, read_permutations(path)?, None)?)
                }
                None => None,
            };
            let rows = monte_carlo(&spec, n, &p_grid, trials, seed, fixed.as_ref())?;
            let prov = Provenance::new("simulate", Some(&spec), Some(seed), json!({ "trials": trials, "ci": "wilson 95%" }));
            let mut csv = prov.csv_line();
            csv.push_str("p,fer,fer_ci_low,fer_ci_high,avg_residual\n");
            for r in rows {
                writeln!(csv, "{},{:.8},{:.8},{:.8},{:.6}", r.p, r.fer, r.fer_ci_low, r.fer_ci_high, r.avg_residual).unwrap();
            }
            emit(out.as_deref(), &csv)?;
            Ok(true)
        }
        Cmd::OracleCheck { what, spec, n, seed, trials } => {
            let spec = EnsembleSpec::load(&spec)?;
            let (pass, detail) = oracle_check(what, &spec, n, seed, trials)?;
            let prov = Provenance::new("oracle-check", Some(&spec), Some(seed), json!({ "comparison": "exact" }));
            let body = json!({ "what": format!("{what:?}").to_lowercase(), "N": n, "pass": pass, "detail": detail });
            emit(None, &json_doc(&prov, body))?;
            Ok(pass)
        }
        Cmd::Tables { which, out_dir } => {
            let dir = out_dir
                .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("tables"));
            crate::cli::tables::run(&which, &dir)?;
            Ok(true)
        }
    }
}

fn oracle_check(what: OracleKind, spec: &EnsembleSpec, n: usize, seed: u64, trials: usize) -> crate::Result<(bool, Value)> {
    match what {
        OracleKind::Siosef => {
            if n > 12 {
                return Err(Error::Guard(format!("N = {n} above 12 for the closure oracle")));
            }
            for (kind, table) in [
                (Constituent::Accumulator, siosef_accumulator(n)),
                (Constituent::Feedforward, siosef_feedforward(n)),
            ] {
                let counts = pair_counts(&closure_support_pairs(kind, n)?, n);
                for w in 0..=n {
                    for h in 0..=n {
                        if table.entries[w][h] != num_bigint::BigUint::from(counts[w][h]) {
                            let detail = json!({ "kind": format!("{kind:?}"), "w": w, "h": h,
                                "table": table.entries[w][h].to_string(), "oracle": counts[w][h] });
                            return Ok((false, detail));
                        }
                    }
                }
            }
            Ok((true, json!({ "entries_checked": 2 * (n + 1) * (n + 1) })))
        }
        OracleKind::Decoder => {
            let inst = CodeInstance::random(spec, n, seed)?;
            let g = inst.graph();
            let mut rng = rng_stream(seed, 1);
            let mut checked = 0;
            for &p in &[0.3, 0.5, 0.7] {
                for _ in 0..trials {
                    let info: Vec<u8> = (0..inst.k).map(|_| rng.gen_range(0..2)).collect();
                    let vals = g.encode_all(&info);
                    let pat = bec_transmit(g.transmitted.len(), p, &mut rng);
                    let r = iterative_decode(&inst, &pat, &vals);
                    let m = max_stopping_set_within(&inst, &pat.erased)?;
                    if r.residual != m || !r.values_ok {
                        let detail = json!({ "p": p, "erased": pat.erased, "residual": r.residual, "max_stopping_set": m });
                        return Ok((false, detail));
                    }
                    checked += 1;
                }
            }
            Ok((true, json!({ "patterns": checked })))
        }
        OracleKind::Ssef => {
            let fast = match spec.family {
                Family::Rma => iossef_rma(spec, n)?,
                Family::Hcc => iossef_hcc(spec, n)?,
            };
            let oracle = exhaustive_ensemble_ssef(spec, n)?;
            for (h, (a, b)) in fast.ssef.iter().zip(&oracle).enumerate() {
                if a != b {
                    return Ok((false, json!({ "h": h, "enumerator": a.to_string(), "oracle": b.to_string() })));
                }
            }
            Ok((true, json!({ "sizes_checked": oracle.len() })))
        }
    }
}

/// Runs the driver on `argv` (including the program name) and returns the
/// process exit status: 0 ok, 1 failed check, 2 usage or configuration error.
pub fn run(argv: Vec<String>) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if let Some(j) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(j.max(1)).build_global() {
            eprintln!("error: cannot size the worker pool: {e}");
            return 2;
        }
    }
    match dispatch(cli.cmd) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

pub mod tables;

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn sig15_formats() {
        assert_eq!(sig15(&r(1, 3)), "3.33333333333333e-1");
        assert_eq!(sig15(&r(2, 3)), "6.66666666666667e-1");
        assert_eq!(sig15(&r(12, 1)), "1.20000000000000e1");
        assert_eq!(sig15(&r(-5, 2)), "-2.50000000000000e0");
        assert_eq!(sig15(&r(0, 1)), "0");
        assert_eq!(sig15(&r(999_999_999_999_999_9, 10)), "1.00000000000000e15");
    }

    #[test]
    fn usage_errors_exit_2() {
        let argv = |s: &str| s.split(' ').map(String::from).collect::<Vec<_>>();
        assert_eq!(run(argv("stopset enumerate --spec rma:q=3,L=2 --n 10")), 2);
        assert_eq!(run(argv("stopset nonsense")), 2);
        assert_eq!(run(argv("stopset enumerate --spec rma:q=1,L=2 --n 10")), 2);
    }
}
