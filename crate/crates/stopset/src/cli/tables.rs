//! Batch regeneration of the growth-rate and threshold tables and the curve
//! data behind the spectral-shape and finite-length figures.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde_json::{json, Value};

use super::{emit, json_doc, rho0_of, rho0_tolerances, Provenance};
use crate::enumerators::{EnsembleSpec, Frac};
use crate::exit_analysis::threshold;
use crate::finite_bounds::{bound_sweep, SweepOptions};
use crate::spectral::{rho_grid, Rho0Options, SolveOptions, SpectralCurve};
use crate::{Error, Result};

/// Nominal rates (as printed) and their puncturing fractions for q = 3.
pub const RATES_Q3: &[(&str, u64, u64)] = &[
    ("1/3", 1, 1),
    ("0.35", 20, 21),
    ("0.37", 100, 111),
    ("0.38", 50, 57),
    ("2/5", 5, 6),
    ("5/12", 4, 5),
    ("0.43", 100, 129),
    ("4/9", 3, 4),
    ("1/2", 2, 3),
    ("0.54", 50, 81),
    ("0.55", 20, 33),
];

/// Same for q = 4.
pub const RATES_Q4: &[(&str, u64, u64)] = &[
    ("1/4", 1, 1),
    ("0.28", 25, 28),
    ("0.29", 25, 29),
    ("3/10", 5, 6),
    ("5/16", 4, 5),
    ("0.33", 25, 33),
    ("1/3", 3, 4),
    ("11/30", 15, 22),
    ("2/5", 5, 8),
    ("0.41", 25, 41),
    ("0.42", 25, 42),
    ("0.43", 25, 43),
];

const ALL: &[&str] = &["I", "II", "III", "IV", "V", "fig6", "fig7", "fig8"];

pub fn run(which: &[String], dir: &Path) -> Result<()> {
    let mut wanted: Vec<&str> = Vec::new();
    for w in which {
        if w == "all" {
            wanted.extend(ALL);
        } else if let Some(k) = ALL.iter().find(|k| k.eq_ignore_ascii_case(w)) {
            wanted.push(k);
        } else {
            return Err(Error::InvalidSpec(format!("unknown table '{w}', expected one of {ALL:?} or all")));
        }
    }
    wanted.dedup();
    let mut files = Vec::new();
    for w in wanted {
        let (name, text) = match w {
            "I" => ("table_I.csv", table_i()?),
            "II" => ("table_II.csv", punctured_table(3, RATES_Q3)?),
            "III" => ("table_III.csv", punctured_table(4, RATES_Q4)?),
            "IV" => ("table_IV.csv", table_iv()?),
            "V" => ("table_V.csv", table_v()?),
            "fig6" => ("fig6.csv", fig_curves(&[2, 3, 4, 5, 6].map(|q| EnsembleSpec::rma(q, 2)))?),
            "fig7" => ("fig7.csv", fig7()?),
            _ => ("fig8.csv", fig_curves(&[1, 2, 3, 4].map(|t| EnsembleSpec::hcc(t, 4)))?),
        };
        emit(Some(&dir.join(name)), &text)?;
        files.push(json!({ "name": w, "file": name }));
    }
    let prov = Provenance::new("tables", None, Some(SolveOptions::default().seed), rho0_tolerances(&Rho0Options::default()));
    emit(Some(&dir.join("manifest.json")), &json_doc(&prov, json!({ "files": Value::Array(files) })))
}

fn rho0_cell(spec: &EnsembleSpec) -> Result<String> {
    Ok(rho0_of(spec, SolveOptions::default())?.display())
}

fn header(what: &str, spec: Option<&EnsembleSpec>) -> String {
    Provenance::new(&format!("tables {what}"), spec, Some(SolveOptions::default().seed), rho0_tolerances(&Rho0Options::default()))
        .csv_line()
}

pub fn table_i() -> Result<String> {
    let cells: Vec<(usize, usize)> = [2, 3, 4].iter().flat_map(|&l| (2..=6).map(move |q| (q, l))).collect();
    let vals: Vec<Result<String>> = cells.par_iter().map(|&(q, l)| rho0_cell(&EnsembleSpec::rma(q, l))).collect();
    let mut s = header("I", None);
    s.push_str("q,L,rho0\n");
    for ((q, l), v) in cells.iter().zip(vals) {
        writeln!(s, "{q},{l},{}", v?).unwrap();
    }
    Ok(s)
}

pub fn punctured_table(q: usize, rates: &[(&str, u64, u64)]) -> Result<String> {
    let cells: Vec<(usize, usize)> = (2..=4).flat_map(|l| (0..rates.len()).map(move |i| (l, i))).collect();
    let vals: Vec<Result<String>> = cells
        .par_iter()
        .map(|&(l, i)| {
            let (_, a, b) = rates[i];
            rho0_cell(&EnsembleSpec::rma_punctured(q, l, Frac::new(a, b)?))
        })
        .collect();
    let mut s = header(if q == 3 { "II" } else { "III" }, None);
    s.push_str("q,L,rate,lambda,rho0\n");
    for ((l, i), v) in cells.iter().zip(vals) {
        let (r, a, b) = rates[*i];
        writeln!(s, "{q},{l},{r},{a}/{b},{}", v?).unwrap();
    }
    Ok(s)
}

pub fn table_iv() -> Result<String> {
    let cells: Vec<(u8, usize)> = [3, 4].iter().flat_map(|&q| (1..=4).map(move |t| (t, q))).collect();
    let vals: Vec<Result<String>> = cells.par_iter().map(|&(t, q)| rho0_cell(&EnsembleSpec::hcc(t, q))).collect();
    let mut s = header("IV", None);
    s.push_str("type,q,rho0\n");
    for ((t, q), v) in cells.iter().zip(vals) {
        writeln!(s, "{t},{q},{}", v?).unwrap();
    }
    Ok(s)
}

pub fn table_v() -> Result<String> {
    let mut specs: Vec<(String, EnsembleSpec)> = Vec::new();
    for q in 3..=6 {
        specs.push(("type-1/RAA".into(), EnsembleSpec::rma(q, 2)));
        for t in 2..=4 {
            specs.push((format!("type-{t}"), EnsembleSpec::hcc(t, q)));
        }
        specs.push(("RAAA".into(), EnsembleSpec::rma(q, 3)));
        specs.push(("RAAAA".into(), EnsembleSpec::rma(q, 4)));
    }
    let mut s = header("V", None);
    s.push_str("ensemble,q,p_star\n");
    for (name, spec) in specs {
        writeln!(s, "{name},{},{:.4}", spec.q, threshold(&spec)?.p_star).unwrap();
    }
    Ok(s)
}

fn fig_curves(specs: &[EnsembleSpec]) -> Result<String> {
    let grid = rho_grid(0.0025, 0.5, 0.0025);
    let mut s = header("curves", None);
    s.push_str("spec,rho,r_s\n");
    for spec in specs {
        let c = SpectralCurve::compute(spec, 1.0, &grid, SolveOptions::default())?;
        for p in &c.points {
            writeln!(s, "{spec},{:.4},{:.10e}", p.rho, p.value).unwrap();
        }
    }
    Ok(s)
}

/// Bound curves for q = 4: L = 2, 3, 4 plain and L = 2, 3 punctured to 3/4.
pub fn fig7() -> Result<String> {
    let ns: Vec<usize> = (1..=10).map(|k| 100 * k).collect();
    let mut specs: Vec<EnsembleSpec> = (2..=4).map(|l| EnsembleSpec::rma(4, l)).collect();
    for l in 2..=3 {
        specs.push(EnsembleSpec::rma_punctured(4, l, Frac::new(3, 4)?));
    }
    let mut s = header("fig7", None);
    s.push_str("spec,N,hBar,tail\n");
    for spec in &specs {
        for p in bound_sweep(spec, &ns, SweepOptions::default())? {
            writeln!(s, "{spec},{},{},{:.10e}", p.n, p.h_bar, p.tail).unwrap();
        }
    }
    Ok(s)
}
