//! Constituent support enumerators (SIOSEFs) and ensemble-average stopping-set
//! size enumerators assembled through uniform interleavers.
//!
//! A SIOSEF entry `a[w][h]` counts subcode classes of a constituent code with
//! input support size `w` and output support size `h`. Ensemble averages are
//! obtained by pushing a vector over support sizes through each constituent,
//! dividing by `C(n, h)` at every interleaver.

mod spec;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Zero};
use rayon::prelude::*;

use crate::numerics::{lcm_all, log_sum_exp, BigCount, BinomTable, LnFactorial};
use crate::{Error, Result};

pub use spec::{Constituent, EnsembleSpec, Family, Frac};

/// Exact 2-D support table, optionally over a common denominator
/// (only puncturing produces a denominator other than one).
#[derive(Clone, Debug, PartialEq)]
pub struct SupportTable {
    pub input_len: usize,
    pub output_len: usize,
    pub entries: Vec<Vec<BigCount>>,
    pub denom: BigCount,
}

impl SupportTable {
    fn zeros(input_len: usize, output_len: usize) -> Self {
        SupportTable {
            input_len,
            output_len,
            entries: vec![vec![BigUint::zero(); output_len + 1]; input_len + 1],
            denom: BigUint::one(),
        }
    }

    pub fn get(&self, w: usize, h: usize) -> BigRational {
        BigRational::new(BigInt::from(self.entries[w][h].clone()), BigInt::from(self.denom.clone()))
    }

    pub fn transpose(&self) -> SupportTable {
        let mut t = SupportTable::zeros(self.output_len, self.input_len);
        for (w, row) in self.entries.iter().enumerate() {
            for (h, v) in row.iter().enumerate() {
                t.entries[h][w] = v.clone();
            }
        }
        t.denom = self.denom.clone();
        t
    }
}

/// Terminated accumulator: `a[w][h] = sum_d C(N-h,d) C(h-1,d-1) C(h-d,w-2d)`.
pub fn siosef_accumulator(n: usize) -> SupportTable {
    siosef_accumulator_with(&BinomTable::new(n), n)
}

pub fn siosef_accumulator_with(bt: &BinomTable, n: usize) -> SupportTable {
    let mut t = SupportTable::zeros(n, n);
    t.entries[0][0] = BigUint::one();
    let cols: Vec<Vec<BigUint>> = (0..=n)
        .into_par_iter()
        .map(|h| {
            let mut col = vec![BigUint::zero(); n + 1];
            let (hi, ni) = (h as i64, n as i64);
            for d in 1..=hi.min(ni - hi) {
                let c = match (bt.get(ni - hi, d), bt.get(hi - 1, d - 1)) {
                    (Some(a), Some(b)) => a * b,
                    _ => continue,
                };
                // w - 2d ranges over 0..=h-d
                for j in 0..=(hi - d) {
                    let w = (2 * d + j) as usize;
                    if w > n {
                        break;
                    }
                    col[w] += &c * bt.get(hi - d, j).unwrap();
                }
            }
            col
        })
        .collect();
    for (h, col) in cols.into_iter().enumerate() {
        for (w, v) in col.into_iter().enumerate() {
            if !v.is_zero() {
                t.entries[w][h] = v;
            }
        }
    }
    t
}

/// Feedforward 1+D code: transpose of the accumulator table.
pub fn siosef_feedforward(n: usize) -> SupportTable {
    siosef_accumulator(n).transpose()
}

/// Repetition code of K symbols repeated q times: `a[w][qw] = C(K,w)`.
pub fn siosef_repetition(k: usize, q: usize) -> SupportTable {
    let bt = BinomTable::new(k);
    let mut t = SupportTable::zeros(k, q * k);
    for w in 0..=k {
        t.entries[w][q * w] = bt.value(k as i64, w as i64);
    }
    t
}

pub fn siosef_identity(k: usize) -> SupportTable {
    let bt = BinomTable::new(k);
    let mut t = SupportTable::zeros(k, k);
    for w in 0..=k {
        t.entries[w][w] = bt.value(k as i64, w as i64);
    }
    t
}

pub fn siosef_constituent(c: Constituent, k: usize) -> SupportTable {
    match c {
        Constituent::Accumulator => siosef_accumulator(k),
        Constituent::Feedforward => siosef_feedforward(k),
        Constituent::Identity => siosef_identity(k),
    }
}

/// Random puncturing keeping `lambda * N` output positions.
pub fn puncture_siosef(table: &SupportTable, lambda: Frac) -> Result<SupportTable> {
    let n = table.output_len;
    let m = lambda
        .times(n)
        .ok_or_else(|| Error::InvalidSpec(format!("lambda*N = {lambda}*{n} is not an integer")))?;
    if lambda.is_one() {
        return Ok(table.clone());
    }
    let bt = BinomTable::new(n);
    let mut out = SupportTable::zeros(table.input_len, m);
    for (w, row) in table.entries.iter().enumerate() {
        for (h, a) in row.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for hp in 0..=h.min(m) {
                if let (Some(x), Some(y)) = (bt.get(h as i64, hp as i64), bt.get((n - h) as i64, (m - hp) as i64)) {
                    out.entries[w][hp] += a * x * y;
                }
            }
        }
    }
    out.denom = &table.denom * bt.value(n as i64, m as i64);
    Ok(out)
}

/// Vector of non-negative rationals over a common denominator.
#[derive(Clone, Debug)]
pub struct ScaledVec {
    pub num: Vec<BigCount>,
    pub den: BigCount,
}

impl ScaledVec {
    pub fn to_rationals(&self) -> Vec<BigRational> {
        let d = BigInt::from(self.den.clone());
        self.num.iter().map(|x| BigRational::new(BigInt::from(x.clone()), d.clone())).collect()
    }
}

/// One uniform-interleaver stage: `v'[h'] = sum_h v[h] a[h][h'] / C(n,h)`.
pub fn interleave_stage(v: &ScaledVec, table: &SupportTable, bt: &BinomTable) -> ScaledVec {
    let n = table.input_len;
    let nz: Vec<usize> = (0..v.num.len().min(n + 1)).filter(|&h| !v.num[h].is_zero()).collect();
    let l = lcm_all(nz.iter().map(|&h| bt.get(n as i64, h as i64).unwrap()));
    let scaled: Vec<(usize, BigUint)> =
        nz.iter().map(|&h| (h, &v.num[h] * (&l / bt.get(n as i64, h as i64).unwrap()))).collect();
    let num: Vec<BigUint> = (0..=table.output_len)
        .into_par_iter()
        .map(|hp| {
            let mut acc = BigUint::zero();
            for (h, s) in &scaled {
                let a = &table.entries[*h][hp];
                if !a.is_zero() {
                    acc += s * a;
                }
            }
            acc
        })
        .collect();
    ScaledVec { num, den: &v.den * l * &table.denom }
}

/// Random puncturing applied to a support-size distribution of length n.
pub fn puncture_vec(v: &ScaledVec, n: usize, m: usize, bt: &BinomTable) -> ScaledVec {
    let mut num = vec![BigUint::zero(); m + 1];
    for (h, x) in v.num.iter().enumerate() {
        if x.is_zero() {
            continue;
        }
        for (hp, slot) in num.iter_mut().enumerate().take(h.min(m) + 1) {
            if let (Some(a), Some(b)) = (bt.get(h as i64, hp as i64), bt.get((n - h) as i64, (m - hp) as i64)) {
                *slot += x * a * b;
            }
        }
    }
    ScaledVec { num, den: &v.den * bt.value(n as i64, m as i64) }
}

/// Ensemble-average enumerators of one ensemble at one block length.
#[derive(Clone, Debug)]
pub struct EnsembleEnumerator {
    pub spec: EnsembleSpec,
    /// transmitted block length (after puncturing)
    pub n: usize,
    /// `iossef[w][h]`; absent when only the SSEF was computed
    pub iossef: Option<Vec<Vec<BigRational>>>,
    pub ssef: Vec<BigRational>,
}

/// Plain stopping-set size enumerator `s[h] = sum_w s[w][h]`.
pub fn ssef(e: &EnsembleEnumerator) -> Vec<BigRational> {
    match &e.iossef {
        Some(t) => {
            let mut out = vec![BigRational::zero(); e.n + 1];
            for row in t {
                for (h, x) in row.iter().enumerate() {
                    out[h] += x;
                }
            }
            out
        }
        None => e.ssef.clone(),
    }
}

fn check_rma(spec: &EnsembleSpec, n: usize) -> Result<(usize, usize)> {
    spec.validate()?;
    if spec.family != Family::Rma {
        return Err(Error::InvalidSpec("expected an RMA ensemble".into()));
    }
    if n == 0 || n % spec.q != 0 {
        return Err(Error::InvalidSpec(format!("q = {} does not divide N = {n}", spec.q)));
    }
    let m = spec
        .lambda
        .times(n)
        .ok_or_else(|| Error::InvalidSpec(format!("lambda*N = {}*{n} is not an integer", spec.lambda)))?;
    Ok((n / spec.q, m))
}

/// Full input-output enumerator of an RMA ensemble (Eq. 1 as sequential stages).
pub fn iossef_rma(spec: &EnsembleSpec, n: usize) -> Result<EnsembleEnumerator> {
    let (k, m) = check_rma(spec, n)?;
    let bt = BinomTable::new(n);
    let acc = siosef_accumulator_with(&bt, n);
    let rows: Vec<Vec<BigRational>> = (0..=k)
        .map(|w| rma_row(spec, &acc, &bt, k, n, m, w).to_rationals())
        .collect();
    let mut e = EnsembleEnumerator { spec: spec.clone(), n: m, iossef: Some(rows), ssef: vec![] };
    e.ssef = ssef(&e);
    Ok(e)
}

fn rma_row(spec: &EnsembleSpec, acc: &SupportTable, bt: &BinomTable, k: usize, n: usize, m: usize, w: usize) -> ScaledVec {
    let qw = spec.q * w;
    let ckw = bt.value(k as i64, w as i64);
    let mut v = ScaledVec { num: acc.entries[qw].iter().map(|a| a * &ckw).collect(), den: bt.value(n as i64, qw as i64) };
    for _ in 1..spec.l {
        v = interleave_stage(&v, acc, bt);
    }
    if m != n {
        v = puncture_vec(&v, n, m, bt);
    }
    v
}

/// SSEF-only fast path for RMA: the input weight is summed out before the
/// accumulator stages, so the cost is O(L N^2) instead of O(K L N^2).
pub fn ssef_rma(spec: &EnsembleSpec, n: usize) -> Result<EnsembleEnumerator> {
    let (k, m) = check_rma(spec, n)?;
    let bt = BinomTable::new(n);
    let acc = siosef_accumulator_with(&bt, n);
    let start = ScaledVec {
        num: (0..=n).map(|qw| if qw % spec.q == 0 { bt.value(k as i64, (qw / spec.q) as i64) } else { BigUint::zero() }).collect(),
        den: BigUint::one(),
    };
    let mut v = start;
    for _ in 0..spec.l {
        v = interleave_stage(&v, &acc, &bt);
    }
    if m != n {
        v = puncture_vec(&v, n, m, &bt);
    }
    Ok(EnsembleEnumerator { spec: spec.clone(), n: m, iossef: None, ssef: v.to_rationals() })
}

/// Full input-output enumerator of an HCC ensemble (Eq. 2).
///
/// Branch `l` has length K = N/q. Branches outside the channel set feed one
/// inner accumulator of length `M = N` (types 1, 2) or `M = (q-1)K` (types 3, 4).
pub fn iossef_hcc(spec: &EnsembleSpec, n: usize) -> Result<EnsembleEnumerator> {
    spec.validate()?;
    if spec.family != Family::Hcc {
        return Err(Error::InvalidSpec("expected an HCC ensemble".into()));
    }
    if n == 0 || n % spec.q != 0 {
        return Err(Error::InvalidSpec(format!("q = {} does not divide N = {n}", spec.q)));
    }
    let q = spec.q;
    let k = n / q;
    let kinds = spec.hcc_branches();
    let inner_len = (0..q).filter(|&l| !spec.to_channel(l)).count() * k;
    let bt = BinomTable::new(n);
    let inner = siosef_accumulator_with(&bt, inner_len);
    let tables: Vec<SupportTable> = kinds.iter().map(|&c| siosef_constituent(c, k)).collect();

    let rows: Vec<Vec<BigRational>> = (0..=k)
        .into_par_iter()
        .map(|w| {
            // integer distributions over the summed output sizes
            let mut inner_in = vec![BigUint::one()];
            let mut direct = vec![BigUint::one()];
            for (l, t) in tables.iter().enumerate() {
                let target = if spec.to_channel(l) { &mut direct } else { &mut inner_in };
                *target = convolve(target, &t.entries[w]);
            }
            let p = ScaledVec { num: inner_in, den: BigUint::one() };
            let out = interleave_stage(&p, &inner, &bt);
            let mut num = vec![BigUint::zero(); n + 1];
            for (hq, a) in direct.iter().enumerate() {
                if a.is_zero() {
                    continue;
                }
                for (hi, b) in out.num.iter().enumerate() {
                    if hq + hi <= n && !b.is_zero() {
                        num[hq + hi] += a * b;
                    }
                }
            }
            let den = &out.den * bt.value(k as i64, w as i64).pow((q - 1) as u32);
            ScaledVec { num, den }.to_rationals()
        })
        .collect();
    let mut e = EnsembleEnumerator { spec: spec.clone(), n, iossef: Some(rows), ssef: vec![] };
    e.ssef = ssef(&e);
    Ok(e)
}

fn convolve(a: &[BigUint], b: &[BigUint]) -> Vec<BigUint> {
    let mut out = vec![BigUint::zero(); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        if x.is_zero() {
            continue;
        }
        for (j, y) in b.iter().enumerate() {
            if !y.is_zero() {
                out[i + j] += x * y;
            }
        }
    }
    out
}

/// Dispatches on the family; RMA uses the SSEF-only fast path.
pub fn ensemble_ssef(spec: &EnsembleSpec, n: usize) -> Result<EnsembleEnumerator> {
    match spec.family {
        Family::Rma => ssef_rma(spec, n),
        Family::Hcc => iossef_hcc(spec, n),
    }
}

/// Log-domain accumulator table (`-inf` marks zero entries).
#[derive(Clone, Debug)]
pub struct LogSupportTable {
    pub n: usize,
    pub entries: Vec<Vec<f64>>,
}

pub fn log_siosef_accumulator(n: usize, lf: &LnFactorial) -> LogSupportTable {
    let ni = n as i64;
    let cols: Vec<Vec<f64>> = (0..=n)
        .into_par_iter()
        .map(|h| {
            let hi = h as i64;
            let mut col = vec![f64::NEG_INFINITY; n + 1];
            if h == 0 {
                col[0] = 0.0;
                return col;
            }
            let dmax = hi.min(ni - hi);
            let pre: Vec<f64> = (0..=dmax.max(0))
                .map(|d| if d == 0 { f64::NEG_INFINITY } else { lf.ln_binom(ni - hi, d) + lf.ln_binom(hi - 1, d - 1) })
                .collect();
            for (w, slot) in col.iter_mut().enumerate().skip(2) {
                let wi = w as i64;
                let lo = 1.max(wi - hi);
                let hi_d = dmax.min(wi / 2);
                if lo > hi_d {
                    continue;
                }
                *slot = log_sum_exp((lo..=hi_d).map(|d| pre[d as usize] + lf.ln_binom(hi - d, wi - 2 * d)));
            }
            col
        })
        .collect();
    let mut entries = vec![vec![f64::NEG_INFINITY; n + 1]; n + 1];
    for (h, col) in cols.into_iter().enumerate() {
        for (w, v) in col.into_iter().enumerate() {
            entries[w][h] = v;
        }
    }
    LogSupportTable { n, entries }
}

/// Log-domain SSEF of an RMA ensemble, for block lengths where exact
/// arithmetic is too slow.
#[derive(Clone, Debug)]
pub struct LogEnumerator {
    pub spec: EnsembleSpec,
    pub n: usize,
    /// natural logs of `s[h]`
    pub ln_ssef: Vec<f64>,
}

pub fn log_ssef_rma(spec: &EnsembleSpec, n: usize) -> Result<LogEnumerator> {
    let (k, m) = check_rma(spec, n)?;
    let lf = LnFactorial::new(n + 1);
    let acc = log_siosef_accumulator(n, &lf);
    let ni = n as i64;
    let mut v: Vec<f64> = (0..=n)
        .map(|qw| if qw % spec.q == 0 { lf.ln_binom(k as i64, (qw / spec.q) as i64) } else { f64::NEG_INFINITY })
        .collect();
    for _ in 0..spec.l {
        let scaled: Vec<(usize, f64)> = v
            .iter()
            .enumerate()
            .filter(|(_, x)| **x > f64::NEG_INFINITY)
            .map(|(h, x)| (h, x - lf.ln_binom(ni, h as i64)))
            .collect();
        v = (0..=n)
            .into_par_iter()
            .map(|hp| log_sum_exp(scaled.iter().map(|(h, x)| x + acc.entries[*h][hp])))
            .collect();
    }
    if m != n {
        let c = lf.ln_binom(ni, m as i64);
        v = (0..=m)
            .map(|hp| {
                log_sum_exp(v.iter().enumerate().map(|(h, x)| {
                    x + lf.ln_binom(h as i64, hp as i64) + lf.ln_binom(ni - h as i64, (m - hp) as i64)
                })) - c
            })
            .collect();
    }
    Ok(LogEnumerator { spec: spec.clone(), n: m, ln_ssef: v })
}
