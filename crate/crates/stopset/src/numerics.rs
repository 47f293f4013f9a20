//! Exact and log-domain combinatorial primitives.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::Error;

/// Arbitrary-precision non-negative count.
pub type BigCount = BigUint;

/// Arguments this close to 0 or 1 are clamped before entropy evaluation.
pub const ENTROPY_CLAMP: f64 = 1e-12;

/// Binomial coefficient C(n, k), zero outside 0 <= k <= n.
pub fn binom(n: u64, k: i64) -> BigCount {
    if k < 0 || k as u64 > n {
        return BigUint::zero();
    }
    let k = (k as u64).min(n - k as u64);
    let mut acc = BigUint::one();
    for j in 0..k {
        acc *= n - j;
        acc /= j + 1;
    }
    acc
}

/// Same as [`binom`] but accepting signed `n`; negative `n` gives zero.
pub fn binom_i(n: i64, k: i64) -> BigCount {
    if n < 0 {
        BigUint::zero()
    } else {
        binom(n as u64, k)
    }
}

/// Natural-log binary entropy. Errors when `x` leaves [0,1] by more than the clamp.
pub fn binary_entropy(x: f64) -> Result<f64, Error> {
    if !(x >= -ENTROPY_CLAMP && x <= 1.0 + ENTROPY_CLAMP) {
        return Err(Error::Domain(format!("entropy argument {x} outside [0,1]")));
    }
    Ok(h2(x))
}

/// Unchecked binary entropy; arguments are clamped into [0,1].
#[inline]
pub fn h2(x: f64) -> f64 {
    // tiny excursions outside [0,1] come from rounding in the callers
    if x <= 0.0 || x >= 1.0 {
        return 0.0;
    }
    let y = 1.0 - x;
    -x * x.ln() - y * y.ln()
}

/// `a * H(b / a)` continued to 0 when `a` vanishes.
#[inline]
pub fn scaled_h(a: f64, b: f64) -> f64 {
    if a <= 0.0 {
        return 0.0;
    }
    a * h2(b / a)
}

/// Cached Pascal triangle of exact binomials for all n <= nmax.
pub struct BinomTable {
    rows: Vec<Vec<BigCount>>,
}

impl BinomTable {
    pub fn new(nmax: usize) -> Self {
        let mut rows: Vec<Vec<BigCount>> = Vec::with_capacity(nmax + 1);
        rows.push(vec![BigUint::one()]);
        for n in 1..=nmax {
            let prev = &rows[n - 1];
            let mut row = Vec::with_capacity(n + 1);
            row.push(BigUint::one());
            for k in 1..n {
                row.push(&prev[k - 1] + &prev[k]);
            }
            row.push(BigUint::one());
            rows.push(row);
        }
        BinomTable { rows }
    }

    pub fn nmax(&self) -> usize {
        self.rows.len() - 1
    }

    /// C(n,k), zero when out of range. Panics when `n` exceeds the cache.
    pub fn get(&self, n: i64, k: i64) -> Option<&BigCount> {
        if n < 0 || k < 0 || k > n {
            return None;
        }
        Some(&self.rows[n as usize][k as usize])
    }

    pub fn value(&self, n: i64, k: i64) -> BigCount {
        self.get(n, k).cloned().unwrap_or_default()
    }
}

/// A non-negative real stored as its natural log; `-inf` encodes zero.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct LogValue {
    pub log: f64,
}

impl LogValue {
    pub const ZERO: LogValue = LogValue { log: f64::NEG_INFINITY };
    pub const ONE: LogValue = LogValue { log: 0.0 };

    pub fn from_ln(log: f64) -> Self {
        LogValue { log }
    }

    pub fn is_zero(&self) -> bool {
        self.log == f64::NEG_INFINITY
    }

    pub fn from_count(c: &BigCount) -> Self {
        if c.is_zero() {
            return Self::ZERO;
        }
        LogValue { log: ln_biguint(c) }
    }

    pub fn from_rational(r: &BigRational) -> Self {
        if r.numer().is_zero() {
            return Self::ZERO;
        }
        let n = r.numer().magnitude();
        let d = r.denom().magnitude();
        LogValue { log: ln_biguint(n) - ln_biguint(d) }
    }

    pub fn value(&self) -> f64 {
        self.log.exp()
    }

    pub fn mul(self, o: LogValue) -> LogValue {
        if self.is_zero() || o.is_zero() {
            return Self::ZERO;
        }
        LogValue { log: self.log + o.log }
    }

    pub fn div(self, o: LogValue) -> LogValue {
        if self.is_zero() {
            return Self::ZERO;
        }
        LogValue { log: self.log - o.log }
    }

    pub fn add(self, o: LogValue) -> LogValue {
        let (hi, lo) = if self.log >= o.log { (self, o) } else { (o, self) };
        if lo.is_zero() {
            return hi;
        }
        LogValue { log: hi.log + (lo.log - hi.log).exp().ln_1p() }
    }
}

/// Stable log-sum-exp over an iterator of logs.
pub fn log_sum_exp<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    let v: Vec<f64> = it.into_iter().filter(|x| *x > f64::NEG_INFINITY).collect();
    if v.is_empty() {
        return f64::NEG_INFINITY;
    }
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Natural log of an arbitrary-size unsigned integer.
pub fn ln_biguint(c: &BigUint) -> f64 {
    let bits = c.bits();
    if bits <= 1000 {
        return c.to_f64().unwrap().ln();
    }
    let shift = bits - 900;
    let top = (c >> shift).to_f64().unwrap();
    top.ln() + shift as f64 * std::f64::consts::LN_2
}

/// Natural log of a positive rational.
pub fn ln_rational(r: &BigRational) -> f64 {
    LogValue::from_rational(r).log
}

/// Converts a rational to f64, robust to huge numerators and denominators.
pub fn rational_to_f64(r: &BigRational) -> f64 {
    if r.numer().is_zero() {
        return 0.0;
    }
    let s = if r.numer() < &BigInt::zero() { -1.0 } else { 1.0 };
    s * LogValue::from_rational(r).value()
}

/// Table of ln(n!) for n <= nmax.
pub struct LnFactorial {
    t: Vec<f64>,
}

impl LnFactorial {
    pub fn new(nmax: usize) -> Self {
        let mut t = vec![0.0; nmax + 1];
        // pairwise accumulation keeps the running sum accurate to ~1e-15 relative
        let mut acc = 0.0f64;
        let mut comp = 0.0f64;
        for (n, slot) in t.iter_mut().enumerate().skip(1) {
            let y = (n as f64).ln() - comp;
            let s = acc + y;
            comp = (s - acc) - y;
            acc = s;
            *slot = acc;
        }
        LnFactorial { t }
    }

    #[inline]
    pub fn ln_fact(&self, n: usize) -> f64 {
        self.t[n]
    }

    /// ln C(n,k), `-inf` outside the support.
    #[inline]
    pub fn ln_binom(&self, n: i64, k: i64) -> f64 {
        if n < 0 || k < 0 || k > n {
            return f64::NEG_INFINITY;
        }
        self.t[n as usize] - self.t[k as usize] - self.t[(n - k) as usize]
    }
}

/// Least common multiple of a list of positive integers.
pub fn lcm_all<'a, I: IntoIterator<Item = &'a BigUint>>(it: I) -> BigUint {
    use num_integer::Integer;
    let mut acc = BigUint::one();
    for x in it {
        if !x.is_zero() {
            acc = acc.lcm(x);
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_binomials() {
        assert_eq!(binom(5, 2), BigUint::from(10u32));
        assert_eq!(binom(7, 0), BigUint::from(1u32));
        assert_eq!(binom(3, 5), BigUint::zero());
        assert_eq!(binom(3, -1), BigUint::zero());
    }

    #[test]
    fn entropy_points() {
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0).unwrap(), 0.0);
        assert!((binary_entropy(0.5).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(binary_entropy(1.1).is_err());
        assert!(binary_entropy(-1e-13).is_ok());
    }

    #[test]
    fn table_matches_direct() {
        let t = BinomTable::new(60);
        for n in 0..=60i64 {
            for k in -1..=61i64 {
                assert_eq!(t.value(n, k), binom_i(n, k));
            }
        }
    }

    #[test]
    fn ln_factorial_accuracy() {
        let lf = LnFactorial::new(3000);
        for &(n, k) in &[(10i64, 3i64), (500, 250), (2000, 37), (3000, 1500)] {
            let exact = LogValue::from_count(&binom(n as u64, k)).log;
            let approx = lf.ln_binom(n, k);
            assert!((exact - approx).abs() <= 1e-12 * exact.abs().max(1.0), "{n} {k}");
        }
    }

    #[test]
    fn logvalue_addition() {
        let a = LogValue::from_ln(2.0f64.ln());
        let b = LogValue::from_ln(3.0f64.ln());
        assert!((a.add(b).value() - 5.0).abs() < 1e-14);
        assert_eq!(a.add(LogValue::ZERO), a);
        assert!(LogValue::ZERO.mul(a).is_zero());
    }
}
