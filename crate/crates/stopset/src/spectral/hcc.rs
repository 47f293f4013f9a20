//! Growth-rate objective for hybrid concatenated codes.
//!
//! Normalised per information bit: `q` parallel branches see the same
//! repeated information weight `alpha`; branches outside the channel set feed
//! an inner accumulator whose output weight is whatever the channel-set
//! branches leave over from `q * rho`.

use super::acc::phi_acc;
use super::ascent::Problem;
use crate::enumerators::{Constituent, EnsembleSpec};
use crate::numerics::h2;
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct HccShape {
    pub q: usize,
    pub kinds: Vec<Constituent>,
    pub to_channel: Vec<bool>,
}

impl HccShape {
    pub fn from_spec(spec: &EnsembleSpec) -> Result<HccShape> {
        spec.validate()?;
        if spec.family != crate::Family::Hcc {
            return Err(Error::InvalidSpec("expected an hcc ensemble".into()));
        }
        let kinds = spec.hcc_branches();
        let to_channel = (0..spec.q).map(|i| spec.to_channel(i)).collect();
        Ok(HccShape { q: spec.q, kinds, to_channel })
    }

    fn q_in(&self) -> usize {
        self.to_channel.iter().filter(|&&c| !c).count()
    }

    /// Objective with per-branch output fractions (ignored for identity branches).
    pub fn value(&self, rho: f64, alpha: f64, betas: &[f64]) -> f64 {
        let q = self.q as f64;
        let q_in = self.q_in() as f64;
        let mut outer = -(q - 1.0) * h2(alpha);
        let mut chan = 0.0;
        let mut inner = 0.0;
        for (i, kind) in self.kinds.iter().enumerate() {
            let (b, phi) = match kind {
                Constituent::Accumulator => (betas[i], phi_acc(alpha, betas[i]).map(|x| x.0)),
                Constituent::Feedforward => (betas[i], phi_acc(betas[i], alpha).map(|x| x.0)),
                Constituent::Identity => (alpha, Some(h2(alpha))),
            };
            match phi {
                Some(v) => outer += v,
                None => return f64::NEG_INFINITY,
            }
            if self.to_channel[i] {
                chan += b;
            } else {
                inner += b;
            }
        }
        let rho_in = (q * rho - chan) / q_in;
        let beta_p = inner / q_in;
        if !(-1e-15..=1.0 + 1e-15).contains(&rho_in) {
            return f64::NEG_INFINITY;
        }
        let rho_in = rho_in.clamp(0.0, 1.0);
        let beta_p = beta_p.clamp(0.0, 1.0);
        match phi_acc(beta_p, rho_in) {
            Some((v, _)) => outer / q + q_in / q * (v - h2(beta_p)),
            None => f64::NEG_INFINITY,
        }
    }

    /// Linear constraints over `x = [alpha, beta_0, .., beta_{q-1}]` where
    /// each branch output is looked up through `index` (identity branches map
    /// to alpha).
    fn constraints(&self, rho: f64, index: &[usize], dim: usize) -> Vec<(Vec<f64>, f64)> {
        let q = self.q as f64;
        let q_in = self.q_in() as f64;
        let mut cons = Vec::new();
        for (i, kind) in self.kinds.iter().enumerate() {
            let mut a = vec![0.0; dim];
            match kind {
                Constituent::Accumulator => {
                    a[0] += 1.0;
                    a[index[i]] -= 2.0;
                }
                Constituent::Feedforward => {
                    a[index[i]] += 1.0;
                    a[0] -= 2.0;
                }
                Constituent::Identity => continue,
            }
            cons.push((a, 0.0));
        }
        let mut chan = vec![0.0; dim];
        let mut both = vec![0.0; dim];
        for i in 0..self.q {
            if self.to_channel[i] {
                chan[index[i]] += 1.0;
                both[index[i]] += 2.0;
            } else {
                both[index[i]] += 1.0;
            }
        }
        if chan.iter().any(|&c| c != 0.0) {
            cons.push((chan.clone(), q * rho));
            cons.push((chan.iter().map(|c| -c).collect(), q_in - q * rho));
        }
        cons.push((both, 2.0 * q * rho));
        cons
    }

    /// Fully asymmetric search space: alpha plus one output per non-identity branch.
    pub fn asymmetric(&self, rho: f64) -> (Problem, Vec<usize>) {
        let mut index = vec![0; self.q];
        let mut dim = 1;
        for (i, k) in self.kinds.iter().enumerate() {
            if *k != Constituent::Identity {
                index[i] = dim;
                dim += 1;
            }
        }
        (Problem::new(dim, self.constraints(rho, &index, dim)), index)
    }

    /// Reduced search space: branches of the same kind and destination share
    /// one output fraction.
    pub fn symmetric(&self, rho: f64) -> (Problem, Vec<usize>) {
        let mut index = vec![0; self.q];
        let mut groups: Vec<(Constituent, bool)> = Vec::new();
        for (i, k) in self.kinds.iter().enumerate() {
            if *k == Constituent::Identity {
                continue;
            }
            let key = (*k, self.to_channel[i]);
            let g = match groups.iter().position(|x| *x == key) {
                Some(g) => g,
                None => {
                    groups.push(key);
                    groups.len() - 1
                }
            };
            index[i] = 1 + g;
        }
        let dim = 1 + groups.len();
        (Problem::new(dim, self.constraints(rho, &index, dim)), index)
    }

    /// Evaluate with the variable layout of [`HccShape::asymmetric`] or
    /// [`HccShape::symmetric`].
    pub fn value_at(&self, rho: f64, index: &[usize], x: &[f64]) -> f64 {
        let betas: Vec<f64> = index.iter().map(|&j| x[j]).collect();
        self.value(rho, x[0], &betas)
    }
}
