//! Kinetic Monte Carlo exchange of a conserved quantity among N agents.
//!
//! Validates the equilibrium premise behind the partition-function formalism:
//! conserved pairwise exchange relaxes to the exponential (Boltzmann-Gibbs)
//! distribution with temperature equal to the mean holding, while
//! multiplicative rules with saving produce Gamma-like distributions.
//!
//! Reproducibility: the RNG is ChaCha8 seeded from a 64-bit integer; a run is
//! a single sequential stream (partner index, then the split fraction when the
//! rule needs one), so identical seed and configuration give a bitwise
//! identical trajectory.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

/// Pairwise exchange rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExchangeRule {
    /// Pool the pair and split uniformly: mᵢ' = ε(mᵢ+mⱼ).
    UniformPair,
    /// Move a fixed amount from i to j when i can afford it.
    FixedTransfer { amount: f64 },
    /// Keep a fraction s, split the rest of the pool uniformly:
    /// mᵢ' = s·mᵢ + ε(1-s)(mᵢ+mⱼ).
    MultiplicativeSave { saving: f64 },
}

/// Initial allocation of the total.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitDist {
    Equal,
    Random,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SimError {
    #[error("ensemble needs at least 2 agents, got {0}")]
    TooFewAgents(usize),
    #[error("total money must be positive and finite, got {0}")]
    InvalidTotal(f64),
    #[error("rule misconfiguration: {0}")]
    BadRule(String),
    #[error("degenerate ensemble: all holdings equal, nothing to fit")]
    Degenerate,
    #[error("histogram needs at least 10 bins, got {0}")]
    TooFewBins(usize),
}

/// N agents holding nonnegative shares of a conserved total.
#[derive(Debug, Clone)]
pub struct Ensemble {
    holdings: Vec<f64>,
    total: f64,
    rule: ExchangeRule,
    seed: u64,
    rng: ChaCha8Rng,
    steps_done: u64,
}

/// Exponential-fit diagnostics of an ensemble.
#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    /// Fitted temperature: the sample mean holding.
    pub t_hat: f64,
    /// Kolmogorov-Smirnov distance to 1 - e^{-m/T_hat}.
    pub ks_stat: f64,
    /// Hill estimate of the upper-tail exponent, when the tail admits one.
    pub tail_alpha: Option<f64>,
}

/// One histogram bin of the holdings distribution.
#[derive(Debug, Clone, Serialize)]
pub struct HistBin {
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub count: u64,
    pub density: f64,
}

pub fn init_ensemble(
    n: usize,
    total: f64,
    rule: ExchangeRule,
    seed: u64,
    init: InitDist,
) -> Result<Ensemble, SimError> {
    if n < 2 {
        return Err(SimError::TooFewAgents(n));
    }
    if !(total > 0.0) || !total.is_finite() {
        return Err(SimError::InvalidTotal(total));
    }
    match rule {
        ExchangeRule::FixedTransfer { amount } if !(amount > 0.0) => {
            return Err(SimError::BadRule(format!(
                "fixed transfer amount must be positive, got {amount}"
            )));
        }
        ExchangeRule::MultiplicativeSave { saving } if !(0.0..=1.0).contains(&saving) => {
            return Err(SimError::BadRule(format!(
                "saving fraction must lie in [0, 1], got {saving}"
            )));
        }
        _ => {}
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let holdings = match init {
        InitDist::Equal => vec![total / n as f64; n],
        InitDist::Random => {
            let raw: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
            let sum: f64 = raw.iter().sum();
            raw.into_iter().map(|u| total * u / sum).collect()
        }
    };
    Ok(Ensemble {
        holdings,
        total,
        rule,
        seed,
        rng,
        steps_done: 0,
    })
}

impl Ensemble {
    pub fn holdings(&self) -> &[f64] {
        &self.holdings
    }

    pub fn len(&self) -> usize {
        self.holdings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.holdings.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn rule(&self) -> ExchangeRule {
        self.rule
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn steps_done(&self) -> u64 {
        self.steps_done
    }

    pub fn mean(&self) -> f64 {
        self.holdings.iter().sum::<f64>() / self.holdings.len() as f64
    }

    /// Signed drift of the conserved total since initialization.
    pub fn conservation_drift(&self) -> f64 {
        self.holdings.iter().sum::<f64>() - self.total
    }

    /// Apply `n_steps` pairwise exchanges.
    pub fn run(&mut self, n_steps: u64) {
        let n = self.holdings.len();
        for _ in 0..n_steps {
            let i = self.rng.gen_range(0..n);
            let mut j = self.rng.gen_range(0..n);
            while j == i {
                j = self.rng.gen_range(0..n);
            }
            let pool = self.holdings[i] + self.holdings[j];
            match self.rule {
                ExchangeRule::UniformPair => {
                    let eps: f64 = self.rng.gen();
                    let new_i = eps * pool;
                    self.holdings[i] = new_i;
                    self.holdings[j] = pool - new_i;
                }
                ExchangeRule::FixedTransfer { amount } => {
                    if self.holdings[i] >= amount {
                        let new_i = self.holdings[i] - amount;
                        self.holdings[i] = new_i;
                        self.holdings[j] = pool - new_i;
                    }
                }
                ExchangeRule::MultiplicativeSave { saving } => {
                    let eps: f64 = self.rng.gen();
                    let new_i = saving * self.holdings[i] + eps * (1.0 - saving) * pool;
                    self.holdings[i] = new_i;
                    self.holdings[j] = pool - new_i;
                }
            }
            self.steps_done += 1;
        }
    }

    /// Fit an exponential distribution and measure the KS distance to it.
    pub fn fit_boltzmann(&self) -> Result<FitResult, SimError> {
        let n = self.holdings.len();
        let mean = self.mean();
        let mut sorted = self.holdings.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted[n - 1] - sorted[0] <= 1e-12 * mean.abs().max(1.0) {
            return Err(SimError::Degenerate);
        }
        let t_hat = mean;
        let mut ks: f64 = 0.0;
        for (i, &x) in sorted.iter().enumerate() {
            let cdf = 1.0 - (-x / t_hat).exp();
            let hi = (i + 1) as f64 / n as f64 - cdf;
            let lo = cdf - i as f64 / n as f64;
            ks = ks.max(hi.abs()).max(lo.abs());
        }
        Ok(FitResult {
            t_hat,
            ks_stat: ks,
            tail_alpha: hill_tail_alpha(&sorted),
        })
    }

    /// Histogram entropy estimate of ⟨-ln ρ⟩ with the density correction
    /// -Σ pₖ ln(pₖ/wₖ) over occupied bins.
    pub fn empirical_entropy(&self, n_bins: usize) -> Result<f64, SimError> {
        if n_bins < 10 {
            return Err(SimError::TooFewBins(n_bins));
        }
        let n = self.holdings.len() as f64;
        let max = self.holdings.iter().cloned().fold(0.0, f64::max);
        let hi = if max > 0.0 { max } else { 1.0 };
        let width = hi / n_bins as f64;
        let mut counts = vec![0u64; n_bins];
        for &m in &self.holdings {
            let k = ((m / width) as usize).min(n_bins - 1);
            counts[k] += 1;
        }
        let mut s = 0.0;
        for &c in &counts {
            if c > 0 {
                let p = c as f64 / n;
                s -= p * (p / width).ln();
            }
        }
        Ok(s)
    }

    /// Holdings histogram for reporting.
    pub fn histogram(&self, n_bins: usize) -> Result<Vec<HistBin>, SimError> {
        if n_bins < 10 {
            return Err(SimError::TooFewBins(n_bins));
        }
        let n = self.holdings.len() as f64;
        let max = self.holdings.iter().cloned().fold(0.0, f64::max);
        let hi = if max > 0.0 { max } else { 1.0 };
        let width = hi / n_bins as f64;
        let mut counts = vec![0u64; n_bins];
        for &m in &self.holdings {
            let k = ((m / width) as usize).min(n_bins - 1);
            counts[k] += 1;
        }
        Ok(counts
            .into_iter()
            .enumerate()
            .map(|(k, count)| HistBin {
                bin_lo: k as f64 * width,
                bin_hi: (k + 1) as f64 * width,
                count,
                density: count as f64 / (n * width),
            })
            .collect())
    }
}

/// Hill estimator of the Pareto tail exponent over the top 5% of the sample
/// (at least 10 points). `None` when the tail is too small or non-positive.
fn hill_tail_alpha(sorted: &[f64]) -> Option<f64> {
    let n = sorted.len();
    let k = (n / 20).max(10);
    if k + 1 >= n {
        return None;
    }
    let x_k = sorted[n - 1 - k];
    if x_k <= 0.0 {
        return None;
    }
    let sum: f64 = sorted[n - k..].iter().map(|&x| (x / x_k).ln()).sum();
    if sum <= 0.0 {
        return None;
    }
    Some(k as f64 / sum)
}

/// Sample an exact exponential distribution; the independent oracle used to
/// calibrate the KS acceptance thresholds.
pub fn exponential_oracle_sample(n: usize, t: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let u: f64 = rng.gen();
            -t * (1.0 - u).ln()
        })
        .collect()
}
