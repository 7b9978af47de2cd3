//! Simulated selector regret on noisy validation landscapes.
//!
//! Each trial draws a smooth test-error surface over a lattice, observes it
//! through few-sample validation noise plus one sharp spurious dip, selects a
//! configuration with each neighborhood size and records the regret.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::hpograph::{argmin_finite, DimKind, Lattice, NeighborhoodTable};
use crate::linalg::{mean, std_sample};
use crate::runner::TaskRunner;
use crate::seed;
use crate::stats::t_quantile_upper;
use crate::{Error, Result};

/// Generator of ground-truth and validation landscapes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeSpec {
    pub shape: Vec<usize>,
    pub kinds: Vec<DimKind>,
    /// Height of the quadratic basin over the unit cube of ordinal levels.
    pub curvature: f64,
    /// Upper bound of the per-level offsets of categorical dimensions.
    pub categorical_spread: f64,
    /// Standard deviation of the independent validation noise.
    pub noise_std: f64,
    /// Depth of the spurious single-configuration validation dip.
    pub spike_depth: f64,
}

impl Default for LandscapeSpec {
    fn default() -> Self {
        Self {
            shape: vec![5, 5, 3],
            kinds: vec![DimKind::Ordinal, DimKind::Ordinal, DimKind::Categorical],
            curvature: 1.0,
            categorical_spread: 0.2,
            noise_std: 0.05,
            spike_depth: 0.4,
        }
    }
}

/// One trial's landscapes.
#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub test: Vec<f64>,
    pub validation: Vec<f64>,
}

impl LandscapeSpec {
    pub fn lattice(&self) -> Result<Lattice> {
        Lattice::new(self.shape.clone(), self.kinds.clone())
    }

    /// Draws the trial seeded by `seed_value`.
    pub fn sample(&self, lat: &Lattice, seed_value: u64) -> Trial {
        let mut rng = seed::rng(seed_value);
        let centers: Vec<f64> = self.shape.iter().map(|_| rng.random::<f64>()).collect();
        let offsets: Vec<Vec<f64>> = self
            .shape
            .iter()
            .map(|&n| (0..n).map(|_| self.categorical_spread * rng.random::<f64>()).collect())
            .collect();
        let test: Vec<f64> = (0..lat.len())
            .map(|i| {
                let idx = lat.multi_index(i).expect("in range");
                idx.iter()
                    .enumerate()
                    .map(|(d, &l)| match self.kinds[d] {
                        DimKind::Ordinal => {
                            let u = if self.shape[d] > 1 { l as f64 / (self.shape[d] - 1) as f64 } else { 0.0 };
                            self.curvature * (u - centers[d]) * (u - centers[d])
                        }
                        DimKind::Categorical => offsets[d][l],
                    })
                    .sum()
            })
            .collect();
        let mut validation: Vec<f64> = test
            .iter()
            .map(|&t| {
                let z: f64 = StandardNormal.sample(&mut rng);
                t + self.noise_std * z
            })
            .collect();
        if self.spike_depth != 0.0 {
            let s = rng.random_range(0..lat.len());
            validation[s] -= self.spike_depth;
        }
        Trial { test, validation }
    }
}

/// Per-k regret statistics over all trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretTable {
    pub k_values: Vec<usize>,
    pub mean_regret: Vec<f64>,
    /// Two-sided 95% t-interval of the mean regret.
    pub ci: Vec<(f64, f64)>,
    /// Mean over trials of `min_i Ṽ_i`.
    pub mean_min_smoothed: Vec<f64>,
    /// `regrets[k][trial]`, for paired comparisons.
    pub regrets: Vec<Vec<f64>>,
}

/// Runs `trials` seeded trials and selects with every `k` in `k_values`.
pub fn selector_regret_sim<R: TaskRunner>(
    spec: &LandscapeSpec,
    trials: usize,
    k_values: &[usize],
    seed_value: u64,
    runner: &R,
) -> Result<RegretTable> {
    if trials == 0 {
        return Err(Error::Empty("regret trials"));
    }
    let lat = spec.lattice()?;
    let tables: Vec<NeighborhoodTable> = k_values.iter().map(|&k| NeighborhoodTable::new(&lat, k)).collect();
    let per_trial = runner.run(trials, |t| -> Result<Vec<(f64, f64)>> {
        let trial = spec.sample(&lat, seed::derive_indexed(seed_value, "regret/trial", t as u64));
        let best = trial.test.iter().copied().fold(f64::INFINITY, f64::min);
        tables
            .iter()
            .map(|table| {
                let smoothed = table.smooth(&trial.validation)?;
                let sel = argmin_finite(&smoothed).ok_or(Error::NoValidConfig)?;
                Ok((trial.test[sel] - best, smoothed[sel]))
            })
            .collect()
    });
    let per_trial = per_trial.into_iter().collect::<Result<Vec<_>>>()?;
    let nk = k_values.len();
    let mut regrets = vec![Vec::with_capacity(trials); nk];
    let mut mins = vec![Vec::with_capacity(trials); nk];
    for row in &per_trial {
        for (j, &(r, m)) in row.iter().enumerate() {
            regrets[j].push(r);
            mins[j].push(m);
        }
    }
    let q = if trials > 1 { t_quantile_upper(0.025, (trials - 1) as f64) } else { 0.0 };
    let mean_regret: Vec<f64> = regrets.iter().map(|r| mean(r)).collect();
    let ci = regrets
        .iter()
        .zip(&mean_regret)
        .map(|(r, &m)| {
            let half = if trials > 1 { q * std_sample(r) / libm::sqrt(trials as f64) } else { 0.0 };
            (m - half, m + half)
        })
        .collect();
    Ok(RegretTable {
        k_values: k_values.to_vec(),
        mean_regret,
        ci,
        mean_min_smoothed: mins.iter().map(|m| mean(m)).collect(),
        regrets,
    })
}
