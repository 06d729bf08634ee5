//! Null-space protection for the shared mapper.
//!
//! Pre-mapper features of finished tasks are summarized by a running
//! uncentered covariance `C`. Its singular directions that carry most of the
//! energy are the "old" subspace; mapper updates are projected onto the
//! complement `V⊥` so that `X_old · Δw ≈ 0`.
//!
//! Features are rows and the mapper acts as `x·W`, so the projection acts on
//! the input side of the gradient: `Δw_proj = V⊥·V⊥ᵀ·Δw`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};

/// Default cumulative-energy threshold.
pub const DEFAULT_ENERGY_THRESHOLD: f64 = 0.95;
/// Default number of optimizer steps between basis recomputes.
pub const DEFAULT_REFRESH_PERIOD: usize = 100;

/// Spectrum snapshot recorded at each recompute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRecord {
    pub total_count: usize,
    pub singular_values: Vec<f64>,
    pub rank_kept: usize,
    /// Fraction of covariance energy outside the kept rank.
    pub residual_energy: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NullSpaceState {
    covariance: DMatrix<f64>,
    total_count: usize,
    basis_perp: DMatrix<f64>,
    rank_kept: usize,
    energy_threshold: f64,
    refresh_period: usize,
    singular_values: Vec<f64>,
    steps_since_refresh: usize,
    dirty: bool,
    history: Vec<SpectrumRecord>,
}

impl NullSpaceState {
    /// Empty state: zero covariance, every direction free.
    pub fn new(dim: usize, energy_threshold: f64, refresh_period: usize) -> Result<Self> {
        if dim == 0 {
            return Err(contract("null-space dimension must be positive"));
        }
        if !(energy_threshold > 0.0 && energy_threshold <= 1.0) {
            return Err(Error::Config(format!(
                "energy_threshold must lie in (0, 1], got {energy_threshold}"
            )));
        }
        if refresh_period == 0 {
            return Err(Error::Config("refresh_period must be positive".into()));
        }
        Ok(Self {
            covariance: DMatrix::zeros(dim, dim),
            total_count: 0,
            basis_perp: DMatrix::identity(dim, dim),
            rank_kept: 0,
            energy_threshold,
            refresh_period,
            singular_values: vec![0.0; dim],
            steps_since_refresh: 0,
            dirty: false,
            history: Vec::new(),
        })
    }

    /// State with a given covariance, basis already computed.
    pub fn from_covariance(
        covariance: DMatrix<f64>,
        total_count: usize,
        energy_threshold: f64,
        refresh_period: usize,
    ) -> Result<Self> {
        if !covariance.is_square() {
            return Err(contract("covariance must be square"));
        }
        let mut s = Self::new(covariance.nrows(), energy_threshold, refresh_period)?;
        s.covariance = covariance;
        s.total_count = total_count;
        s.recompute_basis()?;
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.covariance.nrows()
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn total_count(&self) -> usize {
        self.total_count
    }

    /// `d × (d − r)` orthonormal basis of the protected complement.
    pub fn basis_perp(&self) -> &DMatrix<f64> {
        &self.basis_perp
    }

    pub fn rank_kept(&self) -> usize {
        self.rank_kept
    }

    pub fn energy_threshold(&self) -> f64 {
        self.energy_threshold
    }

    pub fn refresh_period(&self) -> usize {
        self.refresh_period
    }

    /// Singular values from the last recompute, descending.
    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub fn history(&self) -> &[SpectrumRecord] {
        &self.history
    }

    /// Covariance changed since the last recompute.
    pub fn is_dirty(&self) -> bool {
        self.dirty
    }

    /// Fold `N × d` rows into the running covariance.
    pub fn update_covariance(&mut self, features: &[Vec<f64>]) -> Result<()> {
        let n = features.len();
        if n == 0 {
            return Err(contract("covariance update needs at least one feature row"));
        }
        let d = self.dim();
        let mut gram = DMatrix::zeros(d, d);
        for x in features {
            if x.len() != d {
                return Err(contract(format!(
                    "feature length {} does not match dimension {d}",
                    x.len()
                )));
            }
            for i in 0..d {
                if x[i] == 0.0 {
                    continue;
                }
                for j in 0..d {
                    gram[(i, j)] += x[i] * x[j];
                }
            }
        }
        // α_{b−1}·C + N·C_new with N·C_new = XᵀX.
        let new_count = self.total_count + n;
        self.covariance = (&self.covariance * self.total_count as f64 + gram) / new_count as f64;
        self.covariance = (&self.covariance + self.covariance.transpose()) * 0.5;
        self.total_count = new_count;
        self.dirty = true;
        Ok(())
    }

    /// SVD of the covariance and rank selection by cumulative energy.
    pub fn recompute_basis(&mut self) -> Result<()> {
        let d = self.dim();
        if self.covariance.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite covariance: {}",
                self.covariance
            )));
        }
        let svd = self
            .covariance
            .clone()
            .try_svd(true, true, f64::EPSILON, 0)
            .ok_or_else(|| {
                Error::Numeric(format!(
                    "covariance SVD did not converge: {}",
                    self.covariance
                ))
            })?;
        let v_t = svd
            .v_t
            .ok_or_else(|| Error::Numeric("SVD returned no right singular vectors".into()))?;
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| {
            svd.singular_values[b]
                .total_cmp(&svd.singular_values[a])
                .then(a.cmp(&b))
        });
        let sigma: Vec<f64> = order.iter().map(|&k| svd.singular_values[k]).collect();

        let rank = select_rank(&sigma, self.energy_threshold);
        let mut perp = DMatrix::zeros(d, d - rank);
        for (col, &k) in order[rank..].iter().enumerate() {
            for i in 0..d {
                perp[(i, col)] = v_t[(k, i)];
            }
        }
        let energy: f64 = sigma.iter().map(|s| s * s).sum();
        let residual = if energy > 0.0 {
            sigma[rank..].iter().map(|s| s * s).sum::<f64>() / energy
        } else {
            0.0
        };

        self.basis_perp = perp;
        self.rank_kept = rank;
        self.singular_values = sigma.clone();
        self.steps_since_refresh = 0;
        self.dirty = false;
        self.history.push(SpectrumRecord {
            total_count: self.total_count,
            singular_values: sigma,
            rank_kept: rank,
            residual_energy: residual,
        });
        Ok(())
    }

    /// Count one optimizer step and recompute the basis when a refresh is due.
    pub fn step(&mut self) -> Result<()> {
        self.steps_since_refresh += 1;
        if self.dirty && self.steps_since_refresh >= self.refresh_period {
            self.recompute_basis()?;
        }
        Ok(())
    }

    /// `V⊥·V⊥ᵀ·G`.
    pub fn project_gradient(&self, raw: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let d = self.dim();
        if raw.nrows() != d {
            return Err(contract(format!(
                "gradient has {} rows, expected {d}",
                raw.nrows()
            )));
        }
        if self.dirty && self.steps_since_refresh >= self.refresh_period {
            log::warn!(
                "null-space basis is stale ({} steps since refresh)",
                self.steps_since_refresh
            );
        }
        let coeffs = self.basis_perp.transpose() * raw;
        Ok(&self.basis_perp * coeffs)
    }

    /// Residual energy fraction outside the kept rank, from the last recompute.
    pub fn residual_energy(&self) -> f64 {
        let energy: f64 = self.singular_values.iter().map(|s| s * s).sum();
        if energy == 0.0 {
            return 0.0;
        }
        self.singular_values[self.rank_kept..]
            .iter()
            .map(|s| s * s)
            .sum::<f64>()
            / energy
    }

    /// Spectrum, kept rank and per-recompute residual energy as JSON.
    pub fn diagnostics(&self) -> serde_json::Value {
        serde_json::json!({
            "dim": self.dim(),
            "total_count": self.total_count,
            "energy_threshold": self.energy_threshold,
            "rank_kept": self.rank_kept,
            "singular_values": self.singular_values,
            "residual_energy": self.residual_energy(),
            "history": self.history,
        })
    }
}

/// Smallest `r` whose leading energy fraction exceeds `threshold`; `d` if none does.
/// A zero spectrum keeps nothing.
pub fn select_rank(sigma_desc: &[f64], threshold: f64) -> usize {
    let total: f64 = sigma_desc.iter().map(|s| s * s).sum();
    if total == 0.0 {
        return 0;
    }
    let mut acc = 0.0;
    for (k, s) in sigma_desc.iter().enumerate() {
        acc += s * s;
        if acc / total > threshold {
            return k + 1;
        }
    }
    sigma_desc.len()
}
