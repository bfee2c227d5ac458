//! Posterior simulation: adaptive Metropolis blocks, conjugate updates,
//! forward-filtering backward-sampling and identification post-processing.

pub mod adaptive;
pub mod conjugate;
pub mod ffbs;
pub mod identify;
mod sampler;

use serde::{Deserialize, Serialize};

use crate::error::{validation, Result};

pub use adaptive::{accept_probability, adaptive_update, AdaptiveState};
pub use conjugate::{dirichlet_params, sample_dirichlet, sample_q_row, sample_sigma2, sigma2_posterior};
pub use ffbs::{backward_sample, ffbs_from_emissions, ffbs_states, forward_filter, log_emissions};
pub use identify::{identify_draw, satisfies_constraints, AnchorSign, IdentifyMode, IdentifySpec, PosteriorDraw};
pub use sampler::{
    initial_params, phi_proposal_log_correction, run_chain, run_chain_with_rng, AcceptanceSummary, ChainOutput,
    RawTrace, Sampler,
};

/// Restrictions distinguishing the nested models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelVariant {
    /// Regime switching with a free leaning slope.
    Full,
    /// Leaning slope fixed at zero.
    ZeroSlope,
    /// A single regime.
    Static,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McmcConfig {
    pub n_iter: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub n_states: usize,
    pub target_accept: f64,
    pub adapt_exponent: f64,
    /// Zero-based index of the node whose side is fixed.
    pub anchor_index: usize,
    pub anchor_sign: AnchorSign,
    pub seed: u64,
    /// RNG stream, one per layer.
    pub stream: u64,
    pub variant: ModelVariant,
    /// Apply identification post-processing every iteration.
    pub identify: bool,
    /// Keep every iteration's parameters and acceptance flags.
    pub record_trace: bool,
    /// Proposal scale for the dispersion as a fraction of its current value.
    pub phi_step: f64,
    /// Last sweep that adapts proposals; `None` adapts throughout.
    pub adapt_until: Option<usize>,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            n_iter: 50_000,
            burn_in: 30_000,
            thin: 10,
            n_states: 2,
            target_accept: 0.25,
            adapt_exponent: 0.6,
            anchor_index: 0,
            anchor_sign: AnchorSign::Negative,
            seed: 1,
            stream: 0,
            variant: ModelVariant::Full,
            identify: true,
            record_trace: true,
            phi_step: 0.1,
            adapt_until: None,
        }
    }
}

impl McmcConfig {
    pub fn effective_states(&self) -> usize {
        match self.variant {
            ModelVariant::Static => 1,
            _ => self.n_states,
        }
    }

    pub fn identify_spec(&self) -> IdentifySpec {
        IdentifySpec {
            anchor: self.anchor_index,
            sign: self.anchor_sign,
            mode: match self.variant {
                ModelVariant::ZeroSlope => IdentifyMode::PerState,
                _ => IdentifyMode::Pooled,
            },
        }
    }

    /// Number of retained draws.
    pub fn n_retained(&self) -> usize {
        (self.n_iter - self.burn_in) / self.thin
    }

    pub fn validate(&self, n_nodes: usize) -> Result<()> {
        if self.n_iter == 0 || self.thin == 0 {
            return validation("n_iter and thin must be positive");
        }
        if self.burn_in >= self.n_iter {
            return validation(format!("burn_in {} must be below n_iter {}", self.burn_in, self.n_iter));
        }
        if self.effective_states() == 0 {
            return validation("n_states must be at least 1");
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return validation("target_accept must lie in (0, 1)");
        }
        if !(self.adapt_exponent > 0.0 && self.adapt_exponent <= 1.0) {
            return validation("adapt_exponent must lie in (0, 1]");
        }
        if !(self.phi_step > 0.0) {
            return validation("phi_step must be positive");
        }
        if n_nodes > 0 && self.anchor_index >= n_nodes {
            return validation(format!("anchor index {} outside {n_nodes} nodes", self.anchor_index + 1));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn retained_count() {
        let c = McmcConfig {
            n_iter: 130,
            burn_in: 120,
            thin: 10,
            ..Default::default()
        };
        assert_eq!(c.n_retained(), 1);
        assert_eq!(McmcConfig::default().n_retained(), 2000);
        assert!(McmcConfig { burn_in: 50_000, ..Default::default() }.validate(5).is_err());
        assert!(McmcConfig { anchor_index: 5, ..Default::default() }.validate(5).is_err());
    }
}
