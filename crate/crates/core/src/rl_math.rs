//! GRPO quantities over supplied log-probabilities: group-relative
//! advantages, the masked sequence-level importance ratio, the asymmetric
//! clipped surrogate and the masked SFT loss. No parameters are updated here.
//!
//! Only mask-1 positions (manager-generated tokens) enter the ratio and the
//! loss; tool output and the question are conditioning context.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::protocol::LinearizedSequence;
use crate::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RatioMode {
    /// One ratio per trajectory: `exp(Σ m·(lp_new − lp_old))`.
    #[default]
    Sequence,
    /// Per-token ratios clipped individually and averaged over masked tokens.
    PerToken,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GrpoConfig {
    pub delta: f64,
    pub clip_low: f64,
    pub clip_high: f64,
    pub group_size: usize,
    pub ratio_mode: RatioMode,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        Self {
            delta: 1e-4,
            clip_low: 0.2,
            clip_high: 0.28,
            group_size: 8,
            ratio_mode: RatioMode::Sequence,
        }
    }
}

impl GrpoConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(ConfigError::invalid(
                "grpo.delta",
                "must be a small positive number",
            ));
        }
        if !(self.clip_low > 0.0 && self.clip_low <= self.clip_high && self.clip_high < 1.0) {
            return Err(ConfigError::invalid(
                "grpo.clip_low",
                "need 0 < clip_low <= clip_high < 1",
            ));
        }
        if self.group_size < 2 {
            return Err(ConfigError::invalid(
                "grpo.group_size",
                "must be at least 2",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum RlError {
    #[error("group needs at least 2 rewards, got {0}")]
    GroupTooSmall(usize),
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("missing {0}")]
    Missing(&'static str),
    #[error("length mismatch: {field} has {got} entries, expected {expected}")]
    LengthMismatch {
        field: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("mask entries must be 0 or 1")]
    InvalidMask,
}

/// `A_g = (R_g − mean) / (std + δ)` with the population standard deviation.
pub fn group_advantages(rewards: &[f64], delta: f64) -> Result<Vec<f64>, RlError> {
    if rewards.len() < 2 {
        return Err(RlError::GroupTooSmall(rewards.len()));
    }
    if rewards.iter().any(|r| !r.is_finite()) {
        return Err(RlError::NonFinite("reward"));
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let denom = var.sqrt() + delta;
    Ok(rewards.iter().map(|r| (r - mean) / denom).collect())
}

/// Log-probabilities of one sequence, as read from a group file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceLogprobs {
    pub mask: Vec<u8>,
    pub logp_new: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logp_old: Option<Vec<f64>>,
}

impl SequenceLogprobs {
    fn check(&self, need_old: bool) -> Result<(), RlError> {
        let n = self.mask.len();
        if self.mask.iter().any(|&m| m > 1) {
            return Err(RlError::InvalidMask);
        }
        if self.logp_new.len() != n {
            return Err(RlError::LengthMismatch {
                field: "logp_new",
                got: self.logp_new.len(),
                expected: n,
            });
        }
        if masked(&self.mask, &self.logp_new).any(|v| !v.is_finite()) {
            return Err(RlError::NonFinite("logp_new"));
        }
        match (&self.logp_old, need_old) {
            (None, true) => Err(RlError::Missing("logp_old")),
            (Some(old), _) if old.len() != n => Err(RlError::LengthMismatch {
                field: "logp_old",
                got: old.len(),
                expected: n,
            }),
            (Some(old), _) if masked(&self.mask, old).any(|v| !v.is_finite()) => {
                Err(RlError::NonFinite("logp_old"))
            }
            _ => Ok(()),
        }
    }
}

impl TryFrom<&LinearizedSequence> for SequenceLogprobs {
    type Error = RlError;

    fn try_from(seq: &LinearizedSequence) -> Result<Self, RlError> {
        let logp_new = seq.logp_new.clone().ok_or(RlError::Missing("logp_new"))?;
        Ok(Self {
            mask: seq.mask.clone(),
            logp_new,
            logp_old: seq.logp_old.clone(),
        })
    }
}

fn masked<'a>(mask: &'a [u8], values: &'a [f64]) -> impl Iterator<Item = f64> + 'a {
    mask.iter()
        .zip(values)
        .filter(|(m, _)| **m == 1)
        .map(|(_, v)| *v)
}

/// `Σ m·(lp_new − lp_old)`. Mask-0 positions are never read, so their
/// values may be anything, including non-finite.
pub fn log_masked_ratio(seq: &SequenceLogprobs) -> Result<f64, RlError> {
    seq.check(true)?;
    let old = seq.logp_old.as_deref().unwrap_or_default();
    Ok(seq
        .mask
        .iter()
        .zip(seq.logp_new.iter().zip(old))
        .filter(|(m, _)| **m == 1)
        .map(|(_, (new, old))| new - old)
        .sum())
}

pub fn masked_ratio(seq: &SequenceLogprobs) -> Result<f64, RlError> {
    log_masked_ratio(seq).map(f64::exp)
}

pub fn masked_ratio_of(seq: &LinearizedSequence) -> Result<f64, RlError> {
    masked_ratio(&SequenceLogprobs::try_from(seq)?)
}

fn clip(r: f64, cfg: &GrpoConfig) -> f64 {
    r.clamp(1.0 - cfg.clip_low, 1.0 + cfg.clip_high)
}

/// `min(r·A, clip(r, 1−ε_low, 1+ε_high)·A)`.
pub fn clip_objective(ratio: f64, advantage: f64, cfg: &GrpoConfig) -> f64 {
    (ratio * advantage).min(clip(ratio, cfg) * advantage)
}

/// Group mean of the clipped objective over precomputed ratios.
pub fn clipped_surrogate(
    ratios: &[f64],
    advantages: &[f64],
    cfg: &GrpoConfig,
) -> Result<f64, RlError> {
    if ratios.len() != advantages.len() {
        return Err(RlError::LengthMismatch {
            field: "ratios",
            got: ratios.len(),
            expected: advantages.len(),
        });
    }
    if ratios.is_empty() {
        return Err(RlError::GroupTooSmall(0));
    }
    let sum: f64 = ratios
        .iter()
        .zip(advantages)
        .map(|(&r, &a)| clip_objective(r, a, cfg))
        .sum();
    Ok(sum / ratios.len() as f64)
}

/// Per-token alternative: each masked token's ratio is clipped on its own
/// and the objective is averaged over masked tokens. Zero when nothing is
/// masked.
pub fn per_token_objective(
    seq: &SequenceLogprobs,
    advantage: f64,
    cfg: &GrpoConfig,
) -> Result<f64, RlError> {
    seq.check(true)?;
    let old = seq.logp_old.as_deref().unwrap_or_default();
    let terms: Vec<f64> = seq
        .mask
        .iter()
        .zip(seq.logp_new.iter().zip(old))
        .filter(|(m, _)| **m == 1)
        .map(|(_, (new, old))| clip_objective((new - old).exp(), advantage, cfg))
        .collect();
    if terms.is_empty() {
        return Ok(0.0);
    }
    Ok(terms.iter().sum::<f64>() / terms.len() as f64)
}

/// `−Σ m·lp_new`.
pub fn masked_sft_nll(seq: &SequenceLogprobs) -> Result<f64, RlError> {
    seq.check(false)?;
    Ok(-masked(&seq.mask, &seq.logp_new).sum::<f64>())
}

pub fn masked_sft_nll_of(seq: &LinearizedSequence) -> Result<f64, RlError> {
    masked_sft_nll(&SequenceLogprobs::try_from(seq)?)
}

/// One line of a group file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub rewards: Vec<f64>,
    pub sequences: Vec<SequenceLogprobs>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupScore {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub advantages: Vec<f64>,
    /// Sequence-level ratios (reported in both modes).
    pub ratios: Vec<f64>,
    pub surrogate: f64,
    pub sft_nll: Vec<f64>,
}

pub fn score_group(group: &GroupRecord, cfg: &GrpoConfig) -> Result<GroupScore, RlError> {
    if group.sequences.len() != group.rewards.len() {
        return Err(RlError::LengthMismatch {
            field: "sequences",
            got: group.sequences.len(),
            expected: group.rewards.len(),
        });
    }
    let advantages = group_advantages(&group.rewards, cfg.delta)?;
    let ratios = group
        .sequences
        .iter()
        .map(masked_ratio)
        .collect::<Result<Vec<_>, _>>()?;
    let surrogate = match cfg.ratio_mode {
        RatioMode::Sequence => clipped_surrogate(&ratios, &advantages, cfg)?,
        RatioMode::PerToken => {
            let per_seq = group
                .sequences
                .iter()
                .zip(&advantages)
                .map(|(s, &a)| per_token_objective(s, a, cfg))
                .collect::<Result<Vec<_>, _>>()?;
            per_seq.iter().sum::<f64>() / per_seq.len() as f64
        }
    };
    let sft_nll = group
        .sequences
        .iter()
        .map(masked_sft_nll)
        .collect::<Result<Vec<_>, _>>()?;
    Ok(GroupScore {
        id: group.id.clone(),
        advantages,
        ratios,
        surrogate,
        sft_nll,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(mask: &[u8], new: &[f64], old: &[f64]) -> SequenceLogprobs {
        SequenceLogprobs {
            mask: mask.to_vec(),
            logp_new: new.to_vec(),
            logp_old: Some(old.to_vec()),
        }
    }

    #[test]
    fn advantage_examples() {
        let a = group_advantages(&[2.0, 2.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0], 0.0).unwrap();
        assert!((a[0] - std::f64::consts::SQRT_2).abs() < 1e-12);
        assert!((a[6] + std::f64::consts::SQRT_2).abs() < 1e-12);
        assert_eq!(group_advantages(&[3.0; 8], 1e-4).unwrap(), vec![0.0; 8]);
        assert_eq!(group_advantages(&[1.0, 0.0], 0.0).unwrap(), vec![1.0, -1.0]);
        assert_eq!(
            group_advantages(&[1.0], 1e-4),
            Err(RlError::GroupTooSmall(1))
        );
    }

    #[test]
    fn ratio_examples() {
        let s = seq(&[0, 1, 1], &[-1.0, -2.0, -3.0], &[-1.0, -2.0, -3.0]);
        assert_eq!(masked_ratio(&s).unwrap(), 1.0);
        let s = seq(&[0, 1], &[-5.0, 2f64.ln() - 1.0], &[0.0, -1.0]);
        assert!((masked_ratio(&s).unwrap() - 2.0).abs() < 1e-12);
        let s = seq(&[0, 1, 0], &[9.0, -1.0, f64::NAN], &[-3.0, -1.0, 4.0]);
        assert_eq!(masked_ratio(&s).unwrap(), 1.0);
        let s = seq(&[1], &[f64::INFINITY], &[0.0]);
        assert_eq!(masked_ratio(&s), Err(RlError::NonFinite("logp_new")));
    }

    #[test]
    fn clip_examples() {
        let cfg = GrpoConfig::default();
        assert_eq!(clip_objective(1.0, 0.7, &cfg), 0.7);
        assert_eq!(clip_objective(2.0, 1.0, &cfg), 1.28);
        assert_eq!(clip_objective(0.5, -1.0, &cfg), -0.8);
        assert_eq!(
            clipped_surrogate(&[2.0, 0.5], &[1.0, -1.0], &cfg).unwrap(),
            (1.28 - 0.8) / 2.0
        );
    }

    #[test]
    fn sft_examples() {
        let s = seq(&[0, 0], &[-1.0, -2.0], &[0.0, 0.0]);
        assert_eq!(masked_sft_nll(&s).unwrap(), 0.0);
        let s = seq(&[1, 1, 1], &[-1.0; 3], &[0.0; 3]);
        assert_eq!(masked_sft_nll(&s).unwrap(), 3.0);
        let longer = seq(&[1, 1, 1, 0, 0], &[-1.0, -1.0, -1.0, -7.0, -9.0], &[0.0; 5]);
        assert_eq!(masked_sft_nll(&longer).unwrap(), 3.0);
    }

    #[test]
    fn per_token_mode_matches_sequence_mode_for_one_token() {
        let cfg = GrpoConfig {
            ratio_mode: RatioMode::PerToken,
            ..GrpoConfig::default()
        };
        let s = seq(&[0, 1], &[0.0, 2f64.ln()], &[0.0, 0.0]);
        assert!((per_token_objective(&s, 1.0, &cfg).unwrap() - 1.28).abs() < 1e-12);
    }

    #[test]
    fn score_group_shape() {
        let g = GroupRecord {
            id: Some("g".into()),
            rewards: vec![1.0, 0.0],
            sequences: vec![seq(&[1], &[-1.0], &[-1.0]), seq(&[1], &[-2.0], &[-2.0])],
        };
        let s = score_group(&g, &GrpoConfig::default()).unwrap();
        assert_eq!(s.ratios, vec![1.0, 1.0]);
        assert!((s.surrogate - 0.0).abs() < 1e-12);
        assert_eq!(s.sft_nll, vec![1.0, 2.0]);
    }

    #[test]
    fn config_invariants() {
        assert!(GrpoConfig::default().validate().is_ok());
        let bad = GrpoConfig {
            clip_low: 0.3,
            clip_high: 0.28,
            ..GrpoConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
