use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockKind {
    Resnet,
    Convnext,
}

/// Shape of the noise-prediction network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UNetConfig {
    pub base_channels: usize,
    /// One multiplier per scale; channels at scale `i` are
    /// `base_channels * channel_multipliers[i]`.
    pub channel_multipliers: Vec<usize>,
    pub block_kind: BlockKind,
    /// Self-attention after the blocks of each scale (encoder and decoder).
    /// A bottleneck attention layer is always present.
    pub attention: Vec<bool>,
    pub time_embed_dim: usize,
    pub attention_heads: usize,
    pub norm_groups: usize,
}

/// Variant names accepted by [`UNetConfig::variant`].
pub const VARIANTS: [&str; 4] = ["U124", "U1224", "C1224", "U12448"];

impl UNetConfig {
    /// Look up one of the registered variants: `U124` (3-scale ResNet),
    /// `U1224` (4-scale ResNet), `C1224` (4-scale ConvNeXt) and `U12448`
    /// (5-scale ResNet).
    pub fn variant(name: &str, base_channels: usize) -> Result<Self> {
        let (mults, kind): (&[usize], BlockKind) = match name {
            "U124" => (&[1, 2, 4], BlockKind::Resnet),
            "U1224" => (&[1, 2, 2, 4], BlockKind::Resnet),
            "C1224" => (&[1, 2, 2, 4], BlockKind::Convnext),
            "U12448" => (&[1, 2, 4, 4, 8], BlockKind::Resnet),
            other => {
                return Err(Error::invalid(format!(
                    "unknown U-Net variant '{other}' (expected one of {VARIANTS:?})"
                )))
            }
        };
        let scales = mults.len();
        let mut attention = vec![false; scales];
        attention[scales - 1] = true;
        let cfg = Self {
            base_channels,
            channel_multipliers: mults.to_vec(),
            block_kind: kind,
            attention,
            time_embed_dim: base_channels * 4,
            attention_heads: 4,
            norm_groups: 8,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn scales(&self) -> usize {
        self.channel_multipliers.len()
    }

    pub fn channels(&self, scale: usize) -> usize {
        self.base_channels * self.channel_multipliers[scale]
    }

    /// Grid sides must be divisible by this.
    pub fn required_divisor(&self) -> usize {
        1 << (self.scales() - 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.channel_multipliers.is_empty() || self.channel_multipliers.contains(&0) {
            return Err(Error::invalid("channel multipliers must be nonempty and positive"));
        }
        if self.attention.len() != self.scales() {
            return Err(Error::invalid("one attention flag per scale is required"));
        }
        if self.base_channels == 0 || self.norm_groups == 0 || self.attention_heads == 0 {
            return Err(Error::invalid("channel, group and head counts must be positive"));
        }
        for s in 0..self.scales() {
            let c = self.channels(s);
            if !c.is_multiple_of(self.norm_groups) {
                return Err(Error::invalid(format!(
                    "{c} channels not divisible into {} norm groups",
                    self.norm_groups
                )));
            }
            if !c.is_multiple_of(self.attention_heads) {
                return Err(Error::invalid(format!(
                    "{c} channels not divisible by {} heads",
                    self.attention_heads
                )));
            }
        }
        if self.time_embed_dim == 0 || !self.base_channels.is_multiple_of(2) {
            return Err(Error::invalid("time embedding needs an even base width"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry() {
        for name in VARIANTS {
            let c = UNetConfig::variant(name, 16).unwrap();
            assert_eq!(c.attention.iter().filter(|&&a| a).count(), 1);
        }
        assert_eq!(UNetConfig::variant("U12448", 8).unwrap().required_divisor(), 16);
        assert_eq!(UNetConfig::variant("C1224", 8).unwrap().block_kind, BlockKind::Convnext);
        assert!(UNetConfig::variant("U999", 8).is_err());
        assert!(UNetConfig::variant("U124", 12).is_err());
    }
}
