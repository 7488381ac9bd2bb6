use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// How each frequency level's KAN branch is sized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum OrderPolicy {
    /// Order `min_order + levels - i` at level `i` (1-based): the highest
    /// frequency band gets the richest polynomial.
    MultiOrder,
    Fixed(usize),
    /// Replace every KAN with a channel MLP.
    Mlp,
}

impl fmt::Display for OrderPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OrderPolicy::MultiOrder => f.write_str("multi_order"),
            OrderPolicy::Fixed(n) => write!(f, "fixed:{n}"),
            OrderPolicy::Mlp => f.write_str("mlp"),
        }
    }
}

impl FromStr for OrderPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "multi_order" => return Ok(OrderPolicy::MultiOrder),
            "mlp" => return Ok(OrderPolicy::Mlp),
            _ => {}
        }
        let inner = s
            .strip_prefix("fixed:")
            .or_else(|| s.strip_prefix("fixed(").and_then(|r| r.strip_suffix(')')));
        match inner.map(|n| n.trim().parse::<usize>()) {
            Some(Ok(n)) => Ok(OrderPolicy::Fixed(n)),
            _ => Err(Error::Config(format!(
                "unknown order policy {s:?} (expected multi_order, fixed:<n> or mlp)"
            ))),
        }
    }
}

impl TryFrom<String> for OrderPolicy {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<OrderPolicy> for String {
    fn from(p: OrderPolicy) -> String {
        p.to_string()
    }
}

/// Resampler used to lift a level back to its parent's length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpsamplerKind {
    Frequency,
    LinearInterp,
}

impl FromStr for UpsamplerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "frequency" => Ok(UpsamplerKind::Frequency),
            "linear_interp" => Ok(UpsamplerKind::LinearInterp),
            other => Err(Error::Config(format!(
                "unknown upsampler {other:?} (expected frequency or linear_interp)"
            ))),
        }
    }
}

impl fmt::Display for UpsamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UpsamplerKind::Frequency => "frequency",
            UpsamplerKind::LinearInterp => "linear_interp",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Look-back window length.
    pub lookback: usize,
    /// Forecast horizon.
    pub horizon: usize,
    pub embed_dim: usize,
    /// Number of frequency levels.
    pub levels: usize,
    /// Moving-average window between consecutive levels.
    pub window: usize,
    /// Lowest KAN order under [`OrderPolicy::MultiOrder`].
    pub min_order: usize,
    pub kernel_size: usize,
    /// Decomposition / learning / mixing repetitions.
    pub blocks: usize,
    pub order_policy: OrderPolicy,
    pub upsampler: UpsamplerKind,
    pub instance_norm: bool,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            lookback: 96,
            horizon: 96,
            embed_dim: 16,
            levels: 4,
            window: 2,
            min_order: 2,
            kernel_size: 3,
            blocks: 1,
            order_policy: OrderPolicy::MultiOrder,
            upsampler: UpsamplerKind::Frequency,
            instance_norm: true,
            seed: 2024,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.levels < 2 {
            return fail(format!("levels must be >= 2, got {}", self.levels));
        }
        if self.window < 2 {
            return fail(format!("window must be >= 2, got {}", self.window));
        }
        if self.min_order < 1 {
            return fail("min_order must be >= 1".into());
        }
        if self.blocks < 1 {
            return fail("blocks must be >= 1".into());
        }
        if self.kernel_size % 2 == 0 {
            return fail(format!("kernel_size must be odd, got {}", self.kernel_size));
        }
        if self.embed_dim == 0 || self.horizon == 0 || self.lookback == 0 {
            return fail("lookback, horizon and embed_dim must be positive".into());
        }
        let divisor = self
            .window
            .checked_pow((self.levels - 1) as u32)
            .ok_or_else(|| Error::Config("window^(levels-1) overflows".into()))?;
        if self.lookback % divisor != 0 {
            return fail(format!(
                "lookback {} is not divisible by window^(levels-1) = {divisor}",
                self.lookback
            ));
        }
        Ok(())
    }

    /// Sequence length of each level, highest frequency first.
    pub fn level_lengths(&self) -> Vec<usize> {
        let mut len = self.lookback;
        (0..self.levels)
            .map(|i| {
                if i > 0 {
                    len /= self.window;
                }
                len
            })
            .collect()
    }

    /// KAN order per level (highest frequency first), or `None` for the MLP
    /// variant.
    pub fn kan_orders(&self) -> Option<Vec<usize>> {
        match self.order_policy {
            OrderPolicy::MultiOrder => Some(
                (1..=self.levels)
                    .map(|i| self.min_order + self.levels - i)
                    .collect(),
            ),
            OrderPolicy::Fixed(n) => Some(alloc::vec![n; self.levels]),
            OrderPolicy::Mlp => None,
        }
    }

    /// Names of architectural fields that differ. The seed only affects
    /// initialization and is not compared.
    pub fn differing_fields(&self, other: &ModelConfig) -> Vec<&'static str> {
        let mut out = Vec::new();
        macro_rules! cmp {
            ($($f:ident),*) => { $( if self.$f != other.$f { out.push(stringify!($f)); } )* };
        }
        cmp!(
            lookback,
            horizon,
            embed_dim,
            levels,
            window,
            min_order,
            kernel_size,
            blocks,
            order_policy,
            upsampler,
            instance_norm
        );
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_orders() {
        let c = ModelConfig::default();
        c.validate().unwrap();
        assert_eq!(c.kan_orders().unwrap(), alloc::vec![5, 4, 3, 2]);
        assert_eq!(c.level_lengths(), alloc::vec![96, 48, 24, 12]);
    }

    #[test]
    fn policies_parse() {
        assert_eq!("fixed:5".parse::<OrderPolicy>().unwrap(), OrderPolicy::Fixed(5));
        assert_eq!("fixed(2)".parse::<OrderPolicy>().unwrap(), OrderPolicy::Fixed(2));
        assert_eq!("mlp".parse::<OrderPolicy>().unwrap(), OrderPolicy::Mlp);
        assert!("cubic".parse::<OrderPolicy>().is_err());
        let c = ModelConfig {
            order_policy: OrderPolicy::Fixed(3),
            ..Default::default()
        };
        assert_eq!(c.kan_orders().unwrap(), alloc::vec![3; 4]);
    }

    #[test]
    fn validation() {
        let bad = |f: fn(&mut ModelConfig)| {
            let mut c = ModelConfig::default();
            f(&mut c);
            c.validate().is_err()
        };
        assert!(bad(|c| c.lookback = 100));
        assert!(bad(|c| c.levels = 1));
        assert!(bad(|c| c.window = 1));
        assert!(bad(|c| c.kernel_size = 4));
        assert!(bad(|c| c.blocks = 0));
        assert!(bad(|c| c.min_order = 0));
    }

    #[test]
    fn differing_fields_ignores_seed() {
        let a = ModelConfig::default();
        let b = ModelConfig {
            seed: 1,
            horizon: 192,
            ..Default::default()
        };
        assert_eq!(a.differing_fields(&b), alloc::vec!["horizon"]);
    }
}
