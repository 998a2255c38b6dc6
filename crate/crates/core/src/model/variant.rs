use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Ablation variants, from query-only up to the full model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// Query only.
    WoPM,
    /// Query + short-term preference, uniform weights.
    STPM,
    /// Query + attentive short-term preference.
    ASTP,
    /// Query + long-term preference, no factor attention.
    LTPM,
    /// Query + attentive long-term preference.
    ALTP,
    /// Query + both preferences, no attention.
    LSTP,
    /// Full model.
    ALSTP,
}

/// Which parts of the fused representation a variant computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Wiring {
    pub short_term: bool,
    pub long_term: bool,
    pub short_attention: bool,
    pub long_attention: bool,
}

impl Wiring {
    /// Tower input width in units of `k`.
    pub fn parts(&self) -> usize {
        1 + self.short_term as usize + self.long_term as usize
    }

    /// Same wiring with both attention mechanisms switched off.
    pub fn without_attention(self) -> Wiring {
        Wiring {
            short_attention: false,
            long_attention: false,
            ..self
        }
    }
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::WoPM,
        Variant::STPM,
        Variant::ASTP,
        Variant::LTPM,
        Variant::ALTP,
        Variant::LSTP,
        Variant::ALSTP,
    ];

    pub fn wiring(self) -> Wiring {
        let (short_term, long_term, short_attention, long_attention) = match self {
            Variant::WoPM => (false, false, false, false),
            Variant::STPM => (true, false, false, false),
            Variant::ASTP => (true, false, true, false),
            Variant::LTPM => (false, true, false, false),
            Variant::ALTP => (false, true, false, true),
            Variant::LSTP => (true, true, false, false),
            Variant::ALSTP => (true, true, true, true),
        };
        Wiring {
            short_term,
            long_term,
            short_attention,
            long_attention,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::WoPM => "WoPM",
            Variant::STPM => "STPM",
            Variant::ASTP => "ASTP",
            Variant::LTPM => "LTPM",
            Variant::ALTP => "ALTP",
            Variant::LSTP => "LSTP",
            Variant::ALSTP => "ALSTP",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownVariant(s.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_roundtrip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert_eq!("alstp".parse::<Variant>().unwrap(), Variant::ALSTP);
        assert!(matches!("HEM".parse::<Variant>(), Err(Error::UnknownVariant(_))));
    }

    #[test]
    fn attention_free_alstp_is_lstp() {
        assert_eq!(Variant::ALSTP.wiring().without_attention(), Variant::LSTP.wiring());
        assert_eq!(Variant::ASTP.wiring().without_attention(), Variant::STPM.wiring());
        assert_eq!(Variant::ALTP.wiring().without_attention(), Variant::LTPM.wiring());
        assert_eq!(Variant::WoPM.wiring().parts(), 1);
        assert_eq!(Variant::ALSTP.wiring().parts(), 3);
    }
}
