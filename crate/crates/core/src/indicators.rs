//! The three entry indicators: each entry-type count over the entry total.
//!
//! Ratios stay exact rationals; rounding happens only when rendering.

use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;
use core::fmt::Write as _;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::entities::{EntityId, EntityKind, EntityStats, EntityTree};

/// An exact non-negative fraction. Not reduced; comparisons cross-multiply.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Ratio {
    pub num: u64,
    pub den: u64,
}

impl Ratio {
    /// `None` when `den` is zero.
    pub fn new(num: u64, den: u64) -> Option<Self> {
        (den != 0).then_some(Self { num, den })
    }

    /// Decimal rendering rounded half-up to `decimals` places.
    pub fn render(&self, decimals: u32) -> String {
        let scale = 10u128.pow(decimals);
        let scaled = (u128::from(self.num) * scale * 2 + u128::from(self.den)) / (u128::from(self.den) * 2);
        let int = scaled / scale;
        let frac = scaled % scale;
        let mut out = String::new();
        let _ = write!(out, "{int}");
        if decimals > 0 {
            let _ = write!(out, ".{:0width$}", frac, width = decimals as usize);
        }
        out
    }

    pub fn to_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl PartialEq for Ratio {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Ratio {}

impl Ord for Ratio {
    fn cmp(&self, other: &Self) -> Ordering {
        (u128::from(self.num) * u128::from(other.den)).cmp(&(u128::from(other.num) * u128::from(self.den)))
    }
}

impl PartialOrd for Ratio {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// `(i_se, i_bl, i_da)` for one entity. Undefined when `d_total` is zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndicatorSet {
    pub d_total: u64,
    pub values: Option<Indicators>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Indicators {
    pub i_se: Ratio,
    pub i_bl: Ratio,
    pub i_da: Ratio,
}

pub fn indicators(stats: &EntityStats) -> IndicatorSet {
    let d = stats.d_total;
    let values = (d > 0).then_some(Indicators {
        i_se: Ratio { num: stats.d_se, den: d },
        i_bl: Ratio { num: stats.d_bl, den: d },
        i_da: Ratio { num: stats.d_da, den: d },
    });
    IndicatorSet { d_total: d, values }
}

pub const UNDEFINED: &str = "n/a";

impl IndicatorSet {
    pub fn i_se(&self) -> Option<Ratio> {
        self.values.map(|v| v.i_se)
    }

    pub fn i_bl(&self) -> Option<Ratio> {
        self.values.map(|v| v.i_bl)
    }

    pub fn i_da(&self) -> Option<Ratio> {
        self.values.map(|v| v.i_da)
    }

    /// Renders one indicator, `n/a` when undefined.
    pub fn render(value: Option<Ratio>, decimals: u32) -> String {
        value.map_or_else(|| UNDEFINED.into(), |r| r.render(decimals))
    }
}

/// Ranking key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankKey {
    ISe,
    IBl,
    IDa,
    DSe,
    DBl,
    DDa,
    DTotal,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown sort key `{0}` (expected i_se, i_bl, i_da, d_se, d_bl, d_da or d_total)")]
pub struct UnknownRankKey(pub String);

impl FromStr for RankKey {
    type Err = UnknownRankKey;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "i_se" | "ise" => Self::ISe,
            "i_bl" | "ibl" => Self::IBl,
            "i_da" | "ida" => Self::IDa,
            "d_se" | "dse" => Self::DSe,
            "d_bl" | "dbl" => Self::DBl,
            "d_da" | "dda" => Self::DDa,
            "d_total" | "dtotal" | "total" => Self::DTotal,
            _ => return Err(UnknownRankKey(s.into())),
        })
    }
}

impl fmt::Display for RankKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::ISe => "i_se",
            Self::IBl => "i_bl",
            Self::IDa => "i_da",
            Self::DSe => "d_se",
            Self::DBl => "d_bl",
            Self::DDa => "d_da",
            Self::DTotal => "d_total",
        })
    }
}

fn key_ratio(stats: &EntityStats, key: RankKey) -> Ratio {
    // Callers only rank entities with d_total > 0, and counts are ratios over 1.
    let d = stats.d_total.max(1);
    match key {
        RankKey::ISe => Ratio { num: stats.d_se, den: d },
        RankKey::IBl => Ratio { num: stats.d_bl, den: d },
        RankKey::IDa => Ratio { num: stats.d_da, den: d },
        RankKey::DSe => Ratio { num: stats.d_se, den: 1 },
        RankKey::DBl => Ratio { num: stats.d_bl, den: 1 },
        RankKey::DDa => Ratio { num: stats.d_da, den: 1 },
        RankKey::DTotal => Ratio { num: stats.d_total, den: 1 },
    }
}

/// Ranking order: key descending, then `d_total` descending, then path.
pub fn rank_cmp(key: RankKey, a: (&EntityId, &EntityStats), b: (&EntityId, &EntityStats)) -> Ordering {
    key_ratio(b.1, key)
        .cmp(&key_ratio(a.1, key))
        .then_with(|| b.1.d_total.cmp(&a.1.d_total))
        .then_with(|| a.0.cmp(b.0))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankedEntity {
    pub entity: EntityId,
    pub stats: EntityStats,
    pub indicators: IndicatorSet,
}

/// Entities with `d_total >= min_total` (and of `kind`, if given), sorted by
/// [`rank_cmp`]. A `min_total` of zero is treated as one: ratios need a
/// denominator.
pub fn rank_entities(
    tree: &EntityTree,
    by: RankKey,
    min_total: u64,
    kind: Option<EntityKind>,
) -> Vec<RankedEntity> {
    let min_total = min_total.max(1);
    let mut v: Vec<(&EntityId, &EntityStats)> = tree
        .iter()
        .filter(|(id, n)| n.stats.d_total >= min_total && kind.is_none_or(|k| id.kind == k))
        .map(|(id, n)| (id, &n.stats))
        .collect();
    v.sort_by(|a, b| rank_cmp(by, *a, *b));
    v.into_iter()
        .map(|(id, s)| RankedEntity { entity: id.clone(), stats: *s, indicators: indicators(s) })
        .collect()
}
