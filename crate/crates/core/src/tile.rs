//! Tiling strategies and their textual form (`full`, `strip-rows:7`,
//! `strip-cols:7`, `patch:13`, `fixed:upper:7`, `fixed:middle:7`,
//! `fixed:rows:2-9`).

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Where a fixed strip sits within the tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StripAnchor {
    /// The first `k` rows.
    Upper(usize),
    /// `k` rows centred on row `H / 2`.
    Middle(usize),
    /// An explicit half-open row range.
    Rows { start: usize, end: usize },
}

impl StripAnchor {
    /// Resolves the anchor to concrete rows for a tensor of height `h`.
    pub fn resolve(self, h: usize) -> Result<Range<usize>> {
        let range = match self {
            StripAnchor::Upper(k) => 0..k.min(h),
            StripAnchor::Middle(k) => {
                let start = (h / 2).saturating_sub(k / 2);
                let end = (start + k).min(h);
                end.saturating_sub(k)..end
            }
            StripAnchor::Rows { start, end } => start..end,
        };
        if range.start >= range.end || range.end > h {
            return Err(Error::invalid(format!(
                "fixed strip rows [{}, {}) invalid for height {h}",
                range.start, range.end
            )));
        }
        Ok(range)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TileSpec {
    /// One tile spanning the whole tensor (plain SE).
    Full,
    /// Tiles of `k` full-width rows.
    StripRows(usize),
    /// Tiles of `k` full-height columns.
    StripCols(usize),
    /// `k × k` patches.
    Patch(usize),
    /// A single strip whose scale vector is applied to the whole tensor.
    FixedStrip(StripAnchor),
}

impl TileSpec {
    pub fn validate(self) -> Result<()> {
        let k = match self {
            TileSpec::Full => return Ok(()),
            TileSpec::StripRows(k) | TileSpec::StripCols(k) | TileSpec::Patch(k) => k,
            TileSpec::FixedStrip(StripAnchor::Upper(k) | StripAnchor::Middle(k)) => k,
            TileSpec::FixedStrip(StripAnchor::Rows { start, end }) => {
                if start >= end {
                    return Err(Error::invalid(format!("empty fixed strip [{start}, {end})")));
                }
                return Ok(());
            }
        };
        if k == 0 {
            return Err(Error::invalid(format!("tile size must be positive in {self}")));
        }
        Ok(())
    }

    /// Spatial extent `(h, w)` of one tile on an `H × W` tensor. A fixed
    /// strip stalls the whole tensor, so its extent is the full map.
    pub fn tile_dims(self, h: usize, w: usize) -> (usize, usize) {
        match self {
            TileSpec::Full | TileSpec::FixedStrip(_) => (h, w),
            TileSpec::StripRows(k) => (k.min(h), w),
            TileSpec::StripCols(k) => (h, k.min(w)),
            TileSpec::Patch(k) => (k.min(h), k.min(w)),
        }
    }

    pub fn is_fixed(self) -> bool {
        matches!(self, TileSpec::FixedStrip(_))
    }

    /// Method label in the `TSE_{h×w}` naming used by the result tables.
    pub fn method_label(self) -> String {
        match self {
            TileSpec::Full => "SE".to_string(),
            TileSpec::StripRows(k) => format!("TSE_{k}xW"),
            TileSpec::StripCols(k) => format!("TSE_Hx{k}"),
            TileSpec::Patch(k) => format!("TSE_{k}x{k}"),
            TileSpec::FixedStrip(StripAnchor::Upper(k)) => format!("TSE_{k}xW-upper"),
            TileSpec::FixedStrip(StripAnchor::Middle(k)) => format!("TSE_{k}xW-middle"),
            TileSpec::FixedStrip(StripAnchor::Rows { start, end }) => format!("TSE_rows{start}-{end}"),
        }
    }
}

/// Number of tiles `⌈H/h⌉·⌈W/w⌉` a tiling produces; fixed strips count as one.
pub fn num_tiles(h: usize, w: usize, tile: TileSpec) -> usize {
    if tile.is_fixed() {
        return 1;
    }
    let (th, tw) = tile.tile_dims(h, w);
    h.div_ceil(th) * w.div_ceil(tw)
}

impl fmt::Display for TileSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TileSpec::Full => write!(f, "full"),
            TileSpec::StripRows(k) => write!(f, "strip-rows:{k}"),
            TileSpec::StripCols(k) => write!(f, "strip-cols:{k}"),
            TileSpec::Patch(k) => write!(f, "patch:{k}"),
            TileSpec::FixedStrip(StripAnchor::Upper(k)) => write!(f, "fixed:upper:{k}"),
            TileSpec::FixedStrip(StripAnchor::Middle(k)) => write!(f, "fixed:middle:{k}"),
            TileSpec::FixedStrip(StripAnchor::Rows { start, end }) => write!(f, "fixed:rows:{start}-{end}"),
        }
    }
}

fn parse_size(s: &str, whole: &str) -> Result<usize> {
    s.parse::<usize>()
        .map_err(|_| Error::invalid(format!("bad tile size `{s}` in `{whole}`")))
}

impl FromStr for TileSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let spec = match parts.as_slice() {
            ["full"] => TileSpec::Full,
            ["strip-rows", k] => TileSpec::StripRows(parse_size(k, s)?),
            ["strip-cols", k] => TileSpec::StripCols(parse_size(k, s)?),
            ["patch", k] => TileSpec::Patch(parse_size(k, s)?),
            ["fixed", "upper", k] => TileSpec::FixedStrip(StripAnchor::Upper(parse_size(k, s)?)),
            ["fixed", "middle", k] => TileSpec::FixedStrip(StripAnchor::Middle(parse_size(k, s)?)),
            ["fixed", "rows", range] => {
                let (a, b) = range
                    .split_once('-')
                    .ok_or_else(|| Error::invalid(format!("expected start-end in `{s}`")))?;
                TileSpec::FixedStrip(StripAnchor::Rows {
                    start: parse_size(a, s)?,
                    end: parse_size(b, s)?,
                })
            }
            _ => return Err(Error::invalid(format!("unrecognised tile spec `{s}`"))),
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl Serialize for TileSpec {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TileSpec {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
