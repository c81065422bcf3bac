//! Analytical cost of SE/TSE attention: pipeline buffering, FLOPs and
//! parameters per block and per network.
//!
//! Buffering is counted in activation elements: the smallest slice of the
//! input a streaming accelerator must hold before the first rescale multiply
//! can issue, i.e. one tile's rows across the full width (`h × w × C`).
//!
//! FLOPs count one multiply-accumulate as one FLOP. By default only the two
//! excitation convolutions (and their bias adds) are counted, once per tile;
//! the pooling adds and the rescale multiplies can be switched on through
//! [`FlopConvention`].

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

pub use crate::descriptor::BlockShape;
use crate::descriptor::NetworkDescriptor;
use crate::error::Result;
use crate::excite::{reduced_width, ExciteConfig};
use crate::tile::{num_tiles, TileSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlopConvention {
    /// One add per excitation output for the conv biases.
    pub bias_adds: bool,
    /// One add per input element for the squeeze.
    pub pooling_adds: bool,
    /// One multiply per input element for the rescale.
    pub rescale_muls: bool,
}

impl FlopConvention {
    /// Excitation convs only, biases included.
    pub const EXCITE_ONLY: Self = Self {
        bias_adds: true,
        pooling_adds: false,
        rescale_muls: false,
    };

    /// Everything the block executes except the activations.
    pub const ELEMENTWISE: Self = Self {
        bias_adds: true,
        pooling_adds: true,
        rescale_muls: true,
    };
}

impl Default for FlopConvention {
    fn default() -> Self {
        Self::EXCITE_ONLY
    }
}

fn reduced(shape: &BlockShape, conf: &ExciteConfig) -> u64 {
    reduced_width(shape.ratio_base(), conf.ratio_or(shape.r)) as u64
}

/// Minimum pipeline buffering, in elements.
pub fn block_buffer(shape: &BlockShape, tile: TileSpec) -> u64 {
    let (th, tw) = tile.tile_dims(shape.h, shape.w);
    (th * tw * shape.c) as u64
}

/// Multiply-accumulates of one excitation pass over a single descriptor.
pub fn excite_macs(shape: &BlockShape, conf: &ExciteConfig) -> u64 {
    2 * conf.kernel_area() as u64 * shape.c as u64 * reduced(shape, conf)
}

pub fn block_flops_with(shape: &BlockShape, tile: TileSpec, conf: &ExciteConfig, conv: FlopConvention) -> u64 {
    let tiles = num_tiles(shape.h, shape.w, tile) as u64;
    let mut per_tile = excite_macs(shape, conf);
    if conv.bias_adds {
        per_tile += reduced(shape, conf) + shape.c as u64;
    }
    let elems = shape.elements() as u64;
    tiles * per_tile + u64::from(conv.pooling_adds) * elems + u64::from(conv.rescale_muls) * elems
}

pub fn block_flops(shape: &BlockShape, tile: TileSpec, conf: &ExciteConfig) -> u64 {
    block_flops_with(shape, tile, conf, FlopConvention::default())
}

/// Weights plus biases of both excitation convs. Independent of tiling.
pub fn block_params(shape: &BlockShape, conf: &ExciteConfig) -> u64 {
    let c = shape.c as u64;
    let m = reduced(shape, conf);
    let k = conf.kernel_area() as u64;
    k * c * m + m + k * m * c + c
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockCost {
    pub name: String,
    pub stage: String,
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub tiles: u64,
    pub buffer: u64,
    pub flops: u64,
    pub params: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub schema: String,
    pub network: String,
    pub method: String,
    pub tile: TileSpec,
    pub excite: ExciteConfig,
    pub flop_convention: FlopConvention,
    pub baseline_flops: u64,
    pub baseline_params: u64,
    pub buffer: u64,
    pub attention_flops: u64,
    pub attention_params: u64,
    pub total_flops: u64,
    pub total_params: u64,
    pub blocks: Vec<BlockCost>,
}

pub fn analyze_network(desc: &NetworkDescriptor, tile: TileSpec, conf: &ExciteConfig) -> Result<CostReport> {
    analyze_network_with(desc, tile, conf, FlopConvention::default())
}

pub fn analyze_network_with(
    desc: &NetworkDescriptor,
    tile: TileSpec,
    conf: &ExciteConfig,
    conv: FlopConvention,
) -> Result<CostReport> {
    desc.validate()?;
    tile.validate()?;
    conf.validate()?;
    let blocks: Vec<BlockCost> = desc
        .blocks
        .iter()
        .map(|b| BlockCost {
            name: b.name.clone(),
            stage: b.stage.clone(),
            h: b.h,
            w: b.w,
            c: b.c,
            tiles: num_tiles(b.h, b.w, tile) as u64,
            buffer: block_buffer(b, tile),
            flops: block_flops_with(b, tile, conf, conv),
            params: block_params(b, conf),
        })
        .collect();
    let buffer = blocks.iter().map(|b| b.buffer).sum();
    let attention_flops = blocks.iter().map(|b| b.flops).sum();
    let attention_params = blocks.iter().map(|b| b.params).sum();
    Ok(CostReport {
        schema: "tse-cost/1".to_string(),
        network: desc.name.clone(),
        method: method_label(tile, conf),
        tile,
        excite: *conf,
        flop_convention: conv,
        baseline_flops: desc.baseline_flops,
        baseline_params: desc.baseline_params,
        buffer,
        attention_flops,
        attention_params,
        total_flops: desc.baseline_flops + attention_flops,
        total_params: desc.baseline_params + attention_params,
        blocks,
    })
}

/// `TSE_7xW`, or `TSE_1xW C3x1 R2` when the excitation departs from 1×1.
fn method_label(tile: TileSpec, conf: &ExciteConfig) -> String {
    let mut label = tile.method_label();
    if conf.kernel != (1, 1) || conf.reduction_ratio.is_some() {
        let _ = write!(label, " C{}x{}", conf.kernel.0, conf.kernel.1);
        if let Some(r) = conf.reduction_ratio {
            let _ = write!(label, " R{r}");
        }
    }
    label
}

/// `1.07M`-style element count.
pub fn format_millions(v: u64) -> String {
    format!("{:.2}M", v as f64 / 1e6)
}

impl CostReport {
    /// Plain-text table: a `Method / Params / MFLOPs / Buffer` summary
    /// followed by the per-block breakdown.
    pub fn render_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "network: {}", self.network);
        let _ = writeln!(s, "{:<22} {:>9} {:>11} {:>9}", "Method", "Params", "MFLOPs", "Buffer");
        let _ = writeln!(
            s,
            "{:<22} {:>9} {:>11.2} {:>9}",
            "Vanilla",
            format_millions(self.baseline_params),
            self.baseline_flops as f64 / 1e6,
            "N/A"
        );
        let _ = writeln!(
            s,
            "{:<22} {:>9} {:>11.2} {:>9}",
            self.method,
            format_millions(self.total_params),
            self.total_flops as f64 / 1e6,
            format_millions(self.buffer)
        );
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "{:<12} {:<8} {:>16} {:>6} {:>10} {:>12} {:>10}",
            "block", "stage", "HxWxC", "tiles", "buffer", "flops", "params"
        );
        for b in &self.blocks {
            let _ = writeln!(
                s,
                "{:<12} {:<8} {:>16} {:>6} {:>10} {:>12} {:>10}",
                b.name,
                b.stage,
                format!("{}x{}x{}", b.h, b.w, b.c),
                b.tiles,
                b.buffer,
                b.flops,
                b.params
            );
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tile::StripAnchor;

    fn shape(h: usize, w: usize, c: usize, r: usize) -> BlockShape {
        BlockShape::new("b", "s", h, w, c, r)
    }

    #[test]
    fn buffer_formulas() {
        let s = shape(28, 28, 672, 4);
        assert_eq!(block_buffer(&s, TileSpec::Full), 526_848);
        assert_eq!(block_buffer(&s, TileSpec::StripRows(7)), 131_712);
        assert_eq!(block_buffer(&s, TileSpec::StripCols(7)), 131_712);
        assert_eq!(block_buffer(&s, TileSpec::Patch(7)), 7 * 7 * 672);
        assert_eq!(block_buffer(&s, TileSpec::Patch(30)), 526_848);
        assert_eq!(block_buffer(&s, TileSpec::FixedStrip(StripAnchor::Upper(7))), 526_848);
    }

    #[test]
    fn excite_macs_for_se() {
        let s = shape(56, 56, 64, 4);
        assert_eq!(excite_macs(&s, &ExciteConfig::se(4)), 2048);
        assert_eq!(num_tiles(56, 56, TileSpec::Full), 1);
        let conv = FlopConvention {
            bias_adds: false,
            pooling_adds: false,
            rescale_muls: false,
        };
        let full = block_flops_with(&s, TileSpec::Full, &ExciteConfig::se(4), conv);
        let rows = block_flops_with(&s, TileSpec::StripRows(1), &ExciteConfig::se(4), conv);
        assert_eq!(full, 2048);
        assert_eq!(rows, 56 * full);
    }

    #[test]
    fn elementwise_convention_adds_two_passes() {
        let s = shape(14, 14, 32, 4);
        let conf = ExciteConfig::se(4);
        let a = block_flops_with(&s, TileSpec::Full, &conf, FlopConvention::EXCITE_ONLY);
        let b = block_flops_with(&s, TileSpec::Full, &conf, FlopConvention::ELEMENTWISE);
        assert_eq!(b - a, 2 * 14 * 14 * 32);
    }

    #[test]
    fn params_formula_and_ratio_base() {
        let s = shape(7, 7, 768, 4);
        assert_eq!(block_params(&s, &ExciteConfig::se(4)), 2 * 768 * 192 + 192 + 768);
        let s = s.with_ratio_base(320);
        assert_eq!(block_params(&s, &"c1x1".parse().unwrap()), 2 * 768 * 80 + 80 + 768);
        assert_eq!(
            block_params(&s, &"c3x3:r2".parse().unwrap()),
            18 * 768 * 160 + 160 + 768
        );
    }

    #[test]
    fn native_ratio_used_when_unset() {
        let s = shape(7, 7, 64, 8);
        assert_eq!(excite_macs(&s, &"c1x1".parse().unwrap()), 2 * 64 * 8);
        assert_eq!(excite_macs(&s, &ExciteConfig::se(4)), 2 * 64 * 16);
    }

    #[test]
    fn report_totals_are_sums() {
        let mut d = NetworkDescriptor::new("t", [32, 32], 1_000, 10);
        d.blocks.push(shape(16, 16, 8, 4));
        d.blocks.push(BlockShape::new("c", "s2", 8, 8, 16, 4));
        let r = analyze_network(&d, TileSpec::StripRows(3), &ExciteConfig::se(4)).unwrap();
        assert_eq!(r.buffer, r.blocks.iter().map(|b| b.buffer).sum::<u64>());
        assert_eq!(r.total_flops, 1_000 + r.blocks.iter().map(|b| b.flops).sum::<u64>());
        assert_eq!(r.total_params, 10 + r.blocks.iter().map(|b| b.params).sum::<u64>());
        let table = r.render_table();
        assert!(table.contains("TSE_3xW C1x1 R4"), "{table}");
    }

    #[test]
    fn invalid_descriptor_rejected() {
        let mut d = NetworkDescriptor::new("t", [32, 32], 0, 0);
        d.blocks.push(shape(0, 16, 8, 4));
        assert!(analyze_network(&d, TileSpec::Full, &ExciteConfig::default()).is_err());
    }
}
