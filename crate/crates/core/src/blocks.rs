//! SE and tiled SE forward passes.

use crate::error::{Error, Result};
use crate::excite::{ExciteConfig, ExciteWeights};
use crate::tensor::{avg_pool2d, broadcast_tiles, mul_elementwise, Tensor4D};
use crate::tile::{StripAnchor, TileSpec};

fn check_channels(x: &Tensor4D, w: &ExciteWeights) -> Result<()> {
    if x.c() != w.channels() {
        return Err(Error::invalid(format!(
            "input has {} channels, excite weights expect {}",
            x.c(),
            w.channels()
        )));
    }
    Ok(())
}

/// Per-tile scale vectors before broadcasting, shape `(n, c, ⌈H/h⌉, ⌈W/w⌉)`.
pub fn tile_scales(x: &Tensor4D, w: &ExciteWeights, tile: TileSpec) -> Result<Tensor4D> {
    check_channels(x, w)?;
    tile.validate()?;
    if tile.is_fixed() {
        return Err(Error::invalid(format!(
            "{tile} has no tile grid; use fixed_strip_forward"
        )));
    }
    let (th, tw) = tile.tile_dims(x.h(), x.w());
    w.excite(&avg_pool2d(x, th, tw)?)
}

/// Squeeze-and-excite: one scale per channel from the global average.
pub fn se_forward(x: &Tensor4D, w: &ExciteWeights) -> Result<Tensor4D> {
    let scales = tile_scales(x, w, TileSpec::Full)?;
    mul_elementwise(x, &broadcast_tiles(&scales, x.h(), x.w(), x.h(), x.w())?)
}

/// Tiled squeeze-and-excite: each tile's channels are scaled by that tile's
/// own excitation output.
pub fn tse_forward(x: &Tensor4D, w: &ExciteWeights, tile: TileSpec, conf: &ExciteConfig) -> Result<Tensor4D> {
    w.check_config(conf)?;
    let scales = tile_scales(x, w, tile)?;
    let (th, tw) = tile.tile_dims(x.h(), x.w());
    mul_elementwise(x, &broadcast_tiles(&scales, th, tw, x.h(), x.w())?)
}

/// Scale vector computed from a single row strip, applied to the whole tensor.
pub fn fixed_strip_scales(x: &Tensor4D, w: &ExciteWeights, anchor: StripAnchor) -> Result<Tensor4D> {
    check_channels(x, w)?;
    let rows = anchor.resolve(x.h())?;
    let strip = x.slice_rows(rows.start, rows.end)?;
    w.excite(&avg_pool2d(&strip, strip.h(), strip.w())?)
}

pub fn fixed_strip_forward(x: &Tensor4D, w: &ExciteWeights, anchor: StripAnchor) -> Result<Tensor4D> {
    let scales = fixed_strip_scales(x, w, anchor)?;
    mul_elementwise(x, &broadcast_tiles(&scales, x.h(), x.w(), x.h(), x.w())?)
}

/// An attention block: excitation weights plus the tiling used to squeeze.
#[derive(Clone, Debug, PartialEq)]
pub struct TseBlock {
    weights: ExciteWeights,
    tile: TileSpec,
}

impl TseBlock {
    pub fn new(weights: ExciteWeights, tile: TileSpec) -> Result<Self> {
        tile.validate()?;
        Ok(Self { weights, tile })
    }

    pub fn weights(&self) -> &ExciteWeights {
        &self.weights
    }

    pub fn tile(&self) -> TileSpec {
        self.tile
    }

    pub fn param_count(&self) -> usize {
        self.weights.param_count()
    }

    pub fn forward(&self, x: &Tensor4D) -> Result<Tensor4D> {
        match self.tile {
            TileSpec::FixedStrip(anchor) => fixed_strip_forward(x, &self.weights, anchor),
            tile => {
                let conf = ExciteConfig {
                    reduction_ratio: None,
                    kernel: self.weights.kernel(),
                };
                tse_forward(x, &self.weights, tile, &conf)
            }
        }
    }
}

/// Reuses trained SE weights, unchanged, inside a TSE block.
pub fn transplant(se_weights: &ExciteWeights, tile: TileSpec) -> Result<TseBlock> {
    if se_weights.kernel() != (1, 1) {
        let (kx, ky) = se_weights.kernel();
        return Err(Error::invalid(format!(
            "only 1x1 SE excitations transplant, got {kx}x{ky}"
        )));
    }
    TseBlock::new(se_weights.clone(), tile)
}
