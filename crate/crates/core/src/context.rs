//! How much a tile's mean says about the global mean.
//!
//! Every tile descriptor decomposes as `T_i^j = G_i + δ_i^j`; this module
//! computes the pieces, correlates tiles with the global descriptor, and
//! measures how the spread of `δ` shrinks with tile size.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blocks::{fixed_strip_scales, tile_scales};
use crate::error::{Error, Result};
use crate::excite::ExciteWeights;
use crate::tensor::Tensor4D;
use crate::tile::TileSpec;

/// Per-sample, per-channel, per-tile values in `(n, c, tiles_h, tiles_w)` order.
#[derive(Clone, Debug, PartialEq)]
pub struct DescriptorGrid {
    pub n: usize,
    pub c: usize,
    pub tiles_h: usize,
    pub tiles_w: usize,
    pub values: Vec<f64>,
}

impl DescriptorGrid {
    pub fn from_tensor(t: &Tensor4D) -> Self {
        let [n, c, tiles_h, tiles_w] = t.dims();
        Self {
            n,
            c,
            tiles_h,
            tiles_w,
            values: t.data().iter().map(|&v| f64::from(v)).collect(),
        }
    }

    pub fn num_tiles(&self) -> usize {
        self.tiles_h * self.tiles_w
    }

    pub fn get(&self, n: usize, c: usize, i: usize, j: usize) -> f64 {
        self.values[((n * self.c + c) * self.tiles_h + i) * self.tiles_w + j]
    }

    /// Values of one tile across channels.
    pub fn channel_vector(&self, n: usize, i: usize, j: usize) -> Vec<f64> {
        (0..self.c).map(|c| self.get(n, c, i, j)).collect()
    }
}

/// `(row_start, row_end, col_start, col_end)` of one tile.
type Window = (usize, usize, usize, usize);

/// Grid size and windows of each tile, row-major. A fixed strip is one tile.
fn tile_windows(h: usize, w: usize, tile: TileSpec) -> Result<(usize, usize, Vec<Window>)> {
    tile.validate()?;
    if let TileSpec::FixedStrip(anchor) = tile {
        let rows = anchor.resolve(h)?;
        return Ok((1, 1, vec![(rows.start, rows.end, 0, w)]));
    }
    let (th, tw) = tile.tile_dims(h, w);
    let (gh, gw) = (h.div_ceil(th), w.div_ceil(tw));
    let mut out = Vec::with_capacity(gh * gw);
    for i in 0..gh {
        for j in 0..gw {
            out.push((i * th, ((i + 1) * th).min(h), j * tw, ((j + 1) * tw).min(w)));
        }
    }
    Ok((gh, gw, out))
}

/// Element count of each tile, row-major.
pub fn tile_sizes(h: usize, w: usize, tile: TileSpec) -> Result<Vec<usize>> {
    let (_, _, windows) = tile_windows(h, w, tile)?;
    Ok(windows.iter().map(|&(r0, r1, c0, c1)| (r1 - r0) * (c1 - c0)).collect())
}

/// Tile means `T_i^j`, accumulated in f64.
pub fn tile_means(x: &Tensor4D, tile: TileSpec) -> Result<DescriptorGrid> {
    let (h, w) = (x.h(), x.w());
    let (tiles_h, tiles_w, windows) = tile_windows(h, w, tile)?;
    let planes: Vec<(usize, usize)> = (0..x.n()).flat_map(|n| (0..x.c()).map(move |c| (n, c))).collect();
    let values = planes
        .par_iter()
        .flat_map_iter(|&(n, c)| {
            let p = x.plane(n, c);
            windows.iter().map(move |&(r0, r1, c0, c1)| {
                let mut acc = 0f64;
                for r in r0..r1 {
                    for v in &p[r * w + c0..r * w + c1] {
                        acc += f64::from(*v);
                    }
                }
                acc / ((r1 - r0) * (c1 - c0)) as f64
            })
        })
        .collect();
    Ok(DescriptorGrid {
        n: x.n(),
        c: x.c(),
        tiles_h,
        tiles_w,
        values,
    })
}

/// Global average `G_i` per sample and channel, as a 1×1 grid.
pub fn gap_descriptor(x: &Tensor4D) -> DescriptorGrid {
    tile_means(x, TileSpec::Full).expect("full tiling is always valid")
}

/// `δ_i^j = T_i^j − G_i`.
pub fn tile_deltas(x: &Tensor4D, tile: TileSpec) -> Result<DescriptorGrid> {
    let mut grid = tile_means(x, tile)?;
    let g = gap_descriptor(x);
    let per_plane = grid.num_tiles();
    for (k, v) in grid.values.iter_mut().enumerate() {
        *v -= g.values[k / per_plane];
    }
    Ok(grid)
}

/// Per-tile excitation outputs before broadcasting; the same tensor the
/// forward pass multiplies in.
pub fn scale_vectors(x: &Tensor4D, w: &ExciteWeights, tile: TileSpec) -> Result<Tensor4D> {
    match tile {
        TileSpec::FixedStrip(anchor) => fixed_strip_scales(x, w, anchor),
        tile => tile_scales(x, w, tile),
    }
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return None;
    }
    Some((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

fn check_pair(t: &DescriptorGrid, g: &DescriptorGrid) -> Result<()> {
    if t.n != g.n || t.c != g.c || g.num_tiles() != 1 {
        return Err(Error::ShapeMismatch {
            op: "descriptor_correlation",
            left: [t.n, t.c, t.tiles_h, t.tiles_w],
            right: [g.n, g.c, g.tiles_h, g.tiles_w],
        });
    }
    if t.c < 2 {
        return Err(Error::invalid(
            "correlation across channels needs at least two channels",
        ));
    }
    Ok(())
}

/// Pearson correlation across channels between each tile and the global
/// descriptor, `None` where either side has no variance. Layout
/// `(n, tiles_h, tiles_w)`.
pub fn descriptor_correlation_lenient(t: &DescriptorGrid, g: &DescriptorGrid) -> Result<Vec<Option<f64>>> {
    check_pair(t, g)?;
    let mut out = Vec::with_capacity(t.n * t.num_tiles());
    for n in 0..t.n {
        let gv = g.channel_vector(n, 0, 0);
        for i in 0..t.tiles_h {
            for j in 0..t.tiles_w {
                out.push(pearson(&t.channel_vector(n, i, j), &gv));
            }
        }
    }
    Ok(out)
}

/// Like [`descriptor_correlation_lenient`] but zero variance is an error.
pub fn descriptor_correlation(t: &DescriptorGrid, g: &DescriptorGrid) -> Result<Vec<f64>> {
    let per_tile = t.num_tiles();
    descriptor_correlation_lenient(t, g)?
        .into_iter()
        .enumerate()
        .map(|(k, v)| {
            v.ok_or(Error::UndefinedCorrelation {
                sample: k / per_tile,
                row: (k % per_tile) / t.tiles_w,
                col: k % t.tiles_w,
            })
        })
        .collect()
}

/// Channels whose activations are constant over space, as `(sample, channel)`.
pub fn constant_channels(x: &Tensor4D) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for n in 0..x.n() {
        for c in 0..x.c() {
            let p = x.plane(n, c);
            if p.iter().all(|&v| v == p[0]) {
                out.push((n, c));
            }
        }
    }
    out
}

/// I.i.d. normal noise smoothed by a separable box blur `max(1, H/4)` wide.
/// Windows are clipped at the borders.
pub fn smooth_synthetic<R: Rng + ?Sized>(dims: [usize; 4], rng: &mut R) -> Result<Tensor4D> {
    let noise = Tensor4D::random_normal(dims, 1.0, rng)?;
    let [_, _, h, w] = dims;
    let width = (h / 4).max(1);
    let (lo, hi) = (width / 2, width - 1 - width / 2);
    let mut data = Vec::with_capacity(noise.len());
    let mut tmp = vec![0f64; h * w];
    for plane in noise.data().chunks(h * w) {
        for r in 0..h {
            for c in 0..w {
                let (a, b) = (c.saturating_sub(lo), (c + hi).min(w - 1));
                let s: f64 = plane[r * w + a..=r * w + b].iter().map(|&v| f64::from(v)).sum();
                tmp[r * w + c] = s / (b - a + 1) as f64;
            }
        }
        for r in 0..h {
            let (a, b) = (r.saturating_sub(lo), (r + hi).min(h - 1));
            for c in 0..w {
                let s: f64 = (a..=b).map(|k| tmp[k * w + c]).sum();
                data.push((s / (b - a + 1) as f64) as f32);
            }
        }
    }
    Tensor4D::new(dims, data)
}

/// Random stream for trial `trial` of an experiment seeded with `seed`.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Mean correlation with the global descriptor for one tiling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TileCorrelation {
    pub tile_spec: TileSpec,
    /// Mean over all tensors and tiles with a defined correlation.
    pub mean: Option<f64>,
    /// Mean per tile position over samples, row-major.
    pub per_tile_correlation: Vec<Option<f64>>,
    /// Tiles whose correlation was undefined.
    pub undefined: usize,
}

fn summarize(tile: TileSpec, tiles: usize, samples: &[Vec<Option<f64>>]) -> TileCorrelation {
    let mut sum = vec![0f64; tiles];
    let mut count = vec![0usize; tiles];
    let mut undefined = 0;
    for s in samples {
        for (k, v) in s.iter().enumerate() {
            match v {
                Some(v) => {
                    sum[k % tiles] += v;
                    count[k % tiles] += 1;
                }
                None => undefined += 1,
            }
        }
    }
    let total: usize = count.iter().sum();
    TileCorrelation {
        tile_spec: tile,
        mean: (total > 0).then(|| sum.iter().sum::<f64>() / total as f64),
        per_tile_correlation: sum
            .iter()
            .zip(&count)
            .map(|(s, &c)| (c > 0).then(|| s / c as f64))
            .collect(),
        undefined,
    }
}

/// Tile/global correlation of a given tensor for each tiling.
pub fn correlation_profile(x: &Tensor4D, tiles: &[TileSpec]) -> Result<Vec<TileCorrelation>> {
    let g = gap_descriptor(x);
    tiles
        .iter()
        .map(|&tile| {
            let t = tile_means(x, tile)?;
            let corr = descriptor_correlation_lenient(&t, &g)?;
            Ok(summarize(tile, t.num_tiles(), &[corr]))
        })
        .collect()
}

/// Tile/global correlation averaged over `count` smooth synthetic tensors of
/// shape `dims`. Tensor `k` is drawn from `trial_rng(seed, k)`.
pub fn synthetic_correlation(
    dims: [usize; 4],
    tiles: &[TileSpec],
    count: usize,
    seed: u64,
) -> Result<Vec<TileCorrelation>> {
    if count == 0 {
        return Err(Error::invalid("need at least one synthetic tensor"));
    }
    for t in tiles {
        tile_windows(dims[2], dims[3], *t)?;
    }
    let per_tensor: Vec<Vec<Vec<Option<f64>>>> = (0..count as u64)
        .into_par_iter()
        .map(|k| {
            let x = smooth_synthetic(dims, &mut trial_rng(seed, k))?;
            let g = gap_descriptor(&x);
            tiles
                .iter()
                .map(|&tile| descriptor_correlation_lenient(&tile_means(&x, tile)?, &g))
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(tiles
        .iter()
        .enumerate()
        .map(|(i, &tile)| {
            let samples: Vec<Vec<Option<f64>>> = per_tensor.iter().map(|p| p[i].clone()).collect();
            summarize(tile, num_tiles_of(dims, tile), &samples)
        })
        .collect())
}

fn num_tiles_of(dims: [usize; 4], tile: TileSpec) -> usize {
    crate::tile::num_tiles(dims[2], dims[3], tile)
}

/// Tiles per trial in the scaling experiment.
pub const DELTA_TILES: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaStats {
    /// Points per tile.
    pub n: Vec<usize>,
    pub sigma: f64,
    pub variance: f64,
    /// Measured standard deviation of `δ` for each `n`.
    pub std: Vec<f64>,
    /// Least-squares slope of `ln std` against `ln n`; absent when any std is zero.
    pub slope: Option<f64>,
    pub trials: usize,
    pub seed: u64,
}

/// Expected `std(δ)` for tiles of `n` i.i.d. points with deviation `sigma`,
/// `DELTA_TILES` tiles sharing the global mean.
pub fn delta_std_oracle(sigma: f64, n: usize) -> f64 {
    let t = DELTA_TILES as f64;
    sigma * ((t - 1.0) / (n as f64 * t)).sqrt()
}

/// Least-squares slope of `y` against `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let m = x.len() as f64;
    let mx = x.iter().sum::<f64>() / m;
    let my = y.iter().sum::<f64>() / m;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Draws `DELTA_TILES` tiles of `n` i.i.d. `N(0, sigma²)` points per trial,
/// measures the spread of tile mean minus overall mean, and fits the
/// log-log slope against `n`.
pub fn delta_scaling_experiment(sigma: f64, tile_sizes: &[usize], trials: usize, seed: u64) -> Result<DeltaStats> {
    if !sigma.is_finite() || sigma < 0.0 {
        return Err(Error::invalid(format!(
            "sigma must be finite and non-negative, got {sigma}"
        )));
    }
    if trials < 100 {
        return Err(Error::invalid(format!("need at least 100 trials, got {trials}")));
    }
    if tile_sizes.contains(&0) {
        return Err(Error::invalid("tile sizes must be positive"));
    }
    let mut distinct = tile_sizes.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 4 {
        return Err(Error::invalid(format!(
            "need at least 4 distinct tile sizes, got {}",
            distinct.len()
        )));
    }
    let sums: Vec<Vec<f64>> = (0..trials as u64)
        .into_par_iter()
        .map(|trial| {
            let mut rng = trial_rng(seed, trial);
            tile_sizes
                .iter()
                .map(|&n| {
                    let means: Vec<f64> = (0..DELTA_TILES)
                        .map(|_| {
                            let s: f64 = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).sum();
                            sigma * s / n as f64
                        })
                        .collect();
                    let g = means.iter().sum::<f64>() / DELTA_TILES as f64;
                    means.iter().map(|m| (m - g) * (m - g)).sum()
                })
                .collect()
        })
        .collect();
    let samples = (trials * DELTA_TILES) as f64;
    let std: Vec<f64> = (0..tile_sizes.len())
        .map(|k| (sums.iter().map(|s| s[k]).sum::<f64>() / samples).sqrt())
        .collect();
    let slope = std.iter().all(|&s| s > 0.0).then(|| {
        let lx: Vec<f64> = tile_sizes.iter().map(|&n| (n as f64).ln()).collect();
        let ly: Vec<f64> = std.iter().map(|s| s.ln()).collect();
        fit_slope(&lx, &ly)
    });
    Ok(DeltaStats {
        n: tile_sizes.to_vec(),
        sigma,
        variance: sigma * sigma,
        std,
        slope,
        trials,
        seed,
    })
}

pub const REPORT_SCHEMA: &str = "tse-context/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContextReport {
    pub schema: String,
    /// `synthetic` or the input tensor path.
    pub source: String,
    pub seed: Option<u64>,
    pub tensors: usize,
    pub correlations: Vec<TileCorrelation>,
    /// `(sample, channel)` pairs with no spatial variation.
    pub constant_channels: Vec<(usize, usize)>,
    pub delta_stats: Option<DeltaStats>,
}
