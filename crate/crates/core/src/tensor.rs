//! Dense NCHW tensor and the handful of kernels the attention blocks need.
//!
//! Storage is `f32`; every reduction accumulates in `f64` in row-major window
//! order, one accumulator per output cell, so results are bit-reproducible
//! regardless of how work is split across threads.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Dense rank-4 activation tensor in `(n, c, h, w)` row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor4D {
    dims: [usize; 4],
    data: Vec<f32>,
}

fn element_count(dims: [usize; 4]) -> Result<usize> {
    if dims.contains(&0) {
        return Err(Error::invalid(format!("tensor dims must be positive, got {dims:?}")));
    }
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::invalid(format!("tensor dims {dims:?} overflow")))
}

impl Tensor4D {
    pub fn new(dims: [usize; 4], data: Vec<f32>) -> Result<Self> {
        let len = element_count(dims)?;
        if data.len() != len {
            return Err(Error::invalid(format!(
                "data length {} does not match dims {dims:?} ({len} elements)",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn filled(dims: [usize; 4], value: f32) -> Result<Self> {
        let len = element_count(dims)?;
        Ok(Self {
            dims,
            data: vec![value; len],
        })
    }

    pub fn zeros(dims: [usize; 4]) -> Result<Self> {
        Self::filled(dims, 0.0)
    }

    /// Builds a tensor by evaluating `f` at every `[n, c, i, j]` index.
    pub fn from_fn(dims: [usize; 4], mut f: impl FnMut([usize; 4]) -> f32) -> Result<Self> {
        let len = element_count(dims)?;
        let mut data = Vec::with_capacity(len);
        for n in 0..dims[0] {
            for c in 0..dims[1] {
                for i in 0..dims[2] {
                    for j in 0..dims[3] {
                        data.push(f([n, c, i, j]));
                    }
                }
            }
        }
        Ok(Self { dims, data })
    }

    /// Uniform samples in `[lo, hi)`.
    pub fn random_uniform<R: Rng + ?Sized>(dims: [usize; 4], lo: f32, hi: f32, rng: &mut R) -> Result<Self> {
        let len = element_count(dims)?;
        let data = (0..len).map(|_| rng.random_range(lo..hi)).collect();
        Ok(Self { dims, data })
    }

    /// Samples from `N(0, std^2)`.
    pub fn random_normal<R: Rng + ?Sized>(dims: [usize; 4], std: f32, rng: &mut R) -> Result<Self> {
        let len = element_count(dims)?;
        let data = (0..len)
            .map(|_| {
                let z: f32 = StandardNormal.sample(rng);
                z * std
            })
            .collect();
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn n(&self) -> usize {
        self.dims[0]
    }

    pub fn c(&self) -> usize {
        self.dims[1]
    }

    pub fn h(&self) -> usize {
        self.dims[2]
    }

    pub fn w(&self) -> usize {
        self.dims[3]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    fn offset(&self, idx: [usize; 4]) -> usize {
        let [_, c, h, w] = self.dims;
        ((idx[0] * c + idx[1]) * h + idx[2]) * w + idx[3]
    }

    pub fn get(&self, idx: [usize; 4]) -> f32 {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: [usize; 4], value: f32) {
        let off = self.offset(idx);
        self.data[off] = value;
    }

    /// The `h × w` plane of sample `n`, channel `c`.
    pub fn plane(&self, n: usize, c: usize) -> &[f32] {
        let len = self.dims[2] * self.dims[3];
        let start = (n * self.dims[1] + c) * len;
        &self.data[start..start + len]
    }

    /// Rows `[start, end)` of every plane, as a new tensor.
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.h() {
            return Err(Error::invalid(format!(
                "row range [{start}, {end}) outside tensor height {}",
                self.h()
            )));
        }
        let [n, c, _, w] = self.dims;
        let mut data = Vec::with_capacity(n * c * (end - start) * w);
        for ni in 0..n {
            for ci in 0..c {
                let plane = self.plane(ni, ci);
                data.extend_from_slice(&plane[start * w..end * w]);
            }
        }
        Self::new([n, c, end - start, w], data)
    }

    pub fn max_abs_diff(&self, other: &Tensor4D) -> Result<f64> {
        same_dims("max_abs_diff", self, other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (f64::from(*a) - f64::from(*b)).abs())
            .fold(0.0, f64::max))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

fn same_dims(op: &'static str, a: &Tensor4D, b: &Tensor4D) -> Result<()> {
    if a.dims != b.dims {
        return Err(Error::ShapeMismatch {
            op,
            left: a.dims,
            right: b.dims,
        });
    }
    Ok(())
}

/// Non-overlapping average pooling with stride equal to the kernel and
/// ceil-mode output size. Edge windows that run past the tensor are clipped
/// and divided by the number of in-bounds elements.
pub fn avg_pool2d(x: &Tensor4D, kh: usize, kw: usize) -> Result<Tensor4D> {
    if kh == 0 || kw == 0 {
        return Err(Error::invalid(format!(
            "pool kernel must be positive, got ({kh}, {kw})"
        )));
    }
    let [n, c, h, w] = x.dims;
    let oh = h.div_ceil(kh);
    let ow = w.div_ceil(kw);
    let mut out = vec![0f32; n * c * oh * ow];
    out.par_chunks_mut(oh * ow)
        .zip(x.data.par_chunks(h * w))
        .for_each(|(dst, src)| {
            for oi in 0..oh {
                let r0 = oi * kh;
                let r1 = (r0 + kh).min(h);
                for oj in 0..ow {
                    let c0 = oj * kw;
                    let c1 = (c0 + kw).min(w);
                    let mut acc = 0f64;
                    for r in r0..r1 {
                        for v in &src[r * w + c0..r * w + c1] {
                            acc += f64::from(*v);
                        }
                    }
                    let count = ((r1 - r0) * (c1 - c0)) as f64;
                    dst[oi * ow + oj] = (acc / count) as f32;
                }
            }
        });
    Tensor4D::new([n, c, oh, ow], out)
}

/// A convolution layer applied to a pooled descriptor grid: stride 1,
/// zero "same" padding, odd kernel `kh × kw`, weights laid out
/// `(c_out, c_in, kh, kw)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridConv {
    c_out: usize,
    c_in: usize,
    kernel: (usize, usize),
    weight: Vec<f32>,
    bias: Vec<f32>,
}

impl GridConv {
    pub fn new(c_out: usize, c_in: usize, kernel: (usize, usize), weight: Vec<f32>, bias: Vec<f32>) -> Result<Self> {
        let (kh, kw) = kernel;
        if c_out == 0 || c_in == 0 {
            return Err(Error::invalid("conv channel counts must be positive"));
        }
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(Error::invalid(format!("conv kernel must be odd, got {kh}x{kw}")));
        }
        if weight.len() != c_out * c_in * kh * kw {
            return Err(Error::invalid(format!(
                "conv weight has {} values, expected {c_out}x{c_in}x{kh}x{kw}",
                weight.len()
            )));
        }
        if bias.len() != c_out {
            return Err(Error::invalid(format!(
                "conv bias has {} values, expected {c_out}",
                bias.len()
            )));
        }
        Ok(Self {
            c_out,
            c_in,
            kernel,
            weight,
            bias,
        })
    }

    pub fn c_out(&self) -> usize {
        self.c_out
    }

    pub fn c_in(&self) -> usize {
        self.c_in
    }

    pub fn kernel(&self) -> (usize, usize) {
        self.kernel
    }

    pub fn weight(&self) -> &[f32] {
        &self.weight
    }

    pub fn bias(&self) -> &[f32] {
        &self.bias
    }

    pub fn weight_at(&self, o: usize, i: usize, di: usize, dj: usize) -> f32 {
        let (kh, kw) = self.kernel;
        self.weight[((o * self.c_in + i) * kh + di) * kw + dj]
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

/// Same-size zero-padded cross-correlation of `x` with `layer`.
pub fn conv_grid(x: &Tensor4D, layer: &GridConv) -> Result<Tensor4D> {
    let [n, c, h, w] = x.dims;
    if c != layer.c_in {
        return Err(Error::invalid(format!(
            "conv expects {} input channels, tensor has {c}",
            layer.c_in
        )));
    }
    let (kh, kw) = layer.kernel;
    let (ph, pw) = (kh / 2, kw / 2);
    let plane = h * w;
    let mut out = vec![0f32; n * layer.c_out * plane];
    out.par_chunks_mut(plane).enumerate().for_each(|(idx, dst)| {
        let (ni, o) = (idx / layer.c_out, idx % layer.c_out);
        let sample = &x.data[ni * c * plane..(ni + 1) * c * plane];
        for i in 0..h {
            for j in 0..w {
                let mut acc = f64::from(layer.bias[o]);
                for ci in 0..c {
                    let src = &sample[ci * plane..(ci + 1) * plane];
                    for di in 0..kh {
                        let Some(r) = (i + di).checked_sub(ph).filter(|&r| r < h) else {
                            continue;
                        };
                        for dj in 0..kw {
                            let Some(s) = (j + dj).checked_sub(pw).filter(|&s| s < w) else {
                                continue;
                            };
                            acc += f64::from(layer.weight_at(o, ci, di, dj)) * f64::from(src[r * w + s]);
                        }
                    }
                }
                dst[i * w + j] = acc as f32;
            }
        }
    });
    Tensor4D::new([n, layer.c_out, h, w], out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, v: f32) -> f32 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Sigmoid => (1.0 / (1.0 + (-f64::from(v)).exp())) as f32,
        }
    }
}

pub fn pointwise(x: &Tensor4D, kind: Activation) -> Tensor4D {
    Tensor4D {
        dims: x.dims,
        data: x.data.iter().map(|&v| kind.apply(v)).collect(),
    }
}

/// Nearest-neighbour upsampling of a tile grid: each cell of `y` is repeated
/// `kh × kw` times and the result cropped to `target_h × target_w`.
pub fn broadcast_tiles(y: &Tensor4D, kh: usize, kw: usize, target_h: usize, target_w: usize) -> Result<Tensor4D> {
    if kh == 0 || kw == 0 || target_h == 0 || target_w == 0 {
        return Err(Error::invalid("broadcast kernel and target must be positive"));
    }
    if target_h.div_ceil(kh) != y.h() || target_w.div_ceil(kw) != y.w() {
        return Err(Error::invalid(format!(
            "tile grid {}x{} inconsistent with target {target_h}x{target_w} and tile {kh}x{kw}",
            y.h(),
            y.w()
        )));
    }
    let [n, c, gh, gw] = y.dims;
    let plane = target_h * target_w;
    let mut out = vec![0f32; n * c * plane];
    out.par_chunks_mut(plane)
        .zip(y.data.par_chunks(gh * gw))
        .for_each(|(dst, grid)| {
            for i in 0..target_h {
                let row = &grid[(i / kh) * gw..(i / kh + 1) * gw];
                for j in 0..target_w {
                    dst[i * target_w + j] = row[j / kw];
                }
            }
        });
    Tensor4D::new([n, c, target_h, target_w], out)
}

pub fn mul_elementwise(x: &Tensor4D, y: &Tensor4D) -> Result<Tensor4D> {
    same_dims("mul_elementwise", x, y)?;
    Ok(Tensor4D {
        dims: x.dims,
        data: x.data.iter().zip(&y.data).map(|(a, b)| a * b).collect(),
    })
}
