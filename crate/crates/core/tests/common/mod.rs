//! Slow, obviously-correct reference implementations shared by the
//! integration tests. Nothing here calls into the library's kernels.

#![allow(dead_code)]

use rand::Rng;
use tse_core::excite::ExciteWeights;
use tse_core::tensor::GridConv;
use tse_core::Tensor4D;

/// Windowed means with clipped edges, computed element by element.
pub fn pool_oracle(x: &Tensor4D, kh: usize, kw: usize) -> (Vec<f64>, [usize; 4]) {
    let [n, c, h, w] = x.dims();
    let (oh, ow) = (h.div_ceil(kh), w.div_ceil(kw));
    let mut out = Vec::new();
    for ni in 0..n {
        for ci in 0..c {
            for oi in 0..oh {
                for oj in 0..ow {
                    let mut sum = 0.0;
                    let mut count = 0usize;
                    for j in oj * kw..(oj * kw + kw) {
                        for i in oi * kh..(oi * kh + kh) {
                            if i < h && j < w {
                                sum += f64::from(x.get([ni, ci, i, j]));
                                count += 1;
                            }
                        }
                    }
                    out.push(sum / count as f64);
                }
            }
        }
    }
    (out, [n, c, oh, ow])
}

/// Zero-padded same-size cross-correlation over an f64 grid laid out
/// `(c, h, w)` for a single sample.
pub fn conv_oracle(grid: &[f64], c: usize, h: usize, w: usize, layer: &GridConv) -> Vec<f64> {
    assert_eq!(c, layer.c_in());
    let (kh, kw) = layer.kernel();
    let mut out = vec![0.0; layer.c_out() * h * w];
    for o in 0..layer.c_out() {
        for i in 0..h as isize {
            for j in 0..w as isize {
                let mut acc = f64::from(layer.bias()[o]);
                for ci in 0..c {
                    for di in 0..kh as isize {
                        for dj in 0..kw as isize {
                            let r = i + di - (kh / 2) as isize;
                            let s = j + dj - (kw / 2) as isize;
                            if r < 0 || s < 0 || r >= h as isize || s >= w as isize {
                                continue;
                            }
                            let v = grid[(ci * h + r as usize) * w + s as usize];
                            acc += f64::from(layer.weight_at(o, ci, di as usize, dj as usize)) * v;
                        }
                    }
                }
                out[(o * h + i as usize) * w + j as usize] = acc;
            }
        }
    }
    out
}

pub fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Per-tile scales for a `th × tw` tiling, `(n, c, gh, gw)` flattened.
pub fn tile_scale_oracle(x: &Tensor4D, w: &ExciteWeights, th: usize, tw: usize) -> Vec<f64> {
    let (means, [n, c, gh, gw]) = pool_oracle(x, th, tw);
    let plane = c * gh * gw;
    let mut out = Vec::with_capacity(means.len());
    for ni in 0..n {
        let d = &means[ni * plane..(ni + 1) * plane];
        let hidden: Vec<f64> = conv_oracle(d, c, gh, gw, w.reduce())
            .into_iter()
            .map(|v| v.max(0.0))
            .collect();
        out.extend(
            conv_oracle(&hidden, w.reduced(), gh, gw, w.expand())
                .into_iter()
                .map(sigmoid),
        );
    }
    out
}

/// Tiled SE computed with scalar loops.
pub fn tse_oracle(x: &Tensor4D, w: &ExciteWeights, th: usize, tw: usize) -> Vec<f64> {
    let [n, c, h, wd] = x.dims();
    let scales = tile_scale_oracle(x, w, th, tw);
    let (gh, gw) = (h.div_ceil(th), wd.div_ceil(tw));
    let mut out = Vec::with_capacity(x.len());
    for ni in 0..n {
        for ci in 0..c {
            for i in 0..h {
                for j in 0..wd {
                    let s = scales[((ni * c + ci) * gh + i / th) * gw + j / tw];
                    out.push(f64::from(x.get([ni, ci, i, j])) * s);
                }
            }
        }
    }
    out
}

/// Classic SE with explicit per-channel loops and 1×1 excitation.
pub fn se_oracle(x: &Tensor4D, w: &ExciteWeights) -> Vec<f64> {
    assert_eq!(w.kernel(), (1, 1));
    let [n, c, h, wd] = x.dims();
    let m = w.reduced();
    let mut out = Vec::with_capacity(x.len());
    for ni in 0..n {
        let g: Vec<f64> = (0..c)
            .map(|ci| {
                let mut s = 0.0;
                for i in 0..h {
                    for j in 0..wd {
                        s += f64::from(x.get([ni, ci, i, j]));
                    }
                }
                s / (h * wd) as f64
            })
            .collect();
        let hidden: Vec<f64> = (0..m)
            .map(|o| {
                let z: f64 = (0..c)
                    .map(|i| f64::from(w.reduce().weight_at(o, i, 0, 0)) * g[i])
                    .sum::<f64>()
                    + f64::from(w.reduce().bias()[o]);
                z.max(0.0)
            })
            .collect();
        for ci in 0..c {
            let z: f64 = (0..m)
                .map(|i| f64::from(w.expand().weight_at(ci, i, 0, 0)) * hidden[i])
                .sum::<f64>()
                + f64::from(w.expand().bias()[ci]);
            let s = sigmoid(z);
            for i in 0..h {
                for j in 0..wd {
                    out.push(f64::from(x.get([ni, ci, i, j])) * s);
                }
            }
        }
    }
    out
}

pub fn max_diff(a: &[f32], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (f64::from(*x) - y).abs())
        .fold(0.0, f64::max)
}

/// Random 4-D shape with each dim in `1..=max[k]`.
pub fn random_dims<R: Rng>(rng: &mut R, max: [usize; 4]) -> [usize; 4] {
    [
        rng.random_range(1..=max[0]),
        rng.random_range(1..=max[1]),
        rng.random_range(1..=max[2]),
        rng.random_range(1..=max[3]),
    ]
}

/// Induced infinity norm (max absolute row sum) of a 1×1 layer.
pub fn inf_norm(layer: &GridConv) -> f64 {
    (0..layer.c_out())
        .map(|o| {
            (0..layer.c_in())
                .map(|i| f64::from(layer.weight_at(o, i, 0, 0)).abs())
                .sum::<f64>()
        })
        .fold(0.0, f64::max)
}
