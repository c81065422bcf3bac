//! Attention-site descriptors for the shipped networks, generated from
//! their public stage configurations.
//!
//! Baseline costs are the published whole-network figures with the native
//! SE cost subtracted, except RegNetY-800MF whose SE-free figures are known
//! directly.

use crate::cost::{analyze_network_with, FlopConvention};
use crate::descriptor::{BlockShape, NetworkDescriptor};
use crate::error::Result;
use crate::excite::ExciteConfig;
use crate::tile::TileSpec;

fn conv_out(h: usize, k: usize, s: usize) -> usize {
    (h + 2 * (k / 2) - k) / s + 1
}

/// Sets the baseline so that baseline plus native SE cost equals the
/// published totals.
fn with_published_totals(mut d: NetworkDescriptor, flops: u64, params: u64) -> NetworkDescriptor {
    d.baseline_flops = 0;
    d.baseline_params = 0;
    let conv = FlopConvention::default();
    let se = analyze_network_with(&d, TileSpec::Full, &ExciteConfig::default(), conv)
        .expect("generated descriptor is valid");
    d.baseline_flops = flops.saturating_sub(se.attention_flops);
    d.baseline_params = params.saturating_sub(se.attention_params);
    d
}

struct RegNet {
    name: &'static str,
    depths: [usize; 4],
    widths: [usize; 4],
    gflops: f64,
    mparams: f64,
}

const REGNETS: [RegNet; 6] = [
    RegNet {
        name: "regnety-200mf",
        depths: [1, 1, 4, 7],
        widths: [24, 56, 152, 368],
        gflops: 0.2,
        mparams: 3.2,
    },
    RegNet {
        name: "regnety-400mf",
        depths: [1, 3, 6, 6],
        widths: [48, 104, 208, 440],
        gflops: 0.4,
        mparams: 4.3,
    },
    RegNet {
        name: "regnety-600mf",
        depths: [1, 3, 7, 4],
        widths: [48, 112, 256, 608],
        gflops: 0.6,
        mparams: 6.1,
    },
    RegNet {
        name: "regnety-800mf",
        depths: [1, 3, 8, 2],
        widths: [64, 128, 320, 768],
        gflops: 0.8,
        mparams: 6.2,
    },
    RegNet {
        name: "regnety-1.6gf",
        depths: [2, 6, 17, 2],
        widths: [48, 120, 336, 888],
        gflops: 1.6,
        mparams: 11.2,
    },
    RegNet {
        name: "regnety-3.2gf",
        depths: [2, 5, 13, 1],
        widths: [72, 216, 576, 1512],
        gflops: 3.2,
        mparams: 19.4,
    },
];

/// RegNetY: 32-wide stride-2 stem, four stages each halving resolution in
/// their first block. SE sits after the grouped 3×3 conv with a bottleneck of
/// a quarter of the block's input width.
fn regnety(cfg: &RegNet) -> NetworkDescriptor {
    let res = 224;
    let mut d = NetworkDescriptor::new(cfg.name, [res, res], 0, 0);
    let mut h = res / 2;
    let mut w_in = 32;
    for (s, (&depth, &width)) in cfg.depths.iter().zip(&cfg.widths).enumerate() {
        h /= 2;
        for b in 0..depth {
            d.blocks.push(
                BlockShape::new(
                    format!("s{}b{}", s + 1, b + 1),
                    format!("stage{}", s + 1),
                    h,
                    h,
                    width,
                    4,
                )
                .with_ratio_base(w_in),
            );
            w_in = width;
        }
    }
    if cfg.name == "regnety-800mf" {
        d.baseline_flops = 796_350_000;
        d.baseline_params = 5_400_000;
        return d;
    }
    with_published_totals(d, (cfg.gflops * 1e9) as u64, (cfg.mparams * 1e6) as u64)
}

const EN_EXPAND: [usize; 7] = [1, 6, 6, 6, 6, 6, 6];
const EN_KERNEL: [usize; 7] = [3, 3, 5, 3, 5, 5, 3];
const EN_STRIDE: [usize; 7] = [1, 2, 2, 2, 1, 2, 1];

struct EfficientNet {
    stem: usize,
    widths: [usize; 7],
    depths: [usize; 7],
}

const EFFICIENTNETS: [EfficientNet; 4] = [
    EfficientNet {
        stem: 32,
        widths: [16, 24, 40, 80, 112, 192, 320],
        depths: [1, 2, 2, 3, 3, 4, 1],
    },
    EfficientNet {
        stem: 32,
        widths: [16, 24, 40, 80, 112, 192, 320],
        depths: [2, 3, 3, 4, 4, 5, 2],
    },
    EfficientNet {
        stem: 32,
        widths: [16, 24, 48, 88, 120, 208, 352],
        depths: [2, 3, 3, 4, 4, 5, 2],
    },
    EfficientNet {
        stem: 40,
        widths: [24, 32, 48, 96, 136, 232, 384],
        depths: [2, 3, 3, 5, 5, 6, 2],
    },
];

/// MBConv stages; SE acts on the expanded depthwise output, bottleneck a
/// quarter of the block's input width.
fn efficientnet(name: &str, cfg: &EfficientNet, res: usize, gflops: f64, mparams: f64) -> NetworkDescriptor {
    let mut d = NetworkDescriptor::new(name, [res, res], 0, 0);
    let mut h = conv_out(res, 3, 2);
    let mut w_in = cfg.stem;
    for s in 0..7 {
        for b in 0..cfg.depths[s] {
            let stride = if b == 0 { EN_STRIDE[s] } else { 1 };
            h = conv_out(h, EN_KERNEL[s], stride);
            d.blocks.push(
                BlockShape::new(
                    format!("s{}b{}", s + 1, b + 1),
                    format!("stage{}", s + 1),
                    h,
                    h,
                    w_in * EN_EXPAND[s],
                    4,
                )
                .with_ratio_base(w_in),
            );
            w_in = cfg.widths[s];
        }
    }
    with_published_totals(d, (gflops * 1e9) as u64, (mparams * 1e6) as u64)
}

/// `(kernel, expanded width, output width, has SE, stride)`.
type MbLayer = (usize, usize, usize, bool, usize);

const MBV3_LARGE: [MbLayer; 15] = [
    (3, 16, 16, false, 1),
    (3, 64, 24, false, 2),
    (3, 72, 24, false, 1),
    (5, 72, 40, true, 2),
    (5, 120, 40, true, 1),
    (5, 120, 40, true, 1),
    (3, 240, 80, false, 2),
    (3, 200, 80, false, 1),
    (3, 184, 80, false, 1),
    (3, 184, 80, false, 1),
    (3, 480, 112, true, 1),
    (3, 672, 112, true, 1),
    (5, 672, 160, true, 2),
    (5, 960, 160, true, 1),
    (5, 960, 160, true, 1),
];

const MBV3_SMALL: [MbLayer; 11] = [
    (3, 16, 16, true, 2),
    (3, 72, 24, false, 2),
    (3, 88, 24, false, 1),
    (5, 96, 40, true, 2),
    (5, 240, 40, true, 1),
    (5, 240, 40, true, 1),
    (5, 120, 48, true, 1),
    (5, 144, 48, true, 1),
    (5, 288, 96, true, 2),
    (5, 576, 96, true, 1),
    (5, 576, 96, true, 1),
];

/// MobileNetV3 backbone of an LR-ASPP segmentation model at output stride 8:
/// strides past 8 become dilations, so late layers keep the 1/8 resolution.
fn mobilenetv3(name: &str, layers: &[MbLayer], input: [usize; 2], gflops: f64, mparams: f64) -> NetworkDescriptor {
    let mut d = NetworkDescriptor::new(name, input, 0, 0);
    let (mut h, mut w) = (input[0].div_ceil(2), input[1].div_ceil(2));
    let mut stride = 2;
    for (i, &(_, exp, _, se, s)) in layers.iter().enumerate() {
        if s == 2 && stride < 8 {
            h = h.div_ceil(2);
            w = w.div_ceil(2);
            stride *= 2;
        }
        if se {
            d.blocks.push(BlockShape::new(
                format!("layer{}", i + 1),
                format!("os{stride}"),
                h,
                w,
                exp,
                4,
            ));
        }
    }
    with_published_totals(d, (gflops * 1e9) as u64, (mparams * 1e6) as u64)
}

/// Every shipped network, generated from scratch.
pub fn generate_all() -> Vec<NetworkDescriptor> {
    let mut out: Vec<NetworkDescriptor> = REGNETS.iter().map(regnety).collect();
    let en = [(224, 0.39, 5.3), (240, 0.70, 7.8), (260, 1.0, 9.2), (300, 1.8, 12.2)];
    for (i, (cfg, &(res, gf, mp))) in EFFICIENTNETS.iter().zip(&en).enumerate() {
        out.push(efficientnet(&format!("efficientnet-b{i}"), cfg, res, gf, mp));
    }
    let det = [(512, 2.5, 3.9), (640, 6.1, 6.6), (768, 11.0, 8.1)];
    for (i, &(res, gf, mp)) in det.iter().enumerate() {
        out.push(efficientnet(
            &format!("efficientdet-d{i}"),
            &EFFICIENTNETS[i],
            res,
            gf,
            mp,
        ));
    }
    out.push(mobilenetv3(
        "mobilenetv3-large-lraspp",
        &MBV3_LARGE,
        [1024, 2048],
        68.6,
        3.2,
    ));
    out.push(mobilenetv3(
        "mobilenetv3-small-lraspp",
        &MBV3_SMALL,
        [1024, 2048],
        33.5,
        0.0,
    ));
    out
}

macro_rules! shipped {
    ($($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../descriptors/", $name, ".json")))),*]
    };
}

/// `(name, canonical JSON)` of each descriptor file bundled with the crate.
pub const SHIPPED: &[(&str, &str)] = shipped!(
    "regnety-200mf",
    "regnety-400mf",
    "regnety-600mf",
    "regnety-800mf",
    "regnety-1.6gf",
    "regnety-3.2gf",
    "efficientnet-b0",
    "efficientnet-b1",
    "efficientnet-b2",
    "efficientnet-b3",
    "efficientdet-d0",
    "efficientdet-d1",
    "efficientdet-d2",
    "mobilenetv3-large-lraspp",
    "mobilenetv3-small-lraspp",
);

pub fn shipped_names() -> impl Iterator<Item = &'static str> {
    SHIPPED.iter().map(|(n, _)| *n)
}

pub fn shipped(name: &str) -> Option<Result<NetworkDescriptor>> {
    let name = name.strip_suffix(".json").unwrap_or(name);
    SHIPPED
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| NetworkDescriptor::from_json(text))
}
