use crate::policy::{validate_op, AugKind, AugOpInstance, Catalog, Policy};

use super::image::ImageBuffer;
use super::rng::{SampleKey, SampleRng};
use super::{record_kernel_invocation, TransformError};

/// Applies one op: Bernoulli gate on `apply_probability`, then the kernel.
/// On a skipped gate the input comes back unchanged.
pub fn apply_op(img: &ImageBuffer, op: &AugOpInstance, rng: &mut SampleRng) -> Result<ImageBuffer, TransformError> {
    let violations = validate_op(op, 0, Catalog::standard());
    if !violations.is_empty() {
        return Err(TransformError::InvalidOp(crate::policy::PolicyErrors(violations)));
    }
    if !rng.bernoulli(op.apply_probability) {
        return Ok(img.clone());
    }
    record_kernel_invocation();
    Ok(run_kernel(img, op, rng))
}

/// Left-to-right fold of [`apply_op`]; op `i` draws from stream `i` of `key`.
pub fn apply_policy(img: &ImageBuffer, policy: &Policy, key: SampleKey) -> Result<ImageBuffer, TransformError> {
    let mut cur = img.clone();
    for (i, op) in policy.ops.iter().enumerate() {
        cur = apply_op(&cur, op, &mut key.rng(i as u64))?;
    }
    Ok(cur)
}

fn p(op: &AugOpInstance, name: &str) -> f64 {
    op.param(name).expect("validated op carries all params")
}

fn run_kernel(img: &ImageBuffer, op: &AugOpInstance, rng: &mut SampleRng) -> ImageBuffer {
    match op.kind {
        AugKind::HorizontalFlip => flip(img, true),
        AugKind::VerticalFlip => flip(img, false),
        AugKind::Rotate => {
            let d = p(op, "degrees");
            rotate(img, rng.uniform(-d, d))
        }
        AugKind::Translate => {
            let tx = p(op, "tx") * img.width() as f64;
            let ty = p(op, "ty") * img.height() as f64;
            let dx = rng.uniform(-tx, tx);
            let dy = rng.uniform(-ty, ty);
            translate(img, dx, dy)
        }
        AugKind::Shear => {
            let s = p(op, "degrees");
            shear_x(img, rng.uniform(-s, s))
        }
        AugKind::ScaleCrop => scale_crop(img, p(op, "scale_min"), rng),
        AugKind::Brightness => brightness(img, jitter_factor(p(op, "factor"), rng)),
        AugKind::Contrast => contrast(img, jitter_factor(p(op, "factor"), rng)),
        AugKind::Saturation => saturation(img, jitter_factor(p(op, "factor"), rng)),
        AugKind::Hue => {
            let h = p(op, "shift");
            hue(img, rng.uniform(-h, h))
        }
        AugKind::GaussianBlur => gaussian_blur(img, p(op, "sigma")),
        AugKind::Posterize => posterize(img, p(op, "bits") as u32),
        AugKind::Solarize => solarize(img, p(op, "threshold") as f32),
        AugKind::Equalize => equalize(img),
        AugKind::Sharpness => sharpness(img, jitter_factor(p(op, "factor"), rng)),
        AugKind::Erasing => erasing(img, p(op, "area"), p(op, "aspect"), rng),
    }
}

/// Factor drawn from `U[max(0, 1 - f), 1 + f]`.
fn jitter_factor(f: f64, rng: &mut SampleRng) -> f64 {
    rng.uniform((1.0 - f).max(0.0), 1.0 + f)
}

pub(crate) fn flip(img: &ImageBuffer, horizontal: bool) -> ImageBuffer {
    let (h, w, c) = (img.height(), img.width(), img.channels());
    let mut data = Vec::with_capacity(img.data().len());
    for y in 0..h {
        for x in 0..w {
            let (sy, sx) = if horizontal { (y, w - 1 - x) } else { (h - 1 - y, x) };
            for ch in 0..c {
                data.push(img.get(sy, sx, ch));
            }
        }
    }
    img.with_data(data)
}

/// Inverse-mapped warp: `src(y, x)` gives the source coordinate for each
/// destination pixel.
fn warp(img: &ImageBuffer, src: impl Fn(f64, f64) -> (f64, f64)) -> ImageBuffer {
    let (h, w, c) = (img.height(), img.width(), img.channels());
    let mut data = Vec::with_capacity(img.data().len());
    for y in 0..h {
        for x in 0..w {
            let (sy, sx) = src(y as f64, x as f64);
            for ch in 0..c {
                data.push(img.sample_bilinear(sy, sx, ch));
            }
        }
    }
    img.with_data(data)
}

fn center(img: &ImageBuffer) -> (f64, f64) {
    ((img.height() - 1) as f64 / 2.0, (img.width() - 1) as f64 / 2.0)
}

pub(crate) fn rotate(img: &ImageBuffer, degrees: f64) -> ImageBuffer {
    if degrees == 0.0 {
        return img.clone();
    }
    let (cy, cx) = center(img);
    let (sin, cos) = degrees.to_radians().sin_cos();
    warp(img, |y, x| {
        let (dy, dx) = (y - cy, x - cx);
        (cy - sin * dx + cos * dy, cx + cos * dx + sin * dy)
    })
}

pub(crate) fn translate(img: &ImageBuffer, dx: f64, dy: f64) -> ImageBuffer {
    if dx == 0.0 && dy == 0.0 {
        return img.clone();
    }
    warp(img, |y, x| (y - dy, x - dx))
}

pub(crate) fn shear_x(img: &ImageBuffer, degrees: f64) -> ImageBuffer {
    if degrees == 0.0 {
        return img.clone();
    }
    let (cy, _) = center(img);
    let t = degrees.to_radians().tan();
    warp(img, |y, x| (y, x - t * (y - cy)))
}

fn scale_crop(img: &ImageBuffer, scale_min: f64, rng: &mut SampleRng) -> ImageBuffer {
    let area = rng.uniform(scale_min, 1.0);
    let side = area.sqrt();
    let (h, w) = (img.height() as f64, img.width() as f64);
    let (ch, cw) = (h * side, w * side);
    let y0 = rng.uniform(0.0, h - ch);
    let x0 = rng.uniform(0.0, w - cw);
    if area == 1.0 {
        return img.clone();
    }
    let sy = if img.height() > 1 { (ch - 1.0).max(0.0) / (h - 1.0) } else { 0.0 };
    let sx = if img.width() > 1 { (cw - 1.0).max(0.0) / (w - 1.0) } else { 0.0 };
    warp(img, |y, x| (y0 + y * sy, x0 + x * sx))
}

fn brightness(img: &ImageBuffer, factor: f64) -> ImageBuffer {
    if factor == 1.0 {
        return img.clone();
    }
    let f = factor as f32;
    img.with_data(img.data().iter().map(|v| v * f).collect())
}

fn contrast(img: &ImageBuffer, factor: f64) -> ImageBuffer {
    if factor == 1.0 {
        return img.clone();
    }
    let lum = img.luminance();
    let mean = (lum.iter().map(|&v| v as f64).sum::<f64>() / lum.len() as f64) as f32;
    let f = factor as f32;
    img.with_data(img.data().iter().map(|&v| mean + f * (v - mean)).collect())
}

fn saturation(img: &ImageBuffer, factor: f64) -> ImageBuffer {
    if factor == 1.0 || img.channels() == 1 {
        return img.clone();
    }
    let f = factor as f32;
    let lum = img.luminance();
    let mut data = img.data().to_vec();
    for (px, &gray) in data.chunks_exact_mut(3).zip(&lum) {
        for v in px {
            *v = gray + f * (*v - gray);
        }
    }
    img.with_data(data)
}

fn hue(img: &ImageBuffer, shift: f64) -> ImageBuffer {
    if shift == 0.0 {
        return img.clone();
    }
    if img.channels() == 1 {
        static WARNED: std::sync::Once = std::sync::Once::new();
        WARNED.call_once(|| log::warn!("hue shift on a single-channel image is a no-op"));
        return img.clone();
    }
    let s = shift as f32;
    let mut data = img.data().to_vec();
    for px in data.chunks_exact_mut(3) {
        let (h, sat, v) = rgb_to_hsv(px[0], px[1], px[2]);
        let (r, g, b) = hsv_to_rgb((h + s).rem_euclid(1.0), sat, v);
        px[0] = r;
        px[1] = g;
        px[2] = b;
    }
    img.with_data(data)
}

fn rgb_to_hsv(r: f32, g: f32, b: f32) -> (f32, f32, f32) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    let s = if max > 0.0 { d / max } else { 0.0 };
    let h = if d == 0.0 {
        0.0
    } else if max == r {
        ((g - b) / d).rem_euclid(6.0) / 6.0
    } else if max == g {
        ((b - r) / d + 2.0) / 6.0
    } else {
        ((r - g) / d + 4.0) / 6.0
    };
    (h, s, max)
}

fn hsv_to_rgb(h: f32, s: f32, v: f32) -> (f32, f32, f32) {
    let h6 = (h * 6.0).rem_euclid(6.0);
    let i = h6.floor();
    let f = h6 - i;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match i as u32 {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    }
}

/// Normalized 1-D Gaussian of radius `ceil(3 sigma)`.
pub(crate) fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

fn gaussian_blur(img: &ImageBuffer, sigma: f64) -> ImageBuffer {
    if sigma <= 0.0 {
        return img.clone();
    }
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as i64;
    let (h, w, c) = (img.height() as i64, img.width() as i64, img.channels());
    let mut tmp = vec![0f32; img.data().len()];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let acc: f64 = k
                    .iter()
                    .enumerate()
                    .map(|(i, wt)| {
                        let sx = (x + i as i64 - r).clamp(0, w - 1);
                        wt * img.get(y as usize, sx as usize, ch) as f64
                    })
                    .sum();
                tmp[img.index(y as usize, x as usize, ch)] = acc as f32;
            }
        }
    }
    let mut out = vec![0f32; tmp.len()];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let acc: f64 = k
                    .iter()
                    .enumerate()
                    .map(|(i, wt)| {
                        let sy = (y + i as i64 - r).clamp(0, h - 1);
                        wt * tmp[img.index(sy as usize, x as usize, ch)] as f64
                    })
                    .sum();
                out[img.index(y as usize, x as usize, ch)] = acc as f32;
            }
        }
    }
    img.with_data(out)
}

#[inline]
fn to_u8_floor(v: f32) -> u8 {
    (v * 255.0).floor().clamp(0.0, 255.0) as u8
}

fn posterize(img: &ImageBuffer, bits: u32) -> ImageBuffer {
    if bits >= 8 {
        return img.clone();
    }
    let mask: u8 = 0xFFu8 << (8 - bits);
    img.with_data(
        img.data()
            .iter()
            .map(|&v| (to_u8_floor(v) & mask) as f32 / 255.0)
            .collect(),
    )
}

fn solarize(img: &ImageBuffer, threshold: f32) -> ImageBuffer {
    img.with_data(
        img.data()
            .iter()
            .map(|&v| if v >= threshold { 1.0 - v } else { v })
            .collect(),
    )
}

#[inline]
pub(crate) fn quantize(v: f32) -> usize {
    (v * 255.0 + 0.5).floor().clamp(0.0, 255.0) as usize
}

/// Per-channel 256-bin histogram equalization. A channel with a single
/// occupied bin is left unchanged.
fn equalize(img: &ImageBuffer) -> ImageBuffer {
    let c = img.channels();
    let n = img.height() * img.width();
    let mut data = img.data().to_vec();
    for ch in 0..c {
        let mut hist = [0usize; 256];
        for px in data.chunks_exact(c) {
            hist[quantize(px[ch])] += 1;
        }
        let cdf_min = hist.iter().copied().find(|&h| h > 0).unwrap_or(0);
        if cdf_min == n {
            continue;
        }
        let mut lut = [0f32; 256];
        let mut cdf = 0usize;
        for (i, &h) in hist.iter().enumerate() {
            cdf += h;
            let level = ((cdf - cdf_min.min(cdf)) as f64 / (n - cdf_min) as f64 * 255.0).round();
            lut[i] = (level / 255.0) as f32;
        }
        for px in data.chunks_exact_mut(c) {
            px[ch] = lut[quantize(px[ch])];
        }
    }
    img.with_data(data)
}

fn box_smooth(img: &ImageBuffer) -> Vec<f32> {
    let (h, w, c) = (img.height() as i64, img.width() as i64, img.channels());
    let mut out = Vec::with_capacity(img.data().len());
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let mut acc = 0f32;
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        let sy = (y + dy).clamp(0, h - 1) as usize;
                        let sx = (x + dx).clamp(0, w - 1) as usize;
                        acc += img.get(sy, sx, ch);
                    }
                }
                out.push(acc / 9.0);
            }
        }
    }
    out
}

fn sharpness(img: &ImageBuffer, factor: f64) -> ImageBuffer {
    if factor == 1.0 {
        return img.clone();
    }
    let f = factor as f32;
    let smooth = box_smooth(img);
    img.with_data(
        smooth
            .iter()
            .zip(img.data())
            .map(|(&s, &o)| s + f * (o - s))
            .collect(),
    )
}

fn erasing(img: &ImageBuffer, area: f64, aspect: f64, rng: &mut SampleRng) -> ImageBuffer {
    let (h, w) = (img.height(), img.width());
    let target = area * (h * w) as f64;
    let eh = ((target * aspect).sqrt().round() as usize).clamp(1, h);
    let ew = ((target / aspect).sqrt().round() as usize).clamp(1, w);
    let y0 = rng.below((h - eh + 1) as u32) as usize;
    let x0 = rng.below((w - ew + 1) as u32) as usize;
    let mut data = img.data().to_vec();
    for y in y0..y0 + eh {
        for x in x0..x0 + ew {
            for ch in 0..img.channels() {
                data[img.index(y, x, ch)] = 0.0;
            }
        }
    }
    img.with_data(data)
}
