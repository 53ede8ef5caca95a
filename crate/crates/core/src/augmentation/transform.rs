//! Fine-grained affine + color augmentation.
//!
//! The affine part maps each output pixel back into the source image:
//! forward `p' = A (p - c) + c + t` with `A = Shear * Scale * Rotation`,
//! `c` the image center and `t` the translation in pixels. Sampling is
//! bilinear with edge-clamp padding. Color adjustments follow: additive
//! brightness, then contrast about each channel's mean, each clamped to
//! `[0, 255]`.

use std::collections::BTreeMap;
use std::path::Path;

use image::{Rgb, RgbImage};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::augmentation::AugRatioTable;
use crate::error::{Error, Result};
use crate::manifest::Record;
use crate::sampling::rng_from_seed;

/// Sampling coordinates within this distance of a pixel center snap to it,
/// so exact rotations by multiples of 90 degrees copy pixels verbatim.
const GRID_SNAP: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformParams {
    pub rotation_deg: f64,
    /// Horizontal shift as a fraction of the image width.
    pub translate_x: f64,
    /// Vertical shift as a fraction of the image height.
    pub translate_y: f64,
    pub scale: f64,
    /// Horizontal shear factor.
    pub shear: f64,
    /// Additive brightness as a fraction of full scale (255).
    pub brightness_delta: f64,
    pub contrast_factor: f64,
}

impl TransformParams {
    pub const IDENTITY: TransformParams = TransformParams {
        rotation_deg: 0.0,
        translate_x: 0.0,
        translate_y: 0.0,
        scale: 1.0,
        shear: 0.0,
        brightness_delta: 0.0,
        contrast_factor: 1.0,
    };

    pub fn is_affine_identity(&self) -> bool {
        self.rotation_deg == 0.0
            && self.translate_x == 0.0
            && self.translate_y == 0.0
            && self.scale == 1.0
            && self.shear == 0.0
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::IDENTITY
    }
}

impl Default for TransformParams {
    fn default() -> Self {
        Self::IDENTITY
    }
}

/// One planned augmentation; also the line format of an augmentation plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformSpec {
    pub aug_id: String,
    pub source_id: String,
    pub class: u32,
    pub features: BTreeMap<String, String>,
    #[serde(flatten)]
    pub params: TransformParams,
    pub seed: u64,
}

/// Inclusive `[lo, hi]` draw range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bound {
    pub lo: f64,
    pub hi: f64,
}

impl Bound {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Bound { lo, hi }
    }

    pub const fn fixed(v: f64) -> Self {
        Bound { lo: v, hi: v }
    }

    fn check(&self, name: &str) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite()) || self.lo > self.hi {
            return Err(Error::config(format!(
                "bound {name} = [{}, {}] is malformed",
                self.lo, self.hi
            )));
        }
        Ok(())
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.lo == self.hi {
            self.lo
        } else {
            rng.random_range(self.lo..=self.hi)
        }
    }

    fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugBounds {
    pub rotation_deg: Bound,
    pub translate: Bound,
    pub scale: Bound,
    pub shear: Bound,
    pub brightness: Bound,
    pub contrast: Bound,
}

impl Default for AugBounds {
    fn default() -> Self {
        AugBounds {
            rotation_deg: Bound::new(-15.0, 15.0),
            translate: Bound::new(-0.1, 0.1),
            scale: Bound::new(0.9, 1.1),
            shear: Bound::new(-0.1, 0.1),
            brightness: Bound::new(-0.2, 0.2),
            contrast: Bound::new(0.8, 1.2),
        }
    }
}

impl AugBounds {
    /// Bounds that only ever produce the identity transform.
    pub fn identity() -> Self {
        AugBounds {
            rotation_deg: Bound::fixed(0.0),
            translate: Bound::fixed(0.0),
            scale: Bound::fixed(1.0),
            shear: Bound::fixed(0.0),
            brightness: Bound::fixed(0.0),
            contrast: Bound::fixed(1.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.rotation_deg.check("rotation_deg")?;
        self.translate.check("translate")?;
        self.scale.check("scale")?;
        self.shear.check("shear")?;
        self.brightness.check("brightness")?;
        self.contrast.check("contrast")?;
        if self.scale.lo <= 0.0 {
            return Err(Error::config("scale bound must be positive"));
        }
        if self.contrast.lo < 0.0 {
            return Err(Error::config("contrast bound must be non-negative"));
        }
        Ok(())
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> TransformParams {
        TransformParams {
            rotation_deg: self.rotation_deg.draw(rng),
            translate_x: self.translate.draw(rng),
            translate_y: self.translate.draw(rng),
            scale: self.scale.draw(rng),
            shear: self.shear.draw(rng),
            brightness_delta: self.brightness.draw(rng),
            contrast_factor: self.contrast.draw(rng),
        }
    }

    pub fn contains(&self, p: &TransformParams) -> bool {
        self.rotation_deg.contains(p.rotation_deg)
            && self.translate.contains(p.translate_x)
            && self.translate.contains(p.translate_y)
            && self.scale.contains(p.scale)
            && self.shear.contains(p.shear)
            && self.brightness.contains(p.brightness_delta)
            && self.contrast.contains(p.contrast_factor)
    }
}

/// Expands every record into `ratio(age, state)` transform specs.
///
/// A master generator seeded with `seed` hands each spec its own seed, and the
/// spec's parameters are drawn from a generator seeded with that value, so a
/// single spec can be regenerated in isolation.
pub fn generate_specs(
    records: &[Record],
    ratios: &AugRatioTable,
    feature: &str,
    bounds: &AugBounds,
    seed: u64,
) -> Result<Vec<TransformSpec>> {
    bounds.validate()?;
    let mut master = rng_from_seed(seed);
    let mut specs = Vec::new();
    for r in records {
        let state = r
            .state(feature)
            .ok_or_else(|| Error::data(format!("record {:?} lacks feature {feature:?}", r.id)))?;
        let cell = ratios
            .cells
            .iter()
            .find(|c| c.class == r.age && c.state == state)
            .ok_or_else(|| {
                Error::data(format!("no ratio planned for cell ({}, {state})", r.age))
            })?;
        for j in 0..cell.ratio {
            let spec_seed: u64 = master.random();
            let params = bounds.draw(&mut rng_from_seed(spec_seed));
            specs.push(TransformSpec {
                aug_id: format!("{}__aug{j}", r.id),
                source_id: r.id.clone(),
                class: r.age,
                features: r.features.clone(),
                params,
                seed: spec_seed,
            });
        }
    }
    Ok(specs)
}

fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < GRID_SNAP {
        r
    } else {
        v
    }
}

fn bilinear(img: &RgbImage, x: f64, y: f64) -> [f64; 3] {
    let (w, h) = (img.width() as f64, img.height() as f64);
    let x = x.clamp(0.0, w - 1.0);
    let y = y.clamp(0.0, h - 1.0);
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let (x0, y0) = (x0 as u32, y0 as u32);
    let x1 = (x0 + 1).min(img.width() - 1);
    let y1 = (y0 + 1).min(img.height() - 1);
    let p = |xx, yy| img.get_pixel(xx, yy).0;
    let (p00, p10, p01, p11) = (p(x0, y0), p(x1, y0), p(x0, y1), p(x1, y1));
    let mut out = [0.0; 3];
    for c in 0..3 {
        let top = f64::from(p00[c]) * (1.0 - fx) + f64::from(p10[c]) * fx;
        let bottom = f64::from(p01[c]) * (1.0 - fx) + f64::from(p11[c]) * fx;
        out[c] = top * (1.0 - fy) + bottom * fy;
    }
    out
}

fn warp(img: &RgbImage, p: &TransformParams) -> Vec<[f64; 3]> {
    let (w, h) = (img.width(), img.height());
    if p.is_affine_identity() {
        return img.pixels().map(|px| px.0.map(f64::from)).collect();
    }
    let theta = p.rotation_deg.to_radians();
    let (sin, cos) = theta.sin_cos();
    // A = Shear * Scale * Rotation
    let a = [
        [
            p.scale * (cos + p.shear * sin),
            p.scale * (-sin + p.shear * cos),
        ],
        [p.scale * sin, p.scale * cos],
    ];
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let inv = [
        [a[1][1] / det, -a[0][1] / det],
        [-a[1][0] / det, a[0][0] / det],
    ];
    let (cx, cy) = ((f64::from(w) - 1.0) / 2.0, (f64::from(h) - 1.0) / 2.0);
    let (tx, ty) = (p.translate_x * f64::from(w), p.translate_y * f64::from(h));

    let mut out = Vec::with_capacity((w * h) as usize);
    for y in 0..h {
        for x in 0..w {
            let dx = f64::from(x) - cx - tx;
            let dy = f64::from(y) - cy - ty;
            let sx = snap(inv[0][0] * dx + inv[0][1] * dy + cx);
            let sy = snap(inv[1][0] * dx + inv[1][1] * dy + cy);
            out.push(bilinear(img, sx, sy));
        }
    }
    out
}

/// Applies `params` to `img`; the output has the input's dimensions.
pub fn apply_transform(img: &RgbImage, params: &TransformParams) -> Result<RgbImage> {
    if img.width() == 0 || img.height() == 0 {
        return Err(Error::data("cannot transform an empty image"));
    }
    let mut px = warp(img, params);

    if params.brightness_delta != 0.0 {
        let shift = params.brightness_delta * 255.0;
        for v in px.iter_mut().flat_map(|p| p.iter_mut()) {
            *v = (*v + shift).clamp(0.0, 255.0);
        }
    }
    if params.contrast_factor != 1.0 {
        let n = px.len() as f64;
        let mut means = [0.0; 3];
        for p in &px {
            for c in 0..3 {
                means[c] += p[c] / n;
            }
        }
        for p in px.iter_mut() {
            for c in 0..3 {
                p[c] = (means[c] + params.contrast_factor * (p[c] - means[c])).clamp(0.0, 255.0);
            }
        }
    }

    let mut out = RgbImage::new(img.width(), img.height());
    for (dst, src) in out.pixels_mut().zip(&px) {
        *dst = Rgb(src.map(|v| v.round().clamp(0.0, 255.0) as u8));
    }
    Ok(out)
}

pub fn load_png(path: impl AsRef<Path>) -> Result<RgbImage> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|e| Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok(img.to_rgb8())
}

pub fn save_png(img: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
}
