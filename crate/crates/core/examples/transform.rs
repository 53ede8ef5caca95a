//! Applies a few affine and photometric transforms to a generated image and
//! saves the results as PNG files in the temp directory.

use fairset::augmentation::{apply_transform, save_png, TransformParams};
use image::{Rgb, RgbImage};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let img = RgbImage::from_fn(64, 48, |x, y| {
        Rgb([
            (x * 4) as u8,
            (y * 5) as u8,
            if (x / 8 + y / 8) % 2 == 0 { 200 } else { 40 },
        ])
    });
    let variants = [
        ("identity", TransformParams::IDENTITY),
        (
            "rot15",
            TransformParams {
                rotation_deg: 15.0,
                ..TransformParams::IDENTITY
            },
        ),
        (
            "zoom",
            TransformParams {
                scale: 1.2,
                translate_x: 3.0,
                ..TransformParams::IDENTITY
            },
        ),
        (
            "shear",
            TransformParams {
                shear: 0.2,
                ..TransformParams::IDENTITY
            },
        ),
        (
            "bright",
            TransformParams {
                brightness_delta: 0.15,
                contrast_factor: 1.3,
                ..TransformParams::IDENTITY
            },
        ),
    ];
    let dir = std::env::temp_dir().join("fairset-transforms");
    std::fs::create_dir_all(&dir)?;
    for (name, params) in variants {
        let out = apply_transform(&img, &params)?;
        let changed = out
            .as_raw()
            .iter()
            .zip(img.as_raw())
            .filter(|(a, b)| a != b)
            .count();
        let path = dir.join(format!("{name}.png"));
        save_png(&out, &path)?;
        println!(
            "{name:>8}: {changed:>5} channel values changed -> {}",
            path.display()
        );
    }
    Ok(())
}
