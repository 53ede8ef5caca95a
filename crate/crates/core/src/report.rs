//! Output helpers: JSON writers with provenance, and small SVG histograms of
//! per-age sample counts and LLR distributions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::OutputMeta;
use crate::error::{Error, Result};

/// Serializes `±inf` as the strings `"inf"` / `"-inf"`, which JSON numbers
/// cannot express. Finite values stay numbers.
pub mod float_or_inf {
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if *v == f64::INFINITY {
            s.serialize_str("inf")
        } else if *v == f64::NEG_INFINITY {
            s.serialize_str("-inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) if t == "-inf" => Ok(f64::NEG_INFINITY),
            Repr::Text(t) => Err(D::Error::custom(format!(
                "expected a number, \"inf\" or \"-inf\", got {t:?}"
            ))),
        }
    }
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("value serializes");
    s.push('\n');
    s
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// A JSON document with the provenance block under `"meta"` and the payload
/// under `"data"`.
pub fn write_json_with_meta<T: Serialize>(
    path: impl AsRef<Path>,
    meta: &OutputMeta,
    data: &T,
) -> Result<()> {
    #[derive(Serialize)]
    struct Doc<'a, T> {
        meta: &'a OutputMeta,
        data: &'a T,
    }
    write_text(path, &to_json(&Doc { meta, data }))
}

/// `<out>.meta.json`, for formats (CSV, line-delimited JSON, PNG) that have
/// no room for a provenance block of their own.
pub fn meta_sidecar_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    out.with_file_name(name)
}

pub fn write_meta_sidecar(out: impl AsRef<Path>, meta: &OutputMeta) -> Result<()> {
    write_text(meta_sidecar_path(out.as_ref()), &to_json(meta))
}

const PALETTE: [&str; 8] = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#ff9da7",
];

fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            _ => out.push(c),
        }
    }
    out
}

fn svg_open(out: &mut String, width: f64, height: f64, title: &str, meta: &OutputMeta) {
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    )
    .unwrap();
    writeln!(out, "<title>{}</title>", xml_escape(title)).unwrap();
    let json = serde_json::to_string(meta).expect("meta serializes");
    writeln!(out, "<metadata>{}</metadata>", xml_escape(&json)).unwrap();
    writeln!(
        out,
        r##"<rect width="100%" height="100%" fill="#ffffff"/>"##
    )
    .unwrap();
}

const PLOT_W: f64 = 800.0;
const PLOT_H: f64 = 300.0;
const MARGIN: f64 = 40.0;

/// Stacked bar chart of sample counts per age, one stack segment per state
/// of `feature`. Every age in `counts` gets exactly one `<g class="bar">`.
pub fn age_histogram_svg(
    counts: &BTreeMap<(u32, String), usize>,
    feature: &str,
    meta: &OutputMeta,
) -> String {
    let states: BTreeSet<&str> = counts.keys().map(|(_, s)| s.as_str()).collect();
    let mut by_age: BTreeMap<u32, Vec<(&str, usize)>> = BTreeMap::new();
    for ((age, state), &n) in counts {
        by_age.entry(*age).or_default().push((state, n));
    }
    let tallest = by_age
        .values()
        .map(|v| v.iter().map(|(_, n)| n).sum::<usize>())
        .max()
        .unwrap_or(0)
        .max(1) as f64;
    let slot = PLOT_W / by_age.len().max(1) as f64;
    let color = |s: &str| PALETTE[states.iter().position(|x| *x == s).unwrap_or(0) % PALETTE.len()];

    let mut out = String::new();
    svg_open(
        &mut out,
        PLOT_W + 2.0 * MARGIN,
        PLOT_H + 2.0 * MARGIN,
        &format!("samples per age by {feature}"),
        meta,
    );
    for (i, (age, cells)) in by_age.iter().enumerate() {
        let total: usize = cells.iter().map(|(_, n)| n).sum();
        writeln!(
            out,
            r#"<g class="bar" data-age="{age}" data-count="{total}">"#
        )
        .unwrap();
        let x = MARGIN + i as f64 * slot;
        let mut y = MARGIN + PLOT_H;
        for (state, n) in cells {
            let h = *n as f64 / tallest * PLOT_H;
            y -= h;
            writeln!(
                out,
                r#"<rect x="{x:.2}" y="{y:.2}" width="{:.2}" height="{h:.2}" fill="{}" data-state="{}"/>"#,
                (slot * 0.9).max(0.5),
                color(state),
                xml_escape(state)
            )
            .unwrap();
        }
        out.push_str("</g>\n");
    }
    for (j, s) in states.iter().enumerate() {
        writeln!(
            out,
            r#"<text class="legend" x="{:.0}" y="{:.0}" fill="{}" font-size="12">{}</text>"#,
            MARGIN + j as f64 * 120.0,
            MARGIN - 12.0,
            color(s),
            xml_escape(s)
        )
        .unwrap();
    }
    out.push_str("</svg>\n");
    out
}

/// Overlaid histograms of training and augmentation LLR scores over a shared
/// binning, with optional vertical cutoff lines.
pub fn llr_histogram_svg(
    train: &[f64],
    aug: &[f64],
    cutoffs: &[f64],
    bins: usize,
    meta: &OutputMeta,
) -> String {
    let bins = bins.max(1);
    let finite = train.iter().chain(aug).copied().filter(|v| v.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
        (a.min(v), b.max(v))
    });
    let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (0.0, 1.0) };
    let width = if hi > lo { hi - lo } else { 1.0 };
    let bin_of = |v: f64| (((v - lo) / width * bins as f64) as usize).min(bins - 1);
    let histogram = |values: &[f64]| {
        let mut h = vec![0usize; bins];
        for &v in values.iter().filter(|v| v.is_finite()) {
            h[bin_of(v)] += 1;
        }
        h
    };
    let series = [
        ("train", histogram(train), train.len()),
        ("aug", histogram(aug), aug.len()),
    ];
    // Densities, so sets of different size share one axis.
    let peak = series
        .iter()
        .flat_map(|(_, h, n)| h.iter().map(move |&c| c as f64 / (*n).max(1) as f64))
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE);
    let bw = PLOT_W / bins as f64;

    let mut out = String::new();
    svg_open(
        &mut out,
        PLOT_W + 2.0 * MARGIN,
        PLOT_H + 2.0 * MARGIN,
        "LLR distribution",
        meta,
    );
    for (k, (name, h, n)) in series.iter().enumerate() {
        writeln!(
            out,
            r#"<g class="{name}" fill="{}" fill-opacity="0.5">"#,
            PALETTE[k]
        )
        .unwrap();
        for (b, &c) in h.iter().enumerate() {
            let height = c as f64 / (*n).max(1) as f64 / peak * PLOT_H;
            writeln!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="{bw:.2}" height="{height:.2}" data-count="{c}"/>"#,
                MARGIN + b as f64 * bw,
                MARGIN + PLOT_H - height
            )
            .unwrap();
        }
        out.push_str("</g>\n");
    }
    for &c in cutoffs.iter().filter(|c| c.is_finite()) {
        let x = MARGIN + ((c - lo) / width).clamp(0.0, 1.0) * PLOT_W;
        writeln!(
            out,
            r#"<line class="cutoff" x1="{x:.2}" y1="{MARGIN}" x2="{x:.2}" y2="{}" stroke="black" stroke-dasharray="4 2" data-llr="{c}"/>"#,
            MARGIN + PLOT_H
        )
        .unwrap();
    }
    writeln!(
        out,
        r#"<text x="{MARGIN}" y="{}" font-size="12">{lo:.3}</text><text x="{}" y="{}" font-size="12" text-anchor="end">{hi:.3}</text>"#,
        MARGIN + PLOT_H + 16.0,
        MARGIN + PLOT_W,
        MARGIN + PLOT_H + 16.0
    )
    .unwrap();
    out.push_str("</svg>\n");
    out
}
