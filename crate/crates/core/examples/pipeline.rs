//! Drives the command-line front end in a scratch directory: curate, plan,
//! render the augmentations and draw the age histogram, exactly as the
//! `fairset` binary would.

use std::fs;

use image::{Rgb, RgbImage};

fn fairset(args: &str) -> i32 {
    let argv = std::iter::once("fairset").chain(args.split_whitespace());
    let code = fairset::cli::main_with_args(argv);
    println!("fairset {args}  -> exit {code}");
    code
}

fn main() -> std::io::Result<()> {
    let dir = std::env::temp_dir().join("fairset-pipeline");
    fs::create_dir_all(dir.join("img"))?;
    std::env::set_current_dir(&dir)?;

    let mut manifest = String::new();
    for i in 0..12u32 {
        let (age, gender) = (25 + i % 2, if i % 4 == 0 { "f" } else { "m" });
        RgbImage::from_fn(16, 16, |x, y| {
            Rgb([(x * 16) as u8, (y * 16) as u8, (i * 20) as u8])
        })
        .save(format!("img/p{i}.png"))
        .expect("write fixture image");
        manifest.push_str(&format!(
            "{{\"id\":\"p{i}\",\"source\":\"lab\",\"age\":{age},\"features\":{{\"gender\":\"{gender}\"}},\"path\":\"img/p{i}.png\"}}\n"
        ));
    }
    fs::write("pool.jsonl", manifest)?;

    let steps = [
        "--seed 11 curate --pool pool.jsonl --out curated.jsonl --audit curate.audit.json --feature-priority gender",
        "--seed 11 augment plan --manifest curated.jsonl --out plan.jsonl --feature gender",
        "--seed 11 augment apply --plan plan.jsonl --manifest pool.jsonl --out-dir aug",
        "report --manifest curated.jsonl --out-svg ages.svg --feature gender",
    ];
    for step in steps {
        if fairset(step) != 0 {
            break;
        }
    }
    println!("outputs in {}", dir.display());
    Ok(())
}
