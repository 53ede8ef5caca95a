//! Fits per-class Gaussians to synthetic embeddings and compares the LLR of
//! in-distribution points with points that drift off the class manifold.

use std::collections::HashMap;

use fairset::manifest::EmbeddingTable;
use fairset::ood::{fit, OodConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DIM: usize = 8;

fn sample(rng: &mut ChaCha8Rng, center: &[f64]) -> Vec<f32> {
    center
        .iter()
        .map(|c| (c + rng.random_range(-1.0..1.0)) as f32)
        .collect()
}

fn main() -> fairset::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let centers: Vec<Vec<f64>> = (0..4)
        .map(|c| (0..DIM).map(|j| if j == c { 6.0 } else { 0.0 }).collect())
        .collect();

    let (mut ids, mut rows, mut labels) = (Vec::new(), Vec::new(), HashMap::new());
    for (class, center) in centers.iter().enumerate() {
        for i in 0..200 {
            let id = format!("c{class}-{i}");
            labels.insert(id.clone(), class as u32);
            ids.push(id);
            rows.push(sample(&mut rng, center));
        }
    }
    let model = fit(
        &EmbeddingTable::from_rows(ids, &rows)?,
        &labels,
        &OodConfig::default(),
    )?;
    println!(
        "{} classes, dim {}, k = {}",
        model.classes().len(),
        model.dim(),
        model.k()
    );
    for q in [0.05, 0.5, 0.95] {
        println!("  training LLR q{q:.2} = {:.2}", model.train_quantile(q)?);
    }

    for blend in [0.0, 0.25, 0.5] {
        // Pull a class-0 point toward class 1 by `blend`.
        let center: Vec<f64> = centers[0]
            .iter()
            .zip(&centers[1])
            .map(|(a, b)| a + blend * (b - a))
            .collect();
        let x: Vec<f64> = sample(&mut rng, &center)
            .into_iter()
            .map(f64::from)
            .collect();
        let (llr, class) = model.llr(&x)?;
        println!("blend {blend:.2}: predicted class {class}, llr {llr:.2}");
    }
    Ok(())
}
