use rand::seq::SliceRandom;

use super::{EmbeddingDataset, EmbeddingRecord, Label};
use crate::{rng, Error, Result};

pub const DEFAULT_SPLIT_RATIOS: (f64, f64, f64) = (0.8, 0.1, 0.1);

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: EmbeddingDataset,
    pub dev: EmbeddingDataset,
    pub test: EmbeddingDataset,
}

/// Largest-remainder allocation of `n` items over the three ratios.
fn allocate(n: usize, ratios: [f64; 3]) -> [usize; 3] {
    let exact: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    let mut counts = [0usize; 3];
    for (c, e) in counts.iter_mut().zip(&exact) {
        *c = e.floor() as usize;
    }
    let mut left = n - counts.iter().sum::<usize>();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

/// Stratified, seeded train/dev/test split. Within each part, records keep
/// their original relative order.
pub fn split(data: &EmbeddingDataset, ratios: (f64, f64, f64), seed: u64) -> Result<Splits> {
    let ratios = [ratios.0, ratios.1, ratios.2];
    if ratios.iter().any(|r| !(*r > 0.0)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidConfig(format!(
            "split ratios must be positive and sum to 1, got {ratios:?}"
        )));
    }
    let mut rng = rng::stream(seed, "split");
    let mut assignment = vec![0u8; data.len()];
    for label in [Label::Target, Label::NonTarget] {
        let mut idx: Vec<usize> = data
            .records()
            .iter()
            .enumerate()
            .filter(|(_, r)| r.label == label)
            .map(|(i, _)| i)
            .collect();
        idx.shuffle(&mut rng);
        let counts = allocate(idx.len(), ratios);
        let mut cursor = 0;
        for (part, &count) in counts.iter().enumerate() {
            for &i in &idx[cursor..cursor + count] {
                assignment[i] = part as u8;
            }
            cursor += count;
        }
    }
    let mut parts: [Vec<EmbeddingRecord>; 3] = Default::default();
    for (r, &part) in data.records().iter().zip(&assignment) {
        parts[part as usize].push(r.clone());
    }
    let names = ["train", "dev", "test"];
    if let Some(empty) = parts.iter().position(Vec::is_empty) {
        return Err(Error::TooSmallForSplit(format!(
            "{} records leave the {} split empty",
            data.len(),
            names[empty]
        )));
    }
    let [train, dev, test] = parts;
    Ok(Splits {
        train: EmbeddingDataset::new(train)?,
        dev: EmbeddingDataset::new(dev)?,
        test: EmbeddingDataset::new(test)?,
    })
}
