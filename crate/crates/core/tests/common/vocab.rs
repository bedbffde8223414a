use std::collections::BTreeSet;

use pdnet::clustering::VerbObjectTable;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Object counts per verb of the visual-polysemy dataset.
pub const POLYSEMY_COUNTS: [usize; 15] = [49, 8, 4, 229, 218, 196, 8, 7, 4, 22, 10, 29, 5, 18, 29];

pub fn random_vectors(seed: u64, n: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect()
}

/// 117 verbs over 80 objects with 600 valid categories.
pub fn hico_shaped_table() -> VerbObjectTable {
    let mut table = VerbObjectTable::new();
    for v in 0..117 {
        let n = if v < 15 { 6 } else { 5 };
        let objects: BTreeSet<String> = (0..n)
            .map(|j| format!("obj{:02}", (v * 7 + j * 13) % 80))
            .collect();
        assert_eq!(objects.len(), n);
        table.insert(format!("verb{v:03}"), objects);
    }
    table
}
