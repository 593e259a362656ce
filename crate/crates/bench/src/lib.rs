//! Fixtures shared by the benchmarks.

use ecic_core::{Cell, CellSample, QuadData};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Four cells of `n` Pareto(`alpha`) draws each, scale 1, with the treated
/// cell shifted by `shift`.
pub fn pareto_quad(n: usize, alpha: f64, shift: f64, seed: u64) -> QuadData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cell = |cell: Cell, shift: f64| {
        let values = (0..n)
            .map(|_| {
                let u: f64 = rng.random();
                (1.0 - u).powf(-1.0 / alpha) + shift
            })
            .collect();
        CellSample::new(cell, values).expect("finite draws")
    };
    let c00 = cell(Cell::C00, 0.0);
    let c01 = cell(Cell::C01, 0.0);
    let c10 = cell(Cell::C10, 0.0);
    let c11 = cell(Cell::C11, shift);
    QuadData::new(c00, c01, c10, c11).expect("cells in order")
}
