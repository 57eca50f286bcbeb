use nalgebra::{DMatrix, DVector};

use crate::graph::Network;
use crate::linalg::PartitionedSystem;

/// Columns of each agent's block as printed: row `k` here is column `k` of
/// `A_i`, i.e. the data is `A_iᵀ` (12 × 2).
const A_T: [[[f64; 2]; 12]; 4] = [
    [
        [0.63, 0.04],
        [0.58, 0.60],
        [0.65, 0.50],
        [0.33, 0.81],
        [0.68, 0.01],
        [0.22, 0.51],
        [0.49, 0.23],
        [0.21, 0.29],
        [0.62, 0.25],
        [0.57, 0.21],
        [0.71, 0.66],
        [0.28, 0.90],
    ],
    [
        [0.80, 0.99],
        [0.25, 0.65],
        [0.53, 0.38],
        [0.79, 0.12],
        [0.13, 0.76],
        [0.79, 0.52],
        [0.34, 0.55],
        [0.45, 0.24],
        [0.10, 0.55],
        [0.94, 0.51],
        [0.78, 0.58],
        [0.70, 0.85],
    ],
    [
        [0.44, 0.34],
        [0.06, 0.94],
        [0.77, 0.28],
        [0.16, 0.41],
        [0.84, 0.75],
        [0.62, 0.56],
        [0.74, 0.41],
        [0.26, 0.89],
        [0.44, 0.69],
        [0.28, 0.23],
        [0.50, 0.88],
        [0.38, 0.63],
    ],
    [
        [0.05, 0.23],
        [0.09, 0.33],
        [0.65, 0.92],
        [0.69, 0.66],
        [0.94, 0.92],
        [0.73, 0.06],
        [0.51, 0.13],
        [0.59, 0.94],
        [0.76, 0.40],
        [0.95, 0.69],
        [0.39, 0.24],
        [0.03, 0.92],
    ],
];

const B: [[f64; 2]; 4] = [[0.47, 0.52], [0.77, 0.34], [0.63, 0.33], [0.31, 0.65]];

/// The 4-agent, 12-unknown benchmark system (two equations per agent) on
/// the path `1 − 2 − 3 − 4`.
pub fn fixture_paper_4agent() -> (PartitionedSystem, Network) {
    let blocks = A_T
        .iter()
        .zip(B.iter())
        .map(|(cols, b)| {
            let a = DMatrix::from_fn(2, 12, |r, c| cols[c][r]);
            (a, DVector::from_column_slice(b))
        })
        .collect();
    let system = PartitionedSystem::new(blocks).expect("fixture has full row rank");
    (system, Network::path(4))
}
