#![allow(dead_code)]

use nalgebra::DMatrix;
use netarch::data::{log_squared, ZeroMode};
use netarch::simulate::{random_knn_weights, simulate_network, InnovationSpec, NetworkProcess};
use netarch::{EdgeWeightMatrix, LogVolPanel, Normalization, ReturnPanel, WeightKind};

pub fn ring(n: usize) -> EdgeWeightMatrix {
    let w = DMatrix::from_fn(n, n, |i, j| {
        if (i + 1) % n == j || (j + 1) % n == i {
            0.5
        } else {
            0.0
        }
    });
    EdgeWeightMatrix::new(w, WeightKind::Knn { k: 2 }, Normalization::RowNormalized).unwrap()
}

/// A network log-ARCH panel with heterogeneous parameters.
pub fn network_panel(
    n: usize,
    t_len: usize,
    rho: f64,
    seed: u64,
) -> (ReturnPanel, EdgeWeightMatrix) {
    let w = random_knn_weights(n, 3.min(n - 1), seed ^ 0x5eed).unwrap();
    let process = NetworkProcess {
        phi0: (0..n).map(|i| -9.0 + 0.1 * (i % 5) as f64).collect(),
        rho,
        gamma_diag: (0..n).map(|i| 0.15 + 0.05 * (i % 4) as f64).collect(),
    };
    let panel = simulate_network(&process, &w, t_len, 500, &InnovationSpec { seed }).unwrap();
    (panel, w)
}

pub fn log_sq(panel: &ReturnPanel) -> LogVolPanel {
    log_squared(panel, ZeroMode::FloorMinNonzero).unwrap()
}
