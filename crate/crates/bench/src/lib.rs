//! Fixtures shared by the benchmarks.

use nalgebra::{DMatrix, DVector};
use taultn_core::NetworkSpec;

/// Two-neuron oscillator-free instance with a unique interior equilibrium.
pub fn two_neuron() -> NetworkSpec {
    NetworkSpec::from_rows(&[&[0.0, -1.6], &[1.6, 0.0]], &[0.8, 1.0], &[1.0, -1.0]).expect("valid")
}

/// Deterministic dense instance of dimension `n`: weakly coupled ring plus
/// unit dissipation, so `A` is diagonally dominant and stable.
pub fn ring(n: usize) -> NetworkSpec {
    let w = DMatrix::from_fn(n, n, |i, j| match (j + n - i) % n {
        1 => 0.4,
        k if k == n - 1 => -0.3,
        _ => 0.0,
    });
    let u = DVector::from_fn(n, |i, _| if i % 2 == 0 { 0.6 } else { -0.2 });
    NetworkSpec::new(w, DVector::from_element(n, 1.0), u).expect("valid")
}
