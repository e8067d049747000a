//! Seeded random states and unitaries for tests and verification runs.

use rand::Rng;

use crate::tensor::{qr_split, Tensor, C64};

fn gaussian(rng: &mut impl Rng) -> f64 {
    // Box–Muller
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

pub(crate) fn gaussian_complex(rng: &mut impl Rng) -> C64 {
    C64::new(gaussian(rng), gaussian(rng))
}

/// Normalized Gaussian-random statevector on `len` qubits.
pub fn random_state_vector(len: usize, rng: &mut impl Rng) -> Tensor {
    let dim = 1usize << len;
    let mut psi = Tensor::from_fn(&[dim], |_| gaussian_complex(rng));
    let n = psi.norm();
    psi.scale_in_place(C64::new(1.0 / n, 0.0));
    psi
}

/// Haar-distributed `dim × dim` unitary (QR of a Ginibre matrix with the
/// phases of `R`'s diagonal removed).
pub fn random_unitary(dim: usize, rng: &mut impl Rng) -> Tensor {
    let g = Tensor::from_fn(&[dim, dim], |_| gaussian_complex(rng));
    let (q, r) = qr_split(&g, &[0]).expect("square matrix factorizes");
    let phases: Vec<C64> = (0..dim)
        .map(|j| {
            let d = r.get(&[j, j]);
            if d.norm() > 0.0 { d / d.norm() } else { C64::new(1.0, 0.0) }
        })
        .collect();
    Tensor::from_fn(&[dim, dim], |ix| q.get(ix) * phases[ix[1]])
}
