//! Seeded random instances for tests, benchmarks and batch verification.

use crate::dense::{self, CMat};
use crate::gaussian::{PairingState, QuadraticHamiltonian};
use crate::lattice::ModeId;
use faer::Mat;
use num_complex::Complex64 as C64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn complex<R: Rng>(rng: &mut R, scale: f64) -> C64 {
    C64::new(
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
    )
}

pub fn antisymmetric<R: Rng>(n: usize, scale: f64, rng: &mut R) -> CMat {
    let mut a = dense::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let v = complex(rng, scale);
            a[(i, j)] = v;
            a[(j, i)] = -v;
        }
    }
    a
}

pub fn hermitian<R: Rng>(n: usize, scale: f64, rng: &mut R) -> CMat {
    let mut a = dense::zeros(n, n);
    for i in 0..n {
        a[(i, i)] = C64::new(rng.random_range(-scale..scale), 0.0);
        for j in i + 1..n {
            let v = complex(rng, scale);
            a[(i, j)] = v;
            a[(j, i)] = v.conj();
        }
    }
    a
}

pub fn pairing<R: Rng>(modes: &[ModeId], scale: f64, rng: &mut R) -> PairingState {
    PairingState::new(modes.to_vec(), antisymmetric(modes.len(), scale, rng))
        .expect("random antisymmetric matrix")
}

/// Haar-ish unitary from the QR factor of a complex Gaussian-like matrix.
pub fn unitary<R: Rng>(n: usize, rng: &mut R) -> CMat {
    let a = Mat::from_fn(n, n, |_, _| complex(rng, 1.0));
    a.qr().compute_Q()
}

/// Hamiltonian with random hopping and pairing on `modes` whose BdG gap is
/// at least `gap` and whose ground state has a pairing form.
pub fn gapped_hamiltonian<R: Rng>(
    modes: &[ModeId],
    scale: f64,
    gap: f64,
    rng: &mut R,
) -> QuadraticHamiltonian {
    let m = modes.len();
    for _ in 0..20 {
        let h = hermitian(m, scale, rng);
        let d = antisymmetric(m, scale, rng);
        let ham = QuadraticHamiltonian::new(modes.to_vec(), h, d, 0.0).expect("valid hamiltonian");
        if ham.spectrum().min_excitation() >= gap && ham.ground_state_pairing(gap).is_ok() {
            return ham;
        }
    }
    // A chemical potential larger than the BdG norm opens the gap.
    let mut h = hermitian(m, scale, rng);
    let d = antisymmetric(m, scale, rng);
    let bound = (h.norm_l2().powi(2) * 2.0 + d.norm_l2().powi(2) * 2.0).sqrt();
    for i in 0..m {
        h[(i, i)] += C64::new(bound + gap, 0.0);
    }
    QuadraticHamiltonian::new(modes.to_vec(), h, d, 0.0).expect("valid hamiltonian")
}

pub use self::pairing as random_pairing;
pub use self::unitary as random_unitary;
