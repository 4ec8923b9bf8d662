use super::covariance::Correlations;
use super::state::PairingState;
use crate::dense::{self, CMat};
use crate::error::{Error, Result};
use crate::lattice::ModeId;
use faer::{Mat, MatRef, Side};
use num_complex::Complex64 as C64;

/// Excitation energies below this are treated as a closed gap.
pub const DEFAULT_GAP_TOL: f64 = 1e-8;

/// `H = sum_pq h_pq a_p^+ a_q + 1/2 sum_pq (D_pq a_p^+ a_q^+ + h.c.) + c`
/// with `h` Hermitian and `D` antisymmetric.
#[derive(Clone, Debug)]
pub struct QuadraticHamiltonian {
    modes: Vec<ModeId>,
    hopping: CMat,
    pairing: CMat,
    constant: f64,
}

/// Eigen-decomposition of the BdG matrix `[[h, D], [-conj(D), -conj(h)]]`.
#[derive(Clone, Debug)]
pub struct BdgSpectrum {
    /// All `2M` eigenvalues, ascending.
    pub eigenvalues: Vec<f64>,
    /// Eigenvectors as columns, in the same order.
    pub eigenvectors: CMat,
}

impl BdgSpectrum {
    /// Positive excitation energies `E_k`, ascending.
    pub fn excitations(&self) -> Vec<f64> {
        let m = self.eigenvalues.len() / 2;
        self.eigenvalues[m..].to_vec()
    }

    /// Smallest `|E|`; zero when the spectrum is gapless.
    pub fn min_excitation(&self) -> f64 {
        self.eigenvalues
            .iter()
            .fold(f64::INFINITY, |acc, e| acc.min(e.abs()))
    }
}

impl QuadraticHamiltonian {
    pub fn new(modes: Vec<ModeId>, hopping: CMat, pairing: CMat, constant: f64) -> Result<Self> {
        let m = modes.len();
        for (name, a) in [("hopping", &hopping), ("pairing", &pairing)] {
            if a.nrows() != m || a.ncols() != m {
                return Err(Error::Validation(format!(
                    "{name} matrix is {}x{} for {m} modes",
                    a.nrows(),
                    a.ncols()
                )));
            }
        }
        let scale = dense::max_abs(hopping.as_ref()).max(1.0);
        let herm = dense::max_abs_diff(hopping.as_ref(), dense::adjoint(hopping.as_ref()).as_ref());
        if herm > 1e-12 * scale {
            return Err(Error::Validation(format!(
                "hopping matrix is not Hermitian (defect {herm:.3e})"
            )));
        }
        let scale = dense::max_abs(pairing.as_ref()).max(1.0);
        let anti = dense::antisymmetry_defect(pairing.as_ref());
        if anti > 1e-12 * scale {
            return Err(Error::Validation(format!(
                "pairing matrix is not antisymmetric (defect {anti:.3e})"
            )));
        }
        let hopping = Mat::from_fn(m, m, |i, j| (hopping[(i, j)] + hopping[(j, i)].conj()) * 0.5);
        let mut pairing = pairing;
        dense::antisymmetrize(&mut pairing);
        Ok(QuadraticHamiltonian {
            modes,
            hopping,
            pairing,
            constant,
        })
    }

    pub fn modes(&self) -> &[ModeId] {
        &self.modes
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn hopping(&self) -> MatRef<'_, C64> {
        self.hopping.as_ref()
    }

    pub fn pairing(&self) -> MatRef<'_, C64> {
        self.pairing.as_ref()
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    pub fn bdg_matrix(&self) -> CMat {
        let m = self.len();
        Mat::from_fn(2 * m, 2 * m, |i, j| match (i < m, j < m) {
            (true, true) => self.hopping[(i, j)],
            (true, false) => self.pairing[(i, j - m)],
            (false, true) => -self.pairing[(i - m, j)].conj(),
            (false, false) => -self.hopping[(i - m, j - m)].conj(),
        })
    }

    pub fn spectrum(&self) -> BdgSpectrum {
        let bdg = self.bdg_matrix();
        if bdg.nrows() == 0 {
            return BdgSpectrum {
                eigenvalues: Vec::new(),
                eigenvectors: dense::zeros(0, 0),
            };
        }
        let evd = bdg
            .self_adjoint_eigen(Side::Lower)
            .expect("hermitian eigensolver did not converge");
        let s = evd.S().column_vector();
        let eigenvalues = (0..s.nrows()).map(|i| s[i].re).collect();
        BdgSpectrum {
            eigenvalues,
            eigenvectors: evd.U().to_owned(),
        }
    }

    /// `E_0 = c + tr(h)/2 - sum_k E_k / 2`.
    pub fn ground_energy(&self) -> f64 {
        let tr: f64 = (0..self.len()).map(|i| self.hopping[(i, i)].re).sum();
        let sum: f64 = self.spectrum().excitations().iter().sum();
        self.constant + 0.5 * tr - 0.5 * sum
    }

    /// The BCS ground state. Fails on a closed gap or when the ground state
    /// has no pairing form (some mode is occupied with certainty).
    pub fn ground_state_pairing(&self, gap_tol: f64) -> Result<PairingState> {
        let m = self.len();
        let spec = self.spectrum();
        let min = spec.min_excitation();
        if min <= gap_tol {
            return Err(Error::Gapless {
                min_energy: min,
                tol: gap_tol,
            });
        }
        // Positive-energy columns (x; y) define b_k = sum_p conj(x_pk) a_p + conj(y_pk) a_p^+.
        // b_k |T> = 0 gives conj(X)^T T = -conj(Y)^T.
        let v = spec.eigenvectors.as_ref();
        let xt = Mat::from_fn(m, m, |k, p| v[(p, m + k)].conj());
        let yt = Mat::from_fn(m, m, |k, p| -v[(m + p, m + k)].conj());
        let sv = dense::singular_values(xt.as_ref());
        let smin = sv.last().copied().unwrap_or(1.0);
        if smin < 1e-10 {
            return Err(Error::Representation(format!(
                "quasiparticle block is singular (smallest singular value {smin:.3e})"
            )));
        }
        let (t, res) = dense::solve(xt.as_ref(), yt.as_ref());
        if res > 1e-8 {
            return Err(Error::Representation(format!(
                "ill-conditioned quasiparticle block (residual {res:.3e})"
            )));
        }
        let defect = dense::antisymmetry_defect(t.as_ref());
        if defect > 1e-8 * dense::max_abs(t.as_ref()).max(1.0) {
            return Err(Error::Representation(format!(
                "recovered pairing matrix is not antisymmetric ({defect:.3e})"
            )));
        }
        Ok(PairingState::from_parts(self.modes.clone(), t))
    }

    /// `<H>` in the normalised state.
    pub fn energy_expectation(&self, state: &PairingState) -> Result<f64> {
        let state = state.reordered(&self.modes)?;
        let c = Correlations::from_pairing(&state);
        Ok(self.energy_from_correlations(&c))
    }

    pub(crate) fn energy_from_correlations(&self, c: &Correlations) -> f64 {
        let m = self.len();
        let mut e = self.constant;
        for p in 0..m {
            for q in 0..m {
                e += (self.hopping[(p, q)] * c.rho[(q, p)]).re;
                e += (self.pairing[(p, q)] * c.kappa[(p, q)].conj()).re;
            }
        }
        e
    }

    /// Majorana form `H = c' + (i/4) sum_jk A_jk g_j g_k` with `A` real
    /// antisymmetric, for `g_2p = a_p + a_p^+`, `g_2p+1 = -i (a_p - a_p^+)`.
    pub fn majorana_form(&self) -> (Mat<f64>, f64) {
        let m = self.len();
        let bdg = self.bdg_matrix();
        // Phi = L g with Phi = (a; a^+).
        let mut l = dense::zeros(2 * m, 2 * m);
        for p in 0..m {
            l[(p, 2 * p)] = C64::new(0.5, 0.0);
            l[(p, 2 * p + 1)] = C64::new(0.0, 0.5);
            l[(m + p, 2 * p)] = C64::new(0.5, 0.0);
            l[(m + p, 2 * p + 1)] = C64::new(0.0, -0.5);
        }
        // Phi^+ = (tau Phi)^T with tau swapping the two halves.
        let tau_bdg = Mat::from_fn(2 * m, 2 * m, |i, j| {
            let ii = if i < m { i + m } else { i - m };
            bdg[(ii, j)]
        });
        let k = &(l.transpose() * &tau_bdg) * &l;
        let a = Mat::from_fn(2 * m, 2 * m, |i, j| {
            (C64::new(0.0, -1.0) * (k[(i, j)] - k[(j, i)])).re
        });
        let tr_k: C64 = (0..2 * m).map(|i| k[(i, i)]).sum();
        let tr_h: f64 = (0..m).map(|i| self.hopping[(i, i)].re).sum();
        (a, self.constant + 0.5 * tr_h + 0.5 * tr_k.re)
    }

    /// `<H^2> - <H>^2 = -(tr A^2 + tr (A G A G)) / 8` with `G` the Majorana
    /// covariance of the normalised state.
    pub fn energy_variance(&self, state: &PairingState) -> Result<f64> {
        let state = state.reordered(&self.modes)?;
        let g = super::CovarianceMatrix::from_pairing(&state);
        let (a, _) = self.majorana_form();
        let ag = &a * g.matrix();
        let a2: f64 = (0..a.nrows())
            .map(|i| (0..a.nrows()).map(|j| a[(i, j)] * a[(j, i)]).sum::<f64>())
            .sum();
        let agag: f64 = (0..ag.nrows())
            .map(|i| (0..ag.nrows()).map(|j| ag[(i, j)] * ag[(j, i)]).sum::<f64>())
            .sum();
        Ok((-(a2 + agag) / 8.0).max(0.0))
    }
}
