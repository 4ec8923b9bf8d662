use super::state::PairingState;
use crate::dense::{self, CMat};
use crate::error::{Error, Result};
use crate::lattice::ModeId;
use faer::{Mat, MatRef};
use num_complex::Complex64 as C64;

/// Normalised two-point functions `rho_pq = <a_q^+ a_p>` and
/// `kappa_pq = <a_q a_p>`.
#[derive(Clone, Debug)]
pub struct Correlations {
    pub rho: CMat,
    pub kappa: CMat,
}

impl Correlations {
    /// `kappa = T (1 + T^+ T)^-1`, `rho = kappa T^+`.
    pub fn from_pairing(state: &PairingState) -> Correlations {
        let m = state.len();
        let t = state.matrix();
        let g = &dense::identity(m) + &(t.adjoint() * t);
        let (w, _) = dense::inverse(g.as_ref());
        let kappa = t * &w;
        let rho = &kappa * t.adjoint();
        Correlations { rho, kappa }
    }
}

/// Real antisymmetric Majorana covariance `G_jk = (i/2) <[g_j, g_k]>` with
/// `g_2p = a_p + a_p^+` and `g_2p+1 = -i (a_p - a_p^+)`. The vacuum is the
/// direct sum of `[[0, -1], [1, 0]]` blocks.
#[derive(Clone, Debug)]
pub struct CovarianceMatrix {
    modes: Vec<ModeId>,
    gamma: Mat<f64>,
}

/// `g = Omega Phi` with `Phi = (a; a^+)`.
fn omega(m: usize) -> CMat {
    let mut o = dense::zeros(2 * m, 2 * m);
    for p in 0..m {
        o[(2 * p, p)] = C64::new(1.0, 0.0);
        o[(2 * p, m + p)] = C64::new(1.0, 0.0);
        o[(2 * p + 1, p)] = C64::new(0.0, -1.0);
        o[(2 * p + 1, m + p)] = C64::new(0.0, 1.0);
    }
    o
}

fn omega_inverse(m: usize) -> CMat {
    let mut l = dense::zeros(2 * m, 2 * m);
    for p in 0..m {
        l[(p, 2 * p)] = C64::new(0.5, 0.0);
        l[(p, 2 * p + 1)] = C64::new(0.0, 0.5);
        l[(m + p, 2 * p)] = C64::new(0.5, 0.0);
        l[(m + p, 2 * p + 1)] = C64::new(0.0, -0.5);
    }
    l
}

impl CovarianceMatrix {
    pub fn new(modes: Vec<ModeId>, gamma: Mat<f64>) -> Result<Self> {
        let n = 2 * modes.len();
        if gamma.nrows() != n || gamma.ncols() != n {
            return Err(Error::Validation(format!(
                "covariance is {}x{} for {} modes",
                gamma.nrows(),
                gamma.ncols(),
                modes.len()
            )));
        }
        for i in 0..n {
            for j in 0..n {
                if (gamma[(i, j)] + gamma[(j, i)]).abs() > 1e-10 {
                    return Err(Error::Validation("covariance is not antisymmetric".into()));
                }
            }
        }
        Ok(CovarianceMatrix { modes, gamma })
    }

    pub fn from_pairing(state: &PairingState) -> CovarianceMatrix {
        let m = state.len();
        let c = Correlations::from_pairing(state);
        // <Phi Phi^T> = [[kappa^T, 1 - rho], [rho^T, conj(kappa)]]
        let phi = Mat::from_fn(2 * m, 2 * m, |i, j| match (i < m, j < m) {
            (true, true) => c.kappa[(j, i)],
            (true, false) => {
                let d = if i == j - m { 1.0 } else { 0.0 };
                C64::new(d, 0.0) - c.rho[(i, j - m)]
            }
            (false, true) => c.rho[(j, i - m)],
            (false, false) => c.kappa[(i - m, j - m)].conj(),
        });
        let o = omega(m);
        let gg = &(&o * &phi) * o.transpose();
        let gamma = Mat::from_fn(2 * m, 2 * m, |j, k| {
            (C64::new(0.0, 0.5) * (gg[(j, k)] - gg[(k, j)])).re
        });
        CovarianceMatrix {
            modes: state.modes().to_vec(),
            gamma,
        }
    }

    pub fn modes(&self) -> &[ModeId] {
        &self.modes
    }

    pub fn matrix(&self) -> MatRef<'_, f64> {
        self.gamma.as_ref()
    }

    /// `|G G^T - 1|`, zero for pure states.
    pub fn purity_defect(&self) -> f64 {
        let n = self.gamma.nrows();
        let p = &self.gamma * self.gamma.transpose();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let d = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((p[(i, j)] - d).abs());
            }
        }
        worst
    }

    pub fn correlations(&self) -> Correlations {
        let m = self.modes.len();
        let n = 2 * m;
        // <g g^T> = 1 - i G
        let gg = Mat::from_fn(n, n, |j, k| {
            let d = if j == k { 1.0 } else { 0.0 };
            C64::new(d, -self.gamma[(j, k)])
        });
        let l = omega_inverse(m);
        let phi = &(&l * &gg) * l.transpose();
        let kappa = Mat::from_fn(m, m, |p, q| phi[(q, p)]);
        let rho = Mat::from_fn(m, m, |p, q| {
            let d = if p == q { 1.0 } else { 0.0 };
            C64::new(d, 0.0) - phi[(p, m + q)]
        });
        Correlations { rho, kappa }
    }

    /// Recovers `T = kappa (1 - conj(rho))^-1`.
    pub fn to_pairing(&self) -> Result<PairingState> {
        let m = self.modes.len();
        if self.purity_defect() > 1e-8 {
            return Err(Error::SingularRecovery(format!(
                "covariance is not pure (|G G^T - 1| = {:.3e})",
                self.purity_defect()
            )));
        }
        let c = self.correlations();
        let w = Mat::from_fn(m, m, |p, q| {
            let d = if p == q { 1.0 } else { 0.0 };
            C64::new(d, 0.0) - c.rho[(p, q)].conj()
        });
        let sv = dense::singular_values(w.as_ref());
        let smin = sv.last().copied().unwrap_or(1.0);
        if smin < 1e-12 {
            return Err(Error::SingularRecovery(format!(
                "1 - conj(rho) is singular (smallest singular value {smin:.3e})"
            )));
        }
        // T W = kappa  <=>  W^T T^T = kappa^T
        let (tt, res) = dense::solve(w.transpose(), c.kappa.transpose());
        if res > 1e-8 {
            return Err(Error::SingularRecovery(format!("residual {res:.3e}")));
        }
        let t = dense::transpose(tt.as_ref());
        let defect = dense::antisymmetry_defect(t.as_ref());
        if defect > 1e-6 * dense::max_abs(t.as_ref()).max(1.0) {
            return Err(Error::SingularRecovery(format!(
                "recovered matrix is not antisymmetric ({defect:.3e})"
            )));
        }
        Ok(PairingState::from_parts(self.modes.clone(), t))
    }
}
