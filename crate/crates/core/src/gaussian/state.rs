use crate::dense::{self, CMat};
use crate::error::{Error, Result};
use crate::lattice::ModeId;
use crate::pfaffian::{log_pfaffian_unchecked, LogScalar};
use faer::{Mat, MatRef};
use num_complex::Complex64 as C64;
use std::collections::HashMap;

/// Entrywise tolerance on `T + T^T`, relative to `max(1, max |T|)`.
pub const PAIRING_ANTISYMMETRY_TOL: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct PairingState {
    modes: Vec<ModeId>,
    t: CMat,
}

impl PairingState {
    pub fn new(modes: Vec<ModeId>, t: CMat) -> Result<Self> {
        let m = modes.len();
        if t.nrows() != m || t.ncols() != m {
            return Err(Error::Validation(format!(
                "pairing matrix is {}x{} for {} modes",
                t.nrows(),
                t.ncols(),
                m
            )));
        }
        let defect = dense::antisymmetry_defect(t.as_ref());
        let scale = dense::max_abs(t.as_ref()).max(1.0);
        if defect > PAIRING_ANTISYMMETRY_TOL * scale {
            return Err(Error::Validation(format!(
                "pairing matrix is not antisymmetric (|T + T^T| = {defect:.3e})"
            )));
        }
        if !t.as_ref().is_all_finite() {
            return Err(Error::Validation("pairing matrix has non-finite entries".into()));
        }
        check_distinct(&modes)?;
        let mut t = t;
        dense::antisymmetrize(&mut t);
        Ok(PairingState { modes, t })
    }

    /// Builds the state after forcing exact antisymmetry; for matrices that
    /// are antisymmetric up to rounding from a longer computation.
    pub(crate) fn from_parts(modes: Vec<ModeId>, mut t: CMat) -> Self {
        dense::antisymmetrize(&mut t);
        PairingState { modes, t }
    }

    pub fn vacuum(modes: Vec<ModeId>) -> Self {
        let m = modes.len();
        PairingState {
            modes,
            t: dense::zeros(m, m),
        }
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

    pub fn matrix(&self) -> MatRef<'_, C64> {
        self.t.as_ref()
    }

    pub fn into_parts(self) -> (Vec<ModeId>, CMat) {
        (self.modes, self.t)
    }

    pub fn positions(&self) -> HashMap<ModeId, usize> {
        self.modes.iter().enumerate().map(|(i, &m)| (m, i)).collect()
    }

    /// `T` entry for a pair of modes, zero if either is absent.
    pub fn entry(&self, p: ModeId, q: ModeId) -> C64 {
        let pos = self.positions();
        match (pos.get(&p), pos.get(&q)) {
            (Some(&i), Some(&j)) => self.t[(i, j)],
            _ => C64::new(0.0, 0.0),
        }
    }

    /// Same state with its modes listed in `order`; the pairing amplitudes do
    /// not depend on the listing.
    pub fn reordered(&self, order: &[ModeId]) -> Result<PairingState> {
        let pos = self.positions();
        if order.len() != self.len() {
            return Err(Error::ModeMismatch(format!(
                "reorder to {} modes from {}",
                order.len(),
                self.len()
            )));
        }
        let idx: Vec<usize> = order
            .iter()
            .map(|m| {
                pos.get(m)
                    .copied()
                    .ok_or_else(|| Error::ModeMismatch(format!("mode {} not present", m.0)))
            })
            .collect::<Result<_>>()?;
        check_distinct(order)?;
        Ok(PairingState {
            modes: order.to_vec(),
            t: dense::submatrix(self.t.as_ref(), &idx, &idx),
        })
    }

    /// Tensor product of states on disjoint mode sets; the modes of `other`
    /// follow those of `self`.
    pub fn direct_sum(&self, other: &PairingState) -> Result<PairingState> {
        let (m, n) = (self.len(), other.len());
        let mut modes = self.modes.clone();
        modes.extend_from_slice(&other.modes);
        check_distinct(&modes)?;
        let t = Mat::from_fn(m + n, m + n, |i, j| {
            if i < m && j < m {
                self.t[(i, j)]
            } else if i >= m && j >= m {
                other.t[(i - m, j - m)]
            } else {
                C64::new(0.0, 0.0)
            }
        });
        Ok(PairingState { modes, t })
    }
}

fn check_distinct(modes: &[ModeId]) -> Result<()> {
    let mut sorted = modes.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Validation("mode list contains duplicates".into()));
    }
    Ok(())
}

fn aligned(left: &PairingState, right: &PairingState) -> Result<PairingState> {
    if left.modes == right.modes {
        return Ok(right.clone());
    }
    right.reordered(&left.modes).map_err(|_| {
        Error::ModeMismatch(format!(
            "overlap of states on different mode sets ({} and {} modes)",
            left.len(),
            right.len()
        ))
    })
}

/// `<left|right>` for unnormalised pairing states.
pub fn bcs_overlap(left: &PairingState, right: &PairingState) -> Result<C64> {
    Ok(log_overlap(left, right)?.value())
}

/// `<left|right>` in logarithmic form, from
/// `(-1)^{M(M+1)/2} Pf [[T_R, -1], [1, -conj(T_L)]]`.
pub fn log_overlap(left: &PairingState, right: &PairingState) -> Result<LogScalar> {
    let right = aligned(left, right)?;
    let m = left.len();
    let big = Mat::from_fn(2 * m, 2 * m, |i, j| match (i < m, j < m) {
        (true, true) => right.t[(i, j)],
        (false, false) => -left.t[(i - m, j - m)].conj(),
        (true, false) => {
            if j - m == i {
                C64::new(-1.0, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        }
        (false, true) => {
            if i - m == j {
                C64::new(1.0, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        }
    });
    let mut pf = log_pfaffian_unchecked(big.as_ref());
    if (m * (m + 1) / 2) % 2 == 1 {
        pf.phase = -pf.phase;
    }
    Ok(pf)
}

/// `ln <T|T> = 1/2 ln det(1 + T T^+)`.
pub fn log_norm(state: &PairingState) -> f64 {
    let m = state.len();
    let t = state.t.as_ref();
    let g = &dense::identity(m) + &(t * t.adjoint());
    0.5 * dense::log_abs_det(g.as_ref())
}

/// `|<a|b>|^2 / (<a|a> <b|b>)`, evaluated through determinants so that it
/// stays finite for large mode counts.
pub fn fidelity(a: &PairingState, b: &PairingState) -> Result<f64> {
    let b = aligned(a, &b.clone())?;
    let m = a.len();
    let cross = &dense::identity(m) - &(b.t.as_ref() * dense::conj(a.t.as_ref()));
    let ln = dense::log_abs_det(cross.as_ref()) - log_norm(a) - log_norm(&b);
    Ok(ln.exp())
}

/// Applies a single-particle unitary, `a_p^+ -> sum_q U_qp a_q^+`, which maps
/// `T` to `U T U^T`. With `signed_permutation_ok`, a `U` with one unimodular
/// entry per column is applied by relabelling instead of dense products.
pub fn transform_modes(
    state: &PairingState,
    u: MatRef<'_, C64>,
    signed_permutation_ok: bool,
) -> Result<PairingState> {
    let m = state.len();
    if u.nrows() != m || u.ncols() != m {
        return Err(Error::Validation(format!(
            "transformation is {}x{} for {} modes",
            u.nrows(),
            u.ncols(),
            m
        )));
    }
    let defect = dense::unitarity_defect(u);
    if defect > 1e-10 {
        return Err(Error::Validation(format!(
            "transformation is not unitary (|U^+U - 1| = {defect:.3e})"
        )));
    }
    if signed_permutation_ok {
        if let Some((target, phase)) = monomial(u) {
            let mut t = dense::zeros(m, m);
            for p in 0..m {
                for q in 0..m {
                    t[(target[p], target[q])] = phase[p] * state.t[(p, q)] * phase[q];
                }
            }
            return Ok(PairingState::from_parts(state.modes.clone(), t));
        }
    }
    let t = &(u * state.t.as_ref()) * u.transpose();
    Ok(PairingState::from_parts(state.modes.clone(), t))
}

fn monomial(u: MatRef<'_, C64>) -> Option<(Vec<usize>, Vec<C64>)> {
    let m = u.nrows();
    let mut target = Vec::with_capacity(m);
    let mut phase = Vec::with_capacity(m);
    for p in 0..m {
        let nz: Vec<usize> = (0..m).filter(|&q| u[(q, p)].norm() > 1e-14).collect();
        if nz.len() != 1 {
            return None;
        }
        target.push(nz[0]);
        phase.push(u[(nz[0], p)]);
    }
    Some((target, phase))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::{from_real, zeros};
    use crate::random::{random_pairing, random_unitary};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ids(n: usize) -> Vec<ModeId> {
        (0..n).map(ModeId).collect()
    }

    #[test]
    fn rejects_symmetric_matrix() {
        let t = from_real(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!(matches!(PairingState::new(ids(2), t), Err(Error::Validation(_))));
    }

    #[test]
    fn single_pair_overlap() {
        let mut t = zeros(2, 2);
        t[(0, 1)] = C64::new(0.5, 0.0);
        t[(1, 0)] = C64::new(-0.5, 0.0);
        let s = PairingState::new(ids(2), t).unwrap();
        let v = PairingState::vacuum(ids(2));
        let o = bcs_overlap(&v, &s).unwrap();
        assert!((o - C64::new(1.0, 0.0)).norm() < 1e-15);
        let n = bcs_overlap(&s, &s).unwrap();
        assert!((n - C64::new(1.25, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn vacuum_norm_is_one() {
        for m in [0, 1, 3, 6] {
            let v = PairingState::vacuum(ids(m));
            let o = bcs_overlap(&v, &v).unwrap();
            assert!((o - C64::new(1.0, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn overlap_is_hermitian() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_pairing(&ids(6), 0.8, &mut rng);
        let b = random_pairing(&ids(6), 0.8, &mut rng);
        let ab = bcs_overlap(&a, &b).unwrap();
        let ba = bcs_overlap(&b, &a).unwrap();
        assert!((ab - ba.conj()).norm() < 1e-12);
    }

    #[test]
    fn overlap_magnitude_matches_determinant() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = random_pairing(&ids(8), 0.7, &mut rng);
        let b = random_pairing(&ids(8), 0.7, &mut rng);
        let o = bcs_overlap(&a, &b).unwrap();
        let d = &dense::identity(8) - &(b.matrix() * dense::conj(a.matrix()));
        assert!((o.norm_sqr() - d.as_ref().determinant().norm()).abs() < 1e-9 * o.norm_sqr());
    }

    #[test]
    fn overlap_of_different_mode_sets_fails() {
        let a = PairingState::vacuum(ids(2));
        let b = PairingState::vacuum(vec![ModeId(0), ModeId(5)]);
        assert!(matches!(bcs_overlap(&a, &b), Err(Error::ModeMismatch(_))));
    }

    #[test]
    fn reordering_does_not_change_overlaps() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_pairing(&ids(5), 1.0, &mut rng);
        let b = random_pairing(&ids(5), 1.0, &mut rng);
        let order = vec![ModeId(3), ModeId(0), ModeId(4), ModeId(1), ModeId(2)];
        let b2 = b.reordered(&order).unwrap();
        let o1 = bcs_overlap(&a, &b).unwrap();
        let o2 = bcs_overlap(&a, &b2).unwrap();
        assert!((o1 - o2).norm() < 1e-12);
    }

    #[test]
    fn fidelity_is_bounded_and_unit_on_self() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = random_pairing(&ids(10), 1.0, &mut rng);
        let b = random_pairing(&ids(10), 1.0, &mut rng);
        assert!((fidelity(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let f = fidelity(&a, &b).unwrap();
        assert!((0.0..=1.0).contains(&f));
        let direct = bcs_overlap(&a, &b).unwrap().norm_sqr()
            / (bcs_overlap(&a, &a).unwrap().re * bcs_overlap(&b, &b).unwrap().re);
        assert!((f - direct).abs() < 1e-10);
    }

    #[test]
    fn unitary_transform_preserves_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random_pairing(&ids(6), 1.0, &mut rng);
        let u = random_unitary(6, &mut rng);
        let b = transform_modes(&a, u.as_ref(), false).unwrap();
        assert!((log_norm(&a) - log_norm(&b)).abs() < 1e-12);
    }

    #[test]
    fn monomial_path_matches_dense_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let a = random_pairing(&ids(4), 1.0, &mut rng);
        let mut u = zeros(4, 4);
        u[(1, 0)] = C64::new(0.0, 1.0);
        u[(3, 1)] = C64::new(-1.0, 0.0);
        u[(0, 2)] = C64::new(1.0, 0.0);
        u[(2, 3)] = C64::from_polar(1.0, 0.3);
        let fast = transform_modes(&a, u.as_ref(), true).unwrap();
        let slow = transform_modes(&a, u.as_ref(), false).unwrap();
        assert!(dense::max_abs_diff(fast.matrix(), slow.matrix()) < 1e-14);
    }

    #[test]
    fn non_unitary_transform_is_rejected() {
        let a = PairingState::vacuum(ids(2));
        let u = from_real(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        assert!(transform_modes(&a, u.as_ref(), false).is_err());
    }
}
