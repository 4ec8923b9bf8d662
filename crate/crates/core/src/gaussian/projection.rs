use super::state::PairingState;
use crate::dense;
use crate::error::{Error, Result};
use crate::lattice::ModeId;
use crate::pfaffian::{log_pfaffian_unchecked, LogScalar};
use faer::Mat;
use num_complex::Complex64 as C64;

/// Result of `<B|_V |T>_{P u V}`: a pairing state on `P` times a scalar.
#[derive(Clone, Debug)]
pub struct Projection {
    pub state: PairingState,
    pub scalar: LogScalar,
}

/// Projects the modes of `bond` out of `joint` with the bra `<bond|`.
///
/// With `T` split into blocks over the remaining modes `P` and the bond modes
/// `V`, the result is `T' = T_PP + T_PV Q T_PV^T` where
/// `Q = -conj(B) (1 - T_VV conj(B))^-1`, and the scalar is `<B|T_VV>`.
/// An empty bond returns `joint` with scalar one.
pub fn project_bonds(joint: &PairingState, bond: &PairingState) -> Result<Projection> {
    if bond.is_empty() {
        return Ok(Projection {
            state: joint.clone(),
            scalar: LogScalar::ONE,
        });
    }
    let pos = joint.positions();
    let mut is_virtual = vec![false; joint.len()];
    let mut v_idx = Vec::with_capacity(bond.len());
    for m in bond.modes() {
        let &i = pos.get(m).ok_or_else(|| {
            Error::ModeMismatch(format!("bond mode {} is not a mode of the joint state", m.0))
        })?;
        is_virtual[i] = true;
        v_idx.push(i);
    }
    let p_idx: Vec<usize> = (0..joint.len()).filter(|&i| !is_virtual[i]).collect();
    let p_modes: Vec<ModeId> = p_idx.iter().map(|&i| joint.modes()[i]).collect();
    let t = joint.matrix();
    let n = v_idx.len();
    let t_vv = dense::submatrix(t, &v_idx, &v_idx);
    let t_pv = dense::submatrix(t, &p_idx, &v_idx);
    let t_pp = dense::submatrix(t, &p_idx, &p_idx);
    let b_bar = dense::conj(bond.matrix());

    let sign_nn = if (n * (n + 1) / 2) % 2 == 1 { -1.0 } else { 1.0 };

    let (b_inv, res) = if n % 2 == 0 {
        dense::inverse(b_bar.as_ref())
    } else {
        (dense::zeros(0, 0), f64::INFINITY)
    };
    if res < 1e-9 {
        // Q = S^-1 with S = T_VV - conj(B)^-1, and
        // Pf [[T, -1], [1, -conj(B)]] = Pf(-conj(B)) Pf(S).
        let mut s = &t_vv - &b_inv;
        dense::antisymmetrize(&mut s);
        let pf_s = log_pfaffian_unchecked(s.as_ref());
        let mut pf_b = log_pfaffian_unchecked(bond.matrix()).conj();
        if (n / 2) % 2 == 1 {
            pf_b.phase = -pf_b.phase;
        }
        let mut scalar = pf_b * pf_s;
        scalar.phase *= sign_nn;
        if pf_s.is_zero() {
            return Err(Error::Contraction(
                "projected bond annihilates the state".into(),
            ));
        }
        let t_new = if p_idx.is_empty() {
            t_pp
        } else {
            let (y, res) = dense::solve(s.as_ref(), t_pv.transpose());
            if res > 1e-8 {
                return Err(Error::Contraction(format!(
                    "Schur complement is singular (relative residual {res:.3e}, |Pf| = exp({:.3}))",
                    pf_s.ln_abs
                )));
            }
            &t_pp + &(&t_pv * &y)
        };
        return Ok(Projection {
            state: PairingState::from_parts(p_modes, t_new),
            scalar,
        });
    }

    // General bond: X = 1 - T_VV conj(B), T' = T_PP - T_PV conj(B) X^-1 T_PV^T.
    let x = &dense::identity(n) - &(&t_vv * &b_bar);
    let big = Mat::from_fn(2 * n, 2 * n, |i, j| match (i < n, j < n) {
        (true, true) => t_vv[(i, j)],
        (false, false) => -b_bar[(i - n, j - n)],
        (true, false) => {
            if j - n == i {
                C64::new(-1.0, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        }
        (false, true) => {
            if i - n == j {
                C64::new(1.0, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        }
    });
    let mut scalar = log_pfaffian_unchecked(big.as_ref());
    scalar.phase *= sign_nn;
    if scalar.is_zero() {
        return Err(Error::Contraction("projected bond annihilates the state".into()));
    }
    let t_new = if p_idx.is_empty() {
        t_pp
    } else {
        let (y, res) = dense::solve(x.as_ref(), t_pv.transpose());
        if res > 1e-8 {
            return Err(Error::Contraction(format!(
                "1 - T_VV conj(B) is singular (relative residual {res:.3e})"
            )));
        }
        &t_pp - &(&(&t_pv * &b_bar) * &y)
    };
    Ok(Projection {
        state: PairingState::from_parts(p_modes, t_new),
        scalar,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::bcs_overlap;
    use crate::random;

    fn ids(r: std::ops::Range<usize>) -> Vec<ModeId> {
        r.map(ModeId).collect()
    }

    #[test]
    fn empty_bond_is_identity() {
        let mut rng = random::rng(14);
        let s = random::pairing(&ids(0..4), 1.0, &mut rng);
        let p = project_bonds(&s, &PairingState::vacuum(vec![])).unwrap();
        assert_eq!(p.scalar, LogScalar::ONE);
        assert!(dense::max_abs_diff(p.state.matrix(), s.matrix()) == 0.0);
    }

    #[test]
    fn full_projection_is_overlap() {
        let mut rng = random::rng(15);
        for n in [2, 3, 4, 6] {
            let s = random::pairing(&ids(0..n), 0.8, &mut rng);
            let b = random::pairing(&ids(0..n), 0.8, &mut rng);
            let p = project_bonds(&s, &b).unwrap();
            assert!(p.state.is_empty());
            let o = bcs_overlap(&b, &s).unwrap();
            assert!((p.scalar.value() - o).norm() < 1e-11 * o.norm().max(1.0), "n={n}");
        }
    }

    #[test]
    fn unknown_bond_mode_is_rejected() {
        let s = PairingState::vacuum(ids(0..2));
        let b = PairingState::vacuum(vec![ModeId(7)]);
        assert!(matches!(project_bonds(&s, &b), Err(Error::ModeMismatch(_))));
    }

    #[test]
    fn invertible_and_general_paths_agree() {
        let mut rng = random::rng(16);
        let s = random::pairing(&ids(0..8), 0.6, &mut rng);
        let b = random::pairing(&ids(4..8), 0.9, &mut rng);
        let fast = project_bonds(&s, &b).unwrap();
        // A bond padded with one unpaired extra mode takes the general branch
        // and adds an overlap factor <0|.|0> on that mode.
        let padded = b.direct_sum(&PairingState::vacuum(vec![ModeId(3)])).unwrap();
        let slow = project_bonds(&s, &padded).unwrap();
        let only = project_bonds(&s, &PairingState::vacuum(vec![ModeId(3)])).unwrap();
        let reference = project_bonds(&only.state, &b).unwrap();
        assert!(dense::max_abs_diff(slow.state.matrix(), reference.state.matrix()) < 1e-10);
        let lhs = slow.scalar.value();
        let rhs = (reference.scalar * only.scalar).value();
        assert!((lhs - rhs).norm() < 1e-10 * rhs.norm());
        assert_eq!(fast.state.len(), 4);
    }
}
