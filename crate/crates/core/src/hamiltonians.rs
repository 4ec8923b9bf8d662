//! Lattice Dirac Hamiltonians in pairing ("K") form and the particle-hole
//! transformations that produce them from number-conserving discretisations.
//!
//! The K-form Hamiltonian is
//! `H = sum_{x,i} (-i/2a) psi^+_a(x) K_i(x)_ab psi^+_b(x+e_i) + h.c. + m sum_x psi^+ psi`.

use crate::dense::{self, CMat, I, ONE, ZERO};
use crate::error::{Error, Result};
use crate::gaussian::{PairingState, QuadraticHamiltonian, DEFAULT_GAP_TOL};
use crate::lattice::{LatticeGeometry, ModeLayout, SiteIndex};
use faer::{Mat, MatRef};
use num_complex::Complex64 as C64;

#[derive(Clone, Debug)]
pub struct KSpec {
    geometry: LatticeGeometry,
    n_s: usize,
    mass: f64,
    /// Indexed by `site * dim + axis`.
    k: Vec<CMat>,
}

impl KSpec {
    pub fn new<F>(geometry: LatticeGeometry, n_s: usize, mass: f64, k: F) -> Result<Self>
    where
        F: Fn(&SiteIndex, usize) -> CMat,
    {
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::Validation(format!("mass must be positive, got {mass}")));
        }
        if n_s == 0 {
            return Err(Error::Validation("need at least one spin component".into()));
        }
        let d = geometry.dim();
        let mut ks = Vec::with_capacity(geometry.n_sites() * d);
        for site in geometry.sites() {
            for axis in 0..d {
                let m = k(&site, axis);
                if m.nrows() != n_s || m.ncols() != n_s {
                    return Err(Error::Validation(format!(
                        "K matrix at {site} axis {axis} is {}x{}, expected {n_s}x{n_s}",
                        m.nrows(),
                        m.ncols()
                    )));
                }
                ks.push(m);
            }
        }
        Ok(KSpec {
            geometry,
            n_s,
            mass,
            k: ks,
        })
    }

    pub fn geometry(&self) -> &LatticeGeometry {
        &self.geometry
    }

    pub fn n_s(&self) -> usize {
        self.n_s
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn spacing(&self) -> f64 {
        self.geometry.spacing()
    }

    /// `K_axis(site)`, axis 0-based.
    pub fn k(&self, site: &SiteIndex, axis: usize) -> MatRef<'_, C64> {
        let idx = self.geometry.site_index(site) * self.geometry.dim() + axis;
        self.k[idx].as_ref()
    }

    pub fn layout(&self) -> ModeLayout {
        ModeLayout::physical(self.geometry.clone(), self.n_s).expect("n_s > 0")
    }

    /// Same lattice and K with a different mass.
    pub fn with_mass(&self, mass: f64) -> Result<KSpec> {
        KSpec::new(self.geometry.clone(), self.n_s, mass, |s, i| self.k(s, i).to_owned())
    }
}

fn scalar(z: C64) -> CMat {
    Mat::from_fn(1, 1, |_, _| z)
}

fn sgn(p: usize) -> f64 {
    if p.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

fn require_dim(geom: &LatticeGeometry, dim: usize) -> Result<()> {
    if geom.dim() != dim {
        return Err(Error::Geometry(format!(
            "model needs d={dim}, geometry has d={}",
            geom.dim()
        )));
    }
    Ok(())
}

/// `K_1 = 1`, `K_2 = i`.
pub fn staggered_d2_kspec(geom: &LatticeGeometry, mass: f64) -> Result<KSpec> {
    require_dim(geom, 2)?;
    geom.require_even_or_unit()?;
    KSpec::new(geom.clone(), 1, mass, |_, axis| {
        scalar(if axis == 0 { ONE } else { I })
    })
}

/// `K_1 = 1`, `K_2 = i (-1)^{x3}`, `K_3 = (-1)^{x1+x2}`.
pub fn staggered_d3_kspec(geom: &LatticeGeometry, mass: f64) -> Result<KSpec> {
    require_dim(geom, 3)?;
    geom.require_even_or_unit()?;
    KSpec::new(geom.clone(), 1, mass, |s, axis| {
        let x = s.coords;
        scalar(match axis {
            0 => ONE,
            1 => I * sgn(x[2]),
            _ => ONE * sgn(x[0] + x[1]),
        })
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NaiveBranch {
    Upper,
    Lower,
}

/// `K_i = J_i` (upper) or `conj(J_i)` (lower), two spin components.
pub fn naive_kspec(geom: &LatticeGeometry, mass: f64, branch: NaiveBranch) -> Result<KSpec> {
    require_dim(geom, 3)?;
    let dm = DiracMatrices::standard();
    KSpec::new(geom.clone(), 2, mass, |_, axis| match branch {
        NaiveBranch::Upper => dm.j[axis].clone(),
        NaiveBranch::Lower => dense::conj(dm.j[axis].as_ref()),
    })
}

/// Pauli matrices, `eps = i sigma_2`, the Dirac matrices `alpha_i`, `beta`
/// and `J_i = sigma_i eps`.
#[derive(Clone, Debug)]
pub struct DiracMatrices {
    pub sigma: [CMat; 3],
    pub eps: CMat,
    pub alpha: [CMat; 3],
    pub beta: CMat,
    pub j: [CMat; 3],
}

impl DiracMatrices {
    pub fn standard() -> Self {
        let s1 = dense::from_rows(&[&[ZERO, ONE], &[ONE, ZERO]]);
        let s2 = dense::from_rows(&[&[ZERO, -I], &[I, ZERO]]);
        let s3 = dense::from_rows(&[&[ONE, ZERO], &[ZERO, -ONE]]);
        let eps = dense::scale(s2.as_ref(), I);
        let block = |s: &CMat| {
            Mat::from_fn(4, 4, |r, c| {
                if (r < 2) != (c < 2) {
                    s[(r % 2, c % 2)]
                } else {
                    ZERO
                }
            })
        };
        let alpha = [block(&s1), block(&s2), block(&s3)];
        let beta = Mat::from_fn(4, 4, |r, c| {
            if r != c {
                ZERO
            } else if r < 2 {
                ONE
            } else {
                -ONE
            }
        });
        let j = [&s1 * &eps, &s2 * &eps, &s3 * &eps];
        DiracMatrices {
            sigma: [s1, s2, s3],
            eps,
            alpha,
            beta,
            j,
        }
    }
}

/// The K-form Hamiltonian on the physical modes of `spec.layout()`.
pub fn build_quadratic(spec: &KSpec) -> QuadraticHamiltonian {
    let layout = spec.layout();
    let geom = spec.geometry();
    let m = layout.n_physical();
    let n_s = spec.n_s();
    let coef = C64::new(0.0, -1.0 / (2.0 * spec.spacing()));
    let hopping = dense::scale(dense::identity(m).as_ref(), C64::new(spec.mass(), 0.0));
    let mut pairing = dense::zeros(m, m);
    for x in geom.sites() {
        for axis in 0..geom.dim() {
            let y = geom.neighbor(&x, axis, true);
            let k = spec.k(&x, axis);
            for a in 0..n_s {
                for b in 0..n_s {
                    let p = layout.physical_id(&x, a).0;
                    let q = layout.physical_id(&y, b).0;
                    let v = coef * k[(a, b)];
                    pairing[(p, q)] += v;
                    pairing[(q, p)] -= v;
                }
            }
        }
    }
    QuadraticHamiltonian::new(layout.physical_modes(), hopping, pairing, 0.0)
        .expect("K-form blocks are Hermitian and antisymmetric by construction")
}

/// BCS ground state of the K-form Hamiltonian.
pub fn exact_ground(spec: &KSpec) -> Result<PairingState> {
    build_quadratic(spec).ground_state_pairing(DEFAULT_GAP_TOL)
}

/// Number-conserving staggered Hamiltonian in two dimensions:
/// `M sum (-1)^{x1+x2} n(x) + [(i/2a) psi^+(x) psi(x+e1)
///  - (1/2a) (-1)^{x1+x2} psi^+(x) psi(x+e2) + h.c.]`.
pub fn susskind_d2_hamiltonian(geom: &LatticeGeometry, mass: f64) -> Result<QuadraticHamiltonian> {
    require_dim(geom, 2)?;
    geom.require_even_or_unit()?;
    let layout = ModeLayout::physical(geom.clone(), 1)?;
    let m = layout.n_physical();
    let a = geom.spacing();
    let mut h = dense::zeros(m, m);
    for x in geom.sites() {
        let p = layout.physical_id(&x, 0).0;
        let par = sgn(x.coord_sum());
        h[(p, p)] += C64::new(mass * par, 0.0);
        let hops = [
            (0, C64::new(0.0, 1.0 / (2.0 * a))),
            (1, C64::new(-par / (2.0 * a), 0.0)),
        ];
        for (axis, c) in hops {
            let q = layout.physical_id(&geom.neighbor(&x, axis, true), 0).0;
            h[(p, q)] += c;
            h[(q, p)] += c.conj();
        }
    }
    QuadraticHamiltonian::new(layout.physical_modes(), h, dense::zeros(m, m), 0.0)
}

/// Naive four-component Dirac Hamiltonian
/// `-(i/2a) sum Psi^+(x) alpha_i (Psi(x+e_i) - Psi(x-e_i)) + m sum Psi^+ beta Psi`.
pub fn naive_dirac_hamiltonian(geom: &LatticeGeometry, mass: f64) -> Result<QuadraticHamiltonian> {
    require_dim(geom, 3)?;
    let layout = ModeLayout::physical(geom.clone(), 4)?;
    let dm = DiracMatrices::standard();
    let m = layout.n_physical();
    let coef = C64::new(0.0, -1.0 / (2.0 * geom.spacing()));
    let mut h = dense::zeros(m, m);
    for x in geom.sites() {
        for a in 0..4 {
            for b in 0..4 {
                let p = layout.physical_id(&x, a).0;
                let q = layout.physical_id(&x, b).0;
                h[(p, q)] += dm.beta[(a, b)] * mass;
            }
        }
        for axis in 0..3 {
            let fwd = geom.neighbor(&x, axis, true);
            let bwd = geom.neighbor(&x, axis, false);
            for a in 0..4 {
                for b in 0..4 {
                    let p = layout.physical_id(&x, a).0;
                    let v = coef * dm.alpha[axis][(a, b)];
                    h[(p, layout.physical_id(&fwd, b).0)] += v;
                    h[(p, layout.physical_id(&bwd, b).0)] -= v;
                }
            }
        }
    }
    QuadraticHamiltonian::new(layout.physical_modes(), h, dense::zeros(m, m), 0.0)
}

/// Substitutes `psi^+_a(x) -> sum_b S_ab psi_b(x)` on the sites selected by
/// `predicate` and rewrites `H` in the new operators. The normal-ordering
/// constant is kept in the constant term.
pub fn particle_hole_transform<P>(
    h: &QuadraticHamiltonian,
    layout: &ModeLayout,
    predicate: P,
    spin_matrix: MatRef<'_, C64>,
) -> Result<QuadraticHamiltonian>
where
    P: Fn(&SiteIndex) -> bool,
{
    let n_s = layout.n_s;
    if spin_matrix.nrows() != n_s || spin_matrix.ncols() != n_s {
        return Err(Error::Validation(format!(
            "spin matrix must be {n_s}x{n_s}"
        )));
    }
    if dense::unitarity_defect(spin_matrix) > 1e-12 {
        return Err(Error::Validation("spin matrix is not unitary".into()));
    }
    let modes = h.modes();
    let m = modes.len();
    let pos: std::collections::HashMap<_, _> =
        modes.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    // Phi_old = W Phi_new with Phi = (a; a^+).
    let mut w = dense::zeros(2 * m, 2 * m);
    for (p, &id) in modes.iter().enumerate() {
        let mode = layout.mode(id);
        if predicate(&mode.site) {
            for b in 0..n_s {
                let q = *pos.get(&layout.physical_id(&mode.site, b)).ok_or_else(|| {
                    Error::ModeMismatch("hamiltonian lacks a spin partner mode".into())
                })?;
                w[(p, m + q)] = spin_matrix[(mode.spin, b)].conj();
                w[(m + p, q)] = spin_matrix[(mode.spin, b)];
            }
        } else {
            w[(p, p)] = ONE;
            w[(m + p, m + p)] = ONE;
        }
    }
    let bdg = h.bdg_matrix();
    let new = &(w.adjoint() * &bdg) * &w;
    let hop = Mat::from_fn(m, m, |i, j| new[(i, j)]);
    let pair = Mat::from_fn(m, m, |i, j| new[(i, m + j)]);
    let tr_old: f64 = (0..m).map(|i| h.hopping()[(i, i)].re).sum();
    let tr_new: f64 = (0..m).map(|i| hop[(i, i)].re).sum();
    QuadraticHamiltonian::new(
        modes.to_vec(),
        hop,
        pair,
        h.constant() + 0.5 * (tr_old - tr_new),
    )
}

/// Odd sublattice, `x1 + ... + xd` odd.
pub fn odd_site(site: &SiteIndex) -> bool {
    site.coord_sum() % 2 == 1
}

/// `[[0, eps], [eps, 0]]`, the spin part of the naive-fermion particle-hole map.
pub fn naive_particle_hole_matrix() -> CMat {
    let eps = DiracMatrices::standard().eps;
    Mat::from_fn(4, 4, |r, c| {
        if (r < 2) != (c < 2) {
            eps[(r % 2, c % 2)]
        } else {
            ZERO
        }
    })
}

/// The two halves of a particle-hole transformed four-component Hamiltonian.
#[derive(Clone, Debug)]
pub struct NaiveSplit {
    /// Components 0 and 1 on a two-component layout.
    pub upper: QuadraticHamiltonian,
    /// Components 2 and 3 on a two-component layout.
    pub lower: QuadraticHamiltonian,
    /// Largest hopping or pairing entry between the two halves.
    pub cross: f64,
}

/// Applies the odd-site particle-hole map to the naive Dirac Hamiltonian and
/// splits the result into upper and lower two-component pieces.
pub fn split_naive(geom: &LatticeGeometry, mass: f64) -> Result<NaiveSplit> {
    let four = ModeLayout::physical(geom.clone(), 4)?;
    let two = ModeLayout::physical(geom.clone(), 2)?;
    let h = naive_dirac_hamiltonian(geom, mass)?;
    let ph = particle_hole_transform(&h, &four, odd_site, naive_particle_hole_matrix().as_ref())?;
    let pick = |lo: usize| -> Vec<usize> {
        geom.sites()
            .flat_map(|s| (0..2).map(move |a| (s, a)))
            .map(|(s, a)| four.physical_id(&s, lo + a).0)
            .collect()
    };
    let (up, dn) = (pick(0), pick(2));
    let cross = dense::max_abs(dense::submatrix(ph.hopping(), &up, &dn).as_ref())
        .max(dense::max_abs(dense::submatrix(ph.pairing(), &up, &dn).as_ref()));
    let block = |idx: &[usize]| {
        QuadraticHamiltonian::new(
            two.physical_modes(),
            dense::submatrix(ph.hopping(), idx, idx),
            dense::submatrix(ph.pairing(), idx, idx),
            0.0,
        )
    };
    Ok(NaiveSplit {
        upper: block(&up)?,
        lower: block(&dn)?,
        cross,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock;
    use crate::lattice::sublattice_parity;

    fn close(a: MatRef<'_, C64>, b: MatRef<'_, C64>, tol: f64) -> bool {
        dense::max_abs_diff(a, b) < tol
    }

    #[test]
    fn staggered_tables() {
        let g2 = LatticeGeometry::cubic(2, 4, 1.0).unwrap();
        let k2 = staggered_d2_kspec(&g2, 1.0).unwrap();
        for s in g2.sites() {
            assert_eq!(k2.k(&s, 0)[(0, 0)], ONE);
            assert_eq!(k2.k(&s, 1)[(0, 0)], I);
        }
        let g3 = LatticeGeometry::cubic(3, 4, 1.0).unwrap();
        let k3 = staggered_d3_kspec(&g3, 1.0).unwrap();
        assert_eq!(k3.k(&SiteIndex::new(&[0, 0, 1]), 1)[(0, 0)], -I);
        assert_eq!(k3.k(&SiteIndex::new(&[1, 1, 0]), 2)[(0, 0)], ONE);
        for s in g3.sites() {
            for i in 0..3 {
                assert!((k3.k(&s, i)[(0, 0)].norm() - 1.0).abs() < 1e-15);
            }
        }
        assert!(staggered_d3_kspec(&g2, 1.0).is_err());
    }

    #[test]
    fn dirac_algebra() {
        let dm = DiracMatrices::standard();
        let id4 = dense::identity(4);
        for i in 0..3 {
            for j in 0..3 {
                let ac = &(&dm.alpha[i] * &dm.alpha[j]) + &(&dm.alpha[j] * &dm.alpha[i]);
                let expect = if i == j {
                    dense::scale(id4.as_ref(), C64::new(2.0, 0.0))
                } else {
                    dense::zeros(4, 4)
                };
                assert!(close(ac.as_ref(), expect.as_ref(), 1e-15));
            }
            let ab = &(&dm.alpha[i] * &dm.beta) + &(&dm.beta * &dm.alpha[i]);
            assert!(dense::max_abs(ab.as_ref()) < 1e-15);
            assert!(close(dm.j[i].as_ref(), dm.j[i].transpose(), 1e-14));
        }
        assert!(close((&dm.beta * &dm.beta).as_ref(), id4.as_ref(), 1e-15));
        // sigma_2 (i sigma_2) = i
        let j2 = dense::scale(dense::identity(2).as_ref(), I);
        assert!(close(dm.j[1].as_ref(), j2.as_ref(), 1e-15));
    }

    #[test]
    fn naive_branches_are_conjugate() {
        let g = LatticeGeometry::cubic(3, 2, 1.0).unwrap();
        let up = naive_kspec(&g, 1.0, NaiveBranch::Upper).unwrap();
        let lo = naive_kspec(&g, 1.0, NaiveBranch::Lower).unwrap();
        let s = SiteIndex::new(&[1, 0, 1]);
        for i in 0..3 {
            assert!(close(up.k(&s, i), up.k(&s, i).transpose(), 1e-15));
            assert!(close(lo.k(&s, i), dense::conj(up.k(&s, i)).as_ref(), 0.0 + 1e-15));
        }
    }

    #[test]
    fn mass_only_spec() {
        let g = LatticeGeometry::cubic(2, 2, 1.0).unwrap();
        let spec = KSpec::new(g, 1, 2.5, |_, _| dense::zeros(1, 1)).unwrap();
        let h = build_quadratic(&spec);
        assert!(close(
            h.hopping(),
            dense::scale(dense::identity(4).as_ref(), C64::new(2.5, 0.0)).as_ref(),
            0.0 + 1e-15
        ));
        assert!(dense::max_abs(h.pairing()) == 0.0);
        assert!(dense::max_abs(exact_ground(&spec).unwrap().matrix()) == 0.0);
    }

    #[test]
    fn staggered_d2_strip_by_hand() {
        // Extent-1 self-links cancel; the axis-2 links give D = (-i/2)(i) = 1/2.
        let g = LatticeGeometry::new(2, &[1, 4], 1.0).unwrap();
        let h = build_quadratic(&staggered_d2_kspec(&g, 1.0).unwrap());
        let d = h.pairing();
        for x in 0..4 {
            let y = (x + 1) % 4;
            assert!((d[(x, y)] - C64::new(0.5, 0.0)).norm() < 1e-15);
            assert!((d[(y, x)] + C64::new(0.5, 0.0)).norm() < 1e-15);
        }
        assert!(d[(0, 2)].norm() < 1e-15);
    }

    #[test]
    fn staggered_d2_spectrum_is_symmetric_about_mass() {
        let g = LatticeGeometry::cubic(2, 4, 1.0).unwrap();
        let h = build_quadratic(&staggered_d2_kspec(&g, 1.3).unwrap());
        let ev = h.spectrum().excitations();
        assert!(ev.iter().all(|&e| e >= 1.3 - 1e-12));
        // Pairing on a bipartite lattice: E_k^2 = m^2 + |d_k|^2 with each
        // level doubled between the two sublattices.
        let mut sq: Vec<f64> = ev.iter().map(|e| e * e - 1.3 * 1.3).collect();
        sq.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!(sq[0] >= -1e-12);
    }

    #[test]
    fn ground_state_charge_structure_and_mass_decay() {
        let g = LatticeGeometry::cubic(2, 4, 1.0).unwrap();
        let layout = ModeLayout::physical(g.clone(), 1).unwrap();
        let mut prev = f64::INFINITY;
        for m in [1.0, 2.0, 4.0, 8.0] {
            let t = exact_ground(&staggered_d2_kspec(&g, m).unwrap()).unwrap();
            for (i, &p) in t.modes().iter().enumerate() {
                for (j, &q) in t.modes().iter().enumerate() {
                    let same = sublattice_parity(&layout.mode(p).site)
                        == sublattice_parity(&layout.mode(q).site);
                    if same {
                        assert!(t.matrix()[(i, j)].norm() < 1e-10);
                    }
                }
            }
            let tmax = dense::max_abs(t.matrix());
            assert!(tmax < prev);
            assert!(tmax * m <= 0.5 + 1e-9);
            prev = tmax;
        }
    }

    #[test]
    fn particle_hole_of_susskind_gives_k_form() {
        let g = LatticeGeometry::cubic(2, 4, 1.0).unwrap();
        let layout = ModeLayout::physical(g.clone(), 1).unwrap();
        let orig = susskind_d2_hamiltonian(&g, 1.0).unwrap();
        let odd = |s: &SiteIndex| s.coord_sum() % 2 == 1;
        let minus = dense::scale(dense::identity(1).as_ref(), -ONE);
        let ph = particle_hole_transform(&orig, &layout, odd, minus.as_ref()).unwrap();
        let k = build_quadratic(&staggered_d2_kspec(&g, 1.0).unwrap());
        assert!(close(ph.hopping(), k.hopping(), 1e-14));
        assert!(close(ph.pairing(), k.pairing(), 1e-14));
        // The plain exchange psi <-> psi^+ gives the same model with opposite pairing sign.
        let plain = particle_hole_transform(&orig, &layout, odd, dense::identity(1).as_ref())
            .unwrap();
        let neg = dense::scale(k.pairing(), -ONE);
        assert!(close(plain.pairing(), neg.as_ref(), 1e-14));
        // Involution.
        let back = particle_hole_transform(&ph, &layout, odd, minus.as_ref()).unwrap();
        assert!(close(back.hopping(), orig.hopping(), 1e-14));
        assert!(close(back.pairing(), orig.pairing(), 1e-14));
        assert!((back.constant() - orig.constant()).abs() < 1e-12);
    }

    #[test]
    fn particle_hole_rejects_non_unitary() {
        let g = LatticeGeometry::cubic(2, 2, 1.0).unwrap();
        let layout = ModeLayout::physical(g.clone(), 1).unwrap();
        let h = susskind_d2_hamiltonian(&g, 1.0).unwrap();
        let s = dense::scale(dense::identity(1).as_ref(), C64::new(2.0, 0.0));
        assert!(particle_hole_transform(&h, &layout, |_| true, s.as_ref()).is_err());
    }

    #[test]
    fn particle_hole_preserves_spectrum_up_to_constant() {
        let g = LatticeGeometry::new(2, &[2, 4], 1.0).unwrap();
        let layout = ModeLayout::physical(g.clone(), 1).unwrap();
        let orig = susskind_d2_hamiltonian(&g, 0.7).unwrap();
        let ph = particle_hole_transform(
            &orig,
            &layout,
            |s| s.coord_sum() % 2 == 1,
            dense::identity(1).as_ref(),
        )
        .unwrap();
        let (e_orig, _) = fock::ground_state(&orig).unwrap();
        let (e_ph, _) = fock::ground_state(&ph).unwrap();
        assert!((e_orig - e_ph).abs() < 1e-9);
        assert!((ph.ground_energy() - e_ph).abs() < 1e-9);
    }

    #[test]
    fn exact_ground_energy_matches_fock() {
        let g = LatticeGeometry::new(2, &[2, 4], 1.0).unwrap();
        let h = build_quadratic(&staggered_d2_kspec(&g, 1.0).unwrap());
        let (e0, psi) = fock::ground_state(&h).unwrap();
        assert!((e0 - h.ground_energy()).abs() < 1e-9);
        let t = h.ground_state_pairing(DEFAULT_GAP_TOL).unwrap();
        let f = fock::FockState::from_pairing(&t).unwrap();
        assert!(f.fidelity(&psi).unwrap() > 1.0 - 1e-9);
    }
    #[test]
    fn naive_hamiltonian_decouples() {
        for l in [2, 4] {
            let g = LatticeGeometry::cubic(3, l, 1.0).unwrap();
            let split = split_naive(&g, 0.8).unwrap();
            assert!(split.cross < 1e-12, "L={l}");
            let up = build_quadratic(&naive_kspec(&g, 0.8, NaiveBranch::Upper).unwrap());
            assert!(close(split.upper.hopping(), up.hopping(), 1e-12));
            assert!(close(split.upper.pairing(), up.pairing(), 1e-12));
            // The lower half carries mass -m; exchanging chi and chi^+ everywhere
            // gives the conjugate K with mass +m.
            let two = ModeLayout::physical(g.clone(), 2).unwrap();
            let flipped = particle_hole_transform(
                &split.lower,
                &two,
                |_| true,
                dense::identity(2).as_ref(),
            )
            .unwrap();
            let lo = build_quadratic(&naive_kspec(&g, 0.8, NaiveBranch::Lower).unwrap());
            assert!(close(flipped.hopping(), lo.hopping(), 1e-12));
            assert!(close(flipped.pairing(), lo.pairing(), 1e-12));
        }
    }

    #[test]
    fn two_coordinate_parity_does_not_decouple() {
        let g = LatticeGeometry::cubic(3, 4, 1.0).unwrap();
        let four = ModeLayout::physical(g.clone(), 4).unwrap();
        let h = naive_dirac_hamiltonian(&g, 0.8).unwrap();
        let ph = particle_hole_transform(
            &h,
            &four,
            |s| (s.coords[0] + s.coords[1]) % 2 == 1,
            naive_particle_hole_matrix().as_ref(),
        )
        .unwrap();
        let up: Vec<usize> = (0..h.len()).filter(|i| i % 4 < 2).collect();
        let dn: Vec<usize> = (0..h.len()).filter(|i| i % 4 >= 2).collect();
        assert!(dense::max_abs(dense::submatrix(ph.hopping(), &up, &dn).as_ref()) > 0.1);
    }
}
