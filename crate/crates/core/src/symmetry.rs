//! Rotation and charge symmetries of lattice pairing states, and the linear
//! constraint solvers behind the rotation-symmetric PEPS families.
//!
//! A rotation acts on creation operators as
//! `U psi^+_a(x) U^+ = sum_b M_ab(x) psi^+_b(Lx)`, and on virtual modes as
//! `U c^+_{ma}(x) U^+ = sum_{n,b} xi_ab(x) R_mn c^+_{nb}(Lx)` (with `zeta` for `d`).
//! A pairing matrix then maps to `T'(Lx, Ly) = M(x)^T T(x, y) M(y)`.

use std::collections::HashMap;

use crate::dense::{self, CMat, I, ONE, ZERO};
use crate::error::{Error, Result};
use crate::gaussian::{PairingState, QuadraticHamiltonian};
use crate::hamiltonians::DiracMatrices;
use crate::lattice::{
    leg_permutation, sublattice_parity, LatticeGeometry, ModeId, ModeLayout, PermutationMatrix,
    Rotation, SiteIndex, Species,
};
use faer::{Mat, MatRef};
use num_complex::Complex64 as C64;

const UNITARY_TOL: f64 = 1e-12;

/// Singular values below this (relative) count as zero in the solvers.
pub const SOLVER_TOL: f64 = 1e-10;

/// `e^{i pi/4}`, the spinless phase in two dimensions.
pub fn eta_d2() -> C64 {
    C64::from_polar(1.0, std::f64::consts::FRAC_PI_4)
}

/// Staggered three-dimensional phases `eta^(i)(x)`.
pub fn eta_staggered_d3(rot: Rotation, site: &SiteIndex) -> C64 {
    let s = |k: usize| if k.is_multiple_of(2) { 1.0 } else { -1.0 };
    let [x1, x2, x3] = site.coords;
    let r2 = std::f64::consts::SQRT_2;
    match rot {
        Rotation::X1 => (ONE - I * s(x1)) / r2,
        Rotation::X2 => -((ONE - I * s(x1)) * (ONE + I * s(x2)) * (ONE + I * s(x3))) / (2.0 * r2),
        Rotation::X3 | Rotation::Planar => (ONE + I * s(x3)) / r2,
    }
}

/// `exp(i pi sigma_i / 4) = (1 + i sigma_i) / sqrt(2)`.
pub fn eta_spinhalf(rot: Rotation) -> CMat {
    let dm = DiracMatrices::standard();
    let sigma = match rot {
        Rotation::X1 => &dm.sigma[0],
        Rotation::X2 => &dm.sigma[1],
        Rotation::X3 | Rotation::Planar => &dm.sigma[2],
    };
    let r2 = std::f64::consts::SQRT_2;
    Mat::from_fn(2, 2, |a, b| {
        let id = if a == b { ONE } else { ZERO };
        (id + I * sigma[(a, b)]) / r2
    })
}

/// A lattice rotation together with its per-site action `M(x)` on the
/// physical creation operators.
#[derive(Clone, Debug)]
pub struct PhysicalRotation {
    rotation: Rotation,
    geometry: LatticeGeometry,
    n_s: usize,
    matrices: Vec<CMat>,
}

impl PhysicalRotation {
    pub fn new<F>(geometry: &LatticeGeometry, n_s: usize, rotation: Rotation, m: F) -> Result<Self>
    where
        F: Fn(&SiteIndex) -> CMat,
    {
        rotation.check_dim(geometry.dim())?;
        geometry.check_rotatable()?;
        let mut matrices = Vec::with_capacity(geometry.n_sites());
        for site in geometry.sites() {
            let mat = m(&site);
            if mat.nrows() != n_s || mat.ncols() != n_s {
                return Err(Error::Validation(format!(
                    "rotation matrix at {site} must be {n_s}x{n_s}"
                )));
            }
            let defect = dense::unitarity_defect(mat.as_ref());
            if defect > UNITARY_TOL {
                return Err(Error::Validation(format!(
                    "rotation matrix at {site} is not unitary ({defect:.2e})"
                )));
            }
            matrices.push(mat);
        }
        Ok(PhysicalRotation {
            rotation,
            geometry: geometry.clone(),
            n_s,
            matrices,
        })
    }

    /// The same `n_s x n_s` matrix on every site.
    pub fn uniform(
        geometry: &LatticeGeometry,
        rotation: Rotation,
        m: MatRef<'_, C64>,
    ) -> Result<Self> {
        Self::new(geometry, m.nrows(), rotation, |_| m.to_owned())
    }

    /// Spinless rotation in two dimensions with `M = e^{i pi/4}`.
    pub fn d2(geometry: &LatticeGeometry) -> Result<Self> {
        Self::uniform(
            geometry,
            Rotation::Planar,
            Mat::from_fn(1, 1, |_, _| eta_d2()).as_ref(),
        )
    }

    /// Staggered rotation with `M(x) = eta^(i)(x)`.
    pub fn staggered_d3(geometry: &LatticeGeometry, rotation: Rotation) -> Result<Self> {
        Self::new(geometry, 1, rotation, |s| {
            Mat::from_fn(1, 1, |_, _| eta_staggered_d3(rotation, s))
        })
    }

    /// Two-component rotation with `M = conj(exp(i pi sigma_i / 4))`: the
    /// annihilation operators carry `exp(i pi sigma_i / 4)`.
    pub fn spinhalf(geometry: &LatticeGeometry, rotation: Rotation) -> Result<Self> {
        let m = dense::conj(eta_spinhalf(rotation).as_ref());
        Self::uniform(geometry, rotation, m.as_ref())
    }

    /// All rotations of the staggered or spin-1/2 construction for the geometry.
    pub fn family(geometry: &LatticeGeometry, n_s: usize) -> Result<Vec<Self>> {
        match (geometry.dim(), n_s) {
            (2, 1) => Ok(vec![Self::d2(geometry)?]),
            (3, 1) => Rotation::all(3)
                .iter()
                .map(|&r| Self::staggered_d3(geometry, r))
                .collect(),
            (3, 2) => Rotation::all(3)
                .iter()
                .map(|&r| Self::spinhalf(geometry, r))
                .collect(),
            (d, n) => Err(Error::Validation(format!(
                "no rotation family for d={d} with {n} spin components"
            ))),
        }
    }

    pub fn rotation(&self) -> Rotation {
        self.rotation
    }

    pub fn geometry(&self) -> &LatticeGeometry {
        &self.geometry
    }

    pub fn n_s(&self) -> usize {
        self.n_s
    }

    pub fn matrix(&self, site: &SiteIndex) -> MatRef<'_, C64> {
        self.matrices[self.geometry.site_index(site)].as_ref()
    }

    pub fn image(&self, site: &SiteIndex) -> SiteIndex {
        self.geometry
            .rotate_site(self.rotation, site)
            .expect("geometry checked at construction")
    }
}

/// Virtual counterpart of a physical rotation.
#[derive(Clone, Debug)]
pub struct VirtualRotation {
    pub r: PermutationMatrix,
    xi: Vec<CMat>,
    zeta: Vec<CMat>,
}

impl VirtualRotation {
    /// `xi = conj(M)` and `zeta = M`, so that `psi^+ c^+` and `d^+ d^+`
    /// bonds pick up the same phases as the physical pairing terms.
    pub fn from_physical(phys: &PhysicalRotation) -> Self {
        let xi = phys.matrices.iter().map(|m| dense::conj(m.as_ref())).collect();
        VirtualRotation {
            r: leg_permutation(phys.rotation),
            xi,
            zeta: phys.matrices.clone(),
        }
    }

    pub fn new(r: PermutationMatrix, xi: Vec<CMat>, zeta: Vec<CMat>) -> Result<Self> {
        for m in xi.iter().chain(&zeta) {
            if dense::unitarity_defect(m.as_ref()) > UNITARY_TOL {
                return Err(Error::Validation("virtual rotation factor is not unitary".into()));
            }
        }
        Ok(VirtualRotation { r, xi, zeta })
    }

    pub fn xi(&self, geometry: &LatticeGeometry, site: &SiteIndex) -> MatRef<'_, C64> {
        self.xi[geometry.site_index(site)].as_ref()
    }

    pub fn zeta(&self, geometry: &LatticeGeometry, site: &SiteIndex) -> MatRef<'_, C64> {
        self.zeta[geometry.site_index(site)].as_ref()
    }
}

/// Sparse linear map on creation operators, `a^+_p -> sum (q, c) a^+_q`,
/// over the positions of a fixed mode list.
#[derive(Clone, Debug)]
pub struct ModeAction {
    rows: Vec<Vec<(usize, C64)>>,
}

impl ModeAction {
    /// The action of `phys` (and `virt` on virtual modes) restricted to `modes`,
    /// which must be closed under the rotation.
    pub fn build(
        layout: &ModeLayout,
        modes: &[ModeId],
        phys: &PhysicalRotation,
        virt: Option<&VirtualRotation>,
    ) -> Result<Self> {
        if phys.geometry != layout.geometry || phys.n_s != layout.n_s {
            return Err(Error::ModeMismatch("rotation and layout disagree".into()));
        }
        let pos: HashMap<ModeId, usize> = modes.iter().enumerate().map(|(i, &m)| (m, i)).collect();
        let geom = &layout.geometry;
        let mut rows = Vec::with_capacity(modes.len());
        for &id in modes {
            let mode = layout.mode(id);
            let target = phys.image(&mode.site);
            let (m, leg) = match mode.species {
                Species::Physical => (phys.matrix(&mode.site), 0),
                Species::C | Species::D => {
                    let v = virt.ok_or_else(|| {
                        Error::Validation("virtual modes need a virtual rotation".into())
                    })?;
                    let m = if mode.species == Species::C {
                        v.xi(geom, &mode.site)
                    } else {
                        v.zeta(geom, &mode.site)
                    };
                    (m, v.r.image(mode.leg))
                }
            };
            let mut row = Vec::with_capacity(layout.n_s);
            for b in 0..layout.n_s {
                let c = m[(mode.spin, b)];
                if c == ZERO {
                    continue;
                }
                let q = layout.index(&crate::lattice::ModeIndex {
                    site: target,
                    species: mode.species,
                    leg,
                    copy: mode.copy,
                    spin: b,
                });
                let qi = *pos.get(&q).ok_or_else(|| {
                    Error::ModeMismatch("mode set is not closed under the rotation".into())
                })?;
                row.push((qi, c));
            }
            rows.push(row);
        }
        Ok(ModeAction { rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Dense `U` with `U_qp = M_pq`, the form taken by
    /// [`crate::gaussian::transform_modes`].
    pub fn to_dense(&self) -> CMat {
        let n = self.rows.len();
        let mut u = dense::zeros(n, n);
        for (p, row) in self.rows.iter().enumerate() {
            for &(q, c) in row {
                u[(q, p)] += c;
            }
        }
        u
    }

    /// `T -> M^T T M`.
    pub fn apply(&self, t: MatRef<'_, C64>) -> CMat {
        let n = self.rows.len();
        let mut a = dense::zeros(n, n);
        for (p, row) in self.rows.iter().enumerate() {
            for &(q, c) in row {
                for j in 0..n {
                    a[(q, j)] += c * t[(p, j)];
                }
            }
        }
        let mut out = dense::zeros(n, n);
        for (r, row) in self.rows.iter().enumerate() {
            for &(s, c) in row {
                for i in 0..n {
                    out[(i, s)] += a[(i, r)] * c;
                }
            }
        }
        out
    }
}

/// Rotated copy of `state`.
pub fn rotate_state(
    state: &PairingState,
    layout: &ModeLayout,
    phys: &PhysicalRotation,
    virt: Option<&VirtualRotation>,
) -> Result<PairingState> {
    let action = ModeAction::build(layout, state.modes(), phys, virt)?;
    PairingState::new(state.modes().to_vec(), action.apply(state.matrix()))
}

/// `max |M(x)^T T(x, y) M(y) - T(Lx, Ly)|`; zero iff the state is invariant.
pub fn rotation_residual(
    state: &PairingState,
    layout: &ModeLayout,
    rot: &PhysicalRotation,
) -> Result<f64> {
    rotation_residual_with(state, layout, rot, None)
}

/// As [`rotation_residual`], including virtual modes.
pub fn rotation_residual_with(
    state: &PairingState,
    layout: &ModeLayout,
    rot: &PhysicalRotation,
    virt: Option<&VirtualRotation>,
) -> Result<f64> {
    let action = ModeAction::build(layout, state.modes(), rot, virt)?;
    let rotated = action.apply(state.matrix());
    Ok(dense::max_abs_diff(rotated.as_ref(), state.matrix()))
}

/// Largest entry of `M^T Delta M - Delta` and `M^+ h M - h` for the pairing
/// and hopping blocks of `h`; zero iff the Hamiltonian commutes with the
/// rotation.
pub fn hamiltonian_rotation_residual(
    h: &QuadraticHamiltonian,
    layout: &ModeLayout,
    rot: &PhysicalRotation,
) -> Result<f64> {
    let act = ModeAction::build(layout, h.modes(), rot, None)?;
    let d = act.apply(h.pairing());
    let u = act.to_dense();
    let hop = &(dense::adjoint(u.as_ref()) * h.hopping()) * &u;
    Ok(dense::max_abs_diff(d.as_ref(), h.pairing())
        .max(dense::max_abs_diff(hop.as_ref(), h.hopping())))
}

/// `M(x) M(Lx) M(L^2 x) M(L^3 x)`, which must be `+-1`.
pub fn four_rotation_product(rot: &PhysicalRotation, site: &SiteIndex) -> Result<f64> {
    let mut prod = dense::identity(rot.n_s);
    let mut x = *site;
    for _ in 0..4 {
        prod = &prod * rot.matrix(&x);
        x = rot.image(&x);
    }
    debug_assert_eq!(x, *site);
    for sign in [1.0, -1.0] {
        let target = dense::scale(dense::identity(rot.n_s).as_ref(), C64::new(sign, 0.0));
        if dense::max_abs_diff(prod.as_ref(), target.as_ref()) < UNITARY_TOL {
            return Ok(sign);
        }
    }
    Err(Error::Symmetry(format!(
        "four-rotation product at {site} is not +-1"
    )))
}

/// Staggered U(1) charge: `Q = sum_x (-1)^{x_1+...+x_d} n(x)` after the
/// particle-hole map, so pairing terms must join opposite sublattices.
#[derive(Clone, Debug)]
pub struct ChargeOperator {
    geometry: LatticeGeometry,
}

impl ChargeOperator {
    pub fn new(geometry: &LatticeGeometry) -> Self {
        ChargeOperator {
            geometry: geometry.clone(),
        }
    }

    pub fn sign(&self, site: &SiteIndex) -> i32 {
        debug_assert!(self.geometry.site_index(site) < self.geometry.n_sites());
        if sublattice_parity(site) == 0 {
            1
        } else {
            -1
        }
    }
}

/// Largest pairing amplitude between equal-parity sites.
pub fn charge_residual(state: &PairingState, layout: &ModeLayout) -> f64 {
    let q = ChargeOperator::new(&layout.geometry);
    let signs: Vec<i32> = state
        .modes()
        .iter()
        .map(|&id| q.sign(&layout.mode(id).site))
        .collect();
    let t = state.matrix();
    let mut worst = 0.0f64;
    for i in 0..signs.len() {
        for j in 0..signs.len() {
            if signs[i] == signs[j] {
                worst = worst.max(t[(i, j)].norm());
            }
        }
    }
    worst
}

/// Orthonormal basis (columns) of `{t : R^T t = lambda t for every R}`.
pub fn solve_t_constraint(rs: &[PermutationMatrix], eigval: C64) -> Result<CMat> {
    let n = check_same_size(rs)?;
    let mut a = dense::zeros(rs.len() * n, n);
    for (k, r) in rs.iter().enumerate() {
        let rt = r.transpose().to_dense();
        for i in 0..n {
            for j in 0..n {
                a[(k * n + i, j)] = rt[(i, j)] - if i == j { eigval } else { ZERO };
            }
        }
    }
    Ok(dense::null_space(a.as_ref(), SOLVER_TOL))
}

/// Orthonormal basis of `{tau : R^T tau R = phase * tau for every R}`.
pub fn solve_tau_constraint(rs: &[PermutationMatrix], phase: C64) -> Result<Vec<CMat>> {
    let n = check_same_size(rs)?;
    let mut a = dense::zeros(rs.len() * n * n, n * n);
    for (k, r) in rs.iter().enumerate() {
        let rd = r.to_dense();
        for col in 0..n * n {
            let mut e = dense::zeros(n, n);
            e[(col / n, col % n)] = ONE;
            let img = &(rd.transpose() * &e) * &rd;
            for row in 0..n * n {
                let diag = if row == col { phase } else { ZERO };
                a[(k * n * n + row, col)] = img[(row / n, row % n)] - diag;
            }
        }
    }
    let basis = dense::null_space(a.as_ref(), SOLVER_TOL);
    Ok((0..basis.ncols())
        .map(|c| Mat::from_fn(n, n, |i, j| basis[(i * n + j, c)]))
        .collect())
}

fn check_same_size(rs: &[PermutationMatrix]) -> Result<usize> {
    let n = rs
        .first()
        .map(|r| r.size())
        .ok_or_else(|| Error::Validation("need at least one permutation".into()))?;
    if rs.iter().any(|r| r.size() != n) {
        return Err(Error::Validation("permutations differ in size".into()));
    }
    Ok(n)
}

/// The circulant matrix with first row `z`.
pub fn circulant(z: [C64; 4]) -> CMat {
    Mat::from_fn(4, 4, |i, j| z[(j + 4 - i) % 4])
}

/// The three-parameter leg pattern invariant under all cube rotations: `z3` on
/// the diagonal, `z2` between opposite legs, `z1` elsewhere.
pub fn cubic_tau(z1: C64, z2: C64, z3: C64) -> CMat {
    let opposite = [2, 3, 0, 1, 5, 4];
    Mat::from_fn(6, 6, |i, j| {
        if i == j {
            z3
        } else if opposite[i] == j {
            z2
        } else {
            z1
        }
    })
}

/// Dimension of the span of `mats`, by singular-value count.
pub fn span_dimension(mats: &[CMat]) -> usize {
    if mats.is_empty() {
        return 0;
    }
    let len = mats[0].nrows() * mats[0].ncols();
    let a = Mat::from_fn(len, mats.len(), |k, c| {
        let n = mats[c].ncols();
        mats[c][(k / n, k % n)]
    });
    let s = dense::singular_values(a.as_ref());
    let smax = s.first().copied().unwrap_or(0.0).max(1.0);
    s.iter().filter(|&&v| v > SOLVER_TOL * smax).count()
}

/// One row of the `eta^T J eta` table.
#[derive(Clone, Debug, PartialEq)]
pub struct JRelation {
    /// Rotation axis `i` (1-based).
    pub axis: usize,
    /// `J` index `j` (1-based).
    pub j: usize,
    /// Expected `(sign, k)` with `eta^(i)T J_j eta^(i) = sign J_k`.
    pub expected: (f64, usize),
    pub deviation: f64,
}

#[derive(Clone, Debug)]
pub struct JReport {
    pub relations: Vec<JRelation>,
    /// Largest deviation over the nine relations.
    pub max_deviation: f64,
}

/// `eta^(i)T J_j eta^(i) = +-J_k` with `eta^(i)` the creation-operator matrix
/// of [`PhysicalRotation::spinhalf`].
pub fn check_j_relations() -> JReport {
    check_j_relations_with(|rot| dense::conj(eta_spinhalf(rot).as_ref()))
}

/// The same table evaluated with an arbitrary choice of rotation matrices.
pub fn check_j_relations_with<F: Fn(Rotation) -> CMat>(eta: F) -> JReport {
    const EXPECTED: [[(f64, usize); 3]; 3] = [
        [(1.0, 1), (1.0, 3), (-1.0, 2)],
        [(-1.0, 3), (1.0, 2), (1.0, 1)],
        [(1.0, 2), (-1.0, 1), (1.0, 3)],
    ];
    let dm = DiracMatrices::standard();
    let mut relations = Vec::with_capacity(9);
    for (i, rot) in Rotation::all(3).iter().enumerate() {
        let e = eta(*rot);
        for j in 0..3 {
            let lhs = &(e.transpose() * &dm.j[j]) * &e;
            let (sign, k) = EXPECTED[i][j];
            let rhs = dense::scale(dm.j[k - 1].as_ref(), C64::new(sign, 0.0));
            relations.push(JRelation {
                axis: i + 1,
                j: j + 1,
                expected: (sign, k),
                deviation: dense::max_abs_diff(lhs.as_ref(), rhs.as_ref()),
            });
        }
    }
    let max_deviation = relations.iter().map(|r| r.deviation).fold(0.0, f64::max);
    JReport {
        relations,
        max_deviation,
    }
}

/// Dimension of the translation-invariant nearest-neighbour amplitudes
/// `t_i = T(x, x + e_i)` of a single-component state that survive the given
/// rotations with a constant phase `eta`.
pub fn no_go_spinless(dim: usize, eta: C64, rotations: &[Rotation]) -> Result<usize> {
    for r in rotations {
        r.check_dim(dim)?;
    }
    let eta2 = eta * eta;
    let mut rows: Vec<Vec<C64>> = Vec::new();
    for &rot in rotations {
        for i in 0..dim {
            let mut e = [0i64; 3];
            e[i] = 1;
            let img = rot.apply(e);
            let j = (0..dim)
                .find(|&k| img[k] != 0)
                .expect("rotations map axes to axes");
            let s = img[j] as f64;
            // T(Lx, Lx + s e_j) = eta^2 t_i, and T(y, y - e_j) = -t_j.
            let mut row = vec![ZERO; dim];
            row[i] += eta2;
            row[j] -= C64::new(s, 0.0);
            rows.push(row);
        }
    }
    let a = Mat::from_fn(rows.len(), dim, |r, c| rows[r][c]);
    Ok(dense::null_space(a.as_ref(), SOLVER_TOL).ncols())
}
