//! Gaussian PEPS.
//!
//! Each site carries the pairing state
//! `A(x) = exp(sum t^mu_{m,ab} psi^+_a c^{mu+}_{mb} + sum tau^{mu nu}_{mn,ab} c^{mu+}_{ma} d^{nu+}_{nb})|vac>`
//! on its physical and virtual modes. Every link `(x, x+e_i)` carries the bond
//! state `w = exp(i sum W^C_ab(x) c^{mu+}_{out,a}(x) c^{mu+}_{in,b}(x+e_i) + (C -> D))|vac>`,
//! and the PEPS is `<w|_virtual prod_x A(x)`.

use crate::dense::{self, CMat, I, ONE, ZERO};
use crate::error::{Error, Result};
use crate::fock::{self, FockState, QuadraticOp};
use crate::gaussian::{project_bonds, PairingState, Projection};
use crate::hamiltonians::{build_quadratic, DiracMatrices, KSpec};
use crate::lattice::{in_leg, out_leg, LatticeGeometry, ModeId, ModeLayout, SiteIndex, Species};
use crate::par::{self, Exec};
use crate::pfaffian::LogScalar;
use crate::symmetry::{circulant, cubic_tau, eta_d2};
use faer::{Mat, MatRef};
use num_complex::Complex64 as C64;
use rand::Rng;

/// Above this many modes [`ContractionMethod::Auto`] sweeps site by site.
pub const GLOBAL_MODE_LIMIT: usize = 600;

/// Parameters `t`, `tau`, `W^C` and `W^D` of a Gaussian PEPS, stored per site.
///
/// Index arguments are 0-based; out-of-range indices panic.
#[derive(Clone, Debug, PartialEq)]
pub struct PepsParams {
    layout: ModeLayout,
    t: Vec<C64>,
    tau: Vec<C64>,
    w_c: Vec<CMat>,
    w_d: Vec<CMat>,
}

impl PepsParams {
    pub fn zeros(layout: ModeLayout) -> Self {
        let sites = layout.geometry.n_sites();
        let legs = layout.geometry.n_legs();
        let (ns, nc, nd) = (layout.n_s, layout.n_c, layout.n_d);
        let dim = layout.geometry.dim();
        PepsParams {
            t: vec![ZERO; sites * nc * legs * ns * ns],
            tau: vec![ZERO; sites * nc * nd * legs * legs * ns * ns],
            w_c: vec![dense::zeros(ns, ns); sites * dim],
            w_d: vec![dense::zeros(ns, ns); sites * dim],
            layout,
        }
    }

    /// Every `t` and `tau` entry uniform in `[-scale, scale]^2` and every
    /// link matrix uniform in the unit square; no symmetry.
    pub fn random<R: Rng>(layout: ModeLayout, scale: f64, rng: &mut R) -> Self {
        let mut p = Self::zeros(layout);
        for v in p.t.iter_mut().chain(p.tau.iter_mut()) {
            *v = crate::random::complex(rng, scale);
        }
        let ns = p.layout.n_s;
        for w in p.w_c.iter_mut().chain(p.w_d.iter_mut()) {
            *w = Mat::from_fn(ns, ns, |_, _| crate::random::complex(rng, 1.0));
        }
        p
    }

    pub fn layout(&self) -> &ModeLayout {
        &self.layout
    }

    pub fn geometry(&self) -> &LatticeGeometry {
        &self.layout.geometry
    }

    fn t_index(&self, site: &SiteIndex, mu: usize, leg: usize, a: usize, b: usize) -> usize {
        let l = &self.layout;
        let legs = l.geometry.n_legs();
        assert!(mu < l.n_c && leg < legs && a < l.n_s && b < l.n_s, "t index out of range");
        let s = l.geometry.site_index(site);
        (((s * l.n_c + mu) * legs + leg) * l.n_s + a) * l.n_s + b
    }

    #[allow(clippy::too_many_arguments)]
    fn tau_index(
        &self,
        site: &SiteIndex,
        mu: usize,
        nu: usize,
        m: usize,
        n: usize,
        a: usize,
        b: usize,
    ) -> usize {
        let l = &self.layout;
        let legs = l.geometry.n_legs();
        assert!(
            mu < l.n_c && nu < l.n_d && m < legs && n < legs && a < l.n_s && b < l.n_s,
            "tau index out of range"
        );
        let s = l.geometry.site_index(site);
        (((((s * l.n_c + mu) * l.n_d + nu) * legs + m) * legs + n) * l.n_s + a) * l.n_s + b
    }

    fn w_index(&self, site: &SiteIndex, axis: usize) -> usize {
        let dim = self.layout.geometry.dim();
        assert!(axis < dim, "axis out of range");
        self.layout.geometry.site_index(site) * dim + axis
    }

    /// `t^mu_{leg,ab}(x)`: amplitude of `psi^+_a c^{mu+}_{leg,b}`.
    pub fn t(&self, site: &SiteIndex, mu: usize, leg: usize, a: usize, b: usize) -> C64 {
        self.t[self.t_index(site, mu, leg, a, b)]
    }

    pub fn set_t(&mut self, site: &SiteIndex, mu: usize, leg: usize, a: usize, b: usize, v: C64) {
        let k = self.t_index(site, mu, leg, a, b);
        self.t[k] = v;
    }

    /// `tau^{mu nu}_{mn,ab}(x)`: amplitude of `c^{mu+}_{ma} d^{nu+}_{nb}`.
    #[allow(clippy::too_many_arguments)]
    pub fn tau(
        &self,
        site: &SiteIndex,
        mu: usize,
        nu: usize,
        m: usize,
        n: usize,
        a: usize,
        b: usize,
    ) -> C64 {
        self.tau[self.tau_index(site, mu, nu, m, n, a, b)]
    }

    #[allow(clippy::too_many_arguments)]
    pub fn set_tau(
        &mut self,
        site: &SiteIndex,
        mu: usize,
        nu: usize,
        m: usize,
        n: usize,
        a: usize,
        b: usize,
        v: C64,
    ) {
        let k = self.tau_index(site, mu, nu, m, n, a, b);
        self.tau[k] = v;
    }

    pub fn w_c(&self, site: &SiteIndex, axis: usize) -> MatRef<'_, C64> {
        self.w_c[self.w_index(site, axis)].as_ref()
    }

    pub fn w_d(&self, site: &SiteIndex, axis: usize) -> MatRef<'_, C64> {
        self.w_d[self.w_index(site, axis)].as_ref()
    }

    pub fn set_w_c(&mut self, site: &SiteIndex, axis: usize, w: CMat) -> Result<()> {
        self.check_w(&w)?;
        let k = self.w_index(site, axis);
        self.w_c[k] = w;
        Ok(())
    }

    pub fn set_w_d(&mut self, site: &SiteIndex, axis: usize, w: CMat) -> Result<()> {
        self.check_w(&w)?;
        let k = self.w_index(site, axis);
        self.w_d[k] = w;
        Ok(())
    }

    fn check_w(&self, w: &CMat) -> Result<()> {
        let ns = self.layout.n_s;
        if w.nrows() != ns || w.ncols() != ns {
            return Err(Error::Validation(format!(
                "bond matrix is {}x{}, expected {ns}x{ns}",
                w.nrows(),
                w.ncols()
            )));
        }
        Ok(())
    }

    /// True when every site carries the same `t`, `tau`, `W^C` and `W^D`.
    pub fn is_translation_invariant(&self) -> bool {
        let sites = self.layout.geometry.n_sites();
        let same = |v: &[C64]| {
            let chunk = v.len() / sites.max(1);
            chunk == 0 || v.chunks(chunk).all(|c| c == &v[..chunk])
        };
        let dim = self.layout.geometry.dim();
        let same_w = |w: &[CMat]| w.iter().enumerate().all(|(k, m)| m == &w[k % dim]);
        same(&self.t) && same(&self.tau) && same_w(&self.w_c) && same_w(&self.w_d)
    }

    /// `A(x)` as a pairing state on the canonical modes of `site`.
    pub fn site_block(&self, site: &SiteIndex) -> PairingState {
        let l = &self.layout;
        let modes = l.site_modes(site);
        let base = modes[0].0;
        let mut t = dense::zeros(modes.len(), modes.len());
        let legs = l.geometry.n_legs();
        let mut put = |p: ModeId, q: ModeId, v: C64| {
            t[(p.0 - base, q.0 - base)] += v;
            t[(q.0 - base, p.0 - base)] -= v;
        };
        for mu in 0..l.n_c {
            for leg in 0..legs {
                for a in 0..l.n_s {
                    for b in 0..l.n_s {
                        let v = self.t(site, mu, leg, a, b);
                        if v != ZERO {
                            put(
                                l.physical_id(site, a),
                                l.virtual_id(site, Species::C, leg, mu, b),
                                v,
                            );
                        }
                    }
                }
            }
        }
        for mu in 0..l.n_c {
            for nu in 0..l.n_d {
                for m in 0..legs {
                    for n in 0..legs {
                        for a in 0..l.n_s {
                            for b in 0..l.n_s {
                                let v = self.tau(site, mu, nu, m, n, a, b);
                                if v != ZERO {
                                    put(
                                        l.virtual_id(site, Species::C, m, mu, a),
                                        l.virtual_id(site, Species::D, n, nu, b),
                                        v,
                                    );
                                }
                            }
                        }
                    }
                }
            }
        }
        PairingState::new(modes, t).expect("site block is antisymmetric by construction")
    }

    /// Bond amplitudes `(u, v, B_uv)` of the link from `site` along `axis`,
    /// `u` on the out-leg at `site` and `v` on the in-leg at its neighbour.
    pub fn link_entries(&self, site: &SiteIndex, axis: usize) -> Vec<(ModeId, ModeId, C64)> {
        let l = &self.layout;
        let y = l.geometry.neighbor(site, axis, true);
        let (mo, mi) = (out_leg(axis), in_leg(axis));
        let mut out = Vec::new();
        for (species, copies, w) in [
            (Species::C, l.n_c, self.w_c(site, axis)),
            (Species::D, l.n_d, self.w_d(site, axis)),
        ] {
            for mu in 0..copies {
                for a in 0..l.n_s {
                    for b in 0..l.n_s {
                        out.push((
                            l.virtual_id(site, species, mo, mu, a),
                            l.virtual_id(&y, species, mi, mu, b),
                            I * w[(a, b)],
                        ));
                    }
                }
            }
        }
        out
    }
}

/// The leg-coupling matrices `X^(i)`: `X^(i)_mn = 1` exactly when `m` is the
/// out-leg and `n` the in-leg of axis `i`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct XMatrices {
    dim: usize,
}

impl XMatrices {
    pub fn new(dim: usize) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::Geometry(format!("dimension {dim} not supported")));
        }
        Ok(XMatrices { dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `(m, n)` of the single nonzero entry of `X^(axis)`, 0-based.
    pub fn support(&self, axis: usize) -> (usize, usize) {
        assert!(axis < self.dim, "axis out of range");
        (out_leg(axis), in_leg(axis))
    }

    pub fn entry(&self, axis: usize, m: usize, n: usize) -> f64 {
        if self.support(axis) == (m, n) {
            1.0
        } else {
            0.0
        }
    }

    pub fn matrix(&self, axis: usize) -> CMat {
        let legs = 2 * self.dim;
        Mat::from_fn(legs, legs, |m, n| C64::new(self.entry(axis, m, n), 0.0))
    }
}

/// `prod_x A(x)` as one pairing state on every mode of the layout, in
/// canonical order.
pub fn assemble_joint_pairing(params: &PepsParams) -> PairingState {
    let l = params.layout();
    let per = l.per_site();
    let blocks: Vec<PairingState> = params
        .geometry()
        .sites()
        .map(|s| params.site_block(&s))
        .collect();
    let mut t = dense::zeros(l.n_modes(), l.n_modes());
    for (k, block) in blocks.iter().enumerate() {
        let m = block.matrix();
        for j in 0..per {
            for i in 0..per {
                t[(k * per + i, k * per + j)] = m[(i, j)];
            }
        }
    }
    PairingState::from_parts((0..l.n_modes()).map(ModeId).collect(), t)
}

fn bond_state(entries: &[(ModeId, ModeId, C64)]) -> PairingState {
    let mut modes: Vec<ModeId> = Vec::new();
    for &(u, v, _) in entries {
        modes.push(u);
        modes.push(v);
    }
    modes.sort_unstable();
    modes.dedup();
    let pos = |m: ModeId| modes.binary_search(&m).expect("listed mode");
    let mut b = dense::zeros(modes.len(), modes.len());
    for &(u, v, val) in entries {
        let (i, j) = (pos(u), pos(v));
        b[(i, j)] += val;
        b[(j, i)] -= val;
    }
    PairingState::from_parts(modes, b)
}

/// The product of all bond states as one pairing state on the virtual modes,
/// in canonical order.
pub fn assemble_bond_pairing(params: &PepsParams) -> PairingState {
    let geom = params.geometry();
    let mut entries = Vec::new();
    for x in geom.sites() {
        for axis in 0..geom.dim() {
            entries.extend(params.link_entries(&x, axis));
        }
    }
    let state = bond_state(&entries);
    debug_assert_eq!(state.modes(), params.layout().virtual_modes().as_slice());
    state
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ContractionMethod {
    /// One Schur complement over all virtual modes at once.
    Global,
    /// Absorb sites in row-major order and project each link as soon as both
    /// of its ends are present.
    Sweep,
    /// `Global` up to [`GLOBAL_MODE_LIMIT`] modes, `Sweep` above.
    #[default]
    Auto,
}

/// The PEPS as a pairing state on the modes of [`physical_layout`] and its
/// overall scalar.
pub fn contract(params: &PepsParams) -> Result<Projection> {
    contract_with(params, ContractionMethod::Auto)
}

pub fn contract_with(params: &PepsParams, method: ContractionMethod) -> Result<Projection> {
    let l = params.layout();
    let method = match method {
        ContractionMethod::Auto if l.n_modes() <= GLOBAL_MODE_LIMIT => ContractionMethod::Global,
        ContractionMethod::Auto => ContractionMethod::Sweep,
        m => m,
    };
    let out = match method {
        ContractionMethod::Global => {
            let joint = assemble_joint_pairing(params);
            let bond = assemble_bond_pairing(params);
            project_bonds(&joint, &bond).map_err(|e| annotate(e, "global projection"))?
        }
        _ => sweep(params)?,
    };
    let (_, t) = out.state.reordered(&l.physical_modes())?.into_parts();
    Ok(Projection {
        state: PairingState::from_parts(physical_ids(l), t),
        scalar: out.scalar,
    })
}

/// Mode ids of the physical layout, in the order of `layout.physical_modes()`.
fn physical_ids(layout: &ModeLayout) -> Vec<ModeId> {
    (0..layout.n_physical()).map(ModeId).collect()
}

/// The physical-only layout on which contracted states live.
pub fn physical_layout(params: &PepsParams) -> ModeLayout {
    let l = params.layout();
    ModeLayout::physical(l.geometry.clone(), l.n_s).expect("n_s > 0")
}

fn annotate(e: Error, context: &str) -> Error {
    match e {
        Error::Contraction(msg) => Error::Contraction(format!("{context}: {msg}")),
        other => other,
    }
}

fn sweep(params: &PepsParams) -> Result<Projection> {
    let geom = params.geometry();
    let n = geom.n_sites();
    let mut closing: Vec<Vec<(SiteIndex, usize)>> = vec![Vec::new(); n];
    for x in geom.sites() {
        for axis in 0..geom.dim() {
            let y = geom.neighbor(&x, axis, true);
            let k = geom.site_index(&x).max(geom.site_index(&y));
            closing[k].push((x, axis));
        }
    }
    let blocks = par::map_range(Exec::default(), n, |k| params.site_block(&geom.site(k)));
    let mut cur = PairingState::vacuum(Vec::new());
    let mut scalar = LogScalar::ONE;
    for (k, block) in blocks.iter().enumerate() {
        cur = cur.direct_sum(block)?;
        if closing[k].is_empty() {
            continue;
        }
        let mut entries = Vec::new();
        for (x, axis) in &closing[k] {
            entries.extend(params.link_entries(x, *axis));
        }
        let bond = bond_state(&entries);
        let p = project_bonds(&cur, &bond).map_err(|e| {
            let links: Vec<String> = closing[k]
                .iter()
                .map(|(x, axis)| format!("{x}+e{}", axis + 1))
                .collect();
            annotate(e, &format!("links {}", links.join(", ")))
        })?;
        cur = p.state;
        scalar = scalar * p.scalar;
    }
    Ok(Projection { state: cur, scalar })
}

/// Dense Fock-space contraction of all modes at once, on the modes of
/// [`physical_layout`].
pub fn fock_contract(params: &PepsParams, limit: usize) -> Result<FockState> {
    let joint = assemble_joint_pairing(params);
    let psi = FockState::from_pairing_with_limit(&joint, limit)?;
    let out = fock::project_bond(&psi, &assemble_bond_pairing(params))?;
    out.reordered(&params.layout().physical_modes())?
        .relabeled(physical_ids(params.layout()))
}

/// Fock-space contraction that keeps at most `limit` modes live.
pub fn fock_network_contract(params: &PepsParams, limit: usize) -> Result<FockState> {
    let joint = assemble_joint_pairing(params);
    let bond = assemble_bond_pairing(params);
    fock::network_contract(&joint, &bond, limit)?
        .reordered(&params.layout().physical_modes())?
        .relabeled(physical_ids(params.layout()))
}

/// Free coefficients of the rotation-symmetric families: `t[mu]` and, for
/// every pair `(mu, nu)` at index `mu * n_d + nu`, the `tau` pattern values.
#[derive(Clone, Debug, PartialEq)]
pub struct FreeCoefficients {
    pub t: Vec<C64>,
    pub z: Vec<Vec<C64>>,
}

impl FreeCoefficients {
    pub fn zeros(n_c: usize, n_d: usize, per_pair: usize) -> Self {
        FreeCoefficients {
            t: vec![ZERO; n_c],
            z: vec![vec![ZERO; per_pair]; n_c * n_d],
        }
    }

    /// Entries uniform in the square `[-scale, scale]^2`.
    pub fn random<R: Rng>(n_c: usize, n_d: usize, per_pair: usize, scale: f64, rng: &mut R) -> Self {
        let mut c = Self::zeros(n_c, n_d, per_pair);
        for v in c.t.iter_mut().chain(c.z.iter_mut().flatten()) {
            *v = crate::random::complex(rng, scale);
        }
        c
    }

    pub fn n_c(&self) -> usize {
        self.t.len()
    }

    fn n_d(&self) -> Result<usize> {
        let n_c = self.n_c();
        if n_c == 0 {
            return if self.z.is_empty() {
                Ok(0)
            } else {
                Err(Error::Validation("tau coefficients without c copies".into()))
            };
        }
        if !self.z.len().is_multiple_of(n_c) {
            return Err(Error::Validation(format!(
                "{} tau coefficient sets do not split over {n_c} c copies",
                self.z.len()
            )));
        }
        Ok(self.z.len() / n_c)
    }

    fn check_pattern(&self, per_pair: usize) -> Result<()> {
        if let Some(z) = self.z.iter().find(|z| z.len() != per_pair) {
            return Err(Error::Validation(format!(
                "tau pattern takes {per_pair} values, got {}",
                z.len()
            )));
        }
        Ok(())
    }
}

fn fill_symmetric<F, G>(
    layout: ModeLayout,
    coeffs: &FreeCoefficients,
    pattern: F,
    w: G,
) -> Result<PepsParams>
where
    F: Fn(&[C64]) -> CMat,
    G: Fn(&SiteIndex, usize) -> (CMat, CMat),
{
    let mut p = PepsParams::zeros(layout);
    let l = p.layout().clone();
    let legs = l.geometry.n_legs();
    let patterns: Vec<CMat> = coeffs.z.iter().map(|z| pattern(z)).collect();
    for x in l.geometry.sites() {
        for mu in 0..l.n_c {
            for leg in 0..legs {
                for a in 0..l.n_s {
                    p.set_t(&x, mu, leg, a, a, coeffs.t[mu]);
                }
            }
            for nu in 0..l.n_d {
                let tau = &patterns[mu * l.n_d + nu];
                for m in 0..legs {
                    for n in 0..legs {
                        for a in 0..l.n_s {
                            p.set_tau(&x, mu, nu, m, n, a, a, tau[(m, n)]);
                        }
                    }
                }
            }
        }
        for axis in 0..l.geometry.dim() {
            let (wc, wd) = w(&x, axis);
            p.set_w_c(&x, axis, wc)?;
            p.set_w_d(&x, axis, wd)?;
        }
    }
    Ok(p)
}

fn require_dim(geom: &LatticeGeometry, dim: usize) -> Result<()> {
    if geom.dim() != dim {
        return Err(Error::Geometry(format!(
            "family needs d={dim}, geometry has d={}",
            geom.dim()
        )));
    }
    Ok(())
}

fn scalar(z: C64) -> CMat {
    Mat::from_fn(1, 1, |_, _| z)
}

fn parity_sign(k: usize) -> f64 {
    if k.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// Spinless two-dimensional family: `t^mu` equal on all legs, circulant
/// `tau^{mu nu}` with first row `z[mu * n_d + nu]`, `W^C = (1, conj(eta)^2)`
/// and `W^D = (1, eta^2)` with `eta = e^{i pi/4}`.
pub fn symmetric_params_d2(geom: &LatticeGeometry, coeffs: &FreeCoefficients) -> Result<PepsParams> {
    require_dim(geom, 2)?;
    coeffs.check_pattern(4)?;
    let layout = ModeLayout::new(geom.clone(), 1, coeffs.n_c(), coeffs.n_d()?)?;
    let e2 = eta_d2() * eta_d2();
    fill_symmetric(
        layout,
        coeffs,
        |z| circulant([z[0], z[1], z[2], z[3]]),
        |_, axis| {
            if axis == 0 {
                (scalar(ONE), scalar(ONE))
            } else {
                (scalar(e2.conj()), scalar(e2))
            }
        },
    )
}

/// Staggered three-dimensional family: `t^mu` equal on all legs, `tau` in the
/// cube pattern of `z[mu * n_d + nu] = (z1, z2, z3)`, `W^D` the staggered
/// hoppings `(1, i(-1)^{x3}, (-1)^{x1+x2})` and `W^C` their conjugates.
pub fn symmetric_params_d3_staggered(
    geom: &LatticeGeometry,
    coeffs: &FreeCoefficients,
) -> Result<PepsParams> {
    require_dim(geom, 3)?;
    coeffs.check_pattern(3)?;
    let layout = ModeLayout::new(geom.clone(), 1, coeffs.n_c(), coeffs.n_d()?)?;
    fill_symmetric(
        layout,
        coeffs,
        |z| cubic_tau(z[0], z[1], z[2]),
        |x, axis| {
            let [x1, x2, x3] = x.coords;
            let wd = match axis {
                0 => ONE,
                1 => I * parity_sign(x3),
                _ => C64::new(parity_sign(x1 + x2), 0.0),
            };
            (scalar(wd.conj()), scalar(wd))
        },
    )
}

/// Spin-1/2 three-dimensional family: `t^mu delta_ab`, the cube pattern of
/// `tau` times `delta_ab`, `W^C(i) = conj(J_i)` and `W^D(i) = J_i` with
/// `J_i = sigma_i epsilon`.
pub fn symmetric_params_d3_spinhalf(
    geom: &LatticeGeometry,
    coeffs: &FreeCoefficients,
) -> Result<PepsParams> {
    require_dim(geom, 3)?;
    coeffs.check_pattern(3)?;
    let layout = ModeLayout::new(geom.clone(), 2, coeffs.n_c(), coeffs.n_d()?)?;
    let dm = DiracMatrices::standard();
    fill_symmetric(
        layout,
        coeffs,
        |z| cubic_tau(z[0], z[1], z[2]),
        |_, axis| (dense::conj(dm.j[axis].as_ref()), dm.j[axis].clone()),
    )
}

/// Which `(mu, nu)` pairs of copies the exact construction couples.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ZOrdering {
    /// `z^{(mu,nu)} = -(e/2a) r^{mu-nu-1}` for `nu < mu`, zero otherwise.
    #[default]
    Forward,
    /// `z^{(mu,nu)} = -(e/2a) r^{nu-mu}` for `mu <= nu`, zero otherwise. Its
    /// contraction differs from the Trotter state.
    Backward,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExactOptions {
    /// Require `e < min(a, 1/m) / eps_margin`; must be at least 1.
    pub eps_margin: f64,
    pub ordering: ZOrdering,
}

impl Default for ExactOptions {
    fn default() -> Self {
        ExactOptions {
            eps_margin: 10.0,
            ordering: ZOrdering::Forward,
        }
    }
}

/// Time step `e = beta / N` and `r = 1 - m e` of the exact construction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrotterGrid {
    pub beta: f64,
    pub steps: usize,
    pub eps: f64,
    pub r: f64,
}

impl TrotterGrid {
    pub fn new(spec: &KSpec, beta: f64, steps: usize, eps_margin: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) || steps == 0 {
            return Err(Error::Validation(format!(
                "need beta > 0 and N >= 1, got beta={beta}, N={steps}"
            )));
        }
        if eps_margin.is_nan() || eps_margin < 1.0 {
            return Err(Error::Validation(format!(
                "eps margin must be at least 1, got {eps_margin}"
            )));
        }
        let eps = beta / steps as f64;
        let bound = spec.spacing().min(1.0 / spec.mass()) / eps_margin;
        if eps >= bound {
            return Err(Error::Precondition(format!(
                "time step {eps:.4} is not below min(a, 1/m)/{eps_margin} = {bound:.4}"
            )));
        }
        Ok(TrotterGrid {
            beta,
            steps,
            eps,
            r: 1.0 - spec.mass() * eps,
        })
    }

    /// `t^(mu) = sqrt(e/2a) r^mu`.
    pub fn t(&self, a: f64, mu: usize) -> f64 {
        (self.eps / (2.0 * a)).sqrt() * self.r.powi(mu as i32)
    }

    pub fn z(&self, a: f64, mu: usize, nu: usize, ordering: ZOrdering) -> f64 {
        let c = -self.eps / (2.0 * a);
        match ordering {
            ZOrdering::Forward if nu < mu => c * self.r.powi((mu - nu - 1) as i32),
            ZOrdering::Backward if mu <= nu => c * self.r.powi((nu - mu) as i32),
            _ => 0.0,
        }
    }
}

/// PEPS parameters whose contraction is the `N`-step Trotter approximation of
/// `e^{-beta H}|vac>` for the K-form Hamiltonian of `spec`.
pub fn exact_construction_params(spec: &KSpec, beta: f64, steps: usize) -> Result<PepsParams> {
    exact_construction_params_with(spec, beta, steps, &ExactOptions::default())
}

pub fn exact_construction_params_with(
    spec: &KSpec,
    beta: f64,
    steps: usize,
    opts: &ExactOptions,
) -> Result<PepsParams> {
    let grid = TrotterGrid::new(spec, beta, steps, opts.eps_margin)?;
    let geom = spec.geometry().clone();
    let a = spec.spacing();
    let layout = ModeLayout::new(geom.clone(), spec.n_s(), steps, steps - 1)?;
    let legs = geom.n_legs();
    let mut p = PepsParams::zeros(layout);
    for x in geom.sites() {
        for mu in 0..steps {
            let t = C64::new(grid.t(a, mu), 0.0);
            for leg in 0..legs {
                for s in 0..spec.n_s() {
                    p.set_t(&x, mu, leg, s, s, t);
                }
            }
            for nu in 0..steps - 1 {
                let z = C64::new(grid.z(a, mu, nu, opts.ordering), 0.0);
                if z == ZERO {
                    continue;
                }
                for m in 0..legs {
                    for n in 0..legs {
                        for s in 0..spec.n_s() {
                            p.set_tau(&x, mu, nu, m, n, s, s, z);
                        }
                    }
                }
            }
        }
        for axis in 0..geom.dim() {
            let k = spec.k(&x, axis);
            p.set_w_c(&x, axis, dense::conj(k))?;
            p.set_w_d(&x, axis, k.to_owned())?;
        }
    }
    Ok(p)
}

/// Largest number of physical modes [`trotter_reference`] accepts.
pub const TROTTER_MAX_MODES: usize = 12;

/// `S^N |vac>` in Fock space with `S = e^{-e P^+} r^{n} e^{-e P}`, where
/// `P^+ = 1/2 sum Delta a^+ a^+` is the pairing part of the K-form Hamiltonian
/// and `n` the number operator. Not normalised.
pub fn trotter_reference(spec: &KSpec, beta: f64, steps: usize) -> Result<FockState> {
    let h = build_quadratic(spec);
    if h.len() > TROTTER_MAX_MODES {
        return Err(Error::OracleSize {
            got: h.len(),
            max: TROTTER_MAX_MODES,
        });
    }
    let grid = TrotterGrid::new(spec, beta, steps, 1.0)?;
    let full = QuadraticOp::from_hamiltonian(&h);
    let minus_eps = C64::new(-grid.eps, 0.0);
    let mut pc = QuadraticOp::zero(h.len());
    pc.create = full.create.clone();
    let mut pa = QuadraticOp::zero(h.len());
    pa.annihilate = full.annihilate;
    let (pc, pa) = (pc.scaled(minus_eps), pa.scaled(minus_eps));
    let weights = vec![C64::new(grid.r, 0.0); h.len()];
    let mut psi = FockState::vacuum(h.modes().to_vec())?;
    for _ in 0..steps {
        psi = psi.apply_exp(&pa);
        psi.apply_occupation_weights(&weights);
        psi = psi.apply_exp(&pc);
    }
    Ok(psi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::fidelity;
    use crate::hamiltonians::{exact_ground, naive_kspec, staggered_d2_kspec, staggered_d3_kspec, NaiveBranch};
    use crate::lattice::Rotation;
    use crate::random;
    use crate::symmetry::{charge_residual, rotation_residual, rotation_residual_with, PhysicalRotation, VirtualRotation};

    fn geom(dim: usize, ext: &[usize]) -> LatticeGeometry {
        LatticeGeometry::new(dim, ext, 1.0).unwrap()
    }

    fn random_params<R: Rng>(layout: ModeLayout, scale: f64, rng: &mut R) -> PepsParams {
        let mut p = PepsParams::zeros(layout);
        for v in p.t.iter_mut().chain(p.tau.iter_mut()) {
            *v = random::complex(rng, scale);
        }
        let ns = p.layout.n_s;
        for w in p.w_c.iter_mut().chain(p.w_d.iter_mut()) {
            *w = Mat::from_fn(ns, ns, |_, _| random::complex(rng, 1.0));
        }
        p
    }

    fn fock_of(p: &Projection) -> FockState {
        let mut f = FockState::from_pairing(&p.state).unwrap();
        f.scale(p.scalar.value());
        f
    }

    fn rel_diff(a: &FockState, b: &FockState) -> f64 {
        let mut num = 0.0f64;
        let mut den = 0.0f64;
        for (x, y) in a.amplitudes().iter().zip(b.amplitudes()) {
            num = num.max((x - y).norm());
            den = den.max(y.norm());
        }
        num / den
    }

    #[test]
    fn x_matrices_single_entry() {
        let x = XMatrices::new(3).unwrap();
        assert_eq!(x.support(0), (0, 2));
        assert_eq!(x.support(1), (1, 3));
        assert_eq!(x.support(2), (4, 5));
        let m = x.matrix(2);
        let total: f64 = (0..6).flat_map(|i| (0..6).map(move |j| (i, j))).map(|(i, j)| m[(i, j)].re).sum();
        assert_eq!(total, 1.0);
        assert_eq!(m[(4, 5)], ONE);
    }

    #[test]
    fn zero_params_give_vacuum() {
        let l = ModeLayout::new(geom(2, &[2, 2]), 1, 1, 1).unwrap();
        let p = PepsParams::zeros(l.clone());
        assert_eq!(dense::max_abs(assemble_joint_pairing(&p).matrix()), 0.0);
        assert_eq!(dense::max_abs(assemble_bond_pairing(&p).matrix()), 0.0);
        let mut rng = random::rng(1);
        let mut q = random_params(l, 0.5, &mut rng);
        q.t.iter_mut().for_each(|v| *v = ZERO);
        let c = contract(&q).unwrap();
        assert_eq!(dense::max_abs(c.state.matrix()), 0.0);
    }

    #[test]
    fn single_site_block_reads_t() {
        let l = ModeLayout::new(geom(2, &[1, 1]), 1, 1, 0).unwrap();
        let mut p = PepsParams::zeros(l.clone());
        let x = SiteIndex::new(&[0, 0]);
        let t = C64::new(0.3, -0.2);
        for leg in 0..4 {
            p.set_t(&x, 0, leg, 0, 0, t);
        }
        let joint = assemble_joint_pairing(&p);
        let phys = l.physical_id(&x, 0);
        for leg in 0..4 {
            let c = l.virtual_id(&x, Species::C, leg, 0, 0);
            assert_eq!(joint.entry(phys, c), t);
            assert_eq!(joint.entry(c, phys), -t);
        }
    }

    #[test]
    fn bond_block_on_two_site_chain() {
        let l = ModeLayout::new(geom(2, &[2, 1]), 1, 1, 0).unwrap();
        let mut p = PepsParams::zeros(l.clone());
        let x0 = SiteIndex::new(&[0, 0]);
        p.set_w_c(&x0, 0, scalar(ONE)).unwrap();
        let bond = assemble_bond_pairing(&p);
        let x1 = SiteIndex::new(&[1, 0]);
        let u = l.virtual_id(&x0, Species::C, 0, 0, 0);
        let v = l.virtual_id(&x1, Species::C, 2, 0, 0);
        assert_eq!(bond.entry(u, v), I);
        assert_eq!(bond.entry(v, u), -I);
        assert_eq!(dense::max_abs(bond.matrix()), 1.0);
        let nonzero = (0..bond.len())
            .flat_map(|i| (0..bond.len()).map(move |j| (i, j)))
            .filter(|&(i, j)| bond.matrix()[(i, j)] != ZERO)
            .count();
        assert_eq!(nonzero, 2);
    }

    #[test]
    fn z_axis_bond_joins_legs_five_and_six() {
        let l = ModeLayout::new(geom(3, &[1, 1, 2]), 1, 1, 0).unwrap();
        let mut p = PepsParams::zeros(l.clone());
        let x = SiteIndex::new(&[0, 0, 0]);
        p.set_w_c(&x, 2, scalar(ONE)).unwrap();
        let e = p.link_entries(&x, 2);
        assert_eq!(e.len(), 1);
        let (u, v, val) = e[0];
        assert_eq!(l.mode(u).leg, 4);
        assert_eq!(l.mode(v).leg, 5);
        assert_eq!(l.mode(v).site, SiteIndex::new(&[0, 0, 1]));
        assert_eq!(val, I);
    }

    #[test]
    fn joint_pairing_matches_product_of_site_operators() {
        let mut rng = random::rng(2);
        let l = ModeLayout::new(geom(2, &[1, 1]), 1, 1, 1).unwrap();
        let p = random_params(l.clone(), 0.7, &mut rng);
        let joint = FockState::from_pairing(&assemble_joint_pairing(&p)).unwrap();
        let mut f = FockState::vacuum((0..l.n_modes()).map(ModeId).collect()).unwrap();
        for x in l.geometry.sites() {
            let block = p.site_block(&x);
            let b = block.matrix();
            for i in 0..block.len() {
                for j in i + 1..block.len() {
                    let (pi, pj) = (block.modes()[i].0, block.modes()[j].0);
                    f.apply_pair_creation(pi, pj, b[(i, j)]);
                }
            }
        }
        assert!(rel_diff(&f, &joint) < 1e-12);
    }

    #[test]
    fn contraction_matches_fock_oracle_on_small_lattices() {
        let mut rng = random::rng(3);
        let cases = [
            (geom(2, &[1, 2]), 1, 1, 0),
            (geom(2, &[2, 1]), 1, 1, 0),
            (geom(2, &[1, 1]), 2, 1, 0),
            (geom(2, &[1, 1]), 1, 1, 1),
            (geom(2, &[1, 1]), 1, 2, 0),
        ];
        for (g, ns, nc, nd) in cases {
            let l = ModeLayout::new(g, ns, nc, nd).unwrap();
            for _ in 0..3 {
                let p = random_params(l.clone(), 0.6, &mut rng);
                let c = contract_with(&p, ContractionMethod::Global).unwrap();
                let oracle = fock_contract(&p, 12).unwrap();
                assert!(rel_diff(&fock_of(&c), &oracle) < 1e-9);
                let net = fock_network_contract(&p, 12).unwrap();
                assert!(rel_diff(&net, &oracle) < 1e-10);
            }
        }
    }

    #[test]
    fn sweep_equals_global() {
        let mut rng = random::rng(4);
        for (g, ns, nc, nd) in [
            (geom(2, &[2, 2]), 1, 1, 1),
            (geom(2, &[3, 2]), 1, 2, 1),
            (geom(2, &[1, 1]), 1, 1, 1),
            (geom(3, &[2, 1, 2]), 2, 1, 1),
        ] {
            let l = ModeLayout::new(g, ns, nc, nd).unwrap();
            let p = random_params(l, 0.5, &mut rng);
            let a = contract_with(&p, ContractionMethod::Global).unwrap();
            let b = contract_with(&p, ContractionMethod::Sweep).unwrap();
            assert!(dense::max_abs_diff(a.state.matrix(), b.state.matrix()) < 1e-10);
            let (va, vb) = (a.scalar.value(), b.scalar.value());
            assert!((va - vb).norm() < 1e-9 * va.norm());
        }
    }

    #[test]
    fn network_oracle_on_two_by_two() {
        let mut rng = random::rng(5);
        let c = FreeCoefficients::random(1, 1, 4, 0.6, &mut rng);
        let p = symmetric_params_d2(&geom(2, &[2, 2]), &c).unwrap();
        let g = contract(&p).unwrap();
        let net = fock_network_contract(&p, 20).unwrap();
        assert!(rel_diff(&fock_of(&g), &net) < 1e-9);
    }

    #[test]
    fn d2_family_constants() {
        let c = FreeCoefficients::zeros(1, 1, 4);
        let p = symmetric_params_d2(&geom(2, &[2, 2]), &c).unwrap();
        let x = SiteIndex::new(&[0, 0]);
        assert!((p.w_c(&x, 1)[(0, 0)] - C64::new(0.0, -1.0)).norm() < 1e-15);
        assert!((p.w_d(&x, 1)[(0, 0)] - C64::new(0.0, 1.0)).norm() < 1e-15);
        assert_eq!(p.w_c(&x, 0)[(0, 0)], ONE);
        assert_eq!(p.w_d(&x, 0)[(0, 0)], ONE);
        assert!(p.is_translation_invariant());
        let out = contract(&p).unwrap();
        assert_eq!(dense::max_abs(out.state.matrix()), 0.0);
    }

    #[test]
    fn d2_family_is_rotation_invariant() {
        let g = geom(2, &[4, 4]);
        let rot = PhysicalRotation::d2(&g).unwrap();
        let mut rng = random::rng(6);
        for _ in 0..3 {
            let c = FreeCoefficients::random(2, 1, 4, 0.5, &mut rng);
            let p = symmetric_params_d2(&g, &c).unwrap();
            let virt = VirtualRotation::from_physical(&rot);
            let joint = assemble_joint_pairing(&p);
            assert!(rotation_residual_with(&joint, p.layout(), &rot, Some(&virt)).unwrap() < 1e-12);
            let bond = assemble_bond_pairing(&p);
            assert!(rotation_residual_with(&bond, p.layout(), &rot, Some(&virt)).unwrap() < 1e-12);
            let out = contract(&p).unwrap();
            let phys = ModeLayout::physical(g.clone(), 1).unwrap();
            assert!(rotation_residual(&out.state, &phys, &rot).unwrap() < 1e-10);
            assert!(charge_residual(&out.state, &phys) < 1e-12);
        }
    }

    #[test]
    fn staggered_d3_family() {
        let g = geom(3, &[2, 2, 2]);
        let c = FreeCoefficients {
            t: vec![ONE],
            z: vec![vec![ZERO, ZERO, ONE]],
        };
        let p = symmetric_params_d3_staggered(&g, &c).unwrap();
        let x = SiteIndex::new(&[0, 0, 1]);
        assert!((p.w_c(&x, 1)[(0, 0)] - I).norm() < 1e-15);
        for m in 0..6 {
            for n in 0..6 {
                let want = if m == n { ONE } else { ZERO };
                assert_eq!(p.tau(&x, 0, 0, m, n, 0, 0), want);
            }
        }
        let spec = staggered_d3_kspec(&g, 1.0).unwrap();
        for s in g.sites() {
            for axis in 0..3 {
                assert!(dense::max_abs_diff(p.w_d(&s, axis), spec.k(&s, axis)) < 1e-15);
            }
        }
        let g = geom(3, &[4, 4, 4]);
        let mut rng = random::rng(7);
        let c = FreeCoefficients::random(1, 1, 3, 0.5, &mut rng);
        let p = symmetric_params_d3_staggered(&g, &c).unwrap();
        let out = contract(&p).unwrap();
        assert!(dense::max_abs(out.state.matrix()) > 1e-3);
        let phys = ModeLayout::physical(g.clone(), 1).unwrap();
        for rot in Rotation::all(3) {
            let r = PhysicalRotation::staggered_d3(&g, *rot).unwrap();
            assert!(rotation_residual(&out.state, &phys, &r).unwrap() < 1e-10);
        }
        assert!(charge_residual(&out.state, &phys) < 1e-12);
    }

    #[test]
    fn spinhalf_family() {
        let g = geom(3, &[2, 2, 2]);
        let mut rng = random::rng(8);
        let c = FreeCoefficients::random(1, 1, 3, 0.5, &mut rng);
        let p = symmetric_params_d3_spinhalf(&g, &c).unwrap();
        let x = SiteIndex::new(&[1, 0, 1]);
        let dm = DiracMatrices::standard();
        for axis in 0..3 {
            assert!(dense::max_abs_diff(p.w_d(&x, axis), dm.j[axis].as_ref()) < 1e-15);
        }
        assert_eq!(p.t(&x, 0, 3, 0, 1), ZERO);
        assert_eq!(p.t(&x, 0, 3, 1, 1), c.t[0]);
        let g = geom(3, &[4, 4, 4]);
        let p = symmetric_params_d3_spinhalf(&g, &c).unwrap();
        let out = contract(&p).unwrap();
        assert!(dense::max_abs(out.state.matrix()) > 1e-3);
        let phys = ModeLayout::physical(g.clone(), 2).unwrap();
        for rot in Rotation::all(3) {
            let r = PhysicalRotation::spinhalf(&g, *rot).unwrap();
            assert!(rotation_residual(&out.state, &phys, &r).unwrap() < 1e-10);
        }
        assert!(charge_residual(&out.state, &phys) < 1e-12);
    }

    #[test]
    fn exact_construction_tables() {
        let spec = staggered_d2_kspec(&geom(2, &[2, 2]), 1.0).unwrap();
        let grid = TrotterGrid::new(&spec, 0.4, 8, 10.0).unwrap();
        let e = grid.eps;
        assert!((grid.t(1.0, 0) - (e / 2.0).sqrt()).abs() < 1e-16);
        assert_eq!(grid.z(1.0, 2, 1, ZOrdering::Backward), 0.0);
        let want = -(e / 2.0) * grid.r * grid.r;
        assert!((grid.z(1.0, 1, 3, ZOrdering::Backward) - want).abs() < 1e-16);
        assert_eq!(grid.z(1.0, 1, 3, ZOrdering::Forward), 0.0);
        assert!((grid.z(1.0, 3, 1, ZOrdering::Forward) + (e / 2.0) * grid.r).abs() < 1e-16);
        assert!(matches!(
            exact_construction_params(&spec, 4.0, 8),
            Err(Error::Precondition(_))
        ));
        let p = exact_construction_params(&spec, 0.4, 8).unwrap();
        assert_eq!((p.layout().n_c, p.layout().n_d), (8, 7));
    }

    #[test]
    fn single_step_has_no_d_copies() {
        let spec = staggered_d2_kspec(&geom(2, &[2, 4]), 1.0).unwrap();
        let p = exact_construction_params(&spec, 0.05, 1).unwrap();
        assert_eq!(p.layout().n_d, 0);
        let out = contract(&p).unwrap();
        let f = fock_of(&out);
        let r = trotter_reference(&spec, 0.05, 1).unwrap();
        assert!(f.fidelity(&r).unwrap() > 1.0 - 1e-12);
    }

    fn exact_vs_trotter(spec: &KSpec, beta: f64, steps: usize, ordering: ZOrdering) -> f64 {
        let opts = ExactOptions {
            eps_margin: 1.0,
            ordering,
        };
        let p = exact_construction_params_with(spec, beta, steps, &opts).unwrap();
        let out = contract(&p).unwrap();
        let f = FockState::from_pairing(&out.state).unwrap();
        f.fidelity(&trotter_reference(spec, beta, steps).unwrap()).unwrap()
    }

    #[test]
    fn exact_construction_reproduces_trotter_state() {
        let cases = [
            staggered_d2_kspec(&geom(2, &[2, 4]), 1.0).unwrap(),
            staggered_d2_kspec(&geom(2, &[4, 2]), 0.7).unwrap(),
            staggered_d3_kspec(&geom(3, &[1, 2, 4]), 1.0).unwrap(),
            naive_kspec(&geom(3, &[1, 1, 4]), 1.0, NaiveBranch::Upper).unwrap(),
        ];
        for spec in &cases {
            let f = exact_vs_trotter(spec, 2.0, 12, ZOrdering::Forward);
            assert!(f > 1.0 - 1e-10, "fidelity {f}");
        }
        let f = exact_vs_trotter(&cases[0], 2.0, 12, ZOrdering::Backward);
        assert!(f < 1.0 - 1e-4, "fidelity {f}");
    }

    #[test]
    fn exact_construction_approaches_ground_state() {
        let spec = staggered_d2_kspec(&geom(2, &[2, 4]), 1.0).unwrap();
        let exact = exact_ground(&spec).unwrap();
        let mut last = 0.0;
        for n in [8, 16, 32] {
            let p = exact_construction_params_with(&spec, 4.0, n, &ExactOptions { eps_margin: 1.0, ..Default::default() }).unwrap();
            let out = contract(&p).unwrap();
            let f = fidelity(&out.state, &exact).unwrap();
            assert!(f > last);
            last = f;
            assert!(charge_residual(&out.state, &spec.layout()) < 1e-12);
        }
        assert!(last > 0.99, "fidelity {last}");
    }
}
