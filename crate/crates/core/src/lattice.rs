//! Lattice geometry, rotations and the canonical ordering of fermionic modes.

use crate::dense::CMat;
use crate::error::{Error, Result};
use faer::Mat;
use num_complex::Complex64 as C64;
use std::fmt;

/// Site coordinates; entries beyond the lattice dimension are zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SiteIndex {
    pub coords: [usize; 3],
}

impl SiteIndex {
    pub fn new(coords: &[usize]) -> Self {
        let mut c = [0; 3];
        c[..coords.len()].copy_from_slice(coords);
        SiteIndex { coords: c }
    }

    pub fn coord_sum(&self) -> usize {
        self.coords.iter().sum()
    }
}

impl fmt::Display for SiteIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.coords[0], self.coords[1], self.coords[2])
    }
}

/// Periodic hypercubic lattice in two or three dimensions.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeGeometry {
    dim: usize,
    extent: [usize; 3],
    spacing: f64,
}

impl LatticeGeometry {
    pub fn new(dim: usize, extent: &[usize], spacing: f64) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::Geometry(format!("dimension must be 2 or 3, got {dim}")));
        }
        if extent.len() != dim {
            return Err(Error::Geometry(format!(
                "expected {dim} extents, got {}",
                extent.len()
            )));
        }
        if extent.contains(&0) {
            return Err(Error::Geometry("extents must be positive".into()));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::Geometry(format!("spacing must be positive, got {spacing}")));
        }
        let mut e = [1; 3];
        e[..dim].copy_from_slice(extent);
        Ok(LatticeGeometry {
            dim,
            extent: e,
            spacing,
        })
    }

    pub fn cubic(dim: usize, l: usize, spacing: f64) -> Result<Self> {
        Self::new(dim, &vec![l; dim], spacing)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn extent(&self) -> &[usize] {
        &self.extent[..self.dim]
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn n_sites(&self) -> usize {
        self.extent().iter().product()
    }

    pub fn n_legs(&self) -> usize {
        2 * self.dim
    }

    /// Staggered phases are periodic only if every extent is even; extent 1
    /// (a single site wrapped onto itself) is tolerated for small test lattices.
    pub fn require_even_or_unit(&self) -> Result<()> {
        if let Some(l) = self.extent().iter().find(|&&l| l != 1 && l % 2 == 1) {
            return Err(Error::Geometry(format!(
                "extent {l} is odd; staggered models need even extents"
            )));
        }
        Ok(())
    }

    /// Linear index, row-major with the first coordinate slowest.
    pub fn site_index(&self, site: &SiteIndex) -> usize {
        let mut idx = 0;
        for i in 0..self.dim {
            debug_assert!(site.coords[i] < self.extent[i]);
            idx = idx * self.extent[i] + site.coords[i];
        }
        idx
    }

    pub fn site(&self, mut idx: usize) -> SiteIndex {
        let mut c = [0; 3];
        for i in (0..self.dim).rev() {
            c[i] = idx % self.extent[i];
            idx /= self.extent[i];
        }
        SiteIndex { coords: c }
    }

    pub fn sites(&self) -> impl Iterator<Item = SiteIndex> + '_ {
        (0..self.n_sites()).map(move |i| self.site(i))
    }

    /// Neighbour of `site` along `axis` (0-based), forwards or backwards.
    pub fn neighbor(&self, site: &SiteIndex, axis: usize, forward: bool) -> SiteIndex {
        let mut c = site.coords;
        let l = self.extent[axis];
        c[axis] = if forward {
            (c[axis] + 1) % l
        } else {
            (c[axis] + l - 1) % l
        };
        SiteIndex { coords: c }
    }

    /// Rotations need equal extents on the rotated axes.
    pub fn check_rotatable(&self) -> Result<()> {
        let l0 = self.extent[0];
        if self.extent().iter().any(|&l| l != l0) {
            return Err(Error::Geometry(format!(
                "rotations need equal extents, got {:?}",
                self.extent()
            )));
        }
        if l0 < 2 {
            return Err(Error::Geometry("rotations need extent at least 2".into()));
        }
        Ok(())
    }

    pub fn rotate_site(&self, rot: Rotation, site: &SiteIndex) -> Result<SiteIndex> {
        rot.check_dim(self.dim)?;
        self.check_rotatable()?;
        let v = rot.apply([
            site.coords[0] as i64,
            site.coords[1] as i64,
            site.coords[2] as i64,
        ]);
        let mut c = [0; 3];
        for i in 0..self.dim {
            c[i] = v[i].rem_euclid(self.extent[i] as i64) as usize;
        }
        Ok(SiteIndex { coords: c })
    }
}

/// Parity of the coordinate sum.
pub fn sublattice_parity(site: &SiteIndex) -> usize {
    site.coord_sum() % 2
}

/// Quarter-turn lattice rotations. `Planar` is the single rotation in two
/// dimensions; `X1`, `X2`, `X3` rotate about the coordinate axes in three.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Rotation {
    Planar,
    X1,
    X2,
    X3,
}

impl Rotation {
    pub fn all(dim: usize) -> &'static [Rotation] {
        if dim == 2 {
            &[Rotation::Planar]
        } else {
            &[Rotation::X1, Rotation::X2, Rotation::X3]
        }
    }

    pub(crate) fn check_dim(self, dim: usize) -> Result<()> {
        let ok = matches!(
            (self, dim),
            (Rotation::Planar, 2) | (Rotation::X1 | Rotation::X2 | Rotation::X3, 3)
        );
        if ok {
            Ok(())
        } else {
            Err(Error::Geometry(format!("rotation {self:?} is not defined in d={dim}")))
        }
    }

    pub fn apply(self, x: [i64; 3]) -> [i64; 3] {
        match self {
            Rotation::Planar | Rotation::X3 => [-x[1], x[0], x[2]],
            Rotation::X1 => [x[0], -x[2], x[1]],
            Rotation::X2 => [x[2], x[1], -x[0]],
        }
    }

    /// 1-based axis label.
    pub fn axis_label(self) -> Option<usize> {
        match self {
            Rotation::Planar => None,
            Rotation::X1 => Some(1),
            Rotation::X2 => Some(2),
            Rotation::X3 => Some(3),
        }
    }
}

/// Direction of a virtual leg: legs `0..2d` point along
/// `+e1, +e2, -e1, -e2, +e3, -e3`.
pub fn leg_direction(leg: usize) -> (usize, bool) {
    match leg {
        0 => (0, true),
        1 => (1, true),
        2 => (0, false),
        3 => (1, false),
        4 => (2, true),
        5 => (2, false),
        _ => panic!("leg {leg} out of range"),
    }
}

pub fn leg_for(axis: usize, forward: bool) -> usize {
    match (axis, forward) {
        (0, true) => 0,
        (1, true) => 1,
        (0, false) => 2,
        (1, false) => 3,
        (2, true) => 4,
        (2, false) => 5,
        _ => panic!("axis {axis} out of range"),
    }
}

/// Leg at `x` that is paired with leg `in_leg(axis)` at `x + e_axis`.
pub fn out_leg(axis: usize) -> usize {
    leg_for(axis, true)
}

pub fn in_leg(axis: usize) -> usize {
    leg_for(axis, false)
}

/// Permutation matrix with `R[m][image[m]] = 1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PermutationMatrix {
    image: Vec<usize>,
}

impl PermutationMatrix {
    pub fn new(image: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; image.len()];
        for &i in &image {
            if i >= image.len() || seen[i] {
                return Err(Error::Validation(format!("{image:?} is not a permutation")));
            }
            seen[i] = true;
        }
        Ok(PermutationMatrix { image })
    }

    pub fn identity(n: usize) -> Self {
        PermutationMatrix {
            image: (0..n).collect(),
        }
    }

    pub fn size(&self) -> usize {
        self.image.len()
    }

    pub fn image(&self, m: usize) -> usize {
        self.image[m]
    }

    pub fn entry(&self, m: usize, n: usize) -> f64 {
        if self.image[m] == n {
            1.0
        } else {
            0.0
        }
    }

    /// Matrix product `self * other`.
    pub fn compose(&self, other: &PermutationMatrix) -> PermutationMatrix {
        assert_eq!(self.size(), other.size());
        PermutationMatrix {
            image: self.image.iter().map(|&n| other.image[n]).collect(),
        }
    }

    pub fn transpose(&self) -> PermutationMatrix {
        let mut inv = vec![0; self.size()];
        for (m, &n) in self.image.iter().enumerate() {
            inv[n] = m;
        }
        PermutationMatrix { image: inv }
    }

    pub fn pow(&self, k: usize) -> PermutationMatrix {
        let mut r = PermutationMatrix::identity(self.size());
        for _ in 0..k {
            r = r.compose(self);
        }
        r
    }

    pub fn is_identity(&self) -> bool {
        self.image.iter().enumerate().all(|(m, &n)| m == n)
    }

    pub fn to_dense(&self) -> CMat {
        Mat::from_fn(self.size(), self.size(), |m, n| C64::new(self.entry(m, n), 0.0))
    }
}

/// The tabulated leg permutation for a rotation.
pub fn leg_permutation(rot: Rotation) -> PermutationMatrix {
    let rows: &[usize] = match rot {
        Rotation::Planar => &[1, 2, 3, 0],
        Rotation::X1 => &[0, 4, 2, 5, 3, 1],
        Rotation::X2 => &[5, 1, 4, 3, 0, 2],
        Rotation::X3 => &[1, 2, 3, 0, 4, 5],
    };
    PermutationMatrix {
        image: rows.to_vec(),
    }
}

/// Leg permutation obtained by rotating each leg direction.
pub fn induced_leg_permutation(rot: Rotation) -> PermutationMatrix {
    let n = if rot == Rotation::Planar { 4 } else { 6 };
    let image = (0..n)
        .map(|leg| {
            let (axis, fwd) = leg_direction(leg);
            let mut v = [0i64; 3];
            v[axis] = if fwd { 1 } else { -1 };
            let w = rot.apply(v);
            let axis2 = (0..3).find(|&k| w[k] != 0).unwrap();
            leg_for(axis2, w[axis2] > 0)
        })
        .collect();
    PermutationMatrix { image }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Species {
    Physical,
    C,
    D,
}

/// Position of a mode in the canonical ordering.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModeId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ModeIndex {
    pub site: SiteIndex,
    pub species: Species,
    /// Virtual leg (0-based); zero for physical modes.
    pub leg: usize,
    /// Copy index; zero for physical modes.
    pub copy: usize,
    pub spin: usize,
}

/// Canonical mode numbering: site (row-major), then species P < C < D, then
/// leg, copy and spin component.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeLayout {
    pub geometry: LatticeGeometry,
    pub n_s: usize,
    pub n_c: usize,
    pub n_d: usize,
}

impl ModeLayout {
    pub fn new(geometry: LatticeGeometry, n_s: usize, n_c: usize, n_d: usize) -> Result<Self> {
        if n_s == 0 {
            return Err(Error::Validation("at least one spin component is needed".into()));
        }
        Ok(ModeLayout {
            geometry,
            n_s,
            n_c,
            n_d,
        })
    }

    pub fn physical(geometry: LatticeGeometry, n_s: usize) -> Result<Self> {
        Self::new(geometry, n_s, 0, 0)
    }

    fn legs(&self) -> usize {
        self.geometry.n_legs()
    }

    pub fn c_per_site(&self) -> usize {
        self.legs() * self.n_c * self.n_s
    }

    pub fn d_per_site(&self) -> usize {
        self.legs() * self.n_d * self.n_s
    }

    pub fn per_site(&self) -> usize {
        self.n_s + self.c_per_site() + self.d_per_site()
    }

    pub fn n_modes(&self) -> usize {
        self.per_site() * self.geometry.n_sites()
    }

    pub fn n_physical(&self) -> usize {
        self.n_s * self.geometry.n_sites()
    }

    pub fn index(&self, mode: &ModeIndex) -> ModeId {
        let base = self.geometry.site_index(&mode.site) * self.per_site();
        let off = match mode.species {
            Species::Physical => mode.spin,
            Species::C => self.n_s + (mode.leg * self.n_c + mode.copy) * self.n_s + mode.spin,
            Species::D => {
                self.n_s
                    + self.c_per_site()
                    + (mode.leg * self.n_d + mode.copy) * self.n_s
                    + mode.spin
            }
        };
        ModeId(base + off)
    }

    pub fn mode(&self, id: ModeId) -> ModeIndex {
        let ps = self.per_site();
        let site = self.geometry.site(id.0 / ps);
        let mut off = id.0 % ps;
        if off < self.n_s {
            return ModeIndex {
                site,
                species: Species::Physical,
                leg: 0,
                copy: 0,
                spin: off,
            };
        }
        off -= self.n_s;
        let (species, copies) = if off < self.c_per_site() {
            (Species::C, self.n_c)
        } else {
            off -= self.c_per_site();
            (Species::D, self.n_d)
        };
        let spin = off % self.n_s;
        let rest = off / self.n_s;
        ModeIndex {
            site,
            species,
            leg: rest / copies,
            copy: rest % copies,
            spin,
        }
    }

    pub fn physical_id(&self, site: &SiteIndex, spin: usize) -> ModeId {
        self.index(&ModeIndex {
            site: *site,
            species: Species::Physical,
            leg: 0,
            copy: 0,
            spin,
        })
    }

    pub fn virtual_id(
        &self,
        site: &SiteIndex,
        species: Species,
        leg: usize,
        copy: usize,
        spin: usize,
    ) -> ModeId {
        self.index(&ModeIndex {
            site: *site,
            species,
            leg,
            copy,
            spin,
        })
    }

    /// All modes of one site in canonical order.
    pub fn site_modes(&self, site: &SiteIndex) -> Vec<ModeId> {
        let base = self.geometry.site_index(site) * self.per_site();
        (base..base + self.per_site()).map(ModeId).collect()
    }

    pub fn physical_modes(&self) -> Vec<ModeId> {
        let mut out = Vec::with_capacity(self.n_physical());
        for site in self.geometry.sites() {
            for a in 0..self.n_s {
                out.push(self.physical_id(&site, a));
            }
        }
        out
    }

    pub fn virtual_modes(&self) -> Vec<ModeId> {
        (0..self.n_modes())
            .map(ModeId)
            .filter(|&id| self.mode(id).species != Species::Physical)
            .collect()
    }
}

/// Every mode in canonical order.
pub fn enumerate_modes(layout: &ModeLayout) -> Vec<ModeIndex> {
    (0..layout.n_modes()).map(|i| layout.mode(ModeId(i))).collect()
}
