//! Dense Fock-space oracle.
//!
//! Basis state `s` has mode `modes[k]` occupied when bit `k` is set and stands
//! for `a^+_{k1} a^+_{k2} ... |vac>` with `k1 < k2 < ...`. Used to check every
//! Gaussian identity in the crate on small systems.

use crate::dense::{self, CMat};
use crate::error::{Error, Result};
use crate::gaussian::{PairingState, QuadraticHamiltonian};
use crate::lattice::ModeId;
use faer::{Mat, Side};
use num_complex::Complex64 as C64;
use std::collections::HashMap;

/// Default cap on the number of modes of a dense state.
pub const MAX_MODES: usize = 14;

#[derive(Clone, Debug)]
pub struct FockState {
    modes: Vec<ModeId>,
    amps: Vec<C64>,
}

#[inline]
fn below(s: usize, k: usize) -> u32 {
    (s & ((1usize << k) - 1)).count_ones()
}

#[inline]
fn sign(parity: u32) -> f64 {
    if parity.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// `sum_pq A_pq a_p^+ a_q + 1/2 sum_pq C_pq a_p^+ a_q^+ + 1/2 sum_pq D_pq a_p a_q`.
#[derive(Clone, Debug)]
pub struct QuadraticOp {
    pub one_body: CMat,
    pub create: CMat,
    pub annihilate: CMat,
    pub constant: C64,
}

impl QuadraticOp {
    pub fn zero(m: usize) -> Self {
        QuadraticOp {
            one_body: dense::zeros(m, m),
            create: dense::zeros(m, m),
            annihilate: dense::zeros(m, m),
            constant: C64::new(0.0, 0.0),
        }
    }

    pub fn from_hamiltonian(h: &QuadraticHamiltonian) -> Self {
        let m = h.len();
        QuadraticOp {
            one_body: h.hopping().to_owned(),
            create: h.pairing().to_owned(),
            annihilate: Mat::from_fn(m, m, |p, q| -h.pairing()[(p, q)].conj()),
            constant: C64::new(h.constant(), 0.0),
        }
    }

    pub fn scaled(&self, s: C64) -> Self {
        QuadraticOp {
            one_body: dense::scale(self.one_body.as_ref(), s),
            create: dense::scale(self.create.as_ref(), s),
            annihilate: dense::scale(self.annihilate.as_ref(), s),
            constant: self.constant * s,
        }
    }

    fn bound(&self) -> f64 {
        let sum = |a: &CMat| -> f64 {
            let mut t = 0.0;
            for j in 0..a.ncols() {
                for i in 0..a.nrows() {
                    t += a[(i, j)].norm();
                }
            }
            t
        };
        sum(&self.one_body) + 0.5 * sum(&self.create) + 0.5 * sum(&self.annihilate)
            + self.constant.norm()
    }
}

impl FockState {
    pub fn vacuum(modes: Vec<ModeId>) -> Result<Self> {
        Self::vacuum_with_limit(modes, MAX_MODES)
    }

    pub fn vacuum_with_limit(modes: Vec<ModeId>, limit: usize) -> Result<Self> {
        if modes.len() > limit {
            return Err(Error::OracleSize {
                got: modes.len(),
                max: limit,
            });
        }
        let mut amps = vec![C64::new(0.0, 0.0); 1 << modes.len()];
        amps[0] = C64::new(1.0, 0.0);
        Ok(FockState { modes, amps })
    }

    /// `exp(1/2 a^+ T a^+)|vac> = prod_{p<q} (1 + T_pq a_p^+ a_q^+)|vac>`.
    pub fn from_pairing(state: &PairingState) -> Result<Self> {
        Self::from_pairing_with_limit(state, MAX_MODES)
    }

    pub fn from_pairing_with_limit(state: &PairingState, limit: usize) -> Result<Self> {
        let mut f = Self::vacuum_with_limit(state.modes().to_vec(), limit)?;
        let t = state.matrix();
        let m = state.len();
        for p in 0..m {
            for q in p + 1..m {
                if t[(p, q)] != C64::new(0.0, 0.0) {
                    f.apply_pair_creation(p, q, t[(p, q)]);
                }
            }
        }
        Ok(f)
    }

    pub fn modes(&self) -> &[ModeId] {
        &self.modes
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn amplitude(&self, s: usize) -> C64 {
        self.amps[s]
    }

    pub fn position(&self, mode: ModeId) -> Option<usize> {
        self.modes.iter().position(|&m| m == mode)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn normalize(&mut self) {
        let n = self.norm_sqr().sqrt();
        if n > 0.0 {
            for a in &mut self.amps {
                *a /= n;
            }
        }
    }

    pub fn scale(&mut self, s: C64) {
        for a in &mut self.amps {
            *a *= s;
        }
    }

    /// `<self|other>`; `other` is first brought to the mode order of `self`.
    pub fn inner(&self, other: &FockState) -> Result<C64> {
        let other = if other.modes == self.modes {
            other.clone()
        } else {
            other.reordered(&self.modes)?
        };
        Ok(self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    pub fn fidelity(&self, other: &FockState) -> Result<f64> {
        let o = self.inner(other)?;
        Ok(o.norm_sqr() / (self.norm_sqr() * other.norm_sqr()))
    }

    /// `psi -> (1 + c a_p^+ a_q^+) psi` for positions `p != q`.
    pub fn apply_pair_creation(&mut self, p: usize, q: usize, c: C64) {
        let (bp, bq) = (1usize << p, 1usize << q);
        for s in 0..self.amps.len() {
            if s & (bp | bq) != 0 {
                continue;
            }
            let a = self.amps[s];
            if a == C64::new(0.0, 0.0) {
                continue;
            }
            let sq = below(s, q);
            let sp = below(s | bq, p);
            self.amps[s | bp | bq] += c * sign(sq + sp) * a;
        }
    }

    /// `psi -> (1 + c a_p a_q) psi` for positions `p != q`.
    pub fn apply_pair_annihilation(&mut self, p: usize, q: usize, c: C64) {
        let (bp, bq) = (1usize << p, 1usize << q);
        for s in 0..self.amps.len() {
            if s & bp == 0 || s & bq == 0 {
                continue;
            }
            let a = self.amps[s];
            if a == C64::new(0.0, 0.0) {
                continue;
            }
            let sq = below(s, q);
            let sp = below(s ^ bq, p);
            self.amps[s ^ bp ^ bq] += c * sign(sq + sp) * a;
        }
    }

    /// `psi -> prod_p w_p^{n_p} psi`.
    pub fn apply_occupation_weights(&mut self, w: &[C64]) {
        assert_eq!(w.len(), self.modes.len());
        for (s, a) in self.amps.iter_mut().enumerate() {
            let mut f = C64::new(1.0, 0.0);
            for (k, wk) in w.iter().enumerate() {
                if s >> k & 1 == 1 {
                    f *= wk;
                }
            }
            *a *= f;
        }
    }

    pub fn apply_quadratic(&self, op: &QuadraticOp) -> FockState {
        let m = self.modes.len();
        let mut out = vec![C64::new(0.0, 0.0); self.amps.len()];
        for (s, &a) in self.amps.iter().enumerate() {
            if a == C64::new(0.0, 0.0) {
                continue;
            }
            out[s] += op.constant * a;
            for q in 0..m {
                if s >> q & 1 == 0 {
                    continue;
                }
                let s1 = s ^ (1 << q);
                let sq = below(s, q);
                for p in 0..m {
                    let c = op.one_body[(p, q)];
                    if c == C64::new(0.0, 0.0) || s1 >> p & 1 == 1 {
                        continue;
                    }
                    let sp = below(s1, p);
                    out[s1 | (1 << p)] += c * sign(sq + sp) * a;
                }
            }
            for p in 0..m {
                for q in p + 1..m {
                    let c = op.create[(p, q)];
                    if c != C64::new(0.0, 0.0) && s >> p & 1 == 0 && s >> q & 1 == 0 {
                        let sq = below(s, q);
                        let sp = below(s | 1 << q, p);
                        out[s | 1 << p | 1 << q] += c * sign(sq + sp) * a;
                    }
                    let d = op.annihilate[(p, q)];
                    if d != C64::new(0.0, 0.0) && s >> p & 1 == 1 && s >> q & 1 == 1 {
                        let sq = below(s, q);
                        let sp = below(s ^ 1 << q, p);
                        out[s ^ 1 << p ^ 1 << q] += d * sign(sq + sp) * a;
                    }
                }
            }
        }
        FockState {
            modes: self.modes.clone(),
            amps: out,
        }
    }

    /// `exp(op) psi` by scaled Taylor series.
    pub fn apply_exp(&self, op: &QuadraticOp) -> FockState {
        let steps = op.bound().ceil().max(1.0) as usize;
        let small = op.scaled(C64::new(1.0 / steps as f64, 0.0));
        let mut cur = self.clone();
        for _ in 0..steps {
            let mut acc = cur.clone();
            let mut term = cur;
            let scale = acc.norm_sqr().sqrt().max(1e-300);
            for k in 1..200 {
                term = term.apply_quadratic(&small);
                term.scale(C64::new(1.0 / k as f64, 0.0));
                for (a, t) in acc.amps.iter_mut().zip(&term.amps) {
                    *a += t;
                }
                if term.norm_sqr().sqrt() < 1e-17 * scale {
                    break;
                }
            }
            cur = acc;
        }
        cur
    }

    pub fn apply_hamiltonian(&self, h: &QuadraticHamiltonian) -> FockState {
        self.apply_quadratic(&QuadraticOp::from_hamiltonian(h))
    }

    pub fn expectation(&self, h: &QuadraticHamiltonian) -> Result<f64> {
        let hpsi = self.reordered(h.modes())?.apply_hamiltonian(h);
        Ok(hpsi.inner(self)?.conj().re / self.norm_sqr())
    }

    /// Appends empty modes.
    pub fn add_modes(&mut self, new: &[ModeId], limit: usize) -> Result<()> {
        let m = self.modes.len() + new.len();
        if m > limit {
            return Err(Error::OracleSize { got: m, max: limit });
        }
        self.modes.extend_from_slice(new);
        self.amps.resize(1 << m, C64::new(0.0, 0.0));
        Ok(())
    }

    /// Keeps the component in which the given modes are empty and removes them.
    pub fn project_empty(&mut self, drop: &[ModeId]) -> Result<()> {
        let pos: Vec<usize> = drop
            .iter()
            .map(|m| {
                self.position(*m)
                    .ok_or_else(|| Error::ModeMismatch(format!("mode {} not present", m.0)))
            })
            .collect::<Result<_>>()?;
        let mask: usize = pos.iter().map(|&p| 1usize << p).sum();
        let keep: Vec<usize> = (0..self.modes.len()).filter(|k| mask >> k & 1 == 0).collect();
        let mut amps = vec![C64::new(0.0, 0.0); 1 << keep.len()];
        for (t, a) in amps.iter_mut().enumerate() {
            let mut s = 0usize;
            for (j, &k) in keep.iter().enumerate() {
                if t >> j & 1 == 1 {
                    s |= 1 << k;
                }
            }
            *a = self.amps[s];
        }
        self.modes = keep.iter().map(|&k| self.modes[k]).collect();
        self.amps = amps;
        Ok(())
    }

    /// Same amplitudes with every mode renamed, position by position.
    pub fn relabeled(self, modes: Vec<ModeId>) -> Result<FockState> {
        if modes.len() != self.modes.len() {
            return Err(Error::ModeMismatch(format!(
                "relabel {} modes with {} names",
                self.modes.len(),
                modes.len()
            )));
        }
        Ok(FockState {
            modes,
            amps: self.amps,
        })
    }

    /// Same vector with modes listed in `order`.
    pub fn reordered(&self, order: &[ModeId]) -> Result<FockState> {
        if order.len() != self.modes.len() {
            return Err(Error::ModeMismatch(format!(
                "reorder {} modes into {}",
                self.modes.len(),
                order.len()
            )));
        }
        let newpos: HashMap<ModeId, usize> =
            order.iter().enumerate().map(|(i, &m)| (m, i)).collect();
        let map: Vec<usize> = self
            .modes
            .iter()
            .map(|m| {
                newpos
                    .get(m)
                    .copied()
                    .ok_or_else(|| Error::ModeMismatch(format!("mode {} not present", m.0)))
            })
            .collect::<Result<_>>()?;
        let mut amps = vec![C64::new(0.0, 0.0); self.amps.len()];
        let mut seen = Vec::with_capacity(self.modes.len());
        for (s, &a) in self.amps.iter().enumerate() {
            if a == C64::new(0.0, 0.0) {
                continue;
            }
            seen.clear();
            let mut t = 0usize;
            let mut inv = 0u32;
            for (k, &np) in map.iter().enumerate() {
                if s >> k & 1 == 1 {
                    inv += seen.iter().filter(|&&x| x > np).count() as u32;
                    seen.push(np);
                    t |= 1 << np;
                }
            }
            amps[t] = sign(inv) * a;
        }
        Ok(FockState {
            modes: order.to_vec(),
            amps,
        })
    }
}

/// `<B|_V psi` for a pairing state `B` on a subset `V` of the modes of
/// `state`: applies `prod_{u<v} (1 + conj(B_uv) b_v b_u)` and keeps the
/// component with `V` empty.
pub fn project_bond(state: &FockState, bond: &PairingState) -> Result<FockState> {
    let mut out = state.clone();
    let pos: Vec<usize> = bond
        .modes()
        .iter()
        .map(|m| {
            state
                .position(*m)
                .ok_or_else(|| Error::ModeMismatch(format!("bond mode {} not present", m.0)))
        })
        .collect::<Result<_>>()?;
    let b = bond.matrix();
    for u in 0..bond.len() {
        for v in u + 1..bond.len() {
            if b[(u, v)] != C64::new(0.0, 0.0) {
                out.apply_pair_annihilation(pos[v], pos[u], b[(u, v)].conj());
            }
        }
    }
    out.project_empty(bond.modes())?;
    Ok(out)
}

/// `<B|_V exp(1/2 a^+ T a^+)|vac>` without ever holding all modes at once.
///
/// The pair-creation factors of `joint` commute, so each bond factor of `bond`
/// is applied as soon as every creation factor touching its two modes is in,
/// and a bond mode is projected out once nothing else touches it. Bond factors
/// are taken greedily by the number of modes they would add. At most `limit`
/// modes are live at any time. The result lists the non-bond modes of
/// `joint` in their original order.
pub fn network_contract(
    joint: &PairingState,
    bond: &PairingState,
    limit: usize,
) -> Result<FockState> {
    let n = joint.len();
    let jpos = joint.positions();
    let mut is_bond = vec![false; n];
    let mut bpos = Vec::with_capacity(bond.len());
    for m in bond.modes() {
        let &i = jpos
            .get(m)
            .ok_or_else(|| Error::ModeMismatch(format!("bond mode {} not in joint", m.0)))?;
        is_bond[i] = true;
        bpos.push(i);
    }
    let t = joint.matrix();
    let mut creation = Vec::new();
    for p in 0..n {
        for q in p + 1..n {
            if t[(p, q)] != C64::new(0.0, 0.0) {
                creation.push((p, q, t[(p, q)]));
            }
        }
    }
    let b = bond.matrix();
    let mut bonds = Vec::new();
    for u in 0..bond.len() {
        for v in u + 1..bond.len() {
            if b[(u, v)] != C64::new(0.0, 0.0) {
                bonds.push((bpos[u], bpos[v], b[(u, v)]));
            }
        }
    }
    let mut touching = vec![Vec::new(); n];
    let mut pending = vec![0usize; n];
    for (k, &(p, q, _)) in creation.iter().enumerate() {
        touching[p].push(k);
        touching[q].push(k);
        pending[p] += 1;
        pending[q] += 1;
    }
    for &(u, v, _) in &bonds {
        pending[u] += 1;
        pending[v] += 1;
    }

    let mut net = Network {
        state: FockState::vacuum_with_limit(Vec::new(), limit)?,
        present: vec![false; n],
        applied: vec![false; creation.len()],
        pending,
        limit,
        modes: joint.modes().to_vec(),
    };
    let mut remaining: Vec<usize> = (0..bonds.len()).collect();
    while !remaining.is_empty() {
        let cost = |k: usize| -> usize {
            let (u, v, _) = bonds[k];
            let mut new: Vec<usize> = Vec::new();
            for &w in &[u, v] {
                if !net.present[w] && !new.contains(&w) {
                    new.push(w);
                }
                for &c in &touching[w] {
                    if net.applied[c] {
                        continue;
                    }
                    let (p, q, _) = creation[c];
                    for r in [p, q] {
                        if !net.present[r] && !new.contains(&r) {
                            new.push(r);
                        }
                    }
                }
            }
            new.len()
        };
        let (slot, _) = remaining
            .iter()
            .enumerate()
            .min_by_key(|&(_, &k)| cost(k))
            .expect("non-empty");
        let k = remaining.remove(slot);
        let (u, v, val) = bonds[k];
        for w in [u, v] {
            for &c in &touching[w] {
                net.apply_creation(c, creation[c])?;
            }
        }
        net.ensure(u)?;
        net.ensure(v)?;
        let (pu, pv) = (net.pos(u), net.pos(v));
        net.state.apply_pair_annihilation(pv, pu, val.conj());
        net.pending[u] -= 1;
        net.pending[v] -= 1;
        net.drop_finished(&is_bond)?;
    }
    for (c, &f) in creation.iter().enumerate() {
        net.apply_creation(c, f)?;
    }
    net.drop_finished(&is_bond)?;
    let physical: Vec<ModeId> = (0..n)
        .filter(|&i| !is_bond[i])
        .map(|i| joint.modes()[i])
        .collect();
    let missing: Vec<ModeId> = (0..n)
        .filter(|&i| !is_bond[i] && !net.present[i])
        .map(|i| joint.modes()[i])
        .collect();
    net.state.add_modes(&missing, limit.max(physical.len()))?;
    net.state.reordered(&physical)
}

struct Network {
    state: FockState,
    present: Vec<bool>,
    applied: Vec<bool>,
    pending: Vec<usize>,
    limit: usize,
    modes: Vec<ModeId>,
}

impl Network {
    fn pos(&self, i: usize) -> usize {
        self.state.position(self.modes[i]).expect("present mode")
    }

    fn ensure(&mut self, i: usize) -> Result<()> {
        if !self.present[i] {
            self.state.add_modes(&[self.modes[i]], self.limit)?;
            self.present[i] = true;
        }
        Ok(())
    }

    fn apply_creation(&mut self, c: usize, (p, q, val): (usize, usize, C64)) -> Result<()> {
        if self.applied[c] {
            return Ok(());
        }
        self.ensure(p)?;
        self.ensure(q)?;
        let (pp, pq) = (self.pos(p), self.pos(q));
        self.state.apply_pair_creation(pp, pq, val);
        self.applied[c] = true;
        self.pending[p] -= 1;
        self.pending[q] -= 1;
        Ok(())
    }

    fn drop_finished(&mut self, is_bond: &[bool]) -> Result<()> {
        let done: Vec<usize> = (0..self.modes.len())
            .filter(|&i| is_bond[i] && self.present[i] && self.pending[i] == 0)
            .collect();
        if done.is_empty() {
            return Ok(());
        }
        let ids: Vec<ModeId> = done.iter().map(|&i| self.modes[i]).collect();
        self.state.project_empty(&ids)?;
        for i in done {
            self.present[i] = false;
        }
        Ok(())
    }
}

/// Ground state of a quadratic Hamiltonian in Fock space: dense
/// diagonalisation up to 9 modes, Lanczos above.
pub fn ground_state(h: &QuadraticHamiltonian) -> Result<(f64, FockState)> {
    let m = h.len();
    if m > MAX_MODES {
        return Err(Error::OracleSize {
            got: m,
            max: MAX_MODES,
        });
    }
    let dim = 1usize << m;
    let basis = |s: usize| {
        let mut amps = vec![C64::new(0.0, 0.0); dim];
        amps[s] = C64::new(1.0, 0.0);
        FockState {
            modes: h.modes().to_vec(),
            amps,
        }
    };
    if m <= 9 {
        let mut mat = dense::zeros(dim, dim);
        for s in 0..dim {
            let col = basis(s).apply_hamiltonian(h);
            for (r, v) in col.amps.iter().enumerate() {
                mat[(r, s)] = *v;
            }
        }
        let evd = mat
            .self_adjoint_eigen(Side::Lower)
            .map_err(|_| Error::Precondition("eigensolver failed".into()))?;
        let e0 = evd.S().column_vector()[0].re;
        let u = evd.U();
        let amps = (0..dim).map(|i| u[(i, 0)]).collect();
        return Ok((
            e0,
            FockState {
                modes: h.modes().to_vec(),
                amps,
            },
        ));
    }
    lanczos(h)
}

fn lanczos(h: &QuadraticHamiltonian) -> Result<(f64, FockState)> {
    let dim = 1usize << h.len();
    let kmax = 300.min(dim);
    let mut vs: Vec<Vec<C64>> = Vec::new();
    let mut alpha = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut v: Vec<C64> = (0..dim)
        .map(|i| C64::new(1.0 + (i % 7) as f64 * 0.1, (i % 3) as f64 * 0.05))
        .collect();
    let nrm = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= nrm);
    let mut prev_e = f64::INFINITY;
    let mut result = None;
    for k in 0..kmax {
        let st = FockState {
            modes: h.modes().to_vec(),
            amps: v.clone(),
        };
        let mut w = st.apply_hamiltonian(h).amps;
        let a: f64 = v.iter().zip(&w).map(|(x, y)| (x.conj() * y).re).sum();
        alpha.push(a);
        vs.push(v.clone());
        for _ in 0..2 {
            for u in &vs {
                let c: C64 = u.iter().zip(&w).map(|(x, y)| x.conj() * y).sum();
                w.iter_mut().zip(u).for_each(|(y, x)| *y -= c * x);
            }
        }
        let b = w.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        let n = alpha.len();
        let tri = Mat::from_fn(n, n, |i, j| {
            if i == j {
                C64::new(alpha[i], 0.0)
            } else if i + 1 == j {
                C64::new(beta[i], 0.0)
            } else if j + 1 == i {
                C64::new(beta[j], 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        let evd = tri
            .self_adjoint_eigen(Side::Lower)
            .map_err(|_| Error::Precondition("eigensolver failed".into()))?;
        let e0 = evd.S().column_vector()[0].re;
        let converged = (e0 - prev_e).abs() < 1e-13 * e0.abs().max(1.0) || b < 1e-12;
        if converged || k + 1 == kmax {
            let y = evd.U();
            let mut amps = vec![C64::new(0.0, 0.0); dim];
            for (j, u) in vs.iter().enumerate() {
                let c = y[(j, 0)];
                amps.iter_mut().zip(u).for_each(|(a, x)| *a += c * x);
            }
            result = Some((
                e0,
                FockState {
                    modes: h.modes().to_vec(),
                    amps,
                },
            ));
            break;
        }
        prev_e = e0;
        beta.push(b);
        v = w.into_iter().map(|x| x / b).collect();
    }
    result.ok_or_else(|| Error::Precondition("lanczos produced no estimate".into()))
}

/// Imaginary-time evolution `S^N |vac>` with the three-factor step
/// `S = exp(-e P^+) exp(-e D) exp(-e P)`, where `D` is the number-conserving
/// part of `H`, `P^+` its pair-creation part and `e = beta / N`. The result is
/// not normalised.
pub fn imaginary_time_ground_state(
    h: &QuadraticHamiltonian,
    beta: f64,
    n_steps: usize,
) -> Result<FockState> {
    if n_steps == 0 || beta <= 0.0 {
        return Err(Error::Validation("need beta > 0 and at least one step".into()));
    }
    let m = h.len();
    let eps = C64::new(-beta / n_steps as f64, 0.0);
    let full = QuadraticOp::from_hamiltonian(h);
    let mut pc = QuadraticOp::zero(m);
    pc.create = full.create.clone();
    let mut pa = QuadraticOp::zero(m);
    pa.annihilate = full.annihilate.clone();
    let mut d = QuadraticOp::zero(m);
    d.one_body = full.one_body.clone();
    let (pc, pa, d) = (pc.scaled(eps), pa.scaled(eps), d.scaled(eps));
    let mut psi = FockState::vacuum(h.modes().to_vec())?;
    for _ in 0..n_steps {
        psi = psi.apply_exp(&pa);
        psi = psi.apply_exp(&d);
        psi = psi.apply_exp(&pc);
    }
    Ok(psi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::from_real;
    use crate::gaussian::{bcs_overlap, DEFAULT_GAP_TOL};
    use crate::random;

    fn ids(n: usize) -> Vec<ModeId> {
        (0..n).map(ModeId).collect()
    }

    #[test]
    fn cap_is_enforced() {
        assert!(matches!(
            FockState::vacuum(ids(15)),
            Err(Error::OracleSize { got: 15, max: 14 })
        ));
    }

    #[test]
    fn pair_creation_and_annihilation_are_adjoint() {
        let mut rng = random::rng(17);
        let s = random::pairing(&ids(5), 0.7, &mut rng);
        let a = FockState::from_pairing(&s).unwrap();
        let b = FockState::from_pairing(&random::pairing(&ids(5), 0.7, &mut rng)).unwrap();
        let c = C64::new(0.3, -0.4);
        let mut a2 = a.clone();
        a2.apply_pair_creation(1, 3, c);
        let mut b2 = b.clone();
        b2.apply_pair_annihilation(3, 1, c.conj());
        let lhs = b.inner(&a2).unwrap();
        let rhs = b2.inner(&a).unwrap();
        assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn pairing_overlap_matches_gaussian_formula() {
        let mut rng = random::rng(18);
        for m in [2, 4, 5, 7] {
            let a = random::pairing(&ids(m), 0.9, &mut rng);
            let b = random::pairing(&ids(m), 0.9, &mut rng);
            let fa = FockState::from_pairing(&a).unwrap();
            let fb = FockState::from_pairing(&b).unwrap();
            let o = fa.inner(&fb).unwrap();
            let g = bcs_overlap(&a, &b).unwrap();
            assert!((o - g).norm() < 1e-11 * o.norm().max(1.0), "m={m}: {o} vs {g}");
        }
    }

    #[test]
    fn reordering_is_consistent_with_pairing_relabel() {
        let mut rng = random::rng(19);
        let a = random::pairing(&ids(5), 1.0, &mut rng);
        let order = vec![ModeId(4), ModeId(2), ModeId(0), ModeId(3), ModeId(1)];
        let f1 = FockState::from_pairing(&a).unwrap().reordered(&order).unwrap();
        let f2 = FockState::from_pairing(&a.reordered(&order).unwrap()).unwrap();
        for (x, y) in f1.amplitudes().iter().zip(f2.amplitudes()) {
            assert!((x - y).norm() < 1e-13);
        }
    }

    #[test]
    fn ground_state_pairing_matches_dense_diagonalisation() {
        let mut rng = random::rng(20);
        for m in [3, 6, 10] {
            let h = random::gapped_hamiltonian(&ids(m), 1.0, 0.2, &mut rng);
            let (e0, psi) = ground_state(&h).unwrap();
            assert!((e0 - h.ground_energy()).abs() < 1e-9, "m={m}");
            let gs = h.ground_state_pairing(DEFAULT_GAP_TOL).unwrap();
            let f = FockState::from_pairing(&gs).unwrap();
            assert!(f.fidelity(&psi).unwrap() > 1.0 - 1e-9, "m={m}");
        }
    }

    #[test]
    fn energy_and_variance_match_fock_expectations() {
        let mut rng = random::rng(21);
        let h = random::gapped_hamiltonian(&ids(5), 1.0, 0.1, &mut rng);
        let s = random::pairing(&ids(5), 0.6, &mut rng);
        let f = FockState::from_pairing(&s).unwrap();
        let e = f.expectation(&h).unwrap();
        assert!((e - h.energy_expectation(&s).unwrap()).abs() < 1e-11);
        let hf = f.apply_hamiltonian(&h);
        let e2 = hf.norm_sqr() / f.norm_sqr();
        let var = e2 - e * e;
        assert!((var - h.energy_variance(&s).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn covariance_correlations_match_fock() {
        use crate::gaussian::Correlations;
        let mut rng = random::rng(22);
        let s = random::pairing(&ids(4), 0.8, &mut rng);
        let f = FockState::from_pairing(&s).unwrap();
        let c = Correlations::from_pairing(&s);
        let n = f.norm_sqr();
        for p in 0..4 {
            for q in 0..4 {
                // <a_q^+ a_p>
                let mut op = QuadraticOp::zero(4);
                op.one_body[(q, p)] = C64::new(1.0, 0.0);
                let v = f.inner(&f.apply_quadratic(&op)).unwrap() / n;
                assert!((v - c.rho[(p, q)]).norm() < 1e-12);
                if p != q {
                    // <a_q a_p> = 1/2 sum D a a with D_qp = 1, D_pq = -1
                    let mut op = QuadraticOp::zero(4);
                    op.annihilate[(q, p)] = C64::new(1.0, 0.0);
                    op.annihilate[(p, q)] = C64::new(-1.0, 0.0);
                    let v = f.inner(&f.apply_quadratic(&op)).unwrap() / n;
                    assert!((v - c.kappa[(p, q)]).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn exponential_of_pair_creation_is_exact() {
        let mut op = QuadraticOp::zero(2);
        op.create = from_real(2, 2, &[0.0, 0.4, -0.4, 0.0]);
        let psi = FockState::vacuum(ids(2)).unwrap().apply_exp(&op);
        assert!((psi.amplitude(0b11) - C64::new(0.4, 0.0)).norm() < 1e-15);
        assert!((psi.amplitude(0) - C64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn imaginary_time_converges_to_ground_state() {
        // Two modes, weak pairing: gap 2 sqrt(m^2 + g^2).
        let (m, g) = (1.0, 0.05);
        let h = QuadraticHamiltonian::new(
            ids(2),
            from_real(2, 2, &[m, 0.0, 0.0, m]),
            from_real(2, 2, &[0.0, g, -g, 0.0]),
            0.0,
        )
        .unwrap();
        let gap = h.spectrum().min_excitation();
        let psi = imaginary_time_ground_state(&h, 20.0 / gap, 2000).unwrap();
        let (_, exact) = ground_state(&h).unwrap();
        assert!(psi.fidelity(&exact).unwrap() > 1.0 - 1e-6);
    }

    #[test]
    fn project_and_add_modes() {
        let mut rng = random::rng(23);
        let s = random::pairing(&ids(4), 0.8, &mut rng);
        let mut f = FockState::from_pairing(&s).unwrap();
        f.project_empty(&[ModeId(1), ModeId(2)]).unwrap();
        let sub = s.reordered(&[ModeId(0), ModeId(3), ModeId(1), ModeId(2)]).unwrap();
        let t03 = sub.matrix()[(0, 1)];
        assert!((f.amplitude(0b11) - t03).norm() < 1e-14);
        f.add_modes(&[ModeId(9)], 14).unwrap();
        assert_eq!(f.amplitudes().len(), 8);
        assert!(f.add_modes(&ids(14), 14).is_err());
    }
}
