//! On-disk pairing states.
//!
//! The text encoding is a `#`-free header followed by the matrices row by row,
//! each complex entry written as `re im` with 17 significant digits so that a
//! reload reproduces every bit. The binary encoding stores the same fields as
//! little-endian integers and doubles after the magic `GPEPSBIN`.
//!
//! ```text
//! gpeps-state 1
//! dim 2
//! extent 4 4
//! spacing 1
//! n_s 1
//! modes 16
//! order 0 1 2 ... 15
//! pairing
//! <16 lines of 16 "re im" pairs>
//! covariance 32          (optional)
//! <32 lines of 32 reals>
//! end
//! ```

use crate::error::{Error, Result};
use crate::gaussian::PairingState;
use crate::lattice::{LatticeGeometry, ModeId, ModeLayout};
use faer::Mat;
use num_complex::Complex64 as C64;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

const TEXT_MAGIC: &str = "gpeps-state";
const BINARY_MAGIC: &[u8; 8] = b"GPEPSBIN";
const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Encoding {
    #[default]
    Text,
    Binary,
}

/// A pairing state on a physical layout, with an optional Majorana
/// covariance matrix of the same modes.
#[derive(Clone, Debug)]
pub struct StateFile {
    pub layout: ModeLayout,
    pub state: PairingState,
    pub covariance: Option<Mat<f64>>,
}

impl StateFile {
    pub fn new(layout: ModeLayout, state: PairingState) -> Self {
        StateFile {
            layout,
            state,
            covariance: None,
        }
    }

    pub fn with_covariance(mut self, gamma: Mat<f64>) -> Self {
        self.covariance = Some(gamma);
        self
    }

    pub fn save(&self, path: &Path, encoding: Encoding) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        match encoding {
            Encoding::Text => self.write_text(&mut w)?,
            Encoding::Binary => self.write_binary(&mut w)?,
        }
        w.flush()?;
        Ok(())
    }

    /// Reads either encoding, telling them apart by the leading bytes.
    pub fn load(path: &Path) -> Result<StateFile> {
        let mut r = BufReader::new(File::open(path)?);
        let head = r.fill_buf()?;
        if head.starts_with(BINARY_MAGIC) {
            Self::read_binary(&mut r)
        } else {
            Self::read_text(&mut r)
        }
    }

    pub fn write_text<W: Write>(&self, w: &mut W) -> Result<()> {
        let g = &self.layout.geometry;
        writeln!(w, "{TEXT_MAGIC} {VERSION}")?;
        writeln!(w, "dim {}", g.dim())?;
        let ext: Vec<String> = g.extent().iter().map(|e| e.to_string()).collect();
        writeln!(w, "extent {}", ext.join(" "))?;
        writeln!(w, "spacing {:.16e}", g.spacing())?;
        writeln!(w, "n_s {}", self.layout.n_s)?;
        let n = self.state.len();
        writeln!(w, "modes {n}")?;
        let ids: Vec<String> = self.state.modes().iter().map(|m| m.0.to_string()).collect();
        writeln!(w, "order {}", ids.join(" "))?;
        writeln!(w, "pairing")?;
        let t = self.state.matrix();
        for i in 0..n {
            let row: Vec<String> = (0..n)
                .map(|j| format!("{:.16e} {:.16e}", t[(i, j)].re, t[(i, j)].im))
                .collect();
            writeln!(w, "{}", row.join(" "))?;
        }
        if let Some(gamma) = &self.covariance {
            writeln!(w, "covariance {}", gamma.nrows())?;
            for i in 0..gamma.nrows() {
                let row: Vec<String> =
                    (0..gamma.ncols()).map(|j| format!("{:.16e}", gamma[(i, j)])).collect();
                writeln!(w, "{}", row.join(" "))?;
            }
        }
        writeln!(w, "end")?;
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: &mut R) -> Result<StateFile> {
        let mut lines = r.lines();
        let mut next = |what: &str| -> Result<String> {
            lines
                .next()
                .ok_or_else(|| Error::Format(format!("file ends before {what}")))?
                .map_err(Error::from)
        };
        let magic = next("header")?;
        let version: u32 = field(&magic, TEXT_MAGIC)?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let dim: usize = field(&next("dim")?, "dim")?;
        let extent: Vec<usize> = fields(&next("extent")?, "extent")?;
        let spacing: f64 = field(&next("spacing")?, "spacing")?;
        let n_s: usize = field(&next("n_s")?, "n_s")?;
        let n: usize = field(&next("modes")?, "modes")?;
        let order: Vec<usize> = fields(&next("order")?, "order")?;
        if order.len() != n {
            return Err(Error::Format(format!("order lists {} of {n} modes", order.len())));
        }
        if next("pairing")?.trim() != "pairing" {
            return Err(Error::Format("expected pairing section".into()));
        }
        let mut t = Mat::<C64>::zeros(n, n);
        for i in 0..n {
            let vals = parse_reals(&next("pairing row")?)?;
            if vals.len() != 2 * n {
                return Err(Error::Format(format!(
                    "pairing row {i} has {} numbers, expected {}",
                    vals.len(),
                    2 * n
                )));
            }
            for j in 0..n {
                t[(i, j)] = C64::new(vals[2 * j], vals[2 * j + 1]);
            }
        }
        let mut covariance = None;
        let line = next("end")?;
        if line.starts_with("covariance") {
            let k: usize = field(&line, "covariance")?;
            let mut gamma = Mat::<f64>::zeros(k, k);
            for i in 0..k {
                let vals = parse_reals(&next("covariance row")?)?;
                if vals.len() != k {
                    return Err(Error::Format(format!("covariance row {i} has {} numbers", vals.len())));
                }
                for (j, v) in vals.into_iter().enumerate() {
                    gamma[(i, j)] = v;
                }
            }
            covariance = Some(gamma);
            if next("end")?.trim() != "end" {
                return Err(Error::Format("expected end".into()));
            }
        } else if line.trim() != "end" {
            return Err(Error::Format(format!("unexpected line {line:?}")));
        }
        build(dim, &extent, spacing, n_s, order, t, covariance)
    }

    pub fn write_binary<W: Write>(&self, w: &mut W) -> Result<()> {
        let g = &self.layout.geometry;
        w.write_all(BINARY_MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        put_u64(w, g.dim() as u64)?;
        for &e in g.extent() {
            put_u64(w, e as u64)?;
        }
        w.write_all(&g.spacing().to_le_bytes())?;
        put_u64(w, self.layout.n_s as u64)?;
        let n = self.state.len();
        put_u64(w, n as u64)?;
        for m in self.state.modes() {
            put_u64(w, m.0 as u64)?;
        }
        let t = self.state.matrix();
        for i in 0..n {
            for j in 0..n {
                w.write_all(&t[(i, j)].re.to_le_bytes())?;
                w.write_all(&t[(i, j)].im.to_le_bytes())?;
            }
        }
        match &self.covariance {
            Some(gamma) => {
                put_u64(w, gamma.nrows() as u64)?;
                for i in 0..gamma.nrows() {
                    for j in 0..gamma.ncols() {
                        w.write_all(&gamma[(i, j)].to_le_bytes())?;
                    }
                }
            }
            None => put_u64(w, 0)?,
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(r: &mut R) -> Result<StateFile> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != BINARY_MAGIC {
            return Err(Error::Format("missing binary magic".into()));
        }
        let mut v = [0u8; 4];
        r.read_exact(&mut v)?;
        let version = u32::from_le_bytes(v);
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let dim = get_u64(r)? as usize;
        if dim > 3 {
            return Err(Error::Format(format!("dimension {dim}")));
        }
        let extent: Vec<usize> = (0..dim).map(|_| get_u64(r).map(|e| e as usize)).collect::<Result<_>>()?;
        let spacing = get_f64(r)?;
        let n_s = get_u64(r)? as usize;
        let n = get_u64(r)? as usize;
        let order: Vec<usize> = (0..n).map(|_| get_u64(r).map(|e| e as usize)).collect::<Result<_>>()?;
        let mut t = Mat::<C64>::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let re = get_f64(r)?;
                let im = get_f64(r)?;
                t[(i, j)] = C64::new(re, im);
            }
        }
        let k = get_u64(r)? as usize;
        let covariance = if k == 0 {
            None
        } else {
            let mut gamma = Mat::<f64>::zeros(k, k);
            for i in 0..k {
                for j in 0..k {
                    gamma[(i, j)] = get_f64(r)?;
                }
            }
            Some(gamma)
        };
        build(dim, &extent, spacing, n_s, order, t, covariance)
    }
}

fn build(
    dim: usize,
    extent: &[usize],
    spacing: f64,
    n_s: usize,
    order: Vec<usize>,
    t: Mat<C64>,
    covariance: Option<Mat<f64>>,
) -> Result<StateFile> {
    let geometry = LatticeGeometry::new(dim, extent, spacing)?;
    let layout = ModeLayout::physical(geometry, n_s)?;
    if let Some(&bad) = order.iter().find(|&&m| m >= layout.n_modes()) {
        return Err(Error::Format(format!("mode {bad} outside the layout")));
    }
    if let Some(g) = &covariance {
        if g.nrows() != 2 * order.len() {
            return Err(Error::Format(format!(
                "covariance of size {} for {} modes",
                g.nrows(),
                order.len()
            )));
        }
    }
    let state = PairingState::new(order.into_iter().map(ModeId).collect(), t)?;
    Ok(StateFile {
        layout,
        state,
        covariance,
    })
}

fn field<T: std::str::FromStr>(line: &str, key: &str) -> Result<T> {
    let mut it = line.split_whitespace();
    if it.next() != Some(key) {
        return Err(Error::Format(format!("expected `{key}`, found {line:?}")));
    }
    let v = it
        .next()
        .ok_or_else(|| Error::Format(format!("`{key}` has no value")))?;
    v.parse()
        .map_err(|_| Error::Format(format!("bad value {v:?} for `{key}`")))
}

fn fields<T: std::str::FromStr>(line: &str, key: &str) -> Result<Vec<T>> {
    let mut it = line.split_whitespace();
    if it.next() != Some(key) {
        return Err(Error::Format(format!("expected `{key}`, found {line:?}")));
    }
    it.map(|v| {
        v.parse()
            .map_err(|_| Error::Format(format!("bad value {v:?} for `{key}`")))
    })
    .collect()
}

fn parse_reals(line: &str) -> Result<Vec<f64>> {
    line.split_whitespace()
        .map(|v| v.parse().map_err(|_| Error::Format(format!("bad number {v:?}"))))
        .collect()
}

fn put_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn get_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}
