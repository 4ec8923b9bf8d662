//! Experiment configuration: one TOML document per run.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use gpeps::dense::CMat;
use gpeps::hamiltonians::{
    naive_kspec, staggered_d2_kspec, staggered_d3_kspec, KSpec, NaiveBranch,
};
use gpeps::lattice::LatticeGeometry;
use gpeps::peps::FreeCoefficients;
use gpeps::statefile::Encoding;
use gpeps::{random, C64};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::failure::Failure;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    StaggeredD2,
    StaggeredD3,
    NaiveUpper,
    NaiveLower,
    CustomK,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    Vacuum,
    SymmetricD2,
    SymmetricD3Staggered,
    SymmetricD3Spinhalf,
    ExactConstruction,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub dim: usize,
    pub extent: Vec<usize>,
    #[serde(default = "one")]
    pub a: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub m: f64,
    /// Spin components of a `custom_k` model.
    #[serde(default)]
    pub n_s: Option<usize>,
    /// Translation-invariant `K_i` of a `custom_k` model: one `n_s x n_s`
    /// matrix per axis, entries as `[re, im]`.
    #[serde(default)]
    pub k: Option<Vec<Vec<Vec<[f64; 2]>>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyConfig {
    pub kind: FamilyKind,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub steps: Vec<usize>,
    /// Largest allowed `eps` is `min(a, 1/m) / eps_margin`.
    #[serde(default = "ten")]
    pub eps_margin: f64,
    #[serde(default = "one_usize")]
    pub n_c: usize,
    #[serde(default)]
    pub n_d: usize,
    /// Explicit `t` coefficients, one per c copy.
    #[serde(default)]
    pub t: Option<Vec<[f64; 2]>>,
    /// Explicit `tau` pattern values, one list per `(c, d)` pair.
    #[serde(default)]
    pub z: Option<Vec<Vec<[f64; 2]>>>,
    /// Half-width of the uniform draw used when coefficients are omitted.
    #[serde(default = "half")]
    pub scale: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default = "default_instances")]
    pub instances: usize,
    /// Rotation phase of the single-component no-go test, `[re, im]`.
    #[serde(default = "default_eta")]
    pub eta: [f64; 2],
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            instances: default_instances(),
            eta: default_eta(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Excluded from the hash: results do not depend on it.
    #[serde(default = "default_out", skip_serializing)]
    pub dir: PathBuf,
    #[serde(default)]
    pub binary: bool,
    #[serde(default)]
    pub covariance: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: default_out(),
            binary: false,
            covariance: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub geometry: GeometryConfig,
    pub model: ModelConfig,
    pub family: FamilyConfig,
    #[serde(default)]
    pub seed: u64,
    /// Excluded from the hash: results do not depend on it.
    #[serde(default, skip_serializing)]
    pub workers: usize,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn one() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}
fn ten() -> f64 {
    10.0
}
fn half() -> f64 {
    0.5
}
fn default_instances() -> usize {
    20
}
fn default_eta() -> [f64; 2] {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    [r, r]
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}

/// Tolerance names and defaults.
pub const DEFAULT_TOLERANCES: [(&str, f64); 8] = [
    ("pfaffian", 1e-10),
    ("oracle", 1e-9),
    ("j_relations", 1e-13),
    ("rotation", 1e-9),
    ("charge", 1e-12),
    ("energy", 1e-9),
    ("fidelity_excess", 1e-9),
    ("roundtrip", 1e-15),
];

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, Failure> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Failure::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies `--seed`, `--workers`, `--out` and `--tol` overrides; on
    /// error the config is left unchanged.
    pub fn apply_overrides(
        &mut self,
        seed: Option<u64>,
        workers: Option<usize>,
        out: Option<PathBuf>,
        tols: &[String],
    ) -> Result<(), Failure> {
        let mut next = self.clone();
        if let Some(s) = seed {
            next.seed = s;
        }
        if let Some(w) = workers {
            next.workers = w;
        }
        if let Some(o) = out {
            next.output.dir = o;
        }
        for t in tols {
            let (name, value) = t
                .split_once('=')
                .ok_or_else(|| Failure::Config(format!("--tol expects NAME=VALUE, got {t:?}")))?;
            let value: f64 = value
                .parse()
                .map_err(|_| Failure::Config(format!("tolerance {name} is not a number: {value:?}")))?;
            next.tolerances.insert(name.to_string(), value);
        }
        next.validate()?;
        *self = next;
        Ok(())
    }

    pub fn validate(&self) -> Result<(), Failure> {
        for (name, v) in &self.tolerances {
            if !DEFAULT_TOLERANCES.iter().any(|(n, _)| n == name) {
                return Err(Failure::Config(format!("unknown tolerance {name:?}")));
            }
            if !(v.is_finite() && *v >= 0.0) {
                return Err(Failure::Config(format!("tolerance {name} must be non-negative")));
            }
        }
        let geom = self.lattice()?;
        self.kspec_for(&geom)?;
        let f = &self.family;
        let need_dim = |d: usize| {
            if geom.dim() != d {
                Err(Failure::Config(format!("family {:?} needs dim {d}", f.kind)))
            } else {
                Ok(())
            }
        };
        match f.kind {
            FamilyKind::SymmetricD2 => need_dim(2)?,
            FamilyKind::SymmetricD3Staggered | FamilyKind::SymmetricD3Spinhalf => need_dim(3)?,
            FamilyKind::ExactConstruction => {
                let beta = f.beta.ok_or_else(|| Failure::Config("exact_construction needs beta".into()))?;
                if !(beta > 0.0 && beta.is_finite()) {
                    return Err(Failure::Config(format!("beta must be positive, got {beta}")));
                }
                if f.steps.is_empty() || f.steps.contains(&0) {
                    return Err(Failure::Config("steps must be a non-empty list of positive counts".into()));
                }
                if f.eps_margin.is_nan() || f.eps_margin < 1.0 {
                    return Err(Failure::Config("eps_margin must be at least 1".into()));
                }
            }
            FamilyKind::Vacuum => {}
        }
        if matches!(
            f.kind,
            FamilyKind::SymmetricD2 | FamilyKind::SymmetricD3Staggered | FamilyKind::SymmetricD3Spinhalf
        ) {
            if f.n_c == 0 {
                return Err(Failure::Config("n_c must be at least 1".into()));
            }
            self.coefficients()?;
        }
        if self.verify.instances == 0 {
            return Err(Failure::Config("verify.instances must be positive".into()));
        }
        Ok(())
    }

    pub fn tol(&self, name: &str) -> f64 {
        self.tolerances.get(name).copied().unwrap_or_else(|| {
            DEFAULT_TOLERANCES
                .iter()
                .find(|(n, _)| *n == name)
                .map(|(_, v)| *v)
                .expect("known tolerance")
        })
    }

    /// SHA-256 of the canonical JSON form, so formatting and key order in
    /// the TOML source do not matter.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serialises");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn lattice(&self) -> Result<LatticeGeometry, Failure> {
        let g = &self.geometry;
        LatticeGeometry::new(g.dim, &g.extent, g.a).map_err(|e| Failure::Config(e.to_string()))
    }

    pub fn kspec(&self) -> Result<KSpec, Failure> {
        self.kspec_for(&self.lattice()?)
    }

    fn kspec_for(&self, geom: &LatticeGeometry) -> Result<KSpec, Failure> {
        let m = &self.model;
        let cfg = |e: gpeps::Error| Failure::Config(e.to_string());
        match m.kind {
            ModelKind::StaggeredD2 => staggered_d2_kspec(geom, m.m).map_err(cfg),
            ModelKind::StaggeredD3 => staggered_d3_kspec(geom, m.m).map_err(cfg),
            ModelKind::NaiveUpper => naive_kspec(geom, m.m, NaiveBranch::Upper).map_err(cfg),
            ModelKind::NaiveLower => naive_kspec(geom, m.m, NaiveBranch::Lower).map_err(cfg),
            ModelKind::CustomK => {
                let n_s = m
                    .n_s
                    .ok_or_else(|| Failure::Config("custom_k needs n_s".into()))?;
                let k = m
                    .k
                    .as_ref()
                    .ok_or_else(|| Failure::Config("custom_k needs k".into()))?;
                if k.len() != geom.dim() {
                    return Err(Failure::Config(format!(
                        "custom_k lists {} matrices for {} axes",
                        k.len(),
                        geom.dim()
                    )));
                }
                let mats: Vec<CMat> = k
                    .iter()
                    .map(|rows| {
                        if rows.len() != n_s || rows.iter().any(|r| r.len() != n_s) {
                            return Err(Failure::Config(format!("custom_k matrices must be {n_s}x{n_s}")));
                        }
                        Ok(CMat::from_fn(n_s, n_s, |i, j| C64::new(rows[i][j][0], rows[i][j][1])))
                    })
                    .collect::<Result<_, _>>()?;
                KSpec::new(geom.clone(), n_s, m.m, |_, axis| mats[axis].clone()).map_err(cfg)
            }
        }
    }

    /// Tau pattern values per `(c, d)` pair of the configured family.
    pub fn per_pair(&self) -> usize {
        if self.geometry.dim == 2 {
            4
        } else {
            3
        }
    }

    /// Explicit coefficients when given, otherwise a draw from the seed.
    pub fn coefficients(&self) -> Result<FreeCoefficients, Failure> {
        let f = &self.family;
        let per_pair = self.per_pair();
        let c = |v: &[f64; 2]| C64::new(v[0], v[1]);
        match (&f.t, &f.z) {
            (None, None) => {
                let mut rng = random::rng(self.seed);
                Ok(FreeCoefficients::random(f.n_c, f.n_d, per_pair, f.scale, &mut rng))
            }
            (Some(t), z) => {
                if t.len() != f.n_c {
                    return Err(Failure::Config(format!("t lists {} values for n_c = {}", t.len(), f.n_c)));
                }
                let z = z.clone().unwrap_or_default();
                if z.len() != f.n_c * f.n_d || z.iter().any(|p| p.len() != per_pair) {
                    return Err(Failure::Config(format!(
                        "z needs {} lists of {per_pair} values",
                        f.n_c * f.n_d
                    )));
                }
                Ok(FreeCoefficients {
                    t: t.iter().map(c).collect(),
                    z: z.iter().map(|p| p.iter().map(c).collect()).collect(),
                })
            }
            (None, Some(_)) => Err(Failure::Config("z given without t".into())),
        }
    }

    pub fn encoding(&self) -> Encoding {
        if self.output.binary {
            Encoding::Binary
        } else {
            Encoding::Text
        }
    }

    pub fn eta(&self) -> C64 {
        C64::new(self.verify.eta[0], self.verify.eta[1])
    }
}
