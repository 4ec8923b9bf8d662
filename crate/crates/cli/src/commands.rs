//! Subcommand implementations.

use std::path::{Path, PathBuf};
use std::time::Instant;

use gpeps::dense::{self, CMat};
use gpeps::fock::{self, FockState};
use gpeps::gaussian::{bcs_overlap, fidelity, project_bonds, CovarianceMatrix, PairingState};
use gpeps::hamiltonians::{build_quadratic, exact_ground, KSpec};
use gpeps::lattice::{leg_permutation, LatticeGeometry, ModeId, ModeLayout, PermutationMatrix, Rotation};
use gpeps::par::{self, Exec};
use gpeps::peps::{
    contract, exact_construction_params_with, fock_contract, physical_layout, symmetric_params_d2,
    symmetric_params_d3_spinhalf, symmetric_params_d3_staggered, trotter_reference, ExactOptions,
    PepsParams,
};
use gpeps::pfaffian::pfaffian;
use gpeps::statefile::StateFile;
use gpeps::symmetry::{
    charge_residual, check_j_relations, four_rotation_product, no_go_spinless, rotation_residual,
    solve_t_constraint, solve_tau_constraint, PhysicalRotation,
};
use gpeps::random;

use crate::config::{ExperimentConfig, FamilyKind};
use crate::failure::Failure;
use crate::report::{Metric, Table, Timings};

/// Largest number of modes handed to the Fock oracle.
const ORACLE_MODES: usize = 12;

pub struct Context {
    pub cfg: ExperimentConfig,
    pub run_id: String,
    pub hash: String,
}

impl Context {
    pub fn new(cfg: ExperimentConfig) -> Self {
        let hash = cfg.hash();
        let run_id = hash[..12].to_string();
        Context { cfg, run_id, hash }
    }

    fn out_dir(&self) -> Result<PathBuf, Failure> {
        let dir = self.cfg.output.dir.clone();
        std::fs::create_dir_all(&dir)?;
        Ok(dir)
    }

    fn metric_table(&self) -> Table {
        Table::new(
            "metrics",
            &["run_id", "config_hash", "check", "metric", "value", "tolerance", "status"],
        )
    }

    fn push_metrics(&self, table: &mut Table, metrics: &[Metric]) {
        for m in metrics {
            table.row(vec![
                self.run_id.clone(),
                self.hash.clone(),
                m.check.to_string(),
                m.name.clone(),
                m.value_text(),
                m.tolerance_text(),
                m.status().to_string(),
            ]);
        }
    }

    /// Writes `metrics` to `name`, echoes them, and fails on the first miss.
    fn finish(&self, name: &str, metrics: &[Metric], timings: &Timings) -> Result<(), Failure> {
        let dir = self.out_dir()?;
        let mut table = self.metric_table();
        self.push_metrics(&mut table, metrics);
        table.write(&dir.join(name))?;
        timings.write(&dir.join("timing.csv"), &self.run_id)?;
        for m in metrics {
            println!("{}={} {}", m.name, m.value_text(), m.status());
        }
        for m in metrics {
            if let Some(v) = m.value_real() {
                if !v.is_finite() {
                    return Err(Failure::Numerical(format!("{} is not finite", m.name)));
                }
            }
        }
        match metrics.iter().find(|m| m.pass == Some(false)) {
            Some(m) => Err(Failure::Check(format!(
                "{}={} misses {}",
                m.name,
                m.value_text(),
                m.tolerance_text()
            ))),
            None => Ok(()),
        }
    }
}

fn ids(n: usize) -> Vec<ModeId> {
    (0..n).map(ModeId).collect()
}

fn rel_diff(a: &FockState, b: &FockState) -> f64 {
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for (x, y) in a.amplitudes().iter().zip(b.amplitudes()) {
        num = num.max((x - y).norm());
        den = den.max(y.norm());
    }
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

fn leg_permutations(dim: usize) -> Vec<PermutationMatrix> {
    Rotation::all(dim).iter().map(|&r| leg_permutation(r)).collect()
}

/// PEPS parameters of a symmetric family; `None` for the other families.
pub fn family_params(cfg: &ExperimentConfig, geom: &LatticeGeometry) -> Result<Option<PepsParams>, Failure> {
    let p = match cfg.family.kind {
        FamilyKind::SymmetricD2 => symmetric_params_d2(geom, &cfg.coefficients()?)?,
        FamilyKind::SymmetricD3Staggered => symmetric_params_d3_staggered(geom, &cfg.coefficients()?)?,
        FamilyKind::SymmetricD3Spinhalf => symmetric_params_d3_spinhalf(geom, &cfg.coefficients()?)?,
        FamilyKind::Vacuum | FamilyKind::ExactConstruction => return Ok(None),
    };
    Ok(Some(p))
}

fn exact_options(cfg: &ExperimentConfig) -> ExactOptions {
    ExactOptions {
        eps_margin: cfg.family.eps_margin,
        ..Default::default()
    }
}

fn time<R>(timings: &mut Timings, label: &str, f: impl FnOnce() -> R) -> R {
    let start = Instant::now();
    let r = f();
    timings.push(label, start.elapsed());
    r
}

pub fn verify(ctx: &Context) -> Result<(), Failure> {
    let cfg = &ctx.cfg;
    let geom = cfg.lattice()?;
    let n = cfg.verify.instances;
    let mut timings = Timings::default();
    let mut metrics = Vec::new();

    let pf = time(&mut timings, "pfaffian", || pfaffian_suite(cfg.seed, n))?;
    metrics.push(Metric::max("pfaffian", "pfaffian_rel_error", pf, cfg.tol("pfaffian")));

    let oracle = time(&mut timings, "oracle", || oracle_suite(cfg.seed, n))?;
    metrics.push(Metric::max("oracle", "oracle_rel_error", oracle, cfg.tol("oracle")));

    let j = check_j_relations();
    metrics.push(Metric::max("j_relations", "j_relation_deviation", j.max_deviation, cfg.tol("j_relations")));

    time(&mut timings, "four_rotation", || four_rotation_suite(&geom, &mut metrics))?;

    let rs = leg_permutations(geom.dim());
    let tau_dim = solve_tau_constraint(&rs, gpeps::dense::ONE)?.len();
    let want_tau = if geom.dim() == 2 { 4 } else { 3 };
    metrics.push(Metric::count("solvers", "tau_space_dim", tau_dim, want_tau));
    let t_dim = solve_t_constraint(&rs, gpeps::dense::ONE)?.ncols();
    metrics.push(Metric::count("solvers", "t_space_dim", t_dim, 1));
    let no_go = no_go_spinless(3, cfg.eta(), Rotation::all(3))?;
    metrics.push(Metric::count("solvers", "no_go_dim", no_go, 0));

    time(&mut timings, "family", || family_suite(cfg, &geom, &mut metrics))?;
    ctx.finish("verify.csv", &metrics, &timings)
}

fn pfaffian_suite(seed: u64, n: usize) -> Result<f64, Failure> {
    let mut rng = random::rng(seed);
    let mut worst = 0.0f64;
    for k in 0..n {
        let size = 2 + 2 * (k % 10);
        let a = random::antisymmetric(size, 1.0, &mut rng);
        let p = pfaffian(a.as_ref())?;
        let det = a.as_ref().determinant();
        worst = worst.max((p * p - det).norm() / det.norm().max(f64::MIN_POSITIVE));
        let b = CMat::from_fn(size, size, |_, _| random::complex(&mut rng, 1.0));
        let bab = &(&b * &a) * b.transpose();
        let lhs = pfaffian(bab.as_ref())?;
        let rhs = b.as_ref().determinant() * p;
        worst = worst.max((lhs - rhs).norm() / rhs.norm().max(f64::MIN_POSITIVE));
    }
    Ok(worst)
}

fn oracle_suite(seed: u64, n: usize) -> Result<f64, Failure> {
    let mut rng = random::rng(seed ^ 0x5eed);
    let mut worst = 0.0f64;
    let geoms = [[1usize, 1], [1, 2], [2, 1]];
    for k in 0..n {
        let m = 2 + k % (ORACLE_MODES - 1);
        let a = random::pairing(&ids(m), 0.8, &mut rng);
        let b = random::pairing(&ids(m), 0.8, &mut rng);
        let fa = FockState::from_pairing(&a)?;
        let fo = fa.inner(&FockState::from_pairing(&b)?)?;
        worst = worst.max((bcs_overlap(&a, &b)? - fo).norm() / fo.norm());

        let bond_modes: Vec<ModeId> = ids(m).into_iter().step_by(2).collect();
        let bond = random::pairing(&bond_modes, 0.9, &mut rng);
        let p = project_bonds(&a, &bond)?;
        let oracle = fock::project_bond(&fa, &bond)?;
        let mut got = FockState::from_pairing(&p.state)?.reordered(oracle.modes())?;
        got.scale(p.scalar.value());
        worst = worst.max(rel_diff(&got, &oracle));

        let g = LatticeGeometry::new(2, &geoms[k % geoms.len()], 1.0)?;
        let layout = ModeLayout::new(g, 1, 1, k % 2)?;
        if layout.n_modes() <= ORACLE_MODES {
            let params = PepsParams::random(layout, 0.6, &mut rng);
            let c = contract(&params)?;
            let mut got = FockState::from_pairing(&c.state)?;
            got.scale(c.scalar.value());
            worst = worst.max(rel_diff(&got, &fock_contract(&params, ORACLE_MODES)?));
        }
    }
    Ok(worst)
}

fn four_rotation_suite(geom: &LatticeGeometry, metrics: &mut Vec<Metric>) -> Result<(), Failure> {
    if let Err(e) = geom.check_rotatable() {
        metrics.push(Metric::skipped("four_rotation", "four_rotation_product", &e.to_string()));
        return Ok(());
    }
    let mut families: Vec<(&str, Vec<PhysicalRotation>, bool)> = Vec::new();
    if geom.dim() == 2 {
        families.push(("d2", vec![PhysicalRotation::d2(geom)?], true));
    } else {
        families.push(("spinhalf", PhysicalRotation::family(geom, 2)?, true));
        families.push(("staggered", PhysicalRotation::family(geom, 1)?, false));
    }
    for (label, rots, minus_one) in families {
        let mut ok = true;
        for r in &rots {
            for x in geom.sites() {
                let s = four_rotation_product(r, &x)?;
                ok &= if minus_one { s == -1.0 } else { s.abs() == 1.0 };
            }
        }
        let expect = if minus_one { "-1" } else { "+-1" };
        metrics.push(Metric::flag("four_rotation", &format!("four_rotation_{label}"), ok, expect));
    }
    Ok(())
}

fn family_suite(cfg: &ExperimentConfig, geom: &LatticeGeometry, metrics: &mut Vec<Metric>) -> Result<(), Failure> {
    let spec = cfg.kspec()?;
    let ground = exact_ground(&spec)?;
    metrics.push(Metric::max("charge", "charge_residual_ground", charge_residual(&ground, &spec.layout()), cfg.tol("charge")));
    if let Some(params) = family_params(cfg, geom)? {
        let out = contract(&params)?;
        let phys = physical_layout(&params);
        metrics.push(Metric::max("charge", "charge_residual_peps", charge_residual(&out.state, &phys), cfg.tol("charge")));
        let worst = PhysicalRotation::family(geom, phys.n_s)?
            .iter()
            .map(|r| rotation_residual(&out.state, &phys, r))
            .collect::<Result<Vec<f64>, _>>()?
            .into_iter()
            .fold(0.0, f64::max);
        metrics.push(Metric::max("rotation", "rotation_residual", worst, cfg.tol("rotation")));
    }
    if cfg.family.kind == FamilyKind::ExactConstruction {
        let n = cfg.family.steps[0];
        match exact_construction_params_with(&spec, cfg.family.beta.unwrap(), n, &exact_options(cfg)) {
            Ok(p) => {
                let out = contract(&p)?;
                metrics.push(Metric::max("charge", "charge_residual_exact", charge_residual(&out.state, &spec.layout()), cfg.tol("charge")));
            }
            Err(e @ gpeps::Error::Precondition(_)) => {
                metrics.push(Metric::skipped("charge", "charge_residual_exact", &e.to_string()));
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(())
}

/// One row of a convergence sweep.
struct SweepRow {
    steps: usize,
    eps: f64,
    n_d: usize,
    fidelity_exact: Option<f64>,
    fidelity_trotter: Option<f64>,
    skipped: Option<String>,
}

pub fn converge(ctx: &Context) -> Result<(), Failure> {
    let cfg = &ctx.cfg;
    if cfg.family.kind != FamilyKind::ExactConstruction {
        return Err(Failure::Config("converge needs the exact_construction family".into()));
    }
    let spec = cfg.kspec()?;
    let beta = cfg.family.beta.unwrap();
    let mut timings = Timings::default();
    let ground = time(&mut timings, "exact_ground", || exact_ground(&spec))?;
    let oracle_scale = spec.layout().n_modes() <= ORACLE_MODES;
    let mut steps = cfg.family.steps.clone();
    steps.sort_unstable();
    steps.dedup();
    let opts = exact_options(cfg);
    let rows: Vec<(Result<SweepRow, Failure>, std::time::Duration)> = par::with_workers(cfg.workers, || {
        par::map(Exec::default(), &steps, |&n| {
            let start = Instant::now();
            let row = sweep_row(&spec, &ground, beta, n, &opts, oracle_scale);
            (row, start.elapsed())
        })
    });

    let mut table = Table::new(
        "converge",
        &["run_id", "config_hash", "n", "eps", "n_d", "marker", "fidelity_exact", "fidelity_trotter", "fidelity_nondecreasing", "status", "reason"],
    );
    let excess = cfg.tol("fidelity_excess");
    let mut previous: Option<f64> = None;
    let mut monotone = true;
    for (&n, (row, elapsed)) in steps.iter().zip(rows) {
        timings.push(&format!("n={n}"), elapsed);
        let row = row?;
        for f in [row.fidelity_exact, row.fidelity_trotter].into_iter().flatten() {
            if !(f.is_finite() && (0.0..=1.0 + excess).contains(&f)) {
                return Err(Failure::Numerical(format!("fidelity {f} at N={n} is outside [0, 1]")));
            }
        }
        let step_ok = match (previous, row.fidelity_exact) {
            (Some(p), Some(f)) => f >= p,
            _ => true,
        };
        monotone &= step_ok;
        if let Some(f) = row.fidelity_exact {
            previous = Some(f);
        }
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.17e}")).unwrap_or_default();
        table.row(vec![
            ctx.run_id.clone(),
            ctx.hash.clone(),
            row.steps.to_string(),
            format!("{:.17e}", row.eps),
            row.n_d.to_string(),
            if row.n_d == 0 { "n_d=0".into() } else { String::new() },
            opt(row.fidelity_exact),
            opt(row.fidelity_trotter),
            step_ok.to_string(),
            if row.skipped.is_some() { "skipped".into() } else { "ok".into() },
            row.skipped.clone().unwrap_or_default(),
        ]);
        match (&row.skipped, row.fidelity_exact) {
            (Some(r), _) => println!("N={n} skipped: {r}"),
            (None, Some(f)) => println!("N={n} eps={:.6} 1-F={:.6e}", row.eps, 1.0 - f),
            _ => {}
        }
    }
    let dir = ctx.out_dir()?;
    table.write(&dir.join("converge.csv"))?;
    timings.write(&dir.join("timing.csv"), &ctx.run_id)?;
    println!("monotone={monotone}");
    if monotone {
        Ok(())
    } else {
        Err(Failure::Check("fidelity decreases with N".into()))
    }
}

fn sweep_row(
    spec: &KSpec,
    ground: &PairingState,
    beta: f64,
    n: usize,
    opts: &ExactOptions,
    oracle_scale: bool,
) -> Result<SweepRow, Failure> {
    let mut row = SweepRow {
        steps: n,
        eps: beta / n as f64,
        n_d: n - 1,
        fidelity_exact: None,
        fidelity_trotter: None,
        skipped: None,
    };
    let params = match exact_construction_params_with(spec, beta, n, opts) {
        Ok(p) => p,
        Err(e @ gpeps::Error::Precondition(_)) => {
            row.skipped = Some(e.to_string());
            return Ok(row);
        }
        Err(e) => return Err(e.into()),
    };
    let out = contract(&params)?;
    row.fidelity_exact = Some(fidelity(&out.state, ground)?);
    if oracle_scale {
        let reference = trotter_reference(spec, beta, n)?;
        row.fidelity_trotter = Some(FockState::from_pairing(&out.state)?.fidelity(&reference)?);
    }
    Ok(row)
}

pub fn build(ctx: &Context) -> Result<(), Failure> {
    let cfg = &ctx.cfg;
    let geom = cfg.lattice()?;
    let spec = cfg.kspec()?;
    let dir = ctx.out_dir()?;
    let mut timings = Timings::default();
    let mut metrics = Vec::new();
    let ext = if cfg.output.binary { "gpsb" } else { "gps" };

    let mut states: Vec<(String, ModeLayout, PairingState)> = Vec::new();
    match cfg.family.kind {
        FamilyKind::Vacuum => {
            let layout = spec.layout();
            states.push(("state".into(), layout.clone(), PairingState::vacuum(layout.physical_modes())));
        }
        FamilyKind::ExactConstruction => {
            for &n in &cfg.family.steps {
                let p = exact_construction_params_with(&spec, cfg.family.beta.unwrap(), n, &exact_options(cfg))?;
                let out = time(&mut timings, &format!("contract n={n}"), || contract(&p))?;
                states.push((format!("state_n{n}"), spec.layout(), out.state));
            }
        }
        _ => {
            let p = family_params(cfg, &geom)?.expect("symmetric family");
            let out = time(&mut timings, "contract", || contract(&p))?;
            states.push(("state".into(), physical_layout(&p), out.state));
        }
    }

    for (stem, layout, state) in states {
        let path = dir.join(format!("{stem}.{ext}"));
        let mut file = StateFile::new(layout.clone(), state.clone());
        if cfg.output.covariance {
            file = file.with_covariance(CovarianceMatrix::from_pairing(&state).matrix().to_owned());
        }
        file.save(&path, cfg.encoding())?;
        let back = StateFile::load(&path)?;
        let diff = dense::max_abs_diff(back.state.matrix(), state.matrix());
        metrics.push(Metric::max("roundtrip", &format!("{stem}_roundtrip"), diff, cfg.tol("roundtrip")));
        metrics.push(Metric::max(
            "charge",
            &format!("{stem}_charge_residual"),
            charge_residual(&back.state, &back.layout),
            cfg.tol("charge"),
        ));
        if matches!(
            cfg.family.kind,
            FamilyKind::SymmetricD2 | FamilyKind::SymmetricD3Staggered | FamilyKind::SymmetricD3Spinhalf
        ) {
            let worst = worst_rotation(&back)?;
            metrics.push(Metric::max("rotation", &format!("{stem}_rotation_residual"), worst, cfg.tol("rotation")));
        }
        println!("wrote {}", path.display());
    }
    ctx.finish("build.csv", &metrics, &timings)
}

fn worst_rotation(file: &StateFile) -> Result<f64, Failure> {
    let rots = PhysicalRotation::family(&file.layout.geometry, file.layout.n_s)?;
    let mut worst = 0.0f64;
    for r in &rots {
        worst = worst.max(rotation_residual(&file.state, &file.layout, r)?);
    }
    Ok(worst)
}

pub fn spectrum(ctx: &Context) -> Result<(), Failure> {
    let spec = ctx.cfg.kspec()?;
    let h = build_quadratic(&spec);
    let s = h.spectrum();
    let mut table = Table::new("spectrum", &["run_id", "config_hash", "index", "energy"]);
    for (i, e) in s.eigenvalues.iter().enumerate() {
        table.row(vec![ctx.run_id.clone(), ctx.hash.clone(), i.to_string(), format!("{e:.17e}")]);
    }
    let dir = ctx.out_dir()?;
    table.write(&dir.join("spectrum.csv"))?;
    println!("modes={}", h.len());
    println!("ground_energy={:.17e}", h.ground_energy());
    println!("gap={:.17e}", s.min_excitation());
    Ok(())
}

/// Residuals of a stored state under its rotation family and the charge.
pub fn rotate_check(path: &Path, tol_rotation: f64, tol_charge: f64, out: Option<&Path>) -> Result<(), Failure> {
    let file = StateFile::load(path).map_err(|e| match e {
        gpeps::Error::Io(_) | gpeps::Error::Format(_) => Failure::Config(format!("{}: {e}", path.display())),
        other => other.into(),
    })?;
    let rots = PhysicalRotation::family(&file.layout.geometry, file.layout.n_s)?;
    let mut metrics = Vec::new();
    for r in &rots {
        let v = rotation_residual(&file.state, &file.layout, r)?;
        metrics.push(Metric::max("rotation", &format!("rotation_residual_{:?}", r.rotation()).to_lowercase(), v, tol_rotation));
    }
    metrics.push(Metric::max("charge", "charge_residual", charge_residual(&file.state, &file.layout), tol_charge));
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        let mut table = Table::new("rotate_check", &["state", "check", "metric", "value", "tolerance", "status"]);
        for m in &metrics {
            table.row(vec![
                path.display().to_string(),
                m.check.to_string(),
                m.name.clone(),
                m.value_text(),
                m.tolerance_text(),
                m.status().to_string(),
            ]);
        }
        table.write(&dir.join("rotate_check.csv"))?;
    }
    for m in &metrics {
        println!("{}={} {}", m.name, m.value_text(), m.status());
    }
    match metrics.iter().find(|m| m.pass == Some(false)) {
        Some(m) => Err(Failure::Check(format!("{}={}", m.name, m.value_text()))),
        None => Ok(()),
    }
}
