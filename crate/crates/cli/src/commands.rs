use std::path::PathBuf;

use num_complex::Complex64;
use serde::Serialize;
use serde_json::{json, Value};

use dpi_core::connect::{connection_report, ConnectConfig};
use dpi_core::critical::{band_edges, critical_curves, write_curves_csv};
use dpi_core::dpi::{dpi_wavefunction, write_wavefunction_csv, Branch, MaskConfig, Selector};
use dpi_core::model::{build_fe8_operator, read_table_csv, synth1_operator, validate_symmetry, write_table_csv, SpinModelParams};
use dpi_core::oracle::{eigenvector_at, exact_eigenvalues, integrate_recursion, write_eigenvalues_csv, Direction, Seed};
use dpi_core::quad::QuadConfig;
use dpi_core::smooth::{difference_diagnostics, extend_coefficients, quasiclassicality_report, Bands};
use dpi_core::turning::{failure_zone, local_expansion, locate_turning_points, write_scan_csv, TurningConfig, TurningScan};
use dpi_core::{Continuum, Operator};

use crate::config::{BranchSpec, ConfigError, ModelSpec, RunConfig};
use crate::connect_check::{oracle_match, MatchWindow};
use crate::output::{csv_bytes, json_bytes, write_atomic};

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Numerical(dpi_core::Error),
    Io(std::io::Error),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<dpi_core::Error> for Failure {
    fn from(e: dpi_core::Error) -> Self {
        Failure::Numerical(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e)
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Io(e.into())
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "configuration error: {m}"),
            Failure::Numerical(e) => write!(f, "numerical failure: {e}"),
            Failure::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Model,
    Curves,
    Turning,
    Wavefunction,
    ConnectTest,
    Oracle,
    Scan,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Model => "model",
            Command::Curves => "curves",
            Command::Turning => "turning",
            Command::Wavefunction => "wavefunction",
            Command::ConnectTest => "connect-test",
            Command::Oracle => "oracle",
            Command::Scan => "scan",
        }
    }
}

/// Files written by a successful run.
pub type Written = Vec<PathBuf>;

struct Run<'a> {
    cfg: &'a RunConfig,
    command: Command,
    written: Written,
}

impl Run<'_> {
    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), Failure> {
        let p = write_atomic(&self.cfg.out, name, bytes)?;
        self.written.push(p);
        Ok(())
    }

    fn write_json(&mut self, name: &str, result: Value) -> Result<(), Failure> {
        let doc = envelope(self.cfg, self.command, result);
        let bytes = json_bytes(&doc)?;
        self.write(name, &bytes)
    }

    fn turning_config(&self) -> TurningConfig<f64> {
        TurningConfig {
            proximity_sites: self.cfg.tolerances.proximity_sites,
            phi2_threshold: self.cfg.tolerances.phi2_threshold,
            ..Default::default()
        }
    }

    fn quad(&self) -> QuadConfig<f64> {
        QuadConfig {
            rel_tol: self.cfg.tolerances.quad_rel,
            ..Default::default()
        }
    }

    fn connect_config(&self) -> ConnectConfig<f64> {
        ConnectConfig {
            identity_tol: self.cfg.tolerances.identity_tol,
            central_exponent: self.cfg.tolerances.matching_exponent,
            quad: self.quad(),
            ..Default::default()
        }
    }

    fn mask(&self) -> MaskConfig<f64> {
        MaskConfig {
            phi2_max: self.cfg.tolerances.phi2_threshold,
            qdot_over_v2_max: self.cfg.tolerances.qdot_over_v2,
        }
    }
}

/// Header shared by every JSON report.
pub fn envelope(cfg: &RunConfig, command: Command, result: Value) -> Value {
    json!({
        "command": command.name(),
        "version": env!("CARGO_PKG_VERSION"),
        "seed": cfg.seed,
        "config": cfg,
        "result": result,
    })
}

fn value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).unwrap_or(Value::Null)
}

pub fn build_operator(cfg: &RunConfig) -> Result<Operator, Failure> {
    let op = match &cfg.model {
        ModelSpec::Synth1 { j } => synth1_operator(*j),
        ModelSpec::Fe8 { j, k1, k2, hx, hz } => build_fe8_operator(&SpinModelParams {
            k1: *k1,
            k2: *k2,
            ..SpinModelParams::fe8(*j, *hx, *hz)
        }),
        ModelSpec::Table { path, .. } => {
            let f = std::fs::File::open(path).map_err(|e| Failure::Config(format!("cannot open table {}: {e}", path.display())))?;
            read_table_csv(f)
        }
    };
    op.map_err(|e| Failure::Config(format!("cannot build the model: {e}")))
}

fn continuum(cfg: &RunConfig, op: &Operator) -> Result<Continuum, Failure> {
    Ok(extend_coefficients(op, cfg.j())?)
}

/// The configured `m` range clipped to the continuum domain.
fn range(cfg: &RunConfig, cc: &Continuum) -> Result<(f64, f64), Failure> {
    let (lo, hi) = cc.domain();
    match cfg.m_range {
        None => Ok((lo, hi)),
        Some((a, b)) => {
            let (a, b) = (a.max(lo), b.min(hi));
            if b > a {
                Ok((a, b))
            } else {
                Err(Failure::Config(format!("m range does not overlap the continuum domain [{lo}, {hi}]")))
            }
        }
    }
}

fn single_energy(cfg: &RunConfig) -> Result<f64, Failure> {
    let e = cfg.energy_values()?;
    match e.as_slice() {
        [x] => Ok(*x),
        _ => Err(Failure::Config("this subcommand takes a single --energy".into())),
    }
}

pub fn execute(command: Command, cfg: &RunConfig) -> Result<Written, Failure> {
    let mut run = Run {
        cfg,
        command,
        written: Vec::new(),
    };
    match command {
        Command::Model => model(&mut run)?,
        Command::Curves => curves(&mut run)?,
        Command::Turning => turning(&mut run)?,
        Command::Wavefunction => wavefunction(&mut run)?,
        Command::ConnectTest => connect_test(&mut run)?,
        Command::Oracle => oracle(&mut run)?,
        Command::Scan => scan(&mut run)?,
    }
    Ok(run.written)
}

fn model(run: &mut Run) -> Result<(), Failure> {
    let op = build_operator(run.cfg)?;
    run.write("operator.csv", &csv_bytes(|b| write_table_csv(&op, b))?)?;
    let warnings = match &run.cfg.model {
        ModelSpec::Fe8 { j, k1, k2, hx, hz } => SpinModelParams {
            k1: *k1,
            k2: *k2,
            ..SpinModelParams::fe8(*j, *hx, *hz)
        }
        .warnings(),
        _ => Vec::new(),
    };
    // The continuum needs at least two interior knots; small tables still
    // get their operator dump.
    let (quasi, diffs) = match extend_coefficients(&op, run.cfg.j()) {
        Ok(cc) => (
            quasiclassicality_report(&cc, 1.0, 8).map(|r| value(&r)).unwrap_or_else(|e| json!({ "error": e.to_string() })),
            difference_diagnostics(&op, &cc).map(|r| value(&r)).unwrap_or_else(|e| json!({ "error": e.to_string() })),
        ),
        Err(e) => (json!({ "error": e.to_string() }), Value::Null),
    };
    let off1_zero = op.off1().iter().all(|&x| x == 0.0);
    run.write_json(
        "model.json",
        json!({
            "rows": op.len(),
            "m_min": op.m_min(),
            "m_max": op.m_max(),
            "off1_identically_zero": off1_zero,
            "symmetry": value(&validate_symmetry(&op)),
            "quasiclassicality": quasi,
            "difference_diagnostics": diffs,
            "warnings": warnings,
        }),
    )
}

fn site_grid(lo: f64, hi: f64, per_site: usize) -> Vec<f64> {
    let n = ((hi - lo) * per_site as f64).round().max(1.0) as usize;
    (0..=n).map(|k| lo + (hi - lo) * k as f64 / n as f64).collect()
}

fn curves(run: &mut Run) -> Result<(), Failure> {
    let op = build_operator(run.cfg)?;
    let cc = continuum(run.cfg, &op)?;
    let (lo, hi) = range(run.cfg, &cc)?;
    let grid = site_grid(lo, hi, run.cfg.samples_per_site);
    let curves = critical_curves(&cc, &grid)?;
    run.write("curves.csv", &csv_bytes(|b| write_curves_csv(&curves, b))?)?;
    let (mut lower, mut upper) = (f64::INFINITY, f64::NEG_INFINITY);
    for &m in &grid {
        if let Ok(e) = band_edges(&cc, m) {
            lower = lower.min(e.lower);
            upper = upper.max(e.upper);
        }
    }
    run.write_json(
        "curves.json",
        json!({
            "range": [lo, hi],
            "points": curves.points.len(),
            "tangencies": value(&curves.tangencies),
            "undefined_at": value(&curves.undefined_at),
            "band": { "lower": lower, "upper": upper },
        }),
    )
}

fn scan_energy(run: &Run, cc: &Continuum, e: f64, lo: f64, hi: f64) -> Result<TurningScan<f64>, Failure> {
    Ok(locate_turning_points(cc, e, (lo, hi), &run.turning_config())?)
}

fn turning(run: &mut Run) -> Result<(), Failure> {
    let op = build_operator(run.cfg)?;
    let cc = continuum(run.cfg, &op)?;
    let (lo, hi) = range(run.cfg, &cc)?;
    let energies = run.cfg.energy_values()?;
    let tcfg = run.turning_config();
    let j = run.cfg.j();
    let mut scans = Vec::new();
    let mut reports = Vec::new();
    for &e in &energies {
        let s = scan_energy(run, &cc, e, lo, hi)?;
        let points: Vec<Value> = s
            .points
            .iter()
            .map(|tp| {
                let (expansion, expansion_error) = match local_expansion(&cc, e, tp, &tcfg) {
                    Ok(x) => (value(&x), Value::Null),
                    Err(err) => (Value::Null, Value::String(err.to_string())),
                };
                let (zone, zone_error) = match failure_zone(&cc, e, tp, &tcfg) {
                    Ok(z) => (value(&z), Value::Null),
                    Err(err) => (Value::Null, Value::String(err.to_string())),
                };
                json!({
                    "type": tp.kind.map(|k| k.name()),
                    "m_c": tp.m_c,
                    "m_over_j": tp.m_c / j,
                    "curve": tp.curve.name(),
                    "turning_point": value(tp),
                    "expansion": expansion,
                    "expansion_error": expansion_error,
                    "failure_zone": zone,
                    "failure_zone_error": zone_error,
                })
            })
            .collect();
        reports.push(json!({
            "energy": e,
            "types": s.points.iter().map(|p| p.kind.map(|k| k.name())).collect::<Vec<_>>(),
            "points": points,
            "near_tangencies": value(&s.near_tangencies),
        }));
        scans.push(s);
    }
    run.write("turning.csv", &csv_bytes(|b| write_scan_csv(&scans, b))?)?;
    run.write_json("turning.json", json!({ "range": [lo, hi], "scans": reports }))
}

fn selector(spec: BranchSpec) -> Selector<f64> {
    match spec {
        BranchSpec::Cos { sigma1, sign, center } => Selector::Cos { sigma1, sign, center },
        BranchSpec::Complex { sigma2, conj } => Selector::Complex { sigma2, conj },
    }
}

fn wavefunction(run: &mut Run) -> Result<(), Failure> {
    let op = build_operator(run.cfg)?;
    let cc = continuum(run.cfg, &op)?;
    let (lo, hi) = range(run.cfg, &cc)?;
    let e = single_energy(run.cfg)?;
    let mut branch = Branch::new(&cc, e, selector(run.cfg.branch), lo, hi, lo, false)?;
    branch.quad = run.quad();
    let grid: Vec<f64> = (0..op.len()).map(|k| op.m(k)).filter(|&m| m >= lo && m <= hi).collect();
    if grid.is_empty() {
        return Err(Failure::Config(format!("no lattice sites in [{lo}, {hi}]")));
    }
    let one = Complex64::new(1.0, 0.0);
    let mask = run.mask();
    let wf = dpi_wavefunction(&[(&branch, one)], &grid, &mask)?;
    let sample = branch.sample(&grid, &mask)?;
    run.write("wavefunction.csv", &csv_bytes(|b| write_wavefunction_csv(&wf, b))?)?;
    let valid = wf.valid.iter().filter(|&&v| v).count();
    let phi2_max = sample
        .phi2
        .iter()
        .zip(&sample.valid)
        .filter(|(_, &v)| v)
        .fold(0.0f64, |a, (p, _)| a.max(p.norm()));
    run.write_json(
        "wavefunction.json",
        json!({
            "energy": e,
            "interval": [lo, hi],
            "anchor": lo,
            "branches": [{ "branch": value(&run.cfg.branch), "coefficient": [1.0, 0.0] }],
            "sites": grid.len(),
            "valid_sites": valid,
            "max_abs_phi2_on_mask": phi2_max,
        }),
    )
}

fn connect_test(run: &mut Run) -> Result<(), Failure> {
    let op = build_operator(run.cfg)?;
    let cc = continuum(run.cfg, &op)?;
    let (lo, hi) = range(run.cfg, &cc)?;
    let e = single_energy(run.cfg)?;
    let s = scan_energy(run, &cc, e, lo, hi)?;
    let ccfg = run.connect_config();
    let mut out = Vec::new();
    for tp in s.points.iter().filter(|p| p.kind.is_some_and(|k| k.is_b_family()) && p.kappa_c.is_some()) {
        let report = connection_report(&cc, e, tp, &ccfg)?;
        let check = oracle_match(&op, &cc, e, tp, &ccfg, &MatchWindow::default())?;
        out.push(json!({
            "m_c": tp.m_c,
            "type": tp.kind.map(|k| k.name()),
            "report": value(&report),
            "oracle": value(&check),
        }));
    }
    if out.is_empty() {
        return Err(Failure::Config(format!("no B-type turning point with κ_c > 0 at E = {e} in [{lo}, {hi}]")));
    }
    run.write_json("connect.json", json!({ "energy": e, "points": out }))
}

fn oracle(run: &mut Run) -> Result<(), Failure> {
    let op = build_operator(run.cfg)?;
    let values = exact_eigenvalues(&op)?;
    run.write("eigenvalues.csv", &csv_bytes(|b| write_eigenvalues_csv(&values, b))?)?;
    let mut result = json!({
        "dimension": op.len(),
        "lowest": values.first(),
        "highest": values.last(),
    });
    if let Some(energies) = run.cfg.energies {
        let energies = energies.values();
        let [e] = energies.as_slice() else {
            return Err(Failure::Config("oracle takes a single --energy".into()));
        };
        let e = *e;
        let k = values
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - e).abs().total_cmp(&(b.1 - e).abs()))
            .map(|(k, _)| k)
            .unwrap_or(0);
        let ek = values[k];
        let v = eigenvector_at(&op, ek)?;
        let mut text = String::from("m,C\n");
        for (i, c) in v.iter().enumerate() {
            text.push_str(&format!("{},{:.16e}\n", op.m(i), c));
        }
        run.write("eigenvector.csv", text.as_bytes())?;
        let resid = {
            let hv = op.apply(&v);
            hv.iter().zip(&v).map(|(a, b)| (a - ek * b).powi(2)).sum::<f64>().sqrt()
        };
        let fwd = integrate_recursion(&op, e, Seed::lower_boundary(&op, 1.0, 0.0), Direction::Forward)?;
        let bwd = integrate_recursion(&op, e, Seed::upper_boundary(&op, 0.0, 1.0), Direction::Backward)?;
        let mut text = String::from("m,C_forward,ln_abs_forward,C_backward,ln_abs_backward\n");
        let (nf, nb) = (fwd.normalized(), bwd.normalized());
        for i in 0..op.len() {
            let m = op.m(i);
            let kf = fwd.m.iter().position(|&x| x == m);
            let kb = bwd.m.iter().position(|&x| x == m);
            let cell = |k: Option<usize>, n: &[f64], s: &dpi_core::oracle::RecursionSolution<f64, f64>| match k {
                Some(k) => format!("{:.16e},{:.16e}", n[k], s.log_magnitude(k)),
                None => ",".into(),
            };
            text.push_str(&format!("{m},{},{}\n", cell(kf, &nf, &fwd), cell(kb, &nb, &bwd)));
        }
        run.write("recursion.csv", text.as_bytes())?;
        result["nearest"] = json!({ "energy": e, "index": k, "eigenvalue": ek, "residual": resid });
    }
    run.write_json("oracle.json", result)
}

fn scan(run: &mut Run) -> Result<(), Failure> {
    let op = build_operator(run.cfg)?;
    let cc = continuum(run.cfg, &op)?;
    let (lo, hi) = range(run.cfg, &cc)?;
    let energies = run.cfg.energy_values()?;
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(energies.len()).max(1);
    let chunk = energies.len().div_ceil(threads);
    let tcfg = run.turning_config();
    let scans: Vec<Result<TurningScan<f64>, dpi_core::Error>> = std::thread::scope(|s| {
        let handles: Vec<_> = energies
            .chunks(chunk)
            .map(|part| {
                let cc = &cc;
                s.spawn(move || part.iter().map(|&e| locate_turning_points(cc, e, (lo, hi), &tcfg)).collect::<Vec<_>>())
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("scan worker panicked")).collect()
    });
    let scans: Vec<TurningScan<f64>> = scans.into_iter().collect::<Result<_, _>>()?;
    run.write("scan.csv", &csv_bytes(|b| write_scan_csv(&scans, b))?)?;
    let j = run.cfg.j();
    let rows: Vec<Value> = scans
        .iter()
        .map(|s| {
            json!({
                "energy": s.energy,
                "count": s.points.len(),
                "types": s.points.iter().map(|p| p.kind.map(|k| k.name())).collect::<Vec<_>>(),
                "m_over_j": s.points.iter().map(|p| p.m_c / j).collect::<Vec<_>>(),
                "near_tangencies": s.near_tangencies.len(),
            })
        })
        .collect();
    run.write_json("scan.json", json!({ "range": [lo, hi], "energies": rows }))
}
