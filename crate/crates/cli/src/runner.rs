//! Run orchestration and report emission.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use flowreg::analysis::{equilibrium_residual, observability_rank, passivity_check, sparsity_audit};
use flowreg::graph::{is_zero_forcing, minimal_zero_forcing_sets, DEFAULT_ZF_MAX_N};
use flowreg::model::Variant;
use flowreg::optimum::{brute_force_optimum, effective_disturbance};
use flowreg::sim::{convergence_metrics, evaluate_monitors, integrate, spectral_radius, MonitorOutcome};
use flowreg::{Equilibrium, Initial, RunLog};
use rayon::prelude::*;
use serde::Serialize;

use crate::scenario::{reference_pairs, Prepared, Scenario, ScenarioError};

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Status {
    Pass = 0,
    MonitorFailure = 1,
    ValidationError = 2,
    RuntimeError = 3,
}

impl Status {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("{0}")]
    Runtime(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl RunError {
    pub fn status(&self) -> Status {
        match self {
            RunError::Scenario(_) => Status::ValidationError,
            _ => Status::RuntimeError,
        }
    }
}

impl From<flowreg::Error> for RunError {
    fn from(e: flowreg::Error) -> Self {
        RunError::Runtime(e.to_string())
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> RunError + '_ {
    move |source| RunError::Io { path: path.to_path_buf(), source }
}

/// Loads a scenario from a file, or a preset when `arg` names one and no
/// such file exists.
pub fn load(arg: &str) -> Result<Scenario, ScenarioError> {
    let path = Path::new(arg);
    if !path.exists() {
        if let Some(s) = crate::presets::get(arg) {
            return Ok(s);
        }
    }
    Scenario::load(path)
}

/// Replaces the step size and horizon (in the scenario's time unit).
pub fn override_settings(p: &mut Prepared, dt: Option<f64>, horizon: Option<f64>) -> Result<(), RunError> {
    for (what, v) in [("dt", dt), ("horizon", horizon)] {
        if let Some(v) = v {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ScenarioError::Validation(vec![format!("--{what} must be positive, got {v}")]).into());
            }
        }
    }
    if let Some(dt) = dt {
        p.settings.dt = dt;
    }
    if let Some(h) = horizon {
        p.settings.horizon = h;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub log: RunLog<f64>,
    pub monitors: Vec<MonitorOutcome>,
    pub warnings: Vec<String>,
}

impl RunOutcome {
    pub fn passed(&self) -> bool {
        self.monitors.iter().all(|m| m.passed)
    }

    pub fn status(&self) -> Status {
        if self.passed() {
            Status::Pass
        } else {
            Status::MonitorFailure
        }
    }
}

/// Integrates the prepared scenario and evaluates its monitors.
pub fn simulate(p: &Prepared) -> Result<RunOutcome, RunError> {
    let log = integrate(&p.system, &p.schedule, &p.initial, &p.settings)?;
    let monitors = evaluate_monitors(&p.system, &log, &p.settings.monitors);
    let mut warnings = p.warnings.clone();
    for w in &log.warnings {
        if !warnings.contains(w) {
            warnings.push(w.clone());
        }
    }
    Ok(RunOutcome { log, monitors, warnings })
}

/// Simulates and writes `trajectory.csv`, `allocation.txt` and
/// `verification.txt` into `out_dir`.
pub fn run(p: &Prepared, out_dir: &Path) -> Result<RunOutcome, RunError> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let allocation = allocation_report(p);
    let outcome = simulate(p)?;

    let csv = out_dir.join("trajectory.csv");
    let f = fs::File::create(&csv).map_err(io_err(&csv))?;
    let mut w = BufWriter::new(f);
    for line in allocation.csv_comments() {
        writeln!(w, "# {line}").map_err(io_err(&csv))?;
    }
    outcome.log.write_csv(&mut w).map_err(io_err(&csv))?;
    w.flush().map_err(io_err(&csv))?;

    let alloc = out_dir.join("allocation.txt");
    fs::write(&alloc, allocation.text()).map_err(io_err(&alloc))?;
    let ver = out_dir.join("verification.txt");
    fs::write(&ver, verification_text(p, &outcome)).map_err(io_err(&ver))?;
    Ok(outcome)
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.10}")).collect();
    format!("[{}]", parts.join(", "))
}

pub fn verification_text(p: &Prepared, o: &RunOutcome) -> String {
    let unit = p.time_unit.suffix();
    let mut s = String::new();
    let _ = writeln!(s, "scenario: {}", p.scenario.name);
    let _ = writeln!(s, "variant: {}", p.system.variant.name());
    let _ = writeln!(s, "dt: {:e} {unit}, steps: {}, logged samples: {}", o.log.dt, o.log.steps, o.log.samples.len());
    if let Some(rho) = o.log.spectral_radius {
        let _ = writeln!(s, "spectral radius at t=0: {rho:.6e} per {unit}, dt*rho = {:.3e}", rho * o.log.dt);
    }
    for w in &o.warnings {
        let _ = writeln!(s, "warning: {w}");
    }
    let _ = writeln!(s);
    for m in &o.monitors {
        let _ = writeln!(s, "{} {}: {}", if m.passed { "PASS" } else { "FAIL" }, m.name, m.detail);
    }
    let band = p.settings.monitors.output_band.unwrap_or(1e-3);
    let rep = convergence_metrics(&o.log, band);
    let _ = writeln!(s);
    let _ = writeln!(s, "segments (settling band {band:e}):");
    for (i, seg) in rep.segments.iter().enumerate() {
        let settle = seg.settling_time.map_or("not settled".to_string(), |t| format!("{t:.6} {unit}"));
        let _ = writeln!(
            s,
            "  {i}: [{:.6}, {:.6}] {unit}: |y - ybar|_inf = {:.6e}, |u - ubar|_inf = {:.6e}, settling {settle}",
            seg.t_start, seg.t_end, seg.output_error, seg.input_error
        );
    }
    let last = o.log.last_sample();
    let _ = writeln!(s, "final x: {}", fmt_vec(&last.x));
    let _ = writeln!(s, "final u: {}", fmt_vec(&last.u));
    let _ = writeln!(s);
    let _ = writeln!(s, "result: {}", if o.passed() { "PASS" } else { "FAIL" });
    s
}

/// Optimum for one constant reference.
#[derive(Debug, Clone, Serialize)]
pub struct SegmentAllocation {
    pub from_time: f64,
    pub d: Vec<f64>,
    pub ybar: Vec<f64>,
    pub u_bar: Option<Vec<f64>>,
    pub kappa: Option<f64>,
    pub lambda_bar: Option<Vec<f64>>,
    pub total_cost: Option<f64>,
    /// `max |ū − ū_oracle|` against projected gradient descent.
    pub oracle_deviation: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AllocationReport {
    pub scenario: String,
    pub time_unit: String,
    pub segments: Vec<SegmentAllocation>,
}

impl AllocationReport {
    pub fn feasible(&self) -> bool {
        self.segments.iter().all(|s| s.error.is_none())
    }

    pub fn text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "optimal steady state for scenario {}", self.scenario);
        for seg in &self.segments {
            let _ = writeln!(s);
            let _ = writeln!(s, "from t = {} {}", seg.from_time, self.time_unit);
            let _ = writeln!(s, "  d        = {}", fmt_vec(&seg.d));
            let _ = writeln!(s, "  ybar     = {}", fmt_vec(&seg.ybar));
            if let (Some(u), Some(k)) = (&seg.u_bar, seg.kappa) {
                let _ = writeln!(s, "  kappa    = {k:.10}");
                let _ = writeln!(s, "  u_bar    = {}", fmt_vec(u));
            }
            if let Some(l) = &seg.lambda_bar {
                let _ = writeln!(s, "  lambda   = {}", fmt_vec(l));
            }
            if let Some(c) = seg.total_cost {
                let _ = writeln!(s, "  cost     = {c:.10}");
            }
            if let Some(e) = seg.oracle_deviation {
                let _ = writeln!(s, "  oracle   = max |u_bar - u_pgd| {e:.3e}");
            }
            if let Some(e) = &seg.error {
                let _ = writeln!(s, "  infeasible: {e}");
            }
        }
        s
    }

    fn csv_comments(&self) -> Vec<String> {
        self.segments
            .iter()
            .map(|seg| match (&seg.u_bar, seg.kappa, &seg.lambda_bar) {
                (Some(u), Some(k), l) => format!(
                    "from t={}: kappa={k:.16e} u_bar={}{}",
                    seg.from_time,
                    fmt_vec(u),
                    l.as_ref().map_or(String::new(), |l| format!(" lambda_bar={}", fmt_vec(l)))
                ),
                _ => format!("from t={}: {}", seg.from_time, seg.error.as_deref().unwrap_or("no allocation")),
            })
            .collect()
    }
}

fn reference_times(p: &Prepared) -> Vec<f64> {
    let n = p.system.topo.n();
    let mut out = Vec::new();
    let mut seen: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    let mut ts = vec![0.0];
    ts.extend(p.schedule.switch_times());
    for t in ts {
        let d = p.schedule.disturbance_at(t).to_vec();
        let mut y = vec![0.0; n];
        p.schedule.setpoint_at(t, &mut y);
        if !seen.contains(&(d.clone(), y.clone())) {
            seen.push((d, y));
            out.push(t);
        }
    }
    out
}

pub fn allocation_report(p: &Prepared) -> AllocationReport {
    let sys = &p.system;
    let c = &sys.ctrl;
    let pairs = reference_pairs(&p.schedule, sys.topo.n());
    let segments = reference_times(p)
        .into_iter()
        .zip(pairs)
        .map(|(t, (d, ybar))| {
            let mut seg = SegmentAllocation {
                from_time: t,
                d: d.clone(),
                ybar: ybar.clone(),
                u_bar: None,
                kappa: None,
                lambda_bar: None,
                total_cost: None,
                oracle_deviation: None,
                error: None,
            };
            match Equilibrium::construct(sys, &d, &ybar) {
                Ok(eq) => {
                    let a = &eq.allocation;
                    let d_eff = match (&sys.comp, sys.variant) {
                        (Some(comp), Variant::Compartmental) => {
                            effective_disturbance(&sys.topo, &sys.plant, comp, &d, &eq.x)
                        }
                        _ => d.clone(),
                    };
                    seg.oracle_deviation = brute_force_optimum(&c.q, &c.r, &sys.topo, &d_eff)
                        .ok()
                        .map(|u| u.iter().zip(&a.u_bar).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())));
                    seg.kappa = Some(a.kappa_value());
                    seg.u_bar = Some(a.u_bar.clone());
                    seg.total_cost = Some(a.total_cost);
                    seg.lambda_bar = a.lambda_bar.clone();
                }
                Err(e) => seg.error = Some(e.to_string()),
            }
            seg
        })
        .collect();
    AllocationReport { scenario: p.scenario.name.clone(), time_unit: p.time_unit.suffix().into(), segments }
}

/// Offline checks at one reference equilibrium.
#[derive(Debug, Clone, Serialize)]
pub struct ReferenceChecks {
    pub from_time: f64,
    pub residual_max: f64,
    pub residuals: Vec<f64>,
    pub passivity_trials: Option<usize>,
    pub passivity_mismatch: Option<f64>,
    pub passivity_max_vdot: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisReport {
    pub scenario: String,
    pub variant: String,
    pub references: Vec<ReferenceChecks>,
    pub observability_rank: usize,
    pub observable: bool,
    pub actuated_zero_forcing: bool,
    pub minimal_zero_forcing_sets: Option<Vec<Vec<usize>>>,
    pub sparsity_passed: bool,
    pub sparsity_violations: Vec<String>,
    pub spectral_radius: Option<f64>,
    pub dt_times_spectral_radius: Option<f64>,
    pub warnings: Vec<String>,
}

pub const RESIDUAL_TOL: f64 = 1e-9;
pub const PASSIVITY_TOL: f64 = 1e-8;
pub const PASSIVITY_TRIALS: usize = 1000;

impl AnalysisReport {
    pub fn passed(&self) -> bool {
        let refs_ok = self.references.iter().all(|r| {
            r.error.is_none()
                && r.residual_max <= RESIDUAL_TOL
                && r.passivity_mismatch.is_none_or(|m| m <= PASSIVITY_TOL)
                && r.passivity_max_vdot.is_none_or(|v| v <= 1e-12)
        });
        let zf_ok = self.variant != Variant::Potential.name() || self.actuated_zero_forcing;
        refs_ok && zf_ok && self.sparsity_passed
    }

    pub fn text(&self) -> String {
        let mark = |ok: bool| if ok { "PASS" } else { "FAIL" };
        let mut s = String::new();
        let _ = writeln!(s, "analysis of scenario {} ({} controller)", self.scenario, self.variant);
        for r in &self.references {
            let _ = writeln!(s);
            let _ = writeln!(s, "reference from t = {}", r.from_time);
            if let Some(e) = &r.error {
                let _ = writeln!(s, "  FAIL equilibrium: {e}");
                continue;
            }
            let res: Vec<String> = r.residuals.iter().map(|v| format!("{v:.3e}")).collect();
            let _ = writeln!(
                s,
                "  {} equilibrium residuals [{}] (max {:.3e}, tol {RESIDUAL_TOL:e})",
                mark(r.residual_max <= RESIDUAL_TOL),
                res.join(", "),
                r.residual_max
            );
            match (r.passivity_trials, r.passivity_mismatch, r.passivity_max_vdot) {
                (Some(n), Some(m), Some(v)) => {
                    let _ = writeln!(
                        s,
                        "  {} storage identities over {n} random states: max relative mismatch {m:.3e}, max Vdot {v:.3e}",
                        mark(m <= PASSIVITY_TOL && v <= 1e-12)
                    );
                }
                _ => {
                    let _ = writeln!(s, "  storage identities: not applicable to the {} controller", self.variant);
                }
            }
        }
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "INFO observability of the flow subsystem from actuated outputs: rank {} ({})",
            self.observability_rank,
            if self.observable { "observable" } else { "not observable" }
        );
        let _ = writeln!(
            s,
            "{} actuated set is {}a zero forcing set",
            if self.variant == Variant::Potential.name() { mark(self.actuated_zero_forcing) } else { "INFO" },
            if self.actuated_zero_forcing { "" } else { "not " }
        );
        match &self.minimal_zero_forcing_sets {
            Some(sets) => {
                let list: Vec<String> = sets
                    .iter()
                    .map(|z| format!("{{{}}}", z.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")))
                    .collect();
                let _ = writeln!(s, "     minimal zero forcing sets: {}", list.join(" "));
            }
            None => {
                let _ = writeln!(s, "     minimal zero forcing sets: skipped (more than {DEFAULT_ZF_MAX_N} nodes)");
            }
        }
        if self.sparsity_passed {
            let _ = writeln!(s, "PASS controller reads only local and neighbour states");
        } else {
            let _ = writeln!(s, "FAIL controller sparsity: {}", self.sparsity_violations.join("; "));
        }
        if let (Some(rho), Some(x)) = (self.spectral_radius, self.dt_times_spectral_radius) {
            let _ = writeln!(s, "INFO spectral radius at t=0 {rho:.6e}, dt*rho {x:.3e}");
        }
        for w in &self.warnings {
            let _ = writeln!(s, "warning: {w}");
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "result: {}", mark(self.passed()));
        s
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("analysis report serialises")
    }
}

pub fn analysis_report(p: &Prepared) -> Result<AnalysisReport, RunError> {
    let sys = &p.system;
    let times = reference_times(p);
    let pairs = reference_pairs(&p.schedule, sys.topo.n());
    let mut references = Vec::new();
    for (k, (t, (d, ybar))) in times.into_iter().zip(pairs).enumerate() {
        let mut r = ReferenceChecks {
            from_time: t,
            residual_max: f64::NAN,
            residuals: vec![],
            passivity_trials: None,
            passivity_mismatch: None,
            passivity_max_vdot: None,
            error: None,
        };
        let eq = match Equilibrium::construct(sys, &d, &ybar) {
            Ok(eq) => eq,
            Err(e) => {
                r.error = Some(e.to_string());
                references.push(r);
                continue;
            }
        };
        let z = Initial::equilibrium().resolve(sys, Some(&eq), &ybar)?.z;
        let res = equilibrium_residual(sys, &z, &d, &ybar)?;
        r.residuals = res.r.to_vec();
        r.residual_max = res.max;
        if sys.variant != Variant::Reduced {
            let rep = passivity_check(sys, &eq, PASSIVITY_TRIALS, 0x0b5e_55ed + k as u64)?;
            r.passivity_trials = Some(rep.trials);
            r.passivity_mismatch = Some(rep.max_mismatch());
            r.passivity_max_vdot = Some(rep.max_vdot);
        }
        references.push(r);
    }
    let (rank, observable) = observability_rank(&sys.topo, &sys.plant.tx, &sys.ctrl.t_mu)?;
    let ve: BTreeSet<usize> = sys.topo.actuated().iter().copied().collect();
    let zf = is_zero_forcing(&sys.topo, &ve);
    let minimal = minimal_zero_forcing_sets(&sys.topo, DEFAULT_ZF_MAX_N)
        .ok()
        .map(|sets| sets.into_iter().map(|z| z.into_iter().map(|v| v + 1).collect()).collect());
    let sparsity = sparsity_audit(sys);

    let (d0, y0) = reference_pairs(&p.schedule, sys.topo.n()).swap_remove(0);
    let rho = p
        .initial
        .resolve(sys, Equilibrium::construct(sys, &d0, &y0).ok().as_ref(), &y0)
        .ok()
        .and_then(|s| spectral_radius(sys, &d0, &y0, &s.z));
    Ok(AnalysisReport {
        scenario: p.scenario.name.clone(),
        variant: sys.variant.name().into(),
        references,
        observability_rank: rank,
        observable,
        actuated_zero_forcing: zf,
        minimal_zero_forcing_sets: minimal,
        sparsity_passed: sparsity.passed,
        sparsity_violations: sparsity.violations,
        spectral_radius: rho,
        dt_times_spectral_radius: rho.map(|r| r * p.settings.dt),
        warnings: p.warnings.clone(),
    })
}

/// Result of one scenario in a sweep.
#[derive(Debug, Clone)]
pub struct SweepEntry {
    pub path: PathBuf,
    pub out_dir: PathBuf,
    pub status: Status,
    pub message: String,
}

/// Runs every file matching `pattern` in parallel, each into
/// `out_root/<file stem>`.
pub fn sweep(pattern: &str, out_root: &Path) -> Result<Vec<SweepEntry>, RunError> {
    let paths: Vec<PathBuf> = glob::glob(pattern)
        .map_err(|e| RunError::Runtime(format!("bad pattern {pattern}: {e}")))?
        .filter_map(|p| p.ok())
        .filter(|p| p.is_file())
        .collect();
    if paths.is_empty() {
        return Err(RunError::Runtime(format!("no scenario files match {pattern}")));
    }
    let mut stems = BTreeSet::new();
    for p in &paths {
        let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        if !stems.insert(stem.clone()) {
            return Err(RunError::Runtime(format!("two scenario files share the name {stem}")));
        }
    }
    Ok(paths
        .par_iter()
        .map(|path| {
            let out_dir = out_root.join(path.file_stem().unwrap_or_default());
            let result = Scenario::load(path)
                .and_then(|s| s.prepare())
                .map_err(RunError::from)
                .and_then(|p| run(&p, &out_dir));
            let (status, message) = match result {
                Ok(o) => {
                    let failed: Vec<&str> = o.monitors.iter().filter(|m| !m.passed).map(|m| m.name.as_str()).collect();
                    if failed.is_empty() {
                        (Status::Pass, "all monitors passed".to_string())
                    } else {
                        (Status::MonitorFailure, format!("failed: {}", failed.join(", ")))
                    }
                }
                Err(e) => (e.status(), e.to_string()),
            };
            SweepEntry { path: path.clone(), out_dir, status, message }
        })
        .collect())
}
