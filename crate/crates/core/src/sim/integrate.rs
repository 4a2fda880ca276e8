use std::collections::BTreeSet;
use std::io::{self, Write};

use crate::controllers::ControllerState;
use crate::error::{check_len, Error, Result};
use crate::graph::is_zero_forcing;
use crate::model::{Schedule, Variant};
use crate::real::{norm_inf, Real};

use super::monitor::{spectral_radius, MonitorSet};
use super::{storage_v, storage_vdot, ClosedLoop, Equilibrium, SimState, Workspace};

/// Classic fourth-order Runge–Kutta with preallocated stages.
#[derive(Debug, Clone)]
pub struct Rk4<T> {
    k1: Vec<T>,
    k2: Vec<T>,
    k3: Vec<T>,
    k4: Vec<T>,
    tmp: Vec<T>,
}

impl<T: Real> Rk4<T> {
    pub fn new(dim: usize) -> Self {
        let z = vec![T::zero(); dim];
        Self { k1: z.clone(), k2: z.clone(), k3: z.clone(), k4: z.clone(), tmp: z }
    }

    /// Advances `z` from `t` to `t + dt` in place.
    pub fn step<F: FnMut(T, &[T], &mut [T])>(&mut self, f: &mut F, t: T, dt: T, z: &mut [T]) {
        let two = T::lit(2.0);
        let half = dt / two;
        f(t, z, &mut self.k1);
        for i in 0..z.len() {
            self.tmp[i] = z[i] + half * self.k1[i];
        }
        f(t + half, &self.tmp, &mut self.k2);
        for i in 0..z.len() {
            self.tmp[i] = z[i] + half * self.k2[i];
        }
        f(t + half, &self.tmp, &mut self.k3);
        for i in 0..z.len() {
            self.tmp[i] = z[i] + dt * self.k3[i];
        }
        f(t + dt, &self.tmp, &mut self.k4);
        let sixth = dt / T::lit(6.0);
        for i in 0..z.len() {
            z[i] += sixth * (self.k1[i] + two * (self.k2[i] + self.k3[i]) + self.k4[i]);
        }
    }
}

/// Integrates `ż = f(t, z)` over `steps` fixed steps and returns the final state.
pub fn integrate_fixed<T: Real, F: FnMut(T, &[T], &mut [T])>(mut f: F, t0: T, z0: &[T], dt: T, steps: usize) -> Vec<T> {
    let mut z = z0.to_vec();
    let mut rk = Rk4::new(z.len());
    for k in 0..steps {
        let t = t0 + T::from_count(k) * dt;
        rk.step(&mut f, t, dt, &mut z);
    }
    z
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitMode {
    /// Controller states at the preimage of the range midpoint, dissipation
    /// states matching their outputs.
    Midrange,
    /// Controller states at the reference equilibrium of the first segment.
    Equilibrium,
}

/// Initial condition. Missing entries follow `mode`; a missing `x` defaults
/// to `h⁻¹(ȳ(0))`.
#[derive(Debug, Clone, PartialEq)]
pub struct Initial<T> {
    pub mode: InitMode,
    pub x: Option<Vec<T>>,
    pub mu: Option<Vec<T>>,
    pub xi: Option<Vec<T>>,
    pub theta: Option<Vec<T>>,
    pub phi: Option<Vec<T>>,
}

impl<T: Real> Initial<T> {
    pub fn midrange(x: Vec<T>) -> Self {
        Self { mode: InitMode::Midrange, x: Some(x), mu: None, xi: None, theta: None, phi: None }
    }

    pub fn equilibrium() -> Self {
        Self { mode: InitMode::Equilibrium, x: None, mu: None, xi: None, theta: None, phi: None }
    }

    pub fn resolve(&self, sys: &ClosedLoop<T>, eq: Option<&Equilibrium<T>>, ybar0: &[T]) -> Result<SimState<T>> {
        let lay = sys.layout();
        let c = &sys.ctrl;
        let x = match &self.x {
            Some(x) => x.clone(),
            None => ybar0.iter().zip(&sys.plant.h).map(|(&y, h)| h.inverse(y)).collect::<Result<_>>()?,
        };
        let eq_needed = || {
            eq.ok_or_else(|| Error::Validation("equilibrium initialisation needs a reference equilibrium".into()))
        };
        let mu = match (&self.mu, self.mode) {
            (Some(v), _) => v.clone(),
            (None, InitMode::Midrange) => c.f.iter().map(|f| f.inverse(f.midrange())).collect::<Result<_>>()?,
            (None, InitMode::Equilibrium) => eq_needed()?.mu.clone(),
        };
        let theta = match (&self.theta, self.mode) {
            (Some(v), _) => v.clone(),
            (None, InitMode::Midrange) => c.g.iter().map(|g| g.inverse(g.midrange())).collect::<Result<_>>()?,
            (None, InitMode::Equilibrium) => eq_needed()?.theta.clone(),
        };
        check_len("initial mu", mu.len(), lay.m)?;
        check_len("initial theta", theta.len(), lay.p)?;
        let xi = if lay.has_xi {
            match (&self.xi, self.mode) {
                (Some(v), _) => v.clone(),
                (None, InitMode::Equilibrium) => eq_needed()?.xi.clone(),
                (None, InitMode::Midrange) => mu.iter().zip(&c.f).map(|(&m, f)| f.eval(m)).collect(),
            }
        } else {
            Vec::new()
        };
        let phi = if lay.has_phi {
            match (&self.phi, self.mode) {
                (Some(v), _) => v.clone(),
                (None, InitMode::Equilibrium) => eq_needed()?.phi.clone(),
                (None, InitMode::Midrange) => theta.iter().zip(&c.g).map(|(&t, g)| g.eval(t)).collect(),
            }
        } else {
            Vec::new()
        };
        SimState::new(lay, T::zero(), &x, &ControllerState { mu, xi, theta, phi })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSettings<T> {
    pub dt: T,
    pub horizon: T,
    /// Log every `log_every` steps, plus the first step, the last step and
    /// the step at every switch time.
    pub log_every: usize,
    pub monitors: MonitorSet<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample<T> {
    pub t: T,
    pub segment: usize,
    pub x: Vec<T>,
    pub y: Vec<T>,
    pub lambda: Vec<T>,
    pub u: Vec<T>,
    pub v: T,
    pub vdot: T,
    pub margin_flow: T,
    pub margin_input: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentInfo<T> {
    pub t_start: T,
    pub t_end: T,
    pub d: Vec<T>,
    /// Setpoint at the end of the segment.
    pub ybar: Vec<T>,
    /// Reference used for the storage function; absent for ramp setpoints.
    pub equilibrium: Option<Equilibrium<T>>,
    /// Optimal input for this segment's `d` (and final `ȳ`).
    pub u_bar: Option<Vec<T>>,
    pub v_start: T,
    pub v_end: T,
    pub final_output_error: T,
    pub final_input_error: T,
    /// Largest per-step increase of V, and the number of steps exceeding
    /// `1e-8 (1 + V(segment start))`.
    pub max_v_increase: T,
    pub lyapunov_violations: usize,
    pub max_vdot: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog<T> {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub dt: T,
    pub steps: usize,
    pub samples: Vec<Sample<T>>,
    pub segments: Vec<SegmentInfo<T>>,
    pub warnings: Vec<String>,
    /// Minimum constraint margins over every integrator step.
    pub min_flow_margin: T,
    pub min_input_margin: T,
    pub final_state: SimState<T>,
    pub spectral_radius: Option<T>,
}

pub const LYAPUNOV_STEP_RTOL: f64 = 1e-8;

fn fmt<T: Real>(v: T) -> String {
    format!("{:.16e}", v.to_f64_lossy())
}

impl<T: Real> RunLog<T> {
    pub fn csv_header(&self) -> String {
        let mut cols = vec!["t".to_string()];
        cols.extend((1..=self.n).map(|i| format!("x_{i}")));
        cols.extend((1..=self.n).map(|i| format!("y_{i}")));
        cols.extend((1..=self.m).map(|i| format!("lambda_{i}")));
        cols.extend((1..=self.p).map(|i| format!("u_{i}")));
        cols.extend(["V", "Vdot", "margin_flow_min", "margin_input_min"].map(String::from));
        cols.join(",")
    }

    /// Writes the trajectory with 17 significant digits per value.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{}", self.csv_header())?;
        let mut line = String::new();
        for s in &self.samples {
            line.clear();
            line.push_str(&fmt(s.t));
            for v in s.x.iter().chain(&s.y).chain(&s.lambda).chain(&s.u) {
                line.push(',');
                line.push_str(&fmt(*v));
            }
            for v in [s.v, s.vdot, s.margin_flow, s.margin_input] {
                line.push(',');
                line.push_str(&fmt(v));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn last_sample(&self) -> &Sample<T> {
        self.samples.last().expect("run log has at least one sample")
    }

    /// Last sample at or before `t`.
    pub fn sample_at(&self, t: T) -> &Sample<T> {
        let mut cur = &self.samples[0];
        for s in &self.samples {
            if s.t <= t {
                cur = s;
            } else {
                break;
            }
        }
        cur
    }
}

struct Segment {
    k0: usize,
    k1: usize,
}

fn segments<T: Real>(schedule: &Schedule<T>, dt: T, steps: usize) -> Vec<Segment> {
    let mut cuts: BTreeSet<usize> = BTreeSet::new();
    cuts.insert(0);
    cuts.insert(steps);
    for t in schedule.switch_times() {
        let k = (t / dt).round().to_usize().unwrap_or(0);
        if k > 0 && k < steps {
            cuts.insert(k);
        }
    }
    let cuts: Vec<usize> = cuts.into_iter().collect();
    cuts.windows(2).map(|w| Segment { k0: w[0], k1: w[1] }).collect()
}

#[allow(clippy::too_many_arguments)]
fn sample<T: Real>(
    sys: &ClosedLoop<T>,
    ws: &mut Workspace<T>,
    scratch: &mut [T],
    d: &[T],
    ybar: &[T],
    eq: Option<&Equilibrium<T>>,
    t: T,
    segment: usize,
    z: &[T],
) -> Sample<T> {
    sys.rhs_into(d, ybar, z, scratch, ws);
    let (mf, mi) = sys.margins(z);
    let (v, vdot) = match eq {
        Some(eq) => (storage_v(sys, eq, z), storage_vdot(sys, eq, z)),
        None => (T::nan(), T::nan()),
    };
    Sample {
        t,
        segment,
        x: z[sys.layout().x()].to_vec(),
        y: ws.y.clone(),
        lambda: ws.lambda.clone(),
        u: ws.u.clone(),
        v,
        vdot,
        margin_flow: mf,
        margin_input: mi,
    }
}

/// Simulates the closed loop under `schedule` with fixed-step RK4.
///
/// Switch times are snapped to the step grid and each segment is integrated
/// with its own constant `d` (and constant `ȳ` unless the setpoint is a ramp).
/// The storage reference is re-anchored at every switch.
pub fn integrate<T: Real>(
    sys: &ClosedLoop<T>,
    schedule: &Schedule<T>,
    init: &Initial<T>,
    settings: &SimSettings<T>,
) -> Result<RunLog<T>> {
    let lay = sys.layout();
    schedule.validate(lay.n, &sys.plant.h)?;
    if !(settings.dt > T::zero() && settings.dt.is_finite()) {
        return Err(Error::Validation("dt must be positive".into()));
    }
    if !(settings.horizon > T::zero() && settings.horizon.is_finite()) {
        return Err(Error::Validation("horizon must be positive".into()));
    }
    let dt = settings.dt;
    let steps = (settings.horizon / dt).round().to_usize().unwrap_or(0).max(1);
    let log_every = settings.log_every.max(1);
    let segs = segments(schedule, dt, steps);
    let mut warnings = Vec::new();

    if sys.variant == Variant::Potential {
        let ve: BTreeSet<usize> = sys.topo.actuated().iter().copied().collect();
        if !is_zero_forcing(&sys.topo, &ve) {
            let msg = "Assumption 9: actuated set is not a zero forcing set; convergence is not certified".to_string();
            log::warn!("{msg}");
            warnings.push(msg);
        }
    }

    // per-segment constants and references
    let mut seg_d = Vec::with_capacity(segs.len());
    let mut seg_ybar = Vec::with_capacity(segs.len());
    let mut seg_eq: Vec<Option<Equilibrium<T>>> = Vec::with_capacity(segs.len());
    let mut seg_ubar = Vec::with_capacity(segs.len());
    for s in &segs {
        let tmid = T::from_count(s.k0 + s.k1) * dt / T::lit(2.0);
        let d = schedule.disturbance_at(tmid).to_vec();
        let mut ybar = vec![T::zero(); lay.n];
        // a ramp segment is referenced to where the ramp ends
        let t_ref = if schedule.is_ramp() { T::from_count(s.k1) * dt } else { tmid };
        schedule.setpoint_at(t_ref, &mut ybar);
        let eq = Equilibrium::construct(sys, &d, &ybar);
        let eq = match eq {
            Ok(eq) => Some(eq),
            Err(e) if sys.variant == Variant::Reduced => {
                log::debug!("no reference for reduced variant: {e}");
                None
            }
            Err(e) => return Err(e),
        };
        seg_ubar.push(eq.as_ref().map(|e| e.u.clone()));
        let storage_ok = !schedule.is_ramp() && sys.variant != Variant::Reduced;
        seg_eq.push(if storage_ok { eq } else { None });
        seg_d.push(d);
        seg_ybar.push(ybar);
    }

    let mut ybar0 = vec![T::zero(); lay.n];
    schedule.setpoint_at(T::zero(), &mut ybar0);
    let eq0 = Equilibrium::construct(sys, &seg_d[0], &ybar0).ok();
    let mut state = init.resolve(sys, eq0.as_ref(), &ybar0)?;
    let mut z = std::mem::take(&mut state.z);

    let mut ws = sys.workspace();
    let mut scratch = vec![T::zero(); lay.dim()];
    let rho = spectral_radius(sys, &seg_d[0], &ybar0, &z);
    if let Some(rho) = rho {
        if dt * rho > T::lit(0.1) {
            let msg = format!(
                "dt = {} exceeds 1/10 of the smallest time constant {:.3e} (spectral radius estimate {:.3e})",
                dt.to_f64_lossy(),
                1.0 / rho.to_f64_lossy(),
                rho.to_f64_lossy()
            );
            log::warn!("{msg}");
            warnings.push(msg);
        }
    }

    let mut rk = Rk4::new(lay.dim());
    let mut samples = Vec::with_capacity(steps / log_every + 2 * segs.len() + 2);
    let mut infos = Vec::with_capacity(segs.len());
    let (mut min_flow, mut min_input) = sys.margins(&z);
    let ramp = schedule.is_ramp();
    let mut ybar_t = seg_ybar[0].clone();

    for (si, s) in segs.iter().enumerate() {
        let d = &seg_d[si];
        let eq = seg_eq[si].as_ref();
        let ybar_const = &seg_ybar[si];
        if si == 0 {
            schedule.setpoint_at(T::zero(), &mut ybar_t);
            let yb = if ramp { &ybar_t } else { ybar_const };
            samples.push(sample(sys, &mut ws, &mut scratch, d, yb, eq, T::zero(), 0, &z));
        }
        let v_start = eq.map_or(T::nan(), |e| storage_v(sys, e, &z));
        let tol = T::lit(LYAPUNOV_STEP_RTOL) * (T::one() + v_start.abs());
        let mut v_prev = v_start;
        let mut max_inc = T::neg_infinity();
        let mut max_vdot = T::neg_infinity();
        let mut violations = 0usize;
        let check_v = eq.is_some() && settings.monitors.lyapunov;

        let mut ybar_stage = vec![T::zero(); lay.n];
        for k in s.k0..s.k1 {
            let t = T::from_count(k) * dt;
            {
                let mut f = |tt: T, zz: &[T], dz: &mut [T]| {
                    if ramp {
                        schedule.setpoint_at(tt, &mut ybar_stage);
                        sys.rhs_into(d, &ybar_stage, zz, dz, &mut ws);
                    } else {
                        sys.rhs_into(d, ybar_const, zz, dz, &mut ws);
                    }
                };
                rk.step(&mut f, t, dt, &mut z);
            }
            let t1 = T::from_count(k + 1) * dt;
            if z.iter().any(|v| !v.is_finite()) {
                return Err(Error::Diverged {
                    t: t1.to_f64_lossy(),
                    what: "state became non-finite; reduce dt".into(),
                });
            }
            if settings.monitors.constraints {
                let (mf, mi) = sys.margins(&z);
                min_flow = min_flow.min(mf);
                min_input = min_input.min(mi);
            }
            if check_v {
                let e = eq.expect("checked");
                let v = storage_v(sys, e, &z);
                let inc = v - v_prev;
                max_inc = max_inc.max(inc);
                if inc > tol {
                    violations += 1;
                }
                max_vdot = max_vdot.max(storage_vdot(sys, e, &z));
                v_prev = v;
            }
            if (k + 1) % log_every == 0 || k + 1 == s.k1 {
                if ramp {
                    schedule.setpoint_at(t1, &mut ybar_t);
                }
                let yb = if ramp { &ybar_t } else { ybar_const };
                samples.push(sample(sys, &mut ws, &mut scratch, d, yb, eq, t1, si, &z));
            }
        }
        let last = samples.last().expect("segment end is logged");
        let out_err = last.y.iter().zip(ybar_const).fold(T::zero(), |acc, (&a, &b)| acc.max((a - b).abs()));
        let in_err = match &seg_ubar[si] {
            Some(ub) => norm_inf(&last.u.iter().zip(ub).map(|(a, b)| *a - *b).collect::<Vec<T>>()),
            None => T::nan(),
        };
        infos.push(SegmentInfo {
            t_start: T::from_count(s.k0) * dt,
            t_end: T::from_count(s.k1) * dt,
            d: d.clone(),
            ybar: ybar_const.clone(),
            equilibrium: seg_eq[si].clone(),
            u_bar: seg_ubar[si].clone(),
            v_start,
            v_end: last.v,
            final_output_error: out_err,
            final_input_error: in_err,
            max_v_increase: max_inc,
            lyapunov_violations: violations,
            max_vdot,
        });
    }

    let t_end = T::from_count(steps) * dt;
    Ok(RunLog {
        n: lay.n,
        m: lay.m,
        p: lay.p,
        dt,
        steps,
        samples,
        segments: infos,
        warnings,
        min_flow_margin: min_flow,
        min_input_margin: min_input,
        final_state: SimState { t: t_end, z, layout: lay },
        spectral_radius: rho,
    })
}
