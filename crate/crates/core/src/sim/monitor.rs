use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::Variant;
use crate::real::{norm2, Real};

use super::integrate::{RunLog, LYAPUNOV_STEP_RTOL};
use super::ClosedLoop;

/// Which online checks a run evaluates.
#[derive(Debug, Clone, PartialEq)]
pub struct MonitorSet<T> {
    /// Flow and input strictly inside their bounds at every step.
    pub constraints: bool,
    /// Storage non-increasing per step and closed-form V̇ ≤ 0.
    pub lyapunov: bool,
    /// Terminal `‖y − ȳ‖∞` bound at the end of every segment.
    pub output_band: Option<T>,
    /// Terminal `‖u − ū‖∞ ≤ rel · ‖ū‖∞` at the end of the run.
    pub input_band_rel: Option<T>,
    /// Report sustained oscillation of the output error in the last segment.
    pub oscillation: bool,
}

impl<T: Real> Default for MonitorSet<T> {
    fn default() -> Self {
        Self { constraints: true, lyapunov: true, output_band: None, input_band_rel: None, oscillation: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonitorOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl MonitorOutcome {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self { name: name.into(), passed, detail }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentMetrics<T> {
    pub t_start: T,
    pub t_end: T,
    pub output_error: T,
    pub input_error: T,
    /// Time from segment start after which the logged output error stays
    /// within the band; `None` if it never settles.
    pub settling_time: Option<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport<T> {
    pub segments: Vec<SegmentMetrics<T>>,
    pub min_flow_margin: T,
    pub min_input_margin: T,
}

/// Per-segment terminal errors, settling times to `band` and the run-wide
/// constraint margins.
pub fn convergence_metrics<T: Real>(log: &RunLog<T>, band: T) -> ConvergenceReport<T> {
    let segments = log
        .segments
        .iter()
        .enumerate()
        .map(|(si, seg)| {
            let mut last_out: Option<T> = None;
            let mut any = false;
            for s in log.samples.iter().filter(|s| s.segment == si) {
                any = true;
                let err = s.y.iter().zip(&seg.ybar).fold(T::zero(), |a, (&y, &yb)| a.max((y - yb).abs()));
                if err > band {
                    last_out = Some(s.t);
                }
            }
            let settling_time = match (any, last_out) {
                (false, _) => None,
                (true, None) => Some(T::zero()),
                (true, Some(t)) if t >= seg.t_end => None,
                (true, Some(t)) => Some(t - seg.t_start),
            };
            SegmentMetrics {
                t_start: seg.t_start,
                t_end: seg.t_end,
                output_error: seg.final_output_error,
                input_error: seg.final_input_error,
                settling_time,
            }
        })
        .collect();
    ConvergenceReport { segments, min_flow_margin: log.min_flow_margin, min_input_margin: log.min_input_margin }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OscillationReport<T> {
    /// Peak output error over the third and fourth quarters of the last segment.
    pub amplitude_early: T,
    pub amplitude_late: T,
    pub zero_crossings: usize,
    pub sustained: bool,
}

/// Looks for an output error that neither decays nor settles in the last
/// segment: late peak at least half the earlier peak and above `floor`.
pub fn detect_oscillation<T: Real>(log: &RunLog<T>, floor: T) -> OscillationReport<T> {
    let last = log.segments.len() - 1;
    let seg = &log.segments[last];
    let span = seg.t_end - seg.t_start;
    let t_half = seg.t_start + span / T::lit(2.0);
    let t_3q = seg.t_start + span * T::lit(0.75);
    let (mut early, mut late) = (T::zero(), T::zero());
    let mut crossings = 0;
    let mut prev_sign: Option<bool> = None;
    for s in log.samples.iter().filter(|s| s.segment == last && s.t >= t_half) {
        let e0 = s.y[0] - seg.ybar[0];
        let err = s.y.iter().zip(&seg.ybar).fold(T::zero(), |a, (&y, &yb)| a.max((y - yb).abs()));
        if s.t < t_3q {
            early = early.max(err);
        } else {
            late = late.max(err);
        }
        if e0 != T::zero() {
            let sign = e0 > T::zero();
            if prev_sign.is_some_and(|p| p != sign) {
                crossings += 1;
            }
            prev_sign = Some(sign);
        }
    }
    let sustained = late > floor && late >= early / T::lit(2.0);
    OscillationReport { amplitude_early: early, amplitude_late: late, zero_crossings: crossings, sustained }
}

/// Estimates the spectral radius of the closed-loop Jacobian at `z` by power
/// iteration on a central-difference Jacobian.
pub fn spectral_radius<T: Real>(sys: &ClosedLoop<T>, d: &[T], ybar: &[T], z: &[T]) -> Option<T> {
    let dim = z.len();
    let mut ws = sys.workspace();
    let mut fp = vec![T::zero(); dim];
    let mut fm = vec![T::zero(); dim];
    let mut jac = vec![T::zero(); dim * dim];
    let mut zz = z.to_vec();
    for j in 0..dim {
        let h = T::lit(1e-6) * (T::one() + z[j].abs());
        zz[j] = z[j] + h;
        sys.rhs_into(d, ybar, &zz, &mut fp, &mut ws);
        zz[j] = z[j] - h;
        sys.rhs_into(d, ybar, &zz, &mut fm, &mut ws);
        zz[j] = z[j];
        for i in 0..dim {
            jac[i * dim + j] = (fp[i] - fm[i]) / (T::lit(2.0) * h);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut v: Vec<T> = (0..dim).map(|_| T::lit(rng.gen_range(-1.0..1.0))).collect();
    let nv = norm2(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let (iters, keep) = (400, 200);
    let mut log_sum = 0.0;
    let mut w = vec![T::zero(); dim];
    for it in 0..iters {
        for i in 0..dim {
            w[i] = (0..dim).fold(T::zero(), |a, j| a + jac[i * dim + j] * v[j]);
        }
        let nw = norm2(&w);
        if !(nw > T::zero()) || !nw.is_finite() {
            return if nw == T::zero() { Some(T::zero()) } else { None };
        }
        if it >= iters - keep {
            log_sum += nw.to_f64_lossy().ln();
        }
        for i in 0..dim {
            v[i] = w[i] / nw;
        }
    }
    Some(T::lit((log_sum / keep as f64).exp()))
}

/// Evaluates the enabled monitors on a finished run.
pub fn evaluate_monitors<T: Real>(sys: &ClosedLoop<T>, log: &RunLog<T>, monitors: &MonitorSet<T>) -> Vec<MonitorOutcome> {
    let mut out = Vec::new();
    if monitors.constraints {
        let ok = log.min_flow_margin > T::zero() && log.min_input_margin > T::zero();
        out.push(MonitorOutcome::new(
            "constraints",
            ok,
            format!(
                "min flow margin {:.6e}, min input margin {:.6e}",
                log.min_flow_margin.to_f64_lossy(),
                log.min_input_margin.to_f64_lossy()
            ),
        ));
    }
    if monitors.lyapunov && sys.variant != Variant::Reduced {
        let checked: Vec<_> = log.segments.iter().filter(|s| s.equilibrium.is_some()).collect();
        if checked.is_empty() {
            out.push(MonitorOutcome::new("lyapunov", true, "not applicable: no constant reference".into()));
        } else {
            let violations: usize = checked.iter().map(|s| s.lyapunov_violations).sum();
            let max_vdot = checked.iter().fold(T::neg_infinity(), |a, s| a.max(s.max_vdot));
            let max_inc = checked.iter().fold(T::neg_infinity(), |a, s| a.max(s.max_v_increase));
            let ok = violations == 0 && max_vdot <= T::lit(1e-12);
            out.push(MonitorOutcome::new(
                "lyapunov",
                ok,
                format!(
                    "{violations} steps with V increase above {LYAPUNOV_STEP_RTOL:e}(1+V0); max increase {:.3e}; max Vdot {:.3e}",
                    max_inc.to_f64_lossy(),
                    max_vdot.to_f64_lossy()
                ),
            ));
        }
    }
    if let Some(band) = monitors.output_band {
        let mut parts = Vec::new();
        let mut ok = true;
        for s in &log.segments {
            ok &= s.final_output_error <= band;
            parts.push(format!("t={:.6}: {:.6e}", s.t_end.to_f64_lossy(), s.final_output_error.to_f64_lossy()));
        }
        if log.warnings.iter().any(|w| w.starts_with("Assumption 9")) {
            ok = false;
            parts.push("uncertified (Assumption 9)".into());
        }
        out.push(MonitorOutcome::new(
            "convergence",
            ok,
            format!("terminal |y - ybar|_inf per segment (band {:e}): {}", band.to_f64_lossy(), parts.join(", ")),
        ));
    }
    if let Some(rel) = monitors.input_band_rel {
        let s = log.segments.last().expect("at least one segment");
        let scale = s.u_bar.as_ref().map_or(T::one(), |u| crate::real::norm_inf(u));
        let ok = s.final_input_error <= rel * scale;
        out.push(MonitorOutcome::new(
            "input_optimality",
            ok,
            format!(
                "terminal |u - ubar|_inf = {:.6e} (bound {:.6e})",
                s.final_input_error.to_f64_lossy(),
                (rel * scale).to_f64_lossy()
            ),
        ));
    }
    if monitors.oscillation {
        let floor = monitors.output_band.unwrap_or_else(|| T::lit(1e-6));
        let r = detect_oscillation(log, floor);
        out.push(MonitorOutcome::new(
            "oscillation",
            true,
            format!(
                "{}: late amplitude {:.6e}, earlier amplitude {:.6e}, {} zero crossings",
                if r.sustained { "sustained oscillation" } else { "no sustained oscillation" },
                r.amplitude_late.to_f64_lossy(),
                r.amplitude_early.to_f64_lossy(),
                r.zero_crossings
            ),
        ));
    }
    out
}
