//! Plant dynamics `T_x ẋ = Ψ(x) − Bλ + Eu − d` and the disturbance and
//! setpoint schedules driving it.

use crate::error::{check_len, Error, Result};
use crate::graph::NetworkTopology;
use crate::real::Real;
use crate::saturation::Saturation;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Dynamic flow controller with ξ, input controller with φ.
    Basic,
    /// Basic controllers with the state-dependent term Ψ(x) in the plant.
    Compartmental,
    /// Flows driven by potential differences: `T_μ μ̇ = Bᵀ(y − ȳ)`, no ξ.
    Potential,
    /// Controllers without ξ and φ. Used to exhibit sustained oscillations.
    Reduced,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Basic => "basic",
            Variant::Compartmental => "compartmental",
            Variant::Potential => "potential",
            Variant::Reduced => "reduced",
        }
    }

    pub fn has_xi(self) -> bool {
        matches!(self, Variant::Basic | Variant::Compartmental)
    }

    pub fn has_phi(self) -> bool {
        self != Variant::Reduced
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantParams<T> {
    /// Diagonal of `T_x`.
    pub tx: Vec<T>,
    /// Output maps `h_i`.
    pub h: Vec<Saturation<T>>,
}

impl<T: Real> PlantParams<T> {
    /// Identity outputs with the given storage gains.
    pub fn new(tx: Vec<T>) -> Self {
        let h = vec![Saturation::identity(); tx.len()];
        Self { tx, h }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        check_len("T_x", self.tx.len(), n)?;
        check_len("h", self.h.len(), n)?;
        if self.tx.iter().any(|&t| !(t.is_finite() && t > T::zero())) {
            return Err(Error::Validation("T_x must be diagonal with positive entries".into()));
        }
        if self.h.iter().any(|h| !h.is_strictly_increasing()) {
            return Err(Error::Validation("output maps h_i must be strictly increasing".into()));
        }
        Ok(())
    }

    pub fn output(&self, x: &[T], y: &mut [T]) {
        for ((yi, xi), h) in y.iter_mut().zip(x).zip(&self.h) {
            *yi = h.eval(*xi);
        }
    }

    pub fn has_identity_output(&self) -> bool {
        self.h.iter().all(Saturation::is_identity)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompartmentalParams<T> {
    /// One map per compartmental edge.
    pub gamma: Vec<Saturation<T>>,
    /// One map per node with state-dependent in/outflow.
    pub eta: Vec<Saturation<T>>,
}

impl<T: Real> CompartmentalParams<T> {
    pub fn validate(&self, topo: &NetworkTopology) -> Result<()> {
        check_len("gamma", self.gamma.len(), topo.compartmental_edges().len())?;
        check_len("eta", self.eta.len(), topo.state_dependent_io().len())?;
        Ok(())
    }
}

/// `out = Ψ(x) = −B_c γ(B_cᵀ h(x)) − E_c η(E_cᵀ h(x))`, given `y = h(x)`.
pub fn psi_from_output<T: Real>(
    topo: &NetworkTopology,
    comp: &CompartmentalParams<T>,
    y: &[T],
    out: &mut [T],
) {
    out.iter_mut().for_each(|o| *o = T::zero());
    for (&(a, b), g) in topo.compartmental_edges().iter().zip(&comp.gamma) {
        let q = g.eval(y[a] - y[b]);
        out[a] -= q;
        out[b] += q;
    }
    for (&v, e) in topo.state_dependent_io().iter().zip(&comp.eta) {
        out[v] -= e.eval(y[v]);
    }
}

pub fn psi<T: Real>(
    topo: &NetworkTopology,
    params: &PlantParams<T>,
    comp: &CompartmentalParams<T>,
    x: &[T],
) -> Vec<T> {
    let mut y = vec![T::zero(); x.len()];
    params.output(x, &mut y);
    let mut out = vec![T::zero(); x.len()];
    psi_from_output(topo, comp, &y, &mut out);
    out
}

/// Plant right-hand side `ẋ = T_x⁻¹(Ψ(x) − Bλ + Eu − d)`; Ψ only for the
/// compartmental variant.
#[allow(clippy::too_many_arguments)]
pub fn plant_rhs<T: Real>(
    variant: Variant,
    topo: &NetworkTopology,
    params: &PlantParams<T>,
    comp: Option<&CompartmentalParams<T>>,
    x: &[T],
    lambda: &[T],
    u: &[T],
    d: &[T],
) -> Result<Vec<T>> {
    let n = topo.n();
    check_len("x", x.len(), n)?;
    check_len("lambda", lambda.len(), topo.m())?;
    check_len("u", u.len(), topo.p())?;
    check_len("d", d.len(), n)?;
    params.validate(n)?;
    let mut out = vec![T::zero(); n];
    if variant == Variant::Compartmental {
        let comp = comp.ok_or_else(|| Error::Validation("compartmental variant needs Ψ parameters".into()))?;
        comp.validate(topo)?;
        out = psi(topo, params, comp, x);
    }
    for (o, &di) in out.iter_mut().zip(d) {
        *o -= di;
    }
    let neg: Vec<T> = lambda.iter().map(|&l| -l).collect();
    topo.add_b(&neg, &mut out);
    topo.add_e(u, &mut out);
    for (o, &t) in out.iter_mut().zip(&params.tx) {
        *o /= t;
    }
    Ok(out)
}

/// `1ᵀ(Eu − d)`, the rate of change of the total storage.
pub fn aggregate_balance<T: Real>(topo: &NetworkTopology, u: &[T], d: &[T]) -> T {
    debug_assert_eq!(u.len(), topo.p());
    crate::real::sum(u) - crate::real::sum(d)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Setpoint<T> {
    /// Piecewise-constant `(switch time, ȳ)` list.
    Steps(Vec<(T, Vec<T>)>),
    /// `ȳ` held at `y1` before `t1`, linear on `[t1, t2]`, held at `y2` after.
    Ramp { t1: T, t2: T, y1: Vec<T>, y2: Vec<T> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule<T> {
    /// Piecewise-constant `(switch time, d)` list; the first entry applies from
    /// the start of the run.
    pub disturbance: Vec<(T, Vec<T>)>,
    pub setpoint: Setpoint<T>,
}

fn piecewise<T: Real>(list: &[(T, Vec<T>)], t: T) -> &[T] {
    let mut cur = &list[0].1;
    for (ts, v) in list {
        if *ts <= t {
            cur = v;
        } else {
            break;
        }
    }
    cur
}

impl<T: Real> Schedule<T> {
    pub fn constant(d: Vec<T>, ybar: Vec<T>) -> Self {
        Self { disturbance: vec![(T::zero(), d)], setpoint: Setpoint::Steps(vec![(T::zero(), ybar)]) }
    }

    pub fn validate(&self, n: usize, h: &[Saturation<T>]) -> Result<()> {
        let increasing = |ts: &mut dyn Iterator<Item = T>| {
            let v: Vec<T> = ts.collect();
            v.windows(2).all(|w| w[0] < w[1])
        };
        if self.disturbance.is_empty() {
            return Err(Error::Validation("disturbance schedule is empty".into()));
        }
        if !increasing(&mut self.disturbance.iter().map(|e| e.0)) {
            return Err(Error::Validation("disturbance switch times must be strictly increasing".into()));
        }
        for (_, d) in &self.disturbance {
            check_len("d", d.len(), n)?;
        }
        let values: Vec<&Vec<T>> = match &self.setpoint {
            Setpoint::Steps(list) => {
                if list.is_empty() {
                    return Err(Error::Validation("setpoint schedule is empty".into()));
                }
                if !increasing(&mut list.iter().map(|e| e.0)) {
                    return Err(Error::Validation("setpoint switch times must be strictly increasing".into()));
                }
                list.iter().map(|e| &e.1).collect()
            }
            Setpoint::Ramp { t1, t2, y1, y2 } => {
                if !(t2 > t1) {
                    return Err(Error::Validation("ramp needs t2 > t1".into()));
                }
                vec![y1, y2]
            }
        };
        for y in values {
            check_len("setpoint", y.len(), n)?;
            for (i, (&yi, hi)) in y.iter().zip(h).enumerate() {
                if !hi.contains(yi) {
                    return Err(Error::Validation(format!(
                        "Assumption 4: setpoint {yi} at node {} outside the range of h",
                        i + 1
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn disturbance_at(&self, t: T) -> &[T] {
        piecewise(&self.disturbance, t)
    }

    pub fn setpoint_at(&self, t: T, out: &mut [T]) {
        match &self.setpoint {
            Setpoint::Steps(list) => out.copy_from_slice(piecewise(list, t)),
            Setpoint::Ramp { t1, t2, y1, y2 } => {
                let s = ((t - *t1) / (*t2 - *t1)).max(T::zero()).min(T::one());
                for ((o, &a), &b) in out.iter_mut().zip(y1).zip(y2) {
                    *o = a + s * (b - a);
                }
            }
        }
    }

    pub fn is_ramp(&self) -> bool {
        matches!(self.setpoint, Setpoint::Ramp { .. })
    }

    /// Sorted, deduplicated times at which `d` or `ȳ` changes or kinks.
    pub fn switch_times(&self) -> Vec<T> {
        let mut ts: Vec<T> = self.disturbance.iter().skip(1).map(|e| e.0).collect();
        match &self.setpoint {
            Setpoint::Steps(list) => ts.extend(list.iter().skip(1).map(|e| e.0)),
            Setpoint::Ramp { t1, t2, .. } => ts.extend([*t1, *t2]),
        }
        ts.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        ts.dedup();
        ts
    }
}

/// Constant disturbance of the incremental system `x̃ = x − ȳ(t)` under a
/// ramp setpoint: `d̃ = d + T_x (ȳ(t₂) − ȳ(t₁))/(t₂ − t₁)`. Requires `h(x) = x`.
pub fn ramp_transform<T: Real>(setpoint: &Setpoint<T>, params: &PlantParams<T>, d: &[T]) -> Result<Vec<T>> {
    if !params.has_identity_output() {
        return Err(Error::Validation("ramp tracking requires identity output maps".into()));
    }
    match setpoint {
        Setpoint::Steps(list) => {
            if list.len() > 1 {
                return Err(Error::Validation("ramp transform needs a constant or ramp setpoint".into()));
            }
            Ok(d.to_vec())
        }
        Setpoint::Ramp { t1, t2, y1, y2 } => {
            if !(*t2 > *t1) {
                return Err(Error::Validation("ramp needs t2 > t1".into()));
            }
            check_len("ramp start", y1.len(), d.len())?;
            check_len("ramp end", y2.len(), d.len())?;
            let span = *t2 - *t1;
            check_len("T_x", params.tx.len(), d.len())?;
            Ok(d.iter().zip(y1).zip(y2).zip(&params.tx).map(|(((&di, &a), &b), &t)| di + t * (b - a) / span).collect())
        }
    }
}
