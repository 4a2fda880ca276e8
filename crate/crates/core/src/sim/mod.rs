//! Closed-loop assembly, equilibrium reference, storage function and the
//! fixed-step integrator with its monitors.

mod equilibrium;
mod integrate;
mod monitor;

pub use equilibrium::{storage_v, storage_vdot, Equilibrium};
pub use integrate::{integrate, integrate_fixed, Initial, InitMode, Rk4, RunLog, Sample, SegmentInfo, SimSettings};
pub use monitor::{
    convergence_metrics, detect_oscillation, evaluate_monitors, spectral_radius, ConvergenceReport, MonitorOutcome, MonitorSet,
    OscillationReport, SegmentMetrics,
};

use std::ops::Range;

use crate::controllers::{
    flow_ctrl_rhs_into, input_ctrl_rhs_into, potential_flow_rhs_into, reduced_ctrl_rhs_into, ControllerConfig,
    ControllerState,
};
use crate::error::{check_len, Error, Result};
use crate::graph::NetworkTopology;
use crate::model::{psi_from_output, CompartmentalParams, PlantParams, Variant};
use crate::real::Real;

/// Offsets of the state blocks in the flat state vector `(x, μ, ξ, θ, φ)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub has_xi: bool,
    pub has_phi: bool,
}

impl Layout {
    pub fn new(variant: Variant, topo: &NetworkTopology) -> Self {
        Self { n: topo.n(), m: topo.m(), p: topo.p(), has_xi: variant.has_xi(), has_phi: variant.has_phi() }
    }

    fn mx(&self) -> usize {
        if self.has_xi {
            self.m
        } else {
            0
        }
    }

    fn pp(&self) -> usize {
        if self.has_phi {
            self.p
        } else {
            0
        }
    }

    pub fn x(&self) -> Range<usize> {
        0..self.n
    }

    pub fn mu(&self) -> Range<usize> {
        self.n..self.n + self.m
    }

    pub fn xi(&self) -> Range<usize> {
        let s = self.n + self.m;
        s..s + self.mx()
    }

    pub fn theta(&self) -> Range<usize> {
        let s = self.n + self.m + self.mx();
        s..s + self.p
    }

    pub fn phi(&self) -> Range<usize> {
        let s = self.n + self.m + self.mx() + self.p;
        s..s + self.pp()
    }

    pub fn dim(&self) -> usize {
        self.n + self.m + self.mx() + self.p + self.pp()
    }
}

/// Full closed-loop state at time `t`, stored flat.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState<T> {
    pub t: T,
    pub z: Vec<T>,
    pub layout: Layout,
}

impl<T: Real> SimState<T> {
    pub fn new(layout: Layout, t: T, x: &[T], ctrl: &ControllerState<T>) -> Result<Self> {
        check_len("x", x.len(), layout.n)?;
        check_len("mu", ctrl.mu.len(), layout.m)?;
        check_len("xi", ctrl.xi.len(), layout.mx())?;
        check_len("theta", ctrl.theta.len(), layout.p)?;
        check_len("phi", ctrl.phi.len(), layout.pp())?;
        let mut z = Vec::with_capacity(layout.dim());
        z.extend_from_slice(x);
        z.extend_from_slice(&ctrl.mu);
        z.extend_from_slice(&ctrl.xi);
        z.extend_from_slice(&ctrl.theta);
        z.extend_from_slice(&ctrl.phi);
        Ok(Self { t, z, layout })
    }

    pub fn x(&self) -> &[T] {
        &self.z[self.layout.x()]
    }

    pub fn mu(&self) -> &[T] {
        &self.z[self.layout.mu()]
    }

    pub fn xi(&self) -> &[T] {
        &self.z[self.layout.xi()]
    }

    pub fn theta(&self) -> &[T] {
        &self.z[self.layout.theta()]
    }

    pub fn phi(&self) -> &[T] {
        &self.z[self.layout.phi()]
    }

    pub fn controller_state(&self) -> ControllerState<T> {
        ControllerState {
            mu: self.mu().to_vec(),
            xi: self.xi().to_vec(),
            theta: self.theta().to_vec(),
            phi: self.phi().to_vec(),
        }
    }
}

/// Preallocated buffers for one right-hand-side evaluation.
#[derive(Debug, Clone)]
pub struct Workspace<T> {
    pub y: Vec<T>,
    pub ey: Vec<T>,
    pub lambda: Vec<T>,
    pub u: Vec<T>,
    psi: Vec<T>,
    scratch: Vec<T>,
}

impl<T: Real> Workspace<T> {
    pub fn new(layout: &Layout) -> Self {
        Self {
            y: vec![T::zero(); layout.n],
            ey: vec![T::zero(); layout.n],
            lambda: vec![T::zero(); layout.m],
            u: vec![T::zero(); layout.p],
            psi: vec![T::zero(); layout.n],
            scratch: vec![T::zero(); 2 * layout.p],
        }
    }
}

/// Plant and controllers of one variant, validated together.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoop<T> {
    pub variant: Variant,
    pub topo: NetworkTopology,
    pub plant: PlantParams<T>,
    pub comp: Option<CompartmentalParams<T>>,
    pub ctrl: ControllerConfig<T>,
    layout: Layout,
}

impl<T: Real> ClosedLoop<T> {
    pub fn new(
        variant: Variant,
        topo: NetworkTopology,
        plant: PlantParams<T>,
        comp: Option<CompartmentalParams<T>>,
        ctrl: ControllerConfig<T>,
    ) -> Result<Self> {
        if !topo.is_connected() {
            return Err(Error::Validation("Assumption 1: physical network is not connected".into()));
        }
        plant.validate(topo.n())?;
        ctrl.validate(&topo)?;
        match (variant, &comp) {
            (Variant::Compartmental, Some(c)) => c.validate(&topo)?,
            (Variant::Compartmental, None) => {
                return Err(Error::Validation("compartmental variant needs gamma and eta maps".into()))
            }
            (_, Some(_)) => {
                return Err(Error::Validation("gamma and eta maps given for a non-compartmental variant".into()))
            }
            _ => {}
        }
        let layout = Layout::new(variant, &topo);
        Ok(Self { variant, topo, plant, comp, ctrl, layout })
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn workspace(&self) -> Workspace<T> {
        Workspace::new(&self.layout)
    }

    /// Flow bounds `(λ⁻, λ⁺)` from the flow maps.
    pub fn flow_bounds(&self) -> Vec<(T, T)> {
        self.ctrl.f.iter().map(|f| (f.lower(), f.upper())).collect()
    }

    /// Writes `ż` for state `z` under disturbance `d` and setpoint `ybar`.
    /// Also leaves `y`, `λ` and `u` in the workspace.
    pub fn rhs_into(&self, d: &[T], ybar: &[T], z: &[T], dz: &mut [T], ws: &mut Workspace<T>) {
        let lay = &self.layout;
        let (x, rest) = z.split_at(lay.n);
        self.plant.output(x, &mut ws.y);
        for i in 0..lay.n {
            ws.ey[i] = ws.y[i] - ybar[i];
        }
        let mu = &rest[..lay.m];
        let (dx, drest) = dz.split_at_mut(lay.n);
        let (dmu, drest) = drest.split_at_mut(lay.m);
        match self.variant {
            Variant::Basic | Variant::Compartmental => {
                let xi = &z[lay.xi()];
                let theta = &z[lay.theta()];
                let phi = &z[lay.phi()];
                let (dxi, drest) = drest.split_at_mut(lay.m);
                let (dth, dphi) = drest.split_at_mut(lay.p);
                flow_ctrl_rhs_into(&self.ctrl, &self.topo, &ws.ey, mu, xi, dmu, dxi, &mut ws.lambda);
                input_ctrl_rhs_into(&self.ctrl, &self.topo, &ws.ey, theta, phi, dth, dphi, &mut ws.u, &mut ws.scratch);
            }
            Variant::Potential => {
                let theta = &z[lay.theta()];
                let phi = &z[lay.phi()];
                let (dth, dphi) = drest.split_at_mut(lay.p);
                potential_flow_rhs_into(&self.ctrl, &self.topo, &ws.ey, mu, dmu, &mut ws.lambda);
                input_ctrl_rhs_into(&self.ctrl, &self.topo, &ws.ey, theta, phi, dth, dphi, &mut ws.u, &mut ws.scratch);
            }
            Variant::Reduced => {
                let theta = &z[lay.theta()];
                reduced_ctrl_rhs_into(
                    &self.ctrl,
                    &self.topo,
                    &ws.ey,
                    mu,
                    theta,
                    dmu,
                    drest,
                    &mut ws.lambda,
                    &mut ws.u,
                    &mut ws.scratch,
                );
            }
        }
        if let (Variant::Compartmental, Some(comp)) = (self.variant, &self.comp) {
            psi_from_output(&self.topo, comp, &ws.y, &mut ws.psi);
            dx.copy_from_slice(&ws.psi);
        } else {
            dx.iter_mut().for_each(|v| *v = T::zero());
        }
        for i in 0..lay.n {
            dx[i] -= d[i];
        }
        for (&(a, b), &l) in self.topo.edges().iter().zip(&ws.lambda) {
            dx[a] -= l;
            dx[b] += l;
        }
        self.topo.add_e(&ws.u, dx);
        for (v, &t) in dx.iter_mut().zip(&self.plant.tx) {
            *v /= t;
        }
    }

    /// Allocating form of [`ClosedLoop::rhs_into`].
    pub fn closed_loop_rhs(&self, state: &SimState<T>, d: &[T], ybar: &[T]) -> Result<Vec<T>> {
        if state.layout != self.layout {
            return Err(Error::Dimension("state layout does not match the variant".into()));
        }
        check_len("d", d.len(), self.layout.n)?;
        check_len("ybar", ybar.len(), self.layout.n)?;
        let mut dz = vec![T::zero(); self.layout.dim()];
        let mut ws = self.workspace();
        self.rhs_into(d, ybar, &state.z, &mut dz, &mut ws);
        Ok(dz)
    }

    /// Minimum over edges of the distance of `λ` to its bounds, and the same
    /// for `u`. Infinite when unbounded.
    pub fn margins(&self, z: &[T]) -> (T, T) {
        let lay = &self.layout;
        let mut mf = T::infinity();
        for (f, &mu) in self.ctrl.f.iter().zip(&z[lay.mu()]) {
            let l = f.eval(mu);
            mf = mf.min(l - f.lower()).min(f.upper() - l);
        }
        let mut mi = T::infinity();
        for (g, &th) in self.ctrl.g.iter().zip(&z[lay.theta()]) {
            let u = g.eval(th);
            mi = mi.min(u - g.lower()).min(g.upper() - u);
        }
        (mf, mi)
    }
}
