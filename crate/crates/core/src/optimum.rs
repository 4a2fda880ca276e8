//! Optimal input allocation and steady-state flows.

use crate::error::{Error, Result};
use crate::graph::NetworkTopology;
use crate::linalg::Svd;
use crate::model::{CompartmentalParams, PlantParams};
use crate::real::{norm_inf, sum, Real};
use crate::saturation::Saturation;

#[derive(Debug, Clone, PartialEq)]
pub struct OptimalAllocation<T> {
    pub u_bar: Vec<T>,
    /// Marginal cost `q_i ū_i + r_i`, identical across producers.
    pub kappa: Vec<T>,
    pub total_cost: T,
    /// A steady-state flow, once computed by [`steady_state_flows`].
    pub lambda_bar: Option<Vec<T>>,
    pub flows_feasible: Option<bool>,
    /// `ū_i` strictly inside the range of `g_i`, once checked.
    pub inputs_in_range: Option<bool>,
}

impl<T: Real> OptimalAllocation<T> {
    pub fn kappa_value(&self) -> T {
        self.kappa[0]
    }

    pub fn check_input_range(&mut self, g: &[Saturation<T>]) -> bool {
        let ok = self.u_bar.iter().zip(g).all(|(&u, g)| g.contains(u));
        self.inputs_in_range = Some(ok);
        ok
    }
}

pub fn total_cost<T: Real>(q: &[T], r: &[T], s: &[T], u: &[T]) -> T {
    let half = T::lit(0.5);
    u.iter().enumerate().fold(T::zero(), |acc, (i, &ui)| acc + half * q[i] * ui * ui + r[i] * ui + s[i])
}

/// Minimiser of `Σ ½ q_i u_i² + r_i u_i + s_i` subject to `1ᵀ(Eu − d) = 0`:
/// `κ = (1ᵀd + 1ᵀQ⁻¹r)/(1ᵀQ⁻¹1)`, `ū = Q⁻¹(κ − r)`.
pub fn optimal_input<T: Real>(q: &[T], r: &[T], s: &[T], topo: &NetworkTopology, d: &[T]) -> OptimalAllocation<T> {
    debug_assert_eq!(q.len(), topo.p());
    let total_d = sum(d);
    let inv_q_r = q.iter().zip(r).fold(T::zero(), |a, (&qi, &ri)| a + ri / qi);
    let inv_q = q.iter().fold(T::zero(), |a, &qi| a + T::one() / qi);
    let kappa = (total_d + inv_q_r) / inv_q;
    let u_bar: Vec<T> = q.iter().zip(r).map(|(&qi, &ri)| (kappa - ri) / qi).collect();
    OptimalAllocation {
        total_cost: total_cost(q, r, s, &u_bar),
        kappa: vec![kappa; q.len()],
        u_bar,
        lambda_bar: None,
        flows_feasible: None,
        inputs_in_range: None,
    }
}

/// `d̂ = d + E_c η(E_cᵀ h(x̄))`.
pub fn effective_disturbance<T: Real>(
    topo: &NetworkTopology,
    plant: &PlantParams<T>,
    comp: &CompartmentalParams<T>,
    d: &[T],
    x_bar: &[T],
) -> Vec<T> {
    let mut dh = d.to_vec();
    for (&v, eta) in topo.state_dependent_io().iter().zip(&comp.eta) {
        dh[v] += eta.eval(plant.h[v].eval(x_bar[v]));
    }
    dh
}

/// Optimum with the state-dependent outflows at the setpoint added to `d`.
#[allow(clippy::too_many_arguments)]
pub fn optimal_input_compartmental<T: Real>(
    q: &[T],
    r: &[T],
    s: &[T],
    topo: &NetworkTopology,
    plant: &PlantParams<T>,
    comp: &CompartmentalParams<T>,
    d: &[T],
    x_bar: &[T],
) -> OptimalAllocation<T> {
    optimal_input(q, r, s, topo, &effective_disturbance(topo, plant, comp, d, x_bar))
}

/// Result of the steady-state flow search.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyFlows<T> {
    pub lambda_bar: Vec<T>,
    pub feasible: bool,
    pub residual: T,
}

const MAX_PROJECTIONS: usize = 10_000;

/// Finds `λ̄` with `Bλ̄ = Eū − d` strictly inside the flow box.
pub fn steady_state_flows<T: Real>(
    topo: &NetworkTopology,
    u_bar: &[T],
    d: &[T],
    bounds: &[(T, T)],
) -> Result<SteadyFlows<T>> {
    let mut v: Vec<T> = d.iter().map(|&di| -di).collect();
    topo.add_e(u_bar, &mut v);
    steady_state_flows_for(topo, &v, bounds)
}

/// Finds `λ̄` with `Bλ̄ = v` strictly inside the box `(λ⁻, λ⁺)`.
///
/// Starts from the minimum-norm solution and runs alternating projections
/// between the affine solution set and a box shrunk inward, trying wide
/// margins first so the result sits away from the bounds when possible.
pub fn steady_state_flows_for<T: Real>(topo: &NetworkTopology, v: &[T], bounds: &[(T, T)]) -> Result<SteadyFlows<T>> {
    assert_eq!(bounds.len(), topo.m());
    let total = sum(v);
    let scale = v.iter().fold(T::zero(), |a, &x| a + x.abs());
    if total.abs() > T::lit(1e-10) * scale.max(T::one()) {
        return Err(Error::Validation(format!(
            "steady flows need 1ᵀ(Eū − d) = 0, got {}",
            total.to_f64_lossy()
        )));
    }
    let m = topo.m();
    if m == 0 {
        return Ok(SteadyFlows { lambda_bar: vec![], feasible: true, residual: norm_inf(v) });
    }
    let svd = Svd::new(&topo.incidence_matrix::<T>());
    let residual_of = |lam: &[T]| {
        let mut r: Vec<T> = v.iter().map(|&x| -x).collect();
        topo.add_b(lam, &mut r);
        norm_inf(&r)
    };
    // project onto {λ : Bλ = v}
    let project = |lam: &mut Vec<T>| {
        let mut r: Vec<T> = v.iter().map(|&x| -x).collect();
        topo.add_b(lam, &mut r);
        let c = svd.solve_min_norm(&r);
        for (l, ci) in lam.iter_mut().zip(c) {
            *l -= ci;
        }
    };
    let mut base = svd.solve_min_norm(v);
    project(&mut base);
    let strictly_inside =
        |lam: &[T]| lam.iter().zip(bounds).all(|(&l, &(lo, hi))| l > lo && l < hi);

    let vscale = norm_inf(v).max(T::one());
    let tol = T::lit(1e-12) * vscale;
    for frac in [0.25, 0.1, 0.01, -1.0] {
        let shrunk: Vec<(T, T)> = bounds
            .iter()
            .map(|&(lo, hi)| {
                let w = hi - lo;
                let margin = if frac < 0.0 {
                    T::lit(1e-6).min(w / T::lit(4.0))
                } else if w.is_finite() {
                    T::lit(frac) * w
                } else {
                    T::zero()
                };
                (lo + margin, hi - margin)
            })
            .collect();
        let mut lam = base.clone();
        for _ in 0..MAX_PROJECTIONS {
            let mut moved = T::zero();
            for (l, &(lo, hi)) in lam.iter_mut().zip(&shrunk) {
                let c = l.max(lo).min(hi);
                moved = moved.max((c - *l).abs());
                *l = c;
            }
            project(&mut lam);
            if moved <= tol {
                break;
            }
        }
        if strictly_inside(&lam) && residual_of(&lam) <= T::lit(1e-8) * vscale {
            let residual = residual_of(&lam);
            return Ok(SteadyFlows { lambda_bar: lam, feasible: true, residual });
        }
    }
    let residual = residual_of(&base);
    Ok(SteadyFlows { lambda_bar: base, feasible: false, residual })
}

/// Projected-gradient minimisation of the cost on `1ᵀu = 1ᵀd`.
pub fn brute_force_optimum<T: Real>(q: &[T], r: &[T], topo: &NetworkTopology, d: &[T]) -> Result<Vec<T>> {
    let p = q.len();
    debug_assert_eq!(p, topo.p());
    let total = sum(d);
    let pf = T::from_count(p);
    let mut u = vec![total / pf; p];
    let step = T::one() / q.iter().fold(T::zero(), |a, &b| a.max(b));
    let mut grad = vec![T::zero(); p];
    let floor = T::lit(1e-10).max(T::epsilon() * T::lit(100.0));
    for _ in 0..1_000_000 {
        for i in 0..p {
            grad[i] = q[i] * u[i] + r[i];
        }
        let mean = sum(&grad) / pf;
        let gscale = norm_inf(&grad).max(T::one());
        let mut norm = T::zero();
        for g in grad.iter_mut() {
            *g -= mean;
            norm += *g * *g;
        }
        if norm.sqrt() <= floor * gscale {
            // restore the constraint exactly against accumulated rounding
            let shift = (total - sum(&u)) / pf;
            u.iter_mut().for_each(|x| *x += shift);
            return Ok(u);
        }
        for (x, g) in u.iter_mut().zip(&grad) {
            *x -= step * *g;
        }
    }
    Err(Error::Convergence("projected gradient did not reach the tolerance".into()))
}
