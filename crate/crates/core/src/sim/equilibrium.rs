use crate::error::{Error, Result};
use crate::model::{psi, Variant};
use crate::optimum::{optimal_input, optimal_input_compartmental, steady_state_flows_for, OptimalAllocation};
use crate::real::Real;

use super::{ClosedLoop, SimState};

/// Reference equilibrium for constant `d` and `ȳ`:
/// `x̄ = h⁻¹(ȳ)`, `θ̄ = g⁻¹(ū)`, `φ̄ = ū`, `ξ̄ = λ̄`, `μ̄ = f⁻¹(λ̄)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Equilibrium<T> {
    pub x: Vec<T>,
    pub y: Vec<T>,
    pub mu: Vec<T>,
    pub xi: Vec<T>,
    pub theta: Vec<T>,
    pub phi: Vec<T>,
    pub lambda: Vec<T>,
    pub u: Vec<T>,
    pub d: Vec<T>,
    /// Ψ(x̄) for the compartmental variant, zeros otherwise.
    pub psi: Vec<T>,
    pub allocation: OptimalAllocation<T>,
}

impl<T: Real> Equilibrium<T> {
    pub fn construct(sys: &ClosedLoop<T>, d: &[T], ybar: &[T]) -> Result<Self> {
        let topo = &sys.topo;
        let n = topo.n();
        let mut x = Vec::with_capacity(n);
        for (i, (&yi, h)) in ybar.iter().zip(&sys.plant.h).enumerate() {
            x.push(h.inverse(yi).map_err(|_| {
                Error::Validation(format!("Assumption 4: setpoint {yi} at node {} outside the range of h", i + 1))
            })?);
        }
        let c = &sys.ctrl;
        let (mut allocation, psi_bar) = match (&sys.comp, sys.variant) {
            (Some(comp), Variant::Compartmental) => (
                optimal_input_compartmental(&c.q, &c.r, &c.s, topo, &sys.plant, comp, d, &x),
                psi(topo, &sys.plant, comp, &x),
            ),
            _ => (optimal_input(&c.q, &c.r, &c.s, topo, d), vec![T::zero(); n]),
        };
        let attainability = if sys.variant == Variant::Compartmental { "Assumption 8" } else { "Assumption 5" };
        if !allocation.check_input_range(&c.g) {
            return Err(Error::Validation(format!(
                "{attainability}: optimal input {:?} outside the range of g",
                allocation.u_bar.iter().map(|v| v.to_f64_lossy()).collect::<Vec<_>>()
            )));
        }
        // Bλ̄ = Eū − d + Ψ(x̄)
        let mut v: Vec<T> = psi_bar.iter().zip(d).map(|(&p, &di)| p - di).collect();
        topo.add_e(&allocation.u_bar, &mut v);
        let flows = steady_state_flows_for(topo, &v, &sys.flow_bounds())?;
        allocation.lambda_bar = Some(flows.lambda_bar.clone());
        allocation.flows_feasible = Some(flows.feasible);
        if !flows.feasible {
            return Err(Error::Validation(format!(
                "{attainability}: no steady-state flow strictly inside the flow bounds"
            )));
        }
        let lambda = flows.lambda_bar;
        let mu = lambda.iter().zip(&c.f).map(|(&l, f)| f.inverse(l)).collect::<Result<Vec<T>>>()?;
        let u = allocation.u_bar.clone();
        let theta = u.iter().zip(&c.g).map(|(&ui, g)| g.inverse(ui)).collect::<Result<Vec<T>>>()?;
        Ok(Self {
            y: ybar.to_vec(),
            x,
            mu,
            xi: lambda.clone(),
            theta,
            phi: u.clone(),
            lambda,
            u,
            d: d.to_vec(),
            psi: psi_bar,
            allocation,
        })
    }

    /// The reference as a flat state for the variant of `sys`.
    pub fn state(&self, sys: &ClosedLoop<T>, t: T) -> SimState<T> {
        let lay = sys.layout();
        let mut z = Vec::with_capacity(lay.dim());
        z.extend_from_slice(&self.x);
        z.extend_from_slice(&self.mu);
        if lay.has_xi {
            z.extend_from_slice(&self.xi);
        }
        z.extend_from_slice(&self.theta);
        if lay.has_phi {
            z.extend_from_slice(&self.phi);
        }
        SimState { t, z, layout: lay }
    }
}

/// Storage function
/// `V = Σ T_x B_h(x, x̄) + Σ T_μ B_f(μ, μ̄) + ½ Σ T_ξ (ξ − ξ̄)² + Σ T_θ B_g(θ, θ̄) + ½ Σ T_φ (φ − φ̄)²`
/// with `B_s(z, z̄) = ∫_{z̄}^{z} s(σ) − s(z̄) dσ`. Not defined for the reduced variant.
pub fn storage_v<T: Real>(sys: &ClosedLoop<T>, eq: &Equilibrium<T>, z: &[T]) -> T {
    if sys.variant == Variant::Reduced {
        return T::nan();
    }
    let lay = sys.layout();
    let half = T::lit(0.5);
    let mut v = T::zero();
    for (i, &xi) in z[lay.x()].iter().enumerate() {
        v += sys.plant.tx[i] * sys.plant.h[i].bregman(xi, eq.x[i]);
    }
    let c = &sys.ctrl;
    for (k, &mu) in z[lay.mu()].iter().enumerate() {
        v += c.t_mu[k] * c.f[k].bregman(mu, eq.mu[k]);
    }
    for (k, &xi) in z[lay.xi()].iter().enumerate() {
        let e = xi - eq.xi[k];
        v += half * c.t_xi[k] * e * e;
    }
    for (i, &th) in z[lay.theta()].iter().enumerate() {
        v += c.t_theta[i] * c.g[i].bregman(th, eq.theta[i]);
    }
    for (i, &ph) in z[lay.phi()].iter().enumerate() {
        let e = ph - eq.phi[i];
        v += half * c.t_phi[i] * e * e;
    }
    v
}

/// Closed-form time derivative of [`storage_v`] along the closed loop:
/// `−(φ−φ̄)ᵀQLQ(φ−φ̄) − ‖g(θ)−φ‖² − ‖f(μ)−ξ‖²`, plus
/// `(h(x)−h(x̄))ᵀ(Ψ(x)−Ψ(x̄))` for the compartmental variant.
pub fn storage_vdot<T: Real>(sys: &ClosedLoop<T>, eq: &Equilibrium<T>, z: &[T]) -> T {
    if sys.variant == Variant::Reduced {
        return T::nan();
    }
    let lay = sys.layout();
    let c = &sys.ctrl;
    let mut vd = T::zero();
    for (k, (&mu, &xi)) in z[lay.mu()].iter().zip(&z[lay.xi()]).enumerate() {
        let e = c.f[k].eval(mu) - xi;
        vd -= e * e;
    }
    let w: Vec<T> = z[lay.phi()].iter().enumerate().map(|(i, &ph)| c.q[i] * (ph - eq.phi[i])).collect();
    vd -= c.laplacian_form(&w);
    for (i, (&th, &ph)) in z[lay.theta()].iter().zip(&z[lay.phi()]).enumerate() {
        let e = c.g[i].eval(th) - ph;
        vd -= e * e;
    }
    if let (Variant::Compartmental, Some(comp)) = (sys.variant, &sys.comp) {
        let x = &z[lay.x()];
        let p = psi(&sys.topo, &sys.plant, comp, x);
        for i in 0..lay.n {
            vd += (sys.plant.h[i].eval(x[i]) - eq.y[i]) * (p[i] - eq.psi[i]);
        }
    }
    vd
}

#[cfg(test)]
mod tests {
    use super::super::tests::dh_loop;
    use super::*;
    use crate::controllers::ControllerConfig;
    use crate::graph::{CommGraph, NetworkTopology};
    use crate::model::PlantParams;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn equilibrium_has_zero_derivative_and_storage() {
        let sys = dh_loop();
        let eq = Equilibrium::construct(&sys, &[35.0; 4], &[210.0; 4]).unwrap();
        let s = eq.state(&sys, 0.0);
        let dz = sys.closed_loop_rhs(&s, &[35.0; 4], &[210.0; 4]).unwrap();
        // φ̇ carries 1/T_φ = 200 and Q² scaling on rounding noise
        assert!(dz.iter().all(|v| v.abs() < 1e-9), "{dz:?}");
        assert_eq!(storage_v(&sys, &eq, &s.z), 0.0);
        assert!(storage_vdot(&sys, &eq, &s.z).abs() < 1e-20);
    }

    #[test]
    fn quadratic_case_collapses() {
        let topo = NetworkTopology::new(3, vec![(0, 1), (1, 2)], vec![0, 2]).unwrap();
        let ctrl = ControllerConfig::unit(2, 2, vec![1.0, 2.0], CommGraph::complete(2, 1.0).laplacian().unwrap());
        let sys = ClosedLoop::new(Variant::Basic, topo, PlantParams::new(vec![1.0; 3]), None, ctrl).unwrap();
        let eq = Equilibrium::construct(&sys, &[1.0, 2.0, 3.0], &[0.5, 0.5, 0.5]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z: Vec<f64> = (0..sys.layout().dim()).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let r = eq.state(&sys, 0.0).z;
        let want: f64 = z.iter().zip(&r).map(|(a, b)| 0.5 * (a - b) * (a - b)).sum();
        assert!((storage_v(&sys, &eq, &z) - want).abs() < 1e-12);
    }

    #[test]
    fn dissipation_set_gives_zero_vdot() {
        let sys = dh_loop();
        let eq = Equilibrium::construct(&sys, &[35.0; 4], &[210.0; 4]).unwrap();
        let mut z = eq.state(&sys, 0.0).z;
        let lay = sys.layout();
        // ξ = f(μ), φ = g(θ), Q(φ − φ̄) ∈ im(1)
        for k in 0..4 {
            z[lay.mu().start + k] += 0.1 * k as f64;
            z[lay.xi().start + k] = sys.ctrl.f[k].eval(z[lay.mu().start + k]);
            let phi = eq.phi[k] + 3.0 / sys.ctrl.q[k];
            z[lay.phi().start + k] = phi;
            z[lay.theta().start + k] = sys.ctrl.g[k].inverse(phi).unwrap();
        }
        z[0] += 4.0;
        assert!(storage_vdot(&sys, &eq, &z).abs() < 1e-20);
        assert!(storage_v(&sys, &eq, &z) > 0.0);
    }

    #[test]
    fn random_states_have_positive_storage() {
        let sys = dh_loop();
        let eq = Equilibrium::construct(&sys, &[30.0; 4], &[200.0; 4]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let r = eq.state(&sys, 0.0).z;
        for _ in 0..100 {
            let z: Vec<f64> = r.iter().map(|v| v + rng.gen_range(-1.0..1.0)).collect();
            assert!(storage_v(&sys, &eq, &z) > 0.0);
            assert!(storage_vdot(&sys, &eq, &z) <= 0.0);
        }
    }

    #[test]
    fn infeasible_input_range_names_assumption() {
        let mut sys = dh_loop();
        sys.ctrl.g = vec![crate::saturation::Saturation::tanh(0.0, 20.0, 1.0).unwrap(); 4];
        let e = Equilibrium::construct(&sys, &[35.0; 4], &[210.0; 4]).unwrap_err();
        assert!(e.to_string().contains("Assumption 5"));
    }
}
